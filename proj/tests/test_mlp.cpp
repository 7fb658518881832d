#include "hbgs/mlp.hpp"
#include "hbgs/verify.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hbgs;

TEST_CASE("mlp_forward fixtures") {
    SECTION("zero weights return the output bias") {
        Rng rng(1);
        Mlp net;
        net.init(3, 4, 2, rng);
        net.l1.W.setZero();
        net.l2.W.setZero();
        net.l1.b.setConstant(0.7);
        net.l2.b << 0.25, -0.5;
        const VectorXd y = mlp_forward(net, VectorXd::Constant(3, 9.0));
        CHECK(y[0] == 0.25);
        CHECK(y[1] == -0.5);
    }
    SECTION("hand-evaluated 1-1-1 net") {
        Rng rng(1);
        Mlp net;
        net.init(1, 1, 1, rng);
        net.l1.W(0, 0) = 2.0;
        net.l1.b[0] = -1.0;
        net.l2.W(0, 0) = 3.0;
        net.l2.b[0] = 0.0;
        VectorXd x(1);
        x << 1.0;
        CHECK(mlp_forward(net, x)[0] == Catch::Approx(3.0));
        x << 0.0;  // rectifier clips the negative pre-activation
        CHECK(mlp_forward(net, x)[0] == Catch::Approx(0.0));
    }
    SECTION("shape errors") {
        Rng rng(1);
        Mlp net;
        net.init(3, 4, 2, rng);
        CHECK_THROWS_WITH(mlp_forward(net, VectorXd::Zero(5)), "mlp shape error");
    }
}

TEST_CASE("mlp gradients match finite differences") {
    const CheckItem item = check_mlp_gradients(77);
    INFO(item.name << " err " << item.value);
    CHECK(item.pass);
}

TEST_CASE("batched forward equals per-column forward") {
    Rng rng(9);
    Mlp net;
    net.init(4, 6, 3, rng);
    MatrixXd x(4, 5);
    for (int i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    const MatrixXd y = net.forward(x);
    for (int c = 0; c < 5; ++c)
        CHECK((y.col(c) - net.forward(x.col(c))).cwiseAbs().maxCoeff() == 0.0);
}
