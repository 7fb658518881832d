#include "hbgs/image_features.hpp"
#include "hbgs/verify.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hbgs;

namespace {
Intrinsics small_intr(int w, int h) {
    Intrinsics intr;
    intr.fx = intr.fy = 20;
    intr.cx = 0.5 * (w - 1);
    intr.cy = 0.5 * (h - 1);
    intr.width = w;
    intr.height = h;
    return intr;
}
}  // namespace

TEST_CASE("constant image with ray encoding disabled gives constant color features") {
    Rng rng(2);
    FeatureNets nets;
    nets.init(32, 16, 16, 32, rng);
    nets.ray_encoding = false;
    const Image img(6, 6, 3, 0.4);
    const FeatureMap map = extract_pixel_features(img, small_intr(6, 6), nets);
    for (int p = 1; p < map.c.cols(); ++p) {
        CHECK((map.c.col(p) - map.c.col(0)).cwiseAbs().maxCoeff() == 0.0);
        CHECK((map.g.col(p) - map.g.col(0)).cwiseAbs().maxCoeff() == 0.0);
    }
}

TEST_CASE("ray encoding varies features across pixels") {
    Rng rng(2);
    FeatureNets nets;
    nets.init(32, 16, 16, 32, rng);
    const Image img(6, 6, 3, 0.4);
    const FeatureMap map = extract_pixel_features(img, small_intr(6, 6), nets);
    CHECK((map.g.col(1) - map.g.col(0)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("output dimensions match configuration") {
    Rng rng(4);
    FeatureNets nets;
    nets.init(32, 16, 16, 32, rng);
    Image img(4, 4, 3, 0.2);
    const FeatureMap map = extract_pixel_features(img, small_intr(4, 4), nets);
    CHECK(map.c.rows() == 16);
    CHECK(map.d.rows() == 16);
    CHECK(map.g.rows() == 32);
    CHECK(map.g.cols() == 16);
}

TEST_CASE("extraction is deterministic") {
    Rng rng(6);
    FeatureNets nets;
    nets.init(32, 16, 16, 32, rng);
    Image img(5, 5, 3);
    Rng pix(8);
    for (auto& v : img.data) v = pix.uniform();
    const FeatureMap a = extract_pixel_features(img, small_intr(5, 5), nets);
    const FeatureMap b = extract_pixel_features(img, small_intr(5, 5), nets);
    CHECK((a.g - b.g).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("per-pixel locality: permuting pixels permutes outputs") {
    Rng rng(6);
    FeatureNets nets;
    nets.init(32, 16, 16, 32, rng);
    nets.ray_encoding = false;  // make features depend on color alone
    Image img(4, 4, 3);
    Rng pix(9);
    for (auto& v : img.data) v = pix.uniform();
    Image swapped = img;
    for (int c = 0; c < 3; ++c) std::swap(swapped.at(0, 0, c), swapped.at(2, 3, c));

    const FeatureMap a = extract_pixel_features(img, small_intr(4, 4), nets);
    const FeatureMap b = extract_pixel_features(swapped, small_intr(4, 4), nets);
    const int i0 = 0 * 4 + 0, i1 = 2 * 4 + 3;
    CHECK((a.g.col(i0) - b.g.col(i1)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.g.col(i1) - b.g.col(i0)).cwiseAbs().maxCoeff() == 0.0);
    CHECK((a.g.col(5) - b.g.col(5)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("feature net gradients match finite differences on a 4x4 image") {
    Rng rng(31);
    FeatureNets nets;
    nets.init(8, 4, 4, 6, rng);
    Image img(4, 4, 3);
    for (auto& v : img.data) v = rng.uniform();
    const Intrinsics intr = small_intr(4, 4);

    MatrixXd input(kPixelInputDim, 16);
    for (int v = 0; v < 4; ++v)
        for (int u = 0; u < 4; ++u)
            input.col(v * 4 + u) = pixel_input(img, intr, u, v, true);
    MatrixXd dy(6, 16);
    for (int i = 0; i < dy.size(); ++i) dy.data()[i] = rng.normal();

    auto f = [&] { return (features_forward(nets, input, nullptr).array() * dy.array()).sum(); };

    FeatureBatchCache cache;
    features_forward(nets, input, &cache);
    features_backward(nets, cache, dy);

    double worst = 0.0;
    for (Linear* lin : {&nets.fc.l1, &nets.fc.l2, &nets.fd.l1, &nets.fd.l2, &nets.g}) {
        worst = std::max(worst, verify_detail::max_grad_err(f, lin->W.data(), lin->W.size(),
                                                            lin->gW.data()));
        worst = std::max(worst, verify_detail::max_grad_err(f, lin->b.data(), lin->b.size(),
                                                            lin->gb.data()));
    }
    INFO("max rel err " << worst);
    CHECK(worst < 1e-3);
}
