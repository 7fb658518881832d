#pragma once

// Dense layers with explicit forward/backward. Inputs are batched as columns;
// gradients accumulate into the twin g* matrices so one step can sum
// contributions from several passes before the optimizer consumes them.

#include "hbgs/params.hpp"
#include "hbgs/random.hpp"

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace hbgs {

using Eigen::MatrixXd;
using Eigen::VectorXd;

struct Linear {
    MatrixXd W;   // out x in
    VectorXd b;   // out
    MatrixXd gW;
    VectorXd gb;

    void init(int in, int out, Rng& rng) {
        W.resize(out, in);
        const double scale = 1.0 / std::sqrt(static_cast<double>(in));
        for (int c = 0; c < W.cols(); ++c)
            for (int r = 0; r < W.rows(); ++r) W(r, c) = rng.normal(0.0, scale);
        b = VectorXd::Zero(out);
        gW = MatrixXd::Zero(out, in);
        gb = VectorXd::Zero(out);
    }

    int in_dim() const { return static_cast<int>(W.cols()); }
    int out_dim() const { return static_cast<int>(W.rows()); }

    MatrixXd forward(const MatrixXd& x) const {
        if (x.rows() != W.cols()) throw std::runtime_error("mlp shape error");
        return (W * x).colwise() + b;
    }

    // Accumulates parameter grads, returns dL/dx.
    MatrixXd backward(const MatrixXd& x, const MatrixXd& dy) {
        gW.noalias() += dy * x.transpose();
        gb.noalias() += dy.rowwise().sum();
        return W.transpose() * dy;
    }

    void register_params(ParamStore& store, const std::string& prefix, const std::string& group) {
        store.add(prefix + ".w", group, W.data(), gW.data(), W.rows(), W.cols());
        store.add(prefix + ".b", group, b.data(), gb.data(), b.rows(), 1);
    }
};

// Two dense layers with a rectifier between them, identity at the output.
struct Mlp {
    Linear l1;
    Linear l2;

    struct Cache {
        MatrixXd x;
        MatrixXd z1;  // pre-activation
        MatrixXd a1;  // rectified
    };

    void init(int in, int hidden, int out, Rng& rng) {
        l1.init(in, hidden, rng);
        l2.init(hidden, out, rng);
    }

    int in_dim() const { return l1.in_dim(); }
    int out_dim() const { return l2.out_dim(); }

    MatrixXd forward(const MatrixXd& x, Cache* cache = nullptr) const {
        if (x.rows() != l1.in_dim()) throw std::runtime_error("mlp shape error");
        MatrixXd z1 = l1.forward(x);
        MatrixXd a1 = z1.cwiseMax(0.0);
        MatrixXd y = l2.forward(a1);
        if (cache) {
            cache->x = x;
            cache->z1 = std::move(z1);
            cache->a1 = std::move(a1);
        }
        return y;
    }

    MatrixXd backward(const Cache& cache, const MatrixXd& dy) {
        MatrixXd da1 = l2.backward(cache.a1, dy);
        MatrixXd dz1 = (cache.z1.array() > 0.0).select(da1, 0.0);
        return l1.backward(cache.x, dz1);
    }

    void register_params(ParamStore& store, const std::string& prefix, const std::string& group) {
        l1.register_params(store, prefix + ".l1", group);
        l2.register_params(store, prefix + ".l2", group);
    }
};

inline VectorXd mlp_forward(const Mlp& net, const VectorXd& x) {
    if (x.size() != net.in_dim()) throw std::runtime_error("mlp shape error");
    return net.forward(x);
}

}  // namespace hbgs
