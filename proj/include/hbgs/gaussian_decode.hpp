#pragma once

// Decodes k renderable Gaussians per matched anchor from the hybrid features:
// opacity (with the pixel-match distance as an extra input), covariance
// quaternion and scales, color, and position offsets around the anchor.
// Activations keep every attribute inside its valid range: sigmoid for
// opacity and color, exp for scales, normalization for quaternions, raw
// offsets scaled by offset_scale.

#include "hbgs/anchors.hpp"
#include "hbgs/fusion.hpp"
#include "hbgs/geometry.hpp"
#include "hbgs/mlp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace hbgs {

struct NeuralGaussian {
    Vec3 mu = Vec3::Zero();
    double alpha = 0.0;
    Quaternion q;
    Vec3 s = Vec3::Ones();
    Vec3 c = Vec3::Zero();
};

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct DecoderBank {
    Mlp e_alpha;   // (h, delta_ap) -> k
    Mlp e_quat;    // h -> 4k
    Mlp e_scale;   // h -> 3k
    Mlp e_color;   // h -> 3k
    Mlp e_offset;  // h -> 3k
    int k = 10;
    double offset_scale = 1.0;
    double alpha_cull = 0.005;

    void init(int feature_dim, int hidden, int k_, double offset_scale_, double alpha_cull_,
              Rng& rng) {
        k = k_;
        offset_scale = offset_scale_;
        alpha_cull = alpha_cull_;
        e_alpha.init(feature_dim + 1, hidden, k, rng);
        e_quat.init(feature_dim, hidden, 4 * k, rng);
        e_scale.init(feature_dim, hidden, 3 * k, rng);
        e_color.init(feature_dim, hidden, 3 * k, rng);
        e_offset.init(feature_dim, hidden, 3 * k, rng);
        // Identity rotation at zero activation; scales start below one voxel
        // so fresh models splat small.
        for (int j = 0; j < k; ++j) e_quat.l2.b[4 * j] = 1.0;
        e_scale.l2.b.setConstant(-1.0);
    }

    void register_params(ParamStore& store, const std::string& group) {
        e_alpha.register_params(store, "dec.alpha", group);
        e_quat.register_params(store, "dec.quat", group);
        e_scale.register_params(store, "dec.scale", group);
        e_color.register_params(store, "dec.color", group);
        e_offset.register_params(store, "dec.offset", group);
    }
};

struct DecodeCache {
    MatrixXd alpha_input;  // (F+1) x n_anchors
    MatrixXd h;            // F x n_anchors
    Mlp::Cache alpha_c, quat_c, scale_c, color_c, offset_c;
    MatrixXd raw_alpha, raw_quat, raw_scale, raw_color, raw_offset;
};

struct DecodedGaussians {
    std::vector<NeuralGaussian> gaussians;  // n_anchors * k, anchor-major
    std::vector<char> rendered;             // alpha >= alpha_cull
    int k = 0;

    int rendered_count() const {
        int n = 0;
        for (char r : rendered) n += (r != 0);
        return n;
    }
};

// Batched decode for matched anchors; h holds one hybrid feature per column,
// dist_pixel the per-anchor delta'_ap. Column i of h corresponds to
// anchor_positions[i].
inline DecodedGaussians decode_all(const DecoderBank& bank, const std::vector<Vec3>& anchor_positions,
                                   const MatrixXd& h, const Eigen::RowVectorXd& dist_pixel,
                                   DecodeCache* cache = nullptr) {
    const int n = static_cast<int>(h.cols());
    const int k = bank.k;
    MatrixXd alpha_input(h.rows() + 1, n);
    alpha_input.topRows(h.rows()) = h;
    alpha_input.bottomRows(1) = dist_pixel;

    MatrixXd raw_alpha = bank.e_alpha.forward(alpha_input, cache ? &cache->alpha_c : nullptr);
    MatrixXd raw_quat = bank.e_quat.forward(h, cache ? &cache->quat_c : nullptr);
    MatrixXd raw_scale = bank.e_scale.forward(h, cache ? &cache->scale_c : nullptr);
    MatrixXd raw_color = bank.e_color.forward(h, cache ? &cache->color_c : nullptr);
    MatrixXd raw_offset = bank.e_offset.forward(h, cache ? &cache->offset_c : nullptr);

    DecodedGaussians out;
    out.k = k;
    out.gaussians.resize(static_cast<size_t>(n) * k);
    out.rendered.resize(out.gaussians.size());
    for (int a = 0; a < n; ++a) {
        for (int j = 0; j < k; ++j) {
            NeuralGaussian& g = out.gaussians[static_cast<size_t>(a) * k + j];
            g.alpha = sigmoid(raw_alpha(j, a));
            Quaternion q(raw_quat(4 * j, a), raw_quat(4 * j + 1, a), raw_quat(4 * j + 2, a),
                         raw_quat(4 * j + 3, a));
            g.q = q.norm() < kZeroQuatEps ? Quaternion::identity() : q.normalized();
            for (int d = 0; d < 3; ++d) {
                g.s[d] = std::exp(raw_scale(3 * j + d, a)) * bank.offset_scale;
                g.c[d] = sigmoid(raw_color(3 * j + d, a));
                g.mu[d] = anchor_positions[a][d] + bank.offset_scale * raw_offset(3 * j + d, a);
            }
            out.rendered[static_cast<size_t>(a) * k + j] = g.alpha >= bank.alpha_cull;
        }
    }
    if (cache) {
        cache->alpha_input = std::move(alpha_input);
        cache->h = h;
        cache->raw_alpha = std::move(raw_alpha);
        cache->raw_quat = std::move(raw_quat);
        cache->raw_scale = std::move(raw_scale);
        cache->raw_color = std::move(raw_color);
        cache->raw_offset = std::move(raw_offset);
    }
    return out;
}

struct GaussianGrads {
    std::vector<Vec3> d_mu;
    std::vector<double> d_alpha;
    std::vector<Vec4> d_q;  // w.r.t. the normalized quaternion
    std::vector<Vec3> d_s;
    std::vector<Vec3> d_c;

    explicit GaussianGrads(size_t n)
        : d_mu(n, Vec3::Zero()),
          d_alpha(n, 0.0),
          d_q(n, Vec4::Zero()),
          d_s(n, Vec3::Zero()),
          d_c(n, Vec3::Zero()) {}
};

struct DecodeBackwardResult {
    MatrixXd d_h;                   // F x n_anchors
    Eigen::RowVectorXd d_dist_pixel;  // 1 x n_anchors
};

// Chains the per-Gaussian attribute gradients through the activations and the
// decoder heads; accumulates head parameter grads, returns input grads.
inline DecodeBackwardResult decode_backward(DecoderBank& bank, const DecodedGaussians& dec,
                                            const DecodeCache& cache, const GaussianGrads& grads) {
    const int n = static_cast<int>(cache.h.cols());
    const int k = bank.k;
    MatrixXd d_raw_alpha = MatrixXd::Zero(k, n);
    MatrixXd d_raw_quat = MatrixXd::Zero(4 * k, n);
    MatrixXd d_raw_scale = MatrixXd::Zero(3 * k, n);
    MatrixXd d_raw_color = MatrixXd::Zero(3 * k, n);
    MatrixXd d_raw_offset = MatrixXd::Zero(3 * k, n);

    for (int a = 0; a < n; ++a) {
        for (int j = 0; j < k; ++j) {
            const size_t gi = static_cast<size_t>(a) * k + j;
            const NeuralGaussian& g = dec.gaussians[gi];

            d_raw_alpha(j, a) = grads.d_alpha[gi] * g.alpha * (1.0 - g.alpha);

            const Vec4 raw_q(cache.raw_quat(4 * j, a), cache.raw_quat(4 * j + 1, a),
                             cache.raw_quat(4 * j + 2, a), cache.raw_quat(4 * j + 3, a));
            const double qn = raw_q.norm();
            if (qn >= kZeroQuatEps) {
                const Vec4 qh = raw_q / qn;
                const Vec4 dq = (grads.d_q[gi] - qh * qh.dot(grads.d_q[gi])) / qn;
                for (int d = 0; d < 4; ++d) d_raw_quat(4 * j + d, a) = dq[d];
            }
            for (int d = 0; d < 3; ++d) {
                d_raw_scale(3 * j + d, a) = grads.d_s[gi][d] * g.s[d];
                d_raw_color(3 * j + d, a) = grads.d_c[gi][d] * g.c[d] * (1.0 - g.c[d]);
                d_raw_offset(3 * j + d, a) = grads.d_mu[gi][d] * bank.offset_scale;
            }
        }
    }

    const MatrixXd d_alpha_input = bank.e_alpha.backward(cache.alpha_c, d_raw_alpha);
    DecodeBackwardResult out;
    out.d_h = d_alpha_input.topRows(cache.h.rows());
    out.d_dist_pixel = d_alpha_input.bottomRows(1);
    out.d_h += bank.e_quat.backward(cache.quat_c, d_raw_quat);
    out.d_h += bank.e_scale.backward(cache.scale_c, d_raw_scale);
    out.d_h += bank.e_color.backward(cache.color_c, d_raw_color);
    out.d_h += bank.e_offset.backward(cache.offset_c, d_raw_offset);
    return out;
}

// Single-anchor conveniences mirroring the batched decode.
inline std::vector<double> decode_opacity(const DecoderBank& bank, const VectorXd& h,
                                          double dist_pixel) {
    VectorXd in(h.size() + 1);
    in << h, dist_pixel;
    const VectorXd raw = bank.e_alpha.forward(in);
    std::vector<double> out(bank.k);
    for (int j = 0; j < bank.k; ++j) out[j] = sigmoid(raw[j]);
    return out;
}

inline std::vector<std::pair<Quaternion, Vec3>> decode_covariance(const DecoderBank& bank,
                                                                  const VectorXd& h) {
    const VectorXd rq = bank.e_quat.forward(h);
    const VectorXd rs = bank.e_scale.forward(h);
    std::vector<std::pair<Quaternion, Vec3>> out(bank.k);
    for (int j = 0; j < bank.k; ++j) {
        Quaternion q(rq[4 * j], rq[4 * j + 1], rq[4 * j + 2], rq[4 * j + 3]);
        out[j].first = q.norm() < kZeroQuatEps ? Quaternion::identity() : q.normalized();
        for (int d = 0; d < 3; ++d)
            out[j].second[d] = std::exp(rs[3 * j + d]) * bank.offset_scale;
    }
    return out;
}

inline std::vector<Vec3> decode_color(const DecoderBank& bank, const VectorXd& h) {
    const VectorXd raw = bank.e_color.forward(h);
    std::vector<Vec3> out(bank.k);
    for (int j = 0; j < bank.k; ++j)
        for (int d = 0; d < 3; ++d) out[j][d] = sigmoid(raw[3 * j + d]);
    return out;
}

inline std::vector<Vec3> decode_positions(const DecoderBank& bank, const Vec3& anchor_position,
                                          const VectorXd& h) {
    const VectorXd raw = bank.e_offset.forward(h);
    std::vector<Vec3> out(bank.k);
    for (int j = 0; j < bank.k; ++j)
        for (int d = 0; d < 3; ++d)
            out[j][d] = anchor_position[d] + bank.offset_scale * raw[3 * j + d];
    return out;
}

// World covariance R(q) diag(s^2) R(q)^T of a decoded Gaussian.
inline Mat3 gaussian_covariance(const NeuralGaussian& g) {
    const Mat3 r = quat_to_rotmat(g.q);
    return r * g.s.cwiseProduct(g.s).asDiagonal() * r.transpose();
}

}  // namespace hbgs
