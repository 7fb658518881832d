#pragma once

// Verification harness: central finite-difference gradient checks for every
// differentiable component and the full pipeline, exhaustive matching
// oracles, and windowed-free reference implementations of the image metrics.
// Shared by the CLI `verify` command and the test suites.

#include "hbgs/config.hpp"
#include "hbgs/losses.hpp"
#include "hbgs/metrics.hpp"
#include "hbgs/model.hpp"
#include "hbgs/optimizer.hpp"

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <set>
#include <string>
#include <vector>

namespace hbgs {

struct CheckItem {
    std::string name;
    bool pass = false;
    double value = 0.0;      // measured error
    double threshold = 0.0;
};

namespace verify_detail {

inline double rel_err(double analytic, double numeric) {
    const double denom = std::max({std::abs(analytic), std::abs(numeric), 1e-4});
    return std::abs(analytic - numeric) / denom;
}

// Central differences of f over x[0..n), compared against analytic[0..n).
template <typename F>
double max_grad_err(F&& f, double* x, size_t n, const double* analytic, double eps = 1e-5) {
    double worst = 0.0;
    for (size_t i = 0; i < n; ++i) {
        const double saved = x[i];
        x[i] = saved + eps;
        const double fp = f();
        x[i] = saved - eps;
        const double fm = f();
        x[i] = saved;
        const double numeric = (fp - fm) / (2.0 * eps);
        worst = std::max(worst, rel_err(analytic[i], numeric));
    }
    return worst;
}

}  // namespace verify_detail

// ---------------------------------------------------------------------------
// Gradient checks
// ---------------------------------------------------------------------------

inline CheckItem check_mlp_gradients(uint64_t seed) {
    Rng rng(seed);
    Mlp net;
    net.init(5, 7, 3, rng);
    VectorXd x(5);
    for (int i = 0; i < 5; ++i) x[i] = rng.normal(0.0, 1.0);
    VectorXd weights(3);
    for (int i = 0; i < 3; ++i) weights[i] = rng.normal(0.0, 1.0);

    auto f = [&] { return (weights.transpose() * net.forward(x)).value(); };

    Mlp::Cache cache;
    net.forward(x, &cache);
    net.l1.gW.setZero();
    net.l1.gb.setZero();
    net.l2.gW.setZero();
    net.l2.gb.setZero();
    const MatrixXd dx = net.backward(cache, weights);

    double worst = 0.0;
    worst = std::max(worst, verify_detail::max_grad_err(f, net.l1.W.data(), net.l1.W.size(),
                                                        net.l1.gW.data()));
    worst = std::max(worst, verify_detail::max_grad_err(f, net.l1.b.data(), net.l1.b.size(),
                                                        net.l1.gb.data()));
    worst = std::max(worst, verify_detail::max_grad_err(f, net.l2.W.data(), net.l2.W.size(),
                                                        net.l2.gW.data()));
    worst = std::max(worst, verify_detail::max_grad_err(f, net.l2.b.data(), net.l2.b.size(),
                                                        net.l2.gb.data()));
    worst = std::max(worst,
                     verify_detail::max_grad_err(f, const_cast<double*>(x.data()), x.size(),
                                                 dx.data()));
    return {"gradients/mlp_forward", worst < 1e-3, worst, 1e-3};
}

inline CheckItem check_fusion_gradients(uint64_t seed) {
    Rng rng(seed);
    FusionNet net;
    net.init(6, 6, 4, rng);
    VectorXd af(6), gf(6), weights(4);
    for (int i = 0; i < 6; ++i) af[i] = rng.normal(0.0, 1.0);
    for (int i = 0; i < 6; ++i) gf[i] = rng.normal(0.0, 1.0);
    for (int i = 0; i < 4; ++i) weights[i] = rng.normal(0.0, 1.0);
    double dc = 1.3, dp = 0.4;

    auto f = [&] { return (weights.transpose() * fuse_features(net, af, gf, dc, dp)).value(); };

    VectorXd in(14);
    in << af, gf, dc, dp;
    net.h.gW.setZero();
    net.h.gb.setZero();
    const MatrixXd din = net.h.backward(in, weights);

    double worst = 0.0;
    worst = std::max(worst, verify_detail::max_grad_err(f, af.data(), af.size(), din.data()));
    worst = std::max(worst, verify_detail::max_grad_err(f, gf.data(), gf.size(), din.data() + 6));
    worst = std::max(worst, verify_detail::max_grad_err(f, net.h.W.data(), net.h.W.size(),
                                                        net.h.gW.data()));
    return {"gradients/fuse_features", worst < 1e-3, worst, 1e-3};
}

// All five decoder heads jointly: random linear functional over every decoded
// attribute, 2 anchors, k = 2.
inline CheckItem check_decoder_gradients(uint64_t seed) {
    Rng rng(seed);
    const int f_dim = 8, hidden = 8, k = 2, n = 2;
    DecoderBank bank;
    bank.init(f_dim, hidden, k, 0.7, 0.005, rng);
    std::vector<Vec3> anchors = {Vec3(0.1, -0.2, 0.4), Vec3(-0.3, 0.5, 0.2)};
    MatrixXd h(f_dim, n);
    for (int i = 0; i < h.size(); ++i) h.data()[i] = rng.normal(0.0, 1.0);
    Eigen::RowVectorXd dp(n);
    dp << 0.8, 1.4;

    // Fixed random weights over (mu, alpha, q, s, c) per gaussian.
    std::vector<double> w;
    for (int i = 0; i < n * k * 14; ++i) w.push_back(rng.normal(0.0, 1.0));

    auto score = [&](const DecodedGaussians& d) {
        double acc = 0.0;
        size_t wi = 0;
        for (size_t gi = 0; gi < d.gaussians.size(); ++gi) {
            const NeuralGaussian& g = d.gaussians[gi];
            for (int i = 0; i < 3; ++i) acc += w[wi++] * g.mu[i];
            acc += w[wi++] * g.alpha;
            acc += w[wi++] * g.q.w;
            acc += w[wi++] * g.q.x;
            acc += w[wi++] * g.q.y;
            acc += w[wi++] * g.q.z;
            for (int i = 0; i < 3; ++i) acc += w[wi++] * g.s[i];
            for (int i = 0; i < 3; ++i) acc += w[wi++] * g.c[i];
        }
        return acc;
    };
    auto f = [&] { return score(decode_all(bank, anchors, h, dp, nullptr)); };

    DecodeCache cache;
    const DecodedGaussians dec = decode_all(bank, anchors, h, dp, &cache);
    GaussianGrads ggrads(dec.gaussians.size());
    {
        size_t wi = 0;
        for (size_t gi = 0; gi < dec.gaussians.size(); ++gi) {
            for (int i = 0; i < 3; ++i) ggrads.d_mu[gi][i] = w[wi++];
            ggrads.d_alpha[gi] = w[wi++];
            for (int i = 0; i < 4; ++i) ggrads.d_q[gi][i] = w[wi++];
            for (int i = 0; i < 3; ++i) ggrads.d_s[gi][i] = w[wi++];
            for (int i = 0; i < 3; ++i) ggrads.d_c[gi][i] = w[wi++];
        }
    }
    const DecodeBackwardResult back = decode_backward(bank, dec, cache, ggrads);

    double worst = 0.0;
    worst = std::max(worst, verify_detail::max_grad_err(f, h.data(), h.size(), back.d_h.data()));
    worst = std::max(worst, verify_detail::max_grad_err(f, dp.data(), dp.size(),
                                                        back.d_dist_pixel.data()));
    for (Mlp* head : {&bank.e_alpha, &bank.e_quat, &bank.e_scale, &bank.e_color, &bank.e_offset}) {
        worst = std::max(worst, verify_detail::max_grad_err(f, head->l1.W.data(),
                                                            head->l1.W.size(), head->l1.gW.data()));
        worst = std::max(worst, verify_detail::max_grad_err(f, head->l2.b.data(),
                                                            head->l2.b.size(), head->l2.gb.data()));
    }
    return {"gradients/decoder_heads", worst < 1e-3, worst, 1e-3};
}

inline CheckItem check_ssim_gradients(uint64_t seed) {
    Rng rng(seed);
    Image a(12, 12, 3), b(12, 12, 3);
    for (auto& v : a.data) v = rng.uniform();
    for (auto& v : b.data) v = rng.uniform();

    Image grad;
    loss_ssim(a, b, &grad);
    auto f = [&] { return loss_ssim(a, b, nullptr); };
    const double worst =
        verify_detail::max_grad_err(f, a.data.data(), a.data.size(), grad.data.data());
    return {"gradients/loss_ssim", worst < 1e-3, worst, 1e-3};
}

// The volume penalty gradient must reproduce the product rule exactly.
inline CheckItem check_vol_gradients(uint64_t seed) {
    Rng rng(seed);
    std::vector<Vec3> scales;
    for (int i = 0; i < 16; ++i)
        scales.emplace_back(rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0), rng.uniform(0.2, 2.0));
    std::vector<Vec3> grads;
    loss_vol(scales, &grads);
    double worst = 0.0;
    for (size_t i = 0; i < scales.size(); ++i) {
        const Vec3& s = scales[i];
        const Vec3 exact(s.y() * s.z(), s.x() * s.z(), s.x() * s.y());
        worst = std::max(worst, (grads[i] - exact).cwiseAbs().maxCoeff());
    }
    return {"gradients/loss_vol_product_rule", worst < 1e-10, worst, 1e-10};
}

inline CheckItem check_geometry_gradients(uint64_t seed) {
    Rng rng(seed);
    double worst = 0.0;
    for (int trial = 0; trial < 4; ++trial) {
        CameraPose pose;
        pose.rotation = Quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        if (pose.rotation.norm() < 0.1) pose.rotation = Quaternion::identity();
        pose.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
        Vec3 p(rng.normal(), rng.normal(), rng.normal() + 4.0);
        Intrinsics intr;
        intr.fx = 80;
        intr.fy = 90;
        intr.cx = 16;
        intr.cy = 15;
        intr.width = 32;
        intr.height = 32;

        // Make sure the point sits in front of the camera.
        p = cam_to_world(pose, Vec3(rng.normal(), rng.normal(), 3.0 + rng.uniform()));

        Vec3 row_w(rng.normal(), rng.normal(), rng.normal());
        auto f = [&] {
            const auto pr = project(intr, pose, p);
            return row_w.x() * pr->u + row_w.y() * pr->v + row_w.z() * pr->depth;
        };
        const ProjectJac jac = project_jacobian(intr, pose, p);
        const Vec3 dpoint = jac.dpoint.transpose() * row_w;
        Eigen::Matrix<double, 7, 1> dpose = jac.dpose.transpose() * row_w;

        worst = std::max(worst, verify_detail::max_grad_err(f, p.data(), 3, dpoint.data()));
        worst = std::max(worst,
                         verify_detail::max_grad_err(f, pose.translation.data(), 3, dpose.data()));
        double* quat = &pose.rotation.w;
        worst = std::max(worst, verify_detail::max_grad_err(f, quat, 4, dpose.data() + 3));
    }
    return {"gradients/projection", worst < 1e-3, worst, 1e-3};
}

// Tiny end-to-end scene used by the pipeline check and several tests.
inline std::unique_ptr<Model> make_tiny_model(uint64_t seed, SceneBundle* scene_out = nullptr,
                                              int n_points = 12, int image_size = 16) {
    SyntheticSceneSpec spec;
    spec.seed = seed;
    spec.n_points = n_points;
    spec.n_cameras = 3;
    spec.image_width = spec.image_height = image_size;
    auto [gt, noisy] = generate_synthetic_scene(spec);
    ModelConfig cfg;
    cfg.k = 2;
    cfg.voxel_scale = spec.scene_extent / 4.0;  // few anchors
    cfg.anchor_disable_steps = 0;
    // Remove approximation cutoffs that would show up as finite-difference
    // discontinuities.
    cfg.raster.min_transmittance = 0.0;
    cfg.raster.sigma_cutoff = 30.0;
    auto model = Model::build(gt, cfg, seed);
    if (scene_out) *scene_out = std::move(gt);
    return model;
}

// Full render -> loss gradient over every parameter tensor and the pose
// 7-vector of the rendered view (the view also hosts anchor matches, so the
// match-distance path is exercised too).
inline std::vector<CheckItem> check_pipeline_gradients(uint64_t seed) {
    auto model = make_tiny_model(seed);
    model->ensure_matches();

    const int view = 0;
    const Image target = [&] {
        Rng rng(seed + 99);
        Image t = model->views[view].image;
        for (auto& v : t.data) v = std::clamp(v + 0.05 * rng.normal(), 0.0, 1.0);
        return t;
    }();

    auto f = [&] {
        PipelineCache c = model->forward(model->views[view].intr, CameraPose{}, view, 0, false);
        return loss_total(c.out.image, target, c.rendered_scales(), 0.2, 0.001).total;
    };

    model->params.zero_grad();
    PipelineCache cache = model->forward(model->views[view].intr, CameraPose{}, view, 0, true);
    Image image_grad;
    std::vector<Vec3> scale_grads;
    loss_total(cache.out.image, target, cache.rendered_scales(), 0.2, 0.001, &image_grad,
               &scale_grads);
    model->backward(cache, image_grad, &scale_grads);

    std::vector<CheckItem> items;
    for (ParamEntry& e : model->params.entries()) {
        const double threshold = 5e-3;
        const double worst = verify_detail::max_grad_err(f, e.value, e.size(), e.grad);
        items.push_back({"gradients/pipeline/" + e.name, worst < threshold, worst, threshold});
    }
    return items;
}

inline std::vector<CheckItem> gradient_check(const std::string& selector, uint64_t seed) {
    std::vector<CheckItem> items;
    const bool all = selector == "all" || selector.empty();
    if (all || selector == "mlp") items.push_back(check_mlp_gradients(seed));
    if (all || selector == "fusion") items.push_back(check_fusion_gradients(seed));
    if (all || selector == "decoder") items.push_back(check_decoder_gradients(seed));
    if (all || selector == "ssim") items.push_back(check_ssim_gradients(seed));
    if (all || selector == "vol") items.push_back(check_vol_gradients(seed));
    if (all || selector == "geometry") items.push_back(check_geometry_gradients(seed));
    if (all || selector == "pipeline") {
        auto p = check_pipeline_gradients(seed);
        items.insert(items.end(), p.begin(), p.end());
    }
    return items;
}

// ---------------------------------------------------------------------------
// Matching oracles
// ---------------------------------------------------------------------------

// match_camera against a plain scan over 1000 random configurations.
inline CheckItem verify_camera_matching(uint64_t seed) {
    Rng rng(seed);
    int failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(8));
        std::vector<CameraPose> cams(n);
        for (auto& c : cams) c.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
        const Vec3 anchor(rng.normal(), rng.normal(), rng.normal());
        const CameraMatch got = match_camera(anchor, cams);
        int best = 0;
        double best_d = (anchor - cams[0].translation).squaredNorm();
        for (int i = 1; i < n; ++i) {
            const double d = (anchor - cams[i].translation).squaredNorm();
            if (d < best_d) {
                best_d = d;
                best = i;
            }
        }
        if (got.camera_index != best ||
            std::abs(got.dist - std::sqrt(best_d)) > 1e-12 * (1.0 + std::sqrt(best_d)))
            ++failures;
    }
    return {"matching/camera_argmin", failures == 0, static_cast<double>(failures), 0.0};
}

// match_pixel against the exhaustive argmin over every pixel's unit-depth
// backprojection, on small images.
inline CheckItem verify_pixel_matching(uint64_t seed) {
    Rng rng(seed);
    int failures = 0;
    for (int trial = 0; trial < 200; ++trial) {
        Intrinsics intr;
        intr.width = 8 + static_cast<int>(rng.uniform_int(9));
        intr.height = 8 + static_cast<int>(rng.uniform_int(9));
        intr.fx = rng.uniform(4.0, 20.0);
        intr.fy = rng.uniform(4.0, 20.0);
        intr.cx = rng.uniform(1.0, intr.width - 1.0);
        intr.cy = rng.uniform(1.0, intr.height - 1.0);
        CameraPose pose;
        pose.rotation =
            quat_from_axis_angle(rng.unit_vector(), rng.uniform(0.0, 0.5));
        pose.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
        const Vec3 anchor =
            cam_to_world(pose, Vec3(rng.normal(), rng.normal(), rng.uniform(0.2, 3.0)));

        const auto got = match_pixel(anchor, intr, pose);
        if (!got) {
            ++failures;
            continue;
        }
        double best = std::numeric_limits<double>::infinity();
        for (int v = 0; v < intr.height; ++v)
            for (int u = 0; u < intr.width; ++u) {
                const double d = (anchor - backproject_unit_depth(intr, pose, u, v)).norm();
                if (d < best) best = d;
            }
        if (std::abs(got->dist - best) > 1e-9 * (1.0 + best)) ++failures;
    }
    return {"matching/pixel_argmin", failures == 0, static_cast<double>(failures), 0.0};
}

// voxelize against an independently written rounding + set-dedup oracle.
inline CheckItem verify_voxelize(uint64_t seed) {
    Rng rng(seed);
    int failures = 0;
    for (int trial = 0; trial < 1000; ++trial) {
        const int n = 1 + static_cast<int>(rng.uniform_int(40));
        const double eps = rng.uniform(0.05, 2.0);
        std::vector<Vec3> pts(n);
        for (auto& p : pts) p = Vec3(rng.normal(0, 2), rng.normal(0, 2), rng.normal(0, 2));

        std::set<std::array<int64_t, 3>> cells;
        for (const Vec3& p : pts) {
            std::array<int64_t, 3> c;
            for (int d = 0; d < 3; ++d) {
                const double q = p[d] / eps;
                c[d] = static_cast<int64_t>(q >= 0 ? std::floor(q + 0.5) : std::ceil(q - 0.5));
            }
            cells.insert(c);
        }
        const auto got = voxelize(pts, eps);
        if (got.size() != cells.size()) {
            ++failures;
            continue;
        }
        size_t i = 0;
        for (const auto& c : cells) {
            const Vec3 expect(c[0] * eps, c[1] * eps, c[2] * eps);
            if ((got[i] - expect).cwiseAbs().maxCoeff() > 1e-12) ++failures;
            ++i;
        }
    }
    return {"matching/voxelize_dedup", failures == 0, static_cast<double>(failures), 0.0};
}

inline std::vector<CheckItem> verify_matching(uint64_t seed) {
    return {verify_camera_matching(seed), verify_pixel_matching(seed), verify_voxelize(seed)};
}

// ---------------------------------------------------------------------------
// Metric references
// ---------------------------------------------------------------------------

// Direct per-pixel windowed statistics, no separable filtering.
inline double ssim_reference(const Image& a, const Image& b) {
    const int h = a.height, w = a.width;
    const auto& taps = detail::ssim_window();
    double total = 0.0;
    for (int c = 0; c < a.channels; ++c)
        for (int y = 0; y < h; ++y)
            for (int x = 0; x < w; ++x) {
                double m1 = 0, m2 = 0, e11 = 0, e22 = 0, e12 = 0;
                for (int dy = -kSsimRadius; dy <= kSsimRadius; ++dy)
                    for (int dx = -kSsimRadius; dx <= kSsimRadius; ++dx) {
                        const double wgt = taps[dy + kSsimRadius] * taps[dx + kSsimRadius];
                        const int yy = detail::clamp_idx(y + dy, h);
                        const int xx = detail::clamp_idx(x + dx, w);
                        const double va = a.at(yy, xx, c), vb = b.at(yy, xx, c);
                        m1 += wgt * va;
                        m2 += wgt * vb;
                        e11 += wgt * va * va;
                        e22 += wgt * vb * vb;
                        e12 += wgt * va * vb;
                    }
                const double a1 = 2 * m1 * m2 + kSsimC1;
                const double a2 = 2 * (e12 - m1 * m2) + kSsimC2;
                const double b1 = m1 * m1 + m2 * m2 + kSsimC1;
                const double b2 = (e11 - m1 * m1) + (e22 - m2 * m2) + kSsimC2;
                total += (a1 * a2) / (b1 * b2);
            }
    return total / (static_cast<double>(h) * w * a.channels);
}

inline double psnr_reference(const Image& a, const Image& b) {
    double mse = 0.0;
    for (size_t i = 0; i < a.size(); ++i) mse += (a.data[i] - b.data[i]) * (a.data[i] - b.data[i]);
    mse /= static_cast<double>(a.size());
    return mse == 0.0 ? std::numeric_limits<double>::infinity() : -10.0 * std::log10(mse);
}

inline std::vector<CheckItem> verify_metrics(uint64_t seed) {
    Rng rng(seed);
    Image a(32, 32, 3), b(32, 32, 3);
    for (auto& v : a.data) v = rng.uniform();
    for (auto& v : b.data) v = rng.uniform();

    std::vector<CheckItem> items;
    const double ssim_err = std::abs(ssim(a, b) - ssim_reference(a, b));
    items.push_back({"metrics/ssim_vs_reference", ssim_err < 1e-9, ssim_err, 1e-9});
    const double psnr_err = std::abs(psnr(a, b) - psnr_reference(a, b));
    items.push_back({"metrics/psnr_vs_reference", psnr_err < 1e-9, psnr_err, 1e-9});

    const double self = ssim(a, a);
    items.push_back({"metrics/ssim_identity", self == 1.0, std::abs(self - 1.0), 0.0});
    const double sym = std::abs(ssim(a, b) - ssim(b, a));
    items.push_back({"metrics/ssim_symmetry", sym < 1e-12, sym, 1e-12});

    Image u0(8, 8, 3, 0.25), u1(8, 8, 3, 0.35);
    const double p = psnr(u0, u1);
    items.push_back({"metrics/psnr_uniform_0.1_is_20db", std::abs(p - 20.0) < 1e-12,
                     std::abs(p - 20.0), 1e-12});
    return items;
}

inline std::vector<CheckItem> run_verify_suite(const std::string& suite, uint64_t seed) {
    std::vector<CheckItem> items;
    const bool all = suite == "all" || suite.empty();
    if (all || suite == "gradients") {
        auto g = gradient_check("all", seed);
        items.insert(items.end(), g.begin(), g.end());
    }
    if (all || suite == "matching") {
        auto m = verify_matching(seed);
        items.insert(items.end(), m.begin(), m.end());
    }
    if (all || suite == "metrics") {
        auto m = verify_metrics(seed);
        items.insert(items.end(), m.begin(), m.end());
    }
    if (items.empty()) throw std::runtime_error("unknown verify suite: " + suite);
    return items;
}

}  // namespace hbgs
