#pragma once

// Joint optimization of scene parameters and camera poses against the
// photometric objective, coarse to fine over an image pyramid, plus
// frozen-model registration of individual test-view poses.

#include "hbgs/losses.hpp"
#include "hbgs/model.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <optional>
#include <vector>

namespace hbgs {

struct OptimSettings {
    int total_steps = 2000;
    int pyramid_levels = 3;  // renders at x1/4, x1/2, x1 for the default 3
    double lr_model = 1e-3;  // cosine-decayed over the run
    double lr_pose = 1e-3;   // halved at each finer level
    double lr_register = 5e-3;
    AdamConfig adam;
    double lambda_ssim = 0.2;
    double lambda_vol = 0.001;
    bool optimize_poses = true;
    uint64_t seed = 1;
};

struct TrainState {
    std::unique_ptr<Model> model;
    uint64_t step = 0;
};

struct StepRecord {
    uint64_t step = 0;
    int level = 0;  // pyramid level rendered at (0 = full resolution)
    LossBreakdown loss;
    double pose_rot_err_deg = std::numeric_limits<double>::quiet_NaN();
    double pose_trans_err = std::numeric_limits<double>::quiet_NaN();
};

struct OptimizeDiverged : std::runtime_error {
    uint64_t step;
    explicit OptimizeDiverged(uint64_t s)
        : std::runtime_error("optimization diverged at step " + std::to_string(s)), step(s) {}
};

namespace detail {

// Steps per level, coarse first; remainders go to the earliest levels.
inline std::vector<int> level_budgets(int total, int levels) {
    std::vector<int> out(levels, total / levels);
    for (int i = 0; i < total % levels; ++i) ++out[i];
    return out;
}

inline double cosine_decay(double lr0, double progress) {
    return lr0 * 0.5 * (1.0 + std::cos(kPi * std::min(1.0, progress)));
}

inline void renormalize_pose_quats(MatrixXd& poses) {
    for (int i = 0; i < poses.cols(); ++i) {
        const double n = poses.col(i).tail<4>().norm();
        if (n > kZeroQuatEps) poses.col(i).tail<4>() /= n;
    }
}

}  // namespace detail

// Mean rotation (deg) and translation error of the model's train poses
// against reference poses aligned with the model's view order.
inline std::pair<double, double> mean_pose_error(const Model& model,
                                                 const std::vector<CameraPose>& reference) {
    double rot = 0.0, trans = 0.0;
    for (int i = 0; i < model.view_count(); ++i) {
        const CameraPose p = model.view_pose(i);
        rot += quat_angle_deg(p.rotation, reference[i].rotation);
        trans += (p.translation - reference[i].translation).norm();
    }
    const double n = std::max(1, model.view_count());
    return {rot / n, trans / n};
}

// Runs the coarse-to-fine joint optimization. One training view per step,
// cycled in a seeded shuffled order; matching refreshes per the model's
// drift thresholds. Throws OptimizeDiverged when the total loss leaves the
// finite range.
inline std::vector<StepRecord> joint_optimize(
    TrainState& st, const OptimSettings& opt,
    const std::vector<CameraPose>* gt_train_poses = nullptr,
    const std::function<void(const StepRecord&)>& sink = nullptr) {
    Model& model = *st.model;
    const int n_views = model.view_count();

    std::vector<std::vector<Image>> pyramid(n_views);
    for (int v = 0; v < n_views; ++v) {
        pyramid[v].resize(opt.pyramid_levels);
        for (int l = 0; l < opt.pyramid_levels; ++l)
            pyramid[v][l] = downsample_levels(model.views[v].image, l);
    }

    std::vector<int> order(n_views);
    std::iota(order.begin(), order.end(), 0);
    Rng rng(opt.seed);
    rng.shuffle(order);

    const bool was_frozen = model.params.is_frozen("poses");
    if (!opt.optimize_poses) model.params.freeze_group("poses");

    const auto budgets = detail::level_budgets(opt.total_steps, opt.pyramid_levels);
    std::vector<StepRecord> history;
    history.reserve(opt.total_steps);

    int cursor = 0;
    int done = 0;
    for (int rank = 0; rank < opt.pyramid_levels; ++rank) {
        const int level = opt.pyramid_levels - 1 - rank;  // coarse first
        const double lr_pose_level = opt.lr_pose * std::pow(0.5, rank);
        for (int s = 0; s < budgets[rank]; ++s) {
            model.ensure_matches();
            const int view = order[cursor];
            cursor = (cursor + 1) % n_views;

            PipelineCache cache =
                model.forward(model.views[view].intr, CameraPose{}, view, level, true);
            Image image_grad;
            std::vector<Vec3> scale_grads;
            const LossBreakdown lb =
                loss_total(cache.out.image, pyramid[view][level], cache.rendered_scales(),
                           opt.lambda_ssim, opt.lambda_vol, &image_grad, &scale_grads);
            if (!std::isfinite(lb.total)) throw OptimizeDiverged(st.step);

            model.params.zero_grad();
            model.backward(cache, image_grad, &scale_grads);

            ++st.step;
            ++done;
            const double lr_model =
                detail::cosine_decay(opt.lr_model, static_cast<double>(done) / opt.total_steps);
            model.params.adam_step(st.step, opt.adam, [&](const std::string& group) {
                return group == "poses" ? lr_pose_level : lr_model;
            });
            if (!model.params.is_frozen("poses")) detail::renormalize_pose_quats(model.poses);
            model.update_anchor_streaks(cache);

            StepRecord rec;
            rec.step = st.step;
            rec.level = level;
            rec.loss = lb;
            if (gt_train_poses) {
                const auto [r, t] = mean_pose_error(model, *gt_train_poses);
                rec.pose_rot_err_deg = r;
                rec.pose_trans_err = t;
            }
            if (sink) sink(rec);
            history.push_back(rec);
        }
    }

    if (!opt.optimize_poses && !was_frozen) model.params.unfreeze_group("poses");
    return history;
}

struct RegisterResult {
    CameraPose pose;
    bool diverged = false;
    double loss_before = 0.0;
    double loss_after = 0.0;
    int iterations = 0;
};

namespace detail {

struct PoseOnlyPass {
    RenderOutput out;
    std::vector<Splat2D> splats;
    std::vector<char> rendered;
    std::vector<ProjectCache> caches;
    std::vector<int> gaussian;
};

inline PoseOnlyPass render_pose_only(const Model::FrozenGaussians& fro, const Intrinsics& intr,
                                     const CameraPose& pose, const RasterizeConfig& raster,
                                     bool with_grad) {
    PoseOnlyPass p;
    for (size_t gi = 0; gi < fro.decoded.gaussians.size(); ++gi) {
        ProjectCache pc;
        const auto s = project_gaussian(fro.decoded.gaussians[gi], intr, pose, raster.cov_floor,
                                        with_grad ? &pc : nullptr);
        if (!s) continue;
        p.splats.push_back(*s);
        p.rendered.push_back(fro.decoded.rendered[gi]);
        p.gaussian.push_back(static_cast<int>(gi));
        if (with_grad) p.caches.push_back(pc);
    }
    p.out = rasterize(p.splats, p.rendered, intr.height, intr.width, raster);
    return p;
}

}  // namespace detail

// Optimizes a single pose against a frozen model, coarse to fine, minimizing
// L1 + lambda_ssim * (1 - SSIM). The volume term depends only on frozen
// parameters and is omitted. Model parameters are never touched; on
// divergence the initial pose comes back with the failure flag set.
inline RegisterResult register_test_pose(TrainState& st, const Image& test_image,
                                         const Intrinsics& intr, const CameraPose& init_pose,
                                         int iterations, const OptimSettings& opt) {
    if (iterations < 1) throw std::runtime_error("register iterations must be >= 1");
    Model& model = *st.model;
    const Model::FrozenGaussians fro = model.decode_frozen();

    std::vector<Image> pyramid(opt.pyramid_levels);
    for (int l = 0; l < opt.pyramid_levels; ++l) pyramid[l] = downsample_levels(test_image, l);

    auto photometric = [&](const Image& rendered, const Image& target, Image* grad) {
        Image g_l1, g_ssim;
        const double l1 = loss_l1(rendered, target, grad ? &g_l1 : nullptr);
        const double ss = loss_ssim(rendered, target, grad ? &g_ssim : nullptr);
        if (grad) {
            *grad = Image(rendered.height, rendered.width, 3, 0.0);
            for (size_t i = 0; i < grad->size(); ++i)
                grad->data[i] = g_l1.data[i] + opt.lambda_ssim * g_ssim.data[i];
        }
        return l1 + opt.lambda_ssim * ss;
    };

    RegisterResult result;
    result.iterations = iterations;
    {
        const auto p0 = detail::render_pose_only(fro, intr, init_pose, model.cfg.raster, false);
        result.loss_before = photometric(p0.out.image, test_image, nullptr);
    }

    Eigen::Matrix<double, 7, 1> pose7 = pose_to_vec7(init_pose);
    Eigen::Matrix<double, 7, 1> m = Eigen::Matrix<double, 7, 1>::Zero();
    Eigen::Matrix<double, 7, 1> v = Eigen::Matrix<double, 7, 1>::Zero();

    const auto budgets = detail::level_budgets(iterations, opt.pyramid_levels);
    int t = 0;
    for (int rank = 0; rank < opt.pyramid_levels; ++rank) {
        const int level = opt.pyramid_levels - 1 - rank;
        const Intrinsics li = intrinsics_at_level(intr, level);
        for (int s = 0; s < budgets[rank]; ++s) {
            const CameraPose pose = pose_from_vec7(pose7);
            const auto pass = detail::render_pose_only(fro, li, pose, model.cfg.raster, true);
            Image grad;
            const double loss = photometric(pass.out.image, pyramid[level], &grad);
            if (!std::isfinite(loss)) {
                result.pose = init_pose;
                result.diverged = true;
                return result;
            }
            const auto raster_grads =
                rasterize_backward(pass.splats, pass.rendered, li.height, li.width,
                                   model.cfg.raster, grad);
            Eigen::Matrix<double, 7, 1> g7 = Eigen::Matrix<double, 7, 1>::Zero();
            for (size_t si = 0; si < pass.splats.size(); ++si) {
                const ProjectGrads pg = project_gaussian_backward(
                    fro.decoded.gaussians[pass.gaussian[si]], li, pose, pass.caches[si],
                    raster_grads[si]);
                g7 += pg.d_pose;
            }

            ++t;
            const double lr =
                detail::cosine_decay(opt.lr_register, static_cast<double>(t) / iterations);
            const double bc1 = 1.0 - std::pow(opt.adam.beta1, t);
            const double bc2 = 1.0 - std::pow(opt.adam.beta2, t);
            for (int i = 0; i < 7; ++i) {
                m[i] = opt.adam.beta1 * m[i] + (1.0 - opt.adam.beta1) * g7[i];
                v[i] = opt.adam.beta2 * v[i] + (1.0 - opt.adam.beta2) * g7[i] * g7[i];
                pose7[i] -= lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + opt.adam.eps);
            }
            const double qn = pose7.tail<4>().norm();
            if (qn > kZeroQuatEps) pose7.tail<4>() /= qn;
        }
    }

    result.pose = pose_from_vec7(pose7);
    {
        const auto p1 = detail::render_pose_only(fro, intr, result.pose, model.cfg.raster, false);
        result.loss_after = photometric(p1.out.image, test_image, nullptr);
    }
    if (!std::isfinite(result.loss_after)) {
        result.pose = init_pose;
        result.diverged = true;
    }
    return result;
}

}  // namespace hbgs
