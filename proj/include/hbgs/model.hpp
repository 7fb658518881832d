#pragma once

// The assembled scene model: anchors with learnable features, the image
// feature nets, the fusion head, the Gaussian decoders, and one optimizable
// pose 7-vector per training view. Provides the full differentiable pass
// from parameters to a rendered view.
//
// Matching is recomputed only when some pose has moved beyond a threshold
// since the last match; between rematches the matched camera and pixel are
// fixed and gradients flow through the match distances and the sampled image
// feature.

#include "hbgs/anchors.hpp"
#include "hbgs/fusion.hpp"
#include "hbgs/gaussian_decode.hpp"
#include "hbgs/geometry.hpp"
#include "hbgs/image_features.hpp"
#include "hbgs/losses.hpp"
#include "hbgs/params.hpp"
#include "hbgs/renderer.hpp"
#include "hbgs/scene_io.hpp"

#include <Eigen/Dense>

#include <memory>
#include <string>
#include <vector>

namespace hbgs {

struct ModelConfig {
    int feature_dim = 32;        // anchor feature and hybrid feature width
    int color_feature_dim = 16;
    int dir_feature_dim = 16;
    int hidden = 32;
    int k = 10;
    double alpha_cull = 0.005;
    double voxel_scale = 0.0;    // <= 0: extent / 32
    double offset_scale = 0.0;   // <= 0: voxel scale
    bool use_image_features = true;
    bool ray_encoding = true;
    double rematch_rot_deg = 0.1;
    double rematch_trans_frac = 1e-3;
    int anchor_disable_steps = 500;  // 0 turns the rule off
    RasterizeConfig raster;
};

struct TrainView {
    Intrinsics intr;
    Image image;
    std::string name;
    int scene_index = -1;
};

struct PipelineCache {
    bool with_grad = false;
    Intrinsics render_intr;  // already at pyramid level
    CameraPose render_pose;
    int render_view = -1;    // >= 0: pose comes from the model's pose table

    std::vector<AnchorMatch> matches;
    std::vector<Vec3> anchor_pos;
    MatrixXd anchor_feats;   // F x n_matched
    MatrixXd pixel_inputs;
    FeatureBatchCache feat_cache;
    MatrixXd g;
    MatrixXd fusion_in;
    MatrixXd h;
    Eigen::RowVectorXd dist_cam;
    Eigen::RowVectorXd dist_pixel;
    DecodeCache dec_cache;
    DecodedGaussians decoded;

    std::vector<Splat2D> splats;
    std::vector<char> splat_rendered;
    std::vector<int> splat_gaussian;
    std::vector<ProjectCache> proj_caches;
    std::vector<int> vol_gaussian;  // gaussians counted by the volume penalty

    RenderOutput out;

    std::vector<Vec3> rendered_scales() const {
        std::vector<Vec3> s;
        s.reserve(vol_gaussian.size());
        for (int gi : vol_gaussian) s.push_back(decoded.gaussians[gi].s);
        return s;
    }
};

class Model {
  public:
    ModelConfig cfg;
    AnchorSet anchors;
    FeatureNets feat;
    FusionNet fusion;
    DecoderBank bank;
    std::vector<TrainView> views;
    MatrixXd poses;       // 7 x n_views, column per view
    MatrixXd pose_grads;
    ParamStore params;
    double extent = 1.0;

    std::vector<char> anchor_enabled;
    std::vector<int> anchor_low_streak;

    std::vector<AnchorMatch> matches;
    MatrixXd match_pose_snapshot;
    bool has_matches = false;

    Model() = default;
    Model(const Model&) = delete;
    Model& operator=(const Model&) = delete;
    Model(Model&&) = default;
    Model& operator=(Model&&) = default;

    // Builds a fresh model from the training split of a scene. Initialization
    // order (anchors, feature nets, fusion, decoders) is fixed so a seed pins
    // every parameter.
    static std::unique_ptr<Model> build(const SceneBundle& scene, ModelConfig cfg, uint64_t seed) {
        auto m = std::make_unique<Model>();
        m->extent = scene.extent();
        if (cfg.voxel_scale <= 0.0) cfg.voxel_scale = m->extent / 32.0;
        if (cfg.offset_scale <= 0.0) cfg.offset_scale = cfg.voxel_scale;
        m->cfg = cfg;

        Rng rng(seed);
        m->anchors = init_anchor_features(voxelize(scene.points, cfg.voxel_scale),
                                          cfg.feature_dim, cfg.voxel_scale, rng);
        m->feat.init(cfg.hidden, cfg.color_feature_dim, cfg.dir_feature_dim, cfg.feature_dim, rng);
        m->feat.ray_encoding = cfg.ray_encoding;
        m->fusion.init(cfg.feature_dim, cfg.feature_dim, cfg.feature_dim, rng);
        m->bank.init(cfg.feature_dim, cfg.hidden, cfg.k, cfg.offset_scale, cfg.alpha_cull, rng);

        for (int i = 0; i < static_cast<int>(scene.cameras.size()); ++i) {
            if (scene.is_test[i]) continue;
            TrainView v;
            v.intr = scene.cameras[i].intr;
            v.image = scene.images[i];
            v.name = scene.cameras[i].name;
            v.scene_index = i;
            if (v.image.size() == 0) throw std::runtime_error("train view has no raster: " + v.name);
            m->views.push_back(std::move(v));
            }
        if (m->views.empty()) throw std::runtime_error("no training views");
        m->poses.resize(7, m->views.size());
        for (size_t i = 0; i < m->views.size(); ++i)
            m->poses.col(i) = pose_to_vec7(scene.cameras[m->views[i].scene_index].pose);
        m->pose_grads = MatrixXd::Zero(7, m->views.size());

        m->anchor_enabled.assign(m->anchors.count(), 1);
        m->anchor_low_streak.assign(m->anchors.count(), 0);
        m->register_all();
        return m;
    }

    int view_count() const { return static_cast<int>(views.size()); }
    CameraPose view_pose(int i) const { return pose_from_vec7(poses.col(i)); }

    void register_all() {
        params.add("anchor.features", "model", anchors.features.data(),
                   anchors.feature_grads.data(), anchors.features.rows(), anchors.features.cols());
        feat.register_params(params, "model");
        fusion.register_params(params, "model");
        bank.register_params(params, "model");
        params.add("poses", "poses", poses.data(), pose_grads.data(), poses.rows(), poses.cols());
    }

    std::string model_hash() const { return params.group_hash("model"); }

    // Rebuilds matches when any pose drifted past the thresholds.
    void ensure_matches(bool force = false) {
        bool need = force || !has_matches;
        if (!need) {
            for (int i = 0; i < view_count() && !need; ++i) {
                const CameraPose cur = view_pose(i);
                const CameraPose snap = pose_from_vec7(match_pose_snapshot.col(i));
                if (quat_angle_deg(snap.rotation, cur.rotation) > cfg.rematch_rot_deg) need = true;
                if ((snap.translation - cur.translation).norm() > cfg.rematch_trans_frac * extent)
                    need = true;
            }
        }
        if (!need) return;
        std::vector<Intrinsics> intr(views.size());
        std::vector<CameraPose> ps(views.size());
        for (size_t i = 0; i < views.size(); ++i) {
            intr[i] = views[i].intr;
            ps[i] = view_pose(static_cast<int>(i));
        }
        matches = match_anchors(anchors.positions, intr, ps, &anchor_enabled);
        match_pose_snapshot = poses;
        has_matches = true;
    }

    // Forward pass through matching distances, features, fusion, decode,
    // projection and rasterization. `render_view >= 0` renders that training
    // view at its current model pose; otherwise `external_pose` is used.
    PipelineCache forward(const Intrinsics& full_intr, const CameraPose& external_pose,
                          int render_view, int level, bool with_grad) {
        if (!has_matches) throw std::runtime_error("forward before matching");
        PipelineCache c;
        c.with_grad = with_grad;
        c.render_view = render_view;
        c.render_intr = intrinsics_at_level(full_intr, level);
        c.render_pose = render_view >= 0 ? view_pose(render_view) : external_pose;
        c.matches = matches;

        const int n = static_cast<int>(c.matches.size());
        const int f = cfg.feature_dim;
        c.anchor_pos.resize(n);
        c.anchor_feats.resize(f, n);
        c.pixel_inputs.resize(kPixelInputDim, n);
        c.dist_cam.resize(n);
        c.dist_pixel.resize(n);
        for (int i = 0; i < n; ++i) {
            const AnchorMatch& m = c.matches[i];
            c.anchor_pos[i] = anchors.positions[m.anchor_index];
            c.anchor_feats.col(i) = anchors.features.col(m.anchor_index);
            const CameraPose cam_pose = view_pose(m.camera_index);
            c.dist_cam[i] = (c.anchor_pos[i] - cam_pose.translation).norm();
            const Vec3 pp = backproject_unit_depth(views[m.camera_index].intr, cam_pose, m.u, m.v);
            c.dist_pixel[i] = (c.anchor_pos[i] - pp).norm();
            c.pixel_inputs.col(i) = pixel_input(views[m.camera_index].image,
                                                views[m.camera_index].intr, m.u, m.v,
                                                cfg.ray_encoding);
        }

        if (cfg.use_image_features && n > 0)
            c.g = features_forward(feat, c.pixel_inputs, with_grad ? &c.feat_cache : nullptr);
        else
            c.g = MatrixXd::Zero(f, n);

        c.fusion_in.resize(2 * f + 2, n);
        c.fusion_in.topRows(f) = c.anchor_feats;
        c.fusion_in.middleRows(f, f) = c.g;
        c.fusion_in.row(2 * f) = c.dist_cam;
        c.fusion_in.row(2 * f + 1) = c.dist_pixel;
        c.h = fusion.h.forward(c.fusion_in);

        c.decoded = decode_all(bank, c.anchor_pos, c.h, c.dist_pixel,
                               with_grad ? &c.dec_cache : nullptr);

        const size_t n_gauss = c.decoded.gaussians.size();
        c.splats.reserve(n_gauss);
        for (size_t gi = 0; gi < n_gauss; ++gi) {
            ProjectCache pc;
            const auto splat = project_gaussian(c.decoded.gaussians[gi], c.render_intr,
                                                c.render_pose, cfg.raster.cov_floor,
                                                with_grad ? &pc : nullptr);
            if (!splat) continue;
            c.splats.push_back(*splat);
            c.splat_rendered.push_back(c.decoded.rendered[gi]);
            c.splat_gaussian.push_back(static_cast<int>(gi));
            if (with_grad) c.proj_caches.push_back(pc);
            if (c.decoded.rendered[gi]) c.vol_gaussian.push_back(static_cast<int>(gi));
        }

        c.out = rasterize(c.splats, c.splat_rendered, c.render_intr.height, c.render_intr.width,
                          cfg.raster);
        return c;
    }

    // Backward pass. `d_image` is the loss gradient over the rendered image;
    // `scale_grads` (aligned with cache.vol_gaussian) carries the volume
    // penalty. Accumulates into all parameter grads; returns the gradient for
    // the external pose when one was used.
    Eigen::Matrix<double, 7, 1> backward(const PipelineCache& c, const Image& d_image,
                                         const std::vector<Vec3>* scale_grads) {
        if (!c.with_grad) throw std::runtime_error("backward without grad cache");
        const auto raster_grads = rasterize_backward(c.splats, c.splat_rendered,
                                                     c.render_intr.height, c.render_intr.width,
                                                     cfg.raster, d_image);
        GaussianGrads ggrads(c.decoded.gaussians.size());
        Eigen::Matrix<double, 7, 1> render_pose_grad = Eigen::Matrix<double, 7, 1>::Zero();
        for (size_t si = 0; si < c.splats.size(); ++si) {
            const int gi = c.splat_gaussian[si];
            const ProjectGrads pg =
                project_gaussian_backward(c.decoded.gaussians[gi], c.render_intr, c.render_pose,
                                          c.proj_caches[si], raster_grads[si]);
            ggrads.d_mu[gi] += pg.d_mu;
            ggrads.d_q[gi] += pg.d_q;
            ggrads.d_s[gi] += pg.d_s;
            ggrads.d_alpha[gi] += raster_grads[si].d_alpha;
            ggrads.d_c[gi] += raster_grads[si].d_color;
            render_pose_grad += pg.d_pose;
        }
        if (scale_grads) {
            if (scale_grads->size() != c.vol_gaussian.size())
                throw std::runtime_error("scale grad size mismatch");
            for (size_t j = 0; j < c.vol_gaussian.size(); ++j)
                ggrads.d_s[c.vol_gaussian[j]] += (*scale_grads)[j];
        }

        const DecodeBackwardResult dec = decode_backward(bank, c.decoded, c.dec_cache, ggrads);

        MatrixXd d_fusion_in = fusion.h.backward(c.fusion_in, dec.d_h);
        const int f = cfg.feature_dim;
        Eigen::RowVectorXd d_dist_cam = d_fusion_in.row(2 * f);
        Eigen::RowVectorXd d_dist_pixel = d_fusion_in.row(2 * f + 1) + dec.d_dist_pixel;

        for (int i = 0; i < static_cast<int>(c.matches.size()); ++i)
            anchors.feature_grads.col(c.matches[i].anchor_index) += d_fusion_in.col(i).head(f);

        if (cfg.use_image_features && c.matches.size() > 0)
            features_backward(feat, c.feat_cache, d_fusion_in.middleRows(f, f));

        for (int i = 0; i < static_cast<int>(c.matches.size()); ++i) {
            const AnchorMatch& m = c.matches[i];
            if (d_dist_cam[i] == 0.0 && d_dist_pixel[i] == 0.0) continue;
            const auto g7 = match_distance_pose_grad(c.anchor_pos[i], views[m.camera_index].intr,
                                                     view_pose(m.camera_index), m.u, m.v,
                                                     d_dist_cam[i], d_dist_pixel[i]);
            pose_grads.col(m.camera_index) += g7;
        }

        if (c.render_view >= 0) {
            pose_grads.col(c.render_view) += render_pose_grad;
            return Eigen::Matrix<double, 7, 1>::Zero();
        }
        return render_pose_grad;
    }

    // Decode-only pass for frozen-model use (test-pose registration, eval):
    // the Gaussian set depends solely on model parameters and train poses.
    struct FrozenGaussians {
        DecodedGaussians decoded;
        std::vector<Vec3> anchor_pos;
    };

    FrozenGaussians decode_frozen() {
        ensure_matches();
        PipelineCache c = forward_features_only();
        FrozenGaussians out;
        out.decoded = decode_all(bank, c.anchor_pos, c.h, c.dist_pixel, nullptr);
        out.anchor_pos = c.anchor_pos;
        return out;
    }

    // Opacity bookkeeping: anchors whose decoded Gaussians stay below the
    // cull threshold for anchor_disable_steps consecutive steps are disabled.
    void update_anchor_streaks(const PipelineCache& c) {
        if (cfg.anchor_disable_steps <= 0) return;
        bool disabled_any = false;
        for (int i = 0; i < static_cast<int>(c.matches.size()); ++i) {
            const int a = c.matches[i].anchor_index;
            double max_alpha = 0.0;
            for (int j = 0; j < c.decoded.k; ++j)
                max_alpha = std::max(max_alpha,
                                     c.decoded.gaussians[static_cast<size_t>(i) * c.decoded.k + j].alpha);
            if (max_alpha < bank.alpha_cull) {
                if (++anchor_low_streak[a] >= cfg.anchor_disable_steps && anchor_enabled[a]) {
                    anchor_enabled[a] = 0;
                    disabled_any = true;
                }
            } else {
                anchor_low_streak[a] = 0;
            }
        }
        if (disabled_any) has_matches = false;  // rebuild the match table
    }

  private:
    PipelineCache forward_features_only() {
        PipelineCache c;
        c.matches = matches;
        const int n = static_cast<int>(c.matches.size());
        const int f = cfg.feature_dim;
        c.anchor_pos.resize(n);
        c.anchor_feats.resize(f, n);
        c.pixel_inputs.resize(kPixelInputDim, n);
        c.dist_cam.resize(n);
        c.dist_pixel.resize(n);
        for (int i = 0; i < n; ++i) {
            const AnchorMatch& m = c.matches[i];
            c.anchor_pos[i] = anchors.positions[m.anchor_index];
            c.anchor_feats.col(i) = anchors.features.col(m.anchor_index);
            const CameraPose cam_pose = view_pose(m.camera_index);
            c.dist_cam[i] = (c.anchor_pos[i] - cam_pose.translation).norm();
            const Vec3 pp = backproject_unit_depth(views[m.camera_index].intr, cam_pose, m.u, m.v);
            c.dist_pixel[i] = (c.anchor_pos[i] - pp).norm();
            c.pixel_inputs.col(i) = pixel_input(views[m.camera_index].image,
                                                views[m.camera_index].intr, m.u, m.v,
                                                cfg.ray_encoding);
        }
        if (cfg.use_image_features && n > 0)
            c.g = features_forward(feat, c.pixel_inputs, nullptr);
        else
            c.g = MatrixXd::Zero(f, n);
        c.fusion_in.resize(2 * f + 2, n);
        c.fusion_in.topRows(f) = c.anchor_feats;
        c.fusion_in.middleRows(f, f) = c.g;
        c.fusion_in.row(2 * f) = c.dist_cam;
        c.fusion_in.row(2 * f + 1) = c.dist_pixel;
        c.h = fusion.h.forward(c.fusion_in);
        return c;
    }
};

// Projects and rasterizes an already-decoded Gaussian set at a given pose.
inline RenderOutput render_gaussians(const DecodedGaussians& dec, const Intrinsics& intr,
                                     const CameraPose& pose, const RasterizeConfig& raster) {
    std::vector<Splat2D> splats;
    std::vector<char> rendered;
    for (size_t gi = 0; gi < dec.gaussians.size(); ++gi) {
        const auto s = project_gaussian(dec.gaussians[gi], intr, pose, raster.cov_floor, nullptr);
        if (!s) continue;
        splats.push_back(*s);
        rendered.push_back(dec.rendered[gi]);
    }
    return rasterize(splats, rendered, intr.height, intr.width, raster);
}

}  // namespace hbgs
