#pragma once

// Run configuration: every tunable with its default, JSON round-trip with
// unknown-key rejection, and adapters into the module-level settings structs.

#include "hbgs/model.hpp"
#include "hbgs/optimizer.hpp"
#include "hbgs/scene_io.hpp"

#include <json.hpp>

#include <array>
#include <fstream>
#include <string>

namespace hbgs {

struct RunConfig {
    uint64_t seed = 1;

    // model
    int feature_dim = 32;
    int color_feature_dim = 16;
    int dir_feature_dim = 16;
    int hidden = 32;
    int k = 10;
    double alpha_cull = 0.005;
    double voxel_scale = 0.0;   // 0: scene extent / 32
    double offset_scale = 0.0;  // 0: voxel scale
    bool use_image_features = true;
    bool ray_encoding = true;
    int anchor_disable_steps = 500;
    double rematch_rot_deg = 0.1;
    double rematch_trans_frac = 0.001;

    // renderer
    double cov_floor = 0.3;
    std::array<double, 3> background = {0.0, 0.0, 0.0};

    // losses
    double lambda_ssim = 0.2;
    double lambda_vol = 0.001;

    // training / registration
    int train_steps = 2000;  // desk preset; the paper-scale preset uses 30000
    int pyramid_levels = 3;
    double lr_model = 1e-3;
    double lr_pose = 1e-3;
    double lr_register = 5e-3;
    bool optimize_poses = true;
    int register_iterations = 200;
    int test_every = 8;

    // synthetic scenes
    int synth_points = 500;
    int synth_cameras = 12;
    int image_size = 64;
    double scene_extent = 1.0;
    double rot_noise_deg = 0.0;
    double trans_noise = 0.0;  // fraction of extent
    double blob_sigma = 1.7;
    double blob_alpha = 0.85;
    double fov_deg = 60.0;

    ModelConfig model_config() const {
        ModelConfig m;
        m.feature_dim = feature_dim;
        m.color_feature_dim = color_feature_dim;
        m.dir_feature_dim = dir_feature_dim;
        m.hidden = hidden;
        m.k = k;
        m.alpha_cull = alpha_cull;
        m.voxel_scale = voxel_scale;
        m.offset_scale = offset_scale;
        m.use_image_features = use_image_features;
        m.ray_encoding = ray_encoding;
        m.rematch_rot_deg = rematch_rot_deg;
        m.rematch_trans_frac = rematch_trans_frac;
        m.anchor_disable_steps = anchor_disable_steps;
        m.raster.cov_floor = cov_floor;
        m.raster.background = Vec3(background[0], background[1], background[2]);
        return m;
    }

    OptimSettings optim_settings() const {
        OptimSettings o;
        o.total_steps = train_steps;
        o.pyramid_levels = pyramid_levels;
        o.lr_model = lr_model;
        o.lr_pose = lr_pose;
        o.lr_register = lr_register;
        o.lambda_ssim = lambda_ssim;
        o.lambda_vol = lambda_vol;
        o.optimize_poses = optimize_poses;
        o.seed = seed;
        return o;
    }

    SyntheticSceneSpec synth_spec() const {
        SyntheticSceneSpec s;
        s.seed = seed;
        s.n_points = synth_points;
        s.n_cameras = synth_cameras;
        s.scene_extent = scene_extent;
        s.pose_noise_rot_deg = rot_noise_deg;
        s.pose_noise_trans = trans_noise;
        s.image_width = image_size;
        s.image_height = image_size;
        s.fov_deg = fov_deg;
        s.blob_sigma_px = blob_sigma;
        s.blob_alpha = blob_alpha;
        return s;
    }
};

namespace detail {

template <typename T>
void pick(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline nlohmann::json config_to_json(const RunConfig& c) {
    nlohmann::json j;
    j["seed"] = c.seed;
    j["feature_dim"] = c.feature_dim;
    j["color_feature_dim"] = c.color_feature_dim;
    j["dir_feature_dim"] = c.dir_feature_dim;
    j["hidden"] = c.hidden;
    j["k"] = c.k;
    j["alpha_cull"] = c.alpha_cull;
    j["voxel_scale"] = c.voxel_scale;
    j["offset_scale"] = c.offset_scale;
    j["use_image_features"] = c.use_image_features;
    j["ray_encoding"] = c.ray_encoding;
    j["anchor_disable_steps"] = c.anchor_disable_steps;
    j["rematch_rot_deg"] = c.rematch_rot_deg;
    j["rematch_trans_frac"] = c.rematch_trans_frac;
    j["cov_floor"] = c.cov_floor;
    j["background"] = c.background;
    j["lambda_ssim"] = c.lambda_ssim;
    j["lambda_vol"] = c.lambda_vol;
    j["train_steps"] = c.train_steps;
    j["pyramid_levels"] = c.pyramid_levels;
    j["lr_model"] = c.lr_model;
    j["lr_pose"] = c.lr_pose;
    j["lr_register"] = c.lr_register;
    j["optimize_poses"] = c.optimize_poses;
    j["register_iterations"] = c.register_iterations;
    j["test_every"] = c.test_every;
    j["synth_points"] = c.synth_points;
    j["synth_cameras"] = c.synth_cameras;
    j["image_size"] = c.image_size;
    j["scene_extent"] = c.scene_extent;
    j["rot_noise_deg"] = c.rot_noise_deg;
    j["trans_noise"] = c.trans_noise;
    j["blob_sigma"] = c.blob_sigma;
    j["blob_alpha"] = c.blob_alpha;
    j["fov_deg"] = c.fov_deg;
    return j;
}

inline RunConfig config_from_json(const nlohmann::json& j) {
    static const nlohmann::json known = config_to_json(RunConfig{});
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.contains(it.key()))
            throw std::runtime_error("unknown config key: " + it.key());
    RunConfig c;
    detail::pick(j, "seed", c.seed);
    detail::pick(j, "feature_dim", c.feature_dim);
    detail::pick(j, "color_feature_dim", c.color_feature_dim);
    detail::pick(j, "dir_feature_dim", c.dir_feature_dim);
    detail::pick(j, "hidden", c.hidden);
    detail::pick(j, "k", c.k);
    detail::pick(j, "alpha_cull", c.alpha_cull);
    detail::pick(j, "voxel_scale", c.voxel_scale);
    detail::pick(j, "offset_scale", c.offset_scale);
    detail::pick(j, "use_image_features", c.use_image_features);
    detail::pick(j, "ray_encoding", c.ray_encoding);
    detail::pick(j, "anchor_disable_steps", c.anchor_disable_steps);
    detail::pick(j, "rematch_rot_deg", c.rematch_rot_deg);
    detail::pick(j, "rematch_trans_frac", c.rematch_trans_frac);
    detail::pick(j, "cov_floor", c.cov_floor);
    detail::pick(j, "background", c.background);
    detail::pick(j, "lambda_ssim", c.lambda_ssim);
    detail::pick(j, "lambda_vol", c.lambda_vol);
    detail::pick(j, "train_steps", c.train_steps);
    detail::pick(j, "pyramid_levels", c.pyramid_levels);
    detail::pick(j, "lr_model", c.lr_model);
    detail::pick(j, "lr_pose", c.lr_pose);
    detail::pick(j, "lr_register", c.lr_register);
    detail::pick(j, "optimize_poses", c.optimize_poses);
    detail::pick(j, "register_iterations", c.register_iterations);
    detail::pick(j, "test_every", c.test_every);
    detail::pick(j, "synth_points", c.synth_points);
    detail::pick(j, "synth_cameras", c.synth_cameras);
    detail::pick(j, "image_size", c.image_size);
    detail::pick(j, "scene_extent", c.scene_extent);
    detail::pick(j, "rot_noise_deg", c.rot_noise_deg);
    detail::pick(j, "trans_noise", c.trans_noise);
    detail::pick(j, "blob_sigma", c.blob_sigma);
    detail::pick(j, "blob_alpha", c.blob_alpha);
    detail::pick(j, "fov_deg", c.fov_deg);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw std::runtime_error("cannot open config " + path);
    nlohmann::json j;
    in >> j;
    return config_from_json(j);
}

inline void save_config(const RunConfig& c, const std::string& path) {
    std::ofstream out(path);
    out << config_to_json(c).dump(2) << "\n";
}

}  // namespace hbgs
