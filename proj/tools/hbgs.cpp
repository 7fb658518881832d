// Command-line surface: synthesize verification scenes, train, register
// test-view poses against a frozen model, render, evaluate, and run the
// verification suites.
//
// Exit codes: 0 success, 1 user error, 2 divergence, 3 verification failure.

#include "hbgs/checkpoint.hpp"
#include "hbgs/config.hpp"
#include "hbgs/metrics.hpp"
#include "hbgs/model.hpp"
#include "hbgs/optimizer.hpp"
#include "hbgs/scene_io.hpp"
#include "hbgs/verify.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::json;
using namespace hbgs;

namespace {

json pose_to_json(const CameraPose& p) {
    return json{{"t", {p.translation.x(), p.translation.y(), p.translation.z()}},
                {"q", {p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z}}};
}

CameraPose pose_from_json(const json& j) {
    CameraPose p;
    const auto& t = j.at("t");
    const auto& q = j.at("q");
    p.translation = Vec3(t[0].get<double>(), t[1].get<double>(), t[2].get<double>());
    p.rotation = Quaternion(q[0].get<double>(), q[1].get<double>(), q[2].get<double>(),
                            q[3].get<double>());
    return p;
}

void write_json_file(const json& j, const fs::path& path) {
    std::ofstream out(path);
    if (!out.is_open()) throw std::runtime_error("cannot write " + path.string());
    out << j.dump(2) << "\n";
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in.is_open()) throw std::runtime_error("cannot open " + path.string());
    json j;
    in >> j;
    return j;
}

// Timestamps live in a sidecar so every other output is byte-reproducible.
void write_run_meta(const fs::path& dir, const std::string& command) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    json meta;
    meta["command"] = command;
    meta["unix_time"] = std::chrono::duration_cast<std::chrono::seconds>(now).count();
    write_json_file(meta, dir / "run_meta.json");
}

RunConfig resolve_config(const std::string& config_path,
                         const std::vector<std::string>& overrides) {
    json j = config_path.empty() ? config_to_json(RunConfig{})
                                 : config_to_json(load_config(config_path));
    for (const std::string& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
            throw std::runtime_error("override must look like key=value: " + kv);
        const std::string key = kv.substr(0, eq);
        const std::string val = kv.substr(eq + 1);
        try {
            j[key] = json::parse(val);
        } catch (const json::exception&) {
            j[key] = val;  // plain string
        }
    }
    return config_from_json(j);
}

std::string pick_sparse(const fs::path& scene_dir, std::string poses) {
    if (poses == "auto")
        poses = fs::exists(scene_dir / "sparse_noisy") ? "noisy" : "gt";
    if (poses == "gt") return "sparse";
    if (poses == "noisy") return "sparse_noisy";
    throw std::runtime_error("unknown pose set: " + poses);
}

// Ground-truth poses by camera name, when the scene has a manifest.
std::map<std::string, CameraPose> load_gt_poses(const fs::path& scene_dir) {
    std::map<std::string, CameraPose> out;
    const fs::path mpath = scene_dir / "manifest.json";
    if (!fs::exists(mpath)) return out;
    const json manifest = read_json_file(mpath);
    for (const auto& v : manifest.at("views"))
        out[v.at("name").get<std::string>()] = pose_from_json(v.at("gt"));
    return out;
}

json step_record_json(const StepRecord& r) {
    json j;
    j["step"] = r.step;
    j["level"] = r.level;
    j["l1"] = r.loss.l1;
    j["ssim_term"] = r.loss.ssim_term;
    j["vol"] = r.loss.vol;
    j["total"] = r.loss.total;
    if (std::isfinite(r.pose_rot_err_deg)) {
        j["pose_rot_err_deg"] = r.pose_rot_err_deg;
        j["pose_trans_err"] = r.pose_trans_err;
    }
    return j;
}

// ---------------------------------------------------------------------------

int cmd_synth(const RunConfig& cfg, const fs::path& out_dir) {
    auto [gt, noisy] = generate_synthetic_scene(cfg.synth_spec());
    apply_split(gt, cfg.test_every);
    apply_split(noisy, cfg.test_every);

    fs::create_directories(out_dir / "images");
    for (size_t i = 0; i < gt.cameras.size(); ++i)
        write_png(gt.images[i], (out_dir / "images" / gt.cameras[i].name).string());
    write_colmap_text(gt, out_dir / "sparse");
    write_colmap_text(noisy, out_dir / "sparse_noisy");

    json manifest;
    manifest["seed"] = cfg.seed;
    manifest["extent"] = cfg.scene_extent;
    manifest["n_cameras"] = static_cast<int>(gt.cameras.size());
    manifest["n_points"] = static_cast<int>(gt.points.size());
    json views = json::array();
    for (size_t i = 0; i < gt.cameras.size(); ++i) {
        json v;
        v["name"] = gt.cameras[i].name;
        v["image_id"] = gt.cameras[i].image_id;
        v["test"] = static_cast<bool>(gt.is_test[i]);
        v["gt"] = pose_to_json(gt.cameras[i].pose);
        v["noisy"] = pose_to_json(noisy.cameras[i].pose);
        v["rot_err_deg"] =
            quat_angle_deg(gt.cameras[i].pose.rotation, noisy.cameras[i].pose.rotation);
        v["trans_err"] =
            (gt.cameras[i].pose.translation - noisy.cameras[i].pose.translation).norm();
        views.push_back(v);
    }
    manifest["views"] = views;
    write_json_file(manifest, out_dir / "manifest.json");
    save_config(cfg, (out_dir / "config.json").string());
    write_run_meta(out_dir, "synth");
    std::cout << "scene written to " << out_dir.string() << " (" << gt.cameras.size()
              << " views, " << gt.points.size() << " points)\n";
    return 0;
}

int cmd_train(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& out_dir,
              const std::string& poses) {
    const std::string sparse = pick_sparse(scene_dir, poses);
    SceneBundle scene = load_scene(scene_dir, sparse, cfg.test_every);

    TrainState st;
    st.model = Model::build(scene, cfg.model_config(), cfg.seed);

    // Reference poses for the log, aligned with the model's view order.
    std::vector<CameraPose> gt_poses;
    const auto gt_map = load_gt_poses(scene_dir);
    if (!gt_map.empty()) {
        for (const TrainView& v : st.model->views) gt_poses.push_back(gt_map.at(v.name));
    }

    fs::create_directories(out_dir);
    std::ofstream log(out_dir / "train_log.jsonl");
    const OptimSettings opt = cfg.optim_settings();
    try {
        joint_optimize(st, opt, gt_poses.empty() ? nullptr : &gt_poses,
                       [&](const StepRecord& r) { log << step_record_json(r).dump() << "\n"; });
    } catch (const OptimizeDiverged& e) {
        std::cerr << e.what() << "\n";
        return 2;
    }

    save_state(st, (out_dir / "checkpoint.hbgs").string());
    save_config(cfg, (out_dir / "config.json").string());

    fs::create_directories(out_dir / "renders");
    Model& m = *st.model;
    const auto fro = m.decode_frozen();
    for (int i = 0; i < m.view_count(); ++i) {
        const RenderOutput ro =
            render_gaussians(fro.decoded, m.views[i].intr, m.view_pose(i), m.cfg.raster);
        write_png(ro.image, (out_dir / "renders" / ("train_" + m.views[i].name)).string());
    }
    write_run_meta(out_dir, "train");
    std::cout << "trained " << opt.total_steps << " steps; checkpoint at "
              << (out_dir / "checkpoint.hbgs").string() << "\n";
    return 0;
}

struct PerturbSpec {
    double rot_deg = 0.0;
    double trans_frac = 0.0;  // of scene extent
    uint64_t seed = 0;
};

int cmd_register(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& checkpoint,
                 const fs::path& out_dir, const std::string& poses, const PerturbSpec& perturb,
                 const std::string& init_poses_file) {
    const std::string sparse = pick_sparse(scene_dir, poses);
    SceneBundle scene = load_scene(scene_dir, sparse, cfg.test_every);
    TrainState st = load_state(checkpoint.string(), scene);
    st.model->params.freeze_group("model");
    st.model->params.freeze_group("poses");

    const auto gt_map = load_gt_poses(scene_dir);
    const double extent = st.model->extent;

    json init_override;
    if (!init_poses_file.empty()) init_override = read_json_file(init_poses_file);

    Rng perturb_rng(perturb.seed);
    const std::string hash_before = st.model->model_hash();

    const OptimSettings opt = cfg.optim_settings();
    json views = json::array();
    double rot_before = 0, rot_after = 0, trans_before = 0, trans_after = 0;
    double psnr_before = 0, psnr_after = 0;
    int n_gt = 0, n_eval = 0;
    bool any_diverged = false;

    const auto test_idx = scene.test_indices();
    if (test_idx.empty()) throw std::runtime_error("scene has no test views");
    const auto fro = st.model->decode_frozen();

    for (int ti : test_idx) {
        const SceneCamera& cam = scene.cameras[ti];
        CameraPose init = cam.pose;
        if (!init_override.is_null() && init_override.contains(cam.name))
            init = pose_from_json(init_override.at(cam.name));
        if (perturb.rot_deg > 0 || perturb.trans_frac > 0) {
            // Exact-magnitude perturbation about a random axis/direction.
            const Vec3 axis = perturb_rng.unit_vector();
            const Vec3 tdir = perturb_rng.unit_vector();
            init.rotation =
                quat_multiply(quat_from_axis_angle(axis, deg_to_rad(perturb.rot_deg)),
                              init.rotation)
                    .normalized();
            init.translation += perturb.trans_frac * extent * tdir;
        }

        const RegisterResult res = register_test_pose(st, scene.images[ti], cam.intr, init,
                                                      cfg.register_iterations, opt);
        any_diverged |= res.diverged;

        json v;
        v["name"] = cam.name;
        v["iterations"] = res.iterations;
        v["diverged"] = res.diverged;
        v["loss_before"] = res.loss_before;
        v["loss_after"] = res.loss_after;
        v["init"] = pose_to_json(init);
        v["pose"] = pose_to_json(res.pose);

        if (scene.images[ti].size() > 0) {
            const RenderOutput before =
                render_gaussians(fro.decoded, cam.intr, init, st.model->cfg.raster);
            const RenderOutput after =
                render_gaussians(fro.decoded, cam.intr, res.pose, st.model->cfg.raster);
            const double pb = psnr(before.image, scene.images[ti]);
            const double pa = psnr(after.image, scene.images[ti]);
            v["psnr_before"] = pb;
            v["psnr_after"] = pa;
            psnr_before += pb;
            psnr_after += pa;
            ++n_eval;
        }
        if (gt_map.count(cam.name)) {
            const CameraPose& gt = gt_map.at(cam.name);
            const double rb = quat_angle_deg(init.rotation, gt.rotation);
            const double ra = quat_angle_deg(res.pose.rotation, gt.rotation);
            const double tb = (init.translation - gt.translation).norm();
            const double ta = (res.pose.translation - gt.translation).norm();
            v["rot_err_before_deg"] = rb;
            v["rot_err_after_deg"] = ra;
            v["trans_err_before"] = tb;
            v["trans_err_after"] = ta;
            rot_before += rb;
            rot_after += ra;
            trans_before += tb;
            trans_after += ta;
            ++n_gt;
        }
        views.push_back(v);
    }

    const std::string hash_after = st.model->model_hash();

    json out;
    out["iterations"] = cfg.register_iterations;
    out["model_hash_before"] = hash_before;
    out["model_hash_after"] = hash_after;
    out["extent"] = extent;
    out["views"] = views;
    if (n_gt > 0) {
        out["mean_rot_err_before_deg"] = rot_before / n_gt;
        out["mean_rot_err_after_deg"] = rot_after / n_gt;
        out["mean_trans_err_before"] = trans_before / n_gt;
        out["mean_trans_err_after"] = trans_after / n_gt;
    }
    if (n_eval > 0) {
        out["mean_psnr_before"] = psnr_before / n_eval;
        out["mean_psnr_after"] = psnr_after / n_eval;
    }
    fs::create_directories(out_dir);
    write_json_file(out, out_dir / "register.json");
    save_config(cfg, (out_dir / "config.json").string());
    write_run_meta(out_dir, "register");
    std::cout << "registered " << test_idx.size() << " test views";
    if (n_gt > 0)
        std::cout << "; mean rot err " << rot_before / n_gt << " -> " << rot_after / n_gt
                  << " deg";
    std::cout << "\n";
    return any_diverged ? 2 : 0;
}

int cmd_render(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& checkpoint,
               const fs::path& out_dir, const std::string& poses, const std::string& views_sel) {
    const std::string sparse = pick_sparse(scene_dir, poses);
    SceneBundle scene = load_scene(scene_dir, sparse, cfg.test_every);
    TrainState st = load_state(checkpoint.string(), scene);
    const auto fro = st.model->decode_frozen();

    fs::create_directories(out_dir);
    int n = 0;
    for (int i = 0; i < static_cast<int>(scene.cameras.size()); ++i) {
        if (views_sel == "test" && !scene.is_test[i]) continue;
        if (views_sel == "train" && scene.is_test[i]) continue;
        const RenderOutput ro = render_gaussians(fro.decoded, scene.cameras[i].intr,
                                                 scene.cameras[i].pose, st.model->cfg.raster);
        write_png(ro.image, (out_dir / scene.cameras[i].name).string());
        ++n;
    }
    save_config(cfg, (out_dir / "config.json").string());
    write_run_meta(out_dir, "render");
    std::cout << "rendered " << n << " views to " << out_dir.string() << "\n";
    return 0;
}

json eval_views(Model& model, const SceneBundle& scene, const std::vector<int>& indices,
                const std::map<std::string, CameraPose>* pose_override) {
    const auto fro = model.decode_frozen();
    MetricReport report;
    json per_view = json::array();
    for (int i : indices) {
        const SceneCamera& cam = scene.cameras[i];
        CameraPose pose = cam.pose;
        if (pose_override && pose_override->count(cam.name)) pose = pose_override->at(cam.name);
        const RenderOutput ro = render_gaussians(fro.decoded, cam.intr, pose, model.cfg.raster);
        const double p = psnr(ro.image, scene.images[i]);
        const double s = ssim(ro.image, scene.images[i]);
        report.add(p, s);
        json v;
        v["name"] = cam.name;
        v["psnr"] = std::isinf(p) ? json("infinite") : json(p);
        v["ssim"] = s;
        v["lpips"] = "n/a";
        per_view.push_back(v);
    }
    json out;
    out["views"] = per_view;
    out["mean_psnr"] = report.mean_psnr;
    out["mean_ssim"] = report.mean_ssim;
    out["lpips"] = "n/a";
    return out;
}

// Three-row ablation: anchors only, + image features, + bundle adjusting.
// Rows 1-2 train with poses frozen at their (noisy) initialization and are
// evaluated at the noisy test poses; row 3 optimizes training poses and
// registers each test pose before evaluation. Averaged over training seeds.
json run_ablation(const RunConfig& base_cfg, const fs::path& scene_dir, int n_seeds) {
    struct Row {
        const char* name;
        bool image_features;
        bool bundle_adjust;
    };
    const Row rows[3] = {{"baseline", false, false},
                         {"baseline+image_features", true, false},
                         {"baseline+image_features+bundle_adjusting", true, true}};

    const std::string sparse = pick_sparse(scene_dir, "noisy");
    json result = json::array();
    for (const Row& row : rows) {
        double psnr_acc = 0.0, ssim_acc = 0.0;
        json seed_results = json::array();
        for (int s = 0; s < n_seeds; ++s) {
            RunConfig cfg = base_cfg;
            cfg.seed = base_cfg.seed + static_cast<uint64_t>(s);
            cfg.use_image_features = row.image_features;
            cfg.optimize_poses = row.bundle_adjust;

            SceneBundle scene = load_scene(scene_dir, sparse, cfg.test_every);
            TrainState st;
            st.model = Model::build(scene, cfg.model_config(), cfg.seed);
            joint_optimize(st, cfg.optim_settings());

            std::map<std::string, CameraPose> registered;
            if (row.bundle_adjust) {
                const OptimSettings opt = cfg.optim_settings();
                for (int ti : scene.test_indices()) {
                    const RegisterResult rr =
                        register_test_pose(st, scene.images[ti], scene.cameras[ti].intr,
                                           scene.cameras[ti].pose, cfg.register_iterations, opt);
                    registered[scene.cameras[ti].name] = rr.pose;
                }
            }
            const json ev = eval_views(*st.model, scene, scene.test_indices(),
                                       row.bundle_adjust ? &registered : nullptr);
            psnr_acc += ev.at("mean_psnr").get<double>();
            ssim_acc += ev.at("mean_ssim").get<double>();
            seed_results.push_back({{"seed", cfg.seed},
                                    {"psnr", ev.at("mean_psnr")},
                                    {"ssim", ev.at("mean_ssim")}});
        }
        json r;
        r["name"] = row.name;
        r["image_features"] = row.image_features;
        r["bundle_adjusting"] = row.bundle_adjust;
        r["psnr"] = psnr_acc / n_seeds;
        r["ssim"] = ssim_acc / n_seeds;
        r["lpips"] = "n/a";
        r["seeds"] = seed_results;
        result.push_back(r);
    }
    return result;
}

int cmd_eval(const RunConfig& cfg, const fs::path& scene_dir, const fs::path& checkpoint,
             const fs::path& out_dir, const std::string& poses, const std::string& views_sel,
             const std::string& registered_file, bool ablation, int n_seeds) {
    json out;
    if (ablation) {
        out["ablation"] = run_ablation(cfg, scene_dir, n_seeds);
    } else {
        const std::string sparse = pick_sparse(scene_dir, poses);
        SceneBundle scene = load_scene(scene_dir, sparse, cfg.test_every);
        TrainState st = load_state(checkpoint.string(), scene);
        std::map<std::string, CameraPose> override;
        if (!registered_file.empty()) {
            const json reg = read_json_file(registered_file);
            for (const auto& v : reg.at("views"))
                override[v.at("name").get<std::string>()] = pose_from_json(v.at("pose"));
        }
        std::vector<int> indices;
        if (views_sel == "test") indices = scene.test_indices();
        else if (views_sel == "train") indices = scene.train_indices();
        else
            for (int i = 0; i < static_cast<int>(scene.cameras.size()); ++i) indices.push_back(i);
        out = eval_views(*st.model, scene, indices, override.empty() ? nullptr : &override);
    }
    fs::create_directories(out_dir);
    write_json_file(out, out_dir / "eval.json");
    save_config(cfg, (out_dir / "config.json").string());
    write_run_meta(out_dir, "eval");
    std::cout << out.dump(2) << "\n";
    return 0;
}

int cmd_verify(const std::string& suite, uint64_t seed) {
    const auto items = run_verify_suite(suite, seed);
    bool all_pass = true;
    for (const CheckItem& it : items) {
        std::cout << (it.pass ? "PASS " : "FAIL ") << it.name << " (value " << it.value
                  << ", threshold " << it.threshold << ")\n";
        all_pass &= it.pass;
    }
    std::cout << (all_pass ? "verify OK" : "verify FAILED") << "\n";
    return all_pass ? 0 : 3;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"hybrid bundle-adjusting 3D Gaussians"};
    app.require_subcommand(1);

    std::string config_path;
    std::vector<std::string> overrides;
    app.add_option("--config", config_path, "JSON config file")->expected(1);
    app.add_option("--set", overrides, "override a config key, e.g. --set train_steps=500");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic scene with ground truth");
    std::string synth_out;
    synth->add_option("--out", synth_out, "output scene directory")->required();
    double rot_noise = -1, trans_noise = -1, extent = -1;
    int n_cameras = -1, n_points = -1, img_size = -1;
    uint64_t seed_flag = 0;
    bool seed_set = false;
    synth->add_option("--seed", seed_flag)->each([&](const std::string&) { seed_set = true; });
    synth->add_option("--cameras", n_cameras);
    synth->add_option("--points", n_points);
    synth->add_option("--size", img_size, "image side in pixels");
    synth->add_option("--extent", extent, "scene box side in world units");
    synth->add_option("--rot-noise", rot_noise, "max pose rotation noise, degrees");
    synth->add_option("--trans-noise", trans_noise, "max pose translation noise, fraction of extent");

    // train
    auto* train = app.add_subcommand("train", "joint optimization on a scene");
    std::string train_scene, train_out, train_poses = "auto";
    int steps_flag = -1;
    bool freeze_poses = false, no_image_features = false;
    train->add_option("--scene", train_scene)->required();
    train->add_option("--out", train_out)->required();
    train->add_option("--poses", train_poses, "gt | noisy | auto");
    train->add_option("--steps", steps_flag);
    train->add_option("--seed", seed_flag)->each([&](const std::string&) { seed_set = true; });
    train->add_flag("--freeze-poses", freeze_poses, "keep training poses fixed");
    train->add_flag("--no-image-features", no_image_features, "anchors-only model");

    // register
    auto* reg = app.add_subcommand("register", "frozen-model test-pose registration");
    std::string reg_scene, reg_ckpt, reg_out, reg_poses = "gt", init_poses_file;
    PerturbSpec perturb;
    int iterations_flag = -1;
    reg->add_option("--scene", reg_scene)->required();
    reg->add_option("--checkpoint", reg_ckpt)->required();
    reg->add_option("--out", reg_out)->required();
    reg->add_option("--poses", reg_poses, "initial test poses: gt | noisy");
    reg->add_option("--init-poses", init_poses_file, "JSON with per-view init poses");
    reg->add_option("--perturb-rot", perturb.rot_deg, "exact rotation perturbation, degrees");
    reg->add_option("--perturb-trans", perturb.trans_frac,
                    "exact translation perturbation, fraction of extent");
    reg->add_option("--perturb-seed", perturb.seed);
    reg->add_option("--iterations", iterations_flag);

    // render
    auto* render = app.add_subcommand("render", "render views from a checkpoint");
    std::string render_scene, render_ckpt, render_out, render_poses = "gt",
                render_views = "all";
    render->add_option("--scene", render_scene)->required();
    render->add_option("--checkpoint", render_ckpt)->required();
    render->add_option("--out", render_out)->required();
    render->add_option("--poses", render_poses, "gt | noisy");
    render->add_option("--views", render_views, "all | train | test");

    // eval
    auto* eval = app.add_subcommand("eval", "PSNR/SSIM evaluation");
    std::string eval_scene, eval_ckpt, eval_out, eval_poses = "gt", eval_views_sel = "test",
                eval_registered;
    bool ablation = false;
    int eval_seeds = 3;
    eval->add_option("--scene", eval_scene)->required();
    eval->add_option("--checkpoint", eval_ckpt);
    eval->add_option("--out", eval_out)->required();
    eval->add_option("--poses", eval_poses, "gt | noisy");
    eval->add_option("--views", eval_views_sel, "test | train | all");
    eval->add_option("--registered", eval_registered, "register.json with optimized poses");
    eval->add_flag("--ablation", ablation, "run the three-row ablation (trains internally)");
    eval->add_option("--seeds", eval_seeds, "training seeds averaged in the ablation");

    // verify
    auto* verify = app.add_subcommand("verify", "run verification suites");
    std::string suite = "all";
    uint64_t verify_seed = 1234;
    verify->add_option("suite", suite, "gradients | matching | metrics | all");
    verify->add_option("--seed", verify_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        RunConfig cfg = resolve_config(config_path, overrides);
        if (seed_set) cfg.seed = seed_flag;

        if (synth->parsed()) {
            if (n_cameras > 0) cfg.synth_cameras = n_cameras;
            if (n_points > 0) cfg.synth_points = n_points;
            if (img_size > 0) cfg.image_size = img_size;
            if (extent > 0) cfg.scene_extent = extent;
            if (rot_noise >= 0) cfg.rot_noise_deg = rot_noise;
            if (trans_noise >= 0) cfg.trans_noise = trans_noise;
            return cmd_synth(cfg, synth_out);
        }
        if (train->parsed()) {
            if (steps_flag > 0) cfg.train_steps = steps_flag;
            if (freeze_poses) cfg.optimize_poses = false;
            if (no_image_features) cfg.use_image_features = false;
            return cmd_train(cfg, train_scene, train_out, train_poses);
        }
        if (reg->parsed()) {
            if (iterations_flag > 0) cfg.register_iterations = iterations_flag;
            return cmd_register(cfg, reg_scene, reg_ckpt, reg_out, reg_poses, perturb,
                                init_poses_file);
        }
        if (render->parsed())
            return cmd_render(cfg, render_scene, render_ckpt, render_out, render_poses,
                              render_views);
        if (eval->parsed())
            return cmd_eval(cfg, eval_scene, eval_ckpt, eval_out, eval_poses, eval_views_sel,
                            eval_registered, ablation, eval_seeds);
        if (verify->parsed()) return cmd_verify(suite, verify_seed);
    } catch (const OptimizeDiverged& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
