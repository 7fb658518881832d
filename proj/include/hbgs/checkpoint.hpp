#pragma once

// Versioned binary checkpoint: magic "HBGS", u32 version, u64 step, a JSON
// metadata block, then named little-endian f64 tensors (parameter values,
// both Adam moments, and non-learnable buffers). Round-trips are bit-exact.

#include "hbgs/model.hpp"
#include "hbgs/optimizer.hpp"

#include <json.hpp>

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

namespace hbgs {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format is little-endian");

inline constexpr char kCheckpointMagic[4] = {'H', 'B', 'G', 'S'};
inline constexpr uint32_t kCheckpointVersion = 1;

namespace detail {

enum class TensorKind : uint8_t { Value = 0, AdamM = 1, AdamV = 2, Buffer = 3 };

inline void write_bytes(std::ostream& out, const void* p, size_t n) {
    out.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <typename T>
void write_pod(std::ostream& out, T v) {
    write_bytes(out, &v, sizeof(T));
}

inline void read_bytes(std::istream& in, void* p, size_t n) {
    in.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<size_t>(in.gcount()) != n) throw std::runtime_error("corrupt checkpoint");
}

template <typename T>
T read_pod(std::istream& in) {
    T v;
    read_bytes(in, &v, sizeof(T));
    return v;
}

inline void write_tensor(std::ostream& out, const std::string& name, TensorKind kind,
                         const double* data, uint32_t rows, uint32_t cols) {
    write_pod<uint32_t>(out, static_cast<uint32_t>(name.size()));
    write_bytes(out, name.data(), name.size());
    write_pod<uint8_t>(out, static_cast<uint8_t>(kind));
    write_pod<uint32_t>(out, rows);
    write_pod<uint32_t>(out, cols);
    write_bytes(out, data, static_cast<size_t>(rows) * cols * sizeof(double));
}

struct TensorHeader {
    std::string name;
    TensorKind kind;
    uint32_t rows, cols;
};

inline TensorHeader read_tensor_header(std::istream& in) {
    TensorHeader h;
    const uint32_t name_len = read_pod<uint32_t>(in);
    if (name_len > 4096) throw std::runtime_error("corrupt checkpoint");
    h.name.resize(name_len);
    read_bytes(in, h.name.data(), name_len);
    h.kind = static_cast<TensorKind>(read_pod<uint8_t>(in));
    h.rows = read_pod<uint32_t>(in);
    h.cols = read_pod<uint32_t>(in);
    return h;
}

}  // namespace detail

inline void save_state(const TrainState& st, const std::string& path) {
    const Model& m = *st.model;
    std::ofstream out(path, std::ios::binary);
    if (!out.is_open()) throw std::runtime_error("cannot write checkpoint " + path);

    detail::write_bytes(out, kCheckpointMagic, 4);
    detail::write_pod<uint32_t>(out, kCheckpointVersion);
    detail::write_pod<uint64_t>(out, st.step);

    nlohmann::json meta;
    meta["feature_dim"] = m.cfg.feature_dim;
    meta["color_feature_dim"] = m.cfg.color_feature_dim;
    meta["dir_feature_dim"] = m.cfg.dir_feature_dim;
    meta["hidden"] = m.cfg.hidden;
    meta["k"] = m.cfg.k;
    meta["alpha_cull"] = m.cfg.alpha_cull;
    meta["voxel_scale"] = m.cfg.voxel_scale;
    meta["offset_scale"] = m.cfg.offset_scale;
    meta["use_image_features"] = m.cfg.use_image_features;
    meta["ray_encoding"] = m.cfg.ray_encoding;
    meta["rematch_rot_deg"] = m.cfg.rematch_rot_deg;
    meta["rematch_trans_frac"] = m.cfg.rematch_trans_frac;
    meta["anchor_disable_steps"] = m.cfg.anchor_disable_steps;
    meta["cov_floor"] = m.cfg.raster.cov_floor;
    meta["background"] = {m.cfg.raster.background.x(), m.cfg.raster.background.y(),
                          m.cfg.raster.background.z()};
    meta["extent"] = m.extent;
    meta["n_anchors"] = m.anchors.count();
    nlohmann::json views = nlohmann::json::array();
    for (const TrainView& v : m.views) {
        views.push_back({{"name", v.name},
                         {"scene_index", v.scene_index},
                         {"fx", v.intr.fx},
                         {"fy", v.intr.fy},
                         {"cx", v.intr.cx},
                         {"cy", v.intr.cy},
                         {"width", v.intr.width},
                         {"height", v.intr.height}});
    }
    meta["views"] = views;
    meta["anchor_enabled"] = m.anchor_enabled;
    meta["anchor_low_streak"] = m.anchor_low_streak;
    const std::string meta_str = meta.dump();
    detail::write_pod<uint32_t>(out, static_cast<uint32_t>(meta_str.size()));
    detail::write_bytes(out, meta_str.data(), meta_str.size());

    uint32_t n_tensors = static_cast<uint32_t>(m.params.entries().size()) * 3 + 1;
    detail::write_pod<uint32_t>(out, n_tensors);
    for (const ParamEntry& e : m.params.entries()) {
        detail::write_tensor(out, e.name, detail::TensorKind::Value, e.value,
                             static_cast<uint32_t>(e.rows), static_cast<uint32_t>(e.cols));
        detail::write_tensor(out, e.name, detail::TensorKind::AdamM, e.adam_m.data(),
                             static_cast<uint32_t>(e.rows), static_cast<uint32_t>(e.cols));
        detail::write_tensor(out, e.name, detail::TensorKind::AdamV, e.adam_v.data(),
                             static_cast<uint32_t>(e.rows), static_cast<uint32_t>(e.cols));
    }
    std::vector<double> pos(static_cast<size_t>(m.anchors.count()) * 3);
    for (int a = 0; a < m.anchors.count(); ++a)
        for (int d = 0; d < 3; ++d) pos[static_cast<size_t>(a) * 3 + d] = m.anchors.positions[a][d];
    detail::write_tensor(out, "anchor.positions", detail::TensorKind::Buffer, pos.data(), 3,
                         static_cast<uint32_t>(m.anchors.count()));
    if (!out.good()) throw std::runtime_error("cannot write checkpoint " + path);
}

// Restores a training state. Training-view rasters are not stored in the
// checkpoint; they are reattached by name from the given scene.
inline TrainState load_state(const std::string& path, const SceneBundle& scene) {
    std::ifstream in(path, std::ios::binary);
    if (!in.is_open()) throw std::runtime_error("cannot open checkpoint " + path);

    char magic[4];
    detail::read_bytes(in, magic, 4);
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw std::runtime_error("corrupt checkpoint");
    const uint32_t version = detail::read_pod<uint32_t>(in);
    if (version != kCheckpointVersion) throw std::runtime_error("incompatible checkpoint version");

    TrainState st;
    st.step = detail::read_pod<uint64_t>(in);

    const uint32_t meta_len = detail::read_pod<uint32_t>(in);
    std::string meta_str(meta_len, '\0');
    detail::read_bytes(in, meta_str.data(), meta_len);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(meta_str);
    } catch (const nlohmann::json::exception&) {
        throw std::runtime_error("corrupt checkpoint");
    }

    auto model = std::make_unique<Model>();
    ModelConfig cfg;
    cfg.feature_dim = meta.at("feature_dim").get<int>();
    cfg.color_feature_dim = meta.at("color_feature_dim").get<int>();
    cfg.dir_feature_dim = meta.at("dir_feature_dim").get<int>();
    cfg.hidden = meta.at("hidden").get<int>();
    cfg.k = meta.at("k").get<int>();
    cfg.alpha_cull = meta.at("alpha_cull").get<double>();
    cfg.voxel_scale = meta.at("voxel_scale").get<double>();
    cfg.offset_scale = meta.at("offset_scale").get<double>();
    cfg.use_image_features = meta.at("use_image_features").get<bool>();
    cfg.ray_encoding = meta.at("ray_encoding").get<bool>();
    cfg.rematch_rot_deg = meta.at("rematch_rot_deg").get<double>();
    cfg.rematch_trans_frac = meta.at("rematch_trans_frac").get<double>();
    cfg.anchor_disable_steps = meta.at("anchor_disable_steps").get<int>();
    cfg.raster.cov_floor = meta.at("cov_floor").get<double>();
    const auto bg = meta.at("background");
    cfg.raster.background = Vec3(bg[0].get<double>(), bg[1].get<double>(), bg[2].get<double>());
    model->cfg = cfg;
    model->extent = meta.at("extent").get<double>();
    model->feat.ray_encoding = cfg.ray_encoding;

    const int n_anchors = meta.at("n_anchors").get<int>();
    Rng rng(0);  // shapes only; every parameter is overwritten below
    model->anchors = init_anchor_features(std::vector<Vec3>(n_anchors, Vec3::Zero()),
                                          cfg.feature_dim, cfg.voxel_scale, rng);
    model->feat.init(cfg.hidden, cfg.color_feature_dim, cfg.dir_feature_dim, cfg.feature_dim, rng);
    model->fusion.init(cfg.feature_dim, cfg.feature_dim, cfg.feature_dim, rng);
    model->bank.init(cfg.feature_dim, cfg.hidden, cfg.k, cfg.offset_scale, cfg.alpha_cull, rng);

    for (const auto& jv : meta.at("views")) {
        TrainView v;
        v.name = jv.at("name").get<std::string>();
        v.scene_index = jv.at("scene_index").get<int>();
        v.intr.fx = jv.at("fx").get<double>();
        v.intr.fy = jv.at("fy").get<double>();
        v.intr.cx = jv.at("cx").get<double>();
        v.intr.cy = jv.at("cy").get<double>();
        v.intr.width = jv.at("width").get<int>();
        v.intr.height = jv.at("height").get<int>();
        for (size_t i = 0; i < scene.cameras.size(); ++i)
            if (scene.cameras[i].name == v.name && scene.images[i].size() > 0)
                v.image = scene.images[i];
        if (v.image.size() == 0)
            throw std::runtime_error("scene is missing training image " + v.name);
        model->views.push_back(std::move(v));
    }
    model->poses.resize(7, model->views.size());
    model->poses.setZero();
    model->pose_grads = MatrixXd::Zero(7, model->views.size());
    model->anchor_enabled = meta.at("anchor_enabled").get<std::vector<char>>();
    model->anchor_low_streak = meta.at("anchor_low_streak").get<std::vector<int>>();
    model->register_all();

    const uint32_t n_tensors = detail::read_pod<uint32_t>(in);
    for (uint32_t i = 0; i < n_tensors; ++i) {
        const auto h = detail::read_tensor_header(in);
        const size_t n = static_cast<size_t>(h.rows) * h.cols;
        std::vector<double> data(n);
        detail::read_bytes(in, data.data(), n * sizeof(double));
        if (h.kind == detail::TensorKind::Buffer) {
            if (h.name == "anchor.positions") {
                if (h.cols != static_cast<uint32_t>(n_anchors))
                    throw std::runtime_error("corrupt checkpoint");
                for (int a = 0; a < n_anchors; ++a)
                    model->anchors.positions[a] =
                        Vec3(data[3 * a], data[3 * a + 1], data[3 * a + 2]);
            }
            continue;
        }
        ParamEntry& e = model->params.find(h.name);
        if (e.rows != h.rows || e.cols != h.cols) throw std::runtime_error("corrupt checkpoint");
        double* dst = h.kind == detail::TensorKind::Value ? e.value
                      : h.kind == detail::TensorKind::AdamM ? e.adam_m.data()
                                                            : e.adam_v.data();
        std::memcpy(dst, data.data(), n * sizeof(double));
    }

    st.model = std::move(model);
    return st;
}

}  // namespace hbgs
