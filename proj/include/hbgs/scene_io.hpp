#pragma once

// Scene ingestion and synthesis. COLMAP text reconstructions are parsed into
// camera-to-world poses (COLMAP stores world-to-camera); synthetic scenes with
// exact ground truth are generated for verification. The synthetic reference
// images come from a fixed-size isotropic blob splatter, deliberately a
// different algorithm from the learned renderer.

#include "hbgs/geometry.hpp"
#include "hbgs/image.hpp"
#include "hbgs/random.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

namespace hbgs {

struct SceneCamera {
    Intrinsics intr;
    CameraPose pose;  // camera-to-world
    int image_id = 0;
    std::string name;
};

struct SceneBundle {
    std::vector<SceneCamera> cameras;
    std::vector<Image> images;  // aligned with cameras; may be empty rasters
    std::vector<Vec3> points;
    std::vector<char> is_test;  // split flag aligned with cameras

    std::vector<int> train_indices() const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(cameras.size()); ++i)
            if (!is_test[i]) out.push_back(i);
        return out;
    }
    std::vector<int> test_indices() const {
        std::vector<int> out;
        for (int i = 0; i < static_cast<int>(cameras.size()); ++i)
            if (is_test[i]) out.push_back(i);
        return out;
    }

    // Largest side of the point-cloud bounding box.
    double extent() const {
        if (points.empty()) return 1.0;
        Vec3 lo = points[0], hi = points[0];
        for (const Vec3& p : points) {
            lo = lo.cwiseMin(p);
            hi = hi.cwiseMax(p);
        }
        return std::max({hi.x() - lo.x(), hi.y() - lo.y(), hi.z() - lo.z(), 1e-9});
    }
};

// Every n-th image by position goes to the test split; n <= 0 keeps
// everything in train.
inline void apply_split(SceneBundle& bundle, int test_every) {
    bundle.is_test.assign(bundle.cameras.size(), 0);
    if (test_every <= 0) return;
    for (size_t i = 0; i < bundle.cameras.size(); ++i)
        if (i % static_cast<size_t>(test_every) == 0) bundle.is_test[i] = 1;
}

namespace detail {

struct ColmapLineReader {
    std::ifstream in;
    std::string filename;
    int line_no = 0;

    bool next_data_line(std::string& out) {
        std::string line;
        while (std::getline(in, line)) {
            ++line_no;
            size_t first = line.find_first_not_of(" \t\r");
            if (first == std::string::npos) continue;
            if (line[first] == '#') continue;
            out = line;
            return true;
        }
        return false;
    }

    // Raw line including blanks; used for the POINTS2D lines.
    bool next_raw_line(std::string& out) {
        if (!std::getline(in, out)) return false;
        ++line_no;
        return true;
    }

    [[noreturn]] void fail() const {
        throw std::runtime_error("malformed colmap line " + filename + ":" +
                                 std::to_string(line_no));
    }
};

inline ColmapLineReader open_colmap_file(const std::filesystem::path& dir, const std::string& name) {
    ColmapLineReader r;
    r.filename = name;
    r.in.open(dir / name);
    if (!r.in.is_open()) throw std::runtime_error("missing colmap file " + name);
    return r;
}

inline std::string fmt_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

// Parses cameras.txt / images.txt / points3D.txt. Only PINHOLE and
// SIMPLE_PINHOLE models are supported. Image rasters are left empty; use
// load_scene to attach them.
inline SceneBundle parse_colmap_text(const std::filesystem::path& dir) {
    SceneBundle bundle;

    struct CamEntry {
        Intrinsics intr;
    };
    std::vector<std::pair<int, CamEntry>> cams;
    {
        auto r = detail::open_colmap_file(dir, "cameras.txt");
        std::string line;
        while (r.next_data_line(line)) {
            std::istringstream iss(line);
            int cam_id = 0, w = 0, h = 0;
            std::string model;
            if (!(iss >> cam_id >> model >> w >> h)) r.fail();
            CamEntry e;
            e.intr.width = w;
            e.intr.height = h;
            if (model == "SIMPLE_PINHOLE") {
                double f, cx, cy;
                if (!(iss >> f >> cx >> cy)) r.fail();
                e.intr.fx = e.intr.fy = f;
                e.intr.cx = cx;
                e.intr.cy = cy;
            } else if (model == "PINHOLE") {
                double fx, fy, cx, cy;
                if (!(iss >> fx >> fy >> cx >> cy)) r.fail();
                e.intr.fx = fx;
                e.intr.fy = fy;
                e.intr.cx = cx;
                e.intr.cy = cy;
            } else {
                throw std::runtime_error("unsupported camera model " + model);
            }
            cams.emplace_back(cam_id, e);
        }
    }
    auto find_cam = [&](int id) -> const CamEntry* {
        for (const auto& [cid, e] : cams)
            if (cid == id) return &e;
        return nullptr;
    };

    {
        auto r = detail::open_colmap_file(dir, "images.txt");
        std::string line;
        while (r.next_data_line(line)) {
            std::istringstream iss(line);
            int image_id = 0, cam_id = 0;
            double qw, qx, qy, qz, tx, ty, tz;
            std::string name;
            if (!(iss >> image_id >> qw >> qx >> qy >> qz >> tx >> ty >> tz >> cam_id >> name))
                r.fail();
            const CamEntry* cam = find_cam(cam_id);
            if (!cam) r.fail();
            SceneCamera sc;
            sc.intr = cam->intr;
            sc.image_id = image_id;
            sc.name = name;
            // COLMAP stores world-to-camera: p_cam = R q * p_world + t.
            // Convert to camera-to-world: rotation = conj(q), center = -R^T t.
            const Quaternion q_w2c(qw, qx, qy, qz);
            sc.pose.rotation = q_w2c.conjugate().normalized();
            const Mat3 r_w2c = quat_to_rotmat(q_w2c);
            sc.pose.translation = -(r_w2c.transpose() * Vec3(tx, ty, tz));
            bundle.cameras.push_back(std::move(sc));
            // The POINTS2D line follows, possibly empty.
            std::string pts2d;
            if (!r.next_raw_line(pts2d)) r.fail();
        }
    }
    std::sort(bundle.cameras.begin(), bundle.cameras.end(),
              [](const SceneCamera& a, const SceneCamera& b) { return a.image_id < b.image_id; });

    {
        auto r = detail::open_colmap_file(dir, "points3D.txt");
        std::string line;
        while (r.next_data_line(line)) {
            std::istringstream iss(line);
            long long id = 0;
            double x, y, z;
            if (!(iss >> id >> x >> y >> z)) r.fail();
            bundle.points.emplace_back(x, y, z);
        }
    }

    bundle.images.resize(bundle.cameras.size());
    bundle.is_test.assign(bundle.cameras.size(), 0);
    return bundle;
}

// Writes a bundle back out in COLMAP text form, one PINHOLE camera per image.
inline void write_colmap_text(const SceneBundle& bundle, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "cameras.txt");
        out << "# Camera list: CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]\n";
        for (size_t i = 0; i < bundle.cameras.size(); ++i) {
            const Intrinsics& k = bundle.cameras[i].intr;
            out << (i + 1) << " PINHOLE " << k.width << " " << k.height << " "
                << detail::fmt_double(k.fx) << " " << detail::fmt_double(k.fy) << " "
                << detail::fmt_double(k.cx) << " " << detail::fmt_double(k.cy) << "\n";
        }
    }
    {
        std::ofstream out(dir / "images.txt");
        out << "# Image list: IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME\n";
        for (size_t i = 0; i < bundle.cameras.size(); ++i) {
            const SceneCamera& c = bundle.cameras[i];
            const Quaternion q_w2c = c.pose.rotation.normalized().conjugate();
            const Mat3 r_w2c = quat_to_rotmat(q_w2c);
            const Vec3 t = -(r_w2c * c.pose.translation);
            out << c.image_id << " " << detail::fmt_double(q_w2c.w) << " "
                << detail::fmt_double(q_w2c.x) << " " << detail::fmt_double(q_w2c.y) << " "
                << detail::fmt_double(q_w2c.z) << " " << detail::fmt_double(t.x()) << " "
                << detail::fmt_double(t.y()) << " " << detail::fmt_double(t.z()) << " " << (i + 1)
                << " " << c.name << "\n";
            out << "\n";  // no 2D observations
        }
    }
    {
        std::ofstream out(dir / "points3D.txt");
        out << "# 3D point list: POINT3D_ID X Y Z R G B ERROR TRACK[]\n";
        for (size_t i = 0; i < bundle.points.size(); ++i) {
            const Vec3& p = bundle.points[i];
            out << (i + 1) << " " << detail::fmt_double(p.x()) << " " << detail::fmt_double(p.y())
                << " " << detail::fmt_double(p.z()) << " 128 128 128 0\n";
        }
    }
}

struct SyntheticSceneSpec {
    uint64_t seed = 7;
    int n_points = 500;
    int n_cameras = 12;
    double scene_extent = 1.0;
    double pose_noise_rot_deg = 0.0;
    double pose_noise_trans = 0.0;  // fraction of extent
    int image_width = 64;
    int image_height = 64;
    double fov_deg = 60.0;        // horizontal field of view
    double blob_sigma_px = 1.7;   // reference-renderer blob stddev
    double blob_alpha = 0.85;

    void validate() const {
        if (n_points < 1 || n_cameras < 1 || image_width < 1 || image_height < 1)
            throw std::runtime_error("invalid synthetic scene spec: counts");
        if (scene_extent <= 0 || pose_noise_rot_deg < 0 || pose_noise_trans < 0)
            throw std::runtime_error("invalid synthetic scene spec: magnitudes");
    }
};

namespace detail {

// Right-handed look-at with +z forward and image y growing downward.
inline CameraPose look_at(const Vec3& eye, const Vec3& target, const Vec3& up) {
    const Vec3 zc = (target - eye).normalized();
    Vec3 xc = zc.cross(up);
    if (xc.norm() < 1e-9) xc = Vec3(1, 0, 0);
    xc.normalize();
    const Vec3 yc = zc.cross(xc);
    Mat3 r;
    r.col(0) = xc;
    r.col(1) = yc;
    r.col(2) = zc;
    // Rotation matrix to quaternion (Shepperd's method).
    Quaternion q;
    const double tr = r.trace();
    if (tr > 0) {
        const double s = std::sqrt(tr + 1.0) * 2.0;
        q = Quaternion(0.25 * s, (r(2, 1) - r(1, 2)) / s, (r(0, 2) - r(2, 0)) / s,
                       (r(1, 0) - r(0, 1)) / s);
    } else if (r(0, 0) > r(1, 1) && r(0, 0) > r(2, 2)) {
        const double s = std::sqrt(1.0 + r(0, 0) - r(1, 1) - r(2, 2)) * 2.0;
        q = Quaternion((r(2, 1) - r(1, 2)) / s, 0.25 * s, (r(0, 1) + r(1, 0)) / s,
                       (r(0, 2) + r(2, 0)) / s);
    } else if (r(1, 1) > r(2, 2)) {
        const double s = std::sqrt(1.0 + r(1, 1) - r(0, 0) - r(2, 2)) * 2.0;
        q = Quaternion((r(0, 2) - r(2, 0)) / s, (r(0, 1) + r(1, 0)) / s, 0.25 * s,
                       (r(1, 2) + r(2, 1)) / s);
    } else {
        const double s = std::sqrt(1.0 + r(2, 2) - r(0, 0) - r(1, 1)) * 2.0;
        q = Quaternion((r(1, 0) - r(0, 1)) / s, (r(0, 2) + r(2, 0)) / s, (r(1, 2) + r(2, 1)) / s,
                       0.25 * s);
    }
    CameraPose pose;
    pose.rotation = q.normalized();
    pose.translation = eye;
    return pose;
}

// Reference renderer: every point becomes a fixed-sigma isotropic blob in
// pixel space, composited front to back.
inline Image render_blob_image(const std::vector<Vec3>& points, const std::vector<Vec3>& colors,
                               const Intrinsics& intr, const CameraPose& pose, double sigma_px,
                               double blob_alpha) {
    struct Blob {
        double u, v, depth;
        int point;
    };
    std::vector<Blob> blobs;
    blobs.reserve(points.size());
    for (size_t i = 0; i < points.size(); ++i) {
        const auto pr = project(intr, pose, points[i]);
        if (!pr) continue;
        blobs.push_back({pr->u, pr->v, pr->depth, static_cast<int>(i)});
    }
    std::sort(blobs.begin(), blobs.end(), [](const Blob& a, const Blob& b) {
        if (a.depth != b.depth) return a.depth < b.depth;
        return a.point < b.point;
    });

    Image img(intr.height, intr.width, 3);
    std::vector<double> transmittance(img.pixel_count(), 1.0);
    const double radius = 3.0 * sigma_px;
    for (const Blob& b : blobs) {
        const int x0 = std::max(0, static_cast<int>(std::floor(b.u - radius)));
        const int x1 = std::min(intr.width - 1, static_cast<int>(std::ceil(b.u + radius)));
        const int y0 = std::max(0, static_cast<int>(std::floor(b.v - radius)));
        const int y1 = std::min(intr.height - 1, static_cast<int>(std::ceil(b.v + radius)));
        const Vec3& col = colors[b.point];
        for (int y = y0; y <= y1; ++y)
            for (int x = x0; x <= x1; ++x) {
                double& t = transmittance[static_cast<size_t>(y) * intr.width + x];
                if (t < 1e-4) continue;
                const double du = x - b.u, dv = y - b.v;
                const double w =
                    blob_alpha * std::exp(-(du * du + dv * dv) / (2.0 * sigma_px * sigma_px));
                for (int c = 0; c < 3; ++c) img.at(y, x, c) += t * w * col[c];
                t *= 1.0 - w;
            }
    }
    return img;
}

}  // namespace detail

// Returns (ground truth, noisy-pose copy). The noisy bundle shares images and
// points but perturbs every pose by a random axis-angle rotation of magnitude
// up to pose_noise_rot_deg and a translation up to pose_noise_trans * extent.
// Deterministic in the seed.
inline std::pair<SceneBundle, SceneBundle> generate_synthetic_scene(const SyntheticSceneSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);

    SceneBundle gt;
    std::vector<Vec3> colors;
    gt.points.reserve(spec.n_points);
    colors.reserve(spec.n_points);
    const double half = 0.5 * spec.scene_extent;
    for (int i = 0; i < spec.n_points; ++i) {
        gt.points.emplace_back(rng.uniform(-half, half), rng.uniform(-half, half),
                               rng.uniform(-half, half));
        colors.emplace_back(rng.uniform(0.08, 1.0), rng.uniform(0.08, 1.0),
                            rng.uniform(0.08, 1.0));
    }

    Intrinsics intr;
    intr.width = spec.image_width;
    intr.height = spec.image_height;
    intr.fx = intr.fy =
        0.5 * spec.image_width / std::tan(0.5 * deg_to_rad(spec.fov_deg));
    intr.cx = 0.5 * (spec.image_width - 1);
    intr.cy = 0.5 * (spec.image_height - 1);

    const double radius = 1.45 * spec.scene_extent;
    const double arc_half = deg_to_rad(40.0);
    for (int i = 0; i < spec.n_cameras; ++i) {
        const double frac = spec.n_cameras == 1 ? 0.5 : static_cast<double>(i) / (spec.n_cameras - 1);
        const double theta = -arc_half + 2.0 * arc_half * frac;
        const double hgt = rng.uniform(-0.12, 0.12) * spec.scene_extent;
        const Vec3 eye(radius * std::sin(theta), hgt, -radius * std::cos(theta));
        SceneCamera cam;
        cam.intr = intr;
        cam.pose = detail::look_at(eye, Vec3::Zero(), Vec3(0, 1, 0));
        cam.image_id = i + 1;
        char name[32];
        std::snprintf(name, sizeof(name), "view_%04d.png", i);
        cam.name = name;
        gt.cameras.push_back(std::move(cam));
    }

    for (const SceneCamera& cam : gt.cameras)
        gt.images.push_back(detail::render_blob_image(gt.points, colors, cam.intr, cam.pose,
                                                      spec.blob_sigma_px, spec.blob_alpha));
    apply_split(gt, 8);

    SceneBundle noisy = gt;
    for (SceneCamera& cam : noisy.cameras) {
        const Vec3 axis = rng.unit_vector();
        const double angle = deg_to_rad(rng.uniform(0.0, spec.pose_noise_rot_deg));
        const Vec3 tdir = rng.unit_vector();
        const double tmag = rng.uniform(0.0, spec.pose_noise_trans * spec.scene_extent);
        cam.pose.rotation =
            quat_multiply(quat_from_axis_angle(axis, angle), cam.pose.rotation).normalized();
        cam.pose.translation += tmag * tdir;
    }
    return {std::move(gt), std::move(noisy)};
}

// Loads a scene directory written by the synth command (or an equivalent
// COLMAP export): <dir>/<sparse_name>/{cameras,images,points3D}.txt plus
// <dir>/images/<name> rasters.
inline SceneBundle load_scene(const std::filesystem::path& dir, const std::string& sparse_name,
                              int test_every) {
    SceneBundle bundle = parse_colmap_text(dir / sparse_name);
    for (size_t i = 0; i < bundle.cameras.size(); ++i) {
        const auto img_path = dir / "images" / bundle.cameras[i].name;
        if (std::filesystem::exists(img_path)) {
            bundle.images[i] = read_png(img_path.string());
            if (bundle.images[i].height != bundle.cameras[i].intr.height ||
                bundle.images[i].width != bundle.cameras[i].intr.width)
                throw std::runtime_error("image size mismatch for " + bundle.cameras[i].name);
        }
    }
    apply_split(bundle, test_every);
    return bundle;
}

}  // namespace hbgs
