#pragma once

// Anchor-to-view matching and hybrid feature fusion. Each anchor is paired
// with its nearest camera center and with the grid pixel whose unit-depth
// backprojection is closest to the anchor; the anchor feature, the image
// feature at that pixel and the two match distances are fused by a linear
// layer into the hybrid feature.
//
// The argmin itself is non-differentiable and is held fixed between
// rematches; gradients flow through the distances and the sampled feature.

#include "hbgs/geometry.hpp"
#include "hbgs/mlp.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <optional>
#include <vector>

namespace hbgs {

struct CameraMatch {
    int camera_index = -1;
    double dist = 0.0;  // distance to the matched camera center
};

// Nearest camera center by Euclidean distance; ties go to the lowest index.
inline CameraMatch match_camera(const Vec3& anchor, const std::vector<CameraPose>& cameras) {
    if (cameras.empty()) throw std::runtime_error("match_camera: no cameras");
    CameraMatch best;
    for (int i = 0; i < static_cast<int>(cameras.size()); ++i) {
        const double d = (anchor - cameras[i].translation).norm();
        if (best.camera_index < 0 || d < best.dist) {
            best.camera_index = i;
            best.dist = d;
        }
    }
    return best;
}

struct PixelMatch {
    int u = 0, v = 0;
    double dist = 0.0;  // distance to the pixel's unit-depth 3D point
};

// The pixel minimizing the distance from the anchor to the pixel grid mapped
// to unit camera depth. Over that plane the minimizer is the anchor's own
// (x, y) camera coordinates, so the closed form is a clamped nearest-grid
// lookup rather than a perspective division. Anchors behind the camera are
// unmatched.
inline std::optional<PixelMatch> match_pixel(const Vec3& anchor, const Intrinsics& intr,
                                             const CameraPose& pose) {
    const Vec3 pc = world_to_cam(pose, anchor);
    if (pc.z() <= kBehindCameraEps) return std::nullopt;
    const double u_cont = std::clamp(intr.fx * pc.x() + intr.cx, 0.0, intr.width - 1.0);
    const double v_cont = std::clamp(intr.fy * pc.y() + intr.cy, 0.0, intr.height - 1.0);
    PixelMatch m;
    m.u = static_cast<int>(std::llround(u_cont));
    m.v = static_cast<int>(std::llround(v_cont));
    const Vec3 pp = backproject_unit_depth(intr, pose, m.u, m.v);
    m.dist = (anchor - pp).norm();
    return m;
}

struct AnchorMatch {
    int anchor_index = -1;
    int camera_index = -1;
    double dist_cam = 0.0;    // delta'_ac
    int u = 0, v = 0;
    double dist_pixel = 0.0;  // delta'_ap
};

// Matches every anchor against the given cameras; anchors behind their
// nearest camera are dropped for this round.
inline std::vector<AnchorMatch> match_anchors(const std::vector<Vec3>& anchor_positions,
                                              const std::vector<Intrinsics>& intrinsics,
                                              const std::vector<CameraPose>& poses,
                                              const std::vector<char>* enabled = nullptr) {
    std::vector<AnchorMatch> out;
    out.reserve(anchor_positions.size());
    for (int a = 0; a < static_cast<int>(anchor_positions.size()); ++a) {
        if (enabled && !(*enabled)[a]) continue;
        const CameraMatch cm = match_camera(anchor_positions[a], poses);
        const auto pm = match_pixel(anchor_positions[a], intrinsics[cm.camera_index],
                                    poses[cm.camera_index]);
        if (!pm) continue;
        AnchorMatch m;
        m.anchor_index = a;
        m.camera_index = cm.camera_index;
        m.dist_cam = cm.dist;
        m.u = pm->u;
        m.v = pm->v;
        m.dist_pixel = pm->dist;
        out.push_back(m);
    }
    return out;
}

// Gradient of the two match distances with respect to the matched camera's
// pose 7-vector, with the matched pixel held fixed.
inline Eigen::Matrix<double, 7, 1> match_distance_pose_grad(const Vec3& anchor,
                                                            const Intrinsics& intr,
                                                            const CameraPose& pose, int u, int v,
                                                            double d_dist_cam,
                                                            double d_dist_pixel) {
    Eigen::Matrix<double, 7, 1> g = Eigen::Matrix<double, 7, 1>::Zero();
    if (d_dist_cam != 0.0) {
        const Vec3 diff = pose.translation - anchor;
        const double n = diff.norm();
        if (n > 1e-12) g.head<3>() += d_dist_cam * (diff / n);
    }
    if (d_dist_pixel != 0.0) {
        const Vec3 dir((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
        const Vec3 pp = cam_to_world(pose, dir);
        const Vec3 diff = pp - anchor;
        const double n = diff.norm();
        if (n > 1e-12) {
            const Vec3 dpp = d_dist_pixel * (diff / n);
            const CamToWorldJac jac = cam_to_world_jacobian(pose, dir);
            g.head<3>() += dpp;  // dC is identity
            g.tail<4>() += jac.dq.transpose() * dpp;
        }
    }
    return g;
}

// Hybrid feature head: a single linear layer over
// concat(anchor_feature, image_feature, delta_ac, delta_ap).
struct FusionNet {
    Linear h;

    void init(int anchor_dim, int image_dim, int out_dim, Rng& rng) {
        h.init(anchor_dim + image_dim + 2, out_dim, rng);
    }

    void register_params(ParamStore& store, const std::string& group) {
        h.register_params(store, "fusion.h", group);
    }
};

inline VectorXd fuse_features(const FusionNet& net, const VectorXd& anchor_feature,
                              const VectorXd& image_feature, double dist_cam,
                              double dist_pixel) {
    if (anchor_feature.size() + image_feature.size() + 2 != net.h.in_dim())
        throw std::runtime_error("fusion shape error");
    VectorXd in(net.h.in_dim());
    in << anchor_feature, image_feature, dist_cam, dist_pixel;
    return net.h.forward(in);
}

}  // namespace hbgs
