#pragma once

// Camera models, rigid transforms and quaternion algebra. All functions here
// are pure; analytic jacobians are provided for everything the training loop
// differentiates through.

#include <Eigen/Dense>

#include <array>
#include <cmath>
#include <optional>
#include <stdexcept>

namespace hbgs {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat34 = Eigen::Matrix<double, 3, 4>;
using Mat23 = Eigen::Matrix<double, 2, 3>;

inline constexpr double kBehindCameraEps = 1e-8;
inline constexpr double kZeroQuatEps = 1e-12;
inline constexpr double kPi = 3.14159265358979323846;

inline double deg_to_rad(double d) { return d * kPi / 180.0; }
inline double rad_to_deg(double r) { return r * 180.0 / kPi; }

// Storage order (w, x, y, z); identity is (1, 0, 0, 0). Not kept normalized:
// optimizer updates may leave the unit sphere, conversions normalize lazily.
struct Quaternion {
    double w = 1.0;
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Quaternion() = default;
    Quaternion(double w_, double x_, double y_, double z_) : w(w_), x(x_), y(y_), z(z_) {}

    static Quaternion identity() { return {1.0, 0.0, 0.0, 0.0}; }

    double norm() const { return std::sqrt(w * w + x * x + y * y + z * z); }

    Quaternion normalized() const {
        const double n = norm();
        if (n < kZeroQuatEps) throw std::runtime_error("zero quaternion");
        return {w / n, x / n, y / n, z / n};
    }

    Quaternion conjugate() const { return {w, -x, -y, -z}; }

    Vec4 coeffs() const { return {w, x, y, z}; }
};

inline Quaternion quat_multiply(const Quaternion& a, const Quaternion& b) {
    return {a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w};
}

inline Quaternion quat_from_axis_angle(const Vec3& axis, double angle_rad) {
    const double n = axis.norm();
    if (n < kZeroQuatEps) return Quaternion::identity();
    const double half = 0.5 * angle_rad;
    const double s = std::sin(half) / n;
    return {std::cos(half), axis.x() * s, axis.y() * s, axis.z() * s};
}

// Geodesic angle between the rotations represented by a and b, in radians.
inline double quat_angle_rad(const Quaternion& a, const Quaternion& b) {
    const Quaternion r = quat_multiply(a.normalized().conjugate(), b.normalized());
    const double vec = std::sqrt(r.x * r.x + r.y * r.y + r.z * r.z);
    return 2.0 * std::atan2(vec, std::abs(r.w));
}

inline double quat_angle_deg(const Quaternion& a, const Quaternion& b) {
    return rad_to_deg(quat_angle_rad(a, b));
}

// Rotation matrix of the normalized quaternion. Orthonormal, det +1.
inline Mat3 quat_to_rotmat(const Quaternion& q_raw) {
    const Quaternion q = q_raw.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;
    Mat3 r;
    r << 1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
         2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
         2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y);
    return r;
}

// dR/dq for the *raw* (unnormalized) quaternion: partials of the unit-quat
// formula chained with the normalization jacobian (I - q_hat q_hat^T)/|q|.
inline std::array<Mat3, 4> quat_to_rotmat_jacobian(const Quaternion& q_raw) {
    const double n = q_raw.norm();
    if (n < kZeroQuatEps) throw std::runtime_error("zero quaternion");
    const Quaternion q = q_raw.normalized();
    const double w = q.w, x = q.x, y = q.y, z = q.z;

    std::array<Mat3, 4> unit;  // dR/d(unit components)
    unit[0] << 0, -2 * z, 2 * y,
               2 * z, 0, -2 * x,
               -2 * y, 2 * x, 0;
    unit[1] << 0, 2 * y, 2 * z,
               2 * y, -4 * x, -2 * w,
               2 * z, 2 * w, -4 * x;
    unit[2] << -4 * y, 2 * x, 2 * w,
               2 * x, 0, 2 * z,
               -2 * w, 2 * z, -4 * y;
    unit[3] << -4 * z, -2 * w, 2 * x,
               2 * w, -4 * z, 2 * y,
               2 * x, 2 * y, 0;

    const Vec4 qh = q.coeffs();
    std::array<Mat3, 4> out;
    for (int k = 0; k < 4; ++k) {
        Mat3 acc = Mat3::Zero();
        for (int l = 0; l < 4; ++l) {
            const double jnorm = ((l == k ? 1.0 : 0.0) - qh[l] * qh[k]) / n;
            acc += unit[l] * jnorm;
        }
        out[k] = acc;
    }
    return out;
}

// Maps dL/dR to dL/d(raw quaternion).
inline Vec4 rotmat_grad_to_quat(const Quaternion& q_raw, const Mat3& dR) {
    const auto jac = quat_to_rotmat_jacobian(q_raw);
    Vec4 g;
    for (int k = 0; k < 4; ++k) g[k] = (jac[k].array() * dR.array()).sum();
    return g;
}

// Camera-to-world transform [R_c | C]: `rotation` maps camera axes to world
// axes, `translation` is the camera center in world coordinates.
struct CameraPose {
    Quaternion rotation;
    Vec3 translation = Vec3::Zero();

    Mat3 rotation_matrix() const { return quat_to_rotmat(rotation); }
};

// Flat 7-vector layout used by the optimizer: translation then quaternion.
inline Eigen::Matrix<double, 7, 1> pose_to_vec7(const CameraPose& p) {
    Eigen::Matrix<double, 7, 1> v;
    v << p.translation.x(), p.translation.y(), p.translation.z(),
         p.rotation.w, p.rotation.x, p.rotation.y, p.rotation.z;
    return v;
}

inline CameraPose pose_from_vec7(const Eigen::Matrix<double, 7, 1>& v) {
    CameraPose p;
    p.translation = Vec3(v[0], v[1], v[2]);
    p.rotation = Quaternion(v[3], v[4], v[5], v[6]);
    return p;
}

struct Intrinsics {
    double fx = 0, fy = 0;
    double cx = 0, cy = 0;
    int width = 0, height = 0;

    void validate() const {
        if (fx <= 0 || fy <= 0) throw std::runtime_error("invalid intrinsics: focal length");
        if (cx <= 0 || cx >= width || cy <= 0 || cy >= height)
            throw std::runtime_error("invalid intrinsics: principal point");
    }
};

// Intrinsics of the 2x-downsampled image; pixel centers sit on integer
// coordinates, so the principal point maps as c' = (c - 0.5)/2.
inline Intrinsics intrinsics_at_level(const Intrinsics& intr, int level) {
    Intrinsics out = intr;
    for (int l = 0; l < level; ++l) {
        out.fx *= 0.5;
        out.fy *= 0.5;
        out.cx = (out.cx - 0.5) * 0.5;
        out.cy = (out.cy - 0.5) * 0.5;
        out.width = (out.width + 1) / 2;
        out.height = (out.height + 1) / 2;
    }
    return out;
}

inline Vec3 cam_to_world(const CameraPose& pose, const Vec3& p_cam) {
    return pose.rotation_matrix() * p_cam + pose.translation;
}

inline Vec3 world_to_cam(const CameraPose& pose, const Vec3& p_world) {
    return pose.rotation_matrix().transpose() * (p_world - pose.translation);
}

struct Projected {
    double u = 0, v = 0;
    double depth = 0;
};

// Pinhole projection; +z is in front of the camera. Returns nullopt for
// points at or behind the camera plane so callers can skip them.
inline std::optional<Projected> project(const Intrinsics& intr, const CameraPose& pose,
                                        const Vec3& p_world) {
    const Vec3 pc = world_to_cam(pose, p_world);
    if (pc.z() <= kBehindCameraEps) return std::nullopt;
    Projected out;
    out.u = intr.fx * pc.x() / pc.z() + intr.cx;
    out.v = intr.fy * pc.y() / pc.z() + intr.cy;
    out.depth = pc.z();
    return out;
}

// World-space point of pixel (u, v) at unit camera depth.
inline Vec3 backproject_unit_depth(const Intrinsics& intr, const CameraPose& pose,
                                   double u, double v) {
    const Vec3 dir((u - intr.cx) / intr.fx, (v - intr.cy) / intr.fy, 1.0);
    return cam_to_world(pose, dir);
}

// Jacobians of cam_to_world: out = R p + C.
struct CamToWorldJac {
    Mat3 dp;                 // d out / d p_cam  (= R)
    Mat3 dC;                 // d out / d translation (= I)
    Eigen::Matrix<double, 3, 4> dq;  // column k: d out / d raw quat component k
};

inline CamToWorldJac cam_to_world_jacobian(const CameraPose& pose, const Vec3& p_cam) {
    CamToWorldJac j;
    j.dp = pose.rotation_matrix();
    j.dC = Mat3::Identity();
    const auto dR = quat_to_rotmat_jacobian(pose.rotation);
    for (int k = 0; k < 4; ++k) j.dq.col(k) = dR[k] * p_cam;
    return j;
}

// Jacobians of world_to_cam: out = R^T (p - C).
struct WorldToCamJac {
    Mat3 dp;
    Mat3 dC;
    Eigen::Matrix<double, 3, 4> dq;
};

inline WorldToCamJac world_to_cam_jacobian(const CameraPose& pose, const Vec3& p_world) {
    WorldToCamJac j;
    const Mat3 r = pose.rotation_matrix();
    j.dp = r.transpose();
    j.dC = -r.transpose();
    const auto dR = quat_to_rotmat_jacobian(pose.rotation);
    const Vec3 d = p_world - pose.translation;
    for (int k = 0; k < 4; ++k) j.dq.col(k) = dR[k].transpose() * d;
    return j;
}

// Jacobian of (u, v, depth) with respect to the world point and the pose
// 7-vector, at a point strictly in front of the camera.
struct ProjectJac {
    Eigen::Matrix<double, 3, 3> dpoint;  // rows (u, v, depth) x d p_world
    Eigen::Matrix<double, 3, 7> dpose;   // columns: (tx, ty, tz, qw, qx, qy, qz)
};

inline ProjectJac project_jacobian(const Intrinsics& intr, const CameraPose& pose,
                                   const Vec3& p_world) {
    const Vec3 pc = world_to_cam(pose, p_world);
    if (pc.z() <= kBehindCameraEps) throw std::runtime_error("behind camera");
    const double z = pc.z(), iz = 1.0 / z;
    Mat3 dpix;  // d(u,v,depth)/d p_cam
    dpix << intr.fx * iz, 0, -intr.fx * pc.x() * iz * iz,
            0, intr.fy * iz, -intr.fy * pc.y() * iz * iz,
            0, 0, 1;
    const WorldToCamJac wj = world_to_cam_jacobian(pose, p_world);
    ProjectJac out;
    out.dpoint = dpix * wj.dp;
    out.dpose.block<3, 3>(0, 0) = dpix * wj.dC;
    out.dpose.block<3, 4>(0, 3) = dpix * wj.dq;
    return out;
}

}  // namespace hbgs
