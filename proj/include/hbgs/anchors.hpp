#pragma once

// Voxelization of the SfM point cloud into lattice-aligned anchor points,
// each carrying a learnable feature vector.

#include "hbgs/geometry.hpp"
#include "hbgs/random.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <tuple>
#include <vector>

namespace hbgs {

// Snaps points to the voxel lattice (nearest cell, half rounds away from
// zero), deduplicates, and returns the cell centers sorted lexicographically
// by (x, y, z). Output is independent of input order.
inline std::vector<Vec3> voxelize(const std::vector<Vec3>& points, double voxel_scale) {
    if (voxel_scale <= 0.0) throw std::runtime_error("invalid voxel scale");
    if (points.empty()) throw std::runtime_error("empty point cloud");
    std::vector<std::tuple<int64_t, int64_t, int64_t>> cells;
    cells.reserve(points.size());
    for (const Vec3& p : points)
        cells.emplace_back(std::llround(p.x() / voxel_scale), std::llround(p.y() / voxel_scale),
                           std::llround(p.z() / voxel_scale));
    std::sort(cells.begin(), cells.end());
    cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
    std::vector<Vec3> out;
    out.reserve(cells.size());
    for (const auto& [ix, iy, iz] : cells)
        out.emplace_back(ix * voxel_scale, iy * voxel_scale, iz * voxel_scale);
    return out;
}

struct AnchorSet {
    std::vector<Vec3> positions;  // lattice-aligned, unique
    Eigen::MatrixXd features;     // feature_dim x n_anchors
    Eigen::MatrixXd feature_grads;
    double voxel_scale = 0.0;

    int count() const { return static_cast<int>(positions.size()); }
    int feature_dim() const { return static_cast<int>(features.rows()); }
};

inline AnchorSet init_anchor_features(std::vector<Vec3> positions, int feature_dim,
                                      double voxel_scale, Rng& rng) {
    if (feature_dim < 1) throw std::runtime_error("invalid feature dim");
    AnchorSet set;
    set.voxel_scale = voxel_scale;
    set.positions = std::move(positions);
    set.features.resize(feature_dim, set.positions.size());
    for (int a = 0; a < set.features.cols(); ++a)
        for (int f = 0; f < feature_dim; ++f) set.features(f, a) = rng.normal(0.0, 0.01);
    set.feature_grads = Eigen::MatrixXd::Zero(feature_dim, set.positions.size());
    return set;
}

}  // namespace hbgs
