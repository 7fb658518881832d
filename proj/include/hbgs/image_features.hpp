#pragma once

// Per-pixel image features. Two small MLPs map a pixel's color and viewing
// ray to a color feature and a view-direction deviation feature; a linear
// fusion layer combines them into the per-pixel feature vector. There is no
// cross-pixel mixing, so features can be evaluated lazily at matched pixels.

#include "hbgs/geometry.hpp"
#include "hbgs/image.hpp"
#include "hbgs/mlp.hpp"

#include <Eigen/Dense>

#include <stdexcept>

namespace hbgs {

inline constexpr int kPixelInputDim = 5;  // r, g, b, u_norm, v_norm

struct FeatureNets {
    Mlp fc;    // color features
    Mlp fd;    // view-direction deviation features
    Linear g;  // fusion over concat(c, d)
    bool ray_encoding = true;

    void init(int hidden, int color_dim, int dir_dim, int out_dim, Rng& rng) {
        fc.init(kPixelInputDim, hidden, color_dim, rng);
        fd.init(kPixelInputDim, hidden, dir_dim, rng);
        g.init(color_dim + dir_dim, out_dim, rng);
    }

    int color_dim() const { return fc.out_dim(); }
    int dir_dim() const { return fd.out_dim(); }
    int out_dim() const { return g.out_dim(); }

    void register_params(ParamStore& store, const std::string& group) {
        fc.register_params(store, "feat.fc", group);
        fd.register_params(store, "feat.fd", group);
        g.register_params(store, "feat.g", group);
    }
};

// Pixel input vector: color plus the normalized ray coordinates of the pixel
// ((u - cx)/fx, (v - cy)/fy). Zeroing the ray terms makes the nets blind to
// view direction.
inline VectorXd pixel_input(const Image& img, const Intrinsics& intr, int u, int v,
                            bool ray_encoding) {
    VectorXd x(kPixelInputDim);
    x[0] = img.at(v, u, 0);
    x[1] = img.at(v, u, 1);
    x[2] = img.at(v, u, 2);
    x[3] = ray_encoding ? (u - intr.cx) / intr.fx : 0.0;
    x[4] = ray_encoding ? (v - intr.cy) / intr.fy : 0.0;
    return x;
}

struct FeatureBatchCache {
    MatrixXd input;  // kPixelInputDim x n
    Mlp::Cache fc_cache;
    Mlp::Cache fd_cache;
    MatrixXd cd;  // concat(c, d), fusion input
};

// Batched feature evaluation for a set of pixel input vectors (columns).
inline MatrixXd features_forward(const FeatureNets& nets, const MatrixXd& input,
                                 FeatureBatchCache* cache) {
    MatrixXd c = nets.fc.forward(input, cache ? &cache->fc_cache : nullptr);
    MatrixXd d = nets.fd.forward(input, cache ? &cache->fd_cache : nullptr);
    MatrixXd cd(c.rows() + d.rows(), c.cols());
    cd.topRows(c.rows()) = c;
    cd.bottomRows(d.rows()) = d;
    if (cache) {
        cache->input = input;
        cache->cd = cd;
    }
    return nets.g.forward(cd);
}

// Accumulates parameter gradients; pixel inputs are data, not parameters, so
// nothing flows past them.
inline void features_backward(FeatureNets& nets, const FeatureBatchCache& cache,
                              const MatrixXd& dg) {
    const MatrixXd dcd = nets.g.backward(cache.cd, dg);
    nets.fc.backward(cache.fc_cache, dcd.topRows(nets.color_dim()));
    nets.fd.backward(cache.fd_cache, dcd.bottomRows(nets.dir_dim()));
}

struct FeatureMap {
    int height = 0, width = 0;
    MatrixXd g;  // out_dim x (height*width), column-major over pixels (row-major pixel order)
    MatrixXd c;  // color_dim x n
    MatrixXd d;  // dir_dim x n
};

// Dense per-pixel features for a whole image. Training uses the lazy batched
// path above instead; this exists for inspection and tests.
inline FeatureMap extract_pixel_features(const Image& img, const Intrinsics& intr,
                                         const FeatureNets& nets) {
    if (img.channels != 3) throw std::runtime_error("extract_pixel_features expects RGB");
    FeatureMap map;
    map.height = img.height;
    map.width = img.width;
    const int n = img.height * img.width;
    MatrixXd input(kPixelInputDim, n);
    for (int v = 0; v < img.height; ++v)
        for (int u = 0; u < img.width; ++u)
            input.col(v * img.width + u) = pixel_input(img, intr, u, v, nets.ray_encoding);
    map.c = nets.fc.forward(input);
    map.d = nets.fd.forward(input);
    MatrixXd cd(map.c.rows() + map.d.rows(), n);
    cd.topRows(map.c.rows()) = map.c;
    cd.bottomRows(map.d.rows()) = map.d;
    map.g = nets.g.forward(cd);
    return map;
}

}  // namespace hbgs
