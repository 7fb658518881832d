#pragma once

// Differentiable forward splatting. 3D Gaussians are projected to 2D with the
// local affine (EWA) approximation, depth-sorted, and alpha-composited front
// to back. Backward passes are hand-derived; pixel work is split into a fixed
// number of row chunks whose partial gradients merge in chunk order, so
// results are bit-identical for any worker thread count.

#include "hbgs/gaussian_decode.hpp"
#include "hbgs/geometry.hpp"
#include "hbgs/image.hpp"
#include "hbgs/threading.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <vector>

namespace hbgs {

inline constexpr int kRasterChunks = 16;

struct Splat2D {
    Vec2 mean = Vec2::Zero();
    double cxx = 0, cxy = 0, cyy = 0;  // 2x2 covariance, pixels^2
    double depth = 0;
    double alpha = 0;
    Vec3 color = Vec3::Zero();
};

struct RasterizeConfig {
    double weight_clamp = 0.999;
    double min_transmittance = 1e-4;  // front-to-back early stop
    double sigma_cutoff = 3.0;        // bounding-box radius in standard deviations
    double cov_floor = 0.3;           // added to both cov2d diagonals, pixels^2
    Vec3 background = Vec3::Zero();
};

struct ProjectCache {
    Vec3 p_cam = Vec3::Zero();
    Mat3 w = Mat3::Zero();       // world-to-camera rotation
    Mat3 sigma3 = Mat3::Zero();  // world covariance
    Mat3 rg = Mat3::Zero();      // gaussian rotation
    Mat23 j = Mat23::Zero();
    Mat23 m = Mat23::Zero();     // J * W
};

// EWA projection: cov2d = J W Sigma W^T J^T + floor * I. Returns nullopt when
// the center is at or behind the camera plane.
inline std::optional<Splat2D> project_gaussian(const NeuralGaussian& g, const Intrinsics& intr,
                                               const CameraPose& pose, double cov_floor,
                                               ProjectCache* cache = nullptr) {
    const Mat3 rc = pose.rotation_matrix();
    const Mat3 w = rc.transpose();
    const Vec3 pc = w * (g.mu - pose.translation);
    if (pc.z() <= kBehindCameraEps) return std::nullopt;

    const double iz = 1.0 / pc.z();
    Splat2D out;
    out.mean = Vec2(intr.fx * pc.x() * iz + intr.cx, intr.fy * pc.y() * iz + intr.cy);
    out.depth = pc.z();
    out.alpha = g.alpha;
    out.color = g.c;

    Mat23 j;
    j << intr.fx * iz, 0, -intr.fx * pc.x() * iz * iz,
         0, intr.fy * iz, -intr.fy * pc.y() * iz * iz;
    const Mat3 rg = quat_to_rotmat(g.q);
    const Mat3 sigma3 = rg * g.s.cwiseProduct(g.s).asDiagonal() * rg.transpose();
    const Mat23 m = j * w;
    const Mat2 cov = m * sigma3 * m.transpose();
    out.cxx = cov(0, 0) + cov_floor;
    out.cxy = 0.5 * (cov(0, 1) + cov(1, 0));
    out.cyy = cov(1, 1) + cov_floor;

    if (cache) {
        cache->p_cam = pc;
        cache->w = w;
        cache->sigma3 = sigma3;
        cache->rg = rg;
        cache->j = j;
        cache->m = m;
    }
    return out;
}

struct SplatGrad {
    Vec2 d_mean = Vec2::Zero();
    double d_cxx = 0, d_cxy = 0, d_cyy = 0;
    double d_depth = 0;
    double d_alpha = 0;
    Vec3 d_color = Vec3::Zero();

    void accumulate(const SplatGrad& o) {
        d_mean += o.d_mean;
        d_cxx += o.d_cxx;
        d_cxy += o.d_cxy;
        d_cyy += o.d_cyy;
        d_depth += o.d_depth;
        d_alpha += o.d_alpha;
        d_color += o.d_color;
    }
};

struct ProjectGrads {
    Vec3 d_mu = Vec3::Zero();
    Vec4 d_q = Vec4::Zero();  // w.r.t. the splat's quaternion (normalize chain included)
    Vec3 d_s = Vec3::Zero();
    double d_alpha = 0.0;  // pass-through
    Vec3 d_color = Vec3::Zero();
    Eigen::Matrix<double, 7, 1> d_pose = Eigen::Matrix<double, 7, 1>::Zero();
};

inline ProjectGrads project_gaussian_backward(const NeuralGaussian& g, const Intrinsics& intr,
                                              const CameraPose& pose, const ProjectCache& c,
                                              const SplatGrad& d) {
    ProjectGrads out;
    out.d_alpha = d.d_alpha;  // pass-through attributes
    out.d_color = d.d_color;

    // Symmetric matrix gradient of cov2d; d_cxy covers both off-diagonal slots.
    Mat2 gc;
    gc << d.d_cxx, 0.5 * d.d_cxy, 0.5 * d.d_cxy, d.d_cyy;

    const Mat3 d_sigma3 = c.m.transpose() * gc * c.m;
    const Mat23 d_m = 2.0 * gc * c.m * c.sigma3;
    const Mat23 d_j = d_m * c.w.transpose();
    Mat3 d_w = c.j.transpose() * d_m;

    // J's dependence on the camera-space point.
    const double z = c.p_cam.z(), iz = 1.0 / z, iz2 = iz * iz, iz3 = iz2 * iz;
    Vec3 d_pcam = Vec3::Zero();
    d_pcam.x() += d_j(0, 2) * (-intr.fx * iz2);
    d_pcam.y() += d_j(1, 2) * (-intr.fy * iz2);
    d_pcam.z() += d_j(0, 0) * (-intr.fx * iz2) + d_j(0, 2) * (2.0 * intr.fx * c.p_cam.x() * iz3) +
                  d_j(1, 1) * (-intr.fy * iz2) + d_j(1, 2) * (2.0 * intr.fy * c.p_cam.y() * iz3);

    // Pixel center and depth.
    d_pcam.x() += d.d_mean.x() * intr.fx * iz;
    d_pcam.y() += d.d_mean.y() * intr.fy * iz;
    d_pcam.z() += -d.d_mean.x() * intr.fx * c.p_cam.x() * iz2 -
                  d.d_mean.y() * intr.fy * c.p_cam.y() * iz2 + d.d_depth;

    // p_cam = W (mu - t).
    out.d_mu = c.w.transpose() * d_pcam;
    out.d_pose.head<3>() = -c.w.transpose() * d_pcam;
    d_w += d_pcam * (g.mu - pose.translation).transpose();

    // W = R_c^T.
    out.d_pose.tail<4>() = rotmat_grad_to_quat(pose.rotation, d_w.transpose());

    // Sigma3 = Rg diag(s^2) Rg^T.
    const Mat3 s2 = g.s.cwiseProduct(g.s).asDiagonal();
    const Mat3 d_rg = 2.0 * d_sigma3 * c.rg * s2;
    const Mat3 inner = c.rg.transpose() * d_sigma3 * c.rg;
    for (int k = 0; k < 3; ++k) out.d_s[k] = 2.0 * g.s[k] * inner(k, k);
    out.d_q = rotmat_grad_to_quat(g.q, d_rg);
    return out;
}

struct RenderOutput {
    Image image;
    std::vector<double> alpha_map;        // accumulated opacity per pixel
    std::vector<uint16_t> splat_count;    // composited splats per pixel
};

namespace detail {

struct SplatScreen {
    double inv_xx = 0, inv_xy = 0, inv_yy = 0;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive bbox, empty if x1 < x0
};

inline std::vector<SplatScreen> prepare_splats(const std::vector<Splat2D>& splats, int height,
                                               int width, const RasterizeConfig& cfg) {
    std::vector<SplatScreen> out(splats.size());
    for (size_t i = 0; i < splats.size(); ++i) {
        const Splat2D& s = splats[i];
        const double det = s.cxx * s.cyy - s.cxy * s.cxy;
        if (det <= 0.0) continue;  // floored covariances should never get here
        SplatScreen& sc = out[i];
        sc.inv_xx = s.cyy / det;
        sc.inv_xy = -s.cxy / det;
        sc.inv_yy = s.cxx / det;
        const double tr_half = 0.5 * (s.cxx + s.cyy);
        const double disc = std::sqrt(std::max(0.0, tr_half * tr_half - det));
        const double radius = cfg.sigma_cutoff * std::sqrt(tr_half + disc);
        sc.x0 = std::max(0, static_cast<int>(std::floor(s.mean.x() - radius)));
        sc.x1 = std::min(width - 1, static_cast<int>(std::ceil(s.mean.x() + radius)));
        sc.y0 = std::max(0, static_cast<int>(std::floor(s.mean.y() - radius)));
        sc.y1 = std::min(height - 1, static_cast<int>(std::ceil(s.mean.y() + radius)));
    }
    return out;
}

// Depth order, ties by input index.
inline std::vector<int> depth_order(const std::vector<Splat2D>& splats) {
    std::vector<int> order(splats.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (splats[a].depth != splats[b].depth) return splats[a].depth < splats[b].depth;
        return a < b;
    });
    return order;
}

}  // namespace detail

// Front-to-back compositing. `rendered` is the opacity-cull mask: masked-out
// splats contribute zero weight in the forward pass but still take part in
// the backward walk (straight-through on the mask).
inline RenderOutput rasterize(const std::vector<Splat2D>& splats, const std::vector<char>& rendered,
                              int height, int width, const RasterizeConfig& cfg) {
    RenderOutput out;
    out.image = Image(height, width, 3);
    out.alpha_map.assign(static_cast<size_t>(height) * width, 0.0);
    out.splat_count.assign(static_cast<size_t>(height) * width, 0);

    const auto screen = detail::prepare_splats(splats, height, width, cfg);
    const auto order = detail::depth_order(splats);

    parallel_chunks(kRasterChunks, [&](int chunk) {
        const ChunkRange rows = chunk_range(height, kRasterChunks, chunk);
        if (rows.begin >= rows.end) return;
        std::vector<int> cands;
        for (int idx : order) {
            const auto& sc = screen[idx];
            if (sc.x1 < sc.x0) continue;
            if (sc.y1 < rows.begin || sc.y0 >= rows.end) continue;
            cands.push_back(idx);
        }
        for (int y = rows.begin; y < rows.end; ++y) {
            for (int x = 0; x < width; ++x) {
                double t = 1.0;
                Vec3 c = Vec3::Zero();
                uint16_t count = 0;
                for (int idx : cands) {
                    const auto& sc = screen[idx];
                    if (y < sc.y0 || y > sc.y1 || x < sc.x0 || x > sc.x1) continue;
                    if (!rendered[idx]) continue;
                    const Splat2D& s = splats[idx];
                    const double dx = x - s.mean.x();
                    const double dy = y - s.mean.y();
                    const double sigma =
                        0.5 * (sc.inv_xx * dx * dx + 2.0 * sc.inv_xy * dx * dy + sc.inv_yy * dy * dy);
                    const double w = std::min(s.alpha * std::exp(-sigma), cfg.weight_clamp);
                    if (w <= 0.0) continue;
                    c += t * w * s.color;
                    ++count;
                    t *= 1.0 - w;
                    if (t < cfg.min_transmittance) break;
                }
                c += t * cfg.background;
                out.image.at(y, x, 0) = c.x();
                out.image.at(y, x, 1) = c.y();
                out.image.at(y, x, 2) = c.z();
                out.alpha_map[static_cast<size_t>(y) * width + x] = 1.0 - t;
                out.splat_count[static_cast<size_t>(y) * width + x] = count;
            }
        }
    });
    return out;
}

// Gradients of the composited image with respect to every splat. Per pixel the
// forward walk is replayed, then unwound back to front.
inline std::vector<SplatGrad> rasterize_backward(const std::vector<Splat2D>& splats,
                                                 const std::vector<char>& rendered, int height,
                                                 int width, const RasterizeConfig& cfg,
                                                 const Image& d_image) {
    const auto screen = detail::prepare_splats(splats, height, width, cfg);
    const auto order = detail::depth_order(splats);

    std::vector<std::vector<SplatGrad>> chunk_grads(kRasterChunks);

    parallel_chunks(kRasterChunks, [&](int chunk) {
        const ChunkRange rows = chunk_range(height, kRasterChunks, chunk);
        if (rows.begin >= rows.end) return;
        std::vector<int> cands;
        for (int idx : order) {
            const auto& sc = screen[idx];
            if (sc.x1 < sc.x0) continue;
            if (sc.y1 < rows.begin || sc.y0 >= rows.end) continue;
            cands.push_back(idx);
        }
        if (cands.empty()) return;
        auto& grads = chunk_grads[chunk];
        grads.assign(splats.size(), SplatGrad{});

        struct Visit {
            int idx;
            double w, g, t_before, sigma, dx, dy;
            bool clamped, masked;
        };
        std::vector<Visit> walk;
        walk.reserve(cands.size());

        for (int y = rows.begin; y < rows.end; ++y) {
            for (int x = 0; x < width; ++x) {
                const Vec3 dl(d_image.at(y, x, 0), d_image.at(y, x, 1), d_image.at(y, x, 2));
                walk.clear();
                double t = 1.0;
                for (int idx : cands) {
                    const auto& sc = screen[idx];
                    if (y < sc.y0 || y > sc.y1 || x < sc.x0 || x > sc.x1) continue;
                    const Splat2D& s = splats[idx];
                    const double dx = x - s.mean.x();
                    const double dy = y - s.mean.y();
                    const double sigma =
                        0.5 * (sc.inv_xx * dx * dx + 2.0 * sc.inv_xy * dx * dy + sc.inv_yy * dy * dy);
                    const double g = std::exp(-sigma);
                    const bool masked = !rendered[idx];
                    const double w_raw = s.alpha * g;
                    const bool clamped = w_raw >= cfg.weight_clamp;
                    const double w = masked ? 0.0 : std::min(w_raw, cfg.weight_clamp);
                    walk.push_back({idx, w, g, t, sigma, dx, dy, clamped, masked});
                    t *= 1.0 - w;
                    if (t < cfg.min_transmittance) break;
                }
                // Unwind: A holds the color contributed after the current splat.
                Vec3 a = t * cfg.background;
                for (size_t vi = walk.size(); vi-- > 0;) {
                    const Visit& v = walk[vi];
                    const Splat2D& s = splats[v.idx];
                    SplatGrad& g_out = grads[v.idx];
                    // Color: only actually composited splats contribute.
                    if (v.w > 0.0) g_out.d_color += dl * (v.w * v.t_before);
                    const Vec3 dc_dw = s.color * v.t_before - a / (1.0 - v.w);
                    const double d_w = dl.dot(dc_dw);
                    a += v.w * v.t_before * s.color;
                    if (v.clamped) continue;  // min() saturated: no gradient
                    // Straight-through on the cull mask: d w / d(alpha g) = 1.
                    g_out.d_alpha += v.g * d_w;
                    const double d_sigma = -s.alpha * v.g * d_w;
                    const auto& sc = screen[v.idx];
                    const double ex = sc.inv_xx * v.dx + sc.inv_xy * v.dy;
                    const double ey = sc.inv_xy * v.dx + sc.inv_yy * v.dy;
                    g_out.d_mean.x() += -ex * d_sigma;
                    g_out.d_mean.y() += -ey * d_sigma;
                    g_out.d_cxx += -0.5 * ex * ex * d_sigma;
                    g_out.d_cxy += -ex * ey * d_sigma;
                    g_out.d_cyy += -0.5 * ey * ey * d_sigma;
                }
            }
        }
    });

    std::vector<SplatGrad> total(splats.size());
    for (int chunk = 0; chunk < kRasterChunks; ++chunk) {
        if (chunk_grads[chunk].empty()) continue;
        for (size_t i = 0; i < splats.size(); ++i) total[i].accumulate(chunk_grads[chunk][i]);
    }
    return total;
}

}  // namespace hbgs
