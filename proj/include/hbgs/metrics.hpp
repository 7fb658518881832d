#pragma once

// PSNR and SSIM. SSIM uses an 11x11 Gaussian window (sigma 1.5) with
// C1 = 0.01^2, C2 = 0.03^2 at unit dynamic range, evaluated per channel and
// averaged. Windows are edge-clamped, so every pixel gets a local score and
// images smaller than the window stay well defined. The same implementation
// backs the training loss, so an analytic gradient is provided.

#include "hbgs/image.hpp"

#include <array>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace hbgs {

inline constexpr int kSsimRadius = 5;
inline constexpr double kSsimSigma = 1.5;
inline constexpr double kSsimC1 = 0.01 * 0.01;
inline constexpr double kSsimC2 = 0.03 * 0.03;

inline double psnr(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw std::runtime_error("psnr shape mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(a.size());
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return 10.0 * std::log10(1.0 / mse);
}

namespace detail {

inline const std::array<double, 2 * kSsimRadius + 1>& ssim_window() {
    static const auto taps = [] {
        std::array<double, 2 * kSsimRadius + 1> t{};
        double sum = 0.0;
        for (int i = -kSsimRadius; i <= kSsimRadius; ++i) {
            t[i + kSsimRadius] = std::exp(-0.5 * i * i / (kSsimSigma * kSsimSigma));
            sum += t[i + kSsimRadius];
        }
        for (auto& v : t) v /= sum;
        return t;
    }();
    return taps;
}

using Plane = std::vector<double>;

inline int clamp_idx(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Separable Gaussian filter with edge-clamped indexing; equivalent to the
// direct 2D clamped window because each axis clamps independently.
inline Plane filter_clamped(const Plane& in, int h, int w) {
    const auto& k = ssim_window();
    Plane tmp(in.size()), out(in.size());
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -kSsimRadius; t <= kSsimRadius; ++t)
                acc += k[t + kSsimRadius] * in[static_cast<size_t>(y) * w + clamp_idx(x + t, w)];
            tmp[static_cast<size_t>(y) * w + x] = acc;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int t = -kSsimRadius; t <= kSsimRadius; ++t)
                acc += k[t + kSsimRadius] * tmp[static_cast<size_t>(clamp_idx(y + t, h)) * w + x];
            out[static_cast<size_t>(y) * w + x] = acc;
        }
    return out;
}

// Adjoint of filter_clamped: scatter through the column pass, then the row
// pass. Clamping makes the operator non-symmetric near edges, so this is not
// simply another filter application.
inline Plane filter_clamped_adjoint(const Plane& g, int h, int w) {
    const auto& k = ssim_window();
    Plane tmp(g.size(), 0.0), out(g.size(), 0.0);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gv = g[static_cast<size_t>(y) * w + x];
            if (gv == 0.0) continue;
            for (int t = -kSsimRadius; t <= kSsimRadius; ++t)
                tmp[static_cast<size_t>(clamp_idx(y + t, h)) * w + x] += k[t + kSsimRadius] * gv;
        }
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            const double gv = tmp[static_cast<size_t>(y) * w + x];
            if (gv == 0.0) continue;
            for (int t = -kSsimRadius; t <= kSsimRadius; ++t)
                out[static_cast<size_t>(y) * w + clamp_idx(x + t, w)] += k[t + kSsimRadius] * gv;
        }
    return out;
}

inline Plane channel_plane(const Image& img, int c) {
    Plane p(img.pixel_count());
    for (int y = 0; y < img.height; ++y)
        for (int x = 0; x < img.width; ++x)
            p[static_cast<size_t>(y) * img.width + x] = img.at(y, x, c);
    return p;
}

}  // namespace detail

// Mean local SSIM; symmetric in its arguments. If grad_a is non-null it
// receives d(ssim)/d(a) with the same shape as a.
inline double ssim(const Image& a, const Image& b, Image* grad_a = nullptr) {
    if (!a.same_shape(b)) throw std::runtime_error("ssim shape mismatch");
    const int h = a.height, w = a.width;
    const size_t n = a.pixel_count();
    const double inv_count = 1.0 / (static_cast<double>(n) * a.channels);

    if (grad_a) *grad_a = Image(h, w, a.channels, 0.0);

    double total = 0.0;
    for (int c = 0; c < a.channels; ++c) {
        using detail::Plane;
        const Plane pa = detail::channel_plane(a, c);
        const Plane pb = detail::channel_plane(b, c);
        Plane paa(n), pbb(n), pab(n);
        for (size_t i = 0; i < n; ++i) {
            paa[i] = pa[i] * pa[i];
            pbb[i] = pb[i] * pb[i];
            pab[i] = pa[i] * pb[i];
        }
        const Plane m1 = detail::filter_clamped(pa, h, w);
        const Plane m2 = detail::filter_clamped(pb, h, w);
        const Plane e11 = detail::filter_clamped(paa, h, w);
        const Plane e22 = detail::filter_clamped(pbb, h, w);
        const Plane e12 = detail::filter_clamped(pab, h, w);

        Plane g_m1, g_e11, g_e12;
        if (grad_a) {
            g_m1.assign(n, 0.0);
            g_e11.assign(n, 0.0);
            g_e12.assign(n, 0.0);
        }
        for (size_t i = 0; i < n; ++i) {
            const double a1 = 2.0 * m1[i] * m2[i] + kSsimC1;
            const double a2 = 2.0 * (e12[i] - m1[i] * m2[i]) + kSsimC2;
            const double b1 = m1[i] * m1[i] + m2[i] * m2[i] + kSsimC1;
            const double b2 = (e11[i] - m1[i] * m1[i]) + (e22[i] - m2[i] * m2[i]) + kSsimC2;
            const double s = (a1 * a2) / (b1 * b2);
            total += s;
            if (grad_a) {
                g_m1[i] = inv_count * ((2.0 * m2[i] * a2 - 2.0 * m2[i] * a1) / (b1 * b2) -
                                       s * (2.0 * m1[i] / b1 - 2.0 * m1[i] / b2));
                g_e11[i] = inv_count * (-s / b2);
                g_e12[i] = inv_count * (2.0 * a1 / (b1 * b2));
            }
        }
        if (grad_a) {
            const Plane ga_m1 = detail::filter_clamped_adjoint(g_m1, h, w);
            const Plane ga_e11 = detail::filter_clamped_adjoint(g_e11, h, w);
            const Plane ga_e12 = detail::filter_clamped_adjoint(g_e12, h, w);
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) {
                    const size_t i = static_cast<size_t>(y) * w + x;
                    grad_a->at(y, x, c) =
                        ga_m1[i] + 2.0 * pa[i] * ga_e11[i] + pb[i] * ga_e12[i];
                }
        }
    }
    return total * inv_count;
}

struct MetricReport {
    std::vector<double> per_view_psnr;
    std::vector<double> per_view_ssim;
    double mean_psnr = 0.0;
    double mean_ssim = 0.0;

    void add(double p, double s) {
        per_view_psnr.push_back(p);
        per_view_ssim.push_back(s);
        const double nv = static_cast<double>(per_view_psnr.size());
        mean_psnr = 0.0;
        mean_ssim = 0.0;
        for (size_t i = 0; i < per_view_psnr.size(); ++i) {
            mean_psnr += per_view_psnr[i];
            mean_ssim += per_view_ssim[i];
        }
        mean_psnr /= nv;
        mean_ssim /= nv;
    }
};

}  // namespace hbgs
