#pragma once

// Photometric training objective: L1 + lambda_ssim * (1 - SSIM) over the
// rendered view, plus a volume penalty that sums the product of each rendered
// Gaussian's three scales.

#include "hbgs/geometry.hpp"
#include "hbgs/metrics.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <vector>

namespace hbgs {

struct LossBreakdown {
    double l1 = 0.0;
    double ssim_term = 0.0;  // 1 - SSIM
    double vol = 0.0;
    double total = 0.0;
    double lambda_ssim = 0.2;
    double lambda_vol = 0.001;
};

inline double loss_l1(const Image& rendered, const Image& target, Image* grad = nullptr) {
    if (!rendered.same_shape(target)) throw std::runtime_error("loss shape mismatch");
    if (grad) *grad = Image(rendered.height, rendered.width, rendered.channels, 0.0);
    const double inv_n = 1.0 / static_cast<double>(rendered.size());
    double acc = 0.0;
    for (size_t i = 0; i < rendered.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        acc += std::abs(d);
        if (grad) grad->data[i] = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
    }
    return acc * inv_n;
}

inline double loss_ssim(const Image& rendered, const Image& target, Image* grad = nullptr) {
    Image dssim;
    const double s = ssim(rendered, target, grad ? &dssim : nullptr);
    if (grad) {
        *grad = dssim;
        for (auto& v : grad->data) v = -v;  // d(1 - ssim)/d rendered
    }
    return 1.0 - s;
}

// Sum over Gaussians of s_x * s_y * s_z. `scale_grads`, when given, receives
// the product-rule gradient per Gaussian.
inline double loss_vol(const std::vector<Vec3>& scales, std::vector<Vec3>* scale_grads = nullptr) {
    if (scale_grads) scale_grads->assign(scales.size(), Vec3::Zero());
    double acc = 0.0;
    for (size_t i = 0; i < scales.size(); ++i) {
        const Vec3& s = scales[i];
        acc += s.x() * s.y() * s.z();
        if (scale_grads)
            (*scale_grads)[i] = Vec3(s.y() * s.z(), s.x() * s.z(), s.x() * s.y());
    }
    return acc;
}

// Weighted sum of the three terms; `image_grad`, when given, receives the
// gradient of the total with respect to the rendered image (the vol term has
// no image dependence).
inline LossBreakdown loss_total(const Image& rendered, const Image& target,
                                const std::vector<Vec3>& rendered_scales, double lambda_ssim,
                                double lambda_vol, Image* image_grad = nullptr,
                                std::vector<Vec3>* scale_grads = nullptr) {
    LossBreakdown out;
    out.lambda_ssim = lambda_ssim;
    out.lambda_vol = lambda_vol;
    Image g_l1, g_ssim;
    out.l1 = loss_l1(rendered, target, image_grad ? &g_l1 : nullptr);
    out.ssim_term = loss_ssim(rendered, target, image_grad ? &g_ssim : nullptr);
    out.vol = loss_vol(rendered_scales, scale_grads);
    out.total = out.l1 + lambda_ssim * out.ssim_term + lambda_vol * out.vol;
    if (image_grad) {
        *image_grad = Image(rendered.height, rendered.width, rendered.channels, 0.0);
        for (size_t i = 0; i < image_grad->size(); ++i)
            image_grad->data[i] = g_l1.data[i] + lambda_ssim * g_ssim.data[i];
    }
    if (scale_grads)
        for (auto& g : *scale_grads) g *= lambda_vol;
    return out;
}

}  // namespace hbgs
