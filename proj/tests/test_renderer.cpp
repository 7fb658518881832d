#include "hbgs/renderer.hpp"
#include "hbgs/verify.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hbgs;

namespace {

Intrinsics make_intr(int size, double f) {
    Intrinsics intr;
    intr.fx = intr.fy = f;
    intr.cx = intr.cy = 0.5 * (size - 1);
    intr.width = intr.height = size;
    return intr;
}

Splat2D make_splat(double u, double v, double depth, double alpha, const Vec3& color,
                   double var = 4.0) {
    Splat2D s;
    s.mean = Vec2(u, v);
    s.cxx = s.cyy = var;
    s.cxy = 0.0;
    s.depth = depth;
    s.alpha = alpha;
    s.color = color;
    return s;
}

}  // namespace

TEST_CASE("project_gaussian closed form on the optical axis") {
    const double f = 100.0, d = 2.0, sigma = 0.05, floor = 0.3;
    NeuralGaussian g;
    g.mu = Vec3(0, 0, d);
    g.alpha = 0.7;
    g.s = Vec3(sigma, sigma, sigma);
    const Intrinsics intr = make_intr(64, f);
    CameraPose pose;

    const auto splat = project_gaussian(g, intr, pose, floor);
    REQUIRE(splat.has_value());
    const double expect = f * f * sigma * sigma / (d * d) + floor;
    CHECK(splat->cxx == Catch::Approx(expect).margin(1e-12));
    CHECK(splat->cyy == Catch::Approx(expect).margin(1e-12));
    CHECK(splat->cxy == Catch::Approx(0.0).margin(1e-12));
    CHECK(splat->mean.x() == Catch::Approx(intr.cx));
    CHECK(splat->depth == Catch::Approx(d));
}

TEST_CASE("project_gaussian culls behind the camera") {
    NeuralGaussian g;
    g.mu = Vec3(0, 0, -1);
    CHECK_FALSE(project_gaussian(g, make_intr(32, 40), CameraPose{}, 0.3).has_value());
}

TEST_CASE("projected covariance is symmetric positive definite") {
    Rng rng(19);
    const Intrinsics intr = make_intr(64, 50);
    int checked = 0;
    for (int i = 0; i < 1000; ++i) {
        NeuralGaussian g;
        g.mu = Vec3(rng.normal(), rng.normal(), rng.uniform(0.3, 5.0));
        g.q = Quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        if (g.q.norm() < 1e-3) g.q = Quaternion::identity();
        g.s = Vec3(rng.uniform(1e-3, 0.5), rng.uniform(1e-3, 0.5), rng.uniform(1e-3, 0.5));
        const auto s = project_gaussian(g, intr, CameraPose{}, 0.3);
        if (!s) continue;
        ++checked;
        const double det = s->cxx * s->cyy - s->cxy * s->cxy;
        CHECK(s->cxx > 0.0);
        CHECK(det > 0.0);  // both eigenvalues positive
    }
    CHECK(checked > 900);
}

TEST_CASE("rasterize fixtures") {
    RasterizeConfig cfg;

    SECTION("empty splat list renders the background") {
        cfg.background = Vec3(0.2, 0.4, 0.6);
        const RenderOutput out = rasterize({}, {}, 8, 8, cfg);
        for (int y = 0; y < 8; ++y)
            for (int x = 0; x < 8; ++x) {
                CHECK(out.image.at(y, x, 0) == 0.2);
                CHECK(out.image.at(y, x, 1) == 0.4);
                CHECK(out.image.at(y, x, 2) == 0.6);
            }
        for (double a : out.alpha_map) CHECK(a == 0.0);
    }

    SECTION("single saturated splat composites 0.999 of its color at the center") {
        const Vec3 color(0.9, 0.3, 0.1);
        const auto out =
            rasterize({make_splat(7, 7, 1.0, 0.999, color)}, {1}, 16, 16, cfg);
        for (int c = 0; c < 3; ++c)
            CHECK(out.image.at(7, 7, c) == Catch::Approx(0.999 * color[c]).margin(1e-12));
    }

    SECTION("front splat occludes the back splat") {
        const auto out = rasterize({make_splat(7, 7, 1.0, 0.999, Vec3(1, 0, 0)),
                                    make_splat(7, 7, 2.0, 0.999, Vec3(0, 0, 1))},
                                   {1, 1}, 16, 16, cfg);
        CHECK(out.image.at(7, 7, 0) == Catch::Approx(0.999).margin(1e-6));
        CHECK(out.image.at(7, 7, 2) < 2e-3);
    }

    SECTION("equal depths composite in input-index order") {
        const auto red_first = rasterize({make_splat(7, 7, 1.0, 0.999, Vec3(1, 0, 0)),
                                          make_splat(7, 7, 1.0, 0.999, Vec3(0, 0, 1))},
                                         {1, 1}, 16, 16, cfg);
        CHECK(red_first.image.at(7, 7, 0) > 0.99);
        const auto blue_first = rasterize({make_splat(7, 7, 1.0, 0.999, Vec3(0, 0, 1)),
                                           make_splat(7, 7, 1.0, 0.999, Vec3(1, 0, 0))},
                                          {1, 1}, 16, 16, cfg);
        CHECK(blue_first.image.at(7, 7, 2) > 0.99);
    }

    SECTION("masked-out splats contribute nothing") {
        const auto out = rasterize({make_splat(7, 7, 1.0, 0.9, Vec3(1, 1, 1))}, {0}, 16, 16, cfg);
        for (double v : out.image.data) CHECK(v == 0.0);
    }
}

TEST_CASE("alpha map accumulates monotonically as splats stack") {
    RasterizeConfig cfg;
    std::vector<Splat2D> splats;
    std::vector<char> mask;
    Rng rng(31);
    std::vector<double> prev(16 * 16, 0.0);
    for (int n = 0; n < 12; ++n) {
        splats.push_back(make_splat(rng.uniform(2, 14), rng.uniform(2, 14), rng.uniform(0.5, 4.0),
                                    rng.uniform(0.1, 0.8), Vec3(0.5, 0.5, 0.5)));
        mask.push_back(1);
        const auto out = rasterize(splats, mask, 16, 16, cfg);
        for (size_t i = 0; i < prev.size(); ++i) {
            CHECK(out.alpha_map[i] >= prev[i] - 1e-12);
            CHECK(out.alpha_map[i] >= 0.0);
            CHECK(out.alpha_map[i] <= 1.0);
            prev[i] = out.alpha_map[i];
        }
    }
}

TEST_CASE("rendering is invariant to splat input order") {
    RasterizeConfig cfg;
    Rng rng(41);
    std::vector<Splat2D> splats;
    for (int i = 0; i < 20; ++i)
        splats.push_back(make_splat(rng.uniform(1, 15), rng.uniform(1, 15),
                                    rng.uniform(0.5, 9.0), rng.uniform(0.05, 0.9),
                                    Vec3(rng.uniform(), rng.uniform(), rng.uniform()),
                                    rng.uniform(0.5, 6.0)));
    const std::vector<char> mask(splats.size(), 1);
    const auto base = rasterize(splats, mask, 16, 16, cfg);

    std::vector<Splat2D> shuffled = splats;
    Rng rng2(43);
    rng2.shuffle(shuffled);
    const auto out = rasterize(shuffled, std::vector<char>(splats.size(), 1), 16, 16, cfg);
    for (size_t i = 0; i < base.image.size(); ++i) CHECK(out.image.data[i] == base.image.data[i]);
}

TEST_CASE("rasterize gradients match finite differences") {
    RasterizeConfig cfg;
    cfg.min_transmittance = 0.0;
    cfg.sigma_cutoff = 30.0;
    Rng rng(53);
    std::vector<Splat2D> splats;
    for (int i = 0; i < 6; ++i)
        splats.push_back(make_splat(rng.uniform(3, 13), rng.uniform(3, 13),
                                    rng.uniform(0.5, 4.0), rng.uniform(0.1, 0.7),
                                    Vec3(rng.uniform(), rng.uniform(), rng.uniform()),
                                    rng.uniform(1.0, 5.0)));
    std::vector<char> mask(splats.size(), 1);
    Image dl(16, 16, 3);
    for (auto& v : dl.data) v = rng.normal();

    auto f = [&] {
        const auto out = rasterize(splats, mask, 16, 16, cfg);
        double acc = 0.0;
        for (size_t i = 0; i < out.image.size(); ++i) acc += out.image.data[i] * dl.data[i];
        return acc;
    };
    const auto grads = rasterize_backward(splats, mask, 16, 16, cfg, dl);

    double worst = 0.0;
    for (size_t i = 0; i < splats.size(); ++i) {
        Splat2D& s = splats[i];
        const double analytic[9] = {grads[i].d_mean.x(), grads[i].d_mean.y(), grads[i].d_cxx,
                                    grads[i].d_cxy,      grads[i].d_cyy,      grads[i].d_alpha,
                                    grads[i].d_color.x(), grads[i].d_color.y(),
                                    grads[i].d_color.z()};
        double* slots[9] = {&s.mean.x(), &s.mean.y(), &s.cxx,        &s.cxy,        &s.cyy,
                            &s.alpha,    &s.color.x(), &s.color.y(), &s.color.z()};
        for (int j = 0; j < 9; ++j)
            worst = std::max(worst, verify_detail::max_grad_err(f, slots[j], 1, &analytic[j]));
    }
    INFO("max rel err " << worst);
    CHECK(worst < 1e-3);
}

TEST_CASE("mean intensity gradient w.r.t. camera translation matches finite differences") {
    RasterizeConfig cfg;
    cfg.min_transmittance = 0.0;
    cfg.sigma_cutoff = 30.0;
    const Intrinsics intr = make_intr(16, 14);
    CameraPose pose;
    pose.translation = Vec3(0.05, -0.1, -2.0);

    Rng rng(61);
    std::vector<NeuralGaussian> gaussians;
    for (int i = 0; i < 5; ++i) {
        NeuralGaussian g;
        g.mu = Vec3(rng.uniform(-0.5, 0.5), rng.uniform(-0.5, 0.5), rng.uniform(-0.3, 0.5));
        g.alpha = rng.uniform(0.2, 0.7);
        g.q = Quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal()).normalized();
        g.s = Vec3(rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2), rng.uniform(0.05, 0.2));
        g.c = Vec3(rng.uniform(), rng.uniform(), rng.uniform());
        gaussians.push_back(g);
    }

    auto render_mean = [&] {
        std::vector<Splat2D> splats;
        std::vector<char> mask;
        for (const auto& g : gaussians) {
            const auto s = project_gaussian(g, intr, pose, cfg.cov_floor);
            if (!s) continue;
            splats.push_back(*s);
            mask.push_back(1);
        }
        const auto out = rasterize(splats, mask, 16, 16, cfg);
        double acc = 0.0;
        for (double v : out.image.data) acc += v;
        return acc / static_cast<double>(out.image.size());
    };

    // Analytic gradient through projection + rasterization.
    std::vector<Splat2D> splats;
    std::vector<char> mask;
    std::vector<ProjectCache> caches;
    std::vector<int> idx;
    for (size_t gi = 0; gi < gaussians.size(); ++gi) {
        ProjectCache pc;
        const auto s = project_gaussian(gaussians[gi], intr, pose, cfg.cov_floor, &pc);
        if (!s) continue;
        splats.push_back(*s);
        mask.push_back(1);
        caches.push_back(pc);
        idx.push_back(static_cast<int>(gi));
    }
    REQUIRE(splats.size() >= 4);
    const auto out = rasterize(splats, mask, 16, 16, cfg);
    Image dl(16, 16, 3, 1.0 / static_cast<double>(out.image.size()));
    const auto raster_grads = rasterize_backward(splats, mask, 16, 16, cfg, dl);
    Eigen::Matrix<double, 7, 1> dpose = Eigen::Matrix<double, 7, 1>::Zero();
    for (size_t si = 0; si < splats.size(); ++si)
        dpose += project_gaussian_backward(gaussians[idx[si]], intr, pose, caches[si],
                                           raster_grads[si])
                     .d_pose;

    const double worst = verify_detail::max_grad_err(render_mean, pose.translation.data(), 3,
                                                     dpose.data(), 1e-4);
    INFO("max rel err " << worst);
    CHECK(worst < 5e-3);
}
