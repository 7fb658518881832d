#include "hbgs/fusion.hpp"
#include "hbgs/verify.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hbgs;

namespace {
Intrinsics make_intr() {
    Intrinsics intr;
    intr.fx = intr.fy = 50;
    intr.cx = intr.cy = 32;
    intr.width = intr.height = 64;
    return intr;
}
}  // namespace

TEST_CASE("match_camera") {
    SECTION("anchor at a camera center") {
        std::vector<CameraPose> cams(3);
        cams[0].translation = Vec3(1, 0, 0);
        cams[1].translation = Vec3(0, 2, 0);
        cams[2].translation = Vec3(0, 0, 3);
        const CameraMatch m = match_camera(Vec3(0, 2, 0), cams);
        CHECK(m.camera_index == 1);
        CHECK(m.dist == 0.0);
    }
    SECTION("nearest of two centers") {
        std::vector<CameraPose> cams(2);
        cams[0].translation = Vec3(0, 0, 2);
        cams[1].translation = Vec3(0, 0, 1);
        const CameraMatch m = match_camera(Vec3(0, 0, 0), cams);
        CHECK(m.camera_index == 1);
        CHECK(m.dist == Catch::Approx(1.0));
    }
    SECTION("ties go to the lowest index") {
        std::vector<CameraPose> cams(3);
        cams[0].translation = Vec3(0, 0, 2);
        cams[1].translation = Vec3(0, 0, -2);
        cams[2].translation = Vec3(0, 2, 0);
        const CameraMatch m = match_camera(Vec3(0, 0, 0), cams);
        CHECK(m.camera_index == 0);
    }
}

TEST_CASE("match_pixel fixtures") {
    const Intrinsics intr = make_intr();
    CameraPose pose;  // identity

    SECTION("unit-depth on-axis point") {
        const auto m = match_pixel(Vec3(0, 0, 1), intr, pose);
        REQUIRE(m.has_value());
        CHECK(m->u == 32);
        CHECK(m->v == 32);
        CHECK(m->dist == Catch::Approx(0.0).margin(1e-12));
    }
    SECTION("on-axis point at depth 2") {
        const auto m = match_pixel(Vec3(0, 0, 2), intr, pose);
        REQUIRE(m.has_value());
        CHECK(m->u == 32);
        CHECK(m->v == 32);
        CHECK(m->dist == Catch::Approx(1.0));
    }
    SECTION("behind camera is unmatched") {
        CHECK_FALSE(match_pixel(Vec3(0, 0, -1), intr, pose).has_value());
    }
    SECTION("distance is zero exactly on a backprojected pixel point") {
        const Vec3 anchor = backproject_unit_depth(intr, pose, 17, 5);
        const auto m = match_pixel(anchor, intr, pose);
        REQUIRE(m.has_value());
        CHECK(m->u == 17);
        CHECK(m->v == 5);
        CHECK(m->dist < 1e-12);
    }
}

TEST_CASE("match_pixel agrees with the exhaustive argmin") {
    const CheckItem item = verify_pixel_matching(321);
    INFO("failures " << item.value);
    CHECK(item.pass);
}

TEST_CASE("match_camera agrees with the brute-force scan") {
    const CheckItem item = verify_camera_matching(321);
    CHECK(item.pass);
}

TEST_CASE("fuse_features") {
    SECTION("zero weights return the bias") {
        Rng rng(1);
        FusionNet net;
        net.init(4, 4, 3, rng);
        net.h.W.setZero();
        net.h.b << 0.1, 0.2, 0.3;
        const VectorXd h =
            fuse_features(net, VectorXd::Constant(4, 5.0), VectorXd::Constant(4, -2.0), 1.0, 2.0);
        CHECK((h - Vec3(0.1, 0.2, 0.3)).norm() == 0.0);
    }
    SECTION("identity block selects the anchor feature") {
        Rng rng(1);
        FusionNet net;
        net.init(3, 3, 3, rng);
        net.h.W.setZero();
        net.h.b.setZero();
        net.h.W.block(0, 0, 3, 3) = Eigen::Matrix3d::Identity();
        VectorXd af(3);
        af << 0.5, -0.25, 2.0;
        const VectorXd h = fuse_features(net, af, VectorXd::Constant(3, 9.0), 3.0, 4.0);
        CHECK((h - af).cwiseAbs().maxCoeff() == 0.0);
    }
    SECTION("shape error") {
        Rng rng(1);
        FusionNet net;
        net.init(4, 4, 3, rng);
        CHECK_THROWS_WITH(fuse_features(net, VectorXd::Zero(3), VectorXd::Zero(4), 0, 0),
                          "fusion shape error");
    }
}

TEST_CASE("fusion gradients match finite differences") {
    const CheckItem item = check_fusion_gradients(55);
    CHECK(item.pass);
}

TEST_CASE("match distance pose gradient matches finite differences") {
    Rng rng(13);
    const Intrinsics intr = make_intr();
    for (int trial = 0; trial < 5; ++trial) {
        CameraPose pose;
        pose.rotation = Quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        if (pose.rotation.norm() < 0.3) pose.rotation = Quaternion::identity();
        pose.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
        const Vec3 anchor = cam_to_world(pose, Vec3(0.2 * rng.normal(), 0.2 * rng.normal(),
                                                    1.5 + rng.uniform()));
        const int u = 10 + static_cast<int>(rng.uniform_int(40));
        const int v = 10 + static_cast<int>(rng.uniform_int(40));
        const double w1 = rng.normal(), w2 = rng.normal();

        auto f = [&] {
            const double dc = (anchor - pose.translation).norm();
            const double dp = (anchor - backproject_unit_depth(intr, pose, u, v)).norm();
            return w1 * dc + w2 * dp;
        };
        const auto g7 = match_distance_pose_grad(anchor, intr, pose, u, v, w1, w2);

        double worst = verify_detail::max_grad_err(f, pose.translation.data(), 3, g7.data());
        worst = std::max(worst,
                         verify_detail::max_grad_err(f, &pose.rotation.w, 4, g7.data() + 3));
        INFO("trial " << trial << " worst " << worst);
        CHECK(worst < 1e-3);
    }
}

TEST_CASE("match_anchors drops anchors behind the nearest camera") {
    std::vector<Intrinsics> intr = {make_intr()};
    std::vector<CameraPose> poses(1);  // identity: +z in front
    const std::vector<Vec3> anchors = {Vec3(0, 0, 2), Vec3(0, 0, -2)};
    const auto matches = match_anchors(anchors, intr, poses);
    REQUIRE(matches.size() == 1);
    CHECK(matches[0].anchor_index == 0);
}
