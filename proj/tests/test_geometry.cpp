#include "hbgs/geometry.hpp"
#include "hbgs/random.hpp"
#include "hbgs/verify.hpp"

#include <catch2/catch_amalgamated.hpp>

using namespace hbgs;

TEST_CASE("quat_to_rotmat basic cases") {
    CHECK((quat_to_rotmat(Quaternion::identity()) - Mat3::Identity()).norm() == 0.0);

    const Mat3 rx = quat_to_rotmat(Quaternion(0, 1, 0, 0));
    Mat3 expect;
    expect << 1, 0, 0, 0, -1, 0, 0, 0, -1;
    CHECK((rx - expect).norm() < 1e-15);

    CHECK_THROWS_WITH(quat_to_rotmat(Quaternion(0, 0, 0, 0)), "zero quaternion");
}

TEST_CASE("quat_to_rotmat orthonormality and double cover") {
    Rng rng(17);
    for (int i = 0; i < 200; ++i) {
        Quaternion q(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        if (q.norm() < 1e-3) continue;
        const Mat3 r = quat_to_rotmat(q);
        CHECK((r.transpose() * r - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
        CHECK(r.determinant() == Catch::Approx(1.0).margin(1e-12));

        const Quaternion neg(-q.w, -q.x, -q.y, -q.z);
        CHECK((quat_to_rotmat(neg) - r).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("cam_to_world and world_to_cam") {
    CameraPose identity;
    CHECK((cam_to_world(identity, Vec3(1, 2, 3)) - Vec3(1, 2, 3)).norm() == 0.0);
    CHECK((world_to_cam(identity, Vec3(4, 5, 6)) - Vec3(4, 5, 6)).norm() == 0.0);

    CameraPose shifted;
    shifted.translation = Vec3(1, 2, 3);
    CHECK((cam_to_world(shifted, Vec3::Zero()) - Vec3(1, 2, 3)).norm() == 0.0);

    CameraPose back;
    back.translation = Vec3(0, 0, -1);
    CHECK((world_to_cam(back, Vec3::Zero()) - Vec3(0, 0, 1)).norm() == 0.0);
}

TEST_CASE("round trips over random poses") {
    Rng rng(23);
    for (int i = 0; i < 1000; ++i) {
        CameraPose pose;
        pose.rotation = Quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        if (pose.rotation.norm() < 1e-3) pose.rotation = Quaternion::identity();
        pose.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
        const Vec3 x(rng.normal(), rng.normal(), rng.normal());
        CHECK((cam_to_world(pose, world_to_cam(pose, x)) - x).norm() < 1e-10);
    }
}

TEST_CASE("pinhole projection") {
    Intrinsics intr;
    intr.fx = intr.fy = 100;
    intr.cx = intr.cy = 50;
    intr.width = intr.height = 100;
    intr.validate();
    CameraPose pose;

    SECTION("principal point at depth 2") {
        const auto p = project(intr, pose, Vec3(0, 0, 2));
        REQUIRE(p.has_value());
        CHECK(p->u == Catch::Approx(50.0));
        CHECK(p->v == Catch::Approx(50.0));
        CHECK(p->depth == Catch::Approx(2.0));
    }
    SECTION("off-axis point") {
        const auto p = project(intr, pose, Vec3(1, 0, 2));
        REQUIRE(p.has_value());
        CHECK(p->u == Catch::Approx(100.0));
        CHECK(p->v == Catch::Approx(50.0));
        CHECK(p->depth == Catch::Approx(2.0));
    }
    SECTION("behind camera") {
        CHECK_FALSE(project(intr, pose, Vec3(0, 0, -1)).has_value());
        CHECK_FALSE(project(intr, pose, Vec3(0.3, -0.2, 0)).has_value());
    }
}

TEST_CASE("backproject_unit_depth") {
    Intrinsics intr;
    intr.fx = intr.fy = 100;
    intr.cx = intr.cy = 50;
    intr.width = intr.height = 100;
    CameraPose pose;

    CHECK((backproject_unit_depth(intr, pose, 50, 50) - Vec3(0, 0, 1)).norm() == 0.0);
    CHECK((backproject_unit_depth(intr, pose, 150, 50) - Vec3(1, 0, 1)).norm() < 1e-12);

    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        CameraPose rp;
        rp.rotation = Quaternion(rng.normal(), rng.normal(), rng.normal(), rng.normal());
        if (rp.rotation.norm() < 1e-3) rp.rotation = Quaternion::identity();
        rp.translation = Vec3(rng.normal(), rng.normal(), rng.normal());
        const double u = rng.uniform(0, intr.width - 1.0);
        const double v = rng.uniform(0, intr.height - 1.0);
        const auto p = project(intr, rp, backproject_unit_depth(intr, rp, u, v));
        REQUIRE(p.has_value());
        CHECK(p->u == Catch::Approx(u).margin(1e-9));
        CHECK(p->v == Catch::Approx(v).margin(1e-9));
        CHECK(p->depth == Catch::Approx(1.0).margin(1e-12));
    }
}

TEST_CASE("intrinsics validation") {
    Intrinsics intr;
    intr.fx = intr.fy = 10;
    intr.cx = intr.cy = 5;
    intr.width = intr.height = 10;
    CHECK_NOTHROW(intr.validate());
    intr.fx = 0;
    CHECK_THROWS(intr.validate());
    intr.fx = 10;
    intr.cx = 10;
    CHECK_THROWS(intr.validate());
}

TEST_CASE("pose 7-vector round trip") {
    CameraPose p;
    p.rotation = Quaternion(0.3, -0.2, 0.9, 0.1);
    p.translation = Vec3(1.5, -2.0, 0.25);
    const auto v = pose_to_vec7(p);
    const CameraPose q = pose_from_vec7(v);
    CHECK(q.rotation.w == p.rotation.w);
    CHECK((q.translation - p.translation).norm() == 0.0);
}

TEST_CASE("geodesic angle") {
    const Quaternion a = Quaternion::identity();
    const Quaternion b = quat_from_axis_angle(Vec3(0, 1, 0), deg_to_rad(5.0));
    CHECK(quat_angle_deg(a, b) == Catch::Approx(5.0).margin(1e-9));
    const Quaternion nb(-b.w, -b.x, -b.y, -b.z);
    CHECK(quat_angle_deg(a, nb) == Catch::Approx(5.0).margin(1e-9));
}

TEST_CASE("projection gradients match finite differences") {
    const CheckItem item = check_geometry_gradients(41);
    INFO(item.name << " err " << item.value);
    CHECK(item.pass);
}
