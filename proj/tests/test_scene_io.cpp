#include "hbgs/checkpoint.hpp"
#include "hbgs/scene_io.hpp"
#include "hbgs/verify.hpp"

#include <catch2/catch_amalgamated.hpp>

#include <cstring>
#include <filesystem>
#include <fstream>

using namespace hbgs;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("hbgs_test_" + std::to_string(::getpid()) + "_" +
                std::to_string(reinterpret_cast<uintptr_t>(this)));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p);
    out << content;
}

void write_minimal_fixture(const fs::path& dir) {
    write_file(dir / "cameras.txt",
               "# comment\n1 SIMPLE_PINHOLE 100 100 100 50 50\n");
    write_file(dir / "images.txt",
               "# comment\n1 1 0 0 0 0 0 0 1 view_0000.png\n\n");
    write_file(dir / "points3D.txt", "# comment\n1 0 0 5 200 10 10 0.5\n");
}

}  // namespace

TEST_CASE("parse_colmap_text minimal fixture") {
    TempDir tmp;
    write_minimal_fixture(tmp.path);
    const SceneBundle bundle = parse_colmap_text(tmp.path);
    REQUIRE(bundle.cameras.size() == 1);
    REQUIRE(bundle.points.size() == 1);
    const SceneCamera& cam = bundle.cameras[0];
    CHECK(cam.intr.fx == 100);
    CHECK(cam.intr.fy == 100);
    CHECK(cam.intr.cx == 50);
    CHECK(cam.intr.cy == 50);
    CHECK(cam.pose.translation.norm() == 0.0);
    CHECK(quat_angle_deg(cam.pose.rotation, Quaternion::identity()) < 1e-12);
    CHECK((bundle.points[0] - Vec3(0, 0, 5)).norm() == 0.0);
    CHECK(cam.name == "view_0000.png");
}

TEST_CASE("colmap pose convention: stored world-to-camera inverts to camera-to-world") {
    TempDir tmp;
    // w2c: 90 degrees about y, translation (1, 2, 3).
    const Quaternion q_w2c = quat_from_axis_angle(Vec3(0, 1, 0), deg_to_rad(90));
    write_file(tmp.path / "cameras.txt", "1 PINHOLE 64 64 50 50 32 32\n");
    {
        std::ofstream out(tmp.path / "images.txt");
        out << "1 " << q_w2c.w << " " << q_w2c.x << " " << q_w2c.y << " " << q_w2c.z
            << " 1 2 3 1 a.png\n\n";
    }
    write_file(tmp.path / "points3D.txt", "1 0.5 0 2 0 0 0 0\n");

    const SceneBundle bundle = parse_colmap_text(tmp.path);
    const CameraPose& pose = bundle.cameras[0].pose;

    // Check against the w2c transform directly: world_to_cam must reproduce
    // R_w2c * p + t for a test point.
    const Mat3 r_w2c = quat_to_rotmat(q_w2c);
    const Vec3 p(0.4, -0.7, 1.3);
    const Vec3 expect = r_w2c * p + Vec3(1, 2, 3);
    CHECK((world_to_cam(pose, p) - expect).norm() < 1e-12);
}

TEST_CASE("write then parse round-trips poses within 1e-9") {
    TempDir tmp;
    SyntheticSceneSpec spec;
    spec.seed = 5;
    spec.n_points = 20;
    spec.n_cameras = 4;
    spec.image_width = spec.image_height = 16;
    auto [gt, noisy] = generate_synthetic_scene(spec);
    write_colmap_text(gt, tmp.path);
    const SceneBundle back = parse_colmap_text(tmp.path);
    REQUIRE(back.cameras.size() == gt.cameras.size());
    REQUIRE(back.points.size() == gt.points.size());
    for (size_t i = 0; i < gt.cameras.size(); ++i) {
        CHECK(quat_angle_deg(back.cameras[i].pose.rotation, gt.cameras[i].pose.rotation) <
              rad_to_deg(1e-9));
        CHECK((back.cameras[i].pose.translation - gt.cameras[i].pose.translation).norm() < 1e-9);
    }
}

TEST_CASE("parse_colmap_text error cases") {
    TempDir tmp;
    write_minimal_fixture(tmp.path);

    SECTION("missing points3D.txt") {
        fs::remove(tmp.path / "points3D.txt");
        CHECK_THROWS_WITH(parse_colmap_text(tmp.path), "missing colmap file points3D.txt");
    }
    SECTION("missing cameras.txt") {
        fs::remove(tmp.path / "cameras.txt");
        CHECK_THROWS_WITH(parse_colmap_text(tmp.path), "missing colmap file cameras.txt");
    }
    SECTION("unsupported camera model") {
        write_file(tmp.path / "cameras.txt", "1 OPENCV 100 100 90 90 50 50 0 0 0 0\n");
        CHECK_THROWS_WITH(parse_colmap_text(tmp.path), "unsupported camera model OPENCV");
    }
    SECTION("malformed line reports its number") {
        write_file(tmp.path / "cameras.txt", "# header\n1 SIMPLE_PINHOLE 100 oops\n");
        CHECK_THROWS_WITH(parse_colmap_text(tmp.path), "malformed colmap line cameras.txt:2");
    }
}

TEST_CASE("synthetic scene generation") {
    SyntheticSceneSpec spec;
    spec.seed = 7;
    spec.n_points = 40;
    spec.n_cameras = 6;
    spec.image_width = spec.image_height = 24;

    SECTION("zero noise leaves poses identical") {
        auto [gt, noisy] = generate_synthetic_scene(spec);
        for (size_t i = 0; i < gt.cameras.size(); ++i) {
            CHECK(std::memcmp(&gt.cameras[i].pose.rotation, &noisy.cameras[i].pose.rotation,
                              sizeof(Quaternion)) == 0);
            CHECK((gt.cameras[i].pose.translation - noisy.cameras[i].pose.translation).norm() ==
                  0.0);
        }
    }
    SECTION("deterministic in the seed") {
        auto [gt1, n1] = generate_synthetic_scene(spec);
        auto [gt2, n2] = generate_synthetic_scene(spec);
        REQUIRE(gt1.images.size() == gt2.images.size());
        for (size_t i = 0; i < gt1.images.size(); ++i)
            CHECK(std::memcmp(gt1.images[i].data.data(), gt2.images[i].data.data(),
                              gt1.images[i].size() * sizeof(double)) == 0);
        for (size_t i = 0; i < gt1.points.size(); ++i)
            CHECK((gt1.points[i] - gt2.points[i]).norm() == 0.0);
    }
    SECTION("rotation noise stays within the bound") {
        spec.pose_noise_rot_deg = 5.0;
        spec.pose_noise_trans = 0.02;
        auto [gt, noisy] = generate_synthetic_scene(spec);
        for (size_t i = 0; i < gt.cameras.size(); ++i) {
            CHECK(quat_angle_deg(gt.cameras[i].pose.rotation, noisy.cameras[i].pose.rotation) <=
                  5.0 + 1e-9);
            CHECK((gt.cameras[i].pose.translation - noisy.cameras[i].pose.translation).norm() <=
                  0.02 * spec.scene_extent + 1e-12);
        }
    }
    SECTION("train/test split marks every eighth view") {
        auto [gt, noisy] = generate_synthetic_scene(spec);
        CHECK(gt.is_test[0] == 1);
        CHECK(gt.is_test[1] == 0);
        CHECK(gt.train_indices().size() + gt.test_indices().size() == gt.cameras.size());
    }
    SECTION("images contain signal") {
        auto [gt, noisy] = generate_synthetic_scene(spec);
        double acc = 0.0;
        for (double v : gt.images[0].data) acc += v;
        CHECK(acc > 1.0);
    }
}

TEST_CASE("checkpoint round trip is bit exact") {
    SceneBundle scene;
    auto model = make_tiny_model(3, &scene);
    TrainState st;
    st.model = std::move(model);
    st.step = 30000;

    // Make the optimizer state nontrivial before saving.
    Rng rng(8);
    for (ParamEntry& e : st.model->params.entries())
        for (size_t i = 0; i < e.size(); ++i) {
            e.adam_m[i] = rng.normal();
            e.adam_v[i] = std::abs(rng.normal());
        }

    TempDir tmp;
    const std::string path = (tmp.path / "ckpt.hbgs").string();
    save_state(st, path);
    TrainState back = load_state(path, scene);

    CHECK(back.step == 30000);
    REQUIRE(back.model->params.entries().size() == st.model->params.entries().size());
    for (size_t i = 0; i < st.model->params.entries().size(); ++i) {
        const ParamEntry& a = st.model->params.entries()[i];
        const ParamEntry& b = back.model->params.entries()[i];
        CHECK(a.name == b.name);
        REQUIRE(a.size() == b.size());
        CHECK(std::memcmp(a.value, b.value, a.size() * sizeof(double)) == 0);
        CHECK(std::memcmp(a.adam_m.data(), b.adam_m.data(), a.size() * sizeof(double)) == 0);
        CHECK(std::memcmp(a.adam_v.data(), b.adam_v.data(), a.size() * sizeof(double)) == 0);
    }
    REQUIRE(back.model->anchors.count() == st.model->anchors.count());
    for (int a = 0; a < st.model->anchors.count(); ++a)
        CHECK((back.model->anchors.positions[a] - st.model->anchors.positions[a]).norm() == 0.0);
    CHECK(back.model->model_hash() == st.model->model_hash());
}

TEST_CASE("checkpoint error cases") {
    SceneBundle scene;
    auto model = make_tiny_model(3, &scene);
    TrainState st;
    st.model = std::move(model);
    TempDir tmp;
    const std::string path = (tmp.path / "ckpt.hbgs").string();
    save_state(st, path);

    SECTION("wrong magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("NOPE", 4);
        f.close();
        CHECK_THROWS_WITH(load_state(path, scene), "corrupt checkpoint");
    }
    SECTION("version mismatch") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.seekp(4);
        const uint32_t v = 999;
        f.write(reinterpret_cast<const char*>(&v), 4);
        f.close();
        CHECK_THROWS_WITH(load_state(path, scene), "incompatible checkpoint version");
    }
    SECTION("truncated file") {
        const auto size = fs::file_size(path);
        fs::resize_file(path, size / 2);
        CHECK_THROWS_WITH(load_state(path, scene), "corrupt checkpoint");
    }
}

TEST_CASE("png round trip") {
    TempDir tmp;
    Image img(9, 13, 3);
    Rng rng(4);
    for (auto& v : img.data) v = rng.uniform();
    const std::string path = (tmp.path / "img.png").string();
    write_png(img, path);
    const Image back = read_png(path);
    REQUIRE(back.height == 9);
    REQUIRE(back.width == 13);
    // 8-bit quantization bounds the round-trip error.
    for (size_t i = 0; i < img.size(); ++i)
        CHECK(std::abs(back.data[i] - img.data[i]) <= 0.5 / 255.0 + 1e-12);
}
