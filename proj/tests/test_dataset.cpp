#include "semvox/dataset.hpp"

#include "semvox/synthetic.hpp"
#include "semvox/png_io.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace semvox;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
    const fs::path dir = fs::temp_directory_path() / "semvox_dataset_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

SceneSpec small_scene() {
    std::istringstream txt(R"(
label road 90 90 90
label building 200 120 60
hplane 0 -8 8 -8 8 road
box 2 3 -1 1 0 1 building
pose 0 0 1.5 0 0 0 1
pose 0.5 0 1.5 0 0 0 1
pose 1.0 0 1.5 0 0 0 1
lidar 256 32 20 20
camera 64 48 40 40 32 24
seed 3
)");
    return SceneSpec::parse(txt, "<test>");
}

// Tokens with comments/whitespace stripped; config round-trip compares these.
std::vector<std::string> config_tokens(const std::string& text) {
    std::vector<std::string> tokens;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ls(line);
        std::string tok;
        while (ls >> tok) tokens.push_back(tok);
    }
    return tokens;
}

}  // namespace

TEST_SUITE("dataset-io") {

TEST_CASE("synthetic dataset round-trips through the loader") {
    const fs::path dir = fresh_dir("roundtrip");
    const SceneSpec scene = small_scene();
    write_dataset(scene, dir.string(), 50.0);

    DatasetReader reader(dir.string());
    CHECK(reader.size() == 3);
    CHECK(reader.has_labelset());
    CHECK(reader.labelset().size() == 3);
    CHECK(reader.lidar().width == 256);

    const Frame frame = reader.read(1);
    const PosedCloud expected = render_scan(scene, 1);
    REQUIRE(frame.cloud.points.size() == expected.points.size());
    for (size_t i = 0; i < expected.points.size(); ++i) {
        // scans are stored as float32
        CHECK(frame.cloud.points[i].x() ==
              doctest::Approx(static_cast<float>(expected.points[i].x())).epsilon(1e-7));
    }
    CHECK((frame.cloud.pose.translation() - scene.trajectory[1].translation()).norm() < 1e-7);

    REQUIRE(frame.label.has_value());
    const LabelImage expected_labels = render_labels(scene, 1);
    CHECK(frame.label->labels == expected_labels.labels);
    CHECK(frame.label->fx == doctest::Approx(40.0));
}

TEST_CASE("missing labels directory still yields geometry frames") {
    const fs::path dir = fresh_dir("geometry_only");
    write_dataset(small_scene(), dir.string(), 50.0);
    fs::remove(dir / "labels_index.txt");
    fs::remove_all(dir / "labels");

    DatasetReader reader(dir.string());
    CHECK_FALSE(reader.has_label_images());
    const Frame frame = reader.read(0);
    CHECK_FALSE(frame.label.has_value());
}

TEST_CASE("scan/pose count mismatch is fatal with both counts") {
    const fs::path dir = fresh_dir("mismatch");
    write_dataset(small_scene(), dir.string(), 50.0);
    // drop the last pose line: 3 scans, 2 poses
    std::ifstream in(dir / "poses.txt");
    std::string line, kept;
    int n = 0;
    while (std::getline(in, line))
        if (n++ < 2) kept += line + "\n";
    in.close();
    std::ofstream(dir / "poses.txt") << kept;

    try {
        DatasetReader reader(dir.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        const std::string what = e.what();
        CHECK(what.find("3 scans") != std::string::npos);
        CHECK(what.find("2 poses") != std::string::npos);
    }
}

TEST_CASE("missing poses file is fatal") {
    const fs::path dir = fresh_dir("no_poses");
    write_dataset(small_scene(), dir.string(), 50.0);
    fs::remove(dir / "poses.txt");
    CHECK_THROWS_AS(DatasetReader{dir.string()}, DataError);
}

TEST_CASE("kitti binary scans and labels read back") {
    const fs::path dir = fresh_dir("kitti");
    const std::string bin = (dir / "scan.bin").string();
    {
        std::ofstream os(bin, std::ios::binary);
        const float rows[2][4] = {{1.f, 2.f, 3.f, 0.5f}, {-4.f, 5.f, -6.f, 0.1f}};
        os.write(reinterpret_cast<const char*>(rows), sizeof(rows));
    }
    const auto points = read_kitti_bin(bin);
    REQUIRE(points.size() == 2);
    CHECK(points[0] == Vec3d(1, 2, 3));
    CHECK(points[1] == Vec3d(-4, 5, -6));

    const std::string lbl = (dir / "scan.label").string();
    {
        std::ofstream os(lbl, std::ios::binary);
        const uint32_t raw[2] = {0x00010005u, 0x0000000Au};  // instance bits ignored
        os.write(reinterpret_cast<const char*>(raw), sizeof(raw));
    }
    const auto labels = read_kitti_labels(lbl);
    REQUIRE(labels.size() == 2);
    CHECK(labels[0] == 5);
    CHECK(labels[1] == 10);

    std::ofstream(dir / "bad.bin", std::ios::binary) << "xyz";
    CHECK_THROWS_AS(read_kitti_bin((dir / "bad.bin").string()), DataError);
}

TEST_CASE("lidar model config round-trips") {
    const fs::path dir = fresh_dir("lidar_cfg");
    const ProjectionModel model = ProjectionModel::spinning(2048, 128, 22.5, 22.5);
    const std::string path = (dir / "lidar.cfg").string();
    save_lidar_cfg(path, model);
    const ProjectionModel loaded = load_lidar_cfg(path);
    CHECK(loaded.width == model.width);
    CHECK(loaded.height_px == model.height_px);
    CHECK(loaded.theta0 == doctest::Approx(model.theta0).epsilon(1e-12));
    CHECK(loaded.delta_theta == doctest::Approx(model.delta_theta).epsilon(1e-12));
}

TEST_CASE("run config parses and serializes canonically") {
    const std::string canonical = R"([dataset]
root = /data/run1
output = out
frame_start = 0
frame_end = -1

[map]
voxel_size = 0.25
truncation = 1.25
num_labels = 4
max_blocks = 1048576

[integrator]
mode = non_projective
max_range = 70
alpha_epsilon = 0.01
min_weight_clamp = 0.01
drop_unreliable = false
use_bayes = true
camera_max_depth = 30

[traversability]
radius = 0.25
t_hd = 0.6
t_v = 20
t_r = 30
grid_resolution = 0.2
inflation_radius = 0
traversable = road,sidewalk
)";
    std::istringstream is(canonical);
    const RunConfig cfg = RunConfig::parse(is, "<test>");
    CHECK(cfg.dataset_root == "/data/run1");
    CHECK(cfg.map.voxel_size == 0.25f);
    CHECK(cfg.map.num_labels == 4);
    CHECK(cfg.integrator.mode == DistanceMode::non_projective);
    CHECK(cfg.traversable_names == std::vector<std::string>{"road", "sidewalk"});

    // serialize(parse(file)) == file modulo comments/whitespace
    CHECK(config_tokens(cfg.serialize()) == config_tokens(canonical));

    // and a file with comments parses to the same tokens
    std::istringstream commented("# a comment\n" + canonical + "\n# trailing\n");
    const RunConfig cfg2 = RunConfig::parse(commented, "<test>");
    CHECK(config_tokens(cfg2.serialize()) == config_tokens(canonical));
}

TEST_CASE("config errors carry the line number") {
    std::istringstream bad("[map]\nvoxel_size = abc\n");
    try {
        RunConfig::parse(bad, "cfg");
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("cfg:2") != std::string::npos);
    }
    std::istringstream unknown("[map]\nwibble = 3\n");
    CHECK_THROWS_AS(RunConfig::parse(unknown, "cfg"), DataError);
}

TEST_CASE("confidence companion image is picked up when present") {
    const fs::path dir = fresh_dir("confidence");
    const SceneSpec scene = small_scene();
    write_dataset(scene, dir.string(), 50.0);

    DatasetReader probe(dir.string());
    const Frame f0 = probe.read(0);
    REQUIRE(f0.label.has_value());
    CHECK(f0.label->confidence.empty());

    {
        std::vector<uint8_t> conf(
            static_cast<size_t>(f0.label->width) * f0.label->height, 204);  // 0.8
        write_png_gray8((dir / "labels" / "000000.png.conf.png").string(), f0.label->width,
                        f0.label->height, conf.data());
    }
    DatasetReader reader(dir.string());
    const Frame frame = reader.read(0);
    REQUIRE(frame.label.has_value());
    REQUIRE_FALSE(frame.label->confidence.empty());
    CHECK(frame.label->confidence[0] == doctest::Approx(0.8).epsilon(1e-2));
}

TEST_CASE("probability tensor is picked up when present") {
    const fs::path dir = fresh_dir("probs");
    const SceneSpec scene = small_scene();
    write_dataset(scene, dir.string(), 50.0);

    // attach a tensor to frame 0 (K = 3 classes)
    DatasetReader probe(dir.string());
    const Frame f0 = probe.read(0);
    REQUIRE(f0.label.has_value());
    const size_t n = static_cast<size_t>(f0.label->width) * f0.label->height * 3;
    {
        std::ofstream os(dir / "labels" / "000000.png.probs", std::ios::binary);
        std::vector<float> tensor(n, 1.f / 3.f);
        os.write(reinterpret_cast<const char*>(tensor.data()),
                 static_cast<std::streamsize>(n * sizeof(float)));
    }
    DatasetReader reader(dir.string());
    const Frame frame = reader.read(0);
    REQUIRE(frame.label.has_value());
    CHECK(frame.label->prob_tensor.size() == n);
}

}  // TEST_SUITE
