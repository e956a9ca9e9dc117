#include "semvox/synthetic.hpp"

#include "semvox/ply_io.hpp"
#include "semvox/png_io.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace semvox {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

uint64_t mix_seed(uint64_t seed, uint64_t index, uint64_t stream) {
    uint64_t x = seed + 0x9E3779B97F4A7C15ULL * (index + 1) + 0xD1B54A32D192ED03ULL * stream;
    x ^= x >> 30;
    x *= 0xBF58476D1CE4E5B9ULL;
    x ^= x >> 27;
    return x;
}

bool in_bounds_xy(const Primitive& p, double x, double y) {
    return x >= p.xmin && x <= p.xmax && y >= p.ymin && y <= p.ymax;
}

std::optional<double> hit_primitive(const Primitive& p, const Vec3d& o, const Vec3d& d,
                                    double t_min) {
    switch (p.kind) {
        case Primitive::Kind::hplane: {
            if (std::abs(d.z()) < 1e-12) return std::nullopt;
            const double t = (p.z - o.z()) / d.z();
            if (t <= t_min) return std::nullopt;
            const Vec3d q = o + t * d;
            if (!in_bounds_xy(p, q.x(), q.y())) return std::nullopt;
            return t;
        }
        case Primitive::Kind::iplane: {
            const double a = p.angle_deg * kDegToRad;
            const Vec3d n(-std::sin(a), 0.0, std::cos(a));
            const double denom = d.dot(n);
            if (std::abs(denom) < 1e-12) return std::nullopt;
            const double t = (Vec3d(0, 0, p.z) - o).dot(n) / denom;
            if (t <= t_min) return std::nullopt;
            const Vec3d q = o + t * d;
            if (!in_bounds_xy(p, q.x(), q.y())) return std::nullopt;
            return t;
        }
        case Primitive::Kind::box: {
            double t0 = t_min, t1 = std::numeric_limits<double>::infinity();
            const double lo[3] = {p.xmin, p.ymin, p.zmin};
            const double hi[3] = {p.xmax, p.ymax, p.zmax};
            for (int i = 0; i < 3; ++i) {
                if (std::abs(d[i]) < 1e-12) {
                    if (o[i] < lo[i] || o[i] > hi[i]) return std::nullopt;
                    continue;
                }
                double ta = (lo[i] - o[i]) / d[i];
                double tb = (hi[i] - o[i]) / d[i];
                if (ta > tb) std::swap(ta, tb);
                t0 = std::max(t0, ta);
                t1 = std::min(t1, tb);
                if (t0 > t1) return std::nullopt;
            }
            return t0;
        }
    }
    return std::nullopt;
}

}  // namespace

void SceneSpec::validate() const {
    if (primitives.empty()) throw DataError("scene has no primitives");
    if (flip_rate < 0.0 || flip_rate >= 1.0) throw DataError("flip rate must be in [0, 1)");
    if (labels.size() < 1) throw DataError("scene has no label set");
    for (const Primitive& p : primitives)
        if (p.label < 0 || p.label >= labels.size())
            throw DataError("primitive label id out of range");
    lidar.validate();
}

std::optional<RayHit> raycast_scene(const SceneSpec& scene, const Vec3d& origin,
                                    const Vec3d& dir, double t_min) {
    RayHit best;
    best.t = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i < scene.primitives.size(); ++i) {
        const auto t = hit_primitive(scene.primitives[i], origin, dir, t_min);
        if (t && *t < best.t) {
            best.t = *t;
            best.primitive = static_cast<int>(i);
        }
    }
    if (best.primitive < 0) return std::nullopt;
    best.point = origin + best.t * dir;
    return best;
}

int label_at_hit(const SceneSpec& scene, const RayHit& hit) {
    const Primitive& prim = scene.primitives[static_cast<size_t>(hit.primitive)];
    if (prim.kind == Primitive::Kind::hplane) {
        for (const StripRegion& s : scene.strips)
            if (hit.point.x() >= s.xmin && hit.point.x() <= s.xmax &&
                hit.point.y() >= s.ymin && hit.point.y() <= s.ymax)
                return s.label;
    }
    return prim.label;
}

PosedCloud render_scan(const SceneSpec& scene, size_t pose_index) {
    if (pose_index >= scene.trajectory.size())
        throw std::out_of_range("pose index beyond trajectory");
    const Pose& pose = scene.trajectory[pose_index];
    const Vec3d origin = pose.translation();
    const Eigen::Matrix3d rot = pose.rotation();

    Rng rng(mix_seed(scene.seed, pose_index, 1));
    PosedCloud cloud;
    cloud.pose = pose;
    cloud.timestamp = 0.1 * static_cast<double>(pose_index);
    cloud.points.reserve(static_cast<size_t>(scene.lidar.width) * scene.lidar.height_px / 4);

    for (int v = 0; v < scene.lidar.height_px; ++v) {
        for (int u = 0; u < scene.lidar.width; ++u) {
            const Vec3d dir_sensor = back_project(u, v, 1.0, scene.lidar).normalized();
            const Vec3d dir_world = rot * dir_sensor;
            const auto hit = raycast_scene(scene, origin, dir_world);
            if (!hit) continue;
            double range = hit->t;
            if (scene.noise_sigma > 0.0) range += scene.noise_sigma * rng.gaussian();
            if (range < scene.lidar.min_range) continue;
            cloud.points.push_back(range * dir_sensor);
        }
    }
    return cloud;
}

LabelImage render_labels(const SceneSpec& scene, size_t pose_index) {
    if (pose_index >= scene.trajectory.size())
        throw std::out_of_range("pose index beyond trajectory");
    const Pose cam_pose = scene.trajectory[pose_index] * scene.cam_mount;
    const Vec3d origin = cam_pose.translation();
    const Eigen::Matrix3d rot = cam_pose.rotation();

    const int sky = scene.unlabeled_id();
    const int num_classes = scene.labels.size();

    Rng rng(mix_seed(scene.seed, pose_index, 2));
    LabelImage img;
    img.width = scene.cam_width;
    img.height = scene.cam_height;
    img.fx = scene.fx;
    img.fy = scene.fy;
    img.cx = scene.cx;
    img.cy = scene.cy;
    img.pose = cam_pose;
    img.timestamp = 0.1 * static_cast<double>(pose_index);
    img.labels.assign(static_cast<size_t>(img.width) * img.height,
                      static_cast<uint16_t>(sky >= 0 ? sky : 0));
    img.confidence.assign(img.labels.size(), 0.9f);

    for (int v = 0; v < img.height; ++v) {
        for (int u = 0; u < img.width; ++u) {
            const Vec3d dir_cam((u + 0.5 - scene.cx) / scene.fx,
                                (v + 0.5 - scene.cy) / scene.fy, 1.0);
            const Vec3d dir_world = (rot * dir_cam).normalized();
            const auto hit = raycast_scene(scene, origin, dir_world);
            if (!hit) continue;
            int label = label_at_hit(scene, *hit);
            if (scene.flip_rate > 0.0 && num_classes > 1 && rng.uniform() < scene.flip_rate) {
                // uniformly random other class
                int other = static_cast<int>(rng.below(static_cast<uint64_t>(num_classes - 1)));
                if (other >= label) ++other;
                label = other;
            }
            img.labels[img.idx(u, v)] = static_cast<uint16_t>(label);
        }
    }
    return img;
}

EvalCloud ground_truth_cloud(const SceneSpec& scene, double density) {
    if (!(density > 0)) throw std::invalid_argument("density must be > 0");
    Rng rng(mix_seed(scene.seed, 0, 3));
    EvalCloud cloud;

    auto sample_rect = [&](auto&& to_point, double area, int label_default, bool strip_labels) {
        const size_t n = static_cast<size_t>(std::llround(area * density));
        for (size_t i = 0; i < n; ++i) {
            const Vec3d p = to_point(rng.uniform(), rng.uniform());
            int label = label_default;
            if (strip_labels)
                for (const StripRegion& s : scene.strips)
                    if (p.x() >= s.xmin && p.x() <= s.xmax && p.y() >= s.ymin && p.y() <= s.ymax)
                        label = s.label;
            cloud.points.push_back(p);
            cloud.labels.push_back(label);
        }
    };

    for (const Primitive& p : scene.primitives) {
        const double dx = p.xmax - p.xmin, dy = p.ymax - p.ymin;
        switch (p.kind) {
            case Primitive::Kind::hplane: {
                if (!std::isfinite(dx) || !std::isfinite(dy))
                    throw DataError("cannot sample an unbounded plane");
                sample_rect(
                    [&](double a, double b) {
                        return Vec3d(p.xmin + a * dx, p.ymin + b * dy, p.z);
                    },
                    dx * dy, p.label, true);
                break;
            }
            case Primitive::Kind::iplane: {
                if (!std::isfinite(dx) || !std::isfinite(dy))
                    throw DataError("cannot sample an unbounded plane");
                const double slope = std::tan(p.angle_deg * kDegToRad);
                const double area = dx * dy / std::cos(p.angle_deg * kDegToRad);
                sample_rect(
                    [&](double a, double b) {
                        const double x = p.xmin + a * dx;
                        return Vec3d(x, p.ymin + b * dy, p.z + slope * x);
                    },
                    area, p.label, false);
                break;
            }
            case Primitive::Kind::box: {
                const double dz = p.zmax - p.zmin;
                struct Face {
                    double area;
                    int axis;     // fixed axis
                    double value; // coordinate on that axis
                };
                const Face faces[6] = {
                    {dy * dz, 0, p.xmin}, {dy * dz, 0, p.xmax}, {dx * dz, 1, p.ymin},
                    {dx * dz, 1, p.ymax}, {dx * dy, 2, p.zmin}, {dx * dy, 2, p.zmax},
                };
                for (const Face& f : faces) {
                    sample_rect(
                        [&](double a, double b) {
                            if (f.axis == 0)
                                return Vec3d(f.value, p.ymin + a * dy, p.zmin + b * dz);
                            if (f.axis == 1)
                                return Vec3d(p.xmin + a * dx, f.value, p.zmin + b * dz);
                            return Vec3d(p.xmin + a * dx, p.ymin + b * dy, f.value);
                        },
                        f.area, p.label, false);
                }
                break;
            }
        }
    }
    return cloud;
}

SceneSpec SceneSpec::parse(std::istream& is, const std::string& origin) {
    SceneSpec scene;
    scene.labels = LabelSet{};
    std::string line;
    int line_no = 0;
    auto fail = [&](const std::string& why) {
        throw DataError(origin + ":" + std::to_string(line_no) + ": " + why);
    };
    auto label_id = [&](const std::string& name) {
        const int id = scene.labels.id_of(name);
        if (id < 0) fail("unknown label \"" + name + "\" (declare labels first)");
        return id;
    };
    auto parse_pose = [&](std::istringstream& ss) {
        double tx, ty, tz, qx, qy, qz, qw;
        if (!(ss >> tx >> ty >> tz >> qx >> qy >> qz >> qw)) fail("expected tx ty tz qx qy qz qw");
        Pose p = Pose::Identity();
        p.linear() = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
        p.translation() = Vec3d(tx, ty, tz);
        return p;
    };

    while (std::getline(is, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::istringstream ss(line);
        std::string word;
        if (!(ss >> word)) continue;

        if (word == "label") {
            std::string name;
            int r, g, b;
            if (!(ss >> name >> r >> g >> b)) fail("expected: label name r g b");
            scene.labels.names.push_back(name);
            scene.labels.colors.push_back(
                {static_cast<uint8_t>(r), static_cast<uint8_t>(g), static_cast<uint8_t>(b)});
        } else if (word == "hplane") {
            Primitive p;
            p.kind = Primitive::Kind::hplane;
            std::string name;
            if (!(ss >> p.z >> p.xmin >> p.xmax >> p.ymin >> p.ymax >> name))
                fail("expected: hplane z xmin xmax ymin ymax label");
            p.label = label_id(name);
            scene.primitives.push_back(p);
        } else if (word == "iplane") {
            Primitive p;
            p.kind = Primitive::Kind::iplane;
            std::string name;
            if (!(ss >> p.angle_deg >> p.z >> p.xmin >> p.xmax >> p.ymin >> p.ymax >> name))
                fail("expected: iplane angle_deg z0 xmin xmax ymin ymax label");
            p.label = label_id(name);
            scene.primitives.push_back(p);
        } else if (word == "box") {
            Primitive p;
            p.kind = Primitive::Kind::box;
            std::string name;
            if (!(ss >> p.xmin >> p.xmax >> p.ymin >> p.ymax >> p.zmin >> p.zmax >> name))
                fail("expected: box xmin xmax ymin ymax zmin zmax label");
            p.label = label_id(name);
            scene.primitives.push_back(p);
        } else if (word == "strip") {
            StripRegion s;
            std::string name;
            if (!(ss >> s.xmin >> s.xmax >> s.ymin >> s.ymax >> name))
                fail("expected: strip xmin xmax ymin ymax label");
            s.label = label_id(name);
            scene.strips.push_back(s);
        } else if (word == "pose") {
            std::istringstream rest(line.substr(line.find("pose") + 4));
            scene.trajectory.push_back(parse_pose(rest));
        } else if (word == "lidar") {
            int w, h;
            double up, down;
            if (!(ss >> w >> h >> up >> down))
                fail("expected: lidar width height fov_up_deg fov_down_deg");
            scene.lidar = ProjectionModel::spinning(w, h, up, down);
        } else if (word == "camera") {
            if (!(ss >> scene.cam_width >> scene.cam_height >> scene.fx >> scene.fy >>
                  scene.cx >> scene.cy))
                fail("expected: camera width height fx fy cx cy");
        } else if (word == "camera_mount") {
            scene.cam_mount = parse_pose(ss);
        } else if (word == "noise") {
            if (!(ss >> scene.noise_sigma >> scene.flip_rate))
                fail("expected: noise sigma flip_rate");
        } else if (word == "seed") {
            if (!(ss >> scene.seed)) fail("expected: seed value");
        } else {
            fail("unknown directive \"" + word + "\"");
        }
    }
    if (scene.labels.id_of("unlabeled") < 0) {
        scene.labels.names.push_back("unlabeled");
        scene.labels.colors.push_back(Rgb{});
    }
    scene.validate();
    return scene;
}

SceneSpec SceneSpec::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open scene: " + path);
    return parse(is, path);
}

void write_dataset(const SceneSpec& scene, const std::string& out_dir, double gt_density) {
    namespace fs = std::filesystem;
    scene.validate();
    if (scene.trajectory.empty()) throw DataError("scene has no trajectory");
    fs::create_directories(fs::path(out_dir) / "scans");
    fs::create_directories(fs::path(out_dir) / "labels");

    std::ofstream poses(fs::path(out_dir) / "poses.txt");
    std::ofstream index(fs::path(out_dir) / "labels_index.txt");
    char name[64];

    for (size_t i = 0; i < scene.trajectory.size(); ++i) {
        const PosedCloud cloud = render_scan(scene, i);
        std::snprintf(name, sizeof(name), "%06zu.bin", i);
        std::ofstream bin(fs::path(out_dir) / "scans" / name, std::ios::binary);
        for (const Vec3d& p : cloud.points) {
            const float row[4] = {static_cast<float>(p.x()), static_cast<float>(p.y()),
                                  static_cast<float>(p.z()), 0.f};
            bin.write(reinterpret_cast<const char*>(row), sizeof(row));
        }

        const Pose& pose = scene.trajectory[i];
        const Eigen::Quaterniond q(pose.rotation());
        char buf[256];
        std::snprintf(buf, sizeof(buf), "%.6f %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n",
                      cloud.timestamp, pose.translation().x(), pose.translation().y(),
                      pose.translation().z(), q.x(), q.y(), q.z(), q.w());
        poses << buf;

        const LabelImage li = render_labels(scene, i);
        std::vector<uint8_t> px(li.labels.size());
        for (size_t j = 0; j < px.size(); ++j) px[j] = static_cast<uint8_t>(li.labels[j]);
        std::snprintf(name, sizeof(name), "%06zu.png", i);
        const std::string img_rel = std::string("labels/") + name;
        write_png_gray8((fs::path(out_dir) / img_rel).string(), li.width, li.height, px.data());

        const Eigen::Quaterniond cq(li.pose.rotation());
        std::snprintf(buf, sizeof(buf),
                      "%s %.6f %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g %.9g\n",
                      img_rel.c_str(), li.timestamp, li.fx, li.fy, li.cx, li.cy,
                      li.pose.translation().x(), li.pose.translation().y(),
                      li.pose.translation().z(), cq.x(), cq.y(), cq.z(), cq.w());
        index << buf;
    }

    std::ofstream lidar(fs::path(out_dir) / "lidar.cfg");
    char buf[512];
    std::snprintf(buf, sizeof(buf),
                  "width = %d\nheight = %d\ntheta0_deg = %.17g\ndelta_theta_deg = %.17g\n"
                  "scale = %.17g\noffset = %.17g\nmin_range = %.17g\n",
                  scene.lidar.width, scene.lidar.height_px,
                  scene.lidar.theta0 / kDegToRad, scene.lidar.delta_theta / kDegToRad,
                  scene.lidar.scale_f, scene.lidar.offset_o, scene.lidar.min_range);
    lidar << buf;

    scene.labels.save((fs::path(out_dir) / "labelset.cfg").string());
    write_cloud_ply((fs::path(out_dir) / "gt_cloud.ply").string(),
                    ground_truth_cloud(scene, gt_density), &scene.labels);
}

}  // namespace semvox
