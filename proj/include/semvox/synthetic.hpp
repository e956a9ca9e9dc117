#pragma once

#include "semvox/evaluation.hpp"
#include "semvox/scan_projection.hpp"
#include "semvox/semantic_integrator.hpp"
#include "semvox/types.hpp"

#include <optional>
#include <random>
#include <string>
#include <vector>

namespace semvox {

// Deterministic random stream: raw mt19937_64 with hand-rolled transforms so
// outputs are reproducible across standard libraries.
class Rng {
public:
    explicit Rng(uint64_t seed) : eng_(seed) {}

    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }  // [0, 1)

    double gaussian() {  // Box-Muller
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 2.0 * std::numbers::pi * uniform();
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    uint64_t below(uint64_t n) {  // uniform in [0, n)
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x = eng_();
        while (x >= limit) x = eng_();
        return x % n;
    }

private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

struct Primitive {
    enum class Kind { hplane, iplane, box };
    Kind kind = Kind::hplane;
    int label = 0;
    double z = 0.0;          // hplane height; iplane passes through (0, 0, z)
    double angle_deg = 0.0;  // iplane tilt about the y axis
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    double zmin = 0, zmax = 0;  // box only
};

// Label-override region applied to horizontal-plane hits.
struct StripRegion {
    double xmin = 0, xmax = 0, ymin = 0, ymax = 0;
    int label = 0;
};

struct SceneSpec {
    LabelSet labels;  // last class is "unlabeled" (appended when missing)
    std::vector<Primitive> primitives;
    std::vector<StripRegion> strips;
    std::vector<Pose> trajectory;
    ProjectionModel lidar = ProjectionModel::spinning(1024, 64, 22.5, 22.5);

    int cam_width = 320, cam_height = 240;
    double fx = 200, fy = 200, cx = 160, cy = 120;
    Pose cam_mount = Pose::Identity();  // camera pose in the sensor frame

    double noise_sigma = 0.0;  // range noise, meters
    double flip_rate = 0.0;    // label corruption probability
    uint64_t seed = 0;

    int unlabeled_id() const { return labels.id_of("unlabeled"); }
    void validate() const;

    // Plain-text scene grammar, one directive per line; see README.
    static SceneSpec parse_file(const std::string& path);
    static SceneSpec parse(std::istream& is, const std::string& origin);
};

struct RayHit {
    double t = 0.0;
    int primitive = -1;
    Vec3d point = Vec3d::Zero();
};

// Nearest primitive along origin + t * dir, t > t_min.
std::optional<RayHit> raycast_scene(const SceneSpec& scene, const Vec3d& origin,
                                    const Vec3d& dir, double t_min = 1e-6);

// Class at a surface point; strips override labels of horizontal-plane hits.
int label_at_hit(const SceneSpec& scene, const RayHit& hit);

// Analytic LiDAR scan from the trajectory pose; Gaussian range noise added,
// no-hit rays omitted. Points are in the sensor frame.
PosedCloud render_scan(const SceneSpec& scene, size_t pose_index);

// Analytic camera labeling; sky pixels get the "unlabeled" id, hit pixels are
// flipped to a uniformly random other real class at the configured rate.
LabelImage render_labels(const SceneSpec& scene, size_t pose_index);

// Uniform surface sampling at `density` points per square meter.
EvalCloud ground_truth_cloud(const SceneSpec& scene, double density);

// Emits the dataset layout consumed by DatasetReader (scans/, poses.txt,
// labels/, labels_index.txt, lidar.cfg, labelset.cfg, gt_cloud.ply).
void write_dataset(const SceneSpec& scene, const std::string& out_dir,
                   double gt_density = 200.0);

}  // namespace semvox
