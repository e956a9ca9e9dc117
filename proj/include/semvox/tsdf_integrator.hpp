#pragma once

#include "semvox/scan_projection.hpp"
#include "semvox/types.hpp"
#include "semvox/voxel_store.hpp"

#include <string>
#include <vector>

namespace semvox {

enum class DistanceMode { projective, non_projective };

struct IntegratorConfig {
    DistanceMode mode = DistanceMode::non_projective;
    float truncation = 0.f;        // <= 0: use the map's truncation
    double max_range = 70.0;       // meters
    double alpha_epsilon = 1e-2;   // radians; seam of the two distance branches
    float min_weight_clamp = 0.01f;
    // Drop pixels without a valid normal instead of integrating them
    // projectively (lowers coverage, mirrors the strict behavior).
    bool drop_unreliable = false;
};

struct FrameReport {
    int frame = -1;
    size_t updated_voxels = 0;
    size_t new_blocks = 0;
    double elapsed_ms = 0.0;

    std::string json_line() const;
};

// One voxel measurement: the projective distance along the ray plus the
// angles that turn it into the non-projective (Euclidean-like) distance.
struct DistanceSample {
    double psi = 0.0;    // projective signed distance, meters
    double theta = 0.0;  // ray vs voxel gradient, radians
    double alpha = 0.0;  // voxel gradient vs measured surface normal, radians
    double d = 0.0;      // non-projective signed distance, meters
};

DistanceSample make_distance_sample(double psi, double theta, double alpha,
                                    double alpha_epsilon);

// Signed distance from the voxel center to the measured surface along the
// sensor ray; positive on the sensor side.
double projective_distance(const Vec3d& voxel_center, const Vec3d& sensor_origin,
                           const Vec3d& measured_point);

// Normal-aware correction of the projective distance. theta is the angle
// between the ray and the voxel gradient, alpha between the gradient and the
// measured surface normal; the second branch carries the sign of psi.
double nonprojective_distance(double psi, double theta, double alpha, double alpha_epsilon);

// Linear weight (psi + tau) / (2 tau), clamped to [min_clamp, 1].
float observation_weight(double psi, double tau, float min_clamp);

// Truncation Gamma(d, tau): clamp to [-tau, tau].
inline float truncate_distance(double d, double tau) {
    return static_cast<float>(d >= 0.0 ? std::min(d, tau) : std::max(d, -tau));
}

// Single-observation weighted running-average update.
TsdfVoxel fuse_voxel(const TsdfVoxel& old, double d, float w_new, const Vec3f& n_measured,
                     double tau);

// Visits every voxel traversed by the segment [a, b] (amortized DDA).
template <typename Fn>
void traverse_segment(const Vec3d& a, const Vec3d& b, const MapConfig& cfg, Fn&& visit);

// Per frame: raycast each depth pixel through the truncation band and fold the
// accumulated contributions into the store. Frames are sequential; work inside
// a frame is partitioned by block.
class TsdfIntegrator {
public:
    TsdfIntegrator(VoxelStore& store, const IntegratorConfig& cfg);

    FrameReport integrate_frame(const ScanImages& images, const Pose& pose);

    const IntegratorConfig& config() const { return cfg_; }

    // Blocks touched since the last call; sorted, unique.
    std::vector<BlockCoord> take_dirty_blocks();

private:
    VoxelStore& store_;
    IntegratorConfig cfg_;
    int frame_counter_ = 0;
    std::vector<BlockCoord> dirty_;
};

template <typename Fn>
void traverse_segment(const Vec3d& a, const Vec3d& b, const MapConfig& cfg, Fn&& visit) {
    const double nu = cfg.voxel_size;
    VoxelCoord cur = world_to_voxel(a, cfg);
    const VoxelCoord end = world_to_voxel(b, cfg);

    Vec3d dir = b - a;
    const double len = dir.norm();
    if (len < 1e-12) {
        visit(cur);
        return;
    }
    dir /= len;

    int32_t step[3];
    double t_max[3], t_delta[3];
    const int32_t* cur_c[3] = {&cur.x, &cur.y, &cur.z};
    for (int i = 0; i < 3; ++i) {
        if (std::abs(dir[i]) < 1e-15) {
            step[i] = 0;
            t_max[i] = std::numeric_limits<double>::infinity();
            t_delta[i] = std::numeric_limits<double>::infinity();
        } else {
            step[i] = dir[i] > 0 ? 1 : -1;
            // Cell faces sit halfway between voxel centers.
            const double boundary = nu * (*cur_c[i] + 0.5 * step[i]);
            t_max[i] = (boundary - a[i]) / dir[i];
            t_delta[i] = nu / std::abs(dir[i]);
        }
    }

    const size_t max_steps = static_cast<size_t>(3.0 * len / nu) + 8;
    for (size_t n = 0; n < max_steps; ++n) {
        visit(cur);
        if (cur == end) return;
        int m = 0;
        if (t_max[1] < t_max[m]) m = 1;
        if (t_max[2] < t_max[m]) m = 2;
        if (t_max[m] > len) return;  // segment exhausted before reaching end cell
        (m == 0 ? cur.x : m == 1 ? cur.y : cur.z) += step[m];
        t_max[m] += t_delta[m];
    }
}

}  // namespace semvox
