#pragma once

#include "semvox/types.hpp"

#include <cmath>
#include <numbers>
#include <vector>

namespace semvox {

// Spherical projection model of a full-sweep spinning LiDAR.
// u = floor((pi - atan2(y, x)) / delta_phi), wrapped into [0, width)
// v = floor((acos(z / r) - theta0) / delta_theta)
// scale_f / offset_o only enter at 16-bit PNG export; internal images are
// real-valued meters.
struct ProjectionModel {
    int width = 1024;
    int height_px = 64;
    double delta_phi = 2.0 * std::numbers::pi / 1024;  // radians per pixel
    double delta_theta = 0.0;                          // radians per pixel
    double theta0 = 0.0;                               // starting vertical angle, radians
    double scale_f = 256.0;
    double offset_o = 0.0;
    double min_range = 0.3;

    void validate() const {
        if (width <= 0 || height_px <= 0)
            throw std::invalid_argument("projection model: empty image");
        if (std::abs(width * delta_phi - 2.0 * std::numbers::pi) > 1e-6)
            throw std::invalid_argument("projection model: width * delta_phi must equal 2*pi");
        if (!(delta_theta > 0.0))
            throw std::invalid_argument("projection model: delta_theta must be > 0");
    }

    // Elevation FoV given in degrees above/below the horizon.
    static ProjectionModel spinning(int width, int height_px, double fov_up_deg,
                                    double fov_down_deg);
};

// Depth, height, and normal images derived from one posed point cloud.
// depth = range in meters (0 = no return), height = world z of the retained
// point. Normals are unit, sensor-frame, sensor-facing. The model that
// produced the images travels with them so consumers can back-project.
struct ScanImages {
    int width = 0;
    int height_px = 0;
    ProjectionModel model;
    std::vector<float> depth;
    std::vector<float> height;
    std::vector<Vec3f> normals;
    std::vector<uint8_t> normal_valid;
    size_t dropped = 0;  // out-of-image or below min range

    size_t idx(int u, int v) const { return static_cast<size_t>(v) * width + u; }
    float d(int u, int v) const { return depth[idx(u, v)]; }
    float h(int u, int v) const { return height[idx(u, v)]; }
    bool has_normals() const { return !normals.empty(); }
};

struct PosedCloud {
    std::vector<Vec3d> points;  // sensor frame, meters
    Pose pose = Pose::Identity();
    double timestamp = 0.0;

    void validate_pose() const {
        const Eigen::Matrix3d r = pose.rotation();
        if (((r.transpose() * r) - Eigen::Matrix3d::Identity()).cwiseAbs().maxCoeff() > 1e-6)
            throw std::invalid_argument("pose rotation is not orthonormal");
    }
};

// Continuous image coordinates of a sensor-frame point; returns false when the
// point is below min range or non-finite. u is wrapped into [0, width).
bool project_point(const Vec3d& p, const ProjectionModel& model, int& u, int& v, double& range);

// Nearer-wins projection; the result is independent of point order.
ScanImages project_cloud(const PosedCloud& cloud, const ProjectionModel& model);

// Ray through the center of pixel (u, v) scaled to the given range.
Vec3d back_project(int u, int v, double depth, const ProjectionModel& model);

// Cross product of back-projected left/upper neighbors; absent on the border,
// on missing depths, and on degenerate geometry.
void compute_normal_image(ScanImages& img, const ProjectionModel& model);

}  // namespace semvox
