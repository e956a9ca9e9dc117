#include "semvox/scan_projection.hpp"

namespace semvox {

namespace {
constexpr double kPi = std::numbers::pi;
}

ProjectionModel ProjectionModel::spinning(int width, int height_px, double fov_up_deg,
                                          double fov_down_deg) {
    ProjectionModel m;
    m.width = width;
    m.height_px = height_px;
    m.delta_phi = 2.0 * kPi / width;
    m.theta0 = (90.0 - fov_up_deg) * kPi / 180.0;
    m.delta_theta = (fov_up_deg + fov_down_deg) * kPi / 180.0 / height_px;
    m.validate();
    return m;
}

bool project_point(const Vec3d& p, const ProjectionModel& model, int& u, int& v, double& range) {
    range = p.norm();
    if (!std::isfinite(range) || range < model.min_range) return false;

    const double az = std::atan2(p.y(), p.x());        // [-pi, pi]
    int ui = static_cast<int>(std::floor((kPi - az) / model.delta_phi));
    ui %= model.width;                                  // az = -pi maps to width; wrap
    if (ui < 0) ui += model.width;

    const double polar = std::acos(std::clamp(p.z() / range, -1.0, 1.0));
    const int vi = static_cast<int>(std::floor((polar - model.theta0) / model.delta_theta));
    if (vi < 0 || vi >= model.height_px) return false;

    u = ui;
    v = vi;
    return true;
}

ScanImages project_cloud(const PosedCloud& cloud, const ProjectionModel& model) {
    model.validate();
    cloud.validate_pose();
    ScanImages img;
    img.width = model.width;
    img.height_px = model.height_px;
    img.model = model;
    const size_t n = static_cast<size_t>(model.width) * model.height_px;
    img.depth.assign(n, 0.f);
    img.height.assign(n, 0.f);

    // Sensor point retained per pixel; used only for deterministic tie-breaks.
    std::vector<Vec3d> kept(n, Vec3d::Zero());

    for (const Vec3d& p : cloud.points) {
        int u, v;
        double r;
        if (!project_point(p, model, u, v, r)) {
            ++img.dropped;
            continue;
        }
        const size_t i = img.idx(u, v);
        const float rf = static_cast<float>(r);
        bool take = img.depth[i] == 0.f || rf < img.depth[i];
        if (!take && rf == img.depth[i]) {
            // Exact range tie: lexicographically smaller point wins, so a
            // permuted input yields an identical image.
            const Vec3d& q = kept[i];
            take = std::tie(p.x(), p.y(), p.z()) < std::tie(q.x(), q.y(), q.z());
        }
        if (take) {
            img.depth[i] = rf;
            img.height[i] = static_cast<float>((cloud.pose * p).z());
            kept[i] = p;
        }
    }
    return img;
}

Vec3d back_project(int u, int v, double depth, const ProjectionModel& model) {
    if (!(depth > 0.0)) throw std::invalid_argument("back_project: depth must be > 0");
    const double az = kPi - (u + 0.5) * model.delta_phi;
    const double polar = model.theta0 + (v + 0.5) * model.delta_theta;
    const double sp = std::sin(polar);
    return depth * Vec3d(sp * std::cos(az), sp * std::sin(az), std::cos(polar));
}

void compute_normal_image(ScanImages& img, const ProjectionModel& model) {
    const size_t n = static_cast<size_t>(img.width) * img.height_px;
    img.normals.assign(n, Vec3f::Zero());
    img.normal_valid.assign(n, 0);

    for (int v = 1; v < img.height_px; ++v) {
        for (int u = 1; u < img.width; ++u) {
            const float d0 = img.d(u, v);
            const float d1 = img.d(u, v - 1);
            const float d2 = img.d(u - 1, v);
            if (d0 == 0.f || d1 == 0.f || d2 == 0.f) continue;
            const Vec3d p = back_project(u, v, d0, model);
            const Vec3d p1 = back_project(u, v - 1, d1, model);
            const Vec3d p2 = back_project(u - 1, v, d2, model);
            Vec3d cr = (p1 - p).cross(p2 - p);
            const double norm = cr.norm();
            if (norm < 1e-8) continue;
            cr /= norm;
            if (cr.dot(-p) < 0.0) cr = -cr;  // face the sensor
            img.normals[img.idx(u, v)] = cr.cast<float>();
            img.normal_valid[img.idx(u, v)] = 1;
        }
    }
}

}  // namespace semvox
