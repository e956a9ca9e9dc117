#include "semvox/tsdf_integrator.hpp"

#include "semvox/threading.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <unordered_map>

namespace semvox {

std::string FrameReport::json_line() const {
    char buf[160];
    std::snprintf(buf, sizeof(buf),
                  "{\"frame\":%d,\"updated_voxels\":%zu,\"new_blocks\":%zu,\"elapsed_ms\":%.3f}",
                  frame, updated_voxels, new_blocks, elapsed_ms);
    return buf;
}

DistanceSample make_distance_sample(double psi, double theta, double alpha,
                                    double alpha_epsilon) {
    DistanceSample s;
    s.psi = psi;
    s.theta = theta;
    s.alpha = alpha;
    s.d = nonprojective_distance(psi, theta, alpha, alpha_epsilon);
    return s;
}

double projective_distance(const Vec3d& voxel_center, const Vec3d& sensor_origin,
                           const Vec3d& measured_point) {
    const Vec3d to_surface = measured_point - sensor_origin;
    const double range = to_surface.norm();
    if (!(range > 0.0)) throw std::invalid_argument("measured range must be > 0");
    const Vec3d ray = to_surface / range;
    return range - (voxel_center - sensor_origin).dot(ray);
}

double nonprojective_distance(double psi, double theta, double alpha, double alpha_epsilon) {
    const double ct = std::cos(theta);
    if (alpha < alpha_epsilon) return std::abs(ct) * psi;
    const double mag =
        std::abs((std::cos(alpha) - 1.0) * std::sin(theta) / std::sin(alpha)) +
        std::abs(ct * psi);
    return psi >= 0.0 ? mag : -mag;
}

float observation_weight(double psi, double tau, float min_clamp) {
    const double w = (psi + tau) / (2.0 * tau);
    return static_cast<float>(std::clamp(w, static_cast<double>(min_clamp), 1.0));
}

TsdfVoxel fuse_voxel(const TsdfVoxel& old, double d, float w_new, const Vec3f& n_measured,
                     double tau) {
    TsdfVoxel out = old;
    if (w_new < 0.f) throw std::invalid_argument("fuse_voxel: negative weight");
    if (w_new == 0.f) return out;
    const float gamma = truncate_distance(d, tau);
    out.distance = (old.weight * old.distance + w_new * gamma) / (old.weight + w_new);
    out.weight = old.weight + w_new;
    if (old.weight > 0.f) {
        const Vec3f blended = old.weight * old.gradient + w_new * n_measured;
        const float norm = blended.norm();
        if (norm > 1e-12f) out.gradient = blended / norm;
    } else {
        out.gradient = n_measured;
    }
    return out;
}

namespace {

// A visibility vote: the pixel whose ray-cast segment touched the voxel.
struct Visit {
    uint16_t linear;
    uint16_t u;
    uint16_t v;
};

using VisitBins = std::unordered_map<BlockCoord, std::vector<Visit>, SpatialHash>;

struct Accum {
    double wd = 0.0;
    double w = 0.0;
    Vec3d wn = Vec3d::Zero();
};

}  // namespace

TsdfIntegrator::TsdfIntegrator(VoxelStore& store, const IntegratorConfig& cfg)
    : store_(store), cfg_(cfg) {
    if (cfg_.truncation <= 0.f) cfg_.truncation = store.config().truncation;
    if (!(cfg_.alpha_epsilon > 0.0))
        throw std::invalid_argument("alpha_epsilon must be > 0");
}

FrameReport TsdfIntegrator::integrate_frame(const ScanImages& images, const Pose& pose) {
    const auto t0 = std::chrono::steady_clock::now();
    FrameReport report;
    report.frame = frame_counter_++;

    if (cfg_.mode == DistanceMode::non_projective && !images.has_normals())
        throw std::invalid_argument("non-projective mode needs a normal image");

    const MapConfig& map_cfg = store_.config();
    const double tau = cfg_.truncation;
    const Vec3d origin = pose.translation();
    const Eigen::Matrix3d rot = pose.rotation();
    const Pose world_to_sensor = pose.inverse();
    const ProjectionModel& model = images.model;

    // Phase 1: ray-cast each valid pixel through the truncation band to
    // retrieve visible voxels; chunking is fixed so the chunk-order merge is
    // deterministic for any thread count.
    const int num_chunks = 64;
    std::vector<VisitBins> chunk_bins(num_chunks);
    const size_t rows = static_cast<size_t>(images.height_px);

    parallel_chunks(rows, num_chunks, [&](int chunk, size_t row_begin, size_t row_end) {
        VisitBins& bins = chunk_bins[static_cast<size_t>(chunk)];
        for (size_t v = row_begin; v < row_end; ++v) {
            for (int u = 0; u < images.width; ++u) {
                const float r = images.d(u, static_cast<int>(v));
                if (r == 0.f || r > cfg_.max_range) continue;
                if (cfg_.drop_unreliable && images.has_normals() &&
                    !images.normal_valid[images.idx(u, static_cast<int>(v))])
                    continue;
                const Vec3d q = pose * back_project(u, static_cast<int>(v), r, model);
                const Vec3d ray = (q - origin).normalized();
                const Visit visit{0, static_cast<uint16_t>(u), static_cast<uint16_t>(v)};
                traverse_segment(q - tau * ray, q + tau * ray, map_cfg,
                                 [&](const VoxelCoord& vc) {
                                     Visit rec = visit;
                                     rec.linear = static_cast<uint16_t>(local_index(vc));
                                     bins[block_of(vc)].push_back(rec);
                                 });
            }
        }
    });

    std::unordered_map<BlockCoord, std::vector<Visit>, SpatialHash> merged;
    for (VisitBins& bins : chunk_bins)
        for (auto& [bc, visits] : bins) {
            auto& dst = merged[bc];
            dst.insert(dst.end(), visits.begin(), visits.end());
        }
    if (merged.empty()) {
        report.elapsed_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                .count();
        return report;
    }

    std::vector<std::pair<BlockCoord, std::vector<Visit>>> bins_sorted;
    bins_sorted.reserve(merged.size());
    for (auto& [bc, visits] : merged) bins_sorted.emplace_back(bc, std::move(visits));
    std::sort(bins_sorted.begin(), bins_sorted.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });

    // Allocation is sequential (deterministic error behavior); the update
    // phase then owns disjoint blocks and runs in parallel.
    std::vector<VoxelBlock*> blocks(bins_sorted.size());
    for (size_t i = 0; i < bins_sorted.size(); ++i) {
        const BlockCoord bc = bins_sorted[i].first;
        if (!store_.find_block(bc)) ++report.new_blocks;
        blocks[i] = &store_.get_or_allocate_block(bc);
        dirty_.push_back(bc);
    }

    // One (pixel, voxel) measurement. Returns false when the pixel offers no
    // usable depth for this voxel.
    auto measure = [&](int u, int v, const Vec3d& center, const TsdfVoxel& vox, Accum& acc) {
        const float depth = images.d(u, v);
        if (depth == 0.f || depth > cfg_.max_range) return false;
        const bool have_normal = images.has_normals() && images.normal_valid[images.idx(u, v)];
        if (!have_normal && cfg_.drop_unreliable) return false;

        const Vec3d q = pose * back_project(u, v, depth, model);
        const double range = (q - origin).norm();
        const Vec3d ray = (q - origin) / range;
        const double psi = range - (center - origin).dot(ray);
        if (std::abs(psi) > tau) return false;

        Vec3f n_world = Vec3f::Zero();
        if (have_normal)
            n_world = (rot * images.normals[images.idx(u, v)].cast<double>()).cast<float>();

        double d = psi;
        if (cfg_.mode == DistanceMode::non_projective && have_normal) {
            // theta/alpha against the pre-update gradient; the measured
            // normal stands in for unobserved voxels
            Vec3f g = n_world;
            if (vox.observed() && vox.gradient.squaredNorm() > 1e-12f) g = vox.gradient;
            const Vec3d gd = g.cast<double>().normalized();
            const double cos_theta = std::clamp((-ray).dot(gd), -1.0, 1.0);
            const double cos_alpha = std::clamp(gd.dot(n_world.cast<double>()), -1.0, 1.0);
            d = nonprojective_distance(psi, std::acos(cos_theta), std::acos(cos_alpha),
                                       cfg_.alpha_epsilon);
        }
        const float w_obs = observation_weight(psi, tau, cfg_.min_weight_clamp);
        acc.wd += w_obs * truncate_distance(d, tau);
        acc.w += w_obs;
        if (have_normal) acc.wn += (w_obs * n_world).cast<double>();
        return true;
    };

    // Phase 2: each retrieved voxel is measured along the sensor ray through
    // its own center when that pixel holds a return; voxels without a return
    // in their own direction fall back to the rays that retrieved them, with
    // per-frame contributions accumulated as (sum W*Gamma, sum W).
    std::vector<size_t> updated_per_bin(bins_sorted.size(), 0);
    parallel_for(bins_sorted.size(), [&](size_t i) {
        VoxelBlock& blk = *blocks[i];
        std::vector<Visit>& visits = bins_sorted[i].second;
        std::stable_sort(visits.begin(), visits.end(),
                         [](const Visit& a, const Visit& b) { return a.linear < b.linear; });

        size_t n_updated = 0;
        for (size_t k = 0; k < visits.size();) {
            const uint16_t linear = visits[k].linear;
            size_t k_end = k;
            while (k_end < visits.size() && visits[k_end].linear == linear) ++k_end;

            const VoxelCoord vc = voxel_at(bins_sorted[i].first, linear);
            const Vec3d center = voxel_center(vc, map_cfg);
            TsdfVoxel& vox = blk.tsdf[linear];

            Accum acc;
            int own_u, own_v;
            double own_range;
            bool measured = false;
            if (project_point(world_to_sensor * center, model, own_u, own_v, own_range) &&
                images.d(own_u, own_v) != 0.f) {
                measured = measure(own_u, own_v, center, vox, acc);
            } else {
                for (size_t j = k; j < k_end; ++j)
                    measured |= measure(visits[j].u, visits[j].v, center, vox, acc);
            }
            if (measured) {
                const double w_old = vox.weight;
                vox.distance =
                    static_cast<float>((w_old * vox.distance + acc.wd) / (w_old + acc.w));
                vox.weight = static_cast<float>(w_old + acc.w);
                const Vec3d blended = w_old * vox.gradient.cast<double>() + acc.wn;
                const double norm = blended.norm();
                if (norm > 1e-12) vox.gradient = (blended / norm).cast<float>();
                ++n_updated;
            }
            k = k_end;
        }
        updated_per_bin[i] = n_updated;
    });
    for (size_t n : updated_per_bin) report.updated_voxels += n;

    report.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::vector<BlockCoord> TsdfIntegrator::take_dirty_blocks() {
    std::sort(dirty_.begin(), dirty_.end());
    dirty_.erase(std::unique(dirty_.begin(), dirty_.end()), dirty_.end());
    return std::exchange(dirty_, {});
}

}  // namespace semvox
