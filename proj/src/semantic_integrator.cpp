#include "semvox/semantic_integrator.hpp"

#include "semvox/threading.hpp"

#include <algorithm>
#include <chrono>

namespace semvox {

SemanticVoxel bayes_update(const SemanticVoxel& prior, std::span<const float> likelihood) {
    if (prior.probs.size() != likelihood.size())
        throw std::invalid_argument("bayes_update: size mismatch");
    SemanticVoxel post;
    post.probs.resize(prior.probs.size());
    double z = 0.0;
    for (size_t k = 0; k < likelihood.size(); ++k) {
        post.probs[k] = prior.probs[k] * likelihood[k];
        z += post.probs[k];
    }
    for (float& p : post.probs) p = static_cast<float>(p / z);
    return post;
}

std::vector<float> label_to_likelihood(int label_id, float confidence, int num_labels,
                                       float floor) {
    if (confidence < 0.f || confidence > 1.f)
        throw std::invalid_argument("confidence must be in [0, 1]");
    std::vector<float> like(static_cast<size_t>(num_labels),
                            num_labels > 1 ? (1.f - confidence) / (num_labels - 1) : 1.f);
    if (label_id >= 0 && label_id < num_labels)
        like[static_cast<size_t>(label_id)] = num_labels > 1 ? confidence : 1.f;
    float sum = 0.f;
    for (float& v : like) {
        v = std::max(v, floor);
        sum += v;
    }
    for (float& v : like) v /= sum;
    return like;
}

namespace {

// In-place Bayes step on a block-owned distribution.
void apply_likelihood(float* probs, const float* like, int num_labels) {
    double z = 0.0;
    for (int k = 0; k < num_labels; ++k) {
        probs[k] *= like[k];
        z += probs[k];
    }
    const float inv = static_cast<float>(1.0 / z);
    for (int k = 0; k < num_labels; ++k) probs[k] *= inv;
}

void apply_latest_argmax(float* probs, const float* like, int num_labels) {
    int best = 0;
    for (int k = 1; k < num_labels; ++k)
        if (like[k] > like[best]) best = k;
    for (int k = 0; k < num_labels; ++k) probs[k] = (k == best) ? 1.f : 0.f;
}

// True when a surface crossing sits clearly in front of the voxel along the
// camera ray. Marches at voxel pitch and stops short of the voxel's own
// surface band.
bool occluded_along_ray(const VoxelStore& store, const Vec3d& cam_origin, const Vec3d& center,
                        double voxel_depth) {
    const MapConfig& cfg = store.config();
    const double step = cfg.voxel_size;
    const double stop = voxel_depth - 2.5 * cfg.voxel_size;
    if (stop <= 2.0 * step) return false;
    const Vec3d ray = (center - cam_origin).normalized();
    float prev = 0.f;
    bool prev_valid = false;
    for (double t = 2.0 * step; t < stop; t += step) {
        const TsdfVoxel* vox = store.tsdf_at(world_to_voxel(cam_origin + t * ray, cfg));
        if (!vox || !vox->observed()) {
            prev_valid = false;
            continue;
        }
        if (prev_valid && prev > 0.f && vox->distance <= 0.f) return true;
        prev = vox->distance;
        prev_valid = true;
    }
    return false;
}

}  // namespace

SemanticIntegrator::SemanticIntegrator(VoxelStore& store, const SemanticConfig& cfg)
    : store_(store), cfg_(cfg) {}

FrameReport SemanticIntegrator::integrate_labels(const LabelImage& img) {
    const auto t0 = std::chrono::steady_clock::now();
    FrameReport report;
    report.frame = frame_counter_++;

    const MapConfig& map_cfg = store_.config();
    const int num_labels = map_cfg.num_labels;
    const bool has_tensor =
        img.prob_tensor.size() ==
        static_cast<size_t>(img.width) * img.height * static_cast<size_t>(num_labels);
    const double occlusion_floor = -0.5 * map_cfg.truncation;
    const Pose world_to_cam = img.pose.inverse();

    const auto coords = store_.block_coords_sorted();
    std::vector<size_t> updated_per_block(coords.size(), 0);
    std::vector<uint8_t> block_dirty(coords.size(), 0);

    parallel_for(coords.size(), [&](size_t bi) {
        VoxelBlock* blk = store_.find_block(coords[bi]);
        if (!blk) return;
        size_t n_updated = 0;
        std::vector<float> like(static_cast<size_t>(num_labels));

        for (int li = 0; li < kBlockVoxels; ++li) {
            const TsdfVoxel& vox = blk->tsdf[static_cast<size_t>(li)];
            if (!vox.observed()) continue;
            if (vox.distance < occlusion_floor) continue;  // well behind a surface

            const Vec3d center = voxel_center(voxel_at(coords[bi], li), map_cfg);
            const Vec3d p_cam = world_to_cam * center;
            if (p_cam.z() <= 0.0 || p_cam.z() > img.max_depth) continue;
            const int u = static_cast<int>(std::floor(img.fx * p_cam.x() / p_cam.z() + img.cx));
            const int v = static_cast<int>(std::floor(img.fy * p_cam.y() / p_cam.z() + img.cy));
            if (u < 0 || u >= img.width || v < 0 || v >= img.height) continue;
            if (cfg_.occlusion == OcclusionCheck::raycast &&
                occluded_along_ray(store_, img.pose.translation(), center,
                                   (center - img.pose.translation()).norm()))
                continue;

            const size_t pix = img.idx(u, v);
            if (has_tensor) {
                const float* t = img.prob_tensor.data() + pix * num_labels;
                float sum = 0.f;
                for (int k = 0; k < num_labels; ++k) {
                    like[static_cast<size_t>(k)] = std::max(t[k], cfg_.likelihood_floor);
                    sum += like[static_cast<size_t>(k)];
                }
                for (float& x : like) x /= sum;
            } else {
                const float conf = img.confidence.empty() ? cfg_.default_confidence
                                                          : img.confidence[pix];
                like = label_to_likelihood(img.labels[pix], conf, num_labels,
                                           cfg_.likelihood_floor);
            }

            blk->ensure_semantics(num_labels);
            float* probs = blk->probs_at(li, num_labels);
            if (cfg_.use_bayes)
                apply_likelihood(probs, like.data(), num_labels);
            else
                apply_latest_argmax(probs, like.data(), num_labels);
            ++n_updated;
        }
        updated_per_block[bi] = n_updated;
        block_dirty[bi] = n_updated > 0;
    });

    for (size_t i = 0; i < coords.size(); ++i) {
        report.updated_voxels += updated_per_block[i];
        if (block_dirty[i]) dirty_.push_back(coords[i]);
    }
    report.elapsed_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

std::vector<BlockCoord> SemanticIntegrator::take_dirty_blocks() {
    std::sort(dirty_.begin(), dirty_.end());
    dirty_.erase(std::unique(dirty_.begin(), dirty_.end()), dirty_.end());
    return std::exchange(dirty_, {});
}

}  // namespace semvox
