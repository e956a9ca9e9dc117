#pragma once

#include "semvox/tsdf_integrator.hpp"
#include "semvox/types.hpp"
#include "semvox/voxel_store.hpp"

#include <span>
#include <vector>

namespace semvox {

// Labeled camera image (pinhole) with per-pixel class ids, optional confidence
// and optional full per-pixel class distributions (row-major [v][u][k]).
struct LabelImage {
    int width = 0;
    int height = 0;
    std::vector<uint16_t> labels;
    std::vector<float> confidence;    // optional, values in [0, 1]
    std::vector<float> prob_tensor;   // optional, width*height*K
    double fx = 0, fy = 0, cx = 0, cy = 0;
    Pose pose = Pose::Identity();     // camera -> world
    double max_depth = 30.0;
    double timestamp = 0.0;

    size_t idx(int u, int v) const { return static_cast<size_t>(v) * width + u; }
};

// surrogate: skip voxels whose stored distance is below -tau/2 (cheap, the
// default). raycast: march the camera ray through the TSDF and skip voxels
// with another surface clearly in front of them.
enum class OcclusionCheck { surrogate, raycast };

struct SemanticConfig {
    bool use_bayes = true;            // false: keep only the latest argmax
    float likelihood_floor = 1e-3f;
    float default_confidence = 0.9f;
    OcclusionCheck occlusion = OcclusionCheck::surrogate;
};

// Recursive Bayesian update: posterior = prior * likelihood, renormalized.
SemanticVoxel bayes_update(const SemanticVoxel& prior, std::span<const float> likelihood);

// Hard label -> distribution: c at the label, (1-c)/(K-1) elsewhere, floored
// and renormalized.
std::vector<float> label_to_likelihood(int label_id, float confidence, int num_labels,
                                       float floor = 1e-3f);

// Projects observed voxels (W > 0) into the camera frustum and applies the
// pixel likelihood once per image.
class SemanticIntegrator {
public:
    SemanticIntegrator(VoxelStore& store, const SemanticConfig& cfg = {});

    FrameReport integrate_labels(const LabelImage& img);

    std::vector<BlockCoord> take_dirty_blocks();

private:
    VoxelStore& store_;
    SemanticConfig cfg_;
    int frame_counter_ = 0;
    std::vector<BlockCoord> dirty_;
};

}  // namespace semvox
