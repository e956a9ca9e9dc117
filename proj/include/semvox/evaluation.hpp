#pragma once

#include "semvox/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace semvox {

struct EvalCloud {
    std::vector<Vec3d> points;
    std::vector<int> labels;  // empty when unlabeled; -1 = point without label

    bool labeled() const { return !labels.empty(); }
    void validate() const {
        if (points.empty()) throw std::invalid_argument("evaluation cloud is empty");
        if (!labels.empty() && labels.size() != points.size())
            throw std::invalid_argument("labels/points size mismatch");
    }
};

// Exact nearest-neighbor search, median-split k-d tree.
class KdTree3 {
public:
    explicit KdTree3(const std::vector<Vec3d>& points);

    // (index into the source cloud, squared distance)
    std::pair<int, double> nearest(const Vec3d& query) const;

private:
    struct Node {
        Vec3d point;
        int index;
        int left = -1, right = -1;
        int axis = 0;
    };
    int build(int begin, int end, int depth);
    void search(int node, const Vec3d& q, int& best, double& best_d2) const;
    std::vector<Node> nodes_;
    std::vector<int> scratch_;
    const std::vector<Vec3d>* build_points_ = nullptr;
    int root_ = -1;
};

struct SemanticScores {
    std::optional<double> miou;               // percent
    std::optional<double> acc;                // percent
    std::vector<std::pair<int, double>> per_class_iou;  // (class id, percent)
    size_t matched = 0;
};

struct EvalReport {
    double re_cm = 0.0;
    double cd_cm = 0.0;
    double rc_percent = 0.0;
    SemanticScores semantics;

    std::string json(const LabelSet* labels = nullptr) const;
    void save_per_class_csv(const std::string& path, const LabelSet* labels = nullptr) const;
};

// Clamped RMSE of reconstructed-to-GT nearest distances; clamp at 2 * voxel.
// Returns meters.
double reconstruction_error(const EvalCloud& m, const EvalCloud& g, double voxel_size);

// Symmetric Chamfer-L1 with the same 2 * voxel clamp. Meters.
double chamfer_distance(const EvalCloud& m, const EvalCloud& g, double voxel_size);

// Percent of GT points with a reconstructed point within 2 * voxel.
double reconstruction_coverage(const EvalCloud& m, const EvalCloud& g, double voxel_size);

// Confusion over M points matched to their nearest GT point within 2 * voxel;
// M points without labels are left out. Scores absent when nothing matches.
SemanticScores semantic_scores(const EvalCloud& m, const EvalCloud& g, double voxel_size);

EvalReport evaluate(const EvalCloud& m, const EvalCloud& g, double voxel_size);

}  // namespace semvox
