#include "semvox/evaluation.hpp"

#include "semvox/threading.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace semvox {

KdTree3::KdTree3(const std::vector<Vec3d>& points) {
    if (points.empty()) throw std::invalid_argument("KdTree3: empty cloud");
    nodes_.reserve(points.size());
    scratch_.resize(points.size());
    std::iota(scratch_.begin(), scratch_.end(), 0);
    // Nodes copy their point; keep a pointer to the source only during build.
    build_points_ = &points;
    root_ = build(0, static_cast<int>(points.size()), 0);
    build_points_ = nullptr;
    scratch_.clear();
    scratch_.shrink_to_fit();
}

int KdTree3::build(int begin, int end, int depth) {
    if (begin >= end) return -1;
    const int axis = depth % 3;
    const int mid = (begin + end) / 2;
    std::nth_element(scratch_.begin() + begin, scratch_.begin() + mid, scratch_.begin() + end,
                     [&](int a, int b) {
                         return (*build_points_)[static_cast<size_t>(a)][axis] <
                                (*build_points_)[static_cast<size_t>(b)][axis];
                     });
    Node node;
    node.index = scratch_[static_cast<size_t>(mid)];
    node.point = (*build_points_)[static_cast<size_t>(node.index)];
    node.axis = axis;
    const int self = static_cast<int>(nodes_.size());
    nodes_.push_back(node);
    nodes_[static_cast<size_t>(self)].left = build(begin, mid, depth + 1);
    nodes_[static_cast<size_t>(self)].right = build(mid + 1, end, depth + 1);
    return self;
}

void KdTree3::search(int node, const Vec3d& q, int& best, double& best_d2) const {
    if (node < 0) return;
    const Node& n = nodes_[static_cast<size_t>(node)];
    const double d2 = (n.point - q).squaredNorm();
    if (d2 < best_d2) {
        best_d2 = d2;
        best = n.index;
    }
    const double delta = q[n.axis] - n.point[n.axis];
    const int near = delta < 0 ? n.left : n.right;
    const int far = delta < 0 ? n.right : n.left;
    search(near, q, best, best_d2);
    if (delta * delta < best_d2) search(far, q, best, best_d2);
}

std::pair<int, double> KdTree3::nearest(const Vec3d& q) const {
    int best = -1;
    double best_d2 = std::numeric_limits<double>::infinity();
    search(root_, q, best, best_d2);
    return {best, best_d2};
}

namespace {

// Clamped nearest distances of every source point into the target tree.
std::vector<double> clamped_distances(const std::vector<Vec3d>& src, const KdTree3& target,
                                      double clamp) {
    std::vector<double> out(src.size());
    parallel_for(src.size(), [&](size_t i) {
        out[i] = std::min(clamp, std::sqrt(target.nearest(src[i]).second));
    });
    return out;
}

}  // namespace

double reconstruction_error(const EvalCloud& m, const EvalCloud& g, double voxel_size) {
    m.validate();
    g.validate();
    const KdTree3 tree(g.points);
    const auto d = clamped_distances(m.points, tree, 2.0 * voxel_size);
    double sum_sq = 0.0;
    for (double x : d) sum_sq += x * x;
    // the rms of clamped distances cannot exceed the clamp; guard the
    // saturated case against a final rounding ulp
    return std::min(2.0 * voxel_size, std::sqrt(sum_sq / static_cast<double>(d.size())));
}

double chamfer_distance(const EvalCloud& m, const EvalCloud& g, double voxel_size) {
    m.validate();
    g.validate();
    const KdTree3 tree_g(g.points), tree_m(m.points);
    const auto dm = clamped_distances(m.points, tree_g, 2.0 * voxel_size);
    const auto dg = clamped_distances(g.points, tree_m, 2.0 * voxel_size);
    const double sm = std::accumulate(dm.begin(), dm.end(), 0.0);
    const double sg = std::accumulate(dg.begin(), dg.end(), 0.0);
    return sm / (2.0 * dm.size()) + sg / (2.0 * dg.size());
}

double reconstruction_coverage(const EvalCloud& m, const EvalCloud& g, double voxel_size) {
    m.validate();
    g.validate();
    const KdTree3 tree_m(m.points);
    const double limit2 = 4.0 * voxel_size * voxel_size;
    std::vector<uint8_t> covered(g.points.size(), 0);
    parallel_for(g.points.size(), [&](size_t i) {
        covered[i] = tree_m.nearest(g.points[i]).second <= limit2;
    });
    const size_t hits = std::accumulate(covered.begin(), covered.end(), size_t{0});
    return 100.0 * static_cast<double>(hits) / static_cast<double>(g.points.size());
}

SemanticScores semantic_scores(const EvalCloud& m, const EvalCloud& g, double voxel_size) {
    m.validate();
    g.validate();
    SemanticScores scores;
    if (!m.labeled() || !g.labeled()) return scores;

    const KdTree3 tree_g(g.points);
    const double limit2 = 4.0 * voxel_size * voxel_size;

    std::map<std::pair<int, int>, size_t> confusion;  // (gt, predicted) -> count
    size_t correct = 0;
    for (size_t i = 0; i < m.points.size(); ++i) {
        if (m.labels[i] < 0) continue;  // point never received a label
        const auto [gi, d2] = tree_g.nearest(m.points[i]);
        if (d2 > limit2) continue;
        const int gt = g.labels[static_cast<size_t>(gi)];
        if (gt < 0) continue;
        ++confusion[{gt, m.labels[i]}];
        ++scores.matched;
        if (gt == m.labels[i]) ++correct;
    }
    if (scores.matched == 0) return scores;

    scores.acc = 100.0 * static_cast<double>(correct) / static_cast<double>(scores.matched);

    std::map<int, std::array<size_t, 3>> tally;  // class -> (TP, FP, FN)
    for (const auto& [pair, count] : confusion) {
        const auto [gt, pred] = pair;
        if (gt == pred) {
            tally[gt][0] += count;
        } else {
            tally[pred][1] += count;
            tally[gt][2] += count;
        }
    }
    double iou_sum = 0.0;
    for (const auto& [cls, tfn] : tally) {
        const double denom = static_cast<double>(tfn[0] + tfn[1] + tfn[2]);
        const double iou = 100.0 * static_cast<double>(tfn[0]) / denom;
        scores.per_class_iou.emplace_back(cls, iou);
        iou_sum += iou;
    }
    scores.miou = iou_sum / static_cast<double>(tally.size());
    return scores;
}

EvalReport evaluate(const EvalCloud& m, const EvalCloud& g, double voxel_size) {
    EvalReport report;
    report.re_cm = 100.0 * reconstruction_error(m, g, voxel_size);
    report.cd_cm = 100.0 * chamfer_distance(m, g, voxel_size);
    report.rc_percent = reconstruction_coverage(m, g, voxel_size);
    report.semantics = semantic_scores(m, g, voxel_size);
    return report;
}

std::string EvalReport::json(const LabelSet* labels) const {
    std::ostringstream os;
    os.precision(6);
    os << std::fixed;
    os << "{\n  \"re_cm\": " << re_cm << ",\n  \"cd_cm\": " << cd_cm
       << ",\n  \"rc_percent\": " << rc_percent;
    if (semantics.acc) os << ",\n  \"acc_percent\": " << *semantics.acc;
    if (semantics.miou) os << ",\n  \"miou_percent\": " << *semantics.miou;
    if (!semantics.per_class_iou.empty()) {
        os << ",\n  \"per_class_iou\": {";
        bool first = true;
        for (const auto& [cls, iou] : semantics.per_class_iou) {
            if (!first) os << ", ";
            first = false;
            if (labels && cls < labels->size())
                os << "\"" << labels->names[static_cast<size_t>(cls)] << "\": " << iou;
            else
                os << "\"" << cls << "\": " << iou;
        }
        os << "}";
    }
    os << "\n}\n";
    return os.str();
}

void EvalReport::save_per_class_csv(const std::string& path, const LabelSet* labels) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "class,iou_percent\n";
    for (const auto& [cls, iou] : semantics.per_class_iou) {
        if (labels && cls < labels->size())
            os << labels->names[static_cast<size_t>(cls)];
        else
            os << cls;
        os << "," << iou << "\n";
    }
}

}  // namespace semvox
