#pragma once

#include "semvox/scan_projection.hpp"
#include "semvox/semantic_integrator.hpp"
#include "semvox/traversability.hpp"
#include "semvox/tsdf_integrator.hpp"
#include "semvox/types.hpp"

#include <optional>
#include <string>
#include <vector>

namespace semvox {

// KITTI-velodyne layout: little-endian float32 (x, y, z, intensity) records.
std::vector<Vec3d> read_kitti_bin(const std::string& path);

// SemanticKITTI per-point labels: uint32 little-endian, class id in the low
// 16 bits.
std::vector<uint16_t> read_kitti_labels(const std::string& path);

// "key = value" LiDAR model file (angles in degrees on disk).
ProjectionModel load_lidar_cfg(const std::string& path);
void save_lidar_cfg(const std::string& path, const ProjectionModel& model);

struct Frame {
    size_t index = 0;
    PosedCloud cloud;
    std::optional<LabelImage> label;
};

// File-streaming dataset: scans/NNNNNN.bin + poses.txt (TUM convention), an
// optional labels/ directory indexed by labels_index.txt, lidar.cfg and
// labelset.cfg. Frames come out in timestamp order; a scan without a label
// image within 50 ms yields an absent label.
class DatasetReader {
public:
    explicit DatasetReader(const std::string& root);

    size_t size() const { return order_.size(); }
    Frame read(size_t i) const;

    const ProjectionModel& lidar() const { return lidar_; }
    const LabelSet& labelset() const { return labels_; }
    bool has_labelset() const { return has_labelset_; }
    bool has_label_images() const { return !label_entries_.empty(); }

private:
    struct LabelEntry {
        std::string path;
        double timestamp;
        double fx, fy, cx, cy;
        Pose pose;
    };

    std::string root_;
    ProjectionModel lidar_;
    LabelSet labels_;
    bool has_labelset_ = false;
    std::vector<std::string> scan_files_;
    std::vector<Pose> poses_;
    std::vector<double> timestamps_;
    std::vector<LabelEntry> label_entries_;
    std::vector<int> label_match_;  // per scan; -1 = none within tolerance
    std::vector<size_t> order_;     // frame indices sorted by timestamp
};

// Run configuration: plain-text "key = value" lines under [section] headers.
// serialize() emits the canonical ordering, so a canonical file round-trips
// token-for-token.
struct RunConfig {
    std::string dataset_root;
    std::string output_dir = ".";
    std::string labelset_path;  // optional override of the dataset's labelset
    int frame_start = 0;
    int frame_end = -1;  // exclusive; -1 = to the end

    MapConfig map;
    IntegratorConfig integrator;
    bool use_bayes = true;
    double camera_max_depth = 30.0;

    TraversabilityConfig traversability;
    std::vector<std::string> traversable_names;  // resolved against the labelset

    static RunConfig parse_file(const std::string& path);
    static RunConfig parse(std::istream& is, const std::string& origin);
    std::string serialize() const;
};

}  // namespace semvox
