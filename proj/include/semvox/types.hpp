#pragma once

#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

namespace semvox {

using Vec3f = Eigen::Vector3f;
using Vec3d = Eigen::Vector3d;
using Pose = Eigen::Isometry3d;  // sensor -> world

// Thrown when the block budget is exhausted; the caller must raise the budget
// or shrink the scene.
struct CapacityError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input data (files, datasets, configs).
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline constexpr int kBlockSide = 8;
inline constexpr int kBlockVoxels = kBlockSide * kBlockSide * kBlockSide;

// Sentinel for vertices/points without semantic information.
inline constexpr uint8_t kUnlabeled = 255;

inline int32_t floor_div(int32_t a, int32_t b) {
    int32_t q = a / b;
    int32_t r = a % b;
    return (r != 0 && ((r < 0) != (b < 0))) ? q - 1 : q;
}

inline int32_t nonneg_mod(int32_t a, int32_t b) {
    int32_t r = a % b;
    return r < 0 ? r + b : r;
}

// Global integer voxel index; world center is voxel_size * coord componentwise.
struct VoxelCoord {
    int32_t x = 0, y = 0, z = 0;

    bool operator==(const VoxelCoord&) const = default;
    bool operator<(const VoxelCoord& o) const {
        if (x != o.x) return x < o.x;
        if (y != o.y) return y < o.y;
        return z < o.z;
    }
};

// Index of an 8x8x8 voxel block: block = floor(voxel / 8).
struct BlockCoord {
    int32_t x = 0, y = 0, z = 0;

    bool operator==(const BlockCoord&) const = default;
    bool operator<(const BlockCoord& o) const {
        if (x != o.x) return x < o.x;
        if (y != o.y) return y < o.y;
        return z < o.z;
    }
};

struct SpatialHash {
    size_t operator()(const VoxelCoord& k) const {
        return 73856093ULL * static_cast<size_t>(k.x) ^ 19349669ULL * static_cast<size_t>(k.y) ^
               83492791ULL * static_cast<size_t>(k.z);
    }
    size_t operator()(const BlockCoord& k) const {
        return 73856093ULL * static_cast<size_t>(k.x) ^ 19349669ULL * static_cast<size_t>(k.y) ^
               83492791ULL * static_cast<size_t>(k.z);
    }
};

inline BlockCoord block_of(const VoxelCoord& v) {
    return {floor_div(v.x, kBlockSide), floor_div(v.y, kBlockSide), floor_div(v.z, kBlockSide)};
}

// Linear index inside a block, x-fastest: index = x + 8y + 64z.
inline int local_index(const VoxelCoord& v) {
    return nonneg_mod(v.x, kBlockSide) + kBlockSide * nonneg_mod(v.y, kBlockSide) +
           kBlockSide * kBlockSide * nonneg_mod(v.z, kBlockSide);
}

inline VoxelCoord voxel_at(const BlockCoord& b, int linear) {
    return {b.x * kBlockSide + linear % kBlockSide,
            b.y * kBlockSide + (linear / kBlockSide) % kBlockSide,
            b.z * kBlockSide + linear / (kBlockSide * kBlockSide)};
}

struct MapConfig {
    float voxel_size = 0.25f;       // meters
    float truncation = 1.25f;       // meters, default 5 * voxel_size
    int num_labels = 2;             // K
    uint32_t max_blocks = 1u << 20; // allocation budget

    void validate() const {
        if (!(voxel_size > 0.f)) throw std::invalid_argument("voxel_size must be > 0");
        if (!(truncation > 0.f)) throw std::invalid_argument("truncation must be > 0");
        if (truncation < voxel_size)
            throw std::invalid_argument("truncation must be >= voxel_size");
        if (num_labels < 1 || num_labels > 64)
            throw std::invalid_argument("num_labels must be in [1, 64]");
        if (max_blocks == 0) throw std::invalid_argument("max_blocks must be > 0");
    }
};

// weight == 0 marks the voxel unobserved; distance and gradient carry no meaning then.
struct TsdfVoxel {
    float distance = 0.f;
    float weight = 0.f;
    Vec3f gradient = Vec3f::Zero();

    bool observed() const { return weight > 0.f; }
};

// Discrete class distribution; sums to 1.
struct SemanticVoxel {
    std::vector<float> probs;

    static SemanticVoxel uniform(int num_labels) {
        SemanticVoxel v;
        v.probs.assign(static_cast<size_t>(num_labels), 1.f / static_cast<float>(num_labels));
        return v;
    }
    int argmax() const {
        int best = 0;
        for (int k = 1; k < static_cast<int>(probs.size()); ++k)
            if (probs[k] > probs[best]) best = k;  // tie -> lower id
        return best;
    }
};

struct Rgb {
    uint8_t r = 128, g = 128, b = 128;
    bool operator==(const Rgb&) const = default;
};

// Ordered class names; index = class id. Name "unlabeled" may be used as the
// last class for pixels without a semantic hit.
struct LabelSet {
    std::vector<std::string> names;
    std::vector<Rgb> colors;

    int size() const { return static_cast<int>(names.size()); }
    int id_of(const std::string& name) const {
        for (int i = 0; i < size(); ++i)
            if (names[i] == name) return i;
        return -1;
    }
    Rgb color_of_label(int id) const {
        if (id < 0 || id >= size()) return Rgb{};  // gray for unlabeled
        return colors[static_cast<size_t>(id)];
    }

    static LabelSet load(const std::string& path);
    void save(const std::string& path) const;
};

// Convert a world point to the voxel whose center is nearest; exact half
// distances round toward +inf componentwise.
inline VoxelCoord world_to_voxel(const Vec3d& p, const MapConfig& cfg) {
    const double inv = 1.0 / static_cast<double>(cfg.voxel_size);
    return {static_cast<int32_t>(std::floor(p.x() * inv + 0.5)),
            static_cast<int32_t>(std::floor(p.y() * inv + 0.5)),
            static_cast<int32_t>(std::floor(p.z() * inv + 0.5))};
}

inline Vec3d voxel_center(const VoxelCoord& v, const MapConfig& cfg) {
    const double s = static_cast<double>(cfg.voxel_size);
    return {s * v.x, s * v.y, s * v.z};
}

}  // namespace semvox
