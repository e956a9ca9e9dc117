#pragma once

#include "semvox/types.hpp"

#include <array>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <unordered_map>
#include <vector>

namespace semvox {

// One 8x8x8 tile of voxels. TSDF data is dense; the semantic layer is a flat
// 512*K float array allocated on first semantic touch.
struct VoxelBlock {
    BlockCoord coord;
    std::array<TsdfVoxel, kBlockVoxels> tsdf;
    std::vector<float> semantics;  // empty until ensure_semantics()

    explicit VoxelBlock(const BlockCoord& bc) : coord(bc) {}

    bool has_semantics() const { return !semantics.empty(); }

    void ensure_semantics(int num_labels) {
        if (semantics.empty())
            semantics.assign(static_cast<size_t>(kBlockVoxels) * num_labels,
                             1.f / static_cast<float>(num_labels));
    }

    float* probs_at(int linear, int num_labels) {
        return semantics.data() + static_cast<size_t>(linear) * num_labels;
    }
    const float* probs_at(int linear, int num_labels) const {
        return semantics.data() + static_cast<size_t>(linear) * num_labels;
    }
};

struct StoreStats {
    size_t allocated_blocks = 0;
    size_t observed_voxels = 0;  // weight > 0
    size_t memory_bytes = 0;     // estimate
};

// Two-level sparse voxel container: hash table from block coordinates to
// densely allocated blocks. Lookups and idempotent allocations may run
// concurrently; voxel mutation needs exclusive access per block.
class VoxelStore {
public:
    explicit VoxelStore(const MapConfig& cfg) : cfg_(cfg) { cfg_.validate(); }

    VoxelStore(VoxelStore&& other) noexcept
        : cfg_(other.cfg_), blocks_(std::move(other.blocks_)) {}
    VoxelStore& operator=(VoxelStore&&) = delete;
    VoxelStore(const VoxelStore&) = delete;
    VoxelStore& operator=(const VoxelStore&) = delete;

    const MapConfig& config() const { return cfg_; }

    // Idempotent; throws CapacityError once max_blocks is reached.
    VoxelBlock& get_or_allocate_block(const BlockCoord& bc);

    VoxelBlock* find_block(const BlockCoord& bc);
    const VoxelBlock* find_block(const BlockCoord& bc) const;

    // Never allocates; absent when the containing block is unallocated.
    // The semantic part is uniform when the block has no semantic layer yet.
    std::optional<std::pair<TsdfVoxel, SemanticVoxel>> lookup_voxel(const VoxelCoord& v) const;

    // TSDF-only lookup used on hot paths (mesher cell gathering).
    const TsdfVoxel* tsdf_at(const VoxelCoord& v) const;

    StoreStats stats() const;

    size_t block_count() const {
        std::shared_lock lock(mutex_);
        return blocks_.size();
    }

    // Block coordinates in deterministic (sorted) order.
    std::vector<BlockCoord> block_coords_sorted() const;

    template <typename Fn>
    void for_each_block(Fn&& fn) const {
        std::shared_lock lock(mutex_);
        for (const auto& [bc, blk] : blocks_) fn(*blk);
    }
    template <typename Fn>
    void for_each_block(Fn&& fn) {
        std::shared_lock lock(mutex_);
        for (auto& [bc, blk] : blocks_) fn(*blk);
    }

    // Binary snapshot (SVOX1), little-endian; round-trips bit-exactly.
    void save(const std::string& path) const;
    static VoxelStore load(const std::string& path);

private:
    MapConfig cfg_;
    mutable std::shared_mutex mutex_;
    std::unordered_map<BlockCoord, std::unique_ptr<VoxelBlock>, SpatialHash> blocks_;
};

}  // namespace semvox
