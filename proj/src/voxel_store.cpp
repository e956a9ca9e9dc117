#include "semvox/voxel_store.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>

namespace semvox {

VoxelBlock& VoxelStore::get_or_allocate_block(const BlockCoord& bc) {
    {
        std::shared_lock lock(mutex_);
        auto it = blocks_.find(bc);
        if (it != blocks_.end()) return *it->second;
    }
    std::unique_lock lock(mutex_);
    auto it = blocks_.find(bc);  // re-check, another thread may have won
    if (it != blocks_.end()) return *it->second;
    if (blocks_.size() >= cfg_.max_blocks)
        throw CapacityError("block budget exhausted (max_blocks = " +
                            std::to_string(cfg_.max_blocks) + ")");
    auto [ins, ok] = blocks_.emplace(bc, std::make_unique<VoxelBlock>(bc));
    return *ins->second;
}

VoxelBlock* VoxelStore::find_block(const BlockCoord& bc) {
    std::shared_lock lock(mutex_);
    auto it = blocks_.find(bc);
    return it == blocks_.end() ? nullptr : it->second.get();
}

const VoxelBlock* VoxelStore::find_block(const BlockCoord& bc) const {
    std::shared_lock lock(mutex_);
    auto it = blocks_.find(bc);
    return it == blocks_.end() ? nullptr : it->second.get();
}

std::optional<std::pair<TsdfVoxel, SemanticVoxel>> VoxelStore::lookup_voxel(
    const VoxelCoord& v) const {
    const VoxelBlock* blk = find_block(block_of(v));
    if (!blk) return std::nullopt;
    const int li = local_index(v);
    SemanticVoxel sem;
    if (blk->has_semantics()) {
        const float* p = blk->probs_at(li, cfg_.num_labels);
        sem.probs.assign(p, p + cfg_.num_labels);
    } else {
        sem = SemanticVoxel::uniform(cfg_.num_labels);
    }
    return std::make_pair(blk->tsdf[static_cast<size_t>(li)], std::move(sem));
}

const TsdfVoxel* VoxelStore::tsdf_at(const VoxelCoord& v) const {
    const VoxelBlock* blk = find_block(block_of(v));
    if (!blk) return nullptr;
    return &blk->tsdf[static_cast<size_t>(local_index(v))];
}

StoreStats VoxelStore::stats() const {
    StoreStats s;
    std::shared_lock lock(mutex_);
    s.allocated_blocks = blocks_.size();
    for (const auto& [bc, blk] : blocks_) {
        for (const auto& vox : blk->tsdf)
            if (vox.observed()) ++s.observed_voxels;
        s.memory_bytes += sizeof(VoxelBlock) + blk->semantics.capacity() * sizeof(float);
    }
    s.memory_bytes += blocks_.size() * (sizeof(BlockCoord) + sizeof(void*) * 2);
    return s;
}

std::vector<BlockCoord> VoxelStore::block_coords_sorted() const {
    std::vector<BlockCoord> out;
    {
        std::shared_lock lock(mutex_);
        out.reserve(blocks_.size());
        for (const auto& [bc, blk] : blocks_) out.push_back(bc);
    }
    std::sort(out.begin(), out.end());
    return out;
}

namespace {

constexpr char kMagic[5] = {'S', 'V', 'O', 'X', '1'};

template <typename T>
void write_raw(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_raw(std::istream& is) {
    T v;
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw DataError("truncated map snapshot");
    return v;
}

}  // namespace

void VoxelStore::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os.write(kMagic, sizeof(kMagic));
    write_raw(os, cfg_.voxel_size);
    write_raw(os, cfg_.truncation);
    write_raw(os, static_cast<uint32_t>(cfg_.num_labels));

    const auto coords = block_coords_sorted();
    write_raw(os, static_cast<uint64_t>(coords.size()));
    for (const BlockCoord& bc : coords) {
        const VoxelBlock* blk = find_block(bc);
        write_raw(os, bc.x);
        write_raw(os, bc.y);
        write_raw(os, bc.z);
        for (const TsdfVoxel& v : blk->tsdf) {
            write_raw(os, v.distance);
            write_raw(os, v.weight);
            write_raw(os, v.gradient.x());
            write_raw(os, v.gradient.y());
            write_raw(os, v.gradient.z());
        }
        const uint8_t has_sem = blk->has_semantics() ? 1 : 0;
        write_raw(os, has_sem);
        if (has_sem)
            os.write(reinterpret_cast<const char*>(blk->semantics.data()),
                     static_cast<std::streamsize>(blk->semantics.size() * sizeof(float)));
    }
    if (!os) throw DataError("write failed: " + path);
}

VoxelStore VoxelStore::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    char magic[5];
    is.read(magic, sizeof(magic));
    if (!is || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw DataError("not a SVOX1 snapshot: " + path);

    MapConfig cfg;
    cfg.voxel_size = read_raw<float>(is);
    cfg.truncation = read_raw<float>(is);
    cfg.num_labels = static_cast<int>(read_raw<uint32_t>(is));
    VoxelStore store(cfg);

    const uint64_t n_blocks = read_raw<uint64_t>(is);
    for (uint64_t i = 0; i < n_blocks; ++i) {
        BlockCoord bc;
        bc.x = read_raw<int32_t>(is);
        bc.y = read_raw<int32_t>(is);
        bc.z = read_raw<int32_t>(is);
        VoxelBlock& blk = store.get_or_allocate_block(bc);
        for (TsdfVoxel& v : blk.tsdf) {
            v.distance = read_raw<float>(is);
            v.weight = read_raw<float>(is);
            v.gradient.x() = read_raw<float>(is);
            v.gradient.y() = read_raw<float>(is);
            v.gradient.z() = read_raw<float>(is);
        }
        if (read_raw<uint8_t>(is)) {
            blk.semantics.resize(static_cast<size_t>(kBlockVoxels) * cfg.num_labels);
            is.read(reinterpret_cast<char*>(blk.semantics.data()),
                    static_cast<std::streamsize>(blk.semantics.size() * sizeof(float)));
            if (!is) throw DataError("truncated semantic section: " + path);
        }
    }
    return store;
}

}  // namespace semvox
