#include "semvox/mesh.hpp"

#include "semvox/mc_tables.hpp"
#include "semvox/threading.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace semvox {

namespace {

// A mesh vertex lives on the lattice edge from `base` along `axis`; keying by
// the edge makes shared vertices between neighboring cells and blocks
// coincide exactly.
struct EdgeKey {
    VoxelCoord base;
    uint8_t axis;

    bool operator==(const EdgeKey&) const = default;
};

struct EdgeKeyHash {
    size_t operator()(const EdgeKey& k) const {
        return SpatialHash{}(k.base) * 31 + k.axis;
    }
};

struct VertexData {
    Vec3f position;
    Vec3f normal;
    uint8_t label;
};

struct CellCorner {
    const TsdfVoxel* tsdf = nullptr;
    const VoxelBlock* block = nullptr;
    int linear = 0;
    VoxelCoord coord;
};

// Interpolated vertex on the edge between two corner voxels; computed from
// the lower corner so adjacent blocks produce bit-identical results.
// Near-zero corner distances would land vertices within float rounding of the
// lattice corner, collapsing several edges onto one position; keep |d| off
// zero. Sign is preserved so the case index stays consistent.
inline float nonzero_distance(float d) {
    constexpr float eps = 1e-5f;
    if (d > -eps && d < eps) return d < 0.f ? -eps : eps;
    return d;
}

VertexData make_edge_vertex(const CellCorner& lo, const CellCorner& hi, const MapConfig& cfg,
                            int reserved_unlabeled) {
    const float dl = nonzero_distance(lo.tsdf->distance);
    const float dh = nonzero_distance(hi.tsdf->distance);
    const float t = dl / (dl - dh);  // zero crossing guaranteed by the case index

    VertexData out;
    const Vec3f cl = voxel_center(lo.coord, cfg).cast<float>();
    const Vec3f ch = voxel_center(hi.coord, cfg).cast<float>();
    out.position = cl + t * (ch - cl);

    Vec3f n = (1.f - t) * lo.tsdf->gradient + t * hi.tsdf->gradient;
    const float norm = n.norm();
    out.normal = norm > 1e-8f ? (n / norm).eval() : Vec3f(0.f, 0.f, 1.f);

    out.label = kUnlabeled;
    if (lo.block->has_semantics() && hi.block->has_semantics()) {
        const int k_count = cfg.num_labels;
        const float* pl = lo.block->probs_at(lo.linear, k_count);
        const float* ph = hi.block->probs_at(hi.linear, k_count);
        // an endpoint still holding the exact uniform prior has never been
        // updated and carries no evidence
        const float prior = 1.f / static_cast<float>(k_count);
        auto is_prior = [&](const float* p) {
            for (int k = 0; k < k_count; ++k)
                if (p[k] != prior) return false;
            return true;
        };
        if (is_prior(pl) || is_prior(ph)) return out;
        int best = 0;
        float best_p = -1.f;
        for (int k = 0; k < k_count; ++k) {
            const float p = (1.f - t) * pl[k] + t * ph[k];
            if (p > best_p) {  // tie -> lower class id
                best_p = p;
                best = k;
            }
        }
        // a reserved trailing "unlabeled" class carries no semantic claim
        out.label = best == reserved_unlabeled ? kUnlabeled : static_cast<uint8_t>(best);
    }
    return out;
}

struct BlockMeshData {
    std::vector<EdgeKey> vertex_keys;
    std::vector<VertexData> vertex_data;
    std::vector<std::array<uint32_t, 3>> faces;  // block-local vertex indices
};

// Marching cubes over the cells whose base corner lies in this block.
BlockMeshData mesh_block(const VoxelStore& store, const VoxelBlock& blk, float min_weight,
                         int reserved_unlabeled) {
    BlockMeshData out;
    const MapConfig& cfg = store.config();

    // Cache of the 9x9x9 corner voxels this block's cells can touch.
    const TsdfVoxel* corner_tsdf[9][9][9];
    const VoxelBlock* corner_block[9][9][9];
    int corner_linear[9][9][9];
    const VoxelCoord origin = voxel_at(blk.coord, 0);
    for (int z = 0; z < 9; ++z)
        for (int y = 0; y < 9; ++y)
            for (int x = 0; x < 9; ++x) {
                const VoxelCoord vc{origin.x + x, origin.y + y, origin.z + z};
                const VoxelBlock* b =
                    (x < 8 && y < 8 && z < 8) ? &blk : store.find_block(block_of(vc));
                corner_block[z][y][x] = b;
                corner_linear[z][y][x] = b ? local_index(vc) : 0;
                corner_tsdf[z][y][x] =
                    b ? &b->tsdf[static_cast<size_t>(corner_linear[z][y][x])] : nullptr;
            }

    std::unordered_map<EdgeKey, uint32_t, EdgeKeyHash> edge_vertex;

    for (int z = 0; z < kBlockSide; ++z) {
        for (int y = 0; y < kBlockSide; ++y) {
            for (int x = 0; x < kBlockSide; ++x) {
                CellCorner corners[8];
                bool usable = true;
                int case_index = 0;
                for (int c = 0; c < 8 && usable; ++c) {
                    const int cx = x + mc::kCornerOffset[c][0];
                    const int cy = y + mc::kCornerOffset[c][1];
                    const int cz = z + mc::kCornerOffset[c][2];
                    const TsdfVoxel* v = corner_tsdf[cz][cy][cx];
                    if (!v || v->weight < min_weight) {
                        usable = false;
                        break;
                    }
                    corners[c] = {v, corner_block[cz][cy][cx], corner_linear[cz][cy][cx],
                                  {origin.x + cx, origin.y + cy, origin.z + cz}};
                    if (v->distance < 0.f) case_index |= 1 << c;
                }
                if (!usable || mc::kEdgeTable[case_index] == 0) continue;

                uint32_t edge_idx[12];
                for (int e = 0; e < 12; ++e) {
                    if (!(mc::kEdgeTable[case_index] >> e & 1)) continue;
                    const CellCorner* a = &corners[mc::kEdgeCorners[e][0]];
                    const CellCorner* b = &corners[mc::kEdgeCorners[e][1]];
                    if (b->coord < a->coord) std::swap(a, b);
                    uint8_t axis = 0;
                    if (b->coord.y != a->coord.y) axis = 1;
                    if (b->coord.z != a->coord.z) axis = 2;
                    const EdgeKey key{a->coord, axis};
                    auto [it, inserted] =
                        edge_vertex.try_emplace(key, static_cast<uint32_t>(out.vertex_data.size()));
                    if (inserted) {
                        out.vertex_keys.push_back(key);
                        out.vertex_data.push_back(make_edge_vertex(*a, *b, cfg, reserved_unlabeled));
                    }
                    edge_idx[e] = it->second;
                }

                // table order is clockwise seen from outside; emit reversed so
                // face normals point toward positive distance
                const int8_t* row = mc::kTriTable[case_index];
                for (int i = 0; row[i] != -1; i += 3) {
                    const uint32_t i0 = edge_idx[row[i]];
                    const uint32_t i1 = edge_idx[row[i + 1]];
                    const uint32_t i2 = edge_idx[row[i + 2]];
                    if (i0 == i1 || i1 == i2 || i0 == i2) continue;  // degenerate
                    out.faces.push_back({i0, i2, i1});
                }
            }
        }
    }
    return out;
}

void stitch(const std::vector<std::pair<BlockCoord, const BlockMeshData*>>& parts,
            const LabelSet* labels, LabeledMesh& mesh) {
    mesh = LabeledMesh{};
    std::unordered_map<EdgeKey, uint32_t, EdgeKeyHash> global_index;
    for (const auto& [bc, part] : parts) {
        std::vector<uint32_t> remap(part->vertex_keys.size());
        for (size_t i = 0; i < part->vertex_keys.size(); ++i) {
            auto [it, inserted] = global_index.try_emplace(
                part->vertex_keys[i], static_cast<uint32_t>(mesh.vertices.size()));
            if (inserted) {
                const VertexData& vd = part->vertex_data[i];
                mesh.vertices.push_back(vd.position);
                mesh.vertex_normals.push_back(vd.normal);
                mesh.vertex_labels.push_back(vd.label);
                mesh.vertex_colors.push_back(
                    labels && vd.label != kUnlabeled ? labels->color_of_label(vd.label) : Rgb{});
            }
            remap[i] = it->second;
        }
        for (const auto& f : part->faces)
            mesh.faces.push_back({remap[f[0]], remap[f[1]], remap[f[2]]});
    }
}

}  // namespace

namespace {

int reserved_unlabeled_id(const LabelSet* labels) {
    if (labels && !labels->names.empty() && labels->names.back() == "unlabeled")
        return labels->size() - 1;
    return -1;
}

}  // namespace

LabeledMesh extract_mesh(const VoxelStore& store, float min_weight, const LabelSet* labels) {
    const auto coords = store.block_coords_sorted();
    const int reserved = reserved_unlabeled_id(labels);
    std::vector<BlockMeshData> block_meshes(coords.size());
    parallel_for(coords.size(), [&](size_t i) {
        const VoxelBlock* blk = store.find_block(coords[i]);
        block_meshes[i] = mesh_block(store, *blk, min_weight, reserved);
    });

    std::vector<std::pair<BlockCoord, const BlockMeshData*>> parts;
    parts.reserve(coords.size());
    for (size_t i = 0; i < coords.size(); ++i) parts.emplace_back(coords[i], &block_meshes[i]);
    LabeledMesh mesh;
    stitch(parts, labels, mesh);
    return mesh;
}

VertexCloud extract_vertex_cloud(const LabeledMesh& mesh) {
    VertexCloud out;
    std::map<std::array<float, 3>, int> seen;
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        const Vec3f& v = mesh.vertices[i];
        const std::array<float, 3> key{v.x(), v.y(), v.z()};
        if (!seen.try_emplace(key, 1).second) continue;
        out.points.emplace_back(v.cast<double>());
        out.labels.push_back(mesh.vertex_labels[i] == kUnlabeled ? -1
                                                                 : mesh.vertex_labels[i]);
    }
    return out;
}

struct IncrementalMesher::BlockMesh : BlockMeshData {};

const LabeledMesh& IncrementalMesher::update(const VoxelStore& store,
                                             const std::vector<BlockCoord>& dirty) {
    // A cell with base corner in block B reads voxels from B and its +1
    // neighbors, so a dirty block D invalidates blocks D - {0,1}^3.
    std::vector<BlockCoord> affected;
    for (const BlockCoord& d : dirty)
        for (int dz = -1; dz <= 0; ++dz)
            for (int dy = -1; dy <= 0; ++dy)
                for (int dx = -1; dx <= 0; ++dx)
                    affected.push_back({d.x + dx, d.y + dy, d.z + dz});
    std::sort(affected.begin(), affected.end());
    affected.erase(std::unique(affected.begin(), affected.end()), affected.end());

    last_remeshed_.clear();
    for (const BlockCoord& bc : affected) {
        const VoxelBlock* blk = store.find_block(bc);
        if (!blk) {
            cache_.erase(bc);
            continue;
        }
        auto bm = std::make_shared<BlockMesh>();
        static_cast<BlockMeshData&>(*bm) = mesh_block(store, *blk, min_weight_, reserved_unlabeled_id(labels_));
        cache_[bc] = std::move(bm);
        last_remeshed_.push_back(bc);
    }

    std::vector<std::pair<BlockCoord, const BlockMeshData*>> parts;
    parts.reserve(cache_.size());
    for (const auto& [bc, bm] : cache_) parts.emplace_back(bc, bm.get());
    std::sort(parts.begin(), parts.end(),
              [](const auto& a, const auto& b) { return a.first < b.first; });
    stitch(parts, labels_, stitched_);
    return stitched_;
}

}  // namespace semvox
