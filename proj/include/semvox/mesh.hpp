#pragma once

#include "semvox/types.hpp"
#include "semvox/voxel_store.hpp"

#include <unordered_map>
#include <vector>

namespace semvox {

struct LabeledMesh {
    std::vector<Vec3f> vertices;
    std::vector<std::array<uint32_t, 3>> faces;
    std::vector<uint8_t> vertex_labels;   // kUnlabeled when no semantics
    std::vector<Rgb> vertex_colors;
    std::vector<Vec3f> vertex_normals;

    size_t vertex_count() const { return vertices.size(); }
    bool empty() const { return faces.empty(); }
};

// Labeled point set produced from mesh vertices (exact-duplicate positions
// removed); feeds evaluation and traversability.
struct VertexCloud {
    std::vector<Vec3d> points;
    std::vector<int> labels;  // -1 = unlabeled
};

inline constexpr float kDefaultMeshMinWeight = 1e-4f;

// Marching cubes over every 2x2x2 corner cell whose 8 corners are observed
// with weight >= min_weight. Vertex labels are the argmax of the
// edge-interpolated class distributions; colors come from the label set.
LabeledMesh extract_mesh(const VoxelStore& store, float min_weight = kDefaultMeshMinWeight,
                         const LabelSet* labels = nullptr);

VertexCloud extract_vertex_cloud(const LabeledMesh& mesh);

// Re-meshes only blocks affected by the given dirty set and keeps a per-block
// cache; the stitched result matches extract_mesh bit-for-bit on vertex
// positions.
class IncrementalMesher {
public:
    explicit IncrementalMesher(float min_weight = kDefaultMeshMinWeight,
                               const LabelSet* labels = nullptr)
        : min_weight_(min_weight), labels_(labels) {}

    // Returns the stitched global mesh after refreshing affected blocks.
    const LabeledMesh& update(const VoxelStore& store, const std::vector<BlockCoord>& dirty);

    // Blocks re-meshed by the last update() call.
    const std::vector<BlockCoord>& last_remeshed() const { return last_remeshed_; }

    const LabeledMesh& mesh() const { return stitched_; }

private:
    struct BlockMesh;
    float min_weight_;
    const LabelSet* labels_;
    std::unordered_map<BlockCoord, std::shared_ptr<BlockMesh>, SpatialHash> cache_;
    std::vector<BlockCoord> last_remeshed_;
    LabeledMesh stitched_;
};

}  // namespace semvox
