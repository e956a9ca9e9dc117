#pragma once

#include "semvox/evaluation.hpp"
#include "semvox/mesh.hpp"
#include "semvox/traversability.hpp"

#include <string>

namespace semvox {

// Binary little-endian PLY with per-vertex x,y,z,nx,ny,nz,red,green,blue and
// uchar label; unlabeled vertices are gray (128,128,128) with label 255.
void write_mesh_ply(const std::string& path, const LabeledMesh& mesh);

// Reads back a mesh PLY written by write_mesh_ply (normals, colors, labels,
// faces).
LabeledMesh read_mesh_ply(const std::string& path);

// Mesh plus per-vertex height_diff/steepness/roughness floats and a
// traversable flag.
void write_scored_ply(const std::string& path, const LabeledMesh& mesh,
                      const TraversabilityScores& scores);

// Point cloud PLY (x,y,z + uchar label when the cloud is labeled).
void write_cloud_ply(const std::string& path, const EvalCloud& cloud,
                     const LabelSet* labels = nullptr);

// Reads the vertex element of a mesh or cloud PLY; faces are ignored. Picks
// up a "label" property when present (255 -> unlabeled -> -1).
EvalCloud read_cloud_ply(const std::string& path);

}  // namespace semvox
