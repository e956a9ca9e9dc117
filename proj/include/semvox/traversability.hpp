#pragma once

#include "semvox/mesh.hpp"
#include "semvox/types.hpp"

#include <string>
#include <vector>

namespace semvox {

struct TraversabilityConfig {
    double radius = 0.25;           // neighborhood ball, meters
    double t_hd = 0.6;              // max height difference, meters
    double t_v = 20.0;              // max steepness, degrees
    double t_r = 30.0;              // max roughness, degrees
    std::vector<int> traversable_labels;
    double grid_resolution = 0.2;   // meters per cell
    double inflation_radius = 0.0;  // meters

    void validate() const {
        if (!(radius > 0) || !(t_hd > 0) || !(t_v > 0) || !(t_r > 0))
            throw std::invalid_argument("traversability thresholds must be positive");
        if (!(grid_resolution > 0))
            throw std::invalid_argument("grid resolution must be positive");
    }
};

struct TraversabilityScores {
    std::vector<float> height_diff;  // meters
    std::vector<float> steepness;    // degrees
    std::vector<float> roughness;    // degrees
    std::vector<uint8_t> traversable;
};

// Per-vertex geometric scores over the ball neighborhood plus the semantic
// gate; unlabeled vertices are never traversable.
TraversabilityScores score_vertices(const LabeledMesh& mesh, const TraversabilityConfig& cfg);

enum class CellState : uint8_t { unknown = 0, free = 1, occupied = 2 };

struct OccupancyGrid {
    Vec3d origin = Vec3d::Zero();  // world position of cell (0,0) corner; z unused
    double resolution = 0.2;
    int width = 0;
    int height = 0;
    std::vector<CellState> cells;
    std::vector<float> occupancy_fraction;

    size_t idx(int cx, int cy) const { return static_cast<size_t>(cy) * width + cx; }
    CellState at(int cx, int cy) const { return cells[idx(cx, cy)]; }
    bool contains(int cx, int cy) const {
        return cx >= 0 && cx < width && cy >= 0 && cy < height;
    }
    bool world_to_cell(double wx, double wy, int& cx, int& cy) const {
        cx = static_cast<int>(std::floor((wx - origin.x()) / resolution));
        cy = static_cast<int>(std::floor((wy - origin.y()) / resolution));
        return contains(cx, cy);
    }
    Vec3d cell_center(int cx, int cy) const {
        return {origin.x() + (cx + 0.5) * resolution, origin.y() + (cy + 0.5) * resolution, 0.0};
    }

    // 8-bit PGM (255 free, 0 occupied, 205 unknown) plus "<path>.meta" text
    // with origin, resolution, and the thresholds used to build the grid.
    void save_pgm(const std::string& path, const TraversabilityConfig* cfg = nullptr) const;
    static OccupancyGrid load_pgm(const std::string& path);
};

// A cell is free only when every projected vertex in it is traversable;
// untouched cells stay unknown. Occupied cells are then dilated by the
// inflation radius.
OccupancyGrid project_occupancy(const TraversabilityScores& scores, const LabeledMesh& mesh,
                                const TraversabilityConfig& cfg);

}  // namespace semvox
