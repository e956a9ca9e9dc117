#pragma once

// Independent reference implementations the unit and acceptance suites check
// the library against. Everything here is deliberately brute-force and stays
// off the production code paths.

#include "semvox/traversability.hpp"
#include "semvox/types.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>
#include <set>
#include <vector>

namespace oracles {

using semvox::Vec3d;

// O(n*m) nearest neighbor.
inline double brute_nearest_dist(const Vec3d& q, const std::vector<Vec3d>& cloud) {
    double best = std::numeric_limits<double>::infinity();
    for (const Vec3d& p : cloud) best = std::min(best, (p - q).norm());
    return best;
}

inline double brute_re(const std::vector<Vec3d>& m, const std::vector<Vec3d>& g, double nu) {
    double sum = 0.0;
    for (const Vec3d& p : m) {
        const double d = std::min(2.0 * nu, brute_nearest_dist(p, g));
        sum += d * d;
    }
    return std::sqrt(sum / static_cast<double>(m.size()));
}

inline double brute_cd(const std::vector<Vec3d>& m, const std::vector<Vec3d>& g, double nu) {
    double sm = 0.0, sg = 0.0;
    for (const Vec3d& p : m) sm += std::min(2.0 * nu, brute_nearest_dist(p, g));
    for (const Vec3d& q : g) sg += std::min(2.0 * nu, brute_nearest_dist(q, m));
    return sm / (2.0 * m.size()) + sg / (2.0 * g.size());
}

inline double brute_rc(const std::vector<Vec3d>& m, const std::vector<Vec3d>& g, double nu) {
    size_t hits = 0;
    for (const Vec3d& q : g) hits += brute_nearest_dist(q, m) <= 2.0 * nu;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(g.size());
}

// Dijkstra over the same 8-connected free-cell graph the planner uses; step
// costs tracked as (straight, diagonal) counts exactly like the planner.
struct DijkstraResult {
    bool reachable = false;
    double cost = 0.0;  // cell units
};

inline DijkstraResult dijkstra_grid(const semvox::OccupancyGrid& grid, int sx, int sy, int gx,
                                    int gy) {
    using semvox::CellState;
    DijkstraResult result;
    if (!grid.contains(sx, sy) || !grid.contains(gx, gy)) return result;
    if (grid.at(sx, sy) != CellState::free || grid.at(gx, gy) != CellState::free) return result;

    const double sqrt2 = std::sqrt(2.0);
    struct Cost {
        uint32_t straight = 0, diag = 0;
        double value(double sqrt2) const { return straight + diag * sqrt2; }
    };
    const size_t n = grid.cells.size();
    std::vector<Cost> dist(n);
    std::vector<uint8_t> done(n, 0), seen(n, 0);
    using Entry = std::pair<double, size_t>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> pq;
    const size_t start = grid.idx(sx, sy), goal = grid.idx(gx, gy);
    pq.push({0.0, start});
    seen[start] = 1;
    const int dx8[8] = {1, -1, 0, 0, 1, 1, -1, -1};
    const int dy8[8] = {0, 0, 1, -1, 1, -1, 1, -1};
    while (!pq.empty()) {
        const size_t cur = pq.top().second;
        pq.pop();
        if (done[cur]) continue;
        done[cur] = 1;
        if (cur == goal) break;
        const int cx = static_cast<int>(cur) % grid.width;
        const int cy = static_cast<int>(cur) / grid.width;
        for (int k = 0; k < 8; ++k) {
            const int nx = cx + dx8[k], ny = cy + dy8[k];
            if (!grid.contains(nx, ny) || grid.at(nx, ny) != CellState::free) continue;
            const size_t ni = grid.idx(nx, ny);
            if (done[ni]) continue;
            Cost cand = dist[cur];
            (k < 4 ? cand.straight : cand.diag) += 1;
            if (!seen[ni] || cand.value(sqrt2) < dist[ni].value(sqrt2)) {
                dist[ni] = cand;
                seen[ni] = 1;
                pq.push({cand.value(sqrt2), ni});
            }
        }
    }
    if (!done[goal]) return result;
    result.reachable = true;
    result.cost = dist[goal].value(sqrt2);
    return result;
}

// Voxels a segment passes through, found by dense sampling. Used to check the
// DDA traversal; a fine step cannot skip a cell thicker than the step.
inline std::set<std::array<int32_t, 3>> marched_voxels(const Vec3d& a, const Vec3d& b,
                                                       const semvox::MapConfig& cfg) {
    std::set<std::array<int32_t, 3>> cells;
    const double len = (b - a).norm();
    const int steps = std::max(2, static_cast<int>(len / (cfg.voxel_size / 64.0)));
    for (int i = 0; i <= steps; ++i) {
        const Vec3d p = a + (b - a) * (static_cast<double>(i) / steps);
        const semvox::VoxelCoord v = semvox::world_to_voxel(p, cfg);
        cells.insert({v.x, v.y, v.z});
    }
    return cells;
}

}  // namespace oracles
