#include "semvox/planner.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <queue>

namespace semvox {

namespace {

const double kSqrt2 = std::sqrt(2.0);

// Step costs are tracked as (straight, diagonal) counts; the cost in cell
// units is recomputed from the counts so equal paths are bit-identical no
// matter the expansion order.
struct StepCount {
    uint32_t straight = 0;
    uint32_t diagonal = 0;
    double value() const { return straight + diagonal * kSqrt2; }
};

constexpr int kDx[8] = {1, -1, 0, 0, 1, 1, -1, -1};
constexpr int kDy[8] = {0, 0, 1, -1, 1, -1, 1, -1};

}  // namespace

PlanResult plan_path(const OccupancyGrid& grid, const Vec3d& start, const Vec3d& goal) {
    PlanResult result;
    int sx, sy, gx, gy;
    if (!grid.world_to_cell(start.x(), start.y(), sx, sy) ||
        !grid.world_to_cell(goal.x(), goal.y(), gx, gy) ||
        grid.at(sx, sy) != CellState::free || grid.at(gx, gy) != CellState::free) {
        result.status = PlanResult::Status::invalid_endpoint;
        return result;
    }

    const size_t n = grid.cells.size();
    std::vector<StepCount> g(n);
    std::vector<uint8_t> closed(n, 0), open_seen(n, 0);
    std::vector<int32_t> parent(n, -1);

    auto heuristic = [&](int cx, int cy) {
        const double dx = cx - gx, dy = cy - gy;
        return std::sqrt(dx * dx + dy * dy);
    };

    using QueueEntry = std::pair<double, size_t>;  // f value, cell
    std::priority_queue<QueueEntry, std::vector<QueueEntry>, std::greater<>> open;
    const size_t start_idx = grid.idx(sx, sy);
    const size_t goal_idx = grid.idx(gx, gy);
    open.push({heuristic(sx, sy), start_idx});
    open_seen[start_idx] = 1;

    bool found = false;
    while (!open.empty()) {
        const size_t cur = open.top().second;
        open.pop();
        if (closed[cur]) continue;
        closed[cur] = 1;
        if (cur == goal_idx) {
            found = true;
            break;
        }
        const int cx = static_cast<int>(cur) % grid.width;
        const int cy = static_cast<int>(cur) / grid.width;
        for (int k = 0; k < 8; ++k) {
            const int nx = cx + kDx[k], ny = cy + kDy[k];
            if (!grid.contains(nx, ny) || grid.at(nx, ny) != CellState::free) continue;
            const size_t ni = grid.idx(nx, ny);
            if (closed[ni]) continue;
            StepCount cand = g[cur];
            (k < 4 ? cand.straight : cand.diagonal) += 1;
            if (!open_seen[ni] || cand.value() < g[ni].value()) {
                g[ni] = cand;
                parent[ni] = static_cast<int32_t>(cur);
                open_seen[ni] = 1;
                open.push({cand.value() + heuristic(nx, ny), ni});
            }
        }
    }

    if (!found) {
        result.status = PlanResult::Status::infeasible;
        return result;
    }

    std::vector<Vec3d> cells;
    for (int32_t i = static_cast<int32_t>(goal_idx); i != -1; i = parent[i])
        cells.push_back(grid.cell_center(i % grid.width, i / grid.width));
    std::reverse(cells.begin(), cells.end());

    result.status = PlanResult::Status::success;
    result.cost = g[goal_idx].value() * grid.resolution;

    // Equidistant resampling of the cell-center polyline.
    const double spacing = 2.0 * grid.resolution;
    result.waypoints.push_back(cells.front());
    double carried = 0.0;
    for (size_t i = 0; i + 1 < cells.size(); ++i) {
        const Vec3d a = cells[i], b = cells[i + 1];
        const double seg = (b - a).norm();
        double along = spacing - carried;
        while (along < seg) {
            result.waypoints.push_back(a + (b - a) * (along / seg));
            along += spacing;
        }
        carried = seg - (along - spacing);
    }
    if ((result.waypoints.back() - cells.back()).norm() > 1e-9)
        result.waypoints.push_back(cells.back());
    return result;
}

void save_waypoints_csv(const std::string& path, const std::vector<Vec3d>& waypoints) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "x,y\n";
    for (const Vec3d& w : waypoints) os << w.x() << "," << w.y() << "\n";
}

}  // namespace semvox
