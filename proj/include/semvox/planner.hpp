#pragma once

#include "semvox/traversability.hpp"

#include <string>
#include <vector>

namespace semvox {

struct PlanResult {
    enum class Status { success, infeasible, invalid_endpoint };
    Status status = Status::infeasible;
    std::vector<Vec3d> waypoints;  // equidistant, world frame, z = 0
    double cost = 0.0;             // meters, optimal over the 8-connected graph

    bool ok() const { return status == Status::success; }
};

// 8-connected A* over free cells with Euclidean heuristic and sqrt(2)
// diagonals; the returned cost is graph-optimal. The path is resampled to
// equidistant waypoints spaced 2 * resolution.
PlanResult plan_path(const OccupancyGrid& grid, const Vec3d& start, const Vec3d& goal);

void save_waypoints_csv(const std::string& path, const std::vector<Vec3d>& waypoints);

}  // namespace semvox
