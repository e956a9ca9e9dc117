#include "semvox/traversability.hpp"

#include "semvox/threading.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_map>

namespace semvox {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

// Uniform grid over vertex positions with cell size = ball radius; a ball
// query only has to visit the 27 surrounding cells.
struct VertexIndex {
    double cell;
    std::unordered_map<VoxelCoord, std::vector<uint32_t>, SpatialHash> cells;

    VertexIndex(const std::vector<Vec3f>& pts, double radius) : cell(radius) {
        for (uint32_t i = 0; i < pts.size(); ++i) cells[key(pts[i])].push_back(i);
    }
    VoxelCoord key(const Vec3f& p) const {
        return {static_cast<int32_t>(std::floor(p.x() / cell)),
                static_cast<int32_t>(std::floor(p.y() / cell)),
                static_cast<int32_t>(std::floor(p.z() / cell))};
    }
    template <typename Fn>
    void for_each_in_ball(const std::vector<Vec3f>& pts, const Vec3f& center, double radius,
                          Fn&& fn) const {
        const VoxelCoord k = key(center);
        const float r2 = static_cast<float>(radius * radius);
        for (int dz = -1; dz <= 1; ++dz)
            for (int dy = -1; dy <= 1; ++dy)
                for (int dx = -1; dx <= 1; ++dx) {
                    auto it = cells.find({k.x + dx, k.y + dy, k.z + dz});
                    if (it == cells.end()) continue;
                    for (uint32_t j : it->second)
                        if ((pts[j] - center).squaredNorm() <= r2) fn(j);
                }
    }
};

}  // namespace

TraversabilityScores score_vertices(const LabeledMesh& mesh, const TraversabilityConfig& cfg) {
    cfg.validate();
    if (mesh.vertex_normals.size() != mesh.vertices.size())
        throw std::invalid_argument("score_vertices: mesh has no vertex normals");

    const size_t n = mesh.vertices.size();
    TraversabilityScores out;
    out.height_diff.resize(n);
    out.steepness.resize(n);
    out.roughness.resize(n);
    out.traversable.assign(n, 0);

    std::vector<uint8_t> label_ok(256, 0);
    for (int id : cfg.traversable_labels)
        if (id >= 0 && id < 255) label_ok[static_cast<size_t>(id)] = 1;

    const VertexIndex index(mesh.vertices, cfg.radius);

    parallel_for(n, [&](size_t i) {
        const Vec3f& p = mesh.vertices[i];
        float z_min = p.z(), z_max = p.z();
        Vec3f normal_sum = Vec3f::Zero();
        index.for_each_in_ball(mesh.vertices, p, cfg.radius, [&](uint32_t j) {
            z_min = std::min(z_min, mesh.vertices[j].z());
            z_max = std::max(z_max, mesh.vertices[j].z());
            normal_sum += mesh.vertex_normals[j];
        });

        const float v_hd = z_max - z_min;
        const Vec3f& nv = mesh.vertex_normals[i];
        const float v_s = static_cast<float>(
            std::acos(std::clamp(nv.z(), -1.f, 1.f)) * kRadToDeg);
        float v_r = 180.f;  // conflicting normals in the whole ball
        const float sum_norm = normal_sum.norm();
        if (sum_norm > 1e-9f)
            v_r = static_cast<float>(
                std::acos(std::clamp(nv.dot(normal_sum / sum_norm), -1.f, 1.f)) * kRadToDeg);

        out.height_diff[i] = v_hd;
        out.steepness[i] = v_s;
        out.roughness[i] = v_r;
        const uint8_t lbl = mesh.vertex_labels[i];
        out.traversable[i] = v_hd <= cfg.t_hd && v_s <= cfg.t_v && v_r <= cfg.t_r &&
                             lbl != kUnlabeled && label_ok[lbl];
    });
    return out;
}

OccupancyGrid project_occupancy(const TraversabilityScores& scores, const LabeledMesh& mesh,
                                const TraversabilityConfig& cfg) {
    cfg.validate();
    OccupancyGrid grid;
    grid.resolution = cfg.grid_resolution;
    if (mesh.vertices.empty()) return grid;

    Vec3f lo = mesh.vertices.front(), hi = mesh.vertices.front();
    for (const Vec3f& v : mesh.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    grid.origin = {std::floor(lo.x() / grid.resolution) * grid.resolution,
                   std::floor(lo.y() / grid.resolution) * grid.resolution, 0.0};
    grid.width = static_cast<int>(std::floor((hi.x() - grid.origin.x()) / grid.resolution)) + 1;
    grid.height = static_cast<int>(std::floor((hi.y() - grid.origin.y()) / grid.resolution)) + 1;
    grid.cells.assign(static_cast<size_t>(grid.width) * grid.height, CellState::unknown);
    grid.occupancy_fraction.assign(grid.cells.size(), 0.f);

    std::vector<uint32_t> total(grid.cells.size(), 0), bad(grid.cells.size(), 0);
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        int cx, cy;
        if (!grid.world_to_cell(mesh.vertices[i].x(), mesh.vertices[i].y(), cx, cy)) continue;
        const size_t c = grid.idx(cx, cy);
        ++total[c];
        if (!scores.traversable[i]) ++bad[c];
    }
    for (size_t c = 0; c < grid.cells.size(); ++c) {
        if (total[c] == 0) continue;
        grid.occupancy_fraction[c] = static_cast<float>(bad[c]) / static_cast<float>(total[c]);
        grid.cells[c] = bad[c] == 0 ? CellState::free : CellState::occupied;
    }

    if (cfg.inflation_radius > 0.0) {
        const int r_cells = static_cast<int>(std::ceil(cfg.inflation_radius / grid.resolution));
        const double r2 = cfg.inflation_radius * cfg.inflation_radius;
        std::vector<CellState> dilated = grid.cells;
        for (int cy = 0; cy < grid.height; ++cy)
            for (int cx = 0; cx < grid.width; ++cx) {
                if (grid.at(cx, cy) != CellState::occupied) continue;
                for (int dy = -r_cells; dy <= r_cells; ++dy)
                    for (int dx = -r_cells; dx <= r_cells; ++dx) {
                        const double d2 = (dx * grid.resolution) * (dx * grid.resolution) +
                                          (dy * grid.resolution) * (dy * grid.resolution);
                        if (d2 > r2 || !grid.contains(cx + dx, cy + dy)) continue;
                        dilated[grid.idx(cx + dx, cy + dy)] = CellState::occupied;
                    }
            }
        grid.cells = std::move(dilated);
    }
    return grid;
}

void OccupancyGrid::save_pgm(const std::string& path, const TraversabilityConfig* cfg) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "P5\n" << width << " " << height << "\n255\n";
    for (int cy = 0; cy < height; ++cy)
        for (int cx = 0; cx < width; ++cx) {
            const CellState s = at(cx, cy);
            const uint8_t v = s == CellState::free ? 255 : s == CellState::occupied ? 0 : 205;
            os.put(static_cast<char>(v));
        }
    std::ofstream meta(path + ".meta");
    meta << "origin_x = " << origin.x() << "\n";
    meta << "origin_y = " << origin.y() << "\n";
    meta << "resolution = " << resolution << "\n";
    if (cfg) {
        meta << "radius = " << cfg->radius << "\n";
        meta << "t_hd = " << cfg->t_hd << "\n";
        meta << "t_v = " << cfg->t_v << "\n";
        meta << "t_r = " << cfg->t_r << "\n";
        meta << "inflation_radius = " << cfg->inflation_radius << "\n";
    }
}

OccupancyGrid OccupancyGrid::load_pgm(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::string magic;
    is >> magic;
    if (magic != "P5") throw DataError("not a binary PGM: " + path);
    OccupancyGrid grid;
    int maxval;
    is >> grid.width >> grid.height >> maxval;
    is.get();  // single whitespace after header
    if (grid.width <= 0 || grid.height <= 0 || maxval != 255)
        throw DataError("bad PGM header: " + path);
    grid.cells.resize(static_cast<size_t>(grid.width) * grid.height);
    grid.occupancy_fraction.assign(grid.cells.size(), 0.f);
    for (size_t i = 0; i < grid.cells.size(); ++i) {
        const int v = is.get();
        if (v < 0) throw DataError("truncated PGM: " + path);
        grid.cells[i] = v == 255  ? CellState::free
                        : v == 0 ? CellState::occupied
                                 : CellState::unknown;
        if (grid.cells[i] == CellState::occupied) grid.occupancy_fraction[i] = 1.f;
    }

    std::ifstream meta(path + ".meta");
    if (!meta) throw DataError("missing grid metadata: " + path + ".meta");
    std::string key, eq;
    double val;
    while (meta >> key >> eq >> val) {
        if (key == "origin_x") grid.origin.x() = val;
        else if (key == "origin_y") grid.origin.y() = val;
        else if (key == "resolution") grid.resolution = val;
    }
    return grid;
}

}  // namespace semvox
