#include "semvox/dataset.hpp"
#include "semvox/evaluation.hpp"
#include "semvox/mesh.hpp"
#include "semvox/planner.hpp"
#include "semvox/ply_io.hpp"
#include "semvox/semantic_integrator.hpp"
#include "semvox/synthetic.hpp"
#include "semvox/traversability.hpp"
#include "semvox/tsdf_integrator.hpp"
#include "semvox/voxel_store.hpp"

#include "semvox/png_io.hpp"

#include <CLI11.hpp>

#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <optional>
#include <queue>
#include <thread>

namespace fs = std::filesystem;
using namespace semvox;

namespace {

// Bounded single-producer prefetch so the loader can read the next frame
// while the integrator works.
class FramePrefetcher {
public:
    FramePrefetcher(const DatasetReader& reader, size_t begin, size_t end)
        : reader_(reader), total_(end - begin) {
        worker_ = std::thread([this, begin, end] {
            try {
                for (size_t i = begin; i < end; ++i) push(reader_.read(i));
            } catch (...) {
                std::lock_guard lock(mutex_);
                error_ = std::current_exception();
                cv_.notify_all();
            }
        });
    }
    ~FramePrefetcher() { worker_.join(); }

    std::optional<Frame> next() {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return !queue_.empty() || produced_ == total_ || error_; });
        if (error_) std::rethrow_exception(error_);
        if (queue_.empty()) return std::nullopt;
        Frame f = std::move(queue_.front());
        queue_.pop();
        cv_.notify_all();
        return f;
    }

private:
    void push(Frame f) {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return queue_.size() < 2; });
        queue_.push(std::move(f));
        ++produced_;
        cv_.notify_all();
    }

    const DatasetReader& reader_;
    size_t total_;
    std::thread worker_;
    std::mutex mutex_;
    std::condition_variable cv_;
    std::queue<Frame> queue_;
    size_t produced_ = 0;
    std::exception_ptr error_;
};

int cmd_integrate(const std::string& dataset_root, const std::string& config_path,
                  const std::string& out_path, const std::string& mode,
                  bool no_bayes, bool no_semantics, const std::string& reports_path,
                  const std::string& debug_images, double voxel_size, double truncation,
                  int frame_start, int frame_end) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::parse_file(config_path);
    if (!dataset_root.empty()) cfg.dataset_root = dataset_root;
    if (cfg.dataset_root.empty()) throw DataError("no dataset given (flag or config)");
    if (voxel_size > 0) cfg.map.voxel_size = static_cast<float>(voxel_size);
    if (truncation > 0) cfg.map.truncation = static_cast<float>(truncation);
    else if (voxel_size > 0) cfg.map.truncation = static_cast<float>(5.0 * voxel_size);
    if (mode == "projective") cfg.integrator.mode = DistanceMode::projective;
    if (mode == "non_projective") cfg.integrator.mode = DistanceMode::non_projective;
    if (no_bayes) cfg.use_bayes = false;
    if (frame_start >= 0) cfg.frame_start = frame_start;
    if (frame_end >= 0) cfg.frame_end = frame_end;

    DatasetReader reader(cfg.dataset_root);
    if (reader.has_labelset()) cfg.map.num_labels = reader.labelset().size();
    VoxelStore store(cfg.map);
    cfg.integrator.truncation = cfg.map.truncation;
    TsdfIntegrator tsdf(store, cfg.integrator);
    SemanticConfig sem_cfg;
    sem_cfg.use_bayes = cfg.use_bayes;
    SemanticIntegrator semantics(store, sem_cfg);

    std::ofstream reports;
    if (!reports_path.empty()) {
        reports.open(reports_path);
        if (!reports) throw DataError("cannot open for writing: " + reports_path);
    }

    const size_t begin = static_cast<size_t>(std::max(0, cfg.frame_start));
    const size_t end = cfg.frame_end < 0
                           ? reader.size()
                           : std::min<size_t>(reader.size(), static_cast<size_t>(cfg.frame_end));
    if (begin >= end) throw DataError("empty frame range");

    if (!debug_images.empty()) fs::create_directories(debug_images);

    FramePrefetcher prefetch(reader, begin, end);
    size_t n_frames = 0, n_labeled = 0;
    while (auto frame = prefetch.next()) {
        ScanImages images = project_cloud(frame->cloud, reader.lidar());
        compute_normal_image(images, reader.lidar());
        const FrameReport report = tsdf.integrate_frame(images, frame->cloud.pose);
        if (reports) reports << report.json_line() << "\n";
        if (!debug_images.empty()) {
            char stem[32];
            std::snprintf(stem, sizeof(stem), "%06zu", frame->index);
            const ProjectionModel& m = reader.lidar();
            export_png16((fs::path(debug_images) / (std::string(stem) + "_depth.png")).string(),
                         images.depth, images.width, images.height_px, m.scale_f, 0.0);
            // lift the height offset so every exported value stays >= 0
            float min_h = 0.f;
            for (size_t j = 0; j < images.height.size(); ++j)
                if (images.depth[j] > 0.f) min_h = std::min(min_h, images.height[j]);
            export_png16((fs::path(debug_images) / (std::string(stem) + "_height.png")).string(),
                         images.height, images.width, images.height_px, m.scale_f,
                         std::max(m.offset_o, static_cast<double>(-min_h)));
        }
        if (!no_semantics && frame->label) {
            frame->label->max_depth = cfg.camera_max_depth;
            semantics.integrate_labels(*frame->label);
            ++n_labeled;
        }
        ++n_frames;
    }

    store.save(out_path);
    const StoreStats stats = store.stats();
    std::cerr << "integrated " << n_frames << " frames (" << n_labeled << " with labels), "
              << stats.allocated_blocks << " blocks, " << stats.observed_voxels
              << " observed voxels -> " << out_path << "\n";
    return 0;
}

int cmd_mesh(const std::string& map_path, const std::string& out_path,
             const std::string& labelset_path, double min_weight) {
    VoxelStore store = VoxelStore::load(map_path);
    std::optional<LabelSet> labels;
    if (!labelset_path.empty()) labels = LabelSet::load(labelset_path);
    const LabeledMesh mesh =
        extract_mesh(store, static_cast<float>(min_weight), labels ? &*labels : nullptr);
    write_mesh_ply(out_path, mesh);
    std::cerr << "mesh: " << mesh.vertices.size() << " vertices, " << mesh.faces.size()
              << " faces -> " << out_path << "\n";
    return 0;
}

TraversabilityConfig resolve_traversability(const RunConfig& cfg, const LabelSet& labels) {
    TraversabilityConfig t = cfg.traversability;
    t.traversable_labels.clear();
    for (const std::string& name : cfg.traversable_names) {
        const int id = labels.id_of(name);
        if (id < 0) throw DataError("traversable class \"" + name + "\" not in labelset");
        t.traversable_labels.push_back(id);
    }
    return t;
}

int cmd_traverse(const std::string& mesh_path, const std::string& labelset_path,
                 const std::string& out_dir, const std::string& config_path,
                 const std::string& traversable_csv, double resolution,
                 double inflation) {
    RunConfig cfg;
    if (!config_path.empty()) cfg = RunConfig::parse_file(config_path);
    if (!traversable_csv.empty()) {
        cfg.traversable_names.clear();
        std::istringstream ss(traversable_csv);
        std::string name;
        while (std::getline(ss, name, ','))
            if (!name.empty()) cfg.traversable_names.push_back(name);
    }
    if (resolution > 0) cfg.traversability.grid_resolution = resolution;
    if (inflation >= 0) cfg.traversability.inflation_radius = inflation;

    const LabelSet labels = LabelSet::load(labelset_path);
    const LabeledMesh mesh = read_mesh_ply(mesh_path);
    const TraversabilityConfig tcfg = resolve_traversability(cfg, labels);
    const TraversabilityScores scores = score_vertices(mesh, tcfg);
    const OccupancyGrid grid = project_occupancy(scores, mesh, tcfg);

    fs::create_directories(out_dir);
    write_scored_ply((fs::path(out_dir) / "traversability.ply").string(), mesh, scores);
    grid.save_pgm((fs::path(out_dir) / "occupancy.pgm").string(), &tcfg);
    size_t free_cells = 0;
    for (const CellState s : grid.cells) free_cells += s == CellState::free;
    std::cerr << "grid " << grid.width << "x" << grid.height << ", " << free_cells
              << " free cells -> " << out_dir << "\n";
    return 0;
}

int cmd_plan(const std::string& grid_path, const std::string& start_s, const std::string& goal_s,
             const std::string& out_path) {
    auto parse_xy = [](const std::string& s) {
        const auto comma = s.find(',');
        if (comma == std::string::npos) throw DataError("expected x,y: " + s);
        return Vec3d(std::stod(s.substr(0, comma)), std::stod(s.substr(comma + 1)), 0.0);
    };
    const OccupancyGrid grid = OccupancyGrid::load_pgm(grid_path);
    const PlanResult plan = plan_path(grid, parse_xy(start_s), parse_xy(goal_s));
    if (!plan.ok()) {
        std::cerr << (plan.status == PlanResult::Status::invalid_endpoint
                          ? "invalid endpoint: start or goal is not a free cell\n"
                          : "infeasible: no free path\n");
        return 3;
    }
    save_waypoints_csv(out_path, plan.waypoints);
    std::cerr << plan.waypoints.size() << " waypoints, cost " << plan.cost << " m -> "
              << out_path << "\n";
    return 0;
}

EvalCloud load_eval_cloud(const std::string& path, const std::string& labels_path) {
    if (path.ends_with(".bin")) {
        EvalCloud cloud;
        cloud.points = read_kitti_bin(path);
        std::string lp = labels_path;
        if (lp.empty()) {
            const std::string guess = path.substr(0, path.size() - 4) + ".label";
            if (fs::exists(guess)) lp = guess;
        }
        if (!lp.empty()) {
            const auto raw = read_kitti_labels(lp);
            if (raw.size() != cloud.points.size())
                throw DataError("label count differs from point count: " + lp);
            cloud.labels.assign(raw.begin(), raw.end());
        }
        return cloud;
    }
    return read_cloud_ply(path);
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, double voxel_size,
             const std::string& out_path, const std::string& csv_path,
             const std::string& labelset_path, const std::string& pred_labels,
             const std::string& gt_labels) {
    const EvalCloud pred = load_eval_cloud(pred_path, pred_labels);
    const EvalCloud gt = load_eval_cloud(gt_path, gt_labels);
    std::optional<LabelSet> labels;
    if (!labelset_path.empty()) labels = LabelSet::load(labelset_path);

    const EvalReport report = evaluate(pred, gt, voxel_size);
    if (pred.labeled() && gt.labeled() && report.semantics.matched == 0)
        std::cerr << "warning: no labeled points matched within 2*voxel; semantic scores "
                     "are absent\n";
    const std::string json = report.json(labels ? &*labels : nullptr);
    std::cout << json;
    if (!out_path.empty()) {
        std::ofstream os(out_path);
        if (!os) throw DataError("cannot open for writing: " + out_path);
        os << json;
    }
    if (!csv_path.empty()) report.save_per_class_csv(csv_path, labels ? &*labels : nullptr);
    return 0;
}

int cmd_synth(const std::string& scene_path, const std::string& out_dir, double gt_density) {
    const SceneSpec scene = SceneSpec::parse_file(scene_path);
    write_dataset(scene, out_dir, gt_density);
    std::cerr << "dataset with " << scene.trajectory.size() << " frames -> " << out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"semvox: metric-semantic TSDF mapping, traversability, and planning"};
    app.require_subcommand(1);

    // integrate
    auto* integrate = app.add_subcommand("integrate", "fuse a dataset into a map snapshot");
    std::string dataset, config, out = "map.svox", mode, reports, debug_images;
    bool no_bayes = false, no_semantics = false;
    double voxel_size = 0, truncation = 0;
    int frame_start = -1, frame_end = -1;
    integrate->add_option("dataset", dataset, "dataset root directory");
    integrate->add_option("--config", config, "run configuration file");
    integrate->add_option("--out", out, "output map snapshot (.svox)");
    integrate->add_option("--mode", mode, "projective | non_projective")
        ->check(CLI::IsMember({"projective", "non_projective", ""}));
    integrate->add_flag("--no-bayes", no_bayes, "latest-argmax semantic ablation");
    integrate->add_flag("--no-semantics", no_semantics, "skip semantic fusion");
    integrate->add_option("--reports", reports, "per-frame JSON lines file");
    integrate->add_option("--debug-images", debug_images,
                          "directory for 16-bit depth/height PNG exports");
    integrate->add_option("--voxel-size", voxel_size, "voxel size in meters");
    integrate->add_option("--truncation", truncation, "truncation distance in meters");
    integrate->add_option("--frame-start", frame_start, "first frame index");
    integrate->add_option("--frame-end", frame_end, "one past the last frame index");

    // mesh
    auto* mesh_cmd = app.add_subcommand("mesh", "extract a labeled mesh from a map snapshot");
    std::string map_path, mesh_out = "mesh.ply", labelset;
    double min_weight = kDefaultMeshMinWeight;
    mesh_cmd->add_option("map", map_path, "map snapshot")->required();
    mesh_cmd->add_option("--out", mesh_out, "output PLY");
    mesh_cmd->add_option("--labelset", labelset, "labelset for vertex colors");
    mesh_cmd->add_option("--min-weight", min_weight, "minimum corner weight");

    // traverse
    auto* traverse = app.add_subcommand("traverse", "score a mesh and project the grid");
    std::string mesh_in, trav_labelset, out_dir = "traversability", trav_config,
                traversable_csv;
    double resolution = 0, inflation = -1;
    traverse->add_option("mesh", mesh_in, "labeled mesh PLY")->required();
    traverse->add_option("--labelset", trav_labelset, "labelset file")->required();
    traverse->add_option("--out-dir", out_dir, "output directory");
    traverse->add_option("--config", trav_config, "run configuration file");
    traverse->add_option("--traversable", traversable_csv, "comma-separated class names");
    traverse->add_option("--resolution", resolution, "grid resolution, meters");
    traverse->add_option("--inflation", inflation, "inflation radius, meters");

    // plan
    auto* plan = app.add_subcommand("plan", "A* path on an occupancy grid");
    std::string grid_path, start_s, goal_s, plan_out = "path.csv";
    plan->add_option("grid", grid_path, "occupancy PGM")->required();
    plan->add_option("--start", start_s, "start as x,y (world meters)")->required();
    plan->add_option("--goal", goal_s, "goal as x,y (world meters)")->required();
    plan->add_option("--out", plan_out, "waypoint CSV");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "score a reconstruction against ground truth");
    std::string pred, gt, eval_out, eval_csv, eval_labelset, pred_labels, gt_labels;
    double eval_voxel = 0.0;
    eval_cmd->add_option("--pred", pred, "reconstructed cloud/mesh (PLY or KITTI .bin)")
        ->required();
    eval_cmd->add_option("--gt", gt, "ground-truth cloud (PLY or KITTI .bin)")->required();
    eval_cmd->add_option("--voxel-size", eval_voxel, "voxel size for the 2*voxel clamp")
        ->required();
    eval_cmd->add_option("--out", eval_out, "report JSON path");
    eval_cmd->add_option("--csv", eval_csv, "per-class IoU CSV path");
    eval_cmd->add_option("--labelset", eval_labelset, "labelset for class names");
    eval_cmd->add_option("--pred-labels", pred_labels, "labels for a .bin prediction");
    eval_cmd->add_option("--gt-labels", gt_labels, "labels for a .bin ground truth");

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic dataset from a scene file");
    std::string scene_path, synth_out;
    double gt_density = 200.0;
    synth->add_option("scene", scene_path, "scene description file")->required();
    synth->add_option("--out", synth_out, "dataset output directory")->required();
    synth->add_option("--gt-density", gt_density, "ground-truth samples per square meter");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;  // usage errors are exit 1
    }

    try {
        if (integrate->parsed())
            return cmd_integrate(dataset, config, out, mode, no_bayes, no_semantics, reports,
                                 debug_images, voxel_size, truncation, frame_start, frame_end);
        if (mesh_cmd->parsed()) return cmd_mesh(map_path, mesh_out, labelset, min_weight);
        if (traverse->parsed())
            return cmd_traverse(mesh_in, trav_labelset, out_dir, trav_config, traversable_csv,
                                resolution, inflation);
        if (plan->parsed()) return cmd_plan(grid_path, start_s, goal_s, plan_out);
        if (eval_cmd->parsed())
            return cmd_eval(pred, gt, eval_voxel, eval_out, eval_csv, eval_labelset,
                            pred_labels, gt_labels);
        if (synth->parsed()) return cmd_synth(scene_path, synth_out, gt_density);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 1;
}
