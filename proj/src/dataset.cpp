#include "semvox/dataset.hpp"

#include "semvox/png_io.hpp"

#include <algorithm>
#include <charconv>
#include <filesystem>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

namespace fs = std::filesystem;

namespace semvox {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kLabelMatchTolerance = 0.05;  // seconds

Pose parse_pose_tail(std::istringstream& ss, const std::string& context) {
    double tx, ty, tz, qx, qy, qz, qw;
    if (!(ss >> tx >> ty >> tz >> qx >> qy >> qz >> qw))
        throw DataError("bad pose line in " + context);
    Pose p = Pose::Identity();
    p.linear() = Eigen::Quaterniond(qw, qx, qy, qz).normalized().toRotationMatrix();
    p.translation() = Vec3d(tx, ty, tz);
    return p;
}

// Shortest decimal that round-trips; keeps serialize(parse(file)) == file for
// canonical files.
std::string format_double(double v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

std::string format_float(float v) {
    char buf[32];
    auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, end);
}

std::map<std::string, std::string> parse_kv_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(is, line)) {
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        const auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

double kv_double(const std::map<std::string, std::string>& kv, const std::string& key,
                 const std::string& path) {
    auto it = kv.find(key);
    if (it == kv.end()) throw DataError("missing key \"" + key + "\" in " + path);
    return std::stod(it->second);
}

}  // namespace

std::vector<Vec3d> read_kitti_bin(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open scan: " + path);
    is.seekg(0, std::ios::end);
    const auto bytes = static_cast<size_t>(is.tellg());
    is.seekg(0);
    if (bytes % 16 != 0) throw DataError("scan size not a multiple of 16 bytes: " + path);
    const size_t n = bytes / 16;
    std::vector<float> raw(n * 4);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (!is) throw DataError("truncated scan: " + path);
    std::vector<Vec3d> points(n);
    for (size_t i = 0; i < n; ++i)
        points[i] = Vec3d(raw[i * 4], raw[i * 4 + 1], raw[i * 4 + 2]);
    return points;
}

std::vector<uint16_t> read_kitti_labels(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open labels: " + path);
    is.seekg(0, std::ios::end);
    const auto bytes = static_cast<size_t>(is.tellg());
    is.seekg(0);
    if (bytes % 4 != 0) throw DataError("label file size not a multiple of 4: " + path);
    std::vector<uint32_t> raw(bytes / 4);
    is.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    std::vector<uint16_t> labels(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) labels[i] = static_cast<uint16_t>(raw[i] & 0xFFFF);
    return labels;
}

ProjectionModel load_lidar_cfg(const std::string& path) {
    const auto kv = parse_kv_file(path);
    ProjectionModel m;
    m.width = static_cast<int>(kv_double(kv, "width", path));
    m.height_px = static_cast<int>(kv_double(kv, "height", path));
    m.delta_phi = 2.0 * std::numbers::pi / m.width;
    m.theta0 = kv_double(kv, "theta0_deg", path) * kDegToRad;
    m.delta_theta = kv_double(kv, "delta_theta_deg", path) * kDegToRad;
    if (kv.count("scale")) m.scale_f = kv_double(kv, "scale", path);
    if (kv.count("offset")) m.offset_o = kv_double(kv, "offset", path);
    if (kv.count("min_range")) m.min_range = kv_double(kv, "min_range", path);
    m.validate();
    return m;
}

void save_lidar_cfg(const std::string& path, const ProjectionModel& model) {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "width = " << model.width << "\n";
    os << "height = " << model.height_px << "\n";
    os << "theta0_deg = " << format_double(model.theta0 / kDegToRad) << "\n";
    os << "delta_theta_deg = " << format_double(model.delta_theta / kDegToRad) << "\n";
    os << "scale = " << format_double(model.scale_f) << "\n";
    os << "offset = " << format_double(model.offset_o) << "\n";
    os << "min_range = " << format_double(model.min_range) << "\n";
}

DatasetReader::DatasetReader(const std::string& root) : root_(root) {
    const fs::path scans_dir = fs::path(root) / "scans";
    if (!fs::is_directory(scans_dir)) throw DataError("missing scans/ directory in " + root);
    for (const auto& entry : fs::directory_iterator(scans_dir))
        if (entry.path().extension() == ".bin") scan_files_.push_back(entry.path().string());
    std::sort(scan_files_.begin(), scan_files_.end());
    if (scan_files_.empty()) throw DataError("no scans in " + root);

    const fs::path poses_path = fs::path(root) / "poses.txt";
    std::ifstream poses(poses_path);
    if (!poses) throw DataError("missing poses.txt in " + root);
    std::string line;
    while (std::getline(poses, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        double ts;
        if (!(ss >> ts)) throw DataError("bad pose line: \"" + line + "\"");
        timestamps_.push_back(ts);
        poses_.push_back(parse_pose_tail(ss, poses_path.string()));
    }
    if (poses_.size() != scan_files_.size())
        throw DataError(std::to_string(scan_files_.size()) + " scans, " +
                        std::to_string(poses_.size()) + " poses in " + root);

    lidar_ = load_lidar_cfg((fs::path(root) / "lidar.cfg").string());

    const fs::path labelset_path = fs::path(root) / "labelset.cfg";
    if (fs::exists(labelset_path)) {
        labels_ = LabelSet::load(labelset_path.string());
        has_labelset_ = true;
    }

    const fs::path index_path = fs::path(root) / "labels_index.txt";
    if (fs::exists(index_path)) {
        if (!has_labelset_) throw DataError("labels_index.txt without labelset.cfg in " + root);
        std::ifstream index(index_path);
        while (std::getline(index, line)) {
            if (line.empty() || line[0] == '#') continue;
            std::istringstream ss(line);
            LabelEntry e;
            if (!(ss >> e.path >> e.timestamp >> e.fx >> e.fy >> e.cx >> e.cy))
                throw DataError("bad labels_index line: \"" + line + "\"");
            e.pose = parse_pose_tail(ss, index_path.string());
            label_entries_.push_back(std::move(e));
        }
    }

    label_match_.assign(scan_files_.size(), -1);
    for (size_t i = 0; i < scan_files_.size(); ++i) {
        double best = kLabelMatchTolerance;
        for (size_t j = 0; j < label_entries_.size(); ++j) {
            const double dt = std::abs(label_entries_[j].timestamp - timestamps_[i]);
            if (dt <= best) {
                best = dt;
                label_match_[i] = static_cast<int>(j);
            }
        }
    }

    order_.resize(scan_files_.size());
    std::iota(order_.begin(), order_.end(), size_t{0});
    std::stable_sort(order_.begin(), order_.end(),
                     [&](size_t a, size_t b) { return timestamps_[a] < timestamps_[b]; });
}

Frame DatasetReader::read(size_t i) const {
    if (i >= order_.size()) throw std::out_of_range("frame index");
    const size_t k = order_[i];
    Frame frame;
    frame.index = k;
    frame.cloud.points = read_kitti_bin(scan_files_[k]);
    frame.cloud.pose = poses_[k];
    frame.cloud.timestamp = timestamps_[k];

    if (label_match_[k] >= 0) {
        const LabelEntry& e = label_entries_[static_cast<size_t>(label_match_[k])];
        const std::string img_path = (fs::path(root_) / e.path).string();
        const GrayImage img = read_png_gray(img_path);
        LabelImage li;
        li.width = img.width;
        li.height = img.height;
        li.labels.assign(img.pixels.begin(), img.pixels.end());
        for (uint16_t lbl : li.labels)
            if (lbl >= labels_.size())
                throw DataError("label id " + std::to_string(lbl) + " outside the labelset in " +
                                img_path);
        li.fx = e.fx;
        li.fy = e.fy;
        li.cx = e.cx;
        li.cy = e.cy;
        li.pose = e.pose;
        li.timestamp = e.timestamp;

        const std::string conf_path = img_path + ".conf.png";
        if (fs::exists(conf_path)) {
            const GrayImage conf = read_png_gray(conf_path);
            if (conf.width != img.width || conf.height != img.height)
                throw DataError("confidence image dimensions differ: " + conf_path);
            li.confidence.resize(conf.pixels.size());
            for (size_t j = 0; j < conf.pixels.size(); ++j)
                li.confidence[j] = static_cast<float>(conf.pixels[j]) / 255.f;
        }
        // Optional dense per-pixel distributions: raw float32 LE, [v][u][k].
        const std::string probs_path = img_path + ".probs";
        if (has_labelset_ && fs::exists(probs_path)) {
            std::ifstream ps(probs_path, std::ios::binary);
            const size_t expect =
                static_cast<size_t>(img.width) * img.height * labels_.size();
            li.prob_tensor.resize(expect);
            ps.read(reinterpret_cast<char*>(li.prob_tensor.data()),
                    static_cast<std::streamsize>(expect * sizeof(float)));
            if (!ps) throw DataError("truncated probability tensor: " + probs_path);
        }
        frame.label = std::move(li);
    }
    return frame;
}

namespace {

struct ConfigCursor {
    std::string section;
    int line_no = 0;
    std::string origin;

    [[noreturn]] void fail(const std::string& why) const {
        throw DataError(origin + ":" + std::to_string(line_no) + ": " + why);
    }
};

}  // namespace

RunConfig RunConfig::parse(std::istream& is, const std::string& origin) {
    RunConfig cfg;
    ConfigCursor cur;
    cur.origin = origin;
    std::string line;
    while (std::getline(is, line)) {
        ++cur.line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string trimmed = line;
        trimmed.erase(0, trimmed.find_first_not_of(" \t\r"));
        if (trimmed.empty()) continue;
        if (trimmed.front() == '[') {
            const auto close = trimmed.find(']');
            if (close == std::string::npos) cur.fail("unterminated section header");
            cur.section = trimmed.substr(1, close - 1);
            continue;
        }
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos) cur.fail("expected key = value");
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string{} : s.substr(b, e - b + 1);
        };
        const std::string key = trim(trimmed.substr(0, eq));
        const std::string value = trim(trimmed.substr(eq + 1));

        try {
            if (cur.section == "dataset") {
                if (key == "root") cfg.dataset_root = value;
                else if (key == "output") cfg.output_dir = value;
                else if (key == "labelset") cfg.labelset_path = value;
                else if (key == "frame_start") cfg.frame_start = std::stoi(value);
                else if (key == "frame_end") cfg.frame_end = std::stoi(value);
                else cur.fail("unknown key \"" + key + "\"");
            } else if (cur.section == "map") {
                if (key == "voxel_size") cfg.map.voxel_size = std::stof(value);
                else if (key == "truncation") cfg.map.truncation = std::stof(value);
                else if (key == "num_labels") cfg.map.num_labels = std::stoi(value);
                else if (key == "max_blocks") cfg.map.max_blocks =
                    static_cast<uint32_t>(std::stoul(value));
                else cur.fail("unknown key \"" + key + "\"");
            } else if (cur.section == "integrator") {
                if (key == "mode") {
                    if (value == "projective") cfg.integrator.mode = DistanceMode::projective;
                    else if (value == "non_projective")
                        cfg.integrator.mode = DistanceMode::non_projective;
                    else cur.fail("mode must be projective or non_projective");
                } else if (key == "max_range") cfg.integrator.max_range = std::stod(value);
                else if (key == "alpha_epsilon") cfg.integrator.alpha_epsilon = std::stod(value);
                else if (key == "min_weight_clamp")
                    cfg.integrator.min_weight_clamp = std::stof(value);
                else if (key == "drop_unreliable")
                    cfg.integrator.drop_unreliable = value == "true";
                else if (key == "use_bayes") cfg.use_bayes = value == "true";
                else if (key == "camera_max_depth") cfg.camera_max_depth = std::stod(value);
                else cur.fail("unknown key \"" + key + "\"");
            } else if (cur.section == "traversability") {
                if (key == "radius") cfg.traversability.radius = std::stod(value);
                else if (key == "t_hd") cfg.traversability.t_hd = std::stod(value);
                else if (key == "t_v") cfg.traversability.t_v = std::stod(value);
                else if (key == "t_r") cfg.traversability.t_r = std::stod(value);
                else if (key == "grid_resolution")
                    cfg.traversability.grid_resolution = std::stod(value);
                else if (key == "inflation_radius")
                    cfg.traversability.inflation_radius = std::stod(value);
                else if (key == "traversable") {
                    cfg.traversable_names.clear();
                    std::istringstream ss(value);
                    std::string name;
                    while (std::getline(ss, name, ','))
                        if (!name.empty()) cfg.traversable_names.push_back(name);
                } else cur.fail("unknown key \"" + key + "\"");
            } else {
                cur.fail("unknown section [" + cur.section + "]");
            }
        } catch (const std::invalid_argument&) {
            cur.fail("bad value \"" + value + "\" for key \"" + key + "\"");
        }
    }
    return cfg;
}

RunConfig RunConfig::parse_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open config: " + path);
    return parse(is, path);
}

std::string RunConfig::serialize() const {
    std::ostringstream os;
    os << "[dataset]\n";
    os << "root = " << dataset_root << "\n";
    os << "output = " << output_dir << "\n";
    if (!labelset_path.empty()) os << "labelset = " << labelset_path << "\n";
    os << "frame_start = " << frame_start << "\n";
    os << "frame_end = " << frame_end << "\n";
    os << "\n[map]\n";
    os << "voxel_size = " << format_float(map.voxel_size) << "\n";
    os << "truncation = " << format_float(map.truncation) << "\n";
    os << "num_labels = " << map.num_labels << "\n";
    os << "max_blocks = " << map.max_blocks << "\n";
    os << "\n[integrator]\n";
    os << "mode = "
       << (integrator.mode == DistanceMode::projective ? "projective" : "non_projective") << "\n";
    os << "max_range = " << format_double(integrator.max_range) << "\n";
    os << "alpha_epsilon = " << format_double(integrator.alpha_epsilon) << "\n";
    os << "min_weight_clamp = " << format_float(integrator.min_weight_clamp) << "\n";
    os << "drop_unreliable = " << (integrator.drop_unreliable ? "true" : "false") << "\n";
    os << "use_bayes = " << (use_bayes ? "true" : "false") << "\n";
    os << "camera_max_depth = " << format_double(camera_max_depth) << "\n";
    os << "\n[traversability]\n";
    os << "radius = " << format_double(traversability.radius) << "\n";
    os << "t_hd = " << format_double(traversability.t_hd) << "\n";
    os << "t_v = " << format_double(traversability.t_v) << "\n";
    os << "t_r = " << format_double(traversability.t_r) << "\n";
    os << "grid_resolution = " << format_double(traversability.grid_resolution) << "\n";
    os << "inflation_radius = " << format_double(traversability.inflation_radius) << "\n";
    if (!traversable_names.empty()) {
        os << "traversable = ";
        for (size_t i = 0; i < traversable_names.size(); ++i)
            os << (i ? "," : "") << traversable_names[i];
        os << "\n";
    }
    return os.str();
}

}  // namespace semvox
