#include "semvox/ply_io.hpp"

#include <cstring>
#include <fstream>
#include <sstream>
#include <unordered_map>

namespace semvox {

namespace {

template <typename T>
void put(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

size_t scalar_size(const std::string& type) {
    if (type == "char" || type == "uchar" || type == "int8" || type == "uint8") return 1;
    if (type == "short" || type == "ushort" || type == "int16" || type == "uint16") return 2;
    if (type == "int" || type == "uint" || type == "int32" || type == "uint32" ||
        type == "float" || type == "float32")
        return 4;
    if (type == "double" || type == "float64") return 8;
    throw DataError("unsupported PLY scalar type: " + type);
}

double read_scalar(const char* p, const std::string& type) {
    if (type == "float" || type == "float32") {
        float v;
        std::memcpy(&v, p, 4);
        return v;
    }
    if (type == "double" || type == "float64") {
        double v;
        std::memcpy(&v, p, 8);
        return v;
    }
    if (type == "uchar" || type == "uint8") return static_cast<double>(*reinterpret_cast<const uint8_t*>(p));
    if (type == "char" || type == "int8") return static_cast<double>(*reinterpret_cast<const int8_t*>(p));
    if (type == "ushort" || type == "uint16") {
        uint16_t v;
        std::memcpy(&v, p, 2);
        return v;
    }
    if (type == "short" || type == "int16") {
        int16_t v;
        std::memcpy(&v, p, 2);
        return v;
    }
    if (type == "uint" || type == "uint32") {
        uint32_t v;
        std::memcpy(&v, p, 4);
        return v;
    }
    if (type == "int" || type == "int32") {
        int32_t v;
        std::memcpy(&v, p, 4);
        return v;
    }
    throw DataError("unsupported PLY scalar type: " + type);
}

}  // namespace

void write_mesh_ply(const std::string& path, const LabeledMesh& mesh) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "element vertex " << mesh.vertices.size() << "\n";
    os << "property float x\nproperty float y\nproperty float z\n";
    os << "property float nx\nproperty float ny\nproperty float nz\n";
    os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    os << "property uchar label\n";
    os << "element face " << mesh.faces.size() << "\n";
    os << "property list uchar int vertex_indices\n";
    os << "end_header\n";

    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        put(os, mesh.vertices[i].x());
        put(os, mesh.vertices[i].y());
        put(os, mesh.vertices[i].z());
        put(os, mesh.vertex_normals[i].x());
        put(os, mesh.vertex_normals[i].y());
        put(os, mesh.vertex_normals[i].z());
        put(os, mesh.vertex_colors[i].r);
        put(os, mesh.vertex_colors[i].g);
        put(os, mesh.vertex_colors[i].b);
        put(os, mesh.vertex_labels[i]);
    }
    for (const auto& f : mesh.faces) {
        put(os, static_cast<uint8_t>(3));
        put(os, static_cast<int32_t>(f[0]));
        put(os, static_cast<int32_t>(f[1]));
        put(os, static_cast<int32_t>(f[2]));
    }
    if (!os) throw DataError("write failed: " + path);
}

void write_cloud_ply(const std::string& path, const EvalCloud& cloud, const LabelSet* labels) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "element vertex " << cloud.points.size() << "\n";
    os << "property float x\nproperty float y\nproperty float z\n";
    const bool with_labels = cloud.labeled();
    if (with_labels) {
        if (labels) os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
        os << "property uchar label\n";
    }
    os << "end_header\n";
    for (size_t i = 0; i < cloud.points.size(); ++i) {
        put(os, static_cast<float>(cloud.points[i].x()));
        put(os, static_cast<float>(cloud.points[i].y()));
        put(os, static_cast<float>(cloud.points[i].z()));
        if (with_labels) {
            const int lbl = cloud.labels[i];
            if (labels) {
                const Rgb c = lbl < 0 ? Rgb{} : labels->color_of_label(lbl);
                put(os, c.r);
                put(os, c.g);
                put(os, c.b);
            }
            put(os, static_cast<uint8_t>(lbl < 0 ? kUnlabeled : lbl));
        }
    }
    if (!os) throw DataError("write failed: " + path);
}

LabeledMesh read_mesh_ply(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "ply") throw DataError("not a PLY file: " + path);

    size_t vertex_count = 0, face_count = 0;
    bool binary_le = false, in_vertex = false;
    std::vector<std::pair<std::string, std::string>> props;  // (name, type)
    while (std::getline(is, line)) {
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (word == "element") {
            std::string name;
            size_t count;
            ss >> name >> count;
            in_vertex = name == "vertex";
            if (in_vertex) vertex_count = count;
            if (name == "face") face_count = count;
        } else if (word == "property" && in_vertex) {
            std::string type, name;
            ss >> type >> name;
            props.emplace_back(name, type);
        } else if (word == "end_header") {
            break;
        }
    }
    if (!binary_le) throw DataError("only binary_little_endian PLY is supported: " + path);

    size_t stride = 0;
    std::unordered_map<std::string, std::pair<size_t, std::string>> offsets;
    for (const auto& [name, type] : props) {
        offsets[name] = {stride, type};
        stride += scalar_size(type);
    }
    auto need = [&](const std::string& name) {
        auto it = offsets.find(name);
        if (it == offsets.end()) throw DataError("PLY lacks property " + name + ": " + path);
        return it->second;
    };
    const auto [ox, tx] = need("x");
    const auto [oy, ty] = need("y");
    const auto [oz, tz] = need("z");
    const auto [onx, tnx] = need("nx");
    const auto [ony, tny] = need("ny");
    const auto [onz, tnz] = need("nz");
    const auto [orr, trr] = need("red");
    const auto [org, trg] = need("green");
    const auto [orb, trb] = need("blue");
    const auto [olb, tlb] = need("label");

    LabeledMesh mesh;
    mesh.vertices.resize(vertex_count);
    mesh.vertex_normals.resize(vertex_count);
    mesh.vertex_colors.resize(vertex_count);
    mesh.vertex_labels.resize(vertex_count);
    std::vector<char> row(stride);
    for (size_t i = 0; i < vertex_count; ++i) {
        is.read(row.data(), static_cast<std::streamsize>(stride));
        if (!is) throw DataError("truncated PLY: " + path);
        mesh.vertices[i] = Vec3f(static_cast<float>(read_scalar(row.data() + ox, tx)),
                                 static_cast<float>(read_scalar(row.data() + oy, ty)),
                                 static_cast<float>(read_scalar(row.data() + oz, tz)));
        mesh.vertex_normals[i] = Vec3f(static_cast<float>(read_scalar(row.data() + onx, tnx)),
                                       static_cast<float>(read_scalar(row.data() + ony, tny)),
                                       static_cast<float>(read_scalar(row.data() + onz, tnz)));
        mesh.vertex_colors[i] = {static_cast<uint8_t>(read_scalar(row.data() + orr, trr)),
                                 static_cast<uint8_t>(read_scalar(row.data() + org, trg)),
                                 static_cast<uint8_t>(read_scalar(row.data() + orb, trb))};
        mesh.vertex_labels[i] = static_cast<uint8_t>(read_scalar(row.data() + olb, tlb));
    }
    mesh.faces.reserve(face_count);
    for (size_t i = 0; i < face_count; ++i) {
        uint8_t n;
        is.read(reinterpret_cast<char*>(&n), 1);
        if (!is) throw DataError("truncated PLY faces: " + path);
        std::vector<int32_t> idx(n);
        is.read(reinterpret_cast<char*>(idx.data()), n * 4);
        if (n == 3)
            mesh.faces.push_back({static_cast<uint32_t>(idx[0]), static_cast<uint32_t>(idx[1]),
                                  static_cast<uint32_t>(idx[2])});
    }
    return mesh;
}

void write_scored_ply(const std::string& path, const LabeledMesh& mesh,
                      const TraversabilityScores& scores) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open for writing: " + path);
    os << "ply\nformat binary_little_endian 1.0\n";
    os << "element vertex " << mesh.vertices.size() << "\n";
    os << "property float x\nproperty float y\nproperty float z\n";
    os << "property float nx\nproperty float ny\nproperty float nz\n";
    os << "property uchar red\nproperty uchar green\nproperty uchar blue\n";
    os << "property uchar label\n";
    os << "property float height_diff\nproperty float steepness\nproperty float roughness\n";
    os << "property uchar traversable\n";
    os << "element face " << mesh.faces.size() << "\n";
    os << "property list uchar int vertex_indices\n";
    os << "end_header\n";
    for (size_t i = 0; i < mesh.vertices.size(); ++i) {
        put(os, mesh.vertices[i].x());
        put(os, mesh.vertices[i].y());
        put(os, mesh.vertices[i].z());
        put(os, mesh.vertex_normals[i].x());
        put(os, mesh.vertex_normals[i].y());
        put(os, mesh.vertex_normals[i].z());
        // traversable = green, blocked = red; keeps viewers informative
        const Rgb c = scores.traversable[i] ? Rgb{40, 180, 40} : Rgb{200, 40, 40};
        put(os, c.r);
        put(os, c.g);
        put(os, c.b);
        put(os, mesh.vertex_labels[i]);
        put(os, scores.height_diff[i]);
        put(os, scores.steepness[i]);
        put(os, scores.roughness[i]);
        put(os, static_cast<uint8_t>(scores.traversable[i]));
    }
    for (const auto& f : mesh.faces) {
        put(os, static_cast<uint8_t>(3));
        put(os, static_cast<int32_t>(f[0]));
        put(os, static_cast<int32_t>(f[1]));
        put(os, static_cast<int32_t>(f[2]));
    }
    if (!os) throw DataError("write failed: " + path);
}

EvalCloud read_cloud_ply(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open: " + path);
    std::string line;
    if (!std::getline(is, line) || line != "ply") throw DataError("not a PLY file: " + path);

    size_t vertex_count = 0;
    struct Prop {
        std::string name, type;
    };
    std::vector<Prop> props;
    bool in_vertex = false, binary_le = false;
    while (std::getline(is, line)) {
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (word == "format") {
            std::string fmt;
            ss >> fmt;
            binary_le = fmt == "binary_little_endian";
        } else if (word == "element") {
            std::string name;
            size_t count;
            ss >> name >> count;
            in_vertex = name == "vertex";
            if (in_vertex) vertex_count = count;
        } else if (word == "property" && in_vertex) {
            std::string type, name;
            ss >> type >> name;
            if (type == "list") throw DataError("list property in vertex element: " + path);
            props.push_back({name, type});
        } else if (word == "end_header") {
            break;
        }
    }
    if (!binary_le) throw DataError("only binary_little_endian PLY is supported: " + path);
    if (vertex_count == 0) throw DataError("PLY has no vertices: " + path);

    size_t stride = 0;
    int off_x = -1, off_y = -1, off_z = -1, off_label = -1;
    std::string type_x, type_label;
    for (const Prop& p : props) {
        if (p.name == "x") { off_x = static_cast<int>(stride); type_x = p.type; }
        if (p.name == "y") off_y = static_cast<int>(stride);
        if (p.name == "z") off_z = static_cast<int>(stride);
        if (p.name == "label") { off_label = static_cast<int>(stride); type_label = p.type; }
        stride += scalar_size(p.type);
    }
    if (off_x < 0 || off_y < 0 || off_z < 0)
        throw DataError("PLY vertex element lacks x/y/z: " + path);

    EvalCloud cloud;
    cloud.points.resize(vertex_count);
    if (off_label >= 0) cloud.labels.resize(vertex_count);
    std::vector<char> row(stride);
    for (size_t i = 0; i < vertex_count; ++i) {
        is.read(row.data(), static_cast<std::streamsize>(stride));
        if (!is) throw DataError("truncated PLY: " + path);
        cloud.points[i] = {read_scalar(row.data() + off_x, type_x),
                           read_scalar(row.data() + off_y, type_x),
                           read_scalar(row.data() + off_z, type_x)};
        if (off_label >= 0) {
            const int lbl = static_cast<int>(read_scalar(row.data() + off_label, type_label));
            cloud.labels[i] = lbl == kUnlabeled ? -1 : lbl;
        }
    }
    return cloud;
}

}  // namespace semvox
