#include "semvox/types.hpp"

#include <fstream>
#include <sstream>

namespace semvox {

// labelset.cfg: one class per line, "name r g b"; line order defines class ids.
LabelSet LabelSet::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw DataError("cannot open labelset: " + path);
    LabelSet ls;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ss(line);
        std::string name;
        int r, g, b;
        if (!(ss >> name >> r >> g >> b))
            throw DataError("bad labelset line: \"" + line + "\" in " + path);
        ls.names.push_back(name);
        ls.colors.push_back({static_cast<uint8_t>(r), static_cast<uint8_t>(g),
                             static_cast<uint8_t>(b)});
    }
    if (ls.names.empty()) throw DataError("empty labelset: " + path);
    return ls;
}

void LabelSet::save(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw DataError("cannot open for writing: " + path);
    for (int i = 0; i < size(); ++i) {
        const Rgb& c = colors[static_cast<size_t>(i)];
        os << names[static_cast<size_t>(i)] << ' ' << int(c.r) << ' ' << int(c.g) << ' '
           << int(c.b) << '\n';
    }
}

}  // namespace semvox
