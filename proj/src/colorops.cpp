#include "slidefuse/colorops.hpp"

#include <fstream>

#include <json.hpp>

namespace slidefuse {

// stains.json: {"hematoxylin":[r,g,b], "eosin":[...], "dab":[...]} in OD space.
StainMatrix StainMatrix::load_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("stains.json not found: " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("stains.json parse error: " + std::string(e.what()));
    }
    Eigen::Matrix3d m;
    const char* keys[3] = {"hematoxylin", "eosin", "dab"};
    for (int i = 0; i < 3; ++i) {
        if (!j.contains(keys[i]) || !j[keys[i]].is_array() || j[keys[i]].size() != 3)
            throw FormatError(std::string("stains.json: missing or malformed '") + keys[i] + "'");
        for (int c = 0; c < 3; ++c) m(i, c) = j[keys[i]][c].get<double>();
    }
    return StainMatrix(m);
}

}  // namespace slidefuse
