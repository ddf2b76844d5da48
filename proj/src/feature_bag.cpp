#include "slidefuse/feature_bag.hpp"

#include <cstring>
#include <fstream>

#include <json.hpp>

#include "slidefuse/colorops.hpp"
#include "slidefuse/curation.hpp"
#include "slidefuse/parallel.hpp"

namespace slidefuse {

Eigen::VectorXf extract_baseline_features(const Raster& patch) {
    if (patch.width != 256 || patch.height != 256 || patch.channels != 3)
        throw ArgumentError("extract_baseline_features: 256x256x3 patch expected");

    Eigen::VectorXf out = Eigen::VectorXf::Zero(kBaselineFeatureDim);
    const long total = 256L * 256L;
    for (long i = 0; i < total; ++i) {
        const Hsv hsv =
            rgb_to_hsv(patch.data[i * 3], patch.data[i * 3 + 1], patch.data[i * 3 + 2]);
        out[hsv.h] += 1.0f;
        out[256 + hsv.s] += 1.0f;
        out[512 + hsv.v] += 1.0f;
    }
    out.head(768) /= static_cast<float>(total);

    // 16x16 grayscale thumbnail, each cell a 16x16 box average in [0,1].
    for (int by = 0; by < 16; ++by)
        for (int bx = 0; bx < 16; ++bx) {
            double acc = 0.0;
            for (int dy = 0; dy < 16; ++dy)
                for (int dx = 0; dx < 16; ++dx) {
                    const int x = bx * 16 + dx, y = by * 16 + dy;
                    acc += (patch.at(x, y, 0) + patch.at(x, y, 1) + patch.at(x, y, 2)) / 3.0;
                }
            out[768 + by * 16 + bx] = static_cast<float>(acc / (256.0 * 255.0));
        }
    return out;
}

PatchBag extract_baseline_bag(const PyramidSlide& slide, const std::vector<PatchCoord>& coords,
                              int threads) {
    PatchBag bag;
    bag.slide_id = slide.slide_id();
    bag.extractor_tag = "baseline-v1";
    bag.coords = coords;
    bag.features.resize(static_cast<Eigen::Index>(coords.size()), kBaselineFeatureDim);
    parallel_for(coords.size(), threads, [&](std::size_t i) {
        bag.features.row(static_cast<Eigen::Index>(i)) =
            extract_baseline_features(read_patch(slide, coords[i])).transpose();
    });
    return bag;
}

namespace {

constexpr char kMagic[4] = {'P', 'B', 'A', 'G'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void put(std::ostream& out, T v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
    T v{};
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw FormatError("read_bag: truncated file");
    return v;
}

void put_string(std::ostream& out, const std::string& s) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in) {
    const auto len = get<std::uint32_t>(in);
    std::string s(len, '\0');
    in.read(s.data(), len);
    if (!in) throw FormatError("read_bag: truncated string");
    return s;
}

}  // namespace

void write_bag(const PatchBag& bag, const std::filesystem::path& path) {
    if (bag.coords.size() != static_cast<std::size_t>(bag.n()))
        throw ArgumentError("write_bag: coords/features row mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw NotFoundError("write_bag: cannot open " + path.string());
    out.write(kMagic, 4);
    put<std::uint32_t>(out, kVersion);
    put<std::uint32_t>(out, static_cast<std::uint32_t>(bag.n()));
    put<std::uint32_t>(out, static_cast<std::uint32_t>(bag.dim()));
    out.write(reinterpret_cast<const char*>(bag.features.data()),
              static_cast<std::streamsize>(sizeof(float) * bag.n() * bag.dim()));
    for (const auto& c : bag.coords) {
        put<std::uint64_t>(out, static_cast<std::uint64_t>(c.x));
        put<std::uint64_t>(out, static_cast<std::uint64_t>(c.y));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(c.patch_size));
        put<std::uint32_t>(out, static_cast<std::uint32_t>(c.read_downsample));
    }
    put_string(out, bag.slide_id);
    put_string(out, bag.extractor_tag);
}

PatchBag read_bag(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw NotFoundError("read_bag: cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw FormatError("read_bag: bad magic in " + path.string());
    if (get<std::uint32_t>(in) != kVersion)
        throw FormatError("read_bag: unsupported version in " + path.string());
    const auto n = get<std::uint32_t>(in);
    const auto d = get<std::uint32_t>(in);
    PatchBag bag;
    bag.features.resize(n, d);
    in.read(reinterpret_cast<char*>(bag.features.data()),
            static_cast<std::streamsize>(sizeof(float) * n * d));
    if (!in) throw FormatError("read_bag: truncated feature matrix");
    bag.coords.resize(n);
    for (auto& c : bag.coords) {
        c.x = static_cast<long>(get<std::uint64_t>(in));
        c.y = static_cast<long>(get<std::uint64_t>(in));
        c.patch_size = static_cast<int>(get<std::uint32_t>(in));
        c.read_downsample = static_cast<int>(get<std::uint32_t>(in));
    }
    bag.slide_id = get_string(in);
    bag.extractor_tag = get_string(in);
    if (!bag.features.allFinite())
        throw FormatError("read_bag: non-finite feature values in " + path.string());
    return bag;
}

PatchBag import_external_features(const std::filesystem::path& matrix_path, int dim,
                                  const std::filesystem::path& coords_path,
                                  const std::string& slide_id) {
    if (dim <= 0) throw ArgumentError("import_external_features: dim must be positive");
    std::ifstream mat(matrix_path, std::ios::binary | std::ios::ate);
    if (!mat) throw NotFoundError("import_external_features: missing " + matrix_path.string());
    const auto bytes = static_cast<std::size_t>(mat.tellg());
    mat.seekg(0);
    const std::size_t row_bytes = sizeof(float) * static_cast<std::size_t>(dim);
    if (bytes % row_bytes != 0)
        throw FormatError("import_external_features: matrix size not a multiple of row size");
    const std::size_t n = bytes / row_bytes;

    PatchBag bag;
    bag.slide_id = slide_id;
    bag.extractor_tag = "external";
    bag.features.resize(static_cast<Eigen::Index>(n), dim);
    mat.read(reinterpret_cast<char*>(bag.features.data()), static_cast<std::streamsize>(bytes));
    if (!mat) throw FormatError("import_external_features: truncated matrix file");

    std::ifstream coords(coords_path);
    if (!coords) throw NotFoundError("import_external_features: missing " + coords_path.string());
    std::string line;
    while (std::getline(coords, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("import_external_features: bad coords line: " + std::string(e.what()));
        }
        PatchCoord c;
        c.x = j.at("x").get<long>();
        c.y = j.at("y").get<long>();
        c.patch_size = j.value("patch_size", 256);
        c.read_downsample = j.value("read_downsample", 1);
        bag.coords.push_back(c);
    }
    if (bag.coords.size() != n)
        throw FormatError("import_external_features: " + std::to_string(n) + " feature rows but " +
                          std::to_string(bag.coords.size()) + " coords");
    for (Eigen::Index r = 0; r < bag.features.rows(); ++r)
        if (!bag.features.row(r).allFinite())
            throw FormatError("import_external_features: non-finite values in row " +
                              std::to_string(r));
    return bag;
}

}  // namespace slidefuse
