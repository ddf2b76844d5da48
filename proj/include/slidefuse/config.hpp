#pragma once

#include <filesystem>
#include <map>
#include <string>

#include "slidefuse/curation.hpp"
#include "slidefuse/evaluation.hpp"
#include "slidefuse/heatmap.hpp"

namespace slidefuse {

// Flat TOML subset: [section] headers and scalar key = value pairs
// (strings, numbers, booleans). Enough for pipeline configs; arrays and
// nested tables are not supported.
class Toml {
public:
    static Toml parse_file(const std::filesystem::path& path);
    static Toml parse_string(const std::string& text);

    bool has(const std::string& section, const std::string& key) const;
    std::string get_string(const std::string& section, const std::string& key,
                           const std::string& fallback) const;
    double get_double(const std::string& section, const std::string& key, double fallback) const;
    long get_int(const std::string& section, const std::string& key, long fallback) const;
    bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

    void set(const std::string& section, const std::string& key, const std::string& value);
    void write(const std::filesystem::path& path) const;
    std::string dump() const;

private:
    // section -> key -> raw value text
    std::map<std::string, std::map<std::string, std::string>> data_;
};

struct PipelineConfig {
    std::filesystem::path cohort_manifest;
    std::filesystem::path bags_dir;
    std::filesystem::path output_dir = "out";
    std::filesystem::path stains_json;  // optional stain matrix override
    SegmentationParams segmentation;
    CurationParams curation;
    mil::MilHyper mil_hyper;
    gbdt::GbdtHyper gbdt_hyper;
    HeatmapParams heatmap;
    int n_folds = 10;
    std::uint64_t seed = 7;
    int threads = 1;

    static PipelineConfig from_toml(const Toml& toml);
    Toml to_toml() const;
    eval::ExperimentConfig experiment() const;
};

}  // namespace slidefuse
