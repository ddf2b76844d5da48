#include "slidefuse/config.hpp"

#include <fstream>
#include <sstream>

namespace slidefuse {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

}  // namespace

Toml Toml::parse_string(const std::string& text) {
    Toml t;
    std::istringstream in(text);
    std::string line, section;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        if (line.front() == '[') {
            if (line.back() != ']')
                throw FormatError("toml: bad section header at line " + std::to_string(line_no));
            section = trim(line.substr(1, line.size() - 2));
            t.data_[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw FormatError("toml: expected key = value at line " + std::to_string(line_no));
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"')
            value = value.substr(1, value.size() - 2);
        t.data_[section][key] = value;
    }
    return t;
}

Toml Toml::parse_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw NotFoundError("toml: cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_string(ss.str());
}

bool Toml::has(const std::string& section, const std::string& key) const {
    auto s = data_.find(section);
    return s != data_.end() && s->second.count(key);
}

std::string Toml::get_string(const std::string& section, const std::string& key,
                             const std::string& fallback) const {
    auto s = data_.find(section);
    if (s == data_.end()) return fallback;
    auto k = s->second.find(key);
    return k == s->second.end() ? fallback : k->second;
}

double Toml::get_double(const std::string& section, const std::string& key,
                        double fallback) const {
    if (!has(section, key)) return fallback;
    return std::stod(get_string(section, key, ""));
}

long Toml::get_int(const std::string& section, const std::string& key, long fallback) const {
    if (!has(section, key)) return fallback;
    return std::stol(get_string(section, key, ""));
}

bool Toml::get_bool(const std::string& section, const std::string& key, bool fallback) const {
    if (!has(section, key)) return fallback;
    const auto v = get_string(section, key, "");
    if (v == "true") return true;
    if (v == "false") return false;
    throw FormatError("toml: bad boolean '" + v + "' for " + section + "." + key);
}

void Toml::set(const std::string& section, const std::string& key, const std::string& value) {
    data_[section][key] = value;
}

std::string Toml::dump() const {
    std::ostringstream out;
    auto is_bare = [](const std::string& v) {
        if (v.empty()) return false;
        if (v == "true" || v == "false") return true;
        char* end = nullptr;
        std::strtod(v.c_str(), &end);
        return end == v.c_str() + v.size();
    };
    for (const auto& [section, kv] : data_) {
        if (!section.empty()) out << "[" << section << "]\n";
        for (const auto& [k, v] : kv)
            out << k << " = " << (is_bare(v) ? v : "\"" + v + "\"") << "\n";
        out << "\n";
    }
    return out.str();
}

void Toml::write(const std::filesystem::path& path) const {
    std::ofstream out(path);
    if (!out) throw NotFoundError("toml: cannot open " + path.string());
    out << dump();
}

PipelineConfig PipelineConfig::from_toml(const Toml& t) {
    PipelineConfig c;
    c.cohort_manifest = t.get_string("paths", "cohort_manifest", "");
    c.bags_dir = t.get_string("paths", "bags_dir", "");
    c.output_dir = t.get_string("paths", "output_dir", "out");
    c.stains_json = t.get_string("paths", "stains_json", "");
    c.n_folds = static_cast<int>(t.get_int("evaluation", "n_folds", 10));
    c.seed = static_cast<std::uint64_t>(t.get_int("evaluation", "seed", 7));
    c.threads = static_cast<int>(t.get_int("evaluation", "threads", 1));

    auto& s = c.segmentation;
    s.sat_threshold = static_cast<int>(t.get_int("segmentation", "sat_threshold", 8));
    s.median_kernel = static_cast<int>(t.get_int("segmentation", "median_kernel", 7));
    s.close_kernel_w = static_cast<int>(t.get_int("segmentation", "close_kernel_w", 4));
    s.close_kernel_h = static_cast<int>(t.get_int("segmentation", "close_kernel_h", 4));
    s.min_contour_area = t.get_double("segmentation", "min_contour_area", 16.0);
    s.min_hole_area = t.get_double("segmentation", "min_hole_area", 4.0);
    s.target_downsample = t.get_double("segmentation", "target_downsample", 16.0);
    s.four_corner_test = t.get_bool("segmentation", "four_corner_test", false);

    auto& cu = c.curation;
    cu.white_intensity = static_cast<int>(t.get_int("curation", "white_intensity", 230));
    cu.black_intensity = static_cast<int>(t.get_int("curation", "black_intensity", 25));
    cu.rgb_frac = t.get_double("curation", "rgb_frac", 0.60);
    cu.hsv_s_max = static_cast<int>(t.get_int("curation", "hsv_s_max", 25));
    cu.hsv_v_min = static_cast<int>(t.get_int("curation", "hsv_v_min", 230));
    cu.hsv_frac = t.get_double("curation", "hsv_frac", 0.95);
    cu.eosin_intensity_max = static_cast<int>(t.get_int("curation", "eosin_intensity_max", 50));
    cu.eosin_frac = t.get_double("curation", "eosin_frac", 0.80);

    auto& m = c.mil_hyper;
    m.bag_loss_weight = t.get_double("mil", "bag_loss_weight", 0.7);
    m.instance_loss_weight = t.get_double("mil", "instance_loss_weight", 0.3);
    m.top_k = static_cast<int>(t.get_int("mil", "top_k", 8));
    m.learning_rate = t.get_double("mil", "learning_rate", 2e-4);
    m.weight_decay = t.get_double("mil", "weight_decay", 1e-5);
    m.epochs = static_cast<int>(t.get_int("mil", "epochs", 50));
    m.early_stop_patience = static_cast<int>(t.get_int("mil", "early_stop_patience", 20));

    auto& g = c.gbdt_hyper;
    g.eta = t.get_double("gbdt", "eta", 0.1);
    g.gamma = t.get_double("gbdt", "gamma", 0.5);
    g.max_depth = static_cast<int>(t.get_int("gbdt", "max_depth", 6));
    g.subsample = t.get_double("gbdt", "subsample", 0.6);
    g.min_child_weight = t.get_double("gbdt", "min_child_weight", 2.0);
    g.lambda = t.get_double("gbdt", "lambda", 1.0);
    g.n_rounds = static_cast<int>(t.get_int("gbdt", "n_rounds", 100));
    g.early_stop_patience = static_cast<int>(t.get_int("gbdt", "early_stop_patience", 10));
    g.base_score = t.get_double("gbdt", "base_score", 0.5);

    auto& h = c.heatmap;
    h.overlay_alpha = t.get_double("heatmap", "overlay_alpha", 0.5);
    const auto norm = t.get_string("heatmap", "normalization", "percentile-rank");
    if (norm == "percentile-rank")
        h.normalization = ScoreNormalization::percentile_rank;
    else if (norm == "min-max")
        h.normalization = ScoreNormalization::min_max;
    else
        throw FormatError("config: bad heatmap.normalization '" + norm + "'");
    h.output_level_downsample = t.get_double("heatmap", "output_level_downsample", 16.0);

    m.validate();
    g.validate();
    return c;
}

Toml PipelineConfig::to_toml() const {
    Toml t;
    auto num = [](double v) {
        std::ostringstream ss;
        ss << v;
        return ss.str();
    };
    t.set("paths", "cohort_manifest", cohort_manifest.string());
    t.set("paths", "bags_dir", bags_dir.string());
    t.set("paths", "output_dir", output_dir.string());
    if (!stains_json.empty()) t.set("paths", "stains_json", stains_json.string());
    t.set("evaluation", "n_folds", std::to_string(n_folds));
    t.set("evaluation", "seed", std::to_string(seed));
    t.set("evaluation", "threads", std::to_string(threads));
    t.set("segmentation", "sat_threshold", std::to_string(segmentation.sat_threshold));
    t.set("segmentation", "median_kernel", std::to_string(segmentation.median_kernel));
    t.set("segmentation", "close_kernel_w", std::to_string(segmentation.close_kernel_w));
    t.set("segmentation", "close_kernel_h", std::to_string(segmentation.close_kernel_h));
    t.set("segmentation", "min_contour_area", num(segmentation.min_contour_area));
    t.set("segmentation", "min_hole_area", num(segmentation.min_hole_area));
    t.set("segmentation", "target_downsample", num(segmentation.target_downsample));
    t.set("segmentation", "four_corner_test", segmentation.four_corner_test ? "true" : "false");
    t.set("curation", "white_intensity", std::to_string(curation.white_intensity));
    t.set("curation", "black_intensity", std::to_string(curation.black_intensity));
    t.set("curation", "rgb_frac", num(curation.rgb_frac));
    t.set("curation", "hsv_s_max", std::to_string(curation.hsv_s_max));
    t.set("curation", "hsv_v_min", std::to_string(curation.hsv_v_min));
    t.set("curation", "hsv_frac", num(curation.hsv_frac));
    t.set("curation", "eosin_intensity_max", std::to_string(curation.eosin_intensity_max));
    t.set("curation", "eosin_frac", num(curation.eosin_frac));
    t.set("mil", "bag_loss_weight", num(mil_hyper.bag_loss_weight));
    t.set("mil", "instance_loss_weight", num(mil_hyper.instance_loss_weight));
    t.set("mil", "top_k", std::to_string(mil_hyper.top_k));
    t.set("mil", "learning_rate", num(mil_hyper.learning_rate));
    t.set("mil", "weight_decay", num(mil_hyper.weight_decay));
    t.set("mil", "epochs", std::to_string(mil_hyper.epochs));
    t.set("mil", "early_stop_patience", std::to_string(mil_hyper.early_stop_patience));
    t.set("gbdt", "eta", num(gbdt_hyper.eta));
    t.set("gbdt", "gamma", num(gbdt_hyper.gamma));
    t.set("gbdt", "max_depth", std::to_string(gbdt_hyper.max_depth));
    t.set("gbdt", "subsample", num(gbdt_hyper.subsample));
    t.set("gbdt", "min_child_weight", num(gbdt_hyper.min_child_weight));
    t.set("gbdt", "lambda", num(gbdt_hyper.lambda));
    t.set("gbdt", "n_rounds", std::to_string(gbdt_hyper.n_rounds));
    t.set("gbdt", "early_stop_patience", std::to_string(gbdt_hyper.early_stop_patience));
    t.set("gbdt", "base_score", num(gbdt_hyper.base_score));
    t.set("heatmap", "overlay_alpha", num(heatmap.overlay_alpha));
    t.set("heatmap", "normalization",
          heatmap.normalization == ScoreNormalization::percentile_rank ? "percentile-rank"
                                                                       : "min-max");
    t.set("heatmap", "output_level_downsample", num(heatmap.output_level_downsample));
    return t;
}

eval::ExperimentConfig PipelineConfig::experiment() const {
    eval::ExperimentConfig e;
    e.cohort_manifest = cohort_manifest;
    e.bags_dir = bags_dir;
    e.output_dir = output_dir;
    e.n_folds = n_folds;
    e.seed = seed;
    e.mil_hyper = mil_hyper;
    e.gbdt_hyper = gbdt_hyper;
    e.threads = threads;
    return e;
}

}  // namespace slidefuse
