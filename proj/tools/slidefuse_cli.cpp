#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <optional>

#include "slidefuse/config.hpp"
#include "slidefuse/fixtures.hpp"
#include "slidefuse/heatmap.hpp"
#include "slidefuse/tree_shap.hpp"

namespace sf = slidefuse;

namespace {

struct Common {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
};

sf::PipelineConfig load_config(const Common& c) {
    if (c.config_path.empty()) throw sf::ArgumentError("--config is required");
    auto cfg = sf::PipelineConfig::from_toml(sf::Toml::parse_file(c.config_path));
    if (c.seed) cfg.seed = *c.seed;
    if (c.threads) cfg.threads = *c.threads;
    cfg.segmentation.threads = cfg.curation.threads = cfg.threads;
    return cfg;
}

void echo_config(const sf::PipelineConfig& cfg) {
    std::filesystem::create_directories(cfg.output_dir);
    const auto path = cfg.output_dir / "config.resolved.toml";
    const std::filesystem::path tmp = path.string() + ".tmp";
    cfg.to_toml().write(tmp);
    std::filesystem::rename(tmp, path);
}

void write_coords_jsonl(const std::vector<sf::PatchCoord>& coords,
                        const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw sf::NotFoundError("cannot open " + tmp.string());
        for (const auto& c : coords) {
            nlohmann::json j{{"x", c.x},
                             {"y", c.y},
                             {"patch_size", c.patch_size},
                             {"read_downsample", c.read_downsample}};
            out << j.dump() << '\n';
        }
    }
    std::filesystem::rename(tmp, path);
}

std::vector<sf::PatchCoord> read_coords_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw sf::NotFoundError("cannot open " + path.string());
    std::vector<sf::PatchCoord> coords;
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw sf::FormatError("bad coords line in " + path.string() + ": " + e.what());
        }
        coords.push_back({j.at("x").get<long>(), j.at("y").get<long>(),
                          j.value("patch_size", 256), j.value("read_downsample", 1)});
    }
    return coords;
}

sf::StainMatrix stains_for(const sf::PipelineConfig& cfg) {
    return cfg.stains_json.empty() ? sf::StainMatrix::hed_default()
                                   : sf::StainMatrix::load_json(cfg.stains_json);
}

int feature_index(const std::string& name) {
    const auto names = sf::clinical::feature_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        if (names[i] == name) return int(i);
    throw sf::ArgumentError("unknown clinical feature '" + name + "'");
}

struct FoldData {
    std::vector<sf::eval::CohortCase> labeled;
    sf::eval::FoldSplit split;
};

FoldData fold_data(const sf::PipelineConfig& cfg, int fold) {
    FoldData d;
    for (auto& c : sf::eval::load_cohort(cfg.cohort_manifest))
        if (c.label != sf::eval::Label::Excluded) d.labeled.push_back(std::move(c));
    auto splits = sf::eval::monte_carlo_splits(d.labeled, cfg.n_folds, cfg.seed);
    if (fold < 0 || fold >= int(splits.size()))
        throw sf::ArgumentError("--fold out of range");
    d.split = std::move(splits[fold]);
    return d;
}

const sf::eval::CohortCase& case_by_id(const std::vector<sf::eval::CohortCase>& cohort,
                                       const std::string& id) {
    for (const auto& c : cohort)
        if (c.case_id == id) return c;
    throw sf::ConfigError("unknown case_id " + id);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"H&E slide prognostic stratification pipeline"};
    app.require_subcommand(1);

    Common common;
    app.add_option("--config", common.config_path, "TOML pipeline config")
        ->configurable(false);
    std::uint64_t seed_arg = 0;
    auto* seed_opt = app.add_option("--seed", seed_arg, "override the base seed");
    int threads_arg = 1;
    auto* threads_opt = app.add_option("--threads", threads_arg, "worker thread count");
    app.fallthrough();

    // segment
    auto* segment = app.add_subcommand("segment", "tissue mask and contours for one slide");
    std::string bundle_dir, out_dir = "out";
    segment->add_option("--bundle", bundle_dir, "pyramid bundle directory")->required();
    segment->add_option("--out", out_dir, "output directory");

    auto* patch = app.add_subcommand("patch", "enumerate tissue patch coordinates");
    patch->add_option("--bundle", bundle_dir, "pyramid bundle directory")->required();
    patch->add_option("--out", out_dir, "output directory");

    auto* curate_cmd = app.add_subcommand("curate", "filter patches by background/artifact/pen");
    std::string patches_path;
    curate_cmd->add_option("--bundle", bundle_dir, "pyramid bundle directory")->required();
    curate_cmd->add_option("--patches", patches_path, "patch coords JSONL")->required();
    curate_cmd->add_option("--out", out_dir, "output directory");

    auto* features = app.add_subcommand("features", "build a per-slide feature bag");
    features->require_subcommand(1);
    auto* feat_baseline = features->add_subcommand("baseline", "histogram+thumbnail features");
    feat_baseline->add_option("--bundle", bundle_dir)->required();
    feat_baseline->add_option("--patches", patches_path)->required();
    std::string bag_out = "bag.bag";
    feat_baseline->add_option("--out", bag_out, "output bag file");
    auto* feat_import = features->add_subcommand("import", "wrap external float32 features");
    std::string matrix_path, coords_path, slide_id = "external";
    int import_dim = 0;
    feat_import->add_option("--matrix", matrix_path, "raw float32 row-major matrix")->required();
    feat_import->add_option("--dim", import_dim, "feature dimension")->required();
    feat_import->add_option("--coords", coords_path, "patch coords JSONL")->required();
    feat_import->add_option("--slide-id", slide_id, "slide identifier");
    feat_import->add_option("--out", bag_out, "output bag file");

    auto* train_mil_cmd = app.add_subcommand("train-mil", "train the attention MIL model");
    int fold = 0;
    train_mil_cmd->add_option("--fold", fold, "fold index");

    auto* heatmap_cmd = app.add_subcommand("heatmap", "attention heatmap overlay for one slide");
    std::string checkpoint_path;
    heatmap_cmd->add_option("--bundle", bundle_dir)->required();
    heatmap_cmd->add_option("--checkpoint", checkpoint_path, "MIL checkpoint")->required();
    heatmap_cmd->add_option("--out", out_dir, "output directory");

    auto* train_clin = app.add_subcommand("train-clinical", "train the boosted-tree model");
    train_clin->add_option("--fold", fold, "fold index");

    auto* shap_cmd = app.add_subcommand("shap", "per-case feature attributions");
    std::string model_path, pair_spec = "age_years,sex";
    shap_cmd->add_option("--model", model_path, "trained model JSON (default: train now)");
    shap_cmd->add_option("--pair", pair_spec, "feature pair for interaction values");

    auto* evaluate = app.add_subcommand("evaluate", "cross-validated experiment tables");
    std::string modality;
    evaluate->add_option("modality", modality, "imaging | clinical | fusion")->required();

    auto* subgroup = app.add_subcommand("subgroup", "per-subgroup experiment tables");
    std::string criterion;
    subgroup->add_option("criterion", criterion, "sex | mgmt")->required();

    auto* fixtures_cmd = app.add_subcommand("make-fixtures", "emit the synthetic cohort");
    sf::fixtures::FixtureOptions fx;
    std::string fx_out = "fixtures", flavor = "standard";
    fixtures_cmd->add_option("--out", fx_out, "output directory");
    fixtures_cmd->add_option("--flavor", flavor, "standard | clinical-perfect")
        ->check(CLI::IsMember({"standard", "clinical-perfect"}));
    fixtures_cmd->add_option("--cases", fx.n_cases, "cohort size (even)");
    fixtures_cmd->add_flag("--no-bundle", "skip the synthetic slide bundle");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }
    if (*seed_opt) common.seed = seed_arg;
    if (*threads_opt) common.threads = threads_arg;

    try {
        if (*segment) {
            const auto slide = sf::open_bundle(bundle_dir);
            sf::SegmentationParams params;
            if (!common.config_path.empty()) params = load_config(common).segmentation;
            if (common.threads) params.threads = *common.threads;
            const auto mask = sf::segment_tissue(slide, params);
            std::filesystem::create_directories(out_dir);
            sf::Raster vis = mask.mask;
            for (auto& v : vis.data) v = v ? 255 : 0;
            sf::write_png(vis, std::filesystem::path(out_dir) / "mask.png");
            nlohmann::json contours = nlohmann::json::array();
            for (const auto& c : mask.contours) {
                nlohmann::json jc;
                for (const auto& p : c.outer) jc["outer"].push_back({p.x, p.y});
                jc["holes"] = nlohmann::json::array();
                for (const auto& h : c.holes) {
                    nlohmann::json jh = nlohmann::json::array();
                    for (const auto& p : h) jh.push_back({p.x, p.y});
                    jc["holes"].push_back(jh);
                }
                contours.push_back(jc);
            }
            std::ofstream(std::filesystem::path(out_dir) / "contours.json")
                << nlohmann::json{{"level_factor", mask.level_factor}, {"contours", contours}}
                       .dump(2)
                << '\n';
            std::cout << "contours: " << mask.contours.size() << '\n';
        } else if (*patch) {
            const auto slide = sf::open_bundle(bundle_dir);
            sf::SegmentationParams params;
            if (!common.config_path.empty()) params = load_config(common).segmentation;
            if (common.threads) params.threads = *common.threads;
            const auto mask = sf::segment_tissue(slide, params);
            const auto coords = sf::enumerate_patches(mask, slide, params);
            std::filesystem::create_directories(out_dir);
            write_coords_jsonl(coords, std::filesystem::path(out_dir) / "patches.jsonl");
            std::cout << "patches: " << coords.size() << '\n';
        } else if (*curate_cmd) {
            const auto slide = sf::open_bundle(bundle_dir);
            sf::PipelineConfig cfg;
            if (!common.config_path.empty()) cfg = load_config(common);
            if (common.threads) cfg.curation.threads = *common.threads;
            const auto coords = read_coords_jsonl(patches_path);
            const auto report = sf::curate(slide, coords, stains_for(cfg), cfg.curation);
            std::filesystem::create_directories(out_dir);
            sf::write_report_jsonl(report, std::filesystem::path(out_dir) / "curation.jsonl");
            long kept = 0;
            for (const auto& p : report.patches) kept += p.kept;
            std::cout << "kept " << kept << " of " << report.patches.size() << '\n';
        } else if (*feat_baseline) {
            const auto slide = sf::open_bundle(bundle_dir);
            const auto coords = read_coords_jsonl(patches_path);
            const int threads = common.threads.value_or(1);
            sf::write_bag(sf::extract_baseline_bag(slide, coords, threads), bag_out);
        } else if (*feat_import) {
            sf::write_bag(
                sf::import_external_features(matrix_path, import_dim, coords_path, slide_id),
                bag_out);
        } else if (*train_mil_cmd) {
            const auto cfg = load_config(common);
            echo_config(cfg);
            const auto d = fold_data(cfg, fold);
            std::map<std::string, sf::PatchBag> bags;
            std::vector<sf::mil::MilExample> train_set, val_set;
            for (const auto* part : {&d.split.train, &d.split.val})
                for (const auto& id : *part) {
                    const auto& c = case_by_id(d.labeled, id);
                    bags.emplace(id, sf::read_bag(cfg.bags_dir / c.bag_path));
                }
            for (const auto& id : d.split.train)
                train_set.push_back({&bags.at(id),
                                     case_by_id(d.labeled, id).label == sf::eval::Label::Long});
            for (const auto& id : d.split.val)
                val_set.push_back({&bags.at(id),
                                   case_by_id(d.labeled, id).label == sf::eval::Label::Long});
            auto hyper = cfg.mil_hyper;
            hyper.seed = cfg.seed + std::uint64_t(fold);
            const auto result = sf::mil::train_mil(train_set, val_set, hyper);
            sf::mil::save_checkpoint(result.model, hyper,
                                     cfg.output_dir / ("mil_fold" + std::to_string(fold) + ".bin"));
            sf::mil::write_history_csv(
                result.history,
                cfg.output_dir / ("mil_history_fold" + std::to_string(fold) + ".csv"));
            std::cout << "best val AUC " << result.best_val_auc << " at epoch "
                      << result.best_epoch << '\n';
        } else if (*heatmap_cmd) {
            const auto slide = sf::open_bundle(bundle_dir);
            sf::PipelineConfig cfg;
            if (!common.config_path.empty()) cfg = load_config(common);
            sf::SegmentationParams params = cfg.segmentation;
            if (common.threads) params.threads = *common.threads;
            const auto mask = sf::segment_tissue(slide, params);
            const auto coords = sf::enumerate_patches(mask, slide, params);
            if (coords.empty()) throw sf::FormatError("no tissue patches found in bundle");
            const auto cp = sf::mil::load_checkpoint(checkpoint_path);
            if (cp.model.dims.input != sf::kBaselineFeatureDim)
                throw sf::FormatError("checkpoint expects feature dim " +
                                      std::to_string(cp.model.dims.input) +
                                      ", heatmap uses baseline features");
            const auto bag =
                sf::extract_baseline_bag(slide, coords, common.threads.value_or(1));
            const auto out = sf::mil::forward(cp.model, bag);
            std::vector<double> attention(out.attention.data(),
                                          out.attention.data() + out.attention.size());
            std::filesystem::create_directories(out_dir);
            sf::write_heatmap(slide, coords, attention, cfg.heatmap,
                              std::filesystem::path(out_dir) / "heatmap.png");
            std::cout << "p_long " << out.probability_long << '\n';
        } else if (*train_clin) {
            const auto cfg = load_config(common);
            echo_config(cfg);
            const auto d = fold_data(cfg, fold);
            auto matrix_of = [&](const std::vector<std::string>& ids) {
                Eigen::MatrixXd x(ids.size(), sf::clinical::kNumFeatures);
                std::vector<int> y;
                for (std::size_t i = 0; i < ids.size(); ++i) {
                    const auto& c = case_by_id(d.labeled, ids[i]);
                    x.row(Eigen::Index(i)) = c.clinical_record.to_features();
                    y.push_back(c.label == sf::eval::Label::Long);
                }
                return std::pair{x, y};
            };
            const auto [tx, ty] = matrix_of(d.split.train);
            const auto [vx, vy] = matrix_of(d.split.val);
            auto hyper = cfg.gbdt_hyper;
            hyper.seed = cfg.seed + std::uint64_t(fold);
            const auto result = sf::gbdt::train_gbdt(tx, sf::clinical::feature_kinds(), ty, hyper,
                                                     &vx, &vy);
            sf::gbdt::dump_model_json(
                result.model, sf::clinical::feature_names(),
                cfg.output_dir / ("gbdt_fold" + std::to_string(fold) + ".json"));
            std::cout << "trees " << result.model.trees.size() << ", best round "
                      << result.best_round << '\n';
        } else if (*shap_cmd) {
            const auto cfg = load_config(common);
            echo_config(cfg);
            std::vector<sf::eval::CohortCase> labeled;
            for (auto& c : sf::eval::load_cohort(cfg.cohort_manifest))
                if (c.label != sf::eval::Label::Excluded) labeled.push_back(std::move(c));
            sf::gbdt::GbdtModel model;
            if (!model_path.empty()) {
                model = sf::gbdt::load_model_json(model_path);
            } else {
                Eigen::MatrixXd x(labeled.size(), sf::clinical::kNumFeatures);
                std::vector<int> y;
                for (std::size_t i = 0; i < labeled.size(); ++i) {
                    x.row(Eigen::Index(i)) = labeled[i].clinical_record.to_features();
                    y.push_back(labeled[i].label == sf::eval::Label::Long);
                }
                auto hyper = cfg.gbdt_hyper;
                hyper.seed = cfg.seed;
                model = sf::gbdt::train_gbdt(x, sf::clinical::feature_kinds(), y, hyper).model;
            }
            std::vector<Eigen::VectorXd> background;
            for (const auto& c : labeled) background.push_back(c.clinical_record.to_features());

            const auto comma = pair_spec.find(',');
            if (comma == std::string::npos)
                throw sf::ArgumentError("--pair expects two comma-separated feature names");
            const int fa = feature_index(pair_spec.substr(0, comma));
            const int fb = feature_index(pair_spec.substr(comma + 1));
            const auto names = sf::clinical::feature_names();

            const auto shap_path = cfg.output_dir / "shap.csv";
            const auto inter_path = cfg.output_dir / "shap_interactions.csv";
            {
                std::ofstream out(shap_path.string() + ".tmp");
                std::ofstream iout(inter_path.string() + ".tmp");
                out << "case_id,feature,value,missing,phi,base_value,margin,probability\n";
                iout << "case_id,feature_a,feature_b,phi_interaction\n";
                char buf[64];
                for (std::size_t i = 0; i < labeled.size(); ++i) {
                    const auto& rec = background[i];
                    const auto shap = sf::shap::shap_values(model, rec, background);
                    const double margin = sf::gbdt::predict_margin(model, rec);
                    const double prob = sf::gbdt::predict_prob(model, rec);
                    for (int f = 0; f < sf::clinical::kNumFeatures; ++f) {
                        const bool missing = std::isnan(rec[f]);
                        std::snprintf(buf, sizeof(buf), "%.6f,%.6f,%.6f,%.6f", shap.phi[f],
                                      shap.base_value, margin, prob);
                        out << labeled[i].case_id << ',' << names[f] << ','
                            << (missing ? "" : std::to_string(rec[f])) << ','
                            << (missing ? 1 : 0) << ',' << buf << '\n';
                    }
                    const auto inter = sf::shap::shap_interaction_values(model, rec, background);
                    std::snprintf(buf, sizeof(buf), "%.6f", inter(fa, fb));
                    iout << labeled[i].case_id << ',' << names[fa] << ',' << names[fb] << ','
                         << buf << '\n';
                }
            }
            std::filesystem::rename(shap_path.string() + ".tmp", shap_path);
            std::filesystem::rename(inter_path.string() + ".tmp", inter_path);
        } else if (*evaluate) {
            if (modality != "imaging" && modality != "clinical" && modality != "fusion")
                throw sf::ArgumentError("modality must be imaging, clinical, or fusion");
            const auto cfg = load_config(common);
            echo_config(cfg);
            sf::eval::run_experiment(cfg.experiment(), {modality});
        } else if (*subgroup) {
            const auto cfg = load_config(common);
            echo_config(cfg);
            sf::eval::subgroup_run(cfg.experiment(), criterion);
        } else if (*fixtures_cmd) {
            fx.out_dir = fx_out;
            fx.clinical_perfect = flavor == "clinical-perfect";
            fx.with_bundle = fixtures_cmd->count("--no-bundle") == 0;
            if (common.seed) fx.seed = *common.seed;
            sf::fixtures::make_fixtures(fx);
        }
    } catch (const sf::ArgumentError& e) {
        std::cerr << "usage error: " << e.what() << '\n';
        return 1;
    } catch (const sf::TrainingError& e) {
        std::cerr << "training error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
