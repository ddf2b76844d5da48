#include "slidefuse/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include "slidefuse/gbdt.hpp"

namespace slidefuse::eval {

Label assign_label(double os_months, VitalStatus status) {
    if (os_months < 0.0) throw ArgumentError("assign_label: negative survival time");
    if (status == VitalStatus::deceased) {
        if (os_months <= 9.0) return Label::Short;
        if (os_months >= 13.0) return Label::Long;
        return Label::Excluded;
    }
    // censored: only long survival is certain
    return os_months >= 13.0 ? Label::Long : Label::Excluded;
}

namespace {

constexpr double kDaysPerMonth = 30.44;

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : line) {
        if (ch == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (ch != '\r') {
            cur.push_back(ch);
        }
    }
    out.push_back(cur);
    return out;
}

std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.6f", v);
    return buf;
}

}  // namespace

std::vector<CohortCase> load_cohort(const std::filesystem::path& manifest_csv) {
    std::ifstream in(manifest_csv);
    if (!in) throw NotFoundError("load_cohort: cannot open " + manifest_csv.string());
    std::string line;
    if (!std::getline(in, line)) throw FormatError("load_cohort: empty manifest");
    const auto header = split_csv_line(line);

    auto col = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return static_cast<int>(i);
        return -1;
    };
    const int c_id = col("case_id");
    const int c_months = col("os_months");
    const int c_days = col("os_days");
    const int c_vital = col("vital_status");
    const int c_sex = col("sex");
    const int c_mgmt = col("mgmt");
    const int c_bag = col("bag_path");
    if (c_id < 0 || (c_months < 0 && c_days < 0) || c_vital < 0 || c_bag < 0)
        throw FormatError("load_cohort: manifest must have case_id, os_months|os_days, "
                          "vital_status, bag_path columns");

    std::vector<CohortCase> cohort;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw FormatError("load_cohort: column count mismatch on line: " + line);
        CohortCase c;
        c.case_id = fields[c_id];
        if (!seen.insert(c.case_id).second)
            throw FormatError("load_cohort: duplicate case_id " + c.case_id);
        if (c_months >= 0 && !fields[c_months].empty())
            c.os_months = std::stod(fields[c_months]);
        else
            c.os_months = std::stod(fields[c_days]) / kDaysPerMonth;
        const std::string& vital = fields[c_vital];
        if (vital == "deceased")
            c.vital_status = VitalStatus::deceased;
        else if (vital == "alive")
            c.vital_status = VitalStatus::alive;
        else
            throw FormatError("load_cohort: bad vital_status '" + vital + "'");
        c.sex = c_sex >= 0 ? fields[c_sex] : "";
        c.mgmt = c_mgmt >= 0 ? fields[c_mgmt] : "unknown";
        c.bag_path = fields[c_bag];
        std::map<std::string, std::string> row;
        for (std::size_t i = 0; i < header.size(); ++i) row[header[i]] = fields[i];
        c.clinical_record = clinical::encode_clinical(row);
        c.label = assign_label(c.os_months, c.vital_status);
        cohort.push_back(std::move(c));
    }
    return cohort;
}

std::vector<FoldSplit> monte_carlo_splits(const std::vector<CohortCase>& labeled_cohort,
                                          int n_folds, std::uint64_t seed) {
    std::vector<std::string> shorts, longs;
    for (const auto& c : labeled_cohort) {
        if (c.label == Label::Short)
            shorts.push_back(c.case_id);
        else if (c.label == Label::Long)
            longs.push_back(c.case_id);
        else
            throw ArgumentError("monte_carlo_splits: cohort contains excluded cases");
    }
    if (shorts.size() < 3 || longs.size() < 3)
        throw ArgumentError("monte_carlo_splits: each class needs at least 3 cases");
    if (shorts.size() + longs.size() < 10)
        throw ArgumentError("monte_carlo_splits: need at least 10 labeled cases");
    std::sort(shorts.begin(), shorts.end());
    std::sort(longs.begin(), longs.end());

    // Per-class floor-tenths, topped up by largest fractional remainder
    // (ties to the Short class) until test and val each hold a tenth of
    // the whole cohort. Keeps class balance within one case and matches
    // exact tenths (e.g. a 5/5 cohort yields 8/1/1).
    const std::size_t total = shorts.size() + longs.size();
    std::array<std::size_t, 2> take = {shorts.size() / 10, longs.size() / 10};
    std::size_t deficit = total / 10 - (take[0] + take[1]);
    const std::array<std::size_t, 2> rem = {shorts.size() % 10, longs.size() % 10};
    while (deficit > 0) {
        const int cls = rem[1] > rem[0] ? 1 : 0;
        ++take[cls];
        --deficit;
    }

    std::vector<FoldSplit> folds;
    for (int f = 0; f < n_folds; ++f) {
        FoldSplit split;
        split.fold = f;
        std::mt19937_64 rng(seed + static_cast<std::uint64_t>(f));
        for (int cls = 0; cls < 2; ++cls) {
            auto ids = cls == 0 ? shorts : longs;
            std::shuffle(ids.begin(), ids.end(), rng);
            const std::size_t n_test = take[cls];
            const std::size_t n_val = take[cls];
            split.test.insert(split.test.end(), ids.begin(), ids.begin() + n_test);
            split.val.insert(split.val.end(), ids.begin() + n_test,
                             ids.begin() + n_test + n_val);
            split.train.insert(split.train.end(), ids.begin() + n_test + n_val, ids.end());
        }
        folds.push_back(std::move(split));
    }
    return folds;
}

FoldMetrics MetricsReport::mean() const {
    FoldMetrics m{-1, 0, 0, 0, 0};
    for (const auto& f : folds) {
        m.val_auc += f.val_auc;
        m.val_acc += f.val_acc;
        m.test_auc += f.test_auc;
        m.test_acc += f.test_acc;
    }
    const double n = folds.empty() ? 1.0 : double(folds.size());
    m.val_auc /= n;
    m.val_acc /= n;
    m.test_auc /= n;
    m.test_acc /= n;
    return m;
}

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw NotFoundError("write_metrics_csv: cannot open " + tmp.string());
        out << "fold,val_auc,val_accuracy,test_auc,test_accuracy\n";
        for (const auto& f : report.folds)
            out << f.fold << ',' << fmt(f.val_auc) << ',' << fmt(f.val_acc) << ','
                << fmt(f.test_auc) << ',' << fmt(f.test_acc) << '\n';
        const auto m = report.mean();
        out << "mean," << fmt(m.val_auc) << ',' << fmt(m.val_acc) << ',' << fmt(m.test_auc)
            << ',' << fmt(m.test_acc) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

namespace {

struct CaseIndex {
    std::map<std::string, const CohortCase*> by_id;
    std::map<std::string, PatchBag> bags;
};

const CohortCase& case_of(const CaseIndex& index, const std::string& id) {
    auto it = index.by_id.find(id);
    if (it == index.by_id.end()) throw ConfigError("unknown case_id in split: " + id);
    return *it->second;
}

int label_of(const CohortCase& c) { return c.label == Label::Long ? 1 : 0; }

struct FoldPredictions {
    // per case: (id, label, p_imaging, p_clinical)
    std::vector<std::tuple<std::string, int, double, double>> val, test;
};

ExperimentResult run_on_cohort(const std::vector<CohortCase>& labeled,
                               const ExperimentConfig& config,
                               const std::vector<std::string>& models, const std::string& subgroup,
                               bool write_outputs) {
    const bool want_imaging =
        std::count(models.begin(), models.end(), "imaging") ||
        std::count(models.begin(), models.end(), "fusion");
    const bool want_clinical =
        std::count(models.begin(), models.end(), "clinical") ||
        std::count(models.begin(), models.end(), "fusion");

    CaseIndex index;
    for (const auto& c : labeled) index.by_id[c.case_id] = &c;
    if (want_imaging) {
        std::vector<std::string> missing;
        for (const auto& c : labeled) {
            const auto path = config.bags_dir / c.bag_path;
            if (!std::filesystem::exists(path)) {
                missing.push_back(c.case_id);
                continue;
            }
            index.bags.emplace(c.case_id, read_bag(path));
        }
        if (!missing.empty()) {
            std::string msg = "missing bags for cases:";
            for (const auto& id : missing) msg += " " + id;
            throw ConfigError(msg);
        }
    }

    const auto splits = monte_carlo_splits(labeled, config.n_folds, config.seed);
    ExperimentResult result;
    result.imaging.model_tag = "imaging";
    result.clinical.model_tag = "clinical";
    result.fusion.model_tag = "fusion";
    result.imaging.subgroup = result.clinical.subgroup = result.fusion.subgroup = subgroup;

    for (const auto& split : splits) {
        FoldPredictions preds;
        for (const auto* part : {&split.val, &split.test}) {
            auto& dst = part == &split.val ? preds.val : preds.test;
            for (const auto& id : *part)
                dst.push_back({id, label_of(case_of(index, id)), 0.5, 0.5});
        }

        if (want_imaging) {
            mil::MilHyper hyper = config.mil_hyper;
            hyper.seed = config.seed + static_cast<std::uint64_t>(split.fold);
            std::vector<mil::MilExample> train_set, val_set;
            for (const auto& id : split.train)
                train_set.push_back({&index.bags.at(id), label_of(case_of(index, id))});
            for (const auto& id : split.val)
                val_set.push_back({&index.bags.at(id), label_of(case_of(index, id))});
            const auto trained = mil::train_mil(train_set, val_set, hyper);
            for (auto* part : {&preds.val, &preds.test})
                for (auto& [id, label, p_img, p_clin] : *part)
                    p_img = mil::forward(trained.model, index.bags.at(id)).probability_long;
            if (write_outputs)
                mil::save_checkpoint(trained.model, hyper,
                                     config.output_dir /
                                         ("mil_fold" + std::to_string(split.fold) + ".bin"));
        }

        if (want_clinical) {
            gbdt::GbdtHyper hyper = config.gbdt_hyper;
            hyper.seed = config.seed + static_cast<std::uint64_t>(split.fold);
            auto matrix_of = [&](const std::vector<std::string>& ids) {
                Eigen::MatrixXd x(ids.size(), clinical::kNumFeatures);
                std::vector<int> y;
                for (std::size_t i = 0; i < ids.size(); ++i) {
                    const auto& c = case_of(index, ids[i]);
                    x.row(static_cast<Eigen::Index>(i)) = c.clinical_record.to_features();
                    y.push_back(label_of(c));
                }
                return std::pair{x, y};
            };
            const auto [train_x, train_y] = matrix_of(split.train);
            const auto [val_x, val_y] = matrix_of(split.val);
            const auto trained =
                gbdt::train_gbdt(train_x, clinical::feature_kinds(), train_y, hyper, &val_x,
                                 &val_y);
            for (auto* part : {&preds.val, &preds.test})
                for (auto& [id, label, p_img, p_clin] : *part)
                    p_clin = gbdt::predict_prob(trained.model,
                                                case_of(index, id).clinical_record.to_features());
            if (write_outputs)
                gbdt::dump_model_json(trained.model, clinical::feature_names(),
                                      config.output_dir /
                                          ("gbdt_fold" + std::to_string(split.fold) + ".json"));
        }

        auto metrics_for = [&](const auto& part, auto select) {
            std::vector<double> scores;
            std::vector<int> labels;
            for (const auto& row : part) {
                scores.push_back(select(row));
                labels.push_back(std::get<1>(row));
            }
            return std::pair{auc(scores, labels), accuracy(scores, labels)};
        };
        auto push_fold = [&](MetricsReport& report, auto select) {
            const auto [va, vc] = metrics_for(preds.val, select);
            const auto [ta, tc] = metrics_for(preds.test, select);
            report.folds.push_back({split.fold, va, vc, ta, tc});
        };
        if (want_imaging)
            push_fold(result.imaging, [](const auto& r) { return std::get<2>(r); });
        if (want_clinical)
            push_fold(result.clinical, [](const auto& r) { return std::get<3>(r); });
        if (want_imaging && want_clinical)
            push_fold(result.fusion,
                      [](const auto& r) { return fuse(std::get<2>(r), std::get<3>(r)); });

        if (write_outputs) {
            const auto path =
                config.output_dir / ("predictions_fold" + std::to_string(split.fold) + ".csv");
            const std::filesystem::path tmp = path.string() + ".tmp";
            {
                std::ofstream out(tmp);
                out << "case_id,partition,label,p_imaging,p_clinical,p_fused\n";
                for (const auto* part : {&preds.val, &preds.test})
                    for (const auto& [id, label, p_img, p_clin] : *part)
                        out << id << ',' << (part == &preds.val ? "val" : "test") << ','
                            << label << ',' << fmt(p_img) << ',' << fmt(p_clin) << ','
                            << fmt(fuse(p_img, p_clin)) << '\n';
            }
            std::filesystem::rename(tmp, path);
        }
    }
    return result;
}

std::vector<CohortCase> labeled_subset(const std::vector<CohortCase>& cohort) {
    std::vector<CohortCase> labeled;
    for (const auto& c : cohort)
        if (c.label != Label::Excluded) labeled.push_back(c);
    return labeled;
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::vector<std::string>& models) {
    std::filesystem::create_directories(config.output_dir);
    const auto labeled = labeled_subset(load_cohort(config.cohort_manifest));
    const auto result = run_on_cohort(labeled, config, models, "", true);
    if (!result.imaging.folds.empty())
        write_metrics_csv(result.imaging, config.output_dir / "table_imaging.csv");
    if (!result.clinical.folds.empty())
        write_metrics_csv(result.clinical, config.output_dir / "table_clinical.csv");
    if (!result.fusion.folds.empty())
        write_metrics_csv(result.fusion, config.output_dir / "table_fusion.csv");
    return result;
}

std::vector<std::pair<std::string, ExperimentResult>> subgroup_run(
    const ExperimentConfig& config, const std::string& criterion) {
    std::filesystem::create_directories(config.output_dir);
    const auto labeled = labeled_subset(load_cohort(config.cohort_manifest));

    std::vector<std::string> values;
    if (criterion == "sex")
        values = {"male", "female"};
    else if (criterion == "mgmt")
        values = {"methylated", "unmethylated"};
    else
        throw ArgumentError("subgroup_run: criterion must be 'sex' or 'mgmt'");

    std::vector<std::pair<std::string, ExperimentResult>> results;
    for (const auto& value : values) {
        std::vector<CohortCase> subset;
        for (const auto& c : labeled)
            if ((criterion == "sex" ? c.sex : c.mgmt) == value) subset.push_back(c);
        long n_short = 0, n_long = 0;
        for (const auto& c : subset) (c.label == Label::Long ? n_long : n_short)++;
        if (n_short < 3 || n_long < 3)
            throw ConfigError("subgroup_run: subgroup '" + value +
                              "' lacks 3 cases of each class");
        results.push_back({value, run_on_cohort(subset, config, {"imaging", "clinical", "fusion"},
                                                value, false)});
    }
    write_subgroup_csv(results, config.output_dir / "table_subgroups.csv");
    return results;
}

void write_subgroup_csv(const std::vector<std::pair<std::string, ExperimentResult>>& rows,
                        const std::filesystem::path& path) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp);
        if (!out) throw NotFoundError("write_subgroup_csv: cannot open " + tmp.string());
        out << "subgroup,model,mean_val_auc,mean_val_accuracy,mean_test_auc,mean_test_accuracy\n";
        for (const auto& [value, result] : rows)
            for (const auto* report : {&result.imaging, &result.clinical, &result.fusion}) {
                const auto m = report->mean();
                out << value << ',' << report->model_tag << ',' << fmt(m.val_auc) << ','
                    << fmt(m.val_acc) << ',' << fmt(m.test_auc) << ',' << fmt(m.test_acc)
                    << '\n';
            }
    }
    std::filesystem::rename(tmp, path);
}

}  // namespace slidefuse::eval
