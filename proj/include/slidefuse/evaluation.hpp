#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "slidefuse/clinical.hpp"
#include "slidefuse/metrics.hpp"
#include "slidefuse/mil.hpp"

namespace slidefuse::eval {

enum class Label { Short, Long, Excluded };
enum class VitalStatus { deceased, alive };

// Short <= 9 months, Long >= 13 months, the interior is excluded.
// Alive patients count as Long only with >= 13 months of follow-up.
Label assign_label(double os_months, VitalStatus status);

struct CohortCase {
    std::string case_id;
    double os_months = 0.0;
    VitalStatus vital_status = VitalStatus::deceased;
    std::string sex;   // "male" | "female"
    std::string mgmt;  // "methylated" | "unmethylated" | "unknown"
    std::string bag_path;
    clinical::ClinicalRecord clinical_record;
    Label label = Label::Excluded;
};

// Cohort manifest CSV; os_days is converted at 30.44 days per month.
std::vector<CohortCase> load_cohort(const std::filesystem::path& manifest_csv);

struct FoldSplit {
    int fold = 0;
    std::vector<std::string> train, val, test;
};

// Per fold: independent per-class shuffle (seed = base seed + fold),
// floor(0.1 N) test and val per class, remainder train.
std::vector<FoldSplit> monte_carlo_splits(const std::vector<CohortCase>& labeled_cohort,
                                          int n_folds, std::uint64_t seed);

struct FoldMetrics {
    int fold;
    double val_auc, val_acc, test_auc, test_acc;
};

struct MetricsReport {
    std::string model_tag;  // imaging | clinical | fusion
    std::string subgroup;   // empty for the full cohort
    std::vector<FoldMetrics> folds;
    FoldMetrics mean() const;
};

void write_metrics_csv(const MetricsReport& report, const std::filesystem::path& path);

struct ExperimentConfig {
    std::filesystem::path cohort_manifest;
    std::filesystem::path bags_dir;  // bag_path entries resolve against this
    std::filesystem::path output_dir;
    int n_folds = 10;
    std::uint64_t seed = 7;
    mil::MilHyper mil_hyper;
    gbdt::GbdtHyper gbdt_hyper;
    int threads = 1;
};

struct ExperimentResult {
    MetricsReport imaging, clinical, fusion;
};

// Per fold: trains the MIL model on bags and the boosted-tree model on
// clinical records over identical splits, evaluates both and their
// equal-weight fusion on validation and test, and writes the per-fold
// tables plus prediction CSVs.
ExperimentResult run_experiment(const ExperimentConfig& config,
                                const std::vector<std::string>& models = {"imaging", "clinical",
                                                                          "fusion"});

// Reruns the full pipeline per subgroup value of `criterion`
// ("sex" or "mgmt"); cases with unknown values are excluded.
std::vector<std::pair<std::string, ExperimentResult>> subgroup_run(
    const ExperimentConfig& config, const std::string& criterion);

void write_subgroup_csv(const std::vector<std::pair<std::string, ExperimentResult>>& rows,
                        const std::filesystem::path& path);

}  // namespace slidefuse::eval
