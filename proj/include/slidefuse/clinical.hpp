#pragma once

#include <array>
#include <map>
#include <string>
#include <vector>

#include "slidefuse/gbdt.hpp"

namespace slidefuse::clinical {

inline constexpr int kNumFeatures = 15;

struct FeatureSchema {
    std::string name;      // CSV column name
    gbdt::FeatureKind kind;
    bool allow_missing;
    int max_code;          // categorical: valid codes are 0..max_code
    // accepted category strings, index = code
    std::vector<std::vector<std::string>> spellings;
};

const std::array<FeatureSchema, kNumFeatures>& schema();
std::vector<std::string> feature_names();
std::vector<gbdt::FeatureKind> feature_kinds();

// The 15 encoded values: categorical features hold integer codes with
// -1 for missing; continuous features hold reals with NaN for missing.
struct ClinicalRecord {
    std::array<double, kNumFeatures> values{};

    // Model-facing row: categorical -1 becomes NaN so missing values
    // route by the learned default direction rather than as a category.
    Eigen::VectorXd to_features() const;
};

// Encodes one CSV row (column name -> raw string). Unknown category
// strings are an error, never silently missing.
ClinicalRecord encode_clinical(const std::map<std::string, std::string>& row);

}  // namespace slidefuse::clinical
