#pragma once

#include <cstdint>
#include <filesystem>

namespace slidefuse::fixtures {

// Synthetic cohort generator. The standard flavor carries signal in both
// modalities: positive bags get three shifted-Gaussian rows and the
// clinical table encodes a younger age profile for long survivors. The
// clinical_perfect flavor makes age fully separating while bags are pure
// noise for both classes.
struct FixtureOptions {
    std::filesystem::path out_dir = "fixtures";
    int n_cases = 188;       // balanced: n/2 short, n/2 long
    int bag_size = 8;
    int feature_dim = 32;
    std::uint64_t seed = 7;
    bool clinical_perfect = false;
    bool with_bundle = true;  // also emit a small synthetic slide bundle
};

// Writes cohort.csv, bags/*.bag, config.toml, and (optionally) bundle/.
void make_fixtures(const FixtureOptions& opt);

}  // namespace slidefuse::fixtures
