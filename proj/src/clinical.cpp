#include "slidefuse/clinical.hpp"

#include <cmath>

namespace slidefuse::clinical {

namespace {

using gbdt::FeatureKind;

std::array<FeatureSchema, kNumFeatures> make_schema() {
    auto cat = [](std::string name, bool missing, std::vector<std::vector<std::string>> sp) {
        return FeatureSchema{std::move(name), FeatureKind::categorical, missing,
                             static_cast<int>(sp.size()) - 1, std::move(sp)};
    };
    auto num = [](std::string name) {
        return FeatureSchema{std::move(name), FeatureKind::numeric, true, 0, {}};
    };
    return {
        cat("sex", false, {{"Female", "female"}, {"Male", "male"}}),
        cat("histology", false,
            {{"Astrocytoma"}, {"Glioblastoma"}, {"Oligoastrocytoma"}, {"Oligodendroglioma"}}),
        cat("grade", false, {{"G2"}, {"G3"}, {"G4"}}),
        cat("mgmt_status", true, {{"Methylated"}, {"Unmethylated"}}),
        cat("chr7_gain_chr10_loss", true,
            {{"Gain chr 7 & loss chr 10", "Gain chr7 & loss chr10"}, {"No combined CNA"}}),
        cat("tert_status", true, {{"Mutant"}, {"WT"}}),
        cat("braf_v600e", true, {{"WT"}}),
        cat("transcriptome_subtype", true, {{"CL"}, {"ME"}, {"NE"}, {"PN"}}),
        cat("pan_glioma_rna_cluster", true, {{"LGr4"}, {"unclassified"}}),
        cat("pan_glioma_meth_cluster", true, {{"LGm4"}, {"LGm5"}}),
        cat("supervised_meth_cluster", true, {{"Classic-like"}, {"Mesenchymal-like"}}),
        cat("rf_sturm_cluster", true, {{"Mesenchymal"}, {"RTK II 'Classic'", "RTK II Classic"}}),
        num("age_years"),
        num("mutation_count"),
        num("percent_aneuploidy"),
    };
}

bool is_missing_token(const std::string& s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan" || s == "-1";
}

}  // namespace

const std::array<FeatureSchema, kNumFeatures>& schema() {
    static const auto s = make_schema();
    return s;
}

std::vector<std::string> feature_names() {
    std::vector<std::string> out;
    for (const auto& f : schema()) out.push_back(f.name);
    return out;
}

std::vector<gbdt::FeatureKind> feature_kinds() {
    std::vector<gbdt::FeatureKind> out;
    for (const auto& f : schema()) out.push_back(f.kind);
    return out;
}

Eigen::VectorXd ClinicalRecord::to_features() const {
    Eigen::VectorXd x(kNumFeatures);
    for (int i = 0; i < kNumFeatures; ++i) {
        const auto& f = schema()[i];
        if (f.kind == FeatureKind::categorical && values[i] == -1.0)
            x[i] = std::numeric_limits<double>::quiet_NaN();
        else
            x[i] = values[i];
    }
    return x;
}

ClinicalRecord encode_clinical(const std::map<std::string, std::string>& row) {
    ClinicalRecord rec;
    for (int i = 0; i < kNumFeatures; ++i) {
        const auto& f = schema()[i];
        auto it = row.find(f.name);
        if (it == row.end()) throw FormatError("encode_clinical: missing column '" + f.name + "'");
        const std::string& raw = it->second;

        if (f.kind == FeatureKind::numeric) {
            if (is_missing_token(raw) && raw != "-1") {
                rec.values[i] = std::numeric_limits<double>::quiet_NaN();
                continue;
            }
            try {
                std::size_t pos = 0;
                rec.values[i] = std::stod(raw, &pos);
                if (pos != raw.size()) throw std::invalid_argument(raw);
            } catch (const std::exception&) {
                throw FormatError("encode_clinical: bad numeric value '" + raw + "' for " + f.name);
            }
            if (f.name == "age_years" && rec.values[i] <= 0.0)
                throw FormatError("encode_clinical: age must be positive, got '" + raw + "'");
            continue;
        }

        if (is_missing_token(raw)) {
            if (!f.allow_missing)
                throw FormatError("encode_clinical: '" + f.name + "' may not be missing");
            rec.values[i] = -1.0;
            continue;
        }
        int code = -2;
        for (int c = 0; c <= f.max_code && code < 0; ++c)
            for (const auto& sp : f.spellings[c])
                if (raw == sp) {
                    code = c;
                    break;
                }
        if (code < 0) {
            // integer codes are accepted directly
            try {
                std::size_t pos = 0;
                const int v = std::stoi(raw, &pos);
                if (pos == raw.size() && v >= 0 && v <= f.max_code) code = v;
            } catch (const std::exception&) {
            }
        }
        if (code < 0)
            throw FormatError("encode_clinical: unknown category '" + raw + "' for " + f.name);
        rec.values[i] = code;
    }
    return rec;
}

}  // namespace slidefuse::clinical
