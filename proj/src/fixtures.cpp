#include "slidefuse/fixtures.hpp"

#include <cstdio>
#include <fstream>
#include <random>
#include <vector>

#include "slidefuse/config.hpp"
#include "slidefuse/feature_bag.hpp"
#include "slidefuse/slide_io.hpp"

namespace slidefuse::fixtures {

namespace {

struct CaseRow {
    std::string id;
    int label;          // 0 short, 1 long
    int class_index;    // position within its class
    double os_months;
    bool alive;
    std::string sex;    // "male" | "female"
    std::string mgmt;   // "methylated" | "unmethylated" | "unknown"
};

void write_bundle(const std::filesystem::path& dir, std::uint64_t seed) {
    const int side = 4096;
    Raster flat;
    flat.width = side;
    flat.height = side;
    flat.channels = 3;
    flat.data.assign(std::size_t(side) * side * 3, 255);

    // eosin-pink disc on a white background
    const double cx = side / 2.0, cy = side / 2.0, r = 1700.0;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> jitter(-8, 8);
    for (int y = 0; y < side; ++y)
        for (int x = 0; x < side; ++x) {
            const double dx = x - cx, dy = y - cy;
            if (dx * dx + dy * dy <= r * r) {
                const std::size_t i = (std::size_t(y) * side + x) * 3;
                flat.data[i] = std::uint8_t(220 + jitter(rng) / 4);
                flat.data[i + 1] = std::uint8_t(160 + jitter(rng));
                flat.data[i + 2] = std::uint8_t(180 + jitter(rng));
            }
        }

    BundleMetadata meta;
    meta.objective_power = 20.0;
    meta.mpp = 0.5;
    build_pyramid(flat, {1, 4, 16}, "fixture-disc", meta, dir);
}

}  // namespace

void make_fixtures(const FixtureOptions& opt) {
    if (opt.n_cases < 2 || opt.n_cases % 2 != 0)
        throw ArgumentError("make_fixtures: n_cases must be even and >= 2");
    std::filesystem::create_directories(opt.out_dir / "bags");

    std::vector<CaseRow> rows;
    for (int i = 0; i < opt.n_cases; ++i) {
        CaseRow c;
        c.label = i % 2;
        c.class_index = i / 2;
        char buf[16];
        std::snprintf(buf, sizeof(buf), "case_%03d", i);
        c.id = buf;
        const int j = c.class_index;
        c.alive = c.label == 1 && j % 7 == 0;
        c.os_months = c.label == 0 ? 4.0 + j % 5 : (c.alive ? 15.0 : 14.0 + j % 6);
        // 56 + 56 male, 38 + 38 female
        c.sex = j < 56 ? "male" : "female";
        // 59 methylated, 50 unmethylated, remainder unknown
        const int meth_cut = c.label == 0 ? 30 : 29;
        const int unmeth_cut = meth_cut + 25;
        c.mgmt = j < meth_cut ? "methylated" : (j < unmeth_cut ? "unmethylated" : "unknown");
        rows.push_back(std::move(c));
    }

    // bags
    for (const auto& c : rows) {
        std::mt19937_64 rng(opt.seed * 1000003ULL + std::hash<std::string>{}(c.id));
        std::normal_distribution<double> noise(0.0, 1.0);
        PatchBag bag;
        bag.slide_id = c.id;
        bag.extractor_tag = "external";
        bag.features.resize(opt.bag_size, opt.feature_dim);
        const int n_signal = (!opt.clinical_perfect && c.label == 1) ? 3 : 0;
        for (int r = 0; r < opt.bag_size; ++r) {
            const double shift = r < n_signal ? 2.0 : 0.0;
            for (int d = 0; d < opt.feature_dim; ++d)
                bag.features(r, d) = float(noise(rng) + shift);
            bag.coords.push_back({long(r) * 256, 0, 256, 1});
        }
        write_bag(bag, opt.out_dir / "bags" / (c.id + ".bag"));
    }

    // cohort manifest with encoded clinical columns (integer codes)
    {
        const auto path = opt.out_dir / "cohort.csv";
        const std::filesystem::path tmp = path.string() + ".tmp";
        std::ofstream out(tmp);
        out << "case_id,os_months,vital_status,sex,mgmt,bag_path,"
               "histology,grade,mgmt_status,chr7_gain_chr10_loss,tert_status,"
               "braf_v600e,transcriptome_subtype,pan_glioma_rna_cluster,"
               "pan_glioma_meth_cluster,supervised_meth_cluster,rf_sturm_cluster,"
               "age_years,mutation_count,percent_aneuploidy\n";
        for (std::size_t i = 0; i < rows.size(); ++i) {
            const auto& c = rows[i];
            const int j = c.class_index;
            const int mgmt_code = c.mgmt == "methylated" ? 0 : (c.mgmt == "unmethylated" ? 1 : -1);
            double age;
            int grade;
            if (opt.clinical_perfect) {
                age = c.label == 1 ? 30.0 : 70.0;
                grade = 2;
            } else {
                age = c.label == 1 ? 45.0 + j % 20 : 55.0 + j % 20;
                grade = c.label == 1 ? j % 3 : 2;
            }
            out << c.id << ',' << c.os_months << ','
                << (c.alive ? "alive" : "deceased") << ',' << c.sex << ',' << c.mgmt << ','
                << c.id << ".bag" << ",1," << grade << ','
                << mgmt_code << ',' << i % 2 << ',' << (i % 5 == 0 ? -1 : int(i % 2)) << ','
                << (i % 9 == 0 ? -1 : 0) << ',' << i % 4 << ',' << i % 2 << ',' << i % 2 << ','
                << i % 2 << ',' << i % 2 << ',' << age << ','
                << (i % 11 == 0 ? std::string("") : std::to_string(20 + (i * 7) % 30)) << ','
                << 0.1 + 0.01 * double(i % 50) << '\n';
        }
        out.close();
        std::filesystem::rename(tmp, path);
    }

    if (opt.with_bundle) write_bundle(opt.out_dir / "bundle", opt.seed);

    PipelineConfig cfg;
    cfg.cohort_manifest = opt.out_dir / "cohort.csv";
    cfg.bags_dir = opt.out_dir / "bags";
    cfg.output_dir = opt.out_dir / "out";
    cfg.seed = opt.seed;
    // small bags learn fast; keep the end-to-end run short
    cfg.mil_hyper.epochs = 3;
    cfg.mil_hyper.early_stop_patience = 3;
    cfg.to_toml().write(opt.out_dir / "config.toml");
}

}  // namespace slidefuse::fixtures
