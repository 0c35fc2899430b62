#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>

#include "cholseq/data.hpp"

using namespace cholseq;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

void write_file(const std::string& path, const std::string& content) {
    std::ofstream os(path);
    os << content;
}

const char* kHeader =
    "subject_id,months,entorhinal,hippocampus,fusiform,midtemporal,ventricles,wholebrain,"
    "mmse,adas11,adas13,label";

std::string well_formed_csv() {
    std::string s = kHeader;
    s += "\n";
    s += "A,0,3000,7000,15000,16000,30000,1000000,29,5,7,CN\n";
    s += "A,6,2950,,14800,15900,31000,995000,28,6,8,CN\n";
    s += "A,12,2900,6800,14500,15800,,990000,27,7,,MCI\n";
    return s;
}

}  // namespace

TEST_CASE("well-formed three-visit file loads with masks") {
    const std::string path = temp_path("cholseq_t1.csv");
    write_file(path, well_formed_csv());
    Cohort c = load_csv(path);
    REQUIRE(c.sequences.size() == 1);
    const Sequence& s = c.sequences[0];
    CHECK(s.visits() == 3);
    CHECK(s.times == std::vector<double>{0, 6, 12});
    CHECK(s.mask(0, 1) == 1.0);
    CHECK(s.mask(1, 1) == 0.0);  // empty hippocampus cell
    CHECK(std::isnan(s.features(1, 1)));
    CHECK(s.labels == std::vector<int>{0, 0, 1});
}

TEST_CASE("short subjects are excluded and errors are specific") {
    const std::string path = temp_path("cholseq_t2.csv");
    std::string csv = well_formed_csv();
    csv += "B,0,3000,7000,15000,16000,30000,1000000,29,5,7,CN\n";
    csv += "B,6,3000,7000,15000,16000,30000,1000000,29,5,7,CN\n";
    write_file(path, csv);
    Cohort c = load_csv(path);
    CHECK(c.sequences.size() == 1);  // B has only 2 visits
    CHECK(c.dropped_subjects == 1);

    // Duplicate (subject, month).
    write_file(path, well_formed_csv() + "A,6,1,1,1,1,1,1,1,1,1,CN\n");
    CHECK_THROWS_AS(load_csv(path), std::runtime_error);

    // Non-numeric feature cell.
    write_file(path, well_formed_csv() + "B,0,xyz,7000,15000,16000,1,1,1,1,1,CN\nB,6,1,1,1,1,1,1,1,1,1,CN\nB,12,1,1,1,1,1,1,1,1,1,CN\n");
    CHECK_THROWS_AS(load_csv(path), std::runtime_error);

    // Missing required column.
    write_file(path, "subject_id,months,label\nA,0,CN\n");
    CHECK_THROWS_AS(load_csv(path), std::runtime_error);
}

TEST_CASE("write then load round trips values and masks") {
    SynthConfig cfg;
    cfg.n_subjects = 20;
    cfg.n_visits = 5;
    cfg.visit_jitter_months = 1.5;
    Cohort a = generate_synthetic(cfg);
    const std::string path = temp_path("cholseq_t3.csv");
    write_csv(path, a);
    Cohort b = load_csv(path);
    REQUIRE(a.sequences.size() == b.sequences.size());
    for (size_t i = 0; i < a.sequences.size(); ++i) {
        const Sequence& x = a.sequences[i];
        const Sequence& y = b.sequences[i];
        CHECK(x.subject_id == y.subject_id);
        CHECK(x.times == y.times);
        CHECK(x.labels == y.labels);
        CHECK(max_abs_diff(x.mask, y.mask) == 0.0);
        for (int t = 0; t < x.visits(); ++t) {
            for (int f = 0; f < x.feature_count(); ++f) {
                if (x.mask(t, f) != 0.0) CHECK(x.features(t, f) == y.features(t, f));
            }
        }
    }
}

TEST_CASE("normalization hand cases") {
    SynthConfig cfg;
    cfg.n_subjects = 6;
    cfg.n_visits = 4;
    Cohort c = generate_synthetic(cfg);
    // Overwrite one feature with a controlled range: entorhinal in [2,4],
    // mmse max 30.
    for (auto& s : c.sequences) {
        for (int t = 0; t < s.visits(); ++t) {
            s.features(t, 0) = 2.0;
            s.features(t, 6) = 15.0;
            s.mask(t, 0) = s.mask(t, 6) = 1.0;
        }
        s.truth = Matrix();
    }
    c.sequences[0].features(0, 0) = 4.0;
    c.sequences[0].features(1, 0) = 3.0;
    c.sequences[0].features(0, 6) = 30.0;
    c.sequences[0].features(1, 6) = 24.0;

    std::vector<int> idx(c.sequences.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    NormStats st = fit_normalization(c, idx);
    CHECK(st.lo[0] == 2.0);
    CHECK(st.hi[0] == 4.0);
    CHECK(st.hi[6] == 30.0);

    Cohort n = apply_normalization(c, st);
    CHECK(n.sequences[0].features(0, 0) == 1.0);   // train max -> 1
    CHECK(n.sequences[0].features(1, 0) == 0.5);   // midpoint -> 0.5
    CHECK(n.sequences[1].features(0, 0) == 0.0);   // train min -> 0
    CHECK(n.sequences[0].features(0, 6) == 1.0);   // mmse 30/30
    CHECK(n.sequences[0].features(1, 6) == 0.8);   // mmse 24/30
}

TEST_CASE("normalization inverts to the raw values") {
    SynthConfig cfg;
    cfg.n_subjects = 25;
    cfg.n_visits = 6;
    Cohort c = generate_synthetic(cfg);
    std::vector<int> idx(c.sequences.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    NormStats st = fit_normalization(c, idx);
    Cohort n = apply_normalization(c, st);

    // All values in [0,1] after the transform.
    for (const auto& s : n.sequences) {
        for (int t = 0; t < s.visits(); ++t) {
            for (int f = 0; f < s.feature_count(); ++f) {
                if (s.mask(t, f) == 0.0) continue;
                CHECK(s.features(t, f) >= 0.0);
                CHECK(s.features(t, f) <= 1.0);
            }
        }
    }

    Cohort back = invert_normalization(n, st);
    for (size_t i = 0; i < c.sequences.size(); ++i) {
        for (int t = 0; t < c.sequences[i].visits(); ++t) {
            for (int f = 0; f < c.sequences[i].feature_count(); ++f) {
                if (c.sequences[i].mask(t, f) == 0.0) {
                    CHECK(std::isnan(back.sequences[i].features(t, f)));
                    continue;
                }
                const double raw = c.sequences[i].features(t, f);
                CHECK(std::fabs(back.sequences[i].features(t, f) - raw) <=
                      1e-10 * std::max(1.0, std::fabs(raw)));
            }
        }
    }
}

TEST_CASE("degenerate feature is rejected by name") {
    SynthConfig cfg;
    cfg.n_subjects = 4;
    cfg.n_visits = 3;
    Cohort c = generate_synthetic(cfg);
    for (auto& s : c.sequences) {
        for (int t = 0; t < s.visits(); ++t) {
            s.features(t, 2) = 5.0;  // constant fusiform
            s.mask(t, 2) = 1.0;
        }
    }
    std::vector<int> idx(c.sequences.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = static_cast<int>(i);
    try {
        fit_normalization(c, idx);
        FAIL("expected degenerate-feature error");
    } catch (const std::runtime_error& e) {
        CHECK(std::string(e.what()).find("fusiform") != std::string::npos);
    }
}

TEST_CASE("synthetic generator determinism and missingness") {
    SynthConfig cfg;
    cfg.n_subjects = 40;
    cfg.n_visits = 6;
    cfg.visit_jitter_months = 2.0;
    Cohort a = generate_synthetic(cfg);
    Cohort b = generate_synthetic(cfg);
    REQUIRE(a.sequences.size() == b.sequences.size());
    for (size_t i = 0; i < a.sequences.size(); ++i) {
        CHECK(a.sequences[i].times == b.sequences[i].times);
        CHECK(max_abs_diff(a.sequences[i].truth, b.sequences[i].truth) == 0.0);
        CHECK(max_abs_diff(a.sequences[i].mask, b.sequences[i].mask) == 0.0);
    }

    SynthConfig none = cfg;
    none.missing_rate = 0.0;
    none.visit_dropout = 0.0;
    Cohort full = generate_synthetic(none);
    for (const auto& s : full.sequences) {
        for (size_t k = 0; k < s.mask.size(); ++k) CHECK(s.mask.data[k] == 1.0);
    }
}

TEST_CASE("synthetic labels never reverse (1000 subjects)") {
    SynthConfig cfg;
    cfg.n_subjects = 1000;
    cfg.n_visits = 8;
    cfg.seed = 9;
    Cohort c = generate_synthetic(cfg);
    for (const auto& s : c.sequences) {
        for (size_t t = 1; t < s.labels.size(); ++t) CHECK(s.labels[t] >= s.labels[t - 1]);
    }
}

TEST_CASE("noise-free synthetic trajectories follow their trend signs exactly") {
    SynthConfig cfg;
    cfg.n_subjects = 50;
    cfg.n_visits = 8;
    cfg.noise_level = 0.0;
    Cohort c = generate_synthetic(cfg);
    const auto& dirs = default_trend_directions();
    long violations = 0;
    for (const auto& s : c.sequences) {
        for (int t = 1; t < s.visits(); ++t) {
            for (int f = 0; f < s.feature_count(); ++f) {
                const double step = s.truth(t, f) - s.truth(t - 1, f);
                if (dirs[f] * step < 0.0) ++violations;
            }
        }
    }
    CHECK(violations == 0);
}

TEST_CASE("fold splitting is disjoint, exhaustive, and stratified") {
    SynthConfig cfg;
    cfg.n_subjects = 50;
    Cohort c = generate_synthetic(cfg);
    const int k = 5;
    auto splits = split_folds(c, k, 123);
    REQUIRE(static_cast<int>(splits.size()) == k);

    std::vector<int> seen(c.sequences.size(), 0);
    for (const auto& split : splits) {
        for (int i : split.val) ++seen[i];
        // train and val are disjoint
        for (int i : split.val) {
            CHECK(std::find(split.train.begin(), split.train.end(), i) == split.train.end());
        }
        CHECK(split.train.size() + split.val.size() == c.sequences.size());
    }
    for (int s : seen) CHECK(s == 1);  // exhaustive, pairwise disjoint

    // Stratification: per-fold class counts within +-1 of an even share.
    auto last_label = [&](int i) {
        const auto& labels = c.sequences[i].labels;
        return labels.back();
    };
    std::map<int, int> global;
    for (size_t i = 0; i < c.sequences.size(); ++i) ++global[last_label(static_cast<int>(i))];
    for (const auto& split : splits) {
        std::map<int, int> fold;
        for (int i : split.val) ++fold[last_label(i)];
        for (const auto& [label, count] : global) {
            const double share = static_cast<double>(count) / k;
            CHECK(std::fabs(fold[label] - share) <= 1.0);
        }
    }

    CHECK_THROWS_AS(split_folds(c, 1, 0), std::invalid_argument);
    SynthConfig tiny;
    tiny.n_subjects = 3;
    CHECK_THROWS_AS(split_folds(generate_synthetic(tiny), 5, 0), std::invalid_argument);

    // 10 subjects, 5 folds -> validation folds of exactly 2.
    SynthConfig ten;
    ten.n_subjects = 10;
    auto even = split_folds(generate_synthetic(ten), 5, 7);
    for (const auto& split : even) CHECK(split.val.size() == 2);
}

TEST_CASE("yearly regularization keeps one visit per yearly slot") {
    SynthConfig cfg;
    cfg.n_subjects = 10;
    cfg.n_visits = 9;
    cfg.visit_spacing_months = 6.0;
    Cohort c = generate_synthetic(cfg);
    Cohort r = regularize_yearly(c);
    REQUIRE(r.sequences.size() == c.sequences.size());
    for (const auto& s : r.sequences) {
        CHECK(s.times.front() == 0.0);
        for (int t = 1; t < s.visits(); ++t) {
            CHECK(s.times[t] > s.times[t - 1]);
            // Every retained visit sits within half a year of a yearly slot.
            const double slot = std::round(s.times[t] / 12.0);
            CHECK(std::fabs(s.times[t] - 12.0 * slot) <= 6.0);
        }
        CHECK(s.visits() < c.sequences[0].visits());
    }
}

TEST_CASE("ICV division feeds the normalization when enabled") {
    const std::string path = temp_path("cholseq_icv.csv");
    std::string csv =
        "subject_id,months,ICV,entorhinal,hippocampus,fusiform,midtemporal,ventricles,"
        "wholebrain,mmse,adas11,adas13,label\n";
    csv += "A,0,1000,2000,7000,15000,16000,30000,1000000,30,5,7,CN\n";
    csv += "A,6,1000,3000,7100,15100,16100,31000,1000100,29,6,8,CN\n";
    csv += "A,12,2000,8000,7200,15200,16200,32000,1000200,28,7,9,MCI\n";
    write_file(path, csv);
    SchemaConfig sc;
    sc.use_icv = true;
    Cohort c = load_csv(path, sc);
    std::vector<int> idx{0};
    NormStats st = fit_normalization(c, idx, sc);
    // entorhinal / ICV: {2.0, 3.0, 4.0} -> range [2,4]
    CHECK(st.lo[0] == 2.0);
    CHECK(st.hi[0] == 4.0);
    Cohort n = apply_normalization(c, st, sc);
    CHECK(n.sequences[0].features(1, 0) == 0.5);
}
