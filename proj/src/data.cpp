#include "cholseq/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

namespace cholseq {

namespace {

constexpr int kMriFeatures = 6;

double logistic(double x) { return 1.0 / (1.0 + std::exp(-x)); }

std::string format_full(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) out.push_back(cell);
    if (!line.empty() && line.back() == ',') out.emplace_back();
    return out;
}

int parse_label(const std::string& raw) {
    if (raw.empty()) return kLabelUnknown;
    // Default grouping: CN+SMC, EMCI+LMCI+MCI, AD/Dementia.
    if (raw == "CN" || raw == "SMC") return 0;
    if (raw == "MCI" || raw == "EMCI" || raw == "LMCI") return 1;
    if (raw == "AD" || raw == "Dementia") return 2;
    throw std::invalid_argument("load_csv: unknown label '" + raw + "'");
}

struct RawVisit {
    double month = 0;
    double icv = std::numeric_limits<double>::quiet_NaN();
    std::vector<double> features;
    int label = kLabelUnknown;
};

}  // namespace

const std::vector<std::string>& feature_names() {
    static const std::vector<std::string> names{"entorhinal", "hippocampus", "fusiform",
                                                "midtemporal", "ventricles", "wholebrain",
                                                "mmse",       "adas11",      "adas13"};
    return names;
}

const std::vector<double>& default_trend_directions() {
    static const std::vector<double> dirs{-1, -1, -1, -1, +1, -1, -1, +1, +1};
    return dirs;
}

const std::vector<bool>& max_divide_features() {
    static const std::vector<bool> flags{false, false, false, false, false,
                                         false, true,  true,  true};
    return flags;
}

const std::vector<std::string>& class_names() {
    static const std::vector<std::string> names{"CN", "MCI", "AD"};
    return names;
}

std::vector<double> Sequence::feature_row(int t) const {
    std::vector<double> out(features.cols);
    for (int f = 0; f < features.cols; ++f) out[f] = features(t, f);
    return out;
}

std::vector<double> Sequence::mask_row(int t) const {
    std::vector<double> out(mask.cols);
    for (int f = 0; f < mask.cols; ++f) out[f] = mask(t, f);
    return out;
}

bool Sequence::fully_observed(int t) const {
    for (int f = 0; f < mask.cols; ++f)
        if (mask(t, f) == 0.0) return false;
    return true;
}

Cohort load_csv(const std::string& path, const SchemaConfig& cfg) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("load_csv: cannot open '" + path + "'");

    std::string header;
    if (!std::getline(in, header)) throw std::runtime_error("load_csv: empty file");
    if (!header.empty() && header.back() == '\r') header.pop_back();
    std::vector<std::string> cols = split_line(header);

    const auto& fnames = feature_names();
    const int c = static_cast<int>(fnames.size());
    std::map<std::string, int> colpos;
    for (size_t i = 0; i < cols.size(); ++i) colpos[cols[i]] = static_cast<int>(i);
    for (const char* required : {"subject_id", "months", "label"}) {
        if (!colpos.count(required)) {
            throw std::runtime_error(std::string("load_csv: missing required column '") +
                                     required + "'");
        }
    }
    for (const auto& f : fnames) {
        if (!colpos.count(f)) throw std::runtime_error("load_csv: missing required column '" + f + "'");
    }
    const bool has_icv = colpos.count("ICV") > 0;
    if (cfg.use_icv && !has_icv) throw std::runtime_error("load_csv: ICV column required but absent");

    std::map<std::string, std::vector<RawVisit>> by_subject;
    std::string line;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::vector<std::string> cells = split_line(line);
        if (cells.size() < cols.size()) cells.resize(cols.size());
        RawVisit v;
        const std::string& sid = cells[colpos["subject_id"]];
        try {
            v.month = std::stod(cells[colpos["months"]]);
        } catch (const std::exception&) {
            throw std::runtime_error("load_csv: bad months value at line " + std::to_string(lineno));
        }
        if (has_icv && !cells[colpos["ICV"]].empty()) v.icv = std::stod(cells[colpos["ICV"]]);
        v.features.resize(c, std::numeric_limits<double>::quiet_NaN());
        for (int f = 0; f < c; ++f) {
            const std::string& cell = cells[colpos[fnames[f]]];
            if (cell.empty()) continue;
            try {
                size_t used = 0;
                v.features[f] = std::stod(cell, &used);
                if (used != cell.size()) throw std::invalid_argument(cell);
            } catch (const std::exception&) {
                throw std::runtime_error("load_csv: non-numeric cell for '" + fnames[f] +
                                         "' at line " + std::to_string(lineno));
            }
        }
        v.label = parse_label(cells[colpos["label"]]);
        auto& visits = by_subject[sid];
        for (const auto& prev : visits) {
            if (prev.month == v.month) {
                throw std::runtime_error("load_csv: duplicate (subject, month) = (" + sid + ", " +
                                         format_full(v.month) + ")");
            }
        }
        visits.push_back(std::move(v));
    }

    Cohort cohort;
    for (auto& [sid, visits] : by_subject) {
        std::sort(visits.begin(), visits.end(),
                  [](const RawVisit& a, const RawVisit& b) { return a.month < b.month; });
        if (static_cast<int>(visits.size()) < cfg.min_visits) {
            ++cohort.dropped_subjects;
            continue;
        }
        Sequence seq;
        seq.subject_id = sid;
        const int tcount = static_cast<int>(visits.size());
        seq.features = Matrix(tcount, c);
        seq.mask = Matrix(tcount, c);
        const double base = visits.front().month;
        bool any_icv = false;
        for (int t = 0; t < tcount; ++t) {
            seq.times.push_back(visits[t].month - base);
            seq.labels.push_back(visits[t].label);
            for (int f = 0; f < c; ++f) {
                seq.features(t, f) = visits[t].features[f];
                seq.mask(t, f) = std::isfinite(visits[t].features[f]) ? 1.0 : 0.0;
            }
            if (std::isfinite(visits[t].icv)) any_icv = true;
        }
        if (any_icv) {
            for (int t = 0; t < tcount; ++t) seq.icv.push_back(visits[t].icv);
        }
        cohort.sequences.push_back(std::move(seq));
    }
    if (cohort.dropped_subjects > 0) {
        std::fprintf(stderr, "load_csv: dropped %ld subjects with fewer than %d visits\n",
                     cohort.dropped_subjects, cfg.min_visits);
    }
    if (cfg.regularize_yearly) return regularize_yearly(cohort);
    return cohort;
}

void write_csv(const std::string& path, const Cohort& cohort) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("write_csv: cannot open '" + path + "'");
    const auto& fnames = feature_names();
    bool any_icv = false;
    for (const auto& s : cohort.sequences) any_icv = any_icv || !s.icv.empty();
    out << "subject_id,months";
    if (any_icv) out << ",ICV";
    for (const auto& f : fnames) out << "," << f;
    out << ",label\n";
    for (const auto& s : cohort.sequences) {
        for (int t = 0; t < s.visits(); ++t) {
            out << s.subject_id << "," << format_full(s.times[t]);
            if (any_icv) {
                out << ",";
                if (!s.icv.empty() && std::isfinite(s.icv[t])) out << format_full(s.icv[t]);
            }
            for (int f = 0; f < s.feature_count(); ++f) {
                out << ",";
                if (s.mask(t, f) != 0.0) out << format_full(s.features(t, f));
            }
            out << ",";
            if (s.labels[t] != kLabelUnknown) out << class_names()[s.labels[t]];
            out << "\n";
        }
    }
}

Cohort regularize_yearly(const Cohort& cohort) {
    Cohort out = cohort;
    out.sequences.clear();
    for (const auto& s : cohort.sequences) {
        std::vector<int> keep;
        long last_slot = -1;
        for (int t = 0; t < s.visits(); ++t) {
            const long slot = std::lround(s.times[t] / 12.0);
            if (slot == last_slot) continue;
            if (std::fabs(s.times[t] - 12.0 * slot) > 6.0) continue;
            keep.push_back(t);
            last_slot = slot;
        }
        if (keep.empty()) continue;
        Sequence r;
        r.subject_id = s.subject_id;
        r.features = Matrix(static_cast<int>(keep.size()), s.feature_count());
        r.mask = Matrix(static_cast<int>(keep.size()), s.feature_count());
        if (s.truth.size() > 0) r.truth = Matrix(static_cast<int>(keep.size()), s.feature_count());
        const double base = s.times[keep.front()];
        for (size_t i = 0; i < keep.size(); ++i) {
            const int t = keep[i];
            r.times.push_back(s.times[t] - base);
            r.labels.push_back(s.labels[t]);
            if (!s.icv.empty()) r.icv.push_back(s.icv[t]);
            for (int f = 0; f < s.feature_count(); ++f) {
                r.features(static_cast<int>(i), f) = s.features(t, f);
                r.mask(static_cast<int>(i), f) = s.mask(t, f);
                if (s.truth.size() > 0) r.truth(static_cast<int>(i), f) = s.truth(t, f);
            }
        }
        out.sequences.push_back(std::move(r));
    }
    return out;
}

namespace {

double icv_divisor(const Sequence& s, int t, const SchemaConfig& cfg) {
    if (s.icv.empty()) return 1.0;
    const double v = cfg.icv_baseline ? s.icv.front() : s.icv[t];
    return std::isfinite(v) && v > 0.0 ? v : 1.0;
}

}  // namespace

NormStats fit_normalization(const Cohort& cohort, const std::vector<int>& train_idx,
                            const SchemaConfig& cfg) {
    const int c = static_cast<int>(feature_names().size());
    NormStats st;
    st.lo.assign(c, std::numeric_limits<double>::infinity());
    st.hi.assign(c, -std::numeric_limits<double>::infinity());
    for (int idx : train_idx) {
        const Sequence& s = cohort.sequences.at(idx);
        for (int t = 0; t < s.visits(); ++t) {
            for (int f = 0; f < c; ++f) {
                if (s.mask(t, f) == 0.0) continue;
                double v = s.features(t, f);
                if (cfg.use_icv && f < kMriFeatures) v /= icv_divisor(s, t, cfg);
                st.lo[f] = std::min(st.lo[f], v);
                st.hi[f] = std::max(st.hi[f], v);
            }
        }
    }
    for (int f = 0; f < c; ++f) {
        if (!(st.hi[f] > st.lo[f]) && !max_divide_features()[f]) {
            throw std::runtime_error("normalize: degenerate feature '" + feature_names()[f] +
                                     "' (min equals max on the training folds)");
        }
        if (max_divide_features()[f] && !(st.hi[f] != 0.0)) {
            throw std::runtime_error("normalize: degenerate feature '" + feature_names()[f] +
                                     "' (zero training maximum)");
        }
    }
    return st;
}

Cohort apply_normalization(const Cohort& cohort, const NormStats& st, const SchemaConfig& cfg) {
    Cohort out = cohort;
    out.normalization = st;
    out.clipped_values = 0;
    for (auto& s : out.sequences) {
        for (int t = 0; t < s.visits(); ++t) {
            for (int f = 0; f < s.feature_count(); ++f) {
                auto transform = [&](double v) {
                    if (cfg.use_icv && f < kMriFeatures) v /= icv_divisor(s, t, cfg);
                    double y = max_divide_features()[f] ? v / st.hi[f]
                                                        : (v - st.lo[f]) / (st.hi[f] - st.lo[f]);
                    if (y < 0.0 || y > 1.0) {
                        ++out.clipped_values;
                        y = std::clamp(y, 0.0, 1.0);
                    }
                    return y;
                };
                if (s.mask(t, f) != 0.0) s.features(t, f) = transform(s.features(t, f));
                if (s.truth.size() > 0 && std::isfinite(s.truth(t, f))) {
                    s.truth(t, f) = transform(s.truth(t, f));
                }
            }
        }
    }
    if (out.clipped_values > 0) {
        std::fprintf(stderr, "normalize: clipped %ld out-of-range values\n", out.clipped_values);
    }
    return out;
}

Cohort invert_normalization(const Cohort& cohort, const NormStats& st) {
    Cohort out = cohort;
    out.normalization.reset();
    for (auto& s : out.sequences) {
        for (int t = 0; t < s.visits(); ++t) {
            for (int f = 0; f < s.feature_count(); ++f) {
                auto invert = [&](double y) {
                    return max_divide_features()[f] ? y * st.hi[f]
                                                    : st.lo[f] + y * (st.hi[f] - st.lo[f]);
                };
                if (s.mask(t, f) != 0.0) s.features(t, f) = invert(s.features(t, f));
                if (s.truth.size() > 0 && std::isfinite(s.truth(t, f))) {
                    s.truth(t, f) = invert(s.truth(t, f));
                }
            }
        }
    }
    return out;
}

Cohort generate_synthetic(const SynthConfig& cfg) {
    if (cfg.n_subjects < 0 || cfg.n_visits < 1) {
        throw std::invalid_argument("generate_synthetic: bad subject/visit counts");
    }
    if (cfg.missing_rate < 0.0 || cfg.missing_rate > 1.0) {
        throw std::invalid_argument("generate_synthetic: missing_rate outside [0,1]");
    }
    const auto& dirs = default_trend_directions();
    const int c = static_cast<int>(dirs.size());
    // Raw value ranges per feature, loosely volumetric / score scaled.
    static const double lo[] = {1400, 4000, 9000, 9000, 10000, 800000, 5, 2, 3};
    static const double hi[] = {4800, 11000, 23000, 26000, 120000, 1200000, 30, 70, 85};
    // Per-class latent severity start and yearly progression rate bounds.
    static const double s0lo[] = {0.04, 0.30, 0.58};
    static const double s0hi[] = {0.22, 0.48, 0.78};
    static const double ratelo[] = {0.004, 0.040, 0.060};
    static const double ratehi[] = {0.030, 0.095, 0.130};

    double mix_total = 0.0;
    for (double m : cfg.class_mix) {
        if (m < 0.0) throw std::invalid_argument("generate_synthetic: negative class mix entry");
        mix_total += m;
    }
    if (!(mix_total > 0.0)) throw std::invalid_argument("generate_synthetic: empty class mix");

    Rng root = make_rng(cfg.seed);
    Cohort cohort;
    for (int subj = 0; subj < cfg.n_subjects; ++subj) {
        Rng rng = root.derive(static_cast<uint64_t>(subj));
        // Class group from the mix.
        const double pick = rng.uniform() * mix_total;
        int group = 0;
        double acc = 0.0;
        for (size_t g = 0; g < cfg.class_mix.size(); ++g) {
            acc += cfg.class_mix[g];
            if (pick < acc) {
                group = static_cast<int>(g);
                break;
            }
        }
        const double s0 = rng.uniform(s0lo[group], s0hi[group]);
        const double rate = rng.uniform(ratelo[group], ratehi[group]);

        Sequence seq;
        char sid[32];
        std::snprintf(sid, sizeof(sid), "S%04d", subj);
        seq.subject_id = sid;
        seq.features = Matrix(cfg.n_visits, c);
        seq.mask = Matrix(cfg.n_visits, c);
        seq.truth = Matrix(cfg.n_visits, c);

        double month = 0.0;
        for (int t = 0; t < cfg.n_visits; ++t) {
            if (t > 0) {
                double gap = cfg.visit_spacing_months;
                if (cfg.visit_jitter_months > 0.0) {
                    gap += rng.uniform(-cfg.visit_jitter_months, cfg.visit_jitter_months);
                }
                month += std::max(1.0, gap);
            }
            seq.times.push_back(month);
            const double sev = s0 + rate * month / 12.0;
            seq.labels.push_back(sev < 1.0 / 3.0 ? 0 : (sev < 2.0 / 3.0 ? 1 : 2));

            const bool drop_visit = t > 0 && rng.bernoulli(cfg.visit_dropout);
            for (int f = 0; f < c; ++f) {
                double frac = logistic(4.0 * (sev - 0.5));
                if (dirs[f] < 0.0) frac = 1.0 - frac;
                double v = lo[f] + (hi[f] - lo[f]) * frac;
                if (cfg.noise_level > 0.0) {
                    v += cfg.noise_level * (hi[f] - lo[f]) * rng.gaussian();
                }
                seq.truth(t, f) = v;
                const bool missing =
                    drop_visit || (t > 0 && rng.bernoulli(cfg.missing_rate));
                if (missing) {
                    seq.features(t, f) = std::numeric_limits<double>::quiet_NaN();
                    seq.mask(t, f) = 0.0;
                } else {
                    seq.features(t, f) = v;
                    seq.mask(t, f) = 1.0;
                }
            }
        }
        cohort.sequences.push_back(std::move(seq));
    }
    return cohort;
}

std::vector<FoldSplit> split_folds(const Cohort& cohort, int k, uint64_t seed) {
    if (k < 2) throw std::invalid_argument("split_folds: k must be >= 2");
    const int n = static_cast<int>(cohort.sequences.size());
    if (n < k) throw std::invalid_argument("split_folds: fewer subjects than folds");

    // Stratify by the last visit's label.
    std::map<int, std::vector<int>> by_class;
    for (int i = 0; i < n; ++i) {
        int label = kLabelUnknown;
        for (int t = cohort.sequences[i].visits() - 1; t >= 0 && label == kLabelUnknown; --t) {
            label = cohort.sequences[i].labels[t];
        }
        by_class[label].push_back(i);
    }
    Rng rng = make_rng(seed);
    std::vector<std::vector<int>> folds(k);
    int cursor = 0;
    for (auto& [label, members] : by_class) {
        rng.shuffle(members);
        for (int idx : members) folds[cursor % k].push_back(idx);
        ++cursor;
        for (size_t f = 0; f < folds.size(); ++f) std::sort(folds[f].begin(), folds[f].end());
    }
    // Re-deal to keep fold sizes balanced across classes.
    folds.assign(k, {});
    int deal = 0;
    for (auto& [label, members] : by_class) {
        (void)label;
        for (int idx : members) folds[deal++ % k].push_back(idx);
    }

    std::vector<FoldSplit> out;
    for (int f = 0; f < k; ++f) {
        FoldSplit split;
        split.val = folds[f];
        for (int g = 0; g < k; ++g) {
            if (g == f) continue;
            split.train.insert(split.train.end(), folds[g].begin(), folds[g].end());
        }
        std::sort(split.train.begin(), split.train.end());
        std::sort(split.val.begin(), split.val.end());
        out.push_back(std::move(split));
    }
    return out;
}

}  // namespace cholseq
