#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <thread>

#include <CLI11.hpp>
#include <json.hpp>

#include "cholseq/checkpoint.hpp"
#include "cholseq/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cholseq;

namespace {

void refuse_overwrite(const fs::path& path, bool force) {
    if (!force && fs::exists(path)) {
        throw std::runtime_error("output '" + path.string() + "' exists (use --force)");
    }
}

void write_text(const fs::path& path, const std::string& content) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    os << content;
}

json load_config(const std::string& path) {
    if (path.empty()) return json::object();
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config '" + path + "'");
    return json::parse(is);
}

int hardware_threads() {
    if (const char* env = std::getenv("CHOLSEQ_THREADS")) {
        const int n = std::atoi(env);
        if (n > 0) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

/// Everything the train/eval/impute/forecast pipeline needs, resolved from
/// defaults <- config file <- explicit flags.
struct PipelineSettings {
    uint64_t seed = 42;
    int epochs = 100;
    int batch_size = 64;
    double lr = 1e-3;
    double weight_decay = 1e-4;
    int dim = 16;
    int encoder_hidden = 16;
    int ode_hidden = 64;
    std::string ode_method = "euler";
    int ode_steps_per_unit = 4;
    double lambda1 = 1.0;
    double lambda2 = 0.5;
    double lambda3 = 0.001;
    double delta = 5.0;
    std::string monotonic_mode = "hinge";
    double surrogate_k = 50.0;
    std::string shrinkage_mode = "fixed";
    double shrinkage_rho = 0.1;
    int min_visits = 3;
    bool use_icv = false;
    bool regularize_yearly = false;

    void overlay(const json& j) {
        auto get = [&](const char* key, auto& slot) {
            if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
        };
        get("seed", seed);
        get("epochs", epochs);
        get("batch_size", batch_size);
        get("lr", lr);
        get("weight_decay", weight_decay);
        get("dim", dim);
        get("encoder_hidden", encoder_hidden);
        get("ode_hidden", ode_hidden);
        get("ode_method", ode_method);
        get("ode_steps_per_unit", ode_steps_per_unit);
        get("lambda1", lambda1);
        get("lambda2", lambda2);
        get("lambda3", lambda3);
        get("delta", delta);
        get("monotonic_mode", monotonic_mode);
        get("surrogate_k", surrogate_k);
        get("shrinkage_mode", shrinkage_mode);
        get("shrinkage_rho", shrinkage_rho);
        get("min_visits", min_visits);
        get("use_icv", use_icv);
        get("regularize_yearly", regularize_yearly);
    }

    json to_json() const {
        return json{{"seed", seed},
                    {"epochs", epochs},
                    {"batch_size", batch_size},
                    {"lr", lr},
                    {"weight_decay", weight_decay},
                    {"dim", dim},
                    {"encoder_hidden", encoder_hidden},
                    {"ode_hidden", ode_hidden},
                    {"ode_method", ode_method},
                    {"ode_steps_per_unit", ode_steps_per_unit},
                    {"lambda1", lambda1},
                    {"lambda2", lambda2},
                    {"lambda3", lambda3},
                    {"delta", delta},
                    {"monotonic_mode", monotonic_mode},
                    {"surrogate_k", surrogate_k},
                    {"shrinkage_mode", shrinkage_mode},
                    {"shrinkage_rho", shrinkage_rho},
                    {"min_visits", min_visits},
                    {"use_icv", use_icv},
                    {"regularize_yearly", regularize_yearly}};
    }

    SchemaConfig schema() const {
        SchemaConfig s;
        s.min_visits = min_visits;
        s.use_icv = use_icv;
        s.regularize_yearly = regularize_yearly;
        return s;
    }

    ForwardConfig forward() const {
        ForwardConfig f;
        if (ode_method == "euler") {
            f.solver.method = SolveMethod::Euler;
        } else if (ode_method == "rk4") {
            f.solver.method = SolveMethod::Rk4;
        } else if (ode_method == "geodesic-euler") {
            f.solver.method = SolveMethod::GeodesicEuler;
        } else {
            throw std::runtime_error("unknown ode_method '" + ode_method + "'");
        }
        f.solver.steps_per_unit_time = ode_steps_per_unit;
        if (shrinkage_mode == "fixed") {
            f.shrinkage.mode = ShrinkageConfig::Mode::FixedRho;
        } else if (shrinkage_mode == "oas") {
            f.shrinkage.mode = ShrinkageConfig::Mode::Oas;
        } else {
            throw std::runtime_error("unknown shrinkage_mode '" + shrinkage_mode + "'");
        }
        f.shrinkage.rho = shrinkage_rho;
        return f;
    }

    TrainConfig train_config() const {
        TrainConfig c;
        c.epochs = epochs;
        c.batch_size = batch_size;
        c.adam.lr = lr;
        c.adam.weight_decay = weight_decay;
        c.seed = seed;
        c.forward = forward();
        c.loss.lambda1 = lambda1;
        c.loss.lambda2 = lambda2;
        c.loss.lambda3 = lambda3;
        c.loss.delta = delta;
        c.loss.surrogate_k = surrogate_k;
        if (monotonic_mode == "hinge") {
            c.loss.monotonic_mode = MonotonicMode::DirectionalHinge;
        } else if (monotonic_mode == "as-written") {
            c.loss.monotonic_mode = MonotonicMode::AsWritten;
        } else if (monotonic_mode == "off") {
            c.loss.monotonic_mode = MonotonicMode::Off;
        } else {
            throw std::runtime_error("unknown monotonic_mode '" + monotonic_mode + "'");
        }
        return c;
    }

    ModelParams init_model(uint64_t model_seed) const {
        Rng rng = make_rng(model_seed);
        return ModelParams::init(static_cast<int>(feature_names().size()), dim, encoder_hidden,
                                 ode_hidden, static_cast<int>(class_names().size()), rng);
    }
};

void write_resolved_config(const fs::path& out_dir, const json& cfg) {
    write_text(out_dir / "config.resolved.json", cfg.dump(2) + "\n");
}

std::vector<int> all_indices(const Cohort& cohort) {
    std::vector<int> idx(cohort.sequences.size());
    std::iota(idx.begin(), idx.end(), 0);
    return idx;
}

// ---------------------------------------------------------------- synth ---

int cmd_synth(const std::string& config_path, const std::string& out_path, int64_t seed_flag,
              bool force) {
    const json j = load_config(config_path);
    SynthConfig cfg;
    auto get = [&](const char* key, auto& slot) {
        if (j.contains(key)) slot = j.at(key).get<std::decay_t<decltype(slot)>>();
    };
    get("n_subjects", cfg.n_subjects);
    get("n_visits", cfg.n_visits);
    get("visit_spacing_months", cfg.visit_spacing_months);
    get("visit_jitter_months", cfg.visit_jitter_months);
    get("missing_rate", cfg.missing_rate);
    get("visit_dropout", cfg.visit_dropout);
    get("class_mix", cfg.class_mix);
    get("noise_level", cfg.noise_level);
    get("seed", cfg.seed);
    if (seed_flag >= 0) cfg.seed = static_cast<uint64_t>(seed_flag);
    if (cfg.n_subjects <= 0) throw std::runtime_error("synth: n_subjects must be positive");

    const fs::path out(out_path);
    refuse_overwrite(out, force);

    Cohort cohort = generate_synthetic(cfg);
    write_csv(out_path, cohort);

    json resolved{{"command", "synth"},
                  {"n_subjects", cfg.n_subjects},
                  {"n_visits", cfg.n_visits},
                  {"visit_spacing_months", cfg.visit_spacing_months},
                  {"visit_jitter_months", cfg.visit_jitter_months},
                  {"missing_rate", cfg.missing_rate},
                  {"visit_dropout", cfg.visit_dropout},
                  {"class_mix", cfg.class_mix},
                  {"noise_level", cfg.noise_level},
                  {"seed", cfg.seed},
                  {"out", out_path}};
    write_resolved_config(out.has_parent_path() ? out.parent_path() : fs::path("."), resolved);
    return 0;
}

// ---------------------------------------------------------------- train ---

struct FoldResult {
    TrainReport report;
    EvalReport eval;
    std::string error;
};

int cmd_train(const std::string& data_path, const std::string& config_path,
              const std::string& out_dir, int64_t seed_flag, int folds, bool force) {
    PipelineSettings st;
    st.overlay(load_config(config_path));
    if (seed_flag >= 0) st.seed = static_cast<uint64_t>(seed_flag);

    const fs::path out(out_dir);
    fs::create_directories(out);
    refuse_overwrite(out / (folds > 0 ? "fold0.ckpt" : "model.ckpt"), force);

    Cohort raw = load_csv(data_path, st.schema());
    if (raw.sequences.empty()) throw std::runtime_error("train: empty cohort");

    json resolved = st.to_json();
    resolved["command"] = "train";
    resolved["data"] = data_path;
    resolved["folds"] = folds;
    write_resolved_config(out, resolved);

    if (folds <= 0) {
        const std::vector<int> idx = all_indices(raw);
        NormStats norm = fit_normalization(raw, idx, st.schema());
        Cohort cohort = apply_normalization(raw, norm, st.schema());
        ModelParams params = st.init_model(st.seed);
        TrainReport report = train(cohort, idx, params, st.train_config());
        write_text(out / "loss.csv", report.to_csv());
        save_checkpoint((out / "model.ckpt").string(), params, norm);
        return 0;
    }

    std::vector<FoldSplit> splits = split_folds(raw, folds, st.seed);
    std::vector<FoldResult> results(splits.size());
    std::atomic<size_t> next{0};
    const int workers = std::min<int>(hardware_threads(), folds);

    auto run_fold = [&](size_t f) {
        try {
            NormStats norm = fit_normalization(raw, splits[f].train, st.schema());
            Cohort cohort = apply_normalization(raw, norm, st.schema());
            Rng fold_rng = make_rng(st.seed).derive(f + 1);
            ModelParams params = st.init_model(
                static_cast<uint64_t>(fold_rng.next_below(UINT64_MAX)));
            TrainConfig tc = st.train_config();
            tc.seed = st.seed + f;
            results[f].report = train(cohort, splits[f].train, params, tc);
            results[f].eval = evaluate_model(cohort, splits[f].val, params, st.forward());
            save_checkpoint((out / ("fold" + std::to_string(f) + ".ckpt")).string(), params,
                            norm);
        } catch (const std::exception& e) {
            results[f].error = e.what();
        }
    };

    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&] {
            for (size_t f = next.fetch_add(1); f < splits.size(); f = next.fetch_add(1)) {
                run_fold(f);
            }
        });
    }
    for (auto& th : pool) th.join();

    double mean_mauc = 0.0;
    for (size_t f = 0; f < splits.size(); ++f) {
        if (!results[f].error.empty()) {
            throw std::runtime_error("train: fold " + std::to_string(f) + " failed: " +
                                     results[f].error);
        }
        write_text(out / ("fold" + std::to_string(f) + ".loss.csv"),
                   results[f].report.to_csv());
        write_text(out / ("fold" + std::to_string(f) + ".eval.json"),
                   results[f].eval.to_json());
        mean_mauc += results[f].eval.mauc;
    }
    mean_mauc /= static_cast<double>(splits.size());
    json summary{{"folds", folds}, {"mean_mauc", mean_mauc}};
    write_text(out / "summary.json", summary.dump(2) + "\n");
    return 0;
}

// ----------------------------------------------------------------- eval ---

int cmd_eval(const std::string& data_path, const std::string& ckpt_path,
             const std::string& out_dir, const std::string& config_path, bool force) {
    PipelineSettings st;
    st.overlay(load_config(config_path));

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Cohort raw = load_csv(data_path, st.schema());
    if (ckpt.params.n_features != static_cast<int>(raw.features.size())) {
        throw std::runtime_error("eval: checkpoint expects " +
                                 std::to_string(ckpt.params.n_features) + " features, data has " +
                                 std::to_string(raw.features.size()));
    }
    Cohort cohort = ckpt.norm ? apply_normalization(raw, *ckpt.norm, st.schema()) : raw;

    const fs::path out(out_dir);
    fs::create_directories(out);
    refuse_overwrite(out / "eval.json", force);

    EvalReport rep = evaluate_model(cohort, all_indices(cohort), ckpt.params, st.forward());
    write_text(out / "eval.json", rep.to_json());
    write_text(out / "eval.txt", rep.to_table());

    json resolved = st.to_json();
    resolved["command"] = "eval";
    resolved["data"] = data_path;
    resolved["checkpoint"] = ckpt_path;
    write_resolved_config(out, resolved);
    return 0;
}

// --------------------------------------------------------------- impute ---

int cmd_impute(const std::string& data_path, const std::string& ckpt_path,
               const std::string& out_path, const std::string& config_path, bool force) {
    PipelineSettings st;
    st.overlay(load_config(config_path));

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Cohort raw = load_csv(data_path, st.schema());
    if (ckpt.params.n_features != static_cast<int>(raw.features.size())) {
        throw std::runtime_error("impute: checkpoint/data feature count mismatch");
    }
    Cohort cohort = ckpt.norm ? apply_normalization(raw, *ckpt.norm, st.schema()) : raw;

    const fs::path out(out_path);
    refuse_overwrite(out, force);

    ForwardConfig fwd = st.forward();
    fwd.norm.use_running = false;  // layer-style per-sample statistics at inference
    fwd.norm.update_running = false;

    // Observed cells copy the raw input bit-exactly; only missing cells take
    // the (denormalized) decoder estimate.
    Cohort filled = raw;
    for (size_t i = 0; i < cohort.sequences.size(); ++i) {
        const Sequence& seq = cohort.sequences[i];
        Tape t;
        t.set_grad_enabled(false);
        ForwardTrace trace = forward_sequence(t, seq, ckpt.params, fwd);
        Sequence& dst = filled.sequences[i];
        for (int v = 0; v < seq.visits(); ++v) {
            const Matrix& merged = t.val(trace.merged[v]);
            for (int f = 0; f < seq.feature_count(); ++f) {
                if (seq.mask(v, f) != 0.0) continue;
                double y = merged(f, 0);
                if (ckpt.norm) {
                    y = max_divide_features()[f]
                            ? y * ckpt.norm->hi[f]
                            : ckpt.norm->lo[f] + y * (ckpt.norm->hi[f] - ckpt.norm->lo[f]);
                }
                dst.features(v, f) = y;
                dst.mask(v, f) = 1.0;
            }
        }
    }
    write_csv(out_path, filled);

    json resolved = st.to_json();
    resolved["command"] = "impute";
    resolved["data"] = data_path;
    resolved["checkpoint"] = ckpt_path;
    resolved["out"] = out_path;
    write_resolved_config(out.has_parent_path() ? out.parent_path() : fs::path("."), resolved);
    return 0;
}

// ------------------------------------------------------------- forecast ---

int cmd_forecast(const std::string& data_path, const std::string& ckpt_path,
                 const std::string& out_path, const std::string& config_path, double horizon,
                 double grid, bool force) {
    if (!(grid > 0.0)) throw std::runtime_error("forecast: grid spacing must be positive");
    if (horizon < 0.0) throw std::runtime_error("forecast: horizon must be nonnegative");

    PipelineSettings st;
    st.overlay(load_config(config_path));

    Checkpoint ckpt = load_checkpoint(ckpt_path);
    Cohort raw = load_csv(data_path, st.schema());
    if (ckpt.params.n_features != static_cast<int>(raw.features.size())) {
        throw std::runtime_error("forecast: checkpoint/data feature count mismatch");
    }
    Cohort cohort = ckpt.norm ? apply_normalization(raw, *ckpt.norm, st.schema()) : raw;

    const fs::path out(out_path);
    refuse_overwrite(out, force);

    std::ofstream os(out_path);
    if (!os) throw std::runtime_error("forecast: cannot open '" + out_path + "'");
    os << "subject_id,months";
    for (const auto& f : feature_names()) os << "," << f;
    for (const auto& k : class_names()) os << ",prob_" << k;
    os << "\n";
    char buf[40];
    auto put = [&](double v) {
        std::snprintf(buf, sizeof(buf), ",%.17g", v);
        os << buf;
    };
    for (const Sequence& seq : cohort.sequences) {
        auto points = forecast_sequence(seq, ckpt.params, st.forward(), horizon, grid);
        for (const auto& pt : points) {
            os << seq.subject_id;
            put(pt.month);
            for (int f = 0; f < static_cast<int>(pt.features.size()); ++f) {
                double y = pt.features[f];
                if (ckpt.norm) {
                    y = max_divide_features()[f]
                            ? y * ckpt.norm->hi[f]
                            : ckpt.norm->lo[f] + y * (ckpt.norm->hi[f] - ckpt.norm->lo[f]);
                }
                put(y);
            }
            for (double p : pt.probs) put(p);
            os << "\n";
        }
    }
    os.close();

    json resolved = st.to_json();
    resolved["command"] = "forecast";
    resolved["data"] = data_path;
    resolved["checkpoint"] = ckpt_path;
    resolved["horizon_months"] = horizon;
    resolved["grid_months"] = grid;
    resolved["out"] = out_path;
    write_resolved_config(out.has_parent_path() ? out.parent_path() : fs::path("."), resolved);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Geometric sequence modeling over Cholesky-space SPD trajectories"};
    app.require_subcommand(1);

    std::string config_path, data_path, ckpt_path, out_path;
    int64_t seed_flag = -1;
    int folds = 0;
    double horizon = 24.0, grid = 6.0;
    bool force = false;

    auto* synth = app.add_subcommand("synth", "Generate a synthetic cohort CSV");
    synth->add_option("--config", config_path, "JSON config file");
    synth->add_option("--out", out_path, "Output CSV path")->required();
    synth->add_option("--seed", seed_flag, "RNG seed (overrides config)");
    synth->add_flag("--force", force, "Overwrite existing outputs");

    auto* tr = app.add_subcommand("train", "Train a model on a cohort CSV");
    tr->add_option("--data", data_path, "Cohort CSV")->required();
    tr->add_option("--config", config_path, "JSON config file");
    tr->add_option("--out", out_path, "Output directory")->required();
    tr->add_option("--seed", seed_flag, "RNG seed (overrides config)");
    tr->add_option("--folds", folds, "Cross-validation folds (0 = train on all)");
    tr->add_flag("--force", force, "Overwrite existing outputs");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a cohort CSV");
    ev->add_option("--data", data_path, "Cohort CSV")->required();
    ev->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    ev->add_option("--config", config_path, "JSON config file");
    ev->add_option("--out", out_path, "Output directory")->required();
    ev->add_flag("--force", force, "Overwrite existing outputs");

    auto* im = app.add_subcommand("impute", "Fill missing entries of a cohort CSV");
    im->add_option("--data", data_path, "Cohort CSV")->required();
    im->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    im->add_option("--config", config_path, "JSON config file");
    im->add_option("--out", out_path, "Output CSV path")->required();
    im->add_flag("--force", force, "Overwrite existing outputs");

    auto* fc = app.add_subcommand("forecast", "Roll the model forward past the last visit");
    fc->add_option("--data", data_path, "Cohort CSV")->required();
    fc->add_option("--checkpoint", ckpt_path, "Checkpoint file")->required();
    fc->add_option("--config", config_path, "JSON config file");
    fc->add_option("--out", out_path, "Output CSV path")->required();
    fc->add_option("--horizon", horizon, "Forecast horizon in months");
    fc->add_option("--grid", grid, "Grid spacing in months (default 6)");
    fc->add_flag("--force", force, "Overwrite existing outputs");

    CLI11_PARSE(app, argc, argv);

    try {
        if (synth->parsed()) return cmd_synth(config_path, out_path, seed_flag, force);
        if (tr->parsed()) return cmd_train(data_path, config_path, out_path, seed_flag, folds,
                                           force);
        if (ev->parsed()) return cmd_eval(data_path, ckpt_path, out_path, config_path, force);
        if (im->parsed()) return cmd_impute(data_path, ckpt_path, out_path, config_path, force);
        if (fc->parsed()) return cmd_forecast(data_path, ckpt_path, out_path, config_path,
                                              horizon, grid, force);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 1;
}
