#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "cholseq/checkpoint.hpp"
#include "cholseq/model.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace cholseq;

namespace {

const std::string kCli = CHOLSEQ_CLI_PATH;

/// Scratch directory shared by the whole suite; recreated once per run.
const fs::path& work_dir() {
    static const fs::path dir = [] {
        fs::path d = fs::temp_directory_path() / "cholseq-cli-test";
        fs::remove_all(d);
        fs::create_directories(d);
        return d;
    }();
    return dir;
}

int run(const std::string& args, const fs::path& stderr_to = {}) {
    std::string cmd = kCli + " " + args;
    if (!stderr_to.empty()) {
        cmd += " 2>" + stderr_to.string();
    } else {
        cmd += " 2>/dev/null";
    }
    const int status = std::system(cmd.c_str());
    return status < 0 ? status : WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream is(p, std::ios::binary);
    REQUIRE(is.good());
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

void spit(const fs::path& p, const std::string& content) {
    std::ofstream os(p);
    os << content;
}

std::string first_line(const std::string& text) {
    return text.substr(0, text.find('\n'));
}

/// Synthesizes a small cohort once and trains a tiny model on it; reused by
/// the eval/impute/forecast cases.
struct Fixture {
    fs::path data = work_dir() / "cohort.csv";
    fs::path model_dir = work_dir() / "run";
    fs::path cfg = work_dir() / "train.json";

    Fixture() {
        json synth{{"n_subjects", 20}, {"n_visits", 5}, {"missing_rate", 0.2}, {"seed", 9}};
        spit(work_dir() / "synth.json", synth.dump());
        REQUIRE(run("synth --config " + (work_dir() / "synth.json").string() + " --out " +
                    data.string() + " --force") == 0);
        json train{{"epochs", 3},      {"batch_size", 8},   {"dim", 4},
                   {"encoder_hidden", 4}, {"ode_hidden", 8}, {"seed", 3}};
        spit(cfg, train.dump());
        REQUIRE(run("train --data " + data.string() + " --config " + cfg.string() + " --out " +
                    model_dir.string() + " --force") == 0);
    }

    fs::path ckpt() const { return model_dir / "model.ckpt"; }
};

const Fixture& fixture() {
    static Fixture f;
    return f;
}

}  // namespace

TEST_CASE("synth writes the documented schema deterministically") {
    const fs::path a = work_dir() / "a.csv";
    const fs::path b = work_dir() / "b.csv";
    CHECK(run("synth --out " + a.string() + " --seed 5 --force") == 0);
    CHECK(run("synth --out " + b.string() + " --seed 5 --force") == 0);

    const std::string ca = slurp(a);
    CHECK(first_line(ca) ==
          "subject_id,months,entorhinal,hippocampus,fusiform,midtemporal,ventricles,"
          "wholebrain,mmse,adas11,adas13,label");
    CHECK(ca == slurp(b));

    // A different seed changes the bytes.
    CHECK(run("synth --out " + b.string() + " --seed 6 --force") == 0);
    CHECK(ca != slurp(b));

    // The resolved config sits next to the output and parses.
    auto resolved = json::parse(slurp(work_dir() / "config.resolved.json"));
    CHECK(resolved["command"] == "synth");
    CHECK(resolved["seed"] == 6);
}

TEST_CASE("synth rejects a non-positive subject count") {
    spit(work_dir() / "bad.json", R"({"n_subjects": 0})");
    const fs::path err = work_dir() / "synth.err";
    CHECK(run("synth --config " + (work_dir() / "bad.json").string() + " --out " +
              (work_dir() / "bad.csv").string() + " --force", err) != 0);
    CHECK(slurp(err).find("n_subjects") != std::string::npos);
}

TEST_CASE("existing outputs are refused without --force") {
    const fs::path a = work_dir() / "keep.csv";
    CHECK(run("synth --out " + a.string() + " --seed 1") == 0);
    const fs::path err = work_dir() / "keep.err";
    CHECK(run("synth --out " + a.string() + " --seed 1", err) != 0);
    CHECK(slurp(err).find("--force") != std::string::npos);
    CHECK(run("synth --out " + a.string() + " --seed 1 --force") == 0);
}

TEST_CASE("train produces a loss curve, checkpoint, and resolved config") {
    const Fixture& f = fixture();
    const std::string loss = slurp(f.model_dir / "loss.csv");
    CHECK(first_line(loss) == "epoch,l_estim,l_pred,penalty,total");
    CHECK(std::count(loss.begin(), loss.end(), '\n') == 4);  // header + 3 epochs
    CHECK(fs::exists(f.ckpt()));
    auto resolved = json::parse(slurp(f.model_dir / "config.resolved.json"));
    CHECK(resolved["epochs"] == 3);
    CHECK(resolved["command"] == "train");
}

TEST_CASE("training twice with one seed gives byte-identical checkpoints") {
    const Fixture& f = fixture();
    const fs::path again = work_dir() / "run2";
    REQUIRE(run("train --data " + f.data.string() + " --config " + f.cfg.string() + " --out " +
                again.string() + " --force") == 0);
    CHECK(slurp(f.ckpt()) == slurp(again / "model.ckpt"));
    CHECK(slurp(f.model_dir / "loss.csv") == slurp(again / "loss.csv"));
}

TEST_CASE("eval emits parseable JSON with metrics in range") {
    const Fixture& f = fixture();
    const fs::path out = work_dir() / "eval";
    REQUIRE(run("eval --data " + f.data.string() + " --checkpoint " + f.ckpt().string() +
                " --out " + out.string() + " --force") == 0);
    auto rep = json::parse(slurp(out / "eval.json"));
    const double mauc = rep["mauc"].get<double>();
    CHECK(mauc >= 0.0);
    CHECK(mauc <= 1.0);
    CHECK(rep["mape"].contains("mmse"));
    CHECK(rep["visits_evaluated"].get<long>() > 0);
    CHECK(slurp(out / "eval.txt").find("mauc") != std::string::npos);
}

TEST_CASE("a missing checkpoint fails with a clear error") {
    const Fixture& f = fixture();
    const fs::path err = work_dir() / "missing.err";
    CHECK(run("eval --data " + f.data.string() + " --checkpoint " +
              (work_dir() / "nope.ckpt").string() + " --out " + (work_dir() / "evx").string(),
              err) != 0);
    CHECK(slurp(err).find("error:") != std::string::npos);
}

TEST_CASE("imputing a fully observed cohort is the identity") {
    const Fixture& f = fixture();
    const fs::path full = work_dir() / "full.csv";
    spit(work_dir() / "full.json",
         R"({"n_subjects": 6, "n_visits": 4, "missing_rate": 0.0, "visit_dropout": 0.0, "seed": 2})");
    REQUIRE(run("synth --config " + (work_dir() / "full.json").string() + " --out " +
                full.string() + " --force") == 0);
    const fs::path out = work_dir() / "full.imputed.csv";
    REQUIRE(run("impute --data " + full.string() + " --checkpoint " + f.ckpt().string() +
                " --out " + out.string() + " --force") == 0);
    CHECK(slurp(out) == slurp(full));
}

TEST_CASE("imputed output keeps observed cells and fills every gap") {
    const Fixture& f = fixture();
    const fs::path out = work_dir() / "imputed.csv";
    REQUIRE(run("impute --data " + f.data.string() + " --checkpoint " + f.ckpt().string() +
                " --out " + out.string() + " --force") == 0);

    SchemaConfig sc;
    Cohort before = load_csv(f.data.string(), sc);
    Cohort after = load_csv(out.string(), sc);
    REQUIRE(before.sequences.size() == after.sequences.size());
    for (size_t i = 0; i < before.sequences.size(); ++i) {
        const Sequence& b = before.sequences[i];
        const Sequence& a = after.sequences[i];
        REQUIRE(a.visits() == b.visits());
        for (int t = 0; t < b.visits(); ++t) {
            for (int c = 0; c < b.feature_count(); ++c) {
                CHECK(a.mask(t, c) == 1.0);  // no gaps remain
                if (b.mask(t, c) != 0.0) {
                    CHECK(a.features(t, c) == b.features(t, c));  // bit-exact pass-through
                }
            }
        }
    }
}

TEST_CASE("forecast horizon zero emits only the header") {
    const Fixture& f = fixture();
    const fs::path out = work_dir() / "fc0.csv";
    REQUIRE(run("forecast --data " + f.data.string() + " --checkpoint " + f.ckpt().string() +
                " --out " + out.string() + " --horizon 0 --force") == 0);
    const std::string text = slurp(out);
    CHECK(first_line(text) ==
          "subject_id,months,entorhinal,hippocampus,fusiform,midtemporal,ventricles,"
          "wholebrain,mmse,adas11,adas13,prob_CN,prob_MCI,prob_AD");
    CHECK(std::count(text.begin(), text.end(), '\n') == 1);
}

TEST_CASE("forecast CSV matches the library roll-out bit-exactly") {
    const Fixture& f = fixture();
    const fs::path out = work_dir() / "fc.csv";
    REQUIRE(run("forecast --data " + f.data.string() + " --checkpoint " + f.ckpt().string() +
                " --out " + out.string() + " --horizon 12 --grid 6 --force") == 0);

    Checkpoint ckpt = load_checkpoint(f.ckpt().string());
    SchemaConfig sc;
    Cohort raw = load_csv(f.data.string(), sc);
    REQUIRE(ckpt.norm.has_value());
    Cohort cohort = apply_normalization(raw, *ckpt.norm, sc);

    ForwardConfig fwd;  // CLI defaults: euler, 4 steps/unit, fixed rho 0.1
    std::ifstream is(out);
    std::string line;
    std::getline(is, line);  // header
    long rows = 0;
    for (const Sequence& seq : cohort.sequences) {
        auto pts = forecast_sequence(seq, ckpt.params, fwd, 12.0, 6.0);
        for (const auto& pt : pts) {
            REQUIRE(std::getline(is, line));
            ++rows;
            std::vector<std::string> cells;
            std::stringstream ss(line);
            std::string cell;
            while (std::getline(ss, cell, ',')) cells.push_back(cell);
            REQUIRE(cells.size() == 2 + pt.features.size() + pt.probs.size());
            CHECK(cells[0] == seq.subject_id);
            CHECK(std::stod(cells[1]) == pt.month);
            for (size_t c = 0; c < pt.features.size(); ++c) {
                double y = pt.features[c];
                y = max_divide_features()[c]
                        ? y * ckpt.norm->hi[c]
                        : ckpt.norm->lo[c] + y * (ckpt.norm->hi[c] - ckpt.norm->lo[c]);
                CHECK(std::stod(cells[2 + c]) == y);
            }
            for (size_t k = 0; k < pt.probs.size(); ++k) {
                CHECK(std::stod(cells[2 + pt.features.size() + k]) == pt.probs[k]);
            }
        }
    }
    CHECK(rows == static_cast<long>(cohort.sequences.size()) * 2);
    CHECK(!std::getline(is, line));  // no extra rows
}

TEST_CASE("checkpoints round trip bit-exactly") {
    Rng rng = make_rng(41);
    ModelParams p = ModelParams::init(9, 3, 4, 8, 3, rng);
    NormStats norm;
    for (int f = 0; f < 9; ++f) {
        norm.lo.push_back(0.1 * f);
        norm.hi.push_back(1.0 + 0.3 * f);
    }
    const fs::path path = work_dir() / "roundtrip.ckpt";
    save_checkpoint(path.string(), p, norm);
    Checkpoint back = load_checkpoint(path.string());

    CHECK(back.params.dim == 3);
    CHECK(back.params.n_features == 9);
    std::vector<Param*> orig = p.params();
    std::vector<Param*> loaded = back.params.params();
    REQUIRE(orig.size() == loaded.size());
    for (size_t i = 0; i < orig.size(); ++i) {
        CHECK(orig[i]->id == loaded[i]->id);
        CHECK(orig[i]->value.data == loaded[i]->value.data);
    }
    CHECK(back.params.encoder.run_var1.data == p.encoder.run_var1.data);
    REQUIRE(back.norm.has_value());
    CHECK(back.norm->lo == norm.lo);
    CHECK(back.norm->hi == norm.hi);

    // Saving the loaded model reproduces the same bytes.
    const fs::path path2 = work_dir() / "roundtrip2.ckpt";
    save_checkpoint(path2.string(), back.params, back.norm);
    CHECK(slurp(path) == slurp(path2));

    // Truncated files are rejected.
    const std::string bytes = slurp(path);
    spit(work_dir() / "trunc.ckpt", bytes.substr(0, bytes.size() / 2));
    CHECK_THROWS_AS(load_checkpoint((work_dir() / "trunc.ckpt").string()), std::runtime_error);
    CHECK_THROWS_AS(load_checkpoint((work_dir() / "absent.ckpt").string()), std::runtime_error);
}
