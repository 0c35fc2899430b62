#include "cholseq/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace cholseq {

namespace {

Matrix glorot(int rows, int cols, Rng& rng) {
    const double lim = std::sqrt(6.0 / (rows + cols));
    Matrix m(rows, cols);
    for (size_t k = 0; k < m.size(); ++k) m.data[k] = rng.uniform(-lim, lim);
    return m;
}

}  // namespace

ModelParams ModelParams::init(int n_features, int dim, int encoder_hidden, int ode_hidden,
                              int n_classes, Rng& rng) {
    ModelParams p;
    p.dim = dim;
    p.n_classes = n_classes;
    p.n_features = n_features;
    p.encoder = EncoderParams::init(encoder_hidden, dim, rng);
    p.rgru = RGRUParams::init(dim, rng);
    p.ode = VectorFieldParams::init(dim, ode_hidden, rng);
    p.decoder = DecoderParams::init(n_features, dim, rng);
    const int flat = dim * (dim + 1) / 2;
    p.wy = Param("cls.w", glorot(n_classes, flat, rng));
    p.by = Param("cls.b", Matrix(n_classes, 1));
    return p;
}

std::vector<Param*> ModelParams::params() {
    std::vector<Param*> out;
    auto append = [&](std::vector<Param*> v) { out.insert(out.end(), v.begin(), v.end()); };
    append(encoder.params());
    append(rgru.params());
    append(ode.params());
    append(decoder.params());
    out.push_back(&wy);
    out.push_back(&by);
    return out;
}

ForwardTrace forward_sequence(Tape& t, const Sequence& seq, ModelParams& p,
                              const ForwardConfig& cfg) {
    const int tcount = seq.visits();
    if (tcount < 1) throw std::invalid_argument("forward_sequence: empty sequence");
    for (int i = 1; i < tcount; ++i) {
        if (!(seq.times[i] > seq.times[i - 1])) {
            throw std::invalid_argument("forward_sequence: non-increasing timestamps at visit " +
                                        std::to_string(i));
        }
    }

    ForwardTrace trace;
    const int d = p.dim;
    Value identity = t.constant(Matrix::identity(d));
    Value h = identity;

    for (int i = 0; i < tcount; ++i) {
        const double t0 = i == 0 ? seq.times[0] : seq.times[i - 1];
        auto [evolved, tangent] = evolve_hidden(t, h, t0, seq.times[i], p.ode, cfg.solver);

        Value decoded = decode(t, tangent, p.decoder);

        // Merge: observed entries pass through bit-exactly.
        std::vector<double> srow = seq.feature_row(i);
        std::vector<double> mrow = seq.mask_row(i);
        Matrix m = Matrix::col(mrow);
        Matrix inv(m.rows, 1);
        for (int k = 0; k < m.rows; ++k) inv(k, 0) = 1.0 - m(k, 0);
        Value observed = t.constant(Matrix::col(zero_filled(srow, mrow)));
        Value merged = t.add(t.masked_select(observed, m), t.masked_select(decoded, inv));

        Value x = space_shift(t, merged, p.encoder, cfg.shrinkage, cfg.norm);
        h = rgru_step(t, x, evolved, p.rgru);

        Value logits = t.add(t.matmul(t.param(p.wy), t.vech(diff::log_map(t, identity, h))),
                             t.param(p.by));
        Value probs = t.softmax(logits);

        if (!all_finite(t.val(h)) || !all_finite(t.val(probs))) {
            throw std::runtime_error("forward_sequence: non-finite state at visit " +
                                     std::to_string(i));
        }
        trace.hidden.push_back(h);
        trace.tangent.push_back(tangent);
        trace.decoded.push_back(decoded);
        trace.merged.push_back(merged);
        trace.probs.push_back(probs);
    }
    return trace;
}

Value estimation_loss(Tape& t, const ForwardTrace& trace, const Sequence& seq) {
    Value acc = t.constant_scalar(0.0);
    for (int i = 1; i < seq.visits(); ++i) {
        std::vector<double> srow = seq.feature_row(i);
        std::vector<double> mrow = seq.mask_row(i);
        Value observed = t.constant(Matrix::col(zero_filled(srow, mrow)));
        Value diffv = t.masked_select(t.sub(observed, trace.decoded[i]), Matrix::col(mrow));
        acc = t.add(acc, t.sum(t.square(diffv)));
    }
    return acc;
}

Value focal_prediction_loss(Tape& t, const ForwardTrace& trace, const std::vector<int>& labels,
                            const LossConfig& cfg) {
    if (cfg.delta < 0.0) throw std::invalid_argument("focal loss: delta must be >= 0");
    Value acc = t.constant_scalar(0.0);
    for (size_t i = 0; i < trace.probs.size(); ++i) {
        if (labels[i] == kLabelUnknown) continue;
        const int k = t.val(trace.probs[i]).rows;
        if (labels[i] < 0 || labels[i] >= k) {
            throw std::invalid_argument("focal loss: label out of range at visit " +
                                        std::to_string(i));
        }
        Matrix onehot(k, 1);
        onehot(labels[i], 0) = 1.0;
        Value p_true = t.sum(t.masked_select(trace.probs[i], onehot));
        Value modulator = t.pow_const(t.sub(t.constant_scalar(1.0), p_true), cfg.delta);
        Value nll = t.smul(t.log(t.clamp_min(p_true, 1e-12)), -1.0);
        acc = t.add(acc, t.mul(modulator, nll));
    }
    return acc;
}

Value monotonicity_penalty(Tape& t, const ForwardTrace& trace, const LossConfig& cfg) {
    const int tcount = static_cast<int>(trace.merged.size());
    if (tcount < 2 || cfg.monotonic_mode == MonotonicMode::Off) return t.constant_scalar(0.0);

    switch (cfg.monotonic_mode) {
        case MonotonicMode::AsWritten: {
            // || sum_i tanh(k (s_i - s_{i-1})) ||_2, a smooth sgn surrogate.
            Value acc = t.smul(trace.merged[0], 0.0);
            for (int i = 1; i < tcount; ++i) {
                Value step = t.sub(trace.merged[i], trace.merged[i - 1]);
                acc = t.add(acc, t.tanh(t.smul(step, cfg.surrogate_k)));
            }
            return t.l2_norm(acc);
        }
        case MonotonicMode::DirectionalHinge: {
            const int c = t.val(trace.merged[0]).rows;
            if (static_cast<int>(cfg.direction.size()) != c) {
                throw std::invalid_argument("monotonicity penalty: direction length mismatch");
            }
            Value dir = t.constant(Matrix::col(cfg.direction));
            Value acc = t.constant_scalar(0.0);
            for (int i = 1; i < tcount; ++i) {
                Value against = t.mul(dir, t.sub(trace.merged[i - 1], trace.merged[i]));
                acc = t.add(acc, t.sum(t.relu(against)));
            }
            return acc;
        }
        default:
            throw std::invalid_argument("monotonicity penalty: unknown mode");
    }
}

std::vector<int> carried_labels(const Sequence& seq) {
    std::vector<int> out(seq.labels);
    int last = kLabelUnknown;
    for (auto& l : out) {
        if (l == kLabelUnknown) {
            l = last;
        } else {
            last = l;
        }
    }
    return out;
}

Value total_loss(Tape& t, const ForwardTrace& trace, const Sequence& seq,
                 const LossConfig& cfg) {
    const std::vector<int> labels = carried_labels(seq);
    long labeled = 0;
    for (int l : labels) labeled += l != kLabelUnknown ? 1 : 0;
    const long steps = std::max(1, seq.visits() - 1);

    Value e = t.smul(estimation_loss(t, trace, seq), cfg.lambda1 / steps);
    Value p = t.smul(focal_prediction_loss(t, trace, labels, cfg),
                     cfg.lambda2 / std::max(1L, labeled));
    Value m = t.smul(monotonicity_penalty(t, trace, cfg), cfg.lambda3 / steps);
    return t.add(t.add(e, p), m);
}

std::string TrainReport::to_csv() const {
    std::ostringstream os;
    os << "epoch,l_estim,l_pred,penalty,total\n";
    char buf[256];
    for (const auto& row : epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g\n", row.epoch, row.l_estim,
                      row.l_pred, row.penalty, row.total);
        os << buf;
    }
    return os.str();
}

TrainReport train(const Cohort& cohort, const std::vector<int>& train_idx, ModelParams& params,
                  const TrainConfig& cfg) {
    if (train_idx.empty()) throw std::invalid_argument("train: empty training set");
    if (cfg.batch_size < 1) throw std::invalid_argument("train: batch size must be >= 1");

    Adam opt(cfg.adam);
    Rng rng = make_rng(cfg.seed);
    std::vector<Param*> all = params.params();

    ForwardConfig fwd = cfg.forward;
    fwd.norm.use_running = false;
    fwd.norm.update_running = true;

    TrainReport report;
    std::vector<int> order(train_idx);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        rng.shuffle(order);
        EpochRow row;
        row.epoch = epoch;

        for (size_t start = 0, batch = 0; start < order.size();
             start += cfg.batch_size, ++batch) {
            const size_t stop = std::min(order.size(), start + cfg.batch_size);
            opt.zero_grads(all);
            for (size_t n = start; n < stop; ++n) {
                const Sequence& seq = cohort.sequences.at(order[n]);
                Tape t;
                ForwardTrace trace;
                Value loss;
                try {
                    trace = forward_sequence(t, seq, params, fwd);
                    loss = total_loss(t, trace, seq, cfg.loss);
                } catch (const std::exception& e) {
                    throw std::runtime_error("train: forward failed at epoch " +
                                             std::to_string(epoch) + " batch " +
                                             std::to_string(batch) + ": " + e.what());
                }
                const double total = t.val(loss)(0, 0);
                if (!std::isfinite(total)) {
                    throw std::runtime_error("train: non-finite loss at epoch " +
                                             std::to_string(epoch) + " batch " +
                                             std::to_string(batch));
                }
                t.backward(loss);

                // Per-sequence component values for the epoch report.
                t.set_grad_enabled(false);
                const std::vector<int> labels = carried_labels(seq);
                long labeled = 0;
                for (int l : labels) labeled += l != kLabelUnknown ? 1 : 0;
                const long steps = std::max(1, seq.visits() - 1);
                row.l_estim += t.val(estimation_loss(t, trace, seq))(0, 0) / steps;
                row.l_pred += t.val(focal_prediction_loss(t, trace, labels, cfg.loss))(0, 0) /
                              std::max(1L, labeled);
                row.penalty += t.val(monotonicity_penalty(t, trace, cfg.loss))(0, 0) / steps;
                row.total += total;
            }
            opt.step(all);
        }
        const double n = static_cast<double>(order.size());
        row.l_estim /= n;
        row.l_pred /= n;
        row.penalty /= n;
        row.total /= n;
        report.epochs.push_back(row);
    }
    return report;
}

EvalReport evaluate_model(const Cohort& cohort, const std::vector<int>& idx, ModelParams& params,
                          const ForwardConfig& cfg, bool last_visit_only) {
    ForwardConfig fwd = cfg;
    fwd.norm.use_running = false;  // layer-style per-sample statistics at inference
    fwd.norm.update_running = false;

    const auto& fnames = feature_names();
    const auto& cognitive = max_divide_features();

    std::vector<std::vector<double>> prob_rows;
    std::vector<int> labels;
    std::map<std::string, std::vector<double>> pred_by_score, target_by_score;
    long visits = 0;

    for (int i : idx) {
        const Sequence& seq = cohort.sequences.at(i);
        Tape t;
        t.set_grad_enabled(false);
        ForwardTrace trace = forward_sequence(t, seq, params, fwd);
        visits += seq.visits();

        const std::vector<int> carried = carried_labels(seq);
        for (int v = seq.visits() - 1; v >= 0; --v) {
            if (carried[v] == kLabelUnknown) continue;
            const Matrix& p = t.val(trace.probs[v]);
            std::vector<double> row(p.data.begin(), p.data.end());
            prob_rows.push_back(std::move(row));
            labels.push_back(carried[v]);
            if (last_visit_only) break;
        }

        const bool has_truth = seq.truth.size() > 0;
        for (int v = 1; v < seq.visits(); ++v) {
            const Matrix& dec = t.val(trace.decoded[v]);
            for (int f = 0; f < seq.feature_count(); ++f) {
                if (!cognitive[f]) continue;
                double target;
                if (has_truth && std::isfinite(seq.truth(v, f))) {
                    target = seq.truth(v, f);
                } else if (seq.mask(v, f) != 0.0) {
                    target = seq.features(v, f);
                } else {
                    continue;
                }
                pred_by_score[fnames[f]].push_back(dec(f, 0));
                target_by_score[fnames[f]].push_back(target);
            }
        }
    }

    EvalReport rep;
    rep.visits_evaluated = visits;
    if (!labels.empty()) {
        const int k = params.n_classes;
        Matrix probs(static_cast<int>(prob_rows.size()), k);
        std::vector<int> preds;
        for (size_t n = 0; n < prob_rows.size(); ++n) {
            int best = 0;
            for (int c = 0; c < k; ++c) {
                probs(static_cast<int>(n), c) = prob_rows[n][c];
                if (prob_rows[n][c] > prob_rows[n][best]) best = c;
            }
            preds.push_back(best);
        }
        rep.mauc = mauc(probs, labels);
        std::tie(rep.recall, rep.precision) = recall_precision(preds, labels, k);
    }
    for (const auto& [score, preds] : pred_by_score) {
        const auto& targets = target_by_score[score];
        std::vector<double> mask(preds.size(), 1.0);
        rep.mape[score] = mape(preds, targets, mask);
        rep.r2[score] = r2(preds, targets, mask);
    }
    return rep;
}

std::vector<ForecastPoint> forecast_sequence(const Sequence& seq, ModelParams& params,
                                             const ForwardConfig& cfg, double horizon_months,
                                             double grid_months) {
    if (!(grid_months > 0.0)) {
        throw std::invalid_argument("forecast: grid spacing must be positive");
    }
    if (horizon_months < 0.0) {
        throw std::invalid_argument("forecast: horizon must be nonnegative");
    }
    ForwardConfig fwd = cfg;
    fwd.norm.use_running = false;  // layer-style per-sample statistics at inference
    fwd.norm.update_running = false;

    // Replay the observed history, then extend with fully-missing visits.
    Sequence rolled = seq;
    std::vector<ForecastPoint> out;
    double month = seq.times.back() + grid_months;
    for (; month <= seq.times.back() + horizon_months + 1e-9; month += grid_months) {
        const int tcount = rolled.visits();
        Matrix feats(tcount + 1, rolled.feature_count());
        Matrix mask(tcount + 1, rolled.feature_count());
        for (int v = 0; v < tcount; ++v) {
            for (int f = 0; f < rolled.feature_count(); ++f) {
                feats(v, f) = rolled.features(v, f);
                mask(v, f) = rolled.mask(v, f);
            }
        }
        for (int f = 0; f < rolled.feature_count(); ++f) {
            feats(tcount, f) = std::numeric_limits<double>::quiet_NaN();
        }
        rolled.features = std::move(feats);
        rolled.mask = std::move(mask);
        rolled.times.push_back(month);
        rolled.labels.push_back(kLabelUnknown);
        if (!rolled.icv.empty()) rolled.icv.push_back(rolled.icv.back());
        if (rolled.truth.size() > 0) rolled.truth = Matrix();

        Tape step_tape;
        step_tape.set_grad_enabled(false);
        ForwardTrace trace = forward_sequence(step_tape, rolled, params, fwd);

        ForecastPoint pt;
        pt.month = month;
        const Matrix& dec = step_tape.val(trace.merged.back());
        const Matrix& pr = step_tape.val(trace.probs.back());
        pt.features.assign(dec.data.begin(), dec.data.end());
        pt.probs.assign(pr.data.begin(), pr.data.end());

        // Feed the decoded visit back as pseudo-observations for the next step.
        for (int f = 0; f < rolled.feature_count(); ++f) {
            rolled.features(rolled.visits() - 1, f) = dec(f, 0);
            rolled.mask(rolled.visits() - 1, f) = 1.0;
        }
        out.push_back(std::move(pt));
    }
    return out;
}

}  // namespace cholseq
