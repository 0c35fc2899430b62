#include "cholseq/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>
#include <stdexcept>

namespace cholseq {

namespace {

/// A(i|j): probability that a random class-i sample receives a higher
/// class-i score than a random class-j sample, ties at one half. Computed
/// from the rank-sum of class-i samples in the pooled ordering by score i.
double auc_one_vs_other(const Matrix& probs, const std::vector<int>& labels, int i, int j) {
    std::vector<double> scores;
    std::vector<int> is_i;
    for (size_t n = 0; n < labels.size(); ++n) {
        if (labels[n] != i && labels[n] != j) continue;
        scores.push_back(probs(static_cast<int>(n), i));
        is_i.push_back(labels[n] == i ? 1 : 0);
    }
    const long ni = std::accumulate(is_i.begin(), is_i.end(), 0L);
    const long nj = static_cast<long>(is_i.size()) - ni;
    if (ni == 0 || nj == 0) return std::numeric_limits<double>::quiet_NaN();

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // Mid-ranks over tie groups give the ties-as-half convention for free.
    double rank_sum_i = 0.0;
    size_t pos = 0;
    while (pos < order.size()) {
        size_t end = pos;
        while (end < order.size() && scores[order[end]] == scores[order[pos]]) ++end;
        const double mid_rank = 0.5 * (static_cast<double>(pos + 1) + static_cast<double>(end));
        for (size_t k = pos; k < end; ++k) {
            if (is_i[order[k]]) rank_sum_i += mid_rank;
        }
        pos = end;
    }
    return (rank_sum_i - 0.5 * ni * (ni + 1)) / (static_cast<double>(ni) * nj);
}

}  // namespace

double mauc(const Matrix& probs, const std::vector<int>& labels) {
    if (labels.empty() || probs.rows != static_cast<int>(labels.size())) {
        throw std::invalid_argument("mauc: empty input or row/label mismatch");
    }
    const int k = probs.cols;
    double total = 0.0;
    int pairs = 0;
    for (int i = 0; i < k; ++i) {
        for (int j = i + 1; j < k; ++j) {
            const double a_ij = auc_one_vs_other(probs, labels, i, j);
            const double a_ji = auc_one_vs_other(probs, labels, j, i);
            if (std::isnan(a_ij) || std::isnan(a_ji)) {
                std::fprintf(stderr, "mauc: skipping class pair (%d,%d) with no samples\n", i, j);
                continue;
            }
            total += 0.5 * (a_ij + a_ji);
            ++pairs;
        }
    }
    if (pairs == 0) throw std::invalid_argument("mauc: no evaluable class pair");
    return total / pairs;
}

std::pair<double, double> recall_precision(const std::vector<int>& preds,
                                           const std::vector<int>& labels, int n_classes) {
    if (labels.empty() || preds.size() != labels.size()) {
        throw std::invalid_argument("recall_precision: empty input or length mismatch");
    }
    std::vector<long> tp(n_classes, 0), fn(n_classes, 0), fp(n_classes, 0);
    for (size_t n = 0; n < labels.size(); ++n) {
        if (preds[n] == labels[n]) {
            ++tp[labels[n]];
        } else {
            ++fn[labels[n]];
            ++fp[preds[n]];
        }
    }
    double recall_sum = 0.0, precision_sum = 0.0;
    int present = 0;
    for (int c = 0; c < n_classes; ++c) {
        const long support = tp[c] + fn[c];
        if (support == 0) continue;  // class absent from labels
        ++present;
        recall_sum += static_cast<double>(tp[c]) / support;
        const long predicted = tp[c] + fp[c];
        precision_sum += predicted > 0 ? static_cast<double>(tp[c]) / predicted : 0.0;
    }
    if (present == 0) throw std::invalid_argument("recall_precision: no class present");
    return {recall_sum / present, precision_sum / present};
}

double mape(const std::vector<double>& pred, const std::vector<double>& target,
            const std::vector<double>& mask) {
    if (pred.size() != target.size() || pred.size() != mask.size()) {
        throw std::invalid_argument("mape: length mismatch");
    }
    constexpr double kEps = 1e-8;
    double sum = 0.0;
    long n = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (mask[i] == 0.0) continue;
        sum += std::fabs(pred[i] - target[i]) / (std::fabs(target[i]) + kEps);
        ++n;
    }
    if (n == 0) throw std::invalid_argument("mape: zero observed entries");
    return sum / n;
}

double r2(const std::vector<double>& pred, const std::vector<double>& target,
          const std::vector<double>& mask) {
    if (pred.size() != target.size() || pred.size() != mask.size()) {
        throw std::invalid_argument("r2: length mismatch");
    }
    double mean = 0.0;
    long n = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (mask[i] == 0.0) continue;
        mean += target[i];
        ++n;
    }
    if (n == 0) throw std::invalid_argument("r2: zero observed entries");
    mean /= n;
    double ss_res = 0.0, ss_tot = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (mask[i] == 0.0) continue;
        ss_res += (pred[i] - target[i]) * (pred[i] - target[i]);
        ss_tot += (target[i] - mean) * (target[i] - mean);
    }
    if (ss_tot == 0.0) return ss_res == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity();
    return 1.0 - ss_res / ss_tot;
}

std::string EvalReport::to_json() const {
    std::ostringstream os;
    os.precision(17);
    os << "{\n";
    os << "  \"mauc\": " << mauc << ",\n";
    os << "  \"recall\": " << recall << ",\n";
    os << "  \"precision\": " << precision << ",\n";
    os << "  \"visits_evaluated\": " << visits_evaluated;
    for (const auto& [name, values] : {std::pair{"mape", &this->mape}, std::pair{"r2", &this->r2}}) {
        os << ",\n  \"" << name << "\": {";
        bool first = true;
        for (const auto& [score, v] : *values) {
            os << (first ? "" : ", ") << "\"" << score << "\": " << v;
            first = false;
        }
        os << "}";
    }
    os << "\n}\n";
    return os.str();
}

std::string EvalReport::to_table() const {
    std::ostringstream os;
    char line[128];
    std::snprintf(line, sizeof(line), "%-14s %10s\n", "metric", "value");
    os << line;
    auto row = [&](const std::string& name, double v) {
        std::snprintf(line, sizeof(line), "%-14s %10.4f\n", name.c_str(), v);
        os << line;
    };
    row("mauc", mauc);
    row("recall", recall);
    row("precision", precision);
    for (const auto& [score, v] : mape) row("mape:" + score, v);
    for (const auto& [score, v] : r2) row("r2:" + score, v);
    std::snprintf(line, sizeof(line), "%-14s %10ld\n", "visits", visits_evaluated);
    os << line;
    return os.str();
}

}  // namespace cholseq
