#pragma once

#include <map>
#include <string>
#include <vector>

#include "cholseq/matrix.hpp"

namespace cholseq {

struct EvalReport {
    double mauc = 0.0;
    double recall = 0.0;
    double precision = 0.0;
    std::map<std::string, double> mape;  // per cognitive score
    std::map<std::string, double> r2;
    long visits_evaluated = 0;

    std::string to_json() const;
    std::string to_table() const;
};

/// Hand-and-Till multiclass AUC over class-probability rows. Class pairs
/// with no samples on one side are skipped with a warning on stderr; ties
/// in the rank statistic count as one half.
double mauc(const Matrix& probs, const std::vector<int>& labels);

/// Macro-averaged recall and precision over the classes present in labels.
std::pair<double, double> recall_precision(const std::vector<int>& preds,
                                           const std::vector<int>& labels, int n_classes);

/// Mean absolute percentage error over entries where mask is nonzero.
double mape(const std::vector<double>& pred, const std::vector<double>& target,
            const std::vector<double>& mask);

/// Coefficient of determination over entries where mask is nonzero.
double r2(const std::vector<double>& pred, const std::vector<double>& target,
          const std::vector<double>& mask);

}  // namespace cholseq
