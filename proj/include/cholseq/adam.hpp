#pragma once

#include <unordered_map>
#include <vector>

#include "cholseq/tape.hpp"

namespace cholseq {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;  // applied as an additive l2 gradient term
};

/// Standard Adam recurrence with per-parameter first/second moment state,
/// keyed by parameter id. Throws on non-finite gradients, naming the param.
class Adam {
public:
    explicit Adam(AdamConfig cfg) : cfg_(cfg) {}

    void step(const std::vector<Param*>& params);
    static void zero_grads(const std::vector<Param*>& params);

    long step_count() const { return step_; }

private:
    struct Moments {
        Matrix m;
        Matrix v;
    };

    AdamConfig cfg_;
    long step_ = 0;
    std::unordered_map<std::string, Moments> state_;
};

}  // namespace cholseq
