#include "cholseq/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace cholseq {

void Adam::step(const std::vector<Param*>& params) {
    ++step_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
    for (Param* p : params) {
        if (!all_finite(p->grad)) {
            throw std::runtime_error("adam: non-finite gradient for param '" + p->id + "'");
        }
        auto it = state_.find(p->id);
        if (it == state_.end()) {
            it = state_.emplace(p->id, Moments{Matrix(p->value.rows, p->value.cols),
                                               Matrix(p->value.rows, p->value.cols)}).first;
        }
        Moments& st = it->second;
        for (size_t k = 0; k < p->value.size(); ++k) {
            const double g = p->grad.data[k] + cfg_.weight_decay * p->value.data[k];
            st.m.data[k] = cfg_.beta1 * st.m.data[k] + (1.0 - cfg_.beta1) * g;
            st.v.data[k] = cfg_.beta2 * st.v.data[k] + (1.0 - cfg_.beta2) * g * g;
            const double mhat = st.m.data[k] / bc1;
            const double vhat = st.v.data[k] / bc2;
            p->value.data[k] -= cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
        }
    }
}

void Adam::zero_grads(const std::vector<Param*>& params) {
    for (Param* p : params) p->zero_grad();
}

}  // namespace cholseq
