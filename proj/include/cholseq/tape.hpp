#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cholseq/matrix.hpp"

namespace cholseq {

/// Learnable parameter. Gradients accumulate additively across backward
/// passes; callers reset them with zero_grad between optimizer steps.
struct Param {
    std::string id;
    Matrix value;
    Matrix grad;

    Param() = default;
    Param(std::string name, Matrix v)
        : id(std::move(name)), value(std::move(v)), grad(value.rows, value.cols) {}

    void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

/// Handle to a node on a Tape.
struct Value {
    int i = -1;
};

/// Define-by-run reverse-mode differentiation record. A tape is rebuilt per
/// training step and confined to one thread during a forward/backward pass.
class Tape {
public:
    Value constant(Matrix m);
    Value constant_scalar(double v);
    Value param(Param& p);

    const Matrix& val(Value v) const { return nodes_[v.i].val; }
    const Matrix& grad_of(Value v) const { return nodes_[v.i].grad; }

    // Elementwise / structural ops.
    Value add(Value a, Value b);
    Value sub(Value a, Value b);
    Value mul(Value a, Value b);   // elementwise
    Value div(Value a, Value b);   // elementwise
    Value matmul(Value a, Value b);
    Value transpose(Value a);
    Value exp(Value a);
    Value log(Value a);
    Value sigmoid(Value a);
    Value tanh(Value a);
    Value softplus(Value a);
    Value relu(Value a);
    Value leaky_relu(Value a, double slope);
    Value sum(Value a);   // -> 1x1
    Value mean(Value a);  // -> 1x1
    Value square(Value a);
    Value sqrt(Value a);
    Value softmax(Value a);  // column vector
    Value pow_const(Value a, double e);
    Value clamp_min(Value a, double lo);
    Value masked_select(Value a, const Matrix& mask);
    Value lower(Value a);         // keep lower triangle including diagonal
    Value strict_lower(Value a);  // keep strictly-lower triangle
    Value diag_vec(Value a);      // d x d -> d x 1
    Value make_diag(Value v);     // d x 1 -> d x d
    Value vech(Value a);          // lower triangle incl. diagonal, row-major -> n x 1
    Value unvech(Value v, int d);
    Value row_mean(Value a);               // r x c -> r x 1
    Value add_colvec(Value m, Value v);    // broadcast v over columns
    Value sub_colvec(Value m, Value v);
    Value mul_colvec(Value m, Value v);
    Value div_colvec(Value m, Value v);
    Value smul(Value a, double c);
    Value sadd(Value a, double c);
    Value scale(Value s, Value m);  // 1x1 scalar times matrix
    Value concat_rows(Value a, Value b);
    Value l2_norm(Value a);  // -> 1x1, zero-safe at the origin
    /// Differentiable Cholesky factor; the input is symmetrized before
    /// factorization so finite differences agree with the analytic rule.
    Value cholesky(Value a);

    /// Reverse pass from a 1x1 root. Each node at or below the root is
    /// visited exactly once; Param leaves accumulate into Param::grad.
    void backward(Value root);

    size_t size() const { return nodes_.size(); }
    size_t backward_visits() const { return backward_visits_; }

    void set_grad_enabled(bool on) { grad_enabled_ = on; }
    bool grad_enabled() const { return grad_enabled_; }

private:
    using BackFn = std::function<void(Tape&, const Matrix& gout)>;

    struct Node {
        Matrix val;
        Matrix grad;
        BackFn back;
        Param* leaf = nullptr;
    };

    Value push(Matrix out, BackFn back);
    void accumulate(int i, const Matrix& d) { add_inplace(nodes_[i].grad, d); }

    std::vector<Node> nodes_;
    bool grad_enabled_ = true;
    size_t backward_visits_ = 0;
};

}  // namespace cholseq
