#include "cholseq/tape.hpp"

#include <cmath>

namespace cholseq {

namespace {

double stable_softplus(double x) {
    if (x > 30.0) return x;
    if (x < -30.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

double sigmoid_scalar(double x) {
    if (x >= 0.0) {
        const double z = std::exp(-x);
        return 1.0 / (1.0 + z);
    }
    const double z = std::exp(x);
    return z / (1.0 + z);
}

void require_positive(const char* op, const Matrix& a) {
    for (size_t k = 0; k < a.size(); ++k) {
        if (!(a.data[k] > 0.0)) {
            throw std::domain_error(std::string(op) + ": non-positive value at flat index " +
                                    std::to_string(k));
        }
    }
}

}  // namespace

Value Tape::push(Matrix out, BackFn back) {
    Node n;
    n.val = std::move(out);
    n.grad = Matrix(n.val.rows, n.val.cols);
    if (grad_enabled_) n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Tape::constant(Matrix m) { return push(std::move(m), nullptr); }

Value Tape::constant_scalar(double v) {
    Matrix m(1, 1);
    m.data[0] = v;
    return constant(std::move(m));
}

Value Tape::param(Param& p) {
    Node n;
    n.val = p.value;
    n.grad = Matrix(p.value.rows, p.value.cols);
    n.leaf = &p;
    nodes_.push_back(std::move(n));
    return Value{static_cast<int>(nodes_.size()) - 1};
}

Value Tape::add(Value a, Value b) {
    require_same_shape("add", val(a), val(b));
    Matrix out = cholseq::add(val(a), val(b));
    const int ai = a.i, bi = b.i;
    return push(std::move(out), [ai, bi](Tape& t, const Matrix& g) {
        t.accumulate(ai, g);
        t.accumulate(bi, g);
    });
}

Value Tape::sub(Value a, Value b) {
    require_same_shape("sub", val(a), val(b));
    Matrix out = cholseq::sub(val(a), val(b));
    const int ai = a.i, bi = b.i;
    return push(std::move(out), [ai, bi](Tape& t, const Matrix& g) {
        t.accumulate(ai, g);
        t.accumulate(bi, scal(g, -1.0));
    });
}

Value Tape::mul(Value a, Value b) {
    require_same_shape("mul", val(a), val(b));
    Matrix out = hadamard(val(a), val(b));
    const int ai = a.i, bi = b.i;
    return push(std::move(out), [ai, bi](Tape& t, const Matrix& g) {
        t.accumulate(ai, hadamard(g, t.nodes_[bi].val));
        t.accumulate(bi, hadamard(g, t.nodes_[ai].val));
    });
}

Value Tape::div(Value a, Value b) {
    require_same_shape("div", val(a), val(b));
    const Matrix &A = val(a), &B = val(b);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = A.data[k] / B.data[k];
    const int ai = a.i, bi = b.i;
    return push(std::move(out), [ai, bi](Tape& t, const Matrix& g) {
        const Matrix &A2 = t.nodes_[ai].val, &B2 = t.nodes_[bi].val;
        Matrix da(A2.rows, A2.cols), db(A2.rows, A2.cols);
        for (size_t k = 0; k < A2.size(); ++k) {
            da.data[k] = g.data[k] / B2.data[k];
            db.data[k] = -g.data[k] * A2.data[k] / (B2.data[k] * B2.data[k]);
        }
        t.accumulate(ai, da);
        t.accumulate(bi, db);
    });
}

Value Tape::matmul(Value a, Value b) {
    Matrix out = cholseq::matmul(val(a), val(b));
    const int ai = a.i, bi = b.i;
    return push(std::move(out), [ai, bi](Tape& t, const Matrix& g) {
        t.accumulate(ai, cholseq::matmul(g, cholseq::transpose(t.nodes_[bi].val)));
        t.accumulate(bi, cholseq::matmul(cholseq::transpose(t.nodes_[ai].val), g));
    });
}

Value Tape::transpose(Value a) {
    Matrix out = cholseq::transpose(val(a));
    const int ai = a.i;
    return push(std::move(out), [ai](Tape& t, const Matrix& g) {
        t.accumulate(ai, cholseq::transpose(g));
    });
}

Value Tape::exp(Value a) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = std::exp(A.data[k]);
    const int ai = a.i;
    const int oi = static_cast<int>(nodes_.size());
    return push(std::move(out), [ai, oi](Tape& t, const Matrix& g) {
        t.accumulate(ai, hadamard(g, t.nodes_[oi].val));
    });
}

Value Tape::log(Value a) {
    const Matrix& A = val(a);
    require_positive("log", A);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = std::log(A.data[k]);
    const int ai = a.i;
    return push(std::move(out), [ai](Tape& t, const Matrix& g) {
        const Matrix& A2 = t.nodes_[ai].val;
        Matrix da(A2.rows, A2.cols);
        for (size_t k = 0; k < A2.size(); ++k) da.data[k] = g.data[k] / A2.data[k];
        t.accumulate(ai, da);
    });
}

Value Tape::sigmoid(Value a) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = sigmoid_scalar(A.data[k]);
    const int ai = a.i;
    const int oi = static_cast<int>(nodes_.size());
    return push(std::move(out), [ai, oi](Tape& t, const Matrix& g) {
        const Matrix& Y = t.nodes_[oi].val;
        Matrix da(Y.rows, Y.cols);
        for (size_t k = 0; k < Y.size(); ++k) da.data[k] = g.data[k] * Y.data[k] * (1.0 - Y.data[k]);
        t.accumulate(ai, da);
    });
}

Value Tape::tanh(Value a) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = std::tanh(A.data[k]);
    const int ai = a.i;
    const int oi = static_cast<int>(nodes_.size());
    return push(std::move(out), [ai, oi](Tape& t, const Matrix& g) {
        const Matrix& Y = t.nodes_[oi].val;
        Matrix da(Y.rows, Y.cols);
        for (size_t k = 0; k < Y.size(); ++k) da.data[k] = g.data[k] * (1.0 - Y.data[k] * Y.data[k]);
        t.accumulate(ai, da);
    });
}

Value Tape::softplus(Value a) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = stable_softplus(A.data[k]);
    const int ai = a.i;
    return push(std::move(out), [ai](Tape& t, const Matrix& g) {
        const Matrix& A2 = t.nodes_[ai].val;
        Matrix da(A2.rows, A2.cols);
        for (size_t k = 0; k < A2.size(); ++k) da.data[k] = g.data[k] * sigmoid_scalar(A2.data[k]);
        t.accumulate(ai, da);
    });
}

Value Tape::relu(Value a) { return leaky_relu(a, 0.0); }

Value Tape::leaky_relu(Value a, double slope) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) {
        out.data[k] = A.data[k] > 0.0 ? A.data[k] : slope * A.data[k];
    }
    const int ai = a.i;
    return push(std::move(out), [ai, slope](Tape& t, const Matrix& g) {
        const Matrix& A2 = t.nodes_[ai].val;
        Matrix da(A2.rows, A2.cols);
        for (size_t k = 0; k < A2.size(); ++k) {
            da.data[k] = g.data[k] * (A2.data[k] > 0.0 ? 1.0 : slope);
        }
        t.accumulate(ai, da);
    });
}

Value Tape::sum(Value a) {
    const Matrix& A = val(a);
    Matrix out(1, 1);
    for (double v : A.data) out.data[0] += v;
    const int ai = a.i;
    return push(std::move(out), [ai](Tape& t, const Matrix& g) {
        const Matrix& A2 = t.nodes_[ai].val;
        t.accumulate(ai, Matrix::filled(A2.rows, A2.cols, g.data[0]));
    });
}

Value Tape::mean(Value a) {
    const Matrix& A = val(a);
    const double n = static_cast<double>(A.size());
    Matrix out(1, 1);
    for (double v : A.data) out.data[0] += v;
    out.data[0] /= n;
    const int ai = a.i;
    return push(std::move(out), [ai, n](Tape& t, const Matrix& g) {
        const Matrix& A2 = t.nodes_[ai].val;
        t.accumulate(ai, Matrix::filled(A2.rows, A2.cols, g.data[0] / n));
    });
}

Value Tape::square(Value a) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = A.data[k] * A.data[k];
    const int ai = a.i;
    return push(std::move(out), [ai](Tape& t, const Matrix& g) {
        const Matrix& A2 = t.nodes_[ai].val;
        Matrix da(A2.rows, A2.cols);
        for (size_t k = 0; k < A2.size(); ++k) da.data[k] = 2.0 * A2.data[k] * g.data[k];
        t.accumulate(ai, da);
    });
}

Value Tape::sqrt(Value a) {
    const Matrix& A = val(a);
    require_positive("sqrt", A);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = std::sqrt(A.data[k]);
    const int ai = a.i;
    const int oi = static_cast<int>(nodes_.size());
    return push(std::move(out), [ai, oi](Tape& t, const Matrix& g) {
        const Matrix& Y = t.nodes_[oi].val;
        Matrix da(Y.rows, Y.cols);
        for (size_t k = 0; k < Y.size(); ++k) da.data[k] = 0.5 * g.data[k] / Y.data[k];
        t.accumulate(ai, da);
    });
}

Value Tape::softmax(Value a) {
    const Matrix& A = val(a);
    if (A.cols != 1) throw std::invalid_argument("softmax: expected column vector");
    double mx = A.data[0];
    for (double v : A.data) mx = std::max(mx, v);
    Matrix out(A.rows, 1);
    double z = 0.0;
    for (size_t k = 0; k < A.size(); ++k) {
        out.data[k] = std::exp(A.data[k] - mx);
        z += out.data[k];
    }
    for (size_t k = 0; k < A.size(); ++k) out.data[k] /= z;
    const int ai = a.i;
    const int oi = static_cast<int>(nodes_.size());
    return push(std::move(out), [ai, oi](Tape& t, const Matrix& g) {
        const Matrix& Y = t.nodes_[oi].val;
        double dot = 0.0;
        for (size_t k = 0; k < Y.size(); ++k) dot += g.data[k] * Y.data[k];
        Matrix da(Y.rows, 1);
        for (size_t k = 0; k < Y.size(); ++k) da.data[k] = Y.data[k] * (g.data[k] - dot);
        t.accumulate(ai, da);
    });
}

Value Tape::pow_const(Value a, double e) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = std::pow(A.data[k], e);
    const int ai = a.i;
    return push(std::move(out), [ai, e](Tape& t, const Matrix& g) {
        const Matrix& A2 = t.nodes_[ai].val;
        Matrix da(A2.rows, A2.cols);
        for (size_t k = 0; k < A2.size(); ++k) {
            da.data[k] = g.data[k] * e * std::pow(A2.data[k], e - 1.0);
        }
        t.accumulate(ai, da);
    });
}

Value Tape::clamp_min(Value a, double lo) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = std::max(A.data[k], lo);
    const int ai = a.i;
    return push(std::move(out), [ai, lo](Tape& t, const Matrix& g) {
        const Matrix& A2 = t.nodes_[ai].val;
        Matrix da(A2.rows, A2.cols);
        for (size_t k = 0; k < A2.size(); ++k) da.data[k] = A2.data[k] >= lo ? g.data[k] : 0.0;
        t.accumulate(ai, da);
    });
}

Value Tape::masked_select(Value a, const Matrix& mask) {
    require_same_shape("masked_select", val(a), mask);
    Matrix out = hadamard(val(a), mask);
    const int ai = a.i;
    Matrix m = mask;
    return push(std::move(out), [ai, m](Tape& t, const Matrix& g) {
        t.accumulate(ai, hadamard(g, m));
    });
}

Value Tape::lower(Value a) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j <= std::min(i, A.cols - 1); ++j) out(i, j) = A(i, j);
    const int ai = a.i;
    return push(std::move(out), [ai](Tape& t, const Matrix& g) {
        Matrix da(g.rows, g.cols);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j <= std::min(i, g.cols - 1); ++j) da(i, j) = g(i, j);
        t.accumulate(ai, da);
    });
}

Value Tape::strict_lower(Value a) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < std::min(i, A.cols); ++j) out(i, j) = A(i, j);
    const int ai = a.i;
    return push(std::move(out), [ai](Tape& t, const Matrix& g) {
        Matrix da(g.rows, g.cols);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < std::min(i, g.cols); ++j) da(i, j) = g(i, j);
        t.accumulate(ai, da);
    });
}

Value Tape::diag_vec(Value a) {
    const Matrix& A = val(a);
    if (A.rows != A.cols) throw std::invalid_argument("diag_vec: non-square input");
    Matrix out(A.rows, 1);
    for (int i = 0; i < A.rows; ++i) out(i, 0) = A(i, i);
    const int ai = a.i;
    return push(std::move(out), [ai](Tape& t, const Matrix& g) {
        Matrix da(g.rows, g.rows);
        for (int i = 0; i < g.rows; ++i) da(i, i) = g(i, 0);
        t.accumulate(ai, da);
    });
}

Value Tape::make_diag(Value v) {
    const Matrix& V = val(v);
    if (V.cols != 1) throw std::invalid_argument("make_diag: expected column vector");
    Matrix out(V.rows, V.rows);
    for (int i = 0; i < V.rows; ++i) out(i, i) = V(i, 0);
    const int vi = v.i;
    return push(std::move(out), [vi](Tape& t, const Matrix& g) {
        Matrix dv(g.rows, 1);
        for (int i = 0; i < g.rows; ++i) dv(i, 0) = g(i, i);
        t.accumulate(vi, dv);
    });
}

Value Tape::vech(Value a) {
    const Matrix& A = val(a);
    if (A.rows != A.cols) throw std::invalid_argument("vech: non-square input");
    const int d = A.rows;
    Matrix out(d * (d + 1) / 2, 1);
    int k = 0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) out(k++, 0) = A(i, j);
    const int ai = a.i;
    return push(std::move(out), [ai, d](Tape& t, const Matrix& g) {
        Matrix da(d, d);
        int k2 = 0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j <= i; ++j) da(i, j) = g(k2++, 0);
        t.accumulate(ai, da);
    });
}

Value Tape::unvech(Value v, int d) {
    const Matrix& V = val(v);
    if (V.cols != 1 || V.rows != d * (d + 1) / 2) {
        throw std::invalid_argument("unvech: length does not match dimension");
    }
    Matrix out(d, d);
    int k = 0;
    for (int i = 0; i < d; ++i)
        for (int j = 0; j <= i; ++j) out(i, j) = V(k++, 0);
    const int vi = v.i;
    return push(std::move(out), [vi, d](Tape& t, const Matrix& g) {
        Matrix dv(d * (d + 1) / 2, 1);
        int k2 = 0;
        for (int i = 0; i < d; ++i)
            for (int j = 0; j <= i; ++j) dv(k2++, 0) = g(i, j);
        t.accumulate(vi, dv);
    });
}

Value Tape::row_mean(Value a) {
    const Matrix& A = val(a);
    Matrix out(A.rows, 1);
    for (int i = 0; i < A.rows; ++i) {
        double s = 0.0;
        for (int j = 0; j < A.cols; ++j) s += A(i, j);
        out(i, 0) = s / A.cols;
    }
    const int ai = a.i;
    const int cols = A.cols;
    return push(std::move(out), [ai, cols](Tape& t, const Matrix& g) {
        Matrix da(g.rows, cols);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < cols; ++j) da(i, j) = g(i, 0) / cols;
        t.accumulate(ai, da);
    });
}

Value Tape::add_colvec(Value m, Value v) {
    const Matrix &M = val(m), &V = val(v);
    if (V.cols != 1 || V.rows != M.rows) throw std::invalid_argument("add_colvec: bad shapes");
    Matrix out(M.rows, M.cols);
    for (int i = 0; i < M.rows; ++i)
        for (int j = 0; j < M.cols; ++j) out(i, j) = M(i, j) + V(i, 0);
    const int mi = m.i, vi = v.i;
    return push(std::move(out), [mi, vi](Tape& t, const Matrix& g) {
        t.accumulate(mi, g);
        Matrix dv(g.rows, 1);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) dv(i, 0) += g(i, j);
        t.accumulate(vi, dv);
    });
}

Value Tape::sub_colvec(Value m, Value v) {
    const Matrix &M = val(m), &V = val(v);
    if (V.cols != 1 || V.rows != M.rows) throw std::invalid_argument("sub_colvec: bad shapes");
    Matrix out(M.rows, M.cols);
    for (int i = 0; i < M.rows; ++i)
        for (int j = 0; j < M.cols; ++j) out(i, j) = M(i, j) - V(i, 0);
    const int mi = m.i, vi = v.i;
    return push(std::move(out), [mi, vi](Tape& t, const Matrix& g) {
        t.accumulate(mi, g);
        Matrix dv(g.rows, 1);
        for (int i = 0; i < g.rows; ++i)
            for (int j = 0; j < g.cols; ++j) dv(i, 0) -= g(i, j);
        t.accumulate(vi, dv);
    });
}

Value Tape::mul_colvec(Value m, Value v) {
    const Matrix &M = val(m), &V = val(v);
    if (V.cols != 1 || V.rows != M.rows) throw std::invalid_argument("mul_colvec: bad shapes");
    Matrix out(M.rows, M.cols);
    for (int i = 0; i < M.rows; ++i)
        for (int j = 0; j < M.cols; ++j) out(i, j) = M(i, j) * V(i, 0);
    const int mi = m.i, vi = v.i;
    return push(std::move(out), [mi, vi](Tape& t, const Matrix& g) {
        const Matrix &M2 = t.nodes_[mi].val, &V2 = t.nodes_[vi].val;
        Matrix dm(g.rows, g.cols);
        Matrix dv(g.rows, 1);
        for (int i = 0; i < g.rows; ++i) {
            for (int j = 0; j < g.cols; ++j) {
                dm(i, j) = g(i, j) * V2(i, 0);
                dv(i, 0) += g(i, j) * M2(i, j);
            }
        }
        t.accumulate(mi, dm);
        t.accumulate(vi, dv);
    });
}

Value Tape::div_colvec(Value m, Value v) {
    const Matrix &M = val(m), &V = val(v);
    if (V.cols != 1 || V.rows != M.rows) throw std::invalid_argument("div_colvec: bad shapes");
    Matrix out(M.rows, M.cols);
    for (int i = 0; i < M.rows; ++i)
        for (int j = 0; j < M.cols; ++j) out(i, j) = M(i, j) / V(i, 0);
    const int mi = m.i, vi = v.i;
    return push(std::move(out), [mi, vi](Tape& t, const Matrix& g) {
        const Matrix &M2 = t.nodes_[mi].val, &V2 = t.nodes_[vi].val;
        Matrix dm(g.rows, g.cols);
        Matrix dv(g.rows, 1);
        for (int i = 0; i < g.rows; ++i) {
            const double inv = 1.0 / V2(i, 0);
            for (int j = 0; j < g.cols; ++j) {
                dm(i, j) = g(i, j) * inv;
                dv(i, 0) -= g(i, j) * M2(i, j) * inv * inv;
            }
        }
        t.accumulate(mi, dm);
        t.accumulate(vi, dv);
    });
}

Value Tape::smul(Value a, double c) {
    Matrix out = scal(val(a), c);
    const int ai = a.i;
    return push(std::move(out), [ai, c](Tape& t, const Matrix& g) {
        t.accumulate(ai, scal(g, c));
    });
}

Value Tape::sadd(Value a, double c) {
    const Matrix& A = val(a);
    Matrix out(A.rows, A.cols);
    for (size_t k = 0; k < A.size(); ++k) out.data[k] = A.data[k] + c;
    const int ai = a.i;
    return push(std::move(out), [ai](Tape& t, const Matrix& g) { t.accumulate(ai, g); });
}

Value Tape::scale(Value s, Value m) {
    const Matrix &S = val(s), &M = val(m);
    if (!S.is_scalar()) throw std::invalid_argument("scale: first operand must be 1x1");
    Matrix out = scal(M, S.data[0]);
    const int si = s.i, mi = m.i;
    return push(std::move(out), [si, mi](Tape& t, const Matrix& g) {
        const Matrix &S2 = t.nodes_[si].val, &M2 = t.nodes_[mi].val;
        double ds = 0.0;
        for (size_t k = 0; k < g.size(); ++k) ds += g.data[k] * M2.data[k];
        Matrix dsm(1, 1);
        dsm.data[0] = ds;
        t.accumulate(si, dsm);
        t.accumulate(mi, scal(g, S2.data[0]));
    });
}

Value Tape::concat_rows(Value a, Value b) {
    const Matrix &A = val(a), &B = val(b);
    if (A.cols != B.cols) throw std::invalid_argument("concat_rows: column mismatch");
    Matrix out(A.rows + B.rows, A.cols);
    std::copy(A.data.begin(), A.data.end(), out.data.begin());
    std::copy(B.data.begin(), B.data.end(), out.data.begin() + A.size());
    const int ai = a.i, bi = b.i;
    const int arows = A.rows;
    return push(std::move(out), [ai, bi, arows](Tape& t, const Matrix& g) {
        Matrix da(arows, g.cols), db(g.rows - arows, g.cols);
        std::copy(g.data.begin(), g.data.begin() + da.size(), da.data.begin());
        std::copy(g.data.begin() + da.size(), g.data.end(), db.data.begin());
        t.accumulate(ai, da);
        t.accumulate(bi, db);
    });
}

Value Tape::l2_norm(Value a) {
    const Matrix& A = val(a);
    double s = 0.0;
    for (double v : A.data) s += v * v;
    Matrix out(1, 1);
    out.data[0] = std::sqrt(s);
    const int ai = a.i;
    return push(std::move(out), [ai](Tape& t, const Matrix& g) {
        const Matrix& A2 = t.nodes_[ai].val;
        double s2 = 0.0;
        for (double v : A2.data) s2 += v * v;
        const double nrm = std::max(std::sqrt(s2), 1e-12);
        t.accumulate(ai, scal(A2, g.data[0] / nrm));
    });
}

Value Tape::cholesky(Value a) {
    const Matrix& A = val(a);
    if (A.rows != A.cols) throw std::invalid_argument("cholesky: non-square input");
    Matrix sym(A.rows, A.cols);
    for (int i = 0; i < A.rows; ++i)
        for (int j = 0; j < A.cols; ++j) sym(i, j) = 0.5 * (A(i, j) + A(j, i));
    Matrix l = cholesky_factor(sym);
    const int ai = a.i;
    const int oi = static_cast<int>(nodes_.size());
    return push(std::move(l), [ai, oi](Tape& t, const Matrix& g) {
        const Matrix& L = t.nodes_[oi].val;
        const int n = L.rows;
        // P = Phi(L^T Lbar): lower triangle with halved diagonal.
        Matrix p = cholseq::matmul(cholseq::transpose(L), g);
        for (int i = 0; i < n; ++i) {
            for (int j = 0; j < n; ++j) {
                if (j > i) p(i, j) = 0.0;
                if (j == i) p(i, j) *= 0.5;
            }
        }
        // G = L^{-T} P L^{-1}, then symmetrize.
        Matrix x = solve_lower_transposed(L, p);                                  // L^{-T} P
        Matrix gmat = cholseq::transpose(solve_lower_transposed(L, cholseq::transpose(x)));  // X L^{-1}
        Matrix da(n, n);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) da(i, j) = 0.5 * (gmat(i, j) + gmat(j, i));
        t.accumulate(ai, da);
    });
}

void Tape::backward(Value root) {
    if (!val(root).is_scalar()) throw std::invalid_argument("backward: root must be scalar");
    nodes_[root.i].grad.data[0] = 1.0;
    backward_visits_ = 0;
    for (int i = root.i; i >= 0; --i) {
        ++backward_visits_;
        Node& n = nodes_[i];
        if (n.back) n.back(*this, n.grad);
        if (n.leaf) add_inplace(n.leaf->grad, n.grad);
    }
}

}  // namespace cholseq
