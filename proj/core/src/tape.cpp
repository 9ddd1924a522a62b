#include "finctx/tape.hpp"

#include <algorithm>
#include <cmath>
#include <memory>

#include "finctx/error.hpp"

namespace finctx {

namespace {

// C += A * B, A:[m,k] B:[k,n]
void mm_nn(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        double* c = C + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            const double* b = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

// C += A * B^T, A:[m,k] B:[n,k]
void mm_nt(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        double* c = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* b = B + static_cast<size_t>(j) * k;
            double acc = 0.0;
            for (int p = 0; p < k; ++p) acc += a[p] * b[p];
            c[j] += acc;
        }
    }
}

// C += A^T * B, A:[m,k] B:[m,n], C:[k,n]
void mm_tn(const double* A, const double* B, double* C, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* a = A + static_cast<size_t>(i) * k;
        const double* b = B + static_cast<size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = a[p];
            double* c = C + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) c[j] += av * b[j];
        }
    }
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var Tape::push(Tensor value, bool requires_grad, std::function<void(Tape&)> back, const char* opname) {
    if (!value.all_finite()) {
        throw NumericError(std::string("non-finite values produced by op '") + opname + "'");
    }
    Node n;
    n.value = std::move(value);
    n.requires_grad = requires_grad;
    n.back = requires_grad ? std::move(back) : nullptr;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

void Tape::check_var(Var v, const char* who) const {
    if (!v.valid() || v.id >= static_cast<int>(nodes_.size())) {
        throw ShapeError(std::string(who) + ": invalid tape handle");
    }
}

Tape::Node& Tape::node(Var v) { return nodes_[static_cast<size_t>(v.id)]; }
const Tape::Node& Tape::node(Var v) const { return nodes_[static_cast<size_t>(v.id)]; }

Tensor* Tape::grad_ptr(int id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (!n.requires_grad) return nullptr;
    if (!n.grad_alloc) {
        n.grad_buf = Tensor::zeros(n.value.shape());
        n.grad_alloc = true;
    }
    return &n.grad_buf;
}

const Tensor& Tape::value(Var v) const {
    check_var(v, "value");
    return node(v).value;
}

Tensor Tape::grad(Var v) const {
    check_var(v, "grad");
    const Node& n = node(v);
    if (n.grad_alloc) return n.grad_buf;
    return Tensor::zeros(n.value.shape());
}

void Tape::reset() {
    nodes_.clear();
    consumed_ = false;
}

Var Tape::constant(Tensor value) {
    return push(std::move(value), false, nullptr, "constant");
}

Var Tape::leaf(Parameter& p) {
    Node n;
    n.value = p.value;
    n.requires_grad = p.trainable;
    n.bound = &p;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
}

Var Tape::add(Var a, Var b) {
    check_var(a, "add");
    check_var(b, "add");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    const bool bcast = !ta.same_shape(tb);
    if (bcast) {
        const bool b_is_row = (tb.rank() == 1 || (tb.rank() == 2 && tb.rows() == 1));
        if (!(ta.rank() == 2 && b_is_row && tb.cols() == ta.cols())) {
            throw ShapeError("add: incompatible shapes " + ta.shape_str() + " vs " + tb.shape_str());
        }
    }
    Tensor out = ta;
    const int rows = ta.rows(), cols = ta.cols();
    if (bcast) {
        for (int i = 0; i < rows; ++i)
            for (int j = 0; j < cols; ++j) out.at(i * cols + j) += tb.at(j);
    } else {
        for (int64_t i = 0; i < ta.numel(); ++i) out.at(static_cast<int>(i)) += tb.at(static_cast<int>(i));
    }
    bool rg = node(a).requires_grad || node(b).requires_grad;
    int ia = a.id, ib = b.id;
    return push(std::move(out), rg,
                [ia, ib, bcast, rows, cols](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    if (Tensor* da = t.grad_ptr(ia)) {
                        for (int64_t i = 0; i < dy.numel(); ++i) da->at(static_cast<int>(i)) += dy.at(static_cast<int>(i));
                    }
                    if (Tensor* db = t.grad_ptr(ib)) {
                        if (bcast) {
                            for (int i = 0; i < rows; ++i)
                                for (int j = 0; j < cols; ++j) db->at(j) += dy.at(i * cols + j);
                        } else {
                            for (int64_t i = 0; i < dy.numel(); ++i) db->at(static_cast<int>(i)) += dy.at(static_cast<int>(i));
                        }
                    }
                },
                "add");
}

Var Tape::sub(Var a, Var b) { return add(a, scale(b, -1.0)); }

Var Tape::mul(Var a, Var b) {
    check_var(a, "mul");
    check_var(b, "mul");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    if (!ta.same_shape(tb)) {
        throw ShapeError("mul: incompatible shapes " + ta.shape_str() + " vs " + tb.shape_str());
    }
    Tensor out = ta;
    for (int64_t i = 0; i < ta.numel(); ++i) out.at(static_cast<int>(i)) *= tb.at(static_cast<int>(i));
    bool rg = node(a).requires_grad || node(b).requires_grad;
    int ia = a.id, ib = b.id;
    return push(std::move(out), rg,
                [ia, ib](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    const Tensor& va = t.val(ia);
                    const Tensor& vb = t.val(ib);
                    if (Tensor* da = t.grad_ptr(ia)) {
                        for (int64_t i = 0; i < dy.numel(); ++i)
                            da->at(static_cast<int>(i)) += dy.at(static_cast<int>(i)) * vb.at(static_cast<int>(i));
                    }
                    if (Tensor* db = t.grad_ptr(ib)) {
                        for (int64_t i = 0; i < dy.numel(); ++i)
                            db->at(static_cast<int>(i)) += dy.at(static_cast<int>(i)) * va.at(static_cast<int>(i));
                    }
                },
                "mul");
}

Var Tape::scale(Var a, double c) {
    check_var(a, "scale");
    Tensor out = val(a.id);
    for (int64_t i = 0; i < out.numel(); ++i) out.at(static_cast<int>(i)) *= c;
    int ia = a.id;
    return push(std::move(out), node(a).requires_grad,
                [ia, c](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    if (Tensor* da = t.grad_ptr(ia)) {
                        for (int64_t i = 0; i < dy.numel(); ++i) da->at(static_cast<int>(i)) += c * dy.at(static_cast<int>(i));
                    }
                },
                "scale");
}

Var Tape::matmul(Var a, Var b) {
    check_var(a, "matmul");
    check_var(b, "matmul");
    const Tensor& ta = val(a.id);
    const Tensor& tb = val(b.id);
    if (ta.rank() != 2 || tb.rank() != 2 || ta.cols() != tb.rows()) {
        throw ShapeError("matmul: inner dimensions disagree for shapes " + ta.shape_str() + " and " + tb.shape_str());
    }
    const int m = ta.rows(), k = ta.cols(), n = tb.cols();
    Tensor out({m, n});
    mm_nn(ta.data(), tb.data(), out.data(), m, k, n);
    bool rg = node(a).requires_grad || node(b).requires_grad;
    int ia = a.id, ib = b.id;
    return push(std::move(out), rg,
                [ia, ib, m, k, n](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    if (Tensor* da = t.grad_ptr(ia)) mm_nt(dy.data(), t.val(ib).data(), da->data(), m, n, k);
                    if (Tensor* db = t.grad_ptr(ib)) mm_tn(t.val(ia).data(), dy.data(), db->data(), m, k, n);
                },
                "matmul");
}

Var Tape::transpose(Var a) {
    check_var(a, "transpose");
    const Tensor& ta = val(a.id);
    if (ta.rank() != 2) throw ShapeError("transpose: expected rank-2 tensor, got " + ta.shape_str());
    const int m = ta.rows(), n = ta.cols();
    Tensor out({n, m});
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = ta.at(i, j);
    int ia = a.id;
    return push(std::move(out), node(a).requires_grad,
                [ia, m, n](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    if (Tensor* da = t.grad_ptr(ia)) {
                        for (int i = 0; i < m; ++i)
                            for (int j = 0; j < n; ++j) da->at(i, j) += dy.at(j, i);
                    }
                },
                "transpose");
}

Var Tape::softmax_rows(Var a) {
    check_var(a, "softmax");
    const Tensor& ta = val(a.id);
    if (ta.rank() != 2) throw ShapeError("softmax: expected rank-2 tensor, got " + ta.shape_str());
    const int n = ta.rows(), d = ta.cols();
    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        double mx = ta.at(i, 0);
        for (int j = 1; j < d; ++j) mx = std::max(mx, ta.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < d; ++j) {
            const double e = std::exp(ta.at(i, j) - mx);
            out.at(i, j) = e;
            sum += e;
        }
        const double inv = 1.0 / sum;
        for (int j = 0; j < d; ++j) out.at(i, j) *= inv;
    }
    int ia = a.id;
    return push(std::move(out), node(a).requires_grad,
                [ia, n, d](Tape& t) {
                    const int self = t.cursor_id_;
                    const Tensor& dy = t.nodes_[static_cast<size_t>(self)].grad_buf;
                    const Tensor& y = t.val(self);
                    if (Tensor* da = t.grad_ptr(ia)) {
                        for (int i = 0; i < n; ++i) {
                            double dot = 0.0;
                            for (int j = 0; j < d; ++j) dot += dy.at(i, j) * y.at(i, j);
                            for (int j = 0; j < d; ++j) da->at(i, j) += y.at(i, j) * (dy.at(i, j) - dot);
                        }
                    }
                },
                "softmax");
}

Var Tape::layer_norm(Var x, Var gain, Var bias, double eps) {
    check_var(x, "layer_norm");
    check_var(gain, "layer_norm");
    check_var(bias, "layer_norm");
    const Tensor& tx = val(x.id);
    const Tensor& tg = val(gain.id);
    const Tensor& tb = val(bias.id);
    if (tx.rank() != 2) throw ShapeError("layer_norm: expected rank-2 input, got " + tx.shape_str());
    const int n = tx.rows(), d = tx.cols();
    if (tg.numel() != d || tb.numel() != d) {
        throw ShapeError("layer_norm: gain/bias shape " + tg.shape_str() + "/" + tb.shape_str() +
                         " does not match feature dim " + std::to_string(d));
    }
    Tensor out({n, d});
    // xhat and 1/std cached for the backward rule
    auto xhat = std::make_shared<Tensor>(Tensor::zeros({n, d}));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += tx.at(i, j);
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = tx.at(i, j) - mean;
            var += c * c;
        }
        var /= d;
        const double inv = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(i)] = inv;
        for (int j = 0; j < d; ++j) {
            const double xh = (tx.at(i, j) - mean) * inv;
            xhat->at(i, j) = xh;
            out.at(i, j) = xh * tg.at(j) + tb.at(j);
        }
    }
    bool rg = node(x).requires_grad || node(gain).requires_grad || node(bias).requires_grad;
    int ix = x.id, ig = gain.id, ib = bias.id;
    return push(std::move(out), rg,
                [ix, ig, ib, n, d, xhat, inv_std](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    const Tensor& g = t.val(ig);
                    Tensor* dx = t.grad_ptr(ix);
                    Tensor* dg = t.grad_ptr(ig);
                    Tensor* db = t.grad_ptr(ib);
                    for (int i = 0; i < n; ++i) {
                        if (dg || db) {
                            for (int j = 0; j < d; ++j) {
                                if (dg) dg->at(j) += dy.at(i, j) * xhat->at(i, j);
                                if (db) db->at(j) += dy.at(i, j);
                            }
                        }
                        if (dx) {
                            double m1 = 0.0, m2 = 0.0;
                            for (int j = 0; j < d; ++j) {
                                const double dxh = dy.at(i, j) * g.at(j);
                                m1 += dxh;
                                m2 += dxh * xhat->at(i, j);
                            }
                            m1 /= d;
                            m2 /= d;
                            const double inv = (*inv_std)[static_cast<size_t>(i)];
                            for (int j = 0; j < d; ++j) {
                                const double dxh = dy.at(i, j) * g.at(j);
                                dx->at(i, j) += inv * (dxh - m1 - xhat->at(i, j) * m2);
                            }
                        }
                    }
                },
                "layer_norm");
}

Var Tape::gelu(Var x) {
    check_var(x, "gelu");
    const Tensor& tx = val(x.id);
    Tensor out = tx;
    for (int64_t i = 0; i < tx.numel(); ++i) {
        const double v = tx.at(static_cast<int>(i));
        const double u = kGeluC * (v + kGeluA * v * v * v);
        out.at(static_cast<int>(i)) = 0.5 * v * (1.0 + std::tanh(u));
    }
    int ix = x.id;
    return push(std::move(out), node(x).requires_grad,
                [ix](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    const Tensor& v = t.val(ix);
                    if (Tensor* dx = t.grad_ptr(ix)) {
                        for (int64_t i = 0; i < v.numel(); ++i) {
                            const double xv = v.at(static_cast<int>(i));
                            const double u = kGeluC * (xv + kGeluA * xv * xv * xv);
                            const double th = std::tanh(u);
                            const double du = kGeluC * (1.0 + 3.0 * kGeluA * xv * xv);
                            const double deriv = 0.5 * (1.0 + th) + 0.5 * xv * (1.0 - th * th) * du;
                            dx->at(static_cast<int>(i)) += dy.at(static_cast<int>(i)) * deriv;
                        }
                    }
                },
                "gelu");
}

Var Tape::tanh_act(Var x) {
    check_var(x, "tanh");
    const Tensor& tx = val(x.id);
    Tensor out = tx;
    for (int64_t i = 0; i < tx.numel(); ++i) out.at(static_cast<int>(i)) = std::tanh(tx.at(static_cast<int>(i)));
    int ix = x.id;
    return push(std::move(out), node(x).requires_grad,
                [ix](Tape& t) {
                    const int self = t.cursor_id_;
                    const Tensor& dy = t.nodes_[static_cast<size_t>(self)].grad_buf;
                    const Tensor& y = t.val(self);
                    if (Tensor* dx = t.grad_ptr(ix)) {
                        for (int64_t i = 0; i < y.numel(); ++i) {
                            const double yv = y.at(static_cast<int>(i));
                            dx->at(static_cast<int>(i)) += dy.at(static_cast<int>(i)) * (1.0 - yv * yv);
                        }
                    }
                },
                "tanh");
}

Var Tape::sigmoid(Var x) {
    check_var(x, "sigmoid");
    const Tensor& tx = val(x.id);
    Tensor out = tx;
    for (int64_t i = 0; i < tx.numel(); ++i) {
        const double v = tx.at(static_cast<int>(i));
        out.at(static_cast<int>(i)) = v >= 0 ? 1.0 / (1.0 + std::exp(-v)) : std::exp(v) / (1.0 + std::exp(v));
    }
    int ix = x.id;
    return push(std::move(out), node(x).requires_grad,
                [ix](Tape& t) {
                    const int self = t.cursor_id_;
                    const Tensor& dy = t.nodes_[static_cast<size_t>(self)].grad_buf;
                    const Tensor& y = t.val(self);
                    if (Tensor* dx = t.grad_ptr(ix)) {
                        for (int64_t i = 0; i < y.numel(); ++i) {
                            const double yv = y.at(static_cast<int>(i));
                            dx->at(static_cast<int>(i)) += dy.at(static_cast<int>(i)) * yv * (1.0 - yv);
                        }
                    }
                },
                "sigmoid");
}

Var Tape::gather_rows(Var table, std::vector<int> ids) {
    check_var(table, "gather_rows");
    const Tensor& tt = val(table.id);
    if (tt.rank() != 2) throw ShapeError("gather_rows: table must be rank-2, got " + tt.shape_str());
    const int v = tt.rows(), d = tt.cols();
    for (int id : ids) {
        if (id < 0 || id >= v) {
            throw DataError("gather_rows: index " + std::to_string(id) + " outside table of " + std::to_string(v) +
                            " rows");
        }
    }
    const int n = static_cast<int>(ids.size());
    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        const double* src = tt.data() + static_cast<size_t>(ids[static_cast<size_t>(i)]) * d;
        std::copy(src, src + d, out.data() + static_cast<size_t>(i) * d);
    }
    int it = table.id;
    auto ids_sh = std::make_shared<std::vector<int>>(std::move(ids));
    return push(std::move(out), node(table).requires_grad,
                [it, ids_sh, n, d](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    if (Tensor* dt = t.grad_ptr(it)) {
                        for (int i = 0; i < n; ++i) {
                            double* dst = dt->data() + static_cast<size_t>((*ids_sh)[static_cast<size_t>(i)]) * d;
                            const double* src = dy.data() + static_cast<size_t>(i) * d;
                            for (int j = 0; j < d; ++j) dst[j] += src[j];
                        }
                    }
                },
                "gather_rows");
}

Var Tape::concat_rows(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_rows: no inputs");
    int total = 0;
    int d = -1;
    bool rg = false;
    for (Var v : xs) {
        check_var(v, "concat_rows");
        const Tensor& t = val(v.id);
        if (t.rank() != 2) throw ShapeError("concat_rows: expected rank-2 input, got " + t.shape_str());
        if (d < 0) d = t.cols();
        if (t.cols() != d) {
            throw ShapeError("concat_rows: column mismatch " + std::to_string(t.cols()) + " vs " + std::to_string(d));
        }
        total += t.rows();
        rg = rg || node(v).requires_grad;
    }
    Tensor out({total, d});
    int row = 0;
    std::vector<std::pair<int, int>> spans;  // (input id, start row)
    spans.reserve(xs.size());
    for (Var v : xs) {
        const Tensor& t = val(v.id);
        std::copy(t.data(), t.data() + t.numel(), out.data() + static_cast<size_t>(row) * d);
        spans.emplace_back(v.id, row);
        row += t.rows();
    }
    auto spans_sh = std::make_shared<std::vector<std::pair<int, int>>>(std::move(spans));
    return push(std::move(out), rg,
                [spans_sh, d](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    for (const auto& [id, start] : *spans_sh) {
                        if (Tensor* dx = t.grad_ptr(id)) {
                            const int r = dx->rows();
                            for (int i = 0; i < r; ++i)
                                for (int j = 0; j < d; ++j) dx->at(i, j) += dy.at(start + i, j);
                        }
                    }
                },
                "concat_rows");
}

Var Tape::concat_cols(const std::vector<Var>& xs) {
    if (xs.empty()) throw ShapeError("concat_cols: no inputs");
    int total = 0;
    int n = -1;
    bool rg = false;
    for (Var v : xs) {
        check_var(v, "concat_cols");
        const Tensor& t = val(v.id);
        if (t.rank() != 2) throw ShapeError("concat_cols: expected rank-2 input, got " + t.shape_str());
        if (n < 0) n = t.rows();
        if (t.rows() != n) {
            throw ShapeError("concat_cols: row mismatch " + std::to_string(t.rows()) + " vs " + std::to_string(n));
        }
        total += t.cols();
        rg = rg || node(v).requires_grad;
    }
    Tensor out({n, total});
    int col = 0;
    std::vector<std::pair<int, int>> spans;
    for (Var v : xs) {
        const Tensor& t = val(v.id);
        const int c = t.cols();
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < c; ++j) out.at(i, col + j) = t.at(i, j);
        spans.emplace_back(v.id, col);
        col += c;
    }
    auto spans_sh = std::make_shared<std::vector<std::pair<int, int>>>(std::move(spans));
    return push(std::move(out), rg,
                [spans_sh, n](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    for (const auto& [id, start] : *spans_sh) {
                        if (Tensor* dx = t.grad_ptr(id)) {
                            const int c = dx->cols();
                            for (int i = 0; i < n; ++i)
                                for (int j = 0; j < c; ++j) dx->at(i, j) += dy.at(i, start + j);
                        }
                    }
                },
                "concat_cols");
}

Var Tape::slice_rows(Var x, int begin, int end) {
    check_var(x, "slice_rows");
    const Tensor& tx = val(x.id);
    if (tx.rank() != 2) throw ShapeError("slice_rows: expected rank-2 input, got " + tx.shape_str());
    if (begin < 0 || end > tx.rows() || begin >= end) {
        throw ShapeError("slice_rows: bad range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") for shape " + tx.shape_str());
    }
    const int d = tx.cols(), n = end - begin;
    Tensor out({n, d});
    std::copy(tx.data() + static_cast<size_t>(begin) * d, tx.data() + static_cast<size_t>(end) * d, out.data());
    int ix = x.id;
    return push(std::move(out), node(x).requires_grad,
                [ix, begin, n, d](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    if (Tensor* dx = t.grad_ptr(ix)) {
                        for (int i = 0; i < n; ++i)
                            for (int j = 0; j < d; ++j) dx->at(begin + i, j) += dy.at(i, j);
                    }
                },
                "slice_rows");
}

Var Tape::slice_cols(Var x, int begin, int end) {
    check_var(x, "slice_cols");
    const Tensor& tx = val(x.id);
    if (tx.rank() != 2) throw ShapeError("slice_cols: expected rank-2 input, got " + tx.shape_str());
    if (begin < 0 || end > tx.cols() || begin >= end) {
        throw ShapeError("slice_cols: bad range [" + std::to_string(begin) + ", " + std::to_string(end) +
                         ") for shape " + tx.shape_str());
    }
    const int n = tx.rows(), c = end - begin;
    Tensor out({n, c});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) = tx.at(i, begin + j);
    int ix = x.id;
    return push(std::move(out), node(x).requires_grad,
                [ix, begin, n, c](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    if (Tensor* dx = t.grad_ptr(ix)) {
                        for (int i = 0; i < n; ++i)
                            for (int j = 0; j < c; ++j) dx->at(i, begin + j) += dy.at(i, j);
                    }
                },
                "slice_cols");
}

Var Tape::mean_rows(Var x) {
    check_var(x, "mean_rows");
    const Tensor& tx = val(x.id);
    if (tx.rank() != 2 || tx.rows() == 0) throw ShapeError("mean_rows: expected non-empty rank-2 input, got " + tx.shape_str());
    const int n = tx.rows(), d = tx.cols();
    Tensor out({1, d});
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) out.at(0, j) += tx.at(i, j);
    for (int j = 0; j < d; ++j) out.at(0, j) /= n;
    int ix = x.id;
    return push(std::move(out), node(x).requires_grad,
                [ix, n, d](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    if (Tensor* dx = t.grad_ptr(ix)) {
                        for (int i = 0; i < n; ++i)
                            for (int j = 0; j < d; ++j) dx->at(i, j) += dy.at(0, j) / n;
                    }
                },
                "mean_rows");
}

Var Tape::sum_all(Var x) {
    check_var(x, "sum_all");
    const Tensor& tx = val(x.id);
    double s = 0.0;
    for (int64_t i = 0; i < tx.numel(); ++i) s += tx.at(static_cast<int>(i));
    int ix = x.id;
    return push(Tensor::scalar(s), node(x).requires_grad,
                [ix](Tape& t) {
                    const double g = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf.at(0);
                    if (Tensor* dx = t.grad_ptr(ix)) {
                        for (int64_t i = 0; i < dx->numel(); ++i) dx->at(static_cast<int>(i)) += g;
                    }
                },
                "sum_all");
}

Var Tape::mean_all(Var x) {
    check_var(x, "mean_all");
    const int64_t n = val(x.id).numel();
    if (n == 0) throw ShapeError("mean_all: empty tensor");
    return scale(sum_all(x), 1.0 / static_cast<double>(n));
}

Var Tape::rope(Var x, std::vector<int> positions, double base) {
    check_var(x, "rope");
    const Tensor& tx = val(x.id);
    if (tx.rank() != 2) throw ShapeError("rope: expected rank-2 input, got " + tx.shape_str());
    const int n = tx.rows(), d = tx.cols();
    if (d % 2 != 0) throw ConfigError("rope: feature dim must be even, got " + std::to_string(d));
    if (static_cast<int>(positions.size()) != n) {
        throw ShapeError("rope: positions length " + std::to_string(positions.size()) + " vs " +
                         std::to_string(n) + " rows");
    }
    const int half = d / 2;
    std::vector<double> freqs(static_cast<size_t>(half));
    for (int j = 0; j < half; ++j) freqs[static_cast<size_t>(j)] = std::pow(base, -2.0 * j / d);
    Tensor out({n, d});
    for (int i = 0; i < n; ++i) {
        const double pos = positions[static_cast<size_t>(i)];
        for (int j = 0; j < half; ++j) {
            const double th = pos * freqs[static_cast<size_t>(j)];
            const double c = std::cos(th), s = std::sin(th);
            const double x0 = tx.at(i, 2 * j), x1 = tx.at(i, 2 * j + 1);
            out.at(i, 2 * j) = x0 * c - x1 * s;
            out.at(i, 2 * j + 1) = x0 * s + x1 * c;
        }
    }
    int ix = x.id;
    auto pos_sh = std::make_shared<std::vector<int>>(std::move(positions));
    auto fr_sh = std::make_shared<std::vector<double>>(std::move(freqs));
    return push(std::move(out), node(x).requires_grad,
                [ix, pos_sh, fr_sh, n, half](Tape& t) {
                    const Tensor& dy = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf;
                    if (Tensor* dx = t.grad_ptr(ix)) {
                        for (int i = 0; i < n; ++i) {
                            const double pos = (*pos_sh)[static_cast<size_t>(i)];
                            for (int j = 0; j < half; ++j) {
                                const double th = pos * (*fr_sh)[static_cast<size_t>(j)];
                                const double c = std::cos(th), s = std::sin(th);
                                const double g0 = dy.at(i, 2 * j), g1 = dy.at(i, 2 * j + 1);
                                dx->at(i, 2 * j) += g0 * c + g1 * s;
                                dx->at(i, 2 * j + 1) += -g0 * s + g1 * c;
                            }
                        }
                    }
                },
                "rope");
}

Var Tape::cross_entropy_logits(Var logits, std::vector<int> targets) {
    check_var(logits, "cross_entropy");
    const Tensor& tl = val(logits.id);
    if (tl.rank() != 2) throw ShapeError("cross_entropy: expected rank-2 logits, got " + tl.shape_str());
    const int n = tl.rows(), v = tl.cols();
    if (static_cast<int>(targets.size()) != n) {
        throw ShapeError("cross_entropy: target count " + std::to_string(targets.size()) + " vs " +
                         std::to_string(n) + " rows");
    }
    for (int t : targets) {
        if (t < 0 || t >= v) throw DataError("cross_entropy: target id " + std::to_string(t) + " outside vocab");
    }
    double loss = 0.0;
    for (int i = 0; i < n; ++i) {
        double mx = tl.at(i, 0);
        for (int j = 1; j < v; ++j) mx = std::max(mx, tl.at(i, j));
        double sum = 0.0;
        for (int j = 0; j < v; ++j) sum += std::exp(tl.at(i, j) - mx);
        loss += mx + std::log(sum) - tl.at(i, targets[static_cast<size_t>(i)]);
    }
    loss /= n;
    int il = logits.id;
    auto tg_sh = std::make_shared<std::vector<int>>(std::move(targets));
    return push(Tensor::scalar(loss), node(logits).requires_grad,
                [il, tg_sh, n, v](Tape& t) {
                    const double g = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf.at(0);
                    const Tensor& tl = t.val(il);
                    if (Tensor* dl = t.grad_ptr(il)) {
                        for (int i = 0; i < n; ++i) {
                            double mx = tl.at(i, 0);
                            for (int j = 1; j < v; ++j) mx = std::max(mx, tl.at(i, j));
                            double sum = 0.0;
                            for (int j = 0; j < v; ++j) sum += std::exp(tl.at(i, j) - mx);
                            const double inv = 1.0 / sum;
                            for (int j = 0; j < v; ++j) {
                                double p = std::exp(tl.at(i, j) - mx) * inv;
                                if (j == (*tg_sh)[static_cast<size_t>(i)]) p -= 1.0;
                                dl->at(i, j) += g * p / n;
                            }
                        }
                    }
                },
                "cross_entropy");
}

Var Tape::bce(Var prob, double target) {
    check_var(prob, "bce");
    const Tensor& tp = val(prob.id);
    if (tp.numel() != 1) throw ShapeError("bce: expected scalar probability, got " + tp.shape_str());
    const double p = tp.at(0);
    if (!(p > 0.0 && p < 1.0)) {
        throw NumericError("bce: probability " + std::to_string(p) + " outside (0, 1)");
    }
    const double loss = -(target * std::log(p) + (1.0 - target) * std::log(1.0 - p));
    int ip = prob.id;
    return push(Tensor::scalar(loss), node(prob).requires_grad,
                [ip, target](Tape& t) {
                    const double g = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf.at(0);
                    const double p = t.val(ip).at(0);
                    if (Tensor* dp = t.grad_ptr(ip)) dp->at(0) += g * (p - target) / (p * (1.0 - p));
                },
                "bce");
}

Var Tape::bce_with_logits(Var logit, double target) {
    check_var(logit, "bce_with_logits");
    const Tensor& tz = val(logit.id);
    if (tz.numel() != 1) throw ShapeError("bce_with_logits: expected scalar logit, got " + tz.shape_str());
    const double z = tz.at(0);
    const double loss = std::max(z, 0.0) - z * target + std::log1p(std::exp(-std::abs(z)));
    int iz = logit.id;
    return push(Tensor::scalar(loss), node(logit).requires_grad,
                [iz, target](Tape& t) {
                    const double g = t.nodes_[static_cast<size_t>(t.cursor_id_)].grad_buf.at(0);
                    const double z = t.val(iz).at(0);
                    const double s = z >= 0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
                    if (Tensor* dz = t.grad_ptr(iz)) dz->at(0) += g * (s - target);
                },
                "bce_with_logits");
}

void Tape::backward(Var loss) {
    check_var(loss, "backward");
    if (nodes_.empty()) throw NumericError("backward: empty tape");
    if (consumed_) {
        throw NumericError("stale tape: backward called twice without re-running the forward pass");
    }
    consumed_ = true;
    Node& ln = node(loss);
    if (ln.value.numel() != 1) {
        throw ShapeError("backward: loss must be scalar, got " + ln.value.shape_str());
    }
    if (!ln.requires_grad) return;  // nothing trainable on the path
    if (Tensor* g = grad_ptr(loss.id)) g->at(0) = 1.0;
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.grad_alloc && n.back) {
            cursor_id_ = id;
            n.back(*this);
        }
    }
    for (int id = loss.id; id >= 0; --id) {
        Node& n = nodes_[static_cast<size_t>(id)];
        if (n.bound && n.bound->trainable && n.grad_alloc) {
            Tensor& pg = n.bound->grad;
            for (int64_t i = 0; i < pg.numel(); ++i) pg.at(static_cast<int>(i)) += n.grad_buf.at(static_cast<int>(i));
        }
    }
}

}  // namespace finctx
