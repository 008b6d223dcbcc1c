#include "kinseq/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "kinseq/rng.hpp"

namespace kinseq {

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

namespace {

index_t shape_numel(const Shape& s) {
    if (s.empty()) throw ConfigError("tensor shape must have at least one dimension");
    index_t n = 1;
    for (index_t d : s) {
        if (d <= 0) throw ConfigError("tensor dimensions must be positive, got " + shape_str(s));
        n *= d;
    }
    return n;
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

void require_2d(const Tensor& a, const char* op) {
    if (a.ndim() != 2)
        throw ConfigError(std::string(op) + ": expected 2-d tensor, got " + shape_str(a.shape()));
}

thread_local Tape* tls_tape = nullptr;

}  // namespace

Tensor Tensor::make(Shape shape, std::vector<double> values, bool requires_grad) {
    index_t n = shape_numel(shape);
    if (static_cast<index_t>(values.size()) != n)
        throw ConfigError("tensor data length " + std::to_string(values.size()) +
                          " does not match shape " + shape_str(shape));
    Tensor t;
    t.p_ = std::make_shared<Payload>();
    t.p_->shape = std::move(shape);
    t.p_->values = std::move(values);
    t.p_->requires_grad = requires_grad;
    if (requires_grad) t.p_->grad.assign(t.p_->values.size(), 0.0);
    return t;
}

Tensor Tensor::zeros(Shape shape) {
    index_t n = shape_numel(shape);
    return make(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0), false);
}

Tensor Tensor::full(Shape shape, double value) {
    index_t n = shape_numel(shape);
    return make(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), value), false);
}

Tensor Tensor::from(Shape shape, std::vector<double> values) {
    return make(std::move(shape), std::move(values), false);
}

Tensor Tensor::param(Shape shape) {
    index_t n = shape_numel(shape);
    return make(std::move(shape), std::vector<double>(static_cast<std::size_t>(n), 0.0), true);
}

Tensor Tensor::param(Shape shape, std::vector<double> values) {
    return make(std::move(shape), std::move(values), true);
}

std::span<double> Tensor::grad() {
    if (!requires_grad()) throw ConfigError("grad() on a tensor without gradient tracking");
    return p_->grad;
}

std::span<const double> Tensor::grad() const {
    if (!requires_grad()) throw ConfigError("grad() on a tensor without gradient tracking");
    return p_->grad;
}

void Tensor::zero_grad() {
    if (requires_grad()) std::fill(p_->grad.begin(), p_->grad.end(), 0.0);
}

// ---- tape ----

Tape* active_tape() { return tls_tape; }

TapeScope::TapeScope(Tape& tape) : prev_(tls_tape) { tls_tape = &tape; }
TapeScope::~TapeScope() { tls_tape = prev_; }

bool Tape::tracks(const Tensor& t) const {
    if (!t.defined()) return false;
    if (t.requires_grad()) return true;
    return index_.count(t.payload_id()) > 0;
}

int Tape::node_of(const Tensor& t) {
    if (!t.defined()) return -1;
    auto it = index_.find(t.payload_id());
    if (it != index_.end()) return it->second;
    if (!t.requires_grad()) return -1;
    Node leaf;
    leaf.adj.assign(static_cast<std::size_t>(t.numel()), 0.0);
    leaf.leaf = t;
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(leaf));
    index_.emplace(t.payload_id(), id);
    return id;
}

void Tape::record(const Tensor& out, std::vector<int> parents, BackFn back) {
    Node node;
    node.parents = std::move(parents);
    node.adj.assign(static_cast<std::size_t>(out.numel()), 0.0);
    node.back = std::move(back);
    int id = static_cast<int>(nodes_.size());
    nodes_.push_back(std::move(node));
    index_.emplace(out.payload_id(), id);
}

void Tape::reset() {
    nodes_.clear();
    index_.clear();
}

void Tape::run(const Tensor& loss, const GradSink& sink) {
    if (loss.numel() != 1)
        throw ConfigError("backward: loss must be a scalar, got shape " + shape_str(loss.shape()));
    auto it = index_.find(loss.payload_id());
    if (it == index_.end())
        throw ConfigError("backward: loss was not recorded on the active tape");
    const int root = it->second;
    for (auto& n : nodes_) std::fill(n.adj.begin(), n.adj.end(), 0.0);
    nodes_[static_cast<std::size_t>(root)].adj[0] = 1.0;
    for (int id = root; id >= 0; --id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        if (n.back) n.back(*this, n.adj);
    }
    for (Node& n : nodes_) {
        if (n.leaf.defined()) sink(n.leaf, n.adj);
    }
}

void Tape::backward(const Tensor& loss) {
    run(loss, [](const Tensor& leaf, std::span<const double> adj) {
        Tensor t = leaf;
        auto g = t.grad();
        for (std::size_t i = 0; i < adj.size(); ++i) g[i] += adj[i];
    });
}

void Tape::backward(const Tensor& loss, const GradSink& sink) { run(loss, sink); }

void backward(const Tensor& loss) {
    Tape* t = active_tape();
    if (!t) throw ConfigError("backward: no active tape");
    t->backward(loss);
}

// ---- op helpers ----

namespace {

// Call after computing `out`. Records the node iff a tape is active and at
// least one input is tracked; `wire` receives the parent ids in input order.
template <class Wire>
void maybe_record(const Tensor& out, std::initializer_list<const Tensor*> inputs, Wire wire) {
    Tape* t = active_tape();
    if (!t) return;
    bool any = false;
    for (const Tensor* in : inputs) any = any || t->tracks(*in);
    if (!any) return;
    std::vector<int> ids;
    ids.reserve(inputs.size());
    for (const Tensor* in : inputs) ids.push_back(t->node_of(*in));
    wire(*t, ids);
}

void axpy(std::span<double> y, double a, std::span<const double> x) {
    for (std::size_t i = 0; i < x.size(); ++i) y[i] += a * x[i];
}

}  // namespace

// ---- primitives ----

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out = Tensor::zeros(a.shape());
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] + bd[i];
    maybe_record(out, {&a, &b}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p](Tape& tp, std::span<const double> g) {
            if (p[0] >= 0) axpy(tp.adjoint(p[0]), 1.0, g);
            if (p[1] >= 0) axpy(tp.adjoint(p[1]), 1.0, g);
        });
    });
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out = Tensor::zeros(a.shape());
    auto ad = a.data();
    auto bd = b.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] - bd[i];
    maybe_record(out, {&a, &b}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p](Tape& tp, std::span<const double> g) {
            if (p[0] >= 0) axpy(tp.adjoint(p[0]), 1.0, g);
            if (p[1] >= 0) axpy(tp.adjoint(p[1]), -1.0, g);
        });
    });
    return out;
}

Tensor scale(const Tensor& a, double c) {
    Tensor out = Tensor::zeros(a.shape());
    auto ad = a.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] * c;
    maybe_record(out, {&a}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, c](Tape& tp, std::span<const double> g) {
            if (p[0] >= 0) axpy(tp.adjoint(p[0]), c, g);
        });
    });
    return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
    require_2d(a, "matmul");
    require_2d(b, "matmul");
    if (a.dim(1) != b.dim(0))
        throw ConfigError("matmul: inner dimensions disagree, " + shape_str(a.shape()) + " x " +
                          shape_str(b.shape()));
    const index_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    Tensor out = Tensor::zeros({m, n});
    kernels::matmul_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
    maybe_record(out, {&a, &b}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, a, b, m, k, n](Tape& tp, std::span<const double> g) {
            // dA += g * B^T ; dB += A^T * g
            if (p[0] >= 0)
                kernels::matmul_nt_acc(g.data(), b.data().data(), tp.adjoint(p[0]).data(), m, n, k);
            if (p[1] >= 0)
                kernels::matmul_tn_acc(a.data().data(), g.data(), tp.adjoint(p[1]).data(), m, k, n);
        });
    });
    return out;
}

Tensor transpose(const Tensor& a) {
    require_2d(a, "transpose");
    const index_t r = a.dim(0), c = a.dim(1);
    Tensor out = Tensor::zeros({c, r});
    auto ad = a.data();
    auto od = out.data();
    for (index_t i = 0; i < r; ++i)
        for (index_t j = 0; j < c; ++j) od[static_cast<std::size_t>(j * r + i)] = ad[static_cast<std::size_t>(i * c + j)];
    maybe_record(out, {&a}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, r, c](Tape& tp, std::span<const double> g) {
            if (p[0] < 0) return;
            auto dst = tp.adjoint(p[0]);
            for (index_t j = 0; j < c; ++j)
                for (index_t i = 0; i < r; ++i)
                    dst[static_cast<std::size_t>(i * c + j)] += g[static_cast<std::size_t>(j * r + i)];
        });
    });
    return out;
}

Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) throw ConfigError("concat: no inputs");
    if (axis != 0 && axis != 1) throw ConfigError("concat: axis must be 0 or 1");
    for (const Tensor& p : parts) require_2d(p, "concat");
    const index_t fixed = axis == 0 ? parts[0].dim(1) : parts[0].dim(0);
    index_t total = 0;
    for (const Tensor& p : parts) {
        index_t f = axis == 0 ? p.dim(1) : p.dim(0);
        if (f != fixed)
            throw ConfigError("concat: mismatched shapes " + shape_str(parts[0].shape()) + " vs " +
                              shape_str(p.shape()));
        total += axis == 0 ? p.dim(0) : p.dim(1);
    }
    Shape oshape = axis == 0 ? Shape{total, fixed} : Shape{fixed, total};
    Tensor out = Tensor::zeros(oshape);
    auto od = out.data();
    const index_t ocols = oshape[1];
    index_t off = 0;
    for (const Tensor& p : parts) {
        auto pd = p.data();
        if (axis == 0) {
            std::copy(pd.begin(), pd.end(), od.begin() + static_cast<std::ptrdiff_t>(off * ocols));
            off += p.dim(0);
        } else {
            const index_t pc = p.dim(1);
            for (index_t i = 0; i < fixed; ++i)
                std::copy(pd.begin() + static_cast<std::ptrdiff_t>(i * pc),
                          pd.begin() + static_cast<std::ptrdiff_t>((i + 1) * pc),
                          od.begin() + static_cast<std::ptrdiff_t>(i * ocols + off));
            off += pc;
        }
    }

    Tape* t = active_tape();
    if (!t) return out;
    bool any = false;
    for (const Tensor& p : parts) any = any || t->tracks(p);
    if (!any) return out;
    std::vector<int> ids;
    std::vector<index_t> widths;
    for (const Tensor& p : parts) {
        ids.push_back(t->node_of(p));
        widths.push_back(axis == 0 ? p.dim(0) : p.dim(1));
    }
    t->record(out, ids, [ids, widths, axis, fixed, ocols](Tape& tp, std::span<const double> g) {
        index_t off = 0;
        for (std::size_t idx = 0; idx < ids.size(); ++idx) {
            const index_t w = widths[idx];
            if (ids[idx] >= 0) {
                auto dst = tp.adjoint(ids[idx]);
                if (axis == 0) {
                    for (index_t i = 0; i < w * fixed; ++i)
                        dst[static_cast<std::size_t>(i)] += g[static_cast<std::size_t>(off * ocols + i)];
                } else {
                    for (index_t i = 0; i < fixed; ++i)
                        for (index_t j = 0; j < w; ++j)
                            dst[static_cast<std::size_t>(i * w + j)] +=
                                g[static_cast<std::size_t>(i * ocols + off + j)];
                }
            }
            off += w;
        }
    });
    return out;
}

Tensor slice(const Tensor& a, int axis, index_t start, index_t len) {
    require_2d(a, "slice");
    if (axis != 0 && axis != 1) throw ConfigError("slice: axis must be 0 or 1");
    const index_t bound = a.dim(axis);
    if (start < 0 || len <= 0 || start + len > bound)
        throw ConfigError("slice: range [" + std::to_string(start) + "," +
                          std::to_string(start + len) + ") outside dimension " +
                          std::to_string(bound) + " of " + shape_str(a.shape()));
    const index_t rows = a.dim(0), cols = a.dim(1);
    Shape oshape = axis == 0 ? Shape{len, cols} : Shape{rows, len};
    Tensor out = Tensor::zeros(oshape);
    auto ad = a.data();
    auto od = out.data();
    if (axis == 0) {
        std::copy(ad.begin() + static_cast<std::ptrdiff_t>(start * cols),
                  ad.begin() + static_cast<std::ptrdiff_t>((start + len) * cols), od.begin());
    } else {
        for (index_t i = 0; i < rows; ++i)
            std::copy(ad.begin() + static_cast<std::ptrdiff_t>(i * cols + start),
                      ad.begin() + static_cast<std::ptrdiff_t>(i * cols + start + len),
                      od.begin() + static_cast<std::ptrdiff_t>(i * len));
    }
    maybe_record(out, {&a}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, axis, start, len, rows, cols](Tape& tp, std::span<const double> g) {
            if (p[0] < 0) return;
            auto dst = tp.adjoint(p[0]);
            if (axis == 0) {
                for (index_t i = 0; i < len * cols; ++i)
                    dst[static_cast<std::size_t>(start * cols + i)] += g[static_cast<std::size_t>(i)];
            } else {
                for (index_t i = 0; i < rows; ++i)
                    for (index_t j = 0; j < len; ++j)
                        dst[static_cast<std::size_t>(i * cols + start + j)] +=
                            g[static_cast<std::size_t>(i * len + j)];
            }
        });
    });
    return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
    require_2d(x, "linear");
    require_2d(w, "linear");
    if (b.ndim() != 1)
        throw ConfigError("linear: bias must be 1-d, got " + shape_str(b.shape()));
    if (x.dim(1) != w.dim(0) || w.dim(1) != b.dim(0))
        throw ConfigError("linear: shape mismatch x" + shape_str(x.shape()) + " w" +
                          shape_str(w.shape()) + " b" + shape_str(b.shape()));
    const index_t rows = x.dim(0), in = x.dim(1), out_w = w.dim(1);
    Tensor out = Tensor::zeros({rows, out_w});
    kernels::matmul_nn(x.data().data(), w.data().data(), out.data().data(), rows, in, out_w);
    auto od = out.data();
    auto bd = b.data();
    for (index_t i = 0; i < rows; ++i)
        for (index_t j = 0; j < out_w; ++j) od[static_cast<std::size_t>(i * out_w + j)] += bd[static_cast<std::size_t>(j)];
    maybe_record(out, {&x, &w, &b}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, x, w, rows, in, out_w](Tape& tp, std::span<const double> g) {
            if (p[0] >= 0)
                kernels::matmul_nt_acc(g.data(), w.data().data(), tp.adjoint(p[0]).data(), rows,
                                       out_w, in);
            if (p[1] >= 0)
                kernels::matmul_tn_acc(x.data().data(), g.data(), tp.adjoint(p[1]).data(), rows, in,
                                       out_w);
            if (p[2] >= 0) {
                auto db = tp.adjoint(p[2]);
                for (index_t i = 0; i < rows; ++i)
                    for (index_t j = 0; j < out_w; ++j)
                        db[static_cast<std::size_t>(j)] += g[static_cast<std::size_t>(i * out_w + j)];
            }
        });
    });
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    auto ad = a.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = ad[i] > 0.0 ? ad[i] : 0.0;
    maybe_record(out, {&a}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, a](Tape& tp, std::span<const double> g) {
            if (p[0] < 0) return;
            auto dst = tp.adjoint(p[0]);
            auto ad = a.data();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (ad[i] > 0.0) dst[i] += g[i];
        });
    });
    return out;
}

Tensor softmax(const Tensor& a, int axis) {
    if (a.ndim() == 1) {
        if (axis != 0) throw ConfigError("softmax: axis out of range for " + shape_str(a.shape()));
    } else if (a.ndim() == 2) {
        if (axis != 0 && axis != 1)
            throw ConfigError("softmax: axis out of range for " + shape_str(a.shape()));
    } else {
        throw ConfigError("softmax: expected 1-d or 2-d tensor, got " + shape_str(a.shape()));
    }
    const bool rowwise = a.ndim() == 1 || axis == 1;
    Tensor out = Tensor::zeros(a.shape());
    const index_t rows = a.ndim() == 1 ? 1 : a.dim(0);
    const index_t cols = a.ndim() == 1 ? a.dim(0) : a.dim(1);
    if (rowwise) {
        kernels::softmax_rows(a.data().data(), out.data().data(), rows, cols);
    } else {
        // column lanes; stride access, small tensors only
        auto ad = a.data();
        auto od = out.data();
        for (index_t j = 0; j < cols; ++j) {
            double mx = ad[static_cast<std::size_t>(j)];
            for (index_t i = 1; i < rows; ++i)
                mx = std::max(mx, ad[static_cast<std::size_t>(i * cols + j)]);
            double s = 0.0;
            for (index_t i = 0; i < rows; ++i) {
                double e = std::exp(ad[static_cast<std::size_t>(i * cols + j)] - mx);
                od[static_cast<std::size_t>(i * cols + j)] = e;
                s += e;
            }
            for (index_t i = 0; i < rows; ++i) od[static_cast<std::size_t>(i * cols + j)] /= s;
        }
    }
    maybe_record(out, {&a}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, out, rowwise, rows, cols](Tape& tp, std::span<const double> g) {
            if (p[0] < 0) return;
            auto dst = tp.adjoint(p[0]);
            auto y = out.data();
            if (rowwise) {
                for (index_t r = 0; r < rows; ++r) {
                    const std::size_t base = static_cast<std::size_t>(r * cols);
                    double dot = 0.0;
                    for (index_t j = 0; j < cols; ++j)
                        dot += g[base + static_cast<std::size_t>(j)] * y[base + static_cast<std::size_t>(j)];
                    for (index_t j = 0; j < cols; ++j)
                        dst[base + static_cast<std::size_t>(j)] +=
                            (g[base + static_cast<std::size_t>(j)] - dot) * y[base + static_cast<std::size_t>(j)];
                }
            } else {
                for (index_t j = 0; j < cols; ++j) {
                    double dot = 0.0;
                    for (index_t i = 0; i < rows; ++i) {
                        const std::size_t idx = static_cast<std::size_t>(i * cols + j);
                        dot += g[idx] * y[idx];
                    }
                    for (index_t i = 0; i < rows; ++i) {
                        const std::size_t idx = static_cast<std::size_t>(i * cols + j);
                        dst[idx] += (g[idx] - dot) * y[idx];
                    }
                }
            }
        });
    });
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_2d(x, "layer_norm");
    if (gain.ndim() != 1 || bias.ndim() != 1 || gain.dim(0) != x.dim(1) || bias.dim(0) != x.dim(1))
        throw ConfigError("layer_norm: gain/bias must be [d] matching x " + shape_str(x.shape()));
    const index_t rows = x.dim(0), cols = x.dim(1);
    Tensor out = Tensor::zeros({rows, cols});
    auto xhat = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * cols));
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    kernels::layer_norm_rows(x.data().data(), gain.data().data(), bias.data().data(),
                             out.data().data(), xhat->data(), inv_std->data(), rows, cols, eps);
    maybe_record(out, {&x, &gain, &bias}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, gain, xhat, inv_std, rows, cols](Tape& tp, std::span<const double> g) {
            const double* xh = xhat->data();
            const double* is = inv_std->data();
            auto gd = gain.data();
            for (index_t r = 0; r < rows; ++r) {
                const std::size_t base = static_cast<std::size_t>(r * cols);
                if (p[0] >= 0) {
                    double m1 = 0.0, m2 = 0.0;  // mean(dxhat), mean(dxhat*xhat)
                    for (index_t j = 0; j < cols; ++j) {
                        const double dxh = g[base + static_cast<std::size_t>(j)] * gd[static_cast<std::size_t>(j)];
                        m1 += dxh;
                        m2 += dxh * xh[base + static_cast<std::size_t>(j)];
                    }
                    m1 /= static_cast<double>(cols);
                    m2 /= static_cast<double>(cols);
                    auto dx = tp.adjoint(p[0]);
                    for (index_t j = 0; j < cols; ++j) {
                        const double dxh = g[base + static_cast<std::size_t>(j)] * gd[static_cast<std::size_t>(j)];
                        dx[base + static_cast<std::size_t>(j)] +=
                            is[r] * (dxh - m1 - xh[base + static_cast<std::size_t>(j)] * m2);
                    }
                }
                if (p[1] >= 0) {
                    auto dg = tp.adjoint(p[1]);
                    for (index_t j = 0; j < cols; ++j)
                        dg[static_cast<std::size_t>(j)] +=
                            g[base + static_cast<std::size_t>(j)] * xh[base + static_cast<std::size_t>(j)];
                }
                if (p[2] >= 0) {
                    auto db = tp.adjoint(p[2]);
                    for (index_t j = 0; j < cols; ++j)
                        db[static_cast<std::size_t>(j)] += g[base + static_cast<std::size_t>(j)];
                }
            }
        });
    });
    return out;
}

Tensor dropout(const Tensor& a, double p, std::uint64_t seed) {
    if (p < 0.0 || p >= 1.0)
        throw ConfigError("dropout: p must be in [0,1), got " + std::to_string(p));
    if (p == 0.0) return a;  // exact identity
    Tensor out = Tensor::zeros(a.shape());
    auto mask = std::make_shared<std::vector<double>>(static_cast<std::size_t>(a.numel()));
    Rng rng(seed);
    const double keep_scale = 1.0 / (1.0 - p);
    auto ad = a.data();
    auto od = out.data();
    for (std::size_t i = 0; i < od.size(); ++i) {
        const double m = rng.next_double() < p ? 0.0 : keep_scale;
        (*mask)[i] = m;
        od[i] = ad[i] * m;
    }
    maybe_record(out, {&a}, [&](Tape& t, const std::vector<int>& p_) {
        t.record(out, p_, [p_, mask](Tape& tp, std::span<const double> g) {
            if (p_[0] < 0) return;
            auto dst = tp.adjoint(p_[0]);
            for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i] * (*mask)[i];
        });
    });
    return out;
}

Tensor sum(const Tensor& a) {
    Tensor out = Tensor::zeros({1});
    auto ad = a.data();
    double s = 0.0;
    for (double v : ad) s += v;
    out.at(0) = s;
    maybe_record(out, {&a}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p](Tape& tp, std::span<const double> g) {
            if (p[0] < 0) return;
            auto dst = tp.adjoint(p[0]);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0];
        });
    });
    return out;
}

Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    Tensor out = Tensor::zeros({1});
    auto ad = a.data();
    double s = 0.0;
    for (double v : ad) s += v;
    out.at(0) = s * inv;
    maybe_record(out, {&a}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, inv](Tape& tp, std::span<const double> g) {
            if (p[0] < 0) return;
            auto dst = tp.adjoint(p[0]);
            for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0] * inv;
        });
    });
    return out;
}

Tensor cross_entropy_with_logits(const Tensor& logits, const Tensor& target) {
    require_2d(logits, "cross_entropy_with_logits");
    require_same_shape(logits, target, "cross_entropy_with_logits");
    const index_t rows = logits.dim(0), cols = logits.dim(1);
    auto probs = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows * cols));
    kernels::softmax_rows(logits.data().data(), probs->data(), rows, cols);
    auto ld = logits.data();
    auto td = target.data();
    double loss = 0.0;
    for (index_t r = 0; r < rows; ++r) {
        const std::size_t base = static_cast<std::size_t>(r * cols);
        double mx = ld[base];
        for (index_t j = 1; j < cols; ++j) mx = std::max(mx, ld[base + static_cast<std::size_t>(j)]);
        double lse = 0.0, inner = 0.0;
        for (index_t j = 0; j < cols; ++j) {
            lse += std::exp(ld[base + static_cast<std::size_t>(j)] - mx);
            inner += ld[base + static_cast<std::size_t>(j)] * td[base + static_cast<std::size_t>(j)];
        }
        loss += mx + std::log(lse) - inner;
    }
    Tensor out = Tensor::zeros({1});
    out.at(0) = loss;
    maybe_record(out, {&logits}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, probs, target, rows, cols](Tape& tp, std::span<const double> g) {
            if (p[0] < 0) return;
            auto dst = tp.adjoint(p[0]);
            auto td = target.data();
            for (std::size_t i = 0; i < dst.size(); ++i)
                dst[i] += g[0] * ((*probs)[i] - td[i]);
        });
    });
    return out;
}

Tensor squared_error(const Tensor& pred, const Tensor& target) {
    require_same_shape(pred, target, "squared_error");
    auto pd = pred.data();
    auto td = target.data();
    double s = 0.0;
    for (std::size_t i = 0; i < pd.size(); ++i) {
        const double d = pd[i] - td[i];
        s += d * d;
    }
    Tensor out = Tensor::zeros({1});
    out.at(0) = s;
    maybe_record(out, {&pred, &target}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, pred, target](Tape& tp, std::span<const double> g) {
            auto pd = pred.data();
            auto td = target.data();
            if (p[0] >= 0) {
                auto dst = tp.adjoint(p[0]);
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += g[0] * 2.0 * (pd[i] - td[i]);
            }
            if (p[1] >= 0) {
                auto dst = tp.adjoint(p[1]);
                for (std::size_t i = 0; i < dst.size(); ++i) dst[i] -= g[0] * 2.0 * (pd[i] - td[i]);
            }
        });
    });
    return out;
}

Tensor rows_l2_sum(const Tensor& a) {
    require_2d(a, "rows_l2_sum");
    const index_t rows = a.dim(0), cols = a.dim(1);
    auto norms = std::make_shared<std::vector<double>>(static_cast<std::size_t>(rows));
    auto ad = a.data();
    double total = 0.0;
    for (index_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (index_t j = 0; j < cols; ++j) {
            const double v = ad[static_cast<std::size_t>(r * cols + j)];
            s += v * v;
        }
        (*norms)[static_cast<std::size_t>(r)] = std::sqrt(s);
        total += (*norms)[static_cast<std::size_t>(r)];
    }
    Tensor out = Tensor::zeros({1});
    out.at(0) = total;
    maybe_record(out, {&a}, [&](Tape& t, const std::vector<int>& p) {
        t.record(out, p, [p, a, norms, rows, cols](Tape& tp, std::span<const double> g) {
            if (p[0] < 0) return;
            auto dst = tp.adjoint(p[0]);
            auto ad = a.data();
            for (index_t r = 0; r < rows; ++r) {
                const double n = (*norms)[static_cast<std::size_t>(r)];
                if (n == 0.0) continue;  // subgradient 0 at the kink
                const double s = g[0] / n;
                for (index_t j = 0; j < cols; ++j)
                    dst[static_cast<std::size_t>(r * cols + j)] += s * ad[static_cast<std::size_t>(r * cols + j)];
            }
        });
    });
    return out;
}

std::vector<int> argmax_rows(const Tensor& a) {
    require_2d(a, "argmax_rows");
    const index_t rows = a.dim(0), cols = a.dim(1);
    std::vector<int> out(static_cast<std::size_t>(rows));
    auto ad = a.data();
    for (index_t r = 0; r < rows; ++r) {
        index_t best = 0;
        for (index_t j = 1; j < cols; ++j)
            if (ad[static_cast<std::size_t>(r * cols + j)] > ad[static_cast<std::size_t>(r * cols + best)]) best = j;
        out[static_cast<std::size_t>(r)] = static_cast<int>(best);
    }
    return out;
}

Tensor one_hot_row(int cls, index_t n_classes) {
    if (cls < 0 || cls >= n_classes)
        throw DataError("one_hot: class " + std::to_string(cls) + " outside [0," +
                        std::to_string(n_classes) + ")");
    Tensor t = Tensor::zeros({n_classes});
    t.at(cls) = 1.0;
    return t;
}

}  // namespace kinseq
