#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kinseq/common.hpp"
#include "kinseq/kernels.hpp"

namespace kinseq {

using Shape = std::vector<index_t>;

std::string shape_str(const Shape& s);

// Dense float64 n-d array. Handles share the underlying payload, so copying
// a Tensor is cheap and a parameter handed to the optimizer and to a forward
// pass is the same storage. Gradients for requires_grad tensors accumulate
// in the payload across backward() calls until zero_grad().
class Tensor {
 public:
    Tensor() = default;

    static Tensor zeros(Shape shape);
    static Tensor full(Shape shape, double value);
    static Tensor from(Shape shape, std::vector<double> values);
    // leaf with gradient tracking (model parameters)
    static Tensor param(Shape shape);
    static Tensor param(Shape shape, std::vector<double> values);

    bool defined() const { return static_cast<bool>(p_); }
    const Shape& shape() const { return p_->shape; }
    int ndim() const { return static_cast<int>(p_->shape.size()); }
    index_t dim(int i) const { return p_->shape[static_cast<std::size_t>(i)]; }
    index_t numel() const { return static_cast<index_t>(p_->values.size()); }

    std::span<double> data() { return p_->values; }
    std::span<const double> data() const { return p_->values; }

    bool requires_grad() const { return p_ && p_->requires_grad; }
    std::span<double> grad();
    std::span<const double> grad() const;
    void zero_grad();

    double at(index_t i) const { return p_->values[static_cast<std::size_t>(i)]; }
    double at(index_t i, index_t j) const {
        return p_->values[static_cast<std::size_t>(i * p_->shape[1] + j)];
    }
    double& at(index_t i) { return p_->values[static_cast<std::size_t>(i)]; }
    double& at(index_t i, index_t j) {
        return p_->values[static_cast<std::size_t>(i * p_->shape[1] + j)];
    }

    // identity of the underlying storage; used as the tape key
    const void* payload_id() const { return p_.get(); }

 private:
    struct Payload {
        Shape shape;
        std::vector<double> values;
        std::vector<double> grad;  // sized like values iff requires_grad
        bool requires_grad = false;
    };
    std::shared_ptr<Payload> p_;

    static Tensor make(Shape shape, std::vector<double> values, bool requires_grad);
};

// Recorded computation graph for one forward pass. Ops executed while a
// TapeScope is active append nodes in topological (insertion) order;
// backward() walks them in reverse. Resetting the tape never touches tensor
// values, only the recording. A tape must only ever be used by one thread.
class Tape {
 public:
    using BackFn = std::function<void(Tape&, std::span<const double> out_adj)>;
    using GradSink = std::function<void(const Tensor& leaf, std::span<const double> adj)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    // Propagates from a scalar loss and adds each reachable requires_grad
    // leaf's adjoint into its .grad. Repeated calls accumulate.
    void backward(const Tensor& loss);
    // Same walk, but leaf adjoints go to the sink instead of the tensors.
    // Used by the batch-parallel trainer to keep per-sample gradients apart.
    void backward(const Tensor& loss, const GradSink& sink);

    void reset();
    std::size_t node_count() const { return nodes_.size(); }

    // --- recording interface used by the ops ---
    bool tracks(const Tensor& t) const;
    // node id of t, registering a leaf when t requires grad; -1 for constants
    int node_of(const Tensor& t);
    void record(const Tensor& out, std::vector<int> parents, BackFn back);
    std::span<double> adjoint(int id) { return nodes_[static_cast<std::size_t>(id)].adj; }

 private:
    struct Node {
        std::vector<int> parents;
        std::vector<double> adj;
        BackFn back;   // empty for leaves
        Tensor leaf;   // set for leaves only
    };
    std::vector<Node> nodes_;
    std::unordered_map<const void*, int> index_;

    void run(const Tensor& loss, const GradSink& sink);
};

Tape* active_tape();

class TapeScope {
 public:
    explicit TapeScope(Tape& tape);
    ~TapeScope();
    TapeScope(const TapeScope&) = delete;
    TapeScope& operator=(const TapeScope&) = delete;

 private:
    Tape* prev_;
};

// backward through the tape that recorded `loss` (the active one)
void backward(const Tensor& loss);

// ---- differentiable primitives ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double c);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor concat(const std::vector<Tensor>& parts, int axis);
Tensor slice(const Tensor& a, int axis, index_t start, index_t len);
// x[T x in] * w[in x out] + b[out] broadcast over rows
Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b);
Tensor relu(const Tensor& a);
Tensor softmax(const Tensor& a, int axis);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = 1e-9);
// inverted dropout; p == 0 is the identity, fixed seed fixes the mask
Tensor dropout(const Tensor& a, double p, std::uint64_t seed);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
// sum_t [ logsumexp(logits_t) - <logits_t, target_t> ]; targets are constants
Tensor cross_entropy_with_logits(const Tensor& logits, const Tensor& target);
Tensor squared_error(const Tensor& pred, const Tensor& target);
// sum over rows of the row's Euclidean norm
Tensor rows_l2_sum(const Tensor& a);

// non-differentiable helpers
std::vector<int> argmax_rows(const Tensor& a);
Tensor one_hot_row(int cls, index_t n_classes);

}  // namespace kinseq
