#pragma once

#include <functional>
#include <memory>
#include <vector>

#include "jscc/tensor.hpp"

namespace jscc {
namespace ag {

// Reverse-mode automatic differentiation over Tensor values. A forward pass
// builds a DAG of Nodes; Var is a cheap shared handle. backward() walks the
// graph once in reverse topological order, accumulating gradients into every
// node with requires_grad.
struct Node {
    Tensor value;
    Tensor grad;
    bool requires_grad = false;
    bool grad_alloc = false;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;

    Tensor& ensure_grad() {
        if (!grad_alloc) {
            grad = Tensor(value.shape(), 0.0);
            grad_alloc = true;
        }
        return grad;
    }
};

class Var {
  public:
    Var() = default;
    explicit Var(Tensor value, bool requires_grad = false)
        : n_(std::make_shared<Node>()) {
        n_->value = std::move(value);
        n_->requires_grad = requires_grad;
    }

    bool defined() const { return static_cast<bool>(n_); }
    const Tensor& value() const { return n_->value; }
    Tensor& value_mut() { return n_->value; }
    const Tensor& grad() const { return n_->grad; }
    bool requires_grad() const { return n_ && n_->requires_grad; }
    std::shared_ptr<Node> node() const { return n_; }

    void zero_grad() {
        if (n_ && n_->grad_alloc) n_->grad.fill(0.0);
    }

    // Root must be a single-element tensor; seeds d(root)/d(root) = 1.
    void backward() const;

    static Var from_node(std::shared_ptr<Node> n) {
        Var v;
        v.n_ = std::move(n);
        return v;
    }

  private:
    std::shared_ptr<Node> n_;
};

inline Var constant(Tensor t) { return Var(std::move(t), false); }

// Elementwise, same shape.
Var add(const Var& a, const Var& b);
Var mul(const Var& a, const Var& b);
// ca*a + cb*b elementwise withs constant coefficients.
Var axpy(const Var& a, const Var& b, double ca, double cb);
Var mul_scalar(const Var& a, double s);
// (x + shift)^p elementwise; x + shift must stay positive.
Var pow_shift(const Var& a, double p, double shift);
Var sigmoid(const Var& a);
Var relu(const Var& a);
// Per-channel parametric ReLU on (B,C,H,W); slope has shape (C).
Var prelu(const Var& x, const Var& slope);

// Shape ops.
Var reshape(const Var& a, std::vector<size_t> shape);
Var concat_channels(const Var& a, const Var& b);  // (B,C1,H,W)+(B,C2,H,W)
Var concat_cols(const Var& a, const Var& b);      // (B,m)+(B,n)
Var pixel_shuffle(const Var& x, size_t r);        // (B,C*r^2,H,W) -> (B,C,rH,rW)

// Linear algebra / conv.
Var dense(const Var& x, const Var& w, const Var& bias);  // (B,m) x (n,m) -> (B,n)
Var conv2d(const Var& x, const Var& w, const Var& bias, size_t stride, size_t pad);
Var global_avg_pool(const Var& x);                  // (B,C,H,W) -> (B,C)
Var scale_channels(const Var& x, const Var& g);     // gates (B,C)

// Rescale each row of (B,M) so its sum of squares equals target_sq
// (M = 2k reals packing k complex symbols at unit average power when
// target_sq = k). Throws DomainError on an all-zero row.
Var power_normalize_rows(const Var& x, double target_sq);

// Reductions.
Var mse(const Var& a, const Var& b);  // scalar: mean squared difference
Var mean_all(const Var& a);

}  // namespace ag
}  // namespace jscc
