#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "pgan/errors.hpp"

namespace pgan {

using Shape = std::vector<int64_t>;

int64_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first needed
    bool requires_grad = false;
    bool on_graph = false;  // requires_grad, or produced by a recorded op
};

// Dense f32 tensor, row-major, NCHW for 4-D. Value-semantic handle onto a
// shared buffer; copies of a Tensor alias the same storage.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, float fill = 0.0f);
    Tensor(Shape shape, std::vector<float> data);

    static Tensor zeros(Shape shape) { return Tensor(std::move(shape), 0.0f); }
    static Tensor full(Shape shape, float value) { return Tensor(std::move(shape), value); }
    static Tensor scalar(float value) { return Tensor(Shape{1}, std::vector<float>{value}); }
    static Tensor of(std::vector<float> data, Shape shape) { return Tensor(std::move(shape), std::move(data)); }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int ndim() const { return static_cast<int>(impl_->shape.size()); }
    int64_t dim(int i) const { return impl_->shape[static_cast<size_t>(i)]; }
    int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

    float* data() { return impl_->data.data(); }
    const float* data() const { return impl_->data.data(); }
    std::vector<float>& vec() { return impl_->data; }
    const std::vector<float>& vec() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool value);
    bool has_grad() const { return !impl_->grad.empty(); }
    void ensure_grad();
    void zero_grad();
    float* grad() { return impl_->grad.data(); }
    const float* grad() const { return impl_->grad.data(); }
    std::vector<float>& grad_vec() { return impl_->grad; }
    const std::vector<float>& grad_vec() const { return impl_->grad; }

    // Scalar read; ContractError unless numel() == 1.
    float item() const;

    // Deep copy of the data buffer (no grad, no graph flags).
    Tensor clone() const;

    TensorImpl* impl() const { return impl_.get(); }
    const std::shared_ptr<TensorImpl>& impl_ptr() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// Wengert list: ops append in execution order, backward replays in reverse.
// A tape and the tensors recorded on it belong to one logical thread.
class Tape {
public:
    void record(std::shared_ptr<TensorImpl> output, std::function<void()> step);

    // Seeds d(loss)/d(loss) = 1 and accumulates vector-Jacobian products into
    // the grad buffer of every tensor on a path from a requires_grad leaf.
    void backward(const Tensor& loss);

    size_t size() const { return nodes_.size(); }
    void clear() { nodes_.clear(); }

private:
    struct Node {
        std::shared_ptr<TensorImpl> output;
        std::function<void()> step;
    };
    std::vector<Node> nodes_;
};

enum class BnMode { Train, Eval };

struct BatchNormState {
    Tensor running_mean;  // [C], starts at 0
    Tensor running_var;   // [C], starts at 1

    static BatchNormState make(int64_t channels);
};

// ---- elementwise ----
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor add(Tape* tape, const Tensor& a, float b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, float b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, float s);

// ---- linear algebra ----
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);                    // [m,k]x[k,n]
Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b);  // x.w + row bias

// ---- structure ----
Tensor reshape(Tape* tape, const Tensor& x, Shape new_shape);
Tensor concat(Tape* tape, const std::vector<Tensor>& tensors, int axis);

// ---- activations ----
Tensor leaky_relu(Tape* tape, const Tensor& x, float slope);
Tensor tanh(Tape* tape, const Tensor& x);
Tensor sigmoid(Tape* tape, const Tensor& x);

// ---- convolution ----
// x[N,Cin,H,W], w[Cout,Cin,kh,kw], bias[Cout]; zero padding.
Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);
// x[N,Cin,H,W], w[Cin,Cout,kh,kw], bias[Cout]; adjoint of conv2d.
Tensor conv_transpose2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad);

// ---- normalization ----
Tensor batch_norm2d(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    BatchNormState& stats, BnMode mode, float eps = 1e-5f, float momentum = 0.1f);

// ---- losses / reductions ----
// mean over elements of -[t.ln(p) + (1-t).ln(1-p)], p clamped to [1e-7, 1-1e-7]
Tensor bce_loss(Tape* tape, const Tensor& pred, const Tensor& target);
Tensor reduce_mean(Tape* tape, const Tensor& x);

bool all_finite(const Tensor& t);

// Central-difference check of autodiff gradients. f must be a pure, scalar
// valued function of x; returns max over coordinates of
// |a - n| / max(|a|, |n|, atol). Differences are taken in f64, but f itself
// is f32: coordinates whose true gradient sits near the rounding noise floor
// ulp(f)/2eps would otherwise trip the check, so atol sets the magnitude
// below which agreement is judged absolutely.
float finite_diff_check(const std::function<Tensor(Tape*, const Tensor&)>& f, const Tensor& x, float eps,
                        float atol = 1e-4f);

}  // namespace pgan
