#include "pgan/tensor.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "gemm.hpp"

namespace pgan {

int64_t shape_numel(const Shape& shape) {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ", ";
        os << shape[i];
    }
    os << "]";
    return os.str();
}

namespace {

void validate_shape(const Shape& shape) {
    if (shape.empty()) throw ShapeError("tensor shape must have at least one dim");
    for (int64_t d : shape)
        if (d < 1) throw ShapeError("tensor dims must be >= 1, got " + shape_str(shape));
}

void require_defined(const Tensor& t, const char* who) {
    if (!t.defined()) throw ShapeError(std::string(who) + ": undefined tensor");
}

void require_same_shape(const char* who, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(who) + ": shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

bool tracked(const Tensor& t) { return t.impl()->on_graph; }

// Accumulation target for a VJP; allocates the grad buffer on first use.
std::vector<float>& grad_of(const std::shared_ptr<TensorImpl>& impl) {
    if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0f);
    return impl->grad;
}

}  // namespace

Tensor::Tensor(Shape shape, float fill) {
    validate_shape(shape);
    impl_ = std::make_shared<TensorImpl>();
    impl_->data.assign(static_cast<size_t>(shape_numel(shape)), fill);
    impl_->shape = std::move(shape);
}

Tensor::Tensor(Shape shape, std::vector<float> data) {
    validate_shape(shape);
    if (static_cast<int64_t>(data.size()) != shape_numel(shape))
        throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape " + shape_str(shape));
    impl_ = std::make_shared<TensorImpl>();
    impl_->shape = std::move(shape);
    impl_->data = std::move(data);
}

Tensor& Tensor::set_requires_grad(bool value) {
    impl_->requires_grad = value;
    if (value) {
        impl_->on_graph = true;
        ensure_grad();
    }
    return *this;
}

void Tensor::ensure_grad() {
    if (impl_->grad.empty()) impl_->grad.assign(impl_->data.size(), 0.0f);
}

void Tensor::zero_grad() {
    if (impl_->grad.empty())
        impl_->grad.assign(impl_->data.size(), 0.0f);
    else
        std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f);
}

float Tensor::item() const {
    if (!defined() || numel() != 1) throw ContractError("item(): tensor is not scalar");
    return impl_->data[0];
}

Tensor Tensor::clone() const {
    require_defined(*this, "clone");
    return Tensor(impl_->shape, impl_->data);
}

void Tape::record(std::shared_ptr<TensorImpl> output, std::function<void()> step) {
    output->on_graph = true;
    nodes_.push_back(Node{std::move(output), std::move(step)});
}

void Tape::backward(const Tensor& loss) {
    if (!loss.defined() || loss.numel() != 1)
        throw ContractError("backward: loss must be a scalar tensor");
    if (!nodes_.empty()) {
        bool found = false;
        for (const auto& n : nodes_)
            if (n.output.get() == loss.impl()) {
                found = true;
                break;
            }
        if (!found && !loss.requires_grad())
            throw ContractError("backward: loss was not produced on this tape");
    }
    grad_of(loss.impl_ptr())[0] += 1.0f;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
        if (it->output->grad.empty()) continue;  // nothing flowed into this node
        it->step();
    }
}

BatchNormState BatchNormState::make(int64_t channels) {
    BatchNormState s;
    s.running_mean = Tensor::zeros({channels});
    s.running_var = Tensor::full({channels}, 1.0f);
    return s;
}

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

namespace {

template <class Fwd, class Bwd>
Tensor binary_op(const char* name, Tape* tape, const Tensor& a, const Tensor& b, Fwd fwd, Bwd bwd) {
    require_defined(a, name);
    require_defined(b, name);
    require_same_shape(name, a, b);
    Tensor out(a.shape());
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i], pb[i]);
    if (tape && (tracked(a) || tracked(b))) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        const bool need_a = tracked(a), need_b = tracked(b);
        tape->record(oi, [ai, bi, oi, need_a, need_b, bwd, n] {
            const float* g = oi->grad.data();
            float* ga = need_a ? grad_of(ai).data() : nullptr;
            float* gb = need_b ? grad_of(bi).data() : nullptr;
            for (int64_t i = 0; i < n; ++i) bwd(g[i], ai->data[i], bi->data[i], ga ? ga + i : nullptr, gb ? gb + i : nullptr);
        });
    }
    return out;
}

template <class Fwd, class Bwd>
Tensor unary_op(const char* name, Tape* tape, const Tensor& a, Fwd fwd, Bwd bwd) {
    require_defined(a, name);
    Tensor out(a.shape());
    const float* pa = a.data();
    float* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
    if (tape && tracked(a)) {
        auto ai = a.impl_ptr(), oi = out.impl_ptr();
        tape->record(oi, [ai, oi, bwd, n] {
            const float* g = oi->grad.data();
            float* ga = grad_of(ai).data();
            for (int64_t i = 0; i < n; ++i) ga[i] += bwd(g[i], ai->data[i], oi->data[i]);
        });
    }
    return out;
}

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    return binary_op(
        "add", tape, a, b, [](float x, float y) { return x + y; },
        [](float g, float, float, float* ga, float* gb) {
            if (ga) *ga += g;
            if (gb) *gb += g;
        });
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
    return binary_op(
        "sub", tape, a, b, [](float x, float y) { return x - y; },
        [](float g, float, float, float* ga, float* gb) {
            if (ga) *ga += g;
            if (gb) *gb -= g;
        });
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    return binary_op(
        "mul", tape, a, b, [](float x, float y) { return x * y; },
        [](float g, float x, float y, float* ga, float* gb) {
            if (ga) *ga += g * y;
            if (gb) *gb += g * x;
        });
}

Tensor add(Tape* tape, const Tensor& a, float b) {
    return unary_op(
        "add", tape, a, [b](float x) { return x + b; }, [](float g, float, float) { return g; });
}

Tensor sub(Tape* tape, const Tensor& a, float b) {
    return unary_op(
        "sub", tape, a, [b](float x) { return x - b; }, [](float g, float, float) { return g; });
}

Tensor scale(Tape* tape, const Tensor& a, float s) {
    return unary_op(
        "scale", tape, a, [s](float x) { return x * s; }, [s](float g, float, float) { return g * s; });
}

// ---------------------------------------------------------------------------
// activations
// ---------------------------------------------------------------------------

Tensor leaky_relu(Tape* tape, const Tensor& x, float slope) {
    return unary_op(
        "leaky_relu", tape, x, [slope](float v) { return v >= 0.0f ? v : slope * v; },
        [slope](float g, float v, float) { return v >= 0.0f ? g : slope * g; });
}

Tensor tanh(Tape* tape, const Tensor& x) {
    return unary_op(
        "tanh", tape, x, [](float v) { return std::tanh(v); },
        [](float g, float, float y) { return g * (1.0f - y * y); });
}

Tensor sigmoid(Tape* tape, const Tensor& x) {
    return unary_op(
        "sigmoid", tape, x, [](float v) { return 1.0f / (1.0f + std::exp(-v)); },
        [](float g, float, float y) { return g * y * (1.0f - y); });
}

// ---------------------------------------------------------------------------
// matmul / linear
// ---------------------------------------------------------------------------

namespace {

void require_matrix(const char* who, const Tensor& t) {
    if (t.ndim() != 2) throw ShapeError(std::string(who) + ": expected 2-D tensor, got " + shape_str(t.shape()));
}

}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    require_defined(a, "matmul");
    require_defined(b, "matmul");
    require_matrix("matmul", a);
    require_matrix("matmul", b);
    if (a.dim(1) != b.dim(0))
        throw ShapeError("matmul: inner dims disagree, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const int m = static_cast<int>(a.dim(0)), k = static_cast<int>(a.dim(1)), n = static_cast<int>(b.dim(1));
    Tensor out(Shape{m, n});
    detail::sgemm_nn(m, k, n, a.data(), b.data(), out.data());
    if (tape && (tracked(a) || tracked(b))) {
        auto ai = a.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        const bool need_a = tracked(a), need_b = tracked(b);
        tape->record(oi, [ai, bi, oi, need_a, need_b, m, k, n] {
            const float* g = oi->grad.data();
            if (need_a)  // dA += g . B^T
                detail::sgemm_nt(m, n, k, g, bi->data.data(), grad_of(ai).data(), 1.0f);
            if (need_b)  // dB += A^T . g
                detail::sgemm_tn(k, m, n, ai->data.data(), g, grad_of(bi).data(), 1.0f);
        });
    }
    return out;
}

Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    require_defined(x, "linear");
    require_defined(w, "linear");
    require_defined(b, "linear");
    require_matrix("linear", x);
    require_matrix("linear", w);
    if (x.dim(1) != w.dim(0))
        throw ShapeError("linear: inner dims disagree, " + shape_str(x.shape()) + " vs " + shape_str(w.shape()));
    if (b.ndim() != 1 || b.dim(0) != w.dim(1))
        throw ShapeError("linear: bias shape " + shape_str(b.shape()) + " does not match output width " +
                         std::to_string(w.dim(1)));
    const int m = static_cast<int>(x.dim(0)), k = static_cast<int>(x.dim(1)), n = static_cast<int>(w.dim(1));
    Tensor out(Shape{m, n});
    detail::sgemm_nn(m, k, n, x.data(), w.data(), out.data());
    float* po = out.data();
    const float* pb = b.data();
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) po[static_cast<size_t>(i) * n + j] += pb[j];
    if (tape && (tracked(x) || tracked(w) || tracked(b))) {
        auto xi = x.impl_ptr(), wi = w.impl_ptr(), bi = b.impl_ptr(), oi = out.impl_ptr();
        const bool need_x = tracked(x), need_w = tracked(w), need_b = tracked(b);
        tape->record(oi, [xi, wi, bi, oi, need_x, need_w, need_b, m, k, n] {
            const float* g = oi->grad.data();
            if (need_x) detail::sgemm_nt(m, n, k, g, wi->data.data(), grad_of(xi).data(), 1.0f);
            if (need_w) detail::sgemm_tn(k, m, n, xi->data.data(), g, grad_of(wi).data(), 1.0f);
            if (need_b) {
                float* gb = grad_of(bi).data();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) gb[j] += g[static_cast<size_t>(i) * n + j];
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reshape / concat
// ---------------------------------------------------------------------------

Tensor reshape(Tape* tape, const Tensor& x, Shape new_shape) {
    require_defined(x, "reshape");
    validate_shape(new_shape);
    if (shape_numel(new_shape) != x.numel())
        throw ShapeError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(new_shape));
    Tensor out(std::move(new_shape), x.vec());
    if (tape && tracked(x)) {
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        tape->record(oi, [xi, oi] {
            const float* g = oi->grad.data();
            float* gx = grad_of(xi).data();
            for (size_t i = 0; i < oi->grad.size(); ++i) gx[i] += g[i];
        });
    }
    return out;
}

Tensor concat(Tape* tape, const std::vector<Tensor>& tensors, int axis) {
    if (tensors.empty()) throw ShapeError("concat: no inputs");
    for (const auto& t : tensors) require_defined(t, "concat");
    const int nd = tensors[0].ndim();
    if (axis < 0 || axis >= nd) throw ShapeError("concat: axis " + std::to_string(axis) + " out of range");
    Shape out_shape = tensors[0].shape();
    for (size_t i = 1; i < tensors.size(); ++i) {
        const Shape& s = tensors[i].shape();
        if (static_cast<int>(s.size()) != nd)
            throw ShapeError("concat: rank mismatch " + shape_str(out_shape) + " vs " + shape_str(s));
        for (int d = 0; d < nd; ++d) {
            if (d == axis) continue;
            if (s[static_cast<size_t>(d)] != tensors[0].dim(d))
                throw ShapeError("concat: non-axis dims disagree, " + shape_str(tensors[0].shape()) + " vs " +
                                 shape_str(s));
        }
        out_shape[static_cast<size_t>(axis)] += s[static_cast<size_t>(axis)];
    }

    int64_t outer = 1, inner = 1;
    for (int d = 0; d < axis; ++d) outer *= tensors[0].dim(d);
    for (int d = axis + 1; d < nd; ++d) inner *= tensors[0].dim(d);
    const int64_t out_axis = out_shape[static_cast<size_t>(axis)];

    Tensor out(out_shape);
    float* po = out.data();
    int64_t offset = 0;  // running start along the axis
    std::vector<int64_t> offsets(tensors.size());
    for (size_t t = 0; t < tensors.size(); ++t) {
        offsets[t] = offset;
        const int64_t span = tensors[t].dim(axis) * inner;
        const float* src = tensors[t].data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(po + (o * out_axis + offset) * inner, src + o * span, static_cast<size_t>(span) * sizeof(float));
        offset += tensors[t].dim(axis);
    }

    bool any = false;
    for (const auto& t : tensors) any = any || tracked(t);
    if (tape && any) {
        std::vector<std::shared_ptr<TensorImpl>> ins;
        std::vector<bool> need;
        std::vector<int64_t> spans;
        for (const auto& t : tensors) {
            ins.push_back(t.impl_ptr());
            need.push_back(tracked(t));
            spans.push_back(t.dim(axis) * inner);
        }
        auto oi = out.impl_ptr();
        tape->record(oi, [ins, need, spans, offsets, oi, outer, inner, out_axis] {
            const float* g = oi->grad.data();
            for (size_t t = 0; t < ins.size(); ++t) {
                if (!need[t]) continue;
                float* gt = grad_of(ins[t]).data();
                for (int64_t o = 0; o < outer; ++o) {
                    const float* gsrc = g + (o * out_axis + offsets[t]) * inner;
                    float* gdst = gt + o * spans[t];
                    for (int64_t i = 0; i < spans[t]; ++i) gdst[i] += gsrc[i];
                }
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// reductions / losses
// ---------------------------------------------------------------------------

Tensor reduce_mean(Tape* tape, const Tensor& x) {
    require_defined(x, "reduce_mean");
    const int64_t n = x.numel();
    if (n == 0) throw ShapeError("reduce_mean: empty tensor");
    double acc = 0.0;
    const float* px = x.data();
    for (int64_t i = 0; i < n; ++i) acc += px[i];
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    if (tape && tracked(x)) {
        auto xi = x.impl_ptr(), oi = out.impl_ptr();
        tape->record(oi, [xi, oi, n] {
            const float g = oi->grad[0] / static_cast<float>(n);
            float* gx = grad_of(xi).data();
            for (int64_t i = 0; i < n; ++i) gx[i] += g;
        });
    }
    return out;
}

Tensor bce_loss(Tape* tape, const Tensor& pred, const Tensor& target) {
    require_defined(pred, "bce_loss");
    require_defined(target, "bce_loss");
    require_same_shape("bce_loss", pred, target);
    constexpr float kEps = 1e-7f;
    const int64_t n = pred.numel();
    const float* pp = pred.data();
    const float* pt = target.data();
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        float p = pp[i];
        p = p < kEps ? kEps : (p > 1.0f - kEps ? 1.0f - kEps : p);
        acc -= static_cast<double>(pt[i]) * std::log(static_cast<double>(p)) +
               (1.0 - static_cast<double>(pt[i])) * std::log(1.0 - static_cast<double>(p));
    }
    Tensor out = Tensor::scalar(static_cast<float>(acc / static_cast<double>(n)));
    if (tape && tracked(pred)) {
        auto pi = pred.impl_ptr(), ti = target.impl_ptr(), oi = out.impl_ptr();
        tape->record(oi, [pi, ti, oi, n] {
            const float g = oi->grad[0] / static_cast<float>(n);
            float* gp = grad_of(pi).data();
            for (int64_t i = 0; i < n; ++i) {
                const float raw = pi->data[i];
                if (raw <= kEps || raw >= 1.0f - kEps) continue;  // clamped flat region
                const float t = ti->data[i];
                gp[i] += g * (-t / raw + (1.0f - t) / (1.0f - raw));
            }
        });
    }
    return out;
}

bool all_finite(const Tensor& t) {
    if (!t.defined()) return false;
    for (float v : t.vec())
        if (!std::isfinite(v)) return false;
    return true;
}

float finite_diff_check(const std::function<Tensor(Tape*, const Tensor&)>& f, const Tensor& x, float eps, float atol) {
    Tensor probe = x.clone();
    probe.set_requires_grad(true);
    Tape tape;
    Tensor y = f(&tape, probe);
    if (y.numel() != 1) throw ContractError("finite_diff_check: f must return a scalar");
    tape.backward(y);
    const std::vector<float> analytic = probe.grad_vec();

    Tensor work = x.clone();
    float max_err = 0.0f;
    for (int64_t i = 0; i < x.numel(); ++i) {
        const float saved = work.vec()[static_cast<size_t>(i)];
        work.vec()[static_cast<size_t>(i)] = saved + eps;
        const double up = static_cast<double>(f(nullptr, work).item());
        work.vec()[static_cast<size_t>(i)] = saved - eps;
        const double down = static_cast<double>(f(nullptr, work).item());
        work.vec()[static_cast<size_t>(i)] = saved;
        const double numeric = (up - down) / (2.0 * static_cast<double>(eps));
        const double a = static_cast<double>(analytic[static_cast<size_t>(i)]);
        const double denom = std::max({std::abs(a), std::abs(numeric), static_cast<double>(atol)});
        max_err = std::max(max_err, static_cast<float>(std::abs(a - numeric) / denom));
    }
    return max_err;
}

}  // namespace pgan
