#include <cmath>
#include <cstring>
#include <vector>

#include "gemm.hpp"
#include "pgan/tensor.hpp"

namespace pgan {

namespace {

struct ConvGeom {
    int n, c, h, w;      // image dims
    int kh, kw;          // kernel
    int stride, pad;
    int oh, ow;          // sliding positions
    int64_t patches() const { return static_cast<int64_t>(n) * oh * ow; }
    int64_t ckk() const { return static_cast<int64_t>(c) * kh * kw; }
};

// col[c*kh*kw + ky*kw + kx][(n*oh + oy)*ow + ox] = img[n,c,oy*s-p+ky,ox*s-p+kx] (0 outside)
void im2col(const float* img, const ConvGeom& g, float* col) {
    const int64_t np = g.patches();
    for (int ci = 0; ci < g.c; ++ci)
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx) {
                float* row = col + ((static_cast<int64_t>(ci) * g.kh + ky) * g.kw + kx) * np;
                for (int n = 0; n < g.n; ++n) {
                    const float* plane = img + (static_cast<int64_t>(n) * g.c + ci) * g.h * g.w;
                    for (int oy = 0; oy < g.oh; ++oy) {
                        const int iy = oy * g.stride - g.pad + ky;
                        float* dst = row + (static_cast<int64_t>(n) * g.oh + oy) * g.ow;
                        if (iy < 0 || iy >= g.h) {
                            std::memset(dst, 0, static_cast<size_t>(g.ow) * sizeof(float));
                            continue;
                        }
                        const float* src = plane + static_cast<int64_t>(iy) * g.w;
                        for (int ox = 0; ox < g.ow; ++ox) {
                            const int ix = ox * g.stride - g.pad + kx;
                            dst[ox] = (ix < 0 || ix >= g.w) ? 0.0f : src[ix];
                        }
                    }
                }
            }
}

// Adjoint of im2col: scatter-add column entries back onto the image.
void col2im(const float* col, const ConvGeom& g, float* img) {
    const int64_t np = g.patches();
    for (int ci = 0; ci < g.c; ++ci)
        for (int ky = 0; ky < g.kh; ++ky)
            for (int kx = 0; kx < g.kw; ++kx) {
                const float* row = col + ((static_cast<int64_t>(ci) * g.kh + ky) * g.kw + kx) * np;
                for (int n = 0; n < g.n; ++n) {
                    float* plane = img + (static_cast<int64_t>(n) * g.c + ci) * g.h * g.w;
                    for (int oy = 0; oy < g.oh; ++oy) {
                        const int iy = oy * g.stride - g.pad + ky;
                        if (iy < 0 || iy >= g.h) continue;
                        const float* src = row + (static_cast<int64_t>(n) * g.oh + oy) * g.ow;
                        float* dst = plane + static_cast<int64_t>(iy) * g.w;
                        for (int ox = 0; ox < g.ow; ++ox) {
                            const int ix = ox * g.stride - g.pad + kx;
                            if (ix >= 0 && ix < g.w) dst[ix] += src[ox];
                        }
                    }
                }
            }
}

// NCHW -> [C][N*H*W] with patch index (n*h + y)*w + x; matches im2col columns.
void to_channel_major(const float* img, int n, int c, int64_t hw, float* mat) {
    for (int i = 0; i < n; ++i)
        for (int ci = 0; ci < c; ++ci)
            std::memcpy(mat + (static_cast<int64_t>(ci) * n + i) * hw,
                        img + (static_cast<int64_t>(i) * c + ci) * hw, static_cast<size_t>(hw) * sizeof(float));
}

void add_from_channel_major(const float* mat, int n, int c, int64_t hw, float* img) {
    for (int i = 0; i < n; ++i)
        for (int ci = 0; ci < c; ++ci) {
            const float* src = mat + (static_cast<int64_t>(ci) * n + i) * hw;
            float* dst = img + (static_cast<int64_t>(i) * c + ci) * hw;
            for (int64_t p = 0; p < hw; ++p) dst[p] += src[p];
        }
}

void check_conv_args(const char* who, const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    if (x.ndim() != 4) throw ShapeError(std::string(who) + ": input must be 4-D NCHW, got " + shape_str(x.shape()));
    if (w.ndim() != 4) throw ShapeError(std::string(who) + ": weight must be 4-D, got " + shape_str(w.shape()));
    if (bias.ndim() != 1) throw ShapeError(std::string(who) + ": bias must be 1-D, got " + shape_str(bias.shape()));
    if (stride < 1) throw ValidationError(std::string(who) + ": stride must be >= 1, got " + std::to_string(stride));
    if (pad < 0) throw ValidationError(std::string(who) + ": pad must be >= 0, got " + std::to_string(pad));
}

bool tracked(const Tensor& t) { return t.impl()->on_graph; }

std::vector<float>& grad_of(const std::shared_ptr<TensorImpl>& impl) {
    if (impl->grad.empty()) impl->grad.assign(impl->data.size(), 0.0f);
    return impl->grad;
}

}  // namespace

Tensor conv2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    check_conv_args("conv2d", x, w, bias, stride, pad);
    const int cout = static_cast<int>(w.dim(0)), cin = static_cast<int>(w.dim(1));
    if (x.dim(1) != cin)
        throw ShapeError("conv2d: input channels " + std::to_string(x.dim(1)) + " vs weight expects " +
                         std::to_string(cin));
    if (bias.dim(0) != cout) throw ShapeError("conv2d: bias length must equal out channels");
    ConvGeom g;
    g.n = static_cast<int>(x.dim(0));
    g.c = cin;
    g.h = static_cast<int>(x.dim(2));
    g.w = static_cast<int>(x.dim(3));
    g.kh = static_cast<int>(w.dim(2));
    g.kw = static_cast<int>(w.dim(3));
    g.stride = stride;
    g.pad = pad;
    g.oh = (g.h + 2 * pad - g.kh) / stride + 1;
    g.ow = (g.w + 2 * pad - g.kw) / stride + 1;
    if (g.h + 2 * pad < g.kh || g.w + 2 * pad < g.kw)
        throw ShapeError("conv2d: kernel larger than padded input");

    const int64_t np = g.patches(), ckk = g.ckk();
    std::vector<float> col(static_cast<size_t>(ckk * np));
    im2col(x.data(), g, col.data());
    std::vector<float> out_mat(static_cast<size_t>(cout) * np);
    detail::sgemm_nn(cout, static_cast<int>(ckk), static_cast<int>(np), w.data(), col.data(), out_mat.data());

    Tensor out(Shape{g.n, cout, g.oh, g.ow});
    const int64_t ohw = static_cast<int64_t>(g.oh) * g.ow;
    {
        float* po = out.data();
        const float* pb = bias.data();
        for (int n = 0; n < g.n; ++n)
            for (int co = 0; co < cout; ++co) {
                const float* src = out_mat.data() + (static_cast<int64_t>(co) * g.n + n) * ohw;
                float* dst = po + (static_cast<int64_t>(n) * cout + co) * ohw;
                const float b = pb[co];
                for (int64_t p = 0; p < ohw; ++p) dst[p] = src[p] + b;
            }
    }

    if (tape && (tracked(x) || tracked(w) || tracked(bias))) {
        auto xi = x.impl_ptr(), wi = w.impl_ptr(), bi = bias.impl_ptr(), oi = out.impl_ptr();
        const bool need_x = tracked(x), need_w = tracked(w), need_b = tracked(bias);
        tape->record(oi, [xi, wi, bi, oi, need_x, need_w, need_b, g, cout, np, ckk, ohw] {
            std::vector<float> g_mat(static_cast<size_t>(cout) * np);
            to_channel_major(oi->grad.data(), g.n, cout, ohw, g_mat.data());
            if (need_b) {
                float* gb = grad_of(bi).data();
                for (int co = 0; co < cout; ++co) {
                    double acc = 0.0;
                    const float* row = g_mat.data() + static_cast<int64_t>(co) * np;
                    for (int64_t p = 0; p < np; ++p) acc += row[p];
                    gb[co] += static_cast<float>(acc);
                }
            }
            if (need_w) {
                // cols are cheap to rebuild; caching them across a deep net costs too much memory
                std::vector<float> col(static_cast<size_t>(ckk * np));
                im2col(xi->data.data(), g, col.data());
                detail::sgemm_nt(cout, static_cast<int>(np), static_cast<int>(ckk), g_mat.data(), col.data(),
                                 grad_of(wi).data(), 1.0f);
            }
            if (need_x) {
                std::vector<float> dcol(static_cast<size_t>(ckk * np));
                detail::sgemm_tn(static_cast<int>(ckk), cout, static_cast<int>(np), wi->data.data(), g_mat.data(),
                                 dcol.data());
                col2im(dcol.data(), g, grad_of(xi).data());
            }
        });
    }
    return out;
}

Tensor conv_transpose2d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    check_conv_args("conv_transpose2d", x, w, bias, stride, pad);
    const int cin = static_cast<int>(w.dim(0)), cout = static_cast<int>(w.dim(1));
    if (x.dim(1) != cin)
        throw ShapeError("conv_transpose2d: input channels " + std::to_string(x.dim(1)) + " vs weight expects " +
                         std::to_string(cin));
    if (bias.dim(0) != cout) throw ShapeError("conv_transpose2d: bias length must equal out channels");

    const int n = static_cast<int>(x.dim(0));
    const int ih = static_cast<int>(x.dim(2)), iw = static_cast<int>(x.dim(3));
    const int kh = static_cast<int>(w.dim(2)), kw = static_cast<int>(w.dim(3));
    const int oh = (ih - 1) * stride - 2 * pad + kh;
    const int ow = (iw - 1) * stride - 2 * pad + kw;
    if (oh < 1 || ow < 1) throw ShapeError("conv_transpose2d: output would be empty");

    // Transposed conv is the data-adjoint of a conv running the other way:
    // out[n,cout,oh,ow] --conv(w as [cin][cout*kh*kw], stride, pad)--> x[n,cin,ih,iw].
    ConvGeom g;
    g.n = n;
    g.c = cout;
    g.h = oh;
    g.w = ow;
    g.kh = kh;
    g.kw = kw;
    g.stride = stride;
    g.pad = pad;
    g.oh = ih;
    g.ow = iw;

    const int64_t np = g.patches();  // n*ih*iw
    const int64_t ckk = g.ckk();     // cout*kh*kw
    const int64_t ihw = static_cast<int64_t>(ih) * iw;
    const int64_t ohw = static_cast<int64_t>(oh) * ow;

    std::vector<float> x_mat(static_cast<size_t>(cin) * np);
    to_channel_major(x.data(), n, cin, ihw, x_mat.data());
    std::vector<float> dcol(static_cast<size_t>(ckk * np));
    detail::sgemm_tn(static_cast<int>(ckk), cin, static_cast<int>(np), w.data(), x_mat.data(), dcol.data());

    Tensor out(Shape{n, cout, oh, ow});
    col2im(dcol.data(), g, out.data());
    {
        float* po = out.data();
        const float* pb = bias.data();
        for (int i = 0; i < n; ++i)
            for (int co = 0; co < cout; ++co) {
                float* dst = po + (static_cast<int64_t>(i) * cout + co) * ohw;
                const float b = pb[co];
                for (int64_t p = 0; p < ohw; ++p) dst[p] += b;
            }
    }

    if (tape && (tracked(x) || tracked(w) || tracked(bias))) {
        auto xi = x.impl_ptr(), wi = w.impl_ptr(), bi = bias.impl_ptr(), oi = out.impl_ptr();
        const bool need_x = tracked(x), need_w = tracked(w), need_b = tracked(bias);
        tape->record(oi, [xi, wi, bi, oi, need_x, need_w, need_b, g, n, cin, cout, np, ckk, ihw, ohw] {
            const float* gout = oi->grad.data();
            if (need_b) {
                float* gb = grad_of(bi).data();
                for (int co = 0; co < cout; ++co) {
                    double acc = 0.0;
                    for (int i = 0; i < n; ++i) {
                        const float* plane = gout + (static_cast<int64_t>(i) * cout + co) * ohw;
                        for (int64_t p = 0; p < ohw; ++p) acc += plane[p];
                    }
                    gb[co] += static_cast<float>(acc);
                }
            }
            if (need_x || need_w) {
                std::vector<float> col_g(static_cast<size_t>(ckk * np));
                im2col(gout, g, col_g.data());
                if (need_x) {
                    // adjoint of the adjoint: plain conv of the incoming gradient
                    std::vector<float> dx_mat(static_cast<size_t>(cin) * np);
                    detail::sgemm_nn(cin, static_cast<int>(ckk), static_cast<int>(np), wi->data.data(), col_g.data(),
                                     dx_mat.data());
                    add_from_channel_major(dx_mat.data(), n, cin, ihw, grad_of(xi).data());
                }
                if (need_w) {
                    std::vector<float> x_mat(static_cast<size_t>(cin) * np);
                    to_channel_major(xi->data.data(), n, cin, ihw, x_mat.data());
                    detail::sgemm_nt(cin, static_cast<int>(np), static_cast<int>(ckk), x_mat.data(), col_g.data(),
                                     grad_of(wi).data(), 1.0f);
                }
            }
        });
    }
    return out;
}

Tensor batch_norm2d(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, BatchNormState& stats,
                    BnMode mode, float eps, float momentum) {
    if (x.ndim() != 4) throw ShapeError("batch_norm2d: input must be 4-D NCHW, got " + shape_str(x.shape()));
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    if (gamma.ndim() != 1 || gamma.dim(0) != c || beta.ndim() != 1 || beta.dim(0) != c)
        throw ShapeError("batch_norm2d: gamma/beta must be [C] with C=" + std::to_string(c));
    if (stats.running_mean.dim(0) != c || stats.running_var.dim(0) != c)
        throw ShapeError("batch_norm2d: running stats channel count mismatch");

    const int64_t per_channel = n * hw;
    std::vector<float> mean(static_cast<size_t>(c)), invstd(static_cast<size_t>(c));

    if (mode == BnMode::Train) {
        if (per_channel < 2)
            throw DegenerateBatchError("batch_norm2d: need at least 2 values per channel to normalize, got " +
                                       std::to_string(per_channel));
        const float* px = x.data();
        float* rm = stats.running_mean.data();
        float* rv = stats.running_var.data();
        for (int64_t ci = 0; ci < c; ++ci) {
            double sum = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const float* plane = px + (i * c + ci) * hw;
                for (int64_t p = 0; p < hw; ++p) sum += plane[p];
            }
            const double mu = sum / static_cast<double>(per_channel);
            double ss = 0.0;
            for (int64_t i = 0; i < n; ++i) {
                const float* plane = px + (i * c + ci) * hw;
                for (int64_t p = 0; p < hw; ++p) {
                    const double d = static_cast<double>(plane[p]) - mu;
                    ss += d * d;
                }
            }
            const double var = ss / static_cast<double>(per_channel);  // biased
            mean[static_cast<size_t>(ci)] = static_cast<float>(mu);
            invstd[static_cast<size_t>(ci)] = static_cast<float>(1.0 / std::sqrt(var + static_cast<double>(eps)));
            rm[ci] = (1.0f - momentum) * rm[ci] + momentum * static_cast<float>(mu);
            rv[ci] = (1.0f - momentum) * rv[ci] + momentum * static_cast<float>(var);
        }
    } else {
        const float* rm = stats.running_mean.data();
        const float* rv = stats.running_var.data();
        for (int64_t ci = 0; ci < c; ++ci) {
            mean[static_cast<size_t>(ci)] = rm[ci];
            invstd[static_cast<size_t>(ci)] =
                static_cast<float>(1.0 / std::sqrt(static_cast<double>(rv[ci]) + static_cast<double>(eps)));
        }
    }

    Tensor out(x.shape());
    {
        const float* px = x.data();
        float* po = out.data();
        const float* pg = gamma.data();
        const float* pb = beta.data();
        for (int64_t i = 0; i < n; ++i)
            for (int64_t ci = 0; ci < c; ++ci) {
                const float* src = px + (i * c + ci) * hw;
                float* dst = po + (i * c + ci) * hw;
                const float mu = mean[static_cast<size_t>(ci)];
                const float is = invstd[static_cast<size_t>(ci)];
                const float ga = pg[ci], be = pb[ci];
                for (int64_t p = 0; p < hw; ++p) dst[p] = ga * (src[p] - mu) * is + be;
            }
    }

    if (tape && (tracked(x) || tracked(gamma) || tracked(beta))) {
        auto xi = x.impl_ptr(), gi = gamma.impl_ptr(), bi = beta.impl_ptr(), oi = out.impl_ptr();
        const bool need_x = tracked(x), need_g = tracked(gamma), need_b = tracked(beta);
        const bool batch_stats = (mode == BnMode::Train);
        tape->record(oi, [xi, gi, bi, oi, need_x, need_g, need_b, batch_stats, mean, invstd, n, c, hw, per_channel] {
            const float* g = oi->grad.data();
            const float* px = xi->data.data();
            float* gx = need_x ? grad_of(xi).data() : nullptr;
            float* gga = need_g ? grad_of(gi).data() : nullptr;
            float* gbe = need_b ? grad_of(bi).data() : nullptr;
            for (int64_t ci = 0; ci < c; ++ci) {
                const float mu = mean[static_cast<size_t>(ci)];
                const float is = invstd[static_cast<size_t>(ci)];
                const float ga = gi->data[static_cast<size_t>(ci)];
                double sum_g = 0.0, sum_gx = 0.0;  // sum of g and of g*xhat
                for (int64_t i = 0; i < n; ++i) {
                    const float* grow = g + (i * c + ci) * hw;
                    const float* xrow = px + (i * c + ci) * hw;
                    for (int64_t p = 0; p < hw; ++p) {
                        sum_g += grow[p];
                        sum_gx += static_cast<double>(grow[p]) * ((xrow[p] - mu) * is);
                    }
                }
                if (gga) gga[ci] += static_cast<float>(sum_gx);
                if (gbe) gbe[ci] += static_cast<float>(sum_g);
                if (gx) {
                    if (batch_stats) {
                        const float mg = static_cast<float>(sum_g / static_cast<double>(per_channel));
                        const float mgx = static_cast<float>(sum_gx / static_cast<double>(per_channel));
                        for (int64_t i = 0; i < n; ++i) {
                            const float* grow = g + (i * c + ci) * hw;
                            const float* xrow = px + (i * c + ci) * hw;
                            float* dst = gx + (i * c + ci) * hw;
                            for (int64_t p = 0; p < hw; ++p) {
                                const float xhat = (xrow[p] - mu) * is;
                                dst[p] += ga * is * (grow[p] - mg - xhat * mgx);
                            }
                        }
                    } else {
                        // running stats are constants; the map is affine per element
                        for (int64_t i = 0; i < n; ++i) {
                            const float* grow = g + (i * c + ci) * hw;
                            float* dst = gx + (i * c + ci) * hw;
                            for (int64_t p = 0; p < hw; ++p) dst[p] += ga * is * grow[p];
                        }
                    }
                }
            }
        });
    }
    return out;
}

}  // namespace pgan
