#pragma once

// Layer kernels shared by the float training path and the double-precision
// gradient checks. Activations are stored channel-major over the batch
// (C x N x H x W) so a convolution is a single GEMM over im2col columns.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <type_traits>
#include <vector>

#include <Eigen/Core>

#include "prunetree/model.hpp"
#include "prunetree/network.hpp"

namespace prunetree {

template <class T>
using RowMatrix = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <class T>
struct Activation {
    int c = 0, n = 0, h = 0, w = 0;
    std::vector<T> data;

    Activation() = default;
    Activation(int c_, int n_, int h_, int w_) : c(c_), n(n_), h(h_), w(w_), data(std::size_t(c_) * n_ * h_ * w_, T(0)) {}

    std::size_t plane() const { return std::size_t(n) * h * w; }
    T* channel(int ch) { return data.data() + std::size_t(ch) * plane(); }
    const T* channel(int ch) const { return data.data() + std::size_t(ch) * plane(); }
    T& at(int ch, int img, int y, int x) { return data[((std::size_t(ch) * n + img) * h + y) * w + x]; }
    const T& at(int ch, int img, int y, int x) const { return data[((std::size_t(ch) * n + img) * h + y) * w + x]; }
};

/// Converts an N x C x H x W batch to the channel-major layout.
template <class T, class In>
Activation<T> from_nchw(std::span<const In> images, int n, int c, int h, int w) {
    Activation<T> a(c, n, h, w);
    const std::size_t hw = std::size_t(h) * w;
    for (int i = 0; i < n; ++i)
        for (int ch = 0; ch < c; ++ch) {
            const In* src = images.data() + (std::size_t(i) * c + ch) * hw;
            T* dst = a.data.data() + (std::size_t(ch) * n + i) * hw;
            for (std::size_t k = 0; k < hw; ++k) dst[k] = static_cast<T>(src[k]);
        }
    return a;
}

namespace layers {

/// Valid output range [lo, hi) along one axis for kernel offset `k`.
inline void valid_range(int out_extent, int in_extent, int stride, int padding, int k, int& lo, int& hi) {
    // need 0 <= o*stride - padding + k < in_extent
    lo = 0;
    while (lo < out_extent && lo * stride - padding + k < 0) ++lo;
    hi = out_extent;
    while (hi > lo && (hi - 1) * stride - padding + k >= in_extent) --hi;
}

/// im2col columns: rows (ci, ky, kx), columns (n, oy, ox), row-major.
template <class T>
void im2col(const ConvSpec& cs, const Activation<T>& in, int oh, int ow, std::vector<T>& cols) {
    const int k = cs.kernel, s = cs.stride;
    const std::size_t J = std::size_t(in.n) * oh * ow;
    cols.resize(std::size_t(cs.in_channels) * k * k * J);
    for (int ky = 0; ky < k; ++ky) {
        int ylo, yhi;
        valid_range(oh, in.h, s, cs.padding, ky, ylo, yhi);
        for (int kx = 0; kx < k; ++kx) {
            int xlo, xhi;
            valid_range(ow, in.w, s, cs.padding, kx, xlo, xhi);
            for (int ci = 0; ci < cs.in_channels; ++ci) {
                T* row = cols.data() + ((std::size_t(ci) * k + ky) * k + kx) * J;
                for (int img = 0; img < in.n; ++img) {
                    T* plane = row + std::size_t(img) * oh * ow;
                    for (int oy = 0; oy < oh; ++oy) {
                        T* dst = plane + std::size_t(oy) * ow;
                        if (oy < ylo || oy >= yhi) {
                            std::fill(dst, dst + ow, T(0));
                            continue;
                        }
                        const T* src = &in.at(ci, img, oy * s - cs.padding + ky, 0);
                        const int off = kx - cs.padding;
                        std::fill(dst, dst + xlo, T(0));
                        if (s == 1) {
                            std::copy(src + (xlo + off), src + (xhi + off), dst + xlo);
                        } else {
                            for (int ox = xlo; ox < xhi; ++ox) dst[ox] = src[ox * s + off];
                        }
                        std::fill(dst + xhi, dst + ow, T(0));
                    }
                }
            }
        }
    }
}

template <class T>
void col2im_add(const ConvSpec& cs, const std::vector<T>& cols, int oh, int ow, Activation<T>& din) {
    const int k = cs.kernel, s = cs.stride;
    const std::size_t J = std::size_t(din.n) * oh * ow;
    for (int ky = 0; ky < k; ++ky) {
        int ylo, yhi;
        valid_range(oh, din.h, s, cs.padding, ky, ylo, yhi);
        for (int kx = 0; kx < k; ++kx) {
            int xlo, xhi;
            valid_range(ow, din.w, s, cs.padding, kx, xlo, xhi);
            for (int ci = 0; ci < cs.in_channels; ++ci) {
                const T* row = cols.data() + ((std::size_t(ci) * k + ky) * k + kx) * J;
                for (int img = 0; img < din.n; ++img)
                    for (int oy = ylo; oy < yhi; ++oy) {
                        const T* src = row + (std::size_t(img) * oh + oy) * ow;
                        T* dst = &din.at(ci, img, oy * s - cs.padding + ky, 0);
                        const int off = kx - cs.padding;
                        for (int ox = xlo; ox < xhi; ++ox) dst[ox * s + off] += src[ox];
                    }
            }
        }
    }
}

/// out = conv(in) + bias. `cols` receives the im2col buffer for the backward pass.
template <class T>
Activation<T> conv_forward(const ConvSpec& cs, const ConvParams<T>& p, const Activation<T>& in,
                           std::vector<T>& cols) {
    const int oh = cs.out_extent(in.h), ow = cs.out_extent(in.w);
    Activation<T> out(cs.out_channels, in.n, oh, ow);
    const Eigen::Index R = Eigen::Index(cs.in_channels) * cs.kernel * cs.kernel;
    const Eigen::Index J = Eigen::Index(in.n) * oh * ow;
    im2col(cs, in, oh, ow, cols);
    Eigen::Map<const RowMatrix<T>> W(p.weight.data(), cs.out_channels, R);
    // One product per image so an image's output never depends on its batch position.
    using Strided = Eigen::OuterStride<>;
    const Eigen::Index P = Eigen::Index(oh) * ow;
    for (int img = 0; img < in.n; ++img) {
        Eigen::Map<const RowMatrix<T>, 0, Strided> C(cols.data() + img * P, R, P, Strided(J));
        Eigen::Map<RowMatrix<T>, 0, Strided> O(out.data.data() + img * P, cs.out_channels, P, Strided(J));
        O.noalias() = W * C;
    }
    for (int co = 0; co < cs.out_channels; ++co) {
        T* row = out.channel(co);
        for (Eigen::Index j = 0; j < J; ++j) row[j] += p.bias[co];
    }
    return out;
}

/// Accumulates weight/bias gradients into `g`; writes the input gradient into
/// `din` (accumulating) when it is non-null.
template <class T>
void conv_backward(const ConvSpec& cs, const ConvParams<T>& p, const std::vector<T>& cols,
                   const Activation<T>& dout, ConvParams<T>& g, std::type_identity_t<Activation<T>>* din) {
    const Eigen::Index R = Eigen::Index(cs.in_channels) * cs.kernel * cs.kernel;
    const Eigen::Index J = Eigen::Index(dout.n) * dout.h * dout.w;
    Eigen::Map<const RowMatrix<T>> D(dout.data.data(), cs.out_channels, J);
    Eigen::Map<const RowMatrix<T>> C(cols.data(), R, J);
    Eigen::Map<RowMatrix<T>> GW(g.weight.data(), cs.out_channels, R);
    GW.noalias() += D * C.transpose();
    for (int co = 0; co < cs.out_channels; ++co) {
        T acc = 0;
        for (Eigen::Index j = 0; j < J; ++j) acc += D(co, j);
        g.bias[co] += acc;
    }
    if (din) {
        Eigen::Map<const RowMatrix<T>> W(p.weight.data(), cs.out_channels, R);
        std::vector<T> dcols(std::size_t(R * J));
        Eigen::Map<RowMatrix<T>> DC(dcols.data(), R, J);
        DC.noalias() = W.transpose() * D;
        col2im_add(cs, dcols, dout.h, dout.w, *din);
    }
}

template <class T>
Activation<T> affine_forward(const ConvParams<T>& p, const Activation<T>& in) {
    Activation<T> out(in.c, in.n, in.h, in.w);
    const std::size_t P = in.plane();
    for (int ch = 0; ch < in.c; ++ch) {
        const T s = p.scale[ch], b = p.shift[ch];
        const T* x = in.channel(ch);
        T* y = out.channel(ch);
        for (std::size_t i = 0; i < P; ++i) y[i] = x[i] * s + b;
    }
    return out;
}

/// dout -> din (overwritten), accumulating scale/shift gradients.
template <class T>
Activation<T> affine_backward(const ConvParams<T>& p, const Activation<T>& in, const Activation<T>& dout,
                              ConvParams<T>& g) {
    Activation<T> din(in.c, in.n, in.h, in.w);
    const std::size_t P = in.plane();
    for (int ch = 0; ch < in.c; ++ch) {
        const T* x = in.channel(ch);
        const T* dy = dout.channel(ch);
        T* dx = din.channel(ch);
        double ds = 0.0, db = 0.0;
        const T s = p.scale[ch];
        for (std::size_t i = 0; i < P; ++i) {
            ds += double(dy[i]) * double(x[i]);
            db += double(dy[i]);
            dx[i] = dy[i] * s;
        }
        g.scale[ch] += static_cast<T>(ds);
        g.shift[ch] += static_cast<T>(db);
    }
    return din;
}

template <class T>
void relu_inplace(Activation<T>& a) {
    for (T& v : a.data) v = v > T(0) ? v : T(0);
}

/// Masks `grad` in place by (out > 0).
template <class T>
void relu_backward_inplace(const Activation<T>& out, Activation<T>& grad) {
    for (std::size_t i = 0; i < out.data.size(); ++i)
        if (!(out.data[i] > T(0))) grad.data[i] = T(0);
}

/// Global average pool: returns N x C.
template <class T>
RowMatrix<T> global_avg_pool(const Activation<T>& a) {
    RowMatrix<T> rep(a.n, a.c);
    const std::size_t hw = std::size_t(a.h) * a.w;
    for (int ch = 0; ch < a.c; ++ch)
        for (int img = 0; img < a.n; ++img) {
            const T* src = a.channel(ch) + std::size_t(img) * hw;
            double s = 0.0;
            for (std::size_t i = 0; i < hw; ++i) s += src[i];
            rep(img, ch) = static_cast<T>(s / double(hw));
        }
    return rep;
}

template <class T>
Activation<T> global_avg_pool_backward(const RowMatrix<T>& drep, int h, int w) {
    const int n = int(drep.rows()), c = int(drep.cols());
    Activation<T> d(c, n, h, w);
    const std::size_t hw = std::size_t(h) * w;
    for (int ch = 0; ch < c; ++ch)
        for (int img = 0; img < n; ++img) {
            const T v = drep(img, ch) / static_cast<T>(hw);
            T* dst = d.channel(ch) + std::size_t(img) * hw;
            for (std::size_t i = 0; i < hw; ++i) dst[i] = v;
        }
    return d;
}

/// logits = rep * W^T + b with W stored classes x features.
template <class T>
RowMatrix<T> dense_forward(std::span<const T> weight, std::span<const T> bias, const RowMatrix<T>& rep,
                           int classes) {
    Eigen::Map<const RowMatrix<T>> W(weight.data(), classes, rep.cols());
    RowMatrix<T> logits = rep * W.transpose();
    for (int k = 0; k < classes; ++k) logits.col(k).array() += bias[k];
    return logits;
}

template <class T>
RowMatrix<T> dense_backward(std::span<const T> weight, const RowMatrix<T>& rep, const RowMatrix<T>& dlogits,
                            std::span<T> gweight, std::span<T> gbias) {
    const Eigen::Index classes = dlogits.cols();
    Eigen::Map<const RowMatrix<T>> W(weight.data(), classes, rep.cols());
    Eigen::Map<RowMatrix<T>> GW(gweight.data(), classes, rep.cols());
    GW.noalias() += dlogits.transpose() * rep;
    for (Eigen::Index k = 0; k < classes; ++k) {
        T acc = 0;
        for (Eigen::Index i = 0; i < dlogits.rows(); ++i) acc += dlogits(i, k);
        gbias[k] += acc;
    }
    return dlogits * W;
}

/// Mean softmax cross-entropy over the batch (accumulated in double) and its
/// gradient with respect to the logits.
template <class T>
double softmax_cross_entropy(const RowMatrix<T>& logits, std::span<const int> labels, RowMatrix<T>& dlogits) {
    const Eigen::Index n = logits.rows(), k = logits.cols();
    dlogits.resize(n, k);
    double loss = 0.0;
    std::vector<double> e(k);
    for (Eigen::Index i = 0; i < n; ++i) {
        double mx = logits(i, 0);
        for (Eigen::Index j = 1; j < k; ++j) mx = std::max(mx, double(logits(i, j)));
        double z = 0.0;
        for (Eigen::Index j = 0; j < k; ++j) {
            e[j] = std::exp(double(logits(i, j)) - mx);
            z += e[j];
        }
        const int y = labels[i];
        loss += -(double(logits(i, y)) - mx - std::log(z));
        for (Eigen::Index j = 0; j < k; ++j)
            dlogits(i, j) = static_cast<T>((e[j] / z - (j == y ? 1.0 : 0.0)) / double(n));
    }
    return loss / double(n);
}

}  // namespace layers
}  // namespace prunetree
