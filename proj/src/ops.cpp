#include "llie/ops.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace llie::ops {

namespace {

using MatR = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapR = Eigen::Map<MatR>;
using CMapR = Eigen::Map<const MatR>;

bool needs(const Node& self, std::size_t i) { return self.parents[i]->requires_grad; }
Tensor& grad_of(Node& self, std::size_t i) { return self.parents[i]->grad_buffer(); }

// Broadcasting -----------------------------------------------------------------

struct Strides {
    std::size_t n, c, h, w;
};

int broadcast_dim(int a, int b, const Shape& sa, const Shape& sb) {
    if (a == b) return a;
    if (a == 1) return b;
    if (b == 1) return a;
    throw UsageError("cannot broadcast " + sa.str() + " with " + sb.str());
}

Shape broadcast_shape(const Shape& a, const Shape& b) {
    return {broadcast_dim(a.n, b.n, a, b), broadcast_dim(a.c, b.c, a, b),
            broadcast_dim(a.h, b.h, a, b), broadcast_dim(a.w, b.w, a, b)};
}

Strides broadcast_strides(const Shape& in, const Shape& out) {
    const std::size_t sw = 1;
    const std::size_t sh = static_cast<std::size_t>(in.w);
    const std::size_t sc = sh * in.h;
    const std::size_t sn = sc * in.c;
    return {in.n == out.n ? sn : 0, in.c == out.c ? sc : 0, in.h == out.h ? sh : 0,
            in.w == out.w ? sw : 0};
}

template <class F>
void for_each_broadcast(const Shape& out, const Strides& sa, const Strides& sb, F&& f) {
    std::size_t oi = 0;
    for (int n = 0; n < out.n; ++n) {
        for (int c = 0; c < out.c; ++c) {
            for (int y = 0; y < out.h; ++y) {
                const std::size_t abase = n * sa.n + c * sa.c + y * sa.h;
                const std::size_t bbase = n * sb.n + c * sb.c + y * sb.h;
                for (int x = 0; x < out.w; ++x, ++oi) {
                    f(oi, abase + x * sa.w, bbase + x * sb.w);
                }
            }
        }
    }
}

/// Sums `g` (shaped like the broadcast output) back into `dst` of shape `in`.
void reduce_into(Tensor& dst, const Tensor& g, const Shape& in) {
    if (in == g.shape()) {
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += g[i];
        return;
    }
    const Strides s = broadcast_strides(in, g.shape());
    for_each_broadcast(g.shape(), s, s, [&](std::size_t oi, std::size_t ai, std::size_t) {
        dst[ai] += g[oi];
    });
}

template <class Fwd, class Bwd>
Var unary(const Var& x, const char* name, Fwd fwd, Bwd dfdx) {
    const Tensor& in = x.value();
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    return make_op_result(std::move(out), {x}, name, [dfdx](Node& self) {
        const Tensor& xin = self.parents[0]->value;
        Tensor& gx = grad_of(self, 0);
        for (std::size_t i = 0; i < xin.size(); ++i) {
            gx[i] += self.grad[i] * dfdx(xin[i], self.value[i]);
        }
    });
}

// Convolution helpers ------------------------------------------------------------

int conv_out(int in, int k, int stride, int pad) { return (in + 2 * pad - k) / stride + 1; }

void im2col(const double* x, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            double* col) {
    for (int c = 0; c < C; ++c) {
        const double* xc = x + static_cast<std::size_t>(c) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                double* row = col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * Ho * Wo;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    double* dst = row + static_cast<std::size_t>(oy) * Wo;
                    if (iy < 0 || iy >= H) {
                        std::fill(dst, dst + Wo, 0.0);
                        continue;
                    }
                    const double* src = xc + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        dst[ox] = (ix >= 0 && ix < W) ? src[ix] : 0.0;
                    }
                }
            }
        }
    }
}

void col2im(const double* col, int C, int H, int W, int k, int stride, int pad, int Ho, int Wo,
            double* dx) {
    for (int c = 0; c < C; ++c) {
        double* dxc = dx + static_cast<std::size_t>(c) * H * W;
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const double* row =
                    col + ((static_cast<std::size_t>(c) * k + ky) * k + kx) * Ho * Wo;
                for (int oy = 0; oy < Ho; ++oy) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    const double* src = row + static_cast<std::size_t>(oy) * Wo;
                    double* dst = dxc + static_cast<std::size_t>(iy) * W;
                    for (int ox = 0; ox < Wo; ++ox) {
                        const int ix = ox * stride - pad + kx;
                        if (ix >= 0 && ix < W) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace

// Leaves ---------------------------------------------------------------------

Var detach(const Var& x) { return Var(x.value(), false); }

// Elementwise arithmetic ------------------------------------------------------

Var add(const Var& a, const Var& b) {
    const Shape sa = a.shape(), sb = b.shape();
    const Shape so = broadcast_shape(sa, sb);
    Tensor out(so);
    if (sa == sb) {
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] + b.value()[i];
    } else {
        const auto& av = a.value();
        const auto& bv = b.value();
        for_each_broadcast(so, broadcast_strides(sa, so), broadcast_strides(sb, so),
                           [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] + bv[j]; });
    }
    return make_op_result(std::move(out), {a, b}, "add", [sa, sb](Node& self) {
        if (needs(self, 0)) reduce_into(grad_of(self, 0), self.grad, sa);
        if (needs(self, 1)) reduce_into(grad_of(self, 1), self.grad, sb);
    });
}

Var sub(const Var& a, const Var& b) { return add(a, scale(b, -1.0)); }

Var mul(const Var& a, const Var& b) {
    const Shape sa = a.shape(), sb = b.shape();
    const Shape so = broadcast_shape(sa, sb);
    const Strides ta = broadcast_strides(sa, so), tb = broadcast_strides(sb, so);
    Tensor out(so);
    const auto& av = a.value();
    const auto& bv = b.value();
    for_each_broadcast(so, ta, tb,
                       [&](std::size_t o, std::size_t i, std::size_t j) { out[o] = av[i] * bv[j]; });
    return make_op_result(std::move(out), {a, b}, "mul", [so, ta, tb](Node& self) {
        const Tensor& av = self.parents[0]->value;
        const Tensor& bv = self.parents[1]->value;
        const bool ga = needs(self, 0), gb = needs(self, 1);
        Tensor* gA = ga ? &grad_of(self, 0) : nullptr;
        Tensor* gB = gb ? &grad_of(self, 1) : nullptr;
        for_each_broadcast(so, ta, tb, [&](std::size_t o, std::size_t i, std::size_t j) {
            const double g = self.grad[o];
            if (ga) (*gA)[i] += g * bv[j];
            if (gb) (*gB)[j] += g * av[i];
        });
    });
}

Var scale(const Var& x, double s) {
    return unary(
        x, "scale", [s](double v) { return v * s; }, [s](double, double) { return s; });
}

Var add_scalar(const Var& x, double s) {
    return unary(
        x, "add_scalar", [s](double v) { return v + s; }, [](double, double) { return 1.0; });
}

Var expand(const Var& x, Shape shape) {
    const Shape si = x.shape();
    if (broadcast_shape(si, shape) != shape) {
        throw UsageError("cannot expand " + si.str() + " to " + shape.str());
    }
    Tensor out(shape);
    const Strides s = broadcast_strides(si, shape);
    const auto& xv = x.value();
    for_each_broadcast(shape, s, s, [&](std::size_t o, std::size_t i, std::size_t) { out[o] = xv[i]; });
    return make_op_result(std::move(out), {x}, "expand",
                          [si](Node& self) { reduce_into(grad_of(self, 0), self.grad, si); });
}

Var square(const Var& x) {
    return unary(
        x, "square", [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Var rsqrt(const Var& x) {
    return unary(
        x, "rsqrt", [](double v) { return 1.0 / std::sqrt(v); },
        [](double v, double y) { return -0.5 * y / v; });
}

Var abs(const Var& x) {
    if (auto* probe = active_nonsmooth_probe()) {
        for (double v : x.value().values()) probe->record(v >= 0.0);
    }
    return unary(
        x, "abs", [](double v) { return std::abs(v); },
        [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

// Activations ------------------------------------------------------------------

Var leaky_relu(const Var& x, double slope) {
    if (auto* probe = active_nonsmooth_probe()) {
        for (double v : x.value().values()) probe->record(v >= 0.0);
    }
    return unary(
        x, "leaky_relu", [slope](double v) { return v >= 0.0 ? v : slope * v; },
        [slope](double v, double) { return v >= 0.0 ? 1.0 : slope; });
}

Var sigmoid(const Var& x) {
    return unary(
        x, "sigmoid",
        [](double v) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        },
        [](double, double y) { return y * (1.0 - y); });
}

Var gelu(const Var& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return unary(
        x, "gelu", [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); },
        [inv_sqrt_2pi](double v, double) {
            return 0.5 * (1.0 + std::erf(v * inv_sqrt2)) + v * inv_sqrt_2pi * std::exp(-0.5 * v * v);
        });
}

Var softplus(const Var& x) {
    return unary(
        x, "softplus", [](double v) { return std::max(v, 0.0) + std::log1p(std::exp(-std::abs(v))); },
        [](double v, double) {
            if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
            const double e = std::exp(v);
            return e / (1.0 + e);
        });
}

Var clamp(const Var& x, double lo, double hi) {
    if (auto* probe = active_nonsmooth_probe()) {
        for (double v : x.value().values()) {
            probe->record(v > lo);
            probe->record(v < hi);
        }
    }
    return unary(
        x, "clamp", [lo, hi](double v) { return std::clamp(v, lo, hi); },
        [lo, hi](double v, double) { return (v > lo && v < hi) ? 1.0 : 0.0; });
}

// Reductions -------------------------------------------------------------------

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().values()) s += v;
    return make_op_result(Tensor::scalar(s), {x}, "sum", [](Node& self) {
        Tensor& g = grad_of(self, 0);
        const double go = self.grad[0];
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += go;
    });
}

Var mean(const Var& x) {
    const double count = static_cast<double>(x.value().size());
    if (count == 0) throw UsageError("mean of empty tensor");
    return scale(sum(x), 1.0 / count);
}

Var sum_hw(const Var& x) {
    const Shape s = x.shape();
    Tensor out({s.n, s.c, 1, 1});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            double acc = 0.0;
            for (double v : x.value().channel(n, c)) acc += v;
            out.at(n, c, 0, 0) = acc;
        }
    }
    return make_op_result(std::move(out), {x}, "sum_hw", [](Node& self) {
        Tensor& g = grad_of(self, 0);
        for (int n = 0; n < g.n(); ++n) {
            for (int c = 0; c < g.c(); ++c) {
                const double go = self.grad.at(n, c, 0, 0);
                for (double& v : g.channel(n, c)) v += go;
            }
        }
    });
}

Var global_avg_pool(const Var& x) {
    const Shape s = x.shape();
    const double inv = 1.0 / static_cast<double>(s.plane());
    Tensor out({s.n, s.c, 1, 1});
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            // Shifted by the first sample: exact on constant planes.
            const auto plane = x.value().channel(n, c);
            const double origin = plane.front();
            double acc = 0.0;
            for (double v : plane) acc += v - origin;
            out.at(n, c, 0, 0) = origin + acc * inv;
        }
    }
    return make_op_result(std::move(out), {x}, "global_avg_pool", [inv](Node& self) {
        Tensor& g = grad_of(self, 0);
        for (int n = 0; n < g.n(); ++n) {
            for (int c = 0; c < g.c(); ++c) {
                const double go = self.grad.at(n, c, 0, 0) * inv;
                for (double& v : g.channel(n, c)) v += go;
            }
        }
    });
}

// Channel plumbing -------------------------------------------------------------

Var concat_channels(std::span<const Var> parts) {
    if (parts.empty()) throw UsageError("concat_channels of zero tensors");
    Shape s = parts.front().shape();
    int total = 0;
    for (const auto& p : parts) {
        const Shape& ps = p.shape();
        if (ps.n != s.n || ps.h != s.h || ps.w != s.w) {
            throw UsageError("concat_channels shape mismatch " + ps.str() + " vs " + s.str());
        }
        total += ps.c;
    }
    s.c = total;
    Tensor out(s);
    std::vector<int> widths;
    for (int n = 0; n < s.n; ++n) {
        double* dst = out.sample(n).data();
        for (const auto& p : parts) {
            auto src = p.value().sample(n);
            dst = std::copy(src.begin(), src.end(), dst);
        }
    }
    for (const auto& p : parts) widths.push_back(p.shape().c);
    std::vector<Var> parents(parts.begin(), parts.end());
    return make_op_result(std::move(out), std::move(parents), "concat", [widths](Node& self) {
        const std::size_t plane = self.value.shape().plane();
        for (int n = 0; n < self.value.n(); ++n) {
            const double* src = self.grad.sample(n).data();
            for (std::size_t i = 0; i < widths.size(); ++i) {
                const std::size_t len = widths[i] * plane;
                if (needs(self, i)) {
                    double* dst = grad_of(self, i).sample(n).data();
                    for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
                }
                src += len;
            }
        }
    });
}

Var slice_channels(const Var& x, int first, int count) {
    const Shape si = x.shape();
    if (first < 0 || count <= 0 || first + count > si.c) {
        throw UsageError("slice_channels out of range for " + si.str());
    }
    Tensor out({si.n, count, si.h, si.w});
    const std::size_t plane = si.plane();
    for (int n = 0; n < si.n; ++n) {
        const double* src = x.value().channel(n, first).data();
        std::copy_n(src, count * plane, out.sample(n).data());
    }
    return make_op_result(std::move(out), {x}, "slice", [first, count](Node& self) {
        Tensor& g = grad_of(self, 0);
        const std::size_t len = count * self.value.shape().plane();
        for (int n = 0; n < g.n(); ++n) {
            double* dst = g.channel(n, first).data();
            const double* src = self.grad.sample(n).data();
            for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
        }
    });
}

// Convolution ------------------------------------------------------------------

Var conv2d(const Var& x, const Var& w, const Var& bias, int stride, int pad) {
    const Shape sx = x.shape(), sw = w.shape();
    if (sw.c != sx.c || sw.h != sw.w) {
        throw UsageError("conv2d weight " + sw.str() + " incompatible with input " + sx.str());
    }
    if (bias.defined() && bias.shape() != Shape{1, sw.n, 1, 1}) {
        throw UsageError("conv2d bias shape " + bias.shape().str());
    }
    const int k = sw.h, Cin = sx.c, Cout = sw.n;
    const int Ho = conv_out(sx.h, k, stride, pad), Wo = conv_out(sx.w, k, stride, pad);
    if (Ho <= 0 || Wo <= 0) throw UsageError("conv2d output would be empty for " + sx.str());
    const bool pointwise = (k == 1 && stride == 1 && pad == 0);
    const int rows = Cin * k * k;
    const int cols = Ho * Wo;

    Tensor out({sx.n, Cout, Ho, Wo});
    CMapR W(w.value().data(), Cout, rows);
    std::vector<double> col(pointwise ? 0 : static_cast<std::size_t>(rows) * cols);
    for (int n = 0; n < sx.n; ++n) {
        const double* xin = x.value().sample(n).data();
        if (!pointwise) im2col(xin, Cin, sx.h, sx.w, k, stride, pad, Ho, Wo, col.data());
        CMapR C(pointwise ? xin : col.data(), rows, cols);
        MapR Y(out.sample(n).data(), Cout, cols);
        Y.noalias() = W * C;
        if (bias.defined()) {
            for (int o = 0; o < Cout; ++o) Y.row(o).array() += bias.value()[o];
        }
    }

    std::vector<Var> parents{x, w};
    if (bias.defined()) parents.push_back(bias);
    return make_op_result(
        std::move(out), std::move(parents), "conv2d",
        [=](Node& self) {
            const Tensor& xv = self.parents[0]->value;
            const Tensor& wv = self.parents[1]->value;
            const bool gx = needs(self, 0), gw = needs(self, 1);
            const bool gb = self.parents.size() > 2 && needs(self, 2);
            CMapR Wm(wv.data(), Cout, rows);
            std::vector<double> colbuf(pointwise ? 0 : static_cast<std::size_t>(rows) * cols);
            MatR dcol;
            for (int n = 0; n < xv.n(); ++n) {
                CMapR dY(self.grad.sample(n).data(), Cout, cols);
                if (gw) {
                    const double* xin = xv.sample(n).data();
                    if (!pointwise) im2col(xin, Cin, xv.h(), xv.w(), k, stride, pad, Ho, Wo, colbuf.data());
                    CMapR Cm(pointwise ? xin : colbuf.data(), rows, cols);
                    MapR dW(grad_of(self, 1).data(), Cout, rows);
                    dW.noalias() += dY * Cm.transpose();
                }
                if (gb) {
                    Tensor& db = grad_of(self, 2);
                    // Plain loop: Eigen reductions vary with buffer alignment.
                    for (int o = 0; o < Cout; ++o) {
                        double acc = 0.0;
                        for (int i = 0; i < cols; ++i) acc += dY(o, i);
                        db[o] += acc;
                    }
                }
                if (gx) {
                    double* dx = grad_of(self, 0).sample(n).data();
                    if (pointwise) {
                        MapR dX(dx, rows, cols);
                        dX.noalias() += Wm.transpose() * dY;
                    } else {
                        dcol.noalias() = Wm.transpose() * dY;
                        col2im(dcol.data(), Cin, xv.h(), xv.w(), k, stride, pad, Ho, Wo, dx);
                    }
                }
            }
        });
}

namespace {

/// Valid output range [lo, hi) along one axis for tap offset `off`.
std::pair<int, int> tap_range(int off, int n) { return {std::max(0, -off), std::min(n, n - off)}; }

}  // namespace

Var depthwise_conv2d(const Var& x, const Var& w, const Var& bias) {
    const Shape sx = x.shape(), sw = w.shape();
    if (sw.n != sx.c || sw.c != 1 || sw.h != sw.w || sw.h % 2 == 0) {
        throw UsageError("depthwise_conv2d weight " + sw.str() + " incompatible with " + sx.str());
    }
    const int k = sw.h, r = k / 2, H = sx.h, W = sx.w;
    Tensor out(sx);
    const Tensor& xv = x.value();
    const Tensor& wv = w.value();
    for (int n = 0; n < sx.n; ++n) {
        for (int c = 0; c < sx.c; ++c) {
            const double* xc = xv.channel(n, c).data();
            const double* kc = wv.data() + static_cast<std::size_t>(c) * k * k;
            double* oc = out.channel(n, c).data();
            std::fill_n(oc, static_cast<std::size_t>(H) * W, bias.defined() ? bias.value()[c] : 0.0);
            for (int u = 0; u < k; ++u) {
                const auto [y0, y1] = tap_range(u - r, H);
                for (int v = 0; v < k; ++v) {
                    const auto [x0, x1] = tap_range(v - r, W);
                    const double kv = kc[u * k + v];
                    for (int y = y0; y < y1; ++y) {
                        const double* src = xc + static_cast<std::size_t>(y + u - r) * W + (v - r);
                        double* dst = oc + static_cast<std::size_t>(y) * W;
                        for (int xx = x0; xx < x1; ++xx) dst[xx] += kv * src[xx];
                    }
                }
            }
        }
    }
    std::vector<Var> parents{x, w};
    if (bias.defined()) parents.push_back(bias);
    return make_op_result(std::move(out), std::move(parents), "depthwise_conv2d", [k, r](Node& self) {
        const Tensor& xv = self.parents[0]->value;
        const Tensor& wv = self.parents[1]->value;
        const bool gx = needs(self, 0), gw = needs(self, 1);
        const bool gb = self.parents.size() > 2 && needs(self, 2);
        const int H = xv.h(), W = xv.w();
        for (int n = 0; n < xv.n(); ++n) {
            for (int c = 0; c < xv.c(); ++c) {
                const double* xc = xv.channel(n, c).data();
                const double* gc = self.grad.channel(n, c).data();
                const double* kc = wv.data() + static_cast<std::size_t>(c) * k * k;
                double* dxc = gx ? grad_of(self, 0).channel(n, c).data() : nullptr;
                double* dkc = gw ? grad_of(self, 1).data() + static_cast<std::size_t>(c) * k * k : nullptr;
                if (gb) {
                    double bsum = 0.0;
                    for (std::size_t i = 0; i < static_cast<std::size_t>(H) * W; ++i) bsum += gc[i];
                    grad_of(self, 2)[c] += bsum;
                }
                for (int u = 0; u < k; ++u) {
                    const auto [y0, y1] = tap_range(u - r, H);
                    for (int v = 0; v < k; ++v) {
                        const auto [x0, x1] = tap_range(v - r, W);
                        const double kv = kc[u * k + v];
                        double acc = 0.0;
                        for (int y = y0; y < y1; ++y) {
                            const std::size_t so = static_cast<std::size_t>(y + u - r) * W + (v - r);
                            const double* g = gc + static_cast<std::size_t>(y) * W;
                            if (dkc) {
                                const double* src = xc + so;
                                for (int xx = x0; xx < x1; ++xx) acc += g[xx] * src[xx];
                            }
                            if (dxc) {
                                double* dst = dxc + so;
                                for (int xx = x0; xx < x1; ++xx) dst[xx] += kv * g[xx];
                            }
                        }
                        if (dkc) dkc[u * k + v] += acc;
                    }
                }
            }
        }
    });
}

// Resampling -------------------------------------------------------------------

Var upsample_nearest2x(const Var& x) {
    const Shape si = x.shape();
    Tensor out({si.n, si.c, si.h * 2, si.w * 2});
    for (int n = 0; n < si.n; ++n) {
        for (int c = 0; c < si.c; ++c) {
            for (int y = 0; y < 2 * si.h; ++y) {
                for (int xx = 0; xx < 2 * si.w; ++xx) {
                    out.at(n, c, y, xx) = x.value().at(n, c, y / 2, xx / 2);
                }
            }
        }
    }
    return make_op_result(std::move(out), {x}, "upsample_nearest2x", [](Node& self) {
        Tensor& g = grad_of(self, 0);
        const Shape so = self.value.shape();
        for (int n = 0; n < so.n; ++n) {
            for (int c = 0; c < so.c; ++c) {
                for (int y = 0; y < so.h; ++y) {
                    for (int xx = 0; xx < so.w; ++xx) {
                        g.at(n, c, y / 2, xx / 2) += self.grad.at(n, c, y, xx);
                    }
                }
            }
        }
    });
}

Var pad_replicate(const Var& x, int pad) {
    if (pad < 0) throw UsageError("pad_replicate needs a non-negative pad");
    const Shape si = x.shape();
    const Shape so{si.n, si.c, si.h + 2 * pad, si.w + 2 * pad};
    auto src = [pad](int i, int n) { return std::clamp(i - pad, 0, n - 1); };
    Tensor out(so);
    for (int n = 0; n < so.n; ++n) {
        for (int c = 0; c < so.c; ++c) {
            for (int y = 0; y < so.h; ++y) {
                for (int xx = 0; xx < so.w; ++xx) {
                    out.at(n, c, y, xx) = x.value().at(n, c, src(y, si.h), src(xx, si.w));
                }
            }
        }
    }
    return make_op_result(std::move(out), {x}, "pad_replicate", [src, si](Node& self) {
        Tensor& g = grad_of(self, 0);
        const Shape so = self.value.shape();
        for (int n = 0; n < so.n; ++n) {
            for (int c = 0; c < so.c; ++c) {
                for (int y = 0; y < so.h; ++y) {
                    for (int xx = 0; xx < so.w; ++xx) {
                        g.at(n, c, src(y, si.h), src(xx, si.w)) += self.grad.at(n, c, y, xx);
                    }
                }
            }
        }
    });
}

namespace {

struct LerpTap {
    int i0, i1;
    double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<LerpTap> lerp_taps(int in, int out) {
    std::vector<LerpTap> taps(out);
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
        double src = (o + 0.5) * scale - 0.5;
        if (src < 0.0) src = 0.0;
        int i0 = static_cast<int>(std::floor(src));
        if (i0 > in - 1) i0 = in - 1;
        const int i1 = std::min(i0 + 1, in - 1);
        taps[o] = {i0, i1, src - i0};
    }
    return taps;
}

}  // namespace

Var resize_bilinear(const Var& x, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw UsageError("resize_bilinear target must be at least 1x1");
    const Shape si = x.shape();
    if (si.h == out_h && si.w == out_w) {
        return scale(x, 1.0);
    }
    const auto ty = lerp_taps(si.h, out_h);
    const auto tx = lerp_taps(si.w, out_w);
    Tensor out({si.n, si.c, out_h, out_w});
    for (int n = 0; n < si.n; ++n) {
        for (int c = 0; c < si.c; ++c) {
            const double* src = x.value().channel(n, c).data();
            double* dst = out.channel(n, c).data();
            for (int y = 0; y < out_h; ++y) {
                const auto& a = ty[y];
                for (int xx = 0; xx < out_w; ++xx) {
                    const auto& b = tx[xx];
                    const double top = src[a.i0 * si.w + b.i0] * (1 - b.w1) + src[a.i0 * si.w + b.i1] * b.w1;
                    const double bot = src[a.i1 * si.w + b.i0] * (1 - b.w1) + src[a.i1 * si.w + b.i1] * b.w1;
                    dst[y * out_w + xx] = top * (1 - a.w1) + bot * a.w1;
                }
            }
        }
    }
    return make_op_result(std::move(out), {x}, "resize_bilinear", [ty, tx, si](Node& self) {
        Tensor& g = grad_of(self, 0);
        const int oh = static_cast<int>(ty.size()), ow = static_cast<int>(tx.size());
        for (int n = 0; n < si.n; ++n) {
            for (int c = 0; c < si.c; ++c) {
                double* dst = g.channel(n, c).data();
                const double* go = self.grad.channel(n, c).data();
                for (int y = 0; y < oh; ++y) {
                    const auto& a = ty[y];
                    for (int xx = 0; xx < ow; ++xx) {
                        const auto& b = tx[xx];
                        const double v = go[y * ow + xx];
                        dst[a.i0 * si.w + b.i0] += v * (1 - a.w1) * (1 - b.w1);
                        dst[a.i0 * si.w + b.i1] += v * (1 - a.w1) * b.w1;
                        dst[a.i1 * si.w + b.i0] += v * a.w1 * (1 - b.w1);
                        dst[a.i1 * si.w + b.i1] += v * a.w1 * b.w1;
                    }
                }
            }
        }
    });
}

// Normalization ----------------------------------------------------------------

Var instance_norm(const Var& x, double eps) {
    if (!(eps > 0.0)) throw ConfigError("instance_norm eps must be positive");
    const Shape s = x.shape();
    const std::size_t M = s.plane();
    Tensor out(s);
    std::vector<double> inv_std(static_cast<std::size_t>(s.n) * s.c);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            auto in = x.value().channel(n, c);
            double mu = 0.0;
            for (double v : in) mu += v;
            mu /= M;
            double var = 0.0;
            for (double v : in) var += (v - mu) * (v - mu);
            var /= M;
            const double inv = 1.0 / std::sqrt(var + eps);
            inv_std[n * s.c + c] = inv;
            auto o = out.channel(n, c);
            for (std::size_t i = 0; i < M; ++i) o[i] = (in[i] - mu) * inv;
        }
    }
    return make_op_result(std::move(out), {x}, "instance_norm", [inv_std, M](Node& self) {
        Tensor& g = grad_of(self, 0);
        const int C = self.value.c();
        for (int n = 0; n < self.value.n(); ++n) {
            for (int c = 0; c < C; ++c) {
                auto y = self.value.channel(n, c);
                auto dy = self.grad.channel(n, c);
                double sdy = 0.0, sdyy = 0.0;
                for (std::size_t i = 0; i < M; ++i) {
                    sdy += dy[i];
                    sdyy += dy[i] * y[i];
                }
                const double inv = inv_std[n * C + c];
                auto dx = g.channel(n, c);
                for (std::size_t i = 0; i < M; ++i) {
                    dx[i] += inv * (dy[i] - sdy / M - y[i] * sdyy / M);
                }
            }
        }
    });
}

Var layer_norm_channels(const Var& x, const Var& gamma, const Var& beta, double eps) {
    const Shape s = x.shape();
    if (gamma.shape() != Shape{1, s.c, 1, 1} || beta.shape() != Shape{1, s.c, 1, 1}) {
        throw UsageError("layer_norm_channels affine params must be (1,C,1,1)");
    }
    const std::size_t P = s.plane();
    const double invC = 1.0 / s.c;
    Tensor out(s);
    Tensor xhat(s);
    std::vector<double> inv_std(static_cast<std::size_t>(s.n) * P);
    std::vector<double> mu(P), var(P);
    for (int n = 0; n < s.n; ++n) {
        const double* xs = x.value().sample(n).data();
        double* hs = xhat.sample(n).data();
        double* os = out.sample(n).data();
        double* inv = inv_std.data() + n * P;
        std::fill(mu.begin(), mu.end(), 0.0);
        std::fill(var.begin(), var.end(), 0.0);
        for (int c = 0; c < s.c; ++c) {
            const double* xc = xs + c * P;
            for (std::size_t p = 0; p < P; ++p) mu[p] += xc[p];
        }
        for (std::size_t p = 0; p < P; ++p) mu[p] *= invC;
        for (int c = 0; c < s.c; ++c) {
            const double* xc = xs + c * P;
            for (std::size_t p = 0; p < P; ++p) {
                const double d = xc[p] - mu[p];
                var[p] += d * d;
            }
        }
        for (std::size_t p = 0; p < P; ++p) inv[p] = 1.0 / std::sqrt(var[p] * invC + eps);
        for (int c = 0; c < s.c; ++c) {
            const double* xc = xs + c * P;
            double* hc = hs + c * P;
            double* oc = os + c * P;
            const double g = gamma.value()[c], b = beta.value()[c];
            for (std::size_t p = 0; p < P; ++p) {
                hc[p] = (xc[p] - mu[p]) * inv[p];
                oc[p] = hc[p] * g + b;
            }
        }
    }
    return make_op_result(
        std::move(out), {x, gamma, beta}, "layer_norm",
        [xhat = std::move(xhat), inv_std = std::move(inv_std), P, invC](Node& self) {
            const Tensor& gv = self.parents[1]->value;
            const int C = self.value.c();
            const bool gx = needs(self, 0), gg = needs(self, 1), gb = needs(self, 2);
            std::vector<double> s1(P), s2(P);
            for (int n = 0; n < self.value.n(); ++n) {
                const double* hs = xhat.sample(n).data();
                const double* dy = self.grad.sample(n).data();
                std::fill(s1.begin(), s1.end(), 0.0);
                std::fill(s2.begin(), s2.end(), 0.0);
                for (int c = 0; c < C; ++c) {
                    const double* gc = dy + c * P;
                    const double* hc = hs + c * P;
                    double sg = 0.0, sgh = 0.0;
                    for (std::size_t p = 0; p < P; ++p) {
                        sg += gc[p];
                        sgh += gc[p] * hc[p];
                        const double dh = gc[p] * gv[c];
                        s1[p] += dh;
                        s2[p] += dh * hc[p];
                    }
                    if (gg) grad_of(self, 1)[c] += sgh;
                    if (gb) grad_of(self, 2)[c] += sg;
                }
                if (!gx) continue;
                double* dx = grad_of(self, 0).sample(n).data();
                const double* inv = inv_std.data() + n * P;
                for (int c = 0; c < C; ++c) {
                    const double* gc = dy + c * P;
                    const double* hc = hs + c * P;
                    double* dc = dx + c * P;
                    for (std::size_t p = 0; p < P; ++p) {
                        dc[p] += inv[p] * (gc[p] * gv[c] - (s1[p] + hc[p] * s2[p]) * invC);
                    }
                }
            }
        });
}

Var softmax_channel_groups(const Var& x, int group) {
    const Shape s = x.shape();
    if (group < 1 || s.c % group != 0) {
        throw UsageError("softmax group size " + std::to_string(group) + " does not divide channels");
    }
    const std::size_t P = s.plane();
    Tensor out(s);
    for (int n = 0; n < s.n; ++n) {
        const double* xs = x.value().sample(n).data();
        double* os = out.sample(n).data();
        for (int g0 = 0; g0 < s.c; g0 += group) {
            for (std::size_t p = 0; p < P; ++p) {
                double mx = xs[g0 * P + p];
                for (int j = 1; j < group; ++j) mx = std::max(mx, xs[(g0 + j) * P + p]);
                double z = 0.0;
                for (int j = 0; j < group; ++j) {
                    const double e = std::exp(xs[(g0 + j) * P + p] - mx);
                    os[(g0 + j) * P + p] = e;
                    z += e;
                }
                for (int j = 0; j < group; ++j) os[(g0 + j) * P + p] /= z;
            }
        }
    }
    return make_op_result(std::move(out), {x}, "softmax_groups", [group, P](Node& self) {
        Tensor& gx = grad_of(self, 0);
        const int C = self.value.c();
        for (int n = 0; n < self.value.n(); ++n) {
            const double* ys = self.value.sample(n).data();
            const double* dy = self.grad.sample(n).data();
            double* dx = gx.sample(n).data();
            for (int g0 = 0; g0 < C; g0 += group) {
                for (std::size_t p = 0; p < P; ++p) {
                    double dot = 0.0;
                    for (int j = 0; j < group; ++j) dot += dy[(g0 + j) * P + p] * ys[(g0 + j) * P + p];
                    for (int j = 0; j < group; ++j) {
                        const std::size_t i = (g0 + j) * P + p;
                        dx[i] += ys[i] * (dy[i] - dot);
                    }
                }
            }
        }
    });
}

// Structure-specific -----------------------------------------------------------

std::array<int, 2> direction_step(Direction d) {
    switch (d) {
        case Direction::PosX: return {1, 0};
        case Direction::NegX: return {-1, 0};
        case Direction::PosY: return {0, 1};
        case Direction::NegY: return {0, -1};
        case Direction::PosXPosY: return {1, 1};
        case Direction::PosXNegY: return {1, -1};
        case Direction::NegXPosY: return {-1, 1};
        case Direction::NegXNegY: return {-1, -1};
    }
    return {0, 0};
}

const char* direction_name(Direction d) {
    switch (d) {
        case Direction::PosX: return "+x";
        case Direction::NegX: return "-x";
        case Direction::PosY: return "+y";
        case Direction::NegY: return "-y";
        case Direction::PosXPosY: return "+x+y";
        case Direction::PosXNegY: return "+x-y";
        case Direction::NegXPosY: return "-x+y";
        case Direction::NegXNegY: return "-x-y";
    }
    return "?";
}

Var directional_gradient(const Var& x, Direction d) {
    const auto [dx, dy] = direction_step(d);
    const Shape s = x.shape();
    Tensor out(s);
    const int y0 = std::max(0, -dy), y1 = std::min(s.h, s.h - dy);
    const int x0 = std::max(0, -dx), x1 = std::min(s.w, s.w - dx);
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            const double* in = x.value().channel(n, c).data();
            double* o = out.channel(n, c).data();
            for (int y = y0; y < y1; ++y) {
                for (int xx = x0; xx < x1; ++xx) {
                    o[y * s.w + xx] = in[(y + dy) * s.w + xx + dx] - in[y * s.w + xx];
                }
            }
        }
    }
    return make_op_result(std::move(out), {x}, "directional_gradient",
                          [dx, dy, y0, y1, x0, x1](Node& self) {
                              Tensor& g = grad_of(self, 0);
                              const Shape s = self.value.shape();
                              for (int n = 0; n < s.n; ++n) {
                                  for (int c = 0; c < s.c; ++c) {
                                      const double* go = self.grad.channel(n, c).data();
                                      double* gi = g.channel(n, c).data();
                                      for (int y = y0; y < y1; ++y) {
                                          for (int xx = x0; xx < x1; ++xx) {
                                              const double v = go[y * s.w + xx];
                                              gi[(y + dy) * s.w + xx + dx] += v;
                                              gi[y * s.w + xx] -= v;
                                          }
                                      }
                                  }
                              }
                          });
}

namespace {

struct WindowGeometry {
    int heads, head_dim, window, tokens, wins_y, wins_x;
};

WindowGeometry window_geometry(const Shape& s, int heads, int window) {
    if (heads < 1 || s.c % heads != 0) {
        throw UsageError("attention heads must divide channels, got C=" + std::to_string(s.c));
    }
    if (window < 1 || s.h % window != 0 || s.w % window != 0) {
        throw UsageError("window size " + std::to_string(window) + " does not divide " + s.str());
    }
    return {heads, s.c / heads, window, window * window, s.h / window, s.w / window};
}

/// Copies one head's channels of one window into a (tokens x head_dim) matrix.
void gather_window(const Tensor& t, int n, int head, int wy, int wx, const WindowGeometry& g,
                   MatR& dst) {
    dst.resize(g.tokens, g.head_dim);
    for (int j = 0; j < g.head_dim; ++j) {
        const double* ch = t.channel(n, head * g.head_dim + j).data();
        for (int ty = 0; ty < g.window; ++ty) {
            const double* row = ch + static_cast<std::size_t>(wy * g.window + ty) * t.w() + wx * g.window;
            for (int tx = 0; tx < g.window; ++tx) dst(ty * g.window + tx, j) = row[tx];
        }
    }
}

void scatter_window_add(Tensor& t, int n, int head, int wy, int wx, const WindowGeometry& g,
                        const MatR& src) {
    for (int j = 0; j < g.head_dim; ++j) {
        double* ch = t.channel(n, head * g.head_dim + j).data();
        for (int ty = 0; ty < g.window; ++ty) {
            double* row = ch + static_cast<std::size_t>(wy * g.window + ty) * t.w() + wx * g.window;
            for (int tx = 0; tx < g.window; ++tx) row[tx] += src(ty * g.window + tx, j);
        }
    }
}

void row_softmax(MatR& m) {
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        double mx = m(r, 0);
        for (Eigen::Index c = 1; c < m.cols(); ++c) mx = std::max(mx, m(r, c));
        double z = 0.0;
        for (Eigen::Index c = 0; c < m.cols(); ++c) z += (m(r, c) = std::exp(m(r, c) - mx));
        for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) /= z;
    }
}

}  // namespace

Tensor window_attention_weights(const Tensor& q, const Tensor& k, int heads, int window) {
    require_same_shape(q, k, "window_attention_weights");
    const auto g = window_geometry(q.shape(), heads, window);
    const int windows = g.wins_y * g.wins_x;
    Tensor out({q.n() * heads * windows, 1, g.tokens, g.tokens});
    const double sc = 1.0 / std::sqrt(static_cast<double>(g.head_dim));
    MatR Q, K;
    int idx = 0;
    for (int n = 0; n < q.n(); ++n) {
        for (int h = 0; h < heads; ++h) {
            for (int wy = 0; wy < g.wins_y; ++wy) {
                for (int wx = 0; wx < g.wins_x; ++wx, ++idx) {
                    gather_window(q, n, h, wy, wx, g, Q);
                    gather_window(k, n, h, wy, wx, g, K);
                    MatR S = (Q * K.transpose()) * sc;
                    row_softmax(S);
                    std::copy_n(S.data(), S.size(), out.sample(idx).data());
                }
            }
        }
    }
    return out;
}

Var window_attention(const Var& q, const Var& k, const Var& v, int heads, int window) {
    require_same_shape(q.value(), k.value(), "window_attention");
    require_same_shape(q.value(), v.value(), "window_attention");
    const Shape s = q.shape();
    const auto g = window_geometry(s, heads, window);
    const double sc = 1.0 / std::sqrt(static_cast<double>(g.head_dim));
    const std::size_t per = static_cast<std::size_t>(g.tokens) * g.tokens;
    const std::size_t count = static_cast<std::size_t>(s.n) * heads * g.wins_y * g.wins_x;
    auto probs = std::make_shared<std::vector<double>>(count * per);

    Tensor out(s);
    MatR Q, K, V;
    std::size_t idx = 0;
    for (int n = 0; n < s.n; ++n) {
        for (int h = 0; h < heads; ++h) {
            for (int wy = 0; wy < g.wins_y; ++wy) {
                for (int wx = 0; wx < g.wins_x; ++wx, ++idx) {
                    gather_window(q.value(), n, h, wy, wx, g, Q);
                    gather_window(k.value(), n, h, wy, wx, g, K);
                    gather_window(v.value(), n, h, wy, wx, g, V);
                    MapR P(probs->data() + idx * per, g.tokens, g.tokens);
                    MatR S = (Q * K.transpose()) * sc;
                    row_softmax(S);
                    P = S;
                    MatR O = P * V;
                    scatter_window_add(out, n, h, wy, wx, g, O);
                }
            }
        }
    }
    return make_op_result(std::move(out), {q, k, v}, "window_attention", [g, sc, per, probs](Node& self) {
        const Tensor& qv = self.parents[0]->value;
        const Tensor& kv = self.parents[1]->value;
        const Tensor& vv = self.parents[2]->value;
        const bool gq = needs(self, 0), gk = needs(self, 1), gv = needs(self, 2);
        MatR Q, K, V, dO;
        std::size_t idx = 0;
        for (int n = 0; n < qv.n(); ++n) {
            for (int h = 0; h < g.heads; ++h) {
                for (int wy = 0; wy < g.wins_y; ++wy) {
                    for (int wx = 0; wx < g.wins_x; ++wx, ++idx) {
                        CMapR P(probs->data() + idx * per, g.tokens, g.tokens);
                        gather_window(self.grad, n, h, wy, wx, g, dO);
                        if (gv) {
                            MatR dV = P.transpose() * dO;
                            scatter_window_add(grad_of(self, 2), n, h, wy, wx, g, dV);
                        }
                        if (!gq && !gk) continue;
                        gather_window(vv, n, h, wy, wx, g, V);
                        MatR dP = dO * V.transpose();
                        MatR dS(g.tokens, g.tokens);
                        for (int r = 0; r < g.tokens; ++r) {
                            double dot = 0.0;
                            for (int c = 0; c < g.tokens; ++c) dot += dP(r, c) * P(r, c);
                            for (int c = 0; c < g.tokens; ++c) dS(r, c) = P(r, c) * (dP(r, c) - dot);
                        }
                        if (gq) {
                            gather_window(kv, n, h, wy, wx, g, K);
                            MatR dQ = (dS * K) * sc;
                            scatter_window_add(grad_of(self, 0), n, h, wy, wx, g, dQ);
                        }
                        if (gk) {
                            gather_window(qv, n, h, wy, wx, g, Q);
                            MatR dK = (dS.transpose() * Q) * sc;
                            scatter_window_add(grad_of(self, 1), n, h, wy, wx, g, dK);
                        }
                    }
                }
            }
        }
    });
}

Var spatially_varying_conv(const Var& d, const Var& kernels, int kh, int kw) {
    const Shape sd = d.shape(), sk = kernels.shape();
    if (kh % 2 == 0 || kw % 2 == 0) throw UsageError("kernel dims must be odd");
    const int taps = kh * kw;
    if (sk.n != sd.n || sk.c != sd.c * taps || sk.h != sd.h || sk.w != sd.w) {
        throw UsageError("spatially_varying_conv kernels " + sk.str() + " incompatible with features " +
                         sd.str());
    }
    const int H = sd.h, W = sd.w, rh = kh / 2, rw = kw / 2;
    Tensor out(sd);
    for (int n = 0; n < sd.n; ++n) {
        for (int c = 0; c < sd.c; ++c) {
            const double* dc = d.value().channel(n, c).data();
            double* oc = out.channel(n, c).data();
            for (int u = 0; u < kh; ++u) {
                for (int v = 0; v < kw; ++v) {
                    const double* kc = kernels.value().channel(n, c * taps + u * kw + v).data();
                    for (int y = 0; y < H; ++y) {
                        const int iy = y + u - rh;
                        if (iy < 0 || iy >= H) continue;
                        for (int x = 0; x < W; ++x) {
                            const int ix = x + v - rw;
                            if (ix < 0 || ix >= W) continue;
                            oc[y * W + x] += kc[y * W + x] * dc[iy * W + ix];
                        }
                    }
                }
            }
        }
    }
    return make_op_result(std::move(out), {d, kernels}, "spatially_varying_conv",
                          [kh, kw, taps, rh, rw](Node& self) {
                              const Tensor& dv = self.parents[0]->value;
                              const Tensor& kv = self.parents[1]->value;
                              const bool gd = needs(self, 0), gk = needs(self, 1);
                              const int H = dv.h(), W = dv.w();
                              for (int n = 0; n < dv.n(); ++n) {
                                  for (int c = 0; c < dv.c(); ++c) {
                                      const double* dc = dv.channel(n, c).data();
                                      const double* go = self.grad.channel(n, c).data();
                                      double* gdc = gd ? grad_of(self, 0).channel(n, c).data() : nullptr;
                                      for (int u = 0; u < kh; ++u) {
                                          for (int v = 0; v < kw; ++v) {
                                              const int ch = c * taps + u * kw + v;
                                              const double* kc = kv.channel(n, ch).data();
                                              double* gkc = gk ? grad_of(self, 1).channel(n, ch).data() : nullptr;
                                              for (int y = 0; y < H; ++y) {
                                                  const int iy = y + u - rh;
                                                  if (iy < 0 || iy >= H) continue;
                                                  for (int x = 0; x < W; ++x) {
                                                      const int ix = x + v - rw;
                                                      if (ix < 0 || ix >= W) continue;
                                                      const double g = go[y * W + x];
                                                      if (gkc) gkc[y * W + x] += g * dc[iy * W + ix];
                                                      if (gdc) gdc[iy * W + ix] += g * kc[y * W + x];
                                                  }
                                              }
                                          }
                                      }
                                  }
                              }
                          });
}

// Losses -----------------------------------------------------------------------

Var bce_mean(const Var& pred, const Var& target, double eps) {
    require_same_shape(pred.value(), target.value(), "bce_mean");
    const Tensor& p = pred.value();
    const Tensor& t = target.value();
    const double M = static_cast<double>(p.size());
    auto* probe = active_nonsmooth_probe();
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double q = std::clamp(p[i], eps, 1.0 - eps);
        if (probe) {
            probe->record(p[i] > eps);
            probe->record(p[i] < 1.0 - eps);
        }
        acc -= t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
    }
    return make_op_result(Tensor::scalar(acc / M), {pred}, "bce_mean", [t, eps, M](Node& self) {
        const Tensor& p = self.parents[0]->value;
        Tensor& g = grad_of(self, 0);
        const double go = self.grad[0] / M;
        for (std::size_t i = 0; i < p.size(); ++i) {
            if (p[i] <= eps || p[i] >= 1.0 - eps) continue;
            g[i] += go * (p[i] - t[i]) / (p[i] * (1.0 - p[i]));
        }
    });
}

}  // namespace llie::ops
