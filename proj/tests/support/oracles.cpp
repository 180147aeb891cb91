#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace llie::oracle {

Tensor random_tensor(Shape s, std::mt19937_64& rng, double lo, double hi) {
    std::uniform_real_distribution<double> u(lo, hi);
    Tensor t(s);
    for (double& v : t.values()) v = u(rng);
    return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
    if (!(a.shape() == b.shape())) return INFINITY;
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

Tensor gradient_map(const Tensor& f, int direction) {
    static constexpr int steps[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
    const int dx = steps[direction][0], dy = steps[direction][1];
    Tensor out(f.shape());
    for (int n = 0; n < f.n(); ++n) {
        for (int c = 0; c < f.c(); ++c) {
            for (int y = 0; y < f.h(); ++y) {
                for (int x = 0; x < f.w(); ++x) {
                    const int ny = y + dy, nx = x + dx;
                    if (ny < 0 || ny >= f.h() || nx < 0 || nx >= f.w()) continue;
                    out.at(n, c, y, x) = f.at(n, c, ny, nx) - f.at(n, c, y, x);
                }
            }
        }
    }
    return out;
}

Tensor instance_norm(const Tensor& x, double eps) {
    Tensor out(x.shape());
    const double count = static_cast<double>(x.h()) * x.w();
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            double mean = 0.0;
            for (int y = 0; y < x.h(); ++y) {
                for (int xx = 0; xx < x.w(); ++xx) mean += x.at(n, c, y, xx);
            }
            mean /= count;
            double var = 0.0;
            for (int y = 0; y < x.h(); ++y) {
                for (int xx = 0; xx < x.w(); ++xx) var += (x.at(n, c, y, xx) - mean) * (x.at(n, c, y, xx) - mean);
            }
            var /= count;
            for (int y = 0; y < x.h(); ++y) {
                for (int xx = 0; xx < x.w(); ++xx) {
                    out.at(n, c, y, xx) = (x.at(n, c, y, xx) - mean) / std::sqrt(var + eps);
                }
            }
        }
    }
    return out;
}

double mse(const Tensor& a, const Tensor& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
}

double psnr(const Tensor& a, const Tensor& b, double max_val) {
    const double e = mse(a, b);
    if (e == 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(max_val * max_val / e));
}

Tensor luma(const Tensor& img) {
    if (img.c() == 1) return img;
    Tensor out({img.n(), 1, img.h(), img.w()});
    for (int n = 0; n < img.n(); ++n) {
        for (int y = 0; y < img.h(); ++y) {
            for (int x = 0; x < img.w(); ++x) {
                out.at(n, 0, y, x) = 0.299 * img.at(n, 0, y, x) + 0.587 * img.at(n, 1, y, x) + 0.114 * img.at(n, 2, y, x);
            }
        }
    }
    return out;
}

double ssim_plane(const Tensor& a, const Tensor& b, int n) {
    constexpr int win = 11;
    constexpr double sigma = 1.5;
    double weights[win][win];
    double total = 0.0;
    for (int i = 0; i < win; ++i) {
        for (int j = 0; j < win; ++j) {
            const double di = i - win / 2, dj = j - win / 2;
            weights[i][j] = std::exp(-(di * di + dj * dj) / (2 * sigma * sigma));
            total += weights[i][j];
        }
    }
    const double c1 = 0.01 * 0.01, c2 = 0.03 * 0.03;
    double sum = 0.0;
    int windows = 0;
    for (int y0 = 0; y0 + win <= a.h(); ++y0) {
        for (int x0 = 0; x0 + win <= a.w(); ++x0) {
            double ma = 0, mb = 0, saa = 0, sbb = 0, sab = 0;
            for (int i = 0; i < win; ++i) {
                for (int j = 0; j < win; ++j) {
                    const double wgt = weights[i][j] / total;
                    const double av = a.at(n, 0, y0 + i, x0 + j), bv = b.at(n, 0, y0 + i, x0 + j);
                    ma += wgt * av;
                    mb += wgt * bv;
                    saa += wgt * av * av;
                    sbb += wgt * bv * bv;
                    sab += wgt * av * bv;
                }
            }
            const double va = saa - ma * ma, vb = sbb - mb * mb, cov = sab - ma * mb;
            sum += (2 * ma * mb + c1) * (2 * cov + c2) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
            ++windows;
        }
    }
    return sum / windows;
}

double bce(double p, double t, double eps) {
    const double q = std::min(std::max(p, eps), 1.0 - eps);
    return -(t * std::log(q) + (1.0 - t) * std::log(1.0 - q));
}

double edge_ce(const Tensor& pred, const Tensor& gt, double eps) {
    double s = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) s += bce(pred[i], gt[i], eps);
    return s / static_cast<double>(pred.size());
}

double edge_l2(const Tensor& pred, const Tensor& gt) { return mse(pred, gt); }

Tensor bilinear(const Tensor& m, int out_h, int out_w) {
    Tensor out({m.n(), m.c(), out_h, out_w});
    auto source = [](int o, int in, int out_size, int& i0, int& i1, double& frac) {
        double s = (o + 0.5) * in / out_size - 0.5;
        if (s < 0.0) s = 0.0;
        i0 = std::min(static_cast<int>(std::floor(s)), in - 1);
        i1 = std::min(i0 + 1, in - 1);
        frac = s - i0;
    };
    for (int n = 0; n < m.n(); ++n) {
        for (int c = 0; c < m.c(); ++c) {
            for (int y = 0; y < out_h; ++y) {
                int y0, y1;
                double fy;
                source(y, m.h(), out_h, y0, y1, fy);
                for (int x = 0; x < out_w; ++x) {
                    int x0, x1;
                    double fx;
                    source(x, m.w(), out_w, x0, x1, fx);
                    out.at(n, c, y, x) = (1 - fy) * ((1 - fx) * m.at(n, c, y0, x0) + fx * m.at(n, c, y0, x1)) +
                                         fy * ((1 - fx) * m.at(n, c, y1, x0) + fx * m.at(n, c, y1, x1));
                }
            }
        }
    }
    return out;
}

Tensor sgc(const Tensor& d, const Tensor& kernels, int k) {
    Tensor out(d.shape());
    for (int n = 0; n < d.n(); ++n) {
        for (int c = 0; c < d.c(); ++c) {
            for (int y = 0; y < d.h(); ++y) {
                for (int x = 0; x < d.w(); ++x) {
                    double acc = 0.0;
                    for (int u = 0; u < k; ++u) {
                        for (int v = 0; v < k; ++v) {
                            const int sy = y + u - k / 2, sx = x + v - k / 2;
                            if (sy < 0 || sy >= d.h() || sx < 0 || sx >= d.w()) continue;
                            acc += kernels.at(n, c * k * k + u * k + v, y, x) * d.at(n, c, sy, sx);
                        }
                    }
                    out.at(n, c, y, x) = acc;
                }
            }
        }
    }
    return out;
}

Tensor sgn(const Tensor& d, const Tensor& alpha, const Tensor& gamma, double eps) {
    Tensor out = instance_norm(d, eps);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = out[i] * alpha[i] + gamma[i];
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& bias, int stride, int pad) {
    const int k = w.h();
    const int oh = (x.h() + 2 * pad - k) / stride + 1, ow = (x.w() + 2 * pad - k) / stride + 1;
    Tensor out({x.n(), w.n(), oh, ow});
    for (int n = 0; n < x.n(); ++n) {
        for (int o = 0; o < w.n(); ++o) {
            for (int y = 0; y < oh; ++y) {
                for (int xx = 0; xx < ow; ++xx) {
                    double acc = bias.empty() ? 0.0 : bias[o];
                    for (int c = 0; c < x.c(); ++c) {
                        for (int u = 0; u < k; ++u) {
                            for (int v = 0; v < k; ++v) {
                                const int sy = y * stride + u - pad, sx = xx * stride + v - pad;
                                if (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) continue;
                                acc += w.at(o, c, u, v) * x.at(n, c, sy, sx);
                            }
                        }
                    }
                    out.at(n, o, y, xx) = acc;
                }
            }
        }
    }
    return out;
}

Tensor leaky(const Tensor& x, double slope) {
    Tensor out = x;
    for (double& v : out.values()) v = v > 0 ? v : slope * v;
    return out;
}

Tensor concat(const std::vector<Tensor>& parts) {
    int channels = 0;
    for (const Tensor& p : parts) channels += p.c();
    const Tensor& first = parts.front();
    Tensor out({first.n(), channels, first.h(), first.w()});
    for (int n = 0; n < first.n(); ++n) {
        int base = 0;
        for (const Tensor& p : parts) {
            for (int c = 0; c < p.c(); ++c) {
                for (int y = 0; y < p.h(); ++y) {
                    for (int x = 0; x < p.w(); ++x) out.at(n, base + c, y, x) = p.at(n, c, y, x);
                }
            }
            base += p.c();
        }
    }
    return out;
}

Tensor dense_attention(const Tensor& q, const Tensor& k, const Tensor& v, int heads) {
    const int C = q.c(), dh = C / heads, T = q.h() * q.w();
    Tensor out(q.shape());
    std::vector<double> p(T);
    for (int n = 0; n < q.n(); ++n) {
        for (int h = 0; h < heads; ++h) {
            for (int i = 0; i < T; ++i) {
                const int iy = i / q.w(), ix = i % q.w();
                double mx = -INFINITY;
                for (int j = 0; j < T; ++j) {
                    const int jy = j / q.w(), jx = j % q.w();
                    double s = 0.0;
                    for (int c = h * dh; c < (h + 1) * dh; ++c) s += q.at(n, c, iy, ix) * k.at(n, c, jy, jx);
                    p[j] = s / std::sqrt(static_cast<double>(dh));
                    mx = std::max(mx, p[j]);
                }
                double z = 0.0;
                for (int j = 0; j < T; ++j) z += (p[j] = std::exp(p[j] - mx));
                for (int c = h * dh; c < (h + 1) * dh; ++c) {
                    double acc = 0.0;
                    for (int j = 0; j < T; ++j) acc += p[j] / z * v.at(n, c, j / q.w(), j % q.w());
                    out.at(n, c, iy, ix) = acc;
                }
            }
        }
    }
    return out;
}

namespace {

Tensor value_or_empty(const Var& v) { return v.defined() ? v.value() : Tensor(); }

Tensor layer_norm(const Tensor& x, const LayerNorm& ln) {
    Tensor out(x.shape());
    for (int n = 0; n < x.n(); ++n) {
        for (int y = 0; y < x.h(); ++y) {
            for (int xx = 0; xx < x.w(); ++xx) {
                double mean = 0.0, var = 0.0;
                for (int c = 0; c < x.c(); ++c) mean += x.at(n, c, y, xx);
                mean /= x.c();
                for (int c = 0; c < x.c(); ++c) var += (x.at(n, c, y, xx) - mean) * (x.at(n, c, y, xx) - mean);
                var /= x.c();
                for (int c = 0; c < x.c(); ++c) {
                    out.at(n, c, y, xx) = (x.at(n, c, y, xx) - mean) / std::sqrt(var + ln.eps) * ln.gamma.value()[c] +
                                          ln.beta.value()[c];
                }
            }
        }
    }
    return out;
}

Tensor apply(const Conv2d& conv, const Tensor& x) {
    return conv2d(x, conv.weight.value(), value_or_empty(conv.bias), conv.stride, conv.pad);
}

Tensor depthwise(const DepthwiseConv& dw, const Tensor& x) {
    const Tensor& w = dw.weight.value();
    const int k = w.h();
    Tensor out(x.shape());
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < x.c(); ++c) {
            for (int y = 0; y < x.h(); ++y) {
                for (int xx = 0; xx < x.w(); ++xx) {
                    double acc = dw.bias.defined() ? dw.bias.value()[c] : 0.0;
                    for (int u = 0; u < k; ++u) {
                        for (int v = 0; v < k; ++v) {
                            const int sy = y + u - k / 2, sx = xx + v - k / 2;
                            if (sy < 0 || sy >= x.h() || sx < 0 || sx >= x.w()) continue;
                            acc += w.at(c, 0, u, v) * x.at(n, c, sy, sx);
                        }
                    }
                    out.at(n, c, y, xx) = acc;
                }
            }
        }
    }
    return out;
}

Tensor gelu(const Tensor& x) {
    Tensor out = x;
    for (double& v : out.values()) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    return out;
}

Tensor slice(const Tensor& x, int first, int count) {
    Tensor out({x.n(), count, x.h(), x.w()});
    for (int n = 0; n < x.n(); ++n) {
        for (int c = 0; c < count; ++c) {
            for (int y = 0; y < x.h(); ++y) {
                for (int xx = 0; xx < x.w(); ++xx) out.at(n, c, y, xx) = x.at(n, first + c, y, xx);
            }
        }
    }
    return out;
}

Tensor plus(Tensor a, const Tensor& b) {
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

}  // namespace

Tensor lre_block(const LreBlock& block, const Tensor& x) {
    const int C = x.c();
    const Tensor qkv = apply(block.qkv, layer_norm(x, block.norm1));
    const Tensor att = dense_attention(slice(qkv, 0, C), slice(qkv, C, C), slice(qkv, 2 * C, C), block.heads);
    const Tensor y = plus(x, apply(block.proj, att));
    const Tensor hidden = gelu(depthwise(block.ff_dw, gelu(apply(block.ff_in, layer_norm(y, block.norm2)))));
    return plus(y, apply(block.ff_out, hidden));
}

double softplus(double x) { return std::log(1.0 + std::exp(x)); }

}  // namespace llie::oracle
