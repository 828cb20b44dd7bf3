#include "cpfc/tensor_ops.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cpfc {

namespace {

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch");
}

//idx reflected into [0, n) without repeating the edge sample.
inline int reflect(int idx, int n) {
    if (idx < 0) idx = -idx;
    if (idx >= n) idx = 2 * (n - 1) - idx;
    return idx;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "add");
    Tensor out(a.shape());
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    if (out.numel() == 1) out.set_precise_value(a.value() + b.value());
    if (detail::tracking({a, b})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ai, bi, oi] {
                const float* g = detail::grad_read(oi);
                if (!g) return;
                if (ai->requires_grad) {
                    auto& ga = detail::grad_of(ai);
                    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                }
                if (bi->requires_grad) {
                    auto& gb = detail::grad_of(bi);
                    for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[i];
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "sub");
    Tensor out(a.shape());
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    if (out.numel() == 1) out.set_precise_value(a.value() - b.value());
    if (detail::tracking({a, b})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ai, bi, oi] {
                const float* g = detail::grad_read(oi);
                if (!g) return;
                if (ai->requires_grad) {
                    auto& ga = detail::grad_of(ai);
                    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
                }
                if (bi->requires_grad) {
                    auto& gb = detail::grad_of(bi);
                    for (size_t i = 0; i < gb.size(); ++i) gb[i] -= g[i];
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    check_same_shape(a, b, "mul");
    Tensor out(a.shape());
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    if (out.numel() == 1) out.set_precise_value(a.value() * b.value());
    if (detail::tracking({a, b})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), bi = b.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ai, bi, oi] {
                const float* g = detail::grad_read(oi);
                if (!g) return;
                if (ai->requires_grad) {
                    auto& ga = detail::grad_of(ai);
                    for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * bi->data[i];
                }
                if (bi->requires_grad) {
                    auto& gb = detail::grad_of(bi);
                    for (size_t i = 0; i < gb.size(); ++i) gb[i] += g[i] * ai->data[i];
                }
            },
            {a, b, out});
    }
    return out;
}

Tensor neg(const Tensor& a) { return scale(a, -1.0f); }

Tensor scale(const Tensor& a, float c) {
    Tensor out(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
    if (out.numel() == 1) out.set_precise_value(a.value() * c);
    if (detail::tracking({a})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ai, oi, c] {
                const float* g = detail::grad_read(oi);
                if (!g || !ai->requires_grad) return;
                auto& ga = detail::grad_of(ai);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i] * c;
            },
            {a, out});
    }
    return out;
}

Tensor add_scalar(const Tensor& a, float c) {
    Tensor out(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
    if (detail::tracking({a})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ai, oi] {
                const float* g = detail::grad_read(oi);
                if (!g || !ai->requires_grad) return;
                auto& ga = detail::grad_of(ai);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[i];
            },
            {a, out});
    }
    return out;
}

Tensor sum(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    Tensor out = Tensor::scalar(static_cast<float>(acc));
    out.set_precise_value(acc);
    if (detail::tracking({a})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ai, oi] {
                const float* g = detail::grad_read(oi);
                if (!g || !ai->requires_grad) return;
                auto& ga = detail::grad_of(ai);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
            },
            {a, out});
    }
    return out;
}

Tensor mean(const Tensor& a) {
    double acc = 0.0;
    for (float v : a.data()) acc += v;
    float n = static_cast<float>(a.numel());
    Tensor out = Tensor::scalar(static_cast<float>(acc / n));
    out.set_precise_value(acc / static_cast<double>(n));
    if (detail::tracking({a})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ai, oi, n] {
                const float* g = detail::grad_read(oi);
                if (!g || !ai->requires_grad) return;
                auto& ga = detail::grad_of(ai);
                for (size_t i = 0; i < ga.size(); ++i) ga[i] += g[0] / n;
            },
            {a, out});
    }
    return out;
}

Tensor relu(const Tensor& a) {
    Tensor out(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] > 0.0f ? av[i] : 0.0f;
    if (detail::tracking({a})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ai, oi] {
                const float* g = detail::grad_read(oi);
                if (!g || !ai->requires_grad) return;
                auto& ga = detail::grad_of(ai);
                // subgradient 0 at the kink
                for (size_t i = 0; i < ga.size(); ++i)
                    if (ai->data[i] > 0.0f) ga[i] += g[i];
            },
            {a, out});
    }
    return out;
}

Tensor sigmoid(const Tensor& a) {
    Tensor out(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (size_t i = 0; i < ov.size(); ++i) {
        float x = av[i];
        if (x >= 0.0f) {
            ov[i] = 1.0f / (1.0f + std::exp(-x));
        } else {
            float e = std::exp(x);
            ov[i] = e / (1.0f + e);
        }
    }
    if (detail::tracking({a})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ai, oi] {
                const float* g = detail::grad_read(oi);
                if (!g || !ai->requires_grad) return;
                auto& ga = detail::grad_of(ai);
                for (size_t i = 0; i < ga.size(); ++i) {
                    float y = oi->data[i];
                    ga[i] += g[i] * y * (1.0f - y);
                }
            },
            {a, out});
    }
    return out;
}

Tensor softmax(const Tensor& a, int axis) {
    if (axis < 0 || axis >= a.ndim())
        throw std::invalid_argument("softmax: axis out of range");
    int axis_len = a.dim(axis);
    int inner = 1, outer = 1;
    for (int i = axis + 1; i < a.ndim(); ++i) inner *= a.dim(i);
    for (int i = 0; i < axis; ++i) outer *= a.dim(i);

    Tensor out(a.shape());
    const auto& av = a.data();
    auto& ov = out.data();
    for (int o = 0; o < outer; ++o) {
        for (int in = 0; in < inner; ++in) {
            size_t base = static_cast<size_t>(o) * axis_len * inner + in;
            float mx = av[base];
            for (int k = 1; k < axis_len; ++k)
                mx = std::max(mx, av[base + static_cast<size_t>(k) * inner]);
            double denom = 0.0;
            for (int k = 0; k < axis_len; ++k) {
                size_t idx = base + static_cast<size_t>(k) * inner;
                float e = std::exp(av[idx] - mx);
                ov[idx] = e;
                denom += e;
            }
            for (int k = 0; k < axis_len; ++k) {
                size_t idx = base + static_cast<size_t>(k) * inner;
                ov[idx] = static_cast<float>(ov[idx] / denom);
            }
        }
    }
    if (detail::tracking({a})) {
        out.set_requires_grad(true);
        auto ai = a.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ai, oi, axis_len, inner, outer] {
                const float* g = detail::grad_read(oi);
                if (!g || !ai->requires_grad) return;
                auto& ga = detail::grad_of(ai);
                for (int o = 0; o < outer; ++o) {
                    for (int in = 0; in < inner; ++in) {
                        size_t base = static_cast<size_t>(o) * axis_len * inner +
                                      static_cast<size_t>(in);
                        double dot = 0.0;
                        for (int k = 0; k < axis_len; ++k) {
                            size_t idx = base + static_cast<size_t>(k) * inner;
                            dot += static_cast<double>(g[idx]) * oi->data[idx];
                        }
                        for (int k = 0; k < axis_len; ++k) {
                            size_t idx = base + static_cast<size_t>(k) * inner;
                            ga[idx] += oi->data[idx] *
                                       (g[idx] - static_cast<float>(dot));
                        }
                    }
                }
            },
            {a, out});
    }
    return out;
}

Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad, const std::string& layer_name) {
    if (input.ndim() != 3)
        throw std::invalid_argument(layer_name + ": input must be {C,H,W}, got " +
                                    std::to_string(input.ndim()) + "-d");
    if (weight.ndim() != 4)
        throw std::invalid_argument(layer_name + ": weight must be {Cout,Cin,k,k}");
    int cin = input.dim(0), h = input.dim(1), w = input.dim(2);
    int cout = weight.dim(0), k = weight.dim(2);
    if (weight.dim(1) != cin)
        throw std::invalid_argument(layer_name + ": expected " + std::to_string(weight.dim(1)) +
                                    " input channels, got " + std::to_string(cin));
    if (weight.dim(3) != k) throw std::invalid_argument(layer_name + ": kernel must be square");
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != cout))
        throw std::invalid_argument(layer_name + ": bias size must equal output channels");
    if (stride < 1) throw std::invalid_argument(layer_name + ": stride must be >= 1");
    int ho = (h + 2 * pad - k) / stride + 1;
    int wo = (w + 2 * pad - k) / stride + 1;
    if (h + 2 * pad < k || w + 2 * pad < k)
        throw std::invalid_argument(layer_name + ": kernel " + std::to_string(k) +
                                    " exceeds padded input " + std::to_string(h + 2 * pad) + "x" +
                                    std::to_string(w + 2 * pad));

    Tensor out({cout, ho, wo});
    const float* in = input.data().data();
    const float* wt = weight.data().data();
    float* ov = out.data().data();

    if (bias.defined()) {
        for (int co = 0; co < cout; ++co)
            std::fill(ov + static_cast<size_t>(co) * ho * wo,
                      ov + static_cast<size_t>(co + 1) * ho * wo, bias.data()[static_cast<size_t>(co)]);
    }
    for (int co = 0; co < cout; ++co) {
        for (int ci = 0; ci < cin; ++ci) {
            const float* in_c = in + static_cast<size_t>(ci) * h * w;
            const float* wt_c = wt + (static_cast<size_t>(co) * cin + ci) * k * k;
            for (int kh = 0; kh < k; ++kh) {
                for (int kw = 0; kw < k; ++kw) {
                    float wv = wt_c[kh * k + kw];
                    if (wv == 0.0f) continue;
                    for (int oh = 0; oh < ho; ++oh) {
                        int ih = oh * stride + kh - pad;
                        if (ih < 0 || ih >= h) continue;
                        // valid output columns for this tap
                        int lo = pad - kw;
                        int x0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
                        int x1 = (w - 1 - kw + pad) / stride;
                        if (w - 1 - kw + pad < 0) continue;
                        if (x1 >= wo) x1 = wo - 1;
                        const float* irow = in_c + static_cast<size_t>(ih) * w;
                        float* orow = ov + (static_cast<size_t>(co) * ho + oh) * wo;
                        for (int ox = x0; ox <= x1; ++ox)
                            orow[ox] += wv * irow[ox * stride + kw - pad];
                    }
                }
            }
        }
    }

    if (detail::tracking({input, weight, bias})) {
        out.set_requires_grad(true);
        auto ii = input.impl(), wi = weight.impl(), oi = out.impl();
        auto bi = bias.defined() ? bias.impl() : nullptr;
        ComputationRecord::active()->push_op(
            [ii, wi, bi, oi, cin, cout, h, w, k, ho, wo, stride, pad] {
                const float* g = detail::grad_read(oi);
                if (!g) return;
                float* gin = ii->requires_grad ? detail::grad_of(ii).data() : nullptr;
                float* gwt = wi->requires_grad ? detail::grad_of(wi).data() : nullptr;
                if (bi && bi->requires_grad) {
                    auto& gb = detail::grad_of(bi);
                    for (int co = 0; co < cout; ++co) {
                        double acc = 0.0;
                        const float* grow = g + static_cast<size_t>(co) * ho * wo;
                        for (int i = 0; i < ho * wo; ++i) acc += grow[i];
                        gb[static_cast<size_t>(co)] += static_cast<float>(acc);
                    }
                }
                if (!gin && !gwt) return;
                const float* in = ii->data.data();
                const float* wt = wi->data.data();
                for (int co = 0; co < cout; ++co) {
                    for (int ci = 0; ci < cin; ++ci) {
                        const float* in_c = in + static_cast<size_t>(ci) * h * w;
                        float* gin_c = gin ? gin + static_cast<size_t>(ci) * h * w : nullptr;
                        size_t wbase = (static_cast<size_t>(co) * cin + ci) * k * k;
                        for (int kh = 0; kh < k; ++kh) {
                            for (int kw = 0; kw < k; ++kw) {
                                float wv = wt[wbase + static_cast<size_t>(kh * k + kw)];
                                double wacc = 0.0;
                                for (int oh = 0; oh < ho; ++oh) {
                                    int ih = oh * stride + kh - pad;
                                    if (ih < 0 || ih >= h) continue;
                                    int lo = pad - kw;
                                    int x0 = lo <= 0 ? 0 : (lo + stride - 1) / stride;
                                    if (w - 1 - kw + pad < 0) continue;
                                    int x1 = (w - 1 - kw + pad) / stride;
                                    if (x1 >= wo) x1 = wo - 1;
                                    const float* grow =
                                        g + (static_cast<size_t>(co) * ho + oh) * wo;
                                    const float* irow = in_c + static_cast<size_t>(ih) * w;
                                    if (gin_c) {
                                        float* girow = gin_c + static_cast<size_t>(ih) * w;
                                        for (int ox = x0; ox <= x1; ++ox)
                                            girow[ox * stride + kw - pad] += grow[ox] * wv;
                                    }
                                    if (gwt) {
                                        for (int ox = x0; ox <= x1; ++ox)
                                            wacc += static_cast<double>(grow[ox]) *
                                                    irow[ox * stride + kw - pad];
                                    }
                                }
                                if (gwt) gwt[wbase + static_cast<size_t>(kh * k + kw)] +=
                                    static_cast<float>(wacc);
                            }
                        }
                    }
                }
            },
            bias.defined() ? std::initializer_list<Tensor>{input, weight, bias, out}
                           : std::initializer_list<Tensor>{input, weight, out});
    }
    return out;
}

Tensor conv2d_reflect(const Tensor& field, const Tensor& kernel) {
    if (field.ndim() != 2) throw std::invalid_argument("conv2d_reflect: field must be {H,W}");
    if (kernel.ndim() != 2 || kernel.dim(0) != kernel.dim(1) || kernel.dim(0) % 2 == 0)
        throw std::invalid_argument("conv2d_reflect: kernel must be odd square");
    int h = field.dim(0), w = field.dim(1), k = kernel.dim(0), r = k / 2;
    if (r > h - 1 || r > w - 1)
        throw std::invalid_argument("conv2d_reflect: kernel radius exceeds field extent");

    Tensor out({h, w});
    const float* f = field.data().data();
    const float* kv = kernel.data().data();
    float* ov = out.data().data();
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            double acc = 0.0;
            for (int ky = 0; ky < k; ++ky) {
                int sy = reflect(y + ky - r, h);
                for (int kx = 0; kx < k; ++kx) {
                    int sx = reflect(x + kx - r, w);
                    acc += static_cast<double>(kv[ky * k + kx]) * f[sy * w + sx];
                }
            }
            ov[y * w + x] = static_cast<float>(acc);
        }
    }
    if (detail::tracking({field})) {
        out.set_requires_grad(true);
        auto fi = field.impl(), ki = kernel.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [fi, ki, oi, h, w, k, r] {
                const float* g = detail::grad_read(oi);
                if (!g || !fi->requires_grad) return;
                float* gf = detail::grad_of(fi).data();
                const float* kv = ki->data.data();
                for (int y = 0; y < h; ++y) {
                    for (int x = 0; x < w; ++x) {
                        float gv = g[y * w + x];
                        if (gv == 0.0f) continue;
                        for (int ky = 0; ky < k; ++ky) {
                            int sy = reflect(y + ky - r, h);
                            for (int kx = 0; kx < k; ++kx) {
                                int sx = reflect(x + kx - r, w);
                                gf[sy * w + sx] += gv * kv[ky * k + kx];
                            }
                        }
                    }
                }
            },
            {field, out});
    }
    return out;
}

Tensor maxpool2d(const Tensor& input, int window, int stride, const std::string& layer_name) {
    if (input.ndim() != 3)
        throw std::invalid_argument(layer_name + ": input must be {C,H,W}");
    if (window < 1 || stride < 1)
        throw std::invalid_argument(layer_name + ": window and stride must be >= 1");
    int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (window > h || window > w)
        throw std::invalid_argument(layer_name + ": window " + std::to_string(window) +
                                    " exceeds input " + std::to_string(h) + "x" + std::to_string(w));
    int ho = (h - window) / stride + 1;
    int wo = (w - window) / stride + 1;

    Tensor out({c, ho, wo});
    auto argmax = std::make_shared<std::vector<int>>(static_cast<size_t>(c) * ho * wo);
    const float* in = input.data().data();
    float* ov = out.data().data();
    for (int ch = 0; ch < c; ++ch) {
        const float* in_c = in + static_cast<size_t>(ch) * h * w;
        for (int oh = 0; oh < ho; ++oh) {
            for (int ox = 0; ox < wo; ++ox) {
                int best_idx = -1;
                float best = 0.0f;
                for (int ky = 0; ky < window; ++ky) {
                    int iy = oh * stride + ky;
                    for (int kx = 0; kx < window; ++kx) {
                        int ix = ox * stride + kx;
                        float v = in_c[iy * w + ix];
                        if (best_idx < 0 || v > best) {
                            best = v;
                            best_idx = iy * w + ix;
                        }
                    }
                }
                size_t oidx = (static_cast<size_t>(ch) * ho + oh) * wo + ox;
                ov[oidx] = best;
                (*argmax)[oidx] = best_idx;
            }
        }
    }
    if (detail::tracking({input})) {
        out.set_requires_grad(true);
        auto ii = input.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ii, oi, argmax, c, h, w, ho, wo] {
                const float* g = detail::grad_read(oi);
                if (!g || !ii->requires_grad) return;
                float* gin = detail::grad_of(ii).data();
                for (int ch = 0; ch < c; ++ch) {
                    size_t obase = static_cast<size_t>(ch) * ho * wo;
                    size_t ibase = static_cast<size_t>(ch) * h * w;
                    for (int i = 0; i < ho * wo; ++i)
                        gin[ibase + static_cast<size_t>((*argmax)[obase + static_cast<size_t>(i)])] +=
                            g[obase + static_cast<size_t>(i)];
                }
            },
            {input, out});
    }
    return out;
}

Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const std::string& layer_name) {
    if (input.ndim() != 1)
        throw std::invalid_argument(layer_name + ": input must be flat, got " +
                                    std::to_string(input.ndim()) + "-d");
    if (weight.ndim() != 2 || weight.dim(1) != input.dim(0))
        throw std::invalid_argument(layer_name + ": expected " +
                                    std::to_string(weight.defined() ? weight.dim(1) : -1) +
                                    " input features, got " + std::to_string(input.dim(0)));
    int out_n = weight.dim(0), in_n = weight.dim(1);
    if (bias.defined() && (bias.ndim() != 1 || bias.dim(0) != out_n))
        throw std::invalid_argument(layer_name + ": bias size must equal output features");

    Tensor out({out_n});
    const float* x = input.data().data();
    const float* wt = weight.data().data();
    float* ov = out.data().data();
    for (int o = 0; o < out_n; ++o) {
        double acc = bias.defined() ? bias.data()[static_cast<size_t>(o)] : 0.0;
        const float* wrow = wt + static_cast<size_t>(o) * in_n;
        for (int i = 0; i < in_n; ++i) acc += static_cast<double>(wrow[i]) * x[i];
        ov[o] = static_cast<float>(acc);
    }
    if (detail::tracking({input, weight, bias})) {
        out.set_requires_grad(true);
        auto ii = input.impl(), wi = weight.impl(), oi = out.impl();
        auto bi = bias.defined() ? bias.impl() : nullptr;
        ComputationRecord::active()->push_op(
            [ii, wi, bi, oi, out_n, in_n] {
                const float* g = detail::grad_read(oi);
                if (!g) return;
                const float* wt = wi->data.data();
                const float* x = ii->data.data();
                if (ii->requires_grad) {
                    float* gx = detail::grad_of(ii).data();
                    for (int o = 0; o < out_n; ++o) {
                        const float* wrow = wt + static_cast<size_t>(o) * in_n;
                        for (int i = 0; i < in_n; ++i) gx[i] += g[o] * wrow[i];
                    }
                }
                if (wi->requires_grad) {
                    float* gw = detail::grad_of(wi).data();
                    for (int o = 0; o < out_n; ++o) {
                        float* grow = gw + static_cast<size_t>(o) * in_n;
                        for (int i = 0; i < in_n; ++i) grow[i] += g[o] * x[i];
                    }
                }
                if (bi && bi->requires_grad) {
                    float* gb = detail::grad_of(bi).data();
                    for (int o = 0; o < out_n; ++o) gb[o] += g[o];
                }
            },
            bias.defined() ? std::initializer_list<Tensor>{input, weight, bias, out}
                           : std::initializer_list<Tensor>{input, weight, out});
    }
    return out;
}

Tensor flatten(const Tensor& input) {
    Tensor out = Tensor::from({input.numel()}, input.data());
    if (detail::tracking({input})) {
        out.set_requires_grad(true);
        auto ii = input.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ii, oi] {
                const float* g = detail::grad_read(oi);
                if (!g || !ii->requires_grad) return;
                auto& gi = detail::grad_of(ii);
                for (size_t i = 0; i < gi.size(); ++i) gi[i] += g[i];
            },
            {input, out});
    }
    return out;
}

Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta, float eps,
                 const std::string& layer_name) {
    if (input.ndim() != 3)
        throw std::invalid_argument(layer_name + ": input must be {C,H,W}");
    int c = input.dim(0), h = input.dim(1), w = input.dim(2);
    if (gamma.ndim() != 1 || gamma.dim(0) != c || beta.ndim() != 1 || beta.dim(0) != c)
        throw std::invalid_argument(layer_name + ": expected " + std::to_string(gamma.dim(0)) +
                                    " channels, got " + std::to_string(c));
    int m = h * w;

    Tensor out({c, h, w});
    auto xhat = std::make_shared<std::vector<float>>(static_cast<size_t>(c) * m);
    auto inv_std = std::make_shared<std::vector<float>>(static_cast<size_t>(c));
    const float* in = input.data().data();
    float* ov = out.data().data();
    for (int ch = 0; ch < c; ++ch) {
        const float* x = in + static_cast<size_t>(ch) * m;
        double mu = 0.0;
        for (int i = 0; i < m; ++i) mu += x[i];
        mu /= m;
        double var = 0.0;
        for (int i = 0; i < m; ++i) {
            double d = x[i] - mu;
            var += d * d;
        }
        var /= m;
        float inv = static_cast<float>(1.0 / std::sqrt(var + eps));
        (*inv_std)[static_cast<size_t>(ch)] = inv;
        float gmm = gamma.data()[static_cast<size_t>(ch)];
        float bta = beta.data()[static_cast<size_t>(ch)];
        float* xh = xhat->data() + static_cast<size_t>(ch) * m;
        float* o = ov + static_cast<size_t>(ch) * m;
        for (int i = 0; i < m; ++i) {
            xh[i] = static_cast<float>((x[i] - mu) * inv);
            o[i] = gmm * xh[i] + bta;
        }
    }
    if (detail::tracking({input, gamma, beta})) {
        out.set_requires_grad(true);
        auto ii = input.impl(), gi = gamma.impl(), bi = beta.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ii, gi, bi, oi, xhat, inv_std, c, m] {
                const float* g = detail::grad_read(oi);
                if (!g) return;
                for (int ch = 0; ch < c; ++ch) {
                    const float* gch = g + static_cast<size_t>(ch) * m;
                    const float* xh = xhat->data() + static_cast<size_t>(ch) * m;
                    double gsum = 0.0, gxsum = 0.0;
                    for (int i = 0; i < m; ++i) {
                        gsum += gch[i];
                        gxsum += static_cast<double>(gch[i]) * xh[i];
                    }
                    if (gi->requires_grad)
                        detail::grad_of(gi)[static_cast<size_t>(ch)] += static_cast<float>(gxsum);
                    if (bi->requires_grad)
                        detail::grad_of(bi)[static_cast<size_t>(ch)] += static_cast<float>(gsum);
                    if (ii->requires_grad) {
                        float* gx = detail::grad_of(ii).data() + static_cast<size_t>(ch) * m;
                        float gmm = gi->data[static_cast<size_t>(ch)];
                        float inv = (*inv_std)[static_cast<size_t>(ch)];
                        float mg = static_cast<float>(gsum / m);
                        float mgx = static_cast<float>(gxsum / m);
                        for (int i = 0; i < m; ++i)
                            gx[i] += gmm * inv * (gch[i] - mg - xh[i] * mgx);
                    }
                }
            },
            {input, gamma, beta, out});
    }
    return out;
}

}  // namespace cpfc
