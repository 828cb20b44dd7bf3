#include "cpfc/perturbation.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cpfc/tensor_ops.hpp"

namespace cpfc {

Tensor make_baseline(const Tensor& x, BaselineKind kind) {
    if (kind == BaselineKind::Zeros) return Tensor::zeros(x.shape());
    // Blur baseline: per-channel Gaussian, sigma 2px.
    Tensor kernel = gaussian_kernel(2.0);
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    Tensor out({c, h, w});
    for (int ch = 0; ch < c; ++ch) {
        Tensor plane = Tensor::from({h, w}, std::vector<float>(
            x.data().begin() + static_cast<size_t>(ch) * h * w,
            x.data().begin() + static_cast<size_t>(ch + 1) * h * w));
        Tensor blurred = conv2d_reflect(plane, kernel);
        std::copy(blurred.data().begin(), blurred.data().end(),
                  out.data().begin() + static_cast<size_t>(ch) * h * w);
    }
    return out;
}

Tensor perturb_input(const Tensor& x, const Tensor& p, float a, PerturbMode mode,
                     const Tensor& baseline) {
    if (x.ndim() != 3) throw std::invalid_argument("perturb_input: x must be {C,H,W}");
    if (p.ndim() != 2 || p.dim(0) != x.dim(1) || p.dim(1) != x.dim(2))
        throw std::invalid_argument("perturb_input: mask extent must match image");
    if (mode == PerturbMode::MaskBlend && baseline.shape() != x.shape())
        throw std::invalid_argument("perturb_input: baseline shape must match image");

    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int hw = h * w;
    Tensor out(x.shape());
    const float* xv = x.data().data();
    const float* pv = p.data().data();
    float* ov = out.data().data();
    if (mode == PerturbMode::MaskBlend) {
        const float* bv = baseline.data().data();
        for (int ch = 0; ch < c; ++ch) {
            size_t base = static_cast<size_t>(ch) * hw;
            for (int i = 0; i < hw; ++i) {
                float ap = a * pv[i];
                ov[base + static_cast<size_t>(i)] =
                    xv[base + static_cast<size_t>(i)] * (1.0f - ap) +
                    bv[base + static_cast<size_t>(i)] * ap;
            }
        }
    } else {
        for (int ch = 0; ch < c; ++ch) {
            size_t base = static_cast<size_t>(ch) * hw;
            for (int i = 0; i < hw; ++i)
                ov[base + static_cast<size_t>(i)] = xv[base + static_cast<size_t>(i)] + a * pv[i];
        }
    }
    if (detail::tracking({x, p})) {
        out.set_requires_grad(true);
        auto xi = x.impl(), pi = p.impl(), oi = out.impl();
        auto bi = mode == PerturbMode::MaskBlend ? baseline.impl() : nullptr;
        ComputationRecord::active()->push_op(
            [xi, pi, bi, oi, a, c, hw, mode] {
                const float* g = detail::grad_read(oi);
                if (!g) return;
                if (pi->requires_grad) {
                    auto& gp = detail::grad_of(pi);
                    for (int ch = 0; ch < c; ++ch) {
                        size_t base = static_cast<size_t>(ch) * hw;
                        if (mode == PerturbMode::MaskBlend) {
                            for (int i = 0; i < hw; ++i)
                                gp[static_cast<size_t>(i)] +=
                                    g[base + static_cast<size_t>(i)] * a *
                                    (bi->data[base + static_cast<size_t>(i)] -
                                     xi->data[base + static_cast<size_t>(i)]);
                        } else {
                            for (int i = 0; i < hw; ++i)
                                gp[static_cast<size_t>(i)] += g[base + static_cast<size_t>(i)] * a;
                        }
                    }
                }
                if (xi->requires_grad) {
                    auto& gx = detail::grad_of(xi);
                    for (int ch = 0; ch < c; ++ch) {
                        size_t base = static_cast<size_t>(ch) * hw;
                        if (mode == PerturbMode::MaskBlend) {
                            for (int i = 0; i < hw; ++i)
                                gx[base + static_cast<size_t>(i)] +=
                                    g[base + static_cast<size_t>(i)] *
                                    (1.0f - a * pi->data[static_cast<size_t>(i)]);
                        } else {
                            for (int i = 0; i < hw; ++i)
                                gx[base + static_cast<size_t>(i)] += g[base + static_cast<size_t>(i)];
                        }
                    }
                }
            },
            {x, p, out});
    }
    return out;
}

Tensor hinge_confidence(const Tensor& probabilities, int target) {
    if (probabilities.ndim() != 1)
        throw std::invalid_argument("hinge_confidence: probabilities must be 1-d");
    int n = probabilities.dim(0);
    if (target < 0 || target >= n)
        throw std::invalid_argument("hinge_confidence: target out of range");
    if (n < 2) throw std::invalid_argument("hinge_confidence: need at least 2 classes");

    const auto& f = probabilities.data();
    int rival = target == 0 ? 1 : 0;
    for (int j = 0; j < n; ++j)
        if (j != target && f[static_cast<size_t>(j)] > f[static_cast<size_t>(rival)]) rival = j;
    float margin = f[static_cast<size_t>(rival)] - f[static_cast<size_t>(target)];
    float loss = margin > 0.0f ? margin : 0.0f;

    Tensor out = Tensor::scalar(loss);
    out.set_precise_value(static_cast<double>(loss));
    if (detail::tracking({probabilities})) {
        out.set_requires_grad(true);
        auto fi = probabilities.impl(), oi = out.impl();
        bool active = margin > 0.0f;  // subgradient 0 at the kink
        ComputationRecord::active()->push_op(
            [fi, oi, rival, target, active] {
                const float* g = detail::grad_read(oi);
                if (!g || !fi->requires_grad || !active) return;
                auto& gf = detail::grad_of(fi);
                gf[static_cast<size_t>(rival)] += g[0];
                gf[static_cast<size_t>(target)] -= g[0];
            },
            {probabilities, out});
    }
    return out;
}

Tensor confidence_loss(const Network& net, const Tensor& x, const Tensor& p, int target,
                       float a, PerturbMode mode, const Tensor& baseline) {
    Tensor perturbed = perturb_input(x, p, a, mode, baseline);
    Tensor probs = softmax(net.forward(perturbed), 0);
    return hinge_confidence(probs, target);
}

Tensor mask_loss(const Tensor& p) { return neg(sum(p)); }

Tensor gaussian_kernel_unnormalized(double sigma) {
    if (sigma <= 0.0) throw std::invalid_argument("gaussian_kernel: sigma must be positive");
    int radius = static_cast<int>(std::ceil(3.0 * sigma));
    int size = 2 * radius + 1;
    Tensor kernel({size, size});
    auto& kv = kernel.data();
    double norm = 1.0 / (2.0 * M_PI * sigma * sigma);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            double dy = y - radius, dx = x - radius;
            kv[static_cast<size_t>(y * size + x)] = static_cast<float>(
                norm * std::exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)));
        }
    }
    return kernel;
}

Tensor gaussian_kernel(double sigma) {
    Tensor kernel = gaussian_kernel_unnormalized(sigma);
    double total = 0.0;
    for (float v : kernel.data()) total += v;
    for (float& v : kernel.data()) v = static_cast<float>(v / total);
    return kernel;
}

Tensor consistency_loss(const Tensor& p, const CoalitionSet& coalitions, double sigma) {
    return consistency_loss(p, coalitions, gaussian_kernel(sigma));
}

Tensor consistency_loss(const Tensor& p, const CoalitionSet& coalitions, const Tensor& kernel) {
    if (p.ndim() != 2) throw std::invalid_argument("consistency_loss: mask must be {H,W}");
    if (p.dim(0) != coalitions.height || p.dim(1) != coalitions.width)
        throw std::invalid_argument("consistency_loss: coalition extent mismatch");
    float inv_area = 1.0f / static_cast<float>(p.numel());
    Tensor total;
    for (const auto& mask : coalitions.masks) {
        Tensor mask_t({p.dim(0), p.dim(1)});
        for (size_t i = 0; i < mask.size(); ++i) mask_t.data()[i] = static_cast<float>(mask[i]);
        Tensor masked = mul(p, mask_t);
        Tensor smoothed = conv2d_reflect(masked, kernel);
        Tensor term = scale(sum(smoothed), -inv_area);
        total = total.defined() ? add(total, term) : term;
    }
    if (!total.defined()) throw std::invalid_argument("consistency_loss: empty coalition set");
    return total;
}

MaskOptimizationResult optimize_mask(const Network& net, const Tensor& x,
                                     const CoalitionSet& coalitions,
                                     const PerturbationConfig& config) {
    if (config.mu < 0.0 || config.v < 0.0)
        throw std::invalid_argument("optimize_mask: loss weights must be >= 0");
    if (config.sigma <= 0.0) throw std::invalid_argument("optimize_mask: sigma must be positive");
    if (config.steps < 1) throw std::invalid_argument("optimize_mask: steps must be >= 1");
    if (config.a_samples_per_step < 1)
        throw std::invalid_argument("optimize_mask: need at least one a sample per step");

    int h = x.dim(1), w = x.dim(2);
    int target = predict(net, x).predicted_class;
    Tensor baseline = make_baseline(x, config.baseline);
    Tensor kernel = gaussian_kernel(config.sigma);

    Tensor z = Tensor::zeros({h, w});  // p starts at 0.5
    z.set_requires_grad(true);
    Rng rng(config.seed);

    MaskOptimizationResult result;
    for (int step = 0; step < config.steps; ++step) {
        ComputationRecord record;
        RecordScope scope(record);
        Tensor p = sigmoid(z);
        Tensor l_mask = mask_loss(p);

        Tensor conf_acc;
        for (int s = 0; s < config.a_samples_per_step; ++s) {
            float a = static_cast<float>(rng.uniform01());
            Tensor term = confidence_loss(net, x, p, target, a, config.mode, baseline);
            conf_acc = conf_acc.defined() ? add(conf_acc, term) : term;
        }
        Tensor l_conf = scale(conf_acc, 1.0f / static_cast<float>(config.a_samples_per_step));
        Tensor l_cons = consistency_loss(p, coalitions, kernel);

        Tensor total = add(add(l_mask, scale(l_conf, static_cast<float>(config.mu))),
                           scale(l_cons, static_cast<float>(config.v)));
        if (!std::isfinite(total.value()))
            throw std::runtime_error("optimize_mask: non-finite loss at step " +
                                     std::to_string(step));
        result.trace.push_back({step, static_cast<double>(l_mask.value()),
                                static_cast<double>(l_conf.value()),
                                static_cast<double>(l_cons.value()),
                                static_cast<double>(total.value())});

        record.backward(total);
        auto& g = z.grad();
        auto& d = z.data();
        for (size_t i = 0; i < d.size(); ++i)
            d[i] -= static_cast<float>(config.lr) * g[i];
    }

    Tensor p_final = sigmoid(z);
    result.mask = p_final;
    result.saliency.width = w;
    result.saliency.height = h;
    result.saliency.values.resize(p_final.data().size());
    for (size_t i = 0; i < result.saliency.values.size(); ++i)
        result.saliency.values[i] = 1.0f - p_final.data()[i];
    return result;
}

}  // namespace cpfc
