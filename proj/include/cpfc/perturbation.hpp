#pragma once

#include <cstdint>
#include <vector>

#include "cpfc/coalition.hpp"
#include "cpfc/network.hpp"

namespace cpfc {

enum class PerturbMode {
    MaskBlend,  // blend toward a baseline image (default deletion game)
    Additive,   // literal x + a*p
};

enum class BaselineKind { Zeros, Blur };

struct PerturbationConfig {
    double mu = 100.0;      // confidence weight
    double v = 1.0;         // consistency weight
    double sigma = 1.0;     // Gaussian std, pixels
    int steps = 300;
    double lr = 0.1;
    int a_samples_per_step = 1;
    PerturbMode mode = PerturbMode::MaskBlend;
    BaselineKind baseline = BaselineKind::Zeros;
    std::uint64_t seed = 0;
};

// Per-pixel importance in [0,1]; one minus the final perturbation mask.
struct SaliencyMap {
    int width = 0;
    int height = 0;
    std::vector<float> values;  // row-major
};

// Baseline image matching x {C,H,W}: zeros, or a Gaussian blur of x.
Tensor make_baseline(const Tensor& x, BaselineKind kind);

// MaskBlend: x*(1 - a*p) + baseline*(a*p); Additive: x + a*p. The mask is
// broadcast across channels; gradients flow into p (and x when tracked).
Tensor perturb_input(const Tensor& x, const Tensor& p, float a, PerturbMode mode,
                     const Tensor& baseline);

// Hinge on class probabilities: max{0, max_{j != t} f_j - f_t}. Zero exactly
// when t is the strict argmax.
Tensor hinge_confidence(const Tensor& probabilities, int target);

Tensor confidence_loss(const Network& net, const Tensor& x, const Tensor& p, int target,
                       float a, PerturbMode mode, const Tensor& baseline);

// -||p||_1 for a nonnegative mask.
Tensor mask_loss(const Tensor& p);

// Discrete Gaussian on a (2*ceil(3*sigma)+1)^2 grid of integer offsets,
// renormalized to sum exactly 1.
Tensor gaussian_kernel(double sigma);
Tensor gaussian_kernel_unnormalized(double sigma);

// Sum over coalitions of -mean((p .* C_i) convolved with the Gaussian),
// reflection padding at the image border.
Tensor consistency_loss(const Tensor& p, const CoalitionSet& coalitions, double sigma);
Tensor consistency_loss(const Tensor& p, const CoalitionSet& coalitions, const Tensor& kernel);

struct MaskTraceRow {
    int step = 0;
    double mask_loss = 0.0;
    double confidence_loss = 0.0;
    double consistency_loss = 0.0;
    double total = 0.0;
};

struct MaskOptimizationResult {
    Tensor mask;          // final p in (0,1), {H,W}
    SaliencyMap saliency; // 1 - p
    std::vector<MaskTraceRow> trace;
};

// Gradient descent on L = L_mask + mu*L_conf + v*L_consistency over a latent
// field z with p = logistic(z), z initialized to zero. The target class is
// fixed from predict(net, x) before optimization; each step draws
// a_samples_per_step values of a from the seeded stream and averages the
// confidence loss over them. Aborts naming the step if the loss turns
// non-finite.
MaskOptimizationResult optimize_mask(const Network& net, const Tensor& x,
                                     const CoalitionSet& coalitions,
                                     const PerturbationConfig& config);

}  // namespace cpfc
