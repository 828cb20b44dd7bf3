#pragma once

#include "cpfc/tensor.hpp"

namespace cpfc {

// Differentiable operations. Each runs eagerly and, when a ComputationRecord
// is active and an input participates in differentiation, appends its adjoint
// step to the record. Image tensors are channel-major {C, H, W}.

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor neg(const Tensor& a);
Tensor scale(const Tensor& a, float c);
Tensor add_scalar(const Tensor& a, float c);

// Reductions accumulate in 64-bit.
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

Tensor relu(const Tensor& a);
Tensor sigmoid(const Tensor& a);

// Max-subtracted softmax along `axis`; output sums to 1 along that axis.
Tensor softmax(const Tensor& a, int axis);

// 2-D convolution with zero padding. input {Cin,H,W}, weight {Cout,Cin,k,k},
// bias {Cout} (or undefined for none). layer_name labels shape errors.
Tensor conv2d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, int pad, const std::string& layer_name = "conv2d");

// Single-channel convolution with reflection padding (edge not repeated) and
// a fixed, non-differentiated kernel. field {H,W}, kernel {k,k} with odd k.
Tensor conv2d_reflect(const Tensor& field, const Tensor& kernel);

// Max pooling; ties route the gradient to the first maximum in scan order.
Tensor maxpool2d(const Tensor& input, int window, int stride,
                 const std::string& layer_name = "maxpool");

// y = W x + b. input {F}, weight {out,F}, bias {out}.
Tensor linear(const Tensor& input, const Tensor& weight, const Tensor& bias,
              const std::string& layer_name = "linear");

Tensor flatten(const Tensor& input);

// Single-sample batch normalization: per-channel statistics over spatial
// positions. input {C,H,W}, gamma/beta {C}.
Tensor batchnorm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                 float eps = 1e-5f, const std::string& layer_name = "batchnorm");

}  // namespace cpfc
