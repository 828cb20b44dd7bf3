#pragma once

#include <string>
#include <vector>

#include "cpfc/tensor.hpp"

namespace cpfc {

enum class LayerKind { Conv2d, Relu, BatchNorm, MaxPool, Linear, Flatten };

const char* layer_kind_name(LayerKind kind);

// Description of one layer; only the fields for its kind are meaningful.
struct LayerSpec {
    LayerKind kind = LayerKind::Relu;

    // conv2d
    int in_channels = 0;
    int out_channels = 0;
    int kernel = 0;
    int stride = 1;
    int pad = 0;
    // maxpool
    int pool_window = 0;
    int pool_stride = 0;
    // linear
    int in_features = 0;
    int out_features = 0;
    // batchnorm
    int channels = 0;

    static LayerSpec conv2d(int in_c, int out_c, int k, int stride = 1, int pad = 0);
    static LayerSpec relu();
    static LayerSpec batchnorm(int channels);
    static LayerSpec maxpool(int window, int stride);
    static LayerSpec linear(int in_features, int out_features);
    static LayerSpec flatten();

    bool operator==(const LayerSpec&) const = default;
};

// A layer plus its parameter tensors in declaration order:
// conv2d {weight, bias}, batchnorm {gamma, beta}, linear {weight, bias}.
struct Layer {
    LayerSpec spec;
    std::vector<Tensor> params;

    Layer deep_copy() const;
};

// Runs one layer; records the operation for differentiation when a
// ComputationRecord is active and any input or parameter requires a
// gradient. Shape mismatches throw with the layer named.
Tensor apply_layer(const Layer& layer, const Tensor& input, int layer_index = -1);

// Number of parameters a fresh layer of this kind carries, and construction
// of those tensors with seeded uniform fan-in initialization.
std::vector<Tensor> init_layer_params(const LayerSpec& spec, Rng& rng);

// Shape propagation used for architecture validation. `shape` is {C,H,W}
// before flatten and {F} after; throws naming the layer on a broken chain.
std::vector<int> propagate_shape(const LayerSpec& spec, const std::vector<int>& shape,
                                 int layer_index);

}  // namespace cpfc
