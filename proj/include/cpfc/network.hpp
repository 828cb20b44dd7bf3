#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "cpfc/layers.hpp"

namespace cpfc {

// Ordered layer stack ending in a logits vector of length class_count.
struct Network {
    std::vector<Layer> layers;
    std::array<int, 3> input_shape{3, 32, 32};  // {C,H,W}
    int class_count = 0;

    Tensor forward(const Tensor& x) const;
    std::vector<Tensor> parameters() const;
    void set_requires_grad(bool v);
    Network deep_copy() const;
};

// All-convolutional feature extractor: only conv/relu/batchnorm layers, all
// convolutions stride-1 same-padded, ending in a 1x1 conv to cluster_count
// channels plus batchnorm. Forward preserves the spatial extent.
struct ExtractionNet {
    std::vector<Layer> layers;
    std::array<int, 3> input_shape{3, 32, 32};
    int cluster_count = 0;

    Tensor forward(const Tensor& x) const;  // -> {cluster_count, H, W}
    std::vector<Tensor> parameters() const;
    void set_requires_grad(bool v);
    ExtractionNet deep_copy() const;
};

struct ClassifierConfig {
    std::array<int, 3> input_shape{3, 32, 32};
    int class_count = 4;
    std::vector<int> block_channels{16, 32, 64};  // conv-relu-batchnorm + maxpool per block
    int kernel = 3;
    std::uint64_t seed = 1;
};

// Validates the layer chain against the input shape (errors name the first
// bad layer) and initializes parameters from the seed.
Network build_network(std::vector<LayerSpec> specs, std::array<int, 3> input_shape,
                      int class_count, std::uint64_t seed);

// Default desk-scale classifier: conv-relu-batchnorm blocks with maxpool,
// then flatten + linear head.
Network build_classifier(const ClassifierConfig& config);

struct LabeledImages {
    std::vector<Tensor> images;  // each {C,H,W}
    std::vector<int> labels;
};

struct TrainConfig {
    double lr = 0.01;
    double momentum = 0.9;
    int epochs = 20;
    int batch = 16;
    std::uint64_t seed = 1;
};

struct TrainReport {
    double held_out_accuracy = 0.0;
    std::vector<double> epoch_losses;
};

// Minibatch gradient descent on softmax cross-entropy. Deterministic given
// the seed; aborts with a diagnostic if the loss turns non-finite.
TrainReport train_classifier(Network& net, const LabeledImages& train,
                             const LabeledImages& held_out, const TrainConfig& config);

double accuracy(const Network& net, const LabeledImages& data);

struct Prediction {
    std::vector<float> probabilities;
    int predicted_class = 0;  // argmax, lowest index on ties
};

Prediction predict(const Network& net, const Tensor& image);

// Rebuilds the network for correlated-feature extraction: keeps only
// conv/relu/batchnorm layers (convs re-padded to same-padding, stride 1)
// with the classifier's trained parameters, then appends a freshly
// initialized 1x1 conv to cluster_count channels and a batchnorm.
ExtractionNet reconfigure_for_extraction(const Network& net, int cluster_count,
                                         std::uint64_t seed);

// Checkpoint file: "CPFC1" magic and a text architecture header, then raw
// little-endian 32-bit floats for every parameter tensor in order.
void save_checkpoint(const Network& net, const std::string& path);
Network load_checkpoint(const std::string& path);

// Stable softmax cross-entropy against one label; differentiable fused op.
Tensor cross_entropy_logits(const Tensor& logits, int label);

}  // namespace cpfc
