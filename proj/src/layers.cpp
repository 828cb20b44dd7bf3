#include "cpfc/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "cpfc/tensor_ops.hpp"

namespace cpfc {

const char* layer_kind_name(LayerKind kind) {
    switch (kind) {
        case LayerKind::Conv2d: return "conv2d";
        case LayerKind::Relu: return "relu";
        case LayerKind::BatchNorm: return "batchnorm";
        case LayerKind::MaxPool: return "maxpool";
        case LayerKind::Linear: return "linear";
        case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

LayerSpec LayerSpec::conv2d(int in_c, int out_c, int k, int stride, int pad) {
    LayerSpec s;
    s.kind = LayerKind::Conv2d;
    s.in_channels = in_c;
    s.out_channels = out_c;
    s.kernel = k;
    s.stride = stride;
    s.pad = pad;
    return s;
}

LayerSpec LayerSpec::relu() {
    LayerSpec s;
    s.kind = LayerKind::Relu;
    return s;
}

LayerSpec LayerSpec::batchnorm(int channels) {
    LayerSpec s;
    s.kind = LayerKind::BatchNorm;
    s.channels = channels;
    return s;
}

LayerSpec LayerSpec::maxpool(int window, int stride) {
    LayerSpec s;
    s.kind = LayerKind::MaxPool;
    s.pool_window = window;
    s.pool_stride = stride;
    return s;
}

LayerSpec LayerSpec::linear(int in_features, int out_features) {
    LayerSpec s;
    s.kind = LayerKind::Linear;
    s.in_features = in_features;
    s.out_features = out_features;
    return s;
}

LayerSpec LayerSpec::flatten() {
    LayerSpec s;
    s.kind = LayerKind::Flatten;
    return s;
}

Layer Layer::deep_copy() const {
    Layer copy;
    copy.spec = spec;
    copy.params.reserve(params.size());
    for (const Tensor& p : params) copy.params.push_back(p.clone());
    return copy;
}

namespace {

std::string layer_label(const LayerSpec& spec, int index) {
    std::string s = layer_kind_name(spec.kind);
    if (index >= 0) s += " (layer " + std::to_string(index) + ")";
    return s;
}

}  // namespace

Tensor apply_layer(const Layer& layer, const Tensor& input, int layer_index) {
    const LayerSpec& s = layer.spec;
    std::string name = layer_label(s, layer_index);
    switch (s.kind) {
        case LayerKind::Conv2d:
            return conv2d(input, layer.params[0], layer.params[1], s.stride, s.pad, name);
        case LayerKind::Relu:
            return relu(input);
        case LayerKind::BatchNorm:
            return batchnorm(input, layer.params[0], layer.params[1], 1e-5f, name);
        case LayerKind::MaxPool:
            return maxpool2d(input, s.pool_window, s.pool_stride, name);
        case LayerKind::Linear:
            return linear(input, layer.params[0], layer.params[1], name);
        case LayerKind::Flatten:
            return flatten(input);
    }
    throw std::logic_error("apply_layer: unknown layer kind");
}

std::vector<Tensor> init_layer_params(const LayerSpec& spec, Rng& rng) {
    switch (spec.kind) {
        case LayerKind::Conv2d: {
            float bound = 1.0f / std::sqrt(static_cast<float>(spec.in_channels) *
                                           static_cast<float>(spec.kernel * spec.kernel));
            Tensor w = Tensor::uniform({spec.out_channels, spec.in_channels, spec.kernel, spec.kernel},
                                       -bound, bound, rng);
            Tensor b = Tensor::uniform({spec.out_channels}, -bound, bound, rng);
            return {w, b};
        }
        case LayerKind::BatchNorm:
            return {Tensor::full({spec.channels}, 1.0f), Tensor::zeros({spec.channels})};
        case LayerKind::Linear: {
            float bound = 1.0f / std::sqrt(static_cast<float>(spec.in_features));
            Tensor w = Tensor::uniform({spec.out_features, spec.in_features}, -bound, bound, rng);
            Tensor b = Tensor::uniform({spec.out_features}, -bound, bound, rng);
            return {w, b};
        }
        default:
            return {};
    }
}

std::vector<int> propagate_shape(const LayerSpec& spec, const std::vector<int>& shape,
                                 int layer_index) {
    std::string name = layer_label(spec, layer_index);
    auto need_3d = [&] {
        if (shape.size() != 3)
            throw std::invalid_argument(name + ": requires {C,H,W} input");
    };
    switch (spec.kind) {
        case LayerKind::Conv2d: {
            need_3d();
            if (shape[0] != spec.in_channels)
                throw std::invalid_argument(name + ": expected " + std::to_string(spec.in_channels) +
                                            " input channels, got " + std::to_string(shape[0]));
            int h = shape[1] + 2 * spec.pad - spec.kernel;
            int w = shape[2] + 2 * spec.pad - spec.kernel;
            if (h < 0 || w < 0)
                throw std::invalid_argument(name + ": kernel exceeds padded input extent");
            return {spec.out_channels, h / spec.stride + 1, w / spec.stride + 1};
        }
        case LayerKind::Relu:
            return shape;
        case LayerKind::BatchNorm:
            need_3d();
            if (shape[0] != spec.channels)
                throw std::invalid_argument(name + ": expected " + std::to_string(spec.channels) +
                                            " channels, got " + std::to_string(shape[0]));
            return shape;
        case LayerKind::MaxPool: {
            need_3d();
            if (spec.pool_window > shape[1] || spec.pool_window > shape[2])
                throw std::invalid_argument(name + ": window exceeds input extent");
            return {shape[0], (shape[1] - spec.pool_window) / spec.pool_stride + 1,
                    (shape[2] - spec.pool_window) / spec.pool_stride + 1};
        }
        case LayerKind::Linear: {
            if (shape.size() != 1)
                throw std::invalid_argument(name + ": requires flat input");
            if (shape[0] != spec.in_features)
                throw std::invalid_argument(name + ": expected " + std::to_string(spec.in_features) +
                                            " input features, got " + std::to_string(shape[0]));
            return {spec.out_features};
        }
        case LayerKind::Flatten: {
            int n = 1;
            for (int d : shape) n *= d;
            return {n};
        }
    }
    throw std::logic_error("propagate_shape: unknown layer kind");
}

}  // namespace cpfc
