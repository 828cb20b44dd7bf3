#include "cpfc/network.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "cpfc/tensor_ops.hpp"

namespace cpfc {

namespace {

Tensor forward_layers(const std::vector<Layer>& layers, const Tensor& x) {
    Tensor cur = x;
    for (size_t i = 0; i < layers.size(); ++i)
        cur = apply_layer(layers[i], cur, static_cast<int>(i));
    return cur;
}

std::vector<Tensor> collect_params(const std::vector<Layer>& layers) {
    std::vector<Tensor> out;
    for (const Layer& l : layers)
        for (const Tensor& p : l.params) out.push_back(p);
    return out;
}

void set_layers_requires_grad(std::vector<Layer>& layers, bool v) {
    for (Layer& l : layers)
        for (Tensor& p : l.params) p.set_requires_grad(v);
}

}  // namespace

Tensor Network::forward(const Tensor& x) const { return forward_layers(layers, x); }
std::vector<Tensor> Network::parameters() const { return collect_params(layers); }
void Network::set_requires_grad(bool v) { set_layers_requires_grad(layers, v); }

Network Network::deep_copy() const {
    Network copy;
    copy.input_shape = input_shape;
    copy.class_count = class_count;
    copy.layers.reserve(layers.size());
    for (const Layer& l : layers) copy.layers.push_back(l.deep_copy());
    return copy;
}

Tensor ExtractionNet::forward(const Tensor& x) const { return forward_layers(layers, x); }
std::vector<Tensor> ExtractionNet::parameters() const { return collect_params(layers); }
void ExtractionNet::set_requires_grad(bool v) { set_layers_requires_grad(layers, v); }

ExtractionNet ExtractionNet::deep_copy() const {
    ExtractionNet copy;
    copy.input_shape = input_shape;
    copy.cluster_count = cluster_count;
    copy.layers.reserve(layers.size());
    for (const Layer& l : layers) copy.layers.push_back(l.deep_copy());
    return copy;
}

Network build_network(std::vector<LayerSpec> specs, std::array<int, 3> input_shape,
                      int class_count, std::uint64_t seed) {
    // Validate the whole chain first so errors name the offending layer.
    std::vector<int> shape{input_shape[0], input_shape[1], input_shape[2]};
    for (size_t i = 0; i < specs.size(); ++i)
        shape = propagate_shape(specs[i], shape, static_cast<int>(i));
    if (shape.size() != 1 || shape[0] != class_count)
        throw std::invalid_argument("build_network: chain ends in " +
                                    std::to_string(shape.size() == 1 ? shape[0] : -1) +
                                    " outputs, expected " + std::to_string(class_count) +
                                    " class logits");

    Network net;
    net.input_shape = input_shape;
    net.class_count = class_count;
    Rng rng(seed);
    for (const LayerSpec& s : specs) net.layers.push_back({s, init_layer_params(s, rng)});
    return net;
}

Network build_classifier(const ClassifierConfig& config) {
    std::vector<LayerSpec> specs;
    int c = config.input_shape[0];
    int h = config.input_shape[1];
    int w = config.input_shape[2];
    int pad = (config.kernel - 1) / 2;
    for (int out_c : config.block_channels) {
        specs.push_back(LayerSpec::conv2d(c, out_c, config.kernel, 1, pad));
        specs.push_back(LayerSpec::relu());
        specs.push_back(LayerSpec::batchnorm(out_c));
        specs.push_back(LayerSpec::maxpool(2, 2));
        c = out_c;
        h /= 2;
        w /= 2;
    }
    specs.push_back(LayerSpec::flatten());
    specs.push_back(LayerSpec::linear(c * h * w, config.class_count));
    return build_network(std::move(specs), config.input_shape, config.class_count, config.seed);
}

Tensor cross_entropy_logits(const Tensor& logits, int label) {
    if (logits.ndim() != 1)
        throw std::invalid_argument("cross_entropy_logits: logits must be 1-d");
    int n = logits.dim(0);
    if (label < 0 || label >= n)
        throw std::invalid_argument("cross_entropy_logits: label out of range");
    const auto& z = logits.data();
    float mx = *std::max_element(z.begin(), z.end());
    double denom = 0.0;
    for (float v : z) denom += std::exp(static_cast<double>(v) - mx);
    double loss = -(static_cast<double>(z[static_cast<size_t>(label)]) - mx - std::log(denom));
    Tensor out = Tensor::scalar(static_cast<float>(loss));
    out.set_precise_value(loss);
    if (detail::tracking({logits})) {
        out.set_requires_grad(true);
        auto li = logits.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [li, oi, label, n] {
                const float* g = detail::grad_read(oi);
                if (!g || !li->requires_grad) return;
                auto& gl = detail::grad_of(li);
                float mx = *std::max_element(li->data.begin(), li->data.end());
                double denom = 0.0;
                for (float v : li->data) denom += std::exp(static_cast<double>(v) - mx);
                for (int i = 0; i < n; ++i) {
                    double s = std::exp(static_cast<double>(li->data[static_cast<size_t>(i)]) - mx) / denom;
                    gl[static_cast<size_t>(i)] +=
                        g[0] * static_cast<float>(s - (i == label ? 1.0 : 0.0));
                }
            },
            {logits, out});
    }
    return out;
}

TrainReport train_classifier(Network& net, const LabeledImages& train,
                             const LabeledImages& held_out, const TrainConfig& config) {
    if (train.images.empty())
        throw std::invalid_argument("train_classifier: empty training dataset");
    if (train.images.size() != train.labels.size())
        throw std::invalid_argument("train_classifier: image/label count mismatch");
    for (int l : train.labels)
        if (l < 0 || l >= net.class_count)
            throw std::invalid_argument("train_classifier: label out of range");

    net.set_requires_grad(true);
    std::vector<Tensor> params = net.parameters();
    std::vector<std::vector<float>> velocity;
    for (const Tensor& p : params) velocity.emplace_back(p.data().size(), 0.0f);
    Rng rng(config.seed);

    std::vector<size_t> order(train.images.size());
    std::iota(order.begin(), order.end(), 0);

    TrainReport report;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // seeded Fisher-Yates shuffle
        for (size_t i = order.size(); i > 1; --i) {
            size_t j = rng.uniform_index(i);
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        for (size_t start = 0; start < order.size(); start += static_cast<size_t>(config.batch)) {
            size_t end = std::min(order.size(), start + static_cast<size_t>(config.batch));
            ComputationRecord record;
            RecordScope scope(record);
            Tensor batch_loss;
            for (size_t i = start; i < end; ++i) {
                Tensor loss = cross_entropy_logits(net.forward(train.images[order[i]]),
                                                   train.labels[order[i]]);
                batch_loss = batch_loss.defined() ? add(batch_loss, loss) : loss;
            }
            batch_loss = scale(batch_loss, 1.0f / static_cast<float>(end - start));
            double lv = batch_loss.value();
            if (!std::isfinite(lv))
                throw std::runtime_error("train_classifier: training diverged (non-finite loss) at epoch " +
                                         std::to_string(epoch));
            epoch_loss += lv * static_cast<double>(end - start);
            record.backward(batch_loss);
            for (size_t pi = 0; pi < params.size(); ++pi) {
                auto& g = params[pi].grad();
                auto& d = params[pi].data();
                auto& v = velocity[pi];
                for (size_t k = 0; k < d.size(); ++k) {
                    v[k] = static_cast<float>(config.momentum) * v[k] + g[k];
                    d[k] -= static_cast<float>(config.lr) * v[k];
                }
            }
        }
        report.epoch_losses.push_back(epoch_loss / static_cast<double>(order.size()));
    }
    net.set_requires_grad(false);
    report.held_out_accuracy = held_out.images.empty() ? 0.0 : accuracy(net, held_out);
    return report;
}

double accuracy(const Network& net, const LabeledImages& data) {
    if (data.images.empty()) return 0.0;
    int hits = 0;
    for (size_t i = 0; i < data.images.size(); ++i)
        if (predict(net, data.images[i]).predicted_class == data.labels[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(data.images.size());
}

Prediction predict(const Network& net, const Tensor& image) {
    Tensor probs = softmax(net.forward(image), 0);
    Prediction p;
    p.probabilities = probs.data();
    p.predicted_class = static_cast<int>(
        std::max_element(p.probabilities.begin(), p.probabilities.end()) -
        p.probabilities.begin());  // max_element returns the first maximum
    return p;
}

ExtractionNet reconfigure_for_extraction(const Network& net, int cluster_count,
                                         std::uint64_t seed) {
    if (cluster_count < 2)
        throw std::invalid_argument(
            "reconfigure_for_extraction: cluster count must be >= 2, got " +
            std::to_string(cluster_count));

    ExtractionNet enet;
    enet.input_shape = net.input_shape;
    enet.cluster_count = cluster_count;

    int conv_count = 0;
    int last_channels = net.input_shape[0];
    for (const Layer& l : net.layers) {
        switch (l.spec.kind) {
            case LayerKind::Conv2d: {
                Layer copy = l.deep_copy();
                if (copy.spec.kernel % 2 == 0)
                    throw std::invalid_argument(
                        "reconfigure_for_extraction: even kernels cannot be same-padded");
                copy.spec.pad = (copy.spec.kernel - 1) / 2;
                copy.spec.stride = 1;
                enet.layers.push_back(std::move(copy));
                last_channels = l.spec.out_channels;
                ++conv_count;
                break;
            }
            case LayerKind::Relu:
            case LayerKind::BatchNorm:
                enet.layers.push_back(l.deep_copy());
                break;
            case LayerKind::MaxPool:
            case LayerKind::Linear:
            case LayerKind::Flatten:
                break;  // dropped
        }
    }
    if (conv_count == 0)
        throw std::invalid_argument(
            "reconfigure_for_extraction: network has no convolutional layers");

    Rng rng(seed);
    LayerSpec head = LayerSpec::conv2d(last_channels, cluster_count, 1, 1, 0);
    enet.layers.push_back({head, init_layer_params(head, rng)});
    LayerSpec head_bn = LayerSpec::batchnorm(cluster_count);
    enet.layers.push_back({head_bn, init_layer_params(head_bn, rng)});
    return enet;
}

namespace {

void write_spec_line(std::ostream& os, const LayerSpec& s) {
    switch (s.kind) {
        case LayerKind::Conv2d:
            os << "conv2d " << s.in_channels << ' ' << s.out_channels << ' ' << s.kernel << ' '
               << s.stride << ' ' << s.pad << '\n';
            break;
        case LayerKind::Relu: os << "relu\n"; break;
        case LayerKind::BatchNorm: os << "batchnorm " << s.channels << '\n'; break;
        case LayerKind::MaxPool: os << "maxpool " << s.pool_window << ' ' << s.pool_stride << '\n'; break;
        case LayerKind::Linear: os << "linear " << s.in_features << ' ' << s.out_features << '\n'; break;
        case LayerKind::Flatten: os << "flatten\n"; break;
    }
}

LayerSpec parse_spec_line(const std::string& line, const std::string& path) {
    std::istringstream is(line);
    std::string kind;
    is >> kind;
    if (kind == "conv2d") {
        int in_c, out_c, k, stride, pad;
        if (!(is >> in_c >> out_c >> k >> stride >> pad))
            throw std::runtime_error("checkpoint: bad conv2d line in " + path);
        return LayerSpec::conv2d(in_c, out_c, k, stride, pad);
    }
    if (kind == "relu") return LayerSpec::relu();
    if (kind == "batchnorm") {
        int c;
        if (!(is >> c)) throw std::runtime_error("checkpoint: bad batchnorm line in " + path);
        return LayerSpec::batchnorm(c);
    }
    if (kind == "maxpool") {
        int win, stride;
        if (!(is >> win >> stride)) throw std::runtime_error("checkpoint: bad maxpool line in " + path);
        return LayerSpec::maxpool(win, stride);
    }
    if (kind == "linear") {
        int in_f, out_f;
        if (!(is >> in_f >> out_f)) throw std::runtime_error("checkpoint: bad linear line in " + path);
        return LayerSpec::linear(in_f, out_f);
    }
    if (kind == "flatten") return LayerSpec::flatten();
    throw std::runtime_error("checkpoint: unknown layer kind '" + kind + "' in " + path);
}

}  // namespace

void save_checkpoint(const Network& net, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("save_checkpoint: cannot open " + path);
    os << "CPFC1\n";
    os << "input " << net.input_shape[0] << ' ' << net.input_shape[1] << ' '
       << net.input_shape[2] << '\n';
    os << "classes " << net.class_count << '\n';
    os << "layers " << net.layers.size() << '\n';
    for (const Layer& l : net.layers) write_spec_line(os, l.spec);
    os << "end\n";
    for (const Layer& l : net.layers)
        for (const Tensor& p : l.params)
            os.write(reinterpret_cast<const char*>(p.data().data()),
                     static_cast<std::streamsize>(p.data().size() * sizeof(float)));
    if (!os) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

Network load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string line;
    std::getline(is, line);
    if (line != "CPFC1") throw std::runtime_error("load_checkpoint: " + path + " is not a CPFC1 checkpoint");

    std::array<int, 3> input_shape{};
    int class_count = 0;
    size_t layer_count = 0;
    std::getline(is, line);
    if (std::sscanf(line.c_str(), "input %d %d %d", &input_shape[0], &input_shape[1],
                    &input_shape[2]) != 3)
        throw std::runtime_error("load_checkpoint: bad input line in " + path);
    std::getline(is, line);
    if (std::sscanf(line.c_str(), "classes %d", &class_count) != 1)
        throw std::runtime_error("load_checkpoint: bad classes line in " + path);
    std::getline(is, line);
    long long lc = 0;
    if (std::sscanf(line.c_str(), "layers %lld", &lc) != 1 || lc < 0)
        throw std::runtime_error("load_checkpoint: bad layers line in " + path);
    layer_count = static_cast<size_t>(lc);

    std::vector<LayerSpec> specs;
    for (size_t i = 0; i < layer_count; ++i) {
        std::getline(is, line);
        specs.push_back(parse_spec_line(line, path));
    }
    std::getline(is, line);
    if (line != "end") throw std::runtime_error("load_checkpoint: missing end marker in " + path);

    Network net = build_network(specs, input_shape, class_count, /*seed=*/0);
    for (Layer& l : net.layers) {
        for (Tensor& p : l.params) {
            is.read(reinterpret_cast<char*>(p.data().data()),
                    static_cast<std::streamsize>(p.data().size() * sizeof(float)));
            if (!is) throw std::runtime_error("load_checkpoint: truncated parameter data in " + path);
        }
    }
    return net;
}

}  // namespace cpfc
