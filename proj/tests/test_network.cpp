#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>

#include "cpfc/dataset.hpp"
#include "cpfc/network.hpp"
#include "cpfc/tensor_ops.hpp"

using namespace cpfc;

namespace {

Network default_net(std::uint64_t seed = 1) {
    ClassifierConfig cfg;
    cfg.seed = seed;
    return build_classifier(cfg);
}

}  // namespace

TEST_CASE("default classifier emits one logit per class") {
    Network net = default_net();
    Tensor x = Tensor::full({3, 32, 32}, 0.5f);
    Tensor logits = net.forward(x);
    CHECK(logits.shape() == std::vector<int>({4}));
}

TEST_CASE("mismatched channel counts name the first bad layer") {
    std::vector<LayerSpec> specs{
        LayerSpec::conv2d(3, 8, 3, 1, 1),
        LayerSpec::batchnorm(16),  // wrong: conv emitted 8 channels
        LayerSpec::flatten(),
        LayerSpec::linear(8 * 32 * 32, 4),
    };
    CHECK_THROWS_WITH_AS(build_network(specs, {3, 32, 32}, 4, 1),
                         doctest::Contains("layer 1"), std::invalid_argument);
}

TEST_CASE("broken logits count is rejected") {
    std::vector<LayerSpec> specs{
        LayerSpec::flatten(),
        LayerSpec::linear(3 * 32 * 32, 7),
    };
    CHECK_THROWS_AS(build_network(specs, {3, 32, 32}, 4, 1), std::invalid_argument);
}

TEST_CASE("same seed builds bit-identical parameters") {
    Network a = default_net(42);
    Network b = default_net(42);
    auto pa = a.parameters(), pb = b.parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].data() == pb[i].data());

    Network c = default_net(43);
    bool any_diff = false;
    auto pc = c.parameters();
    for (size_t i = 0; i < pa.size(); ++i)
        if (pa[i].data() != pc[i].data()) any_diff = true;
    CHECK(any_diff);
}

TEST_CASE("zero learning rate leaves parameters unchanged") {
    ShapesDataset ds = generate_shapes_dataset(16, 32, 32, 5);
    Network net = default_net();
    std::vector<std::vector<float>> before;
    for (const Tensor& p : net.parameters()) before.push_back(p.data());

    TrainConfig tc;
    tc.lr = 0.0;
    tc.epochs = 1;
    TrainReport r1 = train_classifier(net, ds.train_view(), ds.test_view(), tc);
    auto params = net.parameters();
    for (size_t i = 0; i < params.size(); ++i) CHECK(params[i].data() == before[i]);

    // accuracy equals the untrained accuracy
    CHECK(r1.held_out_accuracy == doctest::Approx(accuracy(net, ds.test_view())));
}

TEST_CASE("training rejects an empty dataset") {
    Network net = default_net();
    LabeledImages empty;
    CHECK_THROWS_AS(train_classifier(net, empty, empty, TrainConfig{}), std::invalid_argument);
}

TEST_CASE("training is deterministic given the seed") {
    ShapesDataset ds = generate_shapes_dataset(16, 32, 32, 5);
    TrainConfig tc;
    tc.epochs = 2;
    Network a = default_net(9);
    Network b = default_net(9);
    train_classifier(a, ds.train_view(), ds.test_view(), tc);
    train_classifier(b, ds.train_view(), ds.test_view(), tc);
    auto pa = a.parameters(), pb = b.parameters();
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].data() == pb[i].data());
}

TEST_CASE("short training reduces the loss") {
    ShapesDataset ds = generate_shapes_dataset(48, 32, 32, 5);
    Network net = default_net();
    TrainConfig tc;
    tc.epochs = 4;
    TrainReport r = train_classifier(net, ds.train_view(), ds.test_view(), tc);
    REQUIRE(r.epoch_losses.size() == 4);
    CHECK(r.epoch_losses.back() < r.epoch_losses.front());
}

TEST_CASE("predict breaks argmax ties toward the lowest index") {
    // a linear head with zeroed parameters yields identical logits
    std::vector<LayerSpec> specs{LayerSpec::flatten(), LayerSpec::linear(3 * 16 * 16, 2)};
    Network net = build_network(specs, {3, 16, 16}, 2, 1);
    for (Tensor& p : net.layers[1].params)
        std::fill(p.data().begin(), p.data().end(), 0.0f);
    Tensor x = Tensor::full({3, 16, 16}, 0.25f);
    Prediction pred = predict(net, x);
    CHECK(pred.probabilities[0] == doctest::Approx(0.5));
    CHECK(pred.predicted_class == 0);
}

TEST_CASE("prediction is invariant to positive logit scaling") {
    Network net = default_net(3);
    Rng rng(7);
    Tensor x = Tensor::uniform({3, 32, 32}, 0.0f, 1.0f, rng);
    int before = predict(net, x).predicted_class;

    // scaling the linear head scales the logits by the same factor
    Network scaled = net.deep_copy();
    for (Tensor& p : scaled.layers.back().params)
        for (float& v : p.data()) v *= 3.5f;
    CHECK(predict(scaled, x).predicted_class == before);
}

TEST_CASE("reconfigure_for_extraction keeps only conv/relu/batchnorm") {
    Network net = default_net();
    ExtractionNet enet = reconfigure_for_extraction(net, 20, 99);
    for (const Layer& l : enet.layers) {
        bool allowed = l.spec.kind == LayerKind::Conv2d || l.spec.kind == LayerKind::Relu ||
                       l.spec.kind == LayerKind::BatchNorm;
        CHECK(allowed);
    }
    // 3 blocks of conv/relu/bn plus the 1x1 head and its batchnorm
    CHECK(enet.layers.size() == 11);
}

TEST_CASE("extraction net preserves spatial extent and emits l channels") {
    Network net = default_net();
    ExtractionNet enet = reconfigure_for_extraction(net, 20, 99);
    Rng rng(15);
    Tensor x = Tensor::uniform({3, 32, 32}, 0.0f, 1.0f, rng);
    Tensor r = enet.forward(x);
    CHECK(r.shape() == std::vector<int>({20, 32, 32}));

    Tensor small = Tensor::uniform({3, 17, 23}, 0.0f, 1.0f, rng);
    ExtractionNet enet2 = reconfigure_for_extraction(net, 6, 99);
    CHECK(enet2.forward(small).shape() == std::vector<int>({6, 17, 23}));
}

TEST_CASE("extraction retains trained conv weights and fresh head") {
    Network net = default_net(21);
    ExtractionNet enet = reconfigure_for_extraction(net, 8, 99);
    CHECK(enet.layers[0].params[0].data() == net.layers[0].params[0].data());
    // head is the second-to-last layer (1x1 conv), freshly seeded
    const Layer& head = enet.layers[enet.layers.size() - 2];
    CHECK(head.spec.kernel == 1);
    CHECK(head.spec.out_channels == 8);
}

TEST_CASE("cluster count below two is rejected") {
    Network net = default_net();
    CHECK_THROWS_AS(reconfigure_for_extraction(net, 1, 0), std::invalid_argument);
}

TEST_CASE("networks without convolutions cannot be reconfigured") {
    std::vector<LayerSpec> specs{LayerSpec::flatten(), LayerSpec::linear(3 * 16 * 16, 4)};
    Network net = build_network(specs, {3, 16, 16}, 4, 1);
    CHECK_THROWS_AS(reconfigure_for_extraction(net, 20, 0), std::invalid_argument);
}

TEST_CASE("checkpoint round-trip is bit-exact") {
    namespace fs = std::filesystem;
    Network net = default_net(77);
    fs::path path = fs::temp_directory_path() / "cpfc_test_checkpoint.cpfc";
    save_checkpoint(net, path.string());
    Network loaded = load_checkpoint(path.string());

    CHECK(loaded.input_shape == net.input_shape);
    CHECK(loaded.class_count == net.class_count);
    auto pa = net.parameters(), pb = loaded.parameters();
    REQUIRE(pa.size() == pb.size());
    for (size_t i = 0; i < pa.size(); ++i) CHECK(pa[i].data() == pb[i].data());

    Rng rng(1);
    Tensor x = Tensor::uniform({3, 32, 32}, 0.0f, 1.0f, rng);
    CHECK(net.forward(x).data() == loaded.forward(x).data());
    fs::remove(path);
}

TEST_CASE("loading a non-checkpoint file fails with the path") {
    namespace fs = std::filesystem;
    fs::path path = fs::temp_directory_path() / "cpfc_not_a_checkpoint.txt";
    {
        std::ofstream os(path);
        os << "hello\n";
    }
    CHECK_THROWS_WITH_AS(load_checkpoint(path.string()), doctest::Contains("CPFC1"),
                         std::runtime_error);
    fs::remove(path);
}

TEST_CASE("cross entropy matches a direct computation and its gradient") {
    Rng rng(4);
    Tensor logits = Tensor::uniform({5}, -2.0f, 2.0f, rng);
    auto builder = [](const Tensor& t) { return cross_entropy_logits(t, 2); };
    GradCheckResult r = grad_check(builder, logits, 1e-2);
    CHECK(r.max_rel_error < 1e-3);

    double denom = 0.0;
    for (float v : logits.data()) denom += std::exp(static_cast<double>(v));
    double expected = -std::log(std::exp(static_cast<double>(logits.data()[2])) / denom);
    CHECK(cross_entropy_logits(logits, 2).value() == doctest::Approx(expected).epsilon(1e-6));
}
