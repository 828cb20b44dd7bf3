#pragma once

#include <cstdint>
#include <vector>

#include "cpfc/network.hpp"

namespace cpfc {

// Per-pixel cluster assignment over a W x H grid, labels in [0, l).
struct LabelMap {
    int width = 0;
    int height = 0;
    std::vector<int> labels;  // row-major, labels[y*width + x]

    int distinct_count() const;
};

// Disjoint binary masks covering the full grid, one per realized cluster.
struct CoalitionSet {
    int width = 0;
    int height = 0;
    std::vector<std::vector<std::uint8_t>> masks;  // each row-major 0/1
    LabelMap source;

    int coalition_count() const { return static_cast<int>(masks.size()); }
};

// Per-pixel argmax over the channel axis of r {l,H,W}; ties take the lowest
// channel index.
LabelMap assign_labels(const Tensor& r);

// Cross-entropy between each pixel's feature vector and its own argmax
// label: -sum_n ln(softmax(r_n)[c_n]). Labels are constants; no gradient
// flows through the argmax.
Tensor feature_similarity_loss(const Tensor& r, const LabelMap& labels);

// L1 norm of horizontal and vertical forward differences of r {C,H,W};
// open boundary (the last row/column contributes no forward difference).
Tensor continuity_loss(const Tensor& r);

struct ExtractionConfig {
    double lambda = 1.0;   // continuity weight
    int min_clusters = 4;  // k
    int max_iters = 200;
    double lr = 0.1;
    std::uint64_t seed = 0;
};

struct ExtractionTraceRow {
    int iteration = 0;
    double similarity = 0.0;
    double continuity = 0.0;
    double total = 0.0;
    int distinct_labels = 0;
};

struct ExtractionResult {
    CoalitionSet coalitions;
    int iterations_used = 0;
    std::vector<ExtractionTraceRow> trace;
};

// Gradient descent on similarity + lambda * continuity over the extraction
// network's parameters. Stops when the distinct-label count reaches
// min_clusters or the iteration budget runs out; aborts if the labeling
// collapses below two clusters. The input network is not modified.
ExtractionResult extract_coalitions(const Tensor& image, const ExtractionNet& enet,
                                    const ExtractionConfig& config);

// One binary mask per distinct label, in ascending label order.
CoalitionSet to_coalition_masks(const LabelMap& labels);

}  // namespace cpfc
