#pragma once

#include <string>
#include <vector>

#include "cpfc/network.hpp"
#include "cpfc/perturbation.hpp"

namespace cpfc {

struct ConfidencePair {
    double original = 0.0;  // f(x), confidence of the target class
    double masked = 0.0;    // f on the salient-pixels-only image
};

// Mean relative confidence drop. The literal form can go negative when
// confidence rises; `clamped` applies max(0, .) per sample instead.
double average_drop(const std::vector<ConfidencePair>& pairs, bool clamped = false);

// Fraction of samples whose confidence strictly increased.
double percent_increase(const std::vector<ConfidencePair>& pairs);

struct ClassPair {
    int target = 0;
    int predicted_masked = 0;
};

double top1_accuracy(const std::vector<ClassPair>& pairs);

// Keeps the ceil(fraction*W*H) pixels with highest saliency (ties broken by
// row-major index, all channels of a pixel kept or dropped together) and
// fills the rest from the baseline image.
Tensor retain_top_fraction(const SaliencyMap& saliency, const Tensor& x, double fraction,
                           const Tensor& baseline);

struct InsertionPoint {
    double fraction = 0.0;
    double confidence = 0.0;  // of the original predicted class
    bool top1_hit = false;
};

std::vector<InsertionPoint> insertion_curve(const Network& net, const Tensor& x,
                                            const SaliencyMap& saliency,
                                            const std::vector<double>& fractions,
                                            const Tensor& baseline);

std::vector<double> default_insertion_fractions();  // {0.0, 0.1, ..., 1.0}

// Sliding-patch occlusion attribution: importance of a patch position is the
// confidence drop it causes; overlapping contributions are averaged per
// pixel and the map is min-max normalized (a constant map becomes zeros).
SaliencyMap occlusion_baseline(const Network& net, const Tensor& x, int patch, int stride,
                               const Tensor& baseline);

struct SampleRow {
    int index = 0;
    int true_label = 0;
    int predicted = 0;        // on the unmasked image
    double conf_before = 0.0; // f(x) for the predicted class
    double conf_after = 0.0;  // same class on the retained image
    int predicted_after = 0;
    bool ok = true;
    std::string error;
};

struct InsertionSummary {
    double fraction = 0.0;
    double mean_confidence = 0.0;
    double top1 = 0.0;
};

struct EvalReport {
    double ad = 0.0;
    double pi = 0.0;
    double t1 = 0.0;
    int sample_count = 0;  // succeeded samples
    int failed_count = 0;
    double retention = 0.0;
    std::uint64_t seed = 0;
    double full_image_accuracy = 0.0;
    std::string method;
    std::vector<SampleRow> rows;
    std::vector<InsertionSummary> insertion;
};

// Aggregates AD/PI/T1 and the insertion summary from succeeded rows.
void finalize_report(EvalReport& report, const std::vector<ConfidencePair>& pairs,
                     const std::vector<ClassPair>& classes,
                     const std::vector<std::vector<InsertionPoint>>& curves);

// key: value header, then a per-sample CSV block and an insertion CSV block.
std::string format_report(const EvalReport& report);
void write_report(const EvalReport& report, const std::string& path);

// Conventional file name: embeds seed and retention fraction.
std::string report_file_name(std::uint64_t seed, double retention);

}  // namespace cpfc
