#include "cpfc/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <stdexcept>

namespace cpfc {

double average_drop(const std::vector<ConfidencePair>& pairs, bool clamped) {
    if (pairs.empty()) throw std::invalid_argument("average_drop: need at least one sample");
    double acc = 0.0;
    for (const auto& pr : pairs) {
        if (pr.original == 0.0)
            throw std::invalid_argument("average_drop: zero original confidence (division by zero)");
        double drop = (pr.original - pr.masked) / pr.original;
        acc += clamped ? std::max(0.0, drop) : drop;
    }
    return acc / static_cast<double>(pairs.size());
}

double percent_increase(const std::vector<ConfidencePair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("percent_increase: need at least one sample");
    int count = 0;
    for (const auto& pr : pairs)
        if (pr.original < pr.masked) ++count;
    return static_cast<double>(count) / static_cast<double>(pairs.size());
}

double top1_accuracy(const std::vector<ClassPair>& pairs) {
    if (pairs.empty()) throw std::invalid_argument("top1_accuracy: need at least one sample");
    int count = 0;
    for (const auto& pr : pairs)
        if (pr.target == pr.predicted_masked) ++count;
    return static_cast<double>(count) / static_cast<double>(pairs.size());
}

Tensor retain_top_fraction(const SaliencyMap& saliency, const Tensor& x, double fraction,
                           const Tensor& baseline) {
    if (fraction < 0.0 || fraction > 1.0)
        throw std::invalid_argument("retain_top_fraction: fraction must lie in [0,1]");
    if (x.ndim() != 3) throw std::invalid_argument("retain_top_fraction: x must be {C,H,W}");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    int hw = h * w;
    if (saliency.width != w || saliency.height != h)
        throw std::invalid_argument("retain_top_fraction: saliency extent mismatch");
    if (baseline.shape() != x.shape())
        throw std::invalid_argument("retain_top_fraction: baseline shape mismatch");

    int keep = static_cast<int>(std::ceil(fraction * hw - 1e-9));
    keep = std::clamp(keep, 0, hw);
    if (keep == hw) return x.clone();  // identity retention, bit-exact

    std::vector<int> order(static_cast<size_t>(hw));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        float sa = saliency.values[static_cast<size_t>(a)];
        float sb = saliency.values[static_cast<size_t>(b)];
        if (sa != sb) return sa > sb;
        return a < b;
    });

    Tensor out = baseline.clone();
    for (int i = 0; i < keep; ++i) {
        int pix = order[static_cast<size_t>(i)];
        for (int ch = 0; ch < c; ++ch) {
            size_t idx = static_cast<size_t>(ch) * hw + static_cast<size_t>(pix);
            out.data()[idx] = x.data()[idx];
        }
    }
    return out;
}

std::vector<double> default_insertion_fractions() {
    std::vector<double> f;
    for (int i = 0; i <= 10; ++i) f.push_back(static_cast<double>(i) / 10.0);
    return f;
}

std::vector<InsertionPoint> insertion_curve(const Network& net, const Tensor& x,
                                            const SaliencyMap& saliency,
                                            const std::vector<double>& fractions,
                                            const Tensor& baseline) {
    int target = predict(net, x).predicted_class;
    std::vector<InsertionPoint> points;
    points.reserve(fractions.size());
    for (double f : fractions) {
        Tensor retained = retain_top_fraction(saliency, x, f, baseline);
        Prediction pred = predict(net, retained);
        points.push_back({f, static_cast<double>(pred.probabilities[static_cast<size_t>(target)]),
                          pred.predicted_class == target});
    }
    return points;
}

SaliencyMap occlusion_baseline(const Network& net, const Tensor& x, int patch, int stride,
                               const Tensor& baseline) {
    if (x.ndim() != 3) throw std::invalid_argument("occlusion_baseline: x must be {C,H,W}");
    int c = x.dim(0), h = x.dim(1), w = x.dim(2);
    if (patch < 1 || patch > h || patch > w)
        throw std::invalid_argument("occlusion_baseline: patch must fit inside the image");
    if (stride < 1) throw std::invalid_argument("occlusion_baseline: stride must be >= 1");
    if (baseline.shape() != x.shape())
        throw std::invalid_argument("occlusion_baseline: baseline shape mismatch");

    Prediction base = predict(net, x);
    int target = base.predicted_class;
    double base_conf = base.probabilities[static_cast<size_t>(target)];

    // anchor grid; a final anchor is added so the far edge is always covered
    auto anchors = [&](int extent) {
        std::vector<int> a;
        for (int pos = 0; pos + patch <= extent; pos += stride) a.push_back(pos);
        if (a.empty() || a.back() != extent - patch) a.push_back(extent - patch);
        return a;
    };

    std::vector<double> acc(static_cast<size_t>(h) * w, 0.0);
    std::vector<int> hits(static_cast<size_t>(h) * w, 0);
    Tensor occluded = x.clone();
    for (int ay : anchors(h)) {
        for (int ax : anchors(w)) {
            // paste the baseline patch, evaluate, then restore
            for (int ch = 0; ch < c; ++ch)
                for (int y = ay; y < ay + patch; ++y)
                    for (int xx = ax; xx < ax + patch; ++xx)
                        occluded.data()[(static_cast<size_t>(ch) * h + y) * w + xx] =
                            baseline.data()[(static_cast<size_t>(ch) * h + y) * w + xx];
            double conf = predict(net, occluded).probabilities[static_cast<size_t>(target)];
            double drop = base_conf - conf;
            for (int y = ay; y < ay + patch; ++y) {
                for (int xx = ax; xx < ax + patch; ++xx) {
                    acc[static_cast<size_t>(y) * w + xx] += drop;
                    hits[static_cast<size_t>(y) * w + xx] += 1;
                }
            }
            for (int ch = 0; ch < c; ++ch)
                for (int y = ay; y < ay + patch; ++y)
                    for (int xx = ax; xx < ax + patch; ++xx)
                        occluded.data()[(static_cast<size_t>(ch) * h + y) * w + xx] =
                            x.data()[(static_cast<size_t>(ch) * h + y) * w + xx];
        }
    }

    SaliencyMap map;
    map.width = w;
    map.height = h;
    map.values.resize(acc.size());
    double lo = 0.0, hi = 0.0;
    for (size_t i = 0; i < acc.size(); ++i) {
        acc[i] /= static_cast<double>(hits[i]);
        if (i == 0 || acc[i] < lo) lo = acc[i];
        if (i == 0 || acc[i] > hi) hi = acc[i];
    }
    if (hi > lo) {
        for (size_t i = 0; i < acc.size(); ++i)
            map.values[i] = static_cast<float>((acc[i] - lo) / (hi - lo));
    } else {
        std::fill(map.values.begin(), map.values.end(), 0.0f);  // constant map -> zeros
    }
    return map;
}

void finalize_report(EvalReport& report, const std::vector<ConfidencePair>& pairs,
                     const std::vector<ClassPair>& classes,
                     const std::vector<std::vector<InsertionPoint>>& curves) {
    report.sample_count = static_cast<int>(pairs.size());
    if (!pairs.empty()) {
        report.ad = average_drop(pairs);
        report.pi = percent_increase(pairs);
        report.t1 = top1_accuracy(classes);
    }
    report.insertion.clear();
    if (!curves.empty()) {
        size_t points = curves.front().size();
        for (size_t k = 0; k < points; ++k) {
            InsertionSummary s;
            s.fraction = curves.front()[k].fraction;
            double conf = 0.0;
            int hit = 0;
            for (const auto& curve : curves) {
                conf += curve[k].confidence;
                hit += curve[k].top1_hit ? 1 : 0;
            }
            s.mean_confidence = conf / static_cast<double>(curves.size());
            s.top1 = static_cast<double>(hit) / static_cast<double>(curves.size());
            report.insertion.push_back(s);
        }
    }
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string format_report(const EvalReport& report) {
    std::string out;
    out += "cpfc-eval-report\n";
    out += "method: " + report.method + "\n";
    out += "seed: " + std::to_string(report.seed) + "\n";
    out += "retention: " + fmt(report.retention) + "\n";
    out += "samples: " + std::to_string(report.sample_count) + "\n";
    out += "failed: " + std::to_string(report.failed_count) + "\n";
    out += "average_drop: " + fmt(report.ad) + "\n";
    out += "percent_increase: " + fmt(report.pi) + "\n";
    out += "top1_accuracy: " + fmt(report.t1) + "\n";
    out += "full_image_accuracy: " + fmt(report.full_image_accuracy) + "\n";
    out += "per_sample:\n";
    out += "index,true_label,pred,conf_before,conf_after,pred_after,status\n";
    for (const auto& r : report.rows) {
        out += std::to_string(r.index) + "," + std::to_string(r.true_label) + "," +
               std::to_string(r.predicted) + "," + fmt(r.conf_before) + "," + fmt(r.conf_after) +
               "," + std::to_string(r.predicted_after) + "," +
               (r.ok ? std::string("ok") : "failed: " + r.error) + "\n";
    }
    out += "insertion:\n";
    out += "fraction,mean_confidence,top1_accuracy\n";
    for (const auto& s : report.insertion)
        out += fmt(s.fraction) + "," + fmt(s.mean_confidence) + "," + fmt(s.top1) + "\n";
    return out;
}

void write_report(const EvalReport& report, const std::string& path) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("write_report: cannot open " + path);
    os << format_report(report);
}

std::string report_file_name(std::uint64_t seed, double retention) {
    char buf[80];
    std::snprintf(buf, sizeof(buf), "report_seed%llu_ret%.2f.txt",
                  static_cast<unsigned long long>(seed), retention);
    return buf;
}

}  // namespace cpfc
