#include "cpfc/coalition.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "cpfc/tensor_ops.hpp"

namespace cpfc {

int LabelMap::distinct_count() const {
    return static_cast<int>(std::set<int>(labels.begin(), labels.end()).size());
}

LabelMap assign_labels(const Tensor& r) {
    if (r.ndim() != 3) throw std::invalid_argument("assign_labels: r must be {l,H,W}");
    int l = r.dim(0), h = r.dim(1), w = r.dim(2);
    if (l < 2) throw std::invalid_argument("assign_labels: need at least 2 channels");
    LabelMap map;
    map.width = w;
    map.height = h;
    map.labels.resize(static_cast<size_t>(h) * w);
    const float* rv = r.data().data();
    int q = h * w;
    for (int n = 0; n < q; ++n) {
        int best = 0;
        float best_v = rv[n];
        for (int c = 1; c < l; ++c) {
            float v = rv[static_cast<size_t>(c) * q + n];
            if (v > best_v) {
                best_v = v;
                best = c;
            }
        }
        map.labels[static_cast<size_t>(n)] = best;
    }
    return map;
}

Tensor feature_similarity_loss(const Tensor& r, const LabelMap& labels) {
    if (r.ndim() != 3) throw std::invalid_argument("feature_similarity_loss: r must be {l,H,W}");
    int l = r.dim(0), h = r.dim(1), w = r.dim(2);
    int q = h * w;
    if (labels.width != w || labels.height != h)
        throw std::invalid_argument("feature_similarity_loss: label map extent mismatch");
    for (int c : labels.labels)
        if (c < 0 || c >= l)
            throw std::invalid_argument("feature_similarity_loss: label out of range");

    const float* rv = r.data().data();
    double loss = 0.0;
    for (int n = 0; n < q; ++n) {
        float mx = rv[n];
        for (int c = 1; c < l; ++c)
            mx = std::max(mx, rv[static_cast<size_t>(c) * q + n]);
        double denom = 0.0;
        for (int c = 0; c < l; ++c)
            denom += std::exp(static_cast<double>(rv[static_cast<size_t>(c) * q + n]) - mx);
        int cn = labels.labels[static_cast<size_t>(n)];
        loss -= static_cast<double>(rv[static_cast<size_t>(cn) * q + n]) - mx - std::log(denom);
    }
    Tensor out = Tensor::scalar(static_cast<float>(loss));
    out.set_precise_value(loss);
    if (detail::tracking({r})) {
        out.set_requires_grad(true);
        auto ri = r.impl(), oi = out.impl();
        auto lab = std::make_shared<std::vector<int>>(labels.labels);
        ComputationRecord::active()->push_op(
            [ri, oi, lab, l, q] {
                const float* g = detail::grad_read(oi);
                if (!g || !ri->requires_grad) return;
                auto& gr = detail::grad_of(ri);
                const float* rv = ri->data.data();
                for (int n = 0; n < q; ++n) {
                    float mx = rv[n];
                    for (int c = 1; c < l; ++c)
                        mx = std::max(mx, rv[static_cast<size_t>(c) * q + n]);
                    double denom = 0.0;
                    for (int c = 0; c < l; ++c)
                        denom += std::exp(static_cast<double>(rv[static_cast<size_t>(c) * q + n]) - mx);
                    int cn = (*lab)[static_cast<size_t>(n)];
                    for (int c = 0; c < l; ++c) {
                        double s = std::exp(static_cast<double>(rv[static_cast<size_t>(c) * q + n]) - mx) / denom;
                        gr[static_cast<size_t>(c) * q + n] +=
                            g[0] * static_cast<float>(s - (c == cn ? 1.0 : 0.0));
                    }
                }
            },
            {r, out});
    }
    return out;
}

Tensor continuity_loss(const Tensor& r) {
    if (r.ndim() != 3) throw std::invalid_argument("continuity_loss: r must be {C,H,W}");
    int c = r.dim(0), h = r.dim(1), w = r.dim(2);
    const float* rv = r.data().data();
    double loss = 0.0;
    for (int ch = 0; ch < c; ++ch) {
        const float* plane = rv + static_cast<size_t>(ch) * h * w;
        for (int y = 0; y < h; ++y) {
            for (int x = 0; x + 1 < w; ++x)
                loss += std::abs(static_cast<double>(plane[y * w + x + 1]) - plane[y * w + x]);
        }
        for (int y = 0; y + 1 < h; ++y) {
            for (int x = 0; x < w; ++x)
                loss += std::abs(static_cast<double>(plane[(y + 1) * w + x]) - plane[y * w + x]);
        }
    }
    Tensor out = Tensor::scalar(static_cast<float>(loss));
    out.set_precise_value(loss);
    if (detail::tracking({r})) {
        out.set_requires_grad(true);
        auto ri = r.impl(), oi = out.impl();
        ComputationRecord::active()->push_op(
            [ri, oi, c, h, w] {
                const float* g = detail::grad_read(oi);
                if (!g || !ri->requires_grad) return;
                auto& gr = detail::grad_of(ri);
                const float* rv = ri->data.data();
                auto sgn = [](float d) { return d > 0.0f ? 1.0f : (d < 0.0f ? -1.0f : 0.0f); };
                for (int ch = 0; ch < c; ++ch) {
                    size_t base = static_cast<size_t>(ch) * h * w;
                    for (int y = 0; y < h; ++y) {
                        for (int x = 0; x + 1 < w; ++x) {
                            float s = sgn(rv[base + static_cast<size_t>(y * w + x + 1)] -
                                          rv[base + static_cast<size_t>(y * w + x)]);
                            gr[base + static_cast<size_t>(y * w + x + 1)] += g[0] * s;
                            gr[base + static_cast<size_t>(y * w + x)] -= g[0] * s;
                        }
                    }
                    for (int y = 0; y + 1 < h; ++y) {
                        for (int x = 0; x < w; ++x) {
                            float s = sgn(rv[base + static_cast<size_t>((y + 1) * w + x)] -
                                          rv[base + static_cast<size_t>(y * w + x)]);
                            gr[base + static_cast<size_t>((y + 1) * w + x)] += g[0] * s;
                            gr[base + static_cast<size_t>(y * w + x)] -= g[0] * s;
                        }
                    }
                }
            },
            {r, out});
    }
    return out;
}

CoalitionSet to_coalition_masks(const LabelMap& labels) {
    if (labels.labels.size() != static_cast<size_t>(labels.width) * labels.height)
        throw std::invalid_argument("to_coalition_masks: label count does not match extent");
    std::set<int> distinct(labels.labels.begin(), labels.labels.end());
    CoalitionSet set;
    set.width = labels.width;
    set.height = labels.height;
    set.source = labels;
    for (int value : distinct) {
        std::vector<std::uint8_t> mask(labels.labels.size(), 0);
        for (size_t i = 0; i < labels.labels.size(); ++i)
            if (labels.labels[i] == value) mask[i] = 1;
        set.masks.push_back(std::move(mask));
    }
    return set;
}

ExtractionResult extract_coalitions(const Tensor& image, const ExtractionNet& enet,
                                    const ExtractionConfig& config) {
    if (config.lambda < 0.0)
        throw std::invalid_argument("extract_coalitions: lambda must be >= 0");
    if (config.min_clusters < 2 || config.min_clusters > enet.cluster_count)
        throw std::invalid_argument("extract_coalitions: need 2 <= k <= l, got k=" +
                                    std::to_string(config.min_clusters) + ", l=" +
                                    std::to_string(enet.cluster_count));
    if (config.max_iters < 1)
        throw std::invalid_argument("extract_coalitions: iteration budget must be >= 1");

    ExtractionNet net = enet.deep_copy();
    net.set_requires_grad(true);
    std::vector<Tensor> params = net.parameters();

    ExtractionResult result;
    LabelMap current, previous;
    bool have_previous = false;

    for (int iter = 0; iter < config.max_iters; ++iter) {
        ComputationRecord record;
        RecordScope scope(record);
        Tensor r = net.forward(image);
        current = assign_labels(r);
        int distinct = current.distinct_count();

        Tensor similarity = feature_similarity_loss(r, current);
        Tensor continuity = continuity_loss(r);
        Tensor total = add(similarity, scale(continuity, static_cast<float>(config.lambda)));
        if (!std::isfinite(total.value()))
            throw std::runtime_error("extract_coalitions: non-finite loss at iteration " +
                                     std::to_string(iter));
        result.trace.push_back({iter, static_cast<double>(similarity.value()),
                                static_cast<double>(continuity.value()),
                                static_cast<double>(total.value()), distinct});
        result.iterations_used = iter + 1;

        if (distinct < 2)
            throw std::runtime_error(
                "extract_coalitions: degenerate collapse, fewer than 2 distinct labels at iteration " +
                std::to_string(iter));
        if (distinct <= config.min_clusters) {
            // A step can jump below k; in that case keep the previous
            // labeling so the coalition count stays within [k, l].
            if (distinct < config.min_clusters && have_previous) current = previous;
            break;
        }

        record.backward(total);
        for (Tensor& p : params) {
            auto& g = p.grad();
            auto& d = p.data();
            for (size_t k = 0; k < d.size(); ++k)
                d[k] -= static_cast<float>(config.lr) * g[k];
        }
        previous = current;
        have_previous = true;
    }

    result.coalitions = to_coalition_masks(current);
    return result;
}

}  // namespace cpfc
