#include "cpfc/config.hpp"

#include <cstdio>
#include <sstream>
#include <stdexcept>

namespace cpfc {

PerturbMode parse_perturb_mode(const std::string& name) {
    if (name == "mask_blend") return PerturbMode::MaskBlend;
    if (name == "additive") return PerturbMode::Additive;
    throw std::invalid_argument("unknown perturbation mode '" + name +
                                "' (expected mask_blend or additive)");
}

BaselineKind parse_baseline_kind(const std::string& name) {
    if (name == "zeros") return BaselineKind::Zeros;
    if (name == "blur") return BaselineKind::Blur;
    throw std::invalid_argument("unknown baseline '" + name + "' (expected zeros or blur)");
}

std::vector<int> parse_block_channels(const std::string& spec) {
    std::vector<int> out;
    std::stringstream ss(spec);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw std::invalid_argument("bad block channel list '" + spec + "'");
        }
        if (out.back() < 1) throw std::invalid_argument("block channels must be positive");
    }
    if (out.empty()) throw std::invalid_argument("empty block channel list");
    return out;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

}  // namespace

std::string format_config(const RunConfig& c) {
    std::string s;
    s += "[model]\n";
    s += "checkpoint=" + c.model.checkpoint + "\n";
    s += "blocks=" + c.model.blocks + "\n";
    s += "kernel=" + std::to_string(c.model.kernel) + "\n";
    s += "[train]\n";
    s += "lr=" + fmt(c.train.lr) + "\n";
    s += "momentum=" + fmt(c.train.momentum) + "\n";
    s += "epochs=" + std::to_string(c.train.epochs) + "\n";
    s += "batch=" + std::to_string(c.train.batch) + "\n";
    s += "seed=" + std::to_string(c.train.seed) + "\n";
    s += "[dataset]\n";
    s += "width=" + std::to_string(c.dataset.width) + "\n";
    s += "height=" + std::to_string(c.dataset.height) + "\n";
    s += "count=" + std::to_string(c.dataset.count) + "\n";
    s += "seed=" + std::to_string(c.dataset.seed) + "\n";
    s += "[extraction]\n";
    s += "l=" + std::to_string(c.extraction.l) + "\n";
    s += "k=" + std::to_string(c.extraction.k) + "\n";
    s += "lambda=" + fmt(c.extraction.lambda) + "\n";
    s += "max_iters=" + std::to_string(c.extraction.max_iters) + "\n";
    s += "lr=" + fmt(c.extraction.lr) + "\n";
    s += "seed=" + std::to_string(c.extraction.seed) + "\n";
    s += "[perturbation]\n";
    s += "mu=" + fmt(c.perturbation.mu) + "\n";
    s += "v=" + fmt(c.perturbation.v) + "\n";
    s += "sigma=" + fmt(c.perturbation.sigma) + "\n";
    s += "steps=" + std::to_string(c.perturbation.steps) + "\n";
    s += "lr=" + fmt(c.perturbation.lr) + "\n";
    s += "a_samples=" + std::to_string(c.perturbation.a_samples) + "\n";
    s += "mode=" + c.perturbation.mode + "\n";
    s += "baseline=" + c.perturbation.baseline + "\n";
    s += "seed=" + std::to_string(c.perturbation.seed) + "\n";
    s += "[evaluation]\n";
    s += "retention=" + fmt(c.evaluation.retention) + "\n";
    s += "occlusion_patch=" + std::to_string(c.evaluation.occlusion_patch) + "\n";
    s += "occlusion_stride=" + std::to_string(c.evaluation.occlusion_stride) + "\n";
    s += "baseline=" + c.evaluation.baseline + "\n";
    s += "sample_limit=" + std::to_string(c.evaluation.sample_limit) + "\n";
    s += "[output]\n";
    s += "dir=" + c.output.dir + "\n";
    return s;
}

std::string format_manifest(const RunConfig& cfg) {
    std::string s;
    s += "# "; s += kVersionString; s += " run manifest\n";
    s += "# rerunning with this file via --config reproduces the run\n";
    s += format_config(cfg);
    return s;
}

}  // namespace cpfc
