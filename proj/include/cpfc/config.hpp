#pragma once

#include <cstdint>
#include <string>

#include "cpfc/perturbation.hpp"

namespace cpfc {

inline constexpr const char* kVersionString = "cpfc 0.1.0";

// Fully resolved run configuration; every key is addressable as
// section.name from the command line and the config file.
struct RunConfig {
    struct Model {
        std::string checkpoint;           // load if present, else train
        std::string blocks = "16,32,64";  // conv block channel counts
        int kernel = 3;
    } model;

    struct Train {
        double lr = 0.01;
        double momentum = 0.9;
        int epochs = 20;
        int batch = 16;
        std::uint64_t seed = 1;
    } train;

    struct Dataset {
        int width = 32;
        int height = 32;
        int count = 600;
        std::uint64_t seed = 7;
    } dataset;

    struct Extraction {
        int l = 20;            // initial cluster count
        int k = 4;             // minimum cluster count
        double lambda = 1.0;   // continuity weight
        int max_iters = 200;
        double lr = 0.1;
        std::uint64_t seed = 11;
    } extraction;

    struct Perturbation {
        double mu = 100.0;
        double v = 1.0;
        double sigma = 1.0;
        int steps = 300;
        double lr = 0.1;
        int a_samples = 1;
        std::string mode = "mask_blend";  // or "additive"
        std::string baseline = "zeros";   // or "blur"
        std::uint64_t seed = 13;
    } perturbation;

    struct Evaluation {
        double retention = 0.4;
        int occlusion_patch = 8;
        int occlusion_stride = 4;
        std::string baseline = "zeros";
        int sample_limit = 0;  // 0 = all test images
    } evaluation;

    struct Output {
        std::string dir = "out";
    } output;
};

PerturbMode parse_perturb_mode(const std::string& name);
BaselineKind parse_baseline_kind(const std::string& name);
std::vector<int> parse_block_channels(const std::string& spec);

// INI-style echo of the fully resolved config; readable back through the
// CLI's --config option, so a manifest reproduces its run.
std::string format_config(const RunConfig& cfg);

// format_config plus version and provenance comments.
std::string format_manifest(const RunConfig& cfg);

}  // namespace cpfc
