#include "cpfc/pipeline.hpp"

#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "cpfc/image_io.hpp"

namespace fs = std::filesystem;

namespace cpfc {

const char* explain_method_name(ExplainMethod m) {
    return m == ExplainMethod::Coalition ? "coalition" : "occlusion";
}

std::string sample_dir(const std::string& out_dir, int index) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "sample_%03d", index);
    return (fs::path(out_dir) / "samples" / buf).string();
}

Network obtain_network(const RunConfig& cfg, const ShapesDataset& dataset,
                       TrainReport* train_report) {
    if (!cfg.model.checkpoint.empty() && fs::exists(cfg.model.checkpoint))
        return load_checkpoint(cfg.model.checkpoint);

    ClassifierConfig arch;
    arch.input_shape = {3, cfg.dataset.height, cfg.dataset.width};
    arch.class_count = kShapeClassCount;
    arch.block_channels = parse_block_channels(cfg.model.blocks);
    arch.kernel = cfg.model.kernel;
    arch.seed = cfg.train.seed;
    Network net = build_classifier(arch);

    TrainConfig tc;
    tc.lr = cfg.train.lr;
    tc.momentum = cfg.train.momentum;
    tc.epochs = cfg.train.epochs;
    tc.batch = cfg.train.batch;
    tc.seed = cfg.train.seed;
    TrainReport report = train_classifier(net, dataset.train_view(), dataset.test_view(), tc);
    if (train_report) *train_report = report;

    if (!cfg.model.checkpoint.empty()) save_checkpoint(net, cfg.model.checkpoint);
    return net;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.10g", v);
    return buf;
}

void write_trace_csv(const std::string& path, const std::vector<MaskTraceRow>& trace) {
    std::string csv = "step,mask_loss,confidence_loss,consistency_loss,total\n";
    for (const auto& row : trace)
        csv += std::to_string(row.step) + "," + fmt(row.mask_loss) + "," +
               fmt(row.confidence_loss) + "," + fmt(row.consistency_loss) + "," +
               fmt(row.total) + "\n";
    atomic_write_text(path, csv);
}

void write_coalitions(const std::string& dir, const CoalitionSet& set,
                      const ExtractionConfig& ecfg, int iterations_used) {
    for (int i = 0; i < set.coalition_count(); ++i) {
        Tensor mask({set.height, set.width});
        for (size_t j = 0; j < set.masks[static_cast<size_t>(i)].size(); ++j)
            mask.data()[j] = set.masks[static_cast<size_t>(i)][j] ? 1.0f : 0.0f;
        char name[40];
        std::snprintf(name, sizeof(name), "coalition_%02d.png", i);
        save_image((fs::path(dir) / name).string(), mask);
    }
    std::string m;
    m += "coalitions: " + std::to_string(set.coalition_count()) + "\n";
    m += "k: " + std::to_string(ecfg.min_clusters) + "\n";
    m += "lambda: " + fmt(ecfg.lambda) + "\n";
    m += "seed: " + std::to_string(ecfg.seed) + "\n";
    m += "iterations: " + std::to_string(iterations_used) + "\n";
    atomic_write_text((fs::path(dir) / "coalitions.txt").string(), m);
}

}  // namespace

PipelineResult run_pipeline(const RunConfig& cfg, ExplainMethod method) {
    PipelineResult result;
    result.out_dir = cfg.output.dir;
    fs::create_directories(fs::path(cfg.output.dir) / "samples");

    ShapesDataset dataset =
        generate_shapes_dataset(cfg.dataset.count, cfg.dataset.width, cfg.dataset.height,
                                cfg.dataset.seed);
    Network net = obtain_network(cfg, dataset);

    size_t total = dataset.test_indices.size();
    if (cfg.evaluation.sample_limit > 0)
        total = std::min(total, static_cast<size_t>(cfg.evaluation.sample_limit));

    BaselineKind eval_baseline = parse_baseline_kind(cfg.evaluation.baseline);
    std::vector<double> fractions = default_insertion_fractions();

    EvalReport& report = result.report;
    report.method = explain_method_name(method);
    report.retention = cfg.evaluation.retention;
    report.seed = cfg.perturbation.seed;

    std::vector<ConfidencePair> pairs;
    std::vector<ClassPair> classes;
    std::vector<std::vector<InsertionPoint>> curves;
    int full_image_hits = 0;

    for (size_t s = 0; s < total; ++s) {
        size_t ds_index = dataset.test_indices[s];
        const Tensor& image = dataset.images[ds_index];
        SampleRow row;
        row.index = static_cast<int>(s);
        row.true_label = dataset.labels[ds_index];

        std::string dir = sample_dir(cfg.output.dir, static_cast<int>(s));
        fs::create_directories(dir);
        try {
            Prediction pred = predict(net, image);
            row.predicted = pred.predicted_class;
            row.conf_before = pred.probabilities[static_cast<size_t>(pred.predicted_class)];
            if (row.predicted == row.true_label) ++full_image_hits;

            SaliencyMap saliency;
            if (method == ExplainMethod::Coalition) {
                ExtractionNet enet = reconfigure_for_extraction(
                    net, cfg.extraction.l, Rng::derive(cfg.extraction.seed, s));
                ExtractionConfig ecfg;
                ecfg.lambda = cfg.extraction.lambda;
                ecfg.min_clusters = cfg.extraction.k;
                ecfg.max_iters = cfg.extraction.max_iters;
                ecfg.lr = cfg.extraction.lr;
                ecfg.seed = Rng::derive(cfg.extraction.seed, s);
                ExtractionResult extraction = extract_coalitions(image, enet, ecfg);
                write_coalitions(dir, extraction.coalitions, ecfg, extraction.iterations_used);

                PerturbationConfig pcfg;
                pcfg.mu = cfg.perturbation.mu;
                pcfg.v = cfg.perturbation.v;
                pcfg.sigma = cfg.perturbation.sigma;
                pcfg.steps = cfg.perturbation.steps;
                pcfg.lr = cfg.perturbation.lr;
                pcfg.a_samples_per_step = cfg.perturbation.a_samples;
                pcfg.mode = parse_perturb_mode(cfg.perturbation.mode);
                pcfg.baseline = parse_baseline_kind(cfg.perturbation.baseline);
                pcfg.seed = Rng::derive(cfg.perturbation.seed, s);
                MaskOptimizationResult opt = optimize_mask(net, image, extraction.coalitions, pcfg);
                saliency = opt.saliency;
                write_trace_csv((fs::path(dir) / "trace.csv").string(), opt.trace);
            } else {
                Tensor occ_baseline = make_baseline(image, eval_baseline);
                saliency = occlusion_baseline(net, image, cfg.evaluation.occlusion_patch,
                                              cfg.evaluation.occlusion_stride, occ_baseline);
            }

            Tensor sal_tensor =
                Tensor::from({saliency.height, saliency.width}, saliency.values);
            save_image((fs::path(dir) / "saliency.png").string(), sal_tensor);
            save_raw((fs::path(dir) / "saliency.f32").string(), sal_tensor);

            Tensor baseline_img = make_baseline(image, eval_baseline);
            Tensor retained =
                retain_top_fraction(saliency, image, cfg.evaluation.retention, baseline_img);
            Prediction masked_pred = predict(net, retained);
            row.conf_after = masked_pred.probabilities[static_cast<size_t>(pred.predicted_class)];
            row.predicted_after = masked_pred.predicted_class;

            curves.push_back(insertion_curve(net, image, saliency, fractions, baseline_img));
            pairs.push_back({row.conf_before, row.conf_after});
            classes.push_back({row.predicted, row.predicted_after});
        } catch (const std::exception& e) {
            row.ok = false;
            row.error = e.what();
            row.predicted_after = -1;
            result.all_ok = false;
            ++report.failed_count;
        }
        report.rows.push_back(row);
    }

    size_t processed = report.rows.size();
    report.full_image_accuracy =
        processed == 0 ? 0.0
                       : static_cast<double>(full_image_hits) / static_cast<double>(processed);
    finalize_report(report, pairs, classes, curves);

    std::string report_name = std::string(explain_method_name(method)) + "_" +
                              report_file_name(report.seed, report.retention);
    result.report_path = (fs::path(cfg.output.dir) / report_name).string();
    atomic_write_text(result.report_path, format_report(report));
    atomic_write_text((fs::path(cfg.output.dir) / "manifest.txt").string(), format_manifest(cfg));
    return result;
}

}  // namespace cpfc
