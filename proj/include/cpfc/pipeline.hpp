#pragma once

#include <string>

#include "cpfc/config.hpp"
#include "cpfc/dataset.hpp"
#include "cpfc/evaluation.hpp"

namespace cpfc {

enum class ExplainMethod { Coalition, Occlusion };

const char* explain_method_name(ExplainMethod m);

struct PipelineResult {
    EvalReport report;
    bool all_ok = true;
    std::string out_dir;
    std::string report_path;
};

// Loads the checkpoint when the configured file exists; otherwise trains a
// fresh classifier on the dataset's train split (and saves it).
Network obtain_network(const RunConfig& cfg, const ShapesDataset& dataset,
                       TrainReport* train_report = nullptr);

// Full run over the dataset's test split: per image predict, explain
// (coalition-guided mask or occlusion), retain the top saliency fraction,
// score, and write artifacts. A failing sample is recorded in its report row
// and the run continues.
PipelineResult run_pipeline(const RunConfig& cfg, ExplainMethod method);

// Saliency artifact paths for one sample inside a pipeline output directory.
std::string sample_dir(const std::string& out_dir, int index);

}  // namespace cpfc
