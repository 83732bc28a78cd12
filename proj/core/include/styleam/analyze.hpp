#pragma once

#include <string>
#include <vector>

#include "styleam/data.hpp"
#include "styleam/nn.hpp"
#include "styleam/trainer.hpp"

namespace styleam {

// Per-stage correlation summary between per-channel statistics and the
// quality score, averaged over channels (absolute Spearman). Channels
// with zero variance contribute 0.
struct StageStyleSummary {
    int stage = 0;
    double mean_abs_srocc_mean = 0.0;    // channel means vs quality
    double mean_abs_srocc_std = 0.0;     // channel stds vs quality
    double mean_abs_srocc_style = 0.0;   // both style halves combined
    double mean_abs_srocc_pooled = 0.0;  // pooled feature activations vs quality
};

struct AnalyzeResult {
    std::vector<StageStyleSummary> stages;
    std::vector<std::string> csv_paths;
};

// Extracts style vectors at the requested backbone stages for every
// manifest record, writes one CSV per stage
// (sample_id, domain, quality, mean_0.., std_0..) under out_dir, and
// computes the correlation summaries.
AnalyzeResult analyze_styles(ModelSet<float>& models, const std::string& manifest_path,
                             const std::string& scores_path, const std::vector<int>& stages,
                             const std::string& out_dir, const EvalOptions& opt,
                             const std::string& domain_name = "source");

std::string analyze_to_json(const AnalyzeResult& r);

}  // namespace styleam
