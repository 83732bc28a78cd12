#pragma once

#include <array>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "styleam/checkpoint.hpp"
#include "styleam/data.hpp"
#include "styleam/metrics.hpp"
#include "styleam/objective.hpp"

namespace styleam {

// Complete run configuration. Parsed from a strict JSON document: unknown
// keys are rejected and every violated constraint names its key.
struct TrainingConfig {
    double alpha = 0.65;        // Beta concentration for the mixing draw
    double tau = 0.9;           // SROCC threshold of the relaxation gate
    double lambda_adv = 2.0;    // adversarial loss weight
    double mixup_prob = 0.5;    // probability of taking the mixup branch
    double lr = 1e-4;
    double weight_decay = 5e-4;
    int pretrain_epochs = 5;
    int uda_epochs = 30;  // 50 in full mode unless set explicitly
    int batch_size = 16;
    int crop = 64;  // 384 in full mode unless set explicitly
    uint64_t seed = 1;
    BackboneMode mode = BackboneMode::toy;
    MixupMode mixup_mode = MixupMode::style_mixup;
    AlignmentSpace alignment_space = AlignmentSpace::style;
    bool lambda_per_batch = false;   // one mixing coefficient per batch instead of per sample
    bool relax_running_avg = false;  // gate on an EMA of the batch SROCC

    std::string source_manifest;
    std::string target_manifest;
    std::string target_eval_scores;  // eval-only file; never read during training
    ScoreConvention source_convention = ScoreConvention::mos_higher_better;
    double source_range_lo = 0.0;
    double source_range_hi = 5.0;
    std::array<double, 3> norm_mean{0.5, 0.5, 0.5};
    std::array<double, 3> norm_std{0.5, 0.5, 0.5};
    std::string out_dir = "out";
    std::string backbone_weights;       // optional checkpoint supplying backbone parameters
    std::vector<int> analyze_stages{};  // tap selection for the style analysis command

    static TrainingConfig from_json_text(const std::string& text);
    static TrainingConfig from_json_file(const std::string& path);
    std::string to_json_text() const;
    void validate() const;
    std::string digest() const;

    StepOptions step_options() const {
        StepOptions o;
        o.mixup_mode = mixup_mode;
        o.mixup_prob = mixup_prob;
        o.alignment_space = alignment_space;
        o.lambda_adv = lambda_adv;
        o.alpha = alpha;
        o.grl_coeff = 1.0;  // adversarial strength is carried entirely by lambda_adv
        o.lambda_per_batch = lambda_per_batch;
        o.training = true;
        return o;
    }
};

struct EvalOptions {
    int crop = 64;
    std::array<double, 3> norm_mean{0.5, 0.5, 0.5};
    std::array<double, 3> norm_std{0.5, 0.5, 0.5};
    int batch = 32;

    static EvalOptions from_config(const TrainingConfig& c) {
        return EvalOptions{c.crop, c.norm_mean, c.norm_std, 32};
    }
};

// Center-crop inference over a dataset (evaluation statistics mode).
std::vector<double> predict_scores(ModelSet<float>& models, const Dataset& data,
                                   const EvalOptions& opt);

// Loads manifest + sibling scores file, runs inference, computes the full
// metric protocol. Scores are consumed as-is (rank and logistic mapping
// make the metrics invariant to their raw scale). If paths_out/preds_out
// are non-null they receive the per-sample dump.
MetricsReport evaluate_on_files(ModelSet<float>& models, const std::string& manifest_path,
                                const std::string& scores_path, const EvalOptions& opt,
                                std::vector<std::string>* paths_out = nullptr,
                                std::vector<double>* preds_out = nullptr);

// Orchestrates source pretraining, style-aligned adaptation, evaluation
// and artifact emission.
class Trainer {
  public:
    explicit Trainer(TrainingConfig cfg);

    struct RunArtifacts {
        std::string pretrain_checkpoint;
        std::string final_checkpoint;
        std::string telemetry_path;
        std::string metrics_path;  // empty when evaluation was skipped
        bool evaluated = false;
        MetricsReport report;
    };

    // Phase 1: labeled-source training under the mixup gate. Returns the
    // checkpoint path (phase = "pretrain").
    std::string pretrain();

    // Full pipeline. resume_checkpoint, when given, must hold a
    // phase="pretrain" checkpoint and replaces phase 1.
    RunArtifacts run(const std::string& resume_checkpoint = "");

    // Single optimization steps on explicit batches (test surface).
    LossReport pretrain_step(const Tensor<float>& src_images, const std::vector<float>& src_labels);
    LossReport uda_step(const Tensor<float>& src_images, const std::vector<float>& src_labels,
                        const Tensor<float>& tgt_images);

    ModelSet<float>& models() { return *models_; }
    const TrainingConfig& config() const { return cfg_; }

    // Assembles a normalized training batch from dataset indices.
    std::pair<Tensor<float>, std::vector<float>> make_source_batch(const std::vector<int>& idx);
    Tensor<float> make_target_batch(const std::vector<int>& idx);

    const Dataset& source_data();
    const Dataset& target_data();

  private:
    void ensure_data_loaded();
    void write_telemetry(const std::string& phase, const LossReport& r);
    CheckpointMeta make_meta(int epoch, const std::string& phase) const;
    void restore_streams(const std::map<std::string, std::string>& streams);

    TrainingConfig cfg_;
    std::unique_ptr<ModelSet<float>> models_;
    Adam<float> adam_;
    Rng mix_rng_;
    Rng prep_src_rng_, prep_tgt_rng_;
    BatchSampler src_sampler_, tgt_sampler_;
    RelaxationController relax_;
    std::optional<Dataset> source_;
    std::optional<Dataset> target_;
    std::unique_ptr<std::ofstream> telemetry_;
    int64_t global_step_ = 0;
};

}  // namespace styleam
