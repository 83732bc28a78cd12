#include "styleam/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace styleam {

using json = nlohmann::json;
namespace fs = std::filesystem;

namespace {

const char* convention_name(ScoreConvention c) {
    return c == ScoreConvention::mos_higher_better ? "mos_higher_better" : "dmos_higher_worse";
}

ScoreConvention parse_convention(const std::string& s) {
    if (s == "mos_higher_better") return ScoreConvention::mos_higher_better;
    if (s == "dmos_higher_worse") return ScoreConvention::dmos_higher_worse;
    throw ConfigError("source_convention must be mos_higher_better|dmos_higher_worse, got \"" + s +
                      "\"");
}

template <typename T>
T require_number(const json& j, const std::string& key, T fallback) {
    if (!j.contains(key)) return fallback;
    if (!j[key].is_number())
        throw ConfigError("config key \"" + key + "\" must be a number");
    return j[key].get<T>();
}

}  // namespace

TrainingConfig TrainingConfig::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config file not found: " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_json_text(ss.str());
}

TrainingConfig TrainingConfig::from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    if (!j.is_object()) throw ConfigError("config must be a JSON object");

    static const std::vector<std::string> known = {
        "alpha",          "tau",           "lambda_adv",       "mixup_prob",
        "lr",             "weight_decay",  "pretrain_epochs",  "uda_epochs",
        "batch_size",     "crop",          "seed",             "mode",
        "mixup_mode",     "alignment_space", "lambda_per_batch", "relax_running_avg",
        "source_manifest", "target_manifest", "target_eval_scores", "source_convention",
        "source_range",   "norm_mean",     "norm_std",         "out_dir",
        "backbone_weights", "analyze_stages"};
    for (const auto& [key, _] : j.items()) {
        if (std::find(known.begin(), known.end(), key) == known.end())
            throw ConfigError("unknown config key \"" + key + "\"");
    }

    TrainingConfig c;
    if (j.contains("mode")) c.mode = parse_backbone_mode(j["mode"].get<std::string>());
    // mode-dependent defaults
    c.crop = c.mode == BackboneMode::toy ? 64 : 384;
    c.uda_epochs = c.mode == BackboneMode::toy ? 30 : 50;

    c.alpha = require_number(j, "alpha", c.alpha);
    c.tau = require_number(j, "tau", c.tau);
    c.lambda_adv = require_number(j, "lambda_adv", c.lambda_adv);
    c.mixup_prob = require_number(j, "mixup_prob", c.mixup_prob);
    c.lr = require_number(j, "lr", c.lr);
    c.weight_decay = require_number(j, "weight_decay", c.weight_decay);
    c.pretrain_epochs = require_number(j, "pretrain_epochs", c.pretrain_epochs);
    c.uda_epochs = require_number(j, "uda_epochs", c.uda_epochs);
    c.batch_size = require_number(j, "batch_size", c.batch_size);
    c.crop = require_number(j, "crop", c.crop);
    c.seed = require_number(j, "seed", c.seed);
    if (j.contains("mixup_mode")) c.mixup_mode = parse_mixup_mode(j["mixup_mode"].get<std::string>());
    if (j.contains("alignment_space"))
        c.alignment_space = parse_alignment_space(j["alignment_space"].get<std::string>());
    if (j.contains("lambda_per_batch")) c.lambda_per_batch = j["lambda_per_batch"].get<bool>();
    if (j.contains("relax_running_avg")) c.relax_running_avg = j["relax_running_avg"].get<bool>();
    if (j.contains("source_manifest")) c.source_manifest = j["source_manifest"].get<std::string>();
    if (j.contains("target_manifest")) c.target_manifest = j["target_manifest"].get<std::string>();
    if (j.contains("target_eval_scores"))
        c.target_eval_scores = j["target_eval_scores"].get<std::string>();
    if (j.contains("source_convention"))
        c.source_convention = parse_convention(j["source_convention"].get<std::string>());
    if (j.contains("source_range")) {
        const auto r = j["source_range"].get<std::vector<double>>();
        if (r.size() != 2) throw ConfigError("source_range must be [lo, hi]");
        c.source_range_lo = r[0];
        c.source_range_hi = r[1];
    }
    if (j.contains("norm_mean")) {
        const auto v = j["norm_mean"].get<std::vector<double>>();
        if (v.size() != 3) throw ConfigError("norm_mean must have 3 entries");
        std::copy(v.begin(), v.end(), c.norm_mean.begin());
    }
    if (j.contains("norm_std")) {
        const auto v = j["norm_std"].get<std::vector<double>>();
        if (v.size() != 3) throw ConfigError("norm_std must have 3 entries");
        std::copy(v.begin(), v.end(), c.norm_std.begin());
    }
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("backbone_weights")) c.backbone_weights = j["backbone_weights"].get<std::string>();
    if (j.contains("analyze_stages")) c.analyze_stages = j["analyze_stages"].get<std::vector<int>>();

    c.validate();
    return c;
}

void TrainingConfig::validate() const {
    if (!(alpha > 0.0)) throw ConfigError("alpha must be positive (got " + std::to_string(alpha) + ")");
    if (tau < -1.0 || tau > 1.0)
        throw ConfigError("tau must be in [-1,1] (got " + std::to_string(tau) + ")");
    if (lambda_adv < 0.0)
        throw ConfigError("lambda_adv must be nonnegative (got " + std::to_string(lambda_adv) + ")");
    if (mixup_prob < 0.0 || mixup_prob > 1.0)
        throw ConfigError("mixup_prob must be in [0,1] (got " + std::to_string(mixup_prob) + ")");
    if (!(lr > 0.0)) throw ConfigError("lr must be positive");
    if (weight_decay < 0.0) throw ConfigError("weight_decay must be nonnegative");
    if (pretrain_epochs < 0) throw ConfigError("pretrain_epochs must be nonnegative");
    if (uda_epochs < 0) throw ConfigError("uda_epochs must be nonnegative");
    if (batch_size < 1) throw ConfigError("batch_size must be positive");
    if (crop < 16) throw ConfigError("crop must be at least 16 (got " + std::to_string(crop) + ")");
    if (crop % 16 != 0)
        throw ConfigError("crop must be divisible by 16 (4 stride-2 stages); got " +
                          std::to_string(crop));
    if (!(source_range_lo < source_range_hi))
        throw ConfigError("source_range must satisfy lo < hi");
    for (double s : norm_std)
        if (s <= 0.0) throw ConfigError("norm_std entries must be positive");
    for (int s : analyze_stages)
        if (s < 1 || s > 4) throw ConfigError("analyze_stages entries must be in [1,4]");
}

std::string TrainingConfig::to_json_text() const {
    json j;
    j["alpha"] = alpha;
    j["tau"] = tau;
    j["lambda_adv"] = lambda_adv;
    j["mixup_prob"] = mixup_prob;
    j["lr"] = lr;
    j["weight_decay"] = weight_decay;
    j["pretrain_epochs"] = pretrain_epochs;
    j["uda_epochs"] = uda_epochs;
    j["batch_size"] = batch_size;
    j["crop"] = crop;
    j["seed"] = seed;
    j["mode"] = to_string(mode);
    j["mixup_mode"] = to_string(mixup_mode);
    j["alignment_space"] = to_string(alignment_space);
    j["lambda_per_batch"] = lambda_per_batch;
    j["relax_running_avg"] = relax_running_avg;
    j["source_manifest"] = source_manifest;
    j["target_manifest"] = target_manifest;
    j["target_eval_scores"] = target_eval_scores;
    j["source_convention"] = convention_name(source_convention);
    j["source_range"] = {source_range_lo, source_range_hi};
    j["norm_mean"] = norm_mean;
    j["norm_std"] = norm_std;
    j["out_dir"] = out_dir;
    j["backbone_weights"] = backbone_weights;
    j["analyze_stages"] = analyze_stages;
    return j.dump();
}

std::string TrainingConfig::digest() const {
    std::ostringstream os;
    os << std::hex << fnv1a64(to_json_text());
    return os.str();
}

// ---- inference ------------------------------------------------------------

namespace {

Tensor<float> normalize_batch(const std::vector<Tensor<float>>& crops,
                              const std::array<double, 3>& mean, const std::array<double, 3>& sd) {
    const int b = static_cast<int>(crops.size());
    const int s = crops[0].dim(1);
    Tensor<float> out({b, 3, s, s});
    for (int i = 0; i < b; ++i)
        for (int c = 0; c < 3; ++c) {
            const float m = static_cast<float>(mean[static_cast<size_t>(c)]);
            const float inv = static_cast<float>(1.0 / sd[static_cast<size_t>(c)]);
            const float* src = crops[static_cast<size_t>(i)].data() + static_cast<size_t>(c) * s * s;
            float* dst = &out.at(i, c, 0, 0);
            for (int k = 0; k < s * s; ++k) dst[k] = (src[k] - m) * inv;
        }
    return out;
}

}  // namespace

std::vector<double> predict_scores(ModelSet<float>& models, const Dataset& data,
                                   const EvalOptions& opt) {
    std::vector<double> preds;
    preds.reserve(static_cast<size_t>(data.size()));
    for (int start = 0; start < data.size(); start += opt.batch) {
        const int b = std::min(opt.batch, data.size() - start);
        std::vector<Tensor<float>> crops;
        crops.reserve(static_cast<size_t>(b));
        for (int i = 0; i < b; ++i)
            crops.push_back(preprocess(data.image(start + i), PreprocessMode::test, opt.crop, nullptr));
        Graph<float> g;
        const int x = g.leaf(normalize_batch(crops, opt.norm_mean, opt.norm_std));
        const int f = models.backbone.forward(g, x, models.backbone.stage_count(), /*training=*/false);
        const int p = models.head.forward(g, f);
        const Tensor<float>& v = g.val(p);
        for (int i = 0; i < b; ++i) preds.push_back(static_cast<double>(v[i]));
    }
    return preds;
}

MetricsReport evaluate_on_files(ModelSet<float>& models, const std::string& manifest_path,
                                const std::string& scores_path, const EvalOptions& opt,
                                std::vector<std::string>* paths_out,
                                std::vector<double>* preds_out) {
    const Manifest manifest = load_manifest(manifest_path);
    const Manifest scores = load_manifest(scores_path);
    if (scores.records.size() != manifest.records.size())
        throw InputError("scores file has " + std::to_string(scores.records.size()) +
                         " rows but the manifest has " + std::to_string(manifest.records.size()));
    std::vector<double> labels;
    labels.reserve(scores.records.size());
    for (size_t i = 0; i < scores.records.size(); ++i) {
        const auto& r = scores.records[i];
        if (!r.raw_score.has_value())
            throw InputError("scores file row " + std::to_string(i + 2) + " has no score");
        if (r.path != manifest.records[i].path)
            throw InputError("scores file row " + std::to_string(i + 2) +
                             " names a different image than the manifest");
        labels.push_back(*r.raw_score);
    }

    const Dataset data =
        Dataset::load(manifest, ScoreConvention::mos_higher_better, 0.0, 5.0, opt.crop, false);
    const std::vector<double> preds = predict_scores(models, data, opt);
    if (paths_out != nullptr) {
        paths_out->clear();
        for (int i = 0; i < data.size(); ++i) paths_out->push_back(data.path(i));
    }
    if (preds_out != nullptr) *preds_out = preds;
    return compute_metrics(preds, labels);
}

// ---- trainer ---------------------------------------------------------------

Trainer::Trainer(TrainingConfig cfg)
    : cfg_(std::move(cfg)),
      adam_(static_cast<float>(cfg_.lr), static_cast<float>(cfg_.weight_decay)),
      mix_rng_(Rng(cfg_.seed).derive("mixup")),
      prep_src_rng_(Rng(cfg_.seed).derive("prep.source")),
      prep_tgt_rng_(Rng(cfg_.seed).derive("prep.target")),
      relax_(cfg_.tau, cfg_.relax_running_avg) {
    cfg_.validate();
    models_ = std::make_unique<ModelSet<float>>(cfg_.mode, cfg_.alignment_space,
                                                Rng(cfg_.seed).derive("init"));
    if (!cfg_.backbone_weights.empty()) {
        std::unique_ptr<ModelSet<float>> donor;
        const CheckpointMeta meta = load_checkpoint(cfg_.backbone_weights, donor);
        if (meta.mode != cfg_.mode)
            throw ConfigError("backbone_weights checkpoint mode does not match config mode");
        for (Parameter<float>* p : models_->params()) {
            if (p->name.rfind("backbone.", 0) != 0) continue;
            Parameter<float>* src = donor->find(p->name);
            if (src == nullptr || src->value.shape() != p->value.shape())
                throw ConfigError("backbone_weights checkpoint lacks parameter " + p->name);
            p->value = src->value;
        }
    }
}

void Trainer::ensure_data_loaded() {
    if (!source_.has_value()) {
        if (cfg_.source_manifest.empty()) throw ConfigError("source_manifest is required");
        const Manifest m = load_manifest(cfg_.source_manifest);
        if (!m.fully_labeled())
            throw ConfigError("source manifest must be fully labeled for training: " +
                              cfg_.source_manifest);
        source_ = Dataset::load(m, cfg_.source_convention, cfg_.source_range_lo,
                                cfg_.source_range_hi, cfg_.crop, /*require_scores=*/true);
        src_sampler_ = BatchSampler(source_->size(), Rng(cfg_.seed).derive("shuffle.source"));
    }
    if (!target_.has_value()) {
        if (cfg_.target_manifest.empty()) throw ConfigError("target_manifest is required");
        const Manifest m = load_manifest(cfg_.target_manifest);
        // Target labels are never read by training code: scores, if any,
        // stay out of the loaded dataset entirely.
        Manifest unlabeled = m;
        for (auto& r : unlabeled.records) r.raw_score.reset();
        target_ = Dataset::load(unlabeled, cfg_.source_convention, 0.0, 5.0, cfg_.crop, false);
        tgt_sampler_ = BatchSampler(target_->size(), Rng(cfg_.seed).derive("shuffle.target"));
    }
}

const Dataset& Trainer::source_data() {
    ensure_data_loaded();
    return *source_;
}

const Dataset& Trainer::target_data() {
    ensure_data_loaded();
    return *target_;
}

std::pair<Tensor<float>, std::vector<float>> Trainer::make_source_batch(
    const std::vector<int>& idx) {
    ensure_data_loaded();
    std::vector<Tensor<float>> crops;
    std::vector<float> labels;
    crops.reserve(idx.size());
    for (int i : idx) {
        crops.push_back(preprocess(source_->image(i), PreprocessMode::train, cfg_.crop, &prep_src_rng_));
        labels.push_back(static_cast<float>(source_->score(i)));
    }
    return {normalize_batch(crops, cfg_.norm_mean, cfg_.norm_std), std::move(labels)};
}

Tensor<float> Trainer::make_target_batch(const std::vector<int>& idx) {
    ensure_data_loaded();
    std::vector<Tensor<float>> crops;
    crops.reserve(idx.size());
    for (int i : idx)
        crops.push_back(preprocess(target_->image(i), PreprocessMode::train, cfg_.crop, &prep_tgt_rng_));
    return normalize_batch(crops, cfg_.norm_mean, cfg_.norm_std);
}

void Trainer::write_telemetry(const std::string& phase, const LossReport& r) {
    if (!telemetry_) return;
    json j;
    j["step"] = global_step_;
    j["l_q"] = r.l_q;
    j["l_d"] = r.l_d;
    j["l_all"] = r.l_all;
    j["h"] = r.h;
    if (r.srocc_defined)
        j["batch_srocc"] = r.batch_srocc;
    else
        j["batch_srocc"] = nullptr;
    j["mixed"] = r.mixed;
    j["phase"] = phase;
    (*telemetry_) << j.dump() << "\n";
}

LossReport Trainer::pretrain_step(const Tensor<float>& src_images,
                                  const std::vector<float>& src_labels) {
    models_->zero_grad();
    Graph<float> g;
    const StepGraph<float> sg =
        build_pretrain_objective(g, *models_, src_images, src_labels, cfg_.step_options(), mix_rng_);
    g.backward(sg.l_all);
    adam_.step(models_->params());
    ++global_step_;
    return sg.report;
}

LossReport Trainer::uda_step(const Tensor<float>& src_images, const std::vector<float>& src_labels,
                             const Tensor<float>& tgt_images) {
    models_->zero_grad();
    Graph<float> g;
    const StepGraph<float> sg = build_uda_objective(g, *models_, src_images, src_labels, tgt_images,
                                                    cfg_.step_options(), mix_rng_, relax_);
    g.backward(sg.l_all);
    adam_.step(models_->params());
    ++global_step_;
    return sg.report;
}

CheckpointMeta Trainer::make_meta(int epoch, const std::string& phase) const {
    CheckpointMeta meta;
    meta.mode = cfg_.mode;
    meta.alignment_space = cfg_.alignment_space;
    meta.stage_widths = models_->backbone.widths();
    meta.epoch = epoch;
    meta.phase = phase;
    meta.config_digest = cfg_.digest();
    meta.config_json = cfg_.to_json_text();
    meta.rng_streams["mixup"] = mix_rng_.save_state();
    meta.rng_streams["prep.source"] = prep_src_rng_.save_state();
    meta.rng_streams["prep.target"] = prep_tgt_rng_.save_state();
    meta.rng_streams["shuffle.source"] = src_sampler_.rng().save_state();
    meta.rng_streams["shuffle.target"] = tgt_sampler_.rng().save_state();
    return meta;
}

void Trainer::restore_streams(const std::map<std::string, std::string>& streams) {
    auto maybe = [&](const char* key, Rng& r) {
        auto it = streams.find(key);
        if (it != streams.end()) r = Rng::restore_state(it->second);
    };
    maybe("mixup", mix_rng_);
    maybe("prep.source", prep_src_rng_);
    maybe("prep.target", prep_tgt_rng_);
    maybe("shuffle.source", src_sampler_.rng());
    maybe("shuffle.target", tgt_sampler_.rng());
}

std::string Trainer::pretrain() {
    ensure_data_loaded();
    const int steps =
        (source_->size() + cfg_.batch_size - 1) / cfg_.batch_size;  // one pass over the source
    for (int epoch = 1; epoch <= cfg_.pretrain_epochs; ++epoch) {
        for (int s = 0; s < steps; ++s) {
            auto [images, labels] = make_source_batch(src_sampler_.next(cfg_.batch_size));
            const LossReport r = pretrain_step(images, labels);
            write_telemetry("pretrain", r);
        }
    }
    std::error_code ec;
    fs::create_directories(cfg_.out_dir, ec);
    const std::string path = (fs::path(cfg_.out_dir) / "checkpoint_pretrain.ckpt").string();
    save_checkpoint(path, *models_, make_meta(cfg_.pretrain_epochs, "pretrain"));
    return path;
}

Trainer::RunArtifacts Trainer::run(const std::string& resume_checkpoint) {
    ensure_data_loaded();
    std::error_code ec;
    fs::create_directories(cfg_.out_dir, ec);
    if (ec) throw IoError("cannot create out_dir " + cfg_.out_dir + ": " + ec.message());

    RunArtifacts art;
    art.telemetry_path = (fs::path(cfg_.out_dir) / "telemetry.jsonl").string();
    telemetry_ = std::make_unique<std::ofstream>(art.telemetry_path, std::ios::binary);
    if (!*telemetry_) throw IoError("cannot open telemetry log: " + art.telemetry_path);

    if (resume_checkpoint.empty()) {
        art.pretrain_checkpoint = pretrain();
    } else {
        std::unique_ptr<ModelSet<float>> loaded;
        const CheckpointMeta meta = load_checkpoint(resume_checkpoint, loaded);
        if (meta.phase != "pretrain")
            throw ConfigError("--resume expects a phase=pretrain checkpoint, got phase=" +
                              meta.phase);
        if (meta.mode != cfg_.mode || meta.alignment_space != cfg_.alignment_space)
            throw ConfigError("resume checkpoint architecture does not match the config");
        if (meta.config_digest != cfg_.digest())
            log_warn("resume checkpoint was produced under a different config");
        for (Parameter<float>* p : models_->params()) {
            Parameter<float>* src = loaded->find(p->name);
            p->value = src->value;
        }
        restore_streams(meta.rng_streams);
        art.pretrain_checkpoint = resume_checkpoint;
    }

    // fresh optimizer moments for the adaptation phase
    adam_.reset_state(models_->params());

    const int longer = std::max(source_->size(), target_->size());
    const int steps = (longer + cfg_.batch_size - 1) / cfg_.batch_size;
    for (int epoch = 1; epoch <= cfg_.uda_epochs; ++epoch) {
        for (int s = 0; s < steps; ++s) {
            auto [src_images, src_labels] = make_source_batch(src_sampler_.next(cfg_.batch_size));
            const Tensor<float> tgt_images = make_target_batch(tgt_sampler_.next(cfg_.batch_size));
            const LossReport r = uda_step(src_images, src_labels, tgt_images);
            write_telemetry("uda", r);
        }
    }

    art.final_checkpoint = (fs::path(cfg_.out_dir) / "checkpoint_final.ckpt").string();
    save_checkpoint(art.final_checkpoint, *models_, make_meta(cfg_.uda_epochs, "uda"));
    telemetry_->flush();
    telemetry_.reset();

    if (!cfg_.target_eval_scores.empty() && fs::exists(cfg_.target_eval_scores)) {
        art.report = evaluate_on_files(*models_, cfg_.target_manifest, cfg_.target_eval_scores,
                                       EvalOptions::from_config(cfg_));
        art.evaluated = true;
        art.metrics_path = (fs::path(cfg_.out_dir) / "metrics.json").string();
        std::ofstream mj(art.metrics_path, std::ios::binary);
        if (!mj) throw IoError("cannot write metrics: " + art.metrics_path);
        mj << metrics_to_json(art.report) << "\n";
    } else {
        log_warn("target evaluation scores not available; skipping final evaluation");
    }
    return art;
}

}  // namespace styleam
