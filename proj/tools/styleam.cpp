// styleam command-line tool: toy benchmark generation, training,
// evaluation and style analysis.
//
// Exit codes: 0 success, 2 usage/config error, 3 I/O error, 4 runtime
// failure.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "styleam/analyze.hpp"
#include "styleam/checkpoint.hpp"
#include "styleam/toygen.hpp"
#include "styleam/trainer.hpp"

namespace {

using namespace styleam;

EvalOptions eval_options_from_meta(const CheckpointMeta& meta) {
    if (!meta.config_json.empty())
        return EvalOptions::from_config(TrainingConfig::from_json_text(meta.config_json));
    EvalOptions opt;
    opt.crop = meta.mode == BackboneMode::toy ? 64 : 384;
    return opt;
}

int cmd_make_toy(const std::string& out, int n_source, int n_target, uint64_t seed) {
    const ToyGenResult res = generate_toy_domains(out, n_source, n_target, seed);
    std::cout << res.source_manifest << "\n" << res.target_manifest << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& resume) {
    const TrainingConfig cfg = TrainingConfig::from_json_file(config_path);
    Trainer trainer(cfg);
    const Trainer::RunArtifacts art = trainer.run(resume);
    std::cout << "checkpoint: " << art.final_checkpoint << "\n";
    std::cout << "telemetry: " << art.telemetry_path << "\n";
    if (art.evaluated) {
        std::cout << "metrics: " << art.metrics_path << "\n";
        std::cout << metrics_to_json(art.report) << "\n";
    }
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& manifest, const std::string& scores,
             const std::string& dump) {
    std::unique_ptr<ModelSet<float>> models;
    const CheckpointMeta meta = load_checkpoint(ckpt, models);
    const EvalOptions opt = eval_options_from_meta(meta);
    std::vector<std::string> paths;
    std::vector<double> preds;
    const MetricsReport report = evaluate_on_files(*models, manifest, scores, opt, &paths, &preds);
    if (!dump.empty()) {
        std::ofstream out(dump, std::ios::binary);
        if (!out) throw IoError("cannot write per-sample dump: " + dump);
        out << "path,prediction\n";
        out.precision(7);
        for (size_t i = 0; i < paths.size(); ++i) out << paths[i] << "," << preds[i] << "\n";
    }
    std::cout << metrics_to_json(report) << "\n";
    return 0;
}

int cmd_analyze(const std::string& ckpt, const std::string& manifest, const std::string& scores,
                std::vector<int> stages, std::string out_dir, const std::string& domain) {
    std::unique_ptr<ModelSet<float>> models;
    const CheckpointMeta meta = load_checkpoint(ckpt, models);
    EvalOptions opt = eval_options_from_meta(meta);
    if (stages.empty()) {
        if (!meta.config_json.empty()) {
            const TrainingConfig cfg = TrainingConfig::from_json_text(meta.config_json);
            stages = cfg.analyze_stages;
        }
        if (stages.empty())
            for (int s = 1; s <= models->backbone.stage_count(); ++s) stages.push_back(s);
    }
    if (out_dir.empty()) out_dir = "styles_out";
    const AnalyzeResult res =
        analyze_styles(*models, manifest, scores, stages, out_dir, opt, domain);
    std::cout << analyze_to_json(res) << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Style-aligned cross-domain training and evaluation for blind image quality models"};
    app.require_subcommand(1);

    auto* mk = app.add_subcommand("make-toy", "Generate the deterministic two-domain toy benchmark");
    std::string mk_out;
    int mk_src = 400, mk_tgt = 400;
    uint64_t mk_seed = 7;
    mk->add_option("--out", mk_out, "Output directory")->required();
    mk->add_option("--n-source", mk_src, "Number of source images")->check(CLI::PositiveNumber);
    mk->add_option("--n-target", mk_tgt, "Number of target images")->check(CLI::PositiveNumber);
    mk->add_option("--seed", mk_seed, "Generator seed");

    auto* tr = app.add_subcommand("train", "Run source pretraining followed by adaptation");
    std::string tr_config, tr_resume;
    tr->add_option("--config", tr_config, "Training config JSON")->required();
    tr->add_option("--resume", tr_resume, "Pretrain checkpoint to resume from");

    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint against a scored manifest");
    std::string ev_ckpt, ev_manifest, ev_scores, ev_dump;
    ev->add_option("--checkpoint", ev_ckpt, "Model checkpoint")->required();
    ev->add_option("--manifest", ev_manifest, "Image manifest CSV")->required();
    ev->add_option("--scores", ev_scores, "Ground-truth scores CSV")->required();
    ev->add_option("--dump", ev_dump, "Write per-sample predictions CSV here");

    auto* an = app.add_subcommand("analyze-styles",
                                  "Export per-stage style vectors and their quality correlations");
    std::string an_ckpt, an_manifest, an_scores, an_out, an_domain = "source";
    std::vector<int> an_stages;
    an->add_option("--checkpoint", an_ckpt, "Model checkpoint")->required();
    an->add_option("--manifest", an_manifest, "Image manifest CSV")->required();
    an->add_option("--scores", an_scores, "Quality scores CSV")->required();
    an->add_option("--stages", an_stages, "Backbone stages to tap (default: all)")->delimiter(',');
    an->add_option("--out", an_out, "Directory for the per-stage CSV exports");
    an->add_option("--domain", an_domain, "Domain label written into the CSVs");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (mk->parsed()) return cmd_make_toy(mk_out, mk_src, mk_tgt, mk_seed);
        if (tr->parsed()) return cmd_train(tr_config, tr_resume);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_manifest, ev_scores, ev_dump);
        if (an->parsed()) return cmd_analyze(an_ckpt, an_manifest, an_scores, an_stages, an_out, an_domain);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    }
    return 2;
}
