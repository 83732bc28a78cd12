#include "styleam/analyze.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "styleam/style.hpp"

namespace styleam {

namespace fs = std::filesystem;

namespace {

// |Spearman| averaged over the columns of a (n_samples x n_channels)
// matrix against the quality vector; zero-variance columns count as 0.
double mean_abs_channel_srocc(const std::vector<std::vector<double>>& columns,
                              const std::vector<double>& quality) {
    if (columns.empty()) return 0.0;
    double acc = 0.0;
    for (const auto& col : columns) {
        try {
            acc += std::abs(srocc(col, quality));
        } catch (const MetricError&) {
            // constant channel: no rank signal
        }
    }
    return acc / static_cast<double>(columns.size());
}

}  // namespace

AnalyzeResult analyze_styles(ModelSet<float>& models, const std::string& manifest_path,
                             const std::string& scores_path, const std::vector<int>& stages,
                             const std::string& out_dir, const EvalOptions& opt,
                             const std::string& domain_name) {
    if (stages.empty()) throw ConfigError("analyze_styles: no stages requested");
    for (int s : stages)
        if (s < 1 || s > models.backbone.stage_count())
            throw ConfigError("analyze_styles: stage " + std::to_string(s) + " out of range");

    const Manifest manifest = load_manifest(manifest_path);
    const Manifest scores = load_manifest(scores_path);
    if (scores.records.size() != manifest.records.size())
        throw InputError("scores file row count does not match the manifest");
    std::vector<double> quality;
    for (const auto& r : scores.records) {
        if (!r.raw_score.has_value()) throw InputError("scores file has unscored rows");
        quality.push_back(*r.raw_score);
    }
    const Dataset data =
        Dataset::load(manifest, ScoreConvention::mos_higher_better, 0.0, 5.0, opt.crop, false);

    const int deepest = *std::max_element(stages.begin(), stages.end());
    const int n = data.size();

    // per requested stage: columns[channel][sample]
    struct StageAccum {
        std::vector<std::vector<double>> means, stds, pooled;
    };
    std::vector<StageAccum> acc(stages.size());

    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw IoError("cannot create analyze output dir " + out_dir + ": " + ec.message());
    std::vector<std::unique_ptr<std::ofstream>> csvs;
    AnalyzeResult result;
    for (size_t si = 0; si < stages.size(); ++si) {
        const std::string p =
            (fs::path(out_dir) / ("styles_stage" + std::to_string(stages[si]) + ".csv")).string();
        csvs.push_back(std::make_unique<std::ofstream>(p, std::ios::binary));
        if (!*csvs.back()) throw IoError("cannot write " + p);
        const int c = models.backbone.channels_at(stages[si]);
        (*csvs.back()) << "sample_id,domain,quality";
        for (int k = 0; k < c; ++k) (*csvs.back()) << ",mean_" << k;
        for (int k = 0; k < c; ++k) (*csvs.back()) << ",std_" << k;
        (*csvs.back()) << "\n";
        acc[si].means.resize(static_cast<size_t>(c));
        acc[si].stds.resize(static_cast<size_t>(c));
        acc[si].pooled.resize(static_cast<size_t>(c));
        result.csv_paths.push_back(p);
    }

    for (int start = 0; start < n; start += opt.batch) {
        const int b = std::min(opt.batch, n - start);
        std::vector<Tensor<float>> crops;
        for (int i = 0; i < b; ++i)
            crops.push_back(preprocess(data.image(start + i), PreprocessMode::test, opt.crop, nullptr));
        Tensor<float> batch({b, 3, opt.crop, opt.crop});
        for (int i = 0; i < b; ++i)
            for (int c = 0; c < 3; ++c) {
                const float m = static_cast<float>(opt.norm_mean[static_cast<size_t>(c)]);
                const float inv = static_cast<float>(1.0 / opt.norm_std[static_cast<size_t>(c)]);
                const float* src =
                    crops[static_cast<size_t>(i)].data() + static_cast<size_t>(c) * opt.crop * opt.crop;
                float* dst = &batch.at(i, c, 0, 0);
                for (int k = 0; k < opt.crop * opt.crop; ++k) dst[k] = (src[k] - m) * inv;
            }
        Graph<float> g;
        const int x = g.leaf(std::move(batch));
        const std::vector<int> stage_nodes =
            models.backbone.forward_stages(g, x, deepest, /*training=*/false);

        for (size_t si = 0; si < stages.size(); ++si) {
            const int node = stage_nodes[static_cast<size_t>(stages[si] - 1)];
            const Tensor<float>& f = g.val(node);
            const auto styles = extract_style(f);
            const int c = f.dim(1);
            const int64_t hw = static_cast<int64_t>(f.dim(2)) * f.dim(3);
            for (int i = 0; i < b; ++i) {
                std::ostringstream row;
                row.precision(7);
                row << data.path(start + i) << "," << domain_name << "," << quality[static_cast<size_t>(start + i)];
                for (int k = 0; k < c; ++k) row << "," << styles[static_cast<size_t>(i)].mean[static_cast<size_t>(k)];
                for (int k = 0; k < c; ++k) row << "," << styles[static_cast<size_t>(i)].sd[static_cast<size_t>(k)];
                (*csvs[si]) << row.str() << "\n";
                for (int k = 0; k < c; ++k) {
                    acc[si].means[static_cast<size_t>(k)].push_back(
                        styles[static_cast<size_t>(i)].mean[static_cast<size_t>(k)]);
                    acc[si].stds[static_cast<size_t>(k)].push_back(
                        styles[static_cast<size_t>(i)].sd[static_cast<size_t>(k)]);
                    // pooled activation = spatial mean; identical value but kept
                    // as its own series for the feature-space comparison
                    const float* p = &f.at(i, k, 0, 0);
                    double s = 0.0;
                    for (int64_t q = 0; q < hw; ++q) s += p[q];
                    acc[si].pooled[static_cast<size_t>(k)].push_back(s / static_cast<double>(hw));
                }
            }
        }
    }

    for (size_t si = 0; si < stages.size(); ++si) {
        StageStyleSummary sum;
        sum.stage = stages[si];
        sum.mean_abs_srocc_mean = mean_abs_channel_srocc(acc[si].means, quality);
        sum.mean_abs_srocc_std = mean_abs_channel_srocc(acc[si].stds, quality);
        sum.mean_abs_srocc_style = 0.5 * (sum.mean_abs_srocc_mean + sum.mean_abs_srocc_std);
        sum.mean_abs_srocc_pooled = mean_abs_channel_srocc(acc[si].pooled, quality);
        result.stages.push_back(sum);
    }
    return result;
}

std::string analyze_to_json(const AnalyzeResult& r) {
    std::ostringstream os;
    os.precision(10);
    os << "{\"stages\":[";
    for (size_t i = 0; i < r.stages.size(); ++i) {
        const auto& s = r.stages[i];
        os << (i ? "," : "") << "{\"stage\":" << s.stage
           << ",\"mean_abs_srocc_mean\":" << s.mean_abs_srocc_mean
           << ",\"mean_abs_srocc_std\":" << s.mean_abs_srocc_std
           << ",\"mean_abs_srocc_style\":" << s.mean_abs_srocc_style
           << ",\"mean_abs_srocc_pooled\":" << s.mean_abs_srocc_pooled << "}";
    }
    os << "],\"csv\":[";
    for (size_t i = 0; i < r.csv_paths.size(); ++i)
        os << (i ? "," : "") << "\"" << r.csv_paths[i] << "\"";
    os << "]}";
    return os.str();
}

}  // namespace styleam
