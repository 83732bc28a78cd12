#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "styleam/rng.hpp"
#include "styleam/tensor.hpp"

namespace styleam {

enum class ScoreConvention { mos_higher_better, dmos_higher_worse };

struct ManifestRecord {
    std::string path;                 // resolved absolute path
    std::optional<double> raw_score;  // absent for unlabeled (target) records
};

// Parsed dataset manifest. CSV, UTF-8, header "path,score"; the score
// column may be omitted or left empty for unlabeled records. Relative
// paths resolve against the manifest's directory; every path must exist.
struct Manifest {
    std::vector<ManifestRecord> records;
    std::filesystem::path dir;

    bool fully_labeled() const {
        for (const auto& r : records)
            if (!r.raw_score.has_value()) return false;
        return !records.empty();
    }
    bool any_labeled() const {
        for (const auto& r : records)
            if (r.raw_score.has_value()) return true;
        return false;
    }
};

Manifest load_manifest(const std::string& path);

// Linear map of raw scores onto [0,5]; DMOS conventions reverse order.
double rescale_score(double raw, ScoreConvention conv, double lo, double hi);
std::vector<double> rescale_scores(const std::vector<double>& raw, ScoreConvention conv, double lo,
                                   double hi);

enum class PreprocessMode { train, test };

// Random crop + horizontal flip (train) or center crop (test) of a
// (3,H,W) image. Train mode draws crop row, crop column, then the flip
// coin, in that order, from the supplied rng.
Tensor<float> preprocess(const Tensor<float>& image, PreprocessMode mode, int crop, Rng* rng);

// In-memory dataset: decoded images plus rescaled scores. Images smaller
// that the configured crop are rejected with the offending path.
class Dataset {
  public:
    Dataset() = default;
    static Dataset load(const Manifest& m, ScoreConvention conv, double lo, double hi, int crop,
                        bool require_scores);

    int size() const { return static_cast<int>(images_.size()); }
    const Tensor<float>& image(int i) const { return images_[static_cast<size_t>(i)]; }
    const std::string& path(int i) const { return paths_[static_cast<size_t>(i)]; }
    bool labeled() const { return !scores_.empty(); }
    double score(int i) const { return scores_.at(static_cast<size_t>(i)); }
    const std::vector<double>& scores() const { return scores_; }

  private:
    std::vector<Tensor<float>> images_;
    std::vector<std::string> paths_;
    std::vector<double> scores_;  // empty when the manifest is unlabeled
};

// Endless shuffled index stream; reshuffles on exhaustion so a shorter
// domain cycles while the longer one drives the epoch length.
class BatchSampler {
  public:
    BatchSampler() = default;
    BatchSampler(int n, Rng rng) : n_(n), rng_(std::move(rng)) {}

    std::vector<int> next(int batch) {
        std::vector<int> out;
        out.reserve(static_cast<size_t>(batch));
        for (int i = 0; i < batch; ++i) {
            if (pos_ >= static_cast<int>(order_.size())) {
                order_ = rng_.permutation(n_);
                pos_ = 0;
            }
            out.push_back(order_[static_cast<size_t>(pos_++)]);
        }
        return out;
    }

    Rng& rng() { return rng_; }

  private:
    int n_ = 0;
    Rng rng_{0};
    std::vector<int> order_;
    int pos_ = 0;
};

}  // namespace styleam
