#include "styleam/data.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "styleam/image_io.hpp"

namespace styleam {

namespace {

std::string strip(const std::string& s) {
    size_t a = s.find_first_not_of(" \t\r\n");
    if (a == std::string::npos) return "";
    size_t b = s.find_last_not_of(" \t\r\n");
    return s.substr(a, b - a + 1);
}

}  // namespace

Manifest load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest not found: " + path);
    Manifest m;
    m.dir = std::filesystem::absolute(std::filesystem::path(path)).parent_path();

    std::string line;
    int lineno = 0;
    bool has_score_col = false;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string t = strip(line);
        if (t.empty()) continue;
        if (lineno == 1) {
            if (t == "path,score")
                has_score_col = true;
            else if (t == "path")
                has_score_col = false;
            else
                throw IoError(path + ":1: expected header \"path,score\" or \"path\", got \"" + t +
                              "\"");
            continue;
        }
        ManifestRecord rec;
        const size_t comma = t.find(',');
        std::string p = comma == std::string::npos ? t : t.substr(0, comma);
        std::string score = comma == std::string::npos ? "" : strip(t.substr(comma + 1));
        p = strip(p);
        if (p.empty()) throw IoError(path + ":" + std::to_string(lineno) + ": empty path");
        if (!has_score_col && comma != std::string::npos)
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": unexpected second column under header \"path\"");
        if (!score.empty()) {
            try {
                size_t used = 0;
                rec.raw_score = std::stod(score, &used);
                if (used != score.size()) throw std::invalid_argument("trailing junk");
            } catch (const std::exception&) {
                throw IoError(path + ":" + std::to_string(lineno) + ": non-numeric score \"" +
                              score + "\"");
            }
        }
        std::filesystem::path img(p);
        if (img.is_relative()) img = m.dir / img;
        if (!std::filesystem::exists(img))
            throw IoError(path + ":" + std::to_string(lineno) +
                          ": image path does not exist: " + img.string());
        rec.path = img.string();
        m.records.push_back(std::move(rec));
    }
    if (m.records.empty()) throw IoError("manifest has no records: " + path);
    return m;
}

double rescale_score(double raw, ScoreConvention conv, double lo, double hi) {
    if (!(lo < hi)) throw ConfigError("rescale_score: degenerate raw_range [lo,hi)");
    const double y = conv == ScoreConvention::mos_higher_better ? 5.0 * (raw - lo) / (hi - lo)
                                                                : 5.0 * (hi - raw) / (hi - lo);
    return std::clamp(y, 0.0, 5.0);
}

std::vector<double> rescale_scores(const std::vector<double>& raw, ScoreConvention conv, double lo,
                                   double hi) {
    std::vector<double> out(raw.size());
    for (size_t i = 0; i < raw.size(); ++i) out[i] = rescale_score(raw[i], conv, lo, hi);
    return out;
}

Tensor<float> preprocess(const Tensor<float>& image, PreprocessMode mode, int crop, Rng* rng) {
    if (image.rank() != 3 || image.dim(0) != 3)
        throw ShapeError("preprocess: expected (3,H,W), got " + image.shape_str());
    const int h = image.dim(1), w = image.dim(2);
    if (h < crop || w < crop)
        throw InputError("preprocess: image " + image.shape_str() + " smaller than crop " +
                         std::to_string(crop));
    int r0 = 0, c0 = 0;
    bool flip = false;
    if (mode == PreprocessMode::train) {
        if (rng == nullptr) throw InputError("preprocess: train mode requires an rng");
        r0 = static_cast<int>(rng->uniform_int(h - crop + 1));
        c0 = static_cast<int>(rng->uniform_int(w - crop + 1));
        flip = rng->coin(0.5);
    } else {
        r0 = (h - crop) / 2;
        c0 = (w - crop) / 2;
    }
    Tensor<float> out({3, crop, crop});
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < crop; ++y) {
            const float* src = image.data() + (static_cast<size_t>(c) * h + r0 + y) * w + c0;
            float* dst = out.data() + (static_cast<size_t>(c) * crop + y) * crop;
            if (flip)
                for (int x = 0; x < crop; ++x) dst[x] = src[crop - 1 - x];
            else
                std::copy(src, src + crop, dst);
        }
    return out;
}

Dataset Dataset::load(const Manifest& m, ScoreConvention conv, double lo, double hi, int crop,
                      bool require_scores) {
    if (require_scores && !m.fully_labeled())
        throw ConfigError("dataset requires scores but the manifest has unlabeled records");
    Dataset d;
    const bool keep_scores = m.fully_labeled();
    for (const auto& rec : m.records) {
        Tensor<float> img = to_float_chw(read_png_rgb8(rec.path));
        if (img.dim(1) < crop || img.dim(2) < crop)
            throw InputError("image smaller than crop " + std::to_string(crop) + ": " + rec.path);
        d.images_.push_back(std::move(img));
        d.paths_.push_back(rec.path);
        if (keep_scores) d.scores_.push_back(rescale_score(*rec.raw_score, conv, lo, hi));
    }
    return d;
}

}  // namespace styleam
