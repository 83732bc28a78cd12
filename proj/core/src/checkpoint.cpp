#include "styleam/checkpoint.hpp"

#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace styleam {

using json = nlohmann::json;

BackboneMode parse_backbone_mode(const std::string& s) {
    if (s == "toy") return BackboneMode::toy;
    if (s == "full") return BackboneMode::full;
    throw ConfigError("mode must be \"toy\" or \"full\", got \"" + s + "\"");
}

AlignmentSpace parse_alignment_space(const std::string& s) {
    if (s == "style") return AlignmentSpace::style;
    if (s == "feature") return AlignmentSpace::feature;
    if (s == "none") return AlignmentSpace::none;
    throw ConfigError("alignment_space must be style|feature|none, got \"" + s + "\"");
}

MixupMode parse_mixup_mode(const std::string& s) {
    if (s == "style_mixup") return MixupMode::style_mixup;
    if (s == "feature_mixup") return MixupMode::feature_mixup;
    if (s == "mixstyle_no_label") return MixupMode::mixstyle_no_label;
    if (s == "none") return MixupMode::none;
    throw ConfigError("mixup_mode must be style_mixup|feature_mixup|mixstyle_no_label|none, got \"" +
                      s + "\"");
}

namespace {

void append_floats(std::vector<float>& payload, const Tensor<float>& t) {
    payload.insert(payload.end(), t.vec().begin(), t.vec().end());
}

}  // namespace

void save_checkpoint(const std::string& path, ModelSet<float>& models, const CheckpointMeta& meta) {
    json man;
    man["format_version"] = meta.format_version;
    man["mode"] = to_string(meta.mode);
    man["alignment_space"] = to_string(meta.alignment_space);
    man["stage_widths"] = models.backbone.widths();
    man["epoch"] = meta.epoch;
    man["phase"] = meta.phase;
    man["config_digest"] = meta.config_digest;
    if (!meta.config_json.empty()) man["config"] = json::parse(meta.config_json);
    man["rng_streams"] = meta.rng_streams;

    std::vector<float> payload;
    json params = json::array();
    for (Parameter<float>* p : models.params()) {
        json e;
        e["name"] = p->name;
        e["shape"] = p->value.shape();
        e["offset"] = payload.size() * sizeof(float);
        e["trainable"] = p->trainable;
        append_floats(payload, p->value);
        if (p->trainable && !p->adam_m.empty()) {
            e["adam_t"] = p->adam_t;
            e["adam_m_offset"] = payload.size() * sizeof(float);
            append_floats(payload, p->adam_m);
            e["adam_v_offset"] = payload.size() * sizeof(float);
            append_floats(payload, p->adam_v);
        }
        params.push_back(std::move(e));
    }
    man["params"] = std::move(params);
    man["payload_floats"] = payload.size();

    const std::string text = man.dump();
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open checkpoint for writing: " + path);
    out.write(kCheckpointMagic, sizeof(kCheckpointMagic));
    const uint64_t len = text.size();
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    out.write(reinterpret_cast<const char*>(payload.data()),
              static_cast<std::streamsize>(payload.size() * sizeof(float)));
    if (!out) throw IoError("checkpoint write failed: " + path);
}

CheckpointMeta load_checkpoint(const std::string& path, std::unique_ptr<ModelSet<float>>& models) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint not found: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kCheckpointMagic, sizeof(magic)) != 0)
        throw IoError("not a checkpoint file (bad magic): " + path);
    uint64_t len = 0;
    in.read(reinterpret_cast<char*>(&len), sizeof(len));
    std::string text(len, '\0');
    in.read(text.data(), static_cast<std::streamsize>(len));
    if (!in) throw IoError("truncated checkpoint manifest: " + path);

    json man;
    try {
        man = json::parse(text);
    } catch (const json::exception& e) {
        throw IoError("bad checkpoint manifest in " + path + ": " + e.what());
    }

    CheckpointMeta meta;
    meta.format_version = man.at("format_version").get<int>();
    if (meta.format_version != kCheckpointVersion)
        throw IoError("unsupported checkpoint format version in " + path);
    meta.mode = parse_backbone_mode(man.at("mode").get<std::string>());
    meta.alignment_space = parse_alignment_space(man.at("alignment_space").get<std::string>());
    meta.stage_widths = man.at("stage_widths").get<std::vector<int>>();
    meta.epoch = man.at("epoch").get<int>();
    meta.phase = man.at("phase").get<std::string>();
    meta.config_digest = man.value("config_digest", "");
    if (man.contains("config")) meta.config_json = man["config"].dump();
    if (man.contains("rng_streams"))
        meta.rng_streams = man["rng_streams"].get<std::map<std::string, std::string>>();

    const uint64_t payload_floats = man.at("payload_floats").get<uint64_t>();
    std::vector<float> payload(payload_floats);
    in.read(reinterpret_cast<char*>(payload.data()),
            static_cast<std::streamsize>(payload_floats * sizeof(float)));
    if (!in) throw IoError("truncated checkpoint payload: " + path);

    models = std::make_unique<ModelSet<float>>(meta.mode, meta.alignment_space, Rng(0));
    if (models->backbone.widths() != meta.stage_widths)
        throw IoError("checkpoint stage widths do not match the model architecture: " + path);

    auto read_buf = [&](uint64_t byte_offset, Tensor<float>& dst) {
        const uint64_t o = byte_offset / sizeof(float);
        if (byte_offset % sizeof(float) != 0 || o + static_cast<uint64_t>(dst.size()) > payload.size())
            throw IoError("checkpoint buffer out of range: " + path);
        std::copy(payload.begin() + static_cast<int64_t>(o),
                  payload.begin() + static_cast<int64_t>(o) + dst.size(), dst.vec().begin());
    };

    size_t matched = 0;
    for (const auto& e : man.at("params")) {
        const std::string name = e.at("name").get<std::string>();
        Parameter<float>* p = models->find(name);
        if (p == nullptr) throw IoError("checkpoint has unknown parameter \"" + name + "\"");
        const std::vector<int> shape = e.at("shape").get<std::vector<int>>();
        if (shape != p->value.shape())
            throw IoError("checkpoint shape mismatch for \"" + name + "\"");
        read_buf(e.at("offset").get<uint64_t>(), p->value);
        if (e.contains("adam_m_offset")) {
            p->adam_t = e.at("adam_t").get<int64_t>();
            p->adam_m = Tensor<float>(p->value.shape());
            p->adam_v = Tensor<float>(p->value.shape());
            read_buf(e.at("adam_m_offset").get<uint64_t>(), p->adam_m);
            read_buf(e.at("adam_v_offset").get<uint64_t>(), p->adam_v);
        }
        ++matched;
    }
    if (matched != models->params().size())
        throw IoError("checkpoint is missing parameters (" + std::to_string(matched) + "/" +
                      std::to_string(models->params().size()) + "): " + path);
    return meta;
}

}  // namespace styleam
