#pragma once

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "styleam/nn.hpp"

namespace styleam {

// Container format: 8-byte magic "SAMCKPT1", a little-endian uint64 with
// the JSON manifest size, the manifest, then one little-endian float32
// payload holding every parameter buffer (and Adam state, when present)
// concatenated in manifest order. The manifest records name, shape and
// byte offset of each buffer.
inline constexpr char kCheckpointMagic[8] = {'S', 'A', 'M', 'C', 'K', 'P', 'T', '1'};
inline constexpr int kCheckpointVersion = 1;

struct CheckpointMeta {
    int format_version = kCheckpointVersion;
    BackboneMode mode = BackboneMode::toy;
    AlignmentSpace alignment_space = AlignmentSpace::style;
    std::vector<int> stage_widths;
    int epoch = 0;
    std::string phase = "pretrain";  // "pretrain" | "uda"
    std::string config_digest;
    std::string config_json;  // full training config for resume/eval
    std::map<std::string, std::string> rng_streams;
};

void save_checkpoint(const std::string& path, ModelSet<float>& models, const CheckpointMeta& meta);

// Rebuilds the model set described by the checkpoint and restores every
// buffer bit-exactly.
CheckpointMeta load_checkpoint(const std::string& path, std::unique_ptr<ModelSet<float>>& models);

}  // namespace styleam
