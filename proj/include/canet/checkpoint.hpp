#pragma once

#include <map>
#include <string>

#include "canet/config.hpp"
#include "canet/model.hpp"

namespace canet {

// On-disk model snapshot: the full run config (so loading needs no side
// channel), every parameter tensor, and optional named extra tensors
// (trainer state for resumable checkpoints). Little-endian binary with a
// trailing checksum; any structural or checksum mismatch is a
// CheckpointError.
struct Checkpoint {
    RunConfig config;
    std::map<std::string, ModelState::Param> params;
    std::map<std::string, Tensor> extras;
};

void save_checkpoint(const std::string& path, const Model& model, const RunConfig& config,
                     const std::map<std::string, Tensor>& extras = {});

Checkpoint read_checkpoint(const std::string& path);

// Rebuilds the model from the embedded config and installs the stored
// parameters; names and shapes must match the rebuilt architecture exactly.
Model load_model(const std::string& path, RunConfig* config_out = nullptr,
                 std::map<std::string, Tensor>* extras_out = nullptr);

}  // namespace canet
