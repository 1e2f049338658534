#pragma once

#include <functional>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "canet/config.hpp"
#include "canet/data.hpp"
#include "canet/model.hpp"

namespace canet {

// Majority vote over stride x stride blocks; a block is foreground when more
// than half of its pixels are.
BinaryMask majority_downsample(const BinaryMask& mask, int stride);

// Plain SGD with momentum and L2 weight decay. Velocities are keyed by
// parameter name so they can ride along in resumable checkpoints.
class SgdOptimizer {
public:
    SgdOptimizer(double lr, double momentum, double weight_decay)
        : lr_(lr), momentum_(momentum), weight_decay_(weight_decay) {}

    void step(ModelState& state);

    std::map<std::string, std::vector<double>>& velocities() { return velocities_; }
    const std::map<std::string, std::vector<double>>& velocities() const { return velocities_; }
    void drop_velocity_prefix(const std::string& prefix);

private:
    double lr_, momentum_, weight_decay_;
    std::map<std::string, std::vector<double>> velocities_;
};

struct StepResult {
    Tensor loss;     // scalar, graph attached
    Tensor new_map;  // detached [2,h,w] probs for the prediction cache
};

// One supervised episode: fused comparison features, whole-mask dropout on
// the cached previous prediction, a single IOM pass, cross entropy against
// the majority-downsampled query mask. Episodes with a class outside the
// training split are rejected (split hygiene).
StepResult training_step(Model& model, const ClassSplit& split, const Episode& ep, const Tensor* cached_map,
                         double p_r, Rng& dropout_rng);

struct TrainProgressEvent {
    std::string stage;  // "warmup" | "episodic"
    int epoch = 0;      // zero-based within the stage
    int epochs = 0;
    double loss = 0.0;
};
using TrainProgress = std::function<void(const TrainProgressEvent&)>;

struct TrainPaths {
    std::string checkpoint;  // final model; empty skips saving
    std::string loss_csv;    // per-epoch losses; empty skips writing
};

struct TrainResult {
    std::vector<double> warmup_losses;
    std::vector<double> epoch_losses;
};

// Two-stage run: supervised pixel-classification warm-up for the extractor
// over the training classes, then frozen-backbone episodic training. Pass a
// `resume_from` checkpoint written by train.save_every to continue a run
// bit-exactly.
TrainResult train(Model& model, const ClassSplit& split, const DatasetConfig& dcfg, const TrainConfig& tcfg,
                  const RunConfig& run_cfg, const TrainPaths& paths, const TrainProgress& progress = nullptr,
                  const std::string& resume_from = "");

}  // namespace canet
