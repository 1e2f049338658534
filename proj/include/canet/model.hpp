#pragma once

#include <cstdint>
#include <vector>

#include "canet/backbone.hpp"
#include "canet/data.hpp"
#include "canet/dcm.hpp"
#include "canet/fusion.hpp"
#include "canet/iom.hpp"
#include "canet/state.hpp"

namespace canet {

struct Model {
    BackboneConfig backbone;
    IomConfig iom;
    ModelState state;
};

// Fresh parameters in a fixed order, so one seed pins every weight.
Model build_model(const BackboneConfig& bcfg, const IomConfig& icfg, std::uint64_t init_seed);

struct PredictOptions {
    FusionMode fusion = FusionMode::Attention;
    int iterations = 4;
    // Query-side scale; the run resolution snaps to a multiple of the feature
    // stride and outputs are resized back to the native query resolution.
    double scale = 1.0;
};

struct EpisodePrediction {
    BinaryMask mask;                        // final query mask, native resolution
    Tensor probs_full;                      // fused soft confidence [2,H,W], native resolution
    std::vector<Tensor> iteration_probs;    // T+1 fused feature-grid maps [2,h,w]
    std::vector<double> attention_weights;  // normalized; filled for attention fusion
};

// Per-support comparison maps against one query image; the query branch is
// extracted once and shared. Optionally also returns the tiled concat inputs
// (the attention branch reads those).
std::vector<Tensor> comparison_maps(const Model& model, const std::vector<SupportExample>& support,
                                    const Tensor& query_image, std::vector<Tensor>* concats_out = nullptr);

// Full inference for one episode (no autograd graph is built).
EpisodePrediction predict_episode(const Model& model, const Episode& ep, const PredictOptions& opts);

// Rescaled run size for a scale factor: nearest multiple of the feature
// stride, floored at the minimum legal input.
int snap_scale_size(int native, double scale);

}  // namespace canet
