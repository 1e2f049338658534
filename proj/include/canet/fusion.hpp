#pragma once

#include <string>
#include <vector>

#include "canet/iom.hpp"
#include "canet/mask.hpp"
#include "canet/state.hpp"

namespace canet {

enum class FusionMode { Attention, FeatureAvg, MaskAvg, MaskOr };

FusionMode parse_fusion_mode(const std::string& s);
std::string fusion_mode_name(FusionMode m);

struct AttentionWeights {
    std::vector<double> lambdas;
    std::vector<double> normalized;
};

void init_attention_params(ModelState& state, int embed_dim, Rng& rng);

// Attention branch on the tiled-and-concatenated comparison input:
// 3x3 conv block -> 3x3 max pool (stride 2) -> 3x3 conv to one channel ->
// global average pool. Returns the scalar logit as a [1] tensor.
Tensor attention_logit(const Tensor& concat_features, const ModelState& state);

// Softmax over raw lambdas, max-subtracted for stability.
AttentionWeights normalize_weights(const std::vector<double>& lambdas);

Tensor fuse_attention(const std::vector<Tensor>& features, const Tensor& weights);
Tensor fuse_attention(const std::vector<Tensor>& features, const AttentionWeights& weights);
Tensor fuse_feature_avg(const std::vector<Tensor>& features);
ConfidenceMap fuse_mask_avg(const std::vector<ConfidenceMap>& maps);
BinaryMask fuse_mask_or(const std::vector<BinaryMask>& masks);

}  // namespace canet
