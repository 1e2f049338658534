#include "canet/fusion.hpp"

#include <algorithm>
#include <cmath>

#include "canet/ops.hpp"

namespace canet {

FusionMode parse_fusion_mode(const std::string& s) {
    if (s == "attention") return FusionMode::Attention;
    if (s == "feature_avg") return FusionMode::FeatureAvg;
    if (s == "mask_avg") return FusionMode::MaskAvg;
    if (s == "mask_or") return FusionMode::MaskOr;
    throw ConfigError("unknown fusion mode: " + s);
}

std::string fusion_mode_name(FusionMode m) {
    switch (m) {
        case FusionMode::Attention: return "attention";
        case FusionMode::FeatureAvg: return "feature_avg";
        case FusionMode::MaskAvg: return "mask_avg";
        case FusionMode::MaskOr: return "mask_or";
    }
    return "attention";
}

void init_attention_params(ModelState& state, int embed_dim, Rng& rng) {
    state.add("attention.conv1.w", he_conv_init({embed_dim, 2 * embed_dim, 3, 3}, rng));
    state.add("attention.conv1.b", Tensor::zeros({embed_dim}));
    state.add("attention.conv2.w", he_conv_init({1, embed_dim, 3, 3}, rng));
    state.add("attention.conv2.b", Tensor::zeros({1}));
}

Tensor attention_logit(const Tensor& concat_features, const ModelState& state) {
    Tensor z = ops::relu(ops::conv2d(
        concat_features, Conv2dParams::make(state.get("attention.conv1.w"), state.get("attention.conv1.b"), 1, 1, 1)));
    z = ops::max_pool2d(z, 3, 2);
    z = ops::conv2d(z, Conv2dParams::make(state.get("attention.conv2.w"), state.get("attention.conv2.b"), 1, 1, 1));
    return ops::global_avg_pool(z);
}

AttentionWeights normalize_weights(const std::vector<double>& lambdas) {
    if (lambdas.empty()) throw EmptySupportError("normalize_weights over an empty support set");
    AttentionWeights w;
    w.lambdas = lambdas;
    const double m = *std::max_element(lambdas.begin(), lambdas.end());
    double sum = 0.0;
    w.normalized.resize(lambdas.size());
    for (std::size_t i = 0; i < lambdas.size(); ++i) {
        w.normalized[i] = std::exp(lambdas[i] - m);
        sum += w.normalized[i];
    }
    for (auto& v : w.normalized) v /= sum;
    return w;
}

Tensor fuse_attention(const std::vector<Tensor>& features, const Tensor& weights) {
    return ops::weighted_sum(features, weights);
}

Tensor fuse_attention(const std::vector<Tensor>& features, const AttentionWeights& weights) {
    if (features.size() != weights.normalized.size()) throw ShapeError("fuse_attention weight count mismatch");
    Tensor w = Tensor::from_data({static_cast<int>(features.size())}, weights.normalized);
    return ops::weighted_sum(features, w);
}

Tensor fuse_feature_avg(const std::vector<Tensor>& features) {
    if (features.empty()) throw EmptySupportError("fuse_feature_avg over an empty support set");
    const int k = static_cast<int>(features.size());
    Tensor w = Tensor::full({k}, 1.0 / k);
    return ops::weighted_sum(features, w);
}

ConfidenceMap fuse_mask_avg(const std::vector<ConfidenceMap>& maps) {
    if (maps.empty()) throw EmptySupportError("fuse_mask_avg over an empty support set");
    const int k = static_cast<int>(maps.size());
    std::vector<Tensor> probs;
    probs.reserve(maps.size());
    for (const auto& m : maps) probs.push_back(m.probs);
    Tensor w = Tensor::full({k}, 1.0 / k);
    return ConfidenceMap{ops::weighted_sum(probs, w)};
}

BinaryMask fuse_mask_or(const std::vector<BinaryMask>& masks) {
    if (masks.empty()) throw EmptySupportError("fuse_mask_or over an empty support set");
    BinaryMask out = masks[0];
    for (std::size_t i = 1; i < masks.size(); ++i) {
        if (!masks[i].same_shape(out)) throw ShapeError("fuse_mask_or mask shape mismatch");
        for (std::size_t j = 0; j < out.v.size(); ++j) out.v[j] = out.v[j] || masks[i].v[j] ? 1 : 0;
    }
    return out;
}

}  // namespace canet
