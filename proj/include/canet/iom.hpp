#pragma once

#include <vector>

#include "canet/backbone.hpp"
#include "canet/mask.hpp"
#include "canet/ops.hpp"
#include "canet/rng.hpp"

namespace canet {

// 2-channel per-location probability map; channel 0 background, 1 foreground.
// The all-zeros map is the designated "empty mask" fed to the first pass.
struct ConfidenceMap {
    Tensor probs;  // [2,h,w]

    bool is_empty() const;
    int height() const { return probs.dim(1); }
    int width() const { return probs.dim(2); }
};

ConfidenceMap empty_confidence(int h, int w);

struct IomConfig {
    int channels = 32;  // matches the comparison feature dim
    std::vector<int> aspp_rates{6, 12, 18};
    int num_vanilla_resblocks = 2;
    double p_r = 0.7;
    int inference_iterations = 4;
};

void init_iom_params(ModelState& state, const IomConfig& cfg, Rng& rng);

// M = x + F(x, y_prev): F concatenates the previous prediction and runs two
// 3x3 conv blocks; the skip keeps the first (empty-mask) pass on
// distribution.
Tensor residual_fuse(const Tensor& x, const ConfidenceMap& y_prev, const ModelState& state);

// Four parallel branches: three 3x3 convs at the configured atrous rates
// (clamped per axis to spatial_dim-1) plus a 1x1 conv on the pooled
// image-level feature upsampled back; concatenated and fused by a 1x1 conv.
Tensor aspp(const Tensor& features, const IomConfig& cfg, const ModelState& state);

ConfidenceMap classify(const Tensor& features, const ModelState& state);

ConfidenceMap iom_step(const Tensor& x, const ConfidenceMap& y_prev, const IomConfig& cfg, const ModelState& state);

// Initial prediction plus T refinements, all through the same weights.
std::vector<ConfidenceMap> iterate(const Tensor& x, int iterations, const IomConfig& cfg, const ModelState& state);

// Training-time whole-mask dropout: with probability p_r the previous
// prediction is replaced by the empty mask. Consumes exactly one rng draw.
ConfidenceMap mask_dropout(const ConfidenceMap& y_prev, double p_r, Rng& rng);

// Upsample to full resolution and take the per-pixel argmax; ties go to
// background.
BinaryMask predict_mask(const ConfidenceMap& map, int out_h, int out_w);

}  // namespace canet
