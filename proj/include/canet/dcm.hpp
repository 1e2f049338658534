#pragma once

#include "canet/backbone.hpp"
#include "canet/mask.hpp"
#include "canet/ops.hpp"

namespace canet {

struct SupportExample {
    Tensor image;     // [3,H,W]
    BinaryMask mask;  // [H,W], same spatial dims as image
};

// Foreground-weighted global pooling: the full-resolution mask is bilinearly
// downsampled to the feature grid, multiplied in, then sum-pooled and divided
// by the summed mask weight. Soft downsampled values act as weights.
Tensor masked_average_pool(const Tensor& features, const BinaryMask& mask_full);

// Broadcast `vec` over the query grid and concatenate with query features.
Tensor tile_and_concat(const Tensor& vec, const Tensor& query_features);

// Pooled support embedding: extract -> encode -> masked pool.
Tensor support_vector(const SupportExample& support, const BackboneConfig& cfg, const ModelState& state);

// Comparison conv applied to the tiled-and-concatenated map.
Tensor comparison_from_concat(const Tensor& concat, const ModelState& state);

// Full DCM: both branches share the extractor weights; output is the dense
// comparison feature map [D, H/8, W/8].
Tensor dcm_forward(const SupportExample& support, const Tensor& query_image, const BackboneConfig& cfg,
                   const ModelState& state);

void init_dcm_params(ModelState& state, int embed_dim, Rng& rng);

constexpr double kMinForegroundWeight = 1e-6;

}  // namespace canet
