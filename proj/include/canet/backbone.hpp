#pragma once

#include <array>
#include <string>

#include "canet/ops.hpp"
#include "canet/state.hpp"
#include "canet/tensor.hpp"

namespace canet {

// Stem + stages 1-2 halve the resolution three times in total.
inline constexpr int kFeatureStride = 8;

// Which backbone stages feed the comparison encoder.
enum class BlockMode { B2, B3, B4, B2B3, B3B4, B2B4, B2B3B4 };

BlockMode parse_block_mode(const std::string& s);
std::string block_mode_name(BlockMode m);
bool block_mode_uses(BlockMode m, int stage);  // stage in {2,3,4}

// Scaled-down residual extractor. Stem and stages 1-2 each stride 2, so
// everything from stage 2 on sits at 1/8 input resolution; stages 3-4 keep
// that resolution with dilations 2 and 4.
struct BackboneConfig {
    std::array<int, 4> stage_channels{8, 16, 32, 64};
    std::array<int, 4> blocks_per_stage{1, 1, 1, 1};
    int embed_dim = 32;
    int input_channels = 3;
    bool frozen = true;
    BlockMode blocks_mode = BlockMode::B2B3;

    int encoder_input_channels() const;
};

// Later stages are computed (and parameterized) only when the block mode
// reads them, directly or through a deeper stage.
struct StageFeatures {
    Tensor f2;  // stage-2 output, [C2, H/8, W/8]; always computed
    Tensor f3;  // stage-3 output; defined when the mode reads stage 3 or 4
    Tensor f4;  // stage-4 output; defined only when the mode reads stage 4
};

void init_backbone_params(ModelState& state, const BackboneConfig& cfg, Rng& rng);

StageFeatures extract_features(const Tensor& image, const BackboneConfig& cfg, const ModelState& state);

// concat of the selected stages -> 3x3 conv (pad 1) -> ReLU, embed_dim channels.
Tensor encode_comparison_features(const StageFeatures& features, const BackboneConfig& cfg, const ModelState& state);

// Residual block used by both the backbone and the IOM: two 3x3 convs with
// ReLUs and an additive skip (1x1 projection when shape changes).
Tensor residual_block(const Tensor& x, const ModelState& state, const std::string& prefix, int stride, int dilation);

void init_residual_block_params(ModelState& state, const std::string& prefix, int in_ch, int out_ch, int stride,
                                Rng& rng);

}  // namespace canet
