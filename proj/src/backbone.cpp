#include "canet/backbone.hpp"

namespace canet {

BlockMode parse_block_mode(const std::string& s) {
    if (s == "b2") return BlockMode::B2;
    if (s == "b3") return BlockMode::B3;
    if (s == "b4") return BlockMode::B4;
    if (s == "b2b3") return BlockMode::B2B3;
    if (s == "b3b4") return BlockMode::B3B4;
    if (s == "b2b4") return BlockMode::B2B4;
    if (s == "b2b3b4") return BlockMode::B2B3B4;
    throw ConfigError("unknown blocks mode: " + s);
}

std::string block_mode_name(BlockMode m) {
    switch (m) {
        case BlockMode::B2: return "b2";
        case BlockMode::B3: return "b3";
        case BlockMode::B4: return "b4";
        case BlockMode::B2B3: return "b2b3";
        case BlockMode::B3B4: return "b3b4";
        case BlockMode::B2B4: return "b2b4";
        case BlockMode::B2B3B4: return "b2b3b4";
    }
    return "b2b3";
}

bool block_mode_uses(BlockMode m, int stage) {
    switch (stage) {
        case 2: return m == BlockMode::B2 || m == BlockMode::B2B3 || m == BlockMode::B2B4 || m == BlockMode::B2B3B4;
        case 3: return m == BlockMode::B3 || m == BlockMode::B2B3 || m == BlockMode::B3B4 || m == BlockMode::B2B3B4;
        case 4: return m == BlockMode::B4 || m == BlockMode::B3B4 || m == BlockMode::B2B4 || m == BlockMode::B2B3B4;
        default: return false;
    }
}

int BackboneConfig::encoder_input_channels() const {
    int c = 0;
    if (block_mode_uses(blocks_mode, 2)) c += stage_channels[1];
    if (block_mode_uses(blocks_mode, 3)) c += stage_channels[2];
    if (block_mode_uses(blocks_mode, 4)) c += stage_channels[3];
    return c;
}

void init_residual_block_params(ModelState& state, const std::string& prefix, int in_ch, int out_ch, int stride,
                                Rng& rng) {
    state.add(prefix + ".conv1.w", he_conv_init({out_ch, in_ch, 3, 3}, rng));
    state.add(prefix + ".conv1.b", Tensor::zeros({out_ch}));
    state.add(prefix + ".conv2.w", he_conv_init({out_ch, out_ch, 3, 3}, rng));
    state.add(prefix + ".conv2.b", Tensor::zeros({out_ch}));
    if (stride != 1 || in_ch != out_ch) {
        state.add(prefix + ".proj.w", he_conv_init({out_ch, in_ch, 1, 1}, rng));
        state.add(prefix + ".proj.b", Tensor::zeros({out_ch}));
    }
}

Tensor residual_block(const Tensor& x, const ModelState& state, const std::string& prefix, int stride, int dilation) {
    auto conv = [&](const Tensor& in, const std::string& name, int s, int dil, int pad) {
        return ops::conv2d(in, Conv2dParams::make(state.get(prefix + name + ".w"), state.get(prefix + name + ".b"), s,
                                                  dil, pad));
    };
    Tensor h = ops::relu(conv(x, ".conv1", stride, dilation, dilation));
    Tensor h2 = conv(h, ".conv2", 1, dilation, dilation);
    Tensor skip = state.has(prefix + ".proj.w") ? conv(x, ".proj", stride, 1, 0) : x;
    return ops::relu(ops::add(h2, skip));
}

namespace {

constexpr std::array<int, 4> kStageStride{2, 2, 1, 1};
constexpr std::array<int, 4> kStageDilation{1, 1, 2, 4};

std::string stage_block_prefix(int stage, int block) {
    return "backbone.stage" + std::to_string(stage) + ".block" + std::to_string(block);
}

Tensor run_stage(const Tensor& in, const BackboneConfig& cfg, const ModelState& state, int stage) {
    Tensor x = in;
    for (int b = 0; b < cfg.blocks_per_stage[static_cast<std::size_t>(stage - 1)]; ++b) {
        const int stride = b == 0 ? kStageStride[static_cast<std::size_t>(stage - 1)] : 1;
        x = residual_block(x, state, stage_block_prefix(stage, b), stride, kStageDilation[static_cast<std::size_t>(stage - 1)]);
    }
    return x;
}

// Stages that sit after every feature the mode reads are never run, so they
// get no parameters either; every created parameter stays on a gradient path.
int last_backbone_stage(const BackboneConfig& cfg) {
    if (block_mode_uses(cfg.blocks_mode, 4)) return 4;
    if (block_mode_uses(cfg.blocks_mode, 3)) return 3;
    return 2;
}

}  // namespace

void init_backbone_params(ModelState& state, const BackboneConfig& cfg, Rng& rng) {
    state.add("backbone.stem.w", he_conv_init({cfg.stage_channels[0], cfg.input_channels, 3, 3}, rng));
    state.add("backbone.stem.b", Tensor::zeros({cfg.stage_channels[0]}));
    int in_ch = cfg.stage_channels[0];
    for (int stage = 1; stage <= last_backbone_stage(cfg); ++stage) {
        const int out_ch = cfg.stage_channels[static_cast<std::size_t>(stage - 1)];
        for (int b = 0; b < cfg.blocks_per_stage[static_cast<std::size_t>(stage - 1)]; ++b) {
            const int stride = b == 0 ? kStageStride[static_cast<std::size_t>(stage - 1)] : 1;
            init_residual_block_params(state, stage_block_prefix(stage, b), b == 0 ? in_ch : out_ch, out_ch, stride, rng);
        }
        in_ch = out_ch;
    }
    state.add("encoder.w", he_conv_init({cfg.embed_dim, cfg.encoder_input_channels(), 3, 3}, rng));
    state.add("encoder.b", Tensor::zeros({cfg.embed_dim}));
}

StageFeatures extract_features(const Tensor& image, const BackboneConfig& cfg, const ModelState& state) {
    if (image.ndim() != 3 || image.dim(0) != cfg.input_channels)
        throw ShapeError("extract_features expects [" + std::to_string(cfg.input_channels) + ",H,W], got " +
                         shape_str(image.shape()));
    const int h = image.dim(1), w = image.dim(2);
    if (h % 8 != 0 || w % 8 != 0 || h < 16 || w < 16)
        throw ShapeError("extract_features needs H,W divisible by 8 and >= 16, got " + shape_str(image.shape()));

    Tensor x = ops::relu(ops::conv2d(
        image, Conv2dParams::make(state.get("backbone.stem.w"), state.get("backbone.stem.b"), 2, 1, 1)));
    x = run_stage(x, cfg, state, 1);
    StageFeatures out;
    out.f2 = run_stage(x, cfg, state, 2);
    if (last_backbone_stage(cfg) >= 3) out.f3 = run_stage(out.f2, cfg, state, 3);
    if (last_backbone_stage(cfg) >= 4) out.f4 = run_stage(out.f3, cfg, state, 4);
    return out;
}

Tensor encode_comparison_features(const StageFeatures& features, const BackboneConfig& cfg, const ModelState& state) {
    std::vector<Tensor> parts;
    if (block_mode_uses(cfg.blocks_mode, 2)) parts.push_back(features.f2);
    if (block_mode_uses(cfg.blocks_mode, 3)) {
        if (!features.f3.defined()) throw ShapeError("blocks mode needs stage-3 features but none were extracted");
        parts.push_back(features.f3);
    }
    if (block_mode_uses(cfg.blocks_mode, 4)) {
        if (!features.f4.defined()) throw ShapeError("blocks mode needs stage-4 features but none were extracted");
        parts.push_back(features.f4);
    }
    Tensor cat = parts.size() == 1 ? parts[0] : ops::concat_channels(parts);
    return ops::relu(
        ops::conv2d(cat, Conv2dParams::make(state.get("encoder.w"), state.get("encoder.b"), 1, 1, 1)));
}

}  // namespace canet
