#include "canet/iom.hpp"

#include <algorithm>

namespace canet {

bool ConfidenceMap::is_empty() const {
    for (double v : probs.data())
        if (v != 0.0) return false;
    return true;
}

ConfidenceMap empty_confidence(int h, int w) { return ConfidenceMap{Tensor::zeros({2, h, w})}; }

void init_iom_params(ModelState& state, const IomConfig& cfg, Rng& rng) {
    const int d = cfg.channels;
    state.add("iom.fuse.conv1.w", he_conv_init({d, d + 2, 3, 3}, rng));
    state.add("iom.fuse.conv1.b", Tensor::zeros({d}));
    state.add("iom.fuse.conv2.w", he_conv_init({d, d, 3, 3}, rng));
    state.add("iom.fuse.conv2.b", Tensor::zeros({d}));
    for (int i = 0; i < cfg.num_vanilla_resblocks; ++i)
        init_residual_block_params(state, "iom.res" + std::to_string(i), d, d, 1, rng);
    for (std::size_t i = 0; i < cfg.aspp_rates.size(); ++i) {
        state.add("iom.aspp.branch" + std::to_string(i) + ".w", he_conv_init({d, d, 3, 3}, rng));
        state.add("iom.aspp.branch" + std::to_string(i) + ".b", Tensor::zeros({d}));
    }
    state.add("iom.aspp.image.w", he_conv_init({d, d, 1, 1}, rng));
    state.add("iom.aspp.image.b", Tensor::zeros({d}));
    const int fused_in = d * static_cast<int>(cfg.aspp_rates.size() + 1);
    state.add("iom.aspp.fuse.w", he_conv_init({d, fused_in, 1, 1}, rng));
    state.add("iom.aspp.fuse.b", Tensor::zeros({d}));
    state.add("iom.classify.w", he_conv_init({2, d, 1, 1}, rng));
    state.add("iom.classify.b", Tensor::zeros({2}));
}

Tensor residual_fuse(const Tensor& x, const ConfidenceMap& y_prev, const ModelState& state) {
    if (!y_prev.probs.defined() || y_prev.probs.ndim() != 3 || y_prev.probs.dim(0) != 2 ||
        y_prev.probs.dim(1) != x.dim(1) || y_prev.probs.dim(2) != x.dim(2))
        throw ShapeError("residual_fuse: previous mask shape does not match features " + shape_str(x.shape()));
    Tensor cat = ops::concat_channels(x, y_prev.probs);
    Tensor f = ops::relu(
        ops::conv2d(cat, Conv2dParams::make(state.get("iom.fuse.conv1.w"), state.get("iom.fuse.conv1.b"), 1, 1, 1)));
    f = ops::relu(
        ops::conv2d(f, Conv2dParams::make(state.get("iom.fuse.conv2.w"), state.get("iom.fuse.conv2.b"), 1, 1, 1)));
    return ops::add(x, f);
}

Tensor aspp(const Tensor& features, const IomConfig& cfg, const ModelState& state) {
    const int h = features.dim(1), w = features.dim(2);
    std::vector<Tensor> branches;
    branches.reserve(cfg.aspp_rates.size() + 1);
    for (std::size_t i = 0; i < cfg.aspp_rates.size(); ++i) {
        const int rate_h = std::max(1, std::min(cfg.aspp_rates[i], h - 1));
        const int rate_w = std::max(1, std::min(cfg.aspp_rates[i], w - 1));
        Conv2dParams p;
        p.weight = state.get("iom.aspp.branch" + std::to_string(i) + ".w");
        p.bias = state.get("iom.aspp.branch" + std::to_string(i) + ".b");
        p.stride = 1;
        p.dilation_h = rate_h;
        p.dilation_w = rate_w;
        p.pad_h = rate_h;
        p.pad_w = rate_w;
        branches.push_back(ops::relu(ops::conv2d(features, p)));
    }
    Tensor pooled = ops::reshape(ops::global_avg_pool(features), {features.dim(0), 1, 1});
    Tensor image_branch = ops::relu(ops::conv2d(
        pooled, Conv2dParams::make(state.get("iom.aspp.image.w"), state.get("iom.aspp.image.b"), 1, 1, 0)));
    branches.push_back(ops::bilinear_resize(image_branch, h, w));
    Tensor cat = ops::concat_channels(branches);
    return ops::relu(
        ops::conv2d(cat, Conv2dParams::make(state.get("iom.aspp.fuse.w"), state.get("iom.aspp.fuse.b"), 1, 1, 0)));
}

ConfidenceMap classify(const Tensor& features, const ModelState& state) {
    Tensor logits = ops::conv2d(
        features, Conv2dParams::make(state.get("iom.classify.w"), state.get("iom.classify.b"), 1, 1, 0));
    return ConfidenceMap{ops::softmax_channels(logits)};
}

ConfidenceMap iom_step(const Tensor& x, const ConfidenceMap& y_prev, const IomConfig& cfg, const ModelState& state) {
    Tensor m = residual_fuse(x, y_prev, state);
    for (int i = 0; i < cfg.num_vanilla_resblocks; ++i) m = residual_block(m, state, "iom.res" + std::to_string(i), 1, 1);
    return classify(aspp(m, cfg, state), state);
}

std::vector<ConfidenceMap> iterate(const Tensor& x, int iterations, const IomConfig& cfg, const ModelState& state) {
    if (iterations < 0) throw ConfigError("iteration count must be >= 0");
    std::vector<ConfidenceMap> maps;
    maps.reserve(static_cast<std::size_t>(iterations) + 1);
    maps.push_back(iom_step(x, empty_confidence(x.dim(1), x.dim(2)), cfg, state));
    for (int t = 0; t < iterations; ++t) maps.push_back(iom_step(x, maps.back(), cfg, state));
    return maps;
}

ConfidenceMap mask_dropout(const ConfidenceMap& y_prev, double p_r, Rng& rng) {
    const bool reset = rng.uniform() < p_r;
    if (reset) return empty_confidence(y_prev.height(), y_prev.width());
    return y_prev;
}

BinaryMask predict_mask(const ConfidenceMap& map, int out_h, int out_w) {
    return argmax_foreground(ops::bilinear_resize(map.probs, out_h, out_w));
}

}  // namespace canet
