#include "canet/dcm.hpp"

namespace canet {

Tensor masked_average_pool(const Tensor& features, const BinaryMask& mask_full) {
    if (features.ndim() != 3) throw ShapeError("masked_average_pool expects [D,h,w] features");
    const int h = features.dim(1), w = features.dim(2);

    Tensor mask = ops::reshape(mask_to_tensor(mask_full), {1, mask_full.h, mask_full.w});
    if (mask_full.h != h || mask_full.w != w) mask = ops::bilinear_resize(mask, h, w);
    mask = ops::reshape(mask, {h, w});

    Tensor weight = ops::sum_all(mask);
    if (weight.data()[0] < kMinForegroundWeight)
        throw EmptyForegroundError("support mask has no foreground after downsampling to " + std::to_string(h) + "x" +
                                   std::to_string(w));
    Tensor pooled = ops::sum_spatial(ops::mul_spatial(features, mask));
    return ops::div_by_scalar(pooled, weight);
}

Tensor tile_and_concat(const Tensor& vec, const Tensor& query_features) {
    if (vec.ndim() != 1) throw ShapeError("tile_and_concat expects a [D] vector");
    if (query_features.ndim() != 3 || query_features.dim(0) != vec.dim(0))
        throw ShapeError("tile_and_concat dim mismatch: vec " + shape_str(vec.shape()) + " vs query " +
                         shape_str(query_features.shape()));
    Tensor tiled = ops::tile_channels(vec, query_features.dim(1), query_features.dim(2));
    return ops::concat_channels(tiled, query_features);
}

Tensor support_vector(const SupportExample& support, const BackboneConfig& cfg, const ModelState& state) {
    if (support.mask.h != support.image.dim(1) || support.mask.w != support.image.dim(2))
        throw ShapeError("support mask dims do not match support image");
    Tensor feat = encode_comparison_features(extract_features(support.image, cfg, state), cfg, state);
    return masked_average_pool(feat, support.mask);
}

Tensor comparison_from_concat(const Tensor& concat, const ModelState& state) {
    return ops::relu(
        ops::conv2d(concat, Conv2dParams::make(state.get("dcm.compare.w"), state.get("dcm.compare.b"), 1, 1, 1)));
}

Tensor dcm_forward(const SupportExample& support, const Tensor& query_image, const BackboneConfig& cfg,
                   const ModelState& state) {
    Tensor vec = support_vector(support, cfg, state);
    Tensor query_feat = encode_comparison_features(extract_features(query_image, cfg, state), cfg, state);
    return comparison_from_concat(tile_and_concat(vec, query_feat), state);
}

void init_dcm_params(ModelState& state, int embed_dim, Rng& rng) {
    state.add("dcm.compare.w", he_conv_init({embed_dim, 2 * embed_dim, 3, 3}, rng));
    state.add("dcm.compare.b", Tensor::zeros({embed_dim}));
}

}  // namespace canet
