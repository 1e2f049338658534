#include "canet/model.hpp"

#include <cmath>
#include <utility>

#include "canet/errors.hpp"
#include "canet/ops.hpp"

namespace canet {

Model build_model(const BackboneConfig& bcfg, const IomConfig& icfg, std::uint64_t init_seed) {
    Model model;
    model.backbone = bcfg;
    model.iom = icfg;
    if (icfg.channels != bcfg.embed_dim)
        throw ConfigError("iom channel width must match the comparison embed dim");
    Rng rng(derive_seed(init_seed, "init", 0));
    init_backbone_params(model.state, bcfg, rng);
    init_dcm_params(model.state, bcfg.embed_dim, rng);
    init_iom_params(model.state, icfg, rng);
    init_attention_params(model.state, bcfg.embed_dim, rng);
    model.state.set_trainable_prefix("backbone.", !bcfg.frozen);
    return model;
}

std::vector<Tensor> comparison_maps(const Model& model, const std::vector<SupportExample>& support,
                                    const Tensor& query_image, std::vector<Tensor>* concats_out) {
    if (support.empty()) throw EmptySupportError("episode has no support examples");
    const Tensor query_features =
        encode_comparison_features(extract_features(query_image, model.backbone, model.state), model.backbone,
                                   model.state);
    std::vector<Tensor> comps;
    comps.reserve(support.size());
    for (const SupportExample& s : support) {
        const Tensor vec = support_vector(s, model.backbone, model.state);
        Tensor cat = tile_and_concat(vec, query_features);
        comps.push_back(comparison_from_concat(cat, model.state));
        if (concats_out) concats_out->push_back(std::move(cat));
    }
    return comps;
}

int snap_scale_size(int native, double scale) {
    const long cells = std::lround(scale * native / kFeatureStride);
    const long snapped = std::max<long>(2, cells) * kFeatureStride;
    return static_cast<int>(std::max<long>(16, snapped));
}

namespace {

// Average the feature-grid maps of per-support chains at each iteration.
std::vector<Tensor> average_chains(const std::vector<std::vector<ConfidenceMap>>& chains) {
    std::vector<Tensor> out;
    const std::size_t steps = chains.front().size();
    for (std::size_t t = 0; t < steps; ++t) {
        std::vector<ConfidenceMap> at_t;
        at_t.reserve(chains.size());
        for (const auto& chain : chains) at_t.push_back(chain[t]);
        out.push_back(fuse_mask_avg(at_t).probs);
    }
    return out;
}

}  // namespace

EpisodePrediction predict_episode(const Model& model, const Episode& ep, const PredictOptions& opts) {
    NoGradGuard guard;
    if (ep.query_image.ndim() != 3) throw ShapeError("query image must be [3,H,W]");
    const int native_h = ep.query_image.dim(1);
    const int native_w = ep.query_image.dim(2);

    Tensor query = ep.query_image;
    if (opts.scale != 1.0) {
        const int run_h = snap_scale_size(native_h, opts.scale);
        const int run_w = snap_scale_size(native_w, opts.scale);
        if (run_h != native_h || run_w != native_w) query = ops::bilinear_resize(query, run_h, run_w);
    }

    std::vector<Tensor> concats;
    const std::vector<Tensor> comps = comparison_maps(model, ep.support, query, &concats);

    EpisodePrediction pred;
    Tensor final_map;  // fused feature-grid probs [2,h,w]

    switch (opts.fusion) {
        case FusionMode::Attention: {
            std::vector<double> lambdas;
            lambdas.reserve(concats.size());
            for (const Tensor& cat : concats) lambdas.push_back(attention_logit(cat, model.state).data()[0]);
            const AttentionWeights weights = normalize_weights(lambdas);
            pred.attention_weights = weights.normalized;
            const Tensor fused = fuse_attention(comps, weights);
            const std::vector<ConfidenceMap> maps = iterate(fused, opts.iterations, model.iom, model.state);
            for (const ConfidenceMap& m : maps) pred.iteration_probs.push_back(m.probs);
            final_map = maps.back().probs;
            pred.mask = predict_mask(maps.back(), native_h, native_w);
            break;
        }
        case FusionMode::FeatureAvg: {
            const Tensor fused = fuse_feature_avg(comps);
            const std::vector<ConfidenceMap> maps = iterate(fused, opts.iterations, model.iom, model.state);
            for (const ConfidenceMap& m : maps) pred.iteration_probs.push_back(m.probs);
            final_map = maps.back().probs;
            pred.mask = predict_mask(maps.back(), native_h, native_w);
            break;
        }
        case FusionMode::MaskAvg:
        case FusionMode::MaskOr: {
            std::vector<std::vector<ConfidenceMap>> chains;
            chains.reserve(comps.size());
            for (const Tensor& comp : comps) chains.push_back(iterate(comp, opts.iterations, model.iom, model.state));
            pred.iteration_probs = average_chains(chains);
            final_map = pred.iteration_probs.back();
            if (opts.fusion == FusionMode::MaskAvg) {
                pred.mask = predict_mask(ConfidenceMap{final_map}, native_h, native_w);
            } else {
                std::vector<BinaryMask> masks;
                masks.reserve(chains.size());
                for (const auto& chain : chains) masks.push_back(predict_mask(chain.back(), native_h, native_w));
                pred.mask = fuse_mask_or(masks);
            }
            break;
        }
    }

    pred.probs_full = ops::bilinear_resize(final_map, native_h, native_w);
    return pred;
}

}  // namespace canet
