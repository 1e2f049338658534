#pragma once

#include <vector>

#include "canet/mask.hpp"
#include "canet/tensor.hpp"

namespace canet {

// Convolution parameters. `make` covers the common square case; ASPP clamps
// dilation per axis on small maps, hence the split h/w fields.
struct Conv2dParams {
    Tensor weight;  // [out_ch, in_ch, kh, kw]
    Tensor bias;    // optional, [out_ch]; leave undefined for no bias
    int stride = 1;
    int dilation_h = 1;
    int dilation_w = 1;
    int pad_h = 0;
    int pad_w = 0;

    static Conv2dParams make(Tensor weight, Tensor bias, int stride, int dilation, int padding) {
        Conv2dParams p;
        p.weight = std::move(weight);
        p.bias = std::move(bias);
        p.stride = stride;
        p.dilation_h = p.dilation_w = dilation;
        p.pad_h = p.pad_w = padding;
        return p;
    }
};

namespace ops {

Tensor conv2d(const Tensor& input, const Conv2dParams& p);
Tensor max_pool2d(const Tensor& input, int window, int stride);
Tensor bilinear_resize(const Tensor& input, int out_h, int out_w);

Tensor relu(const Tensor& x);
Tensor add(const Tensor& a, const Tensor& b);
Tensor elementwise_mul(const Tensor& a, const Tensor& b);
Tensor concat_channels(const Tensor& a, const Tensor& b);
Tensor concat_channels(const std::vector<Tensor>& parts);

Tensor softmax_channels(const Tensor& x);
Tensor global_avg_pool(const Tensor& x);  // [C,H,W] -> [C]

// Mean over all locations of -log p[target class], probabilities clamped to
// [1e-7, 1] before the log. Gradient reaches the logits through the softmax
// node that produced `probs`.
Tensor cross_entropy_spatial(const Tensor& probs, const BinaryMask& target);

// Same loss against an arbitrary class-index map (row-major, one index per
// location, each in [0, C)).
Tensor cross_entropy_indices(const Tensor& probs, const std::vector<int>& target);

Tensor reshape(const Tensor& x, Shape shape);  // same numel, identity gradient
Tensor mul_spatial(const Tensor& features, const Tensor& mask_hw);  // [C,H,W] * [H,W]
Tensor sum_spatial(const Tensor& x);                                // [C,H,W] -> [C]
Tensor sum_all(const Tensor& x);                                    // -> [1]
Tensor div_by_scalar(const Tensor& x, const Tensor& s);             // s is [1]
Tensor tile_channels(const Tensor& vec, int h, int w);              // [D] -> [D,h,w]
Tensor scale(const Tensor& x, double factor);

// Softmax over k scalar tensors -> [k]; weighted reduction of k same-shape
// tensors by a [k] weight vector. Together these carry Eq.-style attention
// fusion with gradients to both features and logits.
Tensor softmax_stack(const std::vector<Tensor>& scalars);
Tensor weighted_sum(const std::vector<Tensor>& features, const Tensor& weights);

constexpr double kCrossEntropyClamp = 1e-7;

}  // namespace ops
}  // namespace canet
