#pragma once

#include <cstdint>
#include <vector>

#include "canet/errors.hpp"
#include "canet/tensor.hpp"

namespace canet {

// Binary mask over an image or feature grid, values in {0,1}.
struct BinaryMask {
    int h = 0;
    int w = 0;
    std::vector<std::uint8_t> v;

    BinaryMask() = default;
    BinaryMask(int height, int width) : h(height), w(width), v(static_cast<std::size_t>(height) * width, 0) {}

    std::uint8_t at(int y, int x) const { return v[static_cast<std::size_t>(y) * w + x]; }
    std::uint8_t& at(int y, int x) { return v[static_cast<std::size_t>(y) * w + x]; }

    long count_foreground() const {
        long n = 0;
        for (auto p : v) n += p ? 1 : 0;
        return n;
    }

    bool same_shape(const BinaryMask& o) const { return h == o.h && w == o.w; }
};

// Mask as a [H,W] tensor (values 0.0/1.0), non-differentiable input.
Tensor mask_to_tensor(const BinaryMask& m);

// Per-pixel argmax of a 2-channel confidence tensor; ties go to background.
BinaryMask argmax_foreground(const Tensor& probs);

}  // namespace canet
