#pragma once

#include <string>

#include "canet/mask.hpp"
#include "canet/tensor.hpp"

namespace canet {

// Binary PPM/PGM writers and readers used by the CLI artifacts. Values are
// clamped to [0,1] and quantized to 8 bits; writes go through a temp file and
// a rename so readers never see a partial file. The optional comment is
// embedded as a `#` header line.
void write_ppm(const std::string& path, const Tensor& image, const std::string& comment = "");  // [3,H,W]
void write_pgm(const std::string& path, const Tensor& gray, const std::string& comment = "");   // [H,W]
void write_pgm(const std::string& path, const BinaryMask& mask, const std::string& comment = "");

Tensor read_ppm(const std::string& path);      // -> [3,H,W] in [0,1]
BinaryMask read_pgm_mask(const std::string& path);  // nonzero bytes -> 1

}  // namespace canet
