#include "canet/image_io.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "canet/errors.hpp"

namespace canet {
namespace {

unsigned char quantize(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

void write_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw IoError("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move '" + tmp + "' to '" + path + "'");
}

std::string header(const char* magic, int w, int h, const std::string& comment) {
    std::ostringstream os;
    os << magic << "\n";
    if (!comment.empty()) os << "# " << comment << "\n";
    os << w << " " << h << "\n255\n";
    return os.str();
}

struct PnmHeader {
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    std::size_t data_offset = 0;
};

PnmHeader parse_header(const std::string& bytes, const std::string& path) {
    PnmHeader hd;
    std::size_t pos = 0;
    auto token = [&]() -> std::string {
        while (pos < bytes.size()) {
            if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        const std::size_t start = pos;
        while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
        if (start == pos) throw IoError("'" + path + "' has a truncated header");
        return bytes.substr(start, pos - start);
    };
    hd.magic = token();
    hd.w = std::stoi(token());
    hd.h = std::stoi(token());
    hd.maxval = std::stoi(token());
    if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos])))
        throw IoError("'" + path + "' has a malformed header");
    hd.data_offset = pos + 1;
    if (hd.w < 1 || hd.h < 1 || hd.maxval != 255) throw IoError("'" + path + "' has unsupported dimensions or depth");
    return hd;
}

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path + "'");
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

}  // namespace

void write_ppm(const std::string& path, const Tensor& image, const std::string& comment) {
    if (image.ndim() != 3 || image.dim(0) != 3)
        throw ShapeError("write_ppm expects a [3,H,W] tensor, got " + shape_str(image.shape()));
    const int h = image.dim(1), w = image.dim(2);
    std::string bytes = header("P6", w, h, comment);
    const std::vector<double>& d = image.data();
    const std::size_t plane = static_cast<std::size_t>(h) * w;
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c) bytes.push_back(static_cast<char>(quantize(d[c * plane + p])));
    write_atomic(path, bytes);
}

void write_pgm(const std::string& path, const Tensor& gray, const std::string& comment) {
    if (gray.ndim() != 2) throw ShapeError("write_pgm expects a [H,W] tensor, got " + shape_str(gray.shape()));
    const int h = gray.dim(0), w = gray.dim(1);
    std::string bytes = header("P5", w, h, comment);
    for (double v : gray.data()) bytes.push_back(static_cast<char>(quantize(v)));
    write_atomic(path, bytes);
}

void write_pgm(const std::string& path, const BinaryMask& mask, const std::string& comment) {
    std::string bytes = header("P5", mask.w, mask.h, comment);
    for (std::uint8_t v : mask.v) bytes.push_back(static_cast<char>(v ? 255 : 0));
    write_atomic(path, bytes);
}

Tensor read_ppm(const std::string& path) {
    const std::string bytes = slurp(path);
    const PnmHeader hd = parse_header(bytes, path);
    if (hd.magic != "P6") throw IoError("'" + path + "' is not a binary PPM");
    const std::size_t plane = static_cast<std::size_t>(hd.h) * hd.w;
    if (bytes.size() - hd.data_offset < plane * 3) throw IoError("'" + path + "' is truncated");
    std::vector<double> data(plane * 3);
    for (std::size_t p = 0; p < plane; ++p)
        for (int c = 0; c < 3; ++c)
            data[c * plane + p] =
                static_cast<unsigned char>(bytes[hd.data_offset + p * 3 + c]) / 255.0;
    return Tensor::from_data({3, hd.h, hd.w}, std::move(data));
}

BinaryMask read_pgm_mask(const std::string& path) {
    const std::string bytes = slurp(path);
    const PnmHeader hd = parse_header(bytes, path);
    if (hd.magic != "P5") throw IoError("'" + path + "' is not a binary PGM");
    const std::size_t plane = static_cast<std::size_t>(hd.h) * hd.w;
    if (bytes.size() - hd.data_offset < plane) throw IoError("'" + path + "' is truncated");
    BinaryMask mask(hd.h, hd.w);
    for (std::size_t p = 0; p < plane; ++p)
        mask.v[p] = static_cast<unsigned char>(bytes[hd.data_offset + p]) ? 1 : 0;
    return mask;
}

}  // namespace canet
