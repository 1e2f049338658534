#include "canet/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string_view>

#include "canet/errors.hpp"

namespace canet {
namespace {

constexpr char kMagic[8] = {'C', 'A', 'N', 'E', 'T', 'C', 'K', '1'};
constexpr std::uint32_t kVersion = 1;

void append_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void append_f64(std::string& buf, double d) {
    std::uint64_t bits;
    std::memcpy(&bits, &d, sizeof(bits));
    append_u64(buf, bits);
}

void append_str(std::string& buf, const std::string& s) {
    append_u32(buf, static_cast<std::uint32_t>(s.size()));
    buf.append(s);
}

void append_tensor(std::string& buf, const Tensor& t) {
    buf.push_back(static_cast<char>(t.ndim()));
    for (int d = 0; d < t.ndim(); ++d) append_u64(buf, static_cast<std::uint64_t>(t.dim(d)));
    for (double v : t.data()) append_f64(buf, v);
}

class Reader {
public:
    Reader(const std::string& buf, const std::string& path) : buf_(buf), path_(path) {}

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }

    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }

    double f64() {
        const std::uint64_t bits = u64();
        double d;
        std::memcpy(&d, &bits, sizeof(d));
        return d;
    }

    std::string str() {
        const std::uint32_t n = u32();
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    unsigned char byte() {
        need(1);
        return static_cast<unsigned char>(buf_[pos_++]);
    }

    Tensor tensor() {
        const int ndim = static_cast<int>(byte());
        if (ndim < 1 || ndim > 4) throw CheckpointError("checkpoint '" + path_ + "' has a tensor with bad rank");
        Shape shape;
        std::size_t numel = 1;
        for (int d = 0; d < ndim; ++d) {
            const std::uint64_t dim = u64();
            if (dim == 0 || dim > (1u << 24)) throw CheckpointError("checkpoint '" + path_ + "' has a bad tensor dim");
            shape.push_back(static_cast<int>(dim));
            numel *= static_cast<std::size_t>(dim);
        }
        std::vector<double> data(numel);
        for (std::size_t i = 0; i < numel; ++i) data[i] = f64();
        return Tensor::from_data(shape, std::move(data));
    }

    std::size_t pos() const { return pos_; }

private:
    void need(std::size_t n) {
        if (pos_ + n > buf_.size()) throw CheckpointError("checkpoint '" + path_ + "' is truncated");
    }
    const std::string& buf_;
    const std::string path_;
    std::size_t pos_ = 0;
};

}  // namespace

void save_checkpoint(const std::string& path, const Model& model, const RunConfig& config,
                     const std::map<std::string, Tensor>& extras) {
    std::string buf;
    buf.append(kMagic, sizeof(kMagic));
    append_u32(buf, kVersion);
    append_u64(buf, config.fingerprint());
    append_str(buf, config.to_text());

    append_u32(buf, static_cast<std::uint32_t>(model.state.size()));
    for (const auto& [name, param] : model.state.params()) {
        append_str(buf, name);
        buf.push_back(param.trainable ? 1 : 0);
        append_tensor(buf, param.tensor);
    }

    append_u32(buf, static_cast<std::uint32_t>(extras.size()));
    for (const auto& [name, tensor] : extras) {
        append_str(buf, name);
        append_tensor(buf, tensor);
    }

    append_u64(buf, fnv1a_64(std::string_view(buf)));

    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + tmp + "' for writing");
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw IoError("short write to '" + tmp + "'");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move '" + tmp + "' to '" + path + "'");
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (buf.size() < sizeof(kMagic) + 4 + 8 || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0)
        throw CheckpointError("'" + path + "' is not a canet checkpoint");
    const std::uint64_t stored_sum = [&] {
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[buf.size() - 8 + i])) << (8 * i);
        return v;
    }();
    const std::string_view payload(buf.data(), buf.size() - 8);
    if (fnv1a_64(payload) != stored_sum)
        throw CheckpointError("checkpoint '" + path + "' failed its checksum (corrupt or truncated)");

    Reader r(buf, path);
    for (int i = 0; i < 8; ++i) r.byte();  // magic, already verified
    const std::uint32_t version = r.u32();
    if (version != kVersion)
        throw CheckpointError("checkpoint '" + path + "' has unsupported version " + std::to_string(version));
    const std::uint64_t fingerprint = r.u64();

    Checkpoint ck;
    ck.config = RunConfig::from_text(r.str());
    if (ck.config.fingerprint() != fingerprint)
        throw CheckpointError("checkpoint '" + path + "' config does not match its fingerprint");

    const std::uint32_t num_params = r.u32();
    for (std::uint32_t i = 0; i < num_params; ++i) {
        const std::string name = r.str();
        ModelState::Param p;
        p.trainable = r.byte() != 0;
        p.tensor = r.tensor();
        if (!ck.params.emplace(name, std::move(p)).second)
            throw CheckpointError("checkpoint '" + path + "' repeats parameter '" + name + "'");
    }

    const std::uint32_t num_extras = r.u32();
    for (std::uint32_t i = 0; i < num_extras; ++i) {
        const std::string name = r.str();
        ck.extras.emplace(name, r.tensor());
    }

    if (r.pos() != buf.size() - 8) throw CheckpointError("checkpoint '" + path + "' has trailing bytes");
    return ck;
}

Model load_model(const std::string& path, RunConfig* config_out, std::map<std::string, Tensor>* extras_out) {
    Checkpoint ck = read_checkpoint(path);
    Model model = build_model(make_backbone_config(ck.config), make_iom_config(ck.config),
                              ck.config.get_u64("init.seed"));

    if (ck.params.size() != model.state.size())
        throw CheckpointError("checkpoint '" + path + "' stores " + std::to_string(ck.params.size()) +
                              " parameters but the configured model has " + std::to_string(model.state.size()));
    for (auto& [name, param] : model.state.params()) {
        auto it = ck.params.find(name);
        if (it == ck.params.end())
            throw CheckpointError("checkpoint '" + path + "' is missing parameter '" + name + "'");
        if (it->second.tensor.shape() != param.tensor.shape())
            throw CheckpointError("checkpoint '" + path + "' parameter '" + name + "' has a mismatched shape");
        param.tensor = it->second.tensor;
        param.trainable = it->second.trainable;
        param.tensor.set_requires_grad(param.trainable);
    }

    if (config_out) *config_out = ck.config;
    if (extras_out) *extras_out = std::move(ck.extras);
    return model;
}

}  // namespace canet
