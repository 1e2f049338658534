#include "canet/config.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "canet/errors.hpp"

namespace canet {
namespace {

const std::map<std::string, std::string>& default_values() {
    static const std::map<std::string, std::string> defaults = {
        {"dataset.num_classes", "16"},
        {"dataset.num_splits", "4"},
        {"dataset.test_split_index", "0"},
        {"dataset.image_size", "64"},
        {"dataset.min_object_area", "16"},
        {"dataset.max_object_area_frac", "0.6"},
        {"dataset.max_classes_per_scene", "3"},
        {"dataset.noise", "0.05"},
        {"backbone.embed_dim", "32"},
        {"backbone.blocks", "b2b3"},
        {"backbone.stage_channels", "8,16,32,64"},
        {"backbone.blocks_per_stage", "1,1,1,1"},
        {"iom.p_r", "0.7"},
        {"iom.resblocks", "2"},
        {"iom.aspp_rates", "6,12,18"},
        {"init.seed", "1234"},
        {"train.seed", "7"},
        {"train.epochs", "60"},
        {"train.episodes_per_epoch", "400"},
        {"train.batch_episodes", "4"},
        {"train.lr", "0.0025"},
        {"train.momentum", "0.9"},
        {"train.weight_decay", "0.0005"},
        {"train.k", "1"},
        {"train.annotation", "pixel"},
        {"train.warmup_epochs", "6"},
        {"train.warmup_scenes_per_epoch", "400"},
        {"train.save_every", "0"},
        {"eval.k", "1"},
        {"eval.fusion", "attention"},
        {"eval.annotation", "pixel"},
        {"eval.scales", "1"},
        {"eval.iterations", "4"},
        {"eval.episodes", "500"},
        {"eval.seed", "2026"},
        {"eval.phase", "test"},
    };
    return defaults;
}

std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

}  // namespace

RunConfig::RunConfig() : values_(default_values()) {}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream buf;
    buf << in.rdbuf();
    return from_text(buf.str());
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped[0] == '#') continue;
        const std::size_t eq = stripped.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + " is not key=value: '" + stripped + "'");
        cfg.set(trim(stripped.substr(0, eq)), trim(stripped.substr(eq + 1)));
    }
    return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    it->second = value;
}

const std::string& RunConfig::get(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
    return it->second;
}

int RunConfig::get_int(const std::string& key) const {
    const std::string& v = get(key);
    char* end = nullptr;
    const long n = std::strtol(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "' expects an integer, got '" + v + "'");
    return static_cast<int>(n);
}

std::uint64_t RunConfig::get_u64(const std::string& key) const {
    const std::string& v = get(key);
    char* end = nullptr;
    const unsigned long long n = std::strtoull(v.c_str(), &end, 10);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "' expects an unsigned integer, got '" + v + "'");
    return static_cast<std::uint64_t>(n);
}

double RunConfig::get_double(const std::string& key) const {
    const std::string& v = get(key);
    char* end = nullptr;
    const double x = std::strtod(v.c_str(), &end);
    if (end == v.c_str() || *end != '\0')
        throw ConfigError("config key '" + key + "' expects a number, got '" + v + "'");
    return x;
}

std::vector<int> RunConfig::get_int_list(const std::string& key) const {
    std::vector<int> out;
    const std::string& v = get(key);
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        char* end = nullptr;
        const std::string t = trim(item);
        const long n = std::strtol(t.c_str(), &end, 10);
        if (end == t.c_str() || *end != '\0')
            throw ConfigError("config key '" + key + "' expects integers, got '" + v + "'");
        out.push_back(static_cast<int>(n));
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' expects a non-empty list");
    return out;
}

std::vector<double> RunConfig::get_double_list(const std::string& key) const {
    std::vector<double> out;
    const std::string& v = get(key);
    std::istringstream in(v);
    std::string item;
    while (std::getline(in, item, ',')) {
        char* end = nullptr;
        const std::string t = trim(item);
        const double x = std::strtod(t.c_str(), &end);
        if (end == t.c_str() || *end != '\0')
            throw ConfigError("config key '" + key + "' expects numbers, got '" + v + "'");
        out.push_back(x);
    }
    if (out.empty()) throw ConfigError("config key '" + key + "' expects a non-empty list");
    return out;
}

std::string RunConfig::to_text() const {
    std::ostringstream os;
    for (const auto& [k, v] : values_) os << k << "=" << v << "\n";  // std::map is already sorted
    return os.str();
}

std::uint64_t RunConfig::fingerprint() const { return fnv1a_64(to_text()); }

DatasetConfig make_dataset_config(const RunConfig& cfg) {
    DatasetConfig d;
    d.num_classes = cfg.get_int("dataset.num_classes");
    d.num_splits = cfg.get_int("dataset.num_splits");
    d.test_split_index = cfg.get_int("dataset.test_split_index");
    d.image_size = cfg.get_int("dataset.image_size");
    d.min_object_area = cfg.get_int("dataset.min_object_area");
    d.max_object_area_frac = cfg.get_double("dataset.max_object_area_frac");
    d.max_classes_per_scene = cfg.get_int("dataset.max_classes_per_scene");
    d.noise = cfg.get_double("dataset.noise");
    if (d.image_size < 16 || d.image_size % kFeatureStride != 0)
        throw ConfigError("dataset.image_size must be a multiple of 8, at least 16");
    if (d.max_classes_per_scene < 1) throw ConfigError("dataset.max_classes_per_scene must be >= 1");
    if (d.min_object_area < 1) throw ConfigError("dataset.min_object_area must be >= 1");
    if (d.max_object_area_frac <= 0.0 || d.max_object_area_frac > 1.0)
        throw ConfigError("dataset.max_object_area_frac must be in (0,1]");
    if (d.noise < 0.0) throw ConfigError("dataset.noise must be >= 0");
    return d;
}

BackboneConfig make_backbone_config(const RunConfig& cfg) {
    BackboneConfig b;
    b.embed_dim = cfg.get_int("backbone.embed_dim");
    b.blocks_mode = parse_block_mode(cfg.get("backbone.blocks"));
    const std::vector<int> channels = cfg.get_int_list("backbone.stage_channels");
    const std::vector<int> blocks = cfg.get_int_list("backbone.blocks_per_stage");
    if (channels.size() != 4) throw ConfigError("backbone.stage_channels expects exactly 4 values");
    if (blocks.size() != 4) throw ConfigError("backbone.blocks_per_stage expects exactly 4 values");
    for (int i = 0; i < 4; ++i) {
        if (channels[i] < 1) throw ConfigError("backbone.stage_channels values must be >= 1");
        if (blocks[i] < 1) throw ConfigError("backbone.blocks_per_stage values must be >= 1");
        b.stage_channels[i] = channels[i];
        b.blocks_per_stage[i] = blocks[i];
    }
    if (b.embed_dim < 1) throw ConfigError("backbone.embed_dim must be >= 1");
    return b;
}

IomConfig make_iom_config(const RunConfig& cfg) {
    IomConfig m;
    m.channels = cfg.get_int("backbone.embed_dim");
    m.aspp_rates = cfg.get_int_list("iom.aspp_rates");
    m.num_vanilla_resblocks = cfg.get_int("iom.resblocks");
    m.p_r = cfg.get_double("iom.p_r");
    m.inference_iterations = cfg.get_int("eval.iterations");
    for (int r : m.aspp_rates)
        if (r < 1) throw ConfigError("iom.aspp_rates values must be >= 1");
    if (m.num_vanilla_resblocks < 0) throw ConfigError("iom.resblocks must be >= 0");
    if (m.p_r < 0.0 || m.p_r > 1.0) throw ConfigError("iom.p_r must be in [0,1]");
    return m;
}

EvalConfig make_eval_config(const RunConfig& cfg) {
    EvalConfig e;
    e.k = cfg.get_int("eval.k");
    e.fusion = parse_fusion_mode(cfg.get("eval.fusion"));
    e.annotation = parse_annotation_mode(cfg.get("eval.annotation"));
    e.scales = cfg.get_double_list("eval.scales");
    e.iterations = cfg.get_int("eval.iterations");
    e.episodes = cfg.get_int("eval.episodes");
    e.seed = cfg.get_u64("eval.seed");
    e.phase = parse_phase(cfg.get("eval.phase"));
    for (double s : e.scales)
        if (s <= 0.0) throw ConfigError("eval.scales values must be > 0");
    return e;
}

TrainConfig make_train_config(const RunConfig& cfg) {
    TrainConfig t;
    t.seed = cfg.get_u64("train.seed");
    t.init_seed = cfg.get_u64("init.seed");
    t.epochs = cfg.get_int("train.epochs");
    t.episodes_per_epoch = cfg.get_int("train.episodes_per_epoch");
    t.batch_episodes = cfg.get_int("train.batch_episodes");
    t.lr = cfg.get_double("train.lr");
    t.momentum = cfg.get_double("train.momentum");
    t.weight_decay = cfg.get_double("train.weight_decay");
    t.k = cfg.get_int("train.k");
    t.annotation = parse_annotation_mode(cfg.get("train.annotation"));
    t.warmup_epochs = cfg.get_int("train.warmup_epochs");
    t.warmup_scenes_per_epoch = cfg.get_int("train.warmup_scenes_per_epoch");
    t.save_every = cfg.get_int("train.save_every");
    if (t.epochs < 0) throw ConfigError("train.epochs must be >= 0");
    if (t.episodes_per_epoch < 1) throw ConfigError("train.episodes_per_epoch must be >= 1");
    if (t.batch_episodes < 1) throw ConfigError("train.batch_episodes must be >= 1");
    if (t.lr < 0.0) throw ConfigError("train.lr must be >= 0");
    if (t.momentum < 0.0 || t.momentum >= 1.0) throw ConfigError("train.momentum must be in [0,1)");
    if (t.weight_decay < 0.0) throw ConfigError("train.weight_decay must be >= 0");
    if (t.k < 1) throw ConfigError("train.k must be >= 1");
    if (t.warmup_epochs < 0) throw ConfigError("train.warmup_epochs must be >= 0");
    if (t.warmup_scenes_per_epoch < 1) throw ConfigError("train.warmup_scenes_per_epoch must be >= 1");
    if (t.save_every < 0) throw ConfigError("train.save_every must be >= 0");
    return t;
}

}  // namespace canet
