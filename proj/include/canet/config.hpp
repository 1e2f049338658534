#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "canet/data.hpp"
#include "canet/eval.hpp"
#include "canet/iom.hpp"

namespace canet {

// Flat key=value run configuration with a closed key registry. Every key has
// a default; setting or reading an unregistered key is a ConfigError that
// names the key.
class RunConfig {
public:
    RunConfig();

    static RunConfig from_file(const std::string& path);
    static RunConfig from_text(const std::string& text);

    void set(const std::string& key, const std::string& value);
    const std::string& get(const std::string& key) const;
    bool is_known(const std::string& key) const { return values_.count(key) != 0; }

    int get_int(const std::string& key) const;
    double get_double(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;
    std::vector<int> get_int_list(const std::string& key) const;
    std::vector<double> get_double_list(const std::string& key) const;

    // Sorted key=value lines; also the fingerprint input.
    std::string to_text() const;
    std::uint64_t fingerprint() const;

    const std::map<std::string, std::string>& values() const { return values_; }

private:
    std::map<std::string, std::string> values_;
};

DatasetConfig make_dataset_config(const RunConfig& cfg);
BackboneConfig make_backbone_config(const RunConfig& cfg);
IomConfig make_iom_config(const RunConfig& cfg);
EvalConfig make_eval_config(const RunConfig& cfg);

struct TrainConfig {
    std::uint64_t seed = 7;
    std::uint64_t init_seed = 1234;
    int epochs = 60;
    int episodes_per_epoch = 400;
    int batch_episodes = 4;
    double lr = 0.0025;
    double momentum = 0.9;
    double weight_decay = 0.0005;
    int k = 1;
    AnnotationMode annotation = AnnotationMode::Pixel;
    int warmup_epochs = 6;
    int warmup_scenes_per_epoch = 400;
    int save_every = 0;  // epochs between intermediate checkpoints; 0 = off
};

TrainConfig make_train_config(const RunConfig& cfg);

}  // namespace canet
