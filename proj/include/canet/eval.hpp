#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "canet/data.hpp"
#include "canet/model.hpp"

namespace canet {

// Episode-level intersection over union; two empty masks agree perfectly.
double iou(const BinaryMask& pred, const BinaryMask& truth);

struct EvalConfig {
    int k = 1;
    FusionMode fusion = FusionMode::Attention;
    AnnotationMode annotation = AnnotationMode::Pixel;
    std::vector<double> scales{1.0};
    int iterations = 4;
    int episodes = 500;
    std::uint64_t seed = 2026;
    Phase phase = Phase::Test;
};

// Scale-averaged prediction: soft confidences from each query scale are
// averaged at native resolution before the argmax (mask-OR instead ORs the
// per-scale masks).
BinaryMask multi_scale_predict(const Model& model, const Episode& ep, const EvalConfig& cfg);

// Streaming metric accumulator. meanIoU aggregates intersections and unions
// per class across episodes (ratio of sums) and then averages the per-class
// ratios without episode-count weighting. FB-IoU ignores classes and averages
// the aggregate foreground and background ratios.
class MetricAccumulator {
public:
    void add(int class_id, const BinaryMask& pred, const BinaryMask& truth);
    double mean_iou() const;
    double fb_iou() const;
    std::map<int, double> per_class_iou() const;
    std::map<int, long> per_class_episodes() const;
    long episodes() const { return episodes_; }

private:
    struct Sums {
        long inter = 0;
        long uni = 0;
        long count = 0;
    };
    std::map<int, Sums> per_class_;
    long fg_inter_ = 0, fg_union_ = 0;
    long bg_inter_ = 0, bg_union_ = 0;
    long episodes_ = 0;
};

struct EvalReport {
    long episodes = 0;
    int k = 1;
    std::string fusion;
    std::string annotation;
    std::vector<double> scales;
    int iterations = 0;
    std::uint64_t seed = 0;
    std::string phase;
    double mean_iou = 0.0;
    double fb_iou = 0.0;
    double baseline_all_fg_mean_iou = 0.0;  // all-foreground prediction on the same episodes
    std::map<int, double> per_class_iou;
    std::map<int, long> per_class_episodes;

    std::string to_table() const;
    std::string to_kv() const;
};

using EvalProgress = std::function<void(long done, long total)>;

EvalReport evaluate(const Model& model, const ClassSplit& split, const DatasetConfig& dcfg, const EvalConfig& cfg,
                    const EvalProgress& progress = nullptr);

}  // namespace canet
