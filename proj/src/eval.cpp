#include "canet/eval.hpp"

#include <cstdio>
#include <sstream>

#include "canet/errors.hpp"
#include "canet/ops.hpp"

namespace canet {

double iou(const BinaryMask& pred, const BinaryMask& truth) {
    if (!pred.same_shape(truth)) throw ShapeError("iou: mask shapes differ");
    long inter = 0, uni = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const bool p = pred.v[i] != 0, t = truth.v[i] != 0;
        inter += (p && t) ? 1 : 0;
        uni += (p || t) ? 1 : 0;
    }
    if (uni == 0) return 1.0;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

void MetricAccumulator::add(int class_id, const BinaryMask& pred, const BinaryMask& truth) {
    if (!pred.same_shape(truth)) throw ShapeError("metrics: mask shapes differ");
    long inter = 0, uni = 0, bg_inter = 0, bg_uni = 0;
    for (std::size_t i = 0; i < pred.v.size(); ++i) {
        const bool p = pred.v[i] != 0, t = truth.v[i] != 0;
        inter += (p && t) ? 1 : 0;
        uni += (p || t) ? 1 : 0;
        bg_inter += (!p && !t) ? 1 : 0;
        bg_uni += (!p || !t) ? 1 : 0;
    }
    Sums& s = per_class_[class_id];
    s.inter += inter;
    s.uni += uni;
    s.count += 1;
    fg_inter_ += inter;
    fg_union_ += uni;
    bg_inter_ += bg_inter;
    bg_union_ += bg_uni;
    episodes_ += 1;
}

namespace {
double ratio_or_one(long inter, long uni) { return uni == 0 ? 1.0 : static_cast<double>(inter) / uni; }
}  // namespace

double MetricAccumulator::mean_iou() const {
    if (per_class_.empty()) return 0.0;
    double total = 0.0;
    for (const auto& [id, s] : per_class_) total += ratio_or_one(s.inter, s.uni);
    return total / static_cast<double>(per_class_.size());
}

double MetricAccumulator::fb_iou() const {
    if (episodes_ == 0) return 0.0;
    return 0.5 * (ratio_or_one(fg_inter_, fg_union_) + ratio_or_one(bg_inter_, bg_union_));
}

std::map<int, double> MetricAccumulator::per_class_iou() const {
    std::map<int, double> out;
    for (const auto& [id, s] : per_class_) out[id] = ratio_or_one(s.inter, s.uni);
    return out;
}

std::map<int, long> MetricAccumulator::per_class_episodes() const {
    std::map<int, long> out;
    for (const auto& [id, s] : per_class_) out[id] = s.count;
    return out;
}

BinaryMask multi_scale_predict(const Model& model, const Episode& ep, const EvalConfig& cfg) {
    if (cfg.scales.empty()) throw ConfigError("eval.scales must list at least one scale");
    PredictOptions opts;
    opts.fusion = cfg.fusion;
    opts.iterations = cfg.iterations;

    if (cfg.scales.size() == 1) {
        opts.scale = cfg.scales.front();
        return predict_episode(model, ep, opts).mask;
    }

    const int h = ep.query_image.dim(1), w = ep.query_image.dim(2);
    if (cfg.fusion == FusionMode::MaskOr) {
        std::vector<BinaryMask> masks;
        for (double s : cfg.scales) {
            opts.scale = s;
            masks.push_back(predict_episode(model, ep, opts).mask);
        }
        return fuse_mask_or(masks);
    }

    NoGradGuard guard;
    Tensor sum = Tensor::zeros({2, h, w});
    for (double s : cfg.scales) {
        opts.scale = s;
        const Tensor probs = predict_episode(model, ep, opts).probs_full;
        std::vector<double>& acc = sum.raw_data();
        const std::vector<double>& p = probs.data();
        for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += p[i];
    }
    return argmax_foreground(sum);  // a common positive factor does not move the argmax
}

EvalReport evaluate(const Model& model, const ClassSplit& split, const DatasetConfig& dcfg, const EvalConfig& cfg,
                    const EvalProgress& progress) {
    if (cfg.episodes < 1) throw ConfigError("eval.episodes must be >= 1");
    if (cfg.k < 1) throw ConfigError("eval.k must be >= 1");
    if (cfg.iterations < 0) throw ConfigError("eval.iterations must be >= 0");

    MetricAccumulator metrics, baseline;
    for (long i = 0; i < cfg.episodes; ++i) {
        Rng rng(episode_seed(cfg.seed, cfg.phase, static_cast<std::uint64_t>(i)));
        Episode ep = sample_episode(split, cfg.phase, cfg.k, dcfg.image_size, dcfg, rng);
        ep = annotate(std::move(ep), cfg.annotation, rng);
        const BinaryMask pred = multi_scale_predict(model, ep, cfg);
        metrics.add(ep.class_id, pred, ep.query_mask);

        BinaryMask all_fg(ep.query_mask.h, ep.query_mask.w);
        std::fill(all_fg.v.begin(), all_fg.v.end(), std::uint8_t{1});
        baseline.add(ep.class_id, all_fg, ep.query_mask);
        if (progress) progress(i + 1, cfg.episodes);
    }

    EvalReport report;
    report.episodes = metrics.episodes();
    report.k = cfg.k;
    report.fusion = fusion_mode_name(cfg.fusion);
    report.annotation = annotation_mode_name(cfg.annotation);
    report.scales = cfg.scales;
    report.iterations = cfg.iterations;
    report.seed = cfg.seed;
    report.phase = phase_name(cfg.phase);
    report.mean_iou = metrics.mean_iou();
    report.fb_iou = metrics.fb_iou();
    report.baseline_all_fg_mean_iou = baseline.mean_iou();
    report.per_class_iou = metrics.per_class_iou();
    report.per_class_episodes = metrics.per_class_episodes();
    return report;
}

namespace {
std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4f", v);
    return buf;
}

std::string scales_csv(const std::vector<double>& scales) {
    std::ostringstream os;
    for (std::size_t i = 0; i < scales.size(); ++i) {
        if (i) os << ',';
        os << scales[i];
    }
    return os.str();
}
}  // namespace

std::string EvalReport::to_table() const {
    std::ostringstream os;
    os << "evaluation: phase=" << phase << " episodes=" << episodes << " k=" << k << " fusion=" << fusion
       << " annotation=" << annotation << " scales=" << scales_csv(scales) << " iterations=" << iterations
       << " seed=" << seed << "\n";
    os << "  class   episodes   iou\n";
    for (const auto& [id, v] : per_class_iou) {
        os << "  " << id;
        for (int pad = static_cast<int>(std::to_string(id).size()); pad < 7; ++pad) os << ' ';
        const std::string n = std::to_string(per_class_episodes.at(id));
        os << n;
        for (int pad = static_cast<int>(n.size()); pad < 11; ++pad) os << ' ';
        os << fmt(v) << "\n";
    }
    os << "  meanIoU  " << fmt(mean_iou) << "\n";
    os << "  FB-IoU   " << fmt(fb_iou) << "\n";
    os << "  all-fg baseline meanIoU  " << fmt(baseline_all_fg_mean_iou) << "\n";
    return os.str();
}

std::string EvalReport::to_kv() const {
    std::ostringstream os;
    os << "annotation=" << annotation << "\n";
    os << "baseline_all_fg_mean_iou=" << fmt(baseline_all_fg_mean_iou) << "\n";
    for (const auto& [id, v] : per_class_iou)
        os << "class." << id << ".iou=" << fmt(v) << "\n"
           << "class." << id << ".episodes=" << per_class_episodes.at(id) << "\n";
    os << "episodes=" << episodes << "\n";
    os << "fb_iou=" << fmt(fb_iou) << "\n";
    os << "fusion=" << fusion << "\n";
    os << "iterations=" << iterations << "\n";
    os << "k=" << k << "\n";
    os << "mean_iou=" << fmt(mean_iou) << "\n";
    os << "phase=" << phase << "\n";
    os << "scales=" << scales_csv(scales) << "\n";
    os << "seed=" << seed << "\n";
    return os.str();
}

}  // namespace canet
