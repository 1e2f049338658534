#include "canet/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "canet/checkpoint.hpp"
#include "canet/errors.hpp"
#include "canet/ops.hpp"

namespace canet {

BinaryMask majority_downsample(const BinaryMask& mask, int stride) {
    if (stride < 1) throw ConfigError("downsample stride must be >= 1");
    if (mask.h % stride != 0 || mask.w % stride != 0)
        throw ShapeError("majority_downsample: mask dims must be multiples of the stride");
    const int oh = mask.h / stride, ow = mask.w / stride;
    BinaryMask out(oh, ow);
    const int block = stride * stride;
    for (int by = 0; by < oh; ++by) {
        for (int bx = 0; bx < ow; ++bx) {
            int fg = 0;
            for (int y = by * stride; y < (by + 1) * stride; ++y)
                for (int x = bx * stride; x < (bx + 1) * stride; ++x) fg += mask.at(y, x) ? 1 : 0;
            out.at(by, bx) = (2 * fg > block) ? 1 : 0;
        }
    }
    return out;
}

void SgdOptimizer::step(ModelState& state) {
    for (auto& [name, param] : state.params()) {
        if (!param.trainable) continue;
        if (!param.tensor.has_grad())
            throw StateError("optimizer step: trainable parameter '" + name + "' has no gradient");
        std::vector<double>& p = param.tensor.raw_data();
        std::vector<double>& g = param.tensor.ensure_grad();
        std::vector<double>& v = velocities_[name];
        if (v.size() != p.size()) v.assign(p.size(), 0.0);
        for (std::size_t i = 0; i < p.size(); ++i) {
            const double grad = g[i] + weight_decay_ * p[i];
            v[i] = momentum_ * v[i] + grad;
            p[i] -= lr_ * v[i];
        }
        param.tensor.zero_grad();
    }
}

void SgdOptimizer::drop_velocity_prefix(const std::string& prefix) {
    for (auto it = velocities_.begin(); it != velocities_.end();) {
        if (it->first.rfind(prefix, 0) == 0)
            it = velocities_.erase(it);
        else
            ++it;
    }
}

StepResult training_step(Model& model, const ClassSplit& split, const Episode& ep, const Tensor* cached_map,
                         double p_r, Rng& dropout_rng) {
    if (std::find(split.train_classes.begin(), split.train_classes.end(), ep.class_id) ==
        split.train_classes.end())
        throw ConfigError("split hygiene: training episode uses class " + std::to_string(ep.class_id) +
                          ", which is not in the training split");

    std::vector<Tensor> concats;
    const std::vector<Tensor> comps = comparison_maps(model, ep.support, ep.query_image, &concats);
    Tensor fused;
    if (comps.size() == 1) {
        fused = comps.front();
    } else {
        std::vector<Tensor> logits;
        logits.reserve(concats.size());
        for (const Tensor& cat : concats) logits.push_back(attention_logit(cat, model.state));
        fused = ops::weighted_sum(comps, ops::softmax_stack(logits));
    }

    const int fh = fused.dim(1), fw = fused.dim(2);
    ConfidenceMap previous = cached_map ? ConfidenceMap{*cached_map} : empty_confidence(fh, fw);
    const ConfidenceMap seeded = mask_dropout(previous, p_r, dropout_rng);
    const ConfidenceMap out = iom_step(fused, seeded, model.iom, model.state);

    const BinaryMask target = majority_downsample(ep.query_mask, kFeatureStride);
    if (target.h != fh || target.w != fw)
        throw ShapeError("training target grid does not match the prediction grid");

    StepResult result;
    result.loss = ops::cross_entropy_spatial(out.probs, target);
    result.new_map = out.probs.detach();
    return result;
}

namespace {

Tensor mean_loss(const std::vector<Tensor>& losses) {
    Tensor sum = losses.front();
    for (std::size_t i = 1; i < losses.size(); ++i) sum = ops::add(sum, losses[i]);
    return ops::scale(sum, 1.0 / static_cast<double>(losses.size()));
}

// Feature-grid warm-up target: per block, the most frequent owner wins;
// background wins ties, then the smaller class id.
std::vector<int> warmup_target(const Scene& scene, const std::map<int, int>& class_index, int h, int w, int stride) {
    const int oh = h / stride, ow = w / stride;
    std::vector<int> target(static_cast<std::size_t>(oh) * ow, 0);
    for (int by = 0; by < oh; ++by) {
        for (int bx = 0; bx < ow; ++bx) {
            std::map<int, int> counts;
            for (int y = by * stride; y < (by + 1) * stride; ++y)
                for (int x = bx * stride; x < (bx + 1) * stride; ++x)
                    counts[scene.owner[static_cast<std::size_t>(y) * w + x]] += 1;
            int winner = -1;
            int best = counts.count(-1) ? counts[-1] : 0;
            for (const auto& [id, n] : counts) {
                if (id == -1) continue;
                if (n > best) {
                    best = n;
                    winner = id;
                }
            }
            target[static_cast<std::size_t>(by) * ow + bx] = winner < 0 ? 0 : 1 + class_index.at(winner);
        }
    }
    return target;
}

struct CsvLogger {
    std::ofstream out;
    explicit CsvLogger(const std::string& path) {
        if (path.empty()) return;
        out.open(path, std::ios::trunc);
        if (!out) throw IoError("cannot open loss log '" + path + "' for writing");
        out << "stage,epoch,loss\n";
    }
    void log(const std::string& stage, int epoch, double loss) {
        if (!out.is_open()) return;
        out << stage << ',' << epoch << ',' << loss << '\n';
        out.flush();
    }
};

}  // namespace

TrainResult train(Model& model, const ClassSplit& split, const DatasetConfig& dcfg, const TrainConfig& tcfg,
                  const RunConfig& run_cfg, const TrainPaths& paths, const TrainProgress& progress,
                  const std::string& resume_from) {
    TrainResult result;
    CsvLogger csv(paths.loss_csv);
    SgdOptimizer opt(tcfg.lr, tcfg.momentum, tcfg.weight_decay);
    std::vector<Tensor> cache(static_cast<std::size_t>(tcfg.episodes_per_epoch));
    int start_epoch = 0;
    bool skip_warmup = false;

    if (!resume_from.empty()) {
        Checkpoint ck = read_checkpoint(resume_from);
        if (ck.config.fingerprint() != run_cfg.fingerprint())
            throw CheckpointError("resume checkpoint '" + resume_from + "' was written by a different configuration");
        if (ck.params.size() != model.state.size())
            throw CheckpointError("resume checkpoint '" + resume_from + "' does not structurally match the model");
        for (auto& [name, param] : model.state.params()) {
            auto it = ck.params.find(name);
            if (it == ck.params.end() || it->second.tensor.shape() != param.tensor.shape())
                throw CheckpointError("resume checkpoint '" + resume_from + "' is missing parameter '" + name + "'");
            param.tensor = it->second.tensor;
            param.trainable = it->second.trainable;
            param.tensor.set_requires_grad(param.trainable);
        }
        for (const auto& [name, tensor] : ck.extras) {
            if (name.rfind("opt.velocity.", 0) == 0) {
                opt.velocities()[name.substr(13)] = tensor.data();
            } else if (name.rfind("cache.", 0) == 0) {
                const int idx = std::stoi(name.substr(6));
                if (idx < 0 || idx >= tcfg.episodes_per_epoch)
                    throw CheckpointError("resume cache entry '" + name + "' is out of range");
                cache[static_cast<std::size_t>(idx)] = tensor;
            } else if (name == "trainer.next_epoch") {
                start_epoch = static_cast<int>(tensor.data()[0]);
            }
        }
        if (start_epoch < 0 || start_epoch > tcfg.epochs)
            throw CheckpointError("resume checkpoint epoch is outside the configured run");
        skip_warmup = true;  // intermediate checkpoints are only written after warm-up
    }

    // ---- Stage 1: pixel-classification warm-up of the shared extractor.
    // Heads that receive no gradients during a stage are frozen for that
    // stage, keeping the optimizer's missing-gradient check meaningful.
    if (!skip_warmup && tcfg.warmup_epochs > 0) {
        model.state.set_trainable_prefix("backbone.", true);
        model.state.set_trainable_prefix("dcm.", false);
        model.state.set_trainable_prefix("iom.", false);
        model.state.set_trainable_prefix("attention.", false);
        std::map<int, int> class_index;
        for (std::size_t i = 0; i < split.train_classes.size(); ++i)
            class_index[split.train_classes[i]] = static_cast<int>(i);
        const int head_out = 1 + static_cast<int>(split.train_classes.size());
        Rng head_rng(derive_seed(tcfg.init_seed, "warmup-head", 0));
        model.state.add("warmup.head.w", he_conv_init({head_out, model.backbone.embed_dim, 1, 1}, head_rng), true);
        model.state.add("warmup.head.b", Tensor::zeros({head_out}), true);

        for (int epoch = 0; epoch < tcfg.warmup_epochs; ++epoch) {
            double total = 0.0;
            int scene_idx = 0;
            while (scene_idx < tcfg.warmup_scenes_per_epoch) {
                const int batch = std::min(tcfg.batch_episodes, tcfg.warmup_scenes_per_epoch - scene_idx);
                std::vector<Tensor> losses;
                for (int b = 0; b < batch; ++b, ++scene_idx) {
                    const std::uint64_t global_idx =
                        static_cast<std::uint64_t>(epoch) * tcfg.warmup_scenes_per_epoch + scene_idx;
                    Rng rng(derive_seed(tcfg.seed, "warmup-scene", global_idx));
                    const std::vector<int> classes =
                        sample_scene_classes(split.train_classes, dcfg.max_classes_per_scene, rng);
                    const Scene scene = generate_scene(classes, dcfg.image_size, dcfg.image_size, dcfg, rng);
                    const Tensor feats = encode_comparison_features(
                        extract_features(scene.image, model.backbone, model.state), model.backbone, model.state);
                    const Tensor logits =
                        ops::conv2d(feats, Conv2dParams::make(model.state.get("warmup.head.w"),
                                                              model.state.get("warmup.head.b"), 1, 1, 0));
                    const Tensor probs = ops::softmax_channels(logits);
                    const std::vector<int> target =
                        warmup_target(scene, class_index, dcfg.image_size, dcfg.image_size, kFeatureStride);
                    Tensor loss = ops::cross_entropy_indices(probs, target);
                    total += loss.value_at(0);
                    losses.push_back(std::move(loss));
                }
                Tensor batch_loss = mean_loss(losses);
                batch_loss.backward();
                opt.step(model.state);
            }
            const double epoch_loss = total / tcfg.warmup_scenes_per_epoch;
            result.warmup_losses.push_back(epoch_loss);
            csv.log("warmup", epoch, epoch_loss);
            if (progress) progress(TrainProgressEvent{"warmup", epoch, tcfg.warmup_epochs, epoch_loss});
        }

        model.state.remove_prefix("warmup.");
        opt.drop_velocity_prefix("warmup.");
        model.state.set_trainable_prefix("backbone.", false);
        opt.drop_velocity_prefix("backbone.");
        model.state.set_trainable_prefix("dcm.", true);
        model.state.set_trainable_prefix("iom.", true);
    }

    // The attention head only sees gradients on multi-shot episodes; on
    // 1-shot runs it stays at its initial weights, like the frozen backbone.
    model.state.set_trainable_prefix("attention.", tcfg.k > 1);

    // ---- Stage 2: episodic training over a fixed per-run episode set.
    for (int epoch = start_epoch; epoch < tcfg.epochs; ++epoch) {
        Rng dropout_rng(derive_seed(tcfg.seed, "dropout", static_cast<std::uint64_t>(epoch)));
        double total = 0.0;
        int ep_idx = 0;
        while (ep_idx < tcfg.episodes_per_epoch) {
            const int batch = std::min(tcfg.batch_episodes, tcfg.episodes_per_epoch - ep_idx);
            std::vector<Tensor> losses;
            for (int b = 0; b < batch; ++b, ++ep_idx) {
                Rng erng(episode_seed(tcfg.seed, Phase::Train, static_cast<std::uint64_t>(ep_idx)));
                Episode ep = sample_episode(split, Phase::Train, tcfg.k, dcfg.image_size, dcfg, erng);
                ep = annotate(std::move(ep), tcfg.annotation, erng);
                const Tensor* cached = cache[static_cast<std::size_t>(ep_idx)].defined()
                                           ? &cache[static_cast<std::size_t>(ep_idx)]
                                           : nullptr;
                StepResult sr = training_step(model, split, ep, cached, model.iom.p_r, dropout_rng);
                cache[static_cast<std::size_t>(ep_idx)] = sr.new_map;
                total += sr.loss.value_at(0);
                losses.push_back(std::move(sr.loss));
            }
            Tensor batch_loss = mean_loss(losses);
            batch_loss.backward();
            opt.step(model.state);
        }
        const double epoch_loss = total / tcfg.episodes_per_epoch;
        result.epoch_losses.push_back(epoch_loss);
        csv.log("episodic", epoch, epoch_loss);
        if (progress) progress(TrainProgressEvent{"episodic", epoch, tcfg.epochs, epoch_loss});

        const bool last = epoch + 1 == tcfg.epochs;
        if (!last && tcfg.save_every > 0 && (epoch + 1) % tcfg.save_every == 0 && !paths.checkpoint.empty()) {
            // Side path so a completed run's final checkpoint never clobbers
            // the resumable snapshot a crashed run would need.
            std::map<std::string, Tensor> extras;
            for (const auto& [name, v] : opt.velocities())
                extras["opt.velocity." + name] = Tensor::from_data({static_cast<int>(v.size())}, v);
            for (std::size_t i = 0; i < cache.size(); ++i)
                if (cache[i].defined()) extras["cache." + std::to_string(i)] = cache[i];
            extras["trainer.next_epoch"] = Tensor::from_data({1}, {static_cast<double>(epoch + 1)});
            save_checkpoint(paths.checkpoint + ".resume", model, run_cfg, extras);
        }
    }

    if (!paths.checkpoint.empty()) save_checkpoint(paths.checkpoint, model, run_cfg);
    return result;
}

}  // namespace canet
