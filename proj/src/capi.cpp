#include "canet.h"

#include <algorithm>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>

#include "canet/checkpoint.hpp"
#include "canet/config.hpp"
#include "canet/errors.hpp"
#include "canet/eval.hpp"
#include "canet/image_io.hpp"
#include "canet/model.hpp"
#include "canet/ops.hpp"
#include "canet/train.hpp"

struct canet_config {
    canet::RunConfig cfg;
};

struct canet_model {
    canet::Model model;
    canet::RunConfig cfg;  // embedded checkpoint config
};

struct canet_report {
    canet::EvalReport report;
};

namespace {

thread_local std::string g_last_error;

canet_status fail(canet_status status, const std::string& msg) {
    g_last_error = msg;
    return status;
}

canet_status run(const std::function<void()>& body) {
    try {
        body();
        return CANET_OK;
    } catch (const canet::Error& e) {
        return fail(static_cast<canet_status>(static_cast<int>(e.kind())), e.what());
    } catch (const std::exception& e) {
        return fail(CANET_ERROR_INTERNAL, e.what());
    } catch (...) {
        return fail(CANET_ERROR_INTERNAL, "unknown error");
    }
}

canet_status copy_out(const std::string& text, char* buf, size_t buf_len) {
    if (!buf) return fail(CANET_ERROR_INVALID_ARGUMENT, "output buffer is null");
    if (text.size() + 1 > buf_len)
        return fail(CANET_ERROR_INVALID_ARGUMENT,
                    "output buffer too small: need " + std::to_string(text.size() + 1) + " bytes");
    std::memcpy(buf, text.c_str(), text.size() + 1);
    return CANET_OK;
}

}  // namespace

extern "C" {

const char* canet_version(void) { return "1.0.0"; }

const char* canet_status_name(canet_status status) {
    switch (status) {
        case CANET_OK: return "ok";
        case CANET_ERROR_CONFIG: return "config";
        case CANET_ERROR_IO: return "io";
        case CANET_ERROR_CHECKPOINT: return "checkpoint";
        case CANET_ERROR_EMPTY_FOREGROUND: return "empty-foreground";
        case CANET_ERROR_SHAPE: return "shape";
        case CANET_ERROR_STATE: return "state";
        case CANET_ERROR_GENERATION: return "generation";
        case CANET_ERROR_INVALID_ARGUMENT: return "invalid-argument";
        case CANET_ERROR_INTERNAL: return "internal";
        case CANET_ERROR_EMPTY_SUPPORT: return "empty-support";
    }
    return "unknown";
}

const char* canet_last_error(void) { return g_last_error.c_str(); }

canet_status canet_config_create(canet_config** out) {
    if (!out) return fail(CANET_ERROR_INVALID_ARGUMENT, "out pointer is null");
    return run([&] { *out = new canet_config{canet::RunConfig()}; });
}

canet_status canet_config_load(const char* path, canet_config** out) {
    if (!out || !path) return fail(CANET_ERROR_INVALID_ARGUMENT, "path or out pointer is null");
    return run([&] { *out = new canet_config{canet::RunConfig::from_file(path)}; });
}

canet_status canet_config_set(canet_config* cfg, const char* key, const char* value) {
    if (!cfg || !key || !value) return fail(CANET_ERROR_INVALID_ARGUMENT, "config, key, or value is null");
    return run([&] { cfg->cfg.set(key, value); });
}

canet_status canet_config_get(const canet_config* cfg, const char* key, char* buf, size_t buf_len) {
    if (!cfg || !key) return fail(CANET_ERROR_INVALID_ARGUMENT, "config or key is null");
    std::string value;
    const canet_status st = run([&] { value = cfg->cfg.get(key); });
    if (st != CANET_OK) return st;
    return copy_out(value, buf, buf_len);
}

canet_status canet_config_fingerprint(const canet_config* cfg, uint64_t* out) {
    if (!cfg || !out) return fail(CANET_ERROR_INVALID_ARGUMENT, "config or out pointer is null");
    return run([&] { *out = cfg->cfg.fingerprint(); });
}

void canet_config_destroy(canet_config* cfg) { delete cfg; }

canet_status canet_generate_dataset(const canet_config* cfg, const char* phase, int k, long count, uint64_t seed,
                                    const char* out_dir) {
    if (!cfg || !phase || !out_dir) return fail(CANET_ERROR_INVALID_ARGUMENT, "config, phase, or out_dir is null");
    if (count < 1) return fail(CANET_ERROR_INVALID_ARGUMENT, "episode count must be >= 1");
    return run([&] {
        const canet::Phase ph = canet::parse_phase(phase);
        const canet::DatasetConfig dcfg = canet::make_dataset_config(cfg->cfg);
        const canet::ClassSplit split = canet::ClassSplit::make(dcfg);
        std::filesystem::create_directories(out_dir);
        const std::string dir = std::string(out_dir) + "/";
        std::ostringstream manifest;
        manifest << "# canet episode manifest\n";
        manifest << "fingerprint=" << cfg->cfg.fingerprint() << "\n";
        manifest << "phase=" << phase << "\nk=" << k << "\ncount=" << count << "\nseed=" << seed << "\n";
        const std::string tag = "fingerprint " + std::to_string(cfg->cfg.fingerprint());
        for (long i = 0; i < count; ++i) {
            canet::Rng rng(canet::episode_seed(seed, ph, static_cast<std::uint64_t>(i)));
            const canet::Episode ep = canet::sample_episode(split, ph, k, dcfg.image_size, dcfg, rng);
            const std::string stem = dir + "ep" + std::to_string(i);
            canet::write_ppm(stem + "_query.ppm", ep.query_image, tag);
            canet::write_pgm(stem + "_query_mask.pgm", ep.query_mask, tag);
            for (int s = 0; s < static_cast<int>(ep.support.size()); ++s) {
                canet::write_ppm(stem + "_support" + std::to_string(s) + ".ppm", ep.support[s].image, tag);
                canet::write_pgm(stem + "_support" + std::to_string(s) + "_mask.pgm", ep.support[s].mask, tag);
            }
            manifest << "episode." << i << ".class=" << ep.class_id << "\n";
        }
        std::ofstream mf(dir + "manifest.txt", std::ios::trunc);
        if (!mf) throw canet::IoError("cannot write manifest in '" + std::string(out_dir) + "'");
        mf << manifest.str();
    });
}

canet_status canet_train(const canet_config* cfg, const char* checkpoint_path, const char* loss_csv_path,
                         const char* resume_path, canet_train_callback callback, void* user) {
    if (!cfg || !checkpoint_path) return fail(CANET_ERROR_INVALID_ARGUMENT, "config or checkpoint path is null");
    return run([&] {
        const canet::DatasetConfig dcfg = canet::make_dataset_config(cfg->cfg);
        const canet::ClassSplit split = canet::ClassSplit::make(dcfg);
        const canet::TrainConfig tcfg = canet::make_train_config(cfg->cfg);
        canet::Model model =
            canet::build_model(canet::make_backbone_config(cfg->cfg), canet::make_iom_config(cfg->cfg),
                               tcfg.init_seed);
        canet::TrainPaths paths;
        paths.checkpoint = checkpoint_path;
        if (loss_csv_path) paths.loss_csv = loss_csv_path;
        canet::TrainProgress progress;
        if (callback)
            progress = [callback, user](const canet::TrainProgressEvent& e) {
                callback(e.stage.c_str(), e.epoch, e.epochs, e.loss, user);
            };
        canet::train(model, split, dcfg, tcfg, cfg->cfg, paths, progress, resume_path ? resume_path : "");
    });
}

canet_status canet_model_load(const char* checkpoint_path, canet_model** out) {
    if (!checkpoint_path || !out) return fail(CANET_ERROR_INVALID_ARGUMENT, "path or out pointer is null");
    return run([&] {
        canet::RunConfig cfg;
        canet::Model model = canet::load_model(checkpoint_path, &cfg);
        *out = new canet_model{std::move(model), std::move(cfg)};
    });
}

void canet_model_destroy(canet_model* model) { delete model; }

canet_status canet_model_config(const canet_model* model, canet_config** out) {
    if (!model || !out) return fail(CANET_ERROR_INVALID_ARGUMENT, "model or out pointer is null");
    return run([&] { *out = new canet_config{model->cfg}; });
}

canet_status canet_evaluate(const canet_model* model, const canet_config* cfg, canet_report** out) {
    if (!model || !out) return fail(CANET_ERROR_INVALID_ARGUMENT, "model or out pointer is null");
    return run([&] {
        const canet::RunConfig& rc = cfg ? cfg->cfg : model->cfg;
        const canet::DatasetConfig dcfg = canet::make_dataset_config(rc);
        const canet::ClassSplit split = canet::ClassSplit::make(dcfg);
        const canet::EvalConfig ecfg = canet::make_eval_config(rc);
        *out = new canet_report{canet::evaluate(model->model, split, dcfg, ecfg)};
    });
}

canet_status canet_report_mean_iou(const canet_report* report, double* out) {
    if (!report || !out) return fail(CANET_ERROR_INVALID_ARGUMENT, "report or out pointer is null");
    *out = report->report.mean_iou;
    return CANET_OK;
}

canet_status canet_report_fb_iou(const canet_report* report, double* out) {
    if (!report || !out) return fail(CANET_ERROR_INVALID_ARGUMENT, "report or out pointer is null");
    *out = report->report.fb_iou;
    return CANET_OK;
}

canet_status canet_report_baseline_mean_iou(const canet_report* report, double* out) {
    if (!report || !out) return fail(CANET_ERROR_INVALID_ARGUMENT, "report or out pointer is null");
    *out = report->report.baseline_all_fg_mean_iou;
    return CANET_OK;
}

canet_status canet_report_text(const canet_report* report, char* buf, size_t buf_len) {
    if (!report) return fail(CANET_ERROR_INVALID_ARGUMENT, "report is null");
    return copy_out(report->report.to_table(), buf, buf_len);
}

canet_status canet_report_kv(const canet_report* report, char* buf, size_t buf_len) {
    if (!report) return fail(CANET_ERROR_INVALID_ARGUMENT, "report is null");
    return copy_out(report->report.to_kv(), buf, buf_len);
}

canet_status canet_report_write(const canet_report* report, const char* path) {
    if (!report || !path) return fail(CANET_ERROR_INVALID_ARGUMENT, "report or path is null");
    return run([&] {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw canet::IoError("cannot open report file '" + std::string(path) + "'");
        out << report->report.to_kv();
        if (!out) throw canet::IoError("short write to report file '" + std::string(path) + "'");
    });
}

void canet_report_destroy(canet_report* report) { delete report; }

canet_status canet_predict(const canet_model* model, const canet_config* cfg, uint64_t index, const char* out_dir,
                           int dump_iterations) {
    if (!model || !out_dir) return fail(CANET_ERROR_INVALID_ARGUMENT, "model or out_dir is null");
    return run([&] {
        const canet::RunConfig& rc = cfg ? cfg->cfg : model->cfg;
        const canet::DatasetConfig dcfg = canet::make_dataset_config(rc);
        const canet::ClassSplit split = canet::ClassSplit::make(dcfg);
        const canet::EvalConfig ecfg = canet::make_eval_config(rc);

        canet::Rng rng(canet::episode_seed(ecfg.seed, ecfg.phase, index));
        canet::Episode ep = canet::sample_episode(split, ecfg.phase, ecfg.k, dcfg.image_size, dcfg, rng);
        ep = canet::annotate(std::move(ep), ecfg.annotation, rng);

        canet::PredictOptions opts;
        opts.fusion = ecfg.fusion;
        opts.iterations = ecfg.iterations;
        const canet::EpisodePrediction pred = canet::predict_episode(model->model, ep, opts);

        std::filesystem::create_directories(out_dir);
        const std::string dir = std::string(out_dir) + "/";
        const std::string tag = "episode " + std::to_string(index) + " class " + std::to_string(ep.class_id);
        canet::write_ppm(dir + "query.ppm", ep.query_image, tag);
        canet::write_pgm(dir + "query_truth.pgm", ep.query_mask, tag);
        for (int s = 0; s < static_cast<int>(ep.support.size()); ++s) {
            canet::write_ppm(dir + "support_" + std::to_string(s) + ".ppm", ep.support[s].image, tag);
            canet::write_pgm(dir + "support_" + std::to_string(s) + "_mask.pgm", ep.support[s].mask, tag);
        }
        canet::write_pgm(dir + "prediction.pgm", pred.mask, tag);

        canet::NoGradGuard guard;
        const int h = ep.query_image.dim(1), w = ep.query_image.dim(2);
        auto fg_plane = [&](const canet::Tensor& probs) {
            const canet::Tensor up = canet::ops::bilinear_resize(probs, h, w);
            std::vector<double> plane(static_cast<std::size_t>(h) * w);
            const std::vector<double>& d = up.data();
            std::copy(d.begin() + plane.size(), d.end(), plane.begin());
            return canet::Tensor::from_data({h, w}, std::move(plane));
        };
        canet::write_pgm(dir + "confidence.pgm", fg_plane(pred.iteration_probs.back()), tag);
        if (dump_iterations) {
            for (std::size_t t = 0; t < pred.iteration_probs.size(); ++t)
                canet::write_pgm(dir + "iteration_" + std::to_string(t) + ".pgm", fg_plane(pred.iteration_probs[t]),
                                 tag);
        }
    });
}

}  // extern "C"
