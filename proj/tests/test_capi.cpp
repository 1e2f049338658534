#include <doctest.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "canet.h"

namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string str(const std::string& leaf = "") const { return leaf.empty() ? path.string() : (path / leaf).string(); }
};

// Config tuned so the whole end-to-end flow stays in the millisecond range.
canet_config* tiny_config() {
    canet_config* cfg = nullptr;
    REQUIRE(canet_config_create(&cfg) == CANET_OK);
    const std::vector<std::pair<const char*, const char*>> keys = {
        {"dataset.image_size", "24"},     {"backbone.embed_dim", "8"},
        {"backbone.stage_channels", "4,4,8,8"}, {"iom.aspp_rates", "2,3"},
        {"iom.resblocks", "1"},           {"train.epochs", "1"},
        {"train.episodes_per_epoch", "2"}, {"train.batch_episodes", "1"},
        {"train.warmup_epochs", "1"},     {"train.warmup_scenes_per_epoch", "2"},
        {"eval.episodes", "3"},           {"eval.iterations", "2"},
    };
    for (const auto& [k, v] : keys) REQUIRE(canet_config_set(cfg, k, v) == CANET_OK);
    return cfg;
}

struct CallbackLog {
    int calls = 0;
    bool saw_warmup = false;
    bool saw_episodic = false;
};

void record_progress(const char* stage, int, int, double, void* user) {
    auto* log = static_cast<CallbackLog*>(user);
    ++log->calls;
    if (std::strcmp(stage, "warmup") == 0) log->saw_warmup = true;
    if (std::strcmp(stage, "episodic") == 0) log->saw_episodic = true;
}

}  // namespace

TEST_CASE("version and status names") {
    REQUIRE(canet_version() != nullptr);
    CHECK(std::string(canet_version()) == "1.0.0");
    CHECK(std::string(canet_status_name(CANET_OK)) == "ok");
    CHECK(std::string(canet_status_name(CANET_ERROR_CONFIG)) == "config");
    CHECK(std::string(canet_status_name(CANET_ERROR_CHECKPOINT)) == "checkpoint");
    CHECK(std::string(canet_status_name(CANET_ERROR_EMPTY_FOREGROUND)) == "empty-foreground");
    CHECK(std::string(canet_status_name(static_cast<canet_status>(999))) == "unknown");
}

TEST_CASE("config handles: set, get, fingerprint, errors") {
    canet_config* cfg = nullptr;
    REQUIRE(canet_config_create(&cfg) == CANET_OK);

    char buf[64];
    REQUIRE(canet_config_get(cfg, "train.epochs", buf, sizeof buf) == CANET_OK);
    CHECK(std::string(buf) == "60");

    CHECK(canet_config_set(cfg, "train.epochs", "3") == CANET_OK);
    REQUIRE(canet_config_get(cfg, "train.epochs", buf, sizeof buf) == CANET_OK);
    CHECK(std::string(buf) == "3");

    // unknown keys carry their name in the error message
    CHECK(canet_config_set(cfg, "train.bogus", "1") == CANET_ERROR_CONFIG);
    CHECK(std::string(canet_last_error()).find("train.bogus") != std::string::npos);
    CHECK(canet_config_get(cfg, "also.bogus", buf, sizeof buf) == CANET_ERROR_CONFIG);

    // undersized output buffers report the required size
    char tiny[2];
    CHECK(canet_config_get(cfg, "backbone.stage_channels", tiny, sizeof tiny) == CANET_ERROR_INVALID_ARGUMENT);
    CHECK(std::string(canet_last_error()).find("need") != std::string::npos);

    std::uint64_t fp0 = 0, fp1 = 0;
    REQUIRE(canet_config_fingerprint(cfg, &fp0) == CANET_OK);
    CHECK(canet_config_set(cfg, "train.lr", "0.004") == CANET_OK);
    REQUIRE(canet_config_fingerprint(cfg, &fp1) == CANET_OK);
    CHECK(fp0 != fp1);

    // null-pointer hygiene
    CHECK(canet_config_set(nullptr, "train.lr", "1") == CANET_ERROR_INVALID_ARGUMENT);
    CHECK(canet_config_set(cfg, nullptr, "1") == CANET_ERROR_INVALID_ARGUMENT);
    CHECK(canet_config_get(cfg, "train.lr", nullptr, 8) == CANET_ERROR_INVALID_ARGUMENT);
    CHECK(canet_config_fingerprint(cfg, nullptr) == CANET_ERROR_INVALID_ARGUMENT);
    CHECK(canet_config_create(nullptr) == CANET_ERROR_INVALID_ARGUMENT);

    canet_config_destroy(cfg);
    canet_config_destroy(nullptr);  // must be a no-op
}

TEST_CASE("config files round-trip through the C API") {
    TempDir dir("canet_capi_cfg");
    const std::string path = dir.str("run.cfg");
    {
        std::ofstream out(path);
        out << "# comment\ntrain.epochs=9\ndataset.image_size=32\n";
    }
    canet_config* cfg = nullptr;
    REQUIRE(canet_config_load(path.c_str(), &cfg) == CANET_OK);
    char buf[32];
    REQUIRE(canet_config_get(cfg, "train.epochs", buf, sizeof buf) == CANET_OK);
    CHECK(std::string(buf) == "9");
    canet_config_destroy(cfg);

    canet_config* missing = nullptr;
    CHECK(canet_config_load(dir.str("nope.cfg").c_str(), &missing) == CANET_ERROR_IO);
    CHECK(missing == nullptr);

    const std::string bad = dir.str("bad.cfg");
    {
        std::ofstream out(bad);
        out << "not-a-pair\n";
    }
    CHECK(canet_config_load(bad.c_str(), &cfg) == CANET_ERROR_CONFIG);
}

TEST_CASE("dataset generation writes episodes and a manifest") {
    TempDir dir("canet_capi_gen");
    canet_config* cfg = tiny_config();

    REQUIRE(canet_generate_dataset(cfg, "test", 2, 3, 99, dir.str().c_str()) == CANET_OK);
    for (int i = 0; i < 3; ++i) {
        const std::string stem = "ep" + std::to_string(i);
        CHECK(fs::exists(dir.path / (stem + "_query.ppm")));
        CHECK(fs::exists(dir.path / (stem + "_query_mask.pgm")));
        CHECK(fs::exists(dir.path / (stem + "_support0.ppm")));
        CHECK(fs::exists(dir.path / (stem + "_support1_mask.pgm")));
    }
    std::ifstream mf(dir.str("manifest.txt"));
    REQUIRE(static_cast<bool>(mf));
    std::string manifest((std::istreambuf_iterator<char>(mf)), std::istreambuf_iterator<char>());
    CHECK(manifest.find("phase=test\n") != std::string::npos);
    CHECK(manifest.find("count=3\n") != std::string::npos);
    CHECK(manifest.find("episode.2.class=") != std::string::npos);

    CHECK(canet_generate_dataset(cfg, "validation", 1, 1, 5, dir.str().c_str()) == CANET_ERROR_CONFIG);
    CHECK(canet_generate_dataset(cfg, "test", 0, 1, 5, dir.str().c_str()) == CANET_ERROR_CONFIG);
    CHECK(canet_generate_dataset(cfg, "test", 1, 0, 5, dir.str().c_str()) == CANET_ERROR_INVALID_ARGUMENT);
    CHECK(canet_generate_dataset(nullptr, "test", 1, 1, 5, dir.str().c_str()) == CANET_ERROR_INVALID_ARGUMENT);

    canet_config_destroy(cfg);
}

TEST_CASE("train, load, evaluate, and predict through the shared library") {
    TempDir dir("canet_capi_e2e");
    canet_config* cfg = tiny_config();
    const std::string ck = dir.str("model.ck");

    CallbackLog log;
    REQUIRE(canet_train(cfg, ck.c_str(), dir.str("loss.csv").c_str(), nullptr, record_progress, &log) == CANET_OK);
    CHECK(log.calls == 2);  // one warmup epoch + one episodic epoch
    CHECK(log.saw_warmup);
    CHECK(log.saw_episodic);
    CHECK(fs::exists(ck));
    CHECK(fs::exists(dir.path / "loss.csv"));

    canet_model* model = nullptr;
    REQUIRE(canet_model_load(ck.c_str(), &model) == CANET_OK);

    // the embedded config is the one we trained with
    canet_config* embedded = nullptr;
    REQUIRE(canet_model_config(model, &embedded) == CANET_OK);
    std::uint64_t fp_in = 0, fp_out = 0;
    REQUIRE(canet_config_fingerprint(cfg, &fp_in) == CANET_OK);
    REQUIRE(canet_config_fingerprint(embedded, &fp_out) == CANET_OK);
    CHECK(fp_in == fp_out);
    canet_config_destroy(embedded);

    // evaluation with the embedded config (NULL override)
    canet_report* report = nullptr;
    REQUIRE(canet_evaluate(model, nullptr, &report) == CANET_OK);
    double mean_iou = -1, fb_iou = -1, baseline = -1;
    REQUIRE(canet_report_mean_iou(report, &mean_iou) == CANET_OK);
    REQUIRE(canet_report_fb_iou(report, &fb_iou) == CANET_OK);
    REQUIRE(canet_report_baseline_mean_iou(report, &baseline) == CANET_OK);
    CHECK(mean_iou >= 0.0);
    CHECK(mean_iou <= 1.0);
    CHECK(fb_iou >= 0.0);
    CHECK(fb_iou <= 1.0);
    CHECK(baseline > 0.0);
    CHECK(baseline < 1.0);

    char table[2048];
    REQUIRE(canet_report_text(report, table, sizeof table) == CANET_OK);
    CHECK(std::string(table).find("meanIoU") != std::string::npos);
    char kv[2048];
    REQUIRE(canet_report_kv(report, kv, sizeof kv) == CANET_OK);
    CHECK(std::string(kv).find("mean_iou=") != std::string::npos);
    CHECK(std::string(kv).find("episodes=3") != std::string::npos);
    char small[4];
    CHECK(canet_report_text(report, small, sizeof small) == CANET_ERROR_INVALID_ARGUMENT);

    const std::string report_path = dir.str("report.txt");
    REQUIRE(canet_report_write(report, report_path.c_str()) == CANET_OK);
    std::ifstream rf(report_path);
    std::string written((std::istreambuf_iterator<char>(rf)), std::istreambuf_iterator<char>());
    CHECK(written == std::string(kv));
    canet_report_destroy(report);

    // evaluation with an override config
    canet_config* override_cfg = tiny_config();
    REQUIRE(canet_config_set(override_cfg, "eval.episodes", "2") == CANET_OK);
    canet_report* report2 = nullptr;
    REQUIRE(canet_evaluate(model, override_cfg, &report2) == CANET_OK);
    REQUIRE(canet_report_kv(report2, kv, sizeof kv) == CANET_OK);
    CHECK(std::string(kv).find("episodes=2") != std::string::npos);
    canet_report_destroy(report2);

    // prediction artifacts, including one map per refinement iteration
    REQUIRE(canet_config_set(override_cfg, "eval.iterations", "4") == CANET_OK);
    const std::string pred_dir = dir.str("pred");
    REQUIRE(canet_predict(model, override_cfg, 0, pred_dir.c_str(), 1) == CANET_OK);
    for (const char* name : {"query.ppm", "query_truth.pgm", "support_0.ppm", "support_0_mask.pgm", "prediction.pgm",
                             "confidence.pgm"})
        CHECK(fs::exists(fs::path(pred_dir) / name));
    for (int t = 0; t <= 4; ++t)
        CHECK(fs::exists(fs::path(pred_dir) / ("iteration_" + std::to_string(t) + ".pgm")));
    CHECK_FALSE(fs::exists(fs::path(pred_dir) / "iteration_5.pgm"));

    // without dump_iterations the per-iteration maps are not written
    const std::string pred_dir2 = dir.str("pred2");
    REQUIRE(canet_predict(model, override_cfg, 1, pred_dir2.c_str(), 0) == CANET_OK);
    CHECK(fs::exists(fs::path(pred_dir2) / "prediction.pgm"));
    CHECK_FALSE(fs::exists(fs::path(pred_dir2) / "iteration_0.pgm"));

    CHECK(canet_evaluate(nullptr, nullptr, &report) == CANET_ERROR_INVALID_ARGUMENT);
    CHECK(canet_predict(model, nullptr, 0, nullptr, 0) == CANET_ERROR_INVALID_ARGUMENT);

    canet_config_destroy(override_cfg);
    canet_model_destroy(model);
    canet_model_destroy(nullptr);  // must be a no-op
    canet_config_destroy(cfg);
}

TEST_CASE("model loading distinguishes io from checkpoint corruption") {
    TempDir dir("canet_capi_load");
    canet_model* model = nullptr;
    CHECK(canet_model_load(dir.str("absent.ck").c_str(), &model) == CANET_ERROR_IO);
    CHECK(std::string(canet_last_error()).find("checkpoint") != std::string::npos);

    const std::string junk = dir.str("junk.ck");
    {
        std::ofstream out(junk, std::ios::binary);
        out << "this is not a checkpoint at all";
    }
    CHECK(canet_model_load(junk.c_str(), &model) == CANET_ERROR_CHECKPOINT);
    CHECK(canet_model_load(nullptr, &model) == CANET_ERROR_INVALID_ARGUMENT);
}
