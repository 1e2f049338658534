// canet command line: thin wrapper over the C API in canet.h.
// Exit codes are canet_status values; 0 is success.

#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "canet.h"

namespace {

int report_failure(canet_status st) {
    std::fprintf(stderr, "error (%s): %s\n", canet_status_name(st), canet_last_error());
    return static_cast<int>(st);
}

// Builds the working config: --config file when given, otherwise the model's
// embedded config (or defaults when there is no model), then --set overrides.
canet_status build_config(const std::string& config_path, const canet_model* model,
                          const std::vector<std::string>& sets,
                          const std::vector<std::pair<std::string, std::string>>& flag_overrides,
                          canet_config** out) {
    canet_status st;
    if (!config_path.empty())
        st = canet_config_load(config_path.c_str(), out);
    else if (model)
        st = canet_model_config(model, out);
    else
        st = canet_config_create(out);
    if (st != CANET_OK) return st;

    for (const std::string& kv : sets) {
        const std::size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            canet_config_destroy(*out);
            *out = nullptr;
            std::fprintf(stderr, "--set expects key=value, got '%s'\n", kv.c_str());
            return CANET_ERROR_INVALID_ARGUMENT;
        }
        st = canet_config_set(*out, kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str());
        if (st != CANET_OK) {
            canet_config_destroy(*out);
            *out = nullptr;
            return st;
        }
    }
    for (const auto& [key, value] : flag_overrides) {
        st = canet_config_set(*out, key.c_str(), value.c_str());
        if (st != CANET_OK) {
            canet_config_destroy(*out);
            *out = nullptr;
            return st;
        }
    }
    return CANET_OK;
}

void progress_printer(const char* stage, int epoch, int total_epochs, double loss, void* user) {
    if (user && *static_cast<bool*>(user)) return;  // quiet
    std::printf("[%s] epoch %d/%d  loss %.6f\n", stage, epoch + 1, total_epochs, loss);
    std::fflush(stdout);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"canet: few-shot segmentation on procedurally generated scenes"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string("canet ") + canet_version());

    std::string config_path, out_dir, checkpoint, loss_csv, resume, report_path, phase, fusion, annotation, scales;
    std::vector<std::string> sets;
    long count = 16;
    int k = -1, iterations = -1, episodes = -1;
    std::uint64_t seed = 0, index = 0;
    bool has_seed = false, quiet = false;
    int dump_iterations = 0;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option("--set", sets, "override a config key (key=value, repeatable)");
    };

    CLI::App* gen = app.add_subcommand("gen-data", "materialize episodes as PPM/PGM files");
    add_common(gen);
    gen->add_option("--phase", phase, "episode stream: train|test")->default_val("train");
    gen->add_option("--k", k, "support examples per episode")->default_val(1);
    gen->add_option("--count", count, "number of episodes")->default_val(16);
    gen->add_option("--seed", seed, "stream seed")->default_val(7);
    gen->add_option("--out", out_dir, "output directory")->required();

    CLI::App* train = app.add_subcommand("train", "run the two-stage training loop");
    add_common(train);
    train->add_option("--checkpoint", checkpoint, "where to write the trained model")->required();
    train->add_option("--loss-csv", loss_csv, "per-epoch loss log");
    train->add_option("--resume", resume, "resume from an intermediate checkpoint");
    train->add_flag("--quiet", quiet, "suppress per-epoch progress");

    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint episodically");
    add_common(eval);
    eval->add_option("--checkpoint", checkpoint, "trained model")->required();
    eval->add_option("--k", k, "support shots (eval.k)");
    eval->add_option("--fusion", fusion, "attention|feature-avg|mask-avg|mask-or (eval.fusion)");
    eval->add_option("--annotation", annotation, "pixel|bbox (eval.annotation)");
    eval->add_option("--scales", scales, "comma list of query scales (eval.scales)");
    eval->add_option("--iterations", iterations, "refinement iterations (eval.iterations)");
    eval->add_option("--episodes", episodes, "number of eval episodes (eval.episodes)");
    auto* seed_opt = eval->add_option("--seed", seed, "episode stream seed (eval.seed)");
    eval->add_option("--phase", phase, "train|test episode stream (eval.phase)");
    eval->add_option("--report", report_path, "write key=value report to this file");

    CLI::App* predict = app.add_subcommand("predict", "run one episode and dump artifacts");
    add_common(predict);
    predict->add_option("--checkpoint", checkpoint, "trained model")->required();
    predict->add_option("--index", index, "episode index in the eval stream")->default_val(0);
    predict->add_option("--out", out_dir, "output directory")->required();
    predict->add_flag("--dump-iterations", dump_iterations, "also write per-iteration confidence maps");
    predict->add_option("--k", k, "support shots (eval.k)");
    predict->add_option("--fusion", fusion, "fusion mode (eval.fusion)");
    predict->add_option("--iterations", iterations, "refinement iterations (eval.iterations)");
    auto* pseed_opt = predict->add_option("--seed", seed, "episode stream seed (eval.seed)");
    predict->add_option("--phase", phase, "train|test episode stream (eval.phase)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(CANET_ERROR_INVALID_ARGUMENT);
    }
    has_seed = seed_opt->count() > 0 || pseed_opt->count() > 0;

    if (gen->parsed()) {
        canet_config* cfg = nullptr;
        canet_status st = build_config(config_path, nullptr, sets, {}, &cfg);
        if (st != CANET_OK) return report_failure(st);
        st = canet_generate_dataset(cfg, phase.c_str(), k, count, seed, out_dir.c_str());
        canet_config_destroy(cfg);
        if (st != CANET_OK) return report_failure(st);
        std::printf("wrote %ld episodes to %s\n", count, out_dir.c_str());
        return 0;
    }

    if (train->parsed()) {
        canet_config* cfg = nullptr;
        canet_status st = build_config(config_path, nullptr, sets, {}, &cfg);
        if (st != CANET_OK) return report_failure(st);
        st = canet_train(cfg, checkpoint.c_str(), loss_csv.empty() ? nullptr : loss_csv.c_str(),
                         resume.empty() ? nullptr : resume.c_str(), progress_printer, &quiet);
        canet_config_destroy(cfg);
        if (st != CANET_OK) return report_failure(st);
        std::printf("checkpoint written to %s\n", checkpoint.c_str());
        return 0;
    }

    // eval and predict share the model + flag-override plumbing.
    canet_model* model = nullptr;
    canet_status st = canet_model_load(checkpoint.c_str(), &model);
    if (st != CANET_OK) return report_failure(st);

    std::vector<std::pair<std::string, std::string>> overrides;
    if (k >= 0) overrides.emplace_back("eval.k", std::to_string(k));
    if (!fusion.empty()) overrides.emplace_back("eval.fusion", fusion);
    if (!annotation.empty()) overrides.emplace_back("eval.annotation", annotation);
    if (!scales.empty()) overrides.emplace_back("eval.scales", scales);
    if (iterations >= 0) overrides.emplace_back("eval.iterations", std::to_string(iterations));
    if (episodes >= 0) overrides.emplace_back("eval.episodes", std::to_string(episodes));
    if (has_seed) overrides.emplace_back("eval.seed", std::to_string(seed));
    if (!phase.empty()) overrides.emplace_back("eval.phase", phase);

    canet_config* cfg = nullptr;
    st = build_config(config_path, model, sets, overrides, &cfg);
    if (st != CANET_OK) {
        canet_model_destroy(model);
        return report_failure(st);
    }

    int exit_code = 0;
    if (eval->parsed()) {
        canet_report* report = nullptr;
        st = canet_evaluate(model, cfg, &report);
        if (st == CANET_OK) {
            std::vector<char> buf(1 << 16);
            st = canet_report_text(report, buf.data(), buf.size());
            if (st == CANET_OK) std::fputs(buf.data(), stdout);
            if (st == CANET_OK && !report_path.empty()) st = canet_report_write(report, report_path.c_str());
        }
        canet_report_destroy(report);
        if (st != CANET_OK) exit_code = report_failure(st);
    } else {
        st = canet_predict(model, cfg, index, out_dir.c_str(), dump_iterations);
        if (st != CANET_OK)
            exit_code = report_failure(st);
        else
            std::printf("wrote episode artifacts to %s\n", out_dir.c_str());
    }

    canet_config_destroy(cfg);
    canet_model_destroy(model);
    return exit_code;
}
