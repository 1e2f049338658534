// Acceptance harness: runs the ten release criteria end to end and prints
// exactly one PASS/FAIL line per criterion. Exits nonzero if any fail.
//
// Usage: acceptance <path-to-cli-binary>
// The CLI path is only needed for criterion 10 (command-line smoke run).

#include <sys/wait.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "canet/checkpoint.hpp"
#include "canet/eval.hpp"
#include "canet/train.hpp"
#include "test_util.hpp"

using namespace canet;
using canet::testing::bitwise_equal;
using canet::testing::check_gradients;
using canet::testing::GradCheckResult;
using canet::testing::random_tensor;

namespace {

bool g_all_pass = true;

void report(int id, bool pass, const std::string& text) {
    std::printf("%s criterion %d: %s\n", pass ? "PASS" : "FAIL", id, text.c_str());
    std::fflush(stdout);
    g_all_pass = g_all_pass && pass;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string fmt(double v, int digits = 4) {
    std::ostringstream os;
    os.setf(std::ios::fixed);
    os.precision(digits);
    os << v;
    return os.str();
}

// Values kept away from zero so ReLU finite differences never straddle the kink.
Tensor kink_free_tensor(Shape shape, Rng& rng) {
    std::vector<double> data(static_cast<std::size_t>(shape_numel(shape)));
    for (double& v : data) {
        const double n = rng.normal(0.0, 1.0);
        v = n + (n >= 0.0 ? 0.05 : -0.05);
    }
    return Tensor::from_data(std::move(shape), std::move(data), true);
}

// ---------------------------------------------------------------------------
// Criterion 1: finite-difference gradient checks for every differentiable op
// plus a full-model check on a 16x16 episode.
// ---------------------------------------------------------------------------

struct GradSuite {
    double worst = 0.0;
    std::string worst_name;
    int checks = 0;

    void run(const std::string& name, const std::function<Tensor()>& forward, std::vector<Tensor> leaves, Rng& rng,
             int probes = 60) {
        const GradCheckResult r = check_gradients(forward, std::move(leaves), probes, rng);
        ++checks;
        if (r.max_rel_error > worst) {
            worst = r.max_rel_error;
            worst_name = name;
        }
    }
};

void criterion_gradients() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(414243);
    GradSuite suite;

    // conv2d, two geometries (strided/padded and dilated)
    {
        Tensor x = random_tensor({3, 6, 7}, rng);
        Tensor w = random_tensor({4, 3, 3, 3}, rng, 0.5);
        Tensor b = random_tensor({4}, rng, 0.5);
        auto fwd = [&] { return ops::sum_all(ops::conv2d(x, Conv2dParams::make(w, b, 2, 1, 1))); };
        suite.run("conv2d/s2", fwd, {x, w, b}, rng);
        Tensor w2 = random_tensor({2, 3, 3, 3}, rng, 0.5);
        Tensor b2 = random_tensor({2}, rng, 0.5);
        auto fwd2 = [&] {
            const Tensor y = ops::conv2d(x, Conv2dParams::make(w2, b2, 1, 2, 2));
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("conv2d/d2", fwd2, {x, w2, b2}, rng);
    }
    // relu (kink-free inputs)
    {
        Tensor x = kink_free_tensor({3, 5, 5}, rng);
        auto fwd = [&] { return ops::sum_all(ops::relu(x)); };
        suite.run("relu", fwd, {x}, rng);
    }
    // max_pool2d
    {
        Tensor x = random_tensor({2, 6, 6}, rng);
        auto fwd = [&] {
            const Tensor y = ops::max_pool2d(x, 2, 2);
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("max_pool2d", fwd, {x}, rng);
    }
    // bilinear_resize up and down
    {
        Tensor x = random_tensor({2, 3, 4}, rng);
        auto up = [&] {
            const Tensor y = ops::bilinear_resize(x, 7, 9);
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("bilinear/up", up, {x}, rng);
        Tensor z = random_tensor({2, 9, 11}, rng);
        auto down = [&] {
            const Tensor y = ops::bilinear_resize(z, 3, 4);
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("bilinear/down", down, {z}, rng);
    }
    // add, elementwise_mul, scale
    {
        Tensor a = random_tensor({2, 4, 4}, rng);
        Tensor b = random_tensor({2, 4, 4}, rng);
        auto fadd = [&] { return ops::sum_all(ops::elementwise_mul(ops::add(a, b), ops::add(a, b))); };
        suite.run("add", fadd, {a, b}, rng);
        auto fmul = [&] { return ops::sum_all(ops::elementwise_mul(a, b)); };
        suite.run("elementwise_mul", fmul, {a, b}, rng);
        auto fscale = [&] { return ops::sum_all(ops::scale(ops::elementwise_mul(a, a), -1.75)); };
        suite.run("scale", fscale, {a}, rng);
    }
    // concat_channels (vector overload drives the pairwise one)
    {
        Tensor a = random_tensor({2, 3, 4}, rng);
        Tensor b = random_tensor({3, 3, 4}, rng);
        Tensor c = random_tensor({1, 3, 4}, rng);
        auto fwd = [&] {
            const Tensor y = ops::concat_channels({a, b, c});
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("concat_channels", fwd, {a, b, c}, rng);
    }
    // softmax_channels weighted by a constant field
    {
        Tensor x = random_tensor({4, 3, 3}, rng);
        Rng crng(5);
        const Tensor coeff = random_tensor({4, 3, 3}, crng, 1.0, false);
        auto fwd = [&] { return ops::sum_all(ops::elementwise_mul(ops::softmax_channels(x), coeff)); };
        suite.run("softmax_channels", fwd, {x}, rng);
    }
    // global_avg_pool, sum_spatial, reshape, tile_channels
    {
        Tensor x = random_tensor({3, 4, 5}, rng);
        auto fgap = [&] {
            const Tensor y = ops::global_avg_pool(x);
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("global_avg_pool", fgap, {x}, rng);
        auto fsum = [&] {
            const Tensor y = ops::sum_spatial(x);
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("sum_spatial", fsum, {x}, rng);
        auto fresh = [&] {
            const Tensor y = ops::reshape(x, {5, 4, 3});
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("reshape", fresh, {x}, rng);
        Tensor v = random_tensor({6}, rng);
        auto ftile = [&] {
            const Tensor y = ops::tile_channels(v, 3, 2);
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("tile_channels", ftile, {v}, rng);
    }
    // mul_spatial and div_by_scalar (masked-pool building blocks)
    {
        Tensor f = random_tensor({3, 4, 5}, rng);
        Tensor m = random_tensor({4, 5}, rng);
        auto fwd = [&] {
            const Tensor y = ops::mul_spatial(f, m);
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("mul_spatial", fwd, {f, m}, rng);
        Tensor x = random_tensor({8}, rng);
        std::vector<double> sv{2.0 + std::abs(rng.normal(0.0, 1.0))};
        Tensor s = Tensor::from_data({1}, sv, true);
        auto fdiv = [&] {
            const Tensor y = ops::div_by_scalar(x, s);
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("div_by_scalar", fdiv, {x, s}, rng);
    }
    // cross-entropy heads on top of a softmax
    {
        Tensor x = random_tensor({2, 4, 4}, rng);
        BinaryMask target(4, 4);
        for (int y = 0; y < 4; ++y)
            for (int xx = 0; xx < 4; ++xx) target.at(y, xx) = (y + xx) % 2;
        auto fwd = [&] { return ops::cross_entropy_spatial(ops::softmax_channels(x), target); };
        suite.run("cross_entropy_spatial", fwd, {x}, rng);

        Tensor z = random_tensor({5, 3, 3}, rng);
        std::vector<int> idx(9);
        for (int i = 0; i < 9; ++i) idx[static_cast<std::size_t>(i)] = i % 5;
        auto fidx = [&] { return ops::cross_entropy_indices(ops::softmax_channels(z), idx); };
        suite.run("cross_entropy_indices", fidx, {z}, rng);
    }
    // attention normalization and fusion ops
    {
        std::vector<Tensor> logits, feats;
        for (int i = 0; i < 4; ++i) logits.push_back(random_tensor({1}, rng));
        for (int i = 0; i < 4; ++i) feats.push_back(random_tensor({2, 3, 3}, rng));
        std::vector<Tensor> leaves = logits;
        leaves.insert(leaves.end(), feats.begin(), feats.end());
        auto fwd = [&] {
            const Tensor y = ops::weighted_sum(feats, ops::softmax_stack(logits));
            return ops::sum_all(ops::elementwise_mul(y, y));
        };
        suite.run("softmax_stack+weighted_sum", fwd, leaves, rng, 80);
    }

    // Full model on a 16x16 1-shot episode: loss through backbone, DCM, and IOM,
    // with gradients probed at every trainable head and the query image itself.
    double model_worst = 0.0;
    {
        RunConfig rc;
        rc.set("dataset.image_size", "16");
        rc.set("backbone.embed_dim", "8");
        rc.set("backbone.stage_channels", "4,4,8,8");
        rc.set("iom.resblocks", "1");
        const DatasetConfig dcfg = make_dataset_config(rc);
        const ClassSplit split = ClassSplit::make(dcfg);
        const TrainConfig tcfg = make_train_config(rc);
        Model model = build_model(make_backbone_config(rc), make_iom_config(rc), tcfg.init_seed);

        Rng erng(episode_seed(11, Phase::Train, 0));
        Episode ep = sample_episode(split, Phase::Train, 1, dcfg.image_size, dcfg, erng);
        ep.query_image.set_requires_grad(true);

        std::vector<Tensor> leaves{ep.query_image};
        for (const auto& [name, p] : model.state.params())
            if (p.trainable && name.rfind("attention.", 0) != 0) leaves.push_back(p.tensor);

        auto fwd = [&] {
            Rng drng(3);
            return training_step(model, split, ep, nullptr, model.iom.p_r, drng).loss;
        };
        const GradCheckResult r = check_gradients(fwd, leaves, 80, rng);
        model_worst = r.max_rel_error;
    }

    const double elapsed = seconds_since(t0);
    const bool pass = suite.worst <= 1e-3 && model_worst <= 1e-3 && elapsed <= 120.0;
    report(1, pass,
           "gradient suite: " + std::to_string(suite.checks) + " op checks (worst rel err " + fmt(suite.worst, 8) +
               " at " + suite.worst_name + "), full 16x16 model rel err " + fmt(model_worst, 8) + ", " +
               fmt(elapsed, 1) + "s (limits 1e-3, 120s)");
}

// ---------------------------------------------------------------------------
// Criterion 2: brute-force oracles for conv2d, masked pooling, and the metrics.
// ---------------------------------------------------------------------------

Tensor oracle_conv2d(const Tensor& x, const Tensor& w, const Tensor& b, int stride, int dilation, int pad) {
    const int in_c = x.dim(0), in_h = x.dim(1), in_w = x.dim(2);
    const int out_c = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    const int eff_h = dilation * (kh - 1) + 1, eff_w = dilation * (kw - 1) + 1;
    const int out_h = (in_h + 2 * pad - eff_h) / stride + 1;
    const int out_w = (in_w + 2 * pad - eff_w) / stride + 1;
    std::vector<double> out(static_cast<std::size_t>(out_c) * out_h * out_w, 0.0);
    const std::vector<double>& xd = x.data();
    const std::vector<double>& wd = w.data();
    const std::vector<double>& bd = b.data();
    for (int oc = 0; oc < out_c; ++oc)
        for (int oy = 0; oy < out_h; ++oy)
            for (int ox = 0; ox < out_w; ++ox) {
                double acc = bd[static_cast<std::size_t>(oc)];
                for (int ic = 0; ic < in_c; ++ic)
                    for (int ky = 0; ky < kh; ++ky)
                        for (int kx = 0; kx < kw; ++kx) {
                            const int iy = oy * stride - pad + ky * dilation;
                            const int ix = ox * stride - pad + kx * dilation;
                            if (iy < 0 || iy >= in_h || ix < 0 || ix >= in_w) continue;
                            acc += xd[(static_cast<std::size_t>(ic) * in_h + iy) * in_w + ix] *
                                   wd[((static_cast<std::size_t>(oc) * in_c + ic) * kh + ky) * kw + kx];
                        }
                out[(static_cast<std::size_t>(oc) * out_h + oy) * out_w + ox] = acc;
            }
    return Tensor::from_data({out_c, out_h, out_w}, std::move(out));
}

// Corner-aligned bilinear sample of a [h,w] grid, written independently of ops.
double oracle_bilerp(const std::vector<double>& grid, int h, int w, double sy, double sx) {
    const int y0 = std::min(static_cast<int>(sy), h - 1), x0 = std::min(static_cast<int>(sx), w - 1);
    const int y1 = std::min(y0 + 1, h - 1), x1 = std::min(x0 + 1, w - 1);
    const double fy = sy - y0, fx = sx - x0;
    const double a = grid[static_cast<std::size_t>(y0) * w + x0], bb = grid[static_cast<std::size_t>(y0) * w + x1];
    const double c = grid[static_cast<std::size_t>(y1) * w + x0], d = grid[static_cast<std::size_t>(y1) * w + x1];
    return a * (1 - fy) * (1 - fx) + bb * (1 - fy) * fx + c * fy * (1 - fx) + d * fy * fx;
}

void criterion_oracles() {
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(909);
    double conv_err = 0.0;
    for (int t = 0; t < 100; ++t) {
        const int in_c = rng.uniform_int(1, 3), out_c = rng.uniform_int(1, 3);
        const int kh = rng.uniform_int(1, 3), kw = rng.uniform_int(1, 3);
        const int stride = rng.uniform_int(1, 2), dil = rng.uniform_int(1, 2), pad = rng.uniform_int(0, 2);
        const int eff_h = dil * (kh - 1) + 1, eff_w = dil * (kw - 1) + 1;
        const int in_h = eff_h + rng.uniform_int(0, 5), in_w = eff_w + rng.uniform_int(0, 5);
        if (in_h + 2 * pad < eff_h || in_w + 2 * pad < eff_w) continue;
        const Tensor x = random_tensor({in_c, in_h, in_w}, rng, 1.0, false);
        const Tensor w = random_tensor({out_c, in_c, kh, kw}, rng, 1.0, false);
        const Tensor b = random_tensor({out_c}, rng, 1.0, false);
        const Tensor got = ops::conv2d(x, Conv2dParams::make(w, b, stride, dil, pad));
        const Tensor want = oracle_conv2d(x, w, b, stride, dil, pad);
        for (int i = 0; i < got.numel(); ++i)
            conv_err = std::max(conv_err, std::abs(got.value_at(i) - want.value_at(i)));
    }

    // masked average pool vs resample-then-average, 50 random cases
    double pool_err = 0.0;
    int pool_cases = 0;
    while (pool_cases < 50) {
        const int C = rng.uniform_int(1, 4);
        const int fh = rng.uniform_int(2, 5), fw = rng.uniform_int(2, 5);
        const int H = fh * 8, W = fw * 8;
        const Tensor feat = random_tensor({C, fh, fw}, rng, 1.0, false);
        BinaryMask mask(H, W);
        for (auto& v : mask.v) v = rng.uniform() < 0.3 ? 1 : 0;
        std::vector<double> mgrid(mask.v.begin(), mask.v.end());
        std::vector<double> weights(static_cast<std::size_t>(fh) * fw);
        double wsum = 0.0;
        for (int y = 0; y < fh; ++y)
            for (int x = 0; x < fw; ++x) {
                const double sy = fh == 1 ? 0.0 : static_cast<double>(y) * (H - 1) / (fh - 1);
                const double sx = fw == 1 ? 0.0 : static_cast<double>(x) * (W - 1) / (fw - 1);
                weights[static_cast<std::size_t>(y) * fw + x] = oracle_bilerp(mgrid, H, W, sy, sx);
                wsum += weights[static_cast<std::size_t>(y) * fw + x];
            }
        if (wsum < 1e-6) continue;
        ++pool_cases;
        const Tensor got = masked_average_pool(feat, mask);
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int i = 0; i < fh * fw; ++i)
                acc += feat.value_at(c * fh * fw + i) * weights[static_cast<std::size_t>(i)];
            pool_err = std::max(pool_err, std::abs(got.value_at(c) - acc / wsum));
        }
    }

    // metric oracles from hand pixel counts
    bool metrics_ok = true;
    {
        BinaryMask a(4, 4), b(4, 4);
        a.at(0, 0) = a.at(0, 1) = a.at(1, 0) = 1;  // 3 px
        b.at(0, 0) = b.at(2, 2) = 1;               // 2 px, overlap 1 -> IoU 1/4
        metrics_ok = metrics_ok && iou(a, b) == 0.25;
        metrics_ok = metrics_ok && iou(BinaryMask(3, 3), BinaryMask(3, 3)) == 1.0;

        MetricAccumulator acc;
        // class 7: (inter,union) = (1,10) then (1,2) -> ratio of sums 2/12
        BinaryMask p1(4, 4), t1(4, 4);
        p1.at(0, 0) = 1;
        t1.at(0, 0) = 1;
        for (int i = 0; i < 9; ++i) t1.v[static_cast<std::size_t>(i) + 1] = 1;  // union 10
        acc.add(7, p1, t1);
        BinaryMask p2(4, 4), t2(4, 4);
        p2.at(3, 3) = 1;
        t2.at(3, 3) = t2.at(3, 2) = 1;
        acc.add(7, p2, t2);
        // class 9: perfect 2-px match -> 1.0; meanIoU = (2/12 + 1)/2
        BinaryMask p3(4, 4), t3(4, 4);
        p3.at(1, 1) = p3.at(1, 2) = t3.at(1, 1) = t3.at(1, 2) = 1;
        acc.add(9, p3, t3);
        metrics_ok = metrics_ok && std::abs(acc.mean_iou() - (2.0 / 12.0 + 1.0) / 2.0) < 1e-12;
        // FB-IoU from aggregate pixel counts over the same three episodes
        const double fg = (1.0 + 1.0 + 2.0) / (10.0 + 2.0 + 2.0);
        const double bg_inter = (16.0 - 10.0) + (16.0 - 2.0) + (16.0 - 2.0);
        const double bg_union = (16.0 - 1.0) + (16.0 - 1.0) + (16.0 - 2.0);
        metrics_ok = metrics_ok && std::abs(acc.fb_iou() - 0.5 * (fg + bg_inter / bg_union)) < 1e-12;
    }

    const double elapsed = seconds_since(t0);
    const bool pass = conv_err <= 1e-10 && pool_err <= 1e-10 && metrics_ok && elapsed <= 60.0;
    report(2, pass,
           "oracle suite: conv2d max |diff| " + fmt(conv_err, 12) + " over 100 cases, masked pool max |diff| " +
               fmt(pool_err, 12) + " over 50 cases, metric hand cases " + (metrics_ok ? "exact" : "WRONG") + ", " +
               fmt(elapsed, 1) + "s (limits 1e-10, 60s)");
}

// ---------------------------------------------------------------------------
// Criterion 3: structural invariants.
// ---------------------------------------------------------------------------

RunConfig tiny_run_config() {
    RunConfig rc;
    rc.set("dataset.image_size", "24");
    rc.set("backbone.embed_dim", "8");
    rc.set("backbone.stage_channels", "4,4,8,8");
    rc.set("iom.aspp_rates", "2,3");
    rc.set("iom.resblocks", "1");
    rc.set("train.epochs", "2");
    rc.set("train.episodes_per_epoch", "4");
    rc.set("train.batch_episodes", "2");
    rc.set("train.warmup_epochs", "1");
    rc.set("train.warmup_scenes_per_epoch", "4");
    rc.set("eval.episodes", "4");
    rc.set("eval.iterations", "2");
    return rc;
}

void criterion_invariants() {
    std::vector<std::string> failures;
    auto expect = [&](bool ok, const std::string& what) {
        if (!ok) failures.push_back(what);
    };

    // (a) softmax normalizations sum to 1 +- 1e-6
    {
        Rng rng(21);
        std::vector<Tensor> logits;
        for (double v : {3.0, -2.0, 1e4, 0.25, -9999.0})
            logits.push_back(Tensor::from_data({1}, {v}));
        const Tensor w = ops::softmax_stack(logits);
        double sum = 0.0;
        for (int i = 0; i < w.numel(); ++i) sum += w.value_at(i);
        expect(std::abs(sum - 1.0) <= 1e-6, "attention softmax does not sum to 1");

        const Tensor x = random_tensor({2, 5, 5}, rng, 4.0, false);
        const Tensor p = ops::softmax_channels(x);
        bool ok = true;
        for (int i = 0; i < 25; ++i) ok = ok && std::abs(p.value_at(i) + p.value_at(25 + i) - 1.0) <= 1e-6;
        expect(ok, "per-location softmax does not sum to 1");
    }

    // (b) with one support, the attention pipeline IS the 1-shot pipeline
    {
        const RunConfig rc = tiny_run_config();
        const DatasetConfig dcfg = make_dataset_config(rc);
        const ClassSplit split = ClassSplit::make(dcfg);
        Model model = build_model(make_backbone_config(rc), make_iom_config(rc), 99);
        Rng erng(episode_seed(5, Phase::Test, 3));
        const Episode ep = sample_episode(split, Phase::Test, 1, dcfg.image_size, dcfg, erng);
        PredictOptions attn;
        attn.fusion = FusionMode::Attention;
        PredictOptions favg = attn;
        favg.fusion = FusionMode::FeatureAvg;
        const EpisodePrediction a = predict_episode(model, ep, attn);
        const EpisodePrediction f = predict_episode(model, ep, favg);
        bool ok = a.mask.v == f.mask.v && a.iteration_probs.size() == f.iteration_probs.size();
        for (std::size_t i = 0; ok && i < a.iteration_probs.size(); ++i)
            ok = bitwise_equal(a.iteration_probs[i], f.iteration_probs[i]);
        expect(ok, "k=1 attention pipeline is not bit-equal to the 1-shot pipeline");
        expect(a.attention_weights == std::vector<double>{1.0}, "k=1 attention weight is not exactly 1");
    }

    // (c) fusion is invariant to support order
    {
        Rng rng(31);
        std::vector<Tensor> feats;
        std::vector<double> lambdas;
        for (int i = 0; i < 5; ++i) {
            feats.push_back(random_tensor({3, 4, 4}, rng, 1.0, false));
            lambdas.push_back(rng.normal(0.0, 2.0));
        }
        const std::vector<int> perm{3, 0, 4, 1, 2};
        std::vector<Tensor> pf;
        std::vector<double> pl;
        for (int i : perm) {
            pf.push_back(feats[static_cast<std::size_t>(i)]);
            pl.push_back(lambdas[static_cast<std::size_t>(i)]);
        }
        const Tensor fused = fuse_attention(feats, normalize_weights(lambdas));
        const Tensor fused_p = fuse_attention(pf, normalize_weights(pl));
        double diff = 0.0;
        for (int i = 0; i < fused.numel(); ++i)
            diff = std::max(diff, std::abs(fused.value_at(i) - fused_p.value_at(i)));
        expect(diff <= 1e-12, "attention fusion is not permutation invariant");
        const Tensor avg = fuse_feature_avg(feats), avg_p = fuse_feature_avg(pf);
        diff = 0.0;
        for (int i = 0; i < avg.numel(); ++i) diff = std::max(diff, std::abs(avg.value_at(i) - avg_p.value_at(i)));
        expect(diff <= 1e-12, "feature averaging is not permutation invariant");
    }

    // (d) residual identity: zeroed fuse branch leaves the features bit-unchanged
    {
        Rng rng(41);
        IomConfig icfg;
        icfg.channels = 6;
        icfg.aspp_rates = {2, 3};
        icfg.num_vanilla_resblocks = 1;
        ModelState state;
        Rng irng(7);
        init_iom_params(state, icfg, irng);
        for (const char* name : {"iom.fuse.conv1.w", "iom.fuse.conv1.b", "iom.fuse.conv2.w", "iom.fuse.conv2.b"}) {
            Tensor& t = state.get(name);
            std::fill(t.raw_data().begin(), t.raw_data().end(), 0.0);
        }
        const Tensor x = random_tensor({6, 5, 5}, rng, 1.0, false);
        const Tensor fused = residual_fuse(x, empty_confidence(5, 5), state);
        expect(bitwise_equal(fused, x), "zero-initialized residual fuse is not the identity");
    }

    // (e) frozen backbone immutability across a training run
    {
        RunConfig rc = tiny_run_config();
        rc.set("train.warmup_epochs", "0");
        const DatasetConfig dcfg = make_dataset_config(rc);
        const ClassSplit split = ClassSplit::make(dcfg);
        Model model = build_model(make_backbone_config(rc), make_iom_config(rc), make_train_config(rc).init_seed);
        std::map<std::string, Tensor> before;
        for (const auto& [name, p] : model.state.params())
            if (name.rfind("backbone.", 0) == 0) before[name] = p.tensor.clone();
        (void)train(model, split, dcfg, make_train_config(rc), rc, TrainPaths{});
        bool ok = true;
        for (const auto& [name, t] : before) ok = ok && bitwise_equal(model.state.get(name), t);
        expect(ok, "frozen backbone parameters changed during training");
    }

    // (f) checkpoint round-trip is bit-exact and re-saving is byte-identical
    {
        const RunConfig rc = tiny_run_config();
        Model model = build_model(make_backbone_config(rc), make_iom_config(rc), 1234);
        const auto dir = std::filesystem::temp_directory_path();
        const std::string p1 = (dir / "acceptance_ck_a.bin").string();
        const std::string p2 = (dir / "acceptance_ck_b.bin").string();
        save_checkpoint(p1, model, rc);
        Model loaded = load_model(p1);
        bool ok = loaded.state.size() == model.state.size();
        for (const auto& [name, p] : model.state.params())
            ok = ok && loaded.state.has(name) && bitwise_equal(loaded.state.get(name), p.tensor);
        save_checkpoint(p2, loaded, rc);
        auto slurp = [](const std::string& path) {
            std::ifstream in(path, std::ios::binary);
            return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        };
        ok = ok && !slurp(p1).empty() && slurp(p1) == slurp(p2);
        expect(ok, "checkpoint round-trip is not bit-exact");
        std::filesystem::remove(p1);
        std::filesystem::remove(p2);
    }

    // (g) seeded determinism of train -> eval
    {
        const RunConfig rc = tiny_run_config();
        const DatasetConfig dcfg = make_dataset_config(rc);
        const ClassSplit split = ClassSplit::make(dcfg);
        const TrainConfig tcfg = make_train_config(rc);
        const EvalConfig ecfg = make_eval_config(rc);
        Model m1 = build_model(make_backbone_config(rc), make_iom_config(rc), tcfg.init_seed);
        Model m2 = build_model(make_backbone_config(rc), make_iom_config(rc), tcfg.init_seed);
        (void)train(m1, split, dcfg, tcfg, rc, TrainPaths{});
        (void)train(m2, split, dcfg, tcfg, rc, TrainPaths{});
        bool ok = true;
        for (const auto& [name, p] : m1.state.params()) ok = ok && bitwise_equal(p.tensor, m2.state.get(name));
        const EvalReport r1 = evaluate(m1, split, dcfg, ecfg);
        const EvalReport r2 = evaluate(m2, split, dcfg, ecfg);
        ok = ok && r1.mean_iou == r2.mean_iou && r1.fb_iou == r2.fb_iou;
        expect(ok, "train->eval is not deterministic under a fixed seed");
    }

    std::string detail = "invariants: softmax sums, k=1 degeneracy, permutation invariance, residual zero-identity, "
                         "frozen backbone, checkpoint round-trip, train->eval determinism";
    if (!failures.empty()) detail = "invariants: " + failures.front() + " (+" +
                                    std::to_string(failures.size() - 1) + " more)";
    report(3, failures.empty(), detail);
}

// ---------------------------------------------------------------------------
// Criteria 4-8: the standard desk run and its ablation trends.
// ---------------------------------------------------------------------------

struct DeskRun {
    RunConfig rc;
    DatasetConfig dcfg;
    ClassSplit split;
    Model model;
    double train_seconds = 0.0;
};

DeskRun desk_run() {
    DeskRun d{RunConfig(), DatasetConfig{}, ClassSplit{}, Model{}, 0.0};
    d.dcfg = make_dataset_config(d.rc);
    d.split = ClassSplit::make(d.dcfg);
    const TrainConfig tcfg = make_train_config(d.rc);
    d.model = build_model(make_backbone_config(d.rc), make_iom_config(d.rc), tcfg.init_seed);
    const auto t0 = std::chrono::steady_clock::now();
    (void)train(d.model, d.split, d.dcfg, tcfg, d.rc, TrainPaths{});
    d.train_seconds = seconds_since(t0);
    return d;
}

EvalConfig desk_eval_config(std::uint64_t seed) {
    EvalConfig e;
    e.episodes = 500;
    e.seed = seed;
    return e;
}

const std::uint64_t kEvalSeeds[3] = {2026, 2027, 2028};

void criteria_trends() {
    DeskRun d = desk_run();

    // Criterion 4: iterative refinement, iterations 4 vs 0, 3 eval seeds.
    double sum4 = 0.0, sum0 = 0.0;
    EvalReport pixel_ref;  // seed 2026, iterations 4 — reused by criteria 6-8
    for (std::uint64_t seed : kEvalSeeds) {
        EvalConfig e4 = desk_eval_config(seed);
        const EvalReport r4 = evaluate(d.model, d.split, d.dcfg, e4);
        EvalConfig e0 = desk_eval_config(seed);
        e0.iterations = 0;
        const EvalReport r0 = evaluate(d.model, d.split, d.dcfg, e0);
        if (seed == kEvalSeeds[0]) pixel_ref = r4;
        sum4 += r4.mean_iou;
        sum0 += r0.mean_iou;
    }
    const double gain = (sum4 - sum0) / 3.0;
    report(4, gain >= 0.01 && d.train_seconds <= 1800.0,
           "iterative refinement: meanIoU " + fmt(sum4 / 3.0) + " at T=4 vs " + fmt(sum0 / 3.0) +
               " at T=0, gain " + fmt(gain) + " (needs >= 0.0100; desk train " + fmt(d.train_seconds, 0) +
               "s, 3 eval seeds x 500 episodes)");

    // Criterion 5: 5-shot fusion ordering, all four modes reported.
    std::map<std::string, double> fusion_mean;
    for (FusionMode mode : {FusionMode::Attention, FusionMode::FeatureAvg, FusionMode::MaskAvg, FusionMode::MaskOr}) {
        double total = 0.0;
        for (std::uint64_t seed : kEvalSeeds) {
            EvalConfig e = desk_eval_config(seed);
            e.k = 5;
            e.fusion = mode;
            total += evaluate(d.model, d.split, d.dcfg, e).mean_iou;
        }
        fusion_mean[fusion_mode_name(mode)] = total / 3.0;
    }
    const bool c5 = fusion_mean["attention"] >= fusion_mean["mask-or"];
    report(5, c5,
           "5-shot fusion: attention " + fmt(fusion_mean["attention"]) + ", feature-avg " +
               fmt(fusion_mean["feature-avg"]) + ", mask-avg " + fmt(fusion_mean["mask-avg"]) + ", mask-or " +
               fmt(fusion_mean["mask-or"]) + " (needs attention >= mask-or; 3 eval seeds x 500 episodes)");

    // Criterion 6: bounding-box annotations track pixel annotations.
    EvalConfig ebox = desk_eval_config(kEvalSeeds[0]);
    ebox.annotation = AnnotationMode::Bbox;
    const EvalReport rbox = evaluate(d.model, d.split, d.dcfg, ebox);
    const bool c6 = std::abs(pixel_ref.mean_iou - rbox.mean_iou) <= 0.05 &&
                    rbox.mean_iou > rbox.baseline_all_fg_mean_iou;
    report(6, c6,
           "bbox annotation: meanIoU " + fmt(rbox.mean_iou) + " vs pixel " + fmt(pixel_ref.mean_iou) +
               " (needs |diff| <= 0.05) and above all-fg baseline " + fmt(rbox.baseline_all_fg_mean_iou));

    // Criterion 7: multi-scale inference does not degrade.
    EvalConfig ems = desk_eval_config(kEvalSeeds[0]);
    ems.scales = {0.7, 1.0, 1.3};
    const EvalReport rms = evaluate(d.model, d.split, d.dcfg, ems);
    report(7, rms.mean_iou >= pixel_ref.mean_iou - 0.005,
           "multi-scale [0.7,1,1.3]: meanIoU " + fmt(rms.mean_iou) + " vs single-scale " + fmt(pixel_ref.mean_iou) +
               " (needs >= single - 0.0050)");

    // Criterion 8: generalization floor over the all-foreground baseline.
    const bool c8 = pixel_ref.mean_iou > pixel_ref.baseline_all_fg_mean_iou + 0.10;
    report(8, c8,
           "generalization: test meanIoU " + fmt(pixel_ref.mean_iou) + " vs all-fg baseline " +
               fmt(pixel_ref.baseline_all_fg_mean_iou) + " (needs baseline + 0.1000)");
}

// ---------------------------------------------------------------------------
// Criterion 9: mask-dropout reset statistics.
// ---------------------------------------------------------------------------

void criterion_dropout() {
    Rng rng(606060);
    ConfidenceMap prev = empty_confidence(3, 3);
    std::fill(prev.probs.raw_data().begin(), prev.probs.raw_data().end(), 0.5);
    int resets = 0;
    const int n = 10000;
    for (int i = 0; i < n; ++i)
        if (mask_dropout(prev, 0.7, rng).is_empty()) ++resets;
    const double rate = static_cast<double>(resets) / n;
    report(9, rate >= 0.68 && rate <= 0.72,
           "mask dropout: reset rate " + fmt(rate) + " over 10000 draws at p_r=0.7 (needs 0.70 +- 0.02)");
}

// ---------------------------------------------------------------------------
// Criterion 10: command-line smoke run through the installed binary.
// ---------------------------------------------------------------------------

int run_cmd(const std::string& cmd, const std::string& log) {
    const std::string full = cmd + " >> " + log + " 2>&1";
    const int status = std::system(full.c_str());
    return status < 0 ? status : WEXITSTATUS(status);
}

void criterion_cli(const std::string& cli) {
    const auto t0 = std::chrono::steady_clock::now();
    const auto dir = std::filesystem::temp_directory_path() / "canet_acceptance_cli";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    const std::string log = (dir / "smoke.log").string();
    const std::string ck = (dir / "smoke.ck").string();
    const std::string smoke =
        " --set dataset.image_size=32 --set train.epochs=2 --set train.episodes_per_epoch=8"
        " --set train.warmup_epochs=1 --set train.warmup_scenes_per_epoch=8";

    std::vector<std::string> steps;
    bool ok = true;
    auto step = [&](const std::string& name, const std::string& args) {
        if (!ok) return;
        const int code = run_cmd("'" + cli + "' " + args, log);
        if (code != 0) {
            ok = false;
            steps.push_back(name + " exited " + std::to_string(code));
        }
    };

    step("gen-data", "gen-data --phase train --k 1 --count 4 --seed 5 --out '" + (dir / "data").string() + "'" +
                         " --set dataset.image_size=32");
    step("train", "train --checkpoint '" + ck + "' --quiet" + smoke);
    step("eval", "eval --checkpoint '" + ck + "' --episodes 20 --report '" + (dir / "report.txt").string() + "'");
    step("predict", "predict --checkpoint '" + ck + "' --index 3 --iterations 4 --dump-iterations --out '" +
                        (dir / "pred").string() + "'");

    int iteration_files = 0;
    for (int t = 0; t <= 4; ++t)
        if (std::filesystem::exists(dir / "pred" / ("iteration_" + std::to_string(t) + ".pgm"))) ++iteration_files;
    ok = ok && iteration_files == 5 && std::filesystem::exists(dir / "data" / "manifest.txt") &&
         std::filesystem::exists(dir / "report.txt");

    const double elapsed = seconds_since(t0);
    ok = ok && elapsed < 180.0;
    std::string detail = "cli smoke: gen-data -> train -> eval -> predict, " + std::to_string(iteration_files) +
                         "/5 iteration files, " + fmt(elapsed, 1) + "s (limit 180s)";
    if (!steps.empty()) detail = "cli smoke: " + steps.front();
    report(10, ok, detail);
    if (ok) std::filesystem::remove_all(dir);
}

}  // namespace

int main(int argc, char** argv) {
    if (argc < 2) {
        std::fprintf(stderr, "usage: acceptance <path-to-cli-binary>\n");
        return 2;
    }

    criterion_gradients();
    criterion_oracles();
    criterion_invariants();
    criteria_trends();
    criterion_dropout();
    criterion_cli(argv[1]);

    return g_all_pass ? 0 : 1;
}
