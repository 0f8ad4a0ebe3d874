// Acceptance suite: one PASS/FAIL line per criterion, exit status 0 only when
// every selected criterion passes. `--only N` runs a single criterion.

#include "devstab/codec.hpp"
#include "devstab/envsim.hpp"
#include "devstab/metrics.hpp"
#include "devstab/stability.hpp"
#include "devstab/synth.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <optional>
#include <set>
#include <sstream>
#include <string>

using namespace devstab;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

// ---------------------------------------------------------------------------
// Desk-scale setup shared by criteria 4, 5 and 7.

constexpr int kDeskSize = 32;

struct DeskData {
    std::vector<LabeledImage> train, val, eval;
};

const DeskData& desk_data() {
    static const DeskData d = [] {
        DeskData out;
        auto all = synth::make_dataset(4000, 11, kDeskSize, "tr");
        out.train.assign(all.begin(), all.begin() + 3500);
        out.val.assign(all.begin() + 3500, all.end());
        out.eval = synth::make_dataset(1000, 12, kDeskSize, "ev");
        return out;
    }();
    return d;
}

/// The three virtual devices. The distortion device sits at the edge of the
/// default training ranges so it renders colour clearly differently.
std::vector<EnvironmentSpec> desk_devices(std::uint64_t seed) {
    Distort d;
    d.hue_delta = 18;
    d.contrast = 0.8;
    d.brightness = 0.12;
    d.saturation = 0.8;
    d.jpeg_quality = 60;
    return {{"jpeg50", {JpegRoundtrip{50}}, derive_key(seed, "jpeg50")},
            {"distort", {d}, derive_key(seed, "distort")},
            {"gauss", {GaussianNoise{0.04}}, derive_key(seed, "gauss")}};
}

using Rendered = std::vector<std::vector<ImageTensor>>; // [env][image]

Rendered render(const std::vector<LabeledImage>& set, const std::vector<EnvironmentSpec>& envs) {
    Rendered r(envs.size(), std::vector<ImageTensor>(set.size()));
    const auto n = static_cast<std::int64_t>(set.size());
    for (std::size_t e = 0; e < envs.size(); ++e) {
#pragma omp parallel for schedule(dynamic, 16)
        for (std::int64_t i = 0; i < n; ++i) r[e][i] = quantize(apply_environment(set[i].tensor, envs[e], set[i].image_id));
    }
    return r;
}

std::vector<PredictionRecord> predict(const ModelParams& p, const std::vector<LabeledImage>& set, const Rendered& r,
                                      const std::vector<EnvironmentSpec>& envs) {
    std::vector<PredictionRecord> recs;
    for (std::size_t e = 0; e < envs.size(); ++e) {
        const auto res = forward_batch(p, r[e]);
        for (std::size_t i = 0; i < set.size(); ++i) {
            PredictionRecord rec{set[i].image_id, envs[e].env_id, {}, set[i].accepted_labels};
            for (auto [c, v] : predict_topk(res[i].probabilities, p.arch().classes))
                rec.ranked.push_back({c, static_cast<float>(v)});
            recs.push_back(std::move(rec));
        }
    }
    return recs;
}

EvalOutcome evaluate(const ModelParams& p, const std::vector<LabeledImage>& set, const Rendered& r,
                     const std::vector<EnvironmentSpec>& envs) {
    const auto rep = compute_instability(predict(p, set, r, envs), 1);
    double acc = 0;
    for (const auto& [env, a] : rep.per_env_accuracy) acc += a;
    return {rep.overall_instability, acc / static_cast<double>(rep.per_env_accuracy.size())};
}

/// He init plus a clean pretrain: the "pretrained network" every fine-tune starts from.
ModelParams desk_base(std::uint64_t seed) {
    StabilityConfig pre;
    pre.name = "pretrain";
    pre.epochs = 4;
    pre.learning_rate = 0.02;
    pre.seed = derive_key(seed, "pre");
    const auto init = init_params(Architecture::reference(10), derive_key(seed, "init"));
    return stability_train(desk_data().train, {}, std::nullopt, pre, init).params;
}

const ModelParams& trained_model() {
    static const ModelParams p = desk_base(1);
    return p;
}

// ---------------------------------------------------------------------------

Outcome c1_instability_oracle() {
    CounterRng rng(1);
    const int sets = 10000;
    long comparisons = 0, mismatches = 0;
    for (int s = 0; s < sets; ++s) {
        const int images = static_cast<int>(rng.next_int(1, 10));
        const int envs = static_cast<int>(rng.next_int(2, 4));
        const int classes = static_cast<int>(rng.next_int(2, 5));
        auto all = testing::random_records(rng, images, envs, classes);
        // Drop some (image, environment) records while keeping >= 2 per image.
        std::vector<PredictionRecord> recs;
        for (int i = 0; i < images; ++i) {
            int kept = 0;
            for (int e = 0; e < envs; ++e) {
                const bool drop = envs - e > 2 - kept && rng.next_double() < 0.25;
                if (!drop) {
                    recs.push_back(all[static_cast<std::size_t>(i * envs + e)]);
                    ++kept;
                }
            }
        }
        for (int k = 1; k <= classes; ++k) {
            ++comparisons;
            if (compute_instability(recs, k).overall_instability != oracle::instability(recs, k)) ++mismatches;
        }
    }
    return {mismatches == 0, fmt("%d record sets, %ld (set, k) comparisons, %ld mismatches", sets, comparisons, mismatches)};
}

Outcome c2_gradients() {
    const Architecture arch{8, {2, 3}, 6, 4};
    ModelParams p(arch);
    CounterRng rng(2);
    for (double& v : p.values()) v = rng.next_uniform(-0.4, 0.4);
    std::vector<ImageTensor> clean, other;
    for (int i = 0; i < 4; ++i) {
        clean.push_back(testing::random_image(8, 8, derive_key(20, i)));
        other.push_back(testing::random_image(8, 8, derive_key(21, i)));
    }
    std::vector<TrainExample> batch;
    for (int i = 0; i < 4; ++i) batch.push_back({&clean[i], &other[i], i % arch.classes});

    // 256 distinct coordinates per configuration.
    std::vector<std::size_t> coords(p.size());
    for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
    for (std::size_t i = coords.size() - 1; i > 0; --i) std::swap(coords[i], coords[rng.next_int(0, static_cast<std::int64_t>(i))]);
    coords.resize(256);

    const double h = 1e-4;
    double worst = 0.0;
    int failed = 0, checked = 0;
    for (auto kind : {StabilityLoss::relative_entropy, StabilityLoss::embedding_distance}) {
        for (double alpha : {0.0, 0.01, 1.0}) {
            const LossConfig cfg{kind, alpha};
            const auto g = gradient(p, batch, cfg, Exec::serial);
            for (std::size_t i : coords) {
                const double keep = p.values()[i];
                p.values()[i] = keep + h;
                const double up = oracle::batch_loss(p, batch, cfg);
                p.values()[i] = keep - h;
                const double down = oracle::batch_loss(p, batch, cfg);
                p.values()[i] = keep;
                const double fd = (up - down) / (2 * h);
                const double an = g.grad.values()[i];
                const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-8});
                worst = std::max(worst, rel);
                failed += rel > 1e-4;
                ++checked;
            }
        }
    }
    return {failed == 0, fmt("%d coordinates over 2 losses x 3 alphas, max relative error %.2e, %d above 1e-4",
                             checked, worst, failed)};
}

Outcome c3_loss_identities() {
    CounterRng rng(3);
    bool ok = true;
    double worst_self = 0.0, min_kl = 1e300;
    for (int t = 0; t < 1000; ++t) {
        const int n = static_cast<int>(rng.next_int(2, 10));
        std::vector<double> a(n), b(n);
        double sa = 0, sb = 0;
        for (int j = 0; j < n; ++j) {
            a[j] = rng.next_double() * (rng.next_double() < 0.1 ? 0.0 : 1.0);
            b[j] = rng.next_double() * (rng.next_double() < 0.1 ? 0.0 : 1.0);
            sa += a[j];
            sb += b[j];
        }
        if (sa == 0 || sb == 0) continue;
        for (int j = 0; j < n; ++j) {
            a[j] /= sa;
            b[j] /= sb;
        }
        worst_self = std::max(worst_self, std::abs(kl_stability_loss(a, a)));
        min_kl = std::min(min_kl, kl_stability_loss(a, b));

        // Metric spot-checks on embeddings: identity, symmetry, triangle inequality.
        std::vector<double> x(n), y(n), z(n);
        for (int j = 0; j < n; ++j) {
            x[j] = rng.next_uniform(-2, 2);
            y[j] = rng.next_uniform(-2, 2);
            z[j] = rng.next_uniform(-2, 2);
        }
        ok = ok && embedding_stability_loss(x, x) == 0.0;
        ok = ok && embedding_stability_loss(x, y) == embedding_stability_loss(y, x);
        ok = ok && embedding_stability_loss(x, z) <= embedding_stability_loss(x, y) + embedding_stability_loss(y, z) + 1e-12;
        ok = ok && embedding_stability_loss(x, y) > 0.0;
    }
    ok = ok && embedding_stability_loss(std::vector<double>{0, 0}, std::vector<double>{3, 4}) == 5.0;
    ok = ok && worst_self <= 1e-12 && min_kl >= 0.0;

    const Architecture arch{16, {4, 8}, 16, 10};
    double worst_ce = 0.0;
    for (int t = 0; t < 20; ++t) {
        const auto p = init_params(arch, derive_key(30, t));
        const auto x = testing::random_image(16, 16, derive_key(31, t));
        const auto y = testing::random_image(16, 16, derive_key(32, t));
        const double ce = cross_entropy(forward(p, x).probabilities, t % 10);
        for (auto kind : {StabilityLoss::relative_entropy, StabilityLoss::embedding_distance})
            worst_ce = std::max(worst_ce, std::abs(combined_loss(x, y, t % 10, p, {kind, 0.0}) - ce));
    }
    ok = ok && worst_ce <= 1e-12;

    const double hand = kl_stability_loss(std::vector<double>{0.5, 0.5}, std::vector<double>{0.9, 0.1});
    const double direct = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
    ok = ok && std::abs(hand - 0.5108) <= 1e-3 && std::abs(hand - direct) <= 1e-12;
    return {ok, fmt("max |KL(p,p)| %.1e, min KL %.2e, max |combined(alpha=0) - CE| %.1e, KL([.5,.5],[.9,.1]) = %.4f nats",
                    worst_self, min_kl, worst_ce, hand)};
}

Outcome c4_stability_effect() {
    const auto& d = desk_data();
    int wins = 0;
    std::string detail;
    for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto envs = desk_devices(seed);
        const auto rv = render(d.val, envs);
        const auto re = render(d.eval, envs);
        const ModelParams base = seed == 1 ? trained_model() : desk_base(seed);

        StabilityConfig ft;
        ft.name = "no_noise";
        ft.epochs = 5;
        ft.learning_rate = 0.01;
        ft.seed = derive_key(seed, "ft");
        const auto baseline = evaluate(stability_train(d.train, {}, std::nullopt, ft, base).params, d.eval, re, envs);

        std::vector<StabilityConfig> cells;
        for (double a : {0.01, 0.1, 1.0}) {
            StabilityConfig c = ft;
            c.name = fmt("distortion_relative_entropy_a%g", a);
            c.loss = {StabilityLoss::relative_entropy, a};
            c.noise.kind = NoiseKind::distortion;
            cells.push_back(c);
        }
        std::vector<ModelParams> trained(cells.size());
        const auto ranked = grid_search(cells, [&](const StabilityConfig& c) {
            std::size_t i = 0;
            while (cells[i].name != c.name) ++i;
            trained[i] = stability_train(d.train, {}, generated_source(c.noise), c, base).params;
            return evaluate(trained[i], d.val, rv, envs);
        });
        const auto& best = ranked.front();
        const auto chosen = evaluate(trained[best.index], d.eval, re, envs);
        const bool win = chosen.instability <= 0.8 * baseline.instability;
        wins += win;
        const auto line = fmt("seed %d: no-noise %.2f%% -> alpha %g %.2f%%%s", static_cast<int>(seed),
                              100 * baseline.instability, best.config.loss.alpha, 100 * chosen.instability,
                              win ? "" : " (miss)");
        detail += (seed == 1 ? "" : "; ") + line;
        std::printf("    %s\n", line.c_str());
        std::fflush(stdout);
    }
    return {wins >= 2, fmt("%d/3 seeds at least 20%% lower; ", wins) + detail};
}

Outcome c5_compression() {
    const auto& d = desk_data();
    const std::vector<EnvironmentSpec> envs{{"jpeg100", {JpegRoundtrip{100}}, 1},
                                            {"jpeg85", {JpegRoundtrip{85}}, 2},
                                            {"jpeg50", {JpegRoundtrip{50}}, 3}};
    const auto recs = predict(trained_model(), d.eval, render(d.eval, envs), envs);
    const auto rep = compute_instability(recs, 1);
    return {rep.overall_instability > 0.0,
            fmt("instability %.2f%% (%zu of %zu eval images); pairwise 100/85 %.2f%%, 100/50 %.2f%%, 85/50 %.2f%%",
                100 * rep.overall_instability, rep.unstable_count, rep.image_count,
                100 * rep.pairwise_at("jpeg100", "jpeg85"), 100 * rep.pairwise_at("jpeg100", "jpeg50"),
                100 * rep.pairwise_at("jpeg85", "jpeg50"))};
}

Outcome c6_isp() {
    const auto& d = desk_data();
    std::vector<ImageTensor> a(d.eval.size()), b(d.eval.size());
    const auto n = static_cast<std::int64_t>(d.eval.size());
#pragma omp parallel for schedule(dynamic, 16)
    for (std::int64_t i = 0; i < n; ++i) {
        const auto raw = synthesize_raw(d.eval[i].tensor, 2.2);
        a[i] = quantize(simulate_isp(raw, isp_preset_a()));
        b[i] = quantize(simulate_isp(raw, isp_preset_b()));
    }
    const std::vector<EnvironmentSpec> envs{{"isp_a", {}, 0}, {"isp_b", {}, 0}};
    const auto recs = predict(trained_model(), d.eval, Rendered{a, b}, envs);
    const double pair = pairwise_instability(recs, "isp_a", "isp_b", 1);
    const auto rep = compute_instability(recs, 1);
    return {pair > 0.0, fmt("pairwise isp_a/isp_b instability %.2f%%; accuracy %.3f / %.3f", 100 * pair,
                            rep.per_env_accuracy.at("isp_a"), rep.per_env_accuracy.at("isp_b"))};
}

Outcome c7_topk() {
    const auto& d = desk_data();
    const auto envs = desk_devices(1);
    const auto recs = predict(trained_model(), d.eval, render(d.eval, envs), envs);
    const auto top1 = compute_instability(recs, 1);
    const auto top3 = compute_instability(recs, 3);
    bool ok = true;
    std::string acc;
    for (const auto& e : envs) {
        const double a1 = compute_accuracy(recs, e.env_id, 1), a3 = compute_accuracy(recs, e.env_id, 3);
        ok = ok && a3 >= a1;
        acc += fmt(", %s %.3f/%.3f", e.env_id.c_str(), a1, a3);
    }
    const double rel = top1.overall_instability > 0 ? 1.0 - top3.overall_instability / top1.overall_instability : 0.0;
    return {ok, fmt("instability top1 %.2f%% vs top3 %.2f%% (%.0f%% lower); accuracy top1/top3",
                    100 * top1.overall_instability, 100 * top3.overall_instability, 100 * rel) + acc};
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream s;
        s << in.rdbuf();
        out[fs::relative(e.path(), root).string()] = s.str();
    }
    return out;
}

Outcome c8_determinism() {
    const auto dir = testing::temp_dir("acceptance_determinism");
    synth::write_dataset(dir + "/data", 300, 200, 8, kDeskSize);
    std::ofstream(dir + "/cfg.json") << R"({
  "seed": 17,
  "train_manifest": "data/train.jsonl",
  "eval_manifest": "data/eval.jsonl",
  "pretrain": {"epochs": 1},
  "environments": [
    {"id": "clean", "transforms": []},
    {"id": "jpeg50", "transforms": [{"type": "jpeg", "quality": 50}]},
    {"id": "distort", "transforms": [{"type": "distort", "hue_delta": 12, "contrast": 1.1, "jpeg_quality": 70}]},
    {"id": "noisy", "transforms": [{"type": "gaussian", "sigma2": 0.04}]},
    {"id": "isp_a", "transforms": [{"type": "isp", "preset": "isp_a", "raw_gamma": 2.2}]}
  ],
  "metrics": {"k": [1, 3]}
})";
    auto pipeline = [&](const std::string& out, int jobs) {
        const std::string common = " --config " + dir + "/cfg.json --out " + dir + "/" + out + " --jobs " + std::to_string(jobs);
        for (const char* cmd : {"perturb", "infer", "report"}) {
            const std::string line = std::string(DEVSTAB_CLI_PATH) + " " + cmd + common + " > /dev/null";
            if (std::system(line.c_str()) != 0) return false;
        }
        return true;
    };
    if (!pipeline("run_a", 1) || !pipeline("run_b", 1) || !pipeline("run_c", 8)) return {false, "pipeline command failed"};
    const auto a = tree_bytes(dir + "/run_a"), b = tree_bytes(dir + "/run_b"), c = tree_bytes(dir + "/run_c");
    const bool has_outputs = a.contains("records/model.jsonl") && a.contains("report/model/top1/overall.csv") &&
                             a.contains("variants/index.jsonl");
    return {has_outputs && a == b && a == c,
            fmt("%zu files (1000 variants, records, top-1/top-3 reports) byte-identical across two --jobs 1 runs and "
                "--jobs 8: %s",
                a.size(), a == b && a == c ? "yes" : "no")};
}

Outcome c9_identities() {
    int failures = 0;
    for (int i = 0; i < 100; ++i) {
        CounterRng rng(derive_key(9, i));
        const int h = static_cast<int>(rng.next_int(8, 48)), w = static_cast<int>(rng.next_int(8, 48));
        // Continuous values, so nothing here relies on the input being 8-bit.
        const auto img = synth::random_image(h, w, rng);
        const std::string id = "img" + std::to_string(i);
        const std::vector<EnvironmentSpec> identities{{"empty", {}, 1},
                                                      {"sigma0", {GaussianNoise{0.0}}, 2},
                                                      {"distort", {Distort{}}, 3},
                                                      {"both", {GaussianNoise{0.0}, Distort{}}, 4}};
        for (const auto& env : identities) failures += !(apply_environment(img, env, id) == img);
        // An explicit lossless codec round-trip is an identity up to 8-bit quantization.
        failures += !(apply_environment(img, {"png", {PngRoundtrip{}}, 5}, id) == quantize(img));

        // The identity ISP leaves the demosaiced raw untouched, for random sensor data
        // and for raws synthesised from an image.
        const auto even = synth::random_image(2 * (h / 2), 2 * (w / 2), rng);
        const auto raw = mosaic(even);
        failures += !(simulate_isp(raw, IspConfig::identity()) == demosaic_bilinear(raw));
        const auto linear = synthesize_raw(even, 2.2);
        failures += !(simulate_isp(linear, IspConfig::identity()) == demosaic_bilinear(linear));
    }
    return {failures == 0, fmt("100 random images x 5 identity environments and 2 identity-ISP raws, %d mismatches",
                               failures)};
}

} // namespace

int main(int argc, char** argv) {
    int only = 0;
    for (int i = 1; i < argc; ++i) {
        if (std::string(argv[i]) == "--only" && i + 1 < argc) only = std::atoi(argv[++i]);
    }
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
        {"instability oracle equivalence", c1_instability_oracle},
        {"gradient correctness", c2_gradients},
        {"loss identities", c3_loss_identities},
        {"desk-scale stability effect", c4_stability_effect},
        {"compression divergence", c5_compression},
        {"ISP divergence", c6_isp},
        {"top-k relaxation", c7_topk},
        {"determinism", c8_determinism},
        {"environment identities", c9_identities},
    };
    int failed = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        if (only != 0 && static_cast<std::size_t>(only) != i + 1) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        std::printf("%s %zu %s: %s [%.1fs]\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                    o.detail.c_str(), secs);
        std::fflush(stdout);
        failed += !o.pass;
    }
    return failed == 0 ? 0 : 1;
}
