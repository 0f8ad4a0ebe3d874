#include "devstab/codec.hpp"
#include "devstab/error.hpp"
#include "devstab/kernels.hpp"
#include "devstab/model.hpp"
#include "devstab/rng.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

#include <doctest.h>
#include <omp.h>

#include <cmath>
#include <filesystem>
#include <fstream>

using namespace devstab;

namespace {

ModelParams random_params(const Architecture& arch, std::uint64_t seed, double scale = 0.5) {
    ModelParams p(arch);
    CounterRng rng(seed);
    for (double& v : p.values()) v = rng.next_uniform(-scale, scale);
    return p;
}

double max_abs(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

struct Batch {
    std::vector<ImageTensor> clean, other;
    std::vector<TrainExample> examples;
};

Batch make_batch(int n, int size, int classes, std::uint64_t seed) {
    Batch b;
    for (int i = 0; i < n; ++i) {
        b.clean.push_back(testing::random_image(size, size, derive_key(seed, i)));
        b.other.push_back(testing::random_image(size, size, derive_key(seed, 1000 + i)));
    }
    for (int i = 0; i < n; ++i) b.examples.push_back({&b.clean[i], &b.other[i], i % classes});
    return b;
}

} // namespace

TEST_SUITE("model") {

TEST_CASE("architecture bookkeeping") {
    const Architecture a{32, {16, 32}, 64, 10};
    CHECK(a.flat_size() == 32 * 8 * 8);
    const std::size_t expected = (16 * 3 * 9 + 16) + (32 * 16 * 9 + 32) + (64 * 2048 + 64) + (10 * 64 + 10);
    CHECK(a.parameter_count() == expected);
    CHECK(ModelParams(a).size() == expected);
    CHECK_THROWS_AS(Architecture({30, {16, 32}, 64, 10}).validate(), InvalidArgument); // 30 not divisible by 4
    CHECK_THROWS_AS(Architecture({32, {16}, 64, 1}).validate(), InvalidArgument);
    CHECK_THROWS_AS(Architecture({32, {0}, 64, 10}).validate(), InvalidArgument);
}

TEST_CASE("forward matches the straight-line oracle on a toy network") {
    const Architecture arch{4, {1}, 2, 3};
    const auto p = random_params(arch, 7);
    const auto img = testing::random_image(4, 4, 99);
    const auto got = forward(p, img);
    const auto want = oracle::forward(p, img);
    CHECK(max_abs(got.logits, want.logits) < 1e-9);
    CHECK(max_abs(got.probabilities, want.probs) < 1e-9);
    CHECK(max_abs(got.embedding, want.embedding) < 1e-9);
}

TEST_CASE("forward matches the oracle on a two-layer network in both exec modes") {
    const Architecture arch{8, {2, 3}, 6, 4};
    const auto p = random_params(arch, 8);
    for (int s = 0; s < 5; ++s) {
        const auto img = testing::random_image(8, 8, 500 + s);
        const auto want = oracle::forward(p, img);
        const auto a = forward(p, img, Exec::serial);
        const auto b = forward(p, img, Exec::parallel);
        CHECK(max_abs(a.probabilities, want.probs) < 1e-9);
        CHECK(a.logits == b.logits);
    }
}

TEST_CASE("zero parameters give the uniform distribution") {
    const Architecture arch{8, {2}, 4, 5};
    const auto r = forward(ModelParams(arch), testing::random_image(8, 8, 1));
    for (double p : r.probabilities) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("forward rejects the wrong input size and preprocess fixes it") {
    const Architecture arch{8, {2}, 4, 3};
    const auto p = init_params(arch, 1);
    const auto big = testing::random_image(16, 12, 3);
    CHECK_THROWS_AS(forward(p, big), InvalidArgument);
    const auto small = preprocess(big, arch);
    CHECK(small.height() == 8);
    CHECK(small.width() == 8);
    double sum = 0.0;
    for (double v : forward(p, small).probabilities) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("softmax and cross-entropy") {
    const std::vector<double> z{0.0, std::log(2.0)};
    const auto p = softmax(z);
    CHECK(p[0] == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    CHECK(p[1] == doctest::Approx(2.0 / 3.0).epsilon(1e-12));

    const auto flat = softmax(std::vector<double>(5, 3.7));
    for (double v : flat) CHECK(v == doctest::Approx(0.2).epsilon(1e-12));

    // Shift invariance, including shifts that would overflow a naive exp.
    const std::vector<double> a{1.0, -2.0, 0.5};
    const std::vector<double> b{1001.0, 998.0, 1000.5};
    CHECK(max_abs(softmax(a), softmax(b)) < 1e-12);

    CHECK(cross_entropy(flat, 2) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    const std::vector<double> zero_target{1.0, 0.0};
    CHECK(cross_entropy(zero_target, 1) == doctest::Approx(-std::log(1e-12)).epsilon(1e-12));
    CHECK(std::isfinite(cross_entropy(zero_target, 1)));
}

TEST_CASE("gradient agrees with central differences of the oracle loss") {
    const Architecture arch{8, {2, 3}, 6, 4};
    auto p = random_params(arch, 21, 0.4);
    auto batch = make_batch(3, 8, arch.classes, 77);
    for (auto kind : {StabilityLoss::relative_entropy, StabilityLoss::embedding_distance}) {
        for (double alpha : {0.0, 0.01, 1.0}) {
            CAPTURE(to_string(kind));
            CAPTURE(alpha);
            const LossConfig cfg{kind, alpha};
            const auto g = gradient(p, batch.examples, cfg, Exec::serial);
            CHECK(g.loss == doctest::Approx(oracle::batch_loss(p, batch.examples, cfg)).epsilon(1e-10));
            const double h = 1e-5;
            int bad = 0;
            double worst = 0.0;
            for (std::size_t i = 0; i < p.size(); ++i) {
                const double keep = p.values()[i];
                p.values()[i] = keep + h;
                const double up = oracle::batch_loss(p, batch.examples, cfg);
                p.values()[i] = keep - h;
                const double down = oracle::batch_loss(p, batch.examples, cfg);
                p.values()[i] = keep;
                const double fd = (up - down) / (2 * h);
                const double an = g.grad.values()[i];
                const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-7});
                worst = std::max(worst, rel);
                bad += rel > 1e-4;
            }
            CAPTURE(worst);
            // A relu kink straddled by +-h can spoil a handful of coordinates.
            CHECK(bad <= 2);
        }
    }
}

TEST_CASE("alpha = 0 reduces to the cross-entropy gradient") {
    const Architecture arch{8, {2}, 4, 3};
    const auto p = random_params(arch, 3);
    auto batch = make_batch(4, 8, 3, 5);
    const auto with_pairs = gradient(p, batch.examples, {StabilityLoss::relative_entropy, 0.0}, Exec::serial);
    for (auto& ex : batch.examples) ex.counterpart = nullptr;
    const auto plain = gradient(p, batch.examples, {StabilityLoss::relative_entropy, 0.0}, Exec::serial);
    CHECK(with_pairs.grad == plain.grad);
    CHECK(with_pairs.ls == 0.0);
}

TEST_CASE("duplicating a batch leaves the mean gradient unchanged") {
    const Architecture arch{8, {2}, 4, 3};
    const auto p = random_params(arch, 4);
    auto batch = make_batch(3, 8, 3, 6);
    const LossConfig cfg{StabilityLoss::relative_entropy, 0.5};
    const auto once = gradient(p, batch.examples, cfg, Exec::serial);
    auto twice_examples = batch.examples;
    twice_examples.insert(twice_examples.end(), batch.examples.begin(), batch.examples.end());
    const auto twice = gradient(p, twice_examples, cfg, Exec::serial);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(twice.grad.values()[i] == doctest::Approx(once.grad.values()[i]).epsilon(1e-12));
}

TEST_CASE("alpha > 0 without a counterpart is rejected") {
    const Architecture arch{8, {2}, 4, 3};
    const auto p = random_params(arch, 4);
    auto batch = make_batch(2, 8, 3, 6);
    batch.examples[1].counterpart = nullptr;
    CHECK_THROWS_AS(gradient(p, batch.examples, {StabilityLoss::relative_entropy, 0.1}), InvalidArgument);
}

TEST_CASE("serial and parallel gradients are bit-identical for any thread count") {
    const Architecture arch{16, {4, 8}, 16, 5};
    const auto p = init_params(arch, 12);
    auto batch = make_batch(7, 16, 5, 13);
    for (auto kind : {StabilityLoss::relative_entropy, StabilityLoss::embedding_distance}) {
        const LossConfig cfg{kind, 0.3};
        const auto ref = gradient(p, batch.examples, cfg, Exec::serial);
        const int saved = omp_get_max_threads();
        for (int threads : {1, 2, 3, 8}) {
            omp_set_num_threads(threads);
            const auto par = gradient(p, batch.examples, cfg, Exec::parallel);
            CHECK(par.grad == ref.grad);
            CHECK(par.loss == ref.loss);
        }
        omp_set_num_threads(saved);
    }
}

TEST_CASE("omp kernels reproduce the serial kernels bit for bit") {
    const kernels::ConvShape s{3, 5, 9, 7};
    CounterRng rng(17);
    auto fill = [&](std::size_t n) {
        std::vector<double> v(n);
        for (double& x : v) x = rng.next_uniform(-1, 1);
        return v;
    };
    const auto in = fill(static_cast<std::size_t>(s.in_channels) * s.padded_plane());
    const auto w = fill(static_cast<std::size_t>(s.out_channels) * s.in_channels * 9);
    const auto b = fill(s.out_channels);
    const auto dout = fill(static_cast<std::size_t>(s.out_channels) * s.plane());
    const int saved = omp_get_max_threads();
    omp_set_num_threads(4);

    std::vector<double> o1(dout.size()), o2(dout.size());
    kernels::serial::conv3x3_forward(s, in, w, b, o1);
    kernels::omp::conv3x3_forward(s, in, w, b, o2);
    CHECK(o1 == o2);

    std::vector<double> dw1(w.size()), dw2(w.size()), db1(b.size()), db2(b.size()), di1(in.size()), di2(in.size());
    kernels::serial::conv3x3_backward(s, in, w, dout, dw1, db1, di1);
    kernels::omp::conv3x3_backward(s, in, w, dout, dw2, db2, di2);
    CHECK(dw1 == dw2);
    CHECK(db1 == db2);
    CHECK(di1 == di2);

    const int rows = 11, cols = 37;
    const auto W = fill(rows * cols);
    const auto B = fill(rows);
    const auto x = fill(cols);
    const auto dy = fill(rows);
    std::vector<double> y1(rows), y2(rows);
    kernels::serial::dense_forward(rows, cols, W, B, x, y1);
    kernels::omp::dense_forward(rows, cols, W, B, x, y2);
    CHECK(y1 == y2);
    std::vector<double> gw1(W.size()), gw2(W.size()), gb1(rows), gb2(rows), gx1(cols), gx2(cols);
    kernels::serial::dense_backward(rows, cols, W, x, dy, gw1, gb1, gx1);
    kernels::omp::dense_backward(rows, cols, W, x, dy, gw2, gb2, gx2);
    CHECK(gw1 == gw2);
    CHECK(gx1 == gx2);
    omp_set_num_threads(saved);
}

TEST_CASE("sgd with momentum") {
    const Architecture arch{8, {1}, 2, 2};
    auto p = random_params(arch, 30);
    auto g = random_params(arch, 31);

    CHECK(sgd_step(p, g, {}, 0.0, 0.9).params == p);

    const auto one = sgd_step(p, g, {}, 1.0, 0.0);
    for (std::size_t i = 0; i < p.size(); ++i) CHECK(one.params.values()[i] == p.values()[i] - g.values()[i]);

    // Two steps with the same gradient: v1 = g, v2 = 0.9 g + g, total displacement 2.9 g.
    const auto s1 = sgd_step(p, g, {}, 1.0, 0.9);
    const auto s2 = sgd_step(s1.params, g, s1.velocity, 1.0, 0.9);
    for (std::size_t i = 0; i < p.size(); ++i)
        CHECK(s2.params.values()[i] == doctest::Approx(p.values()[i] - 2.9 * g.values()[i]).epsilon(1e-12));
}

TEST_CASE("predict_topk orders by confidence then class index") {
    const std::vector<double> p{0.1, 0.4, 0.4, 0.1};
    const auto top = predict_topk(p, 3);
    REQUIRE(top.size() == 3);
    CHECK(top[0].first == 1);
    CHECK(top[1].first == 2);
    CHECK(top[2].first == 0);
    CHECK(predict_topk(p, 4).size() == 4);
    CHECK_THROWS_AS(predict_topk(p, 5), InvalidArgument);
    CHECK_THROWS_AS(predict_topk(p, 0), InvalidArgument);
}

TEST_CASE("init_params is seeded, bounded and zero-biased") {
    const Architecture arch{16, {4, 8}, 12, 5};
    const auto a = init_params(arch, 5);
    CHECK(a == init_params(arch, 5));
    CHECK_FALSE(a == init_params(arch, 6));
    const double conv0_bound = std::sqrt(6.0 / (3 * 9));
    for (double v : a.conv_weights(0)) CHECK(std::abs(v) <= conv0_bound);
    const double embed_bound = std::sqrt(6.0 / arch.flat_size());
    for (double v : a.embed_weights()) CHECK(std::abs(v) <= embed_bound);
    for (double v : a.conv_bias(1)) CHECK(v == 0.0);
    for (double v : a.out_bias()) CHECK(v == 0.0);
}

TEST_CASE("checkpoint round trip") {
    const auto dir = testing::temp_dir("checkpoint");
    const Architecture arch{8, {2, 3}, 6, 4};
    const auto p = random_params(arch, 40);
    const std::string stem = dir + "/m";
    save_checkpoint(p, stem);
    CHECK(std::filesystem::exists(stem + ".bin"));
    CHECK(std::filesystem::file_size(stem + ".bin") == 4 * p.size());

    const auto back = load_checkpoint(stem + ".bin");
    CHECK(back == round_to_checkpoint_precision(p));
    CHECK(load_checkpoint(stem) == back);
    CHECK(load_checkpoint(stem + ".json") == back);
    CHECK(checkpoint_digest(back) == checkpoint_digest(p));

    // Saving the loaded copy reproduces the same bytes.
    save_checkpoint(back, dir + "/m2");
    CHECK(checkpoint_digest(load_checkpoint(dir + "/m2")) == checkpoint_digest(p));

    SUBCASE("a flipped byte is detected") {
        auto bytes = read_file(stem + ".bin");
        bytes[5] ^= 0x40;
        write_file(stem + ".bin", bytes);
        CHECK_THROWS_AS(load_checkpoint(stem), ParseError);
    }
    SUBCASE("architecture mismatch") {
        auto bytes = read_file(stem + ".bin");
        bytes.resize(bytes.size() - 4);
        write_file(stem + ".bin", bytes);
        CHECK_THROWS_AS(load_checkpoint(stem), ParseError);
    }
    SUBCASE("version mismatch") {
        std::ifstream in(stem + ".json");
        std::string text((std::istreambuf_iterator<char>(in)), {});
        in.close();
        const auto at = text.find("\"version\": 1");
        REQUIRE(at != std::string::npos);
        text.replace(at, 12, "\"version\": 99");
        std::ofstream(stem + ".json") << text;
        CHECK_THROWS_AS(load_checkpoint(stem), ParseError);
    }
    SUBCASE("missing sidecar") {
        CHECK_THROWS_AS(load_checkpoint(dir + "/nothing"), IoError);
    }
}

TEST_CASE("non-finite parameters are not saved") {
    ModelParams p(Architecture{8, {1}, 2, 2});
    p.values()[0] = std::nan("");
    CHECK_FALSE(p.all_finite());
    CHECK_THROWS_AS(save_checkpoint(p, testing::temp_dir("nan") + "/m"), InvalidArgument);
}

} // TEST_SUITE
