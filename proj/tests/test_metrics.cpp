#include "devstab/error.hpp"
#include "devstab/metrics.hpp"
#include "helpers.hpp"
#include "oracles.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

using namespace devstab;
using testing::record;

namespace {

std::string slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream s;
    s << in.rdbuf();
    return s.str();
}

} // namespace

TEST_SUITE("metrics") {

TEST_CASE("is_correct looks at the first k ranked classes") {
    const PredictionRecord r{"a", "e", {{2, 0.5f}, {0, 0.3f}, {1, 0.2f}}, {0}};
    CHECK_FALSE(is_correct(r, 1));
    CHECK(is_correct(r, 2));
    CHECK(is_correct(r, 3));
    CHECK_THROWS_AS(is_correct(r, 4), InvalidArgument);
    CHECK_THROWS_AS(is_correct(r, 0), InvalidArgument);
    const PredictionRecord multi{"a", "e", {{2, 0.5f}, {0, 0.3f}, {1, 0.2f}}, {1, 2}};
    CHECK(is_correct(multi, 1));
}

TEST_CASE("one unstable image out of three") {
    const std::vector<PredictionRecord> recs{
        record("i1", "A", 0, {0}), record("i1", "B", 0, {0}), // both right
        record("i2", "A", 1, {1}), record("i2", "B", 2, {1}), // disagree
        record("i3", "A", 2, {0}), record("i3", "B", 1, {0}), // both wrong
    };
    const auto rep = compute_instability(recs, 1);
    CHECK(rep.image_count == 3);
    CHECK(rep.environment_count == 2);
    CHECK(rep.unstable_count == 1);
    CHECK(rep.all_correct_count == 1);
    CHECK(rep.all_incorrect_count == 1);
    CHECK(rep.overall_instability == doctest::Approx(1.0 / 3.0));
    CHECK(rep.per_class.at(1).unstable == 1);
    CHECK(rep.per_class.at(0).images == 2);
    CHECK(rep.per_class.at(0).fraction() == 0.0);
    CHECK(rep.per_env_accuracy.at("A") == doctest::Approx(2.0 / 3.0));
    CHECK(rep.per_env_accuracy.at("B") == doctest::Approx(1.0 / 3.0));
    CHECK(rep.pairwise_at("A", "B") == doctest::Approx(1.0 / 3.0));
    CHECK(rep.pairwise_at("B", "A") == rep.pairwise_at("A", "B"));
    CHECK(rep.pairwise_at("A", "A") == 0.0);
    // At k = 3 every ranking contains the label, so nothing is unstable.
    CHECK(compute_instability(recs, 3).overall_instability == 0.0);
}

TEST_CASE("uniformly right or uniformly wrong predictions are stable") {
    std::vector<PredictionRecord> right, wrong;
    for (int i = 0; i < 5; ++i)
        for (const char* e : {"A", "B", "C"}) {
            right.push_back(record("i" + std::to_string(i), e, i % 3, {i % 3}));
            wrong.push_back(record("i" + std::to_string(i), e, (i + 1) % 3, {i % 3}));
        }
    CHECK(compute_instability(right, 1).overall_instability == 0.0);
    CHECK(compute_instability(wrong, 1).overall_instability == 0.0);
    CHECK(compute_instability(wrong, 1).all_incorrect_count == 5);
}

TEST_CASE("instability agrees with the brute-force definition on random record sets") {
    CounterRng rng(2024);
    for (int trial = 0; trial < 500; ++trial) {
        const int images = static_cast<int>(rng.next_int(1, 12));
        const int envs = static_cast<int>(rng.next_int(2, 5));
        const int classes = static_cast<int>(rng.next_int(2, 6));
        auto recs = testing::random_records(rng, images, envs, classes);
        for (int k = 1; k <= classes; ++k) {
            const auto rep = compute_instability(recs, k);
            CHECK(rep.overall_instability == doctest::Approx(oracle::instability(recs, k)).epsilon(1e-15));
            CHECK(rep.unstable_count + rep.all_correct_count + rep.all_incorrect_count == rep.image_count);
        }
    }
}

TEST_CASE("pairwise instability") {
    const std::vector<PredictionRecord> recs{
        record("i1", "A", 0, {0}), record("i1", "B", 1, {0}),
        record("i2", "A", 1, {1}), record("i2", "B", 1, {1}),
    };
    CHECK(pairwise_instability(recs, "A", "B", 1) == 0.5);
    CHECK(pairwise_instability(recs, "B", "A", 1) == 0.5);
    CHECK(pairwise_instability(recs, "A", "A", 1) == 0.0);
    CHECK_THROWS_AS(pairwise_instability(recs, "A", "Z", 1), InvalidArgument);

    CounterRng rng(8);
    const auto many = testing::random_records(rng, 30, 5, 4);
    const auto rep = compute_instability(many, 1);
    CHECK(rep.pairwise.size() == 10);
    for (const auto& [key, v] : rep.pairwise) {
        CHECK(key.first < key.second);
        CHECK(v == pairwise_instability(many, key.second, key.first, 1));
        CHECK(v <= rep.overall_instability);
    }
}

TEST_CASE("per-environment accuracy") {
    std::vector<PredictionRecord> recs;
    for (int i = 0; i < 4; ++i) recs.push_back(record("i" + std::to_string(i), "A", i == 3 ? 1 : 0, {0}));
    CHECK(compute_accuracy(recs, "A", 1) == 0.75);
    CHECK(compute_accuracy(recs, "A", 2) == 1.0);
    CHECK_THROWS_AS(compute_accuracy(recs, "B", 1), InvalidArgument);
}

TEST_CASE("coverage and duplicate errors") {
    const std::vector<PredictionRecord> single{record("i1", "A", 0, {0}), record("i1", "B", 0, {0}),
                                               record("i2", "A", 0, {0})};
    CHECK_THROWS_WITH_AS(compute_instability(single, 1), doctest::Contains("i2"), InvalidArgument);
    const std::vector<PredictionRecord> dup{record("i1", "A", 0, {0}), record("i1", "A", 1, {0}),
                                            record("i1", "B", 0, {0})};
    CHECK_THROWS_WITH_AS(compute_instability(dup, 1), doctest::Contains("duplicate"), InvalidArgument);
    CHECK_THROWS_AS(confidence_split(dup, 1), InvalidArgument);
    CHECK_THROWS_AS(compute_instability({record("i", "A", 0, {0}), record("i", "B", 0, {0})}, 4), InvalidArgument);
    CHECK(compute_instability({}, 1).image_count == 0);
}

TEST_CASE("confidence split and histograms") {
    std::vector<PredictionRecord> recs{
        record("i1", "A", 0, {0}), record("i1", "B", 0, {0}),
        record("i2", "A", 1, {1}), record("i2", "B", 2, {1}),
        record("i3", "A", 2, {0}), record("i3", "B", 1, {0}),
    };
    recs[2].ranked[0].confidence = 0.55f;
    const auto s = confidence_split(recs, 1);
    CHECK(s.stable_correct.size() == 2);
    CHECK(s.stable_incorrect.size() == 2);
    REQUIRE(s.unstable_correct.size() == 1);
    CHECK(s.unstable_correct[0] == doctest::Approx(0.55));
    CHECK(s.unstable_incorrect.size() == 1);

    const auto rep = compute_instability(recs, 1);
    CHECK(rep.unstable_correct.counts[5] == 1);
    CHECK(rep.stable_correct.counts[8] == 2); // 0.9f widens to 0.89999998
    CHECK(rep.stable_incorrect.total() == 2);

    Histogram h;
    h.add(0.0);
    h.add(1.0);
    h.add(0.1);
    h.add(-0.5);
    CHECK(h.counts[0] == 2);
    CHECK(h.counts[1] == 1);
    CHECK(h.counts[9] == 1);
}

TEST_CASE("precision-recall for a perfect classifier") {
    std::vector<PredictionRecord> recs;
    for (int i = 0; i < 6; ++i) {
        const int label = i % 2;
        recs.push_back({"i" + std::to_string(i), "A", {{label, 0.8f}, {1 - label, 0.2f}}, {label}});
    }
    const auto curve = precision_recall(recs, "A", 1, 2);
    REQUIRE(curve.size() == 2);
    CHECK(curve[0].recall == 1.0);
    CHECK(curve[0].precision == 1.0);
    CHECK(curve[1].recall == 1.0);
    CHECK(curve[1].precision == 0.5);
    CHECK(average_precision(curve) == 1.0);
    CHECK(average_precision(precision_recall_micro(recs, "A", 2)) == 1.0);
}

TEST_CASE("precision-recall with no positive scores is the single point (0, 1)") {
    const std::vector<PredictionRecord> recs{{"i", "A", {{0, 1.0f}}, {0}}};
    const auto curve = precision_recall(recs, "A", 2, 3);
    REQUIRE(curve.size() == 1);
    CHECK(curve[0].recall == 0.0);
    CHECK(curve[0].precision == 1.0);
    CHECK(average_precision(curve) == 0.0);
    CHECK_THROWS_AS(precision_recall(recs, "A", 3, 3), InvalidArgument);
}

TEST_CASE("average precision of random scores is close to the positive rate") {
    CounterRng rng(55);
    std::vector<PredictionRecord> recs;
    for (int i = 0; i < 10000; ++i) {
        const int label = static_cast<int>(rng.next_int(0, 1));
        const float s = 0.01f + 0.98f * static_cast<float>(rng.next_double());
        recs.push_back({"i" + std::to_string(i), "A", {{1, s}, {0, 1.0f - s}}, {label}});
    }
    const double ap = average_precision(precision_recall(recs, "A", 1, 2));
    CHECK(ap == doctest::Approx(0.5).epsilon(0.2));
    const auto curve = precision_recall(recs, "A", 1, 2);
    for (std::size_t i = 1; i < curve.size(); ++i) CHECK(curve[i].recall >= curve[i - 1].recall);
    CHECK(curve.back().recall == 1.0);
}

TEST_CASE("report files") {
    CounterRng rng(9);
    const auto recs = testing::random_records(rng, 40, 5, 4);
    const auto rep = compute_instability(recs, 1);
    const auto d1 = testing::temp_dir("report1");
    const auto d2 = testing::temp_dir("report2");
    const auto files = render_report(rep, d1, {"a", "b", "c", "d"});
    render_report(rep, d2, {"a", "b", "c", "d"});
    CHECK(files.size() == 8);
    for (const auto& f : files) {
        const auto name = std::filesystem::path(f).filename().string();
        CHECK(slurp(f) == slurp(d2 + "/" + name));
    }
    const auto pairwise = slurp(d1 + "/pairwise.csv");
    CHECK(std::count(pairwise.begin(), pairwise.end(), '\n') == 11);
    CHECK(slurp(d1 + "/overall.csv").find("1,40,5,") != std::string::npos);
    CHECK(slurp(d1 + "/per_class.csv").find(",b,") != std::string::npos);

    SUBCASE("an empty report writes header-only tables") {
        const auto d3 = testing::temp_dir("report_empty");
        render_report(compute_instability({}, 1), d3);
        for (const char* f : {"overall.csv", "per_class.csv", "per_env_accuracy.csv", "pairwise.csv", "confidence.csv"}) {
            const auto text = slurp(d3 + "/" + f);
            CAPTURE(f);
            CHECK(std::count(text.begin(), text.end(), '\n') == 1);
        }
    }
}

} // TEST_SUITE
