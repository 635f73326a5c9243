#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>

#include "helpers.hpp"
#include "unloader/chooser.hpp"
#include "unloader/rng.hpp"

using namespace unloader;
using namespace unloader::test;

namespace {

const ObserveThresholds kTh = ObserveThresholds::defaults_for({16, 8, 10});

FeatureExtractor extractor()
{
    return FeatureExtractor{HardcodedParams{}, kTh};
}

std::vector<double> random_point(std::mt19937_64& rng, double margin_f0)
{
    std::vector<double> x(kFeatureDim);
    for (auto& v : x) {
        v = uniform_real(rng, -1.0, 1.0);
    }
    // first feature carries the label with a hard margin
    const double sign = bernoulli(rng, 0.5) ? 1.0 : -1.0;
    x[0] = sign * uniform_real(rng, margin_f0, 2.0);
    return x;
}

Dataset margin_dataset(std::mt19937_64& rng, int n)
{
    Dataset d;
    for (int i = 0; i < n; ++i) {
        DatasetRow r;
        r.features = random_point(rng, 0.5);
        r.label = r.features[0] > 0 ? ChoiceLabel::UseLibrary : ChoiceLabel::UseHardcoded;
        r.env_seed = 1;
        r.step = i;
        d.rows.push_back(std::move(r));
    }
    return d;
}

StrategyLibrary tiny_library(int entries)
{
    StrategyLibrary lib;
    for (int i = 0; i < entries; ++i) {
        LibraryEntry e;
        e.anchor.assign(kFeatureDim, 0.0);
        e.anchor[0] = i;  // distinct anchors
        auto root = std::make_unique<StrategyNode>();
        root->action = AbstractAction::from_label("SweepLow");
        e.tree = StrategyTree(std::move(root));
        e.source = small_pile_env(i);
        lib.entries.push_back(std::move(e));
    }
    return lib;
}

}  // namespace

TEST_CASE("features: length is always 85 and deterministic")
{
    const FeatureExtractor fx = extractor();
    for (std::uint64_t seed : {1u, 2u, 3u}) {
        const WorldState w = perceive(generate_environment(small_pile_env(seed)));
        const auto f = fx.extract(w);
        CHECK(f.size() == kFeatureDim);
        CHECK(fx.extract(w) == f);
    }
}

TEST_CASE("features: empty truck is all zeros except the empty flag")
{
    const FeatureExtractor fx = extractor();
    const auto f = fx.extract(perceive(make_true_state({16, 8, 10}, {})));
    REQUIRE(f.size() == kFeatureDim);
    for (int i = 0; i < kFeatureDim - 1; ++i) {
        CHECK(f[i] == 0.0);
    }
    CHECK(f[kFeatureDim - 1] == 1.0);
}

TEST_CASE("features: wall heights land in the first depth lane's slots")
{
    // uniform wall of height 6 across the full width at the front
    std::vector<BoxSpec> boxes;
    for (int w = 0; w < 8; ++w) {
        for (int h = 0; h < 6; ++h) {
            boxes.push_back({{0, w, h}, {1, 1, 1}, 1.0});
        }
    }
    const WorldState w = perceive(make_true_state({16, 8, 10}, boxes));
    const auto f = extractor().extract(w);

    // independent scan: lane heights from the grid
    const HeightField hf = discretize(w, kFeatureLanesD, kFeatureLanesW);
    for (int lw = 0; lw < kFeatureLanesW; ++lw) {
        CHECK(f[lw] == doctest::Approx(hf.at(0, lw)));
        CHECK(f[lw] == doctest::Approx(6.0));
    }
    // depth-adjacent differences per width lane: first pair is -6, others 0
    const int diff_base = kFeatureLanesD * kFeatureLanesW;
    for (int lw = 0; lw < kFeatureLanesW; ++lw) {
        const int base = diff_base + lw * (kFeatureLanesD - 1);
        CHECK(f[base] == doctest::Approx(-6.0));
        for (int k = 1; k < kFeatureLanesD - 1; ++k) {
            CHECK(f[base + k] == doctest::Approx(0.0));
        }
    }
    // aggregates: box count and max height
    CHECK(f[diff_base + 35 + 2] == doctest::Approx(w.box_count()));
    CHECK(f[diff_base + 35 + 4] == doctest::Approx(6.0));
}

TEST_CASE("nn_choose: anchors match themselves; single anchor matches anything")
{
    const StrategyLibrary lib = tiny_library(3);
    NNIndex idx{&lib};
    for (int i = 0; i < 3; ++i) {
        CHECK(idx.nearest(lib.entries[i].anchor) == i);
    }
    const StrategyLibrary one = tiny_library(1);
    NNIndex single{&one};
    std::vector<double> f(kFeatureDim, 123.0);
    CHECK(single.nearest(f) == 0);
}

TEST_CASE("nn_choose: matches a brute-force scan on random queries")
{
    std::mt19937_64 rng(77);
    StrategyLibrary lib = tiny_library(3);
    for (auto& e : lib.entries) {
        for (auto& v : e.anchor) {
            v = uniform_real(rng, -1.0, 1.0);
        }
    }
    NNIndex idx{&lib};
    for (int i = 0; i < 100; ++i) {
        std::vector<double> f(kFeatureDim);
        for (auto& v : f) {
            v = uniform_real(rng, -1.0, 1.0);
        }
        int best = -1;
        double best_d = 0.0;
        for (int k = 0; k < 3; ++k) {
            double d = 0.0;
            for (int j = 0; j < kFeatureDim; ++j) {
                d += (f[j] - lib.entries[k].anchor[j]) * (f[j] - lib.entries[k].anchor[j]);
            }
            if (best < 0 || d < best_d) {
                best = k;
                best_d = d;
            }
        }
        CHECK(idx.nearest(f) == best);
    }
}

TEST_CASE("train: two separable points are classified perfectly")
{
    Dataset d;
    DatasetRow a;
    a.features.assign(kFeatureDim, 0.0);
    a.features[0] = 1.0;
    a.label = ChoiceLabel::UseLibrary;
    a.step = 0;
    DatasetRow b;
    b.features.assign(kFeatureDim, 0.0);
    b.features[0] = -1.0;
    b.label = ChoiceLabel::UseHardcoded;
    b.step = 1;
    d.rows = {a, b};
    const ChooserModel m = train_chooser(d, 0.5, 1.0);
    CHECK(training_accuracy(m, d) == doctest::Approx(1.0));
}

TEST_CASE("train: margin dataset generalizes to held-out points")
{
    std::mt19937_64 rng(123);
    const Dataset train = margin_dataset(rng, 200);
    const Dataset test = margin_dataset(rng, 100);
    const ChooserModel m = train_chooser(train, 1.0 / kFeatureDim, 1.0);
    int ok = 0;
    for (const auto& r : test.rows) {
        const ChoiceLabel pred =
            m.decision_value(r.features) >= 0 ? ChoiceLabel::UseLibrary : ChoiceLabel::UseHardcoded;
        ok += pred == r.label ? 1 : 0;
    }
    CHECK(ok >= 90);
}

TEST_CASE("train: conflicting duplicates finish with soft-margin error")
{
    std::mt19937_64 rng(5);
    Dataset d = margin_dataset(rng, 40);
    // duplicate a point with the opposite label
    DatasetRow dup = d.rows[0];
    dup.label = dup.label == ChoiceLabel::UseLibrary ? ChoiceLabel::UseHardcoded
                                                     : ChoiceLabel::UseLibrary;
    dup.step = 999;
    d.rows.push_back(dup);
    const ChooserModel m = train_chooser(d, 1.0 / kFeatureDim, 1.0);
    CHECK(training_accuracy(m, d) < 1.0);
    CHECK(training_accuracy(m, d) > 0.8);
}

TEST_CASE("train: single-class data is rejected")
{
    std::mt19937_64 rng(6);
    Dataset d = margin_dataset(rng, 20);
    for (auto& r : d.rows) {
        r.label = ChoiceLabel::UseHardcoded;
    }
    CHECK_THROWS(train_chooser(d, 1.0 / kFeatureDim, 1.0));
}

TEST_CASE("choose: negative decision values fall back to the hardcoded strategy")
{
    // all-library labels impossible; build a model biased fully to hardcoded
    std::mt19937_64 rng(9);
    Dataset d = margin_dataset(rng, 60);
    const ChooserModel m = train_chooser(d, 1.0 / kFeatureDim, 1.0);
    const StrategyLibrary lib = tiny_library(2);
    NNIndex idx{&lib};
    int hardcoded = 0, library = 0;
    for (int i = 0; i < 50; ++i) {
        std::vector<double> f = random_point(rng, 0.5);
        const ChoiceResult c = choose(f, m, idx);
        if (c.label == ChoiceLabel::UseHardcoded) {
            ++hardcoded;
            CHECK(c.entry == -1);
        } else {
            ++library;
            CHECK(c.entry >= 0);
        }
        CHECK((m.decision_value(f) >= 0) == (c.label == ChoiceLabel::UseLibrary));
    }
    CHECK(hardcoded > 0);
    CHECK(library > 0);
}

TEST_CASE("model json round-trip")
{
    std::mt19937_64 rng(11);
    const ChooserModel m = train_chooser(margin_dataset(rng, 50), 1.0 / kFeatureDim, 1.0);
    const json j = m;
    const ChooserModel back = j.get<ChooserModel>();
    CHECK(json(back) == j);
    std::vector<double> f = random_point(rng, 0.5);
    CHECK(back.decision_value(f) == doctest::Approx(m.decision_value(f)));
}

TEST_CASE("dataset csv round-trip")
{
    std::mt19937_64 rng(13);
    const Dataset d = margin_dataset(rng, 10);
    std::stringstream ss;
    d.write_csv(ss);
    const Dataset back = Dataset::read_csv(ss);
    REQUIRE(back.rows.size() == d.rows.size());
    for (std::size_t i = 0; i < d.rows.size(); ++i) {
        CHECK(back.rows[i].label == d.rows[i].label);
        CHECK(back.rows[i].env_seed == d.rows[i].env_seed);
        CHECK(back.rows[i].step == d.rows[i].step);
        for (int j = 0; j < kFeatureDim; ++j) {
            CHECK(back.rows[i].features[j] == doctest::Approx(d.rows[i].features[j]).epsilon(1e-6));
        }
    }
}

TEST_CASE("collect_data: zero iterations give an empty dataset")
{
    const StrategyLibrary lib = tiny_library(1);
    CollectConfig cc;
    cc.thresholds = kTh;
    const Dataset d = collect_data({small_pile_env(3)}, lib, SimParams{}, 0, cc);
    CHECK(d.rows.empty());
}

TEST_CASE("collect_data: row count, unique provenance and determinism")
{
    const StrategyLibrary lib = tiny_library(2);
    CollectConfig cc;
    cc.thresholds = kTh;
    const int iters = 12;
    const Dataset a = collect_data({small_pile_env(3), small_wall_env(4)}, lib, SimParams{},
                                   iters, cc);
    REQUIRE(static_cast<int>(a.rows.size()) == iters);
    std::set<std::pair<std::uint64_t, int>> keys;
    for (const auto& r : a.rows) {
        keys.insert({r.env_seed, r.step});
    }
    CHECK(keys.size() == a.rows.size());

    const Dataset b = collect_data({small_pile_env(3), small_wall_env(4)}, lib, SimParams{},
                                   iters, cc);
    REQUIRE(b.rows.size() == a.rows.size());
    for (std::size_t i = 0; i < a.rows.size(); ++i) {
        CHECK(a.rows[i].features == b.rows[i].features);
        CHECK(a.rows[i].label == b.rows[i].label);
    }
}

TEST_CASE("collect_data: a library of empty strategies always loses to hardcoded")
{
    StrategyLibrary lib;
    LibraryEntry e;
    e.anchor.assign(kFeatureDim, 0.0);
    e.tree = StrategyTree();  // no actions
    e.source = small_pile_env(1);
    lib.entries.push_back(std::move(e));
    CollectConfig cc;
    cc.thresholds = kTh;
    const Dataset d = collect_data({small_pile_env(5)}, lib, SimParams{}, 10, cc);
    REQUIRE(d.rows.size() == 10);
    for (const auto& r : d.rows) {
        CHECK(r.label == ChoiceLabel::UseHardcoded);
    }
}
