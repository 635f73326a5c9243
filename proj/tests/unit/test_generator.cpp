#include <doctest.h>

#include <cmath>
#include <set>

#include "common/micro_oracle.hpp"
#include "helpers.hpp"
#include "unloader/generator.hpp"

using namespace unloader;
using namespace unloader::test;

namespace {

const ObserveThresholds kTh = ObserveThresholds::defaults_for({16, 8, 10});

}  // namespace

TEST_CASE("belief: five particles share geometry and uniform weights")
{
    const WorldState w = perceive(generate_environment(small_pile_env(3)));
    MassDist prior;
    const Belief b = sample_initial_belief(w, prior, 5, 42);
    REQUIRE(b.particles.size() == 5);
    for (const auto& p : b.particles) {
        CHECK(p.weight == doctest::Approx(0.2));
        CHECK(p.state.box_count() == w.box_count());
        for (std::size_t i = 0; i < p.state.boxes.size(); ++i) {
            CHECK(p.state.boxes[i].pos == w.boxes[i].pos);
            CHECK(p.state.boxes[i].mass.has_value());
        }
    }
    const Belief single = sample_initial_belief(w, prior, 1, 42);
    REQUIRE(single.particles.size() == 1);
    CHECK(single.particles[0].weight == doctest::Approx(1.0));
}

TEST_CASE("belief: sampled masses track the prior mean")
{
    const WorldState w = perceive(make_true_state({8, 4, 6}, {{{0, 0, 0}, {1, 1, 1}, 1.0}}));
    MassDist prior;
    prior.kind = MassDist::Kind::Uniform;
    prior.lo = 1.0;
    prior.hi = 8.0;
    const int n = 10000;
    const Belief b = sample_initial_belief(w, prior, n, 7);
    double mean = 0.0;
    for (const auto& p : b.particles) {
        mean += *p.state.boxes[0].mass;
    }
    mean /= n;
    const double sigma = (prior.hi - prior.lo) / std::sqrt(12.0) / std::sqrt(double(n));
    CHECK(std::abs(mean - prior.mean()) <= 3.0 * sigma);
}

TEST_CASE("heuristics: empty belief is zero, expectations otherwise")
{
    Belief empty;
    empty.particles.push_back({make_true_state({8, 4, 6}, {}), 1.0});
    const HeuristicValues h0 = belief_heuristics(empty);
    CHECK(h0.h1 == 0.0);
    CHECK(h0.h2 == 0.0);
    CHECK(h0.h3 == 0.0);

    // ten boxes, stack height 3, in every particle
    std::vector<BoxSpec> boxes;
    for (int i = 0; i < 10; ++i) {
        boxes.push_back({{i % 4, i / 4, 0}, {1, 1, 1}, 1.0});
    }
    boxes[0].dims.h = 3;
    Belief b;
    b.particles.push_back({make_true_state({8, 4, 6}, boxes), 0.5});
    b.particles.push_back({make_true_state({8, 4, 6}, boxes), 0.5});
    const HeuristicValues h = belief_heuristics(b, 600.0);
    CHECK(h.h1 == doctest::Approx(600.0));
    CHECK(h.h2 == doctest::Approx(10.0));
    CHECK(h.h3 == doctest::Approx(3.0));

    // mixed particle counts average
    Belief mixed;
    std::vector<BoxSpec> ten(boxes.begin(), boxes.end());
    std::vector<BoxSpec> twenty = ten;
    for (int i = 0; i < 10; ++i) {
        twenty.push_back({{4 + i % 4, i / 4, 0}, {1, 1, 1}, 1.0});
    }
    mixed.particles.push_back({make_true_state({8, 4, 6}, ten), 0.5});
    mixed.particles.push_back({make_true_state({8, 4, 6}, twenty), 0.5});
    CHECK(belief_heuristics(mixed).h2 == doctest::Approx(15.0));
}

TEST_CASE("propagate: identical deterministic particles collapse to one branch")
{
    const MicroInstance mi = make_micro_instance(1);
    Belief b;
    b.particles.push_back({mi.state, 0.5});
    b.particles.push_back({mi.state, 0.5});
    for (auto& p : b.particles) {
        for (auto& box : p.state.boxes) {
            box.mass = 1.0;  // all light in both particles
        }
    }
    const auto groups =
        propagate(b, AbstractAction::from_label("SweepLow"), mi.sim, mi.th, 99);
    REQUIRE(groups.size() == 1);
    CHECK(groups[0].prob == doctest::Approx(1.0));
    CHECK(groups[0].belief.weight_sum() == doctest::Approx(1.0));
}

TEST_CASE("propagate: group probabilities and weights sum to one")
{
    const WorldState w = perceive(generate_environment(small_pile_env(12)));
    MassDist prior;
    prior.kind = MassDist::Kind::Bimodal;
    const Belief b = sample_initial_belief(w, prior, 5, 5);
    for (const auto& a : AbstractAction::all()) {
        const auto groups = propagate(b, a, SimParams{}, kTh, 17);
        double total = 0.0;
        for (const auto& g : groups) {
            total += g.prob;
            CHECK(g.belief.weight_sum() == doctest::Approx(1.0).epsilon(1e-12));
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("propagate: capacity splits a light/heavy belief into two branches")
{
    // one box; light particle unloads, heavy particle drops the box
    TrueWorldState light = make_true_state({8, 4, 6}, {{{0, 1, 0}, {1, 1, 1}, 1.0}});
    TrueWorldState heavy = make_true_state({8, 4, 6}, {{{0, 1, 0}, {1, 1, 1}, 30.0}});
    Belief b;
    b.particles.push_back({light, 0.5});
    b.particles.push_back({heavy, 0.5});
    SimParams sp;
    sp.suction_capacity = 12.0;
    sp.drop_prob_per_kg_over = 1.0;
    const auto groups = propagate(b, AbstractAction::from_label("PickLowCenter"), sp,
                                  ObserveThresholds::defaults_for({8, 4, 6}), 3);
    REQUIRE(groups.size() == 2);
    CHECK(groups[0].prob == doctest::Approx(0.5));
    CHECK(groups[1].prob == doctest::Approx(0.5));
}

TEST_CASE("generate: empty initial belief returns a tree with no actions")
{
    Belief b;
    b.particles.push_back({make_true_state({8, 4, 6}, {}), 1.0});
    GeneratorParams p;
    GenerationStats stats;
    const StrategyTree tree =
        generate_strategy(b, p, SimParams{}, kTh, 1, &stats);
    CHECK(tree.empty());
    CHECK(stats.complete);
    CHECK(stats.root_value == doctest::Approx(0.0));
}

TEST_CASE("generate: tree depth respects the horizon and both alphabets")
{
    const MicroInstance mi = make_micro_instance(4);
    GenerationStats stats;
    const StrategyTree tree =
        generate_strategy(mi.b0, mi.gen, mi.sim, mi.th, mi.seed, &stats);
    CHECK(tree.depth() <= mi.gen.horizon);
    CHECK(stats.complete);

    // every node's action and edge labels come from the fixed alphabets
    std::set<std::string> action_labels, obs_labels;
    for (const auto& a : AbstractAction::all()) {
        action_labels.insert(a.label());
    }
    for (const auto& z : SemanticObservation::all()) {
        obs_labels.insert(z.label());
    }
    std::function<void(const StrategyNode*)> walk = [&](const StrategyNode* n) {
        CHECK(action_labels.count(n->action.label()) == 1);
        for (const auto& [label, child] : n->children) {
            CHECK(obs_labels.count(label) == 1);
            walk(child.get());
        }
    };
    if (!tree.empty()) {
        walk(tree.root());
    }
}

TEST_CASE("generate: belief hygiene holds through the whole search")
{
    const MicroInstance mi = make_micro_instance(6);
    GenerationStats stats;
    generate_strategy(mi.b0, mi.gen, mi.sim, mi.th, mi.seed, &stats);
    CHECK(stats.max_weight_err <= 1e-9);
    CHECK(stats.max_prob_err <= 1e-9);
}

TEST_CASE("generate: exact mode matches the enumeration optimum on micro trucks")
{
    for (std::uint64_t seed : {1u, 2u, 3u, 4u, 5u}) {
        const MicroInstance mi = make_micro_instance(seed);
        GenerationStats stats;
        const StrategyTree tree =
            generate_strategy(mi.b0, mi.gen, mi.sim, mi.th, mi.seed, &stats);
        REQUIRE(stats.complete);
        const double opt = enumerate_optimum(mi.b0, 0, mi);
        const double got = eval_tree(tree, mi);
        CHECK(got == doctest::Approx(opt).epsilon(1e-9));
    }
}

TEST_CASE("generate: deterministic for a fixed seed")
{
    const MicroInstance mi = make_micro_instance(9);
    GenerationStats s1, s2;
    const StrategyTree a = generate_strategy(mi.b0, mi.gen, mi.sim, mi.th, mi.seed, &s1);
    const StrategyTree b = generate_strategy(mi.b0, mi.gen, mi.sim, mi.th, mi.seed, &s2);
    CHECK(json(a) == json(b));
    CHECK(s1.expansions == s2.expansions);
    CHECK(s1.root_value == s2.root_value);
}

TEST_CASE("generate: guided mode keeps the root value non-increasing")
{
    const WorldState w = perceive(generate_environment(small_pile_env(21)));
    MassDist prior;
    prior.kind = MassDist::Kind::Bimodal;
    const Belief b0 = sample_initial_belief(w, prior, 5, 11);
    GeneratorParams p;  // defaults: eps1 = eps2 = 10
    p.horizon = 4;
    p.max_expansions = 120;
    GenerationStats stats;
    generate_strategy(b0, p, SimParams{}, kTh, 11, &stats);
    REQUIRE(stats.root_values.size() > 2);
    for (std::size_t i = 1; i < stats.root_values.size(); ++i) {
        CHECK(stats.root_values[i] <= stats.root_values[i - 1] + 1e-6);
    }
}
