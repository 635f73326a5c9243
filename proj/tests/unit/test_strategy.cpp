#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "unloader/strategy.hpp"

using namespace unloader;
using namespace unloader::test;

namespace {

const ObserveThresholds kTh = ObserveThresholds::defaults_for({16, 8, 10});

// single-branch chain of `depth` actions where every edge carries `obs`
std::unique_ptr<StrategyNode> chain(int depth, const SemanticObservation& obs)
{
    auto node = std::make_unique<StrategyNode>();
    node->action = AbstractAction{ActionKind::Sweep, HeightBand::Low, SideBand::Center};
    if (depth > 1) {
        node->children.emplace(obs.label(), chain(depth - 1, obs));
    }
    return node;
}

}  // namespace

TEST_CASE("alphabets: exactly 12 actions and 18 observations, all distinct")
{
    const auto& actions = AbstractAction::all();
    CHECK(actions.size() == 12);
    std::set<std::string> action_labels;
    for (const auto& a : actions) {
        action_labels.insert(a.label());
        CHECK(AbstractAction::from_label(a.label()) == a);
    }
    CHECK(action_labels.size() == 12);

    const auto& obs = SemanticObservation::all();
    CHECK(obs.size() == 18);
    std::set<std::string> obs_labels;
    for (const auto& z : obs) {
        obs_labels.insert(z.label());
        CHECK(SemanticObservation::from_label(z.label()) == z);
    }
    CHECK(obs_labels.size() == 18);
    CHECK(SemanticObservation::empty_truck().label() == "TruckEmpty");
    CHECK(obs_labels.count("TruckEmpty") == 0);
}

TEST_CASE("observe: low heap with its top box on the left reads PileLowLeft")
{
    // a 2-high heap near the rear, topmost box in the left third
    const TrueWorldState t = make_true_state({16, 8, 10}, {{{10, 0, 0}, {2, 2, 1}, 1.0},
                                                           {{10, 0, 1}, {1, 1, 1}, 1.0},
                                                           {{11, 3, 0}, {1, 1, 1}, 1.0}});
    const SemanticObservation z = observe(perceive(t), kTh);
    CHECK(!z.truck_empty);
    CHECK(z.structure == SemanticObservation::Structure::Pile);
    CHECK(z.height == HeightBand::Low);
    CHECK(z.side == SideBand::Left);
    CHECK(z.label() == "PileLowLeft");
}

TEST_CASE("observe: full-height centered wall reads WallHighCenter")
{
    std::vector<BoxSpec> boxes;
    for (int w = 0; w < 8; ++w) {
        for (int h = 0; h < 10; ++h) {
            boxes.push_back({{0, w, h}, {1, 1, 1}, 1.0});
        }
    }
    const SemanticObservation z = observe(perceive(make_true_state({16, 8, 10}, boxes)), kTh);
    CHECK(z.structure == SemanticObservation::Structure::Wall);
    CHECK(z.height == HeightBand::High);
    CHECK(z.side == SideBand::Center);
}

TEST_CASE("observe: empty truck yields the sentinel")
{
    const SemanticObservation z = observe(perceive(make_true_state({16, 8, 10}, {})), kTh);
    CHECK(z.truck_empty);
}

TEST_CASE("observe: deterministic on generated scenes")
{
    for (std::uint64_t seed : {31u, 32u}) {
        const WorldState w = perceive(generate_environment(small_pile_env(seed)));
        CHECK(observe(w, kTh) == observe(w, kTh));
    }
}

TEST_CASE("hardcoded: deep pile sweeps at the pile depth")
{
    std::vector<BoxSpec> boxes;
    for (int d = 6; d < 11; ++d) {  // pile depth 5, height 1
        boxes.push_back({{d, 2, 0}, {1, 2, 1}, 1.0});
    }
    HardcodedParams p;
    p.d_min = 3;
    const PolicyDecision dec = hardcoded_decision(perceive(make_true_state({16, 8, 10}, boxes)),
                                                  p, kTh);
    REQUIRE(dec.action.has_value());
    CHECK(dec.action->kind == ActionKind::Sweep);
    CHECK(dec.sweep_depth == 5);
}

TEST_CASE("hardcoded: shallow pile with a tall wall picks the highest nearest box")
{
    std::vector<BoxSpec> boxes;
    for (int h = 0; h < 8; ++h) {  // wall of height 8 at depth 4
        boxes.push_back({{4, 3, h}, {1, 2, 1}, 1.0});
    }
    boxes.push_back({{5, 2, 0}, {1, 1, 1}, 1.0});  // pile depth 1
    HardcodedParams p;
    p.d_min = 3;
    p.h_min = 4;
    const PolicyDecision dec = hardcoded_decision(perceive(make_true_state({16, 8, 10}, boxes)),
                                                  p, kTh);
    REQUIRE(dec.action.has_value());
    CHECK(dec.action->kind == ActionKind::Pick);
    CHECK(dec.action->height == HeightBand::High);
    REQUIRE(dec.pick_cell.has_value());
    CHECK(dec.pick_cell->h == 7);  // top of the wall
}

TEST_CASE("hardcoded: empty truck is done")
{
    const PolicyDecision dec =
        hardcoded_decision(perceive(make_true_state({16, 8, 10}, {})), HardcodedParams{}, kTh);
    CHECK(!dec.action.has_value());
}

TEST_CASE("hardcoded: low wall below h_min falls back to sweeping its base")
{
    std::vector<BoxSpec> boxes;
    for (int h = 0; h < 3; ++h) {
        boxes.push_back({{4, 3, h}, {1, 2, 1}, 1.0});
    }
    HardcodedParams p;
    p.h_pile = 3;
    p.h_min = 4;
    const PolicyDecision dec = hardcoded_decision(perceive(make_true_state({16, 8, 10}, boxes)),
                                                  p, kTh);
    REQUIRE(dec.action.has_value());
    CHECK(dec.action->kind == ActionKind::Sweep);
    CHECK(dec.sweep_depth >= 1);
}

TEST_CASE("hardcoded: action kind is invariant under integer scaling of the geometry")
{
    for (int scale : {1, 2}) {
        std::vector<BoxSpec> boxes;
        for (int d = 8; d < 8 + 2 * scale; ++d) {  // pile depth 2*scale
            boxes.push_back({{d, 2, 0}, {1, 2, 1}, 1.0});
        }
        HardcodedParams p;
        p.d_min = 1 * scale;
        const PolicyDecision dec =
            hardcoded_decision(perceive(make_true_state({16, 8, 10}, boxes)), p, kTh);
        REQUIRE(dec.action.has_value());
        CHECK(dec.action->kind == ActionKind::Sweep);
    }
}

TEST_CASE("advance: follows the labeled edge from the root")
{
    const SemanticObservation z1 = SemanticObservation::from_label("PileLowLeft");
    auto root = std::make_unique<StrategyNode>();
    root->action = AbstractAction::from_label("SweepLow");
    auto child = std::make_unique<StrategyNode>();
    child->action = AbstractAction::from_label("PickHighLeft");
    root->children.emplace(z1.label(), std::move(child));
    const StrategyTree tree(std::move(root));

    const AdvanceResult r = advance(tree, tree_begin(tree), z1);
    REQUIRE(r.action.has_value());
    CHECK(*r.action == AbstractAction::from_label("PickHighLeft"));

    // other observations have no branch
    const SemanticObservation z2 = SemanticObservation::from_label("WallHighRight");
    CHECK(!advance(tree, tree_begin(tree), z2).action.has_value());
}

TEST_CASE("advance: leaf cursor is exhausted for any observation")
{
    auto root = std::make_unique<StrategyNode>();
    root->action = AbstractAction::from_label("SweepMid");
    const StrategyTree tree(std::move(root));
    for (const auto& z : SemanticObservation::all()) {
        CHECK(!advance(tree, tree_begin(tree), z).action.has_value());
    }
}

TEST_CASE("advance: a depth-6 chain yields 6 actions then exhausts")
{
    const SemanticObservation z = SemanticObservation::from_label("PileLowCenter");
    const StrategyTree tree(chain(6, z));
    CHECK(tree.depth() == 6);

    int actions = 0;
    std::optional<AbstractAction> act = root_action(tree);
    TreeCursor cur = tree_begin(tree);
    while (act) {
        ++actions;
        const AdvanceResult r = advance(tree, cur, z);
        act = r.action;
        cur = r.cursor;
    }
    CHECK(actions == 6);
}

TEST_CASE("library: save and load round-trip preserves structure")
{
    StrategyLibrary lib;
    const SemanticObservation z = SemanticObservation::from_label("WallMidCenter");
    for (int i = 0; i < 2; ++i) {
        LibraryEntry e;
        e.anchor.assign(85, 0.5 * i);
        e.tree = StrategyTree(chain(6, z));
        e.source = small_wall_env(i);
        lib.entries.push_back(std::move(e));
    }
    const std::string path = "/tmp/test_library.json";
    save_library(lib, path);
    const StrategyLibrary back = load_library(path);
    REQUIRE(back.entries.size() == 2);
    for (int i = 0; i < 2; ++i) {
        CHECK(back.entries[i].anchor == lib.entries[i].anchor);
        CHECK(back.entries[i].tree.node_count() == lib.entries[i].tree.node_count());
        CHECK(back.entries[i].tree.node_count() == 6);
        CHECK(back.entries[i].source == lib.entries[i].source);
    }
    std::remove(path.c_str());
}

TEST_CASE("library: truncated file raises a parse error")
{
    const std::string path = "/tmp/test_library_truncated.json";
    {
        std::ofstream out(path);
        out << "{\"version\": 1, \"entries\": [{\"anch";
    }
    CHECK_THROWS(load_library(path));
    std::remove(path.c_str());
}
