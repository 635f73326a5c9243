#include <doctest.h>

#include <sstream>

#include "helpers.hpp"
#include "unloader/executor.hpp"

using namespace unloader;
using namespace unloader::test;

namespace {

const ObserveThresholds kTh = ObserveThresholds::defaults_for({16, 8, 10});

TrueWorldState full_wall_truck()
{
    std::vector<BoxSpec> boxes;
    for (int w = 0; w < 8; ++w) {
        for (int h = 0; h < 8; ++h) {
            boxes.push_back({{2, w, h}, {1, 1, 1}, 0.8});
        }
    }
    return make_true_state({16, 8, 10}, boxes);
}

StrategyTree single_action_tree(const std::string& label)
{
    auto root = std::make_unique<StrategyNode>();
    root->action = AbstractAction::from_label(label);
    return StrategyTree(std::move(root));
}

}  // namespace

TEST_CASE("instantiate: pick emits the eight-query mode sequence")
{
    const RobotModel robot = RobotModel::defaults();
    const WorldState w = perceive(full_wall_truck());
    const AbstractAction a = AbstractAction::from_label("PickHighLeft");
    const auto inst = instantiate(a, w, robot, robot.home(6.5), SimParams{}, kTh);
    REQUIRE(inst.has_value());
    REQUIRE(inst->queries.size() == kPickModes.size());
    for (std::size_t i = 0; i < kPickModes.size(); ++i) {
        CHECK(inst->queries[i].mode == kPickModes[i]);
    }
    // the grasp targets the highest face cell of the left region
    CHECK(inst->binding.target_cell.h == 7);
    CHECK(classify_side(inst->binding.target_cell.w + 0.5, 8) == SideBand::Left);
}

TEST_CASE("instantiate: sweep emits five queries at the pile depth")
{
    std::vector<BoxSpec> boxes;
    for (int d = 8; d < 12; ++d) {  // pile of depth 4
        boxes.push_back({{d, 3, 0}, {1, 2, 1}, 1.0});
    }
    const RobotModel robot = RobotModel::defaults();
    const WorldState w = perceive(make_true_state({16, 8, 10}, boxes));
    const AbstractAction a = AbstractAction::from_label("SweepLow");
    const auto inst = instantiate(a, w, robot, robot.home(6.5), SimParams{}, kTh);
    REQUIRE(inst.has_value());
    REQUIRE(inst->queries.size() == kSweepModes.size());
    for (std::size_t i = 0; i < kSweepModes.size(); ++i) {
        CHECK(inst->queries[i].mode == kSweepModes[i]);
    }
    CHECK(inst->binding.sweep_depth == 4);
}

TEST_CASE("instantiate: empty region fails, empty world fails")
{
    const RobotModel robot = RobotModel::defaults();
    // a single box on the left; the right region is empty
    const WorldState w =
        perceive(make_true_state({16, 8, 10}, {{{2, 0, 0}, {1, 1, 1}, 1.0}}));
    CHECK(!instantiate(AbstractAction::from_label("PickHighRight"), w, robot, robot.home(6.5),
                       SimParams{}, kTh)
               .has_value());
    const WorldState empty = perceive(make_true_state({16, 8, 10}, {}));
    CHECK(!resolve_action(AbstractAction::from_label("SweepLow"), empty, SimParams{}, kTh)
               .has_value());
}

TEST_CASE("apply_abstract: unresolvable action is a timed no-op")
{
    SimHandle sim(make_true_state({16, 8, 10}, {{{2, 0, 0}, {1, 1, 1}, 1.0}}), SimParams{});
    const ActionOutcome out =
        apply_abstract(AbstractAction::from_label("PickHighRight"), sim, kTh);
    CHECK(out.boxes_unloaded == 0);
    CHECK(out.duration == doctest::Approx(SimParams{}.pick_base_time));
    CHECK(sim.state().box_count() == 1);
}

TEST_CASE("execute_strategy: empty truck logs no actions")
{
    SimHandle sim(make_true_state({16, 8, 10}, {}), SimParams{});
    const MotionPlanner planner(RobotModel::defaults());
    ExecutorConfig cfg;
    cfg.thresholds = kTh;
    StrategySource src;
    src.policy = [](const WorldState& w, const SemanticObservation&) {
        return hardcoded_decision(w, HardcodedParams{}, kTh).action;
    };
    const EpisodeLog log = execute_strategy(src, sim, planner, 1000.0, cfg);
    CHECK(log.records.empty());
    CHECK(log.final_boxes == 0);
}

TEST_CASE("execute_strategy: a single-pick tree unloads one light box then exhausts")
{
    SimHandle sim(make_true_state({16, 8, 10}, {{{2, 1, 0}, {1, 1, 1}, 0.5}}), SimParams{});
    const MotionPlanner planner(RobotModel::defaults());
    ExecutorConfig cfg;
    cfg.thresholds = kTh;
    const StrategyTree tree = single_action_tree("PickLowLeft");
    StrategySource src;
    src.tree = &tree;
    const EpisodeLog log = execute_strategy(src, sim, planner, 1000.0, cfg);
    REQUIRE(log.records.size() == 1);
    CHECK(!log.records[0].aborted);
    CHECK(log.records[0].boxes_unloaded == 1);
    CHECK(log.final_boxes == 1);
    CHECK(sim.state().empty());
    // mode conformance for the completed pick
    REQUIRE(log.records[0].modes.size() == kPickModes.size());
    for (std::size_t i = 0; i < kPickModes.size(); ++i) {
        CHECK(log.records[0].modes[i] == kPickModes[i]);
    }
}

TEST_CASE("execute_strategy: a tiny budget allows at most one action")
{
    SimHandle sim(full_wall_truck(), SimParams{});
    const MotionPlanner planner(RobotModel::defaults());
    ExecutorConfig cfg;
    cfg.thresholds = kTh;
    StrategySource src;
    src.policy = [](const WorldState& w, const SemanticObservation&) {
        return hardcoded_decision(w, HardcodedParams{}, kTh).action;
    };
    const EpisodeLog log = execute_strategy(src, sim, planner, 0.001, cfg);
    CHECK(log.records.size() <= 1);
}

TEST_CASE("execute_strategy: accounting identity against the simulator")
{
    SimParams sp;
    sp.rng_seed = 5;
    SimHandle sim(generate_environment(small_pile_env(31)), sp);
    const MotionPlanner planner(RobotModel::defaults());
    ExecutorConfig cfg;
    cfg.thresholds = kTh;
    StrategySource src;
    src.policy = [](const WorldState& w, const SemanticObservation&) {
        return hardcoded_decision(w, HardcodedParams{}, kTh).action;
    };
    const EpisodeLog log = execute_strategy(src, sim, planner, 600.0, cfg);
    int total = 0;
    double t_prev = 0.0;
    for (const auto& r : log.records) {
        total += r.boxes_unloaded;
        CHECK(r.t_end_s >= t_prev);  // curve is monotone in time
        t_prev = r.t_end_s;
        const double rate = action_rate(r);
        if (r.boxes_unloaded > 0) {
            CHECK(rate ==
                  doctest::Approx(r.boxes_unloaded / (r.plan_time_s + r.exec_time_s)));
        }
    }
    CHECK(total == sim.unloaded_total());
    CHECK(total == log.final_boxes);
}

TEST_CASE("episode log: csv layout and step curve")
{
    EpisodeLog log;
    ActionRecord r;
    r.action = "SweepLow";
    r.plan_time_s = 1.5;
    r.exec_time_s = 44.0;
    r.boxes_unloaded = 5;
    r.t_end_s = 45.5;
    r.boxes_cum = 5;
    log.records.push_back(r);
    log.final_time_s = 45.5;
    log.final_boxes = 5;

    std::ostringstream os;
    log.write_csv(os);
    const std::string csv = os.str();
    CHECK(csv.find("t_s,boxes_cum,action,plan_time_s,exec_time_s,failures") == 0);
    CHECK(csv.find("45.500000,5,SweepLow,1.500000,44.000000,0") != std::string::npos);

    CHECK(log.boxes_at(0.0) == 0);
    CHECK(log.boxes_at(45.0) == 0);
    CHECK(log.boxes_at(46.0) == 5);
}
