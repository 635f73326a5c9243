#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "unloader/motion.hpp"
#include "unloader/sim.hpp"
#include "unloader/strategy.hpp"

namespace unloader {

// Subaction mode sequences for the two high-level actions: the core pick
// subactions plus the base shuttling before and after.
inline constexpr std::array<PlanMode, 8> kPickModes = {
    PlanMode::M5_BaseCartesian, PlanMode::M3_Nose,           PlanMode::M2_ArmBase,
    PlanMode::M4_ArmCartesian,  PlanMode::M4_ArmCartesian,   PlanMode::M1_Arm,
    PlanMode::M3_Nose,          PlanMode::M5_BaseCartesian};

inline constexpr std::array<PlanMode, 5> kSweepModes = {
    PlanMode::M5_BaseCartesian, PlanMode::M3_Nose, PlanMode::M5_BaseCartesian,
    PlanMode::M5_BaseCartesian, PlanMode::M3_Nose};

// What the simulator needs to run an abstract action: the grasp footprint
// anchor for a Pick, the capture depth for a Sweep.
struct SimBinding {
    ActionKind kind = ActionKind::Pick;
    int grasp_w = 0;
    int grasp_h = 0;
    Cell3 target_cell;  // chosen face cell (d = face depth)
    int sweep_depth = 0;
};

// Resolves the geometric part of an action against the perceived state:
// Pick selects the highest, then nearest, face cell in the (height, side)
// region; Sweep measures the pile depth for its height band. nullopt when the
// region holds no boxes. When a robot model is given, pick candidates beyond
// arm reach from the standoff are skipped; belief rollouts pass nullptr and
// keep the motion-free abstraction.
std::optional<SimBinding> resolve_action(const AbstractAction& a, const WorldState& w,
                                         const SimParams& sp, const ObserveThresholds& th,
                                         const RobotModel* reach = nullptr);

struct InstantiatedAction {
    AbstractAction action;
    SimBinding binding;
    std::vector<PlanQuery> queries;
};

std::optional<InstantiatedAction> instantiate(const AbstractAction& a, const WorldState& w,
                                              const RobotModel& robot, const RobotConfig& current,
                                              const SimParams& sp, const ObserveThresholds& th);

// Applies an abstract action directly to the simulator, skipping motion
// planning. Used by belief rollouts and probe windows. No-op with base-time
// duration when the action cannot be resolved.
ActionOutcome apply_abstract(const AbstractAction& a, SimHandle& sim, const ObserveThresholds& th);

struct ActionRecord {
    std::string action;
    std::vector<PlanMode> modes;  // planned subaction modes, in order
    double plan_time_s = 0.0;
    double exec_time_s = 0.0;
    int boxes_unloaded = 0;
    int failures = 0;   // failed plan calls
    int preplans = 0;   // M6 snap queries issued before subactions
    bool aborted = false;
    bool fallback = false;  // hardcoded action substituted for this step
    double t_end_s = 0.0;
    int boxes_cum = 0;
};

struct EpisodeLog {
    std::vector<ActionRecord> records;
    double final_time_s = 0.0;
    int final_boxes = 0;

    // step curve of (t, boxes) after each completed action
    std::vector<std::pair<double, int>> curve() const;
    int boxes_at(double t) const;
    void write_csv(std::ostream& os) const;
    json summary() const;
};

using PolicyFn =
    std::function<std::optional<AbstractAction>(const WorldState&, const SemanticObservation&)>;

// Either a fixed decision tree (stops when exhausted) or a per-step policy
// (stops when it returns nullopt).
struct StrategySource {
    const StrategyTree* tree = nullptr;
    PolicyFn policy;
};

struct ExecutorConfig {
    ObserveThresholds thresholds;
    HardcodedParams hardcoded;
    bool fallback_to_hardcoded = true;
    int max_actions = 100000;
};

// Closed loop: perceive, observe, pick the next abstract action, plan its
// subactions, run the simulator, log. Stops at the time budget, an empty
// truck, or an exhausted source.
EpisodeLog execute_strategy(const StrategySource& source, SimHandle& sim,
                            const MotionPlanner& planner, double budget_s,
                            const ExecutorConfig& cfg = {});

// Episode time accounting uses the simulator's duration model; planner costs
// are query-level estimates, not wall time.
double action_rate(const ActionRecord& r);

}  // namespace unloader
