#pragma once

#include <array>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unloader/world.hpp"

namespace unloader {

struct NoseJoints {
    double lift = 0.0;    // rad, + up
    double extend = 0.0;  // m
    double pitch = 0.0;   // rad, scoop relative to boom
};

struct ArmJoints {
    double shoulder = 0.0;  // rad, + up
    double extend = 0.0;    // m
    double wrist = 0.0;     // rad, relative to upper arm
    double gripper = 0.0;   // m, suction column drop
};

// 8 DOF: prismatic base along depth plus two planar chains.
struct RobotConfig {
    double base_x = 0.0;  // m from the front wall
    NoseJoints nose;
    ArmJoints arm;
};

enum class PlanMode { M1_Arm, M2_ArmBase, M3_Nose, M4_ArmCartesian, M5_BaseCartesian, M6_SnapToValid };

const char* mode_name(PlanMode m);
PlanMode mode_from_name(const std::string& s);
int mode_dof(PlanMode m);

struct JointSpec {
    double lo = 0.0;
    double hi = 0.0;
    double speed = 1.0;  // units/s
};

struct Vec2 {
    double x = 0.0;
    double z = 0.0;
};

// Kinematic description: planar chains in the depth-height plane, laterally
// centered in the trailer. Loaded from a JSON robot file; defaults() matches
// the stock trailer (6 m deep, 0.25 m cells).
struct RobotModel {
    // base
    double base_len = 1.6;
    double base_width = 1.6;
    double base_height = 1.0;
    JointSpec base_travel{0.3, 9.0, 0.5};

    // nose (scooper)
    double nose_mount_forward = 0.8;  // pivot ahead of base center
    double nose_mount_z = 0.55;
    double nose_len = 1.4;
    double nose_width = 1.7;
    double nose_thick = 0.12;
    double scoop_len = 0.3;
    JointSpec nose_lift{-0.45, 0.5, 0.5};
    JointSpec nose_extend{0.0, 0.8, 0.4};
    JointSpec nose_pitch{-0.6, 0.6, 0.8};

    // arm (suction manipulator)
    double arm_mount_forward = 0.6;
    double arm_mount_z = 1.35;
    double arm_len = 1.0;
    double wrist_len = 0.3;
    double arm_thick = 0.24;
    double arm_width = 0.45;
    double plate_half_x = 0.10;
    double plate_half_y = 0.25;
    double plate_half_z = 0.08;
    JointSpec arm_shoulder{-0.9, 1.2, 0.6};
    JointSpec arm_extend{0.0, 1.8, 0.5};
    JointSpec arm_wrist{-1.57, 1.57, 1.0};
    JointSpec arm_gripper{0.0, 0.8, 0.3};

    // lattice / planner
    double lattice_prismatic = 0.05;       // m
    double lattice_revolute = 0.0872665;   // 5 deg
    double ee_goal_tol = 0.10;             // m
    double ik_jump_threshold = 2.5;        // m
    double time_per_expansion = 15e-6;     // simulated s; keeps plans reproducible
    double default_timeout = 5.0;          // s

    static RobotModel defaults();
    RobotConfig home(double apron_x) const;
    NoseJoints nose_down() const;
    NoseJoints nose_stow() const;
};

void to_json(json& j, const RobotModel& m);
void from_json(const json& j, RobotModel& m);
void to_json(json& j, const RobotConfig& c);
void from_json(const json& j, RobotConfig& c);

struct Aabb {
    double lo[3];
    double hi[3];

    bool overlaps(const Aabb& o) const
    {
        for (int i = 0; i < 3; ++i) {
            if (lo[i] >= o.hi[i] || o.lo[i] >= hi[i]) {
                return false;
            }
        }
        return true;
    }
};

// Link boxes from forward kinematics: base, nose boom, scoop, upper arm,
// wrist+plate.
std::vector<Aabb> robot_links(const RobotModel& m, const RobotConfig& c, double lateral_center);
Vec2 arm_ee(const RobotModel& m, const RobotConfig& c);

bool collides(const RobotModel& m, const RobotConfig& c, const WorldState& w);

struct PlanQuery {
    PlanMode mode = PlanMode::M1_Arm;
    RobotConfig start;
    // goal, by mode:
    Vec2 pose_goal;                     // M1/M2 end-effector position
    bool pose_relative_to_base = false; // resolve pose against start.base_x
    NoseJoints nose_goal;               // M3
    double displacement = 0.0;          // M4 (arm extension) / M5 (base), m
    std::shared_ptr<const WorldState> world;
    double timeout = 5.0;  // simulated seconds
};

enum class PlanStatus { Success, Timeout, Unreachable };

struct AnytimeSolution {
    double cost = 0.0;
    double bound = 1.0;
    int expansions = 0;
};

struct Trajectory {
    std::vector<RobotConfig> waypoints;
    double cost = 0.0;
    double suboptimality_bound = 1.0;
    double planning_time = 0.0;  // simulated seconds
};

struct PlanResult {
    PlanStatus status = PlanStatus::Unreachable;
    Trajectory trajectory;
    std::vector<AnytimeSolution> solutions;  // incumbents, in discovery order
    int expansions = 0;
    double planning_time = 0.0;

    bool ok() const { return status == PlanStatus::Success; }
};

// Search-based planner over a uniformly discretized lattice. plan() is a pure
// function of the query; planning time is simulated (expansions x fixed cost)
// so identical queries give identical results, including their timing.
class MotionPlanner {
public:
    explicit MotionPlanner(RobotModel model);

    PlanResult plan(const PlanQuery& q) const;
    double heuristic(const RobotConfig& c, const PlanQuery& q) const;
    const RobotModel& model() const { return model_; }

private:
    struct DofSpec;
    std::vector<DofSpec> active_dofs(PlanMode mode) const;
    PlanResult plan_lattice(const PlanQuery& q) const;
    PlanResult plan_cartesian(const PlanQuery& q) const;
    Vec2 resolved_pose_goal(const PlanQuery& q) const;

    RobotModel model_;
};

}  // namespace unloader
