#include "unloader/motion.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <unordered_map>

namespace unloader {

const char* mode_name(PlanMode m)
{
    switch (m) {
    case PlanMode::M1_Arm: return "M1";
    case PlanMode::M2_ArmBase: return "M2";
    case PlanMode::M3_Nose: return "M3";
    case PlanMode::M4_ArmCartesian: return "M4";
    case PlanMode::M5_BaseCartesian: return "M5";
    default: return "M6";
    }
}

PlanMode mode_from_name(const std::string& s)
{
    for (PlanMode m : {PlanMode::M1_Arm, PlanMode::M2_ArmBase, PlanMode::M3_Nose,
                       PlanMode::M4_ArmCartesian, PlanMode::M5_BaseCartesian,
                       PlanMode::M6_SnapToValid}) {
        if (s == mode_name(m)) {
            return m;
        }
    }
    throw std::invalid_argument("unknown plan mode: " + s);
}

int mode_dof(PlanMode m)
{
    switch (m) {
    case PlanMode::M1_Arm: return 4;
    case PlanMode::M2_ArmBase: return 5;
    case PlanMode::M3_Nose: return 3;
    case PlanMode::M4_ArmCartesian: return 1;
    case PlanMode::M5_BaseCartesian: return 1;
    default: return 6;
    }
}

RobotModel RobotModel::defaults()
{
    return RobotModel{};
}

RobotConfig RobotModel::home(double apron_x) const
{
    RobotConfig c;
    c.base_x = std::min(apron_x, base_travel.hi);
    c.nose = nose_stow();
    c.arm = ArmJoints{0.0, 0.0, 0.0, 0.0};  // carry pose, boom level
    return c;
}

NoseJoints RobotModel::nose_down() const
{
    // Boom angled so the scoop tip skims just above the floor, scoop level.
    const double lift = std::asin(std::clamp((0.05 - nose_mount_z) / (nose_len), -1.0, 1.0));
    return NoseJoints{std::max(lift, nose_lift.lo), 0.0, std::min(-lift, nose_pitch.hi)};
}

NoseJoints RobotModel::nose_stow() const
{
    return NoseJoints{std::min(0.35, nose_lift.hi), 0.0, std::max(-0.35, nose_pitch.lo)};
}

namespace {

struct Frames {
    Vec2 shoulder, elbow, wrist_end, ee;
    Vec2 pivot, boom_tip, scoop_tip;
};

Frames fk(const RobotModel& m, const RobotConfig& c)
{
    Frames f;
    f.shoulder = {c.base_x - m.arm_mount_forward, m.arm_mount_z};
    const double th = c.arm.shoulder;
    const double arm_r = m.arm_len + c.arm.extend;
    f.elbow = {f.shoulder.x - std::cos(th) * arm_r, f.shoulder.z + std::sin(th) * arm_r};
    const double wr = th + c.arm.wrist;
    f.wrist_end = {f.elbow.x - std::cos(wr) * m.wrist_len, f.elbow.z + std::sin(wr) * m.wrist_len};
    f.ee = {f.wrist_end.x, f.wrist_end.z - c.arm.gripper};

    f.pivot = {c.base_x - m.nose_mount_forward, m.nose_mount_z};
    const double al = c.nose.lift;
    const double nose_r = m.nose_len + c.nose.extend;
    f.boom_tip = {f.pivot.x - std::cos(al) * nose_r, f.pivot.z + std::sin(al) * nose_r};
    const double sc = al + c.nose.pitch;
    f.scoop_tip = {f.boom_tip.x - std::cos(sc) * m.scoop_len, f.boom_tip.z + std::sin(sc) * m.scoop_len};
    return f;
}

// Link volumes live in a fixed-size buffer; collision checks run per lattice
// state and must not touch the heap.
struct RobotVolume {
    std::array<Aabb, 24> boxes;
    int count = 0;
    int nose_begin = 0, nose_end = 0;
    int arm_begin = 0, arm_end = 0;
};

// Segment swept volume approximated by short axis-aligned chunks so sloped
// links do not blanket the plane.
void append_segment(RobotVolume& out, Vec2 a, Vec2 b, double inflate_xz, double y_c,
                    double half_y, double z_lo_slack)
{
    const double len = std::hypot(b.x - a.x, b.z - a.z);
    const int pieces = std::max(1, static_cast<int>(std::ceil(len / 0.45)));
    for (int i = 0; i < pieces; ++i) {
        const double t0 = static_cast<double>(i) / pieces;
        const double t1 = static_cast<double>(i + 1) / pieces;
        const Vec2 p0{a.x + (b.x - a.x) * t0, a.z + (b.z - a.z) * t0};
        const Vec2 p1{a.x + (b.x - a.x) * t1, a.z + (b.z - a.z) * t1};
        Aabb& box = out.boxes[out.count++];
        box.lo[0] = std::min(p0.x, p1.x) - inflate_xz;
        box.hi[0] = std::max(p0.x, p1.x) + inflate_xz;
        box.lo[1] = y_c - half_y;
        box.hi[1] = y_c + half_y;
        box.lo[2] = std::min(p0.z, p1.z) - z_lo_slack;
        box.hi[2] = std::max(p0.z, p1.z) + inflate_xz;
    }
}

void robot_volume(const RobotModel& m, const RobotConfig& c, double y_c, RobotVolume& v)
{
    v.count = 0;
    const Frames f = fk(m, c);

    Aabb& base = v.boxes[v.count++];
    base.lo[0] = c.base_x - m.base_len / 2;
    base.hi[0] = c.base_x + m.base_len / 2;
    base.lo[1] = y_c - m.base_width / 2;
    base.hi[1] = y_c + m.base_width / 2;
    base.lo[2] = 0.05;
    base.hi[2] = m.base_height;

    v.nose_begin = v.count;
    // scoop skims the floor; inflate upward only
    append_segment(v, f.pivot, f.boom_tip, m.nose_thick, y_c, m.nose_width / 2, 0.02);
    append_segment(v, f.boom_tip, f.scoop_tip, m.nose_thick, y_c, m.nose_width / 2, 0.02);
    v.nose_end = v.count;

    v.arm_begin = v.count;
    append_segment(v, f.shoulder, f.elbow, m.arm_thick / 2, y_c, m.arm_width / 2,
                   m.arm_thick / 2);
    append_segment(v, f.elbow, f.wrist_end, 0.10, y_c, m.arm_width / 2, 0.10);
    {
        // gripper column and suction plate
        Aabb& plate = v.boxes[v.count++];
        plate.lo[0] = f.ee.x - m.plate_half_x;
        plate.hi[0] = f.ee.x + m.plate_half_x;
        plate.lo[1] = y_c - m.plate_half_y;
        plate.hi[1] = y_c + m.plate_half_y;
        plate.lo[2] = f.ee.z - m.plate_half_z;
        plate.hi[2] = f.wrist_end.z + 0.05;
    }
    v.arm_end = v.count;
}

bool aabb_hits_grid(const Aabb& box, const OccupancyGrid& g)
{
    const double cs = g.cell_size();
    const int d0 = static_cast<int>(std::floor(box.lo[0] / cs));
    const int d1 = static_cast<int>(std::floor((box.hi[0] - 1e-9) / cs));
    const int w0 = static_cast<int>(std::floor(box.lo[1] / cs));
    const int w1 = static_cast<int>(std::floor((box.hi[1] - 1e-9) / cs));
    const int h0 = static_cast<int>(std::floor(box.lo[2] / cs));
    const int h1 = static_cast<int>(std::floor((box.hi[2] - 1e-9) / cs));
    // boundary shell: floor/ceiling/side walls everywhere, front wall at d<0;
    // the rear opening and apron are free
    if (h0 < 0 || h1 >= g.height() || w0 < 0 || w1 >= g.width() || d0 < 0) {
        return true;
    }
    const int d_hi = std::min(d1, g.depth() - 1);
    for (int d = d0; d <= d_hi; ++d) {
        for (int w = w0; w <= w1; ++w) {
            const int top = g.column_top(d, w);
            if (top < h0) {
                continue;  // everything in this column is below the box
            }
            const int hh = std::min(h1, top);
            for (int h = h0; h <= hh; ++h) {
                if (g.interior_occupied(d, w, h)) {
                    return true;
                }
            }
        }
    }
    return false;
}

constexpr double kCostScale = 1e6;  // search costs in integer microseconds

std::int64_t edge_cost(double seconds)
{
    return static_cast<std::int64_t>(std::ceil(seconds * kCostScale - 1e-3));
}

std::int64_t heuristic_cost(double seconds)
{
    return std::max<std::int64_t>(0, static_cast<std::int64_t>(std::floor(seconds * kCostScale - 1e-3)));
}

double dof_get(const RobotConfig& c, int idx)
{
    switch (idx) {
    case 0: return c.base_x;
    case 1: return c.nose.lift;
    case 2: return c.nose.extend;
    case 3: return c.nose.pitch;
    case 4: return c.arm.shoulder;
    case 5: return c.arm.extend;
    case 6: return c.arm.wrist;
    default: return c.arm.gripper;
    }
}

void dof_set(RobotConfig& c, int idx, double v)
{
    switch (idx) {
    case 0: c.base_x = v; break;
    case 1: c.nose.lift = v; break;
    case 2: c.nose.extend = v; break;
    case 3: c.nose.pitch = v; break;
    case 4: c.arm.shoulder = v; break;
    case 5: c.arm.extend = v; break;
    case 6: c.arm.wrist = v; break;
    default: c.arm.gripper = v; break;
    }
}

using Coords = std::array<std::int16_t, 8>;  // up to 8 active DOFs, zero-padded

struct CoordsHash {
    std::size_t operator()(const Coords& v) const
    {
        std::size_t h = 1469598103934665603ULL;
        for (std::int16_t x : v) {
            h ^= static_cast<std::size_t>(static_cast<std::uint16_t>(x));
            h *= 1099511628211ULL;
        }
        return h;
    }
};

}  // namespace

std::vector<Aabb> robot_links(const RobotModel& m, const RobotConfig& c, double lateral_center)
{
    RobotVolume v;
    robot_volume(m, c, lateral_center, v);
    return std::vector<Aabb>(v.boxes.begin(), v.boxes.begin() + v.count);
}

Vec2 arm_ee(const RobotModel& m, const RobotConfig& c)
{
    return fk(m, c).ee;
}

bool collides(const RobotModel& m, const RobotConfig& c, const WorldState& w)
{
    const double y_c = 0.5 * w.grid.width() * w.grid.cell_size();
    RobotVolume v;
    robot_volume(m, c, y_c, v);
    for (int i = 0; i < v.count; ++i) {
        if (aabb_hits_grid(v.boxes[i], w.grid)) {
            return true;
        }
    }
    for (int i = v.arm_begin; i < v.arm_end; ++i) {
        for (int j = v.nose_begin; j < v.nose_end; ++j) {
            if (v.boxes[i].overlaps(v.boxes[j])) {
                return true;
            }
        }
    }
    return false;
}

struct MotionPlanner::DofSpec {
    int index = 0;
    double lo = 0.0;
    double hi = 0.0;
    double speed = 1.0;
    double res = 0.05;
};

std::vector<MotionPlanner::DofSpec> MotionPlanner::active_dofs(PlanMode mode) const
{
    const RobotModel& m = model_;
    auto mk = [&](int idx, const JointSpec& js, bool revolute, double scale = 1.0) {
        DofSpec d;
        d.index = idx;
        d.lo = js.lo;
        d.hi = js.hi;
        d.speed = js.speed;
        d.res = (revolute ? m.lattice_revolute : m.lattice_prismatic) * scale;
        return d;
    };
    switch (mode) {
    case PlanMode::M1_Arm:
        return {mk(4, m.arm_shoulder, true), mk(5, m.arm_extend, false), mk(6, m.arm_wrist, true),
                mk(7, m.arm_gripper, false)};
    case PlanMode::M2_ArmBase:
        return {mk(0, m.base_travel, false), mk(4, m.arm_shoulder, true), mk(5, m.arm_extend, false),
                mk(6, m.arm_wrist, true), mk(7, m.arm_gripper, false)};
    // M2 narrows the base to a window around the query start below
    case PlanMode::M3_Nose:
        return {mk(1, m.nose_lift, true), mk(2, m.nose_extend, false), mk(3, m.nose_pitch, true)};
    case PlanMode::M6_SnapToValid:
        // base + nose + two coarse arm DOFs
        return {mk(0, m.base_travel, false), mk(1, m.nose_lift, true), mk(2, m.nose_extend, false),
                mk(3, m.nose_pitch, true), mk(4, m.arm_shoulder, true, 2.0),
                mk(5, m.arm_extend, false, 2.0)};
    default:
        return {};
    }
}

MotionPlanner::MotionPlanner(RobotModel model) : model_(std::move(model)) {}

Vec2 MotionPlanner::resolved_pose_goal(const PlanQuery& q) const
{
    Vec2 g = q.pose_goal;
    if (q.pose_relative_to_base) {
        g.x += q.start.base_x;
    }
    return g;
}

namespace {

// Fastest end-effector speed the edge set can produce. Every edge moves one
// joint at a time (the analytic-IK jump is a macro of sequential per-joint
// moves), so the per-axis maximum is a valid bound.
double max_ee_speed(const RobotModel& m, PlanMode mode)
{
    const double reach = m.arm_len + m.arm_extend.hi + m.wrist_len;
    double v = std::max({m.arm_shoulder.speed * reach, m.arm_extend.speed,
                         m.arm_wrist.speed * m.wrist_len, m.arm_gripper.speed});
    if (mode == PlanMode::M2_ArmBase) {
        v = std::max(v, m.base_travel.speed);
    }
    return v;
}

}  // namespace

double MotionPlanner::heuristic(const RobotConfig& c, const PlanQuery& q) const
{
    if (q.mode == PlanMode::M3_Nose) {
        // joint-space Euclidean distance scaled by joint speeds
        const double dl = (c.nose.lift - q.nose_goal.lift) / model_.nose_lift.speed;
        const double de = (c.nose.extend - q.nose_goal.extend) / model_.nose_extend.speed;
        const double dp = (c.nose.pitch - q.nose_goal.pitch) / model_.nose_pitch.speed;
        return std::sqrt(dl * dl + de * de + dp * dp);
    }
    if (q.mode == PlanMode::M1_Arm || q.mode == PlanMode::M2_ArmBase) {
        const Vec2 ee = arm_ee(model_, c);
        const Vec2 goal = resolved_pose_goal(q);
        return std::hypot(ee.x - goal.x, ee.z - goal.z) / max_ee_speed(model_, q.mode);
    }
    return 0.0;
}

namespace {

struct LatticeState {
    Coords coords{};  // zero-padded; ik_state marks analytic-IK goal states
    bool ik_state = false;
    RobotConfig config;
    std::int64_t g = std::numeric_limits<std::int64_t>::max();
    std::int64_t h = 0;
    int parent = -1;
    int closed_iter = 0;
    bool in_frontier = false;
    bool blocked = false;
    bool succs_built = false;
    std::vector<std::pair<int, std::int64_t>> succs;  // cached edges
};

struct HeapEntry {
    std::int64_t f;
    std::int64_t g;
    int id;

    bool operator>(const HeapEntry& o) const
    {
        if (f != o.f) return f > o.f;
        if (g != o.g) return g > o.g;  // lower g wins ties
        return id > o.id;
    }
};

}  // namespace

PlanResult MotionPlanner::plan_lattice(const PlanQuery& q) const
{
    PlanResult result;
    const WorldState& world = *q.world;
    const bool snap_mode = q.mode == PlanMode::M6_SnapToValid;
    std::vector<DofSpec> dofs = active_dofs(q.mode);
    if (q.mode == PlanMode::M2_ArmBase) {
        // Coupled base+arm moves adjust locally; gross travel is M5's job.
        dofs[0].lo = std::max(dofs[0].lo, q.start.base_x - 1.25);
        dofs[0].hi = std::min(dofs[0].hi, q.start.base_x + 1.25);
    }
    const Vec2 pose_goal = resolved_pose_goal(q);

    if (!snap_mode && collides(model_, q.start, world)) {
        return result;  // caller should snap with M6 first
    }
    if (q.mode == PlanMode::M1_Arm || q.mode == PlanMode::M2_ArmBase) {
        // quick reject: goal outside the arm's reach sphere from every base
        // position available to the query
        const double reach = model_.arm_len + model_.arm_extend.hi + model_.wrist_len +
                             model_.arm_gripper.hi;
        double bx = q.start.base_x;
        if (q.mode == PlanMode::M2_ArmBase) {
            bx = std::clamp(pose_goal.x + model_.arm_mount_forward, dofs[0].lo, dofs[0].hi);
        }
        const double gap = std::hypot(bx - model_.arm_mount_forward - pose_goal.x,
                                      model_.arm_mount_z - pose_goal.z);
        if (gap > reach + model_.ee_goal_tol) {
            return result;  // unreachable
        }
    }

    auto coords_of = [&](const RobotConfig& c) {
        Coords v{};
        for (std::size_t i = 0; i < dofs.size(); ++i) {
            const double raw = std::clamp(dof_get(c, dofs[i].index), dofs[i].lo, dofs[i].hi);
            v[i] = static_cast<std::int16_t>(std::llround((raw - dofs[i].lo) / dofs[i].res));
        }
        return v;
    };
    auto config_of = [&](const Coords& coords) {
        RobotConfig c = q.start;
        for (std::size_t i = 0; i < dofs.size(); ++i) {
            dof_set(c, dofs[i].index, dofs[i].lo + coords[i] * dofs[i].res);
        }
        return c;
    };

    Coords goal_coords{};
    if (q.mode == PlanMode::M3_Nose) {
        RobotConfig g = q.start;
        g.nose = q.nose_goal;
        goal_coords = coords_of(g);
    }
    auto is_goal = [&](const LatticeState& s) {
        switch (q.mode) {
        case PlanMode::M3_Nose:
            return s.coords == goal_coords;
        case PlanMode::M6_SnapToValid:
            return !s.blocked;
        default: {
            if (s.ik_state) {
                return true;  // analytic-IK state ends exactly at goal
            }
            if (q.mode == PlanMode::M2_ArmBase && s.config.arm.shoulder < -0.35) {
                return false;  // pregrasp posture: approach stroke must not dig down
            }
            const Vec2 ee = arm_ee(model_, s.config);
            return std::hypot(ee.x - pose_goal.x, ee.z - pose_goal.z) <= model_.ee_goal_tol;
        }
        }
    };
    auto h_of = [&](const LatticeState& s) -> std::int64_t {
        if (snap_mode) {
            return 0;
        }
        if (q.mode == PlanMode::M3_Nose) {
            double sum = 0.0;
            for (std::size_t i = 0; i < dofs.size(); ++i) {
                const double dq = (s.coords[i] - goal_coords[i]) * dofs[i].res / dofs[i].speed;
                sum += dq * dq;
            }
            return heuristic_cost(std::sqrt(sum));
        }
        // distance to the goal *region*, so goal states carry h = 0
        const Vec2 ee = arm_ee(model_, s.config);
        const double dist = std::hypot(ee.x - pose_goal.x, ee.z - pose_goal.z);
        return heuristic_cost(std::max(0.0, dist - model_.ee_goal_tol) /
                              max_ee_speed(model_, q.mode));
    };

    std::vector<LatticeState> states;
    states.reserve(1 << 14);
    std::unordered_map<Coords, int, CoordsHash> index;
    index.reserve(1 << 14);
    std::vector<int> frontier;

    auto get_state = [&](const Coords& coords) -> int {
        auto it = index.find(coords);
        if (it != index.end()) {
            return it->second;
        }
        LatticeState s;
        s.coords = coords;
        s.config = config_of(coords);
        s.blocked = collides(model_, s.config, world);
        s.h = 0;
        const int id = static_cast<int>(states.size());
        states.push_back(std::move(s));
        states[id].h = h_of(states[id]);
        index.emplace(coords, id);
        return id;
    };

    const int start_id = get_state(coords_of(q.start));
    states[start_id].config = q.start;  // keep the exact (possibly off-lattice) start
    if (!snap_mode && states[start_id].blocked) {
        // the snapped start landed in an obstacle
        return result;
    }
    states[start_id].g = 0;
    states[start_id].in_frontier = true;
    frontier.push_back(start_id);

    const std::int64_t budget =
        static_cast<std::int64_t>(q.timeout / std::max(1e-9, model_.time_per_expansion));
    std::int64_t expansions = 0;

    static const double kEpsSchedule[] = {5.0, 4.5, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5, 1.0};
    const int n_eps = snap_mode ? 1 : static_cast<int>(std::size(kEpsSchedule));

    int incumbent = -1;
    std::int64_t incumbent_cost = std::numeric_limits<std::int64_t>::max();
    double reported_bound = std::numeric_limits<double>::infinity();
    bool out_of_budget = false;

    std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<HeapEntry>> open;

    for (int iter = 1; iter <= n_eps; ++iter) {
        const double eps = snap_mode ? 1.0 : kEpsSchedule[iter - 1];

        open = {};
        frontier.erase(std::remove_if(frontier.begin(), frontier.end(),
                                      [&](int id) { return !states[id].in_frontier; }),
                       frontier.end());
        for (int id : frontier) {
            const auto& s = states[id];
            const std::int64_t f =
                s.g + static_cast<std::int64_t>(std::llround(eps * static_cast<double>(s.h)));
            open.push({f, s.g, id});
        }

        bool improved = false;
        while (!open.empty()) {
            if (expansions >= budget) {
                out_of_budget = true;
                break;
            }
            const HeapEntry top = open.top();
            open.pop();
            LatticeState& s = states[top.id];
            if (top.g != s.g) {
                continue;  // stale entry
            }
            if (incumbent >= 0 && top.f >= incumbent_cost) {
                break;  // nothing cheaper reachable under this inflation
            }
            if (is_goal(s)) {
                if (s.g < incumbent_cost) {
                    incumbent = top.id;
                    incumbent_cost = s.g;
                    improved = true;
                }
                break;
            }
            if (s.closed_iter == iter) {
                continue;
            }
            s.closed_iter = iter;
            s.in_frontier = false;
            ++expansions;

            // Edges are generated once per state and cached; repeated
            // expansions across the inflation schedule replay the cache.
            if (!s.succs_built) {
                std::vector<std::pair<int, std::int64_t>> succs;
                const RobotConfig s_config = s.config;
                const Coords s_coords = s.coords;

                // Primitives: short and long single-axis moves, generated as
                // one walk per direction. A long move costs exactly its
                // unit-step composition and, outside snap mode, requires
                // every intermediate state valid, so the reachability metric
                // stays identical to the unit-step lattice.
                constexpr int kLongSpan = 5;
                for (std::size_t i = 0; i < dofs.size(); ++i) {
                    const std::int64_t unit = edge_cost(dofs[i].res / dofs[i].speed);
                    for (int dir : {-1, +1}) {
                        Coords nc = s_coords;
                        for (int span = 1; span <= kLongSpan; ++span) {
                            nc[i] = static_cast<std::int16_t>(s_coords[i] + dir * span);
                            const double v = dofs[i].lo + nc[i] * dofs[i].res;
                            if (v < dofs[i].lo - 1e-9 || v > dofs[i].hi + 1e-9) {
                                break;
                            }
                            const int succ_id = get_state(nc);
                            if (span == 1 || span == kLongSpan) {
                                if (snap_mode || !states[succ_id].blocked) {
                                    succs.emplace_back(succ_id, span * unit);
                                }
                            }
                            if (!snap_mode && states[succ_id].blocked) {
                                break;  // longer spans would pass through it
                            }
                        }
                    }
                }

                // Adaptive primitive: a single analytic-IK jump (base held
                // still) that lands the end-effector exactly on the goal.
                if (q.mode == PlanMode::M1_Arm || q.mode == PlanMode::M2_ArmBase) {
                    const Vec2 ee = arm_ee(model_, s_config);
                    const double dist = std::hypot(ee.x - pose_goal.x, ee.z - pose_goal.z);
                    if (dist > 1e-12 && dist <= model_.ik_jump_threshold) {
                        const Vec2 shoulder{s_config.base_x - model_.arm_mount_forward,
                                            model_.arm_mount_z};
                        // take depth with the gripper column, keeping the
                        // boom as level as possible; wrist levels the plate
                        const double grip =
                            std::clamp(model_.arm_mount_z - pose_goal.z, model_.arm_gripper.lo,
                                       model_.arm_gripper.hi);
                        const double ex = pose_goal.x + model_.wrist_len;
                        const double ez = pose_goal.z + grip;
                        const double vx = shoulder.x - ex;  // along -x reach
                        const double vz = ez - shoulder.z;
                        const double r = std::hypot(vx, vz);
                        const double theta = std::atan2(vz, vx);
                        const double ext = r - model_.arm_len;
                        const double wrist = -theta;
                        const double theta_lo =
                            q.mode == PlanMode::M2_ArmBase ? -0.35 : model_.arm_shoulder.lo;
                        if (vx > 0.0 && theta >= theta_lo && theta <= model_.arm_shoulder.hi &&
                            ext >= model_.arm_extend.lo && ext <= model_.arm_extend.hi &&
                            wrist >= model_.arm_wrist.lo && wrist <= model_.arm_wrist.hi) {
                            RobotConfig jc = s_config;
                            jc.arm.shoulder = theta;
                            jc.arm.extend = ext;
                            jc.arm.wrist = wrist;
                            jc.arm.gripper = grip;
                            if (!collides(model_, jc, world)) {
                                // macro of sequential per-joint moves
                                const double dur =
                                    std::abs(theta - s_config.arm.shoulder) /
                                        model_.arm_shoulder.speed +
                                    std::abs(ext - s_config.arm.extend) / model_.arm_extend.speed +
                                    std::abs(wrist - s_config.arm.wrist) / model_.arm_wrist.speed +
                                    std::abs(grip - s_config.arm.gripper) /
                                        model_.arm_gripper.speed;
                                LatticeState js;
                                js.ik_state = true;
                                js.config = jc;
                                js.h = 0;
                                const int jid = static_cast<int>(states.size());
                                states.push_back(std::move(js));
                                succs.emplace_back(jid, edge_cost(std::max(dur, 1e-6)));
                            }
                        }
                    }
                }
                states[top.id].succs = std::move(succs);
                states[top.id].succs_built = true;
            }

            const std::int64_t s_g = states[top.id].g;
            for (const auto& [succ_id, cost] : states[top.id].succs) {
                LatticeState& succ = states[succ_id];
                if (s_g + cost < succ.g) {
                    succ.g = s_g + cost;
                    succ.parent = top.id;
                    if (!succ.in_frontier) {
                        succ.in_frontier = true;
                        frontier.push_back(succ_id);
                    }
                    if (succ.closed_iter != iter) {
                        const std::int64_t f =
                            succ.g +
                            static_cast<std::int64_t>(std::llround(eps * static_cast<double>(succ.h)));
                        open.push({f, succ.g, succ_id});
                    }
                    // else: inconsistent, re-queued at the next inflation
                }
            }
        }
        if (out_of_budget && incumbent < 0) {
            break;
        }

        if (incumbent >= 0) {
            // epsilon' = cost / min uninflated key over the remaining frontier
            std::int64_t min_key = std::numeric_limits<std::int64_t>::max();
            for (int id : frontier) {
                if (states[id].in_frontier) {
                    min_key = std::min(min_key, states[id].g + states[id].h);
                }
            }
            double bound = eps;
            if (min_key == std::numeric_limits<std::int64_t>::max()) {
                bound = 1.0;  // search space exhausted
            } else if (min_key > 0) {
                bound = std::min(bound, static_cast<double>(incumbent_cost) /
                                            static_cast<double>(min_key));
            }
            bound = std::max(bound, 1.0);
            reported_bound = std::min(reported_bound, bound);
            if (improved || result.solutions.empty() ||
                reported_bound < result.solutions.back().bound) {
                result.solutions.push_back({incumbent_cost / kCostScale, reported_bound,
                                            static_cast<int>(expansions)});
            }
            if (reported_bound <= 1.0 + 1e-12) {
                break;
            }
        }
        if (out_of_budget) {
            break;
        }
    }

    result.expansions = static_cast<int>(expansions);
    result.planning_time = static_cast<double>(expansions) * model_.time_per_expansion;
    if (incumbent < 0) {
        result.status = out_of_budget ? PlanStatus::Timeout : PlanStatus::Unreachable;
        return result;
    }

    result.status = PlanStatus::Success;
    Trajectory& traj = result.trajectory;
    for (int id = incumbent; id != -1; id = states[id].parent) {
        traj.waypoints.push_back(states[id].config);
    }
    std::reverse(traj.waypoints.begin(), traj.waypoints.end());
    traj.cost = incumbent_cost / kCostScale;
    traj.suboptimality_bound = reported_bound;
    traj.planning_time = result.planning_time;
    return result;
}

PlanResult MotionPlanner::plan_cartesian(const PlanQuery& q) const
{
    PlanResult result;
    const WorldState& world = *q.world;
    const bool base = q.mode == PlanMode::M5_BaseCartesian;
    const int dof_idx = base ? 0 : 5;
    const JointSpec& js = base ? model_.base_travel : model_.arm_extend;

    if (collides(model_, q.start, world)) {
        return result;
    }

    const double from = dof_get(q.start, dof_idx);
    const double to = from + q.displacement;
    if (to < js.lo - 1e-9 || to > js.hi + 1e-9) {
        return result;  // displacement leaves the joint range
    }

    const double dist = std::abs(q.displacement);
    const int steps = std::max(1, static_cast<int>(std::ceil(dist / model_.lattice_prismatic)));
    for (int k = 1; k <= steps; ++k) {
        RobotConfig c = q.start;
        dof_set(c, dof_idx, from + q.displacement * k / steps);
        if (collides(model_, c, world)) {
            result.expansions = k;
            result.planning_time = k * model_.time_per_expansion;
            return result;  // blocked along the line
        }
    }

    result.status = PlanStatus::Success;
    result.expansions = steps;
    result.planning_time = steps * model_.time_per_expansion;
    Trajectory& traj = result.trajectory;
    traj.waypoints.push_back(q.start);
    if (dist > 1e-12) {
        RobotConfig end = q.start;
        dof_set(end, dof_idx, to);
        traj.waypoints.push_back(end);
    }
    traj.cost = dist / js.speed;
    traj.suboptimality_bound = 1.0;
    traj.planning_time = result.planning_time;
    result.solutions.push_back({traj.cost, 1.0, result.expansions});
    return result;
}

PlanResult MotionPlanner::plan(const PlanQuery& q) const
{
    if (!q.world) {
        throw std::invalid_argument("plan query carries no world");
    }
    if (q.timeout <= 0.0) {
        throw std::invalid_argument("plan timeout must be positive");
    }
    switch (q.mode) {
    case PlanMode::M4_ArmCartesian:
    case PlanMode::M5_BaseCartesian:
        return plan_cartesian(q);
    default:
        return plan_lattice(q);
    }
}

// --- JSON ---

static void to_json_js(json& j, const JointSpec& s)
{
    j = json{{"lo", s.lo}, {"hi", s.hi}, {"speed", s.speed}};
}

static void from_json_js(const json& j, JointSpec& s)
{
    j.at("lo").get_to(s.lo);
    j.at("hi").get_to(s.hi);
    j.at("speed").get_to(s.speed);
}

void to_json(json& j, const RobotModel& m)
{
    j = json{{"base_len", m.base_len},
             {"base_width", m.base_width},
             {"base_height", m.base_height},
             {"nose_mount_forward", m.nose_mount_forward},
             {"nose_mount_z", m.nose_mount_z},
             {"nose_len", m.nose_len},
             {"nose_width", m.nose_width},
             {"nose_thick", m.nose_thick},
             {"scoop_len", m.scoop_len},
             {"arm_mount_forward", m.arm_mount_forward},
             {"arm_mount_z", m.arm_mount_z},
             {"arm_len", m.arm_len},
             {"wrist_len", m.wrist_len},
             {"arm_thick", m.arm_thick},
             {"arm_width", m.arm_width},
             {"plate_half_x", m.plate_half_x},
             {"plate_half_y", m.plate_half_y},
             {"plate_half_z", m.plate_half_z},
             {"lattice_prismatic", m.lattice_prismatic},
             {"lattice_revolute", m.lattice_revolute},
             {"ee_goal_tol", m.ee_goal_tol},
             {"ik_jump_threshold", m.ik_jump_threshold},
             {"time_per_expansion", m.time_per_expansion},
             {"default_timeout", m.default_timeout}};
    to_json_js(j["base_travel"], m.base_travel);
    to_json_js(j["nose_lift"], m.nose_lift);
    to_json_js(j["nose_extend"], m.nose_extend);
    to_json_js(j["nose_pitch"], m.nose_pitch);
    to_json_js(j["arm_shoulder"], m.arm_shoulder);
    to_json_js(j["arm_extend"], m.arm_extend);
    to_json_js(j["arm_wrist"], m.arm_wrist);
    to_json_js(j["arm_gripper"], m.arm_gripper);
}

void from_json(const json& j, RobotModel& m)
{
    m = RobotModel::defaults();
    auto opt = [&](const char* key, double& v) {
        if (j.contains(key)) j.at(key).get_to(v);
    };
    opt("base_len", m.base_len);
    opt("base_width", m.base_width);
    opt("base_height", m.base_height);
    opt("nose_mount_forward", m.nose_mount_forward);
    opt("nose_mount_z", m.nose_mount_z);
    opt("nose_len", m.nose_len);
    opt("nose_width", m.nose_width);
    opt("nose_thick", m.nose_thick);
    opt("scoop_len", m.scoop_len);
    opt("arm_mount_forward", m.arm_mount_forward);
    opt("arm_mount_z", m.arm_mount_z);
    opt("arm_len", m.arm_len);
    opt("wrist_len", m.wrist_len);
    opt("arm_thick", m.arm_thick);
    opt("arm_width", m.arm_width);
    opt("plate_half_x", m.plate_half_x);
    opt("plate_half_y", m.plate_half_y);
    opt("plate_half_z", m.plate_half_z);
    opt("lattice_prismatic", m.lattice_prismatic);
    opt("lattice_revolute", m.lattice_revolute);
    opt("ee_goal_tol", m.ee_goal_tol);
    opt("ik_jump_threshold", m.ik_jump_threshold);
    opt("time_per_expansion", m.time_per_expansion);
    opt("default_timeout", m.default_timeout);
    auto optjs = [&](const char* key, JointSpec& s) {
        if (j.contains(key)) from_json_js(j.at(key), s);
    };
    optjs("base_travel", m.base_travel);
    optjs("nose_lift", m.nose_lift);
    optjs("nose_extend", m.nose_extend);
    optjs("nose_pitch", m.nose_pitch);
    optjs("arm_shoulder", m.arm_shoulder);
    optjs("arm_extend", m.arm_extend);
    optjs("arm_wrist", m.arm_wrist);
    optjs("arm_gripper", m.arm_gripper);
}

void to_json(json& j, const RobotConfig& c)
{
    j = json{{"base_x", c.base_x},
             {"nose", {{"lift", c.nose.lift}, {"extend", c.nose.extend}, {"pitch", c.nose.pitch}}},
             {"arm",
              {{"shoulder", c.arm.shoulder},
               {"extend", c.arm.extend},
               {"wrist", c.arm.wrist},
               {"gripper", c.arm.gripper}}}};
}

void from_json(const json& j, RobotConfig& c)
{
    j.at("base_x").get_to(c.base_x);
    const auto& n = j.at("nose");
    n.at("lift").get_to(c.nose.lift);
    n.at("extend").get_to(c.nose.extend);
    n.at("pitch").get_to(c.nose.pitch);
    const auto& a = j.at("arm");
    a.at("shoulder").get_to(c.arm.shoulder);
    a.at("extend").get_to(c.arm.extend);
    a.at("wrist").get_to(c.arm.wrist);
    a.at("gripper").get_to(c.arm.gripper);
}

}  // namespace unloader
