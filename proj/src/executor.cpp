#include "unloader/executor.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace unloader {

namespace {

// Worst-case forward reach of the nose over a lowering arc, from the base
// center. Standoffs computed against this keep M3 queries clear of boxes.
double nose_arc_reach(const RobotModel& m)
{
    return m.nose_mount_forward + m.nose_len + m.scoop_len + m.nose_thick + 0.03;
}

// Forward extent of the lowered nose, from the base center.
double nose_down_extent(const RobotModel& m)
{
    RobotConfig c;
    c.base_x = 0.0;
    c.nose = m.nose_down();
    double lo = 0.0;
    const auto links = robot_links(m, c, 0.0);
    for (const auto& b : links) {
        lo = std::min(lo, b.lo[0]);
    }
    return -lo;
}

// Rearmost box extent in meters; standoffs are measured from here.
double rear_most_x(const WorldState& w)
{
    int d_end = 0;
    for (const auto& b : w.boxes) {
        d_end = std::max(d_end, b.d_end());
    }
    return d_end * w.grid.cell_size();
}

constexpr double kApproach = 0.25;      // M4 approach/retract stroke, m
constexpr double kPregraspGap = 0.48;   // pregrasp plate offset from the face, m
constexpr double kGraspGap = kPregraspGap - kApproach;
constexpr double kStandoffGap = 0.15;   // clearance between nose arc and boxes
constexpr double kPostPickBack = 0.4;   // base shuttle after a pick, m

double pick_standoff(const RobotModel& robot, const WorldState& w)
{
    return std::clamp(rear_most_x(w) + nose_arc_reach(robot) + kStandoffGap,
                      robot.base_travel.lo, robot.base_travel.hi);
}

// Whether the arm can span from its shoulder at the standoff to the grasp
// pose, with room left for the approach stroke.
bool grasp_within_reach(const RobotModel& robot, double standoff, double face_x, double z)
{
    const double sx = standoff - robot.arm_mount_forward;
    const double sz = robot.arm_mount_z;
    const double r = std::hypot(sx - (face_x + kGraspGap), sz - z);
    return r + kApproach + 0.05 <= robot.arm_len + robot.arm_extend.hi + robot.wrist_len;
}

std::shared_ptr<const WorldState> masked_world(const WorldState& w, int d_lo, int d_hi)
{
    auto masked = std::make_shared<WorldState>();
    masked->grid = OccupancyGrid(w.grid.dims(), w.grid.cell_size());
    for (const auto& b : w.boxes) {
        if (b.d_end() - 1 >= d_lo && b.pos.d <= d_hi) {
            continue;  // inside the sweep corridor
        }
        masked->boxes.push_back(b);
    }
    masked->grid.fill_from_boxes(masked->boxes);
    return masked;
}

}  // namespace

std::optional<SimBinding> resolve_action(const AbstractAction& a, const WorldState& w,
                                         const SimParams& sp, const ObserveThresholds& th,
                                         const RobotModel* reach)
{
    const Cell3 dims = w.grid.dims();
    if (w.empty()) {
        return std::nullopt;
    }

    if (a.kind == ActionKind::Pick) {
        // Face cells first-hit by rear depth rays, restricted to the
        // requested (height, side) region of the cross-section.
        const double cs = w.grid.cell_size();
        const double standoff = reach ? pick_standoff(*reach, w) : 0.0;
        SimBinding best;
        bool found = false;
        for (int wd = 0; wd < dims.w; ++wd) {
            if (classify_side(wd + 0.5, dims.w) != a.side) {
                continue;
            }
            for (int h = 0; h < dims.h; ++h) {
                if (classify_height(h + 1, th) != a.height) {
                    continue;
                }
                for (int d = dims.d - 1; d >= 0; --d) {
                    if (!w.grid.interior_occupied(d, wd, h)) {
                        continue;
                    }
                    if (reach &&
                        !grasp_within_reach(*reach, standoff, (d + 1) * cs, (h + 0.5) * cs)) {
                        break;  // face cell too deep for the arm
                    }
                    // highest, then nearest the robot, then leftmost
                    if (!found || h > best.target_cell.h ||
                        (h == best.target_cell.h && d > best.target_cell.d)) {
                        best.target_cell = Cell3{d, wd, h};
                        found = true;
                    }
                    break;
                }
            }
        }
        if (!found) {
            return std::nullopt;
        }
        best.kind = ActionKind::Pick;
        const int fw = std::max(1, sp.grasp_w);
        const int fh = std::max(1, sp.grasp_h);
        best.grasp_w = std::clamp(best.target_cell.w - fw / 2, 0, std::max(0, dims.w - fw));
        best.grasp_h = std::clamp(best.target_cell.h - fh + 1, 0, std::max(0, dims.h - fh));
        return best;
    }

    // Sweep: contiguous columns at or below the band cap, rear to front.
    const int cap = th.sweep_height_cap(a.height, dims.h);
    int rear = -1;
    for (int d = dims.d - 1; d >= 0 && rear < 0; --d) {
        for (int wd = 0; wd < dims.w; ++wd) {
            if (w.grid.column_top(d, wd) >= 0) {
                rear = d;
                break;
            }
        }
    }
    if (rear < 0) {
        return std::nullopt;
    }
    int depth = 0;
    for (int d = rear; d >= 0; --d) {
        int col = 0;
        for (int wd = 0; wd < dims.w; ++wd) {
            col = std::max(col, w.grid.column_top(d, wd) + 1);
        }
        if (col == 0 || col > cap) {
            break;
        }
        ++depth;
    }
    if (depth == 0) {
        return std::nullopt;  // front structure is taller than this band
    }
    SimBinding b;
    b.kind = ActionKind::Sweep;
    b.sweep_depth = std::min(depth, sp.sweep_capture_depth_max);
    b.target_cell = Cell3{rear, 0, 0};
    return b;
}

std::optional<InstantiatedAction> instantiate(const AbstractAction& a, const WorldState& w,
                                              const RobotModel& robot, const RobotConfig& current,
                                              const SimParams& sp, const ObserveThresholds& th)
{
    auto binding = resolve_action(a, w, sp, th, &robot);
    if (!binding) {
        return std::nullopt;
    }
    InstantiatedAction out;
    out.action = a;
    out.binding = *binding;

    const double cs = w.grid.cell_size();
    auto world = std::make_shared<const WorldState>(w);
    const double standoff = pick_standoff(robot, w);
    const double timeout = robot.default_timeout;

    auto mk = [&](PlanMode mode) {
        PlanQuery q;
        q.mode = mode;
        q.world = world;
        q.timeout = timeout;
        return q;
    };

    if (a.kind == ActionKind::Pick) {
        const Cell3 cell = binding->target_cell;
        const double face_x = (cell.d + 1) * cs;
        // room for the goal tolerance plus the approach stroke's vertical
        // drift at the steepest allowed boom angle
        const double z_margin = robot.plate_half_z + robot.ee_goal_tol + 0.35 * kApproach + 0.03;
        const double z_grasp =
            std::clamp((cell.h + 0.5) * cs, z_margin, w.grid.height() * cs - z_margin);

        PlanQuery q1 = mk(PlanMode::M5_BaseCartesian);
        q1.displacement = standoff - current.base_x;
        PlanQuery q2 = mk(PlanMode::M3_Nose);
        q2.nose_goal = robot.nose_down();
        PlanQuery q3 = mk(PlanMode::M2_ArmBase);
        q3.pose_goal = Vec2{face_x + kPregraspGap, z_grasp};
        PlanQuery q4 = mk(PlanMode::M4_ArmCartesian);
        q4.displacement = kApproach;
        PlanQuery q5 = mk(PlanMode::M4_ArmCartesian);
        q5.displacement = -kApproach;
        PlanQuery q6 = mk(PlanMode::M1_Arm);
        q6.pose_goal = Vec2{-2.2, 1.3};  // over the conveyor
        q6.pose_relative_to_base = true;
        PlanQuery q7 = mk(PlanMode::M3_Nose);
        q7.nose_goal = robot.nose_stow();
        PlanQuery q8 = mk(PlanMode::M5_BaseCartesian);
        q8.displacement = std::min(kPostPickBack, robot.base_travel.hi - standoff);

        out.queries = {q1, q2, q3, q4, q5, q6, q7, q8};
        return out;
    }

    // Sweep
    const int depth = binding->sweep_depth;
    const int d_rear = binding->target_cell.d;
    const double sweep_m = depth * cs;
    auto corridor = masked_world(w, d_rear - depth + 1, d_rear);
    const double forward = standoff - nose_down_extent(robot) -
                           ((d_rear + 1) * cs - sweep_m + kStandoffGap);

    PlanQuery q1 = mk(PlanMode::M5_BaseCartesian);
    q1.displacement = standoff - current.base_x;
    PlanQuery q2 = mk(PlanMode::M3_Nose);
    q2.nose_goal = robot.nose_down();
    PlanQuery q3 = mk(PlanMode::M5_BaseCartesian);
    q3.displacement = -std::max(0.0, forward);
    q3.world = corridor;
    PlanQuery q4 = mk(PlanMode::M5_BaseCartesian);
    q4.displacement = std::max(0.0, forward);
    q4.world = corridor;
    PlanQuery q5 = mk(PlanMode::M3_Nose);
    q5.nose_goal = robot.nose_stow();
    q5.world = corridor;

    out.queries = {q1, q2, q3, q4, q5};
    return out;
}

ActionOutcome apply_abstract(const AbstractAction& a, SimHandle& sim, const ObserveThresholds& th)
{
    const WorldState w = perceive(sim.state());
    const auto binding = resolve_action(a, w, sim.params(), th);
    if (!binding) {
        ActionOutcome out;
        out.duration = a.kind == ActionKind::Pick ? sim.params().pick_base_time
                                                  : sim.params().sweep_base_time;
        return out;
    }
    if (binding->kind == ActionKind::Pick) {
        return sim.apply_pick(binding->grasp_w, binding->grasp_h);
    }
    return sim.apply_sweep(binding->sweep_depth);
}

std::vector<std::pair<double, int>> EpisodeLog::curve() const
{
    std::vector<std::pair<double, int>> c;
    c.emplace_back(0.0, 0);
    for (const auto& r : records) {
        c.emplace_back(r.t_end_s, r.boxes_cum);
    }
    return c;
}

int EpisodeLog::boxes_at(double t) const
{
    int boxes = 0;
    for (const auto& r : records) {
        if (r.t_end_s <= t + 1e-9) {
            boxes = r.boxes_cum;
        } else {
            break;
        }
    }
    return boxes;
}

void EpisodeLog::write_csv(std::ostream& os) const
{
    os << "t_s,boxes_cum,action,plan_time_s,exec_time_s,failures\n";
    char buf[160];
    for (const auto& r : records) {
        std::snprintf(buf, sizeof(buf), "%.6f,%d,%s,%.6f,%.6f,%d\n", r.t_end_s, r.boxes_cum,
                      r.action.c_str(), r.plan_time_s, r.exec_time_s, r.failures);
        os << buf;
    }
}

double action_rate(const ActionRecord& r)
{
    const double denom = r.plan_time_s + r.exec_time_s;
    return denom > 0.0 ? r.boxes_unloaded / denom : 0.0;
}

json EpisodeLog::summary() const
{
    json per_kind = json::object();
    for (const char* kind : {"Pick", "Sweep"}) {
        std::vector<const ActionRecord*> rs;
        for (const auto& r : records) {
            if (!r.aborted && r.action.rfind(kind, 0) == 0) {
                rs.push_back(&r);
            }
        }
        auto stat = [&](auto f) {
            double mean = 0.0, sq = 0.0;
            for (const auto* r : rs) {
                mean += f(*r);
            }
            if (!rs.empty()) {
                mean /= rs.size();
            }
            for (const auto* r : rs) {
                sq += (f(*r) - mean) * (f(*r) - mean);
            }
            const double sd = rs.empty() ? 0.0 : std::sqrt(sq / rs.size());
            return json::array({mean, sd});
        };
        per_kind[kind] = json{
            {"count", rs.size()},
            {"plan_time_s", stat([](const ActionRecord& r) { return r.plan_time_s; })},
            {"exec_time_s", stat([](const ActionRecord& r) { return r.exec_time_s; })},
            {"boxes", stat([](const ActionRecord& r) { return double(r.boxes_unloaded); })},
            {"rate", stat([](const ActionRecord& r) { return action_rate(r); })},
        };
    }
    return json{{"actions", records.size()},
                {"final_time_s", final_time_s},
                {"final_boxes", final_boxes},
                {"per_action", per_kind}};
}

EpisodeLog execute_strategy(const StrategySource& source, SimHandle& sim,
                            const MotionPlanner& planner, double budget_s,
                            const ExecutorConfig& cfg)
{
    EpisodeLog log;
    const RobotModel& robot = planner.model();
    const double apron_x =
        sim.state().grid.depth() * sim.state().grid.cell_size() + 2.5;
    RobotConfig current = robot.home(apron_x);

    TreeCursor cursor = source.tree ? tree_begin(*source.tree) : TreeCursor{};
    bool first = true;
    double t = 0.0;
    int boxes_cum = 0;
    int abort_streak = 0;

    for (int step = 0; step < cfg.max_actions; ++step) {
        if (t >= budget_s) {
            break;
        }
        const WorldState w = perceive(sim.state());
        if (w.empty()) {
            break;
        }
        const SemanticObservation z = observe(w, cfg.thresholds);

        std::optional<AbstractAction> act;
        if (source.tree) {
            if (first) {
                act = root_action(*source.tree);
                first = false;
            } else {
                const AdvanceResult adv = advance(*source.tree, cursor, z);
                act = adv.action;
                cursor = adv.cursor;
            }
            if (!act) {
                break;  // strategy exhausted
            }
        } else {
            act = source.policy(w, z);
            if (!act) {
                break;  // policy says done
            }
        }

        bool fallback = false;
        if (abort_streak >= 2) {
            break;  // even the clearing sweep cannot be executed
        }
        if (abort_streak == 1) {
            // a deterministic re-plan of the same action would fail the same
            // way; clear the approach instead
            act = AbstractAction{ActionKind::Sweep, HeightBand::High, SideBand::Center};
            fallback = true;
        }
        auto inst = instantiate(*act, w, robot, current, sim.params(), cfg.thresholds);
        if (!inst && cfg.fallback_to_hardcoded) {
            const PolicyDecision hd = hardcoded_decision(w, cfg.hardcoded, cfg.thresholds);
            if (!hd.action) {
                break;
            }
            inst = instantiate(*hd.action, w, robot, current, sim.params(), cfg.thresholds);
            if (!inst) {
                // clear the nearest structure; resolvable whenever boxes exist
                inst = instantiate(AbstractAction{ActionKind::Sweep, HeightBand::High,
                                                  SideBand::Center},
                                   w, robot, current, sim.params(), cfg.thresholds);
            }
            fallback = true;
        }
        if (!inst) {
            break;
        }

        ActionRecord rec;
        rec.action = inst->action.label();
        rec.fallback = fallback;
        bool aborted = false;
        for (PlanQuery q : inst->queries) {
            q.start = current;
            if (collides(robot, current, *q.world)) {
                // contact happens in operation; snap to the closest valid state
                PlanQuery snap;
                snap.mode = PlanMode::M6_SnapToValid;
                snap.start = current;
                snap.world = q.world;
                snap.timeout = q.timeout;
                const PlanResult sr = planner.plan(snap);
                ++rec.preplans;
                rec.plan_time_s += sr.planning_time;
                if (!sr.ok()) {
                    ++rec.failures;
                    aborted = true;
                    break;
                }
                current = sr.trajectory.waypoints.back();
                q.start = current;
            }
            PlanResult r = planner.plan(q);
            rec.plan_time_s += r.planning_time;
            if (!r.ok()) {
                ++rec.failures;
                r = planner.plan(q);  // one retry
                rec.plan_time_s += r.planning_time;
                if (!r.ok()) {
                    ++rec.failures;
                    aborted = true;
                    break;
                }
            }
            rec.modes.push_back(q.mode);
            if (!r.trajectory.waypoints.empty()) {
                current = r.trajectory.waypoints.back();
            }
        }
        rec.aborted = aborted;
        abort_streak = aborted ? abort_streak + 1 : 0;
        if (!aborted) {
            const ActionOutcome outcome =
                inst->binding.kind == ActionKind::Pick
                    ? sim.apply_pick(inst->binding.grasp_w, inst->binding.grasp_h)
                    : sim.apply_sweep(inst->binding.sweep_depth);
            rec.exec_time_s = outcome.duration;
            rec.boxes_unloaded = outcome.boxes_unloaded;
            boxes_cum += outcome.boxes_unloaded;
        }
        t += rec.plan_time_s + rec.exec_time_s;
        rec.t_end_s = t;
        rec.boxes_cum = boxes_cum;
        log.records.push_back(std::move(rec));
    }
    log.final_time_s = t;
    log.final_boxes = boxes_cum;
    return log;
}

}  // namespace unloader
