#pragma once

// Test-side uniform-cost-search oracle for M3 nose lattices. Re-derives the
// lattice from the robot model on its own (coords, +/-1 steps, integer
// microsecond edge costs) and shares only the collision model with the
// planner under test.

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <queue>
#include <vector>

#include "unloader/motion.hpp"
#include "unloader/rng.hpp"
#include "unloader/world.hpp"

namespace unloader::test {

struct OracleResult {
    bool solved = false;
    std::int64_t cost_us = 0;
    long expansions = 0;
};

inline std::int64_t oracle_edge_cost_us(double seconds)
{
    return static_cast<std::int64_t>(std::ceil(seconds * 1e6 - 1e-3));
}

inline OracleResult dijkstra_m3(const RobotModel& m, const RobotConfig& start,
                                const NoseJoints& goal, const WorldState& world)
{
    struct Dof {
        double lo, hi, speed;
        double res;
    };
    const Dof dofs[3] = {{m.nose_lift.lo, m.nose_lift.hi, m.nose_lift.speed, m.lattice_revolute},
                         {m.nose_extend.lo, m.nose_extend.hi, m.nose_extend.speed,
                          m.lattice_prismatic},
                         {m.nose_pitch.lo, m.nose_pitch.hi, m.nose_pitch.speed,
                          m.lattice_revolute}};

    auto snap = [&](double v, const Dof& d) {
        const double c = std::clamp(v, d.lo, d.hi);
        return static_cast<int>(std::llround((c - d.lo) / d.res));
    };
    auto config_of = [&](const std::array<int, 3>& c) {
        RobotConfig rc = start;
        rc.nose.lift = dofs[0].lo + c[0] * dofs[0].res;
        rc.nose.extend = dofs[1].lo + c[1] * dofs[1].res;
        rc.nose.pitch = dofs[2].lo + c[2] * dofs[2].res;
        return rc;
    };

    const std::array<int, 3> s{snap(start.nose.lift, dofs[0]), snap(start.nose.extend, dofs[1]),
                               snap(start.nose.pitch, dofs[2])};
    const std::array<int, 3> g{snap(goal.lift, dofs[0]), snap(goal.extend, dofs[1]),
                               snap(goal.pitch, dofs[2])};

    OracleResult out;
    if (collides(m, config_of(s), world)) {
        return out;
    }

    std::map<std::array<int, 3>, std::int64_t> dist;
    using Entry = std::pair<std::int64_t, std::array<int, 3>>;
    std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> open;
    dist[s] = 0;
    open.push({0, s});
    while (!open.empty()) {
        const auto [d, c] = open.top();
        open.pop();
        if (d != dist[c]) {
            continue;
        }
        if (c == g) {
            out.solved = true;
            out.cost_us = d;
            return out;
        }
        ++out.expansions;
        for (int i = 0; i < 3; ++i) {
            for (int dir : {-1, +1}) {
                std::array<int, 3> nc = c;
                nc[i] += dir;
                const double v = dofs[i].lo + nc[i] * dofs[i].res;
                if (v < dofs[i].lo - 1e-9 || v > dofs[i].hi + 1e-9) {
                    continue;
                }
                if (collides(m, config_of(nc), world)) {
                    continue;
                }
                const std::int64_t nd = d + oracle_edge_cost_us(dofs[i].res / dofs[i].speed);
                auto it = dist.find(nc);
                if (it == dist.end() || nd < it->second) {
                    dist[nc] = nd;
                    open.push({nd, nc});
                }
            }
        }
    }
    return out;
}

// Small nose workspace with scattered box obstacles for exhaustible lattices.
inline RobotModel tiny_nose_model()
{
    RobotModel m = RobotModel::defaults();
    m.nose_lift = JointSpec{-0.45, 0.5, 0.5};
    m.nose_extend = JointSpec{0.0, 0.4, 0.4};
    m.nose_pitch = JointSpec{-0.6, 0.6, 0.8};
    return m;
}

// Instances for the exhaustible M3 lattices: a base parked at x = 7.0 m on
// the apron, a couple of box cells scattered through the nose workspace, and
// a random on-lattice nose goal. The uniform-cost oracle decides which seeds
// are solvable.
inline constexpr double kOracleBaseX = 7.0;

inline WorldState random_obstacle_world(std::uint64_t seed, int n_boxes = 2)
{
    std::mt19937_64 rng(mix_seed(seed, 0x0B5ULL));
    WorldState w;
    w.grid = OccupancyGrid({24, 8, 10});
    for (int i = 0; i < n_boxes; ++i) {
        BoxInstance b;
        b.id = i;
        b.pos = {uniform_int(rng, 17, 21), uniform_int(rng, 0, 7), uniform_int(rng, 0, 4)};
        b.dims = {1, 1, 1};
        bool dup = false;
        for (const auto& o : w.boxes) {
            if (o.pos == b.pos) {
                dup = true;
            }
        }
        if (!dup) {
            w.boxes.push_back(b);
        }
    }
    w.grid.fill_from_boxes(w.boxes);
    return w;
}

inline NoseJoints random_nose_goal(const RobotModel& m, std::uint64_t seed)
{
    std::mt19937_64 rng(mix_seed(seed, 0x60A1ULL));
    auto pick = [&](const JointSpec& js, double res) {
        const int steps = static_cast<int>(std::floor((js.hi - js.lo) / res));
        return js.lo + uniform_int(rng, 0, steps) * res;
    };
    NoseJoints g;
    g.lift = pick(m.nose_lift, m.lattice_revolute);
    g.extend = pick(m.nose_extend, m.lattice_prismatic);
    g.pitch = pick(m.nose_pitch, m.lattice_revolute);
    return g;
}

}  // namespace unloader::test
