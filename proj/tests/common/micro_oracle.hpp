#pragma once

// Micro truck instances with two-point mass hypotheses and deterministic
// dynamics, plus a brute-force enumeration oracle over every action and
// observation sequence up to the horizon. The oracle shares only the
// simulator dynamics with the generator, never its search.

#include <algorithm>
#include <cstdint>

#include "unloader/executor.hpp"
#include "unloader/generator.hpp"
#include "unloader/rng.hpp"

namespace unloader::test {

struct MicroInstance {
    TrueWorldState state;
    Belief b0;
    SimParams sim;
    GeneratorParams gen;
    ObserveThresholds th;
    std::uint64_t seed = 0;
};

// Masses land either ~1 kg or ~30 kg against a 12 kg capacity with a drop
// slope of 1/kg: all-light grasps always hold, anything touching a heavy box
// always drops. Dynamics are independent of the rng draw.
inline MicroInstance make_micro_instance(std::uint64_t seed)
{
    MicroInstance mi;
    mi.seed = seed;
    std::mt19937_64 rng(mix_seed(seed, 0x3A1CULL));

    const Cell3 truck{8, 4, 6};
    mi.state.grid = OccupancyGrid(truck);
    std::vector<BoxInstance> boxes;
    const int n = uniform_int(rng, 3, 6);
    int id = 0;
    int guard = 0;
    while (static_cast<int>(boxes.size()) < n && guard++ < 100) {
        BoxInstance b;
        b.id = id;
        const int d = uniform_int(rng, 0, 3);
        const int w = uniform_int(rng, 0, 3);
        int h = 0;
        for (const auto& o : boxes) {
            if (o.pos.d == d && o.pos.w == w) {
                h = std::max(h, o.h_end());
            }
        }
        if (h >= truck.h) {
            continue;
        }
        b.pos = {d, w, h};
        b.dims = {1, 1, 1};
        b.mass = 1.0;
        boxes.push_back(b);
        ++id;
    }
    mi.state.boxes = boxes;
    mi.state.grid.fill_from_boxes(boxes);

    mi.sim.suction_capacity = 12.0;
    mi.sim.drop_prob_per_kg_over = 1.0;
    mi.sim.topple_prob = (seed % 2 == 0) ? 1.0 : 0.0;
    mi.sim.grasp_w = 2;
    mi.sim.grasp_h = 2;
    mi.sim.sweep_capture_depth_max = 4;

    mi.th = ObserveThresholds::defaults_for(truck);

    MassDist prior;
    prior.kind = MassDist::Kind::Bimodal;
    prior.mu_light = 1.0;
    prior.mu_heavy = 30.0;
    prior.p_heavy = 0.5;

    mi.b0 = sample_initial_belief(perceive(mi.state), prior, 2, mix_seed(seed, 0xB0ULL));

    mi.gen.epsilon1 = 1.0;
    mi.gen.epsilon2 = 1.0;
    mi.gen.horizon = 3;
    mi.gen.n_particles = 2;
    mi.gen.obs_branching = 18;
    mi.gen.max_expansions = 100000;
    return mi;
}

// Optimal expected boxes unloaded over all depth-limited policy trees.
inline double enumerate_optimum(const Belief& b, int depth, const MicroInstance& mi)
{
    if (depth >= mi.gen.horizon || b.empty_truck()) {
        return 0.0;
    }
    double best = 0.0;
    for (const auto& a : AbstractAction::all()) {
        auto groups = propagate(b, a, mi.sim, mi.th, mix_seed(mi.seed, 0xE1ULL, depth));
        double v = 0.0;
        for (const auto& g : groups) {
            v += g.prob * (g.mean_unloaded + enumerate_optimum(g.belief, depth + 1, mi));
        }
        best = std::max(best, v);
    }
    return best;
}

inline double eval_tree(const StrategyNode* node, const Belief& b, int depth,
                        const MicroInstance& mi)
{
    if (!node || depth >= mi.gen.horizon || b.empty_truck()) {
        return 0.0;
    }
    auto groups = propagate(b, node->action, mi.sim, mi.th, mix_seed(mi.seed, 0xE2ULL, depth));
    double v = 0.0;
    for (const auto& g : groups) {
        const StrategyNode* child = nullptr;
        auto it = node->children.find(g.obs.label());
        if (it != node->children.end()) {
            child = it->second.get();
        }
        v += g.prob * (g.mean_unloaded + eval_tree(child, g.belief, depth + 1, mi));
    }
    return v;
}

inline double eval_tree(const StrategyTree& t, const MicroInstance& mi)
{
    return eval_tree(t.root(), mi.b0, 0, mi);
}

}  // namespace unloader::test
