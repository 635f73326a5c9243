#pragma once

#include <cstdint>
#include <vector>

#include "unloader/executor.hpp"
#include "unloader/sim.hpp"
#include "unloader/strategy.hpp"
#include "unloader/world.hpp"

namespace unloader {

// Weighted particle set over true world states. Particles of an initial
// belief share the perceived geometry and differ in their sampled masses.
struct BeliefParticle {
    TrueWorldState state;
    double weight = 0.0;
};

struct Belief {
    std::vector<BeliefParticle> particles;

    bool empty_truck() const;
    double expected_count() const;
    double expected_max_height() const;
    double weight_sum() const;
};

Belief sample_initial_belief(const WorldState& w, const MassDist& prior, int n,
                             std::uint64_t seed);

struct HeuristicValues {
    double h1 = 0.0;  // constant while boxes remain
    double h2 = 0.0;  // expected box count
    double h3 = 0.0;  // expected max stack height (cells)
};

HeuristicValues belief_heuristics(const Belief& b, double h1_constant = 600.0);

struct PropagateGroup {
    SemanticObservation obs;
    Belief belief;          // weights renormalized within the group
    double prob = 0.0;      // original weight mass of the group
    double cost = 0.0;      // weight-averaged action duration within the group
    double mean_unloaded = 0.0;
};

// Applies the action to every particle on its own deterministic rng stream,
// then groups the successors by semantic observation. Group probabilities sum
// to one; each group's weights sum to one.
std::vector<PropagateGroup> propagate(const Belief& b, const AbstractAction& a,
                                      const SimParams& sp, const ObserveThresholds& th,
                                      std::uint64_t stream);

struct GeneratorParams {
    double epsilon1 = 10.0;  // estimate inflation during rollouts
    double epsilon2 = 10.0;  // ensemble anchor band
    int horizon = 6;
    int n_particles = 5;
    int obs_branching = 6;   // children kept per action, by probability mass
    double convergence_tol = 1e-6;
    long max_expansions = 2000;
    double box_penalty = 600.0;  // leaf cost per expected remaining box, s
    double h1_constant = 600.0;
    double h2_scale = 30.0;  // guidance, s per expected box
    double h3_scale = 40.0;  // guidance, s per stack level
};

struct GenerationStats {
    long expansions = 0;
    long sim_calls = 0;
    int trials = 0;
    double root_value = 0.0;
    bool complete = true;
    double wall_time_s = 0.0;
    double max_weight_err = 0.0;  // |1 - sum of weights| over all propagates
    double max_prob_err = 0.0;    // |1 - sum of group probs| over all propagates
    std::vector<double> root_values;  // root estimate after each trial
};

// Iterative forward search over the belief tree: greedy rollouts guided by
// the inflated heuristic ensemble, Bellman backups over observation branches,
// solved-labeling for convergence. With epsilon1 = epsilon2 = 1 the initial
// estimates are admissible lower bounds and the extracted tree is optimal for
// the simulated dynamics.
StrategyTree generate_strategy(const Belief& b0, const GeneratorParams& p, const SimParams& sp,
                               const ObserveThresholds& th, std::uint64_t seed,
                               GenerationStats* stats = nullptr);

}  // namespace unloader
