#pragma once

#include <cstdint>
#include <random>
#include <string>

#include "unloader/world.hpp"

namespace unloader {

struct SimParams {
    double suction_capacity = 12.0;        // kg
    int grasp_w = 2;                       // footprint cells (width)
    int grasp_h = 2;                       // footprint cells (height)
    double drop_prob_per_kg_over = 0.15;   // per kg above capacity
    double topple_prob = 0.5;              // column collapses forward
    int sweep_capture_depth_max = 6;       // cells
    std::uint64_t rng_seed = 0;

    // Durations tuned so mean rates land near Pick ~0.2, Sweep ~0.4 boxes/s.
    double pick_base_time = 30.0;
    double per_box_time = 2.0;
    double sweep_base_time = 40.0;
    double per_cell_time = 2.0;

    std::uint64_t hash() const;
};

struct ActionOutcome {
    int boxes_unloaded = 0;
    int boxes_dropped = 0;
    int boxes_moved = 0;
    double duration = 0.0;
};

struct Snapshot {
    TrueWorldState state;
    std::string rng_state;
    double tick = 0.0;
    int unloaded_total = 0;
    std::uint64_t params_hash = 0;
};

void to_json(json& j, const Snapshot& s);
void from_json(const json& j, Snapshot& s);

struct SimError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Forward dynamics of Pick and Sweep at box granularity. Single-owner: one
// thread mutates a handle; independent handles run concurrently.
class SimHandle {
public:
    SimHandle(TrueWorldState state, SimParams params);

    const TrueWorldState& state() const { return state_; }
    const SimParams& params() const { return params_; }
    double tick() const { return tick_; }
    int unloaded_total() const { return unloaded_; }
    int initial_count() const { return initial_count_; }

    // Grasp footprint anchored at (grasp_w, grasp_h) lower-left, clipped to
    // the cross-section. Boxes first-hit by rear depth rays inside the
    // footprint are grasped. Empty grasp is a no-op with base duration.
    ActionOutcome apply_pick(int grasp_w, int grasp_h);
    ActionOutcome apply_pick(int grasp_w, int grasp_h, int footprint_w, int footprint_h);

    // Unloads floor boxes within `depth` cells measured frontward from the
    // rear-most floor box cell; stacks above topple forward or drop in place.
    ActionOutcome apply_sweep(int depth);

    Snapshot snapshot() const;
    void restore(const Snapshot& snap);

private:
    void rebuild_grid();
    // Drops every unsupported box straight down in its lane until stable.
    int settle();
    // Moves a box to the nearest free floor slot rearward of from_d.
    bool place_on_floor_forward(BoxInstance& b, int from_d);
    bool floor_slot_free(const BoxInstance& b, int d0) const;

    TrueWorldState state_;
    SimParams params_;
    std::mt19937_64 rng_;
    double tick_ = 0.0;
    int unloaded_ = 0;
    int initial_count_ = 0;
};

}  // namespace unloader
