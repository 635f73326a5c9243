#include "unloader/sim.hpp"

#include <algorithm>
#include <cstring>
#include <map>
#include <set>

#include "unloader/rng.hpp"

namespace unloader {

std::uint64_t SimParams::hash() const
{
    std::uint64_t h = 0x53494d50ULL;
    auto mixd = [&h](double v) {
        std::uint64_t bits;
        static_assert(sizeof(bits) == sizeof(v));
        std::memcpy(&bits, &v, sizeof(bits));
        h = mix_seed(h, bits);
    };
    mixd(suction_capacity);
    h = mix_seed(h, static_cast<std::uint64_t>(grasp_w));
    h = mix_seed(h, static_cast<std::uint64_t>(grasp_h));
    mixd(drop_prob_per_kg_over);
    mixd(topple_prob);
    h = mix_seed(h, static_cast<std::uint64_t>(sweep_capture_depth_max));
    mixd(pick_base_time);
    mixd(per_box_time);
    mixd(sweep_base_time);
    mixd(per_cell_time);
    return h;
}

namespace {

void set_box_cells(OccupancyGrid& g, const BoxInstance& b, bool v)
{
    for (int d = b.pos.d; d < b.d_end(); ++d) {
        for (int w = b.pos.w; w < b.w_end(); ++w) {
            for (int h = b.pos.h; h < b.h_end(); ++h) {
                g.set(d, w, h, v);
            }
        }
    }
}

bool region_free(const OccupancyGrid& g, const Cell3& pos, const Cell3& dims)
{
    if (pos.d < 0 || pos.w < 0 || pos.h < 0 || pos.d + dims.d > g.depth() ||
        pos.w + dims.w > g.width() || pos.h + dims.h > g.height()) {
        return false;
    }
    for (int d = pos.d; d < pos.d + dims.d; ++d) {
        for (int w = pos.w; w < pos.w + dims.w; ++w) {
            for (int h = pos.h; h < pos.h + dims.h; ++h) {
                if (g.interior_occupied(d, w, h)) {
                    return false;
                }
            }
        }
    }
    return true;
}

}  // namespace

SimHandle::SimHandle(TrueWorldState state, SimParams params)
    : state_(std::move(state)), params_(params), rng_(params.rng_seed),
      initial_count_(state_.box_count())
{
    // Trusts box geometry (produced by generation or earlier steps); just
    // keep the grid consistent with it.
    rebuild_grid();
}

void SimHandle::rebuild_grid()
{
    state_.grid.fill_from_boxes(state_.boxes);
}

int SimHandle::settle()
{
    // Grid is assumed consistent with boxes on entry and is kept consistent.
    int moved = 0;
    bool changed = true;
    while (changed) {
        changed = false;
        std::vector<BoxInstance*> order;
        order.reserve(state_.boxes.size());
        for (auto& b : state_.boxes) {
            order.push_back(&b);
        }
        std::sort(order.begin(), order.end(), [](const BoxInstance* a, const BoxInstance* b) {
            if (a->pos.h != b->pos.h) return a->pos.h < b->pos.h;
            return a->id < b->id;
        });
        for (BoxInstance* b : order) {
            if (b->pos.h == 0) {
                continue;
            }
            bool supported = false;
            for (int d = b->pos.d; d < b->d_end() && !supported; ++d) {
                for (int w = b->pos.w; w < b->w_end() && !supported; ++w) {
                    if (state_.grid.interior_occupied(d, w, b->pos.h - 1)) {
                        supported = true;
                    }
                }
            }
            if (supported) {
                continue;
            }
            set_box_cells(state_.grid, *b, false);
            int land = 0;
            for (int d = b->pos.d; d < b->d_end(); ++d) {
                for (int w = b->pos.w; w < b->w_end(); ++w) {
                    for (int h = b->pos.h - 1; h >= land; --h) {
                        if (state_.grid.interior_occupied(d, w, h)) {
                            land = h + 1;
                            break;
                        }
                    }
                }
            }
            b->pos.h = land;
            set_box_cells(state_.grid, *b, true);
            ++moved;
            changed = true;
        }
    }
    return moved;
}

bool SimHandle::floor_slot_free(const BoxInstance& b, int d0) const
{
    return region_free(state_.grid, Cell3{d0, b.pos.w, 0}, b.dims);
}

bool SimHandle::place_on_floor_forward(BoxInstance& b, int from_d)
{
    for (int d0 = std::max(0, from_d); d0 + b.dims.d <= state_.grid.depth(); ++d0) {
        if (floor_slot_free(b, d0)) {
            b.pos.d = d0;
            b.pos.h = 0;
            return true;
        }
    }
    return false;
}

ActionOutcome SimHandle::apply_pick(int grasp_w, int grasp_h)
{
    return apply_pick(grasp_w, grasp_h, params_.grasp_w, params_.grasp_h);
}

ActionOutcome SimHandle::apply_pick(int grasp_w, int grasp_h, int footprint_w, int footprint_h)
{
    const Cell3 dims = state_.grid.dims();
    const int w0 = std::clamp(grasp_w, 0, dims.w - 1);
    const int h0 = std::clamp(grasp_h, 0, dims.h - 1);
    const int w1 = std::min(w0 + std::max(1, footprint_w), dims.w);
    const int h1 = std::min(h0 + std::max(1, footprint_h), dims.h);

    // Boxes whose rear-facing faces the suction array reaches first.
    std::set<int> grasped_ids;
    for (int wd = w0; wd < w1; ++wd) {
        for (int h = h0; h < h1; ++h) {
            for (int d = dims.d - 1; d >= 0; --d) {
                if (!state_.grid.interior_occupied(d, wd, h)) {
                    continue;
                }
                for (const auto& b : state_.boxes) {
                    if (b.contains(d, wd, h)) {
                        grasped_ids.insert(b.id);
                        break;
                    }
                }
                break;  // ray stops at first hit
            }
        }
    }

    ActionOutcome out;
    if (grasped_ids.empty()) {
        out.duration = params_.pick_base_time;
        tick_ += out.duration;
        return out;
    }

    double total_mass = 0.0;
    int face_d = 0;  // rearmost extent of the grasped set; drops land past it
    for (const auto& b : state_.boxes) {
        if (grasped_ids.count(b.id)) {
            total_mass += b.mass.value_or(0.0);
            face_d = std::max(face_d, b.d_end());
        }
    }
    const double overage = total_mass - params_.suction_capacity;
    const double p_drop =
        overage > 0.0 ? std::min(1.0, params_.drop_prob_per_kg_over * overage) : 0.0;

    std::map<int, Cell3> pre_positions;
    for (const auto& b : state_.boxes) {
        pre_positions[b.id] = b.pos;
    }

    // id order fixes the Bernoulli draw sequence
    std::sort(state_.boxes.begin(), state_.boxes.end(),
              [](const BoxInstance& a, const BoxInstance& b) { return a.id < b.id; });
    std::vector<BoxInstance> dropped;
    std::vector<BoxInstance> kept;
    kept.reserve(state_.boxes.size());
    for (auto& b : state_.boxes) {
        if (!grasped_ids.count(b.id)) {
            kept.push_back(b);
            continue;
        }
        if (bernoulli(rng_, p_drop)) {
            dropped.push_back(b);
        } else {
            ++out.boxes_unloaded;
        }
    }
    state_.boxes = std::move(kept);
    rebuild_grid();

    for (auto& b : dropped) {
        if (!place_on_floor_forward(b, face_d) && !place_on_floor_forward(b, 0)) {
            b.pos = pre_positions[b.id];  // wedged; settle sorts it out
        }
        state_.boxes.push_back(b);
        set_box_cells(state_.grid, b, true);
    }
    out.boxes_dropped = static_cast<int>(dropped.size());

    settle();
    for (const auto& b : state_.boxes) {
        if (pre_positions[b.id] != b.pos) {
            ++out.boxes_moved;
        }
    }
    unloaded_ += out.boxes_unloaded;
    const int grasped = static_cast<int>(grasped_ids.size());
    out.duration = params_.pick_base_time + params_.per_box_time * grasped;
    tick_ += out.duration;
    return out;
}

ActionOutcome SimHandle::apply_sweep(int depth)
{
    if (depth <= 0 || depth > params_.sweep_capture_depth_max) {
        throw std::invalid_argument("sweep depth out of range: " + std::to_string(depth));
    }

    ActionOutcome out;
    out.duration = params_.sweep_base_time + params_.per_cell_time * depth;

    int d_rear = -1;
    for (const auto& b : state_.boxes) {
        if (b.pos.h == 0) {
            d_rear = std::max(d_rear, b.d_end() - 1);
        }
    }
    if (d_rear < 0) {
        tick_ += out.duration;
        return out;  // nothing on the floor
    }
    const int d_lo = d_rear - depth + 1;

    std::map<int, Cell3> pre_positions;
    for (const auto& b : state_.boxes) {
        pre_positions[b.id] = b.pos;
    }

    std::sort(state_.boxes.begin(), state_.boxes.end(),
              [](const BoxInstance& a, const BoxInstance& b) { return a.id < b.id; });
    std::vector<BoxInstance> kept;
    kept.reserve(state_.boxes.size());
    for (auto& b : state_.boxes) {
        const bool captured = b.pos.h == 0 && b.pos.d <= d_rear && b.d_end() - 1 >= d_lo;
        if (captured) {
            ++out.boxes_unloaded;
        } else {
            kept.push_back(b);
        }
    }
    state_.boxes = std::move(kept);
    rebuild_grid();

    // Columns left hanging collapse forward with topple_prob, else drop in
    // place. Hanging = outside the stable closure grown upward from the
    // floor, so a whole stack above a captured box counts. One draw per
    // (d, w) column key, in key order.
    std::set<int> stable;
    for (bool grew = true; grew;) {
        grew = false;
        for (const auto& b : state_.boxes) {
            if (stable.count(b.id)) {
                continue;
            }
            bool ok = b.pos.h == 0;
            for (const auto& o : state_.boxes) {
                if (ok) {
                    break;
                }
                if (stable.count(o.id) && o.h_end() == b.pos.h && o.pos.d < b.d_end() &&
                    b.pos.d < o.d_end() && o.pos.w < b.w_end() && b.pos.w < o.w_end()) {
                    ok = true;
                }
            }
            if (ok) {
                stable.insert(b.id);
                grew = true;
            }
        }
    }
    std::map<std::pair<int, int>, std::vector<int>> columns;
    for (auto& b : state_.boxes) {
        if (!stable.count(b.id)) {
            columns[{b.pos.d, b.pos.w}].push_back(b.id);
        }
    }
    std::set<int> toppled_ids;
    for (auto& [key, col] : columns) {
        if (bernoulli(rng_, params_.topple_prob)) {
            toppled_ids.insert(col.begin(), col.end());
        }
    }
    if (!toppled_ids.empty()) {
        std::vector<BoxInstance> toppled;
        std::vector<BoxInstance> rest;
        for (auto& b : state_.boxes) {
            (toppled_ids.count(b.id) ? toppled : rest).push_back(b);
        }
        state_.boxes = std::move(rest);
        rebuild_grid();
        std::sort(toppled.begin(), toppled.end(), [](const BoxInstance& a, const BoxInstance& b) {
            if (a.pos.h != b.pos.h) return a.pos.h < b.pos.h;
            return a.id < b.id;
        });
        for (auto& b : toppled) {
            place_on_floor_forward(b, b.pos.d + 1);  // failure: stays put and drops in place
            state_.boxes.push_back(b);
            set_box_cells(state_.grid, b, true);
        }
    }

    settle();
    for (const auto& b : state_.boxes) {
        if (pre_positions[b.id] != b.pos) {
            ++out.boxes_moved;
        }
    }
    unloaded_ += out.boxes_unloaded;
    tick_ += out.duration;
    return out;
}

Snapshot SimHandle::snapshot() const
{
    Snapshot s;
    s.state = state_;
    s.rng_state = rng_to_string(rng_);
    s.tick = tick_;
    s.unloaded_total = unloaded_;
    s.params_hash = params_.hash();
    return s;
}

void SimHandle::restore(const Snapshot& snap)
{
    if (snap.params_hash != params_.hash()) {
        throw SimError("snapshot was taken under different sim params");
    }
    state_ = snap.state;
    rng_from_string(rng_, snap.rng_state);
    tick_ = snap.tick;
    unloaded_ = snap.unloaded_total;
    initial_count_ = state_.box_count() + unloaded_;
}

void to_json(json& j, const Snapshot& s)
{
    j = json{{"state", s.state},
             {"rng_state", s.rng_state},
             {"tick", s.tick},
             {"unloaded_total", s.unloaded_total},
             {"params_hash", s.params_hash}};
}

void from_json(const json& j, Snapshot& s)
{
    j.at("state").get_to(s.state);
    j.at("rng_state").get_to(s.rng_state);
    j.at("tick").get_to(s.tick);
    j.at("unloaded_total").get_to(s.unloaded_total);
    j.at("params_hash").get_to(s.params_hash);
}

}  // namespace unloader
