#pragma once

#include <vector>

#include "unloader/sim.hpp"
#include "unloader/world.hpp"

namespace unloader::test {

struct BoxSpec {
    Cell3 pos;
    Cell3 dims{1, 1, 1};
    double mass = 1.0;
};

inline TrueWorldState make_true_state(Cell3 truck, const std::vector<BoxSpec>& boxes)
{
    TrueWorldState t;
    t.grid = OccupancyGrid(truck);
    int id = 0;
    for (const auto& s : boxes) {
        BoxInstance b;
        b.id = id++;
        b.pos = s.pos;
        b.dims = s.dims;
        b.mass = s.mass;
        t.boxes.push_back(b);
    }
    t.grid.fill_from_boxes(t.boxes);
    return t;
}

inline EnvSpec small_wall_env(std::uint64_t seed = 7)
{
    EnvSpec e;
    e.family = EnvFamily::WallStacked;
    e.dims = {16, 8, 10};
    e.box_min = {1, 1, 1};
    e.box_max = {2, 3, 2};
    e.fill = 0.35;
    e.seed = seed;
    return e;
}

inline EnvSpec small_pile_env(std::uint64_t seed = 9)
{
    EnvSpec e;
    e.family = EnvFamily::PileUnstructured;
    e.dims = {16, 8, 10};
    e.box_min = {1, 1, 1};
    e.box_max = {2, 2, 2};
    e.fill = 0.18;
    e.seed = seed;
    e.mass_dist.kind = MassDist::Kind::Bimodal;
    return e;
}

}  // namespace unloader::test
