#include "unloader/world.hpp"

#include <algorithm>
#include <map>

#include "unloader/rng.hpp"

namespace unloader {

OccupancyGrid::OccupancyGrid(Cell3 dims, double cell_size)
    : dims_(dims), cell_size_(cell_size),
      cells_(static_cast<std::size_t>(dims.d) * dims.w * dims.h, 0),
      col_top_(static_cast<std::size_t>(dims.d) * dims.w, -1)
{
    if (dims.d <= 0 || dims.w <= 0 || dims.h <= 0) {
        throw EnvError("grid dims must be positive");
    }
}

void OccupancyGrid::set(int d, int w, int h, bool v)
{
    cells_[index(d, w, h)] = v ? 1 : 0;
    std::int16_t& top = col_top_[static_cast<std::size_t>(d) * dims_.w + w];
    if (v) {
        top = std::max<std::int16_t>(top, static_cast<std::int16_t>(h));
    } else if (h == top) {
        int t = -1;
        for (int hh = h; hh >= 0; --hh) {
            if (cells_[index(d, w, hh)]) {
                t = hh;
                break;
            }
        }
        top = static_cast<std::int16_t>(t);
    }
}

void OccupancyGrid::clear()
{
    std::fill(cells_.begin(), cells_.end(), 0);
    std::fill(col_top_.begin(), col_top_.end(), -1);
}

void OccupancyGrid::fill_from_boxes(const std::vector<BoxInstance>& boxes)
{
    clear();
    for (const auto& b : boxes) {
        for (int d = b.pos.d; d < b.d_end(); ++d) {
            for (int w = b.pos.w; w < b.w_end(); ++w) {
                for (int h = b.pos.h; h < b.h_end(); ++h) {
                    set(d, w, h, true);
                }
            }
        }
    }
}

double MassDist::sample(std::mt19937_64& g) const
{
    if (kind == Kind::Uniform) {
        return uniform_real(g, lo, hi);
    }
    const bool heavy = bernoulli(g, p_heavy);
    const double mu = heavy ? mu_heavy : mu_light;
    return mu * uniform_real(g, 0.8, 1.2);
}

double MassDist::mean() const
{
    if (kind == Kind::Uniform) {
        return 0.5 * (lo + hi);
    }
    return p_heavy * mu_heavy + (1.0 - p_heavy) * mu_light;
}

bool operator==(const EnvSpec& a, const EnvSpec& b)
{
    return a.family == b.family && a.dims == b.dims && a.box_min == b.box_min &&
           a.box_max == b.box_max && a.fill == b.fill && a.seed == b.seed &&
           a.mass_dist.kind == b.mass_dist.kind && a.mass_dist.lo == b.mass_dist.lo &&
           a.mass_dist.hi == b.mass_dist.hi && a.mass_dist.mu_light == b.mass_dist.mu_light &&
           a.mass_dist.mu_heavy == b.mass_dist.mu_heavy && a.mass_dist.p_heavy == b.mass_dist.p_heavy;
}

namespace {

void validate_spec(const EnvSpec& spec)
{
    if (spec.dims.d <= 0 || spec.dims.w <= 0 || spec.dims.h <= 0) {
        throw EnvError("truck dims must be positive");
    }
    if (spec.box_min.d < 1 || spec.box_min.w < 1 || spec.box_min.h < 1) {
        throw EnvError("box size must be at least one cell");
    }
    if (spec.box_max.d < spec.box_min.d || spec.box_max.w < spec.box_min.w ||
        spec.box_max.h < spec.box_min.h) {
        throw EnvError("box size range inverted");
    }
    if (spec.box_min.d > spec.dims.d || spec.box_min.w > spec.dims.w ||
        spec.box_min.h > spec.dims.h) {
        throw EnvError("box larger than truck");
    }
    if (spec.fill < 0.0 || spec.fill > 1.0) {
        throw EnvError("fill fraction outside [0,1]");
    }
    if (spec.mass_dist.kind == MassDist::Kind::Uniform && !(spec.mass_dist.lo < spec.mass_dist.hi)) {
        throw EnvError("uniform mass range requires lo < hi");
    }
}

// Rest height for a footprint dropped from above: one plus the highest box
// top under the footprint, 0 on bare floor.
int landing_height(const std::vector<BoxInstance>& boxes, int d0, int d1, int w0, int w1,
                   int below = -1)
{
    int top = -1;
    for (const auto& b : boxes) {
        if (b.pos.d < d1 && d0 < b.d_end() && b.pos.w < w1 && w0 < b.w_end()) {
            if (below >= 0 && b.h_end() > below) {
                continue;
            }
            top = std::max(top, b.h_end());
        }
    }
    return std::max(top, 0);
}

TrueWorldState generate_wall_stacked(const EnvSpec& spec, std::mt19937_64& rng)
{
    TrueWorldState t;
    t.grid = OccupancyGrid(spec.dims);

    const long target = static_cast<long>(spec.fill * spec.dims.d * spec.dims.w * spec.dims.h);
    long volume = 0;
    int next_id = 0;
    int d_cursor = 0;
    while (volume < target && d_cursor < spec.dims.d) {
        const int slab = std::min(uniform_int(rng, spec.box_min.d, spec.box_max.d),
                                  spec.dims.d - d_cursor);
        int w_cursor = 0;
        while (w_cursor < spec.dims.w && volume < target) {
            const int bw = std::min(uniform_int(rng, spec.box_min.w, spec.box_max.w),
                                    spec.dims.w - w_cursor);
            int h_cursor = 0;
            while (h_cursor < spec.dims.h && volume < target) {
                const int bh = std::min(uniform_int(rng, spec.box_min.h, spec.box_max.h),
                                        spec.dims.h - h_cursor);
                BoxInstance b;
                b.id = next_id++;
                b.pos = {d_cursor, w_cursor, h_cursor};
                b.dims = {slab, bw, bh};
                b.mass = spec.mass_dist.sample(rng);
                volume += b.volume();
                t.boxes.push_back(std::move(b));
                h_cursor += bh;
            }
            w_cursor += bw;
        }
        d_cursor += slab;
    }
    t.grid.fill_from_boxes(t.boxes);
    return t;
}

TrueWorldState generate_pile(const EnvSpec& spec, std::mt19937_64& rng)
{
    TrueWorldState t;
    t.grid = OccupancyGrid(spec.dims);

    const long target = static_cast<long>(spec.fill * spec.dims.d * spec.dims.w * spec.dims.h);
    long volume = 0;
    int next_id = 0;
    int attempts = 0;
    const int max_attempts = 20000;
    while (volume < target && attempts < max_attempts) {
        ++attempts;
        Cell3 dims{uniform_int(rng, spec.box_min.d, spec.box_max.d),
                   uniform_int(rng, spec.box_min.w, spec.box_max.w),
                   uniform_int(rng, spec.box_min.h, spec.box_max.h)};
        if (dims.d > spec.dims.d || dims.w > spec.dims.w || dims.h > spec.dims.h) {
            continue;
        }
        // Heap against the front wall: bias depth toward 0 by taking the min
        // of two draws.
        const int d_range = spec.dims.d - dims.d;
        const int d0 = std::min(uniform_int(rng, 0, d_range), uniform_int(rng, 0, d_range));
        const int w0 = uniform_int(rng, 0, spec.dims.w - dims.w);
        const int h0 = landing_height(t.boxes, d0, d0 + dims.d, w0, w0 + dims.w);
        if (h0 + dims.h > spec.dims.h) {
            continue;
        }
        BoxInstance b;
        b.id = next_id++;
        b.pos = {d0, w0, h0};
        b.dims = dims;
        b.mass = spec.mass_dist.sample(rng);
        volume += b.volume();
        t.boxes.push_back(std::move(b));
    }
    // Reassign ids in deterministic geometric order so downstream id-ordered
    // tie-breaks do not depend on insertion history.
    std::sort(t.boxes.begin(), t.boxes.end(), [](const BoxInstance& a, const BoxInstance& b) {
        if (a.pos.d != b.pos.d) return a.pos.d < b.pos.d;
        if (a.pos.w != b.pos.w) return a.pos.w < b.pos.w;
        return a.pos.h < b.pos.h;
    });
    for (std::size_t i = 0; i < t.boxes.size(); ++i) {
        t.boxes[i].id = static_cast<int>(i);
    }
    t.grid.fill_from_boxes(t.boxes);
    return t;
}

}  // namespace

TrueWorldState generate_environment(const EnvSpec& spec)
{
    validate_spec(spec);
    std::mt19937_64 rng(mix_seed(spec.seed, 0x454e5653ULL));  // env stream
    TrueWorldState t = (spec.family == EnvFamily::WallStacked)
                           ? generate_wall_stacked(spec, rng)
                           : generate_pile(spec, rng);
    std::string why;
    if (!validate_true_state(t, &why)) {
        throw EnvError("generated state invalid: " + why);
    }
    return t;
}

WorldState perceive(const TrueWorldState& t)
{
    WorldState w;
    w.grid = OccupancyGrid(t.grid.dims(), t.grid.cell_size());

    // A box is visible iff one of its cells is the first hit of a depth ray
    // from the rear opening, or of a vertical ray along the open top of the
    // pile. Boxes walled in on both families of rays are dropped.
    std::vector<char> visible(t.boxes.size(), 0);
    const Cell3 dims = t.grid.dims();
    auto mark_cell = [&](int d, int wd, int h) {
        for (std::size_t i = 0; i < t.boxes.size(); ++i) {
            if (t.boxes[i].contains(d, wd, h)) {
                visible[i] = 1;
                return;
            }
        }
    };
    for (int wd = 0; wd < dims.w; ++wd) {
        for (int h = 0; h < dims.h; ++h) {
            for (int d = dims.d - 1; d >= 0; --d) {
                if (t.grid.interior_occupied(d, wd, h)) {
                    mark_cell(d, wd, h);
                    break;
                }
            }
        }
    }
    for (int d = 0; d < dims.d; ++d) {
        for (int wd = 0; wd < dims.w; ++wd) {
            const int top = t.grid.column_top(d, wd);
            if (top >= 0) {
                mark_cell(d, wd, top);
            }
        }
    }
    for (std::size_t i = 0; i < t.boxes.size(); ++i) {
        if (visible[i]) {
            BoxInstance b = t.boxes[i];
            b.mass.reset();
            w.boxes.push_back(std::move(b));
        }
    }
    w.grid.fill_from_boxes(w.boxes);
    return w;
}

HeightField discretize(const WorldState& w, int lanes_d, int lanes_w)
{
    const Cell3 dims = w.grid.dims();
    if (lanes_d <= 0 || lanes_w <= 0 || lanes_d > dims.d || lanes_w > dims.w) {
        throw EnvError("lane counts must be in [1, dims]");
    }
    HeightField f;
    f.lanes_d = lanes_d;
    f.lanes_w = lanes_w;
    f.heights.assign(static_cast<std::size_t>(lanes_d) * lanes_w, 0);

    const int step_d = dims.d / lanes_d;
    const int step_w = dims.w / lanes_w;
    for (int ld = 0; ld < lanes_d; ++ld) {
        const int d0 = ld * step_d;
        const int d1 = (ld == lanes_d - 1) ? dims.d : d0 + step_d;  // last lane absorbs remainder
        for (int lw = 0; lw < lanes_w; ++lw) {
            const int w0 = lw * step_w;
            const int w1 = (lw == lanes_w - 1) ? dims.w : w0 + step_w;
            int top = 0;
            for (int d = d0; d < d1; ++d) {
                for (int wd = w0; wd < w1; ++wd) {
                    top = std::max(top, w.grid.column_top(d, wd) + 1);
                }
            }
            f.at(ld, lw) = top;
        }
    }
    return f;
}

bool box_supported(const BoxInstance& box, const std::vector<BoxInstance>& all)
{
    if (box.pos.h == 0) {
        return true;
    }
    for (const auto& o : all) {
        if (o.id == box.id) {
            continue;
        }
        if (o.h_end() != box.pos.h) {
            continue;
        }
        if (o.pos.d < box.d_end() && box.pos.d < o.d_end() &&
            o.pos.w < box.w_end() && box.pos.w < o.w_end()) {
            return true;
        }
    }
    return false;
}

bool validate_true_state(const TrueWorldState& t, std::string* why)
{
    auto fail = [&](const std::string& msg) {
        if (why) *why = msg;
        return false;
    };
    const Cell3 dims = t.grid.dims();
    for (const auto& b : t.boxes) {
        if (b.dims.d < 1 || b.dims.w < 1 || b.dims.h < 1) {
            return fail("box " + std::to_string(b.id) + " has empty extent");
        }
        if (b.pos.d < 0 || b.pos.w < 0 || b.pos.h < 0 || b.d_end() > dims.d ||
            b.w_end() > dims.w || b.h_end() > dims.h) {
            return fail("box " + std::to_string(b.id) + " outside truck bounds");
        }
        if (!b.mass || *b.mass <= 0.0) {
            return fail("box " + std::to_string(b.id) + " missing positive mass");
        }
        if (!box_supported(b, t.boxes)) {
            return fail("box " + std::to_string(b.id) + " floating");
        }
    }
    for (std::size_t i = 0; i < t.boxes.size(); ++i) {
        for (std::size_t j = i + 1; j < t.boxes.size(); ++j) {
            if (t.boxes[i].overlaps(t.boxes[j])) {
                return fail("boxes " + std::to_string(t.boxes[i].id) + " and " +
                            std::to_string(t.boxes[j].id) + " overlap");
            }
        }
    }
    // grid consistency
    OccupancyGrid expect(t.grid.dims(), t.grid.cell_size());
    expect.fill_from_boxes(t.boxes);
    if (!(expect == t.grid)) {
        return fail("grid does not match box extents");
    }
    return true;
}

int column_height(const WorldState& w, int d, int wd)
{
    return w.grid.column_top(d, wd) + 1;
}

// --- JSON ---

void to_json(json& j, const Cell3& c)
{
    j = json::array({c.d, c.w, c.h});
}

void from_json(const json& j, Cell3& c)
{
    c.d = j.at(0).get<int>();
    c.w = j.at(1).get<int>();
    c.h = j.at(2).get<int>();
}

void to_json(json& j, const BoxInstance& b)
{
    j = json{{"id", b.id}, {"pos", b.pos}, {"dims", b.dims}};
    if (b.mass) {
        j["mass"] = *b.mass;
    }
}

void from_json(const json& j, BoxInstance& b)
{
    j.at("id").get_to(b.id);
    j.at("pos").get_to(b.pos);
    j.at("dims").get_to(b.dims);
    b.mass.reset();
    if (j.contains("mass")) {
        b.mass = j.at("mass").get<double>();
    }
}

void to_json(json& j, const OccupancyGrid& g)
{
    std::string packed(g.cells_.size(), '0');
    for (std::size_t i = 0; i < g.cells_.size(); ++i) {
        packed[i] = g.cells_[i] ? '1' : '0';
    }
    j = json{{"dims", g.dims_}, {"cell_size", g.cell_size_}, {"cells", packed}};
}

void from_json(const json& j, OccupancyGrid& g)
{
    Cell3 dims = j.at("dims").get<Cell3>();
    g = OccupancyGrid(dims, j.at("cell_size").get<double>());
    const std::string packed = j.at("cells").get<std::string>();
    if (packed.size() != g.cells_.size()) {
        throw EnvError("grid cell payload has wrong size");
    }
    for (int d = 0; d < dims.d; ++d) {
        for (int w = 0; w < dims.w; ++w) {
            for (int h = 0; h < dims.h; ++h) {
                if (packed[g.index(d, w, h)] == '1') {
                    g.set(d, w, h, true);
                }
            }
        }
    }
}

void to_json(json& j, const MassDist& m)
{
    if (m.kind == MassDist::Kind::Uniform) {
        j = json{{"type", "uniform"}, {"lo", m.lo}, {"hi", m.hi}};
    } else {
        j = json{{"type", "bimodal"},
                 {"mu_light", m.mu_light},
                 {"mu_heavy", m.mu_heavy},
                 {"p_heavy", m.p_heavy}};
    }
}

void from_json(const json& j, MassDist& m)
{
    const std::string type = j.at("type").get<std::string>();
    if (type == "uniform") {
        m.kind = MassDist::Kind::Uniform;
        j.at("lo").get_to(m.lo);
        j.at("hi").get_to(m.hi);
    } else if (type == "bimodal") {
        m.kind = MassDist::Kind::Bimodal;
        j.at("mu_light").get_to(m.mu_light);
        j.at("mu_heavy").get_to(m.mu_heavy);
        j.at("p_heavy").get_to(m.p_heavy);
    } else {
        throw EnvError("unknown mass_dist type: " + type);
    }
}

void to_json(json& j, const EnvSpec& s)
{
    j = json{{"family", s.family == EnvFamily::WallStacked ? "wall_stacked" : "pile_unstructured"},
             {"dims", s.dims},
             {"box_size", json::array({s.box_min, s.box_max})},
             {"mass_dist", s.mass_dist},
             {"fill", s.fill},
             {"seed", s.seed}};
}

void from_json(const json& j, EnvSpec& s)
{
    const std::string family = j.at("family").get<std::string>();
    if (family == "wall_stacked") {
        s.family = EnvFamily::WallStacked;
    } else if (family == "pile_unstructured") {
        s.family = EnvFamily::PileUnstructured;
    } else {
        throw EnvError("unknown env family: " + family);
    }
    j.at("dims").get_to(s.dims);
    j.at("box_size").at(0).get_to(s.box_min);
    j.at("box_size").at(1).get_to(s.box_max);
    j.at("mass_dist").get_to(s.mass_dist);
    j.at("fill").get_to(s.fill);
    j.at("seed").get_to(s.seed);
}

void to_json(json& j, const WorldState& w)
{
    j = json{{"grid", w.grid}, {"boxes", w.boxes}};
}

void from_json(const json& j, WorldState& w)
{
    j.at("grid").get_to(w.grid);
    j.at("boxes").get_to(w.boxes);
}

void to_json(json& j, const TrueWorldState& t)
{
    j = json{{"grid", t.grid}, {"boxes", t.boxes}};
}

void from_json(const json& j, TrueWorldState& t)
{
    j.at("grid").get_to(t.grid);
    j.at("boxes").get_to(t.boxes);
}

}  // namespace unloader
