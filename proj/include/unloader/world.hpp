#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace unloader {

using json = nlohmann::json;

// Grid coordinates: d (depth, 0 at the closed front wall, increasing toward
// the rear opening where the robot enters), w (width, from the left wall),
// h (height, from the floor). One cell is kCellSize meters.
inline constexpr double kCellSize = 0.25;

struct Cell3 {
    int d = 0;
    int w = 0;
    int h = 0;

    friend bool operator==(const Cell3& a, const Cell3& b)
    {
        return a.d == b.d && a.w == b.w && a.h == b.h;
    }
    friend bool operator!=(const Cell3& a, const Cell3& b) { return !(a == b); }
};

struct EnvError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Axis-aligned box occupying cells [pos, pos + dims). Mass is engaged only in
// true world states; perceived states carry geometry alone.
struct BoxInstance {
    int id = -1;
    Cell3 pos;
    Cell3 dims{1, 1, 1};
    std::optional<double> mass;

    int d_end() const { return pos.d + dims.d; }
    int w_end() const { return pos.w + dims.w; }
    int h_end() const { return pos.h + dims.h; }
    int volume() const { return dims.d * dims.w * dims.h; }

    bool contains(int d, int w, int h) const
    {
        return d >= pos.d && d < d_end() && w >= pos.w && w < w_end() &&
               h >= pos.h && h < h_end();
    }
    bool overlaps(const BoxInstance& o) const
    {
        return pos.d < o.d_end() && o.pos.d < d_end() &&
               pos.w < o.w_end() && o.pos.w < w_end() &&
               pos.h < o.h_end() && o.pos.h < h_end();
    }
};

// Interior occupancy of the trailer. Walls, ceiling and floor are implicit:
// any query outside the interior is occupied, except past the rear opening
// (d >= D) which is open staging space for the robot.
class OccupancyGrid {
public:
    OccupancyGrid() = default;
    OccupancyGrid(Cell3 dims, double cell_size = kCellSize);

    int depth() const { return dims_.d; }
    int width() const { return dims_.w; }
    int height() const { return dims_.h; }
    Cell3 dims() const { return dims_; }
    double cell_size() const { return cell_size_; }

    bool in_interior(int d, int w, int h) const
    {
        return d >= 0 && d < dims_.d && w >= 0 && w < dims_.w && h >= 0 && h < dims_.h;
    }

    // true = solid. See class comment for the boundary rule.
    bool occupied(int d, int w, int h) const
    {
        if (w < 0 || w >= dims_.w || h < 0 || h >= dims_.h) {
            return true;
        }
        if (d < 0) {
            return true;
        }
        if (d >= dims_.d) {
            return false;  // rear opening / apron
        }
        return cells_[index(d, w, h)] != 0;
    }

    bool interior_occupied(int d, int w, int h) const
    {
        return in_interior(d, w, h) && cells_[index(d, w, h)] != 0;
    }

    void set(int d, int w, int h, bool v);

    void clear();
    void fill_from_boxes(const std::vector<BoxInstance>& boxes);

    // Topmost occupied cell index in column (d, w), or -1 if empty. Cached.
    int column_top(int d, int w) const
    {
        return col_top_[static_cast<std::size_t>(d) * dims_.w + w];
    }

    friend bool operator==(const OccupancyGrid& a, const OccupancyGrid& b)
    {
        return a.dims_ == b.dims_ && a.cell_size_ == b.cell_size_ && a.cells_ == b.cells_;
    }

    friend void to_json(json& j, const OccupancyGrid& g);
    friend void from_json(const json& j, OccupancyGrid& g);

private:
    std::size_t index(int d, int w, int h) const
    {
        return (static_cast<std::size_t>(d) * dims_.w + w) * dims_.h + h;
    }

    Cell3 dims_;
    double cell_size_ = kCellSize;
    std::vector<std::uint8_t> cells_;
    std::vector<std::int16_t> col_top_;  // derived; kept in sync with cells_
};

// Perceived world state: visible boxes only, no masses.
struct WorldState {
    OccupancyGrid grid;
    std::vector<BoxInstance> boxes;

    bool empty() const { return boxes.empty(); }
    int box_count() const { return static_cast<int>(boxes.size()); }
};

// Ground truth: every box present, masses engaged.
struct TrueWorldState {
    OccupancyGrid grid;
    std::vector<BoxInstance> boxes;

    bool empty() const { return boxes.empty(); }
    int box_count() const { return static_cast<int>(boxes.size()); }
};

enum class EnvFamily { WallStacked, PileUnstructured };

struct MassDist {
    enum class Kind { Uniform, Bimodal };
    Kind kind = Kind::Uniform;
    // uniform
    double lo = 1.0;
    double hi = 8.0;
    // bimodal: mass = mu * U(0.8, 1.2), mu picked heavy with p_heavy
    double mu_light = 2.0;
    double mu_heavy = 20.0;
    double p_heavy = 0.3;

    double sample(std::mt19937_64& g) const;
    double mean() const;
};

struct EnvSpec {
    EnvFamily family = EnvFamily::WallStacked;
    Cell3 dims{24, 8, 10};
    Cell3 box_min{1, 1, 1};
    Cell3 box_max{3, 3, 3};
    MassDist mass_dist;
    double fill = 0.5;
    std::uint64_t seed = 0;

    friend bool operator==(const EnvSpec& a, const EnvSpec& b);
};

// Max occupied height per (depth, width) lane. Lane sizes are dims/lanes with
// the last lane absorbing any remainder cells.
struct HeightField {
    int lanes_d = 0;
    int lanes_w = 0;
    std::vector<int> heights;  // row-major [lane_d][lane_w]

    int at(int ld, int lw) const { return heights[static_cast<std::size_t>(ld) * lanes_w + lw]; }
    int& at(int ld, int lw) { return heights[static_cast<std::size_t>(ld) * lanes_w + lw]; }
};

TrueWorldState generate_environment(const EnvSpec& spec);
WorldState perceive(const TrueWorldState& t);
HeightField discretize(const WorldState& w, int lanes_d, int lanes_w);

// Support rule: a box rests on the floor or touches at least one box cell
// directly beneath its footprint.
bool box_supported(const BoxInstance& box, const std::vector<BoxInstance>& all);
bool validate_true_state(const TrueWorldState& t, std::string* why = nullptr);

// Per-column helpers shared by strategy analysis and the simulator.
int column_height(const WorldState& w, int d, int wd);

void to_json(json& j, const Cell3& c);
void from_json(const json& j, Cell3& c);
void to_json(json& j, const BoxInstance& b);
void from_json(const json& j, BoxInstance& b);
void to_json(json& j, const MassDist& m);
void from_json(const json& j, MassDist& m);
void to_json(json& j, const EnvSpec& s);
void from_json(const json& j, EnvSpec& s);
void to_json(json& j, const WorldState& w);
void from_json(const json& j, WorldState& w);
void to_json(json& j, const TrueWorldState& t);
void from_json(const json& j, TrueWorldState& t);

}  // namespace unloader
