#pragma once

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "unloader/world.hpp"

namespace unloader {

enum class ActionKind { Pick, Sweep };
enum class HeightBand { Low, Mid, High };
enum class SideBand { Left, Center, Right };

// Semantic-level primitive instantiated into concrete motion queries at
// runtime. Side applies to Pick only; Sweep carries height alone. The full
// alphabet is 9 Pick + 3 Sweep = 12 actions.
struct AbstractAction {
    ActionKind kind = ActionKind::Pick;
    HeightBand height = HeightBand::Low;
    SideBand side = SideBand::Center;  // ignored for Sweep

    static const std::vector<AbstractAction>& all();
    std::string label() const;
    static AbstractAction from_label(const std::string& s);

    friend bool operator==(const AbstractAction& a, const AbstractAction& b)
    {
        if (a.kind != b.kind || a.height != b.height) {
            return false;
        }
        return a.kind == ActionKind::Sweep || a.side == b.side;
    }
    friend bool operator!=(const AbstractAction& a, const AbstractAction& b) { return !(a == b); }
};

// Coarse classification of the perceived world: pile/wall x height band x
// side band, 18 values. An empty truck maps to a distinguished sentinel that
// never appears inside strategies.
struct SemanticObservation {
    enum class Structure { Pile, Wall };

    bool truck_empty = false;
    Structure structure = Structure::Pile;
    HeightBand height = HeightBand::Low;
    SideBand side = SideBand::Center;

    static const std::vector<SemanticObservation>& all();  // the 18, no sentinel
    static SemanticObservation empty_truck();
    std::string label() const;
    static SemanticObservation from_label(const std::string& s);

    friend bool operator==(const SemanticObservation& a, const SemanticObservation& b)
    {
        if (a.truck_empty || b.truck_empty) {
            return a.truck_empty == b.truck_empty;
        }
        return a.structure == b.structure && a.height == b.height && a.side == b.side;
    }
    friend bool operator!=(const SemanticObservation& a, const SemanticObservation& b)
    {
        return !(a == b);
    }
};

struct ObserveThresholds {
    int h_pile = 3;          // columns at least this tall count as wall
    int height_low_max = 4;  // top <= this is Low
    int height_mid_max = 7;  // top <= this is Mid, above is High

    static ObserveThresholds defaults_for(const Cell3& truck_dims);
    int sweep_height_cap(HeightBand band, int truck_h) const;
};

HeightBand classify_height(int top_cells, const ObserveThresholds& th);
SideBand classify_side(double lateral_center, int truck_w);

// Geometry shared by observe(), the hardcoded policy and feature extraction.
// Scans full-resolution columns from the rear opening toward the front wall.
struct FrontAnalysis {
    bool empty = true;
    int rear_d = -1;        // rearmost occupied column
    int d_pile = 0;         // contiguous sub-wall columns ending at rear_d
    int h_wall = 0;         // max height of the first wall slab, 0 if none
    int wall_rear_d = -1;   // rear edge of the first wall slab
    int wall_front_d = -1;  // front edge of the first wall slab
    int rear_floor_d = -1;  // rearmost floor-box cell
    int pile_top = 0;       // max height within the pile run
};

FrontAnalysis analyze_front(const WorldState& w, int h_pile);

SemanticObservation observe(const WorldState& w, const ObserveThresholds& th);

// Expert decision rule over pile depth and wall height thresholds.
struct HardcodedParams {
    int h_pile = 3;
    int h_min = 4;
    int d_min = 3;
};

struct PolicyDecision {
    std::optional<AbstractAction> action;  // nullopt = done, truck empty
    int sweep_depth = 0;                   // instantiation hint
    std::optional<Cell3> pick_cell;        // face cell hint (d = face depth)
};

PolicyDecision hardcoded_decision(const WorldState& w, const HardcodedParams& p,
                                  const ObserveThresholds& th);

// Decision tree alternating actions and observation-labeled edges. The root
// action runs unconditionally; each subsequent action follows the edge of the
// observation made after the previous one.
struct StrategyNode {
    AbstractAction action;
    std::map<std::string, std::unique_ptr<StrategyNode>> children;

    std::unique_ptr<StrategyNode> clone() const;
    int node_count() const;
    int depth() const;  // action levels, single node = 1
};

class StrategyTree {
public:
    StrategyTree() = default;
    explicit StrategyTree(std::unique_ptr<StrategyNode> root, std::string belief_ref = {});

    StrategyTree(const StrategyTree& o);
    StrategyTree& operator=(const StrategyTree& o);
    StrategyTree(StrategyTree&&) = default;
    StrategyTree& operator=(StrategyTree&&) = default;

    bool empty() const { return root_ == nullptr; }
    const StrategyNode* root() const { return root_.get(); }
    const std::string& belief_ref() const { return belief_ref_; }
    int node_count() const { return root_ ? root_->node_count() : 0; }
    int depth() const { return root_ ? root_->depth() : 0; }

    friend void to_json(json& j, const StrategyTree& t);
    friend void from_json(const json& j, StrategyTree& t);

private:
    std::unique_ptr<StrategyNode> root_;
    std::string belief_ref_;
};

struct TreeCursor {
    const StrategyNode* node = nullptr;
};

inline TreeCursor tree_begin(const StrategyTree& t)
{
    return TreeCursor{t.root()};
}

inline std::optional<AbstractAction> root_action(const StrategyTree& t)
{
    if (t.empty()) {
        return std::nullopt;
    }
    return t.root()->action;
}

struct AdvanceResult {
    std::optional<AbstractAction> action;  // nullopt = exhausted
    TreeCursor cursor;
};

// Follows the edge labeled by z from the cursor node. Exhausted (no edge or
// leaf) is a value, not an error.
AdvanceResult advance(const StrategyTree& t, TreeCursor cursor, const SemanticObservation& z);

struct LibraryEntry {
    std::vector<double> anchor;  // feature vector of the source state, length 85
    StrategyTree tree;
    EnvSpec source;
};

struct StrategyLibrary {
    std::vector<LibraryEntry> entries;
};

void to_json(json& j, const StrategyLibrary& l);
void from_json(const json& j, StrategyLibrary& l);
void save_library(const StrategyLibrary& l, const std::string& path);
StrategyLibrary load_library(const std::string& path);

void to_json(json& j, const AbstractAction& a);
void from_json(const json& j, AbstractAction& a);

}  // namespace unloader
