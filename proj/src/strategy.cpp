#include "unloader/strategy.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace unloader {

namespace {

const char* band_name(HeightBand b)
{
    switch (b) {
    case HeightBand::Low: return "Low";
    case HeightBand::Mid: return "Mid";
    default: return "High";
    }
}

const char* side_name(SideBand s)
{
    switch (s) {
    case SideBand::Left: return "Left";
    case SideBand::Center: return "Center";
    default: return "Right";
    }
}

}  // namespace

const std::vector<AbstractAction>& AbstractAction::all()
{
    static const std::vector<AbstractAction> actions = [] {
        std::vector<AbstractAction> v;
        for (HeightBand h : {HeightBand::Low, HeightBand::Mid, HeightBand::High}) {
            for (SideBand s : {SideBand::Left, SideBand::Center, SideBand::Right}) {
                v.push_back({ActionKind::Pick, h, s});
            }
        }
        for (HeightBand h : {HeightBand::Low, HeightBand::Mid, HeightBand::High}) {
            v.push_back({ActionKind::Sweep, h, SideBand::Center});
        }
        return v;
    }();
    return actions;
}

std::string AbstractAction::label() const
{
    if (kind == ActionKind::Sweep) {
        return std::string("Sweep") + band_name(height);
    }
    return std::string("Pick") + band_name(height) + side_name(side);
}

AbstractAction AbstractAction::from_label(const std::string& s)
{
    for (const auto& a : all()) {
        if (a.label() == s) {
            return a;
        }
    }
    throw std::invalid_argument("unknown action label: " + s);
}

const std::vector<SemanticObservation>& SemanticObservation::all()
{
    static const std::vector<SemanticObservation> obs = [] {
        std::vector<SemanticObservation> v;
        for (Structure st : {Structure::Pile, Structure::Wall}) {
            for (HeightBand h : {HeightBand::Low, HeightBand::Mid, HeightBand::High}) {
                for (SideBand s : {SideBand::Left, SideBand::Center, SideBand::Right}) {
                    SemanticObservation z;
                    z.structure = st;
                    z.height = h;
                    z.side = s;
                    v.push_back(z);
                }
            }
        }
        return v;
    }();
    return obs;
}

SemanticObservation SemanticObservation::empty_truck()
{
    SemanticObservation z;
    z.truck_empty = true;
    return z;
}

std::string SemanticObservation::label() const
{
    if (truck_empty) {
        return "TruckEmpty";
    }
    return std::string(structure == Structure::Pile ? "Pile" : "Wall") + band_name(height) +
           side_name(side);
}

SemanticObservation SemanticObservation::from_label(const std::string& s)
{
    if (s == "TruckEmpty") {
        return empty_truck();
    }
    for (const auto& z : all()) {
        if (z.label() == s) {
            return z;
        }
    }
    throw std::invalid_argument("unknown observation label: " + s);
}

ObserveThresholds ObserveThresholds::defaults_for(const Cell3& truck_dims)
{
    ObserveThresholds th;
    th.h_pile = 3;
    th.height_low_max = (truck_dims.h + 2) / 3;
    th.height_mid_max = (2 * truck_dims.h + 2) / 3;
    return th;
}

int ObserveThresholds::sweep_height_cap(HeightBand band, int truck_h) const
{
    switch (band) {
    case HeightBand::Low: return h_pile;
    case HeightBand::Mid: return height_mid_max;
    default: return truck_h;
    }
}

HeightBand classify_height(int top_cells, const ObserveThresholds& th)
{
    if (top_cells <= th.height_low_max) {
        return HeightBand::Low;
    }
    if (top_cells <= th.height_mid_max) {
        return HeightBand::Mid;
    }
    return HeightBand::High;
}

SideBand classify_side(double lateral_center, int truck_w)
{
    if (lateral_center * 3.0 < truck_w) {
        return SideBand::Left;
    }
    if (lateral_center * 3.0 < 2.0 * truck_w) {
        return SideBand::Center;
    }
    return SideBand::Right;
}

FrontAnalysis analyze_front(const WorldState& w, int h_pile)
{
    FrontAnalysis fa;
    const Cell3 dims = w.grid.dims();

    std::vector<int> col_max(dims.d, 0);
    for (int d = 0; d < dims.d; ++d) {
        for (int wd = 0; wd < dims.w; ++wd) {
            col_max[d] = std::max(col_max[d], w.grid.column_top(d, wd) + 1);
        }
    }
    for (int d = dims.d - 1; d >= 0; --d) {
        if (col_max[d] > 0) {
            fa.rear_d = d;
            break;
        }
    }
    if (fa.rear_d < 0) {
        return fa;  // empty truck
    }
    fa.empty = false;

    // Pile: contiguous sub-wall columns ending at the rearmost one.
    int d = fa.rear_d;
    while (d >= 0 && col_max[d] > 0 && col_max[d] < h_pile) {
        fa.pile_top = std::max(fa.pile_top, col_max[d]);
        ++fa.d_pile;
        --d;
    }
    // First wall: nearest column at or beyond h_pile, walking frontward.
    while (d >= 0 && col_max[d] < h_pile) {
        --d;  // skip gaps and stray low columns beyond the pile run
    }
    if (d >= 0) {
        fa.wall_rear_d = d;
        while (d >= 0 && col_max[d] >= h_pile) {
            fa.h_wall = std::max(fa.h_wall, col_max[d]);
            fa.wall_front_d = d;
            --d;
        }
    }
    for (const auto& b : w.boxes) {
        if (b.pos.h == 0) {
            fa.rear_floor_d = std::max(fa.rear_floor_d, b.d_end() - 1);
        }
    }
    return fa;
}

namespace {

// Topmost box intersecting depth range [d0, d1]; ties prefer nearer the
// robot, then nearer the lateral center (a uniform wall reads Center), then
// lower id.
const BoxInstance* topmost_box_in_range(const WorldState& w, int d0, int d1)
{
    const BoxInstance* best = nullptr;
    const double mid = 0.5 * w.grid.width();
    auto center_gap = [&](const BoxInstance& b) {
        return std::abs(b.pos.w + 0.5 * b.dims.w - mid);
    };
    auto better = [&](const BoxInstance& b, const BoxInstance& a) {
        if (b.h_end() != a.h_end()) return b.h_end() > a.h_end();
        if (b.d_end() != a.d_end()) return b.d_end() > a.d_end();
        if (center_gap(b) != center_gap(a)) return center_gap(b) < center_gap(a);
        return b.id < a.id;
    };
    for (const auto& b : w.boxes) {
        if (b.d_end() - 1 < d0 || b.pos.d > d1) {
            continue;
        }
        if (!best || better(b, *best)) {
            best = &b;
        }
    }
    return best;
}

}  // namespace

SemanticObservation observe(const WorldState& w, const ObserveThresholds& th)
{
    const FrontAnalysis fa = analyze_front(w, th.h_pile);
    if (fa.empty) {
        return SemanticObservation::empty_truck();
    }
    SemanticObservation z;
    const bool pile = fa.d_pile > 0;
    z.structure = pile ? SemanticObservation::Structure::Pile : SemanticObservation::Structure::Wall;
    const int d1 = fa.rear_d;
    const int d0 = pile ? fa.rear_d - fa.d_pile + 1 : fa.wall_front_d;
    const BoxInstance* top = topmost_box_in_range(w, d0, d1);
    if (!top) {
        // Grid says occupied but no box intersects; treat as empty truck.
        return SemanticObservation::empty_truck();
    }
    z.height = classify_height(top->h_end(), th);
    z.side = classify_side(top->pos.w + 0.5 * top->dims.w, w.grid.width());
    return z;
}

PolicyDecision hardcoded_decision(const WorldState& w, const HardcodedParams& p,
                                  const ObserveThresholds& th)
{
    PolicyDecision out;
    const FrontAnalysis fa = analyze_front(w, p.h_pile);
    if (fa.empty) {
        return out;  // done
    }

    if (fa.d_pile > p.d_min) {
        AbstractAction a;
        a.kind = ActionKind::Sweep;
        a.height = classify_height(fa.pile_top, th);
        out.action = a;
        out.sweep_depth = fa.d_pile;
        return out;
    }

    if (fa.h_wall >= p.h_min) {
        // Pick the highest box of the first wall, nearest on ties.
        const BoxInstance* target = topmost_box_in_range(w, fa.wall_front_d, fa.wall_rear_d);
        if (target) {
            AbstractAction a;
            a.kind = ActionKind::Pick;
            a.height = classify_height(target->h_end(), th);
            a.side = classify_side(target->pos.w + 0.5 * target->dims.w, w.grid.width());
            out.action = a;
            out.pick_cell = Cell3{target->d_end() - 1, target->pos.w + target->dims.w / 2,
                                  target->h_end() - 1};
            return out;
        }
    }

    // Wall too low to pick (or no wall): sweep up to and including the first
    // wall's base row.
    AbstractAction a;
    a.kind = ActionKind::Sweep;
    int depth = std::max(fa.d_pile, 1);
    int top = std::max(fa.pile_top, 1);
    if (fa.wall_front_d >= 0 && fa.rear_floor_d >= fa.wall_front_d) {
        depth = std::max(depth, fa.rear_floor_d - fa.wall_front_d + 1);
        top = std::max(top, fa.h_wall);
    }
    a.height = classify_height(top, th);
    out.action = a;
    out.sweep_depth = depth;
    return out;
}

std::unique_ptr<StrategyNode> StrategyNode::clone() const
{
    auto n = std::make_unique<StrategyNode>();
    n->action = action;
    for (const auto& [label, child] : children) {
        n->children.emplace(label, child->clone());
    }
    return n;
}

int StrategyNode::node_count() const
{
    int n = 1;
    for (const auto& [label, child] : children) {
        n += child->node_count();
    }
    return n;
}

int StrategyNode::depth() const
{
    int d = 0;
    for (const auto& [label, child] : children) {
        d = std::max(d, child->depth());
    }
    return d + 1;
}

StrategyTree::StrategyTree(std::unique_ptr<StrategyNode> root, std::string belief_ref)
    : root_(std::move(root)), belief_ref_(std::move(belief_ref))
{
}

StrategyTree::StrategyTree(const StrategyTree& o)
    : root_(o.root_ ? o.root_->clone() : nullptr), belief_ref_(o.belief_ref_)
{
}

StrategyTree& StrategyTree::operator=(const StrategyTree& o)
{
    if (this != &o) {
        root_ = o.root_ ? o.root_->clone() : nullptr;
        belief_ref_ = o.belief_ref_;
    }
    return *this;
}

AdvanceResult advance(const StrategyTree& t, TreeCursor cursor, const SemanticObservation& z)
{
    AdvanceResult r;
    if (!cursor.node) {
        return r;  // exhausted
    }
    auto it = cursor.node->children.find(z.label());
    if (it == cursor.node->children.end()) {
        return r;  // no branch planned for this outcome
    }
    r.action = it->second->action;
    r.cursor = TreeCursor{it->second.get()};
    return r;
}

void to_json(json& j, const AbstractAction& a)
{
    j = a.label();
}

void from_json(const json& j, AbstractAction& a)
{
    a = AbstractAction::from_label(j.get<std::string>());
}

namespace {

json node_to_json(const StrategyNode& n)
{
    json children = json::object();
    for (const auto& [label, child] : n.children) {
        children[label] = node_to_json(*child);
    }
    return json{{"action", n.action}, {"children", children}};
}

std::unique_ptr<StrategyNode> node_from_json(const json& j)
{
    auto n = std::make_unique<StrategyNode>();
    j.at("action").get_to(n->action);
    const auto& children = j.at("children");
    for (auto it = children.begin(); it != children.end(); ++it) {
        SemanticObservation::from_label(it.key());  // reject labels outside the alphabet
        n->children.emplace(it.key(), node_from_json(it.value()));
    }
    return n;
}

}  // namespace

void to_json(json& j, const StrategyTree& t)
{
    if (t.root_) {
        j = node_to_json(*t.root_);
    } else {
        j = json::object();  // empty tree, no actions
    }
    if (!t.belief_ref_.empty()) {
        j["belief_ref"] = t.belief_ref_;
    }
}

void from_json(const json& j, StrategyTree& t)
{
    if (!j.contains("action")) {
        t = StrategyTree();
        return;
    }
    std::string ref = j.value("belief_ref", std::string());
    t = StrategyTree(node_from_json(j), std::move(ref));
}

void to_json(json& j, const StrategyLibrary& l)
{
    json entries = json::array();
    for (const auto& e : l.entries) {
        entries.push_back(json{{"anchor", e.anchor}, {"tree", e.tree}, {"env_spec", e.source}});
    }
    j = json{{"version", 1}, {"entries", entries}};
}

void from_json(const json& j, StrategyLibrary& l)
{
    const int version = j.at("version").get<int>();
    if (version != 1) {
        throw std::runtime_error("unsupported library version " + std::to_string(version));
    }
    l.entries.clear();
    for (const auto& e : j.at("entries")) {
        LibraryEntry entry;
        e.at("anchor").get_to(entry.anchor);
        e.at("tree").get_to(entry.tree);
        e.at("env_spec").get_to(entry.source);
        l.entries.push_back(std::move(entry));
    }
}

void save_library(const StrategyLibrary& l, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    json j = l;
    out << j.dump(2) << "\n";
}

StrategyLibrary load_library(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    json j = json::parse(in);  // throws with byte position on malformed input
    return j.get<StrategyLibrary>();
}

}  // namespace unloader
