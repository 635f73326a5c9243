#include "unloader/generator.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <map>

#include "unloader/rng.hpp"

namespace unloader {

bool Belief::empty_truck() const
{
    for (const auto& p : particles) {
        if (!p.state.empty()) {
            return false;
        }
    }
    return true;
}

double Belief::expected_count() const
{
    double e = 0.0;
    for (const auto& p : particles) {
        e += p.weight * p.state.box_count();
    }
    return e;
}

double Belief::expected_max_height() const
{
    double e = 0.0;
    for (const auto& p : particles) {
        int top = 0;
        for (const auto& b : p.state.boxes) {
            top = std::max(top, b.h_end());
        }
        e += p.weight * top;
    }
    return e;
}

double Belief::weight_sum() const
{
    double s = 0.0;
    for (const auto& p : particles) {
        s += p.weight;
    }
    return s;
}

Belief sample_initial_belief(const WorldState& w, const MassDist& prior, int n,
                             std::uint64_t seed)
{
    if (n < 1) {
        throw std::invalid_argument("belief needs at least one particle");
    }
    Belief b;
    b.particles.reserve(n);
    std::mt19937_64 rng(mix_seed(seed, 0x42454c49ULL));
    for (int i = 0; i < n; ++i) {
        BeliefParticle p;
        p.weight = 1.0 / n;
        p.state.grid = w.grid;
        p.state.boxes = w.boxes;
        for (auto& box : p.state.boxes) {
            box.mass = prior.sample(rng);
        }
        b.particles.push_back(std::move(p));
    }
    return b;
}

HeuristicValues belief_heuristics(const Belief& b, double h1_constant)
{
    HeuristicValues h;
    double p_any = 0.0;
    for (const auto& p : b.particles) {
        if (!p.state.empty()) {
            p_any += p.weight;
        }
    }
    h.h1 = h1_constant * p_any;
    h.h2 = b.expected_count();
    h.h3 = b.expected_max_height();
    return h;
}

std::vector<PropagateGroup> propagate(const Belief& b, const AbstractAction& a,
                                      const SimParams& sp, const ObserveThresholds& th,
                                      std::uint64_t stream)
{
    struct Accum {
        Belief belief;
        double prob = 0.0;
        double cost = 0.0;
        double unloaded = 0.0;
        SemanticObservation obs;
    };
    std::map<std::string, Accum> groups;

    for (std::size_t i = 0; i < b.particles.size(); ++i) {
        const BeliefParticle& particle = b.particles[i];
        SimParams params = sp;
        params.rng_seed = mix_seed(stream, i);
        SimHandle sim(particle.state, params);
        const ActionOutcome outcome = apply_abstract(a, sim, th);
        const SemanticObservation z = observe(perceive(sim.state()), th);

        Accum& g = groups[z.label()];
        g.obs = z;
        g.prob += particle.weight;
        g.cost += particle.weight * outcome.duration;
        g.unloaded += particle.weight * outcome.boxes_unloaded;
        g.belief.particles.push_back(BeliefParticle{sim.state(), particle.weight});
    }

    std::vector<PropagateGroup> out;
    out.reserve(groups.size());
    for (auto& [label, g] : groups) {
        PropagateGroup pg;
        pg.obs = g.obs;
        pg.prob = g.prob;
        pg.cost = g.prob > 0.0 ? g.cost / g.prob : 0.0;
        pg.mean_unloaded = g.prob > 0.0 ? g.unloaded / g.prob : 0.0;
        pg.belief = std::move(g.belief);
        for (auto& p : pg.belief.particles) {
            p.weight /= pg.prob;
        }
        out.push_back(std::move(pg));
    }
    return out;
}

namespace {

struct ChildStats {
    bool empty = false;
    double count = 0.0;
    double maxh = 0.0;
};

struct OutcomeRef {
    std::string obs_label;
    double prob = 0.0;      // renormalized over kept groups
    double raw_prob = 0.0;
    double cost = 0.0;
    double mean_unloaded = 0.0;
    ChildStats stats;
    int child = -1;  // node id once materialized
};

struct ActionInfo {
    double exp_cost = 0.0;  // expected duration over the full outcome set
    std::vector<OutcomeRef> outcomes;
};

struct GNode {
    Belief belief;
    int depth = 0;
    std::uint64_t stream = 0;
    bool expanded = false;
    bool solved = false;
    bool backed = false;
    double value = 0.0;
    int best_action = -1;
    std::vector<ActionInfo> actions;
};

class Search {
public:
    Search(const Belief& b0, const GeneratorParams& p, const SimParams& sp,
           const ObserveThresholds& th, std::uint64_t seed, GenerationStats& stats)
        : p_(p), sp_(sp), th_(th), stats_(stats)
    {
        exact_ = p.epsilon1 <= 1.0 + 1e-12 && p.epsilon2 <= 1.0 + 1e-12;
        // A nonempty belief needs at least one more action; each expected box
        // costs at least the cheapest marginal handling time.
        min_action_cost_ = std::min(sp.pick_base_time, sp.sweep_base_time);
        const double sweep_cells =
            std::max(1.0, double(sp.sweep_capture_depth_max));
        per_box_lb_ = std::min(sp.per_box_time,
                               (sp.sweep_base_time + sp.per_cell_time * sweep_cells) /
                                   (sweep_cells * 64.0));
        make_node(b0, 0, mix_seed(seed, 0x47454eULL));
    }

    void run()
    {
        // Trials are capped as a guard; Bellman backups on the finite-horizon
        // DAG settle in at most `horizon` sweeps once expansion stops.
        const long max_trials = 4 * p_.max_expansions + 64 * p_.horizon;
        while (!nodes_[0].solved && stats_.expansions < p_.max_expansions &&
               stats_.trials < max_trials) {
            trial();
            ++stats_.trials;
            stats_.root_values.push_back(nodes_[0].value);
        }
        stats_.complete = nodes_[0].solved;
        stats_.root_value = nodes_[0].value;
    }

    StrategyTree extract() const
    {
        auto root = extract_node(0);
        if (!root) {
            return StrategyTree();
        }
        return StrategyTree(std::move(root), "b0");
    }

private:
    bool terminal(const GNode& n) const
    {
        return n.depth >= p_.horizon || n.belief.empty_truck();
    }

    double leaf_value(double count, bool empty) const
    {
        return empty ? 0.0 : p_.box_penalty * count + p_.h1_constant;
    }

    double init_value(const ChildStats& s, int depth) const
    {
        if (s.empty) {
            return 0.0;
        }
        if (depth >= p_.horizon) {
            return leaf_value(s.count, s.empty);
        }
        if (exact_) {
            return std::max(min_action_cost_, per_box_lb_ * s.count);
        }
        return leaf_value(s.count, s.empty);
    }

    // Scaled ensemble minimum under the anchor rule: non-anchor members join
    // only while their raw key stays within epsilon2 of the box count.
    double guidance(const ChildStats& s) const
    {
        if (s.empty) {
            return 0.0;
        }
        double g = p_.h2_scale * s.count;
        if (p_.h1_constant <= p_.epsilon2 * s.count) {
            g = std::min(g, p_.h1_constant);
        }
        if (s.maxh <= p_.epsilon2 * s.count) {
            g = std::min(g, p_.h3_scale * s.maxh);
        }
        return g;
    }

    int make_node(Belief b, int depth, std::uint64_t stream)
    {
        GNode n;
        n.depth = depth;
        n.stream = stream;
        ChildStats s;
        s.empty = b.empty_truck();
        s.count = b.expected_count();
        s.maxh = b.expected_max_height();
        n.value = init_value(s, depth);
        n.belief = std::move(b);
        if (terminal(n)) {
            n.value = leaf_value(s.count, s.empty);
            n.solved = true;
            n.backed = true;
        }
        nodes_.push_back(std::move(n));
        return static_cast<int>(nodes_.size()) - 1;
    }

    bool expand(int id)
    {
        GNode& n = nodes_[id];
        if (n.expanded) {
            return true;
        }
        if (stats_.expansions >= p_.max_expansions) {
            return false;
        }
        ++stats_.expansions;
        const auto& actions = AbstractAction::all();
        n.actions.resize(actions.size());
        for (std::size_t ai = 0; ai < actions.size(); ++ai) {
            auto groups = propagate(n.belief, actions[ai], sp_, th_, mix_seed(n.stream, ai));
            stats_.sim_calls += static_cast<long>(n.belief.particles.size());

            double prob_sum = 0.0;
            for (const auto& g : groups) {
                prob_sum += g.prob;
                stats_.max_weight_err =
                    std::max(stats_.max_weight_err, std::abs(1.0 - g.belief.weight_sum()));
            }
            stats_.max_prob_err = std::max(stats_.max_prob_err, std::abs(1.0 - prob_sum));

            ActionInfo& info = n.actions[ai];
            info.exp_cost = 0.0;
            for (const auto& g : groups) {
                info.exp_cost += g.prob * g.cost;
            }
            std::sort(groups.begin(), groups.end(),
                      [](const PropagateGroup& a, const PropagateGroup& b) {
                          if (a.prob != b.prob) return a.prob > b.prob;
                          return a.obs.label() < b.obs.label();
                      });
            if (static_cast<int>(groups.size()) > p_.obs_branching) {
                groups.resize(p_.obs_branching);
            }
            double kept = 0.0;
            for (const auto& g : groups) {
                kept += g.prob;
            }
            for (const auto& g : groups) {
                OutcomeRef ref;
                ref.obs_label = g.obs.label();
                ref.raw_prob = g.prob;
                ref.prob = kept > 0.0 ? g.prob / kept : 0.0;
                ref.cost = g.cost;
                ref.mean_unloaded = g.mean_unloaded;
                ref.stats.empty = g.belief.empty_truck();
                ref.stats.count = g.belief.expected_count();
                ref.stats.maxh = g.belief.expected_max_height();
                info.outcomes.push_back(std::move(ref));
            }
        }
        n.expanded = true;
        return true;
    }

    // Beliefs of unexplored children are rebuilt on demand from the parent's
    // deterministic rng stream rather than stored at expansion time.
    // make_node may reallocate nodes_, so everything goes through indices.
    int materialize(int id, int action_idx, int outcome_idx)
    {
        if (nodes_[id].actions[action_idx].outcomes[outcome_idx].child >= 0) {
            return nodes_[id].actions[action_idx].outcomes[outcome_idx].child;
        }
        const std::string label = nodes_[id].actions[action_idx].outcomes[outcome_idx].obs_label;
        auto groups = propagate(nodes_[id].belief, AbstractAction::all()[action_idx], sp_, th_,
                                mix_seed(nodes_[id].stream, action_idx));
        stats_.sim_calls += static_cast<long>(nodes_[id].belief.particles.size());
        for (auto& g : groups) {
            if (g.obs.label() == label) {
                const std::uint64_t stream =
                    mix_seed(nodes_[id].stream, 0x1000 + action_idx, outcome_idx);
                const int depth = nodes_[id].depth;
                const int child = make_node(std::move(g.belief), depth + 1, stream);
                nodes_[id].actions[action_idx].outcomes[outcome_idx].child = child;
                return child;
            }
        }
        return -1;  // unreachable: the stream replays the expansion exactly
    }

    double child_value(const OutcomeRef& ref, int parent_depth, bool inflate) const
    {
        double v;
        if (ref.child >= 0 && nodes_[ref.child].backed) {
            v = nodes_[ref.child].value;
        } else if (ref.child >= 0) {
            v = nodes_[ref.child].value;  // init estimate of a materialized child
        } else {
            v = init_value(ref.stats, parent_depth + 1);
        }
        return inflate ? p_.epsilon1 * v : v;
    }

    double action_q(const GNode& n, int ai, bool inflate) const
    {
        const ActionInfo& info = n.actions[ai];
        double q = info.exp_cost;
        for (const auto& ref : info.outcomes) {
            q += ref.prob * child_value(ref, n.depth, inflate);
        }
        return q;
    }

    double action_guidance(const GNode& n, int ai) const
    {
        double g = 0.0;
        for (const auto& ref : n.actions[ai].outcomes) {
            g += ref.prob * guidance(ref.stats);
        }
        return g;
    }

    // argmin over un-inflated Q with a fixed tie-break (guidance, then action
    // index); used by backups, solved checks and tree extraction alike.
    int greedy_action(const GNode& n) const
    {
        int best = -1;
        double best_q = std::numeric_limits<double>::infinity();
        double best_g = std::numeric_limits<double>::infinity();
        for (std::size_t ai = 0; ai < n.actions.size(); ++ai) {
            const double q = action_q(n, static_cast<int>(ai), false);
            const double g = action_guidance(n, static_cast<int>(ai));
            if (best < 0 || q < best_q || (q == best_q && g < best_g)) {
                best = static_cast<int>(ai);
                best_q = q;
                best_g = g;
            }
        }
        return best;
    }

    // Rollout action choice: inflated estimates, with the ensemble steering
    // inside the epsilon2 band around the best key.
    int select_action(const GNode& n) const
    {
        double qmin = std::numeric_limits<double>::infinity();
        std::vector<double> qs(n.actions.size());
        for (std::size_t ai = 0; ai < n.actions.size(); ++ai) {
            qs[ai] = action_q(n, static_cast<int>(ai), true);
            qmin = std::min(qmin, qs[ai]);
        }
        int best = -1;
        double best_g = std::numeric_limits<double>::infinity();
        for (std::size_t ai = 0; ai < n.actions.size(); ++ai) {
            if (qs[ai] <= p_.epsilon2 * qmin) {
                const double g = action_guidance(n, static_cast<int>(ai));
                if (best < 0 || g < best_g) {
                    best = static_cast<int>(ai);
                    best_g = g;
                }
            }
        }
        return best < 0 ? greedy_action(n) : best;
    }

    // Bellman backup against current child estimates; returns the residual
    // relative to the node's previous estimate.
    double backup(int id)
    {
        GNode& n = nodes_[id];
        if (terminal(n) || !n.expanded) {
            return 0.0;
        }
        const int best = greedy_action(n);
        const double q = action_q(n, best, false);
        const double residual = std::abs(q - n.value);
        n.best_action = best;
        n.value = q;
        n.backed = true;
        return residual;
    }

    bool check_solved(int root_id)
    {
        bool rv = true;
        std::vector<int> open{root_id};
        std::vector<int> closed;
        std::vector<char> seen;
        auto mark = [&](int id) {
            if (id >= static_cast<int>(seen.size())) {
                seen.resize(nodes_.size() + 64, 0);
            }
            if (seen[id]) {
                return false;
            }
            seen[id] = 1;
            return true;
        };
        mark(root_id);
        while (!open.empty()) {
            const int id = open.back();
            open.pop_back();
            if (nodes_[id].solved || terminal(nodes_[id])) {
                continue;
            }
            if (!nodes_[id].expanded && !expand(id)) {
                rv = false;  // out of expansion budget
                continue;
            }
            closed.push_back(id);
            if (backup(id) > p_.convergence_tol) {
                rv = false;
                continue;  // value still moving; do not descend
            }
            const int best = nodes_[id].best_action;
            const int n_out = static_cast<int>(nodes_[id].actions[best].outcomes.size());
            for (int oi = 0; oi < n_out; ++oi) {
                const int child = materialize(id, best, oi);
                if (child >= 0 && !nodes_[child].solved && mark(child)) {
                    open.push_back(child);
                }
            }
        }
        if (rv) {
            for (int id : closed) {
                nodes_[id].solved = true;
            }
        } else {
            for (auto it = closed.rbegin(); it != closed.rend(); ++it) {
                backup(*it);
            }
        }
        return rv;
    }

    void trial()
    {
        std::vector<int> path;
        int id = 0;
        while (!nodes_[id].solved && !terminal(nodes_[id])) {
            if (!expand(id)) {
                break;
            }
            path.push_back(id);
            const int a = select_action(nodes_[id]);
            // descend to the most likely child that may still be unsolved
            int next = -1;
            const int n_out = static_cast<int>(nodes_[id].actions[a].outcomes.size());
            for (int oi = 0; oi < n_out; ++oi) {
                const OutcomeRef ref = nodes_[id].actions[a].outcomes[oi];
                if (ref.stats.empty || nodes_[id].depth + 1 >= p_.horizon) {
                    continue;  // terminal child, nothing to resolve below
                }
                if (ref.child >= 0 && nodes_[ref.child].solved) {
                    continue;
                }
                next = materialize(id, a, oi);
                break;  // outcomes are ordered by probability
            }
            if (next < 0) {
                break;
            }
            id = next;
            if (static_cast<int>(path.size()) > p_.horizon + 2) {
                break;
            }
        }
        while (!path.empty()) {
            const int s = path.back();
            path.pop_back();
            if (!check_solved(s)) {
                break;
            }
        }
    }

    std::unique_ptr<StrategyNode> extract_node(int id) const
    {
        const GNode& n = nodes_[id];
        if (!n.expanded || terminal(n) || n.best_action < 0) {
            return nullptr;
        }
        auto sn = std::make_unique<StrategyNode>();
        sn->action = AbstractAction::all()[n.best_action];
        for (const auto& ref : n.actions[n.best_action].outcomes) {
            if (ref.child >= 0) {
                auto child = extract_node(ref.child);
                if (child) {
                    sn->children.emplace(ref.obs_label, std::move(child));
                }
            }
        }
        return sn;
    }

    const GeneratorParams& p_;
    const SimParams& sp_;
    const ObserveThresholds& th_;
    GenerationStats& stats_;
    bool exact_ = false;
    double min_action_cost_ = 30.0;
    double per_box_lb_ = 1.0;
    std::vector<GNode> nodes_;
};

}  // namespace

StrategyTree generate_strategy(const Belief& b0, const GeneratorParams& p, const SimParams& sp,
                               const ObserveThresholds& th, std::uint64_t seed,
                               GenerationStats* stats)
{
    if (p.horizon < 1) {
        throw std::invalid_argument("horizon must be at least 1");
    }
    GenerationStats local;
    GenerationStats& st = stats ? *stats : local;
    st = GenerationStats{};
    const auto t0 = std::chrono::steady_clock::now();
    Search search(b0, p, sp, th, seed, st);
    search.run();
    StrategyTree tree = search.extract();
    st.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return tree;
}

}  // namespace unloader
