#include "unloader/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <thread>

#include "unloader/rng.hpp"

namespace unloader {

const char* method_name(Method m)
{
    switch (m) {
    case Method::Hardcoded: return "hardcoded";
    case Method::NearestNeighbor: return "nn";
    case Method::Chooser: return "chooser";
    case Method::OpenLoopOffline: return "openloop";
    default: return "expected";
    }
}

Method method_from_name(const std::string& s)
{
    for (Method m : {Method::Hardcoded, Method::NearestNeighbor, Method::Chooser,
                     Method::OpenLoopOffline, Method::ExpectedOffline}) {
        if (s == method_name(m)) {
            return m;
        }
    }
    throw std::invalid_argument("unknown method: " + s);
}

bool method_training_only(Method m)
{
    return m == Method::OpenLoopOffline || m == Method::ExpectedOffline;
}

TrueWorldState nominal_followup_state(const StrategyTree& tree, const TrueWorldState& start,
                                      const SimParams& sp, const ObserveThresholds& th,
                                      std::uint64_t stream)
{
    SimParams params = sp;
    params.rng_seed = mix_seed(stream, 0x4e4f4dULL);
    SimHandle sim(start, params);
    TreeCursor cursor = tree_begin(tree);
    std::optional<AbstractAction> act = root_action(tree);
    int guard = 0;
    while (act && !sim.state().empty() && guard++ < 1000) {
        apply_abstract(*act, sim, th);
        const SemanticObservation z = observe(perceive(sim.state()), th);
        const AdvanceResult adv = advance(tree, cursor, z);
        act = adv.action;
        cursor = adv.cursor;
    }
    return sim.state();
}

std::vector<LibraryEntry> build_library_chain(const EnvSpec& env, int chain_len,
                                              const GeneratorParams& gen, const SimParams& sp,
                                              const ExecutorConfig& exec,
                                              std::vector<GenerationStats>* stats)
{
    std::vector<LibraryEntry> entries;
    FeatureExtractor fx{exec.hardcoded, exec.thresholds};
    TrueWorldState state = generate_environment(env);
    for (int k = 0; k < chain_len; ++k) {
        const WorldState w = perceive(state);
        if (w.empty()) {
            break;
        }
        const Belief b0 =
            sample_initial_belief(w, env.mass_dist, gen.n_particles, mix_seed(env.seed, k));
        GenerationStats st;
        StrategyTree tree =
            generate_strategy(b0, gen, sp, exec.thresholds, mix_seed(env.seed, k, 0x47ULL), &st);
        if (stats) {
            stats->push_back(st);
        }
        LibraryEntry e;
        e.anchor = fx.extract(w);
        e.tree = tree;
        e.source = env;
        entries.push_back(std::move(e));
        if (tree.empty()) {
            break;
        }
        state = nominal_followup_state(tree, state, sp, exec.thresholds, mix_seed(env.seed, k));
    }
    return entries;
}

std::vector<int> chain_entries_for_env(const StrategyLibrary& lib, const EnvSpec& env)
{
    std::vector<int> out;
    for (std::size_t i = 0; i < lib.entries.size(); ++i) {
        if (lib.entries[i].source == env) {
            out.push_back(static_cast<int>(i));
        }
    }
    return out;
}

namespace {

void append_log(EpisodeLog& into, const EpisodeLog& segment, double t0, int boxes0)
{
    for (ActionRecord r : segment.records) {
        r.t_end_s += t0;
        r.boxes_cum += boxes0;
        into.records.push_back(std::move(r));
    }
    into.final_time_s = t0 + segment.final_time_s;
    into.final_boxes = boxes0 + segment.final_boxes;
}

}  // namespace

EpisodeLog run_episode(Method method, const EnvSpec& env, bool training_env, std::uint64_t seed,
                       double budget_s, const MotionPlanner& planner, const RuntimeBundle& bundle)
{
    if (method_training_only(method) && !training_env) {
        throw std::invalid_argument(std::string(method_name(method)) +
                                    " replays precomputed strategies and only runs on "
                                    "environments the library was generated for");
    }
    if (budget_s <= 0.0) {
        throw std::invalid_argument("episode budget must be positive");
    }

    SimParams params = bundle.sim;
    params.rng_seed = mix_seed(seed, 0xE01ULL);
    const TrueWorldState initial = generate_environment(env);
    const ExecutorConfig& exec = bundle.exec;
    FeatureExtractor fx{exec.hardcoded, exec.thresholds};
    NNIndex nn{&bundle.library};

    switch (method) {
    case Method::Hardcoded: {
        SimHandle sim(initial, params);
        StrategySource src;
        src.policy = [&](const WorldState& w, const SemanticObservation&) {
            return hardcoded_decision(w, exec.hardcoded, exec.thresholds).action;
        };
        return execute_strategy(src, sim, planner, budget_s, exec);
    }
    case Method::NearestNeighbor: {
        if (bundle.library.entries.empty()) {
            throw std::invalid_argument("nearest-neighbor method needs a strategy library");
        }
        SimHandle sim(initial, params);
        StrategySource src;
        // the binary classifier is not consulted; every step re-picks the
        // nearest strategy and runs its first action
        src.policy = [&](const WorldState& w, const SemanticObservation&) {
            return root_action(nn_choose(fx.extract(w), nn));
        };
        return execute_strategy(src, sim, planner, budget_s, exec);
    }
    case Method::Chooser: {
        if (!bundle.model) {
            throw std::invalid_argument("chooser method needs a trained model");
        }
        if (bundle.library.entries.empty()) {
            throw std::invalid_argument("chooser method needs a strategy library");
        }
        SimHandle sim(initial, params);
        StrategySource src;
        src.policy = [&](const WorldState& w,
                         const SemanticObservation&) -> std::optional<AbstractAction> {
            const std::vector<double> f = fx.extract(w);
            const ChoiceResult c = choose(f, *bundle.model, nn);
            if (c.label == ChoiceLabel::UseLibrary) {
                if (auto act = root_action(bundle.library.entries[c.entry].tree)) {
                    return act;
                }
            }
            return hardcoded_decision(w, exec.hardcoded, exec.thresholds).action;
        };
        return execute_strategy(src, sim, planner, budget_s, exec);
    }
    case Method::OpenLoopOffline: {
        const std::vector<int> chain = chain_entries_for_env(bundle.library, env);
        if (chain.empty()) {
            throw std::invalid_argument("no precomputed strategies for this environment");
        }
        SimHandle sim(initial, params);
        StrategySource src;
        src.tree = &bundle.library.entries[chain.front()].tree;
        return execute_strategy(src, sim, planner, budget_s, exec);
    }
    case Method::ExpectedOffline:
    default: {
        const std::vector<int> chain = chain_entries_for_env(bundle.library, env);
        if (chain.empty()) {
            throw std::invalid_argument("no precomputed strategies for this environment");
        }
        // Replay each strategy of the chain, resetting the world to the state
        // the next strategy was generated from. Feasible only in simulation;
        // an upper bound on what the precomputed strategies can deliver.
        EpisodeLog merged;
        TrueWorldState segment_start = initial;
        double t = 0.0;
        int boxes = 0;
        for (std::size_t k = 0; k < chain.size(); ++k) {
            if (t >= budget_s || segment_start.empty()) {
                break;
            }
            SimParams seg_params = bundle.sim;
            seg_params.rng_seed = mix_seed(seed, 0xE9ULL, k);
            SimHandle sim(segment_start, seg_params);
            StrategySource src;
            src.tree = &bundle.library.entries[chain[k]].tree;
            const EpisodeLog seg = execute_strategy(src, sim, planner, budget_s - t, exec);
            append_log(merged, seg, t, boxes);
            t = merged.final_time_s;
            boxes = merged.final_boxes;
            // reset to the nominal start of the next strategy
            segment_start = nominal_followup_state(bundle.library.entries[chain[k]].tree,
                                                   segment_start, bundle.sim, exec.thresholds,
                                                   mix_seed(env.seed, k));
        }
        merged.final_time_s = t;
        merged.final_boxes = boxes;
        return merged;
    }
    }
}

Report compare(const ExperimentConfig& cfg, const RuntimeBundle& bundle)
{
    if (cfg.seeds.empty()) {
        throw std::invalid_argument("experiment needs at least one seed");
    }
    if (cfg.budget_s <= 0.0) {
        throw std::invalid_argument("experiment budget must be positive");
    }

    struct Cell {
        const NamedEnv* env;
        Method method;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (const auto& env : cfg.envs) {
        for (Method m : cfg.methods) {
            for (std::uint64_t s : cfg.seeds) {
                cells.push_back({&env, m, s});
            }
        }
    }

    Report report;
    report.cells.resize(cells.size());
    const int jobs = std::max(1, cfg.jobs);
    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        const MotionPlanner planner(bundle.robot);
        for (;;) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) {
                return;
            }
            const Cell& c = cells[i];
            CellResult& out = report.cells[i];
            out.env = c.env->name;
            out.method = c.method;
            out.seed = c.seed;
            try {
                out.log = run_episode(c.method, c.env->spec, c.env->training, c.seed,
                                      cfg.budget_s, planner, bundle);
            } catch (const std::exception& e) {
                out.failed = true;
                out.error = e.what();
            }
        }
    };
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int t = 0; t < jobs; ++t) {
            pool.emplace_back(worker);
        }
        for (auto& t : pool) {
            t.join();
        }
    }

    // shared time grid
    std::vector<double> grid;
    for (double t = 0.0; t <= cfg.budget_s + 1e-9; t += cfg.grid_dt_s) {
        grid.push_back(t);
    }

    std::ostringstream csv;
    csv << "env,method,seed,t_s,boxes\n";
    char buf[128];
    for (const auto& cell : report.cells) {
        if (cell.failed) {
            continue;
        }
        for (double t : grid) {
            std::snprintf(buf, sizeof(buf), "%s,%s,%llu,%.1f,%d\n", cell.env.c_str(),
                          method_name(cell.method), static_cast<unsigned long long>(cell.seed), t,
                          cell.log.boxes_at(t));
            csv << buf;
        }
    }
    report.curves_csv = csv.str();

    json summary = json::object();
    summary["budget_s"] = cfg.budget_s;
    summary["grid_dt_s"] = cfg.grid_dt_s;
    summary["envs"] = json::object();
    for (const auto& env : cfg.envs) {
        json env_j = json::object();
        for (Method m : cfg.methods) {
            std::vector<const CellResult*> ok;
            std::vector<json> errors;
            for (const auto& cell : report.cells) {
                if (cell.env != env.name || cell.method != m) {
                    continue;
                }
                if (cell.failed) {
                    errors.push_back(json{{"seed", cell.seed}, {"error", cell.error}});
                } else {
                    ok.push_back(&cell);
                }
            }
            json mj = json::object();
            mj["runs"] = ok.size();
            if (!errors.empty()) {
                mj["failures"] = errors;
            }
            if (!ok.empty()) {
                std::vector<double> mean(grid.size(), 0.0), se(grid.size(), 0.0);
                for (std::size_t g = 0; g < grid.size(); ++g) {
                    for (const auto* cell : ok) {
                        mean[g] += cell->log.boxes_at(grid[g]);
                    }
                    mean[g] /= ok.size();
                    double var = 0.0;
                    for (const auto* cell : ok) {
                        const double d = cell->log.boxes_at(grid[g]) - mean[g];
                        var += d * d;
                    }
                    se[g] = ok.size() > 1
                                ? std::sqrt(var / (ok.size() - 1)) / std::sqrt(double(ok.size()))
                                : 0.0;
                }
                double final_mean = 0.0;
                for (const auto* cell : ok) {
                    final_mean += cell->log.final_boxes;
                }
                final_mean /= ok.size();
                double final_var = 0.0;
                for (const auto* cell : ok) {
                    final_var += (cell->log.final_boxes - final_mean) *
                                 (cell->log.final_boxes - final_mean);
                }
                mj["t_s"] = grid;
                mj["mean_boxes"] = mean;
                mj["se_boxes"] = se;
                mj["final_mean"] = final_mean;
                mj["final_se"] = ok.size() > 1 ? std::sqrt(final_var / (ok.size() - 1)) /
                                                     std::sqrt(double(ok.size()))
                                               : 0.0;
                // Per-action statistics pooled across seeds
                json per_kind = json::object();
                for (const char* kind : {"Pick", "Sweep"}) {
                    int count = 0;
                    double pt = 0.0, et = 0.0, rate = 0.0, boxes = 0.0;
                    for (const auto* cell : ok) {
                        for (const auto& r : cell->log.records) {
                            if (r.aborted || r.action.rfind(kind, 0) != 0) {
                                continue;
                            }
                            ++count;
                            pt += r.plan_time_s;
                            et += r.exec_time_s;
                            rate += action_rate(r);
                            boxes += r.boxes_unloaded;
                        }
                    }
                    per_kind[kind] = json{{"count", count},
                                          {"mean_plan_time_s", count ? pt / count : 0.0},
                                          {"mean_exec_time_s", count ? et / count : 0.0},
                                          {"mean_boxes", count ? boxes / count : 0.0},
                                          {"mean_rate", count ? rate / count : 0.0}};
                }
                mj["per_action"] = per_kind;
            }
            env_j[method_name(m)] = mj;
        }
        summary["envs"][env.name] = env_j;
    }
    report.summary = std::move(summary);
    return report;
}

void write_report(const Report& r, const std::string& out_dir)
{
    std::filesystem::create_directories(out_dir);
    {
        std::ofstream out(out_dir + "/curves.csv", std::ios::binary);
        out << r.curves_csv;
    }
    {
        std::ofstream out(out_dir + "/summary.json", std::ios::binary);
        out << r.summary.dump(2) << "\n";
    }
}

// --- JSON ---

void to_json(json& j, const ExperimentConfig& c)
{
    json envs = json::array();
    for (const auto& e : c.envs) {
        envs.push_back(json{{"name", e.name}, {"spec", e.spec}, {"training", e.training}});
    }
    json methods = json::array();
    for (Method m : c.methods) {
        methods.push_back(method_name(m));
    }
    j = json{{"envs", envs},         {"methods", methods},   {"seeds", c.seeds},
             {"budget_s", c.budget_s}, {"grid_dt_s", c.grid_dt_s}, {"jobs", c.jobs},
             {"out_dir", c.out_dir}};
}

void from_json(const json& j, ExperimentConfig& c)
{
    c.envs.clear();
    for (const auto& e : j.at("envs")) {
        NamedEnv ne;
        e.at("name").get_to(ne.name);
        e.at("spec").get_to(ne.spec);
        ne.training = e.value("training", false);
        c.envs.push_back(std::move(ne));
    }
    c.methods.clear();
    for (const auto& m : j.at("methods")) {
        c.methods.push_back(method_from_name(m.get<std::string>()));
    }
    j.at("seeds").get_to(c.seeds);
    c.budget_s = j.value("budget_s", 1600.0);
    c.grid_dt_s = j.value("grid_dt_s", 10.0);
    c.jobs = j.value("jobs", 1);
    c.out_dir = j.value("out_dir", std::string());
}

}  // namespace unloader
