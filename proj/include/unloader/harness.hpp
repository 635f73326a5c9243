#pragma once

#include <optional>
#include <string>
#include <vector>

#include "unloader/chooser.hpp"
#include "unloader/executor.hpp"
#include "unloader/generator.hpp"
#include "unloader/motion.hpp"
#include "unloader/sim.hpp"
#include "unloader/strategy.hpp"
#include "unloader/world.hpp"

namespace unloader {

enum class Method { Hardcoded, NearestNeighbor, Chooser, OpenLoopOffline, ExpectedOffline };

const char* method_name(Method m);
Method method_from_name(const std::string& s);
// Offline-strategy replay methods rely on strategies precomputed for the
// exact environment, so they only run where the library was built.
bool method_training_only(Method m);

struct NamedEnv {
    std::string name;
    EnvSpec spec;
    bool training = false;
};

struct ExperimentConfig {
    std::vector<NamedEnv> envs;
    std::vector<Method> methods;
    std::vector<std::uint64_t> seeds;
    double budget_s = 1600.0;
    double grid_dt_s = 10.0;  // shared curve sampling grid
    int jobs = 1;
    std::string out_dir;
};

void to_json(json& j, const ExperimentConfig& c);
void from_json(const json& j, ExperimentConfig& c);

struct RuntimeBundle {
    RobotModel robot;
    SimParams sim;
    ExecutorConfig exec;
    GeneratorParams gen;
    StrategyLibrary library;
    std::optional<ChooserModel> model;
};

// Runs one tree to exhaustion without motion planning and returns the
// resulting state; used to chain strategies when generating a library and to
// reconstruct the reset points of the expected-offline replay.
TrueWorldState nominal_followup_state(const StrategyTree& tree, const TrueWorldState& start,
                                      const SimParams& sp, const ObserveThresholds& th,
                                      std::uint64_t stream);

// Generates a chain of strategies for one environment: each entry is planned
// from the state where the previous one nominally ends.
std::vector<LibraryEntry> build_library_chain(const EnvSpec& env, int chain_len,
                                              const GeneratorParams& gen, const SimParams& sp,
                                              const ExecutorConfig& exec,
                                              std::vector<GenerationStats>* stats = nullptr);

std::vector<int> chain_entries_for_env(const StrategyLibrary& lib, const EnvSpec& env);

EpisodeLog run_episode(Method method, const EnvSpec& env, bool training_env, std::uint64_t seed,
                       double budget_s, const MotionPlanner& planner, const RuntimeBundle& bundle);

struct CellResult {
    std::string env;
    Method method = Method::Hardcoded;
    std::uint64_t seed = 0;
    EpisodeLog log;
    bool failed = false;
    std::string error;
};

struct Report {
    std::vector<CellResult> cells;
    std::string curves_csv;
    json summary;
};

Report compare(const ExperimentConfig& cfg, const RuntimeBundle& bundle);
void write_report(const Report& r, const std::string& out_dir);

}  // namespace unloader
