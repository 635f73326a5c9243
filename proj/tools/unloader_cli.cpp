#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "unloader/harness.hpp"
#include "unloader/rng.hpp"

using namespace unloader;

namespace {

json read_json_file(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    return json::parse(in);
}

void write_json_file(const std::string& path, const json& j)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    out << j.dump(2) << "\n";
}

RobotModel load_robot(const std::string& path)
{
    if (path.empty()) {
        return RobotModel::defaults();
    }
    return read_json_file(path).get<RobotModel>();
}

RuntimeBundle make_bundle(const std::string& robot_path, const std::string& library_path,
                          const std::string& model_path)
{
    RuntimeBundle b;
    b.robot = load_robot(robot_path);
    if (!library_path.empty()) {
        b.library = load_library(library_path);
    }
    if (!model_path.empty()) {
        b.model = load_model(model_path);
    }
    return b;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"truck unloading planner, simulator and evaluation harness"};
    app.require_subcommand(1);

    std::string env_path, out_path, robot_path, library_path, model_path, query_path;
    std::string data_path, config_path, method_str = "hardcoded", stats_path, envs_path;
    std::uint64_t seed = 1;
    double budget_s = 1600.0;
    int jobs = 1;

    auto* gen_env = app.add_subcommand("gen-env", "generate a truck environment snapshot");
    gen_env->add_option("--env", env_path, "environment spec JSON")->required();
    gen_env->add_option("--out", out_path, "output state JSON")->required();

    auto* plan = app.add_subcommand("plan", "run one motion-planning query");
    plan->add_option("--query", query_path, "query JSON")->required();
    plan->add_option("--robot", robot_path, "robot model JSON");
    plan->add_option("--out", out_path, "trajectory JSON (stdout if omitted)");

    int particles = 5, horizon = 6, chain = 4;
    double eps1 = 10.0, eps2 = 10.0;
    long max_expansions = 2000;
    auto* generate = app.add_subcommand("generate", "generate a strategy library for an environment");
    generate->add_option("--env", env_path, "environment spec JSON")->required();
    generate->add_option("--particles", particles, "belief particles");
    generate->add_option("--horizon", horizon, "action horizon");
    generate->add_option("--eps1", eps1, "estimate inflation");
    generate->add_option("--eps2", eps2, "ensemble anchor band");
    generate->add_option("--chain", chain, "strategies chained per environment");
    generate->add_option("--max-expansions", max_expansions, "belief-node expansion budget");
    generate->add_option("--out", out_path, "library JSON")->required();
    generate->add_option("--stats", stats_path, "generation stats JSON");

    double gamma = 1.0 / kFeatureDim, c_reg = 1.0;
    int iters = 200;
    auto* train = app.add_subcommand("train", "train the strategy chooser");
    train->add_option("--data", data_path, "existing dataset CSV to train on");
    train->add_option("--envs", envs_path, "JSON list of env specs to collect from");
    train->add_option("--library", library_path, "strategy library JSON");
    train->add_option("--iters", iters, "data-collection iterations");
    train->add_option("--gamma", gamma, "kernel bandwidth");
    train->add_option("--c", c_reg, "regularization");
    train->add_option("--out", out_path, "model JSON")->required();
    train->add_option("--data-out", stats_path, "write the collected dataset CSV here");

    auto* run = app.add_subcommand("run", "run one unloading episode");
    run->add_option("--env", env_path, "environment spec JSON")->required();
    run->add_option("--method", method_str, "hardcoded|nn|chooser|openloop|expected");
    run->add_option("--seed", seed, "episode seed");
    run->add_option("--budget-s", budget_s, "episode budget, simulated seconds");
    run->add_option("--robot", robot_path, "robot model JSON");
    run->add_option("--library", library_path, "strategy library JSON");
    run->add_option("--model", model_path, "chooser model JSON");
    run->add_option("--out", out_path, "output prefix (episode.csv, episode.json)")->required();

    auto* eval = app.add_subcommand("eval", "run an experiment grid and emit curves + summary");
    eval->add_option("--config", config_path, "experiment config JSON")->required();
    eval->add_option("--robot", robot_path, "robot model JSON");
    eval->add_option("--library", library_path, "strategy library JSON");
    eval->add_option("--model", model_path, "chooser model JSON");
    eval->add_option("--out", out_path, "output directory (overrides config)");
    eval->add_option("--jobs", jobs, "parallel episodes");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen_env->parsed()) {
            const EnvSpec spec = read_json_file(env_path).get<EnvSpec>();
            const TrueWorldState t = generate_environment(spec);
            write_json_file(out_path, json(t));
            std::cout << "boxes: " << t.box_count() << "\n";
            return 0;
        }

        if (plan->parsed()) {
            const json qj = read_json_file(query_path);
            PlanQuery q;
            q.mode = mode_from_name(qj.at("mode").get<std::string>());
            qj.at("start").get_to(q.start);
            if (qj.contains("pose")) {
                q.pose_goal.x = qj.at("pose").at(0).get<double>();
                q.pose_goal.z = qj.at("pose").at(1).get<double>();
                q.pose_relative_to_base = qj.value("pose_relative_to_base", false);
            }
            if (qj.contains("nose_goal")) {
                const auto& n = qj.at("nose_goal");
                q.nose_goal = NoseJoints{n.at("lift").get<double>(), n.at("extend").get<double>(),
                                         n.at("pitch").get<double>()};
            }
            if (qj.contains("displacement")) {
                q.displacement = qj.at("displacement").get<double>();
            }
            q.timeout = qj.value("timeout", RobotModel::defaults().default_timeout);
            auto world = std::make_shared<WorldState>();
            if (qj.contains("world")) {
                qj.at("world").get_to(*world);
            } else {
                const EnvSpec spec = qj.at("env").get<EnvSpec>();
                *world = perceive(generate_environment(spec));
            }
            q.world = world;

            const MotionPlanner planner(load_robot(robot_path));
            const PlanResult r = planner.plan(q);
            json out = json{{"status", r.status == PlanStatus::Success
                                           ? "success"
                                           : (r.status == PlanStatus::Timeout ? "timeout"
                                                                              : "unreachable")},
                            {"expansions", r.expansions},
                            {"planning_time_s", r.planning_time}};
            if (r.ok()) {
                out["cost_s"] = r.trajectory.cost;
                out["bound"] = r.trajectory.suboptimality_bound;
                json wps = json::array();
                for (const auto& c : r.trajectory.waypoints) {
                    wps.push_back(c);
                }
                out["waypoints"] = wps;
                json sols = json::array();
                for (const auto& s : r.solutions) {
                    sols.push_back(json{{"cost_s", s.cost}, {"bound", s.bound},
                                        {"expansions", s.expansions}});
                }
                out["solutions"] = sols;
            }
            if (out_path.empty()) {
                std::cout << out.dump(2) << "\n";
            } else {
                write_json_file(out_path, out);
            }
            return 0;
        }

        if (generate->parsed()) {
            const EnvSpec spec = read_json_file(env_path).get<EnvSpec>();
            GeneratorParams gp;
            gp.n_particles = particles;
            gp.horizon = horizon;
            gp.epsilon1 = eps1;
            gp.epsilon2 = eps2;
            gp.max_expansions = max_expansions;
            ExecutorConfig exec;
            exec.thresholds = ObserveThresholds::defaults_for(spec.dims);
            std::vector<GenerationStats> stats;
            StrategyLibrary lib;
            lib.entries = build_library_chain(spec, chain, gp, SimParams{}, exec, &stats);
            save_library(lib, out_path);
            json sj = json::array();
            for (const auto& st : stats) {
                sj.push_back(json{{"expansions", st.expansions},
                                  {"sim_calls", st.sim_calls},
                                  {"trials", st.trials},
                                  {"root_value", st.root_value},
                                  {"complete", st.complete},
                                  {"wall_time_s", st.wall_time_s}});
            }
            if (!stats_path.empty()) {
                write_json_file(stats_path, sj);
            }
            std::cout << "library entries: " << lib.entries.size() << "\n";
            return 0;
        }

        if (train->parsed()) {
            Dataset data;
            ChooserModel model;
            if (!data_path.empty()) {
                std::ifstream in(data_path);
                if (!in) {
                    throw std::runtime_error("cannot open " + data_path);
                }
                data = Dataset::read_csv(in);
                model = train_chooser(data, gamma, c_reg);
            } else {
                if (envs_path.empty() || library_path.empty()) {
                    throw std::runtime_error("train needs --data, or --envs plus --library");
                }
                std::vector<EnvSpec> envs;
                for (const auto& e : read_json_file(envs_path)) {
                    envs.push_back(e.get<EnvSpec>());
                }
                const StrategyLibrary lib = load_library(library_path);
                CollectConfig cc;
                cc.gamma = gamma;
                cc.c_reg = c_reg;
                if (!envs.empty()) {
                    cc.thresholds = ObserveThresholds::defaults_for(envs.front().dims);
                }
                data = collect_data(envs, lib, SimParams{}, iters, cc, &model);
            }
            save_model(model, out_path);
            if (!stats_path.empty()) {
                std::ofstream out(stats_path, std::ios::binary);
                data.write_csv(out);
            }
            std::cout << "rows: " << data.rows.size()
                      << " train_acc: " << training_accuracy(model, data) << "\n";
            return 0;
        }

        if (run->parsed()) {
            const EnvSpec spec = read_json_file(env_path).get<EnvSpec>();
            RuntimeBundle bundle = make_bundle(robot_path, library_path, model_path);
            bundle.exec.thresholds = ObserveThresholds::defaults_for(spec.dims);
            const MotionPlanner planner(bundle.robot);
            const Method method = method_from_name(method_str);
            const EpisodeLog log =
                run_episode(method, spec, true, seed, budget_s, planner, bundle);
            {
                std::ofstream out(out_path + ".csv", std::ios::binary);
                log.write_csv(out);
            }
            write_json_file(out_path + ".json", log.summary());
            std::cout << "boxes: " << log.final_boxes << " time_s: " << log.final_time_s << "\n";
            return 0;
        }

        if (eval->parsed()) {
            ExperimentConfig cfg = read_json_file(config_path).get<ExperimentConfig>();
            if (!out_path.empty()) {
                cfg.out_dir = out_path;
            }
            if (jobs > 1) {
                cfg.jobs = jobs;
            }
            RuntimeBundle bundle = make_bundle(robot_path, library_path, model_path);
            if (!cfg.envs.empty()) {
                bundle.exec.thresholds = ObserveThresholds::defaults_for(cfg.envs.front().spec.dims);
            }
            const Report report = compare(cfg, bundle);
            if (cfg.out_dir.empty()) {
                throw std::runtime_error("eval needs an output directory (--out)");
            }
            write_report(report, cfg.out_dir);
            std::cout << "cells: " << report.cells.size() << " -> " << cfg.out_dir << "\n";
            return 0;
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
