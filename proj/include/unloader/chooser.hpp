#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "unloader/sim.hpp"
#include "unloader/strategy.hpp"
#include "unloader/world.hpp"

namespace unloader {

// 40 lane heights (8 depth x 5 width lanes), 35 depth-adjacent height
// differences (7 per width lane), 10 aggregates.
inline constexpr int kFeatureDim = 85;
inline constexpr int kFeatureLanesD = 8;
inline constexpr int kFeatureLanesW = 5;

struct FeatureExtractor {
    HardcodedParams hardcoded;
    ObserveThresholds thresholds;

    std::vector<double> extract(const WorldState& w) const;
};

enum class ChoiceLabel : int { UseHardcoded = -1, UseLibrary = +1 };

struct DatasetRow {
    std::vector<double> features;
    ChoiceLabel label = ChoiceLabel::UseHardcoded;
    std::uint64_t env_seed = 0;  // provenance
    int step = 0;
};

struct Dataset {
    std::vector<DatasetRow> rows;

    bool has_both_labels() const;
    void write_csv(std::ostream& os) const;
    static Dataset read_csv(std::istream& is);
};

struct Scaler {
    std::vector<double> mean;
    std::vector<double> inv_std;

    static Scaler fit(const std::vector<const std::vector<double>*>& xs);
    std::vector<double> apply(const std::vector<double>& x) const;
};

// Gaussian-kernel max-margin classifier trained by SMO on the exact dual.
struct ChooserModel {
    std::vector<std::vector<double>> support_vectors;  // standardized space
    std::vector<double> dual_coef;                     // alpha_i * y_i
    double bias = 0.0;
    double gamma = 1.0 / kFeatureDim;
    double c_reg = 1.0;
    Scaler scaler;

    double decision_value(const std::vector<double>& raw_features) const;
};

void to_json(json& j, const ChooserModel& m);
void from_json(const json& j, ChooserModel& m);
void save_model(const ChooserModel& m, const std::string& path);
ChooserModel load_model(const std::string& path);

// Throws when only one label is present in the data.
ChooserModel train_chooser(const Dataset& d, double gamma = 1.0 / kFeatureDim,
                           double c_reg = 1.0);

double training_accuracy(const ChooserModel& m, const Dataset& d);

struct NNIndex {
    const StrategyLibrary* library = nullptr;

    // Index of the nearest anchor by Euclidean distance (optionally in the
    // scaler's standardized space); ties break to the lowest entry id.
    int nearest(const std::vector<double>& f, const Scaler* scaler = nullptr) const;
};

const StrategyTree& nn_choose(const std::vector<double>& f, const NNIndex& idx,
                              const Scaler* scaler = nullptr);

struct ChoiceResult {
    ChoiceLabel label = ChoiceLabel::UseHardcoded;
    int entry = -1;  // library entry when label == UseLibrary
};

ChoiceResult choose(const std::vector<double>& f, const ChooserModel& m, const NNIndex& idx);

struct CollectConfig {
    HardcodedParams hardcoded;
    ObserveThresholds thresholds;
    double gamma = 1.0 / kFeatureDim;
    double c_reg = 1.0;
    int max_steps_per_episode = 40;
    int retrain_every = 1;
};

// DAgger-style loop: per step, probe one action of the NN strategy and one of
// the hardcoded strategy from a snapshot, label by boxes unloaded (ties to
// hardcoded), retrain, then advance the world with the current model's pick.
Dataset collect_data(const std::vector<EnvSpec>& envs, const StrategyLibrary& lib,
                     const SimParams& sp, int iters, const CollectConfig& cfg,
                     ChooserModel* final_model = nullptr);

}  // namespace unloader
