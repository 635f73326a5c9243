#include "unloader/chooser.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "unloader/executor.hpp"
#include "unloader/rng.hpp"

namespace unloader {

std::vector<double> FeatureExtractor::extract(const WorldState& w) const
{
    std::vector<double> f;
    f.reserve(kFeatureDim);

    const HeightField hf = discretize(w, kFeatureLanesD, kFeatureLanesW);
    for (int ld = 0; ld < kFeatureLanesD; ++ld) {
        for (int lw = 0; lw < kFeatureLanesW; ++lw) {
            f.push_back(hf.at(ld, lw));
        }
    }
    // successive differences along depth, per width lane
    for (int lw = 0; lw < kFeatureLanesW; ++lw) {
        for (int ld = 0; ld + 1 < kFeatureLanesD; ++ld) {
            f.push_back(hf.at(ld + 1, lw) - hf.at(ld, lw));
        }
    }

    const FrontAnalysis fa = analyze_front(w, hardcoded.h_pile);
    const int lanes = kFeatureLanesD * kFeatureLanesW;
    double mean_h = 0.0;
    int max_h = 0;
    int occupied = 0;
    for (int i = 0; i < lanes; ++i) {
        mean_h += hf.heights[i];
        max_h = std::max(max_h, hf.heights[i]);
        occupied += hf.heights[i] > 0 ? 1 : 0;
    }
    mean_h /= lanes;

    double vol[3] = {0.0, 0.0, 0.0};
    double total_vol = 0.0;
    for (const auto& b : w.boxes) {
        const SideBand s = classify_side(b.pos.w + 0.5 * b.dims.w, w.grid.width());
        vol[static_cast<int>(s)] += b.volume();
        total_vol += b.volume();
    }

    f.push_back(fa.d_pile);
    f.push_back(fa.h_wall);
    f.push_back(w.box_count());
    f.push_back(mean_h);
    f.push_back(max_h);
    f.push_back(static_cast<double>(occupied) / lanes);
    for (int s = 0; s < 3; ++s) {
        f.push_back(total_vol > 0.0 ? vol[s] / total_vol : 0.0);
    }
    f.push_back(w.empty() ? 1.0 : 0.0);
    return f;
}

bool Dataset::has_both_labels() const
{
    bool pos = false, neg = false;
    for (const auto& r : rows) {
        (r.label == ChoiceLabel::UseLibrary ? pos : neg) = true;
    }
    return pos && neg;
}

void Dataset::write_csv(std::ostream& os) const
{
    for (int i = 0; i < kFeatureDim; ++i) {
        os << "f" << i << ",";
    }
    os << "label,env_seed,step\n";
    char buf[32];
    for (const auto& r : rows) {
        for (double v : r.features) {
            std::snprintf(buf, sizeof(buf), "%.6f,", v);
            os << buf;
        }
        os << (r.label == ChoiceLabel::UseLibrary ? "library" : "hardcoded") << "," << r.env_seed
           << "," << r.step << "\n";
    }
}

Dataset Dataset::read_csv(std::istream& is)
{
    Dataset d;
    std::string line;
    if (!std::getline(is, line)) {
        return d;
    }
    while (std::getline(is, line)) {
        if (line.empty()) {
            continue;
        }
        std::stringstream ss(line);
        std::string cell;
        DatasetRow row;
        for (int i = 0; i < kFeatureDim; ++i) {
            if (!std::getline(ss, cell, ',')) {
                throw std::runtime_error("dataset row truncated");
            }
            row.features.push_back(std::stod(cell));
        }
        std::getline(ss, cell, ',');
        row.label = cell == "library" ? ChoiceLabel::UseLibrary : ChoiceLabel::UseHardcoded;
        std::getline(ss, cell, ',');
        row.env_seed = std::stoull(cell);
        std::getline(ss, cell, ',');
        row.step = std::stoi(cell);
        d.rows.push_back(std::move(row));
    }
    return d;
}

Scaler Scaler::fit(const std::vector<const std::vector<double>*>& xs)
{
    Scaler s;
    if (xs.empty()) {
        return s;
    }
    const std::size_t dim = xs.front()->size();
    s.mean.assign(dim, 0.0);
    s.inv_std.assign(dim, 1.0);
    for (const auto* x : xs) {
        for (std::size_t i = 0; i < dim; ++i) {
            s.mean[i] += (*x)[i];
        }
    }
    for (auto& m : s.mean) {
        m /= xs.size();
    }
    for (std::size_t i = 0; i < dim; ++i) {
        double var = 0.0;
        for (const auto* x : xs) {
            var += ((*x)[i] - s.mean[i]) * ((*x)[i] - s.mean[i]);
        }
        var /= xs.size();
        s.inv_std[i] = var > 1e-12 ? 1.0 / std::sqrt(var) : 1.0;
    }
    return s;
}

std::vector<double> Scaler::apply(const std::vector<double>& x) const
{
    if (mean.empty()) {
        return x;
    }
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        out[i] = (x[i] - mean[i]) * inv_std[i];
    }
    return out;
}

namespace {

double sq_dist(const std::vector<double>& a, const std::vector<double>& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return s;
}

double rbf(const std::vector<double>& a, const std::vector<double>& b, double gamma)
{
    return std::exp(-gamma * sq_dist(a, b));
}

// Platt's SMO on the exact dual; deterministic scan order, no randomness.
class SmoSolver {
public:
    SmoSolver(const std::vector<std::vector<double>>& x, const std::vector<double>& y,
              double gamma, double c)
        : x_(x), y_(y), gamma_(gamma), c_(c), n_(x.size()), alpha_(x.size(), 0.0),
          error_(x.size(), 0.0), b_(0.0)
    {
        kernel_.assign(n_ * n_, 0.0);
        for (std::size_t i = 0; i < n_; ++i) {
            for (std::size_t j = i; j < n_; ++j) {
                const double k = rbf(x_[i], x_[j], gamma_);
                kernel_[i * n_ + j] = k;
                kernel_[j * n_ + i] = k;
            }
        }
        for (std::size_t i = 0; i < n_; ++i) {
            error_[i] = -y_[i];  // f(x)=0 initially
        }
    }

    void solve()
    {
        long guard = 0;
        const long max_guard = 200000;
        int changed = 0;
        bool examine_all = true;
        while ((changed > 0 || examine_all) && guard++ < max_guard) {
            changed = 0;
            for (std::size_t i = 0; i < n_; ++i) {
                if (examine_all || (alpha_[i] > kEps && alpha_[i] < c_ - kEps)) {
                    changed += examine(i);
                }
            }
            if (examine_all) {
                examine_all = false;
            } else if (changed == 0) {
                examine_all = true;
            }
        }
    }

    std::vector<double> alphas() const { return alpha_; }
    double bias() const { return b_; }

private:
    static constexpr double kEps = 1e-8;
    static constexpr double kTol = 1e-3;

    int examine(std::size_t i2)
    {
        const double y2 = y_[i2];
        const double a2 = alpha_[i2];
        const double e2 = error_[i2];
        const double r2 = e2 * y2;
        if ((r2 < -kTol && a2 < c_ - kEps) || (r2 > kTol && a2 > kEps)) {
            // second choice: maximize |e1 - e2| over non-bound, then scan all
            int best = -1;
            double best_gap = -1.0;
            for (std::size_t i = 0; i < n_; ++i) {
                if (i == i2 || alpha_[i] <= kEps || alpha_[i] >= c_ - kEps) {
                    continue;
                }
                const double gap = std::abs(error_[i] - e2);
                if (gap > best_gap) {
                    best_gap = gap;
                    best = static_cast<int>(i);
                }
            }
            if (best >= 0 && take_step(best, i2)) {
                return 1;
            }
            for (std::size_t i = 0; i < n_; ++i) {
                if (i != i2 && alpha_[i] > kEps && alpha_[i] < c_ - kEps && take_step(i, i2)) {
                    return 1;
                }
            }
            for (std::size_t i = 0; i < n_; ++i) {
                if (i != i2 && take_step(i, i2)) {
                    return 1;
                }
            }
        }
        return 0;
    }

    bool take_step(std::size_t i1, std::size_t i2)
    {
        if (i1 == i2) {
            return false;
        }
        const double a1 = alpha_[i1], a2 = alpha_[i2];
        const double y1 = y_[i1], y2 = y_[i2];
        const double e1 = error_[i1], e2 = error_[i2];
        const double s = y1 * y2;
        double lo, hi;
        if (s < 0) {
            lo = std::max(0.0, a2 - a1);
            hi = std::min(c_, c_ + a2 - a1);
        } else {
            lo = std::max(0.0, a1 + a2 - c_);
            hi = std::min(c_, a1 + a2);
        }
        if (hi - lo < kEps) {
            return false;
        }
        const double k11 = kernel_[i1 * n_ + i1];
        const double k12 = kernel_[i1 * n_ + i2];
        const double k22 = kernel_[i2 * n_ + i2];
        const double eta = k11 + k22 - 2 * k12;
        if (eta <= kEps) {
            return false;  // coincident points under the RBF kernel
        }
        const double a2new = std::clamp(a2 + y2 * (e1 - e2) / eta, lo, hi);
        if (std::abs(a2new - a2) < kEps * (a2new + a2 + kEps)) {
            return false;
        }
        const double a1new = a1 + s * (a2 - a2new);

        // bias update (Platt)
        const double b1 = e1 + y1 * (a1new - a1) * k11 + y2 * (a2new - a2) * k12 + b_;
        const double b2 = e2 + y1 * (a1new - a1) * k12 + y2 * (a2new - a2) * k22 + b_;
        double bnew;
        if (a1new > kEps && a1new < c_ - kEps) {
            bnew = b1;
        } else if (a2new > kEps && a2new < c_ - kEps) {
            bnew = b2;
        } else {
            bnew = 0.5 * (b1 + b2);
        }
        const double db = bnew - b_;
        b_ = bnew;
        alpha_[i1] = a1new;
        alpha_[i2] = a2new;
        for (std::size_t i = 0; i < n_; ++i) {
            error_[i] += y1 * (a1new - a1) * kernel_[i1 * n_ + i] +
                         y2 * (a2new - a2) * kernel_[i2 * n_ + i] - db;
        }
        return true;
    }

    const std::vector<std::vector<double>>& x_;
    const std::vector<double>& y_;
    double gamma_, c_;
    std::size_t n_;
    std::vector<double> kernel_;
    std::vector<double> alpha_;
    std::vector<double> error_;
    double b_;
};

}  // namespace

double ChooserModel::decision_value(const std::vector<double>& raw_features) const
{
    const std::vector<double> x = scaler.apply(raw_features);
    double f = -bias;
    for (std::size_t i = 0; i < support_vectors.size(); ++i) {
        f += dual_coef[i] * rbf(support_vectors[i], x, gamma);
    }
    return f;
}

ChooserModel train_chooser(const Dataset& d, double gamma, double c_reg)
{
    if (!d.has_both_labels()) {
        throw std::runtime_error(
            "training data contains a single class; collect more data first");
    }
    ChooserModel m;
    m.gamma = gamma;
    m.c_reg = c_reg;

    std::vector<const std::vector<double>*> xs;
    xs.reserve(d.rows.size());
    for (const auto& r : d.rows) {
        xs.push_back(&r.features);
    }
    m.scaler = Scaler::fit(xs);

    std::vector<std::vector<double>> x;
    std::vector<double> y;
    x.reserve(d.rows.size());
    for (const auto& r : d.rows) {
        x.push_back(m.scaler.apply(r.features));
        y.push_back(static_cast<double>(static_cast<int>(r.label)));
    }

    SmoSolver solver(x, y, gamma, c_reg);
    solver.solve();
    const std::vector<double> alpha = solver.alphas();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (alpha[i] > 1e-8) {
            m.support_vectors.push_back(x[i]);
            m.dual_coef.push_back(alpha[i] * y[i]);
        }
    }
    m.bias = solver.bias();
    return m;
}

double training_accuracy(const ChooserModel& m, const Dataset& d)
{
    if (d.rows.empty()) {
        return 0.0;
    }
    int ok = 0;
    for (const auto& r : d.rows) {
        const double f = m.decision_value(r.features);
        const ChoiceLabel pred = f >= 0.0 ? ChoiceLabel::UseLibrary : ChoiceLabel::UseHardcoded;
        ok += pred == r.label ? 1 : 0;
    }
    return static_cast<double>(ok) / d.rows.size();
}

int NNIndex::nearest(const std::vector<double>& f, const Scaler* scaler) const
{
    if (!library || library->entries.empty()) {
        throw std::runtime_error("nearest-neighbor index is empty");
    }
    int best = -1;
    double best_d = 0.0;
    const std::vector<double> fx = scaler ? scaler->apply(f) : f;
    for (std::size_t i = 0; i < library->entries.size(); ++i) {
        const auto& anchor = library->entries[i].anchor;
        const std::vector<double> ax = scaler ? scaler->apply(anchor) : anchor;
        const double d = sq_dist(fx, ax);
        if (best < 0 || d < best_d) {
            best = static_cast<int>(i);
            best_d = d;
        }
    }
    return best;
}

const StrategyTree& nn_choose(const std::vector<double>& f, const NNIndex& idx,
                              const Scaler* scaler)
{
    return idx.library->entries[idx.nearest(f, scaler)].tree;
}

ChoiceResult choose(const std::vector<double>& f, const ChooserModel& m, const NNIndex& idx)
{
    ChoiceResult r;
    if (m.decision_value(f) >= 0.0) {
        r.label = ChoiceLabel::UseLibrary;
        r.entry = idx.nearest(f, &m.scaler);
    }
    return r;
}

Dataset collect_data(const std::vector<EnvSpec>& envs, const StrategyLibrary& lib,
                     const SimParams& sp, int iters, const CollectConfig& cfg,
                     ChooserModel* final_model)
{
    if (envs.empty()) {
        throw std::invalid_argument("collect_data needs at least one environment");
    }
    Dataset data;
    NNIndex nn{&lib};
    FeatureExtractor fx{cfg.hardcoded, cfg.thresholds};
    std::optional<ChooserModel> model;

    int episode = 0;
    int rows = 0;
    while (rows < iters) {
        const EnvSpec base = envs[episode % envs.size()];
        EnvSpec spec = base;
        spec.seed = mix_seed(base.seed, 0xDA66E5ULL + episode);
        SimParams params = sp;
        params.rng_seed = mix_seed(spec.seed, 0x51ULL);
        SimHandle sim(generate_environment(spec), params);
        ++episode;

        for (int step = 0; step < cfg.max_steps_per_episode && rows < iters; ++step) {
            const WorldState w = perceive(sim.state());
            if (w.empty()) {
                break;
            }
            const std::vector<double> f = fx.extract(w);
            const Snapshot snap = sim.snapshot();

            // probe arm 1: nearest-neighbor strategy, one action
            int boxes_nn = 0;
            {
                const StrategyTree& tree = nn_choose(f, nn);
                if (auto act = root_action(tree)) {
                    boxes_nn = apply_abstract(*act, sim, cfg.thresholds).boxes_unloaded;
                }
                sim.restore(snap);
            }
            // probe arm 2: hardcoded strategy, one action
            int boxes_h = 0;
            {
                const PolicyDecision hd = hardcoded_decision(w, cfg.hardcoded, cfg.thresholds);
                if (hd.action) {
                    boxes_h = apply_abstract(*hd.action, sim, cfg.thresholds).boxes_unloaded;
                }
                sim.restore(snap);
            }

            DatasetRow row;
            row.features = f;
            row.label = boxes_nn > boxes_h ? ChoiceLabel::UseLibrary : ChoiceLabel::UseHardcoded;
            row.env_seed = spec.seed;
            row.step = step;
            data.rows.push_back(std::move(row));
            ++rows;

            if (data.has_both_labels() && rows % std::max(1, cfg.retrain_every) == 0) {
                model = train_chooser(data, cfg.gamma, cfg.c_reg);
            }

            // advance on-policy with the current model's prediction
            std::optional<AbstractAction> next;
            if (model) {
                const ChoiceResult c = choose(f, *model, nn);
                if (c.label == ChoiceLabel::UseLibrary) {
                    next = root_action(lib.entries[c.entry].tree);
                }
            }
            if (!next) {
                const PolicyDecision hd = hardcoded_decision(w, cfg.hardcoded, cfg.thresholds);
                next = hd.action;
            }
            if (!next) {
                break;
            }
            apply_abstract(*next, sim, cfg.thresholds);
        }
    }
    if (final_model) {
        if (!model) {
            model = train_chooser(data, cfg.gamma, cfg.c_reg);  // throws if single-class
        }
        *final_model = *model;
    }
    return data;
}

// --- JSON ---

void to_json(json& j, const ChooserModel& m)
{
    j = json{{"support_vectors", m.support_vectors},
             {"dual_coef", m.dual_coef},
             {"bias", m.bias},
             {"gamma", m.gamma},
             {"c_reg", m.c_reg},
             {"scaler", {{"mean", m.scaler.mean}, {"inv_std", m.scaler.inv_std}}}};
}

void from_json(const json& j, ChooserModel& m)
{
    j.at("support_vectors").get_to(m.support_vectors);
    j.at("dual_coef").get_to(m.dual_coef);
    j.at("bias").get_to(m.bias);
    j.at("gamma").get_to(m.gamma);
    j.at("c_reg").get_to(m.c_reg);
    j.at("scaler").at("mean").get_to(m.scaler.mean);
    j.at("scaler").at("inv_std").get_to(m.scaler.inv_std);
}

void save_model(const ChooserModel& m, const std::string& path)
{
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot open " + path + " for writing");
    }
    json j = m;
    out << j.dump(2) << "\n";
}

ChooserModel load_model(const std::string& path)
{
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open " + path);
    }
    json j = json::parse(in);
    return j.get<ChooserModel>();
}

}  // namespace unloader
