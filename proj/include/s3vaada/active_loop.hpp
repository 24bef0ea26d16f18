#pragma once

// The active domain adaptation cycle: train, select B target samples, query
// the oracle, move them from D_u to D_t, retrain; C times after an initial
// unsupervised-adaptation round.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "s3vaada/baselines.hpp"
#include "s3vaada/data_io.hpp"
#include "s3vaada/hash.hpp"
#include "s3vaada/subsel.hpp"
#include "s3vaada/vaada_train.hpp"

namespace s3vaada {

enum class Sampler { S3, Random, Entropy, Margin, KCenter, Aada, Badge };

inline std::string_view sampler_name(Sampler s) {
    switch (s) {
        case Sampler::S3: return "s3";
        case Sampler::Random: return "random";
        case Sampler::Entropy: return "entropy";
        case Sampler::Margin: return "margin";
        case Sampler::KCenter: return "kcenter";
        case Sampler::Aada: return "aada";
        case Sampler::Badge: return "badge";
    }
    return "?";
}

inline constexpr std::array<Sampler, 7> kAllSamplers = {Sampler::S3,      Sampler::Random, Sampler::Entropy,
                                                        Sampler::Margin,  Sampler::KCenter, Sampler::Aada,
                                                        Sampler::Badge};

inline Sampler parse_sampler(std::string_view s) {
    for (Sampler k : kAllSamplers) {
        if (sampler_name(k) == s) return k;
    }
    throw ValidationError("unknown sampler '" + std::string(s) + "'");
}

struct DataConfig {
    std::string generator = "two_moons";  // two_moons | blobs | csv
    std::size_t n_per_domain = 500;
    std::size_t n_test = 500;  // fresh target draw used only for testing
    double rotation_deg = 30.0;
    double noise_sd = 0.1;
    int classes = 3;           // blobs
    std::size_t dim = 2;       // blobs
    double mean_shift = 2.0;   // blobs
    double spread = 5.0;       // blobs
    std::string csv;           // csv: rows tagged source / target / target_test
    double train_fraction = 0.8;
};

struct ModelConfig {
    std::size_t hidden = 32;
    std::size_t embedding = 16;
    std::size_t disc_hidden = 32;
};

struct ExperimentConfig {
    double budget_fraction = 0.02;
    int cycles = 5;
    Sampler sampler = Sampler::S3;
    MixWeights mix;
    LossWeights loss;
    TrainConfig train;
    VatConfig vat;
    ModelConfig model;
    DataConfig data;
    bool cold_start = false;
    bool record_timing = false;
    std::uint64_t seed = 0;

    void validate() const {
        if (!(budget_fraction >= 0.0) || budget_fraction > 1.0) throw ValidationError("budget_fraction must lie in [0, 1]");
        if (cycles < 0) throw ValidationError("cycles must be >= 0");
        mix.validate();
        loss.validate();
        train.validate();
        vat.validate();
        if (model.hidden == 0 || model.embedding == 0 || model.disc_hidden == 0) {
            throw ValidationError("model sizes must be > 0");
        }
    }
};

// ---------------------------------------------------------------------------
// Pools and oracle

/// Holds the hidden target-train labels. Only `label` reads them.
class Oracle {
public:
    explicit Oracle(std::vector<int> hidden) : hidden_(std::move(hidden)) {}

    /// Labels for target-train positions; every position must still be unlabeled.
    std::vector<int> label(std::span<const std::size_t> positions, std::span<const std::size_t> unlabeled) {
        std::vector<int> out;
        out.reserve(positions.size());
        for (std::size_t p : positions) {
            if (std::find(unlabeled.begin(), unlabeled.end(), p) == unlabeled.end()) {
                throw ValidationError("oracle query for position " + std::to_string(p) + " outside D_u");
            }
            out.push_back(hidden_.at(p));
        }
        queries_ += positions.size();
        return out;
    }

    std::size_t labeled_count() const { return queries_; }
    std::size_t size() const { return hidden_.size(); }

private:
    std::vector<int> hidden_;
    std::size_t queries_ = 0;
};

class Pools {
public:
    Pools(LabeledSet source, std::vector<Vector> target_train, std::vector<long long> target_ids,
          std::vector<int> hidden_labels, LabeledSet validation, LabeledSet test)
        : source_(std::move(source)),
          target_x_(std::move(target_train)),
          target_ids_(std::move(target_ids)),
          oracle_(std::move(hidden_labels)),
          validation_(std::move(validation)),
          test_(std::move(test)) {
        if (target_x_.size() != oracle_.size() || target_ids_.size() != target_x_.size()) {
            throw DimensionError("target-train features, ids and labels differ in length");
        }
        unlabeled_.resize(target_x_.size());
        for (std::size_t i = 0; i < unlabeled_.size(); ++i) unlabeled_[i] = i;
    }

    const LabeledSet& source() const { return source_; }
    const LabeledSet& validation() const { return validation_; }
    const LabeledSet& test() const { return test_; }
    const std::vector<std::size_t>& unlabeled_positions() const { return unlabeled_; }
    const std::vector<std::size_t>& labeled_target_positions() const { return labeled_positions_; }
    std::size_t target_train_size() const { return target_x_.size(); }
    const Vector& target_features(std::size_t position) const { return target_x_.at(position); }
    long long target_id(std::size_t position) const { return target_ids_.at(position); }
    const Oracle& oracle() const { return oracle_; }

    std::vector<Vector> unlabeled_features() const {
        std::vector<Vector> out;
        out.reserve(unlabeled_.size());
        for (std::size_t p : unlabeled_) out.push_back(target_x_[p]);
        return out;
    }

    /// D_s followed by D_t.
    LabeledSet labeled_pool() const {
        LabeledSet out = source_;
        for (std::size_t i = 0; i < labeled_positions_.size(); ++i) {
            out.x.push_back(target_x_[labeled_positions_[i]]);
            out.y.push_back(labeled_target_labels_[i]);
        }
        return out;
    }

    /// Queries the oracle for the given target-train positions and moves them D_u -> D_t.
    void acquire(std::span<const std::size_t> positions) {
        const std::vector<int> labels = oracle_.label(positions, unlabeled_);
        for (std::size_t i = 0; i < positions.size(); ++i) {
            labeled_positions_.push_back(positions[i]);
            labeled_target_labels_.push_back(labels[i]);
            unlabeled_.erase(std::find(unlabeled_.begin(), unlabeled_.end(), positions[i]));
        }
        check_invariants();
    }

    /// D_t and D_u are disjoint and together cover the target-train set.
    void check_invariants() const {
        std::vector<int> seen(target_x_.size(), 0);
        for (std::size_t p : unlabeled_) ++seen.at(p);
        for (std::size_t p : labeled_positions_) ++seen.at(p);
        for (int c : seen) {
            if (c != 1) throw NumericsError("pool invariant violated: D_t and D_u must partition target-train");
        }
    }

private:
    LabeledSet source_;
    std::vector<Vector> target_x_;
    std::vector<long long> target_ids_;
    Oracle oracle_;
    LabeledSet validation_;
    LabeledSet test_;
    std::vector<std::size_t> unlabeled_;
    std::vector<std::size_t> labeled_positions_;
    std::vector<int> labeled_target_labels_;
};

inline LabeledSet to_labeled(const Dataset& d) { return {d.features, d.labels}; }

/// Prepared, standardized data for one experiment.
struct ExperimentData {
    Dataset source;
    Dataset target_train;
    Dataset target_val;
    Dataset target_test;
    std::string input_hash;  // git blob id of the raw dataset CSV
    std::vector<std::string> warnings;
};

/// Generates or loads the data, splits target 80/20 and standardizes with source statistics.
inline ExperimentData prepare_data(const DataConfig& data_cfg, std::uint64_t seed) {
    ExperimentData out;
    Dataset target;
    if (data_cfg.generator == "two_moons") {
        DomainPair pair = gen_two_moons_shift(data_cfg.n_per_domain, data_cfg.rotation_deg, data_cfg.noise_sd, seed);
        out.source = std::move(pair.source);
        target = std::move(pair.target);
        out.target_test = gen_two_moons_shift(data_cfg.n_test, data_cfg.rotation_deg, data_cfg.noise_sd, splitmix64(seed ^ 0x7E57)).target;
    } else if (data_cfg.generator == "blobs") {
        DomainPair pair = gen_blobs_shift(data_cfg.n_per_domain, data_cfg.classes, data_cfg.dim, data_cfg.mean_shift, seed, data_cfg.spread);
        out.source = std::move(pair.source);
        target = std::move(pair.target);
        // Same cluster means; only the noise draw differs.
        out.target_test =
            gen_blobs_shift(data_cfg.n_test, data_cfg.classes, data_cfg.dim, data_cfg.mean_shift, seed, data_cfg.spread, 0x7E57).target;
    } else if (data_cfg.generator == "csv") {
        LoadedDatasets loaded = read_dataset_csv(data_cfg.csv);
        out.source = std::move(loaded.source);
        target = std::move(loaded.target);
        out.target_test = std::move(loaded.target_test);
        if (out.target_test.size() == 0) throw ValidationError("data.csv: no target_test rows");
    } else {
        throw ValidationError("data.generator: unknown generator '" + data_cfg.generator + "'");
    }
    if (out.source.size() == 0 || target.size() == 0) throw ValidationError("data: source and target must be non-empty");
    out.target_test.domain = Domain::TargetTest;

    const std::vector<const Dataset*> parts{&out.source, &target, &out.target_test};
    out.input_hash = git_blob_hash(dataset_csv_text(parts));

    Split split = split_train_val(target, data_cfg.train_fraction, seed);
    out.target_train = std::move(split.train);
    out.target_val = std::move(split.val);
    out.warnings = std::move(split.warnings);

    const Standardizer st = Standardizer::fit(out.source);
    for (Dataset* d : {&out.source, &out.target_train, &out.target_val, &out.target_test}) st.apply_in_place(*d);
    return out;
}

// ---------------------------------------------------------------------------
// Selection from model outputs

/// Everything any sampler may look at. Built from the model and features only.
struct SelectionInputs {
    std::vector<ProbDist> probs;
    std::vector<PerturbationBundle> bundles;
    std::vector<Vector> embeddings;
    std::vector<double> disc;
    std::vector<Vector> labeled_embeddings;
};

inline std::uint64_t bundle_seed(std::uint64_t experiment_seed, std::size_t sample_id) {
    return experiment_seed ^ static_cast<std::uint64_t>(sample_id);
}

inline SelectionInputs collect_selection_inputs(Sampler sampler, const NetParams& params,
                                                std::span<const Vector> candidates,
                                                std::span<const std::size_t> candidate_ids,
                                                std::span<const Vector> labeled, const VatConfig& vat,
                                                std::uint64_t seed, int cycle) {
    SelectionInputs in;
    const bool need_embed = sampler == Sampler::KCenter || sampler == Sampler::Badge;
    for (std::size_t i = 0; i < candidates.size(); ++i) {
        const ClassifierTrace t = trace_classifier(params, candidates[i]);
        in.probs.push_back(t.distribution());
        if (need_embed) in.embeddings.push_back(t.features.embedding);
        if (sampler == Sampler::Aada) in.disc.push_back(trace_discriminator(params, t.features.embedding).prob);
        if (sampler == Sampler::S3) {
            Rng rng = Rng::derive(bundle_seed(seed, candidate_ids[i]), 0xB0D1E + static_cast<std::uint64_t>(cycle));
            in.bundles.push_back(make_bundle(params, candidates[i], vat, rng));
        }
    }
    if (sampler == Sampler::KCenter) {
        for (const Vector& x : labeled) in.labeled_embeddings.push_back(forward_features(params, x));
    }
    return in;
}

inline Selection run_sampler(Sampler sampler, const SelectionInputs& in, std::size_t pool_size, std::size_t budget,
                             const MixWeights& mix, Rng& rng) {
    switch (sampler) {
        case Sampler::S3: return greedy_select(CandidatePool::from_bundles(in.bundles), budget, mix);
        case Sampler::Random: return random_select(pool_size, budget, rng);
        case Sampler::Entropy: return entropy_select(in.probs, budget);
        case Sampler::Margin: return margin_select(in.probs, budget);
        case Sampler::KCenter: return kcenter_select(in.embeddings, in.labeled_embeddings, budget);
        case Sampler::Aada: return aada_select(in.probs, in.disc, budget);
        case Sampler::Badge: return badge_select(in.probs, in.embeddings, budget, rng);
    }
    throw ValidationError("unknown sampler");
}

// ---------------------------------------------------------------------------
// Experiment

struct CycleMetrics {
    int cycle = 0;
    std::size_t n_labeled = 0;  // |D_t|
    double test_accuracy = 0.0;
    double val_accuracy = 0.0;
    double selection_ms = 0.0;
    std::vector<long long> selected_ids;
    std::vector<long long> candidate_ids;  // pool position -> target id for `selection`
    std::optional<Selection> selection;
    std::vector<EpochRecord> history;
};

struct ExperimentResult {
    std::vector<CycleMetrics> cycles;
    NetParams final_params;
    std::size_t budget = 0;
    std::size_t oracle_queries = 0;
    std::vector<std::string> warnings;
};

inline double evaluate(const NetParams& params, const LabeledSet& set) { return accuracy(params, set.x, set.y); }

/// B from the initial target-train size; fixed for the whole run.
inline std::size_t budget_for(double fraction, std::size_t target_train_size) {
    return static_cast<std::size_t>(std::llround(fraction * static_cast<double>(target_train_size)));
}

struct ExperimentHooks {
    /// Called after every cycle with the pools in their post-cycle state.
    std::function<void(const CycleMetrics&, const Pools&)> on_cycle;
};

inline TrainConfig cycle_train_config(const ExperimentConfig& cfg, int cycle) {
    TrainConfig t = cfg.train;
    t.seed = splitmix64(cfg.seed ^ (0xC7C1E000ull + static_cast<std::uint64_t>(cycle)));
    return t;
}

/// Cycle 0 adapts with D_t empty; cycles 1..C each select B, label, and retrain
/// (warm-started from the previous best snapshot unless cold_start).
inline ExperimentResult run_experiment(const ExperimentConfig& cfg, const ExperimentData& data,
                                       const ExperimentHooks& hooks = {}) {
    cfg.validate();
    ExperimentResult result;
    result.warnings = data.warnings;

    Pools pools(to_labeled(data.source), data.target_train.features, data.target_train.ids, data.target_train.labels,
                to_labeled(data.target_val), to_labeled(data.target_test));

    const NetDims dims{data.source.dim(), cfg.model.hidden, cfg.model.embedding,
                       static_cast<std::size_t>(data.source.classes), cfg.model.disc_hidden};
    Rng init_rng = Rng::derive(cfg.seed, 42);
    const NetParams initial = init_params(dims, init_rng);
    NetParams params = initial;

    const std::size_t budget = budget_for(cfg.budget_fraction, pools.target_train_size());
    result.budget = budget;

    for (int cycle = 0; cycle <= cfg.cycles; ++cycle) {
        CycleMetrics m;
        m.cycle = cycle;
        if (cycle > 0) {
            const auto t0 = std::chrono::steady_clock::now();
            const std::vector<std::size_t> candidates = pools.unlabeled_positions();
            std::size_t b = budget;
            if (b > candidates.size()) {
                result.warnings.push_back("cycle " + std::to_string(cycle) + ": budget truncated to remaining pool");
                b = candidates.size();
            }
            if (b > 0) {
                const std::vector<Vector> features = pools.unlabeled_features();
                const LabeledSet labeled = pools.labeled_pool();
                const SelectionInputs in =
                    collect_selection_inputs(cfg.sampler, params, features, candidates, labeled.x, cfg.vat, cfg.seed, cycle);
                Rng sel_rng = Rng::derive(cfg.seed, 0x5E1EC7000ull + static_cast<std::uint64_t>(cycle));
                Selection sel = run_sampler(cfg.sampler, in, candidates.size(), b, cfg.mix, sel_rng);
                std::vector<std::size_t> positions;
                for (std::size_t c : candidates) m.candidate_ids.push_back(pools.target_id(c));
                for (std::size_t i : sel.indices) {
                    positions.push_back(candidates[i]);
                    m.selected_ids.push_back(pools.target_id(candidates[i]));
                }
                m.selection = std::move(sel);
                pools.acquire(positions);
            }
            m.selection_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
            if (cfg.cold_start) params = initial;
        }

        const LabeledSet labeled = pools.labeled_pool();
        const std::vector<Vector> unlabeled = pools.unlabeled_features();
        TrainData td{&labeled, &unlabeled, &pools.validation()};
        FitResult fr;
        try {
            fr = fit(td, params, cycle_train_config(cfg, cycle), cfg.loss, cfg.vat);
        } catch (const NumericsError& e) {
            throw NumericsError("cycle " + std::to_string(cycle) + ": " + e.what());
        }
        params = std::move(fr.params);
        m.history = std::move(fr.history);
        m.n_labeled = pools.labeled_target_positions().size();
        m.val_accuracy = pools.validation().empty() ? 0.0 : evaluate(params, pools.validation());
        m.test_accuracy = evaluate(params, pools.test());
        pools.check_invariants();
        if (hooks.on_cycle) hooks.on_cycle(m, pools);
        result.cycles.push_back(std::move(m));
    }
    result.final_params = std::move(params);
    result.oracle_queries = pools.oracle().labeled_count();
    return result;
}

// ---------------------------------------------------------------------------
// Output files

/// cycle,n_labeled,test_accuracy,selection_ms. Timing is "NA" unless requested, which
/// keeps the file byte-identical across reruns.
inline std::string metrics_csv(const ExperimentResult& r, bool with_timing) {
    std::ostringstream os;
    os << "cycle,n_labeled,test_accuracy,selection_ms\n";
    for (const CycleMetrics& m : r.cycles) {
        os << m.cycle << ',' << m.n_labeled << ',' << format_double(m.test_accuracy) << ','
           << (with_timing ? format_double(m.selection_ms) : std::string("NA")) << '\n';
    }
    return os.str();
}

inline std::string timing_csv(const ExperimentResult& r) {
    std::ostringstream os;
    os << "cycle,selection_ms\n";
    for (const CycleMetrics& m : r.cycles) os << m.cycle << ',' << format_double(m.selection_ms) << '\n';
    return os.str();
}

/// epoch, each loss term, total, validation accuracy.
inline std::string history_csv(const std::vector<EpochRecord>& history) {
    std::ostringstream os;
    os << "epoch,supervised,domain,vat_labeled,vat_unlabeled,conditional_entropy,total,val_accuracy\n";
    for (const EpochRecord& e : history) {
        os << e.epoch << ',' << format_double(e.terms.supervised) << ',' << format_double(e.terms.domain) << ','
           << format_double(e.terms.vat_labeled) << ',' << format_double(e.terms.vat_unlabeled) << ','
           << format_double(e.terms.entropy) << ',' << format_double(e.total) << ',' << format_double(e.val_accuracy)
           << '\n';
    }
    return os.str();
}

/// Target-test embeddings of the final model, for external plotting.
inline std::string embeddings_csv(const NetParams& params, const LabeledSet& set) {
    std::ostringstream os;
    os << "row,label";
    for (std::size_t j = 0; j < params.feature2.out(); ++j) os << ",e" << j;
    os << '\n';
    for (std::size_t i = 0; i < set.size(); ++i) {
        const Vector e = forward_features(params, set.x[i]);
        os << i << ',' << set.y[i];
        for (Eigen::Index j = 0; j < e.size(); ++j) os << ',' << format_double(e(j));
        os << '\n';
    }
    return os.str();
}

}  // namespace s3vaada
