// Command-line front end: run, select, report, gradcheck.

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "s3vaada/s3vaada.hpp"

using namespace s3vaada;
namespace fs = std::filesystem;

namespace {

std::vector<std::uint64_t> parse_seed_list(const std::string& s) {
    std::vector<std::uint64_t> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) throw ValidationError("--seeds: empty entry");
        out.push_back(static_cast<std::uint64_t>(parse_int(item, "--seeds")));
    }
    if (out.empty()) throw ValidationError("--seeds: no seeds given");
    std::vector<std::uint64_t> sorted = out;
    std::sort(sorted.begin(), sorted.end());
    if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end()) throw ValidationError("--seeds: seeds must be distinct");
    return out;
}

NetDims parse_dims(const std::string& s) {
    std::vector<std::size_t> v;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const long long x = parse_int(item, "--dims");
        if (x <= 0) throw ValidationError("--dims: sizes must be positive");
        v.push_back(static_cast<std::size_t>(x));
    }
    if (v.size() != 5) throw ValidationError("--dims: expected input,hidden,embedding,classes,disc_hidden");
    return {v[0], v[1], v[2], v[3], v[4]};
}

struct RunArgs {
    std::string config;
    std::string seeds;
    std::string out = "runs";
    std::string sampler;
};

int cmd_run(const RunArgs& a) {
    ExperimentConfig cfg = load_experiment_config(a.config);
    if (!a.sampler.empty()) cfg.sampler = parse_sampler(a.sampler);
    const std::vector<std::uint64_t> seeds = a.seeds.empty() ? std::vector<std::uint64_t>{cfg.seed} : parse_seed_list(a.seeds);
    // A failed seed does not stop the others; the exit code reports the worst outcome.
    int code = kExitOk;
    for (std::uint64_t seed : seeds) {
        cfg.seed = seed;
        try {
            const ExperimentData data = prepare_data(cfg.data, seed);
            const ExperimentResult r = run_experiment(cfg, data);
            const fs::path dir = fs::path(a.out) / ("seed_" + std::to_string(seed));
            write_run_artifacts(dir, cfg, data, r);
            std::printf("seed %llu: final test accuracy %.4f after %zu labels -> %s\n",
                        static_cast<unsigned long long>(seed), r.cycles.back().test_accuracy, r.cycles.back().n_labeled,
                        dir.string().c_str());
            for (const auto& w : r.warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
        } catch (const std::invalid_argument& e) {
            std::fprintf(stderr, "error: seed %llu: %s\n", static_cast<unsigned long long>(seed), e.what());
            code = std::max(code, kExitValidation);
        } catch (const std::exception& e) {
            std::fprintf(stderr, "error: seed %llu: %s\n", static_cast<unsigned long long>(seed), e.what());
            code = kExitRuntime;
        }
    }
    return code;
}

struct SelectArgs {
    std::string scores;
    std::size_t budget = 0;
    double alpha = 0.5;
    double beta = 0.3;
    std::string sampler = "s3";
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_select(const SelectArgs& a) {
    const Sampler sampler = parse_sampler(a.sampler);
    const MixWeights mix{a.alpha, a.beta};
    mix.validate();
    const ExternalScoreFile f = load_external_scores(a.scores);
    if (f.rows.empty()) throw ValidationError(a.scores + ": no rows");
    if (a.budget > f.rows.size()) {
        throw ValidationError("--budget " + std::to_string(a.budget) + " exceeds the " + std::to_string(f.rows.size()) +
                              " candidate rows");
    }
    const bool need_embed = sampler == Sampler::KCenter || sampler == Sampler::Badge;
    if (need_embed && f.embedding_dim == 0) {
        throw ValidationError(std::string(sampler_name(sampler)) + " needs embedding columns e0..");
    }
    if (sampler == Sampler::Aada && !f.has_disc) throw ValidationError("aada needs a disc column");

    SelectionInputs in;
    std::vector<long long> ids;
    for (const ScoreRow& r : f.rows) {
        ids.push_back(r.id);
        in.probs.push_back(r.original);
        in.bundles.push_back({r.original, r.perturbed, 0});
        if (r.embedding) in.embeddings.push_back(*r.embedding);
        if (r.disc) in.disc.push_back(*r.disc);
    }
    Rng rng(a.seed);
    const Selection sel = run_sampler(sampler, in, f.rows.size(), a.budget, mix, rng);

    nlohmann::json out = selection_to_json(sel, ids);
    out["manifest"] = {{"scores", a.scores},
                       {"inputs_hash", git_blob_hash(slurp_file(a.scores))},
                       {"sampler", sampler_name(sampler)},
                       {"budget", a.budget},
                       {"alpha", mix.alpha},
                       {"beta", mix.beta},
                       {"seed", a.seed},
                       {"K", f.classes},
                       {"N", f.restarts}};
    const std::string text = out.dump(2) + "\n";
    if (a.out.empty()) {
        std::fputs(text.c_str(), stdout);
    } else {
        write_text_file(a.out, text);
    }
    return kExitOk;
}

int cmd_report(const std::vector<std::string>& dirs, const std::string& out) {
    std::vector<std::vector<RunMetricsRow>> runs;
    for (const auto& d : dirs) runs.push_back(read_metrics_csv(fs::path(d) / "metrics.csv"));
    const auto summary = summarize_runs(runs);
    write_text_file(fs::path(out) / "summary.csv", summary_csv(summary));
    write_text_file(fs::path(out) / "plot_data.csv", plot_data_csv(summary));
    std::fputs(summary_csv(summary).c_str(), stdout);
    return kExitOk;
}

int cmd_gradcheck(const std::string& dims, std::uint64_t seed, const std::string& fault) {
    GradcheckConfig cfg;
    if (!dims.empty()) cfg.dims = parse_dims(dims);
    cfg.seed = seed;
    if (!fault.empty()) cfg.inject_fault = fault;
    const GradcheckReport r = run_gradcheck(cfg);
    std::fputs(r.table().c_str(), stdout);
    std::printf("resamples: %d\n", r.resamples);
    return r.passed ? kExitOk : kExitRuntime;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Active domain adaptation with submodular subset selection"};
    app.require_subcommand(1);

    RunArgs run;
    auto* run_cmd = app.add_subcommand("run", "Run the active adaptation loop for one or more seeds");
    run_cmd->add_option("config", run.config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    run_cmd->add_option("--seeds", run.seeds, "Comma-separated seeds; defaults to the config seed");
    run_cmd->add_option("--out", run.out, "Output directory; one seed_<s> subdirectory per seed");
    run_cmd->add_option("--sampler", run.sampler, "Override the configured sampler");

    SelectArgs sel;
    auto* sel_cmd = app.add_subcommand("select", "Select a batch from an external score file");
    sel_cmd->add_option("scores", sel.scores, "Score CSV with a .meta.json sidecar")->required()->check(CLI::ExistingFile);
    sel_cmd->add_option("--budget", sel.budget, "Number of samples to select")->required();
    sel_cmd->add_option("--alpha", sel.alpha, "Weight of the uncertainty term");
    sel_cmd->add_option("--beta", sel.beta, "Weight of the diversity term");
    sel_cmd->add_option("--sampler", sel.sampler, "s3|random|entropy|margin|kcenter|aada|badge");
    sel_cmd->add_option("--seed", sel.seed, "Seed for random and badge");
    sel_cmd->add_option("--out", sel.out, "Output JSON; stdout when omitted");

    std::vector<std::string> report_dirs;
    std::string report_out = ".";
    auto* rep_cmd = app.add_subcommand("report", "Aggregate metrics.csv across run directories");
    rep_cmd->add_option("dirs", report_dirs, "Run directories")->required()->check(CLI::ExistingDirectory);
    rep_cmd->add_option("--out", report_out, "Directory for summary.csv and plot_data.csv");

    std::string gc_dims, gc_fault;
    std::uint64_t gc_seed = 0;
    auto* gc_cmd = app.add_subcommand("gradcheck", "Finite-difference check of every loss gradient");
    gc_cmd->add_option("--dims", gc_dims, "input,hidden,embedding,classes,disc_hidden (default 2,4,3,3,4)");
    gc_cmd->add_option("--seed", gc_seed, "Seed for parameters and inputs");
    gc_cmd->add_option("--inject-fault", gc_fault, "Corrupt the analytic gradient of one term");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitValidation;
    }

    try {
        if (*run_cmd) return cmd_run(run);
        if (*sel_cmd) return cmd_select(sel);
        if (*rep_cmd) return cmd_report(report_dirs, report_out);
        if (*gc_cmd) return cmd_gradcheck(gc_dims, gc_seed, gc_fault);
    } catch (const ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const DimensionError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitValidation;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitRuntime;
    }
    return kExitOk;
}
