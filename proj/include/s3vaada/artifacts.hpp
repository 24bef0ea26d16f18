#pragma once

// Writes the per-run output directory.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <string>

#include "s3vaada/config.hpp"

namespace s3vaada {

inline nlohmann::json run_manifest(const ExperimentConfig& cfg, const ExperimentData& data, const ExperimentResult& r) {
    return {{"config", config_to_json(cfg)},
            {"seed", cfg.seed},
            {"inputs_hash", data.input_hash},
            {"budget", r.budget},
            {"cycles_recorded", r.cycles.size()},
            {"oracle_queries", r.oracle_queries},
            {"sizes",
             {{"source", data.source.size()},
              {"target_train", data.target_train.size()},
              {"target_val", data.target_val.size()},
              {"target_test", data.target_test.size()}}},
            {"warnings", r.warnings}};
}

inline nlohmann::json selections_json(const ExperimentResult& r) {
    nlohmann::json out = nlohmann::json::array();
    for (const CycleMetrics& m : r.cycles) {
        if (!m.selection) continue;
        nlohmann::json j = selection_to_json(*m.selection, m.candidate_ids);
        j["cycle"] = m.cycle;
        out.push_back(std::move(j));
    }
    return out;
}

/// metrics.csv, manifest.json, selections.json, history_cycle<c>.csv,
/// embeddings.csv and, when timing is recorded, timing.csv.
inline void write_run_artifacts(const std::filesystem::path& dir, const ExperimentConfig& cfg,
                                const ExperimentData& data, const ExperimentResult& r) {
    std::filesystem::create_directories(dir);
    write_text_file(dir / "metrics.csv", metrics_csv(r, cfg.record_timing));
    write_text_file(dir / "manifest.json", run_manifest(cfg, data, r).dump(2) + "\n");
    write_text_file(dir / "selections.json", selections_json(r).dump(2) + "\n");
    for (const CycleMetrics& m : r.cycles) {
        write_text_file(dir / ("history_cycle" + std::to_string(m.cycle) + ".csv"), history_csv(m.history));
    }
    write_text_file(dir / "embeddings.csv", embeddings_csv(r.final_params, to_labeled(data.target_test)));
    if (cfg.record_timing) write_text_file(dir / "timing.csv", timing_csv(r));
}

}  // namespace s3vaada
