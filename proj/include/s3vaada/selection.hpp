#pragma once

#include <cstddef>
#include <nlohmann/json.hpp>
#include <optional>
#include <string>
#include <vector>

namespace s3vaada {

/// Raw and normalized submodular components behind one greedy gain.
struct GainBreakdown {
    double vap_raw = 0.0;
    double diversity_raw = 0.0;
    double representativeness_raw = 0.0;
    double vap = 0.0;
    double diversity = 0.0;
    double representativeness = 0.0;
    double gain = 0.0;
};

struct SelectionStep {
    std::size_t index = 0;  // position in the candidate pool
    double score = 0.0;     // gain for subsel, the sampler's own score otherwise
    double accumulated = 0.0;
    std::optional<GainBreakdown> components;
};

/// Output shared by every sampler. `indices` are candidate-pool positions in
/// selection order.
struct Selection {
    std::string sampler;
    std::vector<std::size_t> indices;
    std::vector<SelectionStep> steps;
    double accumulated_gain = 0.0;
    std::vector<std::string> warnings;
};

/// Selection JSON. `ids` maps pool positions to external ids (identity when empty).
inline nlohmann::json selection_to_json(const Selection& s, const std::vector<long long>& ids = {}) {
    auto ext = [&](std::size_t i) { return ids.empty() ? static_cast<long long>(i) : ids.at(i); };
    nlohmann::json j;
    j["sampler"] = s.sampler;
    std::vector<long long> out_ids;
    for (std::size_t i : s.indices) out_ids.push_back(ext(i));
    j["ids"] = out_ids;
    nlohmann::json steps = nlohmann::json::array();
    for (const SelectionStep& st : s.steps) {
        nlohmann::json r = {{"id", ext(st.index)}, {"score", st.score}, {"accumulated", st.accumulated}};
        if (st.components) {
            const GainBreakdown& c = *st.components;
            r["raw"] = {{"vap", c.vap_raw}, {"diversity", c.diversity_raw}, {"representativeness", c.representativeness_raw}};
            r["normalized"] = {{"vap", c.vap}, {"diversity", c.diversity}, {"representativeness", c.representativeness}};
        }
        steps.push_back(std::move(r));
    }
    j["steps"] = std::move(steps);
    j["accumulated_gain"] = s.accumulated_gain;
    j["warnings"] = s.warnings;
    return j;
}

}  // namespace s3vaada
