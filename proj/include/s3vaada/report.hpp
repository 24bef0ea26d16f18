#pragma once

// Per-cycle aggregation of test accuracy across runs (seeds).

#include <cmath>
#include <filesystem>
#include <sstream>
#include <string>
#include <vector>

#include "s3vaada/data_io.hpp"

namespace s3vaada {

struct RunMetricsRow {
    int cycle = 0;
    std::size_t n_labeled = 0;
    double test_accuracy = 0.0;
};

inline std::vector<RunMetricsRow> read_metrics_csv(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty() || lines[0].rfind("cycle,n_labeled,test_accuracy", 0) != 0) {
        throw ValidationError(path.string() + ": not a metrics CSV");
    }
    std::vector<RunMetricsRow> rows;
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const std::string where = path.string() + " row " + std::to_string(r);
        const auto cols = split_csv_line(lines[r]);
        if (cols.size() < 3) throw ValidationError(where + ": too few columns");
        rows.push_back({static_cast<int>(parse_int(cols[0], where)), static_cast<std::size_t>(parse_int(cols[1], where)),
                        parse_double(cols[2], where)});
    }
    return rows;
}

struct CycleSummary {
    int cycle = 0;
    std::size_t n_labeled = 0;
    std::size_t n_runs = 0;
    double mean = 0.0;
    double standard_error = 0.0;  // sample sd / sqrt(n); 0 when n == 1
};

inline std::vector<CycleSummary> summarize_runs(const std::vector<std::vector<RunMetricsRow>>& runs) {
    if (runs.empty()) throw ValidationError("report needs at least one run");
    const std::size_t cycles = runs.front().size();
    for (const auto& r : runs) {
        if (r.size() != cycles) throw ValidationError("runs have mismatched cycle counts");
    }
    std::vector<CycleSummary> out;
    for (std::size_t c = 0; c < cycles; ++c) {
        CycleSummary s;
        s.cycle = runs.front()[c].cycle;
        s.n_labeled = runs.front()[c].n_labeled;
        s.n_runs = runs.size();
        for (const auto& r : runs) {
            if (r[c].cycle != s.cycle) throw ValidationError("runs have mismatched cycle indices");
            s.mean += r[c].test_accuracy;
        }
        s.mean /= static_cast<double>(runs.size());
        if (runs.size() > 1) {
            double ss = 0.0;
            for (const auto& r : runs) ss += (r[c].test_accuracy - s.mean) * (r[c].test_accuracy - s.mean);
            const double sd = std::sqrt(ss / static_cast<double>(runs.size() - 1));
            s.standard_error = sd / std::sqrt(static_cast<double>(runs.size()));
        }
        out.push_back(s);
    }
    return out;
}

inline std::string summary_csv(const std::vector<CycleSummary>& rows) {
    std::ostringstream os;
    os << "cycle,n_labeled,n_runs,mean_test_accuracy,se_test_accuracy\n";
    for (const auto& s : rows) {
        os << s.cycle << ',' << s.n_labeled << ',' << s.n_runs << ',' << format_double(s.mean) << ','
           << format_double(s.standard_error) << '\n';
    }
    return os.str();
}

/// Percent of target-train labeled vs mean accuracy with a +/- 1 SE band.
inline std::string plot_data_csv(const std::vector<CycleSummary>& rows) {
    std::ostringstream os;
    os << "cycle,n_labeled,mean,lower,upper\n";
    for (const auto& s : rows) {
        os << s.cycle << ',' << s.n_labeled << ',' << format_double(s.mean) << ','
           << format_double(s.mean - s.standard_error) << ',' << format_double(s.mean + s.standard_error) << '\n';
    }
    return os.str();
}

}  // namespace s3vaada
