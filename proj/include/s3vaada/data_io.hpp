#pragma once

// Synthetic two-domain data, the dataset and external-score CSV formats, and
// their JSON sidecars. Numbers are written in shortest round-trip form so a
// write/read cycle is lossless.

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <numbers>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "s3vaada/nn.hpp"
#include "s3vaada/prob_metrics.hpp"
#include "s3vaada/rng.hpp"

namespace s3vaada {

enum class Domain { Source, Target, TargetTest };

inline std::string_view domain_name(Domain d) {
    switch (d) {
        case Domain::Source: return "source";
        case Domain::Target: return "target";
        case Domain::TargetTest: return "target_test";
    }
    return "?";
}

inline Domain parse_domain(std::string_view s) {
    if (s == "source") return Domain::Source;
    if (s == "target") return Domain::Target;
    if (s == "target_test") return Domain::TargetTest;
    throw ValidationError("unknown domain '" + std::string(s) + "'");
}

struct Dataset {
    std::vector<Vector> features;
    std::vector<int> labels;
    std::vector<long long> ids;
    Domain domain = Domain::Source;
    int classes = 2;
    nlohmann::json metadata = nlohmann::json::object();

    std::size_t size() const { return features.size(); }
    std::size_t dim() const { return features.empty() ? 0 : static_cast<std::size_t>(features.front().size()); }

    void validate() const {
        if (labels.size() != features.size() || ids.size() != features.size()) {
            throw ValidationError("dataset columns differ in length");
        }
        for (std::size_t i = 0; i < size(); ++i) {
            if (labels[i] < 0 || labels[i] >= classes) throw ValidationError("label out of range at row " + std::to_string(i));
            if (static_cast<std::size_t>(features[i].size()) != dim()) {
                throw ValidationError("ragged features at row " + std::to_string(i));
            }
            if (!features[i].allFinite()) throw ValidationError("non-finite feature at row " + std::to_string(i));
        }
    }

    Dataset subset(std::span<const std::size_t> rows) const {
        Dataset out;
        out.domain = domain;
        out.classes = classes;
        out.metadata = metadata;
        for (std::size_t r : rows) {
            out.features.push_back(features.at(r));
            out.labels.push_back(labels.at(r));
            out.ids.push_back(ids.at(r));
        }
        return out;
    }
};

struct DomainPair {
    Dataset source;
    Dataset target;
};

inline Vector rotate2d(const Vector& p, double degrees) {
    const double a = degrees * std::numbers::pi / 180.0;
    Vector out(2);
    out << std::cos(a) * p(0) - std::sin(a) * p(1), std::sin(a) * p(0) + std::cos(a) * p(1);
    return out;
}

namespace detail {
/// Class 0 on the upper unit half-circle about (0, 0); class 1 on the lower
/// unit half-circle about (1, 0.5).
inline Dataset draw_two_moons(std::size_t n, double noise_sd, Rng& rng, Domain domain, double rotation_deg) {
    Dataset d;
    d.domain = domain;
    d.classes = 2;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = static_cast<int>(i % 2);
        const double t = rng.uniform(0.0, std::numbers::pi);
        Vector p(2);
        if (label == 0) {
            p << std::cos(t), std::sin(t);
        } else {
            p << 1.0 - std::cos(t), 0.5 - std::sin(t);
        }
        p(0) += rng.normal(0.0, noise_sd);
        p(1) += rng.normal(0.0, noise_sd);
        if (rotation_deg != 0.0) p = rotate2d(p, rotation_deg);
        d.features.push_back(std::move(p));
        d.labels.push_back(label);
        d.ids.push_back(static_cast<long long>(i));
    }
    return d;
}
}  // namespace detail

/// Interleaved half-circles; the target draw is rotated by `rotation_deg` about the origin.
inline DomainPair gen_two_moons_shift(std::size_t n_per_domain, double rotation_deg, double noise_sd,
                                      std::uint64_t seed) {
    if (n_per_domain < 4) throw ValidationError("two moons needs n >= 4");
    if (!(noise_sd >= 0.0)) throw ValidationError("noise_sd must be >= 0");
    Rng src_rng = Rng::derive(seed, 101);
    Rng tgt_rng = Rng::derive(seed, 202);
    DomainPair out{detail::draw_two_moons(n_per_domain, noise_sd, src_rng, Domain::Source, 0.0),
                   detail::draw_two_moons(n_per_domain, noise_sd, tgt_rng, Domain::Target, rotation_deg)};
    const nlohmann::json meta = {{"generator", "two_moons"},
                                 {"n_per_domain", n_per_domain},
                                 {"rotation_deg", rotation_deg},
                                 {"noise_sd", noise_sd},
                                 {"seed", seed}};
    out.source.metadata = meta;
    out.target.metadata = meta;
    return out;
}

/// K isotropic unit-variance Gaussian clusters with means uniform in
/// [-spread, spread]^d; target means move by `mean_shift` along a fixed random unit direction.
/// `draw_key` changes the noise draws while keeping means and shift direction.
inline DomainPair gen_blobs_shift(std::size_t n, int classes, std::size_t dim, double mean_shift, std::uint64_t seed,
                                  double spread = 5.0, std::uint64_t draw_key = 0) {
    if (classes < 2) throw ValidationError("blobs need K >= 2");
    if (dim < 2) throw ValidationError("blobs need d >= 2");
    Rng rng = Rng::derive(seed, 303);
    std::vector<Vector> means;
    for (int k = 0; k < classes; ++k) {
        Vector m(static_cast<Eigen::Index>(dim));
        for (Eigen::Index j = 0; j < m.size(); ++j) m(j) = rng.uniform(-spread, spread);
        means.push_back(std::move(m));
    }
    Vector direction(static_cast<Eigen::Index>(dim));
    double norm = 0.0;
    while (norm == 0.0) {
        for (Eigen::Index j = 0; j < direction.size(); ++j) direction(j) = rng.normal();
        norm = direction.norm();
    }
    direction /= norm;

    auto draw = [&](Domain domain, Rng& r, double shift) {
        Dataset d;
        d.domain = domain;
        d.classes = classes;
        for (std::size_t i = 0; i < n; ++i) {
            const int label = static_cast<int>(i % static_cast<std::size_t>(classes));
            Vector p = means[static_cast<std::size_t>(label)] + shift * direction;
            for (Eigen::Index j = 0; j < p.size(); ++j) p(j) += r.normal();
            d.features.push_back(std::move(p));
            d.labels.push_back(label);
            d.ids.push_back(static_cast<long long>(i));
        }
        return d;
    };
    Rng src_rng = Rng::derive(seed ^ draw_key, 404);
    Rng tgt_rng = Rng::derive(seed ^ draw_key, 505);
    DomainPair out{draw(Domain::Source, src_rng, 0.0), draw(Domain::Target, tgt_rng, mean_shift)};
    const nlohmann::json meta = {{"generator", "blobs"}, {"n", n},         {"classes", classes}, {"dim", dim},
                                 {"mean_shift", mean_shift}, {"spread", spread}, {"seed", seed}};
    out.source.metadata = meta;
    out.target.metadata = meta;
    return out;
}

struct Split {
    Dataset train;
    Dataset val;
    std::vector<std::string> warnings;
};

/// Stratified split with round(fraction * n) training rows. Per-class quotas take the
/// floor and hand leftover rows to the largest remainders.
inline Split split_train_val(const Dataset& data, double train_fraction, std::uint64_t seed) {
    const std::size_t n = data.size();
    if (n < 5) throw ValidationError("split_train_val needs n >= 5");
    if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("train fraction must be in (0, 1)");
    const auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(n)));
    Rng rng = Rng::derive(seed, 606);
    Split out;

    std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(data.classes));
    for (std::size_t i = 0; i < n; ++i) by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
    const bool stratify = std::all_of(by_class.begin(), by_class.end(),
                                      [](const auto& members) { return members.empty() || members.size() >= 2; });

    std::vector<std::size_t> train_rows, val_rows;
    if (!stratify) {
        out.warnings.push_back("a class has fewer than 2 members; falling back to an unstratified split");
        std::vector<std::size_t> all(n);
        for (std::size_t i = 0; i < n; ++i) all[i] = i;
        rng.shuffle(all);
        train_rows.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(n_train));
        val_rows.assign(all.begin() + static_cast<std::ptrdiff_t>(n_train), all.end());
    } else {
        std::vector<std::size_t> quota(by_class.size());
        std::vector<std::pair<double, std::size_t>> remainders;
        std::size_t assigned = 0;
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            const double exact = train_fraction * static_cast<double>(by_class[c].size());
            quota[c] = static_cast<std::size_t>(std::floor(exact));
            assigned += quota[c];
            remainders.emplace_back(exact - std::floor(exact), c);
        }
        std::stable_sort(remainders.begin(), remainders.end(),
                         [](const auto& a, const auto& b) { return a.first > b.first; });
        for (std::size_t r = 0; assigned < n_train && r < remainders.size(); ++r, ++assigned) ++quota[remainders[r].second];
        for (std::size_t c = 0; c < by_class.size(); ++c) {
            auto members = by_class[c];
            rng.shuffle(members);
            train_rows.insert(train_rows.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]));
            val_rows.insert(val_rows.end(), members.begin() + static_cast<std::ptrdiff_t>(quota[c]), members.end());
        }
    }
    std::sort(train_rows.begin(), train_rows.end());
    std::sort(val_rows.begin(), val_rows.end());
    out.train = data.subset(train_rows);
    out.val = data.subset(val_rows);
    return out;
}

/// Per-dimension affine map to mean 0 / sd 1, fitted on one dataset (the source).
struct Standardizer {
    Vector mean;
    Vector scale;

    static Standardizer fit(const Dataset& d) {
        if (d.size() == 0) throw ValidationError("cannot standardize an empty dataset");
        const auto dim = static_cast<Eigen::Index>(d.dim());
        Standardizer s{Vector::Zero(dim), Vector::Ones(dim)};
        for (const Vector& x : d.features) s.mean += x;
        s.mean /= static_cast<double>(d.size());
        Vector var = Vector::Zero(dim);
        for (const Vector& x : d.features) var += (x - s.mean).cwiseAbs2();
        var /= static_cast<double>(d.size());
        for (Eigen::Index j = 0; j < dim; ++j) s.scale(j) = var(j) > 0.0 ? std::sqrt(var(j)) : 1.0;
        return s;
    }

    Vector apply(const Vector& x) const { return (x - mean).cwiseQuotient(scale); }

    void apply_in_place(Dataset& d) const {
        for (Vector& x : d.features) x = apply(x);
    }
};

// ---------------------------------------------------------------------------
// Text helpers

inline std::string format_double(double v) {
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view s, const std::string& where) {
    double v = 0.0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ValidationError(where + ": cannot parse number '" + std::string(s) + "'");
    }
    return v;
}

inline long long parse_int(std::string_view s, const std::string& where) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size()) {
        throw ValidationError(where + ": cannot parse integer '" + std::string(s) + "'");
    }
    return v;
}

inline std::vector<std::string_view> split_csv_line(std::string_view line) {
    std::vector<std::string_view> cols;
    std::size_t start = 0;
    while (true) {
        const std::size_t comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            cols.push_back(line.substr(start));
            break;
        }
        cols.push_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return cols;
}

inline std::string slurp_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!line.empty()) lines.push_back(line);
    }
    return lines;
}

/// `<name>.csv` -> `<name>.meta.json`.
inline std::filesystem::path sidecar_path(const std::filesystem::path& csv) {
    std::filesystem::path p = csv;
    if (p.extension() == ".csv") p.replace_extension();
    p += ".meta.json";
    return p;
}

inline nlohmann::json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ValidationError("cannot open " + path.string());
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

inline void write_text_file(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write " + path.string());
    out << text;
}

// ---------------------------------------------------------------------------
// Dataset CSV: id,domain,label,f0..f{d-1}

inline std::string dataset_csv_text(std::span<const Dataset* const> parts) {
    std::ostringstream os;
    const std::size_t d = parts.empty() ? 0 : parts.front()->dim();
    os << "id,domain,label";
    for (std::size_t j = 0; j < d; ++j) os << ",f" << j;
    os << '\n';
    for (const Dataset* part : parts) {
        if (part->dim() != d && part->size() > 0) throw DimensionError("datasets disagree on feature dimension");
        for (std::size_t i = 0; i < part->size(); ++i) {
            os << part->ids[i] << ',' << domain_name(part->domain) << ',' << part->labels[i];
            for (Eigen::Index j = 0; j < part->features[i].size(); ++j) os << ',' << format_double(part->features[i](j));
            os << '\n';
        }
    }
    return os.str();
}

inline void write_dataset_csv(const std::filesystem::path& path, std::span<const Dataset* const> parts,
                              nlohmann::json meta = nlohmann::json::object()) {
    write_text_file(path, dataset_csv_text(parts));
    std::size_t rows = 0;
    for (const Dataset* p : parts) rows += p->size();
    meta["rows"] = rows;
    meta["features"] = parts.empty() ? 0 : parts.front()->dim();
    meta["classes"] = parts.empty() ? 0 : parts.front()->classes;
    write_text_file(sidecar_path(path), meta.dump(2) + "\n");
}

struct LoadedDatasets {
    Dataset source;
    Dataset target;
    Dataset target_test;
    nlohmann::json meta;
};

inline LoadedDatasets read_dataset_csv(const std::filesystem::path& path) {
    LoadedDatasets out;
    out.meta = read_json_file(sidecar_path(path));
    const int classes = out.meta.value("classes", 0);
    const std::size_t d = out.meta.value("features", std::size_t{0});
    if (classes < 2) throw ValidationError(sidecar_path(path).string() + ": classes must be >= 2");
    for (Dataset* ds : {&out.source, &out.target, &out.target_test}) {
        ds->classes = classes;
        ds->metadata = out.meta;
    }
    out.source.domain = Domain::Source;
    out.target.domain = Domain::Target;
    out.target_test.domain = Domain::TargetTest;

    const auto lines = read_lines(path);
    if (lines.empty()) throw ValidationError(path.string() + ": missing header");
    if (split_csv_line(lines[0]).size() != 3 + d) throw ValidationError(path.string() + ": header does not match sidecar");
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const std::string where = path.string() + " row " + std::to_string(r);
        const auto cols = split_csv_line(lines[r]);
        if (cols.size() != 3 + d) throw ValidationError(where + ": expected " + std::to_string(3 + d) + " columns");
        Dataset* dst = nullptr;
        switch (parse_domain(cols[1])) {
            case Domain::Source: dst = &out.source; break;
            case Domain::Target: dst = &out.target; break;
            case Domain::TargetTest: dst = &out.target_test; break;
        }
        Vector x(static_cast<Eigen::Index>(d));
        for (std::size_t j = 0; j < d; ++j) x(static_cast<Eigen::Index>(j)) = parse_double(cols[3 + j], where);
        dst->ids.push_back(parse_int(cols[0], where));
        dst->labels.push_back(static_cast<int>(parse_int(cols[2], where)));
        dst->features.push_back(std::move(x));
    }
    for (Dataset* ds : {&out.source, &out.target, &out.target_test}) ds->validate();
    return out;
}

// ---------------------------------------------------------------------------
// External score CSV: id,p0..p{K-1},q1_0..qN_{K-1}[,e0..e{E-1}][,disc]

struct ScoreRow {
    long long id = 0;
    ProbDist original;
    std::vector<ProbDist> perturbed;
    std::optional<Vector> embedding;
    std::optional<double> disc;
};

struct ExternalScoreFile {
    int classes = 0;      // K
    int restarts = 0;     // N
    int embedding_dim = 0;  // E, 0 when absent
    bool has_disc = false;
    std::vector<ScoreRow> rows;

    std::vector<std::string> columns() const {
        std::vector<std::string> c{"id"};
        for (int k = 0; k < classes; ++k) c.push_back("p" + std::to_string(k));
        for (int n = 1; n <= restarts; ++n) {
            for (int k = 0; k < classes; ++k) c.push_back("q" + std::to_string(n) + "_" + std::to_string(k));
        }
        for (int e = 0; e < embedding_dim; ++e) c.push_back("e" + std::to_string(e));
        if (has_disc) c.push_back("disc");
        return c;
    }

    nlohmann::json meta() const {
        return {{"K", classes}, {"N", restarts}, {"E", embedding_dim}, {"has_disc", has_disc}, {"columns", columns()}};
    }
};

inline constexpr double kScoreSumTolerance = 1e-6;

inline void write_external_scores(const std::filesystem::path& path, const ExternalScoreFile& f) {
    std::ostringstream os;
    const auto cols = f.columns();
    for (std::size_t i = 0; i < cols.size(); ++i) os << (i ? "," : "") << cols[i];
    os << '\n';
    for (const ScoreRow& r : f.rows) {
        os << r.id;
        for (double v : r.original) os << ',' << format_double(v);
        for (const ProbDist& q : r.perturbed) {
            for (double v : q) os << ',' << format_double(v);
        }
        if (f.embedding_dim > 0) {
            for (Eigen::Index e = 0; e < r.embedding->size(); ++e) os << ',' << format_double((*r.embedding)(e));
        }
        if (f.has_disc) os << ',' << format_double(*r.disc);
        os << '\n';
    }
    write_text_file(path, os.str());
    write_text_file(sidecar_path(path), f.meta().dump(2) + "\n");
}

inline ExternalScoreFile load_external_scores(const std::filesystem::path& path) {
    const nlohmann::json meta = read_json_file(sidecar_path(path));
    ExternalScoreFile f;
    try {
        f.classes = meta.at("K").get<int>();
        f.restarts = meta.at("N").get<int>();
        f.embedding_dim = meta.value("E", 0);
        f.has_disc = meta.value("has_disc", false);
    } catch (const nlohmann::json::exception& e) {
        throw ValidationError(sidecar_path(path).string() + ": " + e.what());
    }
    if (f.classes < 2 || f.restarts < 1 || f.embedding_dim < 0) {
        throw ValidationError(sidecar_path(path).string() + ": need K >= 2, N >= 1, E >= 0");
    }
    const auto expected = f.columns();
    const auto lines = read_lines(path);
    if (lines.empty()) throw ValidationError(path.string() + ": missing header");
    const auto header = split_csv_line(lines[0]);
    if (header.size() != expected.size() || !std::equal(header.begin(), header.end(), expected.begin())) {
        throw ValidationError(path.string() + ": header does not match sidecar layout (K=" + std::to_string(f.classes) +
                              ", N=" + std::to_string(f.restarts) + ", E=" + std::to_string(f.embedding_dim) + ")");
    }
    const auto k = static_cast<std::size_t>(f.classes);
    for (std::size_t r = 1; r < lines.size(); ++r) {
        const std::string where = "row " + std::to_string(r - 1);
        const auto cols = split_csv_line(lines[r]);
        if (cols.size() != expected.size()) {
            throw ValidationError(where + ": schema error, expected " + std::to_string(expected.size()) +
                                  " columns for N=" + std::to_string(f.restarts) + " perturbation blocks, got " +
                                  std::to_string(cols.size()));
        }
        ScoreRow row;
        row.id = parse_int(cols[0], where);
        std::size_t c = 1;
        auto read_block = [&](const std::string& what) {
            std::vector<double> v(k);
            for (std::size_t j = 0; j < k; ++j) v[j] = parse_double(cols[c++], where);
            try {
                return ProbDist(std::move(v), kScoreSumTolerance);
            } catch (const ValidationError& e) {
                throw ValidationError(where + ": " + what + " block invalid (" + e.what() + ")");
            }
        };
        row.original = read_block("p");
        for (int n = 1; n <= f.restarts; ++n) row.perturbed.push_back(read_block("q" + std::to_string(n)));
        if (f.embedding_dim > 0) {
            Vector e(f.embedding_dim);
            for (int j = 0; j < f.embedding_dim; ++j) e(j) = parse_double(cols[c++], where);
            if (!e.allFinite()) throw ValidationError(where + ": non-finite embedding");
            row.embedding = std::move(e);
        }
        if (f.has_disc) {
            const double d = parse_double(cols[c++], where);
            if (!(d > 0.0 && d < 1.0)) throw ValidationError(where + ": disc must lie in (0, 1)");
            row.disc = d;
        }
        f.rows.push_back(std::move(row));
    }
    return f;
}

}  // namespace s3vaada
