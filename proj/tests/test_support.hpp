#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "s3vaada/s3vaada.hpp"

namespace s3vaada::testing {

/// Random distribution with a spread of peakedness; sharpness > 1 pushes mass to one class.
inline ProbDist random_dist(std::size_t k, Rng& rng, double sharpness = 1.0) {
    std::vector<double> v(k);
    double s = 0.0;
    for (auto& x : v) {
        x = std::pow(rng.uniform() + 1e-12, sharpness);
        s += x;
    }
    for (auto& x : v) x /= s;
    return ProbDist::trusted(std::move(v));
}

inline PerturbationBundle random_bundle(std::size_t k, std::size_t n, Rng& rng) {
    PerturbationBundle b;
    b.original = random_dist(k, rng, 1.0 + 4.0 * rng.uniform());
    for (std::size_t i = 0; i < n; ++i) b.perturbed.push_back(random_dist(k, rng, 1.0 + 4.0 * rng.uniform()));
    return b;
}

inline CandidatePool random_pool(std::size_t n, std::size_t k, std::size_t restarts, Rng& rng) {
    std::vector<PerturbationBundle> bundles;
    for (std::size_t i = 0; i < n; ++i) bundles.push_back(random_bundle(k, restarts, rng));
    return CandidatePool::from_bundles(bundles);
}

inline Vector random_vector(std::size_t d, Rng& rng, double sd = 1.0) {
    Vector v(static_cast<Eigen::Index>(d));
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.normal(0.0, sd);
    return v;
}

inline std::vector<Vector> random_batch(std::size_t n, std::size_t d, Rng& rng) {
    std::vector<Vector> out;
    for (std::size_t i = 0; i < n; ++i) out.push_back(random_vector(d, rng));
    return out;
}

/// Randomizes every parameter, biases included.
inline NetParams random_params(const NetDims& dims, Rng& rng, double sd = 0.7) {
    NetParams p = NetParams::zeros(dims);
    for (std::size_t i = 0; i < p.parameter_count(); ++i) p.at(i) = rng.normal(0.0, sd);
    return p;
}

/// Instance family for the power-method quality check: the experiment's default
/// architecture with library initialization, random classifier biases, standardized
/// inputs and a perturbation radius inside the locally quadratic regime.
struct PowerMethodInstance {
    NetParams params;
    Vector x;
};

inline constexpr double kPowerMethodEpsilon = 0.05;

inline PowerMethodInstance power_method_instance(Rng& rng) {
    const NetDims dims{2, 32, 16, 2, 32};
    PowerMethodInstance inst{init_params(dims, rng), Vector()};
    for (Eigen::Index k = 0; k < inst.params.classifier.bias.size(); ++k) inst.params.classifier.bias(k) = rng.normal();
    inst.x = random_vector(dims.input, rng);
    return inst;
}

class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("s3vaada_test_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

private:
    std::filesystem::path path_;
};

inline std::string slurp(const std::filesystem::path& p) { return slurp_file(p); }

}  // namespace s3vaada::testing
