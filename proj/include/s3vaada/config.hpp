#pragma once

// JSON experiment configuration. Every field is optional and defaults to the
// values in ExperimentConfig; unknown fields and type errors are reported with
// their dotted path.

#include <filesystem>
#include <nlohmann/json.hpp>
#include <set>
#include <string>

#include "s3vaada/active_loop.hpp"

namespace s3vaada {

namespace detail {

class FieldReader {
public:
    FieldReader(const nlohmann::json& j, std::string prefix) : j_(j), prefix_(std::move(prefix)) {
        if (!j_.is_object()) throw ValidationError(where_root() + ": expected an object");
    }

    template <typename T>
    void read(const std::string& name, T& out) {
        known_.insert(name);
        if (!j_.contains(name)) return;
        const nlohmann::json& v = j_.at(name);
        const std::string path = prefix_.empty() ? name : prefix_ + "." + name;
        if constexpr (std::is_same_v<T, bool>) {
            if (!v.is_boolean()) throw ValidationError(path + ": expected a boolean");
            out = v.get<bool>();
        } else if constexpr (std::is_same_v<T, std::string>) {
            if (!v.is_string()) throw ValidationError(path + ": expected a string");
            out = v.get<std::string>();
        } else if constexpr (std::is_floating_point_v<T>) {
            if (!v.is_number()) throw ValidationError(path + ": expected a number");
            out = v.get<T>();
        } else if constexpr (std::is_unsigned_v<T>) {
            if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
                throw ValidationError(path + ": expected a non-negative integer");
            }
            out = v.get<T>();
        } else {
            if (!v.is_number_integer()) throw ValidationError(path + ": expected an integer");
            out = v.get<T>();
        }
    }

    FieldReader child(const std::string& name) {
        known_.insert(name);
        static const nlohmann::json kEmpty = nlohmann::json::object();
        const std::string path = prefix_.empty() ? name : prefix_ + "." + name;
        return FieldReader(j_.contains(name) ? j_.at(name) : kEmpty, path);
    }

    /// Rejects keys that no read() asked for.
    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!known_.count(it.key())) {
                throw ValidationError((prefix_.empty() ? it.key() : prefix_ + "." + it.key()) + ": unknown field");
            }
        }
    }

private:
    std::string where_root() const { return prefix_.empty() ? "config" : prefix_; }

    const nlohmann::json& j_;
    std::string prefix_;
    std::set<std::string> known_;
};

/// Reruns validate() and prefixes the message with the section name.
template <typename T>
void validate_section(const T& section, const std::string& name) {
    try {
        section.validate();
    } catch (const ValidationError& e) {
        throw ValidationError(name + ": " + e.what());
    }
}

}  // namespace detail

inline ExperimentConfig parse_experiment_config(const nlohmann::json& j) {
    ExperimentConfig c;
    detail::FieldReader root(j, "");
    root.read("seed", c.seed);
    root.read("budget_fraction", c.budget_fraction);
    root.read("cycles", c.cycles);
    std::string sampler(sampler_name(c.sampler));
    root.read("sampler", sampler);
    try {
        c.sampler = parse_sampler(sampler);
    } catch (const ValidationError& e) {
        throw ValidationError(std::string("sampler: ") + e.what());
    }
    root.read("cold_start", c.cold_start);
    root.read("record_timing", c.record_timing);

    auto mix = root.child("mix");
    mix.read("alpha", c.mix.alpha);
    mix.read("beta", c.mix.beta);
    mix.finish();

    auto loss = root.child("loss");
    loss.read("lambda_d", c.loss.lambda_d);
    loss.read("lambda_s", c.loss.lambda_s);
    loss.read("lambda_t", c.loss.lambda_t);
    loss.finish();

    auto train = root.child("train");
    train.read("batch_size", c.train.batch_size);
    train.read("epochs", c.train.epochs);
    train.read("learning_rate", c.train.learning_rate);
    train.read("momentum", c.train.momentum);
    train.read("weight_decay", c.train.weight_decay);
    train.read("clip_norm", c.train.clip_norm);
    train.finish();

    auto vat = root.child("vat");
    vat.read("epsilon", c.vat.epsilon);
    vat.read("xi_scale", c.vat.xi_scale);
    vat.read("power_iters", c.vat.power_iters);
    vat.read("restarts", c.vat.restarts);
    vat.finish();

    auto model = root.child("model");
    model.read("hidden", c.model.hidden);
    model.read("embedding", c.model.embedding);
    model.read("disc_hidden", c.model.disc_hidden);
    model.finish();

    auto data = root.child("data");
    data.read("generator", c.data.generator);
    data.read("n_per_domain", c.data.n_per_domain);
    data.read("n_test", c.data.n_test);
    data.read("rotation_deg", c.data.rotation_deg);
    data.read("noise_sd", c.data.noise_sd);
    data.read("classes", c.data.classes);
    data.read("dim", c.data.dim);
    data.read("mean_shift", c.data.mean_shift);
    data.read("spread", c.data.spread);
    data.read("csv", c.data.csv);
    data.read("train_fraction", c.data.train_fraction);
    data.finish();
    root.finish();

    detail::validate_section(c.mix, "mix");
    detail::validate_section(c.loss, "loss");
    detail::validate_section(c.train, "train");
    detail::validate_section(c.vat, "vat");
    c.validate();
    return c;
}

inline ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    return parse_experiment_config(read_json_file(path));
}

/// Fully resolved configuration, suitable for the run manifest.
inline nlohmann::json config_to_json(const ExperimentConfig& c) {
    return {{"seed", c.seed},
            {"budget_fraction", c.budget_fraction},
            {"cycles", c.cycles},
            {"sampler", sampler_name(c.sampler)},
            {"cold_start", c.cold_start},
            {"record_timing", c.record_timing},
            {"mix", c.mix},
            {"loss", c.loss},
            {"train", c.train},
            {"vat", c.vat},
            {"model", {{"hidden", c.model.hidden}, {"embedding", c.model.embedding}, {"disc_hidden", c.model.disc_hidden}}},
            {"data",
             {{"generator", c.data.generator},
              {"n_per_domain", c.data.n_per_domain},
              {"n_test", c.data.n_test},
              {"rotation_deg", c.data.rotation_deg},
              {"noise_sd", c.data.noise_sd},
              {"classes", c.data.classes},
              {"dim", c.data.dim},
              {"mean_shift", c.data.mean_shift},
              {"spread", c.data.spread},
              {"csv", c.data.csv},
              {"train_fraction", c.data.train_fraction}}}};
}

}  // namespace s3vaada
