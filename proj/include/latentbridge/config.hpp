#pragma once

// Run configuration: JSON in, validated struct out, faithful echo back to
// JSON for reports. Unknown keys anywhere are errors naming the dotted path;
// all range checks throw ConfigError with the offending key so the CLI can
// exit 2 with a precise message.

#include <cstdint>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "latentbridge/bridge.hpp"
#include "latentbridge/ddim.hpp"
#include "latentbridge/errors.hpp"

namespace latentbridge {

using json = nlohmann::json;

struct ScheduleConfig {
    int t_train = 1000;
    double beta_start = 1e-4;
    double beta_end = 0.02;
};

struct WorldConfig {
    int k = 4;
    int frames = 8;
    int height = 16;
    int width = 16;
    double sigma = 0.05;
    uint64_t seed = 7;
};

struct DdimConfig {
    int t_infer = 50;
    double guidance_scale = 7.5;
    InvertMode invert_mode = InvertMode::naive;
    double fp_tol = 1e-10;
    int fp_max_iter = 200;
};

struct BridgeSection {
    double alpha = 0.25;
    std::string strategy = "Sequential";
    std::string task = "generation";
    double idm_guidance = 7.5;
    double vdm_guidance = 7.5;
    uint64_t seed = 0;
    bool alternate_idm_first = true;
};

// Benchmark matrix axes. An empty alpha list means "use each task's default
// mixing ratio" (generation 0.25, control 1.0, edit 1.0 and 0.25,
// inpaint/outpaint 0.1).
struct AblationConfig {
    std::vector<double> alphas;
    std::vector<std::string> strategies = {"IdmOnly", "VdmOnly", "Alternate", "Fuse",
                                           "Sequential"};
    std::vector<std::string> tasks = {"generation", "control", "edit", "inpaint"};
};

struct RunConfig {
    ScheduleConfig schedule;
    WorldConfig world;
    DdimConfig ddim;
    BridgeSection bridge;
    AblationConfig ablation;
    std::vector<uint64_t> seeds = {1,  2,  3,  4,  5,  6,  7,  8,  9,  10,
                                   11, 12, 13, 14, 15, 16, 17, 18, 19, 20};
    std::string out_dir = "out";
};

inline std::string invert_mode_name(InvertMode m) {
    return m == InvertMode::naive ? "naive" : "fixed_point";
}

inline InvertMode invert_mode_from_name(const std::string& s) {
    if (s == "naive") return InvertMode::naive;
    if (s == "fixed_point") return InvertMode::fixed_point;
    throw ConfigError("ddim.invert_mode", "must be \"naive\" or \"fixed_point\", got \"" + s +
                                              "\"");
}

namespace detail {

inline void require_known_keys(const json& j, const std::string& path,
                               const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(path, "must be a JSON object");
    for (const auto& item : j.items()) {
        if (!allowed.count(item.key())) {
            throw ConfigError(path + "." + item.key(), "unknown key");
        }
    }
}

inline int get_int(const json& j, const std::string& key, const std::string& path, int fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError(path, "must be an integer");
    return v.get<int>();
}

inline uint64_t get_u64(const json& j, const std::string& key, const std::string& path,
                        uint64_t fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number_integer()) throw ConfigError(path, "must be an integer");
    if (v.is_number_unsigned()) return v.get<uint64_t>();
    const int64_t s = v.get<int64_t>();
    if (s < 0) throw ConfigError(path, "must be non-negative");
    return uint64_t(s);
}

inline double get_real(const json& j, const std::string& key, const std::string& path,
                       double fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_number()) throw ConfigError(path, "must be a number");
    return v.get<double>();
}

inline std::string get_string(const json& j, const std::string& key, const std::string& path,
                              const std::string& fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_string()) throw ConfigError(path, "must be a string");
    return v.get<std::string>();
}

inline bool get_bool(const json& j, const std::string& key, const std::string& path,
                     bool fallback) {
    if (!j.contains(key)) return fallback;
    const auto& v = j.at(key);
    if (!v.is_boolean()) throw ConfigError(path, "must be a boolean");
    return v.get<bool>();
}

}  // namespace detail

inline void validate_config(const RunConfig& c) {
    if (c.schedule.t_train < 1) throw ConfigError("schedule.t_train", "must be >= 1");
    if (!(c.schedule.beta_start > 0.0) || !(c.schedule.beta_start < 1.0)) {
        throw ConfigError("schedule.beta_start", "must lie in (0, 1)");
    }
    if (!(c.schedule.beta_end >= c.schedule.beta_start) || !(c.schedule.beta_end < 1.0)) {
        throw ConfigError("schedule.beta_end", "must lie in [beta_start, 1)");
    }
    if (c.world.k < 1) throw ConfigError("world.k", "must be >= 1");
    if (c.world.frames < 1) throw ConfigError("world.frames", "must be >= 1");
    if (c.world.height < 4) throw ConfigError("world.height", "must be >= 4");
    if (c.world.width < 4) throw ConfigError("world.width", "must be >= 4");
    if (c.world.sigma < 0.0) throw ConfigError("world.sigma", "must be >= 0");
    if (c.ddim.t_infer < 1 || c.ddim.t_infer > c.schedule.t_train) {
        throw ConfigError("ddim.t_infer", "must lie in [1, schedule.t_train]");
    }
    if (!(c.ddim.guidance_scale >= 0.0)) {
        throw ConfigError("ddim.guidance_scale", "must be >= 0");
    }
    if (!(c.ddim.fp_tol > 0.0)) throw ConfigError("ddim.fp_tol", "must be > 0");
    if (c.ddim.fp_max_iter < 1) throw ConfigError("ddim.fp_max_iter", "must be >= 1");
    if (!(c.bridge.alpha >= 0.0 && c.bridge.alpha <= 1.0)) {
        throw ConfigError("bridge.alpha", "must lie in [0, 1]");
    }
    if (!(c.bridge.idm_guidance >= 0.0)) throw ConfigError("bridge.idm_guidance", "must be >= 0");
    if (!(c.bridge.vdm_guidance >= 0.0)) throw ConfigError("bridge.vdm_guidance", "must be >= 0");
    strategy_from_name(c.bridge.strategy);
    task_from_name(c.bridge.task);
    for (double a : c.ablation.alphas) {
        if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("ablation.alphas", "must lie in [0, 1]");
    }
    if (c.ablation.strategies.empty()) {
        throw ConfigError("ablation.strategies", "must not be empty");
    }
    for (const auto& s : c.ablation.strategies) strategy_from_name(s);
    if (c.ablation.tasks.empty()) throw ConfigError("ablation.tasks", "must not be empty");
    for (const auto& t : c.ablation.tasks) task_from_name(t);
    if (c.seeds.empty()) throw ConfigError("seeds", "must not be empty");
    if (c.out_dir.empty()) throw ConfigError("out_dir", "must not be empty");
}

inline RunConfig config_from_json(const json& j) {
    RunConfig c;
    detail::require_known_keys(
        j, "config", {"schedule", "world", "ddim", "bridge", "metrics", "ablation", "seeds",
                      "out_dir"});
    if (j.contains("schedule")) {
        const auto& s = j.at("schedule");
        detail::require_known_keys(s, "schedule", {"t_train", "beta_start", "beta_end"});
        c.schedule.t_train = detail::get_int(s, "t_train", "schedule.t_train", c.schedule.t_train);
        c.schedule.beta_start =
            detail::get_real(s, "beta_start", "schedule.beta_start", c.schedule.beta_start);
        c.schedule.beta_end =
            detail::get_real(s, "beta_end", "schedule.beta_end", c.schedule.beta_end);
    }
    if (j.contains("world")) {
        const auto& w = j.at("world");
        detail::require_known_keys(w, "world",
                                   {"k", "frames", "height", "width", "sigma", "seed"});
        c.world.k = detail::get_int(w, "k", "world.k", c.world.k);
        c.world.frames = detail::get_int(w, "frames", "world.frames", c.world.frames);
        c.world.height = detail::get_int(w, "height", "world.height", c.world.height);
        c.world.width = detail::get_int(w, "width", "world.width", c.world.width);
        c.world.sigma = detail::get_real(w, "sigma", "world.sigma", c.world.sigma);
        c.world.seed = detail::get_u64(w, "seed", "world.seed", c.world.seed);
    }
    if (j.contains("ddim")) {
        const auto& d = j.at("ddim");
        detail::require_known_keys(
            d, "ddim", {"t_infer", "guidance_scale", "invert_mode", "fp_tol", "fp_max_iter"});
        c.ddim.t_infer = detail::get_int(d, "t_infer", "ddim.t_infer", c.ddim.t_infer);
        c.ddim.guidance_scale =
            detail::get_real(d, "guidance_scale", "ddim.guidance_scale", c.ddim.guidance_scale);
        c.ddim.invert_mode = invert_mode_from_name(detail::get_string(
            d, "invert_mode", "ddim.invert_mode", invert_mode_name(c.ddim.invert_mode)));
        c.ddim.fp_tol = detail::get_real(d, "fp_tol", "ddim.fp_tol", c.ddim.fp_tol);
        c.ddim.fp_max_iter =
            detail::get_int(d, "fp_max_iter", "ddim.fp_max_iter", c.ddim.fp_max_iter);
    }
    if (j.contains("bridge")) {
        const auto& b = j.at("bridge");
        detail::require_known_keys(b, "bridge",
                                   {"alpha", "strategy", "task", "idm_guidance", "vdm_guidance",
                                    "seed", "alternate_idm_first"});
        c.bridge.alpha = detail::get_real(b, "alpha", "bridge.alpha", c.bridge.alpha);
        c.bridge.strategy =
            detail::get_string(b, "strategy", "bridge.strategy", c.bridge.strategy);
        c.bridge.task = detail::get_string(b, "task", "bridge.task", c.bridge.task);
        c.bridge.idm_guidance =
            detail::get_real(b, "idm_guidance", "bridge.idm_guidance", c.bridge.idm_guidance);
        c.bridge.vdm_guidance =
            detail::get_real(b, "vdm_guidance", "bridge.vdm_guidance", c.bridge.vdm_guidance);
        c.bridge.seed = detail::get_u64(b, "seed", "bridge.seed", c.bridge.seed);
        c.bridge.alternate_idm_first = detail::get_bool(
            b, "alternate_idm_first", "bridge.alternate_idm_first", c.bridge.alternate_idm_first);
    }
    if (j.contains("metrics")) {
        detail::require_known_keys(j.at("metrics"), "metrics", {});
    }
    if (j.contains("ablation")) {
        const auto& a = j.at("ablation");
        detail::require_known_keys(a, "ablation", {"alphas", "strategies", "tasks"});
        if (a.contains("alphas")) {
            if (!a.at("alphas").is_array()) throw ConfigError("ablation.alphas", "must be a list");
            c.ablation.alphas.clear();
            for (const auto& v : a.at("alphas")) {
                if (!v.is_number()) throw ConfigError("ablation.alphas", "must hold numbers");
                c.ablation.alphas.push_back(v.get<double>());
            }
        }
        if (a.contains("strategies")) {
            if (!a.at("strategies").is_array()) {
                throw ConfigError("ablation.strategies", "must be a list");
            }
            c.ablation.strategies.clear();
            for (const auto& v : a.at("strategies")) {
                if (!v.is_string()) throw ConfigError("ablation.strategies", "must hold names");
                c.ablation.strategies.push_back(v.get<std::string>());
            }
        }
        if (a.contains("tasks")) {
            if (!a.at("tasks").is_array()) throw ConfigError("ablation.tasks", "must be a list");
            c.ablation.tasks.clear();
            for (const auto& v : a.at("tasks")) {
                if (!v.is_string()) throw ConfigError("ablation.tasks", "must hold names");
                c.ablation.tasks.push_back(v.get<std::string>());
            }
        }
    }
    if (j.contains("seeds")) {
        if (!j.at("seeds").is_array()) throw ConfigError("seeds", "must be a list");
        c.seeds.clear();
        for (const auto& v : j.at("seeds")) {
            if (!v.is_number_integer()) throw ConfigError("seeds", "must hold integers");
            c.seeds.push_back(v.get<uint64_t>());
        }
    }
    c.out_dir = detail::get_string(j, "out_dir", "out_dir", c.out_dir);
    validate_config(c);
    return c;
}

inline RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open config file");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError("config", std::string("JSON parse failure: ") + e.what());
    }
    return config_from_json(j);
}

inline json config_to_json(const RunConfig& c) {
    json j;
    j["schedule"] = {{"t_train", c.schedule.t_train},
                     {"beta_start", c.schedule.beta_start},
                     {"beta_end", c.schedule.beta_end}};
    j["world"] = {{"k", c.world.k},         {"frames", c.world.frames},
                  {"height", c.world.height}, {"width", c.world.width},
                  {"sigma", c.world.sigma},   {"seed", c.world.seed}};
    j["ddim"] = {{"t_infer", c.ddim.t_infer},
                 {"guidance_scale", c.ddim.guidance_scale},
                 {"invert_mode", invert_mode_name(c.ddim.invert_mode)},
                 {"fp_tol", c.ddim.fp_tol},
                 {"fp_max_iter", c.ddim.fp_max_iter}};
    j["bridge"] = {{"alpha", c.bridge.alpha},
                   {"strategy", c.bridge.strategy},
                   {"task", c.bridge.task},
                   {"idm_guidance", c.bridge.idm_guidance},
                   {"vdm_guidance", c.bridge.vdm_guidance},
                   {"seed", c.bridge.seed},
                   {"alternate_idm_first", c.bridge.alternate_idm_first}};
    j["ablation"] = {{"alphas", c.ablation.alphas},
                     {"strategies", c.ablation.strategies},
                     {"tasks", c.ablation.tasks}};
    j["seeds"] = c.seeds;
    j["out_dir"] = c.out_dir;
    return j;
}

}  // namespace latentbridge
