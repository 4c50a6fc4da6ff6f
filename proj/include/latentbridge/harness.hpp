#pragma once

// Benchmark harness: builds the world and the per-task work items, runs the
// (task x strategy x alpha x seed) matrix with a worker pool, computes
// metrics, and persists report.json / report.csv plus per-cell clip dumps.
//
// Determinism contract: every random draw is addressed by
// (seed, cell, frame, stage), where the cell id is the task's fixed index.
// Strategies and alphas therefore share a task's start noise, data draws and
// conditions, so comparisons across strategies are paired, and the worker
// count (LATENT_BRIDGE_THREADS) cannot change any record.

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include "latentbridge/bridge.hpp"
#include "latentbridge/config.hpp"
#include "latentbridge/io.hpp"
#include "latentbridge/metrics.hpp"
#include "latentbridge/version.hpp"

namespace latentbridge {

struct RunReport;
inline void write_report(const RunReport& report, const std::string& out_dir);

// Task ids double as RNG cell ids; stable across configs.
inline uint32_t task_cell_id(TaskKind kind) { return uint32_t(kind); }

inline std::vector<double> default_task_alphas(TaskKind kind) {
    switch (kind) {
        case TaskKind::generation: return {0.25};
        case TaskKind::control: return {1.0};
        case TaskKind::edit: return {1.0, 0.25};
        case TaskKind::inpaint: return {0.1};
        case TaskKind::outpaint: return {0.1};
    }
    throw ConfigError("task", "unknown task value");
}

namespace detail {

// Per-coordinate jitter of control targets around the tracked component's
// means. Large enough that a per-frame follower of the targets is measurably
// less temporally consistent than a smoothed clip, yet small against blob
// amplitude, so targets still identify their component unambiguously.
constexpr double kControlJitter = 0.3;

// Clip drawn from a specific component (sample_data picks the component by
// weight; task builders need it pinned).
inline LatentClip sample_component_clip(const MixtureVideoWorld& world, int k, uint64_t seed,
                                        uint32_t cell) {
    const auto& comp = world.components[size_t(k)];
    LatentClip clip = LatentClip::zeros(world.frames, world.height, world.width);
    const int d = world.frame_dim();
    for (int f = 0; f < world.frames; ++f) {
        SubstreamRng rng(seed, cell, uint32_t(f), RngStage::data_noise);
        auto dst = clip.frame(f);
        const double* mu = comp.frame_means.data() + size_t(f) * size_t(d);
        for (int c = 0; c < d; ++c) dst[c] = mu[c] + comp.sigma * rng.normal();
    }
    return clip;
}

inline std::vector<uint8_t> left_columns_mask(const MixtureVideoWorld& world, int cols,
                                              bool known_inside) {
    std::vector<uint8_t> mask(size_t(world.clip_dim()), 0);
    size_t idx = 0;
    for (int f = 0; f < world.frames; ++f) {
        for (int y = 0; y < world.height; ++y) {
            for (int x = 0; x < world.width; ++x, ++idx) {
                const bool inside = x < cols;
                mask[idx] = uint8_t((inside == known_inside) ? 1 : 0);
            }
        }
    }
    return mask;
}

}  // namespace detail

// Builds the concrete work item for one (task kind, seed) pair. All content
// randomness (component picks, control jitter, edit source) comes from the
// task_build / data_noise stages of the task's cell, shared by every strategy
// and alpha.
inline Task build_benchmark_task(TaskKind kind, const MixtureVideoWorld& world, uint64_t seed) {
    const uint32_t cell = task_cell_id(kind);
    SubstreamRng pick(seed, cell, 0, RngStage::task_build);
    const int k_count = int(world.components.size());
    const int k_star = std::min(k_count - 1, int(pick.uniform() * double(k_count)));

    Task task;
    task.kind = kind;
    switch (kind) {
        case TaskKind::generation: {
            task.idm_cond = Condition::null();
            task.vdm_cond = Condition::null();
            break;
        }
        case TaskKind::control: {
            LatentClip targets = LatentClip::zeros(world.frames, world.height, world.width);
            const int d = world.frame_dim();
            const auto& mu = world.components[size_t(k_star)].frame_means;
            for (int f = 0; f < world.frames; ++f) {
                SubstreamRng jit(seed, cell, uint32_t(f), RngStage::task_build, 1);
                auto dst = targets.frame(f);
                for (int c = 0; c < d; ++c) {
                    dst[c] = mu[size_t(f) * size_t(d) + size_t(c)] +
                             detail::kControlJitter * jit.normal();
                }
            }
            task.idm_cond = Condition::control(targets);
            task.vdm_cond = Condition::component(k_star);
            break;
        }
        case TaskKind::edit: {
            const int k_target = (k_star + 1) % k_count;
            LatentClip source = detail::sample_component_clip(world, k_star, seed, cell);
            task.idm_cond = Condition::edit(source, k_target);
            task.vdm_cond = Condition::component(k_target);
            task.source = std::move(source);
            break;
        }
        case TaskKind::inpaint:
        case TaskKind::outpaint: {
            LatentClip source = detail::sample_component_clip(world, k_star, seed, cell);
            // Inpainting pins the left quarter of every frame; outpainting the
            // complement (the borders-erased analog).
            const int cols = std::max(1, world.width / 4);
            task.mask_known =
                detail::left_columns_mask(world, cols, kind == TaskKind::inpaint);
            task.idm_cond = Condition::null();
            task.vdm_cond = Condition::null();
            task.source = std::move(source);
            break;
        }
    }
    return task;
}

struct CellRecord {
    std::string task;
    std::string strategy;
    double alpha = 0.0;
    uint64_t seed = 0;
    ClipMetrics metrics;
    double wall_time_ms = 0.0;
    std::string error;  // empty on success

    bool failed() const { return !error.empty(); }
};

struct AggregateRow {
    std::string task;
    std::string strategy;
    double alpha = 0.0;
    int n = 0;  // non-failed records aggregated
    ClipMetrics mean;
    ClipMetrics stddev;
};

struct RunReport {
    std::string tool_version;
    uint64_t global_seed = 0;
    RunConfig config;
    std::vector<CellRecord> records;
    std::vector<AggregateRow> aggregates;
};

namespace detail {

inline int worker_count(size_t jobs) {
    unsigned n = std::thread::hardware_concurrency();
    if (n == 0) n = 1;
    if (const char* env = std::getenv("LATENT_BRIDGE_THREADS")) {
        char* end = nullptr;
        const long v = std::strtol(env, &end, 10);
        if (end != env && v >= 1) n = unsigned(v);
    }
    return int(std::min<size_t>(n, jobs == 0 ? 1 : jobs));
}

// Index-parallel loop; each index is processed exactly once, results must be
// written to per-index slots so scheduling cannot reorder anything visible.
template <typename Fn>
inline void parallel_for(size_t count, Fn&& fn) {
    const int workers = worker_count(count);
    if (workers <= 1) {
        for (size_t i = 0; i < count; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(size_t(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&]() {
            for (;;) {
                const size_t i = next.fetch_add(1);
                if (i >= count) return;
                fn(i);
            }
        });
    }
    for (auto& t : pool) t.join();
}

struct CellSpec {
    TaskKind task = TaskKind::generation;
    Strategy strategy = Strategy::sequential;
    double alpha = 0.0;
    uint64_t seed = 0;
};

inline std::vector<CellSpec> enumerate_cells(const RunConfig& cfg) {
    std::vector<CellSpec> cells;
    for (const auto& task_name : cfg.ablation.tasks) {
        const TaskKind kind = task_from_name(task_name);
        const std::vector<double> alphas =
            cfg.ablation.alphas.empty() ? default_task_alphas(kind) : cfg.ablation.alphas;
        for (const auto& strat_name : cfg.ablation.strategies) {
            const Strategy strat = strategy_from_name(strat_name);
            for (double alpha : alphas) {
                for (uint64_t seed : cfg.seeds) {
                    cells.push_back({kind, strat, alpha, seed});
                }
            }
        }
    }
    return cells;
}

inline std::string format_alpha(double alpha) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", alpha);
    return buf;
}

inline std::string cell_dir_name(const CellSpec& c) {
    return task_name(c.task) + "_" + strategy_name(c.strategy) + "_a" + format_alpha(c.alpha) +
           "_s" + std::to_string(c.seed);
}

}  // namespace detail

// Runs one matrix cell (no artifact io). Throws on cell failure.
inline ClipMetrics run_cell(const detail::CellSpec& spec, const MixtureVideoWorld& world,
                            const Denoiser& idm, const Denoiser& vdm, const RunConfig& cfg,
                            const StepGrid& grid, const NoiseSchedule& schedule,
                            LatentClip* final_out = nullptr) {
    const Task task = build_benchmark_task(spec.task, world, spec.seed);

    BridgeConfig bc;
    bc.alpha = spec.alpha;
    bc.strategy = spec.strategy;
    bc.invert_mode = cfg.ddim.invert_mode;
    bc.fp_tol = cfg.ddim.fp_tol;
    bc.fp_max_iter = cfg.ddim.fp_max_iter;
    bc.idm_guidance = cfg.bridge.idm_guidance;
    bc.vdm_guidance = cfg.bridge.vdm_guidance;
    bc.alternate_idm_first = cfg.bridge.alternate_idm_first;
    bc.seed = spec.seed;
    bc.cell = task_cell_id(spec.task);

    const PipelineTrace trace = run_strategy(idm, vdm, world, task, bc, grid, schedule);

    ClipMetrics m;
    m.frame_consistency = frame_consistency(trace.final);
    if (task.mask_known.empty()) {
        m.switch_rate = switch_rate(world, trace.final);
    } else {
        // Masked tasks score flicker on the free region only; the known
        // region is pinned to the source by construction.
        std::vector<uint8_t> free_region(task.mask_known.size());
        for (size_t i = 0; i < free_region.size(); ++i) {
            free_region[i] = uint8_t(task.mask_known[i] ? 0 : 1);
        }
        m.switch_rate = switch_rate(world, trace.final, free_region);
    }
    if (task.idm_cond.kind == Condition::Kind::control) {
        m.control_match_error = control_match_error(trace.final, task.idm_cond);
    }
    // Latent-distribution diagnostics are taken on the mixed latents when the
    // strategy produces them, else on the final clip.
    const LatentClip& diag = trace.mixed.has_value() ? *trace.mixed : trace.final;
    m.latent_corr = latent_corr(diag, &m.latent_corr_degenerate);
    m.gaussianity = gaussianity_stats(diag);

    if (final_out) *final_out = trace.final;
    return m;
}

namespace detail {

inline void accumulate_aggregates(RunReport& report) {
    report.aggregates.clear();
    // Records are already ordered by cell enumeration; group consecutive
    // records sharing (task, strategy, alpha).
    size_t i = 0;
    while (i < report.records.size()) {
        size_t j = i;
        while (j < report.records.size() && report.records[j].task == report.records[i].task &&
               report.records[j].strategy == report.records[i].strategy &&
               report.records[j].alpha == report.records[i].alpha) {
            ++j;
        }
        AggregateRow row;
        row.task = report.records[i].task;
        row.strategy = report.records[i].strategy;
        row.alpha = report.records[i].alpha;

        auto fields = [](const ClipMetrics& m) {
            return std::array<double, 7>{m.frame_consistency,     m.switch_rate,
                                         m.control_match_error,   m.latent_corr,
                                         m.gaussianity.mean_abs,  m.gaussianity.var_dev,
                                         m.gaussianity.cov_offdiag};
        };
        std::array<double, 7> sum{}, sumsq{};
        int n = 0;
        for (size_t r = i; r < j; ++r) {
            if (report.records[r].failed()) continue;
            const auto v = fields(report.records[r].metrics);
            for (size_t f = 0; f < v.size(); ++f) {
                sum[f] += v[f];
                sumsq[f] += v[f] * v[f];
            }
            ++n;
        }
        row.n = n;
        if (n > 0) {
            std::array<double, 7> mean{}, sd{};
            for (size_t f = 0; f < sum.size(); ++f) {
                mean[f] = sum[f] / n;
                const double var = n > 1 ? std::max(0.0, (sumsq[f] - n * mean[f] * mean[f]) /
                                                             double(n - 1))
                                         : 0.0;
                sd[f] = std::sqrt(var);
            }
            auto unpack = [](const std::array<double, 7>& v, ClipMetrics& m) {
                m.frame_consistency = v[0];
                m.switch_rate = v[1];
                m.control_match_error = v[2];
                m.latent_corr = v[3];
                m.gaussianity.mean_abs = v[4];
                m.gaussianity.var_dev = v[5];
                m.gaussianity.cov_offdiag = v[6];
            };
            unpack(mean, row.mean);
            unpack(sd, row.stddev);
        }
        report.aggregates.push_back(row);
        i = j;
    }
}

}  // namespace detail

// Executes the full benchmark matrix. When `out_dir_override` is non-empty it
// replaces config.out_dir; pass `write_artifacts = false` for in-memory runs
// (tests). Cell failures are recorded, not thrown.
inline RunReport run_benchmark(const RunConfig& cfg, bool write_artifacts = true,
                               const std::string& out_dir_override = {}) {
    validate_config(cfg);
    const std::string out_dir = out_dir_override.empty() ? cfg.out_dir : out_dir_override;

    const NoiseSchedule schedule =
        build_linear_schedule(cfg.schedule.t_train, cfg.schedule.beta_start, cfg.schedule.beta_end);
    const StepGrid grid = build_step_grid(schedule, cfg.ddim.t_infer);
    const MovingBlobWorld blob = make_moving_blob_world(
        cfg.world.k, cfg.world.frames, cfg.world.height, cfg.world.width, cfg.world.sigma,
        cfg.world.seed);
    const MixtureVideoWorld& world = blob.world;
    const Denoiser idm = frame_denoiser(world, schedule);
    const Denoiser vdm = clip_denoiser(world, schedule);

    const auto cells = detail::enumerate_cells(cfg);

    RunReport report;
    report.tool_version = LATENTBRIDGE_VERSION;
    report.global_seed = cfg.world.seed;
    report.config = cfg;
    report.records.resize(cells.size());

    if (write_artifacts) {
        std::filesystem::create_directories(out_dir + "/cells");
    }

    detail::parallel_for(cells.size(), [&](size_t i) {
        const auto& spec = cells[i];
        CellRecord rec;
        rec.task = task_name(spec.task);
        rec.strategy = strategy_name(spec.strategy);
        rec.alpha = spec.alpha;
        rec.seed = spec.seed;
        const auto start = std::chrono::steady_clock::now();
        try {
            LatentClip final_clip;
            rec.metrics = run_cell(spec, world, idm, vdm, cfg, grid, schedule, &final_clip);
            if (write_artifacts) {
                const std::string dir = out_dir + "/cells/" + detail::cell_dir_name(spec);
                std::filesystem::create_directories(dir);
                write_clip_artifacts(dir, final_clip);
            }
        } catch (const std::exception& e) {
            rec.error = e.what();
        }
        rec.wall_time_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                .count();
        report.records[i] = std::move(rec);
    });

    detail::accumulate_aggregates(report);

    if (write_artifacts) {
        write_report(report, out_dir);
    }
    return report;
}

// ---- report serialization ----

inline json metrics_to_json(const ClipMetrics& m) {
    return json{{"frame_consistency", m.frame_consistency},
                {"switch_rate", m.switch_rate},
                {"control_match_error", m.control_match_error},
                {"latent_corr", m.latent_corr},
                {"gaussianity",
                 {{"mean_abs", m.gaussianity.mean_abs},
                  {"var_dev", m.gaussianity.var_dev},
                  {"cov_offdiag", m.gaussianity.cov_offdiag}}},
                {"latent_corr_degenerate", m.latent_corr_degenerate}};
}

inline ClipMetrics metrics_from_json(const json& j) {
    ClipMetrics m;
    m.frame_consistency = j.at("frame_consistency").get<double>();
    m.switch_rate = j.at("switch_rate").get<double>();
    m.control_match_error = j.at("control_match_error").get<double>();
    m.latent_corr = j.at("latent_corr").get<double>();
    m.gaussianity.mean_abs = j.at("gaussianity").at("mean_abs").get<double>();
    m.gaussianity.var_dev = j.at("gaussianity").at("var_dev").get<double>();
    m.gaussianity.cov_offdiag = j.at("gaussianity").at("cov_offdiag").get<double>();
    m.latent_corr_degenerate = j.at("latent_corr_degenerate").get<bool>();
    return m;
}

inline json report_to_json(const RunReport& report) {
    json j;
    j["tool_version"] = report.tool_version;
    j["global_seed"] = report.global_seed;
    j["config"] = config_to_json(report.config);
    json records = json::array();
    for (const auto& r : report.records) {
        json rec{{"task", r.task},
                 {"strategy", r.strategy},
                 {"alpha", r.alpha},
                 {"seed", r.seed},
                 {"metrics", metrics_to_json(r.metrics)},
                 {"wall_time_ms", r.wall_time_ms},
                 {"error", r.error}};
        records.push_back(std::move(rec));
    }
    j["records"] = std::move(records);
    json aggs = json::array();
    for (const auto& a : report.aggregates) {
        aggs.push_back(json{{"task", a.task},
                            {"strategy", a.strategy},
                            {"alpha", a.alpha},
                            {"n", a.n},
                            {"mean", metrics_to_json(a.mean)},
                            {"stddev", metrics_to_json(a.stddev)}});
    }
    j["aggregates"] = std::move(aggs);
    return j;
}

inline RunReport report_from_json(const json& j) {
    RunReport report;
    report.tool_version = j.at("tool_version").get<std::string>();
    report.global_seed = j.at("global_seed").get<uint64_t>();
    report.config = config_from_json(j.at("config"));
    for (const auto& rj : j.at("records")) {
        CellRecord r;
        r.task = rj.at("task").get<std::string>();
        r.strategy = rj.at("strategy").get<std::string>();
        r.alpha = rj.at("alpha").get<double>();
        r.seed = rj.at("seed").get<uint64_t>();
        r.metrics = metrics_from_json(rj.at("metrics"));
        r.wall_time_ms = rj.at("wall_time_ms").get<double>();
        r.error = rj.at("error").get<std::string>();
        report.records.push_back(std::move(r));
    }
    for (const auto& aj : j.at("aggregates")) {
        AggregateRow a;
        a.task = aj.at("task").get<std::string>();
        a.strategy = aj.at("strategy").get<std::string>();
        a.alpha = aj.at("alpha").get<double>();
        a.n = aj.at("n").get<int>();
        a.mean = metrics_from_json(aj.at("mean"));
        a.stddev = metrics_from_json(aj.at("stddev"));
        report.aggregates.push_back(std::move(a));
    }
    return report;
}

// Verifies that stored aggregates are recomputable from the records.
inline void verify_report_aggregates(const RunReport& report, const std::string& path) {
    RunReport copy = report;
    detail::accumulate_aggregates(copy);
    if (copy.aggregates.size() != report.aggregates.size()) {
        throw IoError(path, "aggregate rows do not match the records");
    }
    auto close = [](double a, double b) {
        return std::fabs(a - b) <= 1e-9 * std::max({1.0, std::fabs(a), std::fabs(b)});
    };
    for (size_t i = 0; i < copy.aggregates.size(); ++i) {
        const auto& x = report.aggregates[i];
        const auto& y = copy.aggregates[i];
        const bool ok =
            x.task == y.task && x.strategy == y.strategy && x.alpha == y.alpha && x.n == y.n &&
            close(x.mean.frame_consistency, y.mean.frame_consistency) &&
            close(x.mean.switch_rate, y.mean.switch_rate) &&
            close(x.mean.control_match_error, y.mean.control_match_error) &&
            close(x.mean.latent_corr, y.mean.latent_corr) &&
            close(x.mean.gaussianity.mean_abs, y.mean.gaussianity.mean_abs) &&
            close(x.mean.gaussianity.var_dev, y.mean.gaussianity.var_dev) &&
            close(x.mean.gaussianity.cov_offdiag, y.mean.gaussianity.cov_offdiag) &&
            close(x.stddev.frame_consistency, y.stddev.frame_consistency) &&
            close(x.stddev.switch_rate, y.stddev.switch_rate) &&
            close(x.stddev.control_match_error, y.stddev.control_match_error) &&
            close(x.stddev.latent_corr, y.stddev.latent_corr) &&
            close(x.stddev.gaussianity.mean_abs, y.stddev.gaussianity.mean_abs) &&
            close(x.stddev.gaussianity.var_dev, y.stddev.gaussianity.var_dev) &&
            close(x.stddev.gaussianity.cov_offdiag, y.stddev.gaussianity.cov_offdiag);
        if (!ok) throw IoError(path, "stored aggregates are not recomputable from the records");
    }
}

inline void write_report(const RunReport& report, const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    const std::string json_path = out_dir + "/report.json";
    {
        std::ofstream out(json_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(json_path, "cannot open for writing");
        out << report_to_json(report).dump(2) << "\n";
        if (!out) throw IoError(json_path, "write failed");
    }
    const std::string csv_path = out_dir + "/report.csv";
    {
        std::ofstream out(csv_path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError(csv_path, "cannot open for writing");
        out << "task,strategy,alpha,n,frame_consistency_mean,frame_consistency_std,"
               "switch_rate_mean,switch_rate_std,control_match_error_mean,"
               "control_match_error_std,latent_corr_mean,latent_corr_std,"
               "gaussianity_mean_abs_mean,gaussianity_mean_abs_std,"
               "gaussianity_var_dev_mean,gaussianity_var_dev_std,"
               "gaussianity_cov_offdiag_mean,gaussianity_cov_offdiag_std\n";
        for (const auto& a : report.aggregates) {
            char line[768];
            std::snprintf(line, sizeof(line),
                          "%s,%s,%.17g,%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,"
                          "%.17g,%.17g,%.17g,%.17g,%.17g,%.17g\n",
                          a.task.c_str(), a.strategy.c_str(), a.alpha, a.n,
                          a.mean.frame_consistency, a.stddev.frame_consistency,
                          a.mean.switch_rate, a.stddev.switch_rate, a.mean.control_match_error,
                          a.stddev.control_match_error, a.mean.latent_corr,
                          a.stddev.latent_corr, a.mean.gaussianity.mean_abs,
                          a.stddev.gaussianity.mean_abs, a.mean.gaussianity.var_dev,
                          a.stddev.gaussianity.var_dev, a.mean.gaussianity.cov_offdiag,
                          a.stddev.gaussianity.cov_offdiag);
            out << line;
        }
        if (!out) throw IoError(csv_path, "write failed");
    }
}

inline RunReport load_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError(path, "cannot open report");
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw IoError(path, std::string("JSON parse failure: ") + e.what());
    }
    RunReport report = report_from_json(j);
    verify_report_aggregates(report, path);
    return report;
}

}  // namespace latentbridge
