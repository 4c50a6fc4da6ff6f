// Command-line front end for the latent-bridge pipeline.
//
// Subcommands:
//   generate  run one strategy on one task and dump the trace clips
//   invert    inversion diagnostics (round-trip errors) on a clip file
//   bridge    full Sequential pipeline run (alias for generate -s Sequential)
//   ablate    the benchmark matrix -> report.json / report.csv / cell dumps
//   metrics   recompute metrics for a dumped clip file
//
// Exit codes: 0 success, 1 cell failures present, 2 configuration/usage error.

#include <cstdio>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>

#include <CLI11.hpp>

#include "latentbridge/latentbridge.hpp"

namespace lb = latentbridge;

namespace {

struct CommonFlags {
    std::string config_path;
    std::string out_dir;
    std::string input;
    long long seed = 0;
    double alpha = 0.0;
    std::string strategy;
    std::string task;
    int steps = 0;
    CLI::App* cmd = nullptr;

    bool has(const std::string& name) const { return cmd && cmd->count(name) > 0; }
};

void add_common(CLI::App* cmd, CommonFlags& f, bool with_input) {
    f.cmd = cmd;
    cmd->add_option("--config", f.config_path, "JSON config file (flags override its values)");
    cmd->add_option("--seed", f.seed, "run seed");
    cmd->add_option("--alpha", f.alpha, "mixing ratio in [0,1]");
    cmd->add_option("--strategy", f.strategy,
                    "IdmOnly | VdmOnly | Alternate | Fuse | Sequential");
    cmd->add_option("--task", f.task, "generation | control | edit | inpaint | outpaint");
    cmd->add_option("--steps", f.steps, "inference step count");
    cmd->add_option("--out-dir", f.out_dir, "artifact directory");
    if (with_input) cmd->add_option("--input", f.input, "input clip file (raw format)");
}

lb::RunConfig make_config(const CommonFlags& f) {
    lb::RunConfig cfg;
    if (!f.config_path.empty()) cfg = lb::load_config(f.config_path);
    if (f.has("--seed")) {
        if (f.seed < 0) throw lb::ConfigError("bridge.seed", "must be non-negative");
        cfg.bridge.seed = uint64_t(f.seed);
    }
    if (f.has("--alpha")) cfg.bridge.alpha = f.alpha;
    if (f.has("--strategy")) cfg.bridge.strategy = f.strategy;
    if (f.has("--task")) cfg.bridge.task = f.task;
    if (f.has("--steps")) cfg.ddim.t_infer = f.steps;
    if (f.has("--out-dir")) cfg.out_dir = f.out_dir;
    lb::validate_config(cfg);
    return cfg;
}

struct Built {
    lb::NoiseSchedule schedule;
    lb::StepGrid grid;
    lb::MovingBlobWorld blob;
    lb::Denoiser idm;
    lb::Denoiser vdm;
};

Built build_runtime(const lb::RunConfig& cfg) {
    Built b;
    b.schedule = lb::build_linear_schedule(cfg.schedule.t_train, cfg.schedule.beta_start,
                                           cfg.schedule.beta_end);
    b.grid = lb::build_step_grid(b.schedule, cfg.ddim.t_infer);
    b.blob = lb::make_moving_blob_world(cfg.world.k, cfg.world.frames, cfg.world.height,
                                        cfg.world.width, cfg.world.sigma, cfg.world.seed);
    b.idm = lb::frame_denoiser(b.blob.world, b.schedule);
    b.vdm = lb::clip_denoiser(b.blob.world, b.schedule);
    return b;
}

lb::BridgeConfig bridge_config(const lb::RunConfig& cfg) {
    lb::BridgeConfig bc;
    bc.alpha = cfg.bridge.alpha;
    bc.strategy = lb::strategy_from_name(cfg.bridge.strategy);
    bc.invert_mode = cfg.ddim.invert_mode;
    bc.fp_tol = cfg.ddim.fp_tol;
    bc.fp_max_iter = cfg.ddim.fp_max_iter;
    bc.idm_guidance = cfg.bridge.idm_guidance;
    bc.vdm_guidance = cfg.bridge.vdm_guidance;
    bc.alternate_idm_first = cfg.bridge.alternate_idm_first;
    bc.seed = cfg.bridge.seed;
    bc.cell = lb::task_cell_id(lb::task_from_name(cfg.bridge.task));
    return bc;
}

int cmd_generate(const CommonFlags& f, const char* forced_strategy = nullptr) {
    lb::RunConfig cfg = make_config(f);
    if (forced_strategy) cfg.bridge.strategy = forced_strategy;
    const Built b = build_runtime(cfg);
    const lb::TaskKind kind = lb::task_from_name(cfg.bridge.task);
    const lb::Task task = lb::build_benchmark_task(kind, b.blob.world, cfg.bridge.seed);
    const lb::BridgeConfig bc = bridge_config(cfg);
    const lb::PipelineTrace trace =
        lb::run_strategy(b.idm, b.vdm, b.blob.world, task, bc, b.grid, b.schedule);

    std::filesystem::create_directories(cfg.out_dir);
    lb::write_clip_artifacts(cfg.out_dir, trace.final);
    auto dump_stage = [&](const char* name, const std::optional<lb::LatentClip>& clip) {
        if (clip.has_value()) lb::write_clip_raw(cfg.out_dir + "/" + name + ".raw", *clip);
    };
    dump_stage("idm_output", trace.idm_output);
    dump_stage("img_inverted", trace.img_inverted);
    dump_stage("vid_inverted", trace.vid_inverted);
    dump_stage("mixed", trace.mixed);

    std::printf("task=%s strategy=%s alpha=%g seed=%llu -> %s\n", lb::task_name(kind).c_str(),
                cfg.bridge.strategy.c_str(), cfg.bridge.alpha,
                (unsigned long long)cfg.bridge.seed, cfg.out_dir.c_str());
    std::printf("frame_consistency=%.6f switch_rate=%.6f\n",
                lb::frame_consistency(trace.final), lb::switch_rate(b.blob.world, trace.final));
    return 0;
}

int cmd_invert(const CommonFlags& f) {
    const lb::RunConfig cfg = make_config(f);
    if (f.input.empty()) {
        throw lb::ConfigError("input", "invert needs --input <clip.raw>");
    }
    const Built b = build_runtime(cfg);
    const lb::LatentClip clip = lb::read_clip_raw(f.input);
    if (clip.frames != b.blob.world.frames || clip.frame_dim() != b.blob.world.frame_dim()) {
        throw lb::ConfigError("input", "clip shape does not match the configured world");
    }
    const lb::GuidanceSpec g{1.0, lb::Condition::null(), lb::Condition::null()};
    lb::InvertOptions opt;
    opt.mode = cfg.ddim.invert_mode;
    opt.fp_tol = cfg.ddim.fp_tol;
    opt.fp_max_iter = cfg.ddim.fp_max_iter;

    for (const auto& [label, den] : {std::pair<const char*, const lb::Denoiser*>{"frame", &b.idm},
                                     {"clip", &b.vdm}}) {
        const lb::LatentClip z = lb::ddim_invert(*den, clip, g, b.grid, b.schedule, opt);
        const lb::LatentClip back = lb::ddim_sample(*den, z, g, b.grid, b.schedule);
        const auto gs = lb::gaussianity_stats(z);
        std::printf("%s scope: round_trip_max_err=%.3e latent mean_abs=%.4f var_dev=%.4f "
                    "cov_offdiag=%.4f\n",
                    label, lb::max_abs_diff(back, clip), gs.mean_abs, gs.var_dev,
                    gs.cov_offdiag);
    }
    if (!f.out_dir.empty()) {
        std::filesystem::create_directories(cfg.out_dir);
        const lb::LatentClip z = lb::ddim_invert(b.idm, clip, g, b.grid, b.schedule, opt);
        lb::write_clip_raw(cfg.out_dir + "/inverted_frame_scope.raw", z);
    }
    return 0;
}

int cmd_ablate(const CommonFlags& f) {
    const lb::RunConfig cfg = make_config(f);
    const lb::RunReport report = lb::run_benchmark(cfg);
    int failures = 0;
    for (const auto& r : report.records) {
        if (r.failed()) {
            ++failures;
            std::fprintf(stderr, "cell failure: %s/%s alpha=%g seed=%llu: %s\n", r.task.c_str(),
                         r.strategy.c_str(), r.alpha, (unsigned long long)r.seed,
                         r.error.c_str());
        }
    }
    std::printf("%zu cells (%d failed) -> %s/report.json\n", report.records.size(), failures,
                cfg.out_dir.c_str());
    return failures > 0 ? 1 : 0;
}

int cmd_metrics(const CommonFlags& f) {
    const lb::RunConfig cfg = make_config(f);
    if (f.input.empty()) {
        throw lb::ConfigError("input", "metrics needs --input <clip.raw>");
    }
    const Built b = build_runtime(cfg);
    const lb::LatentClip clip = lb::read_clip_raw(f.input);
    std::printf("frame_consistency=%.6f\n", lb::frame_consistency(clip));
    if (clip.frames == b.blob.world.frames && clip.frame_dim() == b.blob.world.frame_dim()) {
        std::printf("switch_rate=%.6f\n", lb::switch_rate(b.blob.world, clip));
    }
    bool degenerate = false;
    const double corr = lb::latent_corr(clip, &degenerate);
    const auto gs = lb::gaussianity_stats(clip);
    std::printf("latent_corr=%.6f%s\n", corr, degenerate ? " (degenerate pairs)" : "");
    std::printf("gaussianity mean_abs=%.6f var_dev=%.6f cov_offdiag=%.6f\n", gs.mean_abs,
                gs.var_dev, gs.cov_offdiag);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Training-free bridge between frame-scope and clip-scope diffusion denoisers "
                 "on synthetic mixture worlds"};
    app.require_subcommand(1);

    CommonFlags fg, fi, fb, fa, fm;
    auto* generate = app.add_subcommand("generate", "run one strategy and dump trace clips");
    add_common(generate, fg, false);
    auto* invert = app.add_subcommand("invert", "inversion diagnostics on a clip file");
    add_common(invert, fi, true);
    auto* bridge = app.add_subcommand("bridge", "full Sequential pipeline run");
    add_common(bridge, fb, false);
    auto* ablate = app.add_subcommand("ablate", "run the benchmark matrix");
    add_common(ablate, fa, false);
    auto* metrics = app.add_subcommand("metrics", "recompute metrics for a clip file");
    add_common(metrics, fm, true);

    try {
        app.parse(argc, argv);
        if (generate->parsed()) return cmd_generate(fg);
        if (invert->parsed()) return cmd_invert(fi);
        if (bridge->parsed()) return cmd_generate(fb, "Sequential");
        if (ablate->parsed()) return cmd_ablate(fa);
        if (metrics->parsed()) return cmd_metrics(fm);
        return 2;
    } catch (const CLI::ParseError& e) {
        if (e.get_exit_code() == 0) return app.exit(e);  // --help
        app.exit(e);
        return 2;
    } catch (const lb::ConfigError& e) {
        std::fprintf(stderr, "configuration error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
