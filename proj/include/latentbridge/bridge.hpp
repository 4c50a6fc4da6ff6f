#pragma once

// The training-free bridge between a frame-scope and a clip-scope denoiser:
//
//   stage 1  frame-wise generation with the frame-scope model (per-frame
//            conditions, shared start noise addressing);
//   stage 2  mixed inversion - invert the stage-1 output with BOTH models and
//            blend the noisy latents: z = alpha * z_frame + (1-alpha) * z_clip;
//   stage 3  temporal smoothing - sample the clip-scope model down from the
//            mixed latent under its own condition and guidance.
//
// Strategies reuse these stages: IdmOnly stops after stage 1, VdmOnly samples
// the clip model directly, Alternate swaps the eps source per step on one
// shared trajectory, Fuse averages the two stepped latents each step, and
// Sequential is the full three-stage pipeline.

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "latentbridge/clip.hpp"
#include "latentbridge/ddim.hpp"
#include "latentbridge/errors.hpp"
#include "latentbridge/schedule.hpp"
#include "latentbridge/world.hpp"

namespace latentbridge {

enum class Strategy { idm_only, vdm_only, alternate, fuse, sequential };

inline std::string strategy_name(Strategy s) {
    switch (s) {
        case Strategy::idm_only: return "IdmOnly";
        case Strategy::vdm_only: return "VdmOnly";
        case Strategy::alternate: return "Alternate";
        case Strategy::fuse: return "Fuse";
        case Strategy::sequential: return "Sequential";
    }
    throw ConfigError("strategy", "unknown strategy value");
}

inline Strategy strategy_from_name(const std::string& name) {
    if (name == "IdmOnly") return Strategy::idm_only;
    if (name == "VdmOnly") return Strategy::vdm_only;
    if (name == "Alternate") return Strategy::alternate;
    if (name == "Fuse") return Strategy::fuse;
    if (name == "Sequential") return Strategy::sequential;
    throw ConfigError("strategy", "unknown strategy name: " + name);
}

enum class TaskKind { generation, control, edit, inpaint, outpaint };

inline std::string task_name(TaskKind k) {
    switch (k) {
        case TaskKind::generation: return "generation";
        case TaskKind::control: return "control";
        case TaskKind::edit: return "edit";
        case TaskKind::inpaint: return "inpaint";
        case TaskKind::outpaint: return "outpaint";
    }
    throw ConfigError("task", "unknown task value");
}

inline TaskKind task_from_name(const std::string& name) {
    if (name == "generation") return TaskKind::generation;
    if (name == "control") return TaskKind::control;
    if (name == "edit") return TaskKind::edit;
    if (name == "inpaint") return TaskKind::inpaint;
    if (name == "outpaint") return TaskKind::outpaint;
    throw ConfigError("task", "unknown task name: " + name);
}

// A concrete unit of work: what each scope is conditioned on, plus optional
// source/mask payloads for editing and inpainting.
struct Task {
    TaskKind kind = TaskKind::generation;
    Condition idm_cond = Condition::null();  // frame-scope stage condition
    Condition vdm_cond = Condition::null();  // clip-scope stage condition
    std::optional<LatentClip> source;        // edit start / inpaint known content
    std::vector<uint8_t> mask_known;         // inpaint/outpaint: 1 = known coordinate
};

struct BridgeConfig {
    double alpha = 0.25;        // frame-scope share in the mixed latent
    Strategy strategy = Strategy::sequential;
    InvertMode invert_mode = InvertMode::naive;
    double fp_tol = 1e-10;
    int fp_max_iter = 200;
    double idm_guidance = 7.5;  // guidance scale for the frame-scope stage
    double vdm_guidance = 7.5;  // guidance scale for the clip-scope stage
    bool alternate_idm_first = true;  // Alternate: frame-scope supplies step 0
    uint64_t seed = 0;
    uint32_t cell = 0;          // RNG cell shared by all strategies of a task
};

inline double clamp_alpha(double alpha, bool* clamped = nullptr) {
    if (clamped) *clamped = alpha < 0.0 || alpha > 1.0;
    return std::min(1.0, std::max(0.0, alpha));
}

// Everything a run produces, with intermediate states for inspection. The
// optional members are filled only by the stages a strategy actually runs.
struct PipelineTrace {
    std::optional<LatentClip> idm_output;    // stage-1 result
    std::optional<LatentClip> img_inverted;  // frame-scope inverted latent
    std::optional<LatentClip> vid_inverted;  // clip-scope inverted latent
    std::optional<LatentClip> mixed;         // blended noisy latent
    LatentClip final;                        // strategy output
    bool alpha_clamped = false;
};

namespace detail {

inline InvertOptions invert_options(const BridgeConfig& cfg) {
    InvertOptions opt;
    opt.mode = cfg.invert_mode;
    opt.fp_tol = cfg.fp_tol;
    opt.fp_max_iter = cfg.fp_max_iter;
    return opt;
}

// Inpaint-style tasks re-project the known region after every committed step.
inline StepHook projection_hook(const MixtureVideoWorld& world, const Task& task,
                                const BridgeConfig& cfg, const NoiseSchedule& schedule) {
    if (task.mask_known.empty()) return {};
    if (!task.source.has_value()) {
        throw ConfigError("task.source", "masked tasks need a source clip");
    }
    const LatentClip source = *task.source;
    const std::vector<uint8_t> known = task.mask_known;
    const uint64_t seed = cfg.seed;
    const uint32_t cell = cfg.cell;
    (void)world;
    return [source, known, seed, cell, &schedule](LatentClip& x, int, int, int t_prev) {
        inpaint_project(x, source, known, t_prev, schedule, seed, cell);
    };
}

}  // namespace detail

// Stage 1: frame-wise generation, one frame at a time (the denoiser scope
// handles the per-frame split; start noise is shared across strategies
// through the RNG cell). Edit conditions are invert-then-resample: the source
// clip is first frame-wise inverted under the null condition to obtain the
// start latents, then sampled under the edit condition.
inline LatentClip framewise_generate(const Denoiser& idm, const MixtureVideoWorld& world,
                                     const Task& task, const BridgeConfig& cfg,
                                     const StepGrid& grid, const NoiseSchedule& schedule) {
    if (idm.scope != Scope::frame) {
        throw ConfigError("bridge.idm", "stage 1 needs a frame-scope denoiser");
    }
    LatentClip x;
    if (task.idm_cond.kind == Condition::Kind::edit) {
        const GuidanceSpec null_g{1.0, Condition::null(), Condition::null()};
        x = ddim_invert(idm, task.idm_cond.source, null_g, grid, schedule,
                        detail::invert_options(cfg));
    } else {
        x = draw_start_latent(world.frames, world.height, world.width, cfg.seed, cfg.cell);
    }
    GuidanceSpec g{cfg.idm_guidance, task.idm_cond, Condition::null()};
    const StepHook hook = detail::projection_hook(world, task, cfg, schedule);
    return ddim_sample(idm, std::move(x), g, grid, schedule, hook);
}

// Stage 2: invert a clean clip with both models and blend the noisy latents.
// alpha = 1 and alpha = 0 return the respective branch untouched (bitwise).
// Inversions run under the null condition at guidance 1 - inversion recovers
// where the content came from, it does not steer.
inline LatentClip mixed_inversion(const Denoiser& idm, const Denoiser& vdm,
                                  const LatentClip& clean, const BridgeConfig& cfg,
                                  const StepGrid& grid, const NoiseSchedule& schedule,
                                  PipelineTrace* trace = nullptr) {
    if (idm.scope != Scope::frame || vdm.scope != Scope::clip) {
        throw ConfigError("bridge", "mixed inversion needs one denoiser per scope");
    }
    bool clamped = false;
    const double alpha = clamp_alpha(cfg.alpha, &clamped);
    if (trace) trace->alpha_clamped = clamped;
    const InvertOptions opt = detail::invert_options(cfg);
    const GuidanceSpec g{1.0, Condition::null(), Condition::null()};

    LatentClip z_img, z_vid;
    try {
        z_img = ddim_invert(idm, clean, g, grid, schedule, opt);
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(e.step_index(), e.residual(), cfg.fp_max_iter, "image branch");
    }
    try {
        z_vid = ddim_invert(vdm, clean, g, grid, schedule, opt);
    } catch (const ConvergenceError& e) {
        throw ConvergenceError(e.step_index(), e.residual(), cfg.fp_max_iter, "video branch");
    }
    if (trace) {
        trace->img_inverted = z_img;
        trace->vid_inverted = z_vid;
    }
    if (alpha == 1.0) {
        if (trace) trace->mixed = z_img;
        return z_img;
    }
    if (alpha == 0.0) {
        if (trace) trace->mixed = z_vid;
        return z_vid;
    }
    LatentClip mixed = z_img;
    for (size_t i = 0; i < mixed.values.size(); ++i) {
        mixed.values[i] = alpha * z_img.values[i] + (1.0 - alpha) * z_vid.values[i];
    }
    if (trace) trace->mixed = mixed;
    return mixed;
}

// Stage 3: sample the clip-scope denoiser from the mixed latent under the
// task's clip condition and guidance.
inline LatentClip temporal_smooth(const Denoiser& vdm, const MixtureVideoWorld& world,
                                  LatentClip mixed, const Task& task, const BridgeConfig& cfg,
                                  const StepGrid& grid, const NoiseSchedule& schedule) {
    if (vdm.scope != Scope::clip) {
        throw ConfigError("bridge.vdm", "stage 3 needs a clip-scope denoiser");
    }
    GuidanceSpec g{cfg.vdm_guidance, task.vdm_cond, Condition::null()};
    const StepHook hook = detail::projection_hook(world, task, cfg, schedule);
    return ddim_sample(vdm, std::move(mixed), g, grid, schedule, hook);
}

namespace detail {

// Alternate: one trajectory; the eps source flips between the two models each
// step. Fuse: both models step the same state independently and the two
// results are averaged before the next step.
inline LatentClip coupled_sample(const Denoiser& idm, const Denoiser& vdm,
                                 const MixtureVideoWorld& world, const Task& task,
                                 const BridgeConfig& cfg, const StepGrid& grid,
                                 const NoiseSchedule& schedule, bool fuse) {
    LatentClip x = draw_start_latent(world.frames, world.height, world.width, cfg.seed, cfg.cell);
    const GuidanceSpec gi{cfg.idm_guidance, task.idm_cond, Condition::null()};
    const GuidanceSpec gv{cfg.vdm_guidance, task.vdm_cond, Condition::null()};
    const StepHook hook = projection_hook(world, task, cfg, schedule);

    LatentClip eps = LatentClip::zeros(x.frames, x.height, x.width);
    const int n = int(grid.steps.size());
    for (int i = 0; i < n; ++i) {
        const int t = grid.steps[size_t(i)];
        const int t_prev = (i + 1 < n) ? grid.steps[size_t(i + 1)] : -1;
        if (fuse) {
            eval_guided_eps(idm, x, t, gi, eps);
            LatentClip xi = x;
            ddim_step_inplace(xi, eps, t, t_prev, schedule);
            eval_guided_eps(vdm, x, t, gv, eps);
            ddim_step_inplace(x, eps, t, t_prev, schedule);
            for (size_t c = 0; c < x.values.size(); ++c) {
                x.values[c] = 0.5 * (xi.values[c] + x.values[c]);
            }
        } else {
            const bool idm_turn = ((i % 2 == 0) == cfg.alternate_idm_first);
            if (idm_turn) {
                eval_guided_eps(idm, x, t, gi, eps);
            } else {
                eval_guided_eps(vdm, x, t, gv, eps);
            }
            ddim_step_inplace(x, eps, t, t_prev, schedule);
        }
        if (hook) hook(x, i, t, t_prev);
    }
    return x;
}

}  // namespace detail

// Runs one strategy on one task and returns the trace. All strategies share
// the task's RNG cell, so paired comparisons see identical start noise.
inline PipelineTrace run_strategy(Strategy strategy, const Denoiser& idm, const Denoiser& vdm,
                                  const MixtureVideoWorld& world, const Task& task,
                                  const BridgeConfig& cfg, const StepGrid& grid,
                                  const NoiseSchedule& schedule) {
    PipelineTrace trace;
    switch (strategy) {
        case Strategy::idm_only: {
            trace.final = framewise_generate(idm, world, task, cfg, grid, schedule);
            trace.idm_output = trace.final;
            break;
        }
        case Strategy::vdm_only: {
            LatentClip x =
                draw_start_latent(world.frames, world.height, world.width, cfg.seed, cfg.cell);
            trace.final = temporal_smooth(vdm, world, std::move(x), task, cfg, grid, schedule);
            break;
        }
        case Strategy::alternate: {
            trace.final =
                detail::coupled_sample(idm, vdm, world, task, cfg, grid, schedule, false);
            break;
        }
        case Strategy::fuse: {
            trace.final =
                detail::coupled_sample(idm, vdm, world, task, cfg, grid, schedule, true);
            break;
        }
        case Strategy::sequential: {
            LatentClip clean = framewise_generate(idm, world, task, cfg, grid, schedule);
            trace.idm_output = clean;
            LatentClip mixed =
                mixed_inversion(idm, vdm, clean, cfg, grid, schedule, &trace);
            trace.final =
                temporal_smooth(vdm, world, std::move(mixed), task, cfg, grid, schedule);
            break;
        }
    }
    return trace;
}

inline PipelineTrace run_strategy(const Denoiser& idm, const Denoiser& vdm,
                                  const MixtureVideoWorld& world, const Task& task,
                                  const BridgeConfig& cfg, const StepGrid& grid,
                                  const NoiseSchedule& schedule) {
    return run_strategy(cfg.strategy, idm, vdm, world, task, cfg, grid, schedule);
}

}  // namespace latentbridge
