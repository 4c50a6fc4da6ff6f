#pragma once

// Deterministic DDIM sampling and inversion over LatentClip states.
//
// A Denoiser wraps an eps predictor at one scope. Frame-scope denoisers see
// one frame at a time (conditions are sliced per frame); clip-scope denoisers
// see the whole clip jointly. Sampling walks the inference grid from the
// noisiest step down to the clean sentinel t = -1; inversion walks it upward,
// either by the cheap naive rule (evaluate eps at the current point with the
// lower timestep) or by fixed-point iteration that makes the pair
// invert-then-sample an identity up to the iteration tolerance.

#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latentbridge/clip.hpp"
#include "latentbridge/errors.hpp"
#include "latentbridge/schedule.hpp"
#include "latentbridge/world.hpp"

namespace latentbridge {

// eps(x, t, cond) evaluated at the denoiser's scope: for Scope::frame, x and
// out are one frame and cond has been sliced; for Scope::clip they are the
// whole clip.
using EpsFn = std::function<void(std::span<const double> x, int t, const Condition& cond,
                                 std::span<double> out)>;

struct Denoiser {
    Scope scope = Scope::clip;
    std::string label;
    EpsFn eps;
};

inline Denoiser frame_denoiser(const MixtureVideoWorld& world, const NoiseSchedule& schedule) {
    validate_world(world);
    Denoiser d;
    d.scope = Scope::frame;
    d.label = "frame-scope mixture";
    d.eps = [world, schedule](std::span<const double> x, int t, const Condition& cond,
                              std::span<double> out) {
        mixture_eps_into(world, x, t, cond, Scope::frame, schedule, out);
    };
    return d;
}

inline Denoiser clip_denoiser(const MixtureVideoWorld& world, const NoiseSchedule& schedule) {
    validate_world(world);
    Denoiser d;
    d.scope = Scope::clip;
    d.label = "clip-scope mixture";
    d.eps = [world, schedule](std::span<const double> x, int t, const Condition& cond,
                              std::span<double> out) {
        mixture_eps_into(world, x, t, cond, Scope::clip, schedule, out);
    };
    return d;
}

// Classifier-free guidance: eps = eps_uncond + scale * (eps_cond - eps_uncond).
// scale == 1 (or cond == uncond) needs a single conditional evaluation;
// scale == 0 is purely unconditional.
struct GuidanceSpec {
    double scale = 1.0;
    Condition cond = Condition::null();
    Condition uncond = Condition::null();
};

namespace detail {

inline void eval_eps(const Denoiser& den, const LatentClip& x, int t, const Condition& cond,
                     LatentClip& out) {
    if (den.scope == Scope::clip) {
        den.eps(std::span<const double>(x.values), t, cond, std::span<double>(out.values));
    } else {
        for (int f = 0; f < x.frames; ++f) {
            const Condition sliced = cond.frame_slice(f);
            den.eps(x.frame(f), t, sliced, out.frame(f));
        }
    }
}

inline void eval_guided_eps(const Denoiser& den, const LatentClip& x, int t,
                            const GuidanceSpec& g, LatentClip& out) {
    if (g.scale == 0.0) {
        eval_eps(den, x, t, g.uncond, out);
        return;
    }
    if (g.scale == 1.0 || g.cond == g.uncond) {
        eval_eps(den, x, t, g.cond, out);
        return;
    }
    eval_eps(den, x, t, g.cond, out);
    LatentClip unc = LatentClip::zeros(x.frames, x.height, x.width);
    eval_eps(den, x, t, g.uncond, unc);
    for (size_t i = 0; i < out.values.size(); ++i) {
        out.values[i] = unc.values[i] + g.scale * (out.values[i] - unc.values[i]);
    }
}

}  // namespace detail

inline LatentClip guided_eps(const Denoiser& den, const LatentClip& x, int t,
                             const GuidanceSpec& g) {
    LatentClip out = LatentClip::zeros(x.frames, x.height, x.width);
    detail::eval_guided_eps(den, x, t, g, out);
    return out;
}

// One deterministic DDIM update x_t -> x_{t_prev} given eps at (x, t):
//   x0_hat = (x - sqrt(1 - abar_t) * eps) / sqrt(abar_t)
//   x_prev = sqrt(abar_prev) * x0_hat + sqrt(1 - abar_prev) * eps
// t_prev may be the clean sentinel -1 (abar = 1).
inline void ddim_step_inplace(LatentClip& x, const LatentClip& eps, int t, int t_prev,
                              const NoiseSchedule& schedule) {
    const double abar_t = schedule.alpha_bar(t);
    const double abar_p = schedule.alpha_bar(t_prev);
    const double sa_t = std::sqrt(abar_t);
    const double sn_t = std::sqrt(1.0 - abar_t);
    const double sa_p = std::sqrt(abar_p);
    const double sn_p = std::sqrt(1.0 - abar_p);
    for (size_t i = 0; i < x.values.size(); ++i) {
        const double x0 = (x.values[i] - sn_t * eps.values[i]) / sa_t;
        x.values[i] = sa_p * x0 + sn_p * eps.values[i];
    }
    for (size_t i = 0; i < x.values.size(); ++i) {
        if (!std::isfinite(x.values[i])) {
            throw NumericError("non-finite latent after DDIM step", t, x.values[i]);
        }
    }
}

// Called after every committed sampling step with the fresh state and the
// grid index just completed; used to interleave projections (inpainting)
// or record trajectories.
using StepHook = std::function<void(LatentClip& x, int grid_index, int t, int t_prev)>;

// Full DDIM sampling along the grid: start at x ~ noise at steps[0], end at
// the clean state (sentinel t = -1 after the last grid step).
inline LatentClip ddim_sample(const Denoiser& den, LatentClip x, const GuidanceSpec& g,
                              const StepGrid& grid, const NoiseSchedule& schedule,
                              const StepHook& hook = {}) {
    LatentClip eps = LatentClip::zeros(x.frames, x.height, x.width);
    const int n = int(grid.steps.size());
    for (int i = 0; i < n; ++i) {
        const int t = grid.steps[size_t(i)];
        const int t_prev = (i + 1 < n) ? grid.steps[size_t(i + 1)] : -1;
        detail::eval_guided_eps(den, x, t, g, eps);
        ddim_step_inplace(x, eps, t, t_prev, schedule);
        if (hook) hook(x, i, t, t_prev);
    }
    return x;
}

enum class InvertMode { naive, fixed_point };

struct InvertOptions {
    InvertMode mode = InvertMode::naive;
    double fp_tol = 1e-10;  // max-norm residual of the fixed-point equation
    int fp_max_iter = 200;
};

namespace detail {

// Reverse of ddim_step: given x at t_prev, find x at t. The exact relation is
//   x_t = sqrt(abar_t / abar_p) * x_prev + c * eps(x_t, t),
//   c = sqrt(1 - abar_t) - sqrt(abar_t / abar_p) * sqrt(1 - abar_p),
// with eps evaluated at the unknown x_t. The naive rule substitutes
// eps(x_prev, t_prev); the fixed-point rule iterates the exact relation from
// the naive initializer. t_prev == -1 gives abar_p = 1 and eps identically 0,
// so the first ascent is a pure sqrt(abar_t) scaling in both modes.
inline void invert_step(const Denoiser& den, LatentClip& x, const GuidanceSpec& g, int t_prev,
                        int t, const NoiseSchedule& schedule, const InvertOptions& opt,
                        int grid_index) {
    const double abar_t = schedule.alpha_bar(t);
    const double abar_p = schedule.alpha_bar(t_prev);
    const double ratio = std::sqrt(abar_t / abar_p);
    const double c = std::sqrt(1.0 - abar_t) - ratio * std::sqrt(1.0 - abar_p);

    LatentClip eps = LatentClip::zeros(x.frames, x.height, x.width);
    eval_guided_eps(den, x, t_prev, g, eps);  // at t_prev == -1 this is zero
    LatentClip base = x;
    for (size_t i = 0; i < x.values.size(); ++i) {
        x.values[i] = ratio * base.values[i] + c * eps.values[i];
    }
    for (double v : x.values) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite latent after inversion step", t, v);
        }
    }
    if (opt.mode == InvertMode::naive) return;

    // Fixed-point refinement with Anderson acceleration (window 5). The plain
    // update x <- ratio * base + c * eps(x, t) is not a contraction wherever
    // the eps Jacobian picks up large negative eigenvalues (mixture basin
    // boundaries), so the accelerated step extrapolates through the recent
    // residual history; a restart guard drops the history if it misleads.
    constexpr int kWindow = 5;
    const size_t dim = x.values.size();
    std::vector<std::vector<double>> dg_hist, dr_hist;
    std::vector<double> gx(dim), rx(dim), gp, rp;
    double prev_resid = std::numeric_limits<double>::infinity();
    for (int it = 0; it < opt.fp_max_iter; ++it) {
        eval_guided_eps(den, x, t, g, eps);
        double resid = 0.0;
        for (size_t i = 0; i < dim; ++i) {
            gx[i] = ratio * base.values[i] + c * eps.values[i];
            rx[i] = gx[i] - x.values[i];
            resid = std::max(resid, std::fabs(rx[i]));
        }
        if (!std::isfinite(resid)) {
            throw NumericError("non-finite fixed-point residual", t, resid);
        }
        if (resid <= opt.fp_tol) {
            x.values = gx;
            return;
        }
        if (it + 1 == opt.fp_max_iter) {
            throw ConvergenceError(grid_index, resid, opt.fp_max_iter);
        }

        if (resid > 5.0 * prev_resid) {
            dg_hist.clear();
            dr_hist.clear();
            gp.clear();
            rp.clear();
        }
        prev_resid = resid;

        if (!gp.empty()) {
            std::vector<double> dg(dim), dr(dim);
            for (size_t i = 0; i < dim; ++i) {
                dg[i] = gx[i] - gp[i];
                dr[i] = rx[i] - rp[i];
            }
            dg_hist.push_back(std::move(dg));
            dr_hist.push_back(std::move(dr));
            if (int(dg_hist.size()) > kWindow) {
                dg_hist.erase(dg_hist.begin());
                dr_hist.erase(dr_hist.begin());
            }
        }
        gp = gx;
        rp = rx;

        const int m = int(dr_hist.size());
        if (m == 0) {
            x.values = gx;
            continue;
        }
        // gamma = argmin ||rx - DR * gamma||_2 via ridge-stabilized normal
        // equations (m <= 5), then x <- gx - DG * gamma.
        auto dot = [dim](const std::vector<double>& a, const std::vector<double>& b) {
            double s = 0.0;
            for (size_t i = 0; i < dim; ++i) s += a[i] * b[i];
            return s;
        };
        double mat[kWindow][kWindow];
        double rhs[kWindow];
        for (int a = 0; a < m; ++a) {
            rhs[a] = dot(dr_hist[size_t(a)], rx);
            for (int b = a; b < m; ++b) {
                mat[a][b] = mat[b][a] = dot(dr_hist[size_t(a)], dr_hist[size_t(b)]);
            }
        }
        double ridge = 0.0;
        for (int a = 0; a < m; ++a) ridge = std::max(ridge, mat[a][a]);
        ridge = ridge * 1e-12 + std::numeric_limits<double>::min();
        for (int a = 0; a < m; ++a) mat[a][a] += ridge;

        double gamma[kWindow] = {};
        int perm[kWindow];
        for (int a = 0; a < m; ++a) perm[a] = a;
        bool solvable = true;
        for (int col = 0; col < m && solvable; ++col) {
            int pivot = col;
            for (int row = col + 1; row < m; ++row) {
                if (std::fabs(mat[perm[row]][col]) > std::fabs(mat[perm[pivot]][col])) pivot = row;
            }
            std::swap(perm[col], perm[pivot]);
            const double p = mat[perm[col]][col];
            if (p == 0.0) {
                solvable = false;
                break;
            }
            for (int row = col + 1; row < m; ++row) {
                const double f = mat[perm[row]][col] / p;
                if (f == 0.0) continue;
                for (int k = col; k < m; ++k) mat[perm[row]][k] -= f * mat[perm[col]][k];
                rhs[perm[row]] -= f * rhs[perm[col]];
            }
        }
        if (solvable) {
            for (int col = m - 1; col >= 0; --col) {
                double s = rhs[perm[col]];
                for (int k = col + 1; k < m; ++k) s -= mat[perm[col]][k] * gamma[k];
                gamma[col] = s / mat[perm[col]][col];
            }
        }
        x.values = gx;
        for (int a = 0; a < m; ++a) {
            const double ga = gamma[a];
            if (ga == 0.0) continue;
            const auto& dg = dg_hist[size_t(a)];
            for (size_t i = 0; i < dim; ++i) x.values[i] -= ga * dg[i];
        }
    }
}

}  // namespace detail

// DDIM inversion: walk the grid upward from the clean state to steps[0].
// Grid index i in hooks counts ascents (0 = the sentinel -> last grid step).
inline LatentClip ddim_invert(const Denoiser& den, LatentClip x, const GuidanceSpec& g,
                              const StepGrid& grid, const NoiseSchedule& schedule,
                              const InvertOptions& opt = {}, const StepHook& hook = {}) {
    const int n = int(grid.steps.size());
    for (int i = 0; i < n; ++i) {
        // Ascent i moves from grid position n-1-i's lower neighbour up to
        // grid.steps[n-1-i]; the first ascent starts at the sentinel.
        const int from = (i == 0) ? -1 : grid.steps[size_t(n - i)];
        const int to = grid.steps[size_t(n - 1 - i)];
        detail::invert_step(den, x, g, from, to, schedule, opt, i);
        if (hook) hook(x, i, from, to);
    }
    return x;
}

// Convenience: standard-normal start latent for sampling, addressed by
// (seed, cell) with per-frame substreams.
inline LatentClip draw_start_latent(int frames, int height, int width, uint64_t seed,
                                    uint32_t cell = 0) {
    LatentClip x = LatentClip::zeros(frames, height, width);
    for (int f = 0; f < frames; ++f) {
        SubstreamRng rng(seed, cell, uint32_t(f), RngStage::start_latent);
        auto dst = x.frame(f);
        for (double& v : dst) v = rng.normal();
    }
    return x;
}

}  // namespace latentbridge
