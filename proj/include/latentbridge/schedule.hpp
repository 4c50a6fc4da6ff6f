#pragma once

// Discrete diffusion noise schedule and inference-time step grids.
//
// Timestep convention: training timesteps run 0 .. t_train-1 with noise
// increasing in t. The value t = -1 is the clean sentinel with alpha_bar = 1,
// used as the landing point of the final sampling step.

#include <cstdint>
#include <vector>

#include "latentbridge/errors.hpp"

namespace latentbridge {

struct NoiseSchedule {
    int t_train = 0;
    std::vector<double> betas;
    std::vector<double> alpha_bars;  // running product of (1 - beta_t)

    double alpha_bar(int t) const {
        if (t == -1) return 1.0;
        if (t < 0 || t >= t_train) {
            throw ConfigError("timestep", "t out of range [" + std::to_string(-1) + ", " +
                                              std::to_string(t_train - 1) + "]: " +
                                              std::to_string(t));
        }
        return alpha_bars[size_t(t)];
    }
};

// Linear beta ramp from beta_start to beta_end inclusive over t_train steps.
inline NoiseSchedule build_linear_schedule(int t_train, double beta_start, double beta_end) {
    if (t_train < 1) {
        throw ConfigError("schedule.t_train", "must be >= 1");
    }
    if (!(beta_start > 0.0) || !(beta_start < 1.0)) {
        throw ConfigError("schedule.beta_start", "must lie in (0, 1)");
    }
    if (!(beta_end >= beta_start) || !(beta_end < 1.0)) {
        throw ConfigError("schedule.beta_end", "must lie in [beta_start, 1)");
    }
    NoiseSchedule s;
    s.t_train = t_train;
    s.betas.resize(size_t(t_train));
    s.alpha_bars.resize(size_t(t_train));
    double prod = 1.0;
    for (int t = 0; t < t_train; ++t) {
        const double frac = t_train == 1 ? 0.0 : double(t) / double(t_train - 1);
        const double beta = beta_start + (beta_end - beta_start) * frac;
        s.betas[size_t(t)] = beta;
        prod *= 1.0 - beta;
        s.alpha_bars[size_t(t)] = prod;
    }
    return s;
}

// Descending inference grid: steps[i] = floor((t_infer - 1 - i) * t_train /
// t_infer). The grid ends at 0; the -1 sentinel is implied after the last
// entry. Grids for t_infer and 2 * t_infer interleave: the coarse grid equals
// every second entry of the fine one.
struct StepGrid {
    std::vector<int> steps;
};

inline StepGrid build_step_grid(const NoiseSchedule& schedule, int t_infer) {
    if (t_infer < 1 || t_infer > schedule.t_train) {
        throw ConfigError("ddim.t_infer",
                          "must lie in [1, schedule.t_train = " +
                              std::to_string(schedule.t_train) + "]");
    }
    StepGrid g;
    g.steps.resize(size_t(t_infer));
    for (int i = 0; i < t_infer; ++i) {
        g.steps[size_t(i)] =
            int((int64_t(t_infer - 1 - i) * int64_t(schedule.t_train)) / int64_t(t_infer));
    }
    return g;
}

}  // namespace latentbridge
