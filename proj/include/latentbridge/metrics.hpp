#pragma once

// Evaluation metrics for clips and latents.
//
// frame_consistency   mean cosine similarity of mean-centered consecutive
//                     frames (temporal-coherence analog).
// switch_rate         flicker measure: fraction of consecutive frame pairs
//                     whose nearest component-frame mean is not a continuation
//                     of the previous frame's. Assignment is over all
//                     (component, frame-slot) means; a pair continues when the
//                     component matches and the slot stays or advances by one,
//                     so a clip tracking one trajectory scores 0 while
//                     independent per-frame picks score close to 1.
// control_match_error mean squared error against per-frame control targets.
// latent_corr         mean Pearson correlation of consecutive flattened
//                     frames; zero-variance frames make a pair contribute 0
//                     and set the degenerate flag.
// gaussianity_stats   pooled deviation of latents from i.i.d. unit normals:
//                     |mean| and |variance - 1| over all values, plus the RMS
//                     over consecutive-frame pairs of the across-coordinate
//                     covariance between the two frames (1 for duplicated
//                     unit-variance frames, ~0 for independent ones).

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "latentbridge/clip.hpp"
#include "latentbridge/errors.hpp"
#include "latentbridge/world.hpp"

namespace latentbridge {

namespace detail {

inline bool is_constant(std::span<const double> v) {
    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    return lo == hi;
}

inline double mean_of(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / double(v.size());
}

}  // namespace detail

inline double frame_consistency(const LatentClip& clip) {
    if (clip.frames < 2) {
        throw ConfigError("metrics.frame_consistency", "needs at least 2 frames");
    }
    const int d = clip.frame_dim();
    double total = 0.0;
    for (int f = 0; f + 1 < clip.frames; ++f) {
        const auto a = clip.frame(f);
        const auto b = clip.frame(f + 1);
        const bool ca = detail::is_constant(a);
        const bool cb = detail::is_constant(b);
        if (ca || cb) {
            // Zero-variance convention: equal constants cohere perfectly,
            // anything else not at all.
            total += (ca && cb && a[0] == b[0]) ? 1.0 : 0.0;
            continue;
        }
        const double ma = detail::mean_of(a);
        const double mb = detail::mean_of(b);
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int c = 0; c < d; ++c) {
            const double xa = a[c] - ma;
            const double xb = b[c] - mb;
            dot += xa * xb;
            na += xa * xa;
            nb += xb * xb;
        }
        total += dot / std::sqrt(na * nb);
    }
    return total / double(clip.frames - 1);
}

namespace detail {

// Nearest (component, frame-slot) mean for one frame, optionally restricted
// to included coordinates. Ties resolve to the lowest (component, slot).
inline std::pair<int, int> nearest_slot(const MixtureVideoWorld& world,
                                        std::span<const double> frame,
                                        const uint8_t* include) {
    const int d = world.frame_dim();
    double best = 1e308;
    std::pair<int, int> arg{0, 0};
    for (int k = 0; k < int(world.components.size()); ++k) {
        for (int i = 0; i < world.frames; ++i) {
            const auto mu = world.component_frame(k, i);
            double ssd = 0.0;
            for (int c = 0; c < d; ++c) {
                if (include && !include[c]) continue;
                const double diff = frame[c] - mu[c];
                ssd += diff * diff;
            }
            if (ssd < best) {
                best = ssd;
                arg = {k, i};
            }
        }
    }
    return arg;
}

}  // namespace detail

// `include` is optional: empty means every coordinate participates in the
// nearest-mean assignment; otherwise it holds one flag per clip coordinate
// (e.g. the complement of an inpainting mask to score only the free region).
inline double switch_rate(const MixtureVideoWorld& world, const LatentClip& clip,
                          const std::vector<uint8_t>& include = {}) {
    if (clip.frames < 2) {
        throw ConfigError("metrics.switch_rate", "needs at least 2 frames");
    }
    if (clip.frames != world.frames || clip.frame_dim() != world.frame_dim()) {
        throw ConfigError("metrics.switch_rate", "clip shape must match the world");
    }
    if (!include.empty() && include.size() != size_t(clip.size())) {
        throw ConfigError("metrics.switch_rate", "include mask size must match the clip");
    }
    const int d = clip.frame_dim();
    int switches = 0;
    std::pair<int, int> prev{-1, -1};
    for (int f = 0; f < clip.frames; ++f) {
        const uint8_t* inc = include.empty() ? nullptr : include.data() + size_t(f) * size_t(d);
        const auto cur = detail::nearest_slot(world, clip.frame(f), inc);
        if (f > 0) {
            const bool continues =
                cur.first == prev.first &&
                (cur.second == prev.second || cur.second == prev.second + 1);
            if (!continues) ++switches;
        }
        prev = cur;
    }
    return double(switches) / double(clip.frames - 1);
}

inline double control_match_error(const LatentClip& clip, const Condition& cond) {
    if (cond.kind != Condition::Kind::control) {
        throw ConfigError("metrics.control_match_error", "needs a control condition");
    }
    if (!clip.same_shape(cond.control_targets)) {
        throw ConfigError("metrics.control_match_error", "targets shape must match the clip");
    }
    double ssd = 0.0;
    for (size_t i = 0; i < clip.values.size(); ++i) {
        const double diff = clip.values[i] - cond.control_targets.values[i];
        ssd += diff * diff;
    }
    return ssd / double(clip.values.size());
}

// Mean Pearson correlation over consecutive flattened frame pairs. A pair
// with a zero-variance member contributes 0 and raises `degenerate`.
inline double latent_corr(const LatentClip& clip, bool* degenerate = nullptr) {
    if (clip.frames < 2) {
        throw ConfigError("metrics.latent_corr", "needs at least 2 frames");
    }
    if (degenerate) *degenerate = false;
    const int d = clip.frame_dim();
    double total = 0.0;
    for (int f = 0; f + 1 < clip.frames; ++f) {
        const auto a = clip.frame(f);
        const auto b = clip.frame(f + 1);
        const double ma = detail::mean_of(a);
        const double mb = detail::mean_of(b);
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (int c = 0; c < d; ++c) {
            const double xa = a[c] - ma;
            const double xb = b[c] - mb;
            dot += xa * xb;
            na += xa * xa;
            nb += xb * xb;
        }
        if (na == 0.0 || nb == 0.0) {
            if (degenerate) *degenerate = true;
            continue;  // contributes 0
        }
        total += dot / std::sqrt(na * nb);
    }
    return total / double(clip.frames - 1);
}

struct GaussianityStats {
    double mean_abs = 0.0;
    double var_dev = 0.0;
    double cov_offdiag = 0.0;
};

inline GaussianityStats gaussianity_stats(const LatentClip& clip) {
    if (clip.values.empty()) {
        throw ConfigError("metrics.gaussianity", "latents must be non-empty");
    }
    GaussianityStats out;
    const double n = double(clip.values.size());
    double mean = 0.0;
    for (double v : clip.values) mean += v;
    mean /= n;
    double var = 0.0;
    for (double v : clip.values) var += (v - mean) * (v - mean);
    var /= n;
    out.mean_abs = std::fabs(mean);
    out.var_dev = std::fabs(var - 1.0);

    if (clip.frames >= 2) {
        const int d = clip.frame_dim();
        double sq = 0.0;
        for (int f = 0; f + 1 < clip.frames; ++f) {
            const auto a = clip.frame(f);
            const auto b = clip.frame(f + 1);
            const double ma = detail::mean_of(a);
            const double mb = detail::mean_of(b);
            double cov = 0.0;
            for (int c = 0; c < d; ++c) cov += (a[c] - ma) * (b[c] - mb);
            cov /= double(d);
            sq += cov * cov;
        }
        out.cov_offdiag = std::sqrt(sq / double(clip.frames - 1));
    }
    return out;
}

// The per-cell metric bundle reported by the benchmark harness.
struct ClipMetrics {
    double frame_consistency = 0.0;
    double switch_rate = 0.0;
    double control_match_error = 0.0;
    double latent_corr = 0.0;
    GaussianityStats gaussianity;
    bool latent_corr_degenerate = false;
};

}  // namespace latentbridge
