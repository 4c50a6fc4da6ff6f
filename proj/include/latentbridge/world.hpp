#pragma once

// Synthetic video worlds: K-component Gaussian mixtures over whole clips with
// analytically known noise predictions. One world serves two denoiser scopes:
//
//   frame scope - a single frame is modelled by the pool of all component /
//                 frame-slot means (weights w_k / frames), the analog of an
//                 image model that knows every still the world can produce;
//   clip scope  - the joint mixture over R^(frames * d), the analog of a video
//                 model that also knows which stills belong together.
//
// The noise prediction at diffusion time t for density p_t is
//   eps(x, t) = -sqrt(1 - alpha_bar_t) * grad_x log p_t(x),
// where component k diffuses to a Gaussian with mean sqrt(alpha_bar_t) * mu_k
// and isotropic variance alpha_bar_t * sigma_k^2 + 1 - alpha_bar_t. At the
// clean sentinel t = -1 the prefactor vanishes and eps is identically zero.

#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latentbridge/clip.hpp"
#include "latentbridge/errors.hpp"
#include "latentbridge/rng.hpp"
#include "latentbridge/schedule.hpp"

namespace latentbridge {

struct TrajectoryComponent {
    double weight = 0.0;
    double sigma = 0.0;              // isotropic per-coordinate std around the mean
    std::vector<double> frame_means; // frames * height * width
};

struct MixtureVideoWorld {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<TrajectoryComponent> components;

    int frame_dim() const { return height * width; }
    int clip_dim() const { return frames * height * width; }

    std::span<const double> component_frame(int k, int i) const {
        const auto& m = components[size_t(k)].frame_means;
        return {m.data() + size_t(i) * size_t(frame_dim()), size_t(frame_dim())};
    }
};

inline void validate_world(const MixtureVideoWorld& w) {
    if (w.frames < 1 || w.height < 1 || w.width < 1) {
        throw ConfigError("world", "all dimensions must be positive");
    }
    if (w.components.empty()) {
        throw ConfigError("world.k", "need at least one component");
    }
    double total = 0.0;
    for (const auto& c : w.components) {
        if (!(c.weight > 0.0)) {
            throw ConfigError("world.weights", "component weights must be positive");
        }
        if (c.sigma < 0.0) {
            throw ConfigError("world.sigma", "component sigma must be >= 0");
        }
        if (int(c.frame_means.size()) != w.clip_dim()) {
            throw ConfigError("world", "component mean size does not match clip shape");
        }
        total += c.weight;
    }
    if (std::fabs(total - 1.0) > 1e-9) {
        throw ConfigError("world.weights", "component weights must sum to 1");
    }
}

enum class Scope { frame, clip };

// Conditioning for the analytic denoisers.
//   null      - the full mixture (unconditional);
//   component - restrict to one component's means;
//   control   - collapse to a point mass at supplied per-frame targets
//               (control uniquely determines content);
//   edit      - component restriction toward target_component; the carried
//               source clip provides start latents for editing pipelines;
//   mask      - known-region source + mask, consumed by inpaint_project and
//               never by the denoisers themselves.
struct Condition {
    enum class Kind { null_cond, component, control, edit, mask };

    Kind kind = Kind::null_cond;
    int component_index = -1;
    LatentClip control_targets;  // control: world-shaped, or frames == 1 once sliced
    LatentClip source;           // edit / mask
    std::vector<uint8_t> mask_known;  // mask: 1 = known coordinate, clip-sized

    static Condition null() { return Condition{}; }

    static Condition component(int k) {
        Condition c;
        c.kind = Kind::component;
        c.component_index = k;
        return c;
    }

    static Condition control(LatentClip targets) {
        Condition c;
        c.kind = Kind::control;
        c.control_targets = std::move(targets);
        return c;
    }

    static Condition edit(LatentClip source, int target_component) {
        Condition c;
        c.kind = Kind::edit;
        c.source = std::move(source);
        c.component_index = target_component;
        return c;
    }

    static Condition masked(std::vector<uint8_t> known, LatentClip source) {
        Condition c;
        c.kind = Kind::mask;
        c.mask_known = std::move(known);
        c.source = std::move(source);
        return c;
    }

    // Per-frame view for frame-scope evaluation. Control conditions narrow to
    // the requested frame's target; the other kinds are frame-independent.
    Condition frame_slice(int frame) const {
        if (kind != Kind::control) return *this;
        LatentClip one = LatentClip::zeros(1, control_targets.height, control_targets.width);
        const auto src = control_targets.frame(frame);
        std::copy(src.begin(), src.end(), one.values.begin());
        return control(std::move(one));
    }

    bool operator==(const Condition& other) const {
        return kind == other.kind && component_index == other.component_index &&
               control_targets.frames == other.control_targets.frames &&
               control_targets.values == other.control_targets.values &&
               source.values == other.source.values && mask_known == other.mask_known;
    }
};

namespace detail {

// One Gaussian in the conditional mixture at evaluation scope. `mean` points
// into world or condition storage; `dim` values. sigma is the component's
// clean std (0 for control point masses).
struct GaussianCandidate {
    const double* mean;
    double log_weight;
    double sigma;
};

inline std::vector<GaussianCandidate> gather_candidates(const MixtureVideoWorld& world,
                                                        const Condition& cond, Scope scope,
                                                        size_t dim) {
    std::vector<GaussianCandidate> out;
    const int k_count = int(world.components.size());
    const int m = world.frames;
    switch (cond.kind) {
        case Condition::Kind::null_cond: {
            if (scope == Scope::clip) {
                out.reserve(size_t(k_count));
                for (int k = 0; k < k_count; ++k) {
                    const auto& c = world.components[size_t(k)];
                    out.push_back({c.frame_means.data(), std::log(c.weight), c.sigma});
                }
            } else {
                out.reserve(size_t(k_count) * size_t(m));
                for (int k = 0; k < k_count; ++k) {
                    const auto& c = world.components[size_t(k)];
                    const double lw = std::log(c.weight / double(m));
                    for (int i = 0; i < m; ++i) {
                        out.push_back({c.frame_means.data() + size_t(i) * dim, lw, c.sigma});
                    }
                }
            }
            break;
        }
        case Condition::Kind::component:
        case Condition::Kind::edit: {
            const int k = cond.component_index;
            if (k < 0 || k >= k_count) {
                throw ConfigError("condition.component", "component index out of range");
            }
            const auto& c = world.components[size_t(k)];
            if (scope == Scope::clip) {
                out.push_back({c.frame_means.data(), 0.0, c.sigma});
            } else {
                const double lw = -std::log(double(m));
                for (int i = 0; i < m; ++i) {
                    out.push_back({c.frame_means.data() + size_t(i) * dim, lw, c.sigma});
                }
            }
            break;
        }
        case Condition::Kind::control: {
            const auto& t = cond.control_targets;
            if (scope == Scope::clip) {
                if (t.frames != world.frames || t.frame_dim() != world.frame_dim()) {
                    throw ConfigError("condition.control", "targets must match the clip shape");
                }
            } else {
                if (t.frames != 1 || t.frame_dim() != world.frame_dim()) {
                    throw ConfigError("condition.control",
                                      "frame-scope control must be sliced to one frame");
                }
            }
            out.push_back({t.values.data(), 0.0, 0.0});
            break;
        }
        case Condition::Kind::mask: {
            throw ConfigError("condition.mask",
                              "mask conditions are consumed by inpaint_project, not denoisers");
        }
    }
    return out;
}

inline size_t scope_dim(const MixtureVideoWorld& world, Scope scope) {
    return scope == Scope::frame ? size_t(world.frame_dim()) : size_t(world.clip_dim());
}

}  // namespace detail

// Analytic noise prediction for the conditional mixture at timestep t.
// t = -1 (clean sentinel) yields zeros.
inline void mixture_eps_into(const MixtureVideoWorld& world, std::span<const double> x, int t,
                             const Condition& cond, Scope scope, const NoiseSchedule& schedule,
                             std::span<double> out) {
    const size_t dim = detail::scope_dim(world, scope);
    if (x.size() != dim || out.size() != dim) {
        throw ConfigError("eps", "input size does not match the evaluation scope");
    }
    for (double v : x) {
        if (!std::isfinite(v)) {
            throw NumericError("non-finite input to mixture_eps", t, v);
        }
    }
    if (t == -1) {
        std::fill(out.begin(), out.end(), 0.0);
        return;
    }
    const double abar = schedule.alpha_bar(t);
    const double one_m = 1.0 - abar;
    const double sqrt_abar = std::sqrt(abar);
    const double sqrt_one_m = std::sqrt(one_m);

    const auto cands = detail::gather_candidates(world, cond, scope, dim);
    const size_t n = cands.size();

    // Responsibilities over candidates via log-sum-exp.
    std::vector<double> logit(n);
    std::vector<double> var(n);
    for (size_t j = 0; j < n; ++j) {
        const double v = abar * cands[j].sigma * cands[j].sigma + one_m;
        var[j] = v;
        double ssd = 0.0;
        const double* mu = cands[j].mean;
        for (size_t c = 0; c < dim; ++c) {
            const double d = x[c] - sqrt_abar * mu[c];
            ssd += d * d;
        }
        logit[j] = cands[j].log_weight - 0.5 * double(dim) * std::log(2.0 * M_PI * v) -
                   0.5 * ssd / v;
    }
    double max_logit = logit[0];
    for (size_t j = 1; j < n; ++j) max_logit = std::max(max_logit, logit[j]);
    double denom = 0.0;
    for (size_t j = 0; j < n; ++j) denom += std::exp(logit[j] - max_logit);

    // eps = -sqrt(1 - abar) * sum_j r_j * (sqrt(abar) mu_j - x) / v_j
    std::fill(out.begin(), out.end(), 0.0);
    for (size_t j = 0; j < n; ++j) {
        const double r = std::exp(logit[j] - max_logit) / denom;
        if (r == 0.0) continue;
        const double scale = sqrt_one_m * r / var[j];
        const double* mu = cands[j].mean;
        for (size_t c = 0; c < dim; ++c) {
            out[c] += scale * (x[c] - sqrt_abar * mu[c]);
        }
    }
}

inline std::vector<double> mixture_eps(const MixtureVideoWorld& world, std::span<const double> x,
                                       int t, const Condition& cond, Scope scope,
                                       const NoiseSchedule& schedule) {
    std::vector<double> out(x.size());
    mixture_eps_into(world, x, t, cond, scope, schedule, out);
    return out;
}

// Closed-form log p_t(x) for the conditional mixture. Rejects the sentinel:
// at t = -1 point-mass conditionals have no density.
inline double mixture_log_density(const MixtureVideoWorld& world, std::span<const double> x,
                                  int t, const Condition& cond, Scope scope,
                                  const NoiseSchedule& schedule) {
    const size_t dim = detail::scope_dim(world, scope);
    if (x.size() != dim) {
        throw ConfigError("log_density", "input size does not match the evaluation scope");
    }
    if (t == -1) {
        throw ConfigError("log_density", "undefined at the clean sentinel t = -1");
    }
    const double abar = schedule.alpha_bar(t);
    const double one_m = 1.0 - abar;
    const double sqrt_abar = std::sqrt(abar);
    const auto cands = detail::gather_candidates(world, cond, scope, dim);

    double max_logit = -1e308;
    std::vector<double> logit(cands.size());
    for (size_t j = 0; j < cands.size(); ++j) {
        const double v = abar * cands[j].sigma * cands[j].sigma + one_m;
        double ssd = 0.0;
        const double* mu = cands[j].mean;
        for (size_t c = 0; c < dim; ++c) {
            const double d = x[c] - sqrt_abar * mu[c];
            ssd += d * d;
        }
        logit[j] = cands[j].log_weight - 0.5 * double(dim) * std::log(2.0 * M_PI * v) -
                   0.5 * ssd / v;
        max_logit = std::max(max_logit, logit[j]);
    }
    double sum = 0.0;
    for (double l : logit) sum += std::exp(l - max_logit);
    return max_logit + std::log(sum);
}

// Central-difference gradient of log p_t along every coordinate: the
// independent oracle for mixture_eps. Perturbing one coordinate changes each
// candidate's squared distance by an exactly known quadratic amount, so the
// per-coordinate densities are evaluated from per-candidate distances without
// re-scanning all dimensions; this is plain algebra on the closed form, not a
// shortcut through the score path.
inline std::vector<double> score_finite_diff(const MixtureVideoWorld& world,
                                             std::span<const double> x, int t,
                                             const Condition& cond, Scope scope,
                                             const NoiseSchedule& schedule, double h = 1e-4) {
    const size_t dim = detail::scope_dim(world, scope);
    if (x.size() != dim) {
        throw ConfigError("score_finite_diff", "input size does not match the evaluation scope");
    }
    if (t == -1) {
        throw ConfigError("score_finite_diff", "undefined at the clean sentinel t = -1");
    }
    const double abar = schedule.alpha_bar(t);
    const double one_m = 1.0 - abar;
    const double sqrt_abar = std::sqrt(abar);
    const auto cands = detail::gather_candidates(world, cond, scope, dim);
    const size_t n = cands.size();

    std::vector<double> base_log(n);   // log weight + normalizer
    std::vector<double> inv_v(n);
    std::vector<double> ssd(n, 0.0);
    for (size_t j = 0; j < n; ++j) {
        const double v = abar * cands[j].sigma * cands[j].sigma + one_m;
        inv_v[j] = 1.0 / v;
        base_log[j] = cands[j].log_weight - 0.5 * double(dim) * std::log(2.0 * M_PI * v);
        const double* mu = cands[j].mean;
        double s = 0.0;
        for (size_t c = 0; c < dim; ++c) {
            const double d = x[c] - sqrt_abar * mu[c];
            s += d * d;
        }
        ssd[j] = s;
    }

    auto log_density_shifted = [&](size_t coord, double delta) {
        double max_logit = -1e308;
        for (size_t j = 0; j < n; ++j) {
            const double d0 = x[coord] - sqrt_abar * cands[j].mean[coord];
            const double s = ssd[j] + 2.0 * delta * d0 + delta * delta;
            const double l = base_log[j] - 0.5 * s * inv_v[j];
            if (l > max_logit) max_logit = l;
        }
        double sum = 0.0;
        for (size_t j = 0; j < n; ++j) {
            const double d0 = x[coord] - sqrt_abar * cands[j].mean[coord];
            const double s = ssd[j] + 2.0 * delta * d0 + delta * delta;
            sum += std::exp(base_log[j] - 0.5 * s * inv_v[j] - max_logit);
        }
        return max_logit + std::log(sum);
    };

    std::vector<double> grad(dim);
    for (size_t c = 0; c < dim; ++c) {
        grad[c] = (log_density_shifted(c, h) - log_density_shifted(c, -h)) / (2.0 * h);
    }
    return grad;
}

// Overwrites known coordinates of x_t with the forward-diffused source at
// level t: sqrt(abar) * source + sqrt(1 - abar) * g, where g is a fixed unit
// draw addressed by (seed, cell, frame, t). At the sentinel t = -1 the known
// region becomes the source exactly. `known` has one flag per clip coordinate.
inline void inpaint_project(LatentClip& x_t, const LatentClip& source,
                            const std::vector<uint8_t>& known, int t,
                            const NoiseSchedule& schedule, uint64_t seed, uint32_t cell = 0) {
    if (!x_t.same_shape(source)) {
        throw ConfigError("inpaint.source", "source shape must match the clip");
    }
    if (known.size() != size_t(x_t.size())) {
        throw ConfigError("inpaint.mask", "mask size must match the clip");
    }
    const int d = x_t.frame_dim();
    if (t == -1) {
        for (int f = 0; f < x_t.frames; ++f) {
            auto dst = x_t.frame(f);
            const auto src = source.frame(f);
            const uint8_t* kn = known.data() + size_t(f) * size_t(d);
            for (int c = 0; c < d; ++c) {
                if (kn[c]) dst[c] = src[c];
            }
        }
        return;
    }
    const double abar = schedule.alpha_bar(t);
    const double sa = std::sqrt(abar);
    const double sn = std::sqrt(1.0 - abar);
    for (int f = 0; f < x_t.frames; ++f) {
        SubstreamRng rng(seed, cell, uint32_t(f), RngStage::inpaint_noise, uint32_t(t + 1));
        auto dst = x_t.frame(f);
        const auto src = source.frame(f);
        const uint8_t* kn = known.data() + size_t(f) * size_t(d);
        for (int c = 0; c < d; ++c) {
            const double g = rng.normal();  // drawn for every coordinate to keep addressing fixed
            if (kn[c]) dst[c] = sa * src[c] + sn * g;
        }
    }
}

// Moving-blob world: K equally weighted components, each a Gaussian bump
// translating with a constant per-component velocity and wrapping at the
// borders (torus geometry). Amplitudes follow a per-component ladder so that
// components stay identifiable in pixel space even where their trajectories
// cross; with identical bumps, two components passing through the same spot
// at different frame slots would produce near-coincident pooled means and
// nearest-mean component assignment would degenerate there.
struct MovingBlobWorld {
    MixtureVideoWorld world;
    std::vector<std::array<double, 2>> starts;      // per component (x, y)
    std::vector<std::array<double, 2>> velocities;  // pixels per frame
};

namespace detail {
constexpr double kBlobAmplitude = 2.0;
constexpr double kBlobRadius = 1.8;

// Amplitude of component c in a K-component world: evenly spread over
// [0.6, 1.4] x kBlobAmplitude. Single-component worlds keep the base value.
inline double blob_amplitude(int c, int k) {
    if (k <= 1) return kBlobAmplitude;
    return kBlobAmplitude * (0.6 + 0.8 * double(c) / double(k - 1));
}

inline double torus_delta(double a, double b, double period) {
    double d = a - b;
    d -= period * std::round(d / period);
    return d;
}
}  // namespace detail

inline MovingBlobWorld make_moving_blob_world(int k, int frames, int height, int width,
                                              double sigma, uint64_t seed) {
    if (k < 1) throw ConfigError("world.k", "must be >= 1");
    if (frames < 1) throw ConfigError("world.frames", "must be >= 1");
    if (height < 4 || width < 4) {
        throw ConfigError("world.height", "grid must be at least 4x4 to fit a blob");
    }
    if (sigma < 0.0) throw ConfigError("world.sigma", "must be >= 0");

    MovingBlobWorld out;
    out.world.frames = frames;
    out.world.height = height;
    out.world.width = width;
    out.world.components.resize(size_t(k));
    out.starts.resize(size_t(k));
    out.velocities.resize(size_t(k));

    SubstreamRng rng(seed, 0, 0, RngStage::world_build);
    auto draw_velocity = [&]() {
        // Speed in [0.75, 2.0] pixels/frame per axis, random sign.
        const double vx = (0.75 + 1.25 * rng.uniform()) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        const double vy = (0.75 + 1.25 * rng.uniform()) * (rng.uniform() < 0.5 ? -1.0 : 1.0);
        return std::array<double, 2>{vx, vy};
    };

    for (int c = 0; c < k; ++c) {
        out.starts[size_t(c)] = {rng.uniform() * width, rng.uniform() * height};
        auto v = draw_velocity();
        // Components must move distinguishably: re-draw until the velocity is
        // at least 0.35 px/frame away from every earlier component's.
        for (int attempt = 0; attempt < 1000; ++attempt) {
            bool ok = true;
            for (int p = 0; p < c; ++p) {
                const double dx = v[0] - out.velocities[size_t(p)][0];
                const double dy = v[1] - out.velocities[size_t(p)][1];
                if (std::sqrt(dx * dx + dy * dy) < 0.35) {
                    ok = false;
                    break;
                }
            }
            if (ok) break;
            v = draw_velocity();
        }
        out.velocities[size_t(c)] = v;

        auto& comp = out.world.components[size_t(c)];
        comp.weight = 1.0 / double(k);
        comp.sigma = sigma;
        comp.frame_means.resize(size_t(frames) * size_t(height) * size_t(width));
        const double amp = detail::blob_amplitude(c, k);
        for (int f = 0; f < frames; ++f) {
            const double cx = out.starts[size_t(c)][0] + f * v[0];
            const double cy = out.starts[size_t(c)][1] + f * v[1];
            double* dst = comp.frame_means.data() + size_t(f) * size_t(height) * size_t(width);
            for (int y = 0; y < height; ++y) {
                for (int x = 0; x < width; ++x) {
                    const double dx = detail::torus_delta(double(x), cx, double(width));
                    const double dy = detail::torus_delta(double(y), cy, double(height));
                    dst[y * width + x] =
                        amp * std::exp(-(dx * dx + dy * dy) /
                                       (2.0 * detail::kBlobRadius * detail::kBlobRadius));
                }
            }
        }
    }
    validate_world(out.world);
    return out;
}

// Draws one clip from the world: component by weight, then mean + sigma * g
// with per-frame noise substreams. Returns the clip and the component index.
inline std::pair<LatentClip, int> sample_data(const MixtureVideoWorld& world, uint64_t seed,
                                              uint32_t cell = 0) {
    validate_world(world);
    SubstreamRng pick(seed, cell, 0, RngStage::data_component);
    const double u = pick.uniform();
    int k = 0;
    double acc = 0.0;
    for (size_t j = 0; j < world.components.size(); ++j) {
        acc += world.components[j].weight;
        if (u < acc) {
            k = int(j);
            break;
        }
        k = int(j);  // numeric slack: the last component absorbs u ~ 1
    }
    const auto& comp = world.components[size_t(k)];
    LatentClip clip = LatentClip::zeros(world.frames, world.height, world.width);
    const int d = world.frame_dim();
    for (int f = 0; f < world.frames; ++f) {
        SubstreamRng rng(seed, cell, uint32_t(f), RngStage::data_noise);
        auto dst = clip.frame(f);
        const double* mu = comp.frame_means.data() + size_t(f) * size_t(d);
        for (int c = 0; c < d; ++c) {
            dst[c] = mu[c] + comp.sigma * rng.normal();
        }
    }
    return {std::move(clip), k};
}

}  // namespace latentbridge
