#pragma once

// Dense latent video clip: `frames` frames of height x width doubles stored
// frame-major, row-major inside a frame.

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

#include "latentbridge/errors.hpp"

namespace latentbridge {

struct LatentClip {
    int frames = 0;
    int height = 0;
    int width = 0;
    std::vector<double> values;  // frames * height * width

    int frame_dim() const { return height * width; }
    int size() const { return frames * height * width; }

    std::span<double> frame(int i) {
        return {values.data() + size_t(i) * size_t(frame_dim()), size_t(frame_dim())};
    }
    std::span<const double> frame(int i) const {
        return {values.data() + size_t(i) * size_t(frame_dim()), size_t(frame_dim())};
    }

    bool same_shape(const LatentClip& other) const {
        return frames == other.frames && height == other.height && width == other.width;
    }

    static LatentClip zeros(int frames, int height, int width) {
        if (frames < 1 || height < 1 || width < 1) {
            throw ConfigError("clip", "all clip dimensions must be positive");
        }
        LatentClip c;
        c.frames = frames;
        c.height = height;
        c.width = width;
        c.values.assign(size_t(frames) * size_t(height) * size_t(width), 0.0);
        return c;
    }
};

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    double m = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a[i] - b[i]));
    }
    return m;
}

inline double max_abs_diff(const LatentClip& a, const LatentClip& b) {
    return max_abs_diff(std::span<const double>(a.values), std::span<const double>(b.values));
}

inline double l2_norm(std::span<const double> a) {
    double s = 0.0;
    for (double v : a) s += v * v;
    return std::sqrt(s);
}

inline double l2_diff(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        s += d * d;
    }
    return std::sqrt(s);
}

inline bool all_finite(std::span<const double> a) {
    for (double v : a) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace latentbridge
