#pragma once

// Clip persistence.
//
// Raw format (bit-exact reload): 16-byte header - magic "LBC1", then frames,
// height, width as little-endian uint32 - followed by frames*height*width
// IEEE-754 float32 values, little-endian, frame-major. In-memory values are
// doubles; the file stores their float32 casts, so a save/load round trip is
// the identity on clips whose values are exactly representable as float32
// (every clip the harness reloads is one it previously saved).
//
// PGM format (eyeballing): binary P5, 8-bit, one file per frame, with the
// affine value mapping recorded in a comment line "# min=<lo> max=<hi>";
// pixel = round(255 * (v - lo) / (hi - lo)), or 0 everywhere when lo == hi.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "latentbridge/clip.hpp"
#include "latentbridge/errors.hpp"

namespace latentbridge {

namespace detail {

inline void put_u32_le(std::string& buf, uint32_t v) {
    buf.push_back(char(v & 0xff));
    buf.push_back(char((v >> 8) & 0xff));
    buf.push_back(char((v >> 16) & 0xff));
    buf.push_back(char((v >> 24) & 0xff));
}

inline uint32_t get_u32_le(const unsigned char* p) {
    return uint32_t(p[0]) | (uint32_t(p[1]) << 8) | (uint32_t(p[2]) << 16) |
           (uint32_t(p[3]) << 24);
}

}  // namespace detail

inline void write_clip_raw(const std::string& path, const LatentClip& clip) {
    std::string buf;
    buf.reserve(16 + clip.values.size() * 4);
    buf += "LBC1";
    detail::put_u32_le(buf, uint32_t(clip.frames));
    detail::put_u32_le(buf, uint32_t(clip.height));
    detail::put_u32_le(buf, uint32_t(clip.width));
    for (double v : clip.values) {
        const float f = float(v);
        uint32_t bits;
        std::memcpy(&bits, &f, 4);
        detail::put_u32_le(buf, bits);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw IoError(path, "write failed");
}

inline LatentClip read_clip_raw(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError(path, "cannot open for reading");
    std::vector<unsigned char> buf((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
    if (buf.size() < 16 || std::memcmp(buf.data(), "LBC1", 4) != 0) {
        throw IoError(path, "not a clip file (bad magic or truncated header)");
    }
    const uint32_t frames = detail::get_u32_le(buf.data() + 4);
    const uint32_t height = detail::get_u32_le(buf.data() + 8);
    const uint32_t width = detail::get_u32_le(buf.data() + 12);
    if (frames == 0 || height == 0 || width == 0) {
        throw IoError(path, "degenerate clip dimensions in header");
    }
    const size_t count = size_t(frames) * size_t(height) * size_t(width);
    if (buf.size() != 16 + count * 4) {
        throw IoError(path, "payload size does not match header dimensions");
    }
    LatentClip clip = LatentClip::zeros(int(frames), int(height), int(width));
    for (size_t i = 0; i < count; ++i) {
        const uint32_t bits = detail::get_u32_le(buf.data() + 16 + i * 4);
        float f;
        std::memcpy(&f, &bits, 4);
        clip.values[i] = double(f);
    }
    return clip;
}

inline void write_frame_pgm(const std::string& path, const LatentClip& clip, int frame) {
    if (frame < 0 || frame >= clip.frames) {
        throw IoError(path, "frame index out of range");
    }
    const auto v = clip.frame(frame);
    double lo = v[0], hi = v[0];
    for (double x : v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    char header[160];
    std::snprintf(header, sizeof(header), "P5\n# min=%.17g max=%.17g\n%d %d\n255\n", lo, hi,
                  clip.width, clip.height);
    std::string buf(header);
    const double span = hi - lo;
    for (double x : v) {
        const double u = span == 0.0 ? 0.0 : std::round(255.0 * (x - lo) / span);
        buf.push_back(char(uint8_t(u)));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(path, "cannot open for writing");
    out.write(buf.data(), std::streamsize(buf.size()));
    if (!out) throw IoError(path, "write failed");
}

// Dumps a whole clip into `dir`: frame_NNN.pgm previews plus clip.raw.
inline void write_clip_artifacts(const std::string& dir, const LatentClip& clip) {
    write_clip_raw(dir + "/clip.raw", clip);
    for (int f = 0; f < clip.frames; ++f) {
        char name[32];
        std::snprintf(name, sizeof(name), "/frame_%03d.pgm", f);
        write_frame_pgm(dir + name, clip, f);
    }
}

}  // namespace latentbridge
