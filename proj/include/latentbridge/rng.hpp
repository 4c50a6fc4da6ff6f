#pragma once

// Counter-based random numbers (Philox 4x32-10). Every consumer owns an
// independent substream addressed by (seed, cell, frame, stage, salt); equal
// addresses yield equal sequences no matter which thread draws them or in
// which order substreams are created, so parallel and sequential schedules
// produce identical results.

#include <array>
#include <cmath>
#include <cstdint>

namespace latentbridge {

// Stage labels partition the counter space of one (seed, cell, frame).
// The numeric values are part of the reproducibility contract: renumbering
// them changes every downstream draw.
enum class RngStage : uint32_t {
    world_build = 1,     // moving-blob geometry (starts, velocities)
    data_component = 2,  // mixture component picks for data samples
    data_noise = 3,      // per-frame noise around component means
    start_latent = 4,    // fresh unit-Gaussian start latents
    inpaint_noise = 5,   // forward-diffusion noise for known regions (salt = t + 1)
    task_build = 6,      // benchmark task construction (targets, edits, masks)
    probe = 7,           // test probes
};

namespace detail {

// One Philox 4x32-10 block: 128-bit counter, 64-bit key, ten rounds.
inline std::array<uint32_t, 4> philox4x32(std::array<uint32_t, 4> ctr,
                                          std::array<uint32_t, 2> key) {
    constexpr uint32_t kW32A = 0x9E3779B9u;
    constexpr uint32_t kW32B = 0xBB67AE85u;
    constexpr uint32_t kM4x32A = 0xD2511F53u;
    constexpr uint32_t kM4x32B = 0xCD9E8D57u;
    for (int round = 0; round < 10; ++round) {
        const uint64_t p0 = uint64_t(kM4x32A) * ctr[0];
        const uint64_t p1 = uint64_t(kM4x32B) * ctr[2];
        const std::array<uint32_t, 4> next = {
            uint32_t(p1 >> 32) ^ ctr[1] ^ key[0],
            uint32_t(p1),
            uint32_t(p0 >> 32) ^ ctr[3] ^ key[1],
            uint32_t(p0),
        };
        ctr = next;
        key[0] += kW32A;
        key[1] += kW32B;
    }
    return ctr;
}

}  // namespace detail

// A single addressed substream. uniform() yields doubles in [0, 1); normal()
// yields standard normals via Box-Muller. Each Philox block provides two
// 64-bit words; normal() consumes a full block per pair and caches the second
// value, uniform() consumes one word at a time.
class SubstreamRng {
public:
    SubstreamRng(uint64_t seed, uint32_t cell, uint32_t frame, RngStage stage,
                 uint32_t salt = 0)
        : key_{uint32_t(seed), uint32_t(seed >> 32)},
          base_{cell, frame, uint32_t(stage) | (salt << 8)} {}

    // Uniform double in [0, 1), 53 usable bits.
    double uniform() {
        return double(next_u64() >> 11) * 0x1.0p-53;
    }

    // Standard normal via Box-Muller on one block (two words).
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const uint64_t a = next_u64();
        const uint64_t b = next_u64();
        const double u1 = double((a >> 11) + 1) * 0x1.0p-53;  // (0, 1]
        const double u2 = double(b >> 11) * 0x1.0p-53;        // [0, 1)
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        cached_ = r * std::sin(theta);
        have_cached_ = true;
        return r * std::cos(theta);
    }

private:
    uint64_t next_u64() {
        if (word_index_ == 0) {
            block_ = detail::philox4x32({base_[0], base_[1], base_[2],
                                         uint32_t(block_index_++)},
                                        key_);
        }
        const int i = word_index_ * 2;
        word_index_ = (word_index_ + 1) % 2;
        return (uint64_t(block_[i]) << 32) | uint64_t(block_[i + 1]);
    }

    std::array<uint32_t, 2> key_;
    std::array<uint32_t, 3> base_;
    std::array<uint32_t, 4> block_{};
    uint64_t block_index_ = 0;
    int word_index_ = 0;
    bool have_cached_ = false;
    double cached_ = 0.0;
};

}  // namespace latentbridge
