#pragma once

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

#include "latlens/io.hpp"
#include "latlens/matrix.hpp"
#include "latlens/rng.hpp"

namespace latlens {

struct SaeConfig {
    std::size_t d_in = 512;
    std::size_t d_latent = 16000;
    std::size_t k = 45;
};

// Sparse code of one frame: at most k strictly positive latents, sorted by id.
struct SparseActivation {
    struct Entry {
        std::uint32_t latent = 0;
        float value = 0.0f;
    };
    std::vector<Entry> entries;

    bool active(std::uint32_t latent) const;
    float value_of(std::uint32_t latent) const; // 0 when absent
};

// Encoder/decoder weights. The encoder sees x - b_pre; the decoder adds
// b_pre back, so an empty activation decodes to b_pre.
struct SaeParams {
    std::size_t d_in = 0;
    std::size_t d_latent = 0;
    Matrix w_enc;             // d_latent x d_in
    std::vector<float> b_enc; // d_latent
    Matrix w_dec;             // d_in x d_latent
    std::vector<float> b_pre; // d_in

    std::vector<float> dec_column(std::size_t latent) const;
    double dec_column_norm(std::size_t latent) const;
};

// z = w_enc (x - b_pre) + b_enc, keep the top-k, drop non-positive entries.
SparseActivation encode(const SaeParams& params, std::span<const float> x, std::size_t k);

// Workspace variant for hot loops; scratch is resized as needed.
void encode_into(const SaeParams& params, std::span<const float> x, std::size_t k,
                 std::vector<float>& scratch, SparseActivation& out);

std::vector<float> decode(const SaeParams& params, const SparseActivation& act);

// Steering path: entries may carry zero or negative values.
std::vector<float> decode_entries(const SaeParams& params,
                                  std::span<const SparseActivation::Entry> entries);

struct ForwardResult {
    std::vector<float> recon;
    SparseActivation act;
    float sq_err = 0.0f; // (1/d_in) * sum (recon - x)^2
};

ForwardResult forward(const SaeParams& params, std::span<const float> x, std::size_t k);

struct ParamCount {
    std::uint64_t weights = 0;
    std::uint64_t biases = 0;
};

ParamCount param_count(const SaeConfig& config);

// w_dec columns: random unit directions; w_enc = w_dec^T; b_enc = 0;
// b_pre = caller-supplied data mean.
SaeParams init_params(const SaeConfig& config, std::span<const float> b_pre_init, Rng& rng);

// Checkpoint: magic "LLSA", u32 version, u32 d_in, u32 d_latent, u32 k,
// b_pre, b_enc, w_enc, w_dec as raw f32, trailing u64 CRC of the payload.
void save_checkpoint(const std::filesystem::path& path, const SaeParams& params,
                     std::size_t k);
std::pair<SaeConfig, SaeParams> load_checkpoint(const std::filesystem::path& path);
std::vector<std::uint8_t> checkpoint_bytes(const SaeParams& params, std::size_t k);
std::pair<SaeConfig, SaeParams> parse_checkpoint_bytes(std::span<const std::uint8_t> bytes);

} // namespace latlens
