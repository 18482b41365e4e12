#pragma once

#include <optional>
#include <vector>

#include "latlens/analysis.hpp"
#include "latlens/ingest.hpp"
#include "latlens/sae.hpp"

namespace latlens {

enum class SteerMode {
    Deactivate, // value > 0  =>  -magnitude
    Activate,   // absent     =>  +magnitude
    Set,        // overwrite value
};

struct SteerSpec {
    std::size_t latent = 0;
    SteerMode mode = SteerMode::Deactivate;
    float magnitude = 0.0f;
    // Empty: every frame (Activate default) or every active frame
    // (Deactivate/Set). Otherwise an explicit frame list.
    std::optional<std::vector<std::size_t>> frames;
};

struct SteerResult {
    EmbeddingSequence modified; // edited reconstruction, per frame
    std::size_t frames_touched = 0;
    std::vector<double> l2_delta; // per frame, vs plain reconstruction
};

// Encode each frame, edit the latent per spec, decode. Untouched frames are
// bit-identical to the plain reconstruction.
SteerResult steer(const EmbeddingSequence& seq, const SaeParams& params,
                  std::size_t k, const SteerSpec& spec);

// Set-to-zero where active; the per-frame delta is -value * decoder column.
SteerResult ablate(const EmbeddingSequence& seq, const SaeParams& params,
                   std::size_t k, std::size_t latent);

// 10x the nearest-rank 95th-percentile posting value of the latent.
float default_magnitude(const ActivationIndex& index, std::size_t latent);

} // namespace latlens
