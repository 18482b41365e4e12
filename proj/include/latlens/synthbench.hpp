#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latlens/ingest.hpp"
#include "latlens/rng.hpp"
#include "latlens/sae.hpp"

namespace latlens {

// Ground-truth dictionary for synthetic corpora: frames are s-sparse positive
// combinations of unit-norm atoms plus isotropic Gaussian noise.
struct PlantedDictionary {
    Matrix atoms; // d_in x n_atoms, unit-norm columns
    std::size_t sparsity = 8;
    float coeff_lo = 0.5f;
    float coeff_hi = 2.0f;
    float noise_sd = 0.01f;
    std::uint64_t seed = 0;

    std::size_t d_in() const { return atoms.rows; }
    std::size_t n_atoms() const { return atoms.cols; }
};

PlantedDictionary make_dictionary(std::size_t d_in, std::size_t n_atoms,
                                  std::size_t sparsity, float coeff_lo,
                                  float coeff_hi, float noise_sd,
                                  std::uint64_t seed);

struct FrameTruth {
    struct Term {
        std::uint32_t atom = 0;
        float coeff = 0.0f;
    };
    std::vector<Term> terms; // in draw order; summing in order rebuilds the frame
};

struct FileTruth {
    std::string file_id;
    std::vector<FrameTruth> frames;
};

struct GenerateOptions {
    std::size_t n_files = 400;
    std::size_t frames_per_file = 500;
    // Tag files containing atom j (< n_tagged_atoms) with "atom<j>".
    std::size_t n_tagged_atoms = 8;
    // Lock one atom per block of frames and emit word/char alignment spans
    // for it ("w<atom>").
    bool plant_words = false;
    std::size_t word_block_frames = 10;
    int frame_rate = kDefaultFrameRate;
};

struct SynthCorpus {
    std::vector<EmbeddingSequence> files;
    CorpusManifest manifest;
    std::vector<Alignment> alignments;
    std::vector<FileTruth> truth;

    // Writes a CorpusStore layout plus dict.bin and truth.bin.
    void write_store(const std::filesystem::path& dir,
                     const PlantedDictionary& dict) const;
};

SynthCorpus generate(const PlantedDictionary& dict, const GenerateOptions& options);

// Rebuild one frame from its recorded ground truth (noise excluded).
std::vector<float> truth_frame(const PlantedDictionary& dict, const FrameTruth& truth);

struct RecoveryReport {
    double matched_fraction = 0.0;
    double mean_best_cosine = 0.0;
    std::vector<double> best_cosine; // per atom
};

// Best |cosine| of each planted atom over all decoder columns (greedy,
// columns reusable; exclusive assigns each column at most once).
RecoveryReport recovery_score(const SaeParams& params, const PlantedDictionary& dict,
                              double threshold = 0.9, bool exclusive = false);

// dict.bin: magic "LLPD", u32 d_in, u32 n_atoms, u32 s, f32 lo, f32 hi,
// f32 noise_sd, u64 seed, atoms row-major f32.
void save_dictionary(const std::filesystem::path& path, const PlantedDictionary& dict);
PlantedDictionary load_dictionary(const std::filesystem::path& path);

} // namespace latlens
