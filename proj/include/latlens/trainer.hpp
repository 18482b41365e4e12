#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "latlens/ingest.hpp"
#include "latlens/sae.hpp"

namespace latlens {

struct TrainConfig {
    float learning_rate = 1e-4f;
    std::size_t batch_size = 512;
    std::size_t steps = 10000;
    float adam_beta1 = 0.9f;
    float adam_beta2 = 0.999f;
    float adam_eps = 1e-8f;
    std::uint64_t seed = 0;
    bool renormalize_decoder = true;
    std::size_t dead_window = 100000;  // frames
    std::size_t shuffle_buffer = 65536; // frames
    std::size_t log_interval = 0;      // 0 = steps/100, at least 1
    std::size_t b_pre_sample = 10000;  // frames averaged into the initial pre-bias
};

struct TrainStats {
    std::size_t step = 0;
    double mean_sq_err = 0.0;
    std::size_t dead_latent_count = 0;
    std::uint64_t frames_seen = 0;
};

struct GradientSet {
    Matrix g_w_enc;             // d_latent x d_in
    std::vector<float> g_b_enc; // d_latent
    Matrix g_w_dec;             // d_in x d_latent
    std::vector<float> g_b_pre; // d_in
};

struct AdamMoments {
    Matrix m_w_enc, v_w_enc;
    std::vector<float> m_b_enc, v_b_enc;
    Matrix m_w_dec, v_w_dec;
    std::vector<float> m_b_pre, v_b_pre;

    static AdamMoments zeros(std::size_t d_in, std::size_t d_latent);
};

// One frame per row.
using FrameBatch = Matrix;

double batch_loss(const SaeParams& params, const FrameBatch& batch, std::size_t k);

struct BackwardResult {
    GradientSet grads;
    double loss = 0.0;
    std::vector<SparseActivation> acts; // one per frame
};

// Gradients of batch_loss for the fixed active support of each frame
// (straight-through on the selected, clamped-positive coordinates).
BackwardResult backward_full(const SaeParams& params, const FrameBatch& batch,
                             std::size_t k);
GradientSet backward(const SaeParams& params, const FrameBatch& batch, std::size_t k);

// Bias-corrected Adam. With renormalize_decoder, each w_dec column is rescaled
// to unit L2 after the update and the parallel component of its first moment
// is removed.
void adam_step(SaeParams& params, const GradientSet& grads, AdamMoments& moments,
               const TrainConfig& config, std::size_t step);

// Latent is dead iff it fired in none of the last `window` observed frames.
class DeadLatentTracker {
public:
    DeadLatentTracker(std::size_t d_latent, std::size_t window);

    void observe(const SparseActivation& act);
    bool is_dead(std::size_t latent) const;
    std::size_t dead_count() const;
    std::vector<std::size_t> dead_ids() const;
    std::uint64_t frames_seen() const { return frames_seen_; }

private:
    std::size_t window_;
    std::uint64_t frames_seen_ = 0;
    std::vector<std::int64_t> last_seen_;
};

// Pull-based frame source; one pass per reset.
class FrameStream {
public:
    virtual ~FrameStream() = default;
    virtual std::size_t dim() const = 0;
    virtual bool next(std::vector<float>& out) = 0;
    virtual void reset() = 0;
};

class MemoryFrameStream final : public FrameStream {
public:
    explicit MemoryFrameStream(Matrix frames) : frames_(std::move(frames)) {}
    std::size_t dim() const override { return frames_.cols; }
    bool next(std::vector<float>& out) override;
    void reset() override { pos_ = 0; }

private:
    Matrix frames_;
    std::size_t pos_ = 0;
};

// Streams trimmed frames of every store file in manifest (file_id) order.
class StoreFrameStream final : public FrameStream {
public:
    explicit StoreFrameStream(const CorpusStore& store,
                              int frame_rate = kDefaultFrameRate);
    std::size_t dim() const override { return dim_; }
    bool next(std::vector<float>& out) override;
    void reset() override;

private:
    const CorpusStore* store_;
    int frame_rate_;
    std::size_t dim_ = 0;
    std::size_t entry_idx_ = 0;
    std::size_t frame_idx_ = 0;
    EmbeddingSequence current_;
    bool loaded_ = false;
};

struct TrainResult {
    SaeParams params;
    std::vector<TrainStats> stats;
};

// Deterministic end to end: a pure function of (corpus bytes, configs).
TrainResult train(FrameStream& corpus, const SaeConfig& sae_config,
                  const TrainConfig& train_config,
                  const std::function<void(const TrainStats&)>& on_log = {});

} // namespace latlens
