#include "latlens/trainer.hpp"

#include <algorithm>
#include <cmath>

namespace latlens {

AdamMoments AdamMoments::zeros(std::size_t d_in, std::size_t d_latent) {
    AdamMoments m;
    m.m_w_enc = Matrix(d_latent, d_in);
    m.v_w_enc = Matrix(d_latent, d_in);
    m.m_b_enc.assign(d_latent, 0.0f);
    m.v_b_enc.assign(d_latent, 0.0f);
    m.m_w_dec = Matrix(d_in, d_latent);
    m.v_w_dec = Matrix(d_in, d_latent);
    m.m_b_pre.assign(d_in, 0.0f);
    m.v_b_pre.assign(d_in, 0.0f);
    return m;
}

double batch_loss(const SaeParams& params, const FrameBatch& batch, std::size_t k) {
    check_contract(batch.rows >= 1, "batch_loss: empty batch");
    check_contract(batch.cols == params.d_in, "batch_loss: frame dim != d_in");
    double acc = 0.0;
    std::vector<float> scratch;
    SparseActivation act;
    std::vector<float> recon;
    for (std::size_t b = 0; b < batch.rows; ++b) {
        const auto x = batch.row(b);
        encode_into(params, x, k, scratch, act);
        recon = decode(params, act);
        double frame_acc = 0.0;
        for (std::size_t i = 0; i < params.d_in; ++i) {
            const double d = static_cast<double>(recon[i]) - static_cast<double>(x[i]);
            frame_acc += d * d;
        }
        acc += frame_acc / static_cast<double>(params.d_in);
    }
    return acc / static_cast<double>(batch.rows);
}

BackwardResult backward_full(const SaeParams& params, const FrameBatch& batch,
                             std::size_t k) {
    check_contract(batch.rows >= 1, "backward: empty batch");
    check_contract(batch.cols == params.d_in, "backward: frame dim != d_in");
    const std::size_t d_in = params.d_in;
    const std::size_t d_latent = params.d_latent;
    const std::size_t B = batch.rows;
    const double scale = 2.0 / (static_cast<double>(d_in) * static_cast<double>(B));

    BackwardResult result;
    result.grads.g_w_enc = Matrix(d_latent, d_in);
    result.grads.g_b_enc.assign(d_latent, 0.0f);
    result.grads.g_w_dec = Matrix(d_in, d_latent);
    result.grads.g_b_pre.assign(d_in, 0.0f);
    result.acts.resize(B);

    // f64 accumulators: float32 sums across the batch lose enough precision
    // to fail a 1e-4 finite-difference comparison when terms cancel.
    std::vector<double> g_w_enc(d_latent * d_in, 0.0);
    std::vector<double> g_w_dec(d_in * d_latent, 0.0);
    std::vector<double> g_b_pre(d_in, 0.0);
    std::vector<double> g_b_enc(d_latent, 0.0);
    std::vector<float> scratch;
    std::vector<float> u(d_in);
    std::vector<double> a(0);
    std::vector<double> recon(d_in);
    std::vector<double> r(d_in);

    double loss = 0.0;
    for (std::size_t b = 0; b < B; ++b) {
        const auto x = batch.row(b);
        auto& act = result.acts[b];
        encode_into(params, x, k, scratch, act);
        for (std::size_t i = 0; i < d_in; ++i) u[i] = x[i] - params.b_pre[i];
        // Redo the active values and the reconstruction in f64 so the
        // gradients match a double-precision loss to FD accuracy.
        a.assign(act.entries.size(), 0.0);
        for (std::size_t i = 0; i < d_in; ++i) recon[i] = params.b_pre[i];
        for (std::size_t e_idx = 0; e_idx < act.entries.size(); ++e_idx) {
            const std::size_t j = act.entries[e_idx].latent;
            a[e_idx] = dot_f64(params.w_enc.row(j), u) +
                       static_cast<double>(params.b_enc[j]);
            for (std::size_t i = 0; i < d_in; ++i) {
                recon[i] += a[e_idx] * static_cast<double>(params.w_dec.at(i, j));
            }
        }
        for (std::size_t i = 0; i < d_in; ++i) {
            r[i] = recon[i] - static_cast<double>(x[i]);
            loss += r[i] * r[i] / static_cast<double>(d_in);
            g_b_pre[i] += scale * r[i];
        }
        for (std::size_t e_idx = 0; e_idx < act.entries.size(); ++e_idx) {
            const std::size_t j = act.entries[e_idx].latent;
            double t = 0.0; // w_dec column j dotted with the residual
            for (std::size_t i = 0; i < d_in; ++i) {
                t += static_cast<double>(params.w_dec.at(i, j)) * r[i];
            }
            g_b_enc[j] += scale * t;
            const double ct = scale * t;
            const double ca = scale * a[e_idx];
            double* enc_row = g_w_enc.data() + j * d_in;
            const auto w_enc_row = params.w_enc.row(j);
            for (std::size_t i = 0; i < d_in; ++i) {
                enc_row[i] += ct * u[i];
                g_w_dec[i * d_latent + j] += ca * r[i];
                g_b_pre[i] -= ct * static_cast<double>(w_enc_row[i]);
            }
        }
    }
    for (std::size_t i = 0; i < d_in; ++i) {
        result.grads.g_b_pre[i] = static_cast<float>(g_b_pre[i]);
    }
    for (std::size_t j = 0; j < d_latent; ++j) {
        result.grads.g_b_enc[j] = static_cast<float>(g_b_enc[j]);
    }
    for (std::size_t i = 0; i < g_w_enc.size(); ++i) {
        result.grads.g_w_enc.data[i] = static_cast<float>(g_w_enc[i]);
    }
    for (std::size_t i = 0; i < g_w_dec.size(); ++i) {
        result.grads.g_w_dec.data[i] = static_cast<float>(g_w_dec[i]);
    }
    result.loss = loss / static_cast<double>(B);
    return result;
}

GradientSet backward(const SaeParams& params, const FrameBatch& batch, std::size_t k) {
    return backward_full(params, batch, k).grads;
}

namespace {

void adam_update(std::span<float> param, std::span<const float> grad,
                 std::span<float> m, std::span<float> v, const TrainConfig& c,
                 double bias1, double bias2) {
    const double b1 = c.adam_beta1;
    const double b2 = c.adam_beta2;
    for (std::size_t i = 0; i < param.size(); ++i) {
        const double g = grad[i];
        const double mi = b1 * m[i] + (1.0 - b1) * g;
        const double vi = b2 * v[i] + (1.0 - b2) * g * g;
        m[i] = static_cast<float>(mi);
        v[i] = static_cast<float>(vi);
        const double m_hat = mi / bias1;
        const double v_hat = vi / bias2;
        param[i] = static_cast<float>(
            param[i] - c.learning_rate * m_hat / (std::sqrt(v_hat) + c.adam_eps));
    }
}

} // namespace

void adam_step(SaeParams& params, const GradientSet& grads, AdamMoments& moments,
               const TrainConfig& config, std::size_t step) {
    check_contract(step >= 1, "adam_step: step must be >= 1");
    const double bias1 = 1.0 - std::pow(static_cast<double>(config.adam_beta1),
                                        static_cast<double>(step));
    const double bias2 = 1.0 - std::pow(static_cast<double>(config.adam_beta2),
                                        static_cast<double>(step));
    adam_update(params.w_enc.data, grads.g_w_enc.data, moments.m_w_enc.data,
                moments.v_w_enc.data, config, bias1, bias2);
    adam_update(params.b_enc, grads.g_b_enc, moments.m_b_enc, moments.v_b_enc,
                config, bias1, bias2);
    adam_update(params.w_dec.data, grads.g_w_dec.data, moments.m_w_dec.data,
                moments.v_w_dec.data, config, bias1, bias2);
    adam_update(params.b_pre, grads.g_b_pre, moments.m_b_pre, moments.v_b_pre,
                config, bias1, bias2);

    if (config.renormalize_decoder) {
        const std::size_t d_in = params.d_in;
        for (std::size_t j = 0; j < params.d_latent; ++j) {
            double norm2 = 0.0;
            for (std::size_t i = 0; i < d_in; ++i) {
                const double v = params.w_dec.at(i, j);
                norm2 += v * v;
            }
            if (norm2 <= 0.0) continue;
            const double inv = 1.0 / std::sqrt(norm2);
            double m_dot_d = 0.0;
            for (std::size_t i = 0; i < d_in; ++i) {
                const auto unit = static_cast<float>(params.w_dec.at(i, j) * inv);
                params.w_dec.at(i, j) = unit;
                m_dot_d += static_cast<double>(moments.m_w_dec.at(i, j)) *
                           static_cast<double>(unit);
            }
            for (std::size_t i = 0; i < d_in; ++i) {
                moments.m_w_dec.at(i, j) = static_cast<float>(
                    moments.m_w_dec.at(i, j) -
                    m_dot_d * static_cast<double>(params.w_dec.at(i, j)));
            }
        }
    }
}

DeadLatentTracker::DeadLatentTracker(std::size_t d_latent, std::size_t window)
    : window_(window), last_seen_(d_latent, -1) {
    check_contract(window >= 1, "dead window must be >= 1");
}

void DeadLatentTracker::observe(const SparseActivation& act) {
    for (const auto& e : act.entries) {
        last_seen_[e.latent] = static_cast<std::int64_t>(frames_seen_);
    }
    ++frames_seen_;
}

bool DeadLatentTracker::is_dead(std::size_t latent) const {
    const auto last = last_seen_[latent];
    if (last < 0) return true;
    return static_cast<std::uint64_t>(last) + window_ < frames_seen_;
}

std::size_t DeadLatentTracker::dead_count() const {
    std::size_t n = 0;
    for (std::size_t j = 0; j < last_seen_.size(); ++j) {
        if (is_dead(j)) ++n;
    }
    return n;
}

std::vector<std::size_t> DeadLatentTracker::dead_ids() const {
    std::vector<std::size_t> out;
    for (std::size_t j = 0; j < last_seen_.size(); ++j) {
        if (is_dead(j)) out.push_back(j);
    }
    return out;
}

bool MemoryFrameStream::next(std::vector<float>& out) {
    if (pos_ >= frames_.rows) return false;
    const auto row = frames_.row(pos_++);
    out.assign(row.begin(), row.end());
    return true;
}

StoreFrameStream::StoreFrameStream(const CorpusStore& store, int frame_rate)
    : store_(&store), frame_rate_(frame_rate) {
    check_input(!store.manifest().entries.empty(), "empty corpus store");
    const auto first = store.load_embedding(store.manifest().entries.front().file_id,
                                            frame_rate);
    dim_ = first.dim();
}

bool StoreFrameStream::next(std::vector<float>& out) {
    const auto& entries = store_->manifest().entries;
    while (true) {
        if (!loaded_) {
            if (entry_idx_ >= entries.size()) return false;
            current_ = store_->load_embedding(entries[entry_idx_].file_id, frame_rate_);
            check_input(current_.dim() == dim_,
                        "corpus dim mismatch in " + entries[entry_idx_].file_id);
            frame_idx_ = 0;
            loaded_ = true;
        }
        if (frame_idx_ < current_.n_frames()) {
            const auto row = current_.frames.row(frame_idx_++);
            out.assign(row.begin(), row.end());
            return true;
        }
        loaded_ = false;
        ++entry_idx_;
    }
}

void StoreFrameStream::reset() {
    entry_idx_ = 0;
    frame_idx_ = 0;
    loaded_ = false;
}

namespace {

// Endless pass over the corpus through a fixed-size seeded reservoir.
class ShuffledCyclicStream {
public:
    ShuffledCyclicStream(FrameStream& inner, std::size_t buffer_size, Rng rng)
        : inner_(inner), rng_(rng) {
        std::vector<float> frame;
        while (buffer_.size() < std::max<std::size_t>(buffer_size, 1) &&
               pull(frame)) {
            buffer_.push_back(frame);
        }
        check_input(!buffer_.empty(), "corpus yields no frames");
    }

    void next(std::vector<float>& out) {
        const auto j = static_cast<std::size_t>(rng_.below(buffer_.size()));
        out = buffer_[j];
        std::vector<float> frame;
        pull(frame); // cyclic, cannot fail once non-empty
        buffer_[j] = std::move(frame);
    }

private:
    bool pull(std::vector<float>& frame) {
        if (inner_.next(frame)) return true;
        inner_.reset();
        return inner_.next(frame);
    }

    FrameStream& inner_;
    Rng rng_;
    std::vector<std::vector<float>> buffer_;
};

} // namespace

TrainResult train(FrameStream& corpus, const SaeConfig& sae_config,
                  const TrainConfig& train_config,
                  const std::function<void(const TrainStats&)>& on_log) {
    check_contract(train_config.batch_size >= 1, "batch_size must be >= 1");
    check_contract(train_config.steps >= 1, "steps must be >= 1");
    check_contract(corpus.dim() == sae_config.d_in, "corpus dim != d_in");

    // Pass 1: count frames and average the pre-bias sample.
    corpus.reset();
    std::vector<double> mean(sae_config.d_in, 0.0);
    std::vector<float> frame;
    std::uint64_t total_frames = 0;
    std::uint64_t sampled = 0;
    while (corpus.next(frame)) {
        if (sampled < train_config.b_pre_sample) {
            for (std::size_t i = 0; i < sae_config.d_in; ++i) mean[i] += frame[i];
            ++sampled;
        }
        ++total_frames;
    }
    check_input(total_frames >= train_config.batch_size,
                "corpus exhausted before one batch (" +
                    std::to_string(total_frames) + " frames)");
    std::vector<float> b_pre_init(sae_config.d_in);
    for (std::size_t i = 0; i < sae_config.d_in; ++i) {
        b_pre_init[i] = static_cast<float>(mean[i] / static_cast<double>(sampled));
    }

    Rng root(train_config.seed);
    Rng rng_init = root.split(1);
    SaeParams params = init_params(sae_config, b_pre_init, rng_init);
    AdamMoments moments = AdamMoments::zeros(sae_config.d_in, sae_config.d_latent);
    DeadLatentTracker tracker(sae_config.d_latent, train_config.dead_window);

    corpus.reset();
    ShuffledCyclicStream shuffled(corpus, train_config.shuffle_buffer, root.split(2));

    const std::size_t interval =
        train_config.log_interval > 0
            ? train_config.log_interval
            : std::max<std::size_t>(1, train_config.steps / 100);

    TrainResult result;
    FrameBatch batch(train_config.batch_size, sae_config.d_in);
    double interval_loss = 0.0;
    std::size_t interval_batches = 0;
    std::uint64_t frames_seen = 0;

    for (std::size_t step = 1; step <= train_config.steps; ++step) {
        for (std::size_t b = 0; b < batch.rows; ++b) {
            shuffled.next(frame);
            std::copy(frame.begin(), frame.end(), batch.row(b).begin());
        }
        auto back = backward_full(params, batch, sae_config.k);
        for (const auto& act : back.acts) tracker.observe(act);
        adam_step(params, back.grads, moments, train_config, step);
        frames_seen += batch.rows;
        interval_loss += back.loss;
        ++interval_batches;
        if (step % interval == 0 || step == train_config.steps) {
            TrainStats stats;
            stats.step = step;
            stats.mean_sq_err = interval_loss / static_cast<double>(interval_batches);
            stats.dead_latent_count = tracker.dead_count();
            stats.frames_seen = frames_seen;
            result.stats.push_back(stats);
            if (on_log) on_log(stats);
            interval_loss = 0.0;
            interval_batches = 0;
        }
    }
    result.params = std::move(params);
    return result;
}

} // namespace latlens
