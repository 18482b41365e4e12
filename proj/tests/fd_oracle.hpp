#pragma once

// Double-precision reference loss for finite-difference gradient checks.
// Re-implements encode/decode/MSE independently of the library so backward()
// is verified against a second derivation, not against itself.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "latlens/rng.hpp"
#include "latlens/sae.hpp"
#include "latlens/trainer.hpp"

namespace fd {

struct DenseParams {
    std::size_t d_in = 0;
    std::size_t d_latent = 0;
    std::vector<double> w_enc; // d_latent x d_in, row-major
    std::vector<double> b_enc;
    std::vector<double> w_dec; // d_in x d_latent, row-major
    std::vector<double> b_pre;

    static DenseParams from(const latlens::SaeParams& p) {
        DenseParams d;
        d.d_in = p.d_in;
        d.d_latent = p.d_latent;
        d.w_enc.assign(p.w_enc.data.begin(), p.w_enc.data.end());
        d.b_enc.assign(p.b_enc.begin(), p.b_enc.end());
        d.w_dec.assign(p.w_dec.data.begin(), p.w_dec.data.end());
        d.b_pre.assign(p.b_pre.begin(), p.b_pre.end());
        return d;
    }

    // Flat view in a fixed order so FD can walk every coordinate.
    std::size_t size() const {
        return w_enc.size() + b_enc.size() + w_dec.size() + b_pre.size();
    }
    double& coord(std::size_t i) {
        if (i < w_enc.size()) return w_enc[i];
        i -= w_enc.size();
        if (i < b_enc.size()) return b_enc[i];
        i -= b_enc.size();
        if (i < w_dec.size()) return w_dec[i];
        i -= w_dec.size();
        return b_pre[i];
    }
};

inline std::vector<double> preactivations(const DenseParams& p,
                                          std::span<const float> x) {
    std::vector<double> z(p.d_latent);
    for (std::size_t j = 0; j < p.d_latent; ++j) {
        double acc = p.b_enc[j];
        for (std::size_t i = 0; i < p.d_in; ++i) {
            acc += p.w_enc[j * p.d_in + i] * (static_cast<double>(x[i]) - p.b_pre[i]);
        }
        z[j] = acc;
    }
    return z;
}

inline double frame_loss(const DenseParams& p, std::span<const float> x,
                         std::size_t k) {
    auto z = preactivations(p, x);
    std::vector<std::size_t> order(p.d_latent);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (z[a] != z[b]) return z[a] > z[b];
        return a < b;
    });
    order.resize(std::min(k, order.size()));

    std::vector<double> recon(p.b_pre);
    for (auto j : order) {
        if (z[j] <= 0.0) continue;
        for (std::size_t i = 0; i < p.d_in; ++i) {
            recon[i] += z[j] * p.w_dec[i * p.d_latent + j];
        }
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < p.d_in; ++i) {
        const double d = recon[i] - static_cast<double>(x[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(p.d_in);
}

inline double batch_loss(const DenseParams& p, const latlens::FrameBatch& batch,
                         std::size_t k) {
    double acc = 0.0;
    for (std::size_t b = 0; b < batch.rows; ++b) {
        acc += frame_loss(p, batch.row(b), k);
    }
    return acc / static_cast<double>(batch.rows);
}

// A config is margin-safe when no +-h parameter nudge can change any frame's
// active support: the k-th/(k+1)-th pre-activation gap and every
// pre-activation's distance from zero stay above `margin`.
inline bool margin_safe(const DenseParams& p, const latlens::FrameBatch& batch,
                        std::size_t k, double margin) {
    for (std::size_t b = 0; b < batch.rows; ++b) {
        auto z = preactivations(p, batch.row(b));
        for (double v : z) {
            if (std::abs(v) < margin) return false;
        }
        std::sort(z.begin(), z.end(), std::greater<>());
        if (k < z.size() && z[k - 1] - z[k] < margin) return false;
    }
    return true;
}

struct FdCheck {
    double max_rel_err = 0.0;
    std::size_t coords = 0;
};

// Central finite differences over every coordinate against backward().
inline FdCheck check_gradients(const latlens::SaeParams& params,
                               const latlens::FrameBatch& batch, std::size_t k,
                               double h = 1e-3) {
    auto grads = latlens::backward(params, batch, k);
    std::vector<float> flat;
    flat.insert(flat.end(), grads.g_w_enc.data.begin(), grads.g_w_enc.data.end());
    flat.insert(flat.end(), grads.g_b_enc.begin(), grads.g_b_enc.end());
    flat.insert(flat.end(), grads.g_w_dec.data.begin(), grads.g_w_dec.data.end());
    flat.insert(flat.end(), grads.g_b_pre.begin(), grads.g_b_pre.end());

    DenseParams dense = DenseParams::from(params);
    FdCheck out;
    out.coords = dense.size();
    for (std::size_t i = 0; i < dense.size(); ++i) {
        const double saved = dense.coord(i);
        dense.coord(i) = saved + h;
        const double lp = batch_loss(dense, batch, k);
        dense.coord(i) = saved - h;
        const double lm = batch_loss(dense, batch, k);
        dense.coord(i) = saved;
        const double fd = (lp - lm) / (2.0 * h);
        const double g = flat[i];
        const double denom = std::max({std::abs(fd), std::abs(g), 1e-6});
        out.max_rel_err = std::max(out.max_rel_err, std::abs(fd - g) / denom);
    }
    return out;
}

struct SafeConfig {
    latlens::SaeParams params;
    latlens::FrameBatch batch;
    std::size_t k = 1;
};

// Random small configs, resampled until margin-safe for the FD step size.
inline SafeConfig random_safe_config(latlens::Rng& rng, double margin = 0.05) {
    while (true) {
        const std::size_t d_in = 2 + rng.below(7);      // <= 8
        const std::size_t d_latent = 3 + rng.below(14); // <= 16
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(4, d_latent));
        const std::size_t batch_size = 1 + rng.below(8);

        latlens::SaeParams p;
        p.d_in = d_in;
        p.d_latent = d_latent;
        p.w_enc = latlens::Matrix(d_latent, d_in);
        p.w_dec = latlens::Matrix(d_in, d_latent);
        p.b_enc.resize(d_latent);
        p.b_pre.resize(d_in);
        for (auto& x : p.w_enc.data) x = static_cast<float>(rng.normal());
        for (auto& x : p.w_dec.data) x = static_cast<float>(rng.normal());
        for (auto& x : p.b_enc) x = static_cast<float>(0.5 * rng.normal());
        for (auto& x : p.b_pre) x = static_cast<float>(0.3 * rng.normal());

        latlens::FrameBatch batch(batch_size, d_in);
        for (auto& x : batch.data) x = static_cast<float>(rng.normal());

        if (margin_safe(DenseParams::from(p), batch, k, margin)) {
            return {std::move(p), std::move(batch), k};
        }
    }
}

} // namespace fd
