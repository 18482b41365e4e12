#include "latlens/sae.hpp"

#include <algorithm>
#include <cmath>

namespace latlens {

bool SparseActivation::active(std::uint32_t latent) const {
    return value_of(latent) != 0.0f;
}

float SparseActivation::value_of(std::uint32_t latent) const {
    auto it = std::lower_bound(entries.begin(), entries.end(), latent,
                               [](const Entry& e, std::uint32_t id) { return e.latent < id; });
    if (it != entries.end() && it->latent == latent) return it->value;
    return 0.0f;
}

std::vector<float> SaeParams::dec_column(std::size_t latent) const {
    check_contract(latent < d_latent, "decoder column out of range");
    std::vector<float> col(d_in);
    for (std::size_t i = 0; i < d_in; ++i) col[i] = w_dec.at(i, latent);
    return col;
}

double SaeParams::dec_column_norm(std::size_t latent) const {
    check_contract(latent < d_latent, "decoder column out of range");
    double acc = 0.0;
    for (std::size_t i = 0; i < d_in; ++i) {
        const double v = w_dec.at(i, latent);
        acc += v * v;
    }
    return std::sqrt(acc);
}

void encode_into(const SaeParams& params, std::span<const float> x, std::size_t k,
                 std::vector<float>& scratch, SparseActivation& out) {
    check_contract(x.size() == params.d_in, "encode: input length != d_in");
    check_contract(k >= 1 && k <= params.d_latent, "encode: k out of range");
    scratch.resize(params.d_in + params.d_latent);
    float* u = scratch.data();
    float* z = scratch.data() + params.d_in;
    for (std::size_t i = 0; i < params.d_in; ++i) u[i] = x[i] - params.b_pre[i];
    const std::span<const float> uspan(u, params.d_in);
    for (std::size_t j = 0; j < params.d_latent; ++j) {
        z[j] = static_cast<float>(dot_f64(params.w_enc.row(j), uspan) + params.b_enc[j]);
    }
    auto idx = topk_indices(std::span<const float>(z, params.d_latent), k);
    out.entries.clear();
    for (std::size_t j : idx) {
        if (z[j] > 0.0f) {
            out.entries.push_back({static_cast<std::uint32_t>(j), z[j]});
        }
    }
}

SparseActivation encode(const SaeParams& params, std::span<const float> x, std::size_t k) {
    std::vector<float> scratch;
    SparseActivation out;
    encode_into(params, x, k, scratch, out);
    return out;
}

std::vector<float> decode_entries(const SaeParams& params,
                                  std::span<const SparseActivation::Entry> entries) {
    std::vector<float> out(params.b_pre.begin(), params.b_pre.end());
    for (const auto& e : entries) {
        check_contract(e.latent < params.d_latent, "decode: latent id out of range");
        const std::size_t j = e.latent;
        for (std::size_t i = 0; i < params.d_in; ++i) {
            out[i] += e.value * params.w_dec.at(i, j);
        }
    }
    return out;
}

std::vector<float> decode(const SaeParams& params, const SparseActivation& act) {
    return decode_entries(params, act.entries);
}

ForwardResult forward(const SaeParams& params, std::span<const float> x, std::size_t k) {
    ForwardResult r;
    std::vector<float> scratch;
    encode_into(params, x, k, scratch, r.act);
    r.recon = decode(params, r.act);
    double acc = 0.0;
    for (std::size_t i = 0; i < params.d_in; ++i) {
        const double d = static_cast<double>(r.recon[i]) - static_cast<double>(x[i]);
        acc += d * d;
    }
    r.sq_err = static_cast<float>(acc / static_cast<double>(params.d_in));
    return r;
}

ParamCount param_count(const SaeConfig& config) {
    check_contract(config.d_in >= 1 && config.d_latent >= 1, "invalid config");
    check_contract(config.k >= 1 && config.k <= config.d_latent, "invalid k");
    ParamCount c;
    c.weights = 2ULL * config.d_in * config.d_latent;
    c.biases = static_cast<std::uint64_t>(config.d_latent + config.d_in);
    return c;
}

SaeParams init_params(const SaeConfig& config, std::span<const float> b_pre_init, Rng& rng) {
    check_contract(b_pre_init.size() == config.d_in, "b_pre init length != d_in");
    SaeParams p;
    p.d_in = config.d_in;
    p.d_latent = config.d_latent;
    p.w_enc = Matrix(config.d_latent, config.d_in);
    p.b_enc.assign(config.d_latent, 0.0f);
    p.w_dec = Matrix(config.d_in, config.d_latent);
    p.b_pre.assign(b_pre_init.begin(), b_pre_init.end());
    std::vector<double> col(config.d_in);
    for (std::size_t j = 0; j < config.d_latent; ++j) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < config.d_in; ++i) {
            col[i] = rng.normal();
            norm2 += col[i] * col[i];
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t i = 0; i < config.d_in; ++i) {
            const auto v = static_cast<float>(col[i] * inv);
            p.w_dec.at(i, j) = v;
            p.w_enc.at(j, i) = v; // tied at init only
        }
    }
    return p;
}

namespace {
constexpr std::uint32_t kCheckpointVersion = 1;
} // namespace

std::vector<std::uint8_t> checkpoint_bytes(const SaeParams& params, std::size_t k) {
    ByteWriter payload;
    payload.u32(static_cast<std::uint32_t>(params.d_in));
    payload.u32(static_cast<std::uint32_t>(params.d_latent));
    payload.u32(static_cast<std::uint32_t>(k));
    for (float v : params.b_pre) payload.f32(v);
    for (float v : params.b_enc) payload.f32(v);
    for (float v : params.w_enc.data) payload.f32(v);
    for (float v : params.w_dec.data) payload.f32(v);

    ByteWriter w;
    w.magic("LLSA");
    w.u32(kCheckpointVersion);
    w.bytes(payload.buffer().data(), payload.size());
    w.u64(crc64(payload.buffer()));
    return w.buffer();
}

std::pair<SaeConfig, SaeParams> parse_checkpoint_bytes(std::span<const std::uint8_t> bytes) {
    ByteReader r(bytes);
    r.expect_magic("LLSA", "checkpoint");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw ParseError(ParseError::Kind::Malformed,
                         "checkpoint: unsupported version " + std::to_string(version));
    }
    if (bytes.size() < r.position() + 8) {
        throw ParseError(ParseError::Kind::Truncated, "checkpoint: too short");
    }
    const auto payload = bytes.subspan(r.position(), bytes.size() - r.position() - 8);

    SaeConfig config;
    SaeParams p;
    config.d_in = r.u32();
    config.d_latent = r.u32();
    config.k = r.u32();
    if (config.d_in == 0 || config.d_latent == 0 || config.k == 0 ||
        config.k > config.d_latent) {
        throw ParseError(ParseError::Kind::Malformed, "checkpoint: bad dimensions");
    }
    p.d_in = config.d_in;
    p.d_latent = config.d_latent;
    p.b_pre.resize(config.d_in);
    p.b_enc.resize(config.d_latent);
    p.w_enc = Matrix(config.d_latent, config.d_in);
    p.w_dec = Matrix(config.d_in, config.d_latent);
    auto read_all = [&](std::vector<float>& v) {
        for (auto& x : v) {
            x = r.f32();
            if (!std::isfinite(x)) {
                throw ParseError(ParseError::Kind::NonFinite,
                                 "checkpoint: non-finite parameter");
            }
        }
    };
    read_all(p.b_pre);
    read_all(p.b_enc);
    read_all(p.w_enc.data);
    read_all(p.w_dec.data);
    const std::uint64_t stored = r.u64();
    if (r.remaining() != 0) {
        throw ParseError(ParseError::Kind::Malformed, "checkpoint: trailing bytes");
    }
    if (stored != crc64(payload)) {
        throw ParseError(ParseError::Kind::Malformed, "checkpoint: CRC mismatch");
    }
    return {config, std::move(p)};
}

void save_checkpoint(const std::filesystem::path& path, const SaeParams& params,
                     std::size_t k) {
    write_file_bytes(path, checkpoint_bytes(params, k));
}

std::pair<SaeConfig, SaeParams> load_checkpoint(const std::filesystem::path& path) {
    return parse_checkpoint_bytes(read_file_bytes(path));
}

} // namespace latlens
