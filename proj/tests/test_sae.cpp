#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <numeric>

#include "latlens/rng.hpp"
#include "latlens/sae.hpp"

using namespace latlens;

namespace {

SaeParams random_params(std::size_t d_in, std::size_t d_latent, std::uint64_t seed) {
    Rng rng(seed);
    SaeParams p;
    p.d_in = d_in;
    p.d_latent = d_latent;
    p.w_enc = Matrix(d_latent, d_in);
    p.w_dec = Matrix(d_in, d_latent);
    p.b_enc.resize(d_latent);
    p.b_pre.resize(d_in);
    for (auto& x : p.w_enc.data) x = static_cast<float>(rng.normal());
    for (auto& x : p.w_dec.data) x = static_cast<float>(rng.normal());
    for (auto& x : p.b_enc) x = static_cast<float>(0.1 * rng.normal());
    for (auto& x : p.b_pre) x = static_cast<float>(0.1 * rng.normal());
    return p;
}

std::vector<float> random_frame(std::size_t d_in, Rng& rng) {
    std::vector<float> x(d_in);
    for (auto& v : x) v = static_cast<float>(rng.normal());
    return x;
}

// Dense oracle: full pre-activation vector, sort, keep top-k positives.
SparseActivation encode_oracle(const SaeParams& p, std::span<const float> x,
                               std::size_t k) {
    std::vector<double> z(p.d_latent);
    for (std::size_t j = 0; j < p.d_latent; ++j) {
        double acc = p.b_enc[j];
        for (std::size_t i = 0; i < p.d_in; ++i) {
            acc += static_cast<double>(p.w_enc.at(j, i)) *
                   (static_cast<double>(x[i]) - static_cast<double>(p.b_pre[i]));
        }
        z[j] = acc;
    }
    std::vector<std::size_t> order(p.d_latent);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const float fa = static_cast<float>(z[a]);
        const float fb = static_cast<float>(z[b]);
        if (fa != fb) return fa > fb;
        return a < b;
    });
    order.resize(std::min(k, order.size()));
    std::sort(order.begin(), order.end());
    SparseActivation act;
    for (auto j : order) {
        const float v = static_cast<float>(z[j]);
        if (v > 0.0f) act.entries.push_back({static_cast<std::uint32_t>(j), v});
    }
    return act;
}

} // namespace

TEST_CASE("encode matches the dense sort oracle") {
    Rng rng(100);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t d_in = 2 + rng.below(6);
        const std::size_t d_latent = 4 + rng.below(12);
        const std::size_t k = 1 + rng.below(std::min<std::size_t>(5, d_latent));
        auto p = random_params(d_in, d_latent, 200 + rep);
        auto x = random_frame(d_in, rng);
        auto got = encode(p, x, k);
        auto want = encode_oracle(p, x, k);
        REQUIRE(got.entries.size() == want.entries.size());
        for (std::size_t i = 0; i < got.entries.size(); ++i) {
            CHECK(got.entries[i].latent == want.entries[i].latent);
            CHECK(got.entries[i].value ==
                  doctest::Approx(want.entries[i].value).epsilon(1e-5));
        }
    }
}

TEST_CASE("topk contract: entry count, positivity, sorted ids, determinism") {
    auto p = random_params(8, 32, 5);
    const std::size_t k = 6;
    Rng rng(9);
    for (int rep = 0; rep < 5000; ++rep) {
        auto x = random_frame(8, rng);
        auto act = encode(p, x, k);
        CHECK(act.entries.size() <= k);
        std::uint32_t prev = 0;
        bool first = true;
        for (const auto& e : act.entries) {
            CHECK(e.value > 0.0f);
            if (!first) CHECK(e.latent > prev);
            prev = e.latent;
            first = false;
        }
        auto again = encode(p, x, k);
        REQUIRE(again.entries.size() == act.entries.size());
        for (std::size_t i = 0; i < act.entries.size(); ++i) {
            CHECK(again.entries[i].latent == act.entries[i].latent);
            CHECK(again.entries[i].value == act.entries[i].value);
        }
    }
}

TEST_CASE("exactly k entries survive when at least k pre-activations are positive") {
    // Strongly positive encoder bias guarantees > k positive pre-activations.
    auto p = random_params(4, 16, 6);
    for (auto& b : p.b_enc) b = 50.0f;
    Rng rng(10);
    for (int rep = 0; rep < 200; ++rep) {
        auto x = random_frame(4, rng);
        CHECK(encode(p, x, 5).entries.size() == 5);
    }
}

TEST_CASE("sparse activation lookup helpers") {
    SparseActivation act;
    act.entries = {{2, 1.0f}, {7, 0.5f}};
    CHECK(act.active(2));
    CHECK(!act.active(3));
    CHECK(act.value_of(7) == 0.5f);
    CHECK(act.value_of(4) == 0.0f);
}

TEST_CASE("decode matches a dense scatter oracle; empty code decodes to b_pre") {
    Rng rng(11);
    auto p = random_params(6, 20, 12);
    auto x = random_frame(6, rng);
    auto act = encode(p, x, 4);
    auto recon = decode(p, act);
    for (std::size_t i = 0; i < p.d_in; ++i) {
        double acc = p.b_pre[i];
        for (const auto& e : act.entries) {
            acc += static_cast<double>(e.value) * p.w_dec.at(i, e.latent);
        }
        CHECK(recon[i] == doctest::Approx(acc).epsilon(1e-5));
    }
    SparseActivation empty;
    auto base = decode(p, empty);
    for (std::size_t i = 0; i < p.d_in; ++i) CHECK(base[i] == p.b_pre[i]);
}

TEST_CASE("decode_entries accepts non-positive steering values") {
    auto p = random_params(5, 10, 13);
    std::vector<SparseActivation::Entry> entries{{3, -2.5f}, {8, 0.0f}};
    auto recon = decode_entries(p, entries);
    for (std::size_t i = 0; i < p.d_in; ++i) {
        const double want = p.b_pre[i] - 2.5 * p.w_dec.at(i, 3);
        CHECK(recon[i] == doctest::Approx(want).epsilon(1e-5));
    }
}

TEST_CASE("forward reports the mean squared reconstruction error") {
    Rng rng(14);
    auto p = random_params(7, 24, 15);
    auto x = random_frame(7, rng);
    auto fwd = forward(p, x, 5);
    double acc = 0.0;
    for (std::size_t i = 0; i < p.d_in; ++i) {
        const double d = static_cast<double>(fwd.recon[i]) - x[i];
        acc += d * d;
    }
    CHECK(fwd.sq_err ==
          doctest::Approx(acc / static_cast<double>(p.d_in)).epsilon(1e-5));
}

TEST_CASE("parameter accounting matches the published footprint") {
    const auto pc = param_count({512, 16000, 45});
    CHECK(pc.weights == 16384000ULL); // 2 layers of 512*16000 each
    CHECK(pc.weights == 2ULL * 512 * 16000);
    CHECK(pc.biases == 16000ULL + 512ULL);
}

TEST_CASE("init_params ties the encoder and normalizes decoder columns") {
    SaeConfig config{12, 40, 5};
    std::vector<float> b_pre(12, 0.25f);
    Rng rng(21);
    auto p = init_params(config, b_pre, rng);
    CHECK(p.d_in == 12);
    CHECK(p.d_latent == 40);
    for (std::size_t j = 0; j < p.d_latent; ++j) {
        CHECK(p.dec_column_norm(j) == doctest::Approx(1.0).epsilon(1e-6));
        for (std::size_t i = 0; i < p.d_in; ++i) {
            CHECK(p.w_enc.at(j, i) == p.w_dec.at(i, j));
        }
        CHECK(p.b_enc[j] == 0.0f);
    }
    for (std::size_t i = 0; i < p.d_in; ++i) CHECK(p.b_pre[i] == 0.25f);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    auto p = random_params(9, 33, 30);
    auto bytes = checkpoint_bytes(p, 7);
    auto [config, q] = parse_checkpoint_bytes(bytes);
    CHECK(config.d_in == 9);
    CHECK(config.d_latent == 33);
    CHECK(config.k == 7);
    CHECK(q.w_enc.data == p.w_enc.data);
    CHECK(q.w_dec.data == p.w_dec.data);
    CHECK(q.b_enc == p.b_enc);
    CHECK(q.b_pre == p.b_pre);

    const auto dir = std::filesystem::temp_directory_path() / "latlens_sae_test";
    std::filesystem::create_directories(dir);
    save_checkpoint(dir / "m.llsa", p, 7);
    auto [c2, r2] = load_checkpoint(dir / "m.llsa");
    CHECK(r2.w_enc.data == p.w_enc.data);
    std::filesystem::remove_all(dir);
}

TEST_CASE("checkpoint corruption is detected") {
    auto p = random_params(4, 8, 31);
    auto bytes = checkpoint_bytes(p, 3);

    auto flipped = bytes;
    flipped[bytes.size() / 2] ^= 0x40; // payload bit flip -> CRC mismatch
    CHECK_THROWS_AS(parse_checkpoint_bytes(flipped), ParseError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 3);
    CHECK_THROWS_AS(parse_checkpoint_bytes(truncated), ParseError);

    auto bad_magic = bytes;
    bad_magic[1] = 'x';
    CHECK_THROWS_AS(parse_checkpoint_bytes(bad_magic), ParseError);
}

TEST_CASE("checkpoint load rejects non-finite weights") {
    auto p = random_params(4, 8, 32);
    p.w_dec.at(2, 5) = std::numeric_limits<float>::infinity();
    auto bytes = checkpoint_bytes(p, 3);
    try {
        parse_checkpoint_bytes(bytes);
        FAIL("expected throw");
    } catch (const ParseError& e) {
        CHECK(e.kind() == ParseError::Kind::NonFinite);
    }
}
