#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <set>

#include "latlens/synthbench.hpp"

using namespace latlens;

TEST_CASE("generation is deterministic per seed") {
    auto dict = make_dictionary(16, 32, 4, 0.5f, 2.0f, 0.01f, 123);
    GenerateOptions opt;
    opt.n_files = 5;
    opt.frames_per_file = 40;
    auto a = generate(dict, opt);
    auto b = generate(dict, opt);
    REQUIRE(a.files.size() == b.files.size());
    for (std::size_t f = 0; f < a.files.size(); ++f) {
        CHECK(a.files[f].frames.data == b.files[f].frames.data);
    }
    auto dict2 = make_dictionary(16, 32, 4, 0.5f, 2.0f, 0.01f, 124);
    auto c = generate(dict2, opt);
    CHECK(a.files[0].frames.data != c.files[0].frames.data);
}

TEST_CASE("atoms are unit norm and seed-stable") {
    auto dict = make_dictionary(24, 48, 4, 0.5f, 2.0f, 0.0f, 9);
    for (std::size_t j = 0; j < dict.n_atoms(); ++j) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < dict.d_in(); ++i) {
            norm2 += static_cast<double>(dict.atoms.at(i, j)) * dict.atoms.at(i, j);
        }
        CHECK(std::sqrt(norm2) == doctest::Approx(1.0).epsilon(1e-6));
    }
    auto again = make_dictionary(24, 48, 4, 0.5f, 2.0f, 0.0f, 9);
    CHECK(dict.atoms.data == again.atoms.data);
}

TEST_CASE("ground truth rebuilds every frame exactly when noise is off") {
    auto dict = make_dictionary(16, 32, 4, 0.5f, 2.0f, 0.0f, 77);
    GenerateOptions opt;
    opt.n_files = 4;
    opt.frames_per_file = 50;
    auto corpus = generate(dict, opt);
    for (std::size_t f = 0; f < corpus.files.size(); ++f) {
        for (std::size_t t = 0; t < opt.frames_per_file; ++t) {
            auto rebuilt = truth_frame(dict, corpus.truth[f].frames[t]);
            double err = 0.0;
            for (std::size_t i = 0; i < dict.d_in(); ++i) {
                const double d = rebuilt[i] - corpus.files[f].frames.at(t, i);
                err += d * d;
            }
            CHECK(err < 1e-10);
            CHECK(corpus.truth[f].frames[t].terms.size() == dict.sparsity);
            // Distinct atoms per frame.
            std::set<std::uint32_t> atoms;
            for (const auto& term : corpus.truth[f].frames[t].terms) {
                atoms.insert(term.atom);
                CHECK(term.coeff >= dict.coeff_lo);
                CHECK(term.coeff <= dict.coeff_hi);
            }
            CHECK(atoms.size() == dict.sparsity);
        }
    }
}

TEST_CASE("s=1 with a pinned coefficient makes every frame an atom") {
    auto dict = make_dictionary(16, 32, 1, 1.0f, 1.0f, 0.0f, 5);
    GenerateOptions opt;
    opt.n_files = 2;
    opt.frames_per_file = 30;
    auto corpus = generate(dict, opt);
    for (std::size_t f = 0; f < corpus.files.size(); ++f) {
        for (std::size_t t = 0; t < opt.frames_per_file; ++t) {
            REQUIRE(corpus.truth[f].frames[t].terms.size() == 1);
            const auto atom = corpus.truth[f].frames[t].terms[0].atom;
            CHECK(corpus.truth[f].frames[t].terms[0].coeff == 1.0f);
            for (std::size_t i = 0; i < dict.d_in(); ++i) {
                CHECK(corpus.files[f].frames.at(t, i) == dict.atoms.at(i, atom));
            }
        }
    }
}

TEST_CASE("frame norms obey the planted tail bound") {
    auto dict = make_dictionary(64, 128, 8, 0.5f, 2.0f, 0.01f, 31);
    GenerateOptions opt;
    opt.n_files = 100;
    opt.frames_per_file = 1000; // 1e5 frames
    auto corpus = generate(dict, opt);
    const double bound = static_cast<double>(dict.sparsity) * dict.coeff_hi +
                         6.0 * dict.noise_sd * std::sqrt(64.0);
    std::size_t violations = 0;
    for (const auto& file : corpus.files) {
        for (std::size_t t = 0; t < file.n_frames(); ++t) {
            double norm2 = 0.0;
            for (float v : file.frames.row(t)) norm2 += static_cast<double>(v) * v;
            if (std::sqrt(norm2) > bound) ++violations;
        }
    }
    CHECK(violations == 0);
}

TEST_CASE("tags mark the files that contain a tagged atom") {
    auto dict = make_dictionary(16, 24, 3, 0.5f, 2.0f, 0.0f, 55);
    GenerateOptions opt;
    opt.n_files = 10;
    opt.frames_per_file = 20;
    opt.n_tagged_atoms = 4;
    auto corpus = generate(dict, opt);
    for (std::size_t f = 0; f < corpus.files.size(); ++f) {
        std::set<std::uint32_t> used;
        for (const auto& frame : corpus.truth[f].frames) {
            for (const auto& term : frame.terms) used.insert(term.atom);
        }
        for (std::uint32_t a = 0; a < 4; ++a) {
            const std::string tag = "atom" + std::to_string(a);
            const auto& tags = corpus.manifest.entries[f].tags;
            const bool tagged = std::find(tags.begin(), tags.end(), tag) != tags.end();
            CHECK(tagged == (used.count(a) != 0));
        }
    }
}

TEST_CASE("planted words pin the block atom and align with the transcript") {
    auto dict = make_dictionary(16, 24, 3, 0.5f, 2.0f, 0.0f, 60);
    GenerateOptions opt;
    opt.n_files = 3;
    opt.frames_per_file = 50;
    opt.plant_words = true;
    opt.word_block_frames = 10;
    auto corpus = generate(dict, opt);
    REQUIRE(corpus.alignments.size() == 3);
    for (std::size_t f = 0; f < corpus.files.size(); ++f) {
        const auto& alignment = corpus.alignments[f];
        const auto words = alignment.spans_of(SpanUnit::Word);
        REQUIRE(words.size() == 5); // 50 frames / 10 per block
        for (std::size_t w = 0; w < words.size(); ++w) {
            const auto atom = static_cast<std::uint32_t>(
                std::stoul(words[w].text.substr(1)));
            // Every frame of the block carries the block atom as first term.
            const auto range = frames_for_interval(words[w].start, words[w].end,
                                                   opt.frame_rate);
            CHECK(range.count() == opt.word_block_frames);
            for (std::size_t t = range.begin; t < range.end; ++t) {
                CHECK(corpus.truth[f].frames[t].terms[0].atom == atom);
            }
        }
        // Char spans cover the transcript one to one.
        const auto chars = alignment.spans_of(SpanUnit::Char);
        const auto& transcript = *corpus.manifest.entries[f].meta.transcript;
        REQUIRE(chars.size() == transcript.size());
        for (std::size_t c = 0; c < chars.size(); ++c) {
            CHECK(chars[c].text == std::string(1, transcript[c]));
        }
    }
}

TEST_CASE("recovery is perfect when the decoder contains the atoms") {
    auto dict = make_dictionary(16, 20, 3, 0.5f, 2.0f, 0.0f, 71);
    Rng rng(4);
    SaeParams p;
    p.d_in = 16;
    p.d_latent = 28; // atoms plus 8 random extras
    p.w_dec = Matrix(16, 28);
    p.w_enc = Matrix(28, 16);
    p.b_enc.assign(28, 0.0f);
    p.b_pre.assign(16, 0.0f);
    for (std::size_t j = 0; j < 20; ++j) {
        for (std::size_t i = 0; i < 16; ++i) p.w_dec.at(i, j) = dict.atoms.at(i, j);
    }
    for (std::size_t j = 20; j < 28; ++j) {
        for (std::size_t i = 0; i < 16; ++i) {
            p.w_dec.at(i, j) = static_cast<float>(rng.normal());
        }
    }
    auto report = recovery_score(p, dict);
    CHECK(report.matched_fraction == 1.0);
    CHECK(report.mean_best_cosine == doctest::Approx(1.0).epsilon(1e-6));

    // Sign symmetry: flipped columns still match through |cosine|.
    for (auto& v : p.w_dec.data) v = -v;
    auto flipped = recovery_score(p, dict);
    CHECK(flipped.matched_fraction == 1.0);

    // Exclusive assignment also matches every atom here.
    auto excl = recovery_score(p, dict, 0.9, true);
    CHECK(excl.matched_fraction == 1.0);
}

TEST_CASE("random decoders score poorly at d_in=64") {
    auto dict = make_dictionary(64, 64, 4, 0.5f, 2.0f, 0.0f, 81);
    double worst_mean = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        Rng rng(900 + seed);
        SaeParams p;
        p.d_in = 64;
        p.d_latent = 64;
        p.w_dec = Matrix(64, 64);
        p.w_enc = Matrix(64, 64);
        p.b_enc.assign(64, 0.0f);
        p.b_pre.assign(64, 0.0f);
        for (auto& v : p.w_dec.data) v = static_cast<float>(rng.normal());
        auto report = recovery_score(p, dict);
        worst_mean = std::max(worst_mean, report.mean_best_cosine);
    }
    CHECK(worst_mean < 0.5);
}

TEST_CASE("recovery_score is permutation invariant") {
    auto dict = make_dictionary(12, 10, 2, 0.5f, 2.0f, 0.0f, 91);
    Rng rng(14);
    SaeParams p;
    p.d_in = 12;
    p.d_latent = 10;
    p.w_dec = Matrix(12, 10);
    p.w_enc = Matrix(10, 12);
    p.b_enc.assign(10, 0.0f);
    p.b_pre.assign(12, 0.0f);
    for (auto& v : p.w_dec.data) v = static_cast<float>(rng.normal());
    auto base = recovery_score(p, dict);

    auto permuted = p;
    for (std::size_t i = 0; i < 12; ++i) {
        for (std::size_t j = 0; j < 10; ++j) {
            permuted.w_dec.at(i, j) = p.w_dec.at(i, (j + 3) % 10);
        }
    }
    auto shifted = recovery_score(permuted, dict);
    CHECK(base.mean_best_cosine == doctest::Approx(shifted.mean_best_cosine).epsilon(1e-12));
    CHECK(base.matched_fraction == shifted.matched_fraction);
}

TEST_CASE("recovery_score rejects a d_in mismatch") {
    auto dict = make_dictionary(8, 4, 2, 0.5f, 2.0f, 0.0f, 1);
    SaeParams p;
    p.d_in = 6;
    p.d_latent = 4;
    p.w_dec = Matrix(6, 4);
    CHECK_THROWS_AS(recovery_score(p, dict), ContractError);
}

TEST_CASE("dictionary file round trip and store layout") {
    auto dict = make_dictionary(8, 12, 3, 0.4f, 1.5f, 0.02f, 101);
    GenerateOptions opt;
    opt.n_files = 3;
    opt.frames_per_file = 10;
    opt.plant_words = true;
    auto corpus = generate(dict, opt);

    const auto dir = std::filesystem::temp_directory_path() / "latlens_synth_store";
    std::filesystem::remove_all(dir);
    corpus.write_store(dir, dict);

    auto loaded = load_dictionary(dir / "dict.bin");
    CHECK(loaded.atoms.data == dict.atoms.data);
    CHECK(loaded.sparsity == 3);
    CHECK(loaded.coeff_lo == 0.4f);
    CHECK(loaded.coeff_hi == 1.5f);
    CHECK(loaded.noise_sd == 0.02f);
    CHECK(loaded.seed == 101);

    auto store = CorpusStore::open(dir);
    CHECK(store.manifest().entries.size() == 3);
    auto seq = store.load_embedding("synth00000");
    CHECK(seq.n_frames() == 10);
    CHECK(seq.frames.data == corpus.files[0].frames.data);
    CHECK(store.load_alignment("synth00001").has_value());
    CHECK(std::filesystem::exists(dir / "truth.bin"));
    std::filesystem::remove_all(dir);
}
