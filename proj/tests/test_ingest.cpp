#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>

#include "latlens/ingest.hpp"
#include "latlens/rng.hpp"

using namespace latlens;

namespace {

EmbeddingSequence random_seq(const std::string& id, std::size_t frames,
                             std::size_t dim, std::uint64_t seed) {
    EmbeddingSequence seq;
    seq.file_id = id;
    seq.frames = Matrix(frames, dim);
    Rng rng(seed);
    for (auto& x : seq.frames.data) x = static_cast<float>(rng.normal());
    return seq;
}

} // namespace

TEST_CASE("frames_for_duration rounds up and caps at 30 s") {
    CHECK(frames_for_duration(10.0) == 500);
    CHECK(frames_for_duration(30.0) == 1500);
    CHECK(frames_for_duration(29.999) == 1500);
    CHECK(frames_for_duration(0.001) == 1);
    CHECK(frames_for_duration(0.02) == 1);
    CHECK(frames_for_duration(0.021) == 2);
    CHECK(frames_for_duration(1.0) == 50);
    // Exact multiples must not gain a phantom frame from float error.
    for (int i = 1; i <= 1500; ++i) {
        CHECK(frames_for_duration(i * 0.02) == static_cast<std::size_t>(i));
    }
}

TEST_CASE("trim_padding keeps exactly the audio-covered frames") {
    auto seq = random_seq("a", 1500, 4, 1);
    AudioMeta meta;
    meta.file_id = "a";
    meta.duration = 10.0;
    auto trimmed = trim_padding(seq, meta);
    CHECK(trimmed.n_frames() == 500);
    CHECK(trimmed.dim() == 4);
    for (std::size_t i = 0; i < 500; ++i) {
        for (std::size_t j = 0; j < 4; ++j) {
            CHECK(trimmed.frames.at(i, j) == seq.frames.at(i, j));
        }
    }
}

TEST_CASE("trim_padding rejects sequences shorter than the audio") {
    auto seq = random_seq("a", 100, 4, 2);
    AudioMeta meta;
    meta.duration = 10.0; // needs 500 frames
    CHECK_THROWS_AS(trim_padding(seq, meta), InputError);
}

TEST_CASE("trim_padding is a no-op at the exact length") {
    auto seq = random_seq("a", 500, 4, 3);
    AudioMeta meta;
    meta.duration = 10.0;
    auto trimmed = trim_padding(seq, meta);
    CHECK(trimmed.frames.data == seq.frames.data);
}

TEST_CASE("frames_for_interval uses half-open 20 ms cells") {
    auto r = frames_for_interval(0.0, 0.02);
    CHECK(r.begin == 0);
    CHECK(r.end == 1);
    r = frames_for_interval(0.01, 0.03);
    CHECK(r.begin == 0);
    CHECK(r.end == 2);
    r = frames_for_interval(0.02, 0.04);
    CHECK(r.begin == 1);
    CHECK(r.end == 2);
    // A long run of abutting spans tiles the frame axis without gaps.
    std::size_t prev_end = 0;
    for (int i = 0; i < 200; ++i) {
        auto cell = frames_for_interval(i * 0.02, (i + 1) * 0.02);
        CHECK(cell.begin == prev_end);
        CHECK(cell.end == cell.begin + 1);
        prev_end = cell.end;
    }
    CHECK(r.contains(1));
    CHECK(!r.contains(2));
}

TEST_CASE("frame_center_time") {
    CHECK(frame_center_time(0) == doctest::Approx(0.01).epsilon(1e-12));
    CHECK(frame_center_time(50) == doctest::Approx(1.01).epsilon(1e-12));
    CHECK(frame_center_time(150) == doctest::Approx(3.01).epsilon(1e-12));
}

TEST_CASE("embedding bytes round trip exactly") {
    auto seq = random_seq("x", 17, 5, 4);
    auto bytes = embedding_bytes(seq);
    auto back = parse_embedding_bytes(bytes, "x");
    CHECK(back.frames.rows == 17);
    CHECK(back.frames.cols == 5);
    CHECK(back.frames.data == seq.frames.data);
}

TEST_CASE("embedding parse failure modes") {
    auto seq = random_seq("x", 3, 2, 5);
    auto bytes = embedding_bytes(seq);

    auto bad_magic = bytes;
    bad_magic[0] = 'Z';
    CHECK_THROWS_AS(parse_embedding_bytes(bad_magic, "x"), ParseError);

    auto truncated = bytes;
    truncated.resize(truncated.size() - 1);
    CHECK_THROWS_AS(parse_embedding_bytes(truncated, "x"), ParseError);

    auto trailing = bytes;
    trailing.push_back(0);
    CHECK_THROWS_AS(parse_embedding_bytes(trailing, "x"), ParseError);

    seq.frames.at(1, 1) = std::nanf("");
    CHECK_THROWS_AS(parse_embedding_bytes(embedding_bytes(seq), "x"), ParseError);
}

TEST_CASE("parse error kinds are distinguishable") {
    auto seq = random_seq("x", 3, 2, 6);
    auto bytes = embedding_bytes(seq);
    auto bad_magic = bytes;
    bad_magic[0] = 'Z';
    try {
        parse_embedding_bytes(bad_magic, "x");
        FAIL("expected throw");
    } catch (const ParseError& e) {
        CHECK(e.kind() == ParseError::Kind::BadMagic);
    }
    auto truncated = bytes;
    truncated.resize(truncated.size() - 2);
    try {
        parse_embedding_bytes(truncated, "x");
        FAIL("expected throw");
    } catch (const ParseError& e) {
        CHECK(e.kind() == ParseError::Kind::Truncated);
    }
}

TEST_CASE("alignment text round trip and validation") {
    Alignment a;
    a.file_id = "f1";
    a.spans.push_back({SpanUnit::Word, "hi", 0.0, 0.4});
    a.spans.push_back({SpanUnit::Word, "there", 0.4, 1.0});
    a.spans.push_back({SpanUnit::Phone, "h", 0.0, 0.2});
    auto text = alignment_text({a});
    auto parsed = parse_alignment_text(text);
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].file_id == "f1");
    REQUIRE(parsed[0].spans.size() == 3);
    CHECK(parsed[0].spans[1].text == "there");
    CHECK(parsed[0].spans[2].unit == SpanUnit::Phone);
    CHECK(parsed[0].spans_of(SpanUnit::Word).size() == 2);

    CHECK_THROWS_AS(parse_alignment_text("f1\tword\tx\t1.0\t0.5\n"), ParseError);
    // Overlapping word spans in one file are rejected.
    CHECK_THROWS_AS(
        parse_alignment_text("f1\tword\ta\t0.0\t0.5\nf1\tword\tb\t0.4\t0.9\n"),
        ParseError);
    // But a phone span may overlap a word span.
    CHECK_NOTHROW(
        parse_alignment_text("f1\tword\ta\t0.0\t0.5\nf1\tphone\tA\t0.0\t0.3\n"));
    CHECK_THROWS_AS(parse_alignment_text("not a record\n"), ParseError);
}

TEST_CASE("manifest jsonl round trip, ordering, duplicates") {
    CorpusManifest m;
    ManifestEntry e1;
    e1.file_id = "b";
    e1.embedding_path = "b.lle";
    e1.meta.file_id = "b";
    e1.meta.duration = 3.0;
    ManifestEntry e2;
    e2.file_id = "a";
    e2.embedding_path = "a.lle";
    e2.meta.file_id = "a";
    e2.meta.duration = 1.5;
    e2.meta.language = "de";
    e2.meta.transcript = "hallo";
    e2.alignment_path = "al.tsv";
    e2.tags = {"noise", "music"};
    m.entries = {e1, e2};

    auto text = manifest_text(m);
    auto parsed = parse_manifest_text(text);
    REQUIRE(parsed.entries.size() == 2);
    CHECK(parsed.entries[0].file_id == "a"); // sorted
    CHECK(parsed.entries[0].meta.language == "de");
    CHECK(parsed.entries[0].meta.transcript == "hallo");
    CHECK(parsed.entries[0].alignment_path == "al.tsv");
    CHECK(parsed.entries[0].tags == std::vector<std::string>{"noise", "music"});
    CHECK(parsed.entries[1].file_id == "b");
    CHECK(!parsed.entries[1].meta.language);

    auto dup = text + text;
    CHECK_THROWS_AS(parse_manifest_text(dup), ParseError);
    CHECK_THROWS_AS(parse_manifest_text("{\"embedding\":\"x\"}\n"), ParseError);
}

TEST_CASE("manifest rejects out-of-range duration") {
    CHECK_THROWS_AS(parse_manifest_text(
                        "{\"file_id\":\"a\",\"embedding\":\"a.lle\",\"duration\":31.0}\n"),
                    ParseError);
    CHECK_THROWS_AS(parse_manifest_text(
                        "{\"file_id\":\"a\",\"embedding\":\"a.lle\",\"duration\":0.0}\n"),
                    ParseError);
}

TEST_CASE("span unit names round trip") {
    for (auto u : {SpanUnit::Char, SpanUnit::Word, SpanUnit::Phone}) {
        CHECK(parse_span_unit(span_unit_name(u)) == u);
    }
    CHECK_THROWS_AS(parse_span_unit("syllable"), ParseError);
}

TEST_CASE("corpus store loads trimmed embeddings and alignments") {
    const auto dir = std::filesystem::temp_directory_path() / "latlens_ingest_store";
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);

    auto seq = random_seq("f1", 100, 3, 7); // padded; duration keeps 50
    save_embedding_file(dir / "f1.lle", seq);
    Alignment a;
    a.file_id = "f1";
    a.spans.push_back({SpanUnit::Word, "w", 0.0, 0.5});
    write_file_text(dir / "al.tsv", alignment_text({a}));

    ManifestEntry e;
    e.file_id = "f1";
    e.embedding_path = "f1.lle";
    e.meta.file_id = "f1";
    e.meta.duration = 1.0;
    e.alignment_path = "al.tsv";
    CorpusManifest m;
    m.entries = {e};
    write_file_text(dir / "manifest.jsonl", manifest_text(m));

    auto store = CorpusStore::open(dir);
    CHECK(store.has("f1"));
    CHECK(!store.has("nope"));
    CHECK(store.entry("f1").meta.duration == 1.0);
    CHECK_THROWS_AS(store.entry("nope"), InputError);

    auto loaded = store.load_embedding("f1");
    CHECK(loaded.n_frames() == 50);
    auto al = store.load_alignment("f1");
    REQUIRE(al.has_value());
    CHECK(al->spans.size() == 1);

    std::filesystem::remove_all(dir);
}
