#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "latlens/io.hpp"
#include "latlens/matrix.hpp"

namespace latlens {

// 50 encoder frames per second, 20 ms each; 30 s inputs give 1500 frames.
constexpr int kDefaultFrameRate = 50;
constexpr double kMaxDurationSeconds = 30.0;

struct EmbeddingSequence {
    std::string file_id;
    Matrix frames; // n_frames x dim

    std::size_t n_frames() const { return frames.rows; }
    std::size_t dim() const { return frames.cols; }
};

struct AudioMeta {
    std::string file_id;
    double duration = 0.0; // seconds, (0, 30]
    std::optional<std::string> language;
    std::optional<std::string> transcript;
};

enum class SpanUnit { Char, Word, Phone };

struct AlignedSpan {
    SpanUnit unit = SpanUnit::Word;
    std::string text;
    double start = 0.0; // seconds
    double end = 0.0;   // seconds, start < end
};

struct Alignment {
    std::string file_id;
    std::vector<AlignedSpan> spans;

    std::vector<AlignedSpan> spans_of(SpanUnit unit) const;
};

struct ManifestEntry {
    std::string file_id;
    std::string embedding_path;
    AudioMeta meta;
    std::optional<std::string> alignment_path;
    std::vector<std::string> tags;
};

struct CorpusManifest {
    std::vector<ManifestEntry> entries; // sorted by file_id, ids unique
};

// Half-open frame index range [begin, end).
struct FrameRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t count() const { return end - begin; }
    bool contains(std::size_t frame) const { return frame >= begin && frame < end; }
};

// min(rate*30, ceil(duration * rate)); never drops a frame holding real audio.
std::size_t frames_for_duration(double duration, int frame_rate = kDefaultFrameRate);

// Drop trailing padding frames so the sequence matches the audio length.
EmbeddingSequence trim_padding(const EmbeddingSequence& seq, const AudioMeta& meta,
                               int frame_rate = kDefaultFrameRate);

// Frames whose 20 ms interval intersects [start, end).
FrameRange frames_for_interval(double start, double end, int frame_rate = kDefaultFrameRate);

// Frame-center timestamp in seconds.
inline double frame_center_time(std::size_t frame, int frame_rate = kDefaultFrameRate) {
    return (static_cast<double>(frame) + 0.5) / static_cast<double>(frame_rate);
}

SpanUnit parse_span_unit(const std::string& s);
std::string span_unit_name(SpanUnit u);

// Embedding file: magic "LLE1", u32 n_frames, u32 dim, f32 payload row-major.
EmbeddingSequence load_embedding_file(const std::filesystem::path& path);
void save_embedding_file(const std::filesystem::path& path, const EmbeddingSequence& seq);
EmbeddingSequence parse_embedding_bytes(std::span<const std::uint8_t> bytes,
                                        const std::string& file_id);
std::vector<std::uint8_t> embedding_bytes(const EmbeddingSequence& seq);

// Alignment file: tab-separated records "file_id<TAB>unit<TAB>text<TAB>start<TAB>end".
std::vector<Alignment> parse_alignment_text(const std::string& text);
std::string alignment_text(const std::vector<Alignment>& alignments);

// Manifest: one JSON object per line with fields file_id, embedding, duration,
// language?, transcript?, alignment?, tags?.
CorpusManifest parse_manifest_text(const std::string& text);
std::string manifest_text(const CorpusManifest& manifest);

// A directory holding manifest.jsonl plus the files it references.
class CorpusStore {
public:
    static CorpusStore open(const std::filesystem::path& dir);

    const CorpusManifest& manifest() const { return manifest_; }
    const std::filesystem::path& dir() const { return dir_; }

    const ManifestEntry& entry(const std::string& file_id) const;
    bool has(const std::string& file_id) const;

    // Loaded and trimmed to the audio length.
    EmbeddingSequence load_embedding(const std::string& file_id,
                                     int frame_rate = kDefaultFrameRate) const;
    std::optional<Alignment> load_alignment(const std::string& file_id) const;

private:
    std::filesystem::path dir_;
    CorpusManifest manifest_;
    std::map<std::string, std::size_t> by_id_;
};

} // namespace latlens
