#include "latlens/ingest.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <json.hpp>

namespace latlens {

namespace {
// Guards float slop in seconds->frame conversions, e.g. 0.02*50 != 1.0 exactly.
constexpr double kTimeEps = 1e-9;
} // namespace

std::vector<AlignedSpan> Alignment::spans_of(SpanUnit unit) const {
    std::vector<AlignedSpan> out;
    for (const auto& s : spans) {
        if (s.unit == unit) out.push_back(s);
    }
    return out;
}

std::size_t frames_for_duration(double duration, int frame_rate) {
    check_contract(std::isfinite(duration) && duration > 0.0 &&
                       duration <= kMaxDurationSeconds,
                   "duration must be in (0, 30] seconds");
    check_contract(frame_rate >= 1, "frame rate must be positive");
    const auto max_frames = static_cast<std::size_t>(frame_rate) * 30u;
    const auto n = static_cast<std::size_t>(
        std::ceil(duration * static_cast<double>(frame_rate) - kTimeEps));
    return std::min(max_frames, std::max<std::size_t>(n, 1));
}

EmbeddingSequence trim_padding(const EmbeddingSequence& seq, const AudioMeta& meta,
                               int frame_rate) {
    const std::size_t keep = frames_for_duration(meta.duration, frame_rate);
    check_input(keep <= seq.n_frames(),
                "corrupt input: trimmed length " + std::to_string(keep) +
                    " exceeds " + std::to_string(seq.n_frames()) + " frames for " +
                    seq.file_id);
    if (keep == seq.n_frames()) return seq; // already trimmed
    EmbeddingSequence out;
    out.file_id = seq.file_id;
    out.frames = Matrix(keep, seq.dim());
    std::copy(seq.frames.data.begin(),
              seq.frames.data.begin() + static_cast<std::ptrdiff_t>(keep * seq.dim()),
              out.frames.data.begin());
    return out;
}

FrameRange frames_for_interval(double start, double end, int frame_rate) {
    check_contract(std::isfinite(start) && std::isfinite(end) && start >= 0.0 &&
                       start < end,
                   "interval requires 0 <= start < end");
    const double rate = static_cast<double>(frame_rate);
    const auto first = static_cast<std::size_t>(std::floor(start * rate + kTimeEps));
    auto last_excl = static_cast<std::size_t>(std::ceil(end * rate - kTimeEps));
    if (last_excl <= first) last_excl = first + 1;
    return FrameRange{first, last_excl};
}

SpanUnit parse_span_unit(const std::string& s) {
    if (s == "char") return SpanUnit::Char;
    if (s == "word") return SpanUnit::Word;
    if (s == "phone") return SpanUnit::Phone;
    throw ParseError(ParseError::Kind::InvalidEnum, "unknown span unit: " + s);
}

std::string span_unit_name(SpanUnit u) {
    switch (u) {
        case SpanUnit::Char: return "char";
        case SpanUnit::Word: return "word";
        case SpanUnit::Phone: return "phone";
    }
    return "?";
}

EmbeddingSequence parse_embedding_bytes(std::span<const std::uint8_t> bytes,
                                        const std::string& file_id) {
    ByteReader r(bytes);
    r.expect_magic("LLE1", "embedding file");
    const std::uint32_t n_frames = r.u32();
    const std::uint32_t dim = r.u32();
    if (n_frames == 0 || dim == 0) {
        throw ParseError(ParseError::Kind::Malformed, "embedding file: empty shape");
    }
    EmbeddingSequence seq;
    seq.file_id = file_id;
    seq.frames = Matrix(n_frames, dim);
    for (auto& v : seq.frames.data) {
        v = r.f32();
        if (!std::isfinite(v)) {
            throw ParseError(ParseError::Kind::NonFinite,
                             "embedding file: non-finite value");
        }
    }
    if (r.remaining() != 0) {
        throw ParseError(ParseError::Kind::Malformed,
                         "embedding file: trailing bytes");
    }
    return seq;
}

std::vector<std::uint8_t> embedding_bytes(const EmbeddingSequence& seq) {
    ByteWriter w;
    w.magic("LLE1");
    w.u32(static_cast<std::uint32_t>(seq.n_frames()));
    w.u32(static_cast<std::uint32_t>(seq.dim()));
    for (float v : seq.frames.data) w.f32(v);
    return w.buffer();
}

EmbeddingSequence load_embedding_file(const std::filesystem::path& path) {
    return parse_embedding_bytes(read_file_bytes(path), path.stem().string());
}

void save_embedding_file(const std::filesystem::path& path, const EmbeddingSequence& seq) {
    write_file_bytes(path, embedding_bytes(seq));
}

std::vector<Alignment> parse_alignment_text(const std::string& text) {
    std::map<std::string, Alignment> by_file;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::size_t pos = 0;
        while (true) {
            auto tab = line.find('\t', pos);
            if (tab == std::string::npos) {
                fields.push_back(line.substr(pos));
                break;
            }
            fields.push_back(line.substr(pos, tab - pos));
            pos = tab + 1;
        }
        if (fields.size() != 5) {
            throw ParseError(ParseError::Kind::Malformed,
                             "alignment line " + std::to_string(line_no) +
                                 ": expected 5 tab-separated fields");
        }
        AlignedSpan span;
        span.unit = parse_span_unit(fields[1]);
        span.text = fields[2];
        try {
            span.start = std::stod(fields[3]);
            span.end = std::stod(fields[4]);
        } catch (const std::exception&) {
            throw ParseError(ParseError::Kind::Malformed,
                             "alignment line " + std::to_string(line_no) +
                                 ": bad timestamp");
        }
        if (!(span.start < span.end)) {
            throw ParseError(ParseError::Kind::Malformed,
                             "alignment line " + std::to_string(line_no) +
                                 ": start must precede end");
        }
        auto& a = by_file[fields[0]];
        a.file_id = fields[0];
        a.spans.push_back(std::move(span));
    }
    std::vector<Alignment> out;
    out.reserve(by_file.size());
    for (auto& [id, a] : by_file) {
        // Spans of one unit type must be time-sorted and non-overlapping.
        for (auto unit : {SpanUnit::Char, SpanUnit::Word, SpanUnit::Phone}) {
            double prev_end = -1.0;
            for (const auto& s : a.spans) {
                if (s.unit != unit) continue;
                if (s.start < prev_end - kTimeEps) {
                    throw ParseError(ParseError::Kind::Malformed,
                                     "alignment for " + id + ": overlapping " +
                                         span_unit_name(unit) + " spans");
                }
                prev_end = s.end;
            }
        }
        out.push_back(std::move(a));
    }
    return out;
}

std::string alignment_text(const std::vector<Alignment>& alignments) {
    std::ostringstream out;
    for (const auto& a : alignments) {
        for (const auto& s : a.spans) {
            check_input(s.text.find('\t') == std::string::npos &&
                            s.text.find('\n') == std::string::npos,
                        "span text may not contain tabs or newlines");
            out << a.file_id << '\t' << span_unit_name(s.unit) << '\t' << s.text
                << '\t' << s.start << '\t' << s.end << '\n';
        }
    }
    return out.str();
}

CorpusManifest parse_manifest_text(const std::string& text) {
    CorpusManifest m;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(ParseError::Kind::Malformed,
                             "manifest line " + std::to_string(line_no) + ": " + e.what());
        }
        auto need = [&](const char* field) -> const nlohmann::json& {
            if (!j.contains(field)) {
                throw ParseError(ParseError::Kind::MissingField,
                                 "manifest line " + std::to_string(line_no) +
                                     ": missing field " + field);
            }
            return j.at(field);
        };
        ManifestEntry e;
        e.file_id = need("file_id").get<std::string>();
        e.embedding_path = need("embedding").get<std::string>();
        e.meta.file_id = e.file_id;
        e.meta.duration = need("duration").get<double>();
        if (!(std::isfinite(e.meta.duration) && e.meta.duration > 0.0 &&
              e.meta.duration <= kMaxDurationSeconds)) {
            throw ParseError(ParseError::Kind::Malformed,
                             "manifest line " + std::to_string(line_no) +
                                 ": duration must be in (0, 30] seconds");
        }
        if (j.contains("language")) e.meta.language = j.at("language").get<std::string>();
        if (j.contains("transcript")) e.meta.transcript = j.at("transcript").get<std::string>();
        if (j.contains("alignment")) e.alignment_path = j.at("alignment").get<std::string>();
        if (j.contains("tags")) e.tags = j.at("tags").get<std::vector<std::string>>();
        m.entries.push_back(std::move(e));
    }
    std::sort(m.entries.begin(), m.entries.end(),
              [](const ManifestEntry& a, const ManifestEntry& b) {
                  return a.file_id < b.file_id;
              });
    for (std::size_t i = 1; i < m.entries.size(); ++i) {
        if (m.entries[i].file_id == m.entries[i - 1].file_id) {
            throw ParseError(ParseError::Kind::Malformed,
                             "manifest: duplicate file_id " + m.entries[i].file_id);
        }
    }
    return m;
}

std::string manifest_text(const CorpusManifest& manifest) {
    std::ostringstream out;
    for (const auto& e : manifest.entries) {
        nlohmann::json j;
        j["file_id"] = e.file_id;
        j["embedding"] = e.embedding_path;
        j["duration"] = e.meta.duration;
        if (e.meta.language) j["language"] = *e.meta.language;
        if (e.meta.transcript) j["transcript"] = *e.meta.transcript;
        if (e.alignment_path) j["alignment"] = *e.alignment_path;
        if (!e.tags.empty()) j["tags"] = e.tags;
        out << j.dump() << '\n';
    }
    return out.str();
}

CorpusStore CorpusStore::open(const std::filesystem::path& dir) {
    CorpusStore store;
    store.dir_ = dir;
    const auto manifest_path = dir / "manifest.jsonl";
    store.manifest_ = parse_manifest_text(read_file_text(manifest_path));
    for (std::size_t i = 0; i < store.manifest_.entries.size(); ++i) {
        store.by_id_[store.manifest_.entries[i].file_id] = i;
    }
    return store;
}

const ManifestEntry& CorpusStore::entry(const std::string& file_id) const {
    auto it = by_id_.find(file_id);
    check_input(it != by_id_.end(), "unknown file_id: " + file_id);
    return manifest_.entries[it->second];
}

bool CorpusStore::has(const std::string& file_id) const {
    return by_id_.count(file_id) != 0;
}

EmbeddingSequence CorpusStore::load_embedding(const std::string& file_id,
                                              int frame_rate) const {
    const auto& e = entry(file_id);
    auto seq = load_embedding_file(dir_ / e.embedding_path);
    seq.file_id = file_id;
    return trim_padding(seq, e.meta, frame_rate);
}

std::optional<Alignment> CorpusStore::load_alignment(const std::string& file_id) const {
    const auto& e = entry(file_id);
    if (!e.alignment_path) return std::nullopt;
    auto all = parse_alignment_text(read_file_text(dir_ / *e.alignment_path));
    for (auto& a : all) {
        if (a.file_id == file_id) return a;
    }
    return std::nullopt;
}

} // namespace latlens
