#include "latlens/analysis.hpp"

#include <algorithm>
#include <cmath>

namespace latlens {

ActivationIndex::ActivationIndex(std::size_t d_latent, int frame_rate)
    : frame_rate_(frame_rate), postings_(d_latent) {}

const std::vector<Posting>& ActivationIndex::postings(std::size_t latent) const {
    check_contract(latent < postings_.size(), "latent id out of range");
    return postings_[latent];
}

std::optional<std::uint32_t> ActivationIndex::file_index(const std::string& file_id) const {
    auto it = by_id_.find(file_id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

std::uint32_t ActivationIndex::require_file(const std::string& file_id) const {
    auto idx = file_index(file_id);
    check_input(idx.has_value(), "file not in index: " + file_id);
    return *idx;
}

std::vector<Posting> ActivationIndex::file_postings(std::size_t latent,
                                                    std::uint32_t file) const {
    const auto& ps = postings(latent);
    auto lo = std::lower_bound(ps.begin(), ps.end(), file,
                               [](const Posting& p, std::uint32_t f) { return p.file < f; });
    std::vector<Posting> out;
    for (auto it = lo; it != ps.end() && it->file == file; ++it) out.push_back(*it);
    return out;
}

FileSummary ActivationIndex::file_summary(std::size_t latent, std::uint32_t file) const {
    check_contract(file < files_.size(), "file index out of range");
    FileSummary s;
    s.n_frames = files_[file].n_frames;
    for (const auto& p : file_postings(latent, file)) {
        s.max_value = std::max(s.max_value, p.value);
        ++s.active_frame_count;
    }
    return s;
}

std::uint32_t ActivationIndex::add_file(const std::string& file_id,
                                        std::uint32_t n_frames) {
    check_contract(files_.empty() || files_.back().file_id < file_id,
                   "files must be added in ascending file_id order");
    files_.push_back({file_id, n_frames});
    const auto idx = static_cast<std::uint32_t>(files_.size() - 1);
    by_id_[file_id] = idx;
    return idx;
}

void ActivationIndex::add_activation(std::size_t, std::uint32_t file,
                                     std::uint32_t frame, const SparseActivation& act) {
    for (const auto& e : act.entries) {
        check_contract(e.latent < postings_.size(), "latent id out of range");
        if (e.value > 0.0f) {
            postings_[e.latent].push_back({file, frame, e.value});
        }
    }
}

ActivationIndex build_index(const std::vector<EmbeddingSequence>& files,
                            const SaeParams& params, std::size_t k, int frame_rate) {
    ActivationIndex index(params.d_latent, frame_rate);
    std::vector<const EmbeddingSequence*> order;
    order.reserve(files.size());
    for (const auto& f : files) order.push_back(&f);
    std::sort(order.begin(), order.end(),
              [](const EmbeddingSequence* a, const EmbeddingSequence* b) {
                  return a->file_id < b->file_id;
              });
    std::vector<float> scratch;
    SparseActivation act;
    for (const auto* seq : order) {
        check_contract(seq->dim() == params.d_in, "corpus dim != model d_in");
        const auto file = index.add_file(seq->file_id,
                                         static_cast<std::uint32_t>(seq->n_frames()));
        for (std::size_t t = 0; t < seq->n_frames(); ++t) {
            encode_into(params, seq->frames.row(t), k, scratch, act);
            index.add_activation(params.d_latent, file, static_cast<std::uint32_t>(t),
                                 act);
        }
    }
    return index;
}

ActivationIndex build_index(const CorpusStore& store, const SaeParams& params,
                            std::size_t k, int frame_rate) {
    ActivationIndex index(params.d_latent, frame_rate);
    std::vector<float> scratch;
    SparseActivation act;
    for (const auto& entry : store.manifest().entries) {
        const auto seq = store.load_embedding(entry.file_id, frame_rate);
        check_contract(seq.dim() == params.d_in, "corpus dim != model d_in");
        const auto file = index.add_file(entry.file_id,
                                         static_cast<std::uint32_t>(seq.n_frames()));
        for (std::size_t t = 0; t < seq.n_frames(); ++t) {
            encode_into(params, seq.frames.row(t), k, scratch, act);
            index.add_activation(params.d_latent, file, static_cast<std::uint32_t>(t),
                                 act);
        }
    }
    return index;
}

std::vector<std::uint8_t> ActivationIndex::postings_bytes() const {
    ByteWriter w;
    for (const auto& ps : postings_) {
        for (const auto& p : ps) {
            w.u32(p.file);
            w.u32(p.frame);
            w.f32(p.value);
        }
    }
    return w.buffer();
}

std::vector<std::uint8_t> ActivationIndex::manifest_bytes() const {
    ByteWriter w;
    w.magic("LLIM");
    w.u32(1); // version
    w.u32(static_cast<std::uint32_t>(postings_.size()));
    w.u32(static_cast<std::uint32_t>(frame_rate_));
    w.u32(static_cast<std::uint32_t>(files_.size()));
    for (const auto& f : files_) {
        w.str(f.file_id);
        w.u32(f.n_frames);
    }
    std::uint64_t offset = 0;
    w.u64(offset);
    for (const auto& ps : postings_) {
        offset += ps.size() * 12u;
        w.u64(offset);
    }
    return w.buffer();
}

void ActivationIndex::save(const std::filesystem::path& path) const {
    write_file_bytes(path, postings_bytes());
    write_file_bytes(path.string() + ".manifest", manifest_bytes());
}

ActivationIndex ActivationIndex::load(const std::filesystem::path& path) {
    const auto postings = read_file_bytes(path);
    const auto manifest = read_file_bytes(path.string() + ".manifest");
    ByteReader m(manifest);
    m.expect_magic("LLIM", "index manifest");
    const std::uint32_t version = m.u32();
    if (version != 1) {
        throw ParseError(ParseError::Kind::Malformed, "index manifest: bad version");
    }
    const std::uint32_t d_latent = m.u32();
    const auto frame_rate = static_cast<int>(m.u32());
    const std::uint32_t n_files = m.u32();
    ActivationIndex index(d_latent, frame_rate);
    for (std::uint32_t i = 0; i < n_files; ++i) {
        const auto id = m.str();
        const auto n_frames = m.u32();
        index.add_file(id, n_frames);
    }
    std::vector<std::uint64_t> offsets(d_latent + 1);
    for (auto& o : offsets) o = m.u64();
    if (m.remaining() != 0) {
        throw ParseError(ParseError::Kind::Malformed, "index manifest: trailing bytes");
    }
    if (offsets.back() != postings.size()) {
        throw ParseError(ParseError::Kind::Truncated, "index postings: size mismatch");
    }
    ByteReader p(postings);
    for (std::uint32_t j = 0; j < d_latent; ++j) {
        const auto n = (offsets[j + 1] - offsets[j]) / 12u;
        index.postings_[j].reserve(n);
        for (std::uint64_t i = 0; i < n; ++i) {
            Posting post;
            post.file = p.u32();
            post.frame = p.u32();
            post.value = p.f32();
            if (!(post.value > 0.0f) || !std::isfinite(post.value)) {
                throw ParseError(ParseError::Kind::Malformed,
                                 "index postings: non-positive value");
            }
            index.postings_[j].push_back(post);
        }
    }
    return index;
}

bool file_activated(const ActivationIndex& index, std::size_t latent,
                    const std::string& file_id) {
    const auto file = index.require_file(file_id);
    return !index.file_postings(latent, file).empty();
}

PRResult make_pr(std::size_t tp, std::size_t fp, std::size_t fn) {
    PRResult r;
    r.tp = tp;
    r.fp = fp;
    r.fn = fn;
    r.precision = tp + fp > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    r.recall = tp + fn > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    return r;
}

PRResult precision_recall(const ActivationIndex& index, std::size_t latent,
                          const FeatureAnnotation& annotation,
                          const std::set<std::string>& universe) {
    check_input(!universe.empty(), "empty universe");
    for (const auto& id : annotation.positives) {
        check_contract(universe.count(id) != 0,
                       "annotation positive outside universe: " + id);
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& id : universe) {
        const bool predicted = file_activated(index, latent, id);
        const bool positive = annotation.positives.count(id) != 0;
        if (predicted && positive) ++tp;
        if (predicted && !positive) ++fp;
        if (!predicted && positive) ++fn;
    }
    return make_pr(tp, fp, fn);
}

namespace {

bool activation_overlaps_spans(const ActivationIndex& index, std::size_t latent,
                               std::uint32_t file,
                               const std::vector<std::pair<double, double>>& spans) {
    const auto ps = index.file_postings(latent, file);
    for (const auto& [start, end] : spans) {
        const auto range = frames_for_interval(start, end, index.frame_rate());
        for (const auto& p : ps) {
            if (range.contains(p.frame)) return true;
        }
    }
    return false;
}

} // namespace

PRResult precision_recall_span(const ActivationIndex& index, std::size_t latent,
                               const FeatureAnnotation& annotation,
                               const std::set<std::string>& universe) {
    check_input(!universe.empty(), "empty universe");
    for (const auto& [id, spans] : annotation.spans) {
        check_contract(annotation.positives.count(id) != 0,
                       "span file not listed as positive: " + id);
    }
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& id : universe) {
        const auto file = index.require_file(id);
        const bool predicted = !index.file_postings(latent, file).empty();
        bool hit = false;
        auto it = annotation.spans.find(id);
        if (it != annotation.spans.end()) {
            hit = activation_overlaps_spans(index, latent, file, it->second);
        }
        // Strict counting: a positive file with activation only outside its
        // annotated spans is both a false positive and a false negative.
        if (hit) ++tp;
        if (predicted && !hit) ++fp;
        if (!hit && annotation.positives.count(id) != 0) ++fn;
    }
    return make_pr(tp, fp, fn);
}

ConfusionBinary confusion_binary(const ActivationIndex& index, std::size_t latent,
                                 const std::map<std::string, bool>& labels) {
    for (const auto& f : index.files()) {
        check_input(labels.count(f.file_id) != 0, "unlabeled file: " + f.file_id);
    }
    ConfusionBinary c;
    for (const auto& f : index.files()) {
        const bool predicted = file_activated(index, latent, f.file_id);
        const bool truth = labels.at(f.file_id);
        if (predicted && truth) ++c.pp;
        if (predicted && !truth) ++c.pn;
        if (!predicted && truth) ++c.np;
        if (!predicted && !truth) ++c.nn;
    }
    return c;
}

std::optional<PositionalStats> positional_stats(const ActivationIndex& index,
                                                std::size_t latent) {
    const auto& ps = index.postings(latent);
    if (ps.empty()) return std::nullopt;
    double sum = 0.0;
    for (const auto& p : ps) {
        sum += frame_center_time(p.frame, index.frame_rate());
    }
    const double mean = sum / static_cast<double>(ps.size());
    double var = 0.0;
    for (const auto& p : ps) {
        const double d = frame_center_time(p.frame, index.frame_rate()) - mean;
        var += d * d;
    }
    var /= static_cast<double>(ps.size()); // population variance
    PositionalStats stats;
    stats.latent = latent;
    stats.mean_time = mean;
    stats.sd_time = std::sqrt(var);
    stats.n = ps.size();
    return stats;
}

TopUnitsResult top_units(const ActivationIndex& index, std::size_t latent,
                         const std::map<std::string, Alignment>& alignments,
                         SpanUnit unit, std::size_t min_occurrences) {
    struct Acc {
        std::size_t occurrences = 0;
        double total = 0.0;
        std::map<std::string, std::pair<std::size_t, double>> phones;
    };
    std::map<std::string, Acc> by_unit;
    TopUnitsResult result;

    for (std::uint32_t file = 0; file < index.files().size(); ++file) {
        const auto& id = index.files()[file].file_id;
        auto it = alignments.find(id);
        if (it == alignments.end()) {
            ++result.files_skipped;
            continue;
        }
        const auto ps = index.file_postings(latent, file);
        auto active_in = [&](const FrameRange& range) {
            std::size_t n = 0;
            for (const auto& p : ps) {
                if (range.contains(p.frame)) ++n;
            }
            return n;
        };
        const auto phone_spans = it->second.spans_of(SpanUnit::Phone);
        for (const auto& span : it->second.spans_of(unit)) {
            const auto range = frames_for_interval(span.start, span.end,
                                                   index.frame_rate());
            auto& acc = by_unit[span.text];
            ++acc.occurrences;
            acc.total += static_cast<double>(active_in(range));
            if (unit == SpanUnit::Word) {
                for (const auto& phone : phone_spans) {
                    if (phone.start < span.start - 1e-9 ||
                        phone.end > span.end + 1e-9) {
                        continue; // not nested in this word
                    }
                    const auto prange = frames_for_interval(phone.start, phone.end,
                                                            index.frame_rate());
                    auto& pacc = acc.phones[phone.text];
                    ++pacc.first;
                    pacc.second += static_cast<double>(active_in(prange));
                }
            }
        }
    }

    for (const auto& [text, acc] : by_unit) {
        if (acc.occurrences < min_occurrences) continue;
        UnitActivationRanking r;
        r.text = text;
        r.occurrences = acc.occurrences;
        r.avg_active_frames = acc.total / static_cast<double>(acc.occurrences);
        for (const auto& [phone, pacc] : acc.phones) {
            r.phone_breakdown[phone] = pacc.second / static_cast<double>(pacc.first);
        }
        result.ranked.push_back(std::move(r));
    }
    std::sort(result.ranked.begin(), result.ranked.end(),
              [](const UnitActivationRanking& a, const UnitActivationRanking& b) {
                  if (a.avg_active_frames != b.avg_active_frames) {
                      return a.avg_active_frames > b.avg_active_frames;
                  }
                  return a.text < b.text;
              });
    return result;
}

PRResult language_discrimination(const ActivationIndex& index, std::size_t latent,
                                 const std::map<std::string, AudioMeta>& metas,
                                 const std::string& reference_tag) {
    FeatureAnnotation annotation;
    annotation.feature = "lang:non-" + reference_tag;
    std::set<std::string> universe;
    for (const auto& f : index.files()) {
        auto it = metas.find(f.file_id);
        check_input(it != metas.end() && it->second.language.has_value(),
                    "missing language tag for " + f.file_id);
        universe.insert(f.file_id);
        if (*it->second.language != reference_tag) {
            annotation.positives.insert(f.file_id);
        }
    }
    return precision_recall(index, latent, annotation, universe);
}

} // namespace latlens
