#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "latlens/ingest.hpp"
#include "latlens/sae.hpp"

namespace latlens {

struct Posting {
    std::uint32_t file = 0; // index into the file table
    std::uint32_t frame = 0;
    float value = 0.0f; // strictly positive
};

struct IndexedFile {
    std::string file_id;
    std::uint32_t n_frames = 0;
};

struct FileSummary {
    float max_value = 0.0f;
    std::size_t active_frame_count = 0;
    std::size_t n_frames = 0;
};

// Inverted map latent -> (file, frame, value) postings over a corpus.
class ActivationIndex {
public:
    ActivationIndex() = default;
    ActivationIndex(std::size_t d_latent, int frame_rate);

    std::size_t d_latent() const { return postings_.size(); }
    int frame_rate() const { return frame_rate_; }
    const std::vector<IndexedFile>& files() const { return files_; }
    const std::vector<Posting>& postings(std::size_t latent) const;

    std::optional<std::uint32_t> file_index(const std::string& file_id) const;
    std::uint32_t require_file(const std::string& file_id) const;

    // Postings of one latent restricted to one file.
    std::vector<Posting> file_postings(std::size_t latent, std::uint32_t file) const;
    FileSummary file_summary(std::size_t latent, std::uint32_t file) const;

    // Construction; files must be appended in ascending file_id order.
    std::uint32_t add_file(const std::string& file_id, std::uint32_t n_frames);
    void add_activation(std::size_t latent_count_check, std::uint32_t file,
                        std::uint32_t frame, const SparseActivation& act);

    std::vector<std::uint8_t> postings_bytes() const;
    std::vector<std::uint8_t> manifest_bytes() const;
    // Writes `path` (raw postings) and `path + ".manifest"` (file table and
    // per-latent offsets).
    void save(const std::filesystem::path& path) const;
    static ActivationIndex load(const std::filesystem::path& path);

private:
    int frame_rate_ = kDefaultFrameRate;
    std::vector<IndexedFile> files_;
    std::map<std::string, std::uint32_t> by_id_;
    std::vector<std::vector<Posting>> postings_;
};

// Encode every trimmed frame of every file; keep the strictly positive entries.
ActivationIndex build_index(const std::vector<EmbeddingSequence>& files,
                            const SaeParams& params, std::size_t k,
                            int frame_rate = kDefaultFrameRate);
ActivationIndex build_index(const CorpusStore& store, const SaeParams& params,
                            std::size_t k, int frame_rate = kDefaultFrameRate);

// Utterance-level rule: a single strictly positive frame activates the file.
bool file_activated(const ActivationIndex& index, std::size_t latent,
                    const std::string& file_id);

struct FeatureAnnotation {
    std::string feature;
    std::set<std::string> positives;
    // Optional per-file spans (seconds); keys must be positives.
    std::map<std::string, std::vector<std::pair<double, double>>> spans;
};

struct PRResult {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
};

PRResult make_pr(std::size_t tp, std::size_t fp, std::size_t fn);

PRResult precision_recall(const ActivationIndex& index, std::size_t latent,
                          const FeatureAnnotation& annotation,
                          const std::set<std::string>& universe);

// Span-granular variant: a true positive requires the activation to overlap
// an annotated span of the file.
PRResult precision_recall_span(const ActivationIndex& index, std::size_t latent,
                               const FeatureAnnotation& annotation,
                               const std::set<std::string>& universe);

struct ConfusionBinary {
    // predicted x true over {positive, negative}
    std::size_t pp = 0, pn = 0, np = 0, nn = 0;

    double precision_positive() const {
        return pp + pn > 0 ? static_cast<double>(pp) / static_cast<double>(pp + pn) : 0.0;
    }
    double precision_negative() const {
        return np + nn > 0 ? static_cast<double>(nn) / static_cast<double>(np + nn) : 0.0;
    }
};

// Threshold predictor: latent active anywhere in the file => positive class.
ConfusionBinary confusion_binary(const ActivationIndex& index, std::size_t latent,
                                 const std::map<std::string, bool>& labels);

struct PositionalStats {
    std::size_t latent = 0;
    double mean_time = 0.0; // seconds, frame centers
    double sd_time = 0.0;   // population SD
    std::size_t n = 0;
};

std::optional<PositionalStats> positional_stats(const ActivationIndex& index,
                                                std::size_t latent);

struct UnitActivationRanking {
    std::string text;
    double avg_active_frames = 0.0;
    std::size_t occurrences = 0;
    std::map<std::string, double> phone_breakdown; // phone -> avg active frames
};

struct TopUnitsResult {
    std::vector<UnitActivationRanking> ranked;
    std::size_t files_skipped = 0; // indexed files with no alignment
};

TopUnitsResult top_units(const ActivationIndex& index, std::size_t latent,
                         const std::map<std::string, Alignment>& alignments,
                         SpanUnit unit, std::size_t min_occurrences = 3);

// positives = files whose language differs from the reference tag.
PRResult language_discrimination(const ActivationIndex& index, std::size_t latent,
                                 const std::map<std::string, AudioMeta>& metas,
                                 const std::string& reference_tag = "en");

} // namespace latlens
