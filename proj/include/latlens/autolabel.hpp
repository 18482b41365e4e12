#pragma once

#include <map>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "latlens/analysis.hpp"
#include "latlens/rng.hpp"

namespace latlens {

enum class FileStrengthKind { Max, Mean };

enum class Confidence { High, Medium, Low };

enum class LabelCategory {
    Phonetic,
    Orthographic,
    Morphological,
    Lexical,
    Semantic,
    Syntactic,
    Diffuse,
};

Confidence parse_confidence(const std::string& s);
std::string confidence_name(Confidence c);
LabelCategory parse_label_category(const std::string& s);
std::string label_category_name(LabelCategory c);

struct LatentExampleSet {
    std::size_t latent = 0;
    std::vector<std::string> candidates;         // <= 100 file_ids
    std::vector<std::string> presented;          // <= 20, seeded subsample
    std::vector<std::string> marked_transcripts; // aligned with presented
};

struct LabelRecord {
    std::size_t latent = 0;
    std::string label;
    std::string explanation;
    Confidence confidence = Confidence::Low;
    LabelCategory category = LabelCategory::Diffuse;
    bool retained = false;
};

// File-level activation strength; the paper-style default is the maximum
// posting value over the file's frames.
float file_strength(const ActivationIndex& index, std::size_t latent,
                    const std::string& file_id,
                    FileStrengthKind kind = FileStrengthKind::Max);

// The 100 files closest to the (lower) median strength, ties by file_id;
// up to 20 of them presented after a seeded shuffle.
LatentExampleSet select_examples(const ActivationIndex& index, std::size_t latent,
                                 std::uint64_t seed,
                                 FileStrengthKind kind = FileStrengthKind::Max,
                                 std::size_t max_candidates = 100,
                                 std::size_t max_presented = 20);

// Wrap maximal runs of characters whose aligned spans overlap an activated
// frame in a single asterisk pair, e.g. "grad*ual*ly".
std::string mark_spans(const std::string& transcript,
                       const std::vector<AlignedSpan>& char_spans,
                       const std::vector<Posting>& postings,
                       int frame_rate = kDefaultFrameRate);

// Chat-completion request body for one latent's example set.
nlohmann::json build_prompt(const LatentExampleSet& example_set,
                            const std::string& model);

// Strict parse of a chat-completion response body.
LabelRecord parse_response(const std::string& raw);

// high stays retained; medium/low is demoted to diffuse with the original
// label kept as the leading hypothesis.
LabelRecord apply_confidence_policy(LabelRecord record);

class ChatClient {
public:
    virtual ~ChatClient() = default;
    // Returns the raw response body. replay_key identifies the request for
    // canned-response clients; live clients ignore it.
    virtual std::string complete(const nlohmann::json& payload,
                                 const std::string& replay_key) = 0;
};

// POSTs to <base_url>/v1/chat/completions with bearer auth, bounded retries
// with exponential backoff.
class HttpChatClient final : public ChatClient {
public:
    HttpChatClient(std::string base_url, std::string api_key,
                   int timeout_seconds = 60, int max_retries = 3);
    std::string complete(const nlohmann::json& payload,
                         const std::string& replay_key) override;

private:
    std::string base_url_;
    std::string api_key_;
    int timeout_seconds_;
    int max_retries_;
};

// Replays <dir>/<replay_key>.json, falling back to <dir>/default.json.
class MockChatClient final : public ChatClient {
public:
    explicit MockChatClient(std::filesystem::path dir) : dir_(std::move(dir)) {}
    std::string complete(const nlohmann::json& payload,
                         const std::string& replay_key) override;

private:
    std::filesystem::path dir_;
};

// Reads endpoint settings from LATLENS_ENDPOINT_URL, LATLENS_MODEL,
// LATLENS_API_KEY.
struct EndpointConfig {
    std::string url;
    std::string model;
    std::string api_key;

    static EndpointConfig from_environment();
};

struct LabelRunResult {
    std::vector<LabelRecord> records; // latent-id order
    std::size_t skipped_latents = 0;  // no activated files or no transcripts
};

// Full pipeline over the given latents: select, mark, prompt, parse, policy.
LabelRunResult label_latents(const ActivationIndex& index, const CorpusStore& store,
                             const std::vector<std::size_t>& latents,
                             ChatClient& client, const std::string& model,
                             std::uint64_t seed,
                             FileStrengthKind kind = FileStrengthKind::Max);

std::string label_records_jsonl(const std::vector<LabelRecord>& records);
std::vector<LabelRecord> parse_label_records_jsonl(const std::string& text);
// Export for manual review.
std::string label_records_csv(const std::vector<LabelRecord>& records);

} // namespace latlens
