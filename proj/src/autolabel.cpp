#include "latlens/autolabel.hpp"

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <httplib.h>

namespace latlens {

Confidence parse_confidence(const std::string& s) {
    if (s == "high") return Confidence::High;
    if (s == "medium") return Confidence::Medium;
    if (s == "low") return Confidence::Low;
    throw ParseError(ParseError::Kind::InvalidEnum, "unknown confidence: " + s);
}

std::string confidence_name(Confidence c) {
    switch (c) {
        case Confidence::High: return "high";
        case Confidence::Medium: return "medium";
        case Confidence::Low: return "low";
    }
    return "?";
}

LabelCategory parse_label_category(const std::string& s) {
    if (s == "phonetic") return LabelCategory::Phonetic;
    if (s == "orthographic") return LabelCategory::Orthographic;
    if (s == "morphological") return LabelCategory::Morphological;
    if (s == "lexical") return LabelCategory::Lexical;
    if (s == "semantic") return LabelCategory::Semantic;
    if (s == "syntactic") return LabelCategory::Syntactic;
    if (s == "diffuse") return LabelCategory::Diffuse;
    throw ParseError(ParseError::Kind::InvalidEnum, "unknown category: " + s);
}

std::string label_category_name(LabelCategory c) {
    switch (c) {
        case LabelCategory::Phonetic: return "phonetic";
        case LabelCategory::Orthographic: return "orthographic";
        case LabelCategory::Morphological: return "morphological";
        case LabelCategory::Lexical: return "lexical";
        case LabelCategory::Semantic: return "semantic";
        case LabelCategory::Syntactic: return "syntactic";
        case LabelCategory::Diffuse: return "diffuse";
    }
    return "?";
}

float file_strength(const ActivationIndex& index, std::size_t latent,
                    const std::string& file_id, FileStrengthKind kind) {
    const auto file = index.require_file(file_id);
    const auto ps = index.file_postings(latent, file);
    check_input(!ps.empty(), "file " + file_id + " not activated for latent " +
                                 std::to_string(latent));
    if (kind == FileStrengthKind::Max) {
        float best = 0.0f;
        for (const auto& p : ps) best = std::max(best, p.value);
        return best;
    }
    double sum = 0.0;
    for (const auto& p : ps) sum += p.value;
    return static_cast<float>(sum / static_cast<double>(ps.size()));
}

LatentExampleSet select_examples(const ActivationIndex& index, std::size_t latent,
                                 std::uint64_t seed, FileStrengthKind kind,
                                 std::size_t max_candidates,
                                 std::size_t max_presented) {
    LatentExampleSet set;
    set.latent = latent;

    struct Scored {
        std::string file_id;
        float strength;
    };
    std::vector<Scored> activated;
    for (const auto& p : index.postings(latent)) {
        if (activated.empty() ||
            activated.back().file_id != index.files()[p.file].file_id) {
            activated.push_back({index.files()[p.file].file_id, 0.0f});
        }
    }
    if (activated.empty()) return set; // empty-result signal
    for (auto& a : activated) {
        a.strength = file_strength(index, latent, a.file_id, kind);
    }

    std::vector<float> strengths;
    strengths.reserve(activated.size());
    for (const auto& a : activated) strengths.push_back(a.strength);
    std::sort(strengths.begin(), strengths.end());
    const float median = strengths[(strengths.size() - 1) / 2]; // lower median

    std::sort(activated.begin(), activated.end(), [&](const Scored& a, const Scored& b) {
        const float da = std::abs(a.strength - median);
        const float db = std::abs(b.strength - median);
        if (da != db) return da < db;
        return a.file_id < b.file_id;
    });
    if (activated.size() > max_candidates) activated.resize(max_candidates);
    for (const auto& a : activated) set.candidates.push_back(a.file_id);

    auto presented = set.candidates;
    Rng rng = Rng(seed).split(0xAB0 + latent);
    rng.shuffle(presented);
    if (presented.size() > max_presented) presented.resize(max_presented);
    set.presented = std::move(presented);
    return set;
}

std::string mark_spans(const std::string& transcript,
                       const std::vector<AlignedSpan>& char_spans,
                       const std::vector<Posting>& postings, int frame_rate) {
    check_input(char_spans.size() == transcript.size(),
                "char alignment does not cover the transcript (" +
                    std::to_string(char_spans.size()) + " spans, " +
                    std::to_string(transcript.size()) + " characters)");
    std::set<std::uint32_t> active;
    for (const auto& p : postings) active.insert(p.frame);

    std::vector<bool> marked(transcript.size(), false);
    for (std::size_t i = 0; i < transcript.size(); ++i) {
        check_input(char_spans[i].unit == SpanUnit::Char,
                    "mark_spans expects char-unit spans");
        const auto range = frames_for_interval(char_spans[i].start,
                                               char_spans[i].end, frame_rate);
        for (std::uint32_t f = static_cast<std::uint32_t>(range.begin);
             f < range.end; ++f) {
            if (active.count(f)) {
                marked[i] = true;
                break;
            }
        }
    }

    std::string out;
    out.reserve(transcript.size() + 8);
    bool open = false;
    for (std::size_t i = 0; i < transcript.size(); ++i) {
        if (marked[i] && !open) {
            out += '*';
            open = true;
        } else if (!marked[i] && open) {
            out += '*';
            open = false;
        }
        out += transcript[i];
    }
    if (open) out += '*';
    return out;
}

nlohmann::json build_prompt(const LatentExampleSet& example_set,
                            const std::string& model) {
    check_contract(!example_set.marked_transcripts.empty(),
                   "build_prompt: no marked transcripts");
    std::ostringstream user;
    user << "Each transcript below comes from an audio clip. Character spans "
            "where one sparse latent of a speech model fires are wrapped in "
            "asterisks (e.g. grad*ual*ly).\n\n";
    for (std::size_t i = 0; i < example_set.marked_transcripts.size(); ++i) {
        user << (i + 1) << ". " << example_set.marked_transcripts[i] << "\n";
    }
    user << "\nDecide what the latent responds to and assign exactly one of "
            "these seven categories: phonetic, orthographic, morphological, "
            "lexical, semantic, syntactic, diffuse.\n"
            "Respond with a single JSON object with exactly these keys: "
            "\"label\" (short name for the feature), \"explanation\", "
            "\"confidence\" (one of \"high\", \"medium\", \"low\"), and "
            "\"category\".";

    nlohmann::json payload;
    payload["model"] = model;
    payload["messages"] = nlohmann::json::array(
        {{{"role", "system"},
          {"content", "You label sparse-autoencoder latents from marked speech "
                      "transcripts. Answer with one JSON object and nothing else."}},
         {{"role", "user"}, {"content", user.str()}}});
    payload["response_format"] = {{"type", "json_object"}};
    return payload;
}

LabelRecord parse_response(const std::string& raw) {
    nlohmann::json body;
    try {
        body = nlohmann::json::parse(raw);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseError::Kind::Malformed,
                         std::string("response body is not JSON: ") + e.what());
    }
    if (!body.contains("choices") || !body["choices"].is_array() ||
        body["choices"].empty()) {
        throw ParseError(ParseError::Kind::Malformed, "response has no choices");
    }
    const auto& first = body["choices"][0];
    if (!first.contains("message") || !first["message"].contains("content") ||
        !first["message"]["content"].is_string()) {
        throw ParseError(ParseError::Kind::Malformed,
                         "response choice has no message content");
    }
    nlohmann::json content;
    try {
        content = nlohmann::json::parse(first["message"]["content"].get<std::string>());
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(ParseError::Kind::Malformed,
                         std::string("message content is not a JSON object: ") +
                             e.what());
    }
    if (!content.is_object()) {
        throw ParseError(ParseError::Kind::Malformed,
                         "message content is not a JSON object");
    }
    auto field = [&](const char* name) -> std::string {
        if (!content.contains(name) || !content[name].is_string()) {
            throw ParseError(ParseError::Kind::MissingField,
                             std::string("missing field: ") + name);
        }
        return content[name].get<std::string>();
    };
    LabelRecord record;
    record.label = field("label");
    record.explanation = field("explanation");
    record.confidence = parse_confidence(field("confidence"));
    record.category = parse_label_category(field("category"));
    record.retained = record.confidence == Confidence::High;
    return record;
}

LabelRecord apply_confidence_policy(LabelRecord record) {
    if (record.confidence == Confidence::High) {
        record.retained = true;
        return record;
    }
    record.explanation =
        "Leading hypothesis: " + record.label + ". " + record.explanation;
    record.category = LabelCategory::Diffuse;
    record.retained = false;
    return record;
}

HttpChatClient::HttpChatClient(std::string base_url, std::string api_key,
                               int timeout_seconds, int max_retries)
    : base_url_(std::move(base_url)),
      api_key_(std::move(api_key)),
      timeout_seconds_(timeout_seconds),
      max_retries_(max_retries) {}

std::string HttpChatClient::complete(const nlohmann::json& payload,
                                     const std::string&) {
    // Split scheme://host[:port] from an optional path prefix.
    std::string origin = base_url_;
    std::string path = "/v1/chat/completions";
    const auto scheme_end = base_url_.find("://");
    if (scheme_end != std::string::npos) {
        const auto slash = base_url_.find('/', scheme_end + 3);
        if (slash != std::string::npos) {
            origin = base_url_.substr(0, slash);
            path = base_url_.substr(slash);
        }
    }
    httplib::Client client(origin);
    client.set_read_timeout(timeout_seconds_, 0);
    client.set_connection_timeout(timeout_seconds_, 0);
    httplib::Headers headers;
    if (!api_key_.empty()) {
        headers.emplace("Authorization", "Bearer " + api_key_);
    }
    const std::string body = payload.dump();

    std::string last_error;
    for (int attempt = 0; attempt <= max_retries_; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(
                std::chrono::milliseconds(250LL << (attempt - 1)));
        }
        auto res = client.Post(path, headers, body, "application/json");
        if (!res) {
            last_error = "connection failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status == 429 || res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status < 200 || res->status >= 300) {
            throw InputError("endpoint returned HTTP " + std::to_string(res->status) +
                             ": " + res->body);
        }
        return res->body;
    }
    throw InputError("endpoint unreachable after " + std::to_string(max_retries_ + 1) +
                     " attempts (" + last_error + ")");
}

std::string MockChatClient::complete(const nlohmann::json&,
                                     const std::string& replay_key) {
    const auto keyed = dir_ / (replay_key + ".json");
    if (std::filesystem::exists(keyed)) return read_file_text(keyed);
    const auto fallback = dir_ / "default.json";
    check_input(std::filesystem::exists(fallback),
                "mock response missing: " + keyed.string());
    return read_file_text(fallback);
}

EndpointConfig EndpointConfig::from_environment() {
    EndpointConfig config;
    if (const char* v = std::getenv("LATLENS_ENDPOINT_URL")) config.url = v;
    if (const char* v = std::getenv("LATLENS_MODEL")) config.model = v;
    if (const char* v = std::getenv("LATLENS_API_KEY")) config.api_key = v;
    return config;
}

LabelRunResult label_latents(const ActivationIndex& index, const CorpusStore& store,
                             const std::vector<std::size_t>& latents,
                             ChatClient& client, const std::string& model,
                             std::uint64_t seed, FileStrengthKind kind) {
    auto sorted = latents;
    std::sort(sorted.begin(), sorted.end());
    sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());

    LabelRunResult result;
    for (std::size_t latent : sorted) {
        auto set = select_examples(index, latent, seed, kind);
        if (set.candidates.empty()) {
            ++result.skipped_latents;
            continue;
        }
        std::vector<std::string> kept;
        for (const auto& file_id : set.presented) {
            if (!store.has(file_id)) continue;
            const auto& entry = store.entry(file_id);
            if (!entry.meta.transcript) continue;
            const auto alignment = store.load_alignment(file_id);
            if (!alignment) continue;
            const auto char_spans = alignment->spans_of(SpanUnit::Char);
            if (char_spans.empty()) continue;
            const auto file = index.require_file(file_id);
            set.marked_transcripts.push_back(
                mark_spans(*entry.meta.transcript, char_spans,
                           index.file_postings(latent, file), index.frame_rate()));
            kept.push_back(file_id);
        }
        set.presented = std::move(kept);
        if (set.marked_transcripts.empty()) {
            ++result.skipped_latents;
            continue;
        }
        const auto payload = build_prompt(set, model);
        const auto raw = client.complete(payload, "latent_" + std::to_string(latent));
        auto record = apply_confidence_policy(parse_response(raw));
        record.latent = latent;
        result.records.push_back(std::move(record));
    }
    return result;
}

std::string label_records_jsonl(const std::vector<LabelRecord>& records) {
    std::ostringstream out;
    for (const auto& r : records) {
        nlohmann::json j;
        j["latent"] = r.latent;
        j["label"] = r.label;
        j["explanation"] = r.explanation;
        j["confidence"] = confidence_name(r.confidence);
        j["category"] = label_category_name(r.category);
        j["retained"] = r.retained;
        out << j.dump() << '\n';
    }
    return out.str();
}

std::vector<LabelRecord> parse_label_records_jsonl(const std::string& text) {
    std::vector<LabelRecord> records;
    std::istringstream in(text);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw ParseError(ParseError::Kind::Malformed,
                             std::string("label record: ") + e.what());
        }
        LabelRecord r;
        r.latent = j.at("latent").get<std::size_t>();
        r.label = j.at("label").get<std::string>();
        r.explanation = j.at("explanation").get<std::string>();
        r.confidence = parse_confidence(j.at("confidence").get<std::string>());
        r.category = parse_label_category(j.at("category").get<std::string>());
        r.retained = j.at("retained").get<bool>();
        records.push_back(std::move(r));
    }
    return records;
}

namespace {

std::string csv_quote(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

} // namespace

std::string label_records_csv(const std::vector<LabelRecord>& records) {
    std::ostringstream out;
    out << "latent,label,explanation,confidence,category,retained\n";
    for (const auto& r : records) {
        out << r.latent << ',' << csv_quote(r.label) << ','
            << csv_quote(r.explanation) << ',' << confidence_name(r.confidence)
            << ',' << label_category_name(r.category) << ','
            << (r.retained ? "true" : "false") << '\n';
    }
    return out.str();
}

} // namespace latlens
