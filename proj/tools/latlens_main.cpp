#include <chrono>
#include <cstdio>
#include <ctime>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "latlens/analysis.hpp"
#include "latlens/autolabel.hpp"
#include "latlens/ingest.hpp"
#include "latlens/report.hpp"
#include "latlens/sae.hpp"
#include "latlens/steering.hpp"
#include "latlens/synthbench.hpp"
#include "latlens/trainer.hpp"

namespace {

using latlens::check_input;
using latlens::InputError;

// Flags beat config values; config values beat defaults.
class ConfigLayer {
public:
    void load(const std::string& path) {
        config_ = latlens::parse_config_text(latlens::read_file_text(path));
    }

    template <typename T>
    void apply(CLI::Option* opt, const std::string& key, T& var) const {
        auto it = config_.find(key);
        if (it == config_.end()) return;
        if (opt != nullptr && opt->count() > 0) {
            std::cerr << "warning: config key '" << key
                      << "' overridden by command-line flag\n";
            return;
        }
        std::istringstream in(it->second);
        if constexpr (std::is_same_v<T, std::string>) {
            var = it->second;
        } else if constexpr (std::is_same_v<T, bool>) {
            var = it->second == "true" || it->second == "1";
        } else {
            in >> var;
            if (in.fail()) {
                throw InputError("config key '" + key + "': cannot parse '" +
                                 it->second + "'");
            }
        }
    }

private:
    std::map<std::string, std::string> config_;
};

struct Common {
    std::uint64_t seed = 0;
    std::string config_path;
    CLI::Option* seed_opt = nullptr;

    void attach(CLI::App* app) {
        seed_opt = app->add_option("--seed", seed, "Deterministic seed");
        app->add_option("--config", config_path, "key=value config file");
    }

    ConfigLayer layer() const {
        ConfigLayer layer;
        if (!config_path.empty()) layer.load(config_path);
        layer.apply(seed_opt, "seed", const_cast<std::uint64_t&>(seed));
        return layer;
    }
};

// Timestamps live only here; run.log is excluded from manifest.txt so output
// directories stay byte-reproducible.
void write_run_log(const std::filesystem::path& dir, int argc, char** argv) {
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    char stamp[32];
    std::strftime(stamp, sizeof stamp, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
    std::ostringstream out;
    out << stamp << " latlens";
    for (int i = 1; i < argc; ++i) out << ' ' << argv[i];
    out << '\n';
    latlens::write_file_text(dir / "run.log", out.str());
}

std::vector<std::size_t> parse_latent_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::istringstream in(text);
    std::string part;
    while (std::getline(in, part, ',')) {
        if (part.empty()) continue;
        const auto dash = part.find('-');
        if (dash == std::string::npos) {
            out.push_back(std::stoull(part));
        } else {
            const auto lo = std::stoull(part.substr(0, dash));
            const auto hi = std::stoull(part.substr(dash + 1));
            if (hi < lo) throw InputError("bad latent range: " + part);
            for (auto v = lo; v <= hi; ++v) out.push_back(v);
        }
    }
    return out;
}

std::map<std::string, latlens::Alignment> load_all_alignments(
    const latlens::CorpusStore& store) {
    std::map<std::string, latlens::Alignment> out;
    for (const auto& entry : store.manifest().entries) {
        auto a = store.load_alignment(entry.file_id);
        if (a) out[entry.file_id] = std::move(*a);
    }
    return out;
}

int run_ingest(const std::string& manifest_path, const std::string& out_dir,
               int frame_rate) {
    const auto src_dir = std::filesystem::path(manifest_path).parent_path();
    auto manifest = latlens::parse_manifest_text(latlens::read_file_text(manifest_path));
    latlens::OutputManifest out(out_dir);

    std::vector<latlens::Alignment> alignments;
    latlens::CorpusManifest store_manifest;
    for (auto& entry : manifest.entries) {
        auto seq = latlens::load_embedding_file(src_dir / entry.embedding_path);
        seq.file_id = entry.file_id;
        seq = latlens::trim_padding(seq, entry.meta, frame_rate);
        out.write(entry.file_id + ".lle", latlens::embedding_bytes(seq));
        if (entry.alignment_path) {
            auto all = latlens::parse_alignment_text(
                latlens::read_file_text(src_dir / *entry.alignment_path));
            for (auto& a : all) {
                if (a.file_id == entry.file_id) alignments.push_back(std::move(a));
            }
        }
        latlens::ManifestEntry stored = entry;
        stored.embedding_path = entry.file_id + ".lle";
        stored.alignment_path =
            entry.alignment_path ? std::optional<std::string>("alignments.tsv")
                                 : std::nullopt;
        store_manifest.entries.push_back(std::move(stored));
    }
    if (!alignments.empty()) {
        out.write_text("alignments.tsv", latlens::alignment_text(alignments));
    }
    out.write_text("manifest.jsonl", latlens::manifest_text(store_manifest));
    out.finish();
    std::cout << "ingested " << store_manifest.entries.size() << " files into "
              << out_dir << "\n";
    return 0;
}

int run_synth(const latlens::PlantedDictionary& dict,
              const latlens::GenerateOptions& options, const std::string& out_dir) {
    auto corpus = latlens::generate(dict, options);
    corpus.write_store(out_dir, dict);
    latlens::OutputManifest out(out_dir);
    for (const auto& f : corpus.files) out.record_existing(f.file_id + ".lle");
    out.record_existing("manifest.jsonl");
    if (!corpus.alignments.empty()) out.record_existing("alignments.tsv");
    out.record_existing("dict.bin");
    out.record_existing("truth.bin");
    out.finish();
    std::cout << "generated " << corpus.files.size() << " files ("
              << options.frames_per_file << " frames each) into " << out_dir << "\n";
    return 0;
}

int run_train(const std::string& store_dir, const latlens::SaeConfig& sae_config,
              const latlens::TrainConfig& train_config, const std::string& out_path,
              const std::string& stats_path, int frame_rate) {
    auto store = latlens::CorpusStore::open(store_dir);
    latlens::StoreFrameStream stream(store, frame_rate);
    latlens::SaeConfig config = sae_config;
    config.d_in = stream.dim();

    std::ostringstream stats;
    auto result = latlens::train(stream, config, train_config,
                                 [&](const latlens::TrainStats& s) {
                                     nlohmann::json j;
                                     j["step"] = s.step;
                                     j["mean_sq_err"] = s.mean_sq_err;
                                     j["dead_latent_count"] = s.dead_latent_count;
                                     stats << j.dump() << '\n';
                                     std::cerr << "step " << s.step << " mse "
                                               << s.mean_sq_err << " dead "
                                               << s.dead_latent_count << "\n";
                                 });
    latlens::save_checkpoint(out_path, result.params, config.k);
    if (!stats_path.empty()) latlens::write_file_text(stats_path, stats.str());
    std::cout << "trained " << train_config.steps << " steps; checkpoint " << out_path
              << "\n";
    return 0;
}

int run_index(const std::string& store_dir, const std::string& model_path,
              const std::string& out_path, int frame_rate) {
    auto store = latlens::CorpusStore::open(store_dir);
    auto [config, params] = latlens::load_checkpoint(model_path);
    auto index = latlens::build_index(store, params, config.k, frame_rate);
    index.save(out_path);
    std::size_t postings = 0;
    for (std::size_t j = 0; j < index.d_latent(); ++j) postings += index.postings(j).size();
    std::cout << "indexed " << index.files().size() << " files, " << postings
              << " postings -> " << out_path << "\n";
    return 0;
}

nlohmann::json pr_json(const latlens::PRResult& pr) {
    return {{"tp", pr.tp},        {"fp", pr.fp},         {"fn", pr.fn},
            {"precision", pr.precision}, {"recall", pr.recall}};
}

int run_analyze_pr(const std::string& index_path, const std::string& store_dir,
                   std::size_t latent, const std::string& feature) {
    auto index = latlens::ActivationIndex::load(index_path);
    auto store = latlens::CorpusStore::open(store_dir);

    if (feature.rfind("lang:non-", 0) == 0) {
        const auto reference = feature.substr(std::string("lang:non-").size());
        std::map<std::string, latlens::AudioMeta> metas;
        for (const auto& e : store.manifest().entries) metas[e.file_id] = e.meta;
        const auto pr = latlens::language_discrimination(index, latent, metas, reference);
        std::cout << pr_json(pr).dump() << "\n";
        return 0;
    }
    if (feature.rfind("tag:", 0) == 0) {
        const auto tag = feature.substr(4);
        latlens::FeatureAnnotation annotation;
        annotation.feature = feature;
        std::set<std::string> universe;
        for (const auto& e : store.manifest().entries) {
            universe.insert(e.file_id);
            if (std::find(e.tags.begin(), e.tags.end(), tag) != e.tags.end()) {
                annotation.positives.insert(e.file_id);
            }
        }
        const auto pr = latlens::precision_recall(index, latent, annotation, universe);
        std::cout << pr_json(pr).dump() << "\n";
        return 0;
    }
    throw InputError("unknown feature spec: " + feature +
                     " (use tag:<name> or lang:non-<ref>)");
}

int run_analyze_positional(const std::string& index_path, std::size_t latent) {
    auto index = latlens::ActivationIndex::load(index_path);
    auto stats = latlens::positional_stats(index, latent);
    nlohmann::json j;
    j["latent"] = latent;
    if (stats) {
        j["mean_time"] = stats->mean_time;
        j["sd_time"] = stats->sd_time;
        j["n"] = stats->n;
    } else {
        j["n"] = 0;
    }
    std::cout << j.dump() << "\n";
    return 0;
}

int run_analyze_top_units(const std::string& index_path, const std::string& store_dir,
                          std::size_t latent, const std::string& unit,
                          std::size_t min_occurrences, std::size_t top) {
    auto index = latlens::ActivationIndex::load(index_path);
    auto store = latlens::CorpusStore::open(store_dir);
    auto alignments = load_all_alignments(store);
    auto result = latlens::top_units(index, latent, alignments,
                                     latlens::parse_span_unit(unit), min_occurrences);
    std::size_t shown = 0;
    for (const auto& r : result.ranked) {
        if (shown++ >= top) break;
        nlohmann::json j;
        j["text"] = r.text;
        j["avg_active_frames"] = r.avg_active_frames;
        j["occurrences"] = r.occurrences;
        if (!r.phone_breakdown.empty()) j["phones"] = r.phone_breakdown;
        std::cout << j.dump() << "\n";
    }
    if (result.files_skipped > 0) {
        std::cerr << "warning: " << result.files_skipped
                  << " indexed files had no alignment\n";
    }
    return 0;
}

int run_steer(const std::string& model_path, const std::string& in_path,
              std::size_t latent, const std::string& mode_name, double magnitude,
              bool magnitude_set, const std::string& index_path,
              const std::string& out_path) {
    auto [config, params] = latlens::load_checkpoint(model_path);
    auto seq = latlens::load_embedding_file(in_path);

    latlens::SteerSpec spec;
    spec.latent = latent;
    if (mode_name == "deactivate") {
        spec.mode = latlens::SteerMode::Deactivate;
    } else if (mode_name == "activate") {
        spec.mode = latlens::SteerMode::Activate;
    } else if (mode_name == "set") {
        spec.mode = latlens::SteerMode::Set;
    } else {
        throw InputError("unknown steer mode: " + mode_name);
    }
    if (magnitude_set) {
        spec.magnitude = static_cast<float>(magnitude);
    } else {
        check_input(!index_path.empty(),
                    "no --magnitude given; pass --index to use the default "
                    "10x p95 heuristic");
        auto index = latlens::ActivationIndex::load(index_path);
        spec.magnitude = latlens::default_magnitude(index, latent);
        std::cerr << "using default magnitude " << spec.magnitude << "\n";
    }
    auto result = latlens::steer(seq, params, config.k, spec);
    latlens::save_embedding_file(out_path, result.modified);
    std::cout << "touched " << result.frames_touched << " of " << seq.n_frames()
              << " frames -> " << out_path << "\n";
    return 0;
}

int run_label(const std::string& index_path, const std::string& store_dir,
              const std::string& latents_spec, const std::string& mock_dir,
              const std::string& out_path, const std::string& csv_path,
              std::uint64_t seed, const std::string& strength_kind) {
    auto index = latlens::ActivationIndex::load(index_path);
    auto store = latlens::CorpusStore::open(store_dir);

    std::vector<std::size_t> latents;
    if (latents_spec == "all") {
        for (std::size_t j = 0; j < index.d_latent(); ++j) latents.push_back(j);
    } else {
        latents = parse_latent_list(latents_spec);
    }

    std::unique_ptr<latlens::ChatClient> client;
    std::string model = "mock";
    if (!mock_dir.empty()) {
        client = std::make_unique<latlens::MockChatClient>(mock_dir);
    } else {
        auto endpoint = latlens::EndpointConfig::from_environment();
        check_input(!endpoint.url.empty() && !endpoint.model.empty(),
                    "set LATLENS_ENDPOINT_URL and LATLENS_MODEL (and "
                    "LATLENS_API_KEY) or pass --mock <dir>");
        model = endpoint.model;
        client = std::make_unique<latlens::HttpChatClient>(endpoint.url,
                                                           endpoint.api_key);
    }
    const auto kind = strength_kind == "mean" ? latlens::FileStrengthKind::Mean
                                              : latlens::FileStrengthKind::Max;
    auto result = latlens::label_latents(index, store, latents, *client, model, seed,
                                         kind);
    latlens::write_file_text(out_path, latlens::label_records_jsonl(result.records));
    if (!csv_path.empty()) {
        latlens::write_file_text(csv_path, latlens::label_records_csv(result.records));
    }
    std::cout << "labeled " << result.records.size() << " latents ("
              << result.skipped_latents << " skipped) -> " << out_path << "\n";
    return 0;
}

int run_score(const std::string& model_path, const std::string& dict_path,
              double threshold, bool exclusive) {
    auto [config, params] = latlens::load_checkpoint(model_path);
    auto dict = latlens::load_dictionary(dict_path);
    auto report = latlens::recovery_score(params, dict, threshold, exclusive);
    nlohmann::json j;
    j["matched_fraction"] = report.matched_fraction;
    j["mean_best_cosine"] = report.mean_best_cosine;
    j["threshold"] = threshold;
    std::cout << j.dump() << "\n";
    return 0;
}

int run_report(const std::string& index_path, const std::string& store_dir,
               std::size_t latent, std::size_t top, const std::string& out_dir,
               const std::string& format_name) {
    auto index = latlens::ActivationIndex::load(index_path);
    auto store = latlens::CorpusStore::open(store_dir);
    const auto format = format_name == "plain" ? latlens::HighlightFormat::Plain
                                               : latlens::HighlightFormat::Html;
    const auto ext = format == latlens::HighlightFormat::Plain ? ".txt" : ".html";

    // Rank activated files by strength, descending, ties by file_id.
    struct Ranked {
        std::string file_id;
        float strength;
    };
    std::vector<Ranked> ranked;
    for (const auto& f : index.files()) {
        auto file = index.require_file(f.file_id);
        if (index.file_postings(latent, file).empty()) continue;
        ranked.push_back({f.file_id,
                          latlens::file_strength(index, latent, f.file_id)});
    }
    std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
        if (a.strength != b.strength) return a.strength > b.strength;
        return a.file_id < b.file_id;
    });
    if (ranked.size() > top) ranked.resize(top);

    float norm_max = 0.0f;
    for (const auto& r : ranked) norm_max = std::max(norm_max, r.strength);

    latlens::OutputManifest out(out_dir);
    std::size_t written = 0;
    for (std::size_t rank = 0; rank < ranked.size(); ++rank) {
        const auto& r = ranked[rank];
        const auto& entry = store.entry(r.file_id);
        if (!entry.meta.transcript) continue;
        auto alignment = store.load_alignment(r.file_id);
        if (!alignment) continue;
        const auto char_spans = alignment->spans_of(latlens::SpanUnit::Char);
        if (char_spans.empty()) continue;
        auto doc = latlens::build_highlight_doc(index, latent, r.file_id,
                                                *entry.meta.transcript, char_spans,
                                                norm_max);
        char name[128];
        std::snprintf(name, sizeof name, "latent%zu_%02zu_%s%s", latent, rank,
                      r.file_id.c_str(), ext);
        out.write_text(name, latlens::render_highlight(doc, format));
        ++written;
    }
    out.finish();
    std::cout << "wrote " << written << " highlight docs to " << out_dir << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"TopK sparse-autoencoder toolkit for speech-encoder embeddings"};
    app.require_subcommand(1);

    try {
        // ---- ingest ----
        auto* ingest = app.add_subcommand("ingest", "Import a corpus into a store");
        Common ingest_common;
        ingest_common.attach(ingest);
        std::string ingest_manifest, ingest_out;
        int ingest_rate = latlens::kDefaultFrameRate;
        auto* o_im = ingest->add_option("--manifest", ingest_manifest)->required();
        auto* o_io = ingest->add_option("--out", ingest_out)->required();
        auto* o_ir = ingest->add_option("--frame-rate", ingest_rate);

        // ---- synth ----
        auto* synth = app.add_subcommand("synth", "Generate a planted-dictionary corpus");
        Common synth_common;
        synth_common.attach(synth);
        std::size_t s_din = 64, s_atoms = 512, s_sparsity = 8, s_files = 400,
                    s_frames = 500, s_tag_atoms = 8, s_block = 10;
        double s_lo = 0.5, s_hi = 2.0, s_noise = 0.01;
        bool s_words = false;
        std::string s_out;
        auto* o_sd = synth->add_option("--d-in", s_din);
        auto* o_sa = synth->add_option("--atoms", s_atoms);
        auto* o_ss = synth->add_option("--sparsity", s_sparsity);
        auto* o_sf = synth->add_option("--files", s_files);
        auto* o_sfr = synth->add_option("--frames", s_frames);
        auto* o_slo = synth->add_option("--coeff-lo", s_lo);
        auto* o_shi = synth->add_option("--coeff-hi", s_hi);
        auto* o_sn = synth->add_option("--noise-sd", s_noise);
        auto* o_sta = synth->add_option("--tag-atoms", s_tag_atoms);
        auto* o_sbl = synth->add_option("--word-block", s_block);
        auto* o_sw = synth->add_flag("--plant-words", s_words);
        auto* o_so = synth->add_option("--out", s_out)->required();

        // ---- train ----
        auto* train = app.add_subcommand("train", "Train a TopK SAE on a store");
        Common train_common;
        train_common.attach(train);
        std::string t_store, t_out, t_stats;
        latlens::SaeConfig t_sae;
        latlens::TrainConfig t_cfg;
        int t_rate = latlens::kDefaultFrameRate;
        bool t_no_renorm = false;
        auto* o_ts = train->add_option("--store", t_store)->required();
        auto* o_tl = train->add_option("--d-latent", t_sae.d_latent);
        auto* o_tk = train->add_option("--k", t_sae.k);
        auto* o_tst = train->add_option("--steps", t_cfg.steps);
        auto* o_tlr = train->add_option("--lr", t_cfg.learning_rate);
        auto* o_tb = train->add_option("--batch", t_cfg.batch_size);
        auto* o_tsb = train->add_option("--shuffle-buffer", t_cfg.shuffle_buffer);
        auto* o_tr = train->add_option("--frame-rate", t_rate);
        auto* o_tnr = train->add_flag("--no-renorm", t_no_renorm);
        auto* o_to = train->add_option("--out", t_out)->required();
        auto* o_tso = train->add_option("--stats", t_stats);

        // ---- index ----
        auto* index_cmd = app.add_subcommand("index", "Build the activation index");
        Common index_common;
        index_common.attach(index_cmd);
        std::string i_store, i_model, i_out;
        int i_rate = latlens::kDefaultFrameRate;
        auto* o_is = index_cmd->add_option("--store", i_store)->required();
        auto* o_imo = index_cmd->add_option("--model", i_model)->required();
        auto* o_iou = index_cmd->add_option("--out", i_out)->required();
        auto* o_ira = index_cmd->add_option("--frame-rate", i_rate);

        // ---- analyze ----
        auto* analyze = app.add_subcommand("analyze", "Latent/feature statistics");
        analyze->require_subcommand(1);
        auto* a_pr = analyze->add_subcommand("pr", "Precision/recall for a feature");
        Common a_pr_common;
        a_pr_common.attach(a_pr);
        std::string ap_index, ap_store, ap_feature;
        std::size_t ap_latent = 0;
        a_pr->add_option("--index", ap_index)->required();
        a_pr->add_option("--store", ap_store)->required();
        a_pr->add_option("--latent", ap_latent)->required();
        a_pr->add_option("--feature", ap_feature)->required();

        auto* a_pos = analyze->add_subcommand("positional", "Activation time statistics");
        Common a_pos_common;
        a_pos_common.attach(a_pos);
        std::string apos_index;
        std::size_t apos_latent = 0;
        a_pos->add_option("--index", apos_index)->required();
        a_pos->add_option("--latent", apos_latent)->required();

        auto* a_top = analyze->add_subcommand("top-units", "Word/phone rankings");
        Common a_top_common;
        a_top_common.attach(a_top);
        std::string at_index, at_store, at_unit = "word";
        std::size_t at_latent = 0, at_min = 3, at_top = 5;
        a_top->add_option("--index", at_index)->required();
        a_top->add_option("--store", at_store)->required();
        a_top->add_option("--latent", at_latent)->required();
        a_top->add_option("--unit", at_unit);
        a_top->add_option("--min-occurrences", at_min);
        a_top->add_option("--top", at_top);

        // ---- steer ----
        auto* steer = app.add_subcommand("steer", "Edit a latent and re-decode");
        Common steer_common;
        steer_common.attach(steer);
        std::string st_model, st_in, st_mode = "deactivate", st_index, st_out;
        std::size_t st_latent = 0;
        double st_magnitude = 0.0;
        steer->add_option("--model", st_model)->required();
        steer->add_option("--in", st_in)->required();
        steer->add_option("--latent", st_latent)->required();
        steer->add_option("--mode", st_mode);
        auto* o_stm = steer->add_option("--magnitude", st_magnitude);
        steer->add_option("--index", st_index);
        steer->add_option("--out", st_out)->required();

        // ---- label ----
        auto* label = app.add_subcommand("label", "Automated latent labeling");
        Common label_common;
        label_common.attach(label);
        std::string l_index, l_store, l_latents = "all", l_mock, l_out, l_csv,
                    l_strength = "max";
        label->add_option("--index", l_index)->required();
        label->add_option("--store", l_store)->required();
        label->add_option("--latents", l_latents);
        label->add_option("--mock", l_mock);
        label->add_option("--out", l_out)->required();
        label->add_option("--csv", l_csv);
        label->add_option("--strength", l_strength);

        // ---- score ----
        auto* score = app.add_subcommand("score", "Dictionary recovery score");
        Common score_common;
        score_common.attach(score);
        std::string sc_model, sc_dict;
        double sc_threshold = 0.9;
        bool sc_exclusive = false;
        score->add_option("--model", sc_model)->required();
        score->add_option("--dict", sc_dict)->required();
        score->add_option("--threshold", sc_threshold);
        score->add_flag("--exclusive", sc_exclusive);

        // ---- report ----
        auto* report = app.add_subcommand("report", "Activation-highlighted transcripts");
        Common report_common;
        report_common.attach(report);
        std::string r_index, r_store, r_out, r_format = "html";
        std::size_t r_latent = 0, r_top = 5;
        report->add_option("--index", r_index)->required();
        report->add_option("--store", r_store)->required();
        report->add_option("--latent", r_latent)->required();
        report->add_option("--top", r_top);
        report->add_option("--out", r_out)->required();
        report->add_option("--format", r_format);

        try {
            app.parse(argc, argv);
        } catch (const CLI::CallForHelp& e) {
            return app.exit(e);
        } catch (const CLI::ParseError& e) {
            app.exit(e);
            return 2;
        }

        if (ingest->parsed()) {
            auto cfg = ingest_common.layer();
            cfg.apply(o_im, "manifest", ingest_manifest);
            cfg.apply(o_io, "out", ingest_out);
            cfg.apply(o_ir, "frame-rate", ingest_rate);
            const int rc = run_ingest(ingest_manifest, ingest_out, ingest_rate);
            if (rc == 0) write_run_log(ingest_out, argc, argv);
            return rc;
        }
        if (synth->parsed()) {
            auto cfg = synth_common.layer();
            cfg.apply(o_sd, "d-in", s_din);
            cfg.apply(o_sa, "atoms", s_atoms);
            cfg.apply(o_ss, "sparsity", s_sparsity);
            cfg.apply(o_sf, "files", s_files);
            cfg.apply(o_sfr, "frames", s_frames);
            cfg.apply(o_slo, "coeff-lo", s_lo);
            cfg.apply(o_shi, "coeff-hi", s_hi);
            cfg.apply(o_sn, "noise-sd", s_noise);
            cfg.apply(o_sta, "tag-atoms", s_tag_atoms);
            cfg.apply(o_sbl, "word-block", s_block);
            cfg.apply(o_sw, "plant-words", s_words);
            cfg.apply(o_so, "out", s_out);
            auto dict = latlens::make_dictionary(
                s_din, s_atoms, s_sparsity, static_cast<float>(s_lo),
                static_cast<float>(s_hi), static_cast<float>(s_noise),
                synth_common.seed);
            latlens::GenerateOptions options;
            options.n_files = s_files;
            options.frames_per_file = s_frames;
            options.n_tagged_atoms = s_tag_atoms;
            options.plant_words = s_words;
            options.word_block_frames = s_block;
            const int rc = run_synth(dict, options, s_out);
            if (rc == 0) write_run_log(s_out, argc, argv);
            return rc;
        }
        if (train->parsed()) {
            auto cfg = train_common.layer();
            cfg.apply(o_ts, "store", t_store);
            cfg.apply(o_tl, "d-latent", t_sae.d_latent);
            cfg.apply(o_tk, "k", t_sae.k);
            cfg.apply(o_tst, "steps", t_cfg.steps);
            cfg.apply(o_tlr, "lr", t_cfg.learning_rate);
            cfg.apply(o_tb, "batch", t_cfg.batch_size);
            cfg.apply(o_tsb, "shuffle-buffer", t_cfg.shuffle_buffer);
            cfg.apply(o_tr, "frame-rate", t_rate);
            cfg.apply(o_tnr, "no-renorm", t_no_renorm);
            cfg.apply(o_to, "out", t_out);
            cfg.apply(o_tso, "stats", t_stats);
            t_cfg.seed = train_common.seed;
            t_cfg.renormalize_decoder = !t_no_renorm;
            return run_train(t_store, t_sae, t_cfg, t_out, t_stats, t_rate);
        }
        if (index_cmd->parsed()) {
            auto cfg = index_common.layer();
            cfg.apply(o_is, "store", i_store);
            cfg.apply(o_imo, "model", i_model);
            cfg.apply(o_iou, "out", i_out);
            cfg.apply(o_ira, "frame-rate", i_rate);
            return run_index(i_store, i_model, i_out, i_rate);
        }
        if (a_pr->parsed()) {
            return run_analyze_pr(ap_index, ap_store, ap_latent, ap_feature);
        }
        if (a_pos->parsed()) {
            return run_analyze_positional(apos_index, apos_latent);
        }
        if (a_top->parsed()) {
            return run_analyze_top_units(at_index, at_store, at_latent, at_unit,
                                         at_min, at_top);
        }
        if (steer->parsed()) {
            return run_steer(st_model, st_in, st_latent, st_mode, st_magnitude,
                             o_stm->count() > 0, st_index, st_out);
        }
        if (label->parsed()) {
            return run_label(l_index, l_store, l_latents, l_mock, l_out, l_csv,
                             label_common.seed, l_strength);
        }
        if (score->parsed()) {
            return run_score(sc_model, sc_dict, sc_threshold, sc_exclusive);
        }
        if (report->parsed()) {
            const int rc = run_report(r_index, r_store, r_latent, r_top, r_out, r_format);
            if (rc == 0) write_run_log(r_out, argc, argv);
            return rc;
        }
        std::cerr << "error: no subcommand\n";
        return 2;
    } catch (const latlens::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
