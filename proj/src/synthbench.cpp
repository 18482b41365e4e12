#include "latlens/synthbench.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

namespace latlens {

PlantedDictionary make_dictionary(std::size_t d_in, std::size_t n_atoms,
                                  std::size_t sparsity, float coeff_lo,
                                  float coeff_hi, float noise_sd,
                                  std::uint64_t seed) {
    check_contract(sparsity >= 1 && sparsity <= n_atoms, "sparsity out of range");
    check_contract(coeff_lo <= coeff_hi, "coefficient range inverted");
    check_contract(noise_sd >= 0.0f, "noise_sd must be non-negative");
    PlantedDictionary dict;
    dict.atoms = Matrix(d_in, n_atoms);
    dict.sparsity = sparsity;
    dict.coeff_lo = coeff_lo;
    dict.coeff_hi = coeff_hi;
    dict.noise_sd = noise_sd;
    dict.seed = seed;
    Rng rng = Rng(seed).split(0xA70);
    std::vector<double> col(d_in);
    for (std::size_t j = 0; j < n_atoms; ++j) {
        double norm2 = 0.0;
        for (std::size_t i = 0; i < d_in; ++i) {
            col[i] = rng.normal();
            norm2 += col[i] * col[i];
        }
        const double inv = 1.0 / std::sqrt(norm2);
        for (std::size_t i = 0; i < d_in; ++i) {
            dict.atoms.at(i, j) = static_cast<float>(col[i] * inv);
        }
    }
    return dict;
}

namespace {

std::string file_id_for(std::size_t idx) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "synth%05zu", idx);
    return buf;
}

// Draw `count` distinct atoms; `forced` (if any) is placed first.
std::vector<std::uint32_t> draw_atoms(Rng& rng, std::size_t n_atoms, std::size_t count,
                                      std::int64_t forced) {
    std::vector<std::uint32_t> out;
    std::set<std::uint32_t> seen;
    if (forced >= 0) {
        out.push_back(static_cast<std::uint32_t>(forced));
        seen.insert(out.back());
    }
    while (out.size() < count) {
        const auto a = static_cast<std::uint32_t>(rng.below(n_atoms));
        if (seen.insert(a).second) out.push_back(a);
    }
    return out;
}

} // namespace

std::vector<float> truth_frame(const PlantedDictionary& dict, const FrameTruth& truth) {
    std::vector<float> x(dict.d_in(), 0.0f);
    for (const auto& term : truth.terms) {
        for (std::size_t i = 0; i < dict.d_in(); ++i) {
            x[i] += term.coeff * dict.atoms.at(i, term.atom);
        }
    }
    return x;
}

SynthCorpus generate(const PlantedDictionary& dict, const GenerateOptions& options) {
    check_contract(options.n_files >= 1 && options.frames_per_file >= 1,
                   "corpus shape must be positive");
    check_contract(options.frames_per_file <=
                       static_cast<std::size_t>(options.frame_rate) * 30u,
                   "frames_per_file exceeds 30 s of audio");
    SynthCorpus corpus;
    const double duration = static_cast<double>(options.frames_per_file) /
                            static_cast<double>(options.frame_rate);
    const Rng root(dict.seed);

    for (std::size_t f = 0; f < options.n_files; ++f) {
        Rng rng = root.split(0x1000 + f);
        const std::string id = file_id_for(f);
        EmbeddingSequence seq;
        seq.file_id = id;
        seq.frames = Matrix(options.frames_per_file, dict.d_in());
        FileTruth truth;
        truth.file_id = id;
        truth.frames.resize(options.frames_per_file);
        std::set<std::uint32_t> atoms_used;

        Alignment alignment;
        alignment.file_id = id;
        std::vector<std::string> words;

        std::int64_t block_atom = -1;
        for (std::size_t t = 0; t < options.frames_per_file; ++t) {
            if (options.plant_words && t % options.word_block_frames == 0) {
                block_atom = static_cast<std::int64_t>(rng.below(dict.n_atoms()));
                const std::size_t block_end =
                    std::min(t + options.word_block_frames, options.frames_per_file);
                AlignedSpan span;
                span.unit = SpanUnit::Word;
                span.text = "w" + std::to_string(block_atom);
                span.start = static_cast<double>(t) / options.frame_rate;
                span.end = static_cast<double>(block_end) / options.frame_rate;
                alignment.spans.push_back(span);
                words.push_back(span.text);
            }
            auto atoms = draw_atoms(rng, dict.n_atoms(), dict.sparsity,
                                    options.plant_words ? block_atom : -1);
            auto& ft = truth.frames[t];
            auto row = seq.frames.row(t);
            std::fill(row.begin(), row.end(), 0.0f);
            for (std::uint32_t a : atoms) {
                const auto c = static_cast<float>(
                    dict.coeff_lo + (dict.coeff_hi - dict.coeff_lo) * rng.next_double());
                ft.terms.push_back({a, c});
                atoms_used.insert(a);
                for (std::size_t i = 0; i < dict.d_in(); ++i) {
                    row[i] += c * dict.atoms.at(i, a);
                }
            }
            if (dict.noise_sd > 0.0f) {
                for (std::size_t i = 0; i < dict.d_in(); ++i) {
                    row[i] += static_cast<float>(dict.noise_sd * rng.normal());
                }
            }
        }

        ManifestEntry entry;
        entry.file_id = id;
        entry.embedding_path = id + ".lle";
        entry.meta.file_id = id;
        entry.meta.duration = duration;
        for (std::size_t a = 0; a < options.n_tagged_atoms && a < dict.n_atoms(); ++a) {
            if (atoms_used.count(static_cast<std::uint32_t>(a))) {
                entry.tags.push_back("atom" + std::to_string(a));
            }
        }
        if (options.plant_words) {
            entry.alignment_path = "alignments.tsv";
            // Char spans subdivide each word block evenly; inter-word spaces get
            // the trailing slot of their block.
            std::string transcript;
            std::vector<AlignedSpan> char_spans;
            for (std::size_t w = 0; w < words.size(); ++w) {
                const auto& word_span = alignment.spans[w];
                const bool last = w + 1 == words.size();
                const std::size_t slots = words[w].size() + (last ? 0 : 1);
                const double width = (word_span.end - word_span.start) / slots;
                for (std::size_t c = 0; c < slots; ++c) {
                    AlignedSpan cs;
                    cs.unit = SpanUnit::Char;
                    cs.text = c < words[w].size() ? std::string(1, words[w][c])
                                                  : std::string(" ");
                    cs.start = word_span.start + width * c;
                    cs.end = word_span.start + width * (c + 1);
                    char_spans.push_back(cs);
                    transcript += cs.text;
                }
            }
            entry.meta.transcript = transcript;
            alignment.spans.insert(alignment.spans.end(), char_spans.begin(),
                                   char_spans.end());
            corpus.alignments.push_back(std::move(alignment));
        }
        corpus.manifest.entries.push_back(std::move(entry));
        corpus.files.push_back(std::move(seq));
        corpus.truth.push_back(std::move(truth));
    }
    return corpus;
}

void SynthCorpus::write_store(const std::filesystem::path& dir,
                              const PlantedDictionary& dict) const {
    std::filesystem::create_directories(dir);
    for (const auto& seq : files) {
        save_embedding_file(dir / (seq.file_id + ".lle"), seq);
    }
    write_file_text(dir / "manifest.jsonl", manifest_text(manifest));
    if (!alignments.empty()) {
        write_file_text(dir / "alignments.tsv", alignment_text(alignments));
    }
    save_dictionary(dir / "dict.bin", dict);

    ByteWriter w;
    w.magic("LLGT");
    w.u32(static_cast<std::uint32_t>(truth.size()));
    for (const auto& file : truth) {
        w.str(file.file_id);
        w.u32(static_cast<std::uint32_t>(file.frames.size()));
        for (const auto& frame : file.frames) {
            w.u32(static_cast<std::uint32_t>(frame.terms.size()));
            for (const auto& term : frame.terms) {
                w.u32(term.atom);
                w.f32(term.coeff);
            }
        }
    }
    write_file_bytes(dir / "truth.bin", w.buffer());
}

RecoveryReport recovery_score(const SaeParams& params, const PlantedDictionary& dict,
                              double threshold, bool exclusive) {
    check_contract(params.d_in == dict.d_in(), "recovery_score: d_in mismatch");
    const std::size_t n_atoms = dict.n_atoms();
    const std::size_t n_cols = params.d_latent;
    const std::size_t d = params.d_in;

    std::vector<double> col_norm(n_cols, 0.0);
    for (std::size_t j = 0; j < n_cols; ++j) {
        col_norm[j] = params.dec_column_norm(j);
    }

    auto abs_cosine = [&](std::size_t atom, std::size_t col) {
        if (col_norm[col] <= 0.0) return 0.0;
        double acc = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            acc += static_cast<double>(dict.atoms.at(i, atom)) *
                   static_cast<double>(params.w_dec.at(i, col));
        }
        return std::abs(acc) / col_norm[col]; // atoms are unit norm
    };

    RecoveryReport report;
    report.best_cosine.assign(n_atoms, 0.0);

    if (!exclusive) {
        for (std::size_t a = 0; a < n_atoms; ++a) {
            double best = 0.0;
            for (std::size_t j = 0; j < n_cols; ++j) {
                best = std::max(best, abs_cosine(a, j));
            }
            report.best_cosine[a] = best;
        }
    } else {
        struct Pair {
            double cosine;
            std::size_t atom;
            std::size_t col;
        };
        std::vector<Pair> pairs;
        pairs.reserve(n_atoms * n_cols);
        for (std::size_t a = 0; a < n_atoms; ++a) {
            for (std::size_t j = 0; j < n_cols; ++j) {
                pairs.push_back({abs_cosine(a, j), a, j});
            }
        }
        std::sort(pairs.begin(), pairs.end(), [](const Pair& x, const Pair& y) {
            if (x.cosine != y.cosine) return x.cosine > y.cosine;
            if (x.atom != y.atom) return x.atom < y.atom;
            return x.col < y.col;
        });
        std::vector<bool> atom_done(n_atoms, false), col_done(n_cols, false);
        for (const auto& p : pairs) {
            if (atom_done[p.atom] || col_done[p.col]) continue;
            report.best_cosine[p.atom] = p.cosine;
            atom_done[p.atom] = true;
            col_done[p.col] = true;
        }
    }

    std::size_t matched = 0;
    double sum = 0.0;
    for (double c : report.best_cosine) {
        sum += c;
        if (c >= threshold) ++matched;
    }
    report.matched_fraction = static_cast<double>(matched) / static_cast<double>(n_atoms);
    report.mean_best_cosine = sum / static_cast<double>(n_atoms);
    return report;
}

void save_dictionary(const std::filesystem::path& path, const PlantedDictionary& dict) {
    ByteWriter w;
    w.magic("LLPD");
    w.u32(static_cast<std::uint32_t>(dict.d_in()));
    w.u32(static_cast<std::uint32_t>(dict.n_atoms()));
    w.u32(static_cast<std::uint32_t>(dict.sparsity));
    w.f32(dict.coeff_lo);
    w.f32(dict.coeff_hi);
    w.f32(dict.noise_sd);
    w.u64(dict.seed);
    for (float v : dict.atoms.data) w.f32(v);
    write_file_bytes(path, w.buffer());
}

PlantedDictionary load_dictionary(const std::filesystem::path& path) {
    auto bytes = read_file_bytes(path);
    ByteReader r(bytes);
    r.expect_magic("LLPD", "dictionary");
    const std::uint32_t d_in = r.u32();
    const std::uint32_t n_atoms = r.u32();
    PlantedDictionary dict;
    dict.atoms = Matrix(d_in, n_atoms);
    dict.sparsity = r.u32();
    dict.coeff_lo = r.f32();
    dict.coeff_hi = r.f32();
    dict.noise_sd = r.f32();
    dict.seed = r.u64();
    for (auto& v : dict.atoms.data) v = r.f32();
    if (r.remaining() != 0) {
        throw ParseError(ParseError::Kind::Malformed, "dictionary: trailing bytes");
    }
    return dict;
}

} // namespace latlens
