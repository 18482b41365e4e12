#pragma once

#include <map>
#include <string>
#include <vector>

#include "latlens/analysis.hpp"

namespace latlens {

enum class HighlightFormat { Html, Plain };

// Per-character activation shading for one latent over one transcript.
struct HighlightDoc {
    std::string file_id;
    std::string transcript;
    std::vector<double> intensities; // [0,1], one per character
    std::size_t latent = 0;
    float normalization_max = 0.0f; // max posting value over the rendered set
};

// Char background ramps linearly white -> orange (255,165,0) per channel;
// zero intensity renders as plain text. HTML metacharacters are escaped.
std::string render_highlight(const HighlightDoc& doc,
                             HighlightFormat format = HighlightFormat::Html);

// Intensity = max overlapping posting value / normalization_max.
HighlightDoc build_highlight_doc(const ActivationIndex& index, std::size_t latent,
                                 const std::string& file_id,
                                 const std::string& transcript,
                                 const std::vector<AlignedSpan>& char_spans,
                                 float normalization_max);

// Flat key=value run configuration (precedence: flags > config > defaults).
std::map<std::string, std::string> parse_config_text(const std::string& text);

// Output-directory manifest: one "name<TAB>crc64:<hex>" line per artifact.
class OutputManifest {
public:
    explicit OutputManifest(std::filesystem::path dir);
    // Writes bytes/text under the output dir and records the content hash.
    void write(const std::string& name, std::span<const std::uint8_t> bytes);
    void write_text(const std::string& name, const std::string& text);
    void record_existing(const std::string& name);
    void finish() const; // writes manifest.txt

    const std::filesystem::path& dir() const { return dir_; }

private:
    std::filesystem::path dir_;
    std::vector<std::pair<std::string, std::uint64_t>> entries_;
};

} // namespace latlens
