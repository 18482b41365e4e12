#include "latlens/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <sstream>

namespace latlens {

namespace {

std::string html_escape(char c) {
    switch (c) {
        case '&': return "&amp;";
        case '<': return "&lt;";
        case '>': return "&gt;";
        default: return std::string(1, c);
    }
}

std::string ramp_color(double t) {
    // White (255,255,255) to orange (255,165,0), channel-wise linear.
    const auto g = static_cast<int>(std::lround(255.0 + t * (165.0 - 255.0)));
    const auto b = static_cast<int>(std::lround(255.0 * (1.0 - t)));
    char buf[8];
    std::snprintf(buf, sizeof buf, "#ff%02x%02x", g, b);
    return buf;
}

} // namespace

std::string render_highlight(const HighlightDoc& doc, HighlightFormat format) {
    check_contract(doc.intensities.size() == doc.transcript.size(),
                   "highlight: one intensity per character required");
    bool any_nonzero = false;
    for (double t : doc.intensities) {
        check_contract(t >= 0.0 && t <= 1.0, "highlight: intensity outside [0,1]");
        if (t > 0.0) any_nonzero = true;
    }
    check_contract(!any_nonzero || doc.normalization_max > 0.0f,
                   "highlight: nonzero intensities need a positive normalization max");

    if (format == HighlightFormat::Plain) return doc.transcript;

    std::ostringstream out;
    for (std::size_t i = 0; i < doc.transcript.size(); ++i) {
        const double t = doc.intensities[i];
        if (t > 0.0) {
            out << "<span style=\"background-color:" << ramp_color(t) << "\">"
                << html_escape(doc.transcript[i]) << "</span>";
        } else {
            out << html_escape(doc.transcript[i]);
        }
    }
    return out.str();
}

HighlightDoc build_highlight_doc(const ActivationIndex& index, std::size_t latent,
                                 const std::string& file_id,
                                 const std::string& transcript,
                                 const std::vector<AlignedSpan>& char_spans,
                                 float normalization_max) {
    check_input(char_spans.size() == transcript.size(),
                "char alignment does not cover the transcript for " + file_id);
    HighlightDoc doc;
    doc.file_id = file_id;
    doc.transcript = transcript;
    doc.latent = latent;
    doc.normalization_max = normalization_max;
    doc.intensities.assign(transcript.size(), 0.0);

    const auto file = index.require_file(file_id);
    const auto ps = index.file_postings(latent, file);
    for (std::size_t i = 0; i < char_spans.size(); ++i) {
        const auto range = frames_for_interval(char_spans[i].start, char_spans[i].end,
                                               index.frame_rate());
        float best = 0.0f;
        for (const auto& p : ps) {
            if (range.contains(p.frame)) best = std::max(best, p.value);
        }
        if (best > 0.0f) {
            check_contract(normalization_max > 0.0f,
                           "normalization max must be positive");
            doc.intensities[i] =
                std::min(1.0, static_cast<double>(best) /
                                  static_cast<double>(normalization_max));
        }
    }
    return doc;
}

std::map<std::string, std::string> parse_config_text(const std::string& text) {
    std::map<std::string, std::string> config;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const auto first = line.find_first_not_of(" \t");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos || eq <= first) {
            throw ParseError(ParseError::Kind::Malformed,
                             "config line " + std::to_string(line_no) +
                                 ": expected key=value");
        }
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        config[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return config;
}

OutputManifest::OutputManifest(std::filesystem::path dir) : dir_(std::move(dir)) {
    std::filesystem::create_directories(dir_);
}

void OutputManifest::write(const std::string& name, std::span<const std::uint8_t> bytes) {
    write_file_bytes(dir_ / name, bytes);
    entries_.emplace_back(name, crc64(bytes));
}

void OutputManifest::write_text(const std::string& name, const std::string& text) {
    write(name, std::span<const std::uint8_t>(
                    reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void OutputManifest::record_existing(const std::string& name) {
    const auto bytes = read_file_bytes(dir_ / name);
    entries_.emplace_back(name, crc64(bytes));
}

void OutputManifest::finish() const {
    std::ostringstream out;
    auto sorted = entries_;
    std::sort(sorted.begin(), sorted.end());
    char buf[24];
    for (const auto& [name, hash] : sorted) {
        std::snprintf(buf, sizeof buf, "%016llx",
                      static_cast<unsigned long long>(hash));
        out << name << "\tcrc64:" << buf << '\n';
    }
    write_file_text(dir_ / "manifest.txt", out.str());
}

} // namespace latlens
