#include "staog/vadi.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <vector>

#include "staog/error.hpp"

namespace staog {

namespace {

std::string lowercase(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

bool parse_double(std::string_view s, double& out) {
    s = trim(s);
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size();
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    while (true) {
        auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

double clamp01(double x) {
    if (!std::isfinite(x)) throw DomainError("non-finite VAD component");
    return std::clamp(x, 0.0, 1.0);
}

}  // namespace

VadVector VadVector::clamped(double v, double a, double d) {
    return VadVector{clamp01(v), clamp01(a), clamp01(d)};
}

std::string_view to_string(Level level) {
    switch (level) {
        case Level::low: return "low";
        case Level::medium: return "medium";
        case Level::high: return "high";
    }
    return "medium";
}

Level level_from_string(std::string_view s) {
    if (s == "low") return Level::low;
    if (s == "medium") return Level::medium;
    if (s == "high") return Level::high;
    throw ValidationError("unknown level '" + std::string(s) + "' (expected low|medium|high)");
}

double level_score(Level level) {
    switch (level) {
        case Level::low: return 0.2;
        case Level::medium: return 0.5;
        case Level::high: return 0.8;
    }
    return 0.5;
}

void Lexicon::add(std::string_view term, VadVector vad) {
    auto key = lowercase(trim(term));
    if (key.empty()) throw ValidationError("empty lexicon term");
    if (!entries_.emplace(key, vad).second) throw ValidationError("duplicate lexicon term '" + key + "'");
}

const VadVector* Lexicon::find(std::string_view term) const {
    auto it = entries_.find(lowercase(trim(term)));
    return it == entries_.end() ? nullptr : &it->second;
}

const VadVector& Lexicon::at(std::string_view term) const {
    if (const auto* v = find(term)) return *v;
    throw UnknownTermError(std::string(term));
}

std::pair<std::string, VadVector> Lexicon::nearest(const VadVector& vad) const {
    if (entries_.empty()) throw UnknownTermError("<empty lexicon>");
    double best = std::numeric_limits<double>::infinity();
    const std::pair<const std::string, VadVector>* best_entry = nullptr;
    for (const auto& entry : entries_) {
        double d2 = 0.0;
        for (std::size_t i = 0; i < 3; ++i) {
            double diff = entry.second[i] - vad[i];
            d2 += diff * diff;
        }
        if (d2 < best) {
            best = d2;
            best_entry = &entry;
        }
    }
    return {best_entry->first, best_entry->second};
}

Lexicon parse_lexicon(std::string_view text) {
    Lexicon lex;
    std::size_t line_no = 0;
    bool first_data_row = true;
    for (auto raw : split(text, '\n')) {
        ++line_no;
        if (!raw.empty() && raw.back() == '\r') raw.remove_suffix(1);
        if (trim(raw).empty() || trim(raw).front() == '#') continue;
        auto cols = split(raw, '\t');
        if (cols.size() != 4) throw ParseError("expected 4 tab-separated columns, got " + std::to_string(cols.size()), line_no);
        double v = 0, a = 0, d = 0;
        bool numeric = parse_double(cols[1], v) && parse_double(cols[2], a) && parse_double(cols[3], d);
        if (!numeric) {
            // Only the first data row may be a header.
            if (first_data_row) {
                first_data_row = false;
                continue;
            }
            throw ParseError("non-numeric score column", line_no);
        }
        first_data_row = false;
        if (!std::isfinite(v) || !std::isfinite(a) || !std::isfinite(d)) throw ParseError("non-finite score", line_no);
        try {
            lex.add(cols[0], VadVector::clamped(v, a, d));
        } catch (const ValidationError& e) {
            throw ParseError(e.what(), line_no);
        }
    }
    return lex;
}

Lexicon load_lexicon(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open lexicon file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_lexicon(ss.str());
}

void save_lexicon(const Lexicon& lex, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write lexicon file " + path.string());
    out.precision(std::numeric_limits<double>::max_digits10);
    out << "term\tvalence\tarousal\tdominance\n";
    for (const auto& [term, vad] : lex.entries())
        out << term << '\t' << vad.valence << '\t' << vad.arousal << '\t' << vad.dominance << '\n';
}

VadVector motion_vad(std::string_view motion_name, const Lexicon& lex) {
    auto name = trim(motion_name);
    if (name.empty()) throw ValidationError("empty motion name");
    if (const auto* v = lex.find(name)) return *v;

    std::string normalized(name);
    for (char& c : normalized)
        if (c == '-' || c == '_') c = ' ';
    if (const auto* v = lex.find(normalized)) return *v;
    std::string hyphenated(normalized);
    std::replace(hyphenated.begin(), hyphenated.end(), ' ', '-');
    if (const auto* v = lex.find(hyphenated)) return *v;

    VadVector sum{0.0, 0.0, 0.0};
    int hits = 0;
    for (auto token : split(normalized, ' ')) {
        token = trim(token);
        if (token.empty()) continue;
        if (const auto* v = lex.find(token)) {
            sum.valence += v->valence;
            sum.arousal += v->arousal;
            sum.dominance += v->dominance;
            ++hits;
        }
    }
    if (hits == 0) throw UnknownTermError(std::string(name));
    return VadVector{sum.valence / hits, sum.arousal / hits, sum.dominance / hits};
}

VadDelta emotion_delta(const VadVector& start, const VadVector& end) {
    return VadDelta{end.valence - start.valence, end.arousal - start.arousal, end.dominance - start.dominance};
}

double intimacy_from_distance(double dist, double dist0) {
    if (!(dist0 > 0.0)) throw DomainError("standard social distance must be positive");
    if (!(dist >= 0.0)) throw DomainError("distance must be non-negative");
    return (dist0 - dist) / dist0;
}

}  // namespace staog
