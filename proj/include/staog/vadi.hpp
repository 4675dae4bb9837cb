#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>

namespace staog {

// Valence, arousal and dominance of a stimulus, each in [0,1].
struct VadVector {
    double valence = 0.5;
    double arousal = 0.5;
    double dominance = 0.5;

    // Clamps every component into [0,1]; rejects non-finite input.
    static VadVector clamped(double v, double a, double d);

    double operator[](std::size_t i) const { return i == 0 ? valence : (i == 1 ? arousal : dominance); }
    double& operator[](std::size_t i) { return i == 0 ? valence : (i == 1 ? arousal : dominance); }

    bool operator==(const VadVector&) const = default;
};

// Difference of two VadVectors, each component in [-1,1].
struct VadDelta {
    double dv = 0.0;
    double da = 0.0;
    double dd = 0.0;

    bool operator==(const VadDelta&) const = default;
};

enum class Level { low, medium, high };

std::string_view to_string(Level level);
Level level_from_string(std::string_view s);

// Numeric score of a categorical dominance/intimacy level.
double level_score(Level level);

struct RelationScore {
    std::string name;
    Level dominance_level = Level::medium;
    Level intimacy_level = Level::medium;

    double d_r() const { return level_score(dominance_level); }
    double i_r() const { return level_score(intimacy_level); }

    bool operator==(const RelationScore&) const = default;
};

// Default standard social distance (metres) for intimacy_from_distance.
inline constexpr double kDefaultSocialDistance = 1.2;

// Word -> VAD lexicon in NRC-VAD layout. Immutable once loaded.
class Lexicon {
public:
    Lexicon() = default;

    // Throws ValidationError on a duplicate (case-insensitive) term.
    void add(std::string_view term, VadVector vad);

    const VadVector* find(std::string_view term) const;
    // Throws UnknownTermError.
    const VadVector& at(std::string_view term) const;

    // Lexicon word closest (Euclidean) to the given VAD.
    std::pair<std::string, VadVector> nearest(const VadVector& vad) const;

    std::size_t size() const { return entries_.size(); }
    bool empty() const { return entries_.empty(); }
    const std::map<std::string, VadVector>& entries() const { return entries_; }

private:
    std::map<std::string, VadVector> entries_;
};

// Tab-separated term/valence/arousal/dominance; '#' lines and an optional
// header row are skipped. Malformed rows raise ParseError with the line.
Lexicon load_lexicon(const std::filesystem::path& path);
Lexicon parse_lexicon(std::string_view text);
void save_lexicon(const Lexicon& lex, const std::filesystem::path& path);

// VAD of a motion from its label. Tries the whole hyphen/space-joined name
// first, then averages the tokens that resolve.
VadVector motion_vad(std::string_view motion_name, const Lexicon& lex);

VadDelta emotion_delta(const VadVector& start, const VadVector& end);

// (dist0 - dist) / dist0; 1 when touching, 0 at the standard distance.
double intimacy_from_distance(double dist, double dist0 = kDefaultSocialDistance);

}  // namespace staog
