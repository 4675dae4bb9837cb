#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include <Eigen/Core>

#include "staog/grammar.hpp"
#include "staog/vadi.hpp"

namespace staog {

// Parameter / feature layout shared by PotentialParams and FeatureVector.
enum class Term : std::size_t {
    me_s_1,  // motion-emotion VAD agreement, character 1
    me_s_2,
    re_s_1,  // relation-emotion (dominance, intimacy) agreement
    re_s_2,
    rm_s_1,  // relation-motion (dominance, intimacy) agreement
    rm_s_2,
    me_t_1,  // (t_m - t_e)^2
    me_t_2,
    m_t,     // (t_1m_end - t_2m_end)^2
    e_t,     // (t_1e_end - t_2e_end)^2
};
inline constexpr std::size_t kTermCount = 10;
inline constexpr std::size_t kSpatialTermCount = 6;

using ParamVector = Eigen::Matrix<double, static_cast<int>(kTermCount), 1>;

std::string_view term_name(Term term);
inline std::size_t idx(Term t) { return static_cast<std::size_t>(t); }
inline bool is_temporal(std::size_t i) { return i >= kSpatialTermCount; }

// Learnable weights of every spatial and temporal potential. Spatial and
// motion-emotion temporal weights are stored once per character.
struct PotentialParams {
    ParamVector values = ParamVector::Zero();

    double operator[](Term t) const { return values[static_cast<Eigen::Index>(idx(t))]; }
    double& operator[](Term t) { return values[static_cast<Eigen::Index>(idx(t))]; }

    // Finite everywhere, temporal weights non-negative. Throws DomainError.
    void validate() const;
    // Clamps temporal weights at zero.
    void project_feasible();
};

// Sufficient statistics of a parse graph, ordered like PotentialParams:
// three dot products per character followed by four squared time gaps.
struct FeatureVector {
    ParamVector values = ParamVector::Zero();

    double operator[](Term t) const { return values[static_cast<Eigen::Index>(idx(t))]; }
};

// Energy convention: E = -lambda_s . dot + lambda_t . gap^2. The loss vector
// l satisfies E_spatial + E_temporal = <lambda, l>.
ParamVector loss_vector(const FeatureVector& fv);

// Per-character VAD of the motion: the generated/override value when set,
// otherwise the lexicon entry of the clip name.
VadVector character_motion_vad(const ParseGraph& pg, std::size_t character, const StAog& g, const Lexicon& lex);

FeatureVector feature_vector(const ParseGraph& pg, const StAog& g, const Lexicon& lex);

double spatial_energy(const FeatureVector& fv, const PotentialParams& theta);
double temporal_energy(const FeatureVector& fv, const PotentialParams& theta);
double tree_energy(const ParseGraph& pg, const StAog& g);
double total_energy(const ParseGraph& pg, const StAog& g, const PotentialParams& theta, const Lexicon& lex);

struct EnergyBreakdown {
    double tree = 0.0;
    double spatial = 0.0;
    double temporal = 0.0;
    FeatureVector features;

    double total() const { return tree + spatial + temporal; }
};
EnergyBreakdown energy_breakdown(const ParseGraph& pg, const StAog& g, const PotentialParams& theta, const Lexicon& lex);

// Flat "name value" document headed by a schema line.
inline constexpr std::string_view kParamsSchema = "staog.params/1";
std::string format_params(const PotentialParams& theta);
PotentialParams parse_params(std::string_view text);
PotentialParams load_params(const std::filesystem::path& path);
void save_params(const PotentialParams& theta, const std::filesystem::path& path);

// Content address of a parameter vector (hex FNV-1a of its canonical text).
std::string params_version(const PotentialParams& theta);

}  // namespace staog
