#include "staog/potentials.hpp"

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

#include "json_util.hpp"
#include "staog/error.hpp"

namespace staog {

namespace {

constexpr std::array<std::string_view, kTermCount> kTermNames = {
    "lam_me_s.1", "lam_me_s.2", "lam_re_s.1", "lam_re_s.2", "lam_rm_s.1",
    "lam_rm_s.2", "lam_me_t.1", "lam_me_t.2", "lam_m_t",    "lam_e_t"};

double sq(double x) { return x * x; }

}  // namespace

std::string_view term_name(Term term) { return kTermNames[idx(term)]; }

void PotentialParams::validate() const {
    for (std::size_t i = 0; i < kTermCount; ++i) {
        const double v = values[static_cast<Eigen::Index>(i)];
        if (!std::isfinite(v)) throw DomainError("non-finite parameter " + std::string(kTermNames[i]));
        if (is_temporal(i) && v < 0.0) throw DomainError("temporal weight " + std::string(kTermNames[i]) + " is negative");
    }
}

void PotentialParams::project_feasible() {
    for (std::size_t i = kSpatialTermCount; i < kTermCount; ++i) {
        auto& v = values[static_cast<Eigen::Index>(i)];
        if (v < 0.0) v = 0.0;
    }
}

ParamVector loss_vector(const FeatureVector& fv) {
    ParamVector l = fv.values;
    l.head<static_cast<int>(kSpatialTermCount)>() *= -1.0;
    return l;
}

VadVector character_motion_vad(const ParseGraph& pg, std::size_t character, const StAog& g, const Lexicon& lex) {
    const auto& c = pg.characters[character];
    if (c.motion_vad) return *c.motion_vad;
    return motion_vad(g.motion_pool.at(c.motion).name, lex);
}

FeatureVector feature_vector(const ParseGraph& pg, const StAog& g, const Lexicon& lex) {
    FeatureVector fv;
    auto& f = fv.values;
    const auto& rel = g.relation_pool.at(pg.relation);
    const double d_r = rel.d_r();
    const double i_r = rel.i_r();
    const double i_me = intimacy_from_distance(pg.distance(), g.transform.social_distance);

    for (std::size_t c = 0; c < 2; ++c) {
        const auto& ch = pg.characters[c];
        const VadVector m = character_motion_vad(pg, c, g, lex);
        const VadDelta e = emotion_delta(ch.start_face.vad, ch.end_face.vad);
        f[static_cast<Eigen::Index>(idx(Term::me_s_1) + c)] = m.valence * e.dv + m.arousal * e.da + m.dominance * e.dd;
        f[static_cast<Eigen::Index>(idx(Term::re_s_1) + c)] = d_r * e.dd + i_r * i_me;
        f[static_cast<Eigen::Index>(idx(Term::rm_s_1) + c)] = d_r * m.dominance + i_r * i_me;
        f[static_cast<Eigen::Index>(idx(Term::me_t_1) + c)] = sq(ch.t_m - ch.t_e);
    }
    f[static_cast<Eigen::Index>(idx(Term::m_t))] = sq(pg.characters[0].t_m_end - pg.characters[1].t_m_end);
    f[static_cast<Eigen::Index>(idx(Term::e_t))] = sq(pg.characters[0].t_e_end - pg.characters[1].t_e_end);
    return fv;
}

double spatial_energy(const FeatureVector& fv, const PotentialParams& theta) {
    constexpr int n = static_cast<int>(kSpatialTermCount);
    return -theta.values.head<n>().dot(fv.values.head<n>());
}

double temporal_energy(const FeatureVector& fv, const PotentialParams& theta) {
    constexpr int n = static_cast<int>(kTermCount - kSpatialTermCount);
    for (std::size_t i = kSpatialTermCount; i < kTermCount; ++i)
        if (theta.values[static_cast<Eigen::Index>(i)] < 0.0)
            throw DomainError("temporal weight " + std::string(kTermNames[i]) + " is negative");
    return theta.values.tail<n>().dot(fv.values.tail<n>());
}

double tree_energy(const ParseGraph& pg, const StAog& g) {
    double e = 0.0;
    for (std::size_t s = 0; s < kSlotCount; ++s) {
        const auto slot = static_cast<Slot>(s);
        const Node& node = g.slot_node(slot);
        const auto choice = slot_choice(pg, slot);
        bool found = false;
        for (std::size_t c = 0; c < node.children.size(); ++c) {
            const Node& child = g.nodes[node.children[c]];
            if (child.payload != choice) continue;
            const double w = node.weights[c];
            if (!(w > 0.0)) throw ConsistencyError("choice at '" + node.id + "' has zero probability");
            e += -std::log(w) + child.terminal_energy;
            found = true;
            break;
        }
        if (!found) throw ConsistencyError("or-choice at '" + node.id + "' is not a branch of the grammar");
    }
    for (const auto& node : g.nodes)
        if (node.kind == NodeKind::Terminal && node.branch == Branch::transform) e += node.terminal_energy;
    return e;
}

EnergyBreakdown energy_breakdown(const ParseGraph& pg, const StAog& g, const PotentialParams& theta, const Lexicon& lex) {
    EnergyBreakdown b;
    b.features = feature_vector(pg, g, lex);
    b.tree = tree_energy(pg, g);
    b.spatial = spatial_energy(b.features, theta);
    b.temporal = temporal_energy(b.features, theta);
    return b;
}

double total_energy(const ParseGraph& pg, const StAog& g, const PotentialParams& theta, const Lexicon& lex) {
    return energy_breakdown(pg, g, theta, lex).total();
}

std::string format_params(const PotentialParams& theta) {
    std::ostringstream out;
    out << "schema " << kParamsSchema << '\n';
    for (std::size_t i = 0; i < kTermCount; ++i) {
        // Shortest round-trip decimal via the JSON number formatter.
        out << kTermNames[i] << ' ' << detail::json(theta.values[static_cast<Eigen::Index>(i)]).dump() << '\n';
    }
    return out.str();
}

PotentialParams parse_params(std::string_view text) {
    PotentialParams theta;
    std::array<bool, kTermCount> seen{};
    bool schema_seen = false;
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty() || line.front() == '#') continue;
        std::istringstream ls(line);
        std::string name, value, extra;
        if (!(ls >> name >> value) || (ls >> extra)) throw ParseError("expected 'name value'", line_no);
        if (name == "schema") {
            if (value != kParamsSchema) throw VersionError("unsupported params schema '" + value + "'");
            schema_seen = true;
            continue;
        }
        std::size_t i = 0;
        while (i < kTermCount && kTermNames[i] != name) ++i;
        if (i == kTermCount) throw ParseError("unknown parameter '" + name + "'", line_no);
        if (seen[i]) throw ParseError("duplicate parameter '" + name + "'", line_no);
        seen[i] = true;
        try {
            std::size_t used = 0;
            theta.values[static_cast<Eigen::Index>(i)] = std::stod(value, &used);
            if (used != value.size()) throw std::invalid_argument(value);
        } catch (const std::exception&) {
            throw ParseError("bad value for '" + name + "'", line_no);
        }
    }
    if (!schema_seen) throw VersionError("params document has no schema line");
    for (std::size_t i = 0; i < kTermCount; ++i)
        if (!seen[i]) throw ValidationError("missing parameter '" + std::string(kTermNames[i]) + "'");
    theta.validate();
    return theta;
}

PotentialParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open params file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_params(ss.str());
}

void save_params(const PotentialParams& theta, const std::filesystem::path& path) {
    detail::write_file_atomic(path, format_params(theta));
}

std::string params_version(const PotentialParams& theta) {
    std::uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : format_params(theta)) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    std::ostringstream out;
    out << std::hex << std::setw(16) << std::setfill('0') << h;
    return out.str();
}

}  // namespace staog
