#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "staog/grammar.hpp"
#include "staog/sequence_model.hpp"
#include "staog/vadi.hpp"

namespace staog::test {

inline std::filesystem::path data_dir() { return STAOG_DATA_DIR; }

inline StAog starter_grammar() { return load_grammar(data_dir() / "grammar.json"); }
inline Lexicon starter_lexicon() { return load_lexicon(data_dir() / "lexicon.tsv"); }

struct ToyRelation {
    std::string id, dominance, intimacy;
};
struct ToyMotion {
    std::string id;
    double duration = 2.0;
};
struct ToyEmotion {
    std::string id;
    double v, a, d;
};

// Grammar with the standard scene layout over the given pools.
inline nlohmann::json toy_grammar_json(const std::vector<ToyRelation>& rels, const std::vector<ToyMotion>& motions,
                                       const std::vector<ToyEmotion>& emotions, const std::string& name = "toy") {
    using nlohmann::json;
    json j = {{"schema", "staog.grammar/1"}, {"name", name}, {"root", "scene"}};
    j["transform"] = {{"distance_range", {0.5, 3.0}}, {"social_distance", 1.2}};
    j["relations"] = json::array();
    for (const auto& r : rels) j["relations"].push_back({{"id", r.id}, {"dominance", r.dominance}, {"intimacy", r.intimacy}});
    j["motions"] = json::array();
    for (const auto& m : motions) j["motions"].push_back({{"id", m.id}, {"duration_s", m.duration}});
    j["emotions"] = json::array();
    for (const auto& e : emotions) j["emotions"].push_back({{"id", e.id}, {"vad", {e.v, e.a, e.d}}});
    json nodes = json::array();
    nodes.push_back({{"id", "scene"}, {"kind", "and"}, {"children", {"transform", "relation", "character1", "character2"}}});
    nodes.push_back({{"id", "transform"}, {"kind", "terminal"}, {"branch", "transform"}});
    nodes.push_back({{"id", "relation"}, {"kind", "or"}, {"slot", "relation"}, {"children", {{"pool", "relations"}}}});
    for (int c = 1; c <= 2; ++c) {
        const std::string p = "c" + std::to_string(c);
        nodes.push_back({{"id", "character" + std::to_string(c)},
                         {"kind", "and"},
                         {"children", {p + ".motion", p + ".start_face", p + ".end_face"}}});
        nodes.push_back({{"id", p + ".motion"}, {"kind", "or"}, {"slot", p + ".motion"}, {"children", {{"pool", "motions"}}}});
        for (const char* f : {".start_face", ".end_face"})
            nodes.push_back({{"id", p + f}, {"kind", "or"}, {"slot", p + f}, {"children", {{"pool", "emotions"}}}});
    }
    j["nodes"] = nodes;
    return j;
}

inline StAog toy_grammar(const std::vector<ToyRelation>& rels, const std::vector<ToyMotion>& motions,
                         const std::vector<ToyEmotion>& emotions, const std::string& name = "toy") {
    return grammar_from_json(toy_grammar_json(rels, motions, emotions, name));
}

// Four joints, 13 keyframes at 0.5 s, every channel a phase-shifted sinusoid.
inline PoseTrack sinusoid_track(double phase, double amplitude = 30.0) {
    PoseTrack t;
    for (int k = 0; k <= 12; ++k) {
        const double time = 0.5 * k;
        Pose p = Pose::zero(4);
        for (int j = 0; j < 4; ++j)
            for (int c = 0; c < 3; ++c)
                p.rotations[j][c] = amplitude * (1 + 0.3 * j) * std::sin(1.3 * time + phase + 0.7 * c + 0.4 * j);
        p.root_position = {0, 0.9, 0};
        t.keyframes.push_back({time, p});
    }
    return t;
}

inline SequenceModelConfig sinusoid_config() {
    SequenceModelConfig c;
    c.pose_dim = 15;
    c.state_dim = 16;
    c.latent_dim = 4;
    c.hidden_dim = 32;
    return c;
}

// Per-joint max-abs rotation errors of teacher-forced reconstructions on
// held-out phases.
inline std::vector<double> sinusoid_joint_errors(const SequenceModel& m, int tracks = 8) {
    std::vector<double> errs;
    for (int i = 0; i < tracks; ++i) {
        const auto poses = resample(sinusoid_track(i * 0.785 + 0.39), 0.5);
        const auto rec = reconstruct_sequence(m, poses);
        for (std::size_t k = 0; k < poses.size(); ++k)
            for (std::size_t j = 0; j < 4; ++j)
                errs.push_back((rec[k].rotations[j] - poses[k].rotations[j]).cwiseAbs().maxCoeff());
    }
    std::sort(errs.begin(), errs.end());
    return errs;
}

}  // namespace staog::test
