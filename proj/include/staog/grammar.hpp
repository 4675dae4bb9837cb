#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "staog/faces.hpp"
#include "staog/motion.hpp"
#include "staog/random.hpp"
#include "staog/vadi.hpp"

namespace staog {

enum class NodeKind { And, Or, Terminal };
enum class Branch { none, transform, relation, motion, emotion };

// Or-node slots of the scene grammar. Every parse tree instantiates each
// slot exactly once.
enum class Slot { relation, c1_motion, c1_start_face, c1_end_face, c2_motion, c2_start_face, c2_end_face };
inline constexpr std::size_t kSlotCount = 7;

std::string_view to_string(Slot slot);
std::optional<Slot> slot_from_string(std::string_view s);
Slot motion_slot(std::size_t character);
Slot face_slot(std::size_t character, bool end);

struct Node {
    std::string id;
    NodeKind kind = NodeKind::And;
    Branch branch = Branch::none;
    std::vector<std::size_t> children;  // node indices
    std::vector<double> weights;        // Or-nodes: one per child, sums to 1
    std::optional<Slot> slot;           // Or-nodes
    std::optional<std::size_t> payload; // terminals: index into the branch's pool
    double terminal_energy = 0.0;       // terminals
};

struct MotionClip {
    std::string id;
    std::string name;
    double duration_s = 1.0;
    std::string track_file;  // relative to the grammar file
};

struct EmotionEntry {
    std::string id;
    std::string name;
    std::string face_file;  // relative to the grammar file
    VadVector vad;
};

struct TransformSpec {
    double distance_min = 0.5;
    double distance_max = 3.0;
    double social_distance = kDefaultSocialDistance;
};

// Spatial-temporal And-Or graph: node set, production rules, pools and
// Or-branch probabilities. Immutable after construction.
class StAog {
public:
    std::string name;
    std::filesystem::path base_dir;  // resolves pool file references
    std::size_t root = 0;
    std::vector<Node> nodes;
    std::vector<RelationScore> relation_pool;
    std::vector<MotionClip> motion_pool;
    std::vector<EmotionEntry> emotion_pool;
    TransformSpec transform;
    double emotion_transition_s = 1.0;

    // Checks structure and pools; fills the slot index. Throws ValidationError.
    void validate();

    const Node& slot_node(Slot slot) const { return nodes[slot_nodes_[static_cast<std::size_t>(slot)]]; }
    std::size_t slot_node_index(Slot slot) const { return slot_nodes_[static_cast<std::size_t>(slot)]; }
    std::optional<std::size_t> node_index(std::string_view id) const;

    // Pool size behind a slot.
    std::size_t pool_size(Slot slot) const;

private:
    std::array<std::size_t, kSlotCount> slot_nodes_{};
};

StAog load_grammar(const std::filesystem::path& path);
StAog grammar_from_json(const nlohmann::json& j, const std::filesystem::path& base_dir = {});

struct Placement {
    Eigen::Vector3d position = Eigen::Vector3d::Zero();  // metres
    double yaw_deg = 0.0;                                // 0 faces +x

    bool operator==(const Placement&) const = default;
};

struct FaceState {
    std::size_t pool_index = 0;  // originating pool entry
    VadVector vad;               // may drift from the pool entry under MCMC
    std::optional<FaceLandmarks> landmarks;
};

// Motion generated by the sequence model, replacing the pool clip's track.
struct GeneratedMotion {
    PoseTrack track;                       // prefix keyframes followed by the continuation
    std::size_t prefix_length = 0;         // number of given keyframes at the front
    std::vector<Eigen::VectorXd> latents;  // one per continuation pose
};

struct CharacterState {
    Placement placement;
    std::size_t motion = 0;  // motion pool index
    FaceState start_face;
    FaceState end_face;
    double t_m = 0.0;
    double t_e = 0.0;
    double t_m_end = 0.0;
    double t_e_end = 0.0;
    std::optional<VadVector> motion_vad;  // overrides the lexicon VAD of the clip name
    std::optional<GeneratedMotion> generated;
};

// One scene instantiation: the parse tree's discrete choices plus the
// continuous attributes its spatial/temporal relations are evaluated on.
struct ParseGraph {
    std::array<CharacterState, 2> characters;
    std::size_t relation = 0;  // relation pool index

    double distance() const { return (characters[1].placement.position - characters[0].placement.position).norm(); }
    double end_time() const;

    const FaceState& face(std::size_t character, bool end) const {
        return end ? characters[character].end_face : characters[character].start_face;
    }
    FaceState& face(std::size_t character, bool end) {
        return end ? characters[character].end_face : characters[character].start_face;
    }
};

// Pool index currently chosen at a slot.
std::size_t slot_choice(const ParseGraph& pg, Slot slot);
void set_slot_choice(ParseGraph& pg, Slot slot, std::size_t pool_index, const StAog& g);

// Or-node id -> chosen child node id.
std::map<std::string, std::string> or_choices(const ParseGraph& pg, const StAog& g);

// Exactly two characters, ordered timings, pool references in range.
// Throws ConsistencyError.
void validate_parse_graph(const ParseGraph& pg, const StAog& g);

// Places the characters face to face at the given distance on the x axis.
void place_face_to_face(ParseGraph& pg, double distance);

// Draws start times so each character's (t_m - t_e) and the motion end-time
// misalignment are standard normal, then derives end times.
void sample_timings(ParseGraph& pg, const StAog& g, Rng& rng);
void recompute_end_times(ParseGraph& pg, const StAog& g);

ParseGraph forward_sample(const StAog& g, Rng& rng);

}  // namespace staog
