#include "staog/grammar.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "json_util.hpp"
#include "staog/error.hpp"

namespace staog {

using detail::json;

namespace {

constexpr std::array<std::string_view, kSlotCount> kSlotNames = {
    "relation", "c1.motion", "c1.start_face", "c1.end_face", "c2.motion", "c2.start_face", "c2.end_face"};

Branch slot_branch(Slot slot) {
    switch (slot) {
        case Slot::relation: return Branch::relation;
        case Slot::c1_motion:
        case Slot::c2_motion: return Branch::motion;
        default: return Branch::emotion;
    }
}

Branch branch_from_string(std::string_view s) {
    if (s == "transform") return Branch::transform;
    if (s == "relation") return Branch::relation;
    if (s == "motion") return Branch::motion;
    if (s == "emotion") return Branch::emotion;
    if (s.empty() || s == "none") return Branch::none;
    throw ValidationError("unknown branch '" + std::string(s) + "'");
}

NodeKind kind_from_string(std::string_view s) {
    if (s == "and") return NodeKind::And;
    if (s == "or") return NodeKind::Or;
    if (s == "terminal") return NodeKind::Terminal;
    throw ValidationError("unknown node kind '" + std::string(s) + "'");
}

template <class Pool>
std::optional<std::size_t> pool_lookup(const Pool& pool, std::string_view id) {
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].id == id) return i;
    return std::nullopt;
}

std::optional<std::size_t> relation_lookup(const std::vector<RelationScore>& pool, std::string_view id) {
    for (std::size_t i = 0; i < pool.size(); ++i)
        if (pool[i].name == id) return i;
    return std::nullopt;
}

std::size_t character_of(Slot slot) {
    switch (slot) {
        case Slot::c2_motion:
        case Slot::c2_start_face:
        case Slot::c2_end_face: return 1;
        default: return 0;
    }
}

}  // namespace

std::string_view to_string(Slot slot) { return kSlotNames[static_cast<std::size_t>(slot)]; }

std::optional<Slot> slot_from_string(std::string_view s) {
    for (std::size_t i = 0; i < kSlotNames.size(); ++i)
        if (kSlotNames[i] == s) return static_cast<Slot>(i);
    return std::nullopt;
}

Slot motion_slot(std::size_t character) { return character == 0 ? Slot::c1_motion : Slot::c2_motion; }

Slot face_slot(std::size_t character, bool end) {
    if (character == 0) return end ? Slot::c1_end_face : Slot::c1_start_face;
    return end ? Slot::c2_end_face : Slot::c2_start_face;
}

std::optional<std::size_t> StAog::node_index(std::string_view id) const {
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i].id == id) return i;
    return std::nullopt;
}

std::size_t StAog::pool_size(Slot slot) const {
    switch (slot_branch(slot)) {
        case Branch::relation: return relation_pool.size();
        case Branch::motion: return motion_pool.size();
        default: return emotion_pool.size();
    }
}

void StAog::validate() {
    if (relation_pool.empty()) throw ValidationError("relation pool is empty");
    if (motion_pool.empty()) throw ValidationError("motion pool is empty");
    if (emotion_pool.empty()) throw ValidationError("emotion pool is empty");
    if (!(transform.distance_min >= 0.0) || !(transform.distance_max >= transform.distance_min))
        throw ValidationError("bad transform distance range");
    if (!(transform.social_distance > 0.0)) throw ValidationError("social distance must be positive");
    if (!(emotion_transition_s >= 0.0)) throw ValidationError("emotion transition time must be non-negative");
    for (const auto& m : motion_pool)
        if (!(m.duration_s > 0.0)) throw ValidationError("motion " + m.id + " needs a positive duration");
    if (root >= nodes.size()) throw ValidationError("root node missing");

    // Walk from the root: production rules must form a tree (hence acyclic).
    std::vector<int> visits(nodes.size(), 0);
    std::vector<std::size_t> stack{root};
    std::array<int, kSlotCount> slot_seen{};
    while (!stack.empty()) {
        const auto idx = stack.back();
        stack.pop_back();
        if (++visits[idx] > 1) throw ValidationError("node '" + nodes[idx].id + "' reached twice (cycle or shared child)");
        const Node& node = nodes[idx];
        switch (node.kind) {
            case NodeKind::Terminal:
                if (!node.children.empty()) throw ValidationError("terminal '" + node.id + "' has children");
                break;
            case NodeKind::And:
                if (node.children.empty()) throw ValidationError("and-node '" + node.id + "' has no children");
                for (auto c : node.children) {
                    if (nodes[c].kind == NodeKind::Terminal && nodes[c].branch != Branch::transform)
                        throw ValidationError("pool terminals must sit under an or-node ('" + node.id + "')");
                    stack.push_back(c);
                }
                break;
            case NodeKind::Or: {
                if (node.children.empty()) throw ValidationError("or-node '" + node.id + "' has no children");
                if (!node.slot) throw ValidationError("or-node '" + node.id + "' has no slot");
                if (node.weights.size() != node.children.size())
                    throw ValidationError("or-node '" + node.id + "' weight count mismatch");
                double sum = 0.0;
                for (double w : node.weights) {
                    if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("negative or-weight at '" + node.id + "'");
                    sum += w;
                }
                if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("or-weights at '" + node.id + "' do not sum to 1");
                const auto s = static_cast<std::size_t>(*node.slot);
                if (slot_seen[s]++) throw ValidationError("slot " + std::string(kSlotNames[s]) + " appears twice");
                slot_nodes_[s] = idx;
                const Branch want = slot_branch(*node.slot);
                for (auto c : node.children) {
                    const Node& child = nodes[c];
                    if (child.kind != NodeKind::Terminal || child.branch != want || !child.payload)
                        throw ValidationError("or-node '" + node.id + "' must choose among " +
                                              std::string(kSlotNames[s]) + " terminals");
                    if (*child.payload >= pool_size(*node.slot))
                        throw ValidationError("terminal '" + child.id + "' references a missing pool entry");
                    ++visits[c];
                }
                break;
            }
        }
    }
    for (std::size_t s = 0; s < kSlotCount; ++s)
        if (slot_seen[s] != 1) throw ValidationError("slot " + std::string(kSlotNames[s]) + " is not reachable");
}

StAog grammar_from_json(const json& j, const std::filesystem::path& base_dir) {
    try {
        StAog g;
        g.base_dir = base_dir;
        const auto schema = j.value("schema", std::string("staog.grammar/1"));
        if (schema != "staog.grammar/1") throw VersionError("unsupported grammar schema '" + schema + "'");
        g.name = j.value("name", std::string("grammar"));
        if (j.contains("transform")) {
            const auto& t = j.at("transform");
            if (t.contains("distance_range")) {
                const auto r = t.at("distance_range").get<std::vector<double>>();
                if (r.size() != 2) throw ValidationError("distance_range must be [min, max]");
                g.transform.distance_min = r[0];
                g.transform.distance_max = r[1];
            }
            g.transform.social_distance = t.value("social_distance", kDefaultSocialDistance);
        }
        g.emotion_transition_s = j.value("emotion_transition_s", 1.0);

        for (const auto& r : detail::require<json>(j, "relations")) {
            RelationScore rel;
            rel.name = detail::require<std::string>(r, "id");
            rel.dominance_level = level_from_string(detail::require<std::string>(r, "dominance"));
            rel.intimacy_level = level_from_string(detail::require<std::string>(r, "intimacy"));
            if (relation_lookup(g.relation_pool, rel.name)) throw ValidationError("duplicate relation " + rel.name);
            g.relation_pool.push_back(std::move(rel));
        }
        for (const auto& m : detail::require<json>(j, "motions")) {
            MotionClip clip;
            clip.id = detail::require<std::string>(m, "id");
            clip.name = m.value("name", clip.id);
            clip.duration_s = detail::require<double>(m, "duration_s");
            clip.track_file = m.value("pose_track", std::string());
            if (pool_lookup(g.motion_pool, clip.id)) throw ValidationError("duplicate motion " + clip.id);
            g.motion_pool.push_back(std::move(clip));
        }
        for (const auto& e : detail::require<json>(j, "emotions")) {
            EmotionEntry entry;
            entry.id = detail::require<std::string>(e, "id");
            entry.name = e.value("name", entry.id);
            entry.face_file = e.value("face", std::string());
            const Eigen::Vector3d vad = detail::vec3(e.at("vad"));
            entry.vad = VadVector::clamped(vad.x(), vad.y(), vad.z());
            if (pool_lookup(g.emotion_pool, entry.id)) throw ValidationError("duplicate emotion " + entry.id);
            g.emotion_pool.push_back(std::move(entry));
        }

        // First pass: declared nodes.
        const auto& jnodes = detail::require<json>(j, "nodes");
        for (const auto& jn : jnodes) {
            Node node;
            node.id = detail::require<std::string>(jn, "id");
            node.kind = kind_from_string(detail::require<std::string>(jn, "kind"));
            node.branch = branch_from_string(jn.value("branch", std::string()));
            node.terminal_energy = jn.value("energy", 0.0);
            if (jn.contains("slot")) {
                auto slot = slot_from_string(jn.at("slot").get<std::string>());
                if (!slot) throw ValidationError("unknown slot at node '" + node.id + "'");
                node.slot = slot;
                if (node.branch == Branch::none) node.branch = slot_branch(*slot);
            }
            if (node.kind == NodeKind::Terminal && jn.contains("ref")) {
                const auto ref = jn.at("ref").get<std::string>();
                std::optional<std::size_t> idx;
                if (node.branch == Branch::relation) idx = relation_lookup(g.relation_pool, ref);
                else if (node.branch == Branch::motion) idx = pool_lookup(g.motion_pool, ref);
                else if (node.branch == Branch::emotion) idx = pool_lookup(g.emotion_pool, ref);
                if (!idx) throw ValidationError("terminal '" + node.id + "' references unknown pool entry '" + ref + "'");
                node.payload = idx;
            }
            if (g.node_index(node.id)) throw ValidationError("duplicate node id '" + node.id + "'");
            g.nodes.push_back(std::move(node));
        }

        // Second pass: children (explicit ids, or a pool expansion).
        const std::size_t declared = g.nodes.size();
        for (std::size_t i = 0; i < declared; ++i) {
            const auto& jn = jnodes[i];
            if (!jn.contains("children")) continue;
            const auto& jc = jn.at("children");
            if (jc.is_object()) {
                const auto pool = detail::require<std::string>(jc, "pool");
                std::size_t count = 0;
                Branch branch = Branch::none;
                if (pool == "relations") { count = g.relation_pool.size(); branch = Branch::relation; }
                else if (pool == "motions") { count = g.motion_pool.size(); branch = Branch::motion; }
                else if (pool == "emotions") { count = g.emotion_pool.size(); branch = Branch::emotion; }
                else throw ValidationError("unknown pool '" + pool + "'");
                for (std::size_t p = 0; p < count; ++p) {
                    Node t;
                    t.kind = NodeKind::Terminal;
                    t.branch = branch;
                    t.payload = p;
                    std::string ref = branch == Branch::relation ? g.relation_pool[p].name
                                      : branch == Branch::motion ? g.motion_pool[p].id
                                                                 : g.emotion_pool[p].id;
                    t.id = g.nodes[i].id + "/" + ref;
                    g.nodes.push_back(std::move(t));
                    g.nodes[i].children.push_back(g.nodes.size() - 1);
                }
            } else {
                for (const auto& c : jc) {
                    auto idx = g.node_index(c.get<std::string>());
                    if (!idx) throw ValidationError("node '" + g.nodes[i].id + "' has unknown child '" + c.get<std::string>() + "'");
                    g.nodes[i].children.push_back(*idx);
                }
            }
        }

        const auto weights = j.value("or_weights", json::object());
        for (auto& node : g.nodes) {
            if (node.kind != NodeKind::Or) continue;
            if (weights.contains(node.id)) {
                node.weights = weights.at(node.id).get<std::vector<double>>();
            } else {
                node.weights.assign(node.children.size(), node.children.empty() ? 0.0 : 1.0 / static_cast<double>(node.children.size()));
            }
        }
        for (const auto& [id, w] : weights.items())
            if (!g.node_index(id)) throw ValidationError("or_weights references unknown node '" + id + "'");

        auto root = g.node_index(detail::require<std::string>(j, "root"));
        if (!root) throw ValidationError("root node not declared");
        g.root = *root;
        g.validate();
        return g;
    } catch (const json::exception& e) {
        throw ValidationError(std::string("grammar: ") + e.what());
    }
}

StAog load_grammar(const std::filesystem::path& path) {
    return grammar_from_json(detail::read_json_file(path), path.parent_path());
}

double ParseGraph::end_time() const {
    double t = 0.0;
    for (const auto& c : characters) t = std::max({t, c.t_m_end, c.t_e_end});
    return t;
}

std::size_t slot_choice(const ParseGraph& pg, Slot slot) {
    switch (slot) {
        case Slot::relation: return pg.relation;
        case Slot::c1_motion: return pg.characters[0].motion;
        case Slot::c2_motion: return pg.characters[1].motion;
        case Slot::c1_start_face: return pg.characters[0].start_face.pool_index;
        case Slot::c1_end_face: return pg.characters[0].end_face.pool_index;
        case Slot::c2_start_face: return pg.characters[1].start_face.pool_index;
        case Slot::c2_end_face: return pg.characters[1].end_face.pool_index;
    }
    return 0;
}

void set_slot_choice(ParseGraph& pg, Slot slot, std::size_t pool_index, const StAog& g) {
    if (pool_index >= g.pool_size(slot)) throw ConsistencyError("pool index out of range for slot " + std::string(to_string(slot)));
    auto& c = pg.characters[character_of(slot)];
    switch (slot) {
        case Slot::relation: pg.relation = pool_index; break;
        case Slot::c1_motion:
        case Slot::c2_motion:
            c.motion = pool_index;
            c.motion_vad.reset();
            c.generated.reset();
            break;
        case Slot::c1_start_face:
        case Slot::c2_start_face: c.start_face = FaceState{pool_index, g.emotion_pool[pool_index].vad, std::nullopt}; break;
        case Slot::c1_end_face:
        case Slot::c2_end_face: c.end_face = FaceState{pool_index, g.emotion_pool[pool_index].vad, std::nullopt}; break;
    }
}

std::map<std::string, std::string> or_choices(const ParseGraph& pg, const StAog& g) {
    std::map<std::string, std::string> out;
    for (std::size_t s = 0; s < kSlotCount; ++s) {
        const auto slot = static_cast<Slot>(s);
        const Node& node = g.slot_node(slot);
        const auto choice = slot_choice(pg, slot);
        bool found = false;
        for (auto c : node.children)
            if (g.nodes[c].payload == choice) {
                out[node.id] = g.nodes[c].id;
                found = true;
                break;
            }
        if (!found) throw ConsistencyError("or-node '" + node.id + "' has no branch for the chosen entry");
    }
    return out;
}

void validate_parse_graph(const ParseGraph& pg, const StAog& g) {
    for (std::size_t s = 0; s < kSlotCount; ++s) {
        const auto slot = static_cast<Slot>(s);
        if (slot_choice(pg, slot) >= g.pool_size(slot))
            throw ConsistencyError("slot " + std::string(to_string(slot)) + " references a missing pool entry");
    }
    for (const auto& c : pg.characters) {
        if (!(c.t_m_end >= c.t_m) || !(c.t_e_end >= c.t_e)) throw ConsistencyError("end time precedes start time");
        for (const FaceState* f : {&c.start_face, &c.end_face})
            for (std::size_t i = 0; i < 3; ++i)
                if (!(f->vad[i] >= 0.0 && f->vad[i] <= 1.0)) throw ConsistencyError("face VAD outside [0,1]");
        if (!c.placement.position.allFinite() || !std::isfinite(c.placement.yaw_deg))
            throw ConsistencyError("non-finite placement");
    }
    (void)or_choices(pg, g);
}

void place_face_to_face(ParseGraph& pg, double distance) {
    pg.characters[0].placement = Placement{Eigen::Vector3d(-distance / 2.0, 0.0, 0.0), 0.0};
    pg.characters[1].placement = Placement{Eigen::Vector3d(distance / 2.0, 0.0, 0.0), 180.0};
}

namespace {

double motion_duration(const CharacterState& c, const StAog& g) {
    if (c.generated && !c.generated->track.keyframes.empty()) return c.generated->track.duration();
    return g.motion_pool[c.motion].duration_s;
}

}  // namespace

void recompute_end_times(ParseGraph& pg, const StAog& g) {
    for (auto& c : pg.characters) {
        c.t_m_end = c.t_m + motion_duration(c, g);
        c.t_e_end = c.t_e + g.emotion_transition_s;
    }
}

void sample_timings(ParseGraph& pg, const StAog& g, Rng& rng) {
    auto& c1 = pg.characters[0];
    auto& c2 = pg.characters[1];
    const double d1 = motion_duration(c1, g);
    const double d2 = motion_duration(c2, g);
    const double gap1 = rng.normal();      // t_1m - t_1e
    const double gap2 = rng.normal();      // t_2m - t_2e
    const double end_gap = rng.normal();   // t_1m_end - t_2m_end
    c1.t_m = 0.0;
    c2.t_m = c1.t_m + d1 - d2 - end_gap;
    c1.t_e = c1.t_m - gap1;
    c2.t_e = c2.t_m - gap2;
    const double shift = -std::min({c1.t_m, c2.t_m, c1.t_e, c2.t_e});
    for (auto* c : {&c1, &c2}) {
        c->t_m += shift;
        c->t_e += shift;
    }
    recompute_end_times(pg, g);
}

ParseGraph forward_sample(const StAog& g, Rng& rng) {
    ParseGraph pg;
    for (std::size_t s = 0; s < kSlotCount; ++s) {
        const auto slot = static_cast<Slot>(s);
        const Node& node = g.slot_node(slot);
        double u = rng.uniform();
        std::size_t pick = node.children.size() - 1;
        for (std::size_t c = 0; c < node.children.size(); ++c) {
            if (u < node.weights[c]) {
                pick = c;
                break;
            }
            u -= node.weights[c];
        }
        // Skip zero-weight branches that the fallthrough could land on.
        while (node.weights[pick] == 0.0 && pick > 0) --pick;
        set_slot_choice(pg, slot, *g.nodes[node.children[pick]].payload, g);
    }
    place_face_to_face(pg, rng.uniform(g.transform.distance_min, g.transform.distance_max));
    sample_timings(pg, g, rng);
    return pg;
}

}  // namespace staog
