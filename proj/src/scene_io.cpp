#include "staog/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <initializer_list>
#include <numbers>

#include <Eigen/Geometry>

#include "json_util.hpp"
#include "staog/error.hpp"

namespace staog {

using detail::json;

std::string_view to_string(Label label) {
    switch (label) {
        case Label::good: return "good";
        case Label::medium: return "medium";
        case Label::bad: return "bad";
    }
    return "bad";
}

Label label_from_string(std::string_view s) {
    if (s == "good") return Label::good;
    if (s == "medium") return Label::medium;
    if (s == "bad") return Label::bad;
    throw ValidationError("label must be good, medium or bad, got '" + std::string(s) + "'");
}

namespace {

void check_fields(const json& j, std::initializer_list<std::string_view> allowed, std::string_view where,
                  const SceneReadOptions& opts) {
    if (!j.is_object()) throw ValidationError(std::string(where) + " must be an object");
    for (const auto& [key, _] : j.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) != allowed.end()) continue;
        const std::string msg = "unknown field '" + key + "' in " + std::string(where);
        if (opts.unknown == UnknownFields::reject) throw ValidationError(msg);
        if (opts.warnings != nullptr) opts.warnings->push_back(msg);
    }
}

json vad_json(const VadVector& v) { return json::array({v.valence, v.arousal, v.dominance}); }

VadVector vad_from(const json& j) {
    if (!j.is_array() || j.size() != 3) throw ValidationError("expected a VAD triple");
    VadVector v{j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
    for (std::size_t i = 0; i < 3; ++i)
        if (!(v[i] >= 0.0 && v[i] <= 1.0)) throw DomainError("VAD component outside [0,1]");
    return v;
}

json vector_json(const Eigen::VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

Eigen::VectorXd vector_from(const json& j) {
    const auto values = j.get<std::vector<double>>();
    return Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

json face_json(const FaceState& f, const StAog& g) {
    json j = {{"index", f.pool_index}, {"id", g.emotion_pool.at(f.pool_index).id}, {"vad", vad_json(f.vad)}};
    if (f.landmarks) j["landmarks"] = vector_json(f.landmarks->coords);
    return j;
}

FaceState face_from(const json& j, const StAog& g, const SceneReadOptions& opts) {
    check_fields(j, {"index", "id", "vad", "landmarks"}, "face", opts);
    FaceState f;
    f.pool_index = detail::require<std::size_t>(j, "index");
    if (f.pool_index >= g.emotion_pool.size()) throw ConsistencyError("face index out of range");
    if (detail::require<std::string>(j, "id") != g.emotion_pool[f.pool_index].id)
        throw ConsistencyError("face id does not match emotion pool entry " + std::to_string(f.pool_index));
    f.vad = vad_from(detail::require<json>(j, "vad"));
    if (j.contains("landmarks")) f.landmarks = FaceLandmarks{vector_from(j.at("landmarks"))};
    return f;
}

json character_json(const CharacterState& c, const StAog& g) {
    json j;
    j["placement"] = {{"position", detail::to_json(c.placement.position)}, {"yaw_deg", c.placement.yaw_deg}};
    j["motion"] = {{"index", c.motion}, {"id", g.motion_pool.at(c.motion).id}};
    j["start_face"] = face_json(c.start_face, g);
    j["end_face"] = face_json(c.end_face, g);
    j["timing"] = {{"t_m", c.t_m}, {"t_e", c.t_e}, {"t_m_end", c.t_m_end}, {"t_e_end", c.t_e_end}};
    if (c.motion_vad) j["motion_vad"] = vad_json(*c.motion_vad);
    if (c.generated) {
        json latents = json::array();
        for (const auto& z : c.generated->latents) latents.push_back(vector_json(z));
        j["generated"] = {{"track", track_to_json(c.generated->track)},
                          {"prefix_length", c.generated->prefix_length},
                          {"latents", latents}};
    }
    return j;
}

CharacterState character_from(const json& j, const StAog& g, const SceneReadOptions& opts) {
    check_fields(j, {"placement", "motion", "start_face", "end_face", "timing", "motion_vad", "generated"}, "character",
                 opts);
    CharacterState c;
    const auto& pj = detail::require<json>(j, "placement");
    check_fields(pj, {"position", "yaw_deg"}, "placement", opts);
    c.placement.position = detail::vec3(detail::require<json>(pj, "position"));
    c.placement.yaw_deg = detail::require<double>(pj, "yaw_deg");

    const auto& mj = detail::require<json>(j, "motion");
    check_fields(mj, {"index", "id"}, "motion", opts);
    c.motion = detail::require<std::size_t>(mj, "index");
    if (c.motion >= g.motion_pool.size()) throw ConsistencyError("motion index out of range");
    if (detail::require<std::string>(mj, "id") != g.motion_pool[c.motion].id)
        throw ConsistencyError("motion id does not match motion pool entry " + std::to_string(c.motion));

    c.start_face = face_from(detail::require<json>(j, "start_face"), g, opts);
    c.end_face = face_from(detail::require<json>(j, "end_face"), g, opts);

    const auto& tj = detail::require<json>(j, "timing");
    check_fields(tj, {"t_m", "t_e", "t_m_end", "t_e_end"}, "timing", opts);
    c.t_m = detail::require<double>(tj, "t_m");
    c.t_e = detail::require<double>(tj, "t_e");
    c.t_m_end = detail::require<double>(tj, "t_m_end");
    c.t_e_end = detail::require<double>(tj, "t_e_end");

    if (j.contains("motion_vad")) c.motion_vad = vad_from(j.at("motion_vad"));
    if (j.contains("generated")) {
        const auto& gj = j.at("generated");
        check_fields(gj, {"track", "prefix_length", "latents"}, "generated", opts);
        GeneratedMotion gen;
        gen.track = track_from_json(detail::require<json>(gj, "track"));
        gen.prefix_length = detail::require<std::size_t>(gj, "prefix_length");
        for (const auto& z : detail::require<json>(gj, "latents")) gen.latents.push_back(vector_from(z));
        if (gen.prefix_length > gen.track.keyframes.size())
            throw ConsistencyError("generated prefix longer than its track");
        c.generated = std::move(gen);
    }
    return c;
}

int schema_version(const std::string& schema) {
    constexpr std::string_view prefix = "staog.scene/";
    if (schema.rfind(prefix, 0) != 0) throw VersionError("not a scene document: schema '" + schema + "'");
    try {
        std::size_t used = 0;
        const int v = std::stoi(schema.substr(prefix.size()), &used);
        if (used != schema.size() - prefix.size()) throw std::invalid_argument(schema);
        return v;
    } catch (const std::exception&) {
        throw VersionError("malformed scene schema '" + schema + "'");
    }
}

}  // namespace

json parse_graph_to_json(const ParseGraph& pg, const StAog& g) {
    return {{"relation", {{"index", pg.relation}, {"name", g.relation_pool.at(pg.relation).name}}},
            {"characters", json::array({character_json(pg.characters[0], g), character_json(pg.characters[1], g)})}};
}

ParseGraph parse_graph_from_json(const json& j, const StAog& g, const SceneReadOptions& opts) {
    check_fields(j, {"relation", "characters"}, "scene", opts);
    ParseGraph pg;
    const auto& rj = detail::require<json>(j, "relation");
    check_fields(rj, {"index", "name"}, "relation", opts);
    pg.relation = detail::require<std::size_t>(rj, "index");
    if (pg.relation >= g.relation_pool.size()) throw ConsistencyError("relation index out of range");
    if (detail::require<std::string>(rj, "name") != g.relation_pool[pg.relation].name)
        throw ConsistencyError("relation name does not match relation pool entry " + std::to_string(pg.relation));
    const auto& cj = detail::require<json>(j, "characters");
    if (!cj.is_array() || cj.size() != 2) throw ValidationError("a scene has exactly two characters");
    for (std::size_t c = 0; c < 2; ++c) pg.characters[c] = character_from(cj[c], g, opts);
    validate_parse_graph(pg, g);
    return pg;
}

json scene_to_json(const SceneDocument& doc, const StAog& g) {
    json j = {{"schema", kSceneSchema}, {"grammar", doc.grammar}, {"scene", parse_graph_to_json(doc.pg, g)}};
    if (doc.label) j["label"] = to_string(*doc.label);
    if (doc.energy) {
        json features = json::object();
        for (std::size_t i = 0; i < kTermCount; ++i)
            features[std::string(term_name(static_cast<Term>(i)))] = doc.energy->features.values[static_cast<Eigen::Index>(i)];
        j["energy"] = {{"tree", doc.energy->tree},
                       {"spatial", doc.energy->spatial + 0.0},
                       {"temporal", doc.energy->temporal + 0.0},
                       {"total", doc.energy->total()},
                       {"features", features}};
    }
    return j;
}

SceneDocument scene_from_json(const json& j, const StAog& g, const SceneReadOptions& opts) {
    if (!j.is_object()) throw ValidationError("scene document must be an object");
    const int version = schema_version(detail::require<std::string>(j, "schema"));
    if (version != kSceneSchemaVersion)
        throw VersionError("scene schema version " + std::to_string(version) + " is not supported (expected " +
                           std::to_string(kSceneSchemaVersion) + ")");
    check_fields(j, {"schema", "grammar", "scene", "label", "energy"}, "document", opts);
    SceneDocument doc;
    doc.grammar = detail::require<std::string>(j, "grammar");
    if (doc.grammar != g.name)
        throw ConsistencyError("scene refers to grammar '" + doc.grammar + "', loaded grammar is '" + g.name + "'");
    doc.pg = parse_graph_from_json(detail::require<json>(j, "scene"), g, opts);
    if (j.contains("label")) doc.label = label_from_string(j.at("label").get<std::string>());
    if (j.contains("energy")) {
        const auto& ej = j.at("energy");
        check_fields(ej, {"tree", "spatial", "temporal", "total", "features"}, "energy", opts);
        EnergyBreakdown b;
        b.tree = detail::require<double>(ej, "tree");
        b.spatial = detail::require<double>(ej, "spatial");
        b.temporal = detail::require<double>(ej, "temporal");
        const auto& fj = detail::require<json>(ej, "features");
        for (std::size_t i = 0; i < kTermCount; ++i)
            b.features.values[static_cast<Eigen::Index>(i)] =
                detail::require<double>(fj, std::string(term_name(static_cast<Term>(i))).c_str());
        doc.energy = b;
    }
    return doc;
}

std::string canonical_scene_text(const SceneDocument& doc, const StAog& g) { return scene_to_json(doc, g).dump() + "\n"; }

void save_scene(const SceneDocument& doc, const StAog& g, const std::filesystem::path& path) {
    detail::write_file_atomic(path, canonical_scene_text(doc, g));
}

SceneDocument load_scene(const std::filesystem::path& path, const StAog& g, const SceneReadOptions& opts) {
    return scene_from_json(detail::read_json_file(path), g, opts);
}

std::vector<SceneDocument> load_scene_dataset(const std::filesystem::path& path, const StAog& g,
                                              const SceneReadOptions& opts) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open dataset " + path.string());
    std::vector<SceneDocument> docs;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(e.what(), line_no);
        }
        docs.push_back(scene_from_json(j, g, opts));
    }
    return docs;
}

void save_scene_dataset(std::span<const SceneDocument> docs, const StAog& g, const std::filesystem::path& path) {
    std::string text;
    for (const auto& d : docs) text += canonical_scene_text(d, g);
    detail::write_file_atomic(path, text);
}

MotionLibrary load_motion_library(const StAog& g, const std::filesystem::path& skeleton_path) {
    MotionLibrary lib;
    lib.skeleton = load_skeleton(skeleton_path);
    for (const auto& clip : g.motion_pool) {
        if (clip.track_file.empty()) throw ValidationError("motion '" + clip.id + "' has no pose track");
        lib.tracks.push_back(load_pose_track(g.base_dir / clip.track_file, &lib.skeleton));
    }
    return lib;
}

FaceModel fit_pool_face_model(const StAog& g, std::size_t k) {
    std::vector<FaceLandmarks> faces;
    std::vector<VadVector> vads;
    for (const auto& e : g.emotion_pool) {
        if (e.face_file.empty()) throw ValidationError("emotion '" + e.id + "' has no face file");
        auto rec = load_face(g.base_dir / e.face_file);
        faces.push_back(std::move(rec.landmarks));
        vads.push_back(e.vad);
    }
    return fit_face_model(faces, vads, std::min(k, faces.size()));
}

PoseVadiRegressor fit_pool_vadi_regressor(const StAog& g, const MotionLibrary& lib, const Lexicon& lex, double ridge) {
    std::vector<Pose> poses;
    std::vector<Vadi> labels;
    for (std::size_t i = 0; i < lib.tracks.size(); ++i) {
        const auto& clip = g.motion_pool.at(i);
        Vadi label;
        const json j = clip.track_file.empty() ? json::object() : detail::read_json_file(g.base_dir / clip.track_file);
        if (j.contains("vadi")) {
            const auto v = j.at("vadi").get<std::vector<double>>();
            if (v.size() != 4) throw ValidationError("motion '" + clip.id + "': vadi must have 4 entries");
            label = {v[0], v[1], v[2], v[3]};
        } else {
            const auto vad = motion_vad(clip.name, lex);
            label = {vad.valence, vad.arousal, vad.dominance, 0.0};
        }
        for (const auto& kf : lib.tracks[i].keyframes) {
            poses.push_back(kf.pose);
            labels.push_back(label);
        }
    }
    return PoseVadiRegressor::fit(poses, labels, ridge);
}

Pose character_pose(const ParseGraph& pg, std::size_t character, const MotionLibrary& lib, double t) {
    const auto& c = pg.characters.at(character);
    const PoseTrack& track = c.generated ? c.generated->track : lib.tracks.at(c.motion);
    if (track.keyframes.empty()) throw ValidationError("empty pose track");
    const double local = std::clamp(t - c.t_m, 0.0, track.duration());
    return interpolate(track, track.start_time() + local);
}

std::size_t frame_count(double duration, double fps) {
    if (!(fps > 0.0) || !std::isfinite(fps)) throw ValidationError("fps must be positive");
    if (!(duration >= 0.0)) throw ValidationError("negative scene duration");
    return static_cast<std::size_t>(std::floor(duration * fps + 1e-9)) + 1;
}

std::vector<RenderFrame> export_animation(const ParseGraph& pg, const MotionLibrary& lib, const FaceModel& faces,
                                          double fps) {
    if (!faces.fitted()) throw ValidationError("export needs a fitted face model");
    const std::size_t n = frame_count(pg.end_time(), fps);
    std::array<Eigen::Matrix3d, 2> rot;
    for (std::size_t c = 0; c < 2; ++c) {
        // Skeletons face +z; yaw 0 faces +x.
        const double yaw = (pg.characters[c].placement.yaw_deg + 90.0) * std::numbers::pi / 180.0;
        rot[c] = Eigen::AngleAxisd(yaw, Eigen::Vector3d::UnitY()).toRotationMatrix();
    }
    std::vector<RenderFrame> frames(n);
    for (std::size_t i = 0; i < n; ++i) {
        auto& frame = frames[i];
        frame.time = static_cast<double>(i) / fps;
        for (std::size_t c = 0; c < 2; ++c) {
            const auto& ch = pg.characters[c];
            auto joints = forward_kinematics(lib.skeleton, character_pose(pg, c, lib, frame.time));
            for (auto& p : joints) p = rot[c] * p + ch.placement.position;
            frame.characters[c].joints = std::move(joints);

            const double span = ch.t_e_end - ch.t_e;
            const double s = span > 0.0 ? std::clamp((frame.time - ch.t_e) / span, 0.0, 1.0)
                                        : (frame.time >= ch.t_e ? 1.0 : 0.0);
            const auto& a = ch.start_face.vad;
            const auto& b = ch.end_face.vad;
            const VadVector vad{a.valence + s * (b.valence - a.valence), a.arousal + s * (b.arousal - a.arousal),
                                a.dominance + s * (b.dominance - a.dominance)};
            frame.characters[c].face_vad = vad;
            frame.characters[c].face = vad_to_face(vad, faces);
        }
    }
    return frames;
}

json render_frames_to_json(std::span<const RenderFrame> frames) {
    json out = json::array();
    for (const auto& f : frames) {
        json chars = json::array();
        for (const auto& c : f.characters) {
            json joints = json::array();
            for (const auto& p : c.joints) joints.push_back(detail::to_json(p));
            chars.push_back({{"joints", joints}, {"face", vector_json(c.face.coords)}, {"face_vad", vad_json(c.face_vad)}});
        }
        out.push_back({{"t", f.time}, {"characters", chars}});
    }
    return out;
}

}  // namespace staog
