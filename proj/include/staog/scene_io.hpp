#pragma once

#include <cstddef>
#include <filesystem>
#include <array>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

#include "staog/faces.hpp"
#include "staog/grammar.hpp"
#include "staog/motion.hpp"
#include "staog/potentials.hpp"

namespace staog {

enum class Label { good, medium, bad };
std::string_view to_string(Label label);
// Throws ValidationError for anything outside good/medium/bad.
Label label_from_string(std::string_view s);

inline constexpr std::string_view kSceneSchema = "staog.scene/1";
inline constexpr int kSceneSchemaVersion = 1;

struct SceneDocument {
    std::string grammar;  // grammar name the pool indices refer to
    ParseGraph pg;
    std::optional<Label> label;
    std::optional<EnergyBreakdown> energy;
};

enum class UnknownFields { reject, warn };

struct SceneReadOptions {
    UnknownFields unknown = UnknownFields::reject;
    std::vector<std::string>* warnings = nullptr;  // lenient mode collects here
};

nlohmann::json parse_graph_to_json(const ParseGraph& pg, const StAog& g);
ParseGraph parse_graph_from_json(const nlohmann::json& j, const StAog& g, const SceneReadOptions& opts = {});

nlohmann::json scene_to_json(const SceneDocument& doc, const StAog& g);
// Checks the schema tag, the grammar name and every pool reference.
SceneDocument scene_from_json(const nlohmann::json& j, const StAog& g, const SceneReadOptions& opts = {});

// Canonical text: sorted keys, shortest round-trip numbers, trailing newline.
std::string canonical_scene_text(const SceneDocument& doc, const StAog& g);

void save_scene(const SceneDocument& doc, const StAog& g, const std::filesystem::path& path);
SceneDocument load_scene(const std::filesystem::path& path, const StAog& g, const SceneReadOptions& opts = {});

// Dataset: one canonical scene document per line.
std::vector<SceneDocument> load_scene_dataset(const std::filesystem::path& path, const StAog& g,
                                              const SceneReadOptions& opts = {});
void save_scene_dataset(std::span<const SceneDocument> docs, const StAog& g, const std::filesystem::path& path);

// Skeleton and clip tracks behind a grammar's motion pool.
struct MotionLibrary {
    Skeleton skeleton;
    std::vector<PoseTrack> tracks;  // parallel to the motion pool
};

MotionLibrary load_motion_library(const StAog& g, const std::filesystem::path& skeleton_path);

// Eigenface model over the emotion pool's face files.
FaceModel fit_pool_face_model(const StAog& g, std::size_t k = 3);

// Pose -> VADI regressor over every keyframe of the pool, labelled with the
// clip file's "vadi" entry (lexicon VAD of the clip name, intimacy 0, if absent).
PoseVadiRegressor fit_pool_vadi_regressor(const StAog& g, const MotionLibrary& lib, const Lexicon& lex,
                                          double ridge = 1e-6);

struct CharacterFrame {
    std::vector<Eigen::Vector3d> joints;  // world space
    FaceLandmarks face;
    VadVector face_vad;
};

struct RenderFrame {
    double time = 0.0;
    std::array<CharacterFrame, 2> characters;
};

// Pose of a character at scene time t (clip or generated track).
Pose character_pose(const ParseGraph& pg, std::size_t character, const MotionLibrary& lib, double t);

// Frames at 1/fps from 0 to the scene's end time, floor(duration * fps) + 1
// of them. Faces are interpolated in VAD space and synthesized.
std::vector<RenderFrame> export_animation(const ParseGraph& pg, const MotionLibrary& lib, const FaceModel& faces,
                                          double fps);
std::size_t frame_count(double duration, double fps);

nlohmann::json render_frames_to_json(std::span<const RenderFrame> frames);

}  // namespace staog
