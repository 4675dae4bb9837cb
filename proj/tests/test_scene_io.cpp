#include <gtest/gtest.h>

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>

#include "staog/error.hpp"
#include "staog/scene_io.hpp"
#include "support.hpp"

using namespace staog;
using nlohmann::json;

namespace {

std::filesystem::path temp_path(const std::string& name) { return std::filesystem::temp_directory_path() / name; }

SceneDocument sampled_doc(const StAog& g, const Lexicon& lex, std::uint64_t seed) {
    Rng rng(seed);
    SceneDocument doc{g.name, forward_sample(g, rng), std::nullopt, std::nullopt};
    PotentialParams theta;
    theta.values.setLinSpaced(0.1, 1.0);
    doc.energy = energy_breakdown(doc.pg, g, theta, lex);
    if (seed % 2 == 0) doc.label = Label::good;
    return doc;
}

std::size_t motion_index(const StAog& g, const std::string& id) {
    for (std::size_t i = 0; i < g.motion_pool.size(); ++i)
        if (g.motion_pool[i].id == id) return i;
    throw std::runtime_error("no motion " + id);
}

// Both characters play 2 s clips from t = 0; faces change over the first second.
ParseGraph two_second_scene(const StAog& g) {
    Rng rng(4);
    auto pg = forward_sample(g, rng);
    for (std::size_t c = 0; c < 2; ++c) {
        set_slot_choice(pg, motion_slot(c), motion_index(g, c == 0 ? "wave" : "clap"), g);
        pg.characters[c].t_m = 0.0;
        pg.characters[c].t_e = 0.0;
    }
    recompute_end_times(pg, g);
    return pg;
}

struct Fixture {
    StAog g = test::starter_grammar();
    Lexicon lex = test::starter_lexicon();
    MotionLibrary lib = load_motion_library(g, test::data_dir() / "skeleton.json");
    FaceModel faces = fit_pool_face_model(g);
};

const Fixture& fixture() {
    static const Fixture f;
    return f;
}

}  // namespace

TEST(Labels, ParseAndReject) {
    EXPECT_EQ(label_from_string("medium"), Label::medium);
    EXPECT_EQ(to_string(Label::bad), "bad");
    EXPECT_THROW(label_from_string("excellent"), ValidationError);
}

TEST(SceneJson, CanonicalRoundTripIsByteIdentical) {
    const auto& f = fixture();
    for (std::uint64_t seed = 0; seed < 30; ++seed) {
        const auto doc = sampled_doc(f.g, f.lex, seed);
        const auto text = canonical_scene_text(doc, f.g);
        const auto back = scene_from_json(json::parse(text), f.g);
        ASSERT_EQ(canonical_scene_text(back, f.g), text) << "seed " << seed;
        EXPECT_EQ(back.pg.relation, doc.pg.relation);
        EXPECT_EQ(back.label, doc.label);
        EXPECT_EQ(text.back(), '\n');
    }
}

TEST(SceneJson, FileRoundTrip) {
    const auto& f = fixture();
    const auto doc = sampled_doc(f.g, f.lex, 7);
    const auto path = temp_path("staog_scene_io.json");
    save_scene(doc, f.g, path);
    const auto back = load_scene(path, f.g);
    std::filesystem::remove(path);
    EXPECT_EQ(canonical_scene_text(back, f.g), canonical_scene_text(doc, f.g));
    EXPECT_NEAR(back.energy->total(), doc.energy->total(), 0.0);
}

TEST(SceneJson, FutureVersionIsRejected) {
    const auto& f = fixture();
    auto j = scene_to_json(sampled_doc(f.g, f.lex, 1), f.g);
    j["schema"] = "staog.scene/2";
    EXPECT_THROW(scene_from_json(j, f.g), VersionError);
}

TEST(SceneJson, UnknownFieldsStrictAndLenient) {
    const auto& f = fixture();
    auto j = scene_to_json(sampled_doc(f.g, f.lex, 1), f.g);
    j["colour"] = "blue";
    j["scene"]["characters"][0]["hat"] = true;
    EXPECT_THROW(scene_from_json(j, f.g), ValidationError);
    std::vector<std::string> warnings;
    SceneReadOptions lenient{UnknownFields::warn, &warnings};
    EXPECT_NO_THROW(scene_from_json(j, f.g, lenient));
    EXPECT_EQ(warnings.size(), 2u);
}

TEST(SceneJson, ReferenceChecks) {
    const auto& f = fixture();
    const auto base = scene_to_json(sampled_doc(f.g, f.lex, 1), f.g);
    auto j = base;
    j["grammar"] = "other";
    EXPECT_THROW(scene_from_json(j, f.g), ConsistencyError);
    j = base;
    j["scene"]["characters"][1]["motion"]["index"] = 65;
    EXPECT_THROW(scene_from_json(j, f.g), ValidationError);
    j = base;
    j["scene"]["relation"]["name"] = "strangers-on-a-train";
    EXPECT_THROW(scene_from_json(j, f.g), ValidationError);
    j = base;
    j["label"] = "excellent";
    EXPECT_THROW(scene_from_json(j, f.g), ValidationError);
    j = base;
    j["scene"]["characters"][0]["end_face"]["vad"] = {0.5, 1.5, 0.5};
    EXPECT_THROW(scene_from_json(j, f.g), ValidationError);
}

TEST(Dataset, LargeDatasetLoadsQuickly) {
    const auto& f = fixture();
    std::vector<SceneDocument> docs;
    for (std::uint64_t s = 0; s < 1240; ++s) docs.push_back(sampled_doc(f.g, f.lex, s));
    const auto path = temp_path("staog_dataset.jsonl");
    save_scene_dataset(docs, f.g, path);
    const auto t0 = std::chrono::steady_clock::now();
    const auto back = load_scene_dataset(path, f.g);
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::filesystem::remove(path);
    ASSERT_EQ(back.size(), 1240u);
    EXPECT_LT(secs, 5.0);
    EXPECT_EQ(canonical_scene_text(back[1239], f.g), canonical_scene_text(docs[1239], f.g));
}

TEST(Dataset, BadLineReportsLineNumber) {
    const auto& f = fixture();
    const auto path = temp_path("staog_bad_dataset.jsonl");
    {
        std::ofstream out(path);
        out << canonical_scene_text(sampled_doc(f.g, f.lex, 1), f.g) << "{not json\n";
    }
    try {
        load_scene_dataset(path, f.g);
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.line(), 2u);
    }
    std::filesystem::remove(path);
}

TEST(Export, FrameCount) {
    EXPECT_EQ(frame_count(2.0, 24), 49u);
    EXPECT_EQ(frame_count(0.0, 24), 1u);
    EXPECT_EQ(frame_count(1.01, 10), 11u);
    EXPECT_THROW(frame_count(1.0, 0.0), ValidationError);
}

TEST(Export, TwoSecondSceneHas49Frames) {
    const auto& f = fixture();
    const auto pg = two_second_scene(f.g);
    ASSERT_NEAR(pg.end_time(), 2.0, 1e-12);
    const auto frames = export_animation(pg, f.lib, f.faces, 24);
    ASSERT_EQ(frames.size(), 49u);
    for (std::size_t i = 0; i < frames.size(); ++i) EXPECT_NEAR(frames[i].time, i / 24.0, 1e-12);
    EXPECT_EQ(frames[0].characters[0].joints.size(), f.lib.skeleton.size());
    EXPECT_EQ(frames[0].characters[0].face_vad, pg.characters[0].start_face.vad);
    EXPECT_EQ(frames[48].characters[1].face_vad, pg.characters[1].end_face.vad);
    EXPECT_EQ(render_frames_to_json(frames).size(), 49u);
}

TEST(Export, StaticTrackGivesIdenticalFrames) {
    const auto& f = fixture();
    auto pg = two_second_scene(f.g);
    auto lib = f.lib;
    for (std::size_t c = 0; c < 2; ++c) {
        auto& track = lib.tracks[pg.characters[c].motion];
        for (auto& kf : track.keyframes) kf.pose = track.keyframes.front().pose;
        pg.characters[c].end_face = pg.characters[c].start_face;
    }
    const auto frames = export_animation(pg, lib, f.faces, 24);
    for (const auto& fr : frames)
        for (std::size_t c = 0; c < 2; ++c) {
            for (std::size_t j = 0; j < fr.characters[c].joints.size(); ++j)
                ASSERT_LT((fr.characters[c].joints[j] - frames[0].characters[c].joints[j]).norm(), 1e-12);
            ASSERT_LT((fr.characters[c].face.coords - frames[0].characters[c].face.coords).norm(), 1e-12);
        }
}

TEST(Export, KeyframeMatchesForwardKinematics) {
    const auto& f = fixture();
    auto pg = two_second_scene(f.g);
    pg.characters[1].t_m = 0.5;
    recompute_end_times(pg, f.g);
    const auto frames = export_animation(pg, f.lib, f.faces, 24);
    for (std::size_t c = 0; c < 2; ++c) {
        const auto& ch = pg.characters[c];
        const auto& track = f.lib.tracks[ch.motion];
        const auto& kf = track.keyframes[2];
        const double t = ch.t_m + kf.time - track.start_time();
        const auto frame = static_cast<std::size_t>(std::lround(t * 24));
        ASSERT_NEAR(frames[frame].time, t, 1e-12);
        const double a = (ch.placement.yaw_deg + 90.0) * std::numbers::pi / 180.0;
        Eigen::Matrix3d r;
        r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
        const auto local = forward_kinematics(f.lib.skeleton, kf.pose);
        for (std::size_t j = 0; j < local.size(); ++j)
            EXPECT_LT((frames[frame].characters[c].joints[j] - (r * local[j] + ch.placement.position)).norm(), 1e-9);
    }
}

TEST(Export, CharactersFaceEachOther) {
    const auto& f = fixture();
    const auto pg = two_second_scene(f.g);
    const auto frames = export_animation(pg, f.lib, f.faces, 24);
    // A joint offset along the skeleton's +z ends up pointing at the partner.
    for (std::size_t c = 0; c < 2; ++c) {
        const double a = (pg.characters[c].placement.yaw_deg + 90.0) * std::numbers::pi / 180.0;
        const Eigen::Vector3d forward(std::sin(a), 0, std::cos(a));
        const Eigen::Vector3d to_partner =
            (pg.characters[1 - c].placement.position - pg.characters[c].placement.position).normalized();
        EXPECT_NEAR(forward.dot(to_partner), 1.0, 1e-9);
    }
}

TEST(Export, NeedsFittedFaces) {
    const auto& f = fixture();
    EXPECT_THROW(export_animation(two_second_scene(f.g), f.lib, FaceModel{}, 24), ValidationError);
}

TEST(PoolModels, LibraryAndRegressorCoverPool) {
    const auto& f = fixture();
    EXPECT_EQ(f.lib.tracks.size(), f.g.motion_pool.size());
    EXPECT_TRUE(f.faces.fitted());
    const auto reg = fit_pool_vadi_regressor(f.g, f.lib, f.lex);
    ASSERT_TRUE(reg.fitted());
    const auto v = reg.predict(f.lib.tracks[motion_index(f.g, "wave")].keyframes[1].pose);
    EXPECT_TRUE(std::isfinite(v.valence) && std::isfinite(v.intimacy));
}
