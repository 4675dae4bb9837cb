#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>
#include <unistd.h>

#include "staog/scene_io.hpp"
#include "staog/trainer.hpp"
#include "support.hpp"

using namespace staog;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

class Cli : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::temp_directory_path() / ("staog_cli_" + std::to_string(::getpid()) + "_" +
                                            ::testing::UnitTest::GetInstance()->current_test_info()->name());
        fs::remove_all(dir_);
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    // Runs the binary inside the scratch directory; returns the exit code.
    int run(const std::string& args) {
        const std::string cmd = "cd '" + dir_.string() + "' && env -u SCENE_GRAMMAR_CONFIG '" SCENE_GRAMMAR_BIN "' " +
                                args + " >stdout.txt 2>stderr.txt";
        const int rc = std::system(cmd.c_str());
        return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
    }
    std::string slurp(const std::string& name) const {
        std::ifstream in(dir_ / name);
        std::stringstream ss;
        ss << in.rdbuf();
        return ss.str();
    }
    fs::path path(const std::string& name) const { return dir_ / name; }

    fs::path dir_;
};

}  // namespace

TEST_F(Cli, SampleOneSceneLoads) {
    ASSERT_EQ(run("--seed 5 sample --out scene.json"), 0) << slurp("stderr.txt");
    const auto g = test::starter_grammar();
    const auto doc = load_scene(path("scene.json"), g);
    EXPECT_TRUE(doc.energy.has_value());
    validate_parse_graph(doc.pg, g);
}

TEST_F(Cli, SampleIsSeedDeterministic) {
    ASSERT_EQ(run("--seed 9 sample --count 3 --steps 20 --out a.jsonl"), 0);
    ASSERT_EQ(run("--seed 9 sample --count 3 --steps 20 --out b.jsonl"), 0);
    EXPECT_EQ(slurp("a.jsonl"), slurp("b.jsonl"));
    EXPECT_EQ(load_scene_dataset(path("a.jsonl"), test::starter_grammar()).size(), 3u);
    ASSERT_EQ(run("--seed 9 sample --count 1"), 0);
    EXPECT_EQ(slurp("stdout.txt").front(), '{');
}

TEST_F(Cli, ExportTwoSecondSceneGives49Frames) {
    const auto g = test::starter_grammar();
    Rng rng(2);
    auto pg = forward_sample(g, rng);
    for (std::size_t c = 0; c < 2; ++c) {
        for (std::size_t m = 0; m < g.motion_pool.size(); ++m)
            if (g.motion_pool[m].id == "wave") set_slot_choice(pg, motion_slot(c), m, g);
        pg.characters[c].t_m = pg.characters[c].t_e = 0.0;
    }
    recompute_end_times(pg, g);
    save_scene({g.name, pg, std::nullopt, std::nullopt}, g, path("two.json"));
    ASSERT_EQ(run("export --in two.json --out frames.json --fps 24"), 0) << slurp("stderr.txt");
    std::ifstream in(path("frames.json"));
    const auto j = json::parse(in);
    EXPECT_EQ(j["fps"], 24.0);
    EXPECT_EQ(j["frames"].size(), 49u);
}

TEST_F(Cli, SampleSaveLoadExportPipeline) {
    ASSERT_EQ(run("--seed 11 sample --out s.json"), 0);
    ASSERT_EQ(run("export --in s.json --out f.json"), 0) << slurp("stderr.txt");
    const auto doc = load_scene(path("s.json"), test::starter_grammar());
    std::ifstream in(path("f.json"));
    EXPECT_EQ(json::parse(in)["frames"].size(), frame_count(doc.pg.end_time(), 24.0));
}

TEST_F(Cli, InferRelationAndCompleteEmotion) {
    ASSERT_EQ(run("--seed 3 sample --out s.json"), 0);
    ASSERT_EQ(run("infer-relation --in s.json --out rank.json"), 0) << slurp("stderr.txt");
    std::ifstream in(path("rank.json"));
    const auto rank = json::parse(in);
    ASSERT_EQ(rank.size(), test::starter_grammar().relation_pool.size());
    double total = 0;
    for (const auto& r : rank) total += r["probability"].get<double>();
    EXPECT_NEAR(total, 1.0, 1e-9);
    ASSERT_EQ(run("complete-emotion --in s.json --out e.json --character 2 --steps 30"), 0) << slurp("stderr.txt");
    const auto before = load_scene(path("s.json"), test::starter_grammar());
    const auto after = load_scene(path("e.json"), test::starter_grammar());
    EXPECT_EQ(after.pg.characters[0].end_face.vad, before.pg.characters[0].end_face.vad);
    EXPECT_EQ(after.pg.relation, before.pg.relation);
}

TEST_F(Cli, TrainWritesParamsAndLossTrace) {
    ASSERT_EQ(run("--seed 4 sample --count 20 --steps 5 --out d.jsonl"), 0);
    {
        // Label everything good.
        std::ifstream in(path("d.jsonl"));
        std::ofstream out(path("labeled.jsonl"));
        for (std::string line; std::getline(in, line);) {
            auto j = json::parse(line);
            j["label"] = "good";
            out << j.dump() << "\n";
        }
    }
    ASSERT_EQ(run("--seed 4 train --data labeled.jsonl --out theta.txt --loss-trace loss.txt --epochs 3 --steps 5"), 0)
        << slurp("stderr.txt");
    EXPECT_NO_THROW(load_params(path("theta.txt")));
    EXPECT_EQ(read_loss_trace(path("loss.txt")).size(), 3u);
    ASSERT_EQ(run("plot-loss --in loss.txt"), 0);
    EXPECT_FALSE(slurp("stdout.txt").empty());
    ASSERT_EQ(run("--theta theta.txt --seed 4 sample --count 2 --steps 5 --out again.jsonl"), 0) << slurp("stderr.txt");
}

TEST_F(Cli, ExitCodes) {
    EXPECT_EQ(run("export --in missing.json"), 2);
    EXPECT_EQ(run("sample --out no/such/dir/s.json"), 3);
    {
        std::ofstream out(path("bad.json"));
        out << R"({"schema":"staog.scene/9"})";
    }
    EXPECT_EQ(run("export --in bad.json"), 2);
    EXPECT_EQ(run("sample --count 0"), 2);
    EXPECT_EQ(run("no-such-verb"), 2);
    {
        std::ofstream out(path("theta.txt"));
        out << "schema staog.params/1\nlam_me_s.1 1\n";
    }
    EXPECT_EQ(run("--theta theta.txt sample"), 2);
}

TEST_F(Cli, ConfigFileSuppliesDefaults) {
    {
        std::ofstream out(path("scene-grammar.json"));
        out << R"({"seed": 21})";
    }
    ASSERT_EQ(run("sample --out a.json"), 0) << slurp("stderr.txt");
    fs::remove(path("scene-grammar.json"));
    ASSERT_EQ(run("--seed 21 sample --out b.json"), 0);
    EXPECT_EQ(slurp("a.json"), slurp("b.json"));
}

TEST_F(Cli, TrainMotionThenCompleteMotion) {
    ASSERT_EQ(run("train-motion --out model.json --epochs 2"), 0) << slurp("stderr.txt");
    ASSERT_EQ(run("--seed 6 sample --out s.json"), 0);
    const auto g = test::starter_grammar();
    const auto lib = load_motion_library(g, test::data_dir() / "skeleton.json");
    PoseTrack prefix = lib.tracks[0];
    prefix.keyframes.resize(2);
    {
        std::ofstream out(path("prefix.json"));
        out << track_to_json(prefix).dump();
    }
    ASSERT_EQ(run("complete-motion --in s.json --prefix prefix.json --model model.json --out m.json "
                  "--track-out cont.json --character 1 --steps 10"),
              0)
        << slurp("stderr.txt");
    const auto cont = load_pose_track(path("cont.json"));
    ASSERT_EQ(cont.keyframes.size(), 2u);
    EXPECT_NEAR(cont.keyframes[0].time, prefix.end_time() + 0.5, 1e-9);
    EXPECT_NEAR(cont.keyframes[1].time, prefix.end_time() + 1.0, 1e-9);
    const auto doc = load_scene(path("m.json"), g);
    ASSERT_TRUE(doc.pg.characters[0].generated.has_value());
    EXPECT_EQ(doc.pg.characters[0].generated->latents.size(), 2u);
    ASSERT_EQ(run("export --in m.json --out f.json"), 0) << slurp("stderr.txt");
}
