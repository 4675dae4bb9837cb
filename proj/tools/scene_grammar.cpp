#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "staog/error.hpp"
#include "staog/mcmc.hpp"
#include "staog/scene_io.hpp"
#include "staog/sequence_model.hpp"
#include "staog/service.hpp"
#include "staog/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace staog;

namespace {

struct Globals {
    std::string grammar;
    std::string theta;
    std::string lexicon;
    std::string skeleton;
    std::uint64_t seed = 1;
};

// Config file values fill whatever the command line left unset.
void apply_config(Globals& g, const CLI::App& app) {
    fs::path path = "scene-grammar.json";
    if (const char* env = std::getenv("SCENE_GRAMMAR_CONFIG"); env != nullptr && *env != '\0') {
        path = env;
        if (!fs::exists(path)) throw ValidationError("config file " + path.string() + " does not exist");
    }
    if (!fs::exists(path)) return;
    std::ifstream in(path);
    json cfg;
    try {
        cfg = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ParseError(path.string() + ": " + e.what());
    }
    if (!cfg.is_object()) throw ValidationError("config must be a JSON object");
    const auto base = path.parent_path();
    auto fill = [&](const char* key, std::string& dst, const char* flag) {
        if (app.count(flag) == 0 && cfg.contains(key)) {
            fs::path p = cfg.at(key).get<std::string>();
            dst = (p.is_relative() ? base / p : p).string();
        }
    };
    fill("grammar", g.grammar, "--grammar");
    fill("theta", g.theta, "--theta");
    fill("lexicon", g.lexicon, "--lexicon");
    fill("skeleton", g.skeleton, "--skeleton");
    if (app.count("--seed") == 0 && cfg.contains("seed")) g.seed = cfg.at("seed").get<std::uint64_t>();
}

struct Env {
    StAog grammar;
    Lexicon lexicon;
    PotentialParams theta;
};

Env load_env(const Globals& gl) {
    Env env;
    const fs::path data = STAOG_DEFAULT_DATA_DIR;
    env.grammar = load_grammar(gl.grammar.empty() ? data / "grammar.json" : fs::path(gl.grammar));
    env.lexicon = load_lexicon(gl.lexicon.empty() ? data / "lexicon.tsv" : fs::path(gl.lexicon));
    if (!gl.theta.empty()) env.theta = load_params(gl.theta);
    return env;
}

fs::path skeleton_path(const Globals& gl, const StAog& g) {
    return gl.skeleton.empty() ? g.base_dir / "skeleton.json" : fs::path(gl.skeleton);
}

std::size_t character_index(int c) {
    if (c != 1 && c != 2) throw ValidationError("--character must be 1 or 2");
    return static_cast<std::size_t>(c - 1);
}

void write_scene(const ParseGraph& pg, const Env& env, const std::string& out) {
    SceneDocument doc{env.grammar.name, pg, std::nullopt,
                      energy_breakdown(pg, env.grammar, env.theta, env.lexicon)};
    if (out.empty() || out == "-") std::cout << canonical_scene_text(doc, env.grammar);
    else save_scene(doc, env.grammar, out);
}

void write_json(const json& j, const std::string& out) {
    if (out.empty() || out == "-") {
        std::cout << j.dump(2) << '\n';
        return;
    }
    std::ofstream f(out, std::ios::binary | std::ios::trunc);
    f << j.dump() << '\n';
    if (!f) throw Error("cannot write " + out);
}

void plot_ascii(const std::vector<double>& trace, std::ostream& os, std::size_t width = 72, std::size_t height = 16) {
    if (trace.empty()) throw ValidationError("empty loss trace");
    const auto [lo_it, hi_it] = std::minmax_element(trace.begin(), trace.end());
    double lo = *lo_it, hi = *hi_it;
    if (hi - lo < 1e-12) {
        lo -= 0.5;
        hi += 0.5;
    }
    width = std::min(width, std::max<std::size_t>(trace.size(), 2));
    std::vector<std::string> rows(height, std::string(width, ' '));
    for (std::size_t x = 0; x < width; ++x) {
        const auto i = static_cast<std::size_t>(std::lround(static_cast<double>(x) * static_cast<double>(trace.size() - 1) /
                                                            static_cast<double>(width - 1)));
        const double frac = (trace[i] - lo) / (hi - lo);
        const auto y = static_cast<std::size_t>(std::lround((1.0 - frac) * static_cast<double>(height - 1)));
        rows[y][x] = '*';
    }
    char buf[32];
    for (std::size_t y = 0; y < height; ++y) {
        const double v = hi - (hi - lo) * static_cast<double>(y) / static_cast<double>(height - 1);
        std::snprintf(buf, sizeof buf, "%11.4g |", v);
        os << buf << rows[y] << '\n';
    }
    os << std::string(12, ' ') << '+' << std::string(width, '-') << '\n';
    os << std::string(13, ' ') << "epoch 1" << std::string(width > 20 ? width - 14 : 1, ' ') << trace.size() << '\n';
}

Service* g_service = nullptr;
void on_signal(int) {
    if (g_service != nullptr) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-character social scene grammar: sampling, learning and inference"};
    app.require_subcommand(1);
    Globals gl;
    app.add_option("--grammar", gl.grammar, "grammar JSON (default: bundled starter grammar)");
    app.add_option("--theta", gl.theta, "potential parameters file (default: all zeros)");
    app.add_option("--lexicon", gl.lexicon, "VAD lexicon TSV");
    app.add_option("--skeleton", gl.skeleton, "skeleton JSON (default: next to the grammar)");
    app.add_option("--seed", gl.seed, "random seed");

    std::string in, out, track_out, model_path, prefix_path, loss_out;
    std::size_t steps = 200, count = 1, epochs = 100, poses = 2, minibatch = 5, synth = 10;
    double lr = 1e-3, fps = 24.0, step = 0.1;
    int character = 1, port = 8080;
    std::string host = "127.0.0.1", event_log, seed_policy = "fresh";

    auto* sample = app.add_subcommand("sample", "forward-sample scenes and refine them under theta");
    sample->add_option("--out,-o", out, "scene file (count 1) or JSONL dataset");
    sample->add_option("--count,-n", count, "number of scenes")->check(CLI::PositiveNumber);
    sample->add_option("--steps", steps, "MH refinement steps per scene");

    auto* train = app.add_subcommand("train", "fit theta to the good-labelled scenes of a dataset");
    train->add_option("--data", in, "JSONL dataset of labelled scene documents")->required();
    train->add_option("--out,-o", out, "output parameters file")->required();
    train->add_option("--loss-trace", loss_out, "per-epoch loss trace output");
    train->add_option("--epochs", epochs);
    train->add_option("--lr", lr);
    train->add_option("--minibatch", minibatch);
    train->add_option("--synth", synth, "synthesized scenes per step");
    train->add_option("--steps", steps, "MH refinement per synthesized scene");

    auto* serve = app.add_subcommand("serve", "run the labelling service");
    serve->add_option("--host", host);
    serve->add_option("--port", port);
    serve->add_option("--event-log", event_log, "append-only session log (replayed at start)");
    serve->add_option("--seed-policy", seed_policy)->check(CLI::IsMember({"fixed", "fresh"}));
    serve->add_option("--fps", fps);

    auto* emotion = app.add_subcommand("complete-emotion", "sample the end emotion of one character");
    emotion->add_option("--in,-i", in, "scene file")->required();
    emotion->add_option("--out,-o", out, "scene file");
    emotion->add_option("--character", character, "1 or 2");
    emotion->add_option("--steps", steps);
    emotion->add_option("--step-size", step);

    auto* motion = app.add_subcommand("complete-motion", "continue a motion prefix with the sequence model");
    motion->add_option("--in,-i", in, "scene file")->required();
    motion->add_option("--prefix", prefix_path, "pose track prefix")->required();
    motion->add_option("--model", model_path, "trained sequence model")->required();
    motion->add_option("--out,-o", out, "scene file");
    motion->add_option("--track-out", track_out, "continuation pose track");
    motion->add_option("--character", character, "1 or 2");
    motion->add_option("--steps", steps);
    motion->add_option("--poses", poses, "continuation length in poses");

    auto* relation = app.add_subcommand("infer-relation", "rank relations for a scene");
    relation->add_option("--in,-i", in, "scene file")->required();
    relation->add_option("--out,-o", out, "ranking JSON");

    auto* exp = app.add_subcommand("export", "render a scene to per-frame joints and faces");
    exp->add_option("--in,-i", in, "scene file")->required();
    exp->add_option("--out,-o", out, "frames JSON");
    exp->add_option("--fps", fps);

    auto* plot = app.add_subcommand("plot-loss", "plot a loss trace in the terminal");
    plot->add_option("--in,-i", in, "loss trace file")->required();

    auto* train_motion = app.add_subcommand("train-motion", "train the sequence model on the motion pool");
    train_motion->add_option("--out,-o", out, "model file")->required();
    train_motion->add_option("--epochs", epochs);
    train_motion->add_option("--lr", lr);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        apply_config(gl, app);
        Env env = load_env(gl);
        Rng rng(gl.seed);
        const SamplerContext base{env.grammar, env.theta, env.lexicon};

        if (*sample) {
            const auto pgs = sample_scenes(env.grammar, env.theta, env.lexicon, count, steps, rng);
            if (count == 1) {
                write_scene(pgs.front(), env, out);
            } else {
                std::vector<SceneDocument> docs;
                for (const auto& pg : pgs)
                    docs.push_back({env.grammar.name, pg, std::nullopt,
                                    energy_breakdown(pg, env.grammar, env.theta, env.lexicon)});
                if (out.empty() || out == "-")
                    for (const auto& d : docs) std::cout << canonical_scene_text(d, env.grammar);
                else save_scene_dataset(docs, env.grammar, out);
            }
        } else if (*train) {
            std::vector<LabeledScene> data;
            for (auto& doc : load_scene_dataset(in, env.grammar))
                if (doc.label) data.push_back({"", std::move(doc.pg), *doc.label, 1, LabelSource::human});
            TrainConfig cfg;
            cfg.epochs = epochs;
            cfg.learning_rate = lr;
            cfg.minibatch = minibatch;
            cfg.synth_batch = synth;
            if (train->count("--steps") > 0) cfg.refine_steps = steps;
            const auto result = train_round(env.grammar, env.theta, data, cfg, env.lexicon, rng);
            save_params(result.theta, out);
            if (!loss_out.empty()) write_loss_trace(result.loss_trace, loss_out);
            std::cerr << "trained on " << result.experts_used << " expert scenes (" << result.truncated
                      << " truncated), final loss " << result.loss_trace.back() << '\n';
        } else if (*serve) {
            ServiceConfig cfg;
            cfg.event_log = event_log;
            cfg.seed = gl.seed;
            cfg.seed_policy = seed_policy == "fixed" ? SeedPolicy::fixed : SeedPolicy::fresh;
            cfg.fps = fps;
            std::optional<MotionLibrary> lib;
            std::optional<FaceModel> faces;
            try {
                lib = load_motion_library(env.grammar, skeleton_path(gl, env.grammar));
                faces = fit_pool_face_model(env.grammar);
            } catch (const ValidationError& e) {
                std::cerr << "warning: no render frames (" << e.what() << ")\n";
                lib.reset();
                faces.reset();
            }
            Service svc(env.grammar, env.lexicon, env.theta, cfg, lib ? &*lib : nullptr, faces ? &*faces : nullptr);
            g_service = &svc;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on http://" << host << ':' << port << " (round " << svc.round() << ")\n";
            svc.serve(host, port);
            g_service = nullptr;
        } else if (*emotion) {
            const auto doc = load_scene(in, env.grammar);
            std::optional<FaceModel> faces;
            try {
                faces = fit_pool_face_model(env.grammar);
            } catch (const ValidationError&) {
            }
            SamplerContext ctx = base;
            if (faces) ctx.models.faces = &*faces;
            const auto r = sample_emotion(doc.pg, character_index(character), steps, ctx, rng, step);
            write_scene(r.pg, env, out);
            std::cerr << "end emotion (" << r.end_vad.valence << ", " << r.end_vad.arousal << ", "
                      << r.end_vad.dominance << ") ~ '" << r.nearest_word << "', acceptance " << r.acceptance_rate
                      << '\n';
        } else if (*motion) {
            const auto doc = load_scene(in, env.grammar);
            const auto model = load_sequence_model(model_path);
            const auto lib = load_motion_library(env.grammar, skeleton_path(gl, env.grammar));
            const auto prefix = load_pose_track(prefix_path, &lib.skeleton);
            const auto vadi = fit_pool_vadi_regressor(env.grammar, lib, env.lexicon);
            SamplerContext ctx = base;
            ctx.models.sequence = &model;
            ctx.models.vadi = &vadi;
            const auto r = complete_motion(doc.pg, character_index(character), prefix, steps, ctx, rng, poses);
            write_scene(r.pg, env, out);
            if (!track_out.empty()) write_json(track_to_json(r.continuation), track_out);
            std::cerr << "energy " << r.energy << ", acceptance " << r.acceptance_rate << '\n';
        } else if (*relation) {
            const auto doc = load_scene(in, env.grammar);
            json ranks = json::array();
            for (const auto& r : infer_relation(doc.pg, base))
                ranks.push_back({{"relation", r.name}, {"energy", r.energy}, {"probability", r.probability}});
            write_json(ranks, out);
        } else if (*exp) {
            const auto doc = load_scene(in, env.grammar);
            const auto lib = load_motion_library(env.grammar, skeleton_path(gl, env.grammar));
            const auto faces = fit_pool_face_model(env.grammar);
            const auto frames = export_animation(doc.pg, lib, faces, fps);
            write_json({{"fps", fps}, {"frames", render_frames_to_json(frames)}}, out);
            std::cerr << frames.size() << " frames\n";
        } else if (*plot) {
            plot_ascii(read_loss_trace(in), std::cout);
        } else if (*train_motion) {
            const auto lib = load_motion_library(env.grammar, skeleton_path(gl, env.grammar));
            auto model = SequenceModel::random(SequenceModelConfig{}, rng);
            SequenceTrainOptions opts;
            opts.epochs = epochs;
            opts.learning_rate = lr;
            opts.skeleton = &lib.skeleton;
            const auto r = train_sequence_model(model, lib.tracks, opts, rng);
            save_sequence_model(model, out);
            std::cerr << "trained on " << r.sequences << " sequences, final objective " << r.loss_trace.back() << '\n';
        }
        return 0;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 3;
    }
}
