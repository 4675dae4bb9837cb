#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"

#include "staog/faces.hpp"
#include "staog/grammar.hpp"
#include "staog/potentials.hpp"
#include "staog/scene_io.hpp"
#include "staog/trainer.hpp"
#include "staog/vadi.hpp"

namespace staog {

enum class SeedPolicy { fixed, fresh };

struct ServiceConfig {
    std::filesystem::path event_log;  // empty: in-memory session, nothing survives a restart
    SeedPolicy seed_policy = SeedPolicy::fresh;
    std::uint64_t seed = 1;
    TrainConfig train;
    std::size_t max_samples = 10000;
    double fps = 24.0;
};

enum class SceneStatus { pending, labeled, skipped };

struct SessionScene {
    std::string id;
    int round = 1;
    ParseGraph pg;
    SceneStatus status = SceneStatus::pending;
    std::optional<Label> label;
};

struct RoundRecord {
    int round = 1;
    std::size_t good = 0, medium = 0, bad = 0, skipped = 0;
    std::string theta_version;    // parameters the round was sampled with
    std::string dataset_hash;     // labeled records the round trained on
    std::vector<double> loss_trace;
};

struct HttpResponse {
    int status = 200;
    nlohmann::json body;
};

// Single-session labeling service. All state changes go through an
// append-only event log; constructing a Service replays it.
class Service {
public:
    Service(const StAog& g, const Lexicon& lex, PotentialParams theta, ServiceConfig cfg,
            const MotionLibrary* motions = nullptr, const FaceModel* faces = nullptr);

    // Transport-independent dispatch; `body` is the raw request body.
    HttpResponse handle(const std::string& method, const std::string& path, const std::string& body);

    // Blocks serving HTTP/1.1 until stop() is called.
    void serve(const std::string& host, int port);
    void stop();

    int round() const;
    PotentialParams theta() const;
    std::vector<SessionScene> scenes() const;
    std::vector<RoundRecord> history() const;
    std::vector<LabeledScene> labeled() const { return store_.snapshot(); }

private:
    HttpResponse post_samples(int round, const nlohmann::json& body);
    HttpResponse get_scene(const std::string& id);
    HttpResponse list_scenes(const std::string& status);
    HttpResponse post_label(const std::string& id, const nlohmann::json& body);
    HttpResponse post_skip(const std::string& id);
    HttpResponse post_train(int round);
    HttpResponse get_params();
    HttpResponse get_round();

    void apply(const nlohmann::json& event, bool replaying);
    void record(const nlohmann::json& event);
    std::size_t pending_count_locked() const;

    const StAog& g_;
    const Lexicon& lex_;
    ServiceConfig cfg_;
    const MotionLibrary* motions_;
    const FaceModel* faces_;

    mutable std::mutex mu_;
    PotentialParams theta_;
    int round_ = 1;
    bool training_ = false;
    std::uint64_t sample_requests_ = 0;
    std::uint64_t next_id_ = 1;
    std::map<std::string, SessionScene> scenes_;
    std::vector<std::string> order_;
    std::vector<RoundRecord> history_;
    LabeledSceneStore store_;
    std::map<std::string, nlohmann::json> frame_cache_;
    void* server_ = nullptr;  // httplib::Server while serving
};

}  // namespace staog
