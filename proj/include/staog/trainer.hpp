#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "staog/grammar.hpp"
#include "staog/potentials.hpp"
#include "staog/random.hpp"
#include "staog/scene_io.hpp"
#include "staog/vadi.hpp"

namespace staog {

enum class LabelSource { human, oracle };
std::string_view to_string(LabelSource source);
LabelSource label_source_from_string(std::string_view s);

struct LabeledScene {
    std::string id;  // optional, set by the service
    ParseGraph pg;
    Label label = Label::medium;
    int round = 1;
    LabelSource source = LabelSource::human;
};

struct TrainConfig {
    std::size_t epochs = 100;
    double learning_rate = 1e-3;
    std::vector<Label> expert_labels{Label::good};
    std::size_t synth_batch = 10;      // synthesized scenes per gradient step
    std::size_t minibatch = 5;         // experts per gradient step; 0 = all (one step per epoch)
    std::size_t refine_steps = 50;     // MH refinement of each synthesized scene; 0 = pure forward samples
    double truncate_fraction = 0.1;    // lowest-likelihood experts dropped before training

    void validate() const;
    bool is_expert(Label label) const;
};

// -mean(expert) + mean(synth) over loss vectors: the ascent direction of the
// expert log-likelihood. Throws ValidationError on an empty batch.
ParamVector mle_gradient(std::span<const ParamVector> expert, std::span<const ParamVector> synth);

// Scenes from the current model: forward samples, each refined with
// `refine_steps` prior-proposal MH steps.
std::vector<ParseGraph> sample_scenes(const StAog& g, const PotentialParams& theta, const Lexicon& lex, std::size_t n,
                                      std::size_t refine_steps, Rng& rng);

struct TrainResult {
    PotentialParams theta;
    std::vector<double> loss_trace;  // per epoch: mean expert <lambda,l> - mean synth <lambda,l>
    std::size_t experts_used = 0;
    std::size_t truncated = 0;
};

// Throws TrainingError without expert scenes or on a non-finite update.
TrainResult train_round(const StAog& g, const PotentialParams& theta, std::span<const LabeledScene> dataset,
                        const TrainConfig& cfg, const Lexicon& lex, Rng& rng);

// Good below the `good_percentile` of reference energies under theta_true,
// bad above the `bad_percentile`, medium otherwise.
class OracleLabeler {
public:
    OracleLabeler(const StAog& g, PotentialParams theta_true, const Lexicon& lex, std::span<const ParseGraph> reference,
                  double good_percentile = 35.0, double bad_percentile = 70.0);

    Label operator()(const ParseGraph& pg) const;
    double energy(const ParseGraph& pg) const;
    double good_threshold() const { return good_threshold_; }
    double bad_threshold() const { return bad_threshold_; }

private:
    const StAog& g_;
    PotentialParams theta_;
    const Lexicon& lex_;
    double good_threshold_ = 0.0;
    double bad_threshold_ = 0.0;
};

// Linear-interpolated percentile (0..100); 0 and 100 map to -inf / +inf.
double percentile(std::vector<double> values, double p);

// Append-only labeled-scene log (one JSON record per line). Safe for
// concurrent appends and snapshot reads.
class LabeledSceneStore {
public:
    LabeledSceneStore() = default;  // in-memory only
    // Replays an existing file, then appends to it.
    LabeledSceneStore(const StAog& g, std::filesystem::path path);

    void append(const LabeledScene& scene);
    void append(std::span<const LabeledScene> scenes);
    std::vector<LabeledScene> snapshot() const;
    std::size_t size() const;

private:
    const StAog* g_ = nullptr;
    std::filesystem::path path_;
    mutable std::mutex mu_;
    std::vector<LabeledScene> scenes_;
};

nlohmann::json labeled_scene_to_json(const LabeledScene& s, const StAog& g);
LabeledScene labeled_scene_from_json(const nlohmann::json& j, const StAog& g);

using Labeler = std::function<Label(const ParseGraph&)>;

struct IdgalResult {
    std::vector<LabeledScene> scenes;  // newly labeled this round
    PotentialParams theta;
    TrainResult training;
    bool trained = false;  // false when the store holds no expert scenes
};

// Sample, label, append, retrain on the accumulated store. A throwing labeler
// aborts the round before the store or theta change.
IdgalResult idgal_round(const StAog& g, const PotentialParams& theta, std::size_t n_samples, const Labeler& labeler,
                        LabelSource source, int round, LabeledSceneStore& store, const TrainConfig& cfg,
                        const Lexicon& lex, Rng& rng);

// "epoch\tloss" lines with a header.
void write_loss_trace(std::span<const double> trace, const std::filesystem::path& path);
std::vector<double> read_loss_trace(const std::filesystem::path& path);

}  // namespace staog
