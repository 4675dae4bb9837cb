#include "staog/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>

#include "json_util.hpp"
#include "staog/error.hpp"
#include "staog/mcmc.hpp"

namespace staog {

using detail::json;

std::string_view to_string(LabelSource source) { return source == LabelSource::human ? "human" : "oracle"; }

LabelSource label_source_from_string(std::string_view s) {
    if (s == "human") return LabelSource::human;
    if (s == "oracle") return LabelSource::oracle;
    throw ValidationError("label source must be human or oracle");
}

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("epochs must be at least 1");
    if (synth_batch < 1) throw ValidationError("synth_batch must be at least 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ValidationError("learning rate must be positive");
    if (!(truncate_fraction >= 0.0 && truncate_fraction < 1.0)) throw ValidationError("truncate_fraction must be in [0,1)");
    if (expert_labels.empty()) throw ValidationError("no label counts as expert");
}

bool TrainConfig::is_expert(Label label) const {
    return std::find(expert_labels.begin(), expert_labels.end(), label) != expert_labels.end();
}

ParamVector mle_gradient(std::span<const ParamVector> expert, std::span<const ParamVector> synth) {
    if (expert.empty() || synth.empty()) throw ValidationError("mle_gradient needs non-empty expert and synth batches");
    ParamVector e = ParamVector::Zero(), s = ParamVector::Zero();
    for (const auto& l : expert) e += l;
    for (const auto& l : synth) s += l;
    return -e / static_cast<double>(expert.size()) + s / static_cast<double>(synth.size());
}

std::vector<ParseGraph> sample_scenes(const StAog& g, const PotentialParams& theta, const Lexicon& lex, std::size_t n,
                                      std::size_t refine_steps, Rng& rng) {
    const SamplerContext ctx{g, theta, lex};
    std::vector<ParseGraph> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        ParseGraph pg = forward_sample(g, rng);
        if (refine_steps > 0) pg = refine_with_prior_proposals(std::move(pg), refine_steps, ctx, rng);
        out.push_back(std::move(pg));
    }
    return out;
}

TrainResult train_round(const StAog& g, const PotentialParams& theta, std::span<const LabeledScene> dataset,
                        const TrainConfig& cfg, const Lexicon& lex, Rng& rng) {
    cfg.validate();
    theta.validate();

    std::vector<std::pair<double, ParamVector>> experts;
    for (const auto& s : dataset) {
        if (!cfg.is_expert(s.label)) continue;
        experts.emplace_back(total_energy(s.pg, g, theta, lex), loss_vector(feature_vector(s.pg, g, lex)));
    }
    if (experts.empty()) throw TrainingError("no expert-labeled scenes to train on");

    TrainResult result;
    const auto drop = std::min(static_cast<std::size_t>(std::floor(cfg.truncate_fraction * static_cast<double>(experts.size()))),
                               experts.size() - 1);
    if (drop > 0) {
        std::stable_sort(experts.begin(), experts.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        experts.resize(experts.size() - drop);
    }
    result.truncated = drop;
    result.experts_used = experts.size();

    std::vector<ParamVector> expert_l;
    for (const auto& e : experts) expert_l.push_back(e.second);
    const std::size_t batch = cfg.minibatch == 0 ? expert_l.size() : std::min(cfg.minibatch, expert_l.size());
    std::vector<std::size_t> order(expert_l.size());
    std::iota(order.begin(), order.end(), std::size_t{0});

    PotentialParams current = theta;
    std::vector<ParamVector> mb, synth_l;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        if (batch < order.size()) std::shuffle(order.begin(), order.end(), rng.engine());
        double epoch_loss = 0.0;
        std::size_t steps = 0;
        for (std::size_t start = 0; start < order.size(); start += batch) {
            mb.clear();
            for (std::size_t i = start; i < std::min(start + batch, order.size()); ++i) mb.push_back(expert_l[order[i]]);
            synth_l.clear();
            for (const auto& pg : sample_scenes(g, current, lex, cfg.synth_batch, cfg.refine_steps, rng))
                synth_l.push_back(loss_vector(feature_vector(pg, g, lex)));

            double e_mean = 0.0, s_mean = 0.0;
            for (const auto& l : mb) e_mean += current.values.dot(l);
            for (const auto& l : synth_l) s_mean += current.values.dot(l);
            epoch_loss += e_mean / static_cast<double>(mb.size()) - s_mean / static_cast<double>(synth_l.size());
            ++steps;

            const ParamVector grad = mle_gradient(mb, synth_l);
            PotentialParams next = current;
            next.values += cfg.learning_rate * grad;
            next.project_feasible();
            if (!next.values.allFinite()) throw TrainingError("non-finite parameters at epoch " + std::to_string(epoch + 1));
            current = next;
        }
        const double loss = epoch_loss / static_cast<double>(steps);
        if (!std::isfinite(loss)) throw TrainingError("non-finite loss at epoch " + std::to_string(epoch + 1));
        result.loss_trace.push_back(loss);
    }
    result.theta = current;
    return result;
}

double percentile(std::vector<double> values, double p) {
    if (values.empty()) throw ValidationError("percentile of an empty sample");
    if (!(p >= 0.0 && p <= 100.0)) throw ValidationError("percentile must be in [0,100]");
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 100.0) return std::numeric_limits<double>::infinity();
    std::sort(values.begin(), values.end());
    const double pos = p / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

OracleLabeler::OracleLabeler(const StAog& g, PotentialParams theta_true, const Lexicon& lex,
                             std::span<const ParseGraph> reference, double good_percentile, double bad_percentile)
    : g_(g), theta_(std::move(theta_true)), lex_(lex) {
    theta_.validate();
    if (good_percentile > bad_percentile) throw ValidationError("good percentile above bad percentile");
    std::vector<double> energies;
    for (const auto& pg : reference) energies.push_back(energy(pg));
    good_threshold_ = percentile(energies, good_percentile);
    bad_threshold_ = percentile(energies, bad_percentile);
}

double OracleLabeler::energy(const ParseGraph& pg) const { return total_energy(pg, g_, theta_, lex_); }

Label OracleLabeler::operator()(const ParseGraph& pg) const {
    const double e = energy(pg);
    if (e < good_threshold_) return Label::good;
    if (e > bad_threshold_) return Label::bad;
    return Label::medium;
}

json labeled_scene_to_json(const LabeledScene& s, const StAog& g) {
    json j = {{"schema", "staog.labeled/1"},
              {"round", s.round},
              {"label", to_string(s.label)},
              {"source", to_string(s.source)},
              {"scene", parse_graph_to_json(s.pg, g)}};
    if (!s.id.empty()) j["id"] = s.id;
    return j;
}

LabeledScene labeled_scene_from_json(const json& j, const StAog& g) {
    if (detail::require<std::string>(j, "schema") != "staog.labeled/1") throw VersionError("unsupported labeled-scene record");
    LabeledScene s;
    s.id = j.value("id", std::string());
    s.round = detail::require<int>(j, "round");
    if (s.round < 1) throw ValidationError("round must be at least 1");
    s.label = label_from_string(detail::require<std::string>(j, "label"));
    s.source = label_source_from_string(detail::require<std::string>(j, "source"));
    s.pg = parse_graph_from_json(detail::require<json>(j, "scene"), g);
    return s;
}

LabeledSceneStore::LabeledSceneStore(const StAog& g, std::filesystem::path path) : g_(&g), path_(std::move(path)) {
    std::ifstream in(path_, std::ios::binary);
    if (!in) return;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            scenes_.push_back(labeled_scene_from_json(json::parse(line), g));
        } catch (const json::parse_error& e) {
            throw ParseError(path_.string() + ": " + e.what(), line_no);
        }
    }
}

void LabeledSceneStore::append(const LabeledScene& scene) { append(std::span<const LabeledScene>(&scene, 1)); }

void LabeledSceneStore::append(std::span<const LabeledScene> scenes) {
    for (const auto& s : scenes)
        if (s.round < 1) throw ValidationError("round must be at least 1");
    std::lock_guard lock(mu_);
    if (!path_.empty() && g_ != nullptr) {
        std::string text;
        for (const auto& s : scenes) text += labeled_scene_to_json(s, *g_).dump() + "\n";
        std::ofstream out(path_, std::ios::binary | std::ios::app);
        out << text;
        out.flush();
        if (!out) throw Error("cannot append to " + path_.string());
    }
    scenes_.insert(scenes_.end(), scenes.begin(), scenes.end());
}

std::vector<LabeledScene> LabeledSceneStore::snapshot() const {
    std::lock_guard lock(mu_);
    return scenes_;
}

std::size_t LabeledSceneStore::size() const {
    std::lock_guard lock(mu_);
    return scenes_.size();
}

IdgalResult idgal_round(const StAog& g, const PotentialParams& theta, std::size_t n_samples, const Labeler& labeler,
                        LabelSource source, int round, LabeledSceneStore& store, const TrainConfig& cfg,
                        const Lexicon& lex, Rng& rng) {
    if (n_samples < 1) throw ValidationError("n_samples must be at least 1");
    if (round < 1) throw ValidationError("round must be at least 1");
    cfg.validate();

    IdgalResult result;
    result.theta = theta;
    for (auto& pg : sample_scenes(g, theta, lex, n_samples, cfg.refine_steps, rng)) {
        const Label label = labeler(pg);
        result.scenes.push_back(LabeledScene{"", std::move(pg), label, round, source});
    }
    store.append(result.scenes);

    const auto all = store.snapshot();
    const bool any_expert = std::any_of(all.begin(), all.end(), [&](const auto& s) { return cfg.is_expert(s.label); });
    if (!any_expert) return result;
    result.training = train_round(g, theta, all, cfg, lex, rng);
    result.theta = result.training.theta;
    result.trained = true;
    return result;
}

void write_loss_trace(std::span<const double> trace, const std::filesystem::path& path) {
    std::ostringstream out;
    out << "epoch\tloss\n";
    for (std::size_t i = 0; i < trace.size(); ++i) out << (i + 1) << '\t' << json(trace[i]).dump() << '\n';
    detail::write_file_atomic(path, out.str());
}

std::vector<double> read_loss_trace(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open loss trace " + path.string());
    std::vector<double> trace;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.rfind("epoch", 0) == 0) continue;
        std::istringstream ls(line);
        std::size_t epoch = 0;
        std::string value;
        if (!(ls >> epoch >> value)) throw ParseError("expected 'epoch loss'", line_no);
        try {
            trace.push_back(std::stod(value));
        } catch (const std::exception&) {
            throw ParseError("bad loss value", line_no);
        }
    }
    return trace;
}

}  // namespace staog
