#include "staog/mcmc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

#include "staog/error.hpp"

namespace staog {

using Eigen::VectorXd;

ClampMask ClampMask::everything() {
    ClampMask m;
    m.relation = true;
    m.faces = {{{true, true}, {true, true}}};
    m.motion = {true, true};
    return m;
}

void ProposalDynamics::validate() const {
    for (double w : {relation_weight, emotion_weight, motion_weight})
        if (!(w >= 0.0) || !std::isfinite(w)) throw ValidationError("proposal mix weights must be non-negative");
    if (std::abs(relation_weight + emotion_weight + motion_weight - 1.0) > 1e-9)
        throw ValidationError("proposal mix weights must sum to 1");
    if (!(emotion_step > 0.0)) throw ValidationError("emotion step must be positive");
}

namespace {

double log_normal_density(const VectorXd& x, const DiagGaussian& g) {
    double lp = 0.0;
    for (Eigen::Index d = 0; d < x.size(); ++d) {
        const double u = (x[d] - g.mean[d]) / g.stddev[d];
        lp += -0.5 * u * u - std::log(g.stddev[d]) - 0.5 * std::log(2.0 * std::numbers::pi);
    }
    return lp;
}

bool motion_movable(const ParseGraph& pg, const ProposalDynamics& dyn, const SamplerContext& ctx, std::size_t c) {
    const auto& gen = pg.characters[c].generated;
    return ctx.models.sequence != nullptr && !dyn.clamp.motion[c] && gen && !gen->latents.empty();
}

struct MoveMenu {
    std::array<double, 3> weights{};  // relation, emotion, motion
    std::vector<std::pair<std::size_t, bool>> faces;
    std::vector<std::size_t> motions;
};

MoveMenu available_moves(const ParseGraph& pg, const ProposalDynamics& dyn, const SamplerContext& ctx) {
    MoveMenu menu;
    for (std::size_t c = 0; c < 2; ++c)
        for (bool end : {false, true})
            if (!dyn.clamp.faces[c][end ? 1 : 0]) menu.faces.emplace_back(c, end);
    for (std::size_t c = 0; c < 2; ++c)
        if (motion_movable(pg, dyn, ctx, c)) menu.motions.push_back(c);
    if (!dyn.clamp.relation && ctx.grammar.relation_pool.size() > 1) menu.weights[0] = dyn.relation_weight;
    if (!menu.faces.empty()) menu.weights[1] = dyn.emotion_weight;
    if (!menu.motions.empty()) menu.weights[2] = dyn.motion_weight;
    const double sum = menu.weights[0] + menu.weights[1] + menu.weights[2];
    if (!(sum > 0.0)) throw Error("no unclamped component to propose");
    for (auto& w : menu.weights) w /= sum;
    return menu;
}

// Continuation decode: state after the prefix, then one step per latent.
struct DecodePath {
    std::vector<VectorXd> states;  // states[k] = h before continuation step k
    std::vector<Pose> poses;
};

DecodePath decode_path(const GeneratedMotion& gen, const SequenceModel& model) {
    std::vector<Pose> prefix;
    for (std::size_t i = 0; i < gen.prefix_length; ++i) prefix.push_back(gen.track.keyframes[i].pose);
    DecodePath path;
    VectorXd h = encode_prefix(model, prefix);
    for (const auto& z : gen.latents) {
        path.states.push_back(h);
        auto step = step_model(model, h, z);
        path.poses.push_back(std::move(step.pose));
        h = std::move(step.state);
    }
    return path;
}

void apply_decoded(ParseGraph& pg, std::size_t character, const DecodePath& path, const SamplerContext& ctx) {
    auto& c = pg.characters[character];
    auto& gen = *c.generated;
    if (gen.prefix_length == 0) throw ValidationError("generated motion needs a non-empty prefix");
    gen.track.keyframes.resize(gen.prefix_length);
    const double t0 = gen.track.keyframes.back().time;
    const double dt = ctx.models.sequence->config().dt;
    for (std::size_t k = 0; k < path.poses.size(); ++k)
        gen.track.keyframes.push_back(Keyframe{t0 + dt * static_cast<double>(k + 1), path.poses[k]});
    if (ctx.models.vadi != nullptr && ctx.models.vadi->fitted() && !path.poses.empty()) {
        VadVector mean{0.0, 0.0, 0.0};
        for (const auto& p : path.poses) {
            const auto v = ctx.models.vadi->predict(p);
            mean.valence += v.valence;
            mean.arousal += v.arousal;
            mean.dominance += v.dominance;
        }
        const double n = static_cast<double>(path.poses.size());
        c.motion_vad = VadVector{mean.valence / n, mean.arousal / n, mean.dominance / n};
    }
    recompute_end_times(pg, ctx.grammar);
}

}  // namespace

void decode_generated_motion(ParseGraph& pg, std::size_t character, const SamplerContext& ctx) {
    if (ctx.models.sequence == nullptr) throw Error("no sequence model");
    const auto& gen = pg.characters[character].generated;
    if (!gen) throw ValidationError("character has no generated motion");
    apply_decoded(pg, character, decode_path(*gen, *ctx.models.sequence), ctx);
}

Proposal propose(const ParseGraph& pg, const ProposalDynamics& dyn, const SamplerContext& ctx, Rng& rng) {
    const auto menu = available_moves(pg, dyn, ctx);
    Proposal prop;
    prop.pg = pg;
    const double u = rng.uniform();
    if (u < menu.weights[0]) {
        // q_r: uniform over the other relations; symmetric.
        prop.kind = MoveKind::relation;
        const auto n = ctx.grammar.relation_pool.size();
        auto pick = rng.index(n - 1);
        if (pick >= pg.relation) ++pick;
        prop.pg.relation = pick;
        prop.log_q_forward = prop.log_q_reverse = std::log(menu.weights[0]) - std::log(static_cast<double>(n - 1));
    } else if (u < menu.weights[0] + menu.weights[1]) {
        // q_e: +-step on one VAD component of one face; leaving [0,1] is rejected.
        prop.kind = MoveKind::emotion;
        const auto [character, end] = menu.faces[rng.index(menu.faces.size())];
        const auto component = rng.index(3);
        const double delta = rng.coin() ? dyn.emotion_step : -dyn.emotion_step;
        auto& face = prop.pg.face(character, end);
        const double value = face.vad[component] + delta;
        prop.log_q_forward = prop.log_q_reverse =
            std::log(menu.weights[1]) - std::log(static_cast<double>(menu.faces.size() * 6));
        if (value < -1e-12 || value > 1.0 + 1e-12) {
            prop.valid = false;
            return prop;
        }
        face.vad[component] = std::clamp(value, 0.0, 1.0);
        if (ctx.models.faces != nullptr && ctx.models.faces->fitted()) face.landmarks = vad_to_face(face.vad, *ctx.models.faces);
    } else {
        // q_m: redraw one continuation latent from its prior, re-decode the suffix.
        prop.kind = MoveKind::motion;
        const auto character = menu.motions[rng.index(menu.motions.size())];
        auto& gen = *prop.pg.characters[character].generated;
        const auto& model = *ctx.models.sequence;
        const auto k = rng.index(gen.latents.size());
        const auto path = decode_path(gen, model);
        const auto prior = model.prior(path.states[k]);
        VectorXd z(prior.mean.size());
        for (Eigen::Index d = 0; d < z.size(); ++d) z[d] = prior.mean[d] + prior.stddev[d] * rng.normal();
        const double choice = std::log(menu.weights[2]) - std::log(static_cast<double>(menu.motions.size())) -
                              std::log(static_cast<double>(gen.latents.size()));
        prop.log_q_forward = choice + log_normal_density(z, prior);
        prop.log_q_reverse = choice + log_normal_density(gen.latents[k], prior);
        gen.latents[k] = z;
        apply_decoded(prop.pg, character, decode_path(gen, model), ctx);
    }
    return prop;
}

double acceptance_probability(double energy_current, double energy_proposed, double log_q_forward,
                              double log_q_reverse) {
    const double log_ratio = energy_current - energy_proposed + log_q_reverse - log_q_forward;
    if (std::isnan(log_ratio)) return 0.0;
    return log_ratio >= 0.0 ? 1.0 : std::exp(log_ratio);
}

double latent_energy(const ParseGraph& pg, const MotionModels& models) {
    if (models.sequence == nullptr) return 0.0;
    double e = 0.0;
    for (const auto& c : pg.characters) {
        if (!c.generated || c.generated->latents.empty()) continue;
        const auto path = decode_path(*c.generated, *models.sequence);
        for (std::size_t k = 0; k < c.generated->latents.size(); ++k)
            e -= log_normal_density(c.generated->latents[k], models.sequence->prior(path.states[k]));
    }
    return e;
}

double chain_energy(const ParseGraph& pg, const SamplerContext& ctx) {
    return total_energy(pg, ctx.grammar, ctx.theta, ctx.lexicon) + latent_energy(pg, ctx.models);
}

ChainState make_chain(ParseGraph pg, const SamplerContext& ctx, std::uint64_t seed) {
    ChainState s{std::move(pg), 0.0, 0, 0, Rng(seed)};
    s.energy = chain_energy(s.pg, ctx);
    return s;
}

StepOutcome mh_step(ChainState& state, const ProposalDynamics& dyn, const SamplerContext& ctx) {
    auto prop = propose(state.pg, dyn, ctx, state.rng);
    StepOutcome out;
    out.kind = prop.kind;
    ++state.steps;
    if (!prop.valid) return out;
    const double proposed = chain_energy(prop.pg, ctx);
    out.alpha = acceptance_probability(state.energy, proposed, prop.log_q_forward, prop.log_q_reverse);
    if (out.alpha >= 1.0 || state.rng.uniform() < out.alpha) {
        state.pg = std::move(prop.pg);
        state.energy = proposed;
        ++state.accepted;
        out.accepted = true;
    }
    return out;
}

void audit_energy(const ChainState& state, const SamplerContext& ctx, double tolerance) {
    const double fresh = chain_energy(state.pg, ctx);
    if (std::abs(fresh - state.energy) > tolerance)
        throw ConsistencyError("cached chain energy " + std::to_string(state.energy) + " != recomputed " +
                               std::to_string(fresh));
}

void run_chain(ChainState& state, const ProposalDynamics& dyn, const SamplerContext& ctx, const ChainOptions& opts,
               const std::function<void(const ChainState&)>& on_sample) {
    dyn.validate();
    const std::size_t thin = std::max<std::size_t>(opts.thin, 1);
    for (std::size_t i = 1; i <= opts.burn_in + opts.steps; ++i) {
        mh_step(state, dyn, ctx);
        if (opts.audit_every > 0 && i % opts.audit_every == 0) audit_energy(state, ctx);
        if (i > opts.burn_in && (i - opts.burn_in) % thin == 0 && on_sample) on_sample(state);
    }
}

ParseGraph refine_with_prior_proposals(ParseGraph pg, std::size_t steps, const SamplerContext& ctx, Rng& rng) {
    // Target: grammar prior tilted by exp(-(E_spatial + E_temporal)). With the
    // prior as the proposal only the potential energies enter the ratio.
    auto potential = [&](const ParseGraph& x) {
        return ctx.theta.values.dot(loss_vector(feature_vector(x, ctx.grammar, ctx.lexicon)));
    };
    double current = potential(pg);
    for (std::size_t i = 0; i < steps; ++i) {
        ParseGraph candidate = forward_sample(ctx.grammar, rng);
        const double e = potential(candidate);
        if (e <= current || rng.uniform() < std::exp(current - e)) {
            pg = std::move(candidate);
            current = e;
        }
    }
    return pg;
}

EmotionSample sample_emotion(const ParseGraph& scene, std::size_t target, std::size_t n_steps,
                             const SamplerContext& ctx, Rng& rng, double step) {
    if (target > 1) throw ValidationError("target character must be 0 or 1");
    ProposalDynamics dyn;
    dyn.relation_weight = 0.0;
    dyn.emotion_weight = 1.0;
    dyn.motion_weight = 0.0;
    dyn.emotion_step = step;
    dyn.clamp = ClampMask::everything();
    dyn.clamp.faces[target][1] = false;
    dyn.validate();

    auto state = make_chain(scene, ctx, rng.engine()());
    for (std::size_t i = 0; i < n_steps; ++i) mh_step(state, dyn, ctx);
    audit_energy(state, ctx);

    EmotionSample out;
    out.start_vad = state.pg.characters[target].start_face.vad;
    out.end_vad = state.pg.characters[target].end_face.vad;
    if (!ctx.lexicon.empty()) out.nearest_word = ctx.lexicon.nearest(out.end_vad).first;
    out.acceptance_rate = state.acceptance_rate();
    out.pg = std::move(state.pg);
    return out;
}

MotionCompletion complete_motion(const ParseGraph& scene, std::size_t target, const PoseTrack& prefix,
                                 std::size_t n_steps, const SamplerContext& ctx, Rng& rng, std::size_t n_poses) {
    if (target > 1) throw ValidationError("target character must be 0 or 1");
    if (prefix.keyframes.empty()) throw ValidationError("motion completion needs a non-empty pose prefix");
    if (ctx.models.sequence == nullptr) throw Error("motion completion needs a sequence model");
    if (n_poses == 0) throw ValidationError("n_poses must be positive");
    const auto& model = *ctx.models.sequence;

    ParseGraph pg = scene;
    auto& c = pg.characters[target];
    GeneratedMotion gen;
    const auto grid = resample(prefix, model.config().dt);
    for (std::size_t i = 0; i < grid.size(); ++i)
        gen.track.keyframes.push_back(Keyframe{prefix.start_time() + model.config().dt * static_cast<double>(i), grid[i]});
    gen.track.fps = prefix.fps;
    gen.track.skeleton = prefix.skeleton;
    gen.prefix_length = grid.size();

    // Prior-mean latents along the decoding path.
    VectorXd h = encode_prefix(model, grid);
    for (std::size_t k = 0; k < n_poses; ++k) {
        const auto prior = model.prior(h);
        gen.latents.push_back(prior.mean);
        h = step_model(model, h, prior.mean).state;
    }
    c.generated = std::move(gen);
    decode_generated_motion(pg, target, ctx);

    ProposalDynamics dyn;
    dyn.relation_weight = 0.0;
    dyn.emotion_weight = 0.0;
    dyn.motion_weight = 1.0;
    dyn.clamp = ClampMask::everything();
    dyn.clamp.motion[target] = false;

    auto state = make_chain(std::move(pg), ctx, rng.engine()());
    ParseGraph best = state.pg;
    double best_energy = state.energy;
    for (std::size_t i = 0; i < n_steps; ++i) {
        if (mh_step(state, dyn, ctx).accepted && state.energy < best_energy) {
            best = state.pg;
            best_energy = state.energy;
        }
    }

    MotionCompletion out;
    const auto& g = *best.characters[target].generated;
    out.continuation.fps = g.track.fps;
    out.continuation.skeleton = g.track.skeleton;
    out.continuation.keyframes.assign(g.track.keyframes.begin() + static_cast<std::ptrdiff_t>(g.prefix_length),
                                      g.track.keyframes.end());
    out.energy = best_energy;
    out.acceptance_rate = state.acceptance_rate();
    out.pg = std::move(best);
    return out;
}

std::vector<RelationRank> infer_relation(const ParseGraph& scene, const SamplerContext& ctx) {
    const auto& pool = ctx.grammar.relation_pool;
    if (pool.empty()) throw ValidationError("relation pool is empty");
    std::vector<RelationRank> ranks;
    ParseGraph pg = scene;
    double min_e = std::numeric_limits<double>::infinity();
    for (std::size_t r = 0; r < pool.size(); ++r) {
        pg.relation = r;
        const double e = total_energy(pg, ctx.grammar, ctx.theta, ctx.lexicon);
        ranks.push_back(RelationRank{r, pool[r].name, e, 0.0});
        min_e = std::min(min_e, e);
    }
    double z = 0.0;
    for (auto& rk : ranks) z += (rk.probability = std::exp(min_e - rk.energy));
    for (auto& rk : ranks) rk.probability /= z;
    std::stable_sort(ranks.begin(), ranks.end(), [](const auto& a, const auto& b) { return a.energy < b.energy; });
    return ranks;
}

}  // namespace staog
