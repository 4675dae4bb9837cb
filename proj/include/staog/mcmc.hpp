#pragma once

#include <array>
#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "staog/faces.hpp"
#include "staog/grammar.hpp"
#include "staog/motion.hpp"
#include "staog/potentials.hpp"
#include "staog/random.hpp"
#include "staog/sequence_model.hpp"

namespace staog {

// Parts of the parse graph held fixed as givens.
struct ClampMask {
    bool relation = false;
    std::array<std::array<bool, 2>, 2> faces{};  // [character][0 = start, 1 = end]
    std::array<bool, 2> motion{};                // generated-motion latents

    static ClampMask everything();
};

struct ProposalDynamics {
    double relation_weight = 0.2;
    double emotion_weight = 0.4;
    double motion_weight = 0.4;
    double emotion_step = 0.1;
    ClampMask clamp;

    void validate() const;
};

// Optional learned components used by q_e / q_m.
struct MotionModels {
    const SequenceModel* sequence = nullptr;
    const PoseVadiRegressor* vadi = nullptr;
    const FaceModel* faces = nullptr;
};

struct SamplerContext {
    const StAog& grammar;
    const PotentialParams& theta;
    const Lexicon& lexicon;
    MotionModels models{};
};

enum class MoveKind { relation, emotion, motion };

struct Proposal {
    ParseGraph pg;
    MoveKind kind = MoveKind::relation;
    double log_q_forward = 0.0;  // log q(pg' | pg)
    double log_q_reverse = 0.0;  // log q(pg | pg')
    bool valid = true;           // false when a q_e step left [0,1]
};

// Throws Error when every component is clamped.
Proposal propose(const ParseGraph& pg, const ProposalDynamics& dyn, const SamplerContext& ctx, Rng& rng);

// min(1, exp(E - E') * q(pg | pg') / q(pg' | pg)).
double acceptance_probability(double energy_current, double energy_proposed, double log_q_forward,
                              double log_q_reverse);

// -sum_k log N(z_k; prior(h_{k-1})) over generated continuations.
double latent_energy(const ParseGraph& pg, const MotionModels& models);

// Energy the chain targets: total_energy plus the latent prior term.
double chain_energy(const ParseGraph& pg, const SamplerContext& ctx);

struct ChainState {
    ParseGraph pg;
    double energy = 0.0;
    std::size_t steps = 0;
    std::size_t accepted = 0;
    Rng rng;

    double acceptance_rate() const { return steps == 0 ? 0.0 : static_cast<double>(accepted) / static_cast<double>(steps); }
};

ChainState make_chain(ParseGraph pg, const SamplerContext& ctx, std::uint64_t seed);

struct StepOutcome {
    MoveKind kind = MoveKind::relation;
    double alpha = 0.0;
    bool accepted = false;
};

StepOutcome mh_step(ChainState& state, const ProposalDynamics& dyn, const SamplerContext& ctx);

// Throws ConsistencyError when the cached energy drifts from a recomputation.
void audit_energy(const ChainState& state, const SamplerContext& ctx, double tolerance = 1e-9);

struct ChainOptions {
    std::size_t steps = 1000;
    std::size_t burn_in = 1000;
    std::size_t thin = 10;
    std::size_t audit_every = 1000;
};

// Runs burn_in + steps MH steps; calls `on_sample` every `thin` steps after burn-in.
void run_chain(ChainState& state, const ProposalDynamics& dyn, const SamplerContext& ctx, const ChainOptions& opts,
               const std::function<void(const ChainState&)>& on_sample);

// Refines a parse graph toward the model distribution with independence
// proposals drawn from the grammar prior.
ParseGraph refine_with_prior_proposals(ParseGraph pg, std::size_t steps, const SamplerContext& ctx, Rng& rng);

// --- applications ---

struct EmotionSample {
    ParseGraph pg;
    VadVector start_vad;
    VadVector end_vad;
    std::string nearest_word;
    double acceptance_rate = 0.0;
};

// q_e-only chain over the target character's end face; everything else clamped.
EmotionSample sample_emotion(const ParseGraph& scene, std::size_t target, std::size_t n_steps,
                             const SamplerContext& ctx, Rng& rng, double step = 0.1);

struct MotionCompletion {
    PoseTrack continuation;  // n_poses keyframes at dt spacing after the prefix
    ParseGraph pg;
    double energy = 0.0;
    double acceptance_rate = 0.0;
};

// Attaches the prefix to the target character, decodes n_poses continuation
// poses from prior-mean latents, then runs q_m and keeps the lowest-energy
// visited state.
MotionCompletion complete_motion(const ParseGraph& scene, std::size_t target, const PoseTrack& prefix,
                                 std::size_t n_steps, const SamplerContext& ctx, Rng& rng, std::size_t n_poses = 2);

// Rebuilds the continuation of a generated motion from its latents.
void decode_generated_motion(ParseGraph& pg, std::size_t character, const SamplerContext& ctx);

struct RelationRank {
    std::size_t relation = 0;
    std::string name;
    double energy = 0.0;
    double probability = 0.0;
};

// Exact enumeration over the relation pool, ascending energy.
std::vector<RelationRank> infer_relation(const ParseGraph& scene, const SamplerContext& ctx);

}  // namespace staog
