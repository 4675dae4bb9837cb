#include <gtest/gtest.h>

#include <array>
#include <cmath>
#include <map>

#include "staog/error.hpp"
#include "staog/mcmc.hpp"
#include "support.hpp"

using namespace staog;

namespace {

StAog three_relations() {
    return test::toy_grammar({{"boss", "high", "low"}, {"peer", "medium", "medium"}, {"junior", "low", "high"}},
                             {{"wave", 2.0}}, {{"neutral", 0.5, 0.5, 0.5}});
}

Lexicon wave_lexicon() {
    Lexicon lex;
    lex.add("wave", {0.7, 0.6, 0.5});
    lex.add("joy", {0.9, 0.7, 0.6});
    lex.add("sad", {0.1, 0.3, 0.2});
    return lex;
}

ParseGraph scene_for(const StAog& g, std::uint64_t seed = 1) {
    Rng rng(seed);
    return forward_sample(g, rng);
}

Skeleton four_joints() {
    return Skeleton({{"Hips", -1, {0, 0, 0}},
                     {"Spine", 0, {0, 0.3, 0}},
                     {"LeftArm", 1, {0.2, 0.1, 0}},
                     {"RightArm", 1, {-0.2, 0.1, 0}}});
}

PoseTrack short_prefix() {
    PoseTrack t;
    for (int k = 0; k < 3; ++k) {
        Pose p = Pose::zero(4);
        p.rotations[2] = {10.0 * k, 5, 0};
        p.root_position = {0, 0.9, 0};
        t.keyframes.push_back({0.5 * k, p});
    }
    return t;
}

}  // namespace

TEST(Acceptance, IdenticalStateIsOne) { EXPECT_DOUBLE_EQ(acceptance_probability(3.0, 3.0, -1.0, -1.0), 1.0); }

TEST(Acceptance, UphillByLogTwoIsHalf) {
    EXPECT_NEAR(acceptance_probability(1.0, 1.0 + std::log(2.0), 0.0, 0.0), 0.5, 1e-12);
}

TEST(Acceptance, DownhillIsOne) { EXPECT_DOUBLE_EQ(acceptance_probability(5.0, 1.0, 0.0, 0.0), 1.0); }

TEST(Acceptance, ProposalRatioEnters) {
    // Equal energies, reverse move half as likely.
    EXPECT_NEAR(acceptance_probability(0.0, 0.0, std::log(0.4), std::log(0.2)), 0.5, 1e-12);
    EXPECT_EQ(acceptance_probability(0.0, std::nan(""), 0.0, 0.0), 0.0);
}

TEST(Proposal, RelationMoveIsSymmetricOnTwoRelations) {
    const auto g = test::toy_grammar({{"a", "high", "low"}, {"b", "low", "high"}}, {{"wave", 2.0}},
                                     {{"neutral", 0.5, 0.5, 0.5}});
    const auto lex = wave_lexicon();
    PotentialParams theta;
    SamplerContext ctx{g, theta, lex};
    ProposalDynamics dyn;
    dyn.clamp = ClampMask::everything();
    dyn.clamp.relation = false;
    Rng rng(3);
    auto pg = scene_for(g);
    for (std::size_t from : {0u, 1u}) {
        pg.relation = from;
        const auto p = propose(pg, dyn, ctx, rng);
        EXPECT_EQ(p.kind, MoveKind::relation);
        EXPECT_EQ(p.pg.relation, 1 - from);
        EXPECT_DOUBLE_EQ(p.log_q_forward, p.log_q_reverse);
        EXPECT_DOUBLE_EQ(p.log_q_forward, 0.0);
    }
}

TEST(Proposal, EmotionStepIsExactAndBoundaryRejected) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    SamplerContext ctx{g, theta, lex};
    ProposalDynamics dyn;
    dyn.clamp = ClampMask::everything();
    dyn.clamp.faces[0][1] = false;
    auto pg = scene_for(g);
    pg.characters[0].end_face.vad = {1.0, 0.0, 0.5};
    Rng rng(4);
    int rejected = 0, moved = 0;
    for (int i = 0; i < 2000; ++i) {
        const auto p = propose(pg, dyn, ctx, rng);
        ASSERT_EQ(p.kind, MoveKind::emotion);
        const auto& before = pg.characters[0].end_face.vad;
        const auto& after = p.pg.characters[0].end_face.vad;
        if (!p.valid) {
            ++rejected;
            continue;
        }
        ++moved;
        double change = 0;
        int components = 0;
        for (std::size_t k = 0; k < 3; ++k) {
            change += std::abs(after[k] - before[k]);
            components += after[k] != before[k];
            EXPECT_GE(after[k], 0.0);
            EXPECT_LE(after[k], 1.0);
        }
        EXPECT_EQ(components, 1);
        EXPECT_NEAR(change, 0.1, 1e-12);
        EXPECT_EQ(p.pg.characters[1].end_face.vad, pg.characters[1].end_face.vad);
    }
    // Two of six moves leave [0,1].
    EXPECT_NEAR(rejected / 2000.0, 1.0 / 3.0, 0.04);
    EXPECT_GT(moved, 0);
}

TEST(Proposal, AllClampedThrows) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    SamplerContext ctx{g, theta, lex};
    ProposalDynamics dyn;
    dyn.clamp = ClampMask::everything();
    Rng rng(5);
    EXPECT_THROW(propose(scene_for(g), dyn, ctx, rng), Error);
}

TEST(Proposal, MixWeightsValidated) {
    ProposalDynamics dyn;
    dyn.relation_weight = 0.5;
    EXPECT_THROW(dyn.validate(), ValidationError);
    dyn = {};
    dyn.emotion_step = 0;
    EXPECT_THROW(dyn.validate(), ValidationError);
}

TEST(Chain, BoundaryRejectionLeavesStateAndCountsStep) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    SamplerContext ctx{g, theta, lex};
    ProposalDynamics dyn;
    dyn.clamp = ClampMask::everything();
    dyn.clamp.faces[0][1] = false;
    auto pg = scene_for(g);
    pg.characters[0].end_face.vad = {0.0, 0.0, 0.0};
    auto st = make_chain(pg, ctx, 6);
    for (int i = 0; i < 200; ++i) {
        const auto before = st.pg.characters[0].end_face.vad;
        const auto out = mh_step(st, dyn, ctx);
        if (!out.accepted) EXPECT_EQ(st.pg.characters[0].end_face.vad, before);
    }
    EXPECT_EQ(st.steps, 200u);
    EXPECT_LT(st.accepted, 200u);
}

TEST(Chain, DetailedBalanceOnThreeRelations) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    theta[Term::re_s_1] = 2.0;
    theta[Term::re_s_2] = 1.0;
    SamplerContext ctx{g, theta, lex};
    ProposalDynamics dyn;
    dyn.clamp = ClampMask::everything();
    dyn.clamp.relation = false;
    auto pg = scene_for(g, 9);
    pg.characters[0].end_face.vad = {0.5, 0.5, 0.9};

    std::array<double, 3> pi{};
    double z = 0;
    for (std::size_t r = 0; r < 3; ++r) {
        auto x = pg;
        x.relation = r;
        z += pi[r] = std::exp(-chain_energy(x, ctx));
    }
    for (auto& p : pi) p /= z;

    auto st = make_chain(pg, ctx, 10);
    std::array<std::array<double, 3>, 3> flow{};
    std::array<double, 3> visits{};
    const int n = 300000;
    for (int i = 0; i < n; ++i) {
        const auto from = st.pg.relation;
        mh_step(st, dyn, ctx);
        flow[from][st.pg.relation] += 1;
        visits[st.pg.relation] += 1;
    }
    for (std::size_t i = 0; i < 3; ++i) {
        EXPECT_NEAR(visits[i] / n, pi[i], 0.01);
        for (std::size_t j = i + 1; j < 3; ++j) EXPECT_NEAR(flow[i][j] / n, flow[j][i] / n, 0.004);
    }
}

TEST(Chain, MatchesExactEnumeration) {
    const auto g = three_relations();
    Lexicon lex;
    PotentialParams theta;
    theta[Term::me_s_1] = 8.0;
    theta[Term::re_s_1] = 3.0;
    SamplerContext ctx{g, theta, lex};
    auto pg = scene_for(g);
    pg.characters[0].motion_vad = VadVector{0.2, 0.6, 0.8};
    pg.characters[1].motion_vad = VadVector{0.5, 0.5, 0.5};
    ProposalDynamics dyn;
    dyn.emotion_step = 0.25;
    dyn.clamp = ClampMask::everything();
    dyn.clamp.relation = false;
    dyn.clamp.faces[0][1] = false;

    using Key = std::array<long, 4>;
    std::map<Key, double> exact, seen;
    double z = 0;
    for (long r = 0; r < 3; ++r)
        for (long a = 0; a < 5; ++a)
            for (long b = 0; b < 5; ++b)
                for (long c = 0; c < 5; ++c) {
                    auto x = pg;
                    x.relation = static_cast<std::size_t>(r);
                    x.characters[0].end_face.vad = {a * 0.25, b * 0.25, c * 0.25};
                    z += exact[{r, a, b, c}] = std::exp(-chain_energy(x, ctx));
                }
    for (auto& [k, p] : exact) p /= z;

    auto st = make_chain(pg, ctx, 11);
    double n = 0;
    ChainOptions opts;
    opts.steps = 100000;
    opts.thin = 5;
    run_chain(st, dyn, ctx, opts, [&](const ChainState& s) {
        const auto& v = s.pg.characters[0].end_face.vad;
        seen[{static_cast<long>(s.pg.relation), std::lround(v.valence * 4), std::lround(v.arousal * 4),
              std::lround(v.dominance * 4)}] += 1;
        n += 1;
    });
    double tv = 0;
    for (const auto& [k, p] : exact) tv += std::abs(p - seen[k] / n);
    EXPECT_LT(tv / 2, 0.05);
    EXPECT_LE(seen.size(), exact.size());
}

TEST(Chain, EnergyAuditCatchesDrift) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    theta[Term::me_s_1] = 1.0;
    SamplerContext ctx{g, theta, lex};
    auto st = make_chain(scene_for(g), ctx, 12);
    EXPECT_NO_THROW(audit_energy(st, ctx));
    st.energy += 1e-6;
    EXPECT_THROW(audit_energy(st, ctx), ConsistencyError);
}

TEST(Chain, RunChainAuditsAndThins) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    theta[Term::me_s_1] = 2.0;
    theta[Term::re_s_2] = 1.0;
    SamplerContext ctx{g, theta, lex};
    auto st = make_chain(scene_for(g), ctx, 13);
    ChainOptions opts;
    opts.steps = 5000;
    opts.burn_in = 100;
    opts.thin = 10;
    opts.audit_every = 50;
    int calls = 0;
    run_chain(st, ProposalDynamics{}, ctx, opts, [&](const ChainState&) { ++calls; });
    EXPECT_EQ(calls, 500);
    EXPECT_EQ(st.steps, 5100u);
}

TEST(SampleEmotion, ZeroStepsLeavesScene) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    theta[Term::me_s_1] = 5.0;
    SamplerContext ctx{g, theta, lex};
    const auto pg = scene_for(g);
    Rng rng(14);
    const auto out = sample_emotion(pg, 0, 0, ctx, rng);
    EXPECT_EQ(out.end_vad, pg.characters[0].end_face.vad);
    EXPECT_EQ(out.pg.characters[1].end_face.vad, pg.characters[1].end_face.vad);
    EXPECT_EQ(out.acceptance_rate, 0.0);
}

TEST(SampleEmotion, FlatEnergyAcceptsEveryInteriorMove) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    SamplerContext ctx{g, theta, lex};
    auto pg = scene_for(g);
    Rng rng(15);
    // From the centre 20 steps of 0.1 cannot reach the boundary rejection region often.
    const auto out = sample_emotion(pg, 1, 20, ctx, rng);
    EXPECT_GT(out.acceptance_rate, 0.9);
    EXPECT_EQ(out.start_vad, pg.characters[1].start_face.vad);
    EXPECT_EQ(out.pg.characters[0].end_face.vad, pg.characters[0].end_face.vad);
    EXPECT_FALSE(out.nearest_word.empty());
}

TEST(SampleEmotion, PositiveMotionRaisesValence) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    theta[Term::me_s_1] = 20.0;
    SamplerContext ctx{g, theta, lex};
    auto pg = scene_for(g);
    pg.characters[0].motion_vad = VadVector{0.9, 0.5, 0.5};
    int raised = 0;
    for (int seed = 0; seed < 50; ++seed) {
        Rng rng(static_cast<std::uint64_t>(seed));
        const auto out = sample_emotion(pg, 0, 20, ctx, rng);
        raised += out.end_vad.valence > out.start_vad.valence;
    }
    EXPECT_GE(raised, 40);
}

TEST(SampleEmotion, BadTargetThrows) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    SamplerContext ctx{g, theta, lex};
    Rng rng(16);
    EXPECT_THROW(sample_emotion(scene_for(g), 2, 5, ctx, rng), ValidationError);
}

TEST(CompleteMotion, EmitsPosesAtHalfSecondSteps) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    theta[Term::me_s_1] = 1.0;
    Rng rng(17);
    const auto model = SequenceModel::random(test::sinusoid_config(), rng);
    SamplerContext ctx{g, theta, lex, {&model, nullptr, nullptr}};
    const auto prefix = short_prefix();
    const auto out = complete_motion(scene_for(g), 0, prefix, 30, ctx, rng);
    ASSERT_EQ(out.continuation.keyframes.size(), 2u);
    EXPECT_NEAR(out.continuation.keyframes[0].time, prefix.end_time() + 0.5, 1e-12);
    EXPECT_NEAR(out.continuation.keyframes[1].time, prefix.end_time() + 1.0, 1e-12);
    const auto& gen = *out.pg.characters[0].generated;
    EXPECT_EQ(gen.prefix_length, 3u);
    EXPECT_EQ(gen.latents.size(), 2u);
    EXPECT_NEAR(out.energy, chain_energy(out.pg, ctx), 1e-9);

    const auto skel = four_joints();
    for (const auto& kf : out.continuation.keyframes) {
        EXPECT_TRUE(kf.pose.to_vector().allFinite());
        const auto pos = forward_kinematics(skel, kf.pose);
        for (std::size_t j = 1; j < skel.size(); ++j) {
            const auto parent = static_cast<std::size_t>(skel.joints()[j].parent);
            EXPECT_NEAR((pos[j] - pos[parent]).norm(), skel.joints()[j].offset.norm(), 1e-9);
        }
    }
}

TEST(CompleteMotion, NeverReturnsWorseThanStart) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    Rng rng(18);
    const auto model = SequenceModel::random(test::sinusoid_config(), rng);
    SamplerContext ctx{g, theta, lex, {&model, nullptr, nullptr}};
    const auto none = complete_motion(scene_for(g), 1, short_prefix(), 0, ctx, rng, 3);
    const auto some = complete_motion(scene_for(g), 1, short_prefix(), 100, ctx, rng, 3);
    EXPECT_EQ(none.continuation.keyframes.size(), 3u);
    EXPECT_LE(some.energy, none.energy + 1e-9);
}

TEST(CompleteMotion, RequiresModelAndPrefix) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    SamplerContext ctx{g, theta, lex};
    Rng rng(19);
    EXPECT_THROW(complete_motion(scene_for(g), 0, short_prefix(), 5, ctx, rng), Error);
    const auto model = SequenceModel::random(test::sinusoid_config(), rng);
    SamplerContext with{g, theta, lex, {&model, nullptr, nullptr}};
    EXPECT_THROW(complete_motion(scene_for(g), 0, PoseTrack{}, 5, with, rng), ValidationError);
}

TEST(InferRelation, SingleRelationIsCertain) {
    const auto g = test::toy_grammar({{"only", "high", "high"}}, {{"wave", 2.0}}, {{"neutral", 0.5, 0.5, 0.5}});
    const auto lex = wave_lexicon();
    PotentialParams theta;
    theta[Term::re_s_1] = 4.0;
    SamplerContext ctx{g, theta, lex};
    const auto ranks = infer_relation(scene_for(g), ctx);
    ASSERT_EQ(ranks.size(), 1u);
    EXPECT_DOUBLE_EQ(ranks[0].probability, 1.0);
    EXPECT_EQ(ranks[0].name, "only");
}

TEST(InferRelation, ZeroWeightsGiveUniform) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    SamplerContext ctx{g, theta, lex};
    for (const auto& r : infer_relation(scene_for(g), ctx)) EXPECT_NEAR(r.probability, 1.0 / 3.0, 1e-12);
}

TEST(InferRelation, SortedBoltzmannProbabilities) {
    const auto g = three_relations();
    const auto lex = wave_lexicon();
    PotentialParams theta;
    theta[Term::re_s_1] = 3.0;
    theta[Term::rm_s_1] = 2.0;
    SamplerContext ctx{g, theta, lex};
    auto pg = scene_for(g);
    pg.characters[0].end_face.vad = {0.5, 0.5, 1.0};
    const auto ranks = infer_relation(pg, ctx);
    ASSERT_EQ(ranks.size(), 3u);
    double sum = 0;
    for (std::size_t i = 0; i < 3; ++i) {
        sum += ranks[i].probability;
        if (i > 0) {
            EXPECT_LE(ranks[i - 1].energy, ranks[i].energy);
            EXPECT_NEAR(ranks[i].probability / ranks[0].probability,
                        std::exp(ranks[0].energy - ranks[i].energy), 1e-12);
        }
    }
    EXPECT_NEAR(sum, 1.0, 1e-12);
    EXPECT_EQ(ranks[0].name, "boss");
}
