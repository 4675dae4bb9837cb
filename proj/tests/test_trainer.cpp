#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <limits>
#include <thread>

#include "staog/error.hpp"
#include "staog/trainer.hpp"
#include "support.hpp"

using namespace staog;

namespace {

ParamVector random_l(Rng& rng) {
    ParamVector v;
    for (int i = 0; i < v.size(); ++i) v[i] = rng.uniform(-2, 2);
    return v;
}

// -mean_e <theta,l> - log mean_s exp(-<theta - theta0, l_s>): the sample
// log-likelihood with log Z estimated by importance sampling from p_theta0.
double surrogate(const ParamVector& theta, const ParamVector& theta0, const std::vector<ParamVector>& e,
                 const std::vector<ParamVector>& s) {
    double me = 0.0;
    for (const auto& l : e) me += theta.dot(l);
    me /= static_cast<double>(e.size());
    double z = 0.0;
    for (const auto& l : s) z += std::exp(-(theta - theta0).dot(l));
    return -me - std::log(z / static_cast<double>(s.size()));
}

// Spatial statistics constant across samples: one relation/motion/emotion,
// zero motion VAD and a fixed distance at the social distance.
StAog constant_spatial_grammar() {
    auto j = test::toy_grammar_json({{"only", "medium", "medium"}}, {{"still", 2.0}}, {{"neutral", 0.5, 0.5, 0.5}});
    j["transform"]["distance_range"] = {1.2, 1.2};
    return grammar_from_json(j);
}

std::vector<LabeledScene> label_all(const std::vector<ParseGraph>& pgs, Label label) {
    std::vector<LabeledScene> out;
    for (const auto& pg : pgs) out.push_back({"", pg, label, 1, LabelSource::oracle});
    return out;
}

}  // namespace

TEST(MleGradient, IdenticalBatchesGiveZero) {
    Rng rng(1);
    std::vector<ParamVector> batch;
    for (int i = 0; i < 7; ++i) batch.push_back(random_l(rng));
    EXPECT_LT(mle_gradient(batch, batch).norm(), 1e-15);
}

TEST(MleGradient, FormulaForced) {
    ParamVector e = ParamVector::Zero(), s = ParamVector::Zero();
    e[0] = 1.0;
    std::vector<ParamVector> expert{e}, synth{s};
    ParamVector want = ParamVector::Zero();
    want[0] = -1.0;
    EXPECT_EQ(mle_gradient(expert, synth), want);
}

TEST(MleGradient, Antisymmetric) {
    Rng rng(2);
    std::vector<ParamVector> a, b;
    for (int i = 0; i < 4; ++i) a.push_back(random_l(rng));
    for (int i = 0; i < 9; ++i) b.push_back(random_l(rng));
    EXPECT_LT((mle_gradient(a, b) + mle_gradient(b, a)).norm(), 1e-14);
}

TEST(MleGradient, EmptyBatchRejected) {
    std::vector<ParamVector> some{ParamVector::Zero()}, none;
    EXPECT_THROW(mle_gradient(none, some), ValidationError);
    EXPECT_THROW(mle_gradient(some, none), ValidationError);
}

TEST(MleGradient, MatchesFiniteDifferences) {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        std::vector<ParamVector> e, s;
        for (int i = 0; i < 20; ++i) e.push_back(random_l(rng));
        for (int i = 0; i < 30; ++i) s.push_back(random_l(rng));
        const ParamVector theta0 = random_l(rng) * 0.5;
        const ParamVector g = mle_gradient(e, s);
        ParamVector fd;
        const double h = 1e-5;
        for (int i = 0; i < fd.size(); ++i) {
            ParamVector up = theta0, down = theta0;
            up[i] += h;
            down[i] -= h;
            fd[i] = (surrogate(up, theta0, e, s) - surrogate(down, theta0, e, s)) / (2 * h);
        }
        EXPECT_LT((fd - g).norm() / g.norm(), 1e-6);
    }
}

TEST(TrainConfig, Validation) {
    TrainConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.epochs = 0;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.synth_batch = 0;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    cfg.learning_rate = 0.0;
    EXPECT_THROW(cfg.validate(), ValidationError);
    cfg = {};
    EXPECT_TRUE(cfg.is_expert(Label::good));
    EXPECT_FALSE(cfg.is_expert(Label::medium));
}

TEST(TrainRound, NoExpertsIsTrainingError) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    Rng rng(4);
    const auto data = label_all(sample_scenes(g, {}, lex, 5, 0, rng), Label::bad);
    EXPECT_THROW(train_round(g, {}, data, {}, lex, rng), TrainingError);
}

TEST(TrainRound, ConstantStatisticsLeaveSpatialWeightsUnchanged) {
    const auto g = constant_spatial_grammar();
    const auto lex = parse_lexicon("still\t0\t0\t0\n");
    Rng rng(5);
    const auto data = label_all(sample_scenes(g, {}, lex, 10, 0, rng), Label::good);
    TrainConfig cfg;
    cfg.epochs = 1;
    PotentialParams theta;
    theta.values.head<6>() << 0.3, -0.2, 0.1, 0.4, -0.5, 0.6;
    const auto r = train_round(g, theta, data, cfg, lex, rng);
    EXPECT_LT((r.theta.values.head<6>() - theta.values.head<6>()).cwiseAbs().maxCoeff(), 1e-12);
    ASSERT_EQ(r.loss_trace.size(), 1u);
}

TEST(TrainRound, SameDistributionTinyStepIsStationary) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    Rng rng(6);
    const auto data = label_all(sample_scenes(g, {}, lex, 20, 0, rng), Label::good);
    TrainConfig cfg;
    cfg.epochs = 1;
    cfg.learning_rate = 1e-9;
    cfg.refine_steps = 0;
    const auto r = train_round(g, {}, data, cfg, lex, rng);
    EXPECT_LT(r.theta.values.cwiseAbs().maxCoeff(), 1e-6);
}

TEST(TrainRound, TruncatesLowLikelihoodExperts) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    Rng rng(7);
    const auto data = label_all(sample_scenes(g, {}, lex, 20, 0, rng), Label::good);
    TrainConfig cfg;
    cfg.epochs = 1;
    const auto r = train_round(g, {}, data, cfg, lex, rng);
    EXPECT_EQ(r.truncated, 2u);
    EXPECT_EQ(r.experts_used, 18u);
}

TEST(TrainRound, TemporalWeightsStayFeasibleAndFinite) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    Rng rng(8);
    const auto data = label_all(sample_scenes(g, {}, lex, 10, 0, rng), Label::good);
    TrainConfig cfg;
    cfg.epochs = 3;
    cfg.learning_rate = 0.5;
    const auto r = train_round(g, {}, data, cfg, lex, rng);
    EXPECT_TRUE(r.theta.values.allFinite());
    EXPECT_NO_THROW(r.theta.validate());
    cfg.learning_rate = 1e308;
    EXPECT_THROW(train_round(g, {}, data, cfg, lex, rng), TrainingError);
}

TEST(TrainRound, Deterministic) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    Rng a(9);
    const auto data = label_all(sample_scenes(g, {}, lex, 10, 0, a), Label::good);
    TrainConfig cfg;
    cfg.epochs = 2;
    Rng r1(10), r2(10);
    EXPECT_EQ(train_round(g, {}, data, cfg, lex, r1).theta.values, train_round(g, {}, data, cfg, lex, r2).theta.values);
}

TEST(Percentile, Interpolates) {
    EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4, 5}, 50), 3.0);
    EXPECT_DOUBLE_EQ(percentile({1, 2, 3, 4}, 50), 2.5);
    EXPECT_EQ(percentile({1, 2}, 0), -std::numeric_limits<double>::infinity());
    EXPECT_EQ(percentile({1, 2}, 100), std::numeric_limits<double>::infinity());
    EXPECT_THROW(percentile({}, 50), ValidationError);
}

TEST(OracleLabeler, ExtremesAndBoundaries) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    PotentialParams truth;
    truth.values << 2, 2, 1, 1, 1, 1, 0.5, 0.5, 0.25, 1;
    Rng rng(11);
    const auto ref = sample_scenes(g, {}, lex, 200, 0, rng);
    const OracleLabeler oracle(g, truth, lex, ref);
    auto by_energy = ref;
    std::sort(by_energy.begin(), by_energy.end(),
              [&](const auto& a, const auto& b) { return oracle.energy(a) < oracle.energy(b); });
    EXPECT_EQ(oracle(by_energy.front()), Label::good);
    EXPECT_EQ(oracle(by_energy.back()), Label::bad);

    const OracleLabeler flat(g, truth, lex, ref, 0.0, 100.0);
    for (const auto& pg : ref) EXPECT_EQ(flat(pg), Label::medium);
    EXPECT_THROW(OracleLabeler(g, truth, lex, ref, 80.0, 20.0), ValidationError);
}

TEST(Idgal, AlwaysBadLeavesThetaUnchanged) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    Rng rng(12);
    LabeledSceneStore store;
    PotentialParams theta;
    theta.values[0] = 0.25;
    const auto r = idgal_round(g, theta, 1, [](const ParseGraph&) { return Label::bad; }, LabelSource::oracle, 1, store,
                               {}, lex, rng);
    EXPECT_FALSE(r.trained);
    EXPECT_EQ(r.theta.values, theta.values);
    EXPECT_EQ(store.size(), 1u);
    EXPECT_THROW(idgal_round(g, theta, 0, [](const ParseGraph&) { return Label::bad; }, LabelSource::oracle, 1, store, {},
                             lex, rng),
                 ValidationError);
}

TEST(Idgal, ThrowingLabelerAbortsWithoutMutation) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    Rng rng(13);
    LabeledSceneStore store;
    int calls = 0;
    auto flaky = [&](const ParseGraph&) -> Label {
        if (++calls == 3) throw std::runtime_error("judge went home");
        return Label::good;
    };
    EXPECT_THROW(idgal_round(g, {}, 5, flaky, LabelSource::human, 1, store, {}, lex, rng), std::runtime_error);
    EXPECT_EQ(store.size(), 0u);
}

TEST(Idgal, TrainsWhenExpertsExist) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    Rng rng(14);
    LabeledSceneStore store;
    TrainConfig cfg;
    cfg.epochs = 2;
    const auto r = idgal_round(g, {}, 10, [](const ParseGraph&) { return Label::good; }, LabelSource::oracle, 1, store,
                               cfg, lex, rng);
    EXPECT_TRUE(r.trained);
    EXPECT_EQ(r.training.loss_trace.size(), 2u);
    EXPECT_NE(r.theta.values, ParamVector::Zero());
}

TEST(LabeledStore, PersistsAndReplays) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    const auto path = std::filesystem::temp_directory_path() / "staog_store_test.jsonl";
    std::filesystem::remove(path);
    Rng rng(15);
    const auto pgs = sample_scenes(g, {}, lex, 3, 0, rng);
    {
        LabeledSceneStore store(g, path);
        store.append(LabeledScene{"r1-1", pgs[0], Label::good, 1, LabelSource::human});
        store.append(LabeledScene{"", pgs[1], Label::bad, 2, LabelSource::oracle});
        EXPECT_THROW(store.append(LabeledScene{"", pgs[2], Label::bad, 0, LabelSource::oracle}), ValidationError);
    }
    LabeledSceneStore again(g, path);
    const auto snap = again.snapshot();
    ASSERT_EQ(snap.size(), 2u);
    EXPECT_EQ(snap[0].id, "r1-1");
    EXPECT_EQ(snap[0].label, Label::good);
    EXPECT_EQ(snap[1].round, 2);
    EXPECT_EQ(snap[1].source, LabelSource::oracle);
    EXPECT_EQ(labeled_scene_to_json(snap[0], g), labeled_scene_to_json({"r1-1", pgs[0], Label::good, 1, LabelSource::human}, g));
    std::filesystem::remove(path);
}

TEST(LabeledStore, ConcurrentAppends) {
    const auto g = test::starter_grammar();
    const auto lex = test::starter_lexicon();
    Rng rng(16);
    const auto pg = sample_scenes(g, {}, lex, 1, 0, rng).front();
    LabeledSceneStore store;
    std::vector<std::thread> threads;
    for (int t = 0; t < 4; ++t)
        threads.emplace_back([&] {
            for (int i = 0; i < 100; ++i) {
                store.append(LabeledScene{"", pg, Label::medium, 1, LabelSource::human});
                (void)store.snapshot();
            }
        });
    for (auto& t : threads) t.join();
    EXPECT_EQ(store.size(), 400u);
}

TEST(LossTrace, RoundTrip) {
    const std::vector<double> trace{1.5, -0.25, 1e-7, 3.0 / 7.0};
    const auto path = std::filesystem::temp_directory_path() / "staog_loss.tsv";
    write_loss_trace(trace, path);
    EXPECT_EQ(read_loss_trace(path), trace);
    std::filesystem::remove(path);
}
