#include "staog/sequence_model.hpp"

#include <cmath>

#include "json_util.hpp"
#include "staog/error.hpp"

namespace staog {

using detail::json;
using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

VectorXd softplus(const VectorXd& r) {
    return r.unaryExpr([](double v) { return v > 30.0 ? v : std::log1p(std::exp(v)); });
}

VectorXd sigmoid(const VectorXd& r) {
    return r.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

VectorXd concat(std::initializer_list<const VectorXd*> parts) {
    Index n = 0;
    for (const auto* p : parts) n += p->size();
    VectorXd out(n);
    Index at = 0;
    for (const auto* p : parts) {
        out.segment(at, p->size()) = *p;
        at += p->size();
    }
    return out;
}

// Everything the backward pass needs from one forward step.
struct StepCache {
    VectorXd h, x, eps;
    VectorXd ap, mp, rp, sp;
    VectorXd hx, aq, mq, rq, sq;
    VectorXd z, hz, ad, xh;
    VectorXd hxz, hn;
};

}  // namespace

double kl_divergence(const DiagGaussian& q, const DiagGaussian& p) {
    if (q.mean.size() != p.mean.size() || q.stddev.size() != q.mean.size() || p.stddev.size() != p.mean.size())
        throw ValidationError("KL: dimension mismatch");
    double kl = 0.0;
    for (Index d = 0; d < q.mean.size(); ++d) {
        const double sq = q.stddev[d], sp = p.stddev[d], diff = q.mean[d] - p.mean[d];
        kl += std::log(sp / sq) + (sq * sq + diff * diff) / (2.0 * sp * sp) - 0.5;
    }
    return kl;
}

void SequenceModel::build_layout() {
    const auto P = static_cast<Index>(cfg_.pose_dim);
    const auto H = static_cast<Index>(cfg_.state_dim);
    const auto Z = static_cast<Index>(cfg_.latent_dim);
    const auto L = static_cast<Index>(cfg_.hidden_dim);
    if (P <= 0 || H <= 0 || Z <= 0 || L <= 0) throw ValidationError("sequence model dimensions must be positive");
    const std::pair<Index, Index> shapes[tensor_count] = {
        {L, H}, {L, 1}, {Z, L}, {Z, 1}, {Z, L}, {Z, 1},              // prior
        {L, H + P}, {L, 1}, {Z, L}, {Z, 1}, {Z, L}, {Z, 1},          // encoder
        {L, H + Z}, {L, 1}, {P, L}, {P, 1},                          // decoder
        {H, H + P + Z}, {H, 1},                                      // recurrence
    };
    layout_.clear();
    Index offset = 0;
    for (const auto& [r, c] : shapes) {
        layout_.push_back(Slice{offset, r, c});
        offset += r * c;
    }
    params_ = VectorXd::Zero(offset);
}

SequenceModel SequenceModel::zeros(const SequenceModelConfig& cfg) {
    SequenceModel m;
    m.cfg_ = cfg;
    m.build_layout();
    return m;
}

SequenceModel SequenceModel::random(const SequenceModelConfig& cfg, Rng& rng) {
    SequenceModel m = zeros(cfg);
    for (std::size_t t = 0; t < tensor_count; ++t) {
        auto w = m.tensor(static_cast<Tensor>(t), m.params_);
        if (w.cols() == 1) continue;  // biases start at zero
        const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
        for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-bound, bound);
    }
    return m;
}

Eigen::Map<const MatrixXd> SequenceModel::tensor(Tensor t) const {
    const auto& s = layout_.at(t);
    return {params_.data() + s.offset, s.rows, s.cols};
}

Eigen::Map<MatrixXd> SequenceModel::tensor(Tensor t, VectorXd& flat) const {
    const auto& s = layout_.at(t);
    return {flat.data() + s.offset, s.rows, s.cols};
}

VectorXd SequenceModel::to_units(const Pose& pose) const {
    if (pose.dim() != cfg_.pose_dim) throw ValidationError("pose dimension does not match the sequence model");
    VectorXd x = pose.to_vector();
    const Index rot = x.size() - 3;
    x.head(rot) *= cfg_.rotation_scale;
    x.tail<3>() *= cfg_.root_scale;
    return x;
}

Pose SequenceModel::from_units(const VectorXd& x) const {
    VectorXd v = x;
    const Index rot = v.size() - 3;
    v.head(rot) /= cfg_.rotation_scale;
    v.tail<3>() /= cfg_.root_scale;
    return Pose::from_vector(v);
}

DiagGaussian SequenceModel::prior(const VectorXd& h) const {
    const VectorXd a = (tensor(prior_w1) * h + tensor(prior_b1)).array().tanh().matrix();
    return {tensor(prior_wm) * a + tensor(prior_bm),
            softplus(tensor(prior_ws) * a + tensor(prior_bs)).array() + kMinStddev};
}

DiagGaussian SequenceModel::posterior(const VectorXd& h, const VectorXd& x) const {
    const VectorXd hx = concat({&h, &x});
    const VectorXd a = (tensor(enc_w1) * hx + tensor(enc_b1)).array().tanh().matrix();
    return {tensor(enc_wm) * a + tensor(enc_bm), softplus(tensor(enc_ws) * a + tensor(enc_bs)).array() + kMinStddev};
}

VectorXd SequenceModel::decode(const VectorXd& h, const VectorXd& z) const {
    const VectorXd hz = concat({&h, &z});
    const VectorXd a = (tensor(dec_w1) * hz + tensor(dec_b1)).array().tanh().matrix();
    return tensor(dec_wo) * a + tensor(dec_bo);
}

VectorXd SequenceModel::recur(const VectorXd& h, const VectorXd& x, const VectorXd& z) const {
    const VectorXd hxz = concat({&h, &x, &z});
    return (tensor(rec_w) * hxz + tensor(rec_b)).array().tanh().matrix();
}

ModelStep step_model(const SequenceModel& model, const VectorXd& state, const VectorXd& latent) {
    if (state.size() != static_cast<Index>(model.config().state_dim) ||
        latent.size() != static_cast<Index>(model.config().latent_dim))
        throw ValidationError("state/latent dimension mismatch");
    const VectorXd x = model.decode(state, latent);
    return {model.from_units(x), model.recur(state, x, latent), latent};
}

ModelStep step_model(const SequenceModel& model, const VectorXd& state, Rng& rng) {
    const auto p = model.prior(state);
    VectorXd z(p.mean.size());
    for (Index d = 0; d < z.size(); ++d) z[d] = p.mean[d] + p.stddev[d] * rng.normal();
    return step_model(model, state, z);
}

VectorXd encode_prefix(const SequenceModel& model, std::span<const Pose> poses) {
    VectorXd h = model.initial_state();
    for (const auto& pose : poses) {
        const VectorXd x = model.to_units(pose);
        const auto q = model.posterior(h, x);
        h = model.recur(h, x, q.mean);
    }
    return h;
}

MatrixXd to_unit_sequence(const SequenceModel& model, std::span<const Pose> poses) {
    MatrixXd seq(static_cast<Index>(model.config().pose_dim), static_cast<Index>(poses.size()));
    for (std::size_t k = 0; k < poses.size(); ++k) seq.col(static_cast<Index>(k)) = model.to_units(poses[k]);
    return seq;
}

namespace {

std::vector<StepCache> forward(const SequenceModel& model, const MatrixXd& seq, const MatrixXd& noise) {
    using T = SequenceModel;
    const Index Z = static_cast<Index>(model.config().latent_dim);
    if (seq.rows() != static_cast<Index>(model.config().pose_dim)) throw ValidationError("sequence dimension mismatch");
    if (noise.size() != 0 && (noise.rows() != Z || noise.cols() != seq.cols()))
        throw ValidationError("noise must be latent_dim x steps");
    std::vector<StepCache> caches(static_cast<std::size_t>(seq.cols()));
    VectorXd h = model.initial_state();
    for (Index k = 0; k < seq.cols(); ++k) {
        auto& c = caches[static_cast<std::size_t>(k)];
        c.h = h;
        c.x = seq.col(k);
        c.eps = noise.size() == 0 ? VectorXd::Zero(Z) : VectorXd(noise.col(k));

        c.ap = (model.tensor(T::prior_w1) * c.h + model.tensor(T::prior_b1)).array().tanh().matrix();
        c.mp = model.tensor(T::prior_wm) * c.ap + model.tensor(T::prior_bm);
        c.rp = model.tensor(T::prior_ws) * c.ap + model.tensor(T::prior_bs);
        c.sp = softplus(c.rp).array() + kMinStddev;

        c.hx = concat({&c.h, &c.x});
        c.aq = (model.tensor(T::enc_w1) * c.hx + model.tensor(T::enc_b1)).array().tanh().matrix();
        c.mq = model.tensor(T::enc_wm) * c.aq + model.tensor(T::enc_bm);
        c.rq = model.tensor(T::enc_ws) * c.aq + model.tensor(T::enc_bs);
        c.sq = softplus(c.rq).array() + kMinStddev;

        c.z = c.mq + c.sq.cwiseProduct(c.eps);
        c.hz = concat({&c.h, &c.z});
        c.ad = (model.tensor(T::dec_w1) * c.hz + model.tensor(T::dec_b1)).array().tanh().matrix();
        c.xh = model.tensor(T::dec_wo) * c.ad + model.tensor(T::dec_bo);

        c.hxz = concat({&c.h, &c.x, &c.z});
        c.hn = (model.tensor(T::rec_w) * c.hxz + model.tensor(T::rec_b)).array().tanh().matrix();
        h = c.hn;
    }
    return caches;
}

ElboTerms terms_from(const std::vector<StepCache>& caches, Index pose_dim) {
    ElboTerms t;
    if (caches.empty()) return t;
    for (const auto& c : caches) {
        t.reconstruction += (c.xh - c.x).squaredNorm();
        t.kl += kl_divergence({c.mq, c.sq}, {c.mp, c.sp});
    }
    t.reconstruction /= static_cast<double>(caches.size()) * static_cast<double>(pose_dim);
    return t;
}

}  // namespace

ElboTerms elbo_loss(const SequenceModel& model, const MatrixXd& sequence, const MatrixXd& noise) {
    return terms_from(forward(model, sequence, noise), sequence.rows());
}

ElboTerms elbo_loss(const SequenceModel& model, const PoseTrack& track) {
    const auto poses = resample(track, model.config().dt);
    return elbo_loss(model, to_unit_sequence(model, poses));
}

double elbo_gradient(const SequenceModel& model, const MatrixXd& sequence, const MatrixXd& noise, double kl_weight,
                     VectorXd& gradient) {
    using T = SequenceModel;
    const auto caches = forward(model, sequence, noise);
    const Index H = static_cast<Index>(model.config().state_dim);
    const Index Z = static_cast<Index>(model.config().latent_dim);
    const Index P = sequence.rows();
    const double K = static_cast<double>(caches.size());

    gradient = VectorXd::Zero(model.parameters().size());
    const ElboTerms terms = terms_from(caches, P);
    if (caches.empty()) return 0.0;

    auto G = [&](T::Tensor t) { return model.tensor(t, gradient); };
    auto W = [&](T::Tensor t) { return model.tensor(t); };

    VectorXd gh_next = VectorXd::Zero(H);
    for (auto it = caches.rbegin(); it != caches.rend(); ++it) {
        const auto& c = *it;
        // Decoder.
        const VectorXd gxh = (2.0 / (K * static_cast<double>(P))) * (c.xh - c.x);
        G(T::dec_wo).noalias() += gxh * c.ad.transpose();
        G(T::dec_bo) += gxh;
        const VectorXd gud = (W(T::dec_wo).transpose() * gxh).cwiseProduct((1.0 - c.ad.array().square()).matrix());
        G(T::dec_w1).noalias() += gud * c.hz.transpose();
        G(T::dec_b1) += gud;
        const VectorXd ghz = W(T::dec_w1).transpose() * gud;
        VectorXd gh = ghz.head(H);
        VectorXd gz = ghz.tail(Z);

        // Recurrence.
        const VectorXd guh = gh_next.cwiseProduct((1.0 - c.hn.array().square()).matrix());
        G(T::rec_w).noalias() += guh * c.hxz.transpose();
        G(T::rec_b) += guh;
        const VectorXd ghxz = W(T::rec_w).transpose() * guh;
        gh += ghxz.head(H);
        gz += ghxz.tail(Z);

        // KL(q || p) and the reparameterised latent.
        const VectorXd diff = c.mq - c.mp;
        const VectorXd sp2 = c.sp.array().square();
        VectorXd g_mq = kl_weight * diff.cwiseQuotient(sp2) + gz;
        const VectorXd g_mp = -kl_weight * diff.cwiseQuotient(sp2);
        VectorXd g_sq = kl_weight * (c.sq.cwiseQuotient(sp2) - c.sq.cwiseInverse()) + gz.cwiseProduct(c.eps);
        const VectorXd g_sp =
            kl_weight * (c.sp.cwiseInverse().array() -
                         (c.sq.array().square() + diff.array().square()) / (sp2.array() * c.sp.array()))
                            .matrix();
        const VectorXd g_rq = g_sq.cwiseProduct(sigmoid(c.rq));
        const VectorXd g_rp = g_sp.cwiseProduct(sigmoid(c.rp));

        // Encoder.
        G(T::enc_wm).noalias() += g_mq * c.aq.transpose();
        G(T::enc_bm) += g_mq;
        G(T::enc_ws).noalias() += g_rq * c.aq.transpose();
        G(T::enc_bs) += g_rq;
        const VectorXd guq = (W(T::enc_wm).transpose() * g_mq + W(T::enc_ws).transpose() * g_rq)
                                 .cwiseProduct((1.0 - c.aq.array().square()).matrix());
        G(T::enc_w1).noalias() += guq * c.hx.transpose();
        G(T::enc_b1) += guq;
        gh += (W(T::enc_w1).transpose() * guq).head(H);

        // Prior.
        G(T::prior_wm).noalias() += g_mp * c.ap.transpose();
        G(T::prior_bm) += g_mp;
        G(T::prior_ws).noalias() += g_rp * c.ap.transpose();
        G(T::prior_bs) += g_rp;
        const VectorXd gup = (W(T::prior_wm).transpose() * g_mp + W(T::prior_ws).transpose() * g_rp)
                                 .cwiseProduct((1.0 - c.ap.array().square()).matrix());
        G(T::prior_w1).noalias() += gup * c.h.transpose();
        G(T::prior_b1) += gup;
        gh += W(T::prior_w1).transpose() * gup;

        gh_next = gh;
    }
    return terms.reconstruction + kl_weight * terms.kl;
}

SequenceTrainResult train_sequence_model(SequenceModel& model, std::span<const PoseTrack> tracks,
                                         const SequenceTrainOptions& opts, Rng& rng) {
    if (tracks.empty()) throw ValidationError("no training tracks");
    if (!(opts.learning_rate >= 0.0)) throw ValidationError("learning rate must be non-negative");
    std::vector<PoseTrack> data;
    if (opts.mirror) {
        if (opts.skeleton == nullptr) throw ValidationError("mirroring needs a skeleton");
        data = augment_with_mirrors(tracks, *opts.skeleton);
    } else {
        data.assign(tracks.begin(), tracks.end());
    }

    SequenceTrainResult result;
    std::vector<MatrixXd> sequences;
    for (const auto& t : data) {
        const auto poses = resample(t, model.config().dt);
        result.keyframes += poses.size();
        sequences.push_back(to_unit_sequence(model, poses));
    }
    result.sequences = sequences.size();

    const Index n = model.parameters().size();
    VectorXd m1 = VectorXd::Zero(n), m2 = VectorXd::Zero(n), grad, total(n);
    constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
    const Index Z = static_cast<Index>(model.config().latent_dim);
    for (std::size_t epoch = 1; epoch <= opts.epochs; ++epoch) {
        total.setZero();
        double loss = 0.0;
        for (const auto& seq : sequences) {
            MatrixXd noise(Z, seq.cols());
            for (Index i = 0; i < noise.size(); ++i) noise.data()[i] = rng.normal();
            loss += elbo_gradient(model, seq, noise, opts.kl_weight, grad);
            total += grad;
        }
        loss /= static_cast<double>(sequences.size());
        total /= static_cast<double>(sequences.size());
        if (!std::isfinite(loss) || !total.allFinite())
            throw TrainingError("sequence model diverged at epoch " + std::to_string(epoch));
        result.loss_trace.push_back(loss);

        m1 = beta1 * m1 + (1.0 - beta1) * total;
        m2 = beta2 * m2 + (1.0 - beta2) * total.cwiseProduct(total);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(epoch));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(epoch));
        model.parameters().array() -=
            opts.learning_rate * (m1.array() / c1) / ((m2.array() / c2).sqrt() + eps);
    }
    return result;
}

std::vector<Pose> reconstruct_sequence(const SequenceModel& model, std::span<const Pose> poses) {
    std::vector<Pose> out;
    VectorXd h = model.initial_state();
    for (const auto& pose : poses) {
        const VectorXd x = model.to_units(pose);
        const auto q = model.posterior(h, x);
        out.push_back(model.from_units(model.decode(h, q.mean)));
        h = model.recur(h, x, q.mean);
    }
    return out;
}

void save_sequence_model(const SequenceModel& model, const std::filesystem::path& path) {
    const auto& c = model.config();
    const auto& p = model.parameters();
    json j = {{"schema", "staog.seqmodel/1"},
              {"config",
               {{"pose_dim", c.pose_dim},
                {"state_dim", c.state_dim},
                {"latent_dim", c.latent_dim},
                {"hidden_dim", c.hidden_dim},
                {"rotation_scale", c.rotation_scale},
                {"root_scale", c.root_scale},
                {"dt", c.dt}}},
              {"parameters", std::vector<double>(p.data(), p.data() + p.size())}};
    detail::write_file_atomic(path, j.dump() + "\n");
}

SequenceModel load_sequence_model(const std::filesystem::path& path) {
    const json j = detail::read_json_file(path);
    try {
        if (j.value("schema", std::string()) != "staog.seqmodel/1") throw VersionError("unsupported sequence model schema");
        const auto& jc = j.at("config");
        SequenceModelConfig c;
        c.pose_dim = jc.at("pose_dim").get<std::size_t>();
        c.state_dim = jc.at("state_dim").get<std::size_t>();
        c.latent_dim = jc.at("latent_dim").get<std::size_t>();
        c.hidden_dim = jc.at("hidden_dim").get<std::size_t>();
        c.rotation_scale = jc.at("rotation_scale").get<double>();
        c.root_scale = jc.at("root_scale").get<double>();
        c.dt = jc.at("dt").get<double>();
        auto model = SequenceModel::zeros(c);
        const auto values = j.at("parameters").get<std::vector<double>>();
        if (values.size() != model.parameter_count()) throw ValidationError("parameter count mismatch");
        model.parameters() = Eigen::Map<const VectorXd>(values.data(), static_cast<Index>(values.size()));
        return model;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace staog
