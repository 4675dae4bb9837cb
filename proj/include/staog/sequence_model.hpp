#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "staog/motion.hpp"
#include "staog/random.hpp"

namespace staog {

inline constexpr double kPoseStepSeconds = 0.5;
inline constexpr double kMinStddev = 1e-4;

struct SequenceModelConfig {
    std::size_t pose_dim = kMixamoPoseDim;
    std::size_t state_dim = 64;
    std::size_t latent_dim = 16;
    std::size_t hidden_dim = 128;
    double rotation_scale = 1.0 / 180.0;  // degrees -> network units
    double root_scale = 1.0;              // metres -> network units
    double dt = kPoseStepSeconds;
};

struct DiagGaussian {
    Eigen::VectorXd mean;
    Eigen::VectorXd stddev;
};

// KL(q || p) for diagonal Gaussians, summed over dimensions.
double kl_divergence(const DiagGaussian& q, const DiagGaussian& p);

// Latent recurrent pose model. Per step k with state h_{k-1}:
//   prior      z_k ~ N(mu_p(h), s_p(h))
//   encoder    z_k ~ N(mu_q(h, x_k), s_q(h, x_k))      (training only)
//   decoder    x_k = dec(h, z_k)
//   recurrence h_k = tanh(W [h; x_k; z_k] + b)
// Each network has one tanh hidden layer; standard deviations are
// softplus(.) + 1e-4. Poses are scaled into network units by the config.
class SequenceModel {
public:
    SequenceModel() = default;
    static SequenceModel zeros(const SequenceModelConfig& cfg);
    static SequenceModel random(const SequenceModelConfig& cfg, Rng& rng);

    const SequenceModelConfig& config() const { return cfg_; }
    Eigen::VectorXd& parameters() { return params_; }
    const Eigen::VectorXd& parameters() const { return params_; }
    std::size_t parameter_count() const { return static_cast<std::size_t>(params_.size()); }

    Eigen::VectorXd to_units(const Pose& pose) const;
    Pose from_units(const Eigen::VectorXd& x) const;

    Eigen::VectorXd initial_state() const { return Eigen::VectorXd::Zero(static_cast<Eigen::Index>(cfg_.state_dim)); }
    DiagGaussian prior(const Eigen::VectorXd& h) const;
    DiagGaussian posterior(const Eigen::VectorXd& h, const Eigen::VectorXd& x) const;
    Eigen::VectorXd decode(const Eigen::VectorXd& h, const Eigen::VectorXd& z) const;
    Eigen::VectorXd recur(const Eigen::VectorXd& h, const Eigen::VectorXd& x, const Eigen::VectorXd& z) const;

    // Tensor views into the flat parameter vector.
    enum Tensor : std::size_t {
        prior_w1, prior_b1, prior_wm, prior_bm, prior_ws, prior_bs,
        enc_w1, enc_b1, enc_wm, enc_bm, enc_ws, enc_bs,
        dec_w1, dec_b1, dec_wo, dec_bo,
        rec_w, rec_b,
        tensor_count
    };
    Eigen::Map<const Eigen::MatrixXd> tensor(Tensor t) const;
    Eigen::Map<Eigen::MatrixXd> tensor(Tensor t, Eigen::VectorXd& flat) const;

private:
    void build_layout();

    SequenceModelConfig cfg_;
    Eigen::VectorXd params_;
    struct Slice {
        Eigen::Index offset = 0, rows = 0, cols = 0;
    };
    std::vector<Slice> layout_;
};

struct ModelStep {
    Pose pose;
    Eigen::VectorXd state;
    Eigen::VectorXd latent;
};

// One generation step: z from the prior (sampled) or supplied, pose decoded,
// state advanced on (decoded pose, z).
ModelStep step_model(const SequenceModel& model, const Eigen::VectorXd& state, Rng& rng);
ModelStep step_model(const SequenceModel& model, const Eigen::VectorXd& state, const Eigen::VectorXd& latent);

// State after consuming observed poses, using posterior means as latents.
Eigen::VectorXd encode_prefix(const SequenceModel& model, std::span<const Pose> poses);

struct ElboTerms {
    double reconstruction = 0.0;  // mean squared error in network units
    double kl = 0.0;              // summed over steps and latent dims
};

// Sequence in network units, one column per step. `noise` (latent_dim x K)
// drives the reparameterised latents; an empty matrix means posterior means.
ElboTerms elbo_loss(const SequenceModel& model, const Eigen::MatrixXd& sequence, const Eigen::MatrixXd& noise = {});
// Resamples the track on the model's dt grid first.
ElboTerms elbo_loss(const SequenceModel& model, const PoseTrack& track);

// Objective reconstruction + kl_weight * kl and its gradient (same layout
// as parameters()) by backpropagation through time.
double elbo_gradient(const SequenceModel& model, const Eigen::MatrixXd& sequence, const Eigen::MatrixXd& noise,
                     double kl_weight, Eigen::VectorXd& gradient);

struct SequenceTrainOptions {
    std::size_t epochs = 200;
    double learning_rate = 1e-3;
    double kl_weight = 1e-5;
    bool mirror = true;              // left-right augmentation, needs a skeleton
    const Skeleton* skeleton = nullptr;
};

struct SequenceTrainResult {
    std::vector<double> loss_trace;  // mean objective per epoch
    std::size_t sequences = 0;
    std::size_t keyframes = 0;       // poses on the dt grid after augmentation
};

// Adam on the ELBO objective with fresh reparameterisation noise each epoch.
// Throws TrainingError when the loss becomes non-finite.
SequenceTrainResult train_sequence_model(SequenceModel& model, std::span<const PoseTrack> tracks,
                                         const SequenceTrainOptions& opts, Rng& rng);

Eigen::MatrixXd to_unit_sequence(const SequenceModel& model, std::span<const Pose> poses);

// Posterior-mean reconstruction of a resampled track (teacher forced).
std::vector<Pose> reconstruct_sequence(const SequenceModel& model, std::span<const Pose> poses);

void save_sequence_model(const SequenceModel& model, const std::filesystem::path& path);
SequenceModel load_sequence_model(const std::filesystem::path& path);

}  // namespace staog
