#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>
#include "json.hpp"

namespace staog {

inline constexpr std::size_t kMixamoJointCount = 65;
inline constexpr std::size_t kMixamoPoseDim = kMixamoJointCount * 3 + 3;  // 198

// Wraps an angle in degrees into (-180, 180].
double wrap_degrees(double deg);

// One skeletal pose: per-joint Euler rotations (degrees, intrinsic XYZ)
// followed by the root position in metres.
struct Pose {
    std::vector<Eigen::Vector3d> rotations;
    Eigen::Vector3d root_position = Eigen::Vector3d::Zero();

    static Pose zero(std::size_t joint_count);

    std::size_t joint_count() const { return rotations.size(); }
    std::size_t dim() const { return rotations.size() * 3 + 3; }

    // Flat layout [x0 y0 z0 x1 ... root_x root_y root_z].
    Eigen::VectorXd to_vector() const;
    static Pose from_vector(const Eigen::Ref<const Eigen::VectorXd>& v);

    // Finite values, Euler components in (-180, 180]. Throws ValidationError.
    void validate() const;
};

struct Keyframe {
    double time = 0.0;
    Pose pose;
};

struct PoseTrack {
    std::vector<Keyframe> keyframes;
    double fps = 24.0;
    std::string skeleton;  // reference, informational

    double start_time() const { return keyframes.front().time; }
    double end_time() const { return keyframes.back().time; }
    double duration() const { return keyframes.empty() ? 0.0 : end_time() - start_time(); }

    // Non-empty, strictly increasing times, consistent joint counts.
    void validate() const;
};

// Pose at time t: clamped at the ends, piecewise linear in between with
// Euler angles following the shortest arc.
Pose interpolate(const PoseTrack& track, double t);

// Poses at start, start+dt, ... up to the last keyframe.
std::vector<Pose> resample(const PoseTrack& track, double dt);

struct Joint {
    std::string name;
    int parent = -1;  // -1 for the root
    Eigen::Vector3d offset = Eigen::Vector3d::Zero();
};

class Skeleton {
public:
    Skeleton() = default;
    explicit Skeleton(std::vector<Joint> joints);

    const std::vector<Joint>& joints() const { return joints_; }
    std::size_t size() const { return joints_.size(); }
    std::optional<std::size_t> index_of(std::string_view name) const;

    // Index of the joint mirrored across the sagittal plane (LeftX <-> RightX).
    std::size_t mirror_of(std::size_t joint) const;

private:
    std::vector<Joint> joints_;
};

// Rotation matrix for intrinsic XYZ Euler angles in degrees.
Eigen::Matrix3d euler_xyz(const Eigen::Vector3d& degrees);

std::vector<Eigen::Vector3d> forward_kinematics(const Skeleton& skel, const Pose& pose);

// Left/right mirror: swaps paired joints, negates the Y/Z Euler components
// and the root's X position.
Pose mirror_pose(const Pose& pose, const Skeleton& skel);
PoseTrack mirror_track(const PoseTrack& track, const Skeleton& skel);

// Returns the tracks followed by their mirrored copies.
std::vector<PoseTrack> augment_with_mirrors(std::span<const PoseTrack> tracks, const Skeleton& skel);

struct Vadi {
    double valence = 0.0;
    double arousal = 0.0;
    double dominance = 0.0;
    double intimacy = 0.0;
};

// Affine map from a flattened pose to (v, a, d, i), ridge least squares.
class PoseVadiRegressor {
public:
    PoseVadiRegressor() = default;

    static PoseVadiRegressor fit(std::span<const Pose> poses, std::span<const Vadi> labels, double ridge = 1e-6);
    static PoseVadiRegressor from_weights(Eigen::MatrixXd weights, Eigen::Vector4d bias);

    bool fitted() const { return weights_.size() > 0; }
    // Throws Error when unfitted.
    Vadi predict(const Pose& pose) const;

    const Eigen::MatrixXd& weights() const { return weights_; }  // 4 x dim
    const Eigen::Vector4d& bias() const { return bias_; }

private:
    Eigen::MatrixXd weights_;
    Eigen::Vector4d bias_ = Eigen::Vector4d::Zero();
};

// File formats (JSON documents, see README).
Skeleton skeleton_from_json(const nlohmann::json& j);
nlohmann::json skeleton_to_json(const Skeleton& skel);
Skeleton load_skeleton(const std::filesystem::path& path);

// Keyframes carry either a dense "pose" array or sparse per-joint
// "rotations" keyed by joint name (requires a skeleton).
PoseTrack track_from_json(const nlohmann::json& j, const Skeleton* skel = nullptr);
nlohmann::json track_to_json(const PoseTrack& track);
PoseTrack load_pose_track(const std::filesystem::path& path, const Skeleton* skel = nullptr);

}  // namespace staog
