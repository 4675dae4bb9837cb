#include "staog/motion.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <Eigen/Dense>

#include "json_util.hpp"
#include "staog/error.hpp"

namespace staog {

using detail::json;

double wrap_degrees(double deg) {
    double r = std::fmod(deg, 360.0);
    if (r <= -180.0) r += 360.0;
    if (r > 180.0) r -= 360.0;
    return r;
}

Pose Pose::zero(std::size_t joint_count) {
    Pose p;
    p.rotations.assign(joint_count, Eigen::Vector3d::Zero());
    return p;
}

Eigen::VectorXd Pose::to_vector() const {
    Eigen::VectorXd v(dim());
    for (std::size_t j = 0; j < rotations.size(); ++j) v.segment<3>(3 * j) = rotations[j];
    v.tail<3>() = root_position;
    return v;
}

Pose Pose::from_vector(const Eigen::Ref<const Eigen::VectorXd>& v) {
    if (v.size() < 3 || v.size() % 3 != 0) throw ValidationError("pose vector length must be 3*joints+3");
    Pose p = zero(static_cast<std::size_t>(v.size() / 3 - 1));
    for (std::size_t j = 0; j < p.rotations.size(); ++j) {
        Eigen::Vector3d r = v.segment<3>(3 * j);
        p.rotations[j] = {wrap_degrees(r.x()), wrap_degrees(r.y()), wrap_degrees(r.z())};
    }
    p.root_position = v.tail<3>();
    return p;
}

void Pose::validate() const {
    for (const auto& r : rotations)
        for (int c = 0; c < 3; ++c)
            if (!std::isfinite(r[c]) || r[c] <= -180.0 || r[c] > 180.0)
                throw ValidationError("pose rotation outside (-180, 180]");
    if (!root_position.allFinite()) throw ValidationError("non-finite root position");
}

void PoseTrack::validate() const {
    if (keyframes.empty()) throw ValidationError("pose track has no keyframes");
    const auto joints = keyframes.front().pose.joint_count();
    for (std::size_t i = 0; i < keyframes.size(); ++i) {
        if (keyframes[i].pose.joint_count() != joints) throw ValidationError("inconsistent joint count in track");
        keyframes[i].pose.validate();
        if (i > 0 && !(keyframes[i].time > keyframes[i - 1].time))
            throw ValidationError("keyframe times must be strictly increasing");
    }
}

namespace {

Pose lerp_pose(const Pose& a, const Pose& b, double s) {
    Pose out = Pose::zero(a.joint_count());
    for (std::size_t j = 0; j < a.rotations.size(); ++j) {
        for (int c = 0; c < 3; ++c) {
            double delta = wrap_degrees(b.rotations[j][c] - a.rotations[j][c]);
            out.rotations[j][c] = wrap_degrees(a.rotations[j][c] + s * delta);
        }
    }
    out.root_position = a.root_position + s * (b.root_position - a.root_position);
    return out;
}

}  // namespace

Pose interpolate(const PoseTrack& track, double t) {
    if (track.keyframes.empty()) throw ValidationError("cannot interpolate an empty track");
    const auto& kf = track.keyframes;
    if (t <= kf.front().time) return kf.front().pose;
    if (t >= kf.back().time) return kf.back().pose;
    auto upper = std::upper_bound(kf.begin(), kf.end(), t, [](double x, const Keyframe& k) { return x < k.time; });
    const auto& b = *upper;
    const auto& a = *(upper - 1);
    if (t == a.time) return a.pose;
    return lerp_pose(a.pose, b.pose, (t - a.time) / (b.time - a.time));
}

std::vector<Pose> resample(const PoseTrack& track, double dt) {
    if (!(dt > 0.0)) throw DomainError("resample step must be positive");
    if (track.keyframes.empty()) throw ValidationError("cannot resample an empty track");
    std::vector<Pose> out;
    const double t0 = track.start_time();
    const double t1 = track.end_time();
    for (std::size_t k = 0;; ++k) {
        double t = t0 + static_cast<double>(k) * dt;
        if (t > t1 + 1e-9) break;
        out.push_back(interpolate(track, t));
    }
    return out;
}

Skeleton::Skeleton(std::vector<Joint> joints) : joints_(std::move(joints)) {
    if (joints_.empty()) throw ValidationError("skeleton has no joints");
    int roots = 0;
    for (std::size_t i = 0; i < joints_.size(); ++i) {
        const int parent = joints_[i].parent;
        if (parent < 0) {
            ++roots;
            if (parent != -1) throw ValidationError("bad parent index for joint " + joints_[i].name);
        } else if (static_cast<std::size_t>(parent) >= i) {
            throw ValidationError("joints must be topologically ordered (" + joints_[i].name + ")");
        }
        if (!joints_[i].offset.allFinite()) throw ValidationError("non-finite joint offset");
    }
    if (roots != 1 || joints_.front().parent != -1) throw ValidationError("skeleton needs exactly one root at index 0");
}

std::optional<std::size_t> Skeleton::index_of(std::string_view name) const {
    for (std::size_t i = 0; i < joints_.size(); ++i)
        if (joints_[i].name == name) return i;
    return std::nullopt;
}

std::size_t Skeleton::mirror_of(std::size_t joint) const {
    const auto& name = joints_.at(joint).name;
    auto swap_prefix = [&](std::string_view from, std::string_view to) -> std::optional<std::size_t> {
        if (name.rfind(from, 0) != 0) return std::nullopt;
        return index_of(std::string(to) + name.substr(from.size()));
    };
    if (auto m = swap_prefix("Left", "Right")) return *m;
    if (auto m = swap_prefix("Right", "Left")) return *m;
    return joint;
}

Eigen::Matrix3d euler_xyz(const Eigen::Vector3d& degrees) {
    const Eigen::Vector3d rad = degrees * (std::numbers::pi / 180.0);
    return (Eigen::AngleAxisd(rad.x(), Eigen::Vector3d::UnitX()) * Eigen::AngleAxisd(rad.y(), Eigen::Vector3d::UnitY()) *
            Eigen::AngleAxisd(rad.z(), Eigen::Vector3d::UnitZ()))
        .toRotationMatrix();
}

std::vector<Eigen::Vector3d> forward_kinematics(const Skeleton& skel, const Pose& pose) {
    if (pose.joint_count() != skel.size())
        throw ValidationError("pose has " + std::to_string(pose.joint_count()) + " joints, skeleton " +
                              std::to_string(skel.size()));
    const auto& joints = skel.joints();
    std::vector<Eigen::Vector3d> positions(joints.size());
    std::vector<Eigen::Matrix3d> world(joints.size());
    for (std::size_t i = 0; i < joints.size(); ++i) {
        const Eigen::Matrix3d local = euler_xyz(pose.rotations[i]);
        if (joints[i].parent < 0) {
            positions[i] = pose.root_position;
            world[i] = local;
        } else {
            const auto p = static_cast<std::size_t>(joints[i].parent);
            positions[i] = positions[p] + world[p] * joints[i].offset;
            world[i] = world[p] * local;
        }
    }
    return positions;
}

Pose mirror_pose(const Pose& pose, const Skeleton& skel) {
    if (pose.joint_count() != skel.size()) throw ValidationError("pose/skeleton joint count mismatch");
    Pose out = Pose::zero(pose.joint_count());
    for (std::size_t j = 0; j < pose.joint_count(); ++j) {
        const auto& r = pose.rotations[skel.mirror_of(j)];
        out.rotations[j] = {r.x(), wrap_degrees(-r.y()), wrap_degrees(-r.z())};
    }
    out.root_position = {-pose.root_position.x(), pose.root_position.y(), pose.root_position.z()};
    return out;
}

PoseTrack mirror_track(const PoseTrack& track, const Skeleton& skel) {
    PoseTrack out = track;
    for (auto& kf : out.keyframes) kf.pose = mirror_pose(kf.pose, skel);
    return out;
}

std::vector<PoseTrack> augment_with_mirrors(std::span<const PoseTrack> tracks, const Skeleton& skel) {
    std::vector<PoseTrack> out(tracks.begin(), tracks.end());
    out.reserve(tracks.size() * 2);
    for (const auto& t : tracks) out.push_back(mirror_track(t, skel));
    return out;
}

PoseVadiRegressor PoseVadiRegressor::fit(std::span<const Pose> poses, std::span<const Vadi> labels, double ridge) {
    if (poses.empty() || poses.size() != labels.size()) throw ValidationError("need one VADI label per pose");
    const auto n = static_cast<Eigen::Index>(poses.size());
    const auto dim = static_cast<Eigen::Index>(poses.front().dim());
    Eigen::MatrixXd x(n, dim + 1);
    Eigen::MatrixXd y(n, 4);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& p = poses[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(p.dim()) != dim) throw ValidationError("pose dimension mismatch in regression data");
        x.row(i).head(dim) = p.to_vector().transpose();
        x(i, dim) = 1.0;
        const auto& l = labels[static_cast<std::size_t>(i)];
        y.row(i) << l.valence, l.arousal, l.dominance, l.intimacy;
    }
    // Dual form when there are fewer samples than features.
    Eigen::MatrixXd coef;
    if (n < dim + 1) {
        Eigen::MatrixXd gram = x * x.transpose();
        gram.diagonal().array() += ridge;
        coef = x.transpose() * gram.ldlt().solve(y);
    } else {
        Eigen::MatrixXd normal = x.transpose() * x;
        normal.diagonal().array() += ridge;
        coef = normal.ldlt().solve(x.transpose() * y);
    }
    PoseVadiRegressor reg;
    reg.weights_ = coef.topRows(dim).transpose();
    reg.bias_ = coef.row(dim).transpose();
    return reg;
}

PoseVadiRegressor PoseVadiRegressor::from_weights(Eigen::MatrixXd weights, Eigen::Vector4d bias) {
    if (weights.rows() != 4) throw ValidationError("regressor weights must have 4 rows");
    PoseVadiRegressor reg;
    reg.weights_ = std::move(weights);
    reg.bias_ = bias;
    return reg;
}

Vadi PoseVadiRegressor::predict(const Pose& pose) const {
    if (!fitted()) throw Error("pose->VADI regressor is not fitted");
    if (static_cast<Eigen::Index>(pose.dim()) != weights_.cols()) throw ValidationError("pose dimension mismatch");
    const Eigen::Vector4d out = weights_ * pose.to_vector() + bias_;
    return Vadi{std::clamp(out[0], 0.0, 1.0), std::clamp(out[1], 0.0, 1.0), std::clamp(out[2], 0.0, 1.0),
                std::clamp(out[3], -1.0, 1.0)};
}

Skeleton skeleton_from_json(const json& j) {
    std::vector<Joint> joints;
    for (const auto& jj : detail::require<json>(j, "joints")) {
        Joint joint;
        joint.name = detail::require<std::string>(jj, "name");
        const auto& parent = jj.at("parent");
        if (parent.is_null()) {
            joint.parent = -1;
        } else if (parent.is_string()) {
            bool found = false;
            for (std::size_t k = 0; k < joints.size(); ++k)
                if (joints[k].name == parent.get<std::string>()) {
                    joint.parent = static_cast<int>(k);
                    found = true;
                }
            if (!found) throw ValidationError("joint " + joint.name + " references unknown parent");
        } else {
            joint.parent = parent.get<int>();
        }
        joint.offset = detail::vec3(jj.at("offset"));
        joints.push_back(std::move(joint));
    }
    return Skeleton(std::move(joints));
}

json skeleton_to_json(const Skeleton& skel) {
    json joints = json::array();
    for (const auto& joint : skel.joints()) {
        joints.push_back({{"name", joint.name},
                          {"parent", joint.parent < 0 ? json(nullptr) : json(skel.joints()[joint.parent].name)},
                          {"offset", detail::to_json(joint.offset)}});
    }
    return {{"schema", "staog.skeleton/1"}, {"joints", joints}};
}

Skeleton load_skeleton(const std::filesystem::path& path) {
    try {
        return skeleton_from_json(detail::read_json_file(path));
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

PoseTrack track_from_json(const json& j, const Skeleton* skel) {
    PoseTrack track;
    track.fps = j.value("fps", 24.0);
    track.skeleton = j.value("skeleton", std::string());
    for (const auto& kj : detail::require<json>(j, "keyframes")) {
        Keyframe kf;
        kf.time = detail::require<double>(kj, "t");
        if (kj.contains("pose")) {
            auto values = kj.at("pose").get<std::vector<double>>();
            kf.pose = Pose::from_vector(Eigen::Map<const Eigen::VectorXd>(values.data(), static_cast<Eigen::Index>(values.size())));
        } else {
            if (skel == nullptr) throw ValidationError("sparse keyframes need a skeleton");
            kf.pose = Pose::zero(skel->size());
            if (kj.contains("root")) kf.pose.root_position = detail::vec3(kj.at("root"));
            const json rotations = kj.value("rotations", json::object());
            for (const auto& [name, rot] : rotations.items()) {
                auto idx = skel->index_of(name);
                if (!idx) throw ValidationError("track references unknown joint " + name);
                Eigen::Vector3d r = detail::vec3(rot);
                kf.pose.rotations[*idx] = {wrap_degrees(r.x()), wrap_degrees(r.y()), wrap_degrees(r.z())};
            }
        }
        track.keyframes.push_back(std::move(kf));
    }
    track.validate();
    return track;
}

json track_to_json(const PoseTrack& track) {
    json kfs = json::array();
    for (const auto& kf : track.keyframes) {
        const Eigen::VectorXd v = kf.pose.to_vector();
        kfs.push_back({{"t", kf.time}, {"pose", std::vector<double>(v.data(), v.data() + v.size())}});
    }
    return {{"schema", "staog.track/1"}, {"skeleton", track.skeleton}, {"fps", track.fps}, {"keyframes", kfs}};
}

PoseTrack load_pose_track(const std::filesystem::path& path, const Skeleton* skel) {
    try {
        return track_from_json(detail::read_json_file(path), skel);
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

}  // namespace staog
