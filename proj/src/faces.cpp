#include "staog/faces.hpp"

#include <cmath>

#include <Eigen/Dense>

#include "json_util.hpp"
#include "staog/error.hpp"

namespace staog {

using detail::json;

const std::array<std::string_view, kFaceLandmarkCount>& face_landmark_names() {
    static const std::array<std::string_view, kFaceLandmarkCount> names = {
        "brow_l_0", "brow_l_1", "brow_l_2", "brow_l_3",  //
        "brow_r_0", "brow_r_1", "brow_r_2", "brow_r_3",  //
        "eye_l_0",  "eye_l_1",  "eye_l_2",  "eye_l_3",   //
        "eye_r_0",  "eye_r_1",  "eye_r_2",  "eye_r_3",   //
        "mouth_0",  "mouth_1",  "mouth_2",  "mouth_3",  "mouth_4", "mouth_5",
        "cheek_l",  "cheek_r",
    };
    return names;
}

FaceRecord load_face(const std::filesystem::path& path) {
    const json j = detail::read_json_file(path);
    try {
        FaceRecord face;
        face.name = detail::require<std::string>(j, "name");
        const Eigen::Vector3d vad = detail::vec3(j.at("vad"));
        face.vad = VadVector::clamped(vad.x(), vad.y(), vad.z());
        const auto& lm = detail::require<json>(j, "landmarks");
        const auto& names = face_landmark_names();
        face.landmarks.coords.resize(static_cast<Eigen::Index>(kFaceDim));
        if (lm.size() != names.size()) throw ValidationError("face must list exactly 24 landmarks");
        for (std::size_t i = 0; i < names.size(); ++i) {
            const std::string key(names[i]);
            if (!lm.contains(key)) throw ValidationError("missing landmark " + key);
            const auto& p = lm.at(key);
            if (!p.is_array() || p.size() != 2) throw ValidationError("landmark " + key + " must be [x, y]");
            const double x = p[0].get<double>();
            const double y = p[1].get<double>();
            if (!std::isfinite(x) || !std::isfinite(y)) throw ValidationError("non-finite landmark " + key);
            face.landmarks.coords[static_cast<Eigen::Index>(2 * i)] = x;
            face.landmarks.coords[static_cast<Eigen::Index>(2 * i + 1)] = y;
        }
        return face;
    } catch (const json::exception& e) {
        throw ValidationError(path.string() + ": " + e.what());
    }
}

void save_face(const FaceRecord& face, const std::filesystem::path& path) {
    if (face.landmarks.dim() != kFaceDim) throw ValidationError("face must have 48 coordinates");
    json lm = json::object();
    const auto& names = face_landmark_names();
    for (std::size_t i = 0; i < names.size(); ++i)
        lm[std::string(names[i])] = {face.landmarks.coords[static_cast<Eigen::Index>(2 * i)],
                                     face.landmarks.coords[static_cast<Eigen::Index>(2 * i + 1)]};
    json j = {{"schema", "staog.face/1"},
              {"name", face.name},
              {"vad", {face.vad.valence, face.vad.arousal, face.vad.dominance}},
              {"landmarks", lm}};
    detail::write_file_atomic(path, j.dump(2) + "\n");
}

FaceModel fit_face_model(std::span<const FaceLandmarks> faces, std::span<const VadVector> vads, std::size_t k,
                         double ridge) {
    if (faces.empty()) throw ValidationError("no faces to fit");
    if (faces.size() != vads.size()) throw ValidationError("need one VAD per face");
    if (k < 1 || k + 1 > faces.size())
        throw ValidationError("cannot fit " + std::to_string(k) + " components from " + std::to_string(faces.size()) +
                              " faces");
    const auto n = static_cast<Eigen::Index>(faces.size());
    const auto dim = static_cast<Eigen::Index>(faces.front().dim());
    if (dim == 0) throw ValidationError("empty face vectors");
    if (static_cast<Eigen::Index>(k) > dim) throw ValidationError("more components than landmark dimensions");

    Eigen::MatrixXd data(n, dim);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& f = faces[static_cast<std::size_t>(i)];
        if (static_cast<Eigen::Index>(f.dim()) != dim) throw ValidationError("face dimension mismatch");
        if (!f.coords.allFinite()) throw ValidationError("non-finite landmark");
        data.row(i) = f.coords.transpose();
    }

    FaceModel model;
    model.mean = data.colwise().mean().transpose();
    const Eigen::MatrixXd centered = data.rowwise() - model.mean.transpose();
    const Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(n - 1);
    const double total = cov.trace();
    if (!(total > 1e-14)) throw ValidationError("faces have zero variance");

    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    if (eig.info() != Eigen::Success) throw Error("eigendecomposition failed");
    // Ascending -> descending.
    model.basis = eig.eigenvectors().rowwise().reverse().transpose();
    model.variances = eig.eigenvalues().reverse().cwiseMax(0.0);
    model.explained_ratio = model.variances / total;

    const auto kk = static_cast<Eigen::Index>(k);
    const Eigen::MatrixXd coeffs = centered * model.basis.topRows(kk).transpose();  // n x k
    Eigen::MatrixXd design(n, 4);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& v = vads[static_cast<std::size_t>(i)];
        design.row(i) << v.valence, v.arousal, v.dominance, 1.0;
    }
    Eigen::Matrix4d normal = design.transpose() * design;
    normal.diagonal().array() += ridge;
    model.regression = normal.ldlt().solve(design.transpose() * coeffs).transpose();  // k x 4

    model.fit_residuals.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto synth = vad_to_face(vads[static_cast<std::size_t>(i)], model);
        model.fit_residuals[i] = (synth.coords - data.row(i).transpose()).norm();
    }
    return model;
}

Eigen::VectorXd project(const FaceLandmarks& face, const FaceModel& model, std::size_t n) {
    if (!model.fitted()) throw Error("face model is not fitted");
    if (face.dim() != model.dim()) throw ValidationError("face dimension mismatch");
    const auto rows = n == 0 ? model.basis.rows() : static_cast<Eigen::Index>(n);
    if (rows > model.basis.rows()) throw ValidationError("more components requested than available");
    return model.basis.topRows(rows) * (face.coords - model.mean);
}

FaceLandmarks reconstruct(const Eigen::VectorXd& coeffs, const FaceModel& model) {
    if (!model.fitted()) throw Error("face model is not fitted");
    if (coeffs.size() > model.basis.rows()) throw ValidationError("too many coefficients");
    return FaceLandmarks{model.mean + model.basis.topRows(coeffs.size()).transpose() * coeffs};
}

FaceLandmarks vad_to_face(const VadVector& vad, const FaceModel& model) {
    if (!model.fitted() || model.regression.size() == 0) throw Error("face model is not fitted");
    const Eigen::Vector4d x(vad.valence, vad.arousal, vad.dominance, 1.0);
    return reconstruct(model.regression * x, model);
}

}  // namespace staog
