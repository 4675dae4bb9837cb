#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Core>

#include "staog/vadi.hpp"

namespace staog {

// 24 named points: 4 per eyebrow, 4 per eye, 6 on the mouth, 1 per cheek.
inline constexpr std::size_t kFaceLandmarkCount = 24;
inline constexpr std::size_t kFaceDim = kFaceLandmarkCount * 2;

const std::array<std::string_view, kFaceLandmarkCount>& face_landmark_names();

// Flattened (x, y) landmark coordinates in face-box units.
struct FaceLandmarks {
    Eigen::VectorXd coords;

    std::size_t dim() const { return static_cast<std::size_t>(coords.size()); }
    Eigen::Vector2d point(std::size_t i) const { return coords.segment<2>(2 * static_cast<Eigen::Index>(i)); }
};

// A face as stored on disk: landmarks plus the VAD annotation.
struct FaceRecord {
    std::string name;
    VadVector vad;
    FaceLandmarks landmarks;
};

FaceRecord load_face(const std::filesystem::path& path);
void save_face(const FaceRecord& face, const std::filesystem::path& path);

// Eigenface model. Rows of `basis` are principal directions sorted by
// decreasing variance; the first `regressed_components` of them carry the
// VAD regression.
struct FaceModel {
    Eigen::VectorXd mean;
    Eigen::MatrixXd basis;            // dim x dim, orthonormal rows
    Eigen::VectorXd variances;        // eigenvalues, non-increasing
    Eigen::VectorXd explained_ratio;  // variances / total
    Eigen::MatrixXd regression;       // k x 4, coefficients = regression * (v, a, d, 1)
    Eigen::VectorXd fit_residuals;    // per training face, landmark-space error of vad_to_face

    std::size_t regressed_components() const { return static_cast<std::size_t>(regression.rows()); }
    std::size_t dim() const { return static_cast<std::size_t>(mean.size()); }
    bool fitted() const { return mean.size() > 0; }
};

FaceModel fit_face_model(std::span<const FaceLandmarks> faces, std::span<const VadVector> vads, std::size_t k,
                         double ridge = 1e-6);

// Coefficients on the first n components (all of them when n == 0).
Eigen::VectorXd project(const FaceLandmarks& face, const FaceModel& model, std::size_t n = 0);
FaceLandmarks reconstruct(const Eigen::VectorXd& coeffs, const FaceModel& model);
FaceLandmarks vad_to_face(const VadVector& vad, const FaceModel& model);

}  // namespace staog
