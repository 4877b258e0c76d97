#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace surfel {

template <typename Scalar> using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar> using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar> using Vec6 = Eigen::Matrix<Scalar, 6, 1>;
template <typename Scalar> using Mat2 = Eigen::Matrix<Scalar, 2, 2>;
template <typename Scalar> using Mat3 = Eigen::Matrix<Scalar, 3, 3>;
template <typename Scalar> using Mat32 = Eigen::Matrix<Scalar, 3, 2>;
template <typename Scalar> using Mat23 = Eigen::Matrix<Scalar, 2, 3>;

using Vec2d = Vec2<double>;
using Vec3d = Vec3<double>;
using Vec6d = Vec6<double>;
using Mat2d = Mat2<double>;
using Mat3d = Mat3<double>;
using Mat32d = Mat32<double>;
using Mat23d = Mat23<double>;

enum class ErrorCode {
  InvalidDepth,
  BadArity,
  Singular,
  OutOfBounds,
  TooSmall,
  BehindCamera,
  OutOfImage,
  DegenerateFit,
  LinearSolveFailure,
  TrackingLost,
  AnchorOffSurface,
  UnknownPreset,
  BadInput,
};

const char* to_string(ErrorCode code);

/// Exception carrying one of the library's error kinds.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline const char* to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::InvalidDepth: return "InvalidDepth";
    case ErrorCode::BadArity: return "BadArity";
    case ErrorCode::Singular: return "Singular";
    case ErrorCode::OutOfBounds: return "OutOfBounds";
    case ErrorCode::TooSmall: return "TooSmall";
    case ErrorCode::BehindCamera: return "BehindCamera";
    case ErrorCode::OutOfImage: return "OutOfImage";
    case ErrorCode::DegenerateFit: return "DegenerateFit";
    case ErrorCode::LinearSolveFailure: return "LinearSolveFailure";
    case ErrorCode::TrackingLost: return "TrackingLost";
    case ErrorCode::AnchorOffSurface: return "AnchorOffSurface";
    case ErrorCode::UnknownPreset: return "UnknownPreset";
    case ErrorCode::BadInput: return "BadInput";
  }
  return "Unknown";
}

}  // namespace surfel
