#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "pddkit/error.hpp"
#include "pddkit/pdd.hpp"

namespace pddkit {

struct Embedding {
  RowMatrix coords;  // n x dims
  double stress = 0.0;
  std::vector<std::string> labels;
};

/// Relative eigenvalue magnitude below which an axis is dropped.
inline constexpr double kEigenClampTolerance = 1e-9;

/// sqrt(sum (d_ij - dhat_ij)^2 / sum d_ij^2) over i < j; 0 for an all-zero matrix.
inline double mds_stress(const RowMatrix& d, const RowMatrix& coords) {
  double num = 0.0, den = 0.0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < d.cols(); ++j) {
      const double e = (coords.row(i) - coords.row(j)).norm();
      num += (d(i, j) - e) * (d(i, j) - e);
      den += d(i, j) * d(i, j);
    }
  }
  return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

/// Classical (Torgerson) MDS: double-centre the squared distances and keep the
/// top eigenpairs. Axes with non-positive eigenvalues stay at zero; each axis
/// is signed so that its largest-magnitude entry is positive.
inline Embedding classical_mds(const RowMatrix& d, int dims, std::vector<std::string> labels = {}) {
  if (dims != 2 && dims != 3) throw Error(ErrorKind::InvalidInput, "dims must be 2 or 3");
  const Eigen::Index n = d.rows();
  if (d.cols() != n) throw Error(ErrorKind::NotSymmetric, "distance matrix is not square");
  for (Eigen::Index i = 0; i < n; ++i) {
    if (std::abs(d(i, i)) > 1e-9) throw Error(ErrorKind::NotSymmetric, "non-zero diagonal entry");
    for (Eigen::Index j = 0; j < n; ++j) {
      if (!std::isfinite(d(i, j))) throw Error(ErrorKind::InvalidInput, "non-finite distance");
      if (d(i, j) < 0.0) throw Error(ErrorKind::NegativeDistance, "negative distance");
      if (std::abs(d(i, j) - d(j, i)) > 1e-9) throw Error(ErrorKind::NotSymmetric, "matrix is not symmetric");
    }
  }
  if (!labels.empty() && static_cast<Eigen::Index>(labels.size()) != n) {
    throw Error(ErrorKind::LengthMismatch, "one label per row required");
  }

  const Eigen::MatrixXd sq = d.array().square().matrix();
  const Eigen::MatrixXd centring =
      Eigen::MatrixXd::Identity(n, n) - Eigen::MatrixXd::Constant(n, n, 1.0 / static_cast<double>(n));
  Eigen::MatrixXd b = -0.5 * centring * sq * centring;
  b = 0.5 * (b + b.transpose());

  Embedding out;
  out.coords = RowMatrix::Zero(n, dims);
  out.labels = std::move(labels);
  if (n > 0) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(b);
    const Eigen::VectorXd& values = eig.eigenvalues();  // ascending
    for (int axis = 0; axis < dims && axis < n; ++axis) {
      const Eigen::Index idx = n - 1 - axis;
      const double lambda = values(idx);
      // Negative and round-off sized eigenvalues are clamped to zero.
      if (lambda <= kEigenClampTolerance * std::max(1.0, values(n - 1))) continue;
      Eigen::VectorXd col = eig.eigenvectors().col(idx) * std::sqrt(lambda);
      Eigen::Index arg = 0;
      col.cwiseAbs().maxCoeff(&arg);
      if (col(arg) < 0.0) col = -col;
      out.coords.col(axis) = col;
    }
    // Remove residual centring error.
    for (int axis = 0; axis < dims; ++axis) out.coords.col(axis).array() -= out.coords.col(axis).mean();
  }
  out.stress = mds_stress(d, out.coords);
  return out;
}

}  // namespace pddkit
