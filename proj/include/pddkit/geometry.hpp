#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

#include "pddkit/elements.hpp"
#include "pddkit/error.hpp"
#include "pddkit/rng.hpp"

namespace pddkit {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

/// Fractional values closer than this to 1.0 wrap to 0.0.
inline constexpr double kWrapEpsilon = 1e-12;

inline double wrap_fraction(double x) {
  double y = x - std::floor(x);
  if (y >= 1.0 - kWrapEpsilon || y < 0.0) y = 0.0;
  return y;
}

inline Vec3 wrap_fraction(const Vec3& f) {
  return {wrap_fraction(f.x()), wrap_fraction(f.y()), wrap_fraction(f.z())};
}

/// Lattice basis stored as the rows v1, v2, v3 of a 3x3 matrix (Cartesian angstroms).
/// A Cartesian point is the row vector (fractional) * matrix().
class LatticeBasis {
 public:
  LatticeBasis() : LatticeBasis(Mat3::Identity()) {}

  explicit LatticeBasis(const Mat3& rows) : rows_(rows) {
    if (!rows_.allFinite()) throw Error(ErrorKind::DegenerateCell, "non-finite basis entries");
    for (int i = 0; i < 3; ++i) {
      if (!(rows_.row(i).norm() > 0.0)) {
        throw Error(ErrorKind::DegenerateCell, "basis vector " + std::to_string(i + 1) + " has zero length");
      }
    }
    const double det = rows_.determinant();
    if (!(det > 0.0) || !std::isfinite(det)) {
      throw Error(ErrorKind::DegenerateCell, "basis determinant must be positive, got " + std::to_string(det));
    }
    inverse_ = rows_.inverse();
  }

  static LatticeBasis cubic(double a) { return LatticeBasis(a * Mat3::Identity()); }

  const Mat3& matrix() const { return rows_; }
  Vec3 vector(int i) const { return rows_.row(i).transpose(); }
  double volume() const { return rows_.determinant(); }

  Vec3 to_cartesian(const Vec3& frac) const { return rows_.transpose() * frac; }
  Vec3 to_fractional(const Vec3& cart) const { return inverse_.transpose() * cart; }

  /// Distances between adjacent lattice planes for each of the three index directions.
  Vec3 plane_spacings() const {
    // Columns of the inverse are the reciprocal vectors (without 2*pi).
    return {1.0 / inverse_.col(0).norm(), 1.0 / inverse_.col(1).norm(), 1.0 / inverse_.col(2).norm()};
  }

  bool operator==(const LatticeBasis& o) const { return rows_ == o.rows_; }

 private:
  Mat3 rows_;
  Mat3 inverse_;
};

struct CellParameters {
  double a = 1.0;
  double b = 1.0;
  double c = 1.0;
  double alpha = 90.0;  // degrees
  double beta = 90.0;
  double gamma = 90.0;
};

namespace detail {
inline double deg2rad(double d) { return d * std::numbers::pi / 180.0; }
inline double rad2deg(double r) { return r * 180.0 / std::numbers::pi; }

// cos() of exact right angles is 6e-17 rather than 0, which would make
// orthorhombic cells slightly skew.
inline double cos_deg(double d) {
  if (d == 90.0) return 0.0;
  if (d == 60.0) return 0.5;
  if (d == 120.0) return -0.5;
  return std::cos(deg2rad(d));
}
}  // namespace detail

/// Standard crystallographic orientation: a along +x, b in the xy-plane with
/// positive y, c with positive z.
inline LatticeBasis cell_params_to_basis(const CellParameters& p) {
  const std::array<double, 6> all{p.a, p.b, p.c, p.alpha, p.beta, p.gamma};
  for (double v : all) {
    if (!std::isfinite(v)) throw Error(ErrorKind::DegenerateCell, "non-finite cell parameter");
  }
  if (p.a <= 0 || p.b <= 0 || p.c <= 0) throw Error(ErrorKind::DegenerateCell, "cell lengths must be positive");
  for (double ang : {p.alpha, p.beta, p.gamma}) {
    if (ang <= 0.0 || ang >= 180.0) throw Error(ErrorKind::DegenerateCell, "cell angles must lie in (0, 180)");
  }
  const double ca = detail::cos_deg(p.alpha);
  const double cb = detail::cos_deg(p.beta);
  const double cg = detail::cos_deg(p.gamma);
  const double sg = std::sqrt(1.0 - cg * cg);
  const double vol_factor = 1.0 - ca * ca - cb * cb - cg * cg + 2.0 * ca * cb * cg;
  if (!(vol_factor > 0.0)) throw Error(ErrorKind::DegenerateCell, "cell angles imply non-positive volume");

  Mat3 rows;
  rows.row(0) << p.a, 0.0, 0.0;
  rows.row(1) << p.b * cg, p.b * sg, 0.0;
  const double cx = p.c * cb;
  const double cy = p.c * (ca - cb * cg) / sg;
  const double cz = p.c * std::sqrt(vol_factor) / sg;
  rows.row(2) << cx, cy, cz;
  return LatticeBasis(rows);
}

inline LatticeBasis cell_params_to_basis(double a, double b, double c, double alpha, double beta, double gamma) {
  return cell_params_to_basis(CellParameters{a, b, c, alpha, beta, gamma});
}

inline CellParameters cell_parameters(const LatticeBasis& basis) {
  const Vec3 v1 = basis.vector(0), v2 = basis.vector(1), v3 = basis.vector(2);
  auto angle = [](const Vec3& x, const Vec3& y) {
    const double c = std::clamp(x.dot(y) / (x.norm() * y.norm()), -1.0, 1.0);
    return detail::rad2deg(std::acos(c));
  };
  return {v1.norm(), v2.norm(), v3.norm(), angle(v2, v3), angle(v1, v3), angle(v1, v2)};
}

/// Finite motif: fractional positions wrapped into [0,1)^3 and their atomic numbers.
class Motif {
 public:
  Motif() = default;

  Motif(std::vector<Vec3> positions, std::vector<int> species)
      : positions_(std::move(positions)), species_(std::move(species)) {
    if (positions_.empty()) throw Error(ErrorKind::EmptyMotif, "motif has no points");
    if (positions_.size() != species_.size()) {
      throw Error(ErrorKind::InvalidInput, "motif positions and species differ in length");
    }
    for (auto& p : positions_) {
      if (!p.allFinite()) throw Error(ErrorKind::InvalidInput, "non-finite fractional coordinate");
      p = wrap_fraction(p);
    }
    for (int z : species_) {
      if (!is_valid_atomic_number(z)) {
        throw Error(ErrorKind::UnknownElement, "atomic number out of range: " + std::to_string(z));
      }
    }
  }

  std::size_t size() const { return positions_.size(); }
  const std::vector<Vec3>& positions() const { return positions_; }
  const std::vector<int>& species() const { return species_; }

 private:
  std::vector<Vec3> positions_;
  std::vector<int> species_;
};

struct PeriodicSet {
  LatticeBasis basis;
  Motif motif;
  std::string id;

  std::size_t size() const { return motif.size(); }
  Vec3 cartesian(std::size_t j) const { return basis.to_cartesian(motif.positions()[j]); }
  double density() const { return static_cast<double>(size()) / basis.volume(); }
};

struct Isometry {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  static Isometry make(const Mat3& rotation, const Vec3& translation) {
    if (((rotation.transpose() * rotation) - Mat3::Identity()).cwiseAbs().maxCoeff() > 1e-12) {
      throw Error(ErrorKind::InvalidInput, "isometry rotation is not orthogonal");
    }
    return {rotation, translation};
  }

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

/// Rotates the basis and maps each motif point through the isometry. A
/// reflection makes the rotated basis left-handed; the third vector is then
/// negated, which describes the same lattice.
inline PeriodicSet apply_isometry(const PeriodicSet& set, const Isometry& iso) {
  Mat3 rows = set.basis.matrix() * iso.rotation.transpose();
  if (rows.determinant() < 0.0) rows.row(2) *= -1.0;
  LatticeBasis basis(rows);
  std::vector<Vec3> frac;
  frac.reserve(set.size());
  for (std::size_t j = 0; j < set.size(); ++j) {
    frac.push_back(basis.to_fractional(iso.apply(set.cartesian(j))));
  }
  return {basis, Motif(std::move(frac), set.motif.species()), set.id};
}

inline constexpr std::size_t kDefaultMaxSupercellPoints = 100000;

inline PeriodicSet supercell(const PeriodicSet& set, int nx, int ny, int nz,
                             std::size_t max_points = kDefaultMaxSupercellPoints) {
  if (nx < 1 || ny < 1 || nz < 1) throw Error(ErrorKind::InvalidInput, "supercell multiples must be >= 1");
  const auto copies = static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  if (copies > max_points / set.size()) {
    throw Error(ErrorKind::Overflow, "supercell would exceed " + std::to_string(max_points) + " points");
  }
  Mat3 rows = set.basis.matrix();
  rows.row(0) *= nx;
  rows.row(1) *= ny;
  rows.row(2) *= nz;
  std::vector<Vec3> frac;
  std::vector<int> species;
  frac.reserve(copies * set.size());
  species.reserve(copies * set.size());
  for (int i = 0; i < nx; ++i) {
    for (int j = 0; j < ny; ++j) {
      for (int k = 0; k < nz; ++k) {
        for (std::size_t p = 0; p < set.size(); ++p) {
          const Vec3& f = set.motif.positions()[p];
          frac.emplace_back((f.x() + i) / nx, (f.y() + j) / ny, (f.z() + k) / nz);
          species.push_back(set.motif.species()[p]);
        }
      }
    }
  }
  return {LatticeBasis(rows), Motif(std::move(frac), std::move(species)), set.id};
}

/// Species palette used by the random generator: H, C, O, Si, Fe.
inline constexpr std::array<int, 5> kRandomSpeciesPalette = {1, 6, 8, 14, 26};

inline constexpr double kRandomMinSeparation = 0.1;

namespace detail {
// Smallest distance between p and any periodic image of q (images within +-2 cells).
inline double periodic_pair_distance(const LatticeBasis& basis, const Vec3& fp, const Vec3& fq) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = -2; i <= 2; ++i)
    for (int j = -2; j <= 2; ++j)
      for (int k = -2; k <= 2; ++k) {
        const Vec3 d = basis.to_cartesian(fq - fp + Vec3(i, j, k));
        best = std::min(best, d.norm());
      }
  return best;
}

inline double shortest_lattice_vector(const LatticeBasis& basis) {
  double best = std::numeric_limits<double>::infinity();
  for (int i = -2; i <= 2; ++i)
    for (int j = -2; j <= 2; ++j)
      for (int k = -2; k <= 2; ++k) {
        if (i == 0 && j == 0 && k == 0) continue;
        best = std::min(best, basis.to_cartesian(Vec3(i, j, k)).norm());
      }
  return best;
}
}  // namespace detail

/// Deterministic random crystal with m motif points. The cell is the unit cube
/// scaled by cbrt(m) (unit density) with each basis entry perturbed by
/// distortion * U(-0.3, 0.3); the first point sits at the origin.
inline PeriodicSet random_periodic_set(std::uint64_t seed, std::size_t m, double distortion = 0.0) {
  if (m < 1) throw Error(ErrorKind::InvalidInput, "motif size must be >= 1");
  if (!(distortion >= 0.0 && distortion < 1.0)) throw Error(ErrorKind::InvalidInput, "distortion must lie in [0,1)");
  constexpr int kMaxAttempts = 1000;
  Rng rng(seed);
  const double scale = std::cbrt(static_cast<double>(m));

  Mat3 rows = Mat3::Identity();
  int attempts = 0;
  for (;;) {
    Mat3 e;
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 3; ++j) e(i, j) = rng.uniform(-0.3, 0.3);
    rows = scale * (Mat3::Identity() + distortion * e);
    if (detail::shortest_lattice_vector(LatticeBasis(rows)) >= kRandomMinSeparation) break;
    if (++attempts == kMaxAttempts) throw Error(ErrorKind::GenerationFailed, "could not draw a valid cell");
  }
  LatticeBasis basis(rows);

  std::vector<Vec3> frac{Vec3::Zero()};
  std::vector<int> species{kRandomSpeciesPalette[rng.index(kRandomSpeciesPalette.size())]};
  while (frac.size() < m) {
    bool placed = false;
    for (int attempt = 0; attempt < kMaxAttempts && !placed; ++attempt) {
      const Vec3 f(rng.uniform(), rng.uniform(), rng.uniform());
      placed = std::all_of(frac.begin(), frac.end(), [&](const Vec3& q) {
        return detail::periodic_pair_distance(basis, q, f) >= kRandomMinSeparation;
      });
      if (placed) frac.push_back(f);
    }
    if (!placed) throw Error(ErrorKind::GenerationFailed, "rejection sampling exhausted for motif point");
    species.push_back(kRandomSpeciesPalette[rng.index(kRandomSpeciesPalette.size())]);
  }
  return {basis, Motif(std::move(frac), std::move(species)), "random-" + std::to_string(seed)};
}

/// Uniform sample from the ball of the given radius.
inline Vec3 random_in_ball(Rng& rng, double radius) {
  for (;;) {
    const Vec3 v(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
    if (v.squaredNorm() <= 1.0) return radius * v;
  }
}

/// Displaces every motif point by an independent vector of norm <= epsilon.
inline PeriodicSet perturb_motif(const PeriodicSet& set, double epsilon, std::uint64_t seed) {
  if (!(epsilon >= 0.0)) throw Error(ErrorKind::InvalidInput, "epsilon must be >= 0");
  if (epsilon == 0.0) return set;
  Rng rng(seed);
  std::vector<Vec3> frac;
  frac.reserve(set.size());
  for (std::size_t j = 0; j < set.size(); ++j) {
    frac.push_back(set.basis.to_fractional(set.cartesian(j) + random_in_ball(rng, epsilon)));
  }
  return {set.basis, Motif(std::move(frac), set.motif.species()), set.id};
}

/// Haar-random rotation (optionally composed with a reflection) and a random translation.
inline Isometry random_isometry(Rng& rng, bool allow_reflection = true, double max_translation = 10.0) {
  Eigen::Vector4d q;
  do {
    q = Eigen::Vector4d(rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1));
  } while (q.squaredNorm() > 1.0 || q.squaredNorm() < 1e-6);
  q.normalize();
  Mat3 r = Eigen::Quaterniond(q[0], q[1], q[2], q[3]).toRotationMatrix();
  if (allow_reflection && rng.uniform() < 0.5) r.col(0) *= -1.0;
  const Vec3 t(rng.uniform(-max_translation, max_translation), rng.uniform(-max_translation, max_translation),
               rng.uniform(-max_translation, max_translation));
  return {r, t};
}

/// Half the longest cell diagonal. Every point of space is within this distance
/// of a lattice point, so it bounds the covering radius from above.
inline double covering_radius_upper_bound(const LatticeBasis& basis) {
  const Vec3 v1 = basis.vector(0), v2 = basis.vector(1), v3 = basis.vector(2);
  double best = 0.0;
  for (double s2 : {-1.0, 1.0})
    for (double s3 : {-1.0, 1.0}) best = std::max(best, (v1 + s2 * v2 + s3 * v3).norm());
  return 0.5 * best;
}

}  // namespace pddkit
