#pragma once

// Periodic Set Transformer: a transformer encoder over the weighted rows of a
// PDD. Row weights enter the attention softmax and the final pooling, which
// makes the output depend only on the weighted multiset of rows.

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "pddkit/error.hpp"
#include "pddkit/rng.hpp"

namespace pddkit::pst {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

struct Config {
  int d_model = 128;
  int heads = 4;
  int encoders = 4;
  double attention_dropout = 0.1;
  double dropout = 0.0;
  int k = 15;
  int species_dim = 118;  // 0 = structure only
  std::uint64_t seed = 0;
  bool slp_pre_norm = true;  // layer-normalise the attention output before the SLP

  int head_dim() const { return d_model / heads; }

  void validate() const {
    if (d_model < 1 || heads < 1 || d_model % heads != 0) {
      throw Error(ErrorKind::InvalidInput, "d_model must be a positive multiple of heads");
    }
    if (encoders < 0) throw Error(ErrorKind::InvalidInput, "encoders must be >= 0");
    if (k < 1) throw Error(ErrorKind::InvalidInput, "k must be >= 1");
    if (species_dim < 0) throw Error(ErrorKind::InvalidInput, "species_dim must be >= 0");
    for (double p : {attention_dropout, dropout}) {
      if (!(p >= 0.0 && p < 1.0)) throw Error(ErrorKind::InvalidInput, "dropout probabilities must lie in [0,1)");
    }
  }
};

struct LayerParams {
  Vector ln1_gain, ln1_bias;
  Matrix wq, wk, wv;  // d x d, head h uses columns [h*dh, (h+1)*dh)
  Vector ln2_gain, ln2_bias;
  Matrix slp_w;  // d x d
  Vector slp_b;
};

struct Params {
  Matrix w_s;  // k x d, PDD row embedding
  Matrix w_c;  // species_dim x d, composition embedding
  std::vector<LayerParams> layers;
  Vector head_w;  // d
  Vector head_b;  // 1

  /// Zero tensors with the shapes implied by the config.
  static Params zeros(const Config& c) {
    Params p;
    const int d = c.d_model;
    p.w_s = Matrix::Zero(c.k, d);
    p.w_c = Matrix::Zero(c.species_dim, d);
    for (int l = 0; l < c.encoders; ++l) {
      LayerParams lp;
      lp.ln1_gain = Vector::Zero(d);
      lp.ln1_bias = Vector::Zero(d);
      lp.wq = Matrix::Zero(d, d);
      lp.wk = Matrix::Zero(d, d);
      lp.wv = Matrix::Zero(d, d);
      lp.ln2_gain = Vector::Zero(d);
      lp.ln2_bias = Vector::Zero(d);
      lp.slp_w = Matrix::Zero(d, d);
      lp.slp_b = Vector::Zero(d);
      p.layers.push_back(std::move(lp));
    }
    p.head_w = Vector::Zero(d);
    p.head_b = Vector::Zero(1);
    return p;
  }

  /// Weights uniform in +-1/sqrt(fan_in); layer-norm gains 1, biases 0.
  static Params init(const Config& c) {
    c.validate();
    Params p = zeros(c);
    Rng rng(c.seed ^ 0x5057u);
    auto fill = [&](auto& t, int fan_in) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(std::max(1, fan_in)));
      for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = rng.uniform(-bound, bound);
    };
    fill(p.w_s, c.k);
    fill(p.w_c, c.species_dim);
    for (auto& lp : p.layers) {
      lp.ln1_gain.setOnes();
      lp.ln2_gain.setOnes();
      fill(lp.wq, c.d_model);
      fill(lp.wk, c.d_model);
      fill(lp.wv, c.d_model);
      fill(lp.slp_w, c.d_model);
      fill(lp.slp_b, c.d_model);
    }
    fill(p.head_w, c.d_model);
    fill(p.head_b, c.d_model);
    return p;
  }

  /// Visits every tensor in a fixed order with a stable name.
  template <typename Fn>
  void for_each(Fn&& fn) {
    visit(*this, fn);
  }

  template <typename Fn>
  void for_each(Fn&& fn) const {
    visit(*this, fn);
  }

 private:
  template <typename Self, typename Fn>
  static void visit(Self& self, Fn& fn) {
    fn(std::string("w_s"), self.w_s);
    fn(std::string("w_c"), self.w_c);
    for (std::size_t l = 0; l < self.layers.size(); ++l) {
      auto& lp = self.layers[l];
      const std::string pre = "layer" + std::to_string(l) + ".";
      fn(pre + "ln1_gain", lp.ln1_gain);
      fn(pre + "ln1_bias", lp.ln1_bias);
      fn(pre + "wq", lp.wq);
      fn(pre + "wk", lp.wk);
      fn(pre + "wv", lp.wv);
      fn(pre + "ln2_gain", lp.ln2_gain);
      fn(pre + "ln2_bias", lp.ln2_bias);
      fn(pre + "slp_w", lp.slp_w);
      fn(pre + "slp_b", lp.slp_b);
    }
    fn(std::string("head_w"), self.head_w);
    fn(std::string("head_b"), self.head_b);
  }
};

/// One structure: r rows of (normalised) distances, their weights and species features.
struct Input {
  Matrix rows;     // r x k
  Vector weights;  // r; padded rows carry weight 0
  Matrix species;  // r x species_dim (r x 0 in structure-only mode)
  std::vector<bool> mask;  // true = real row; empty means all real

  Eigen::Index size() const { return rows.rows(); }
};

inline void validate_input(const Input& in, const Config& c) {
  const Eigen::Index r = in.rows.rows();
  if (r < 1) throw Error(ErrorKind::ShapeMismatch, "input has no rows");
  if (in.rows.cols() != c.k) throw Error(ErrorKind::ShapeMismatch, "input rows have " + std::to_string(in.rows.cols()) + " columns, expected k=" + std::to_string(c.k));
  if (in.weights.size() != r) throw Error(ErrorKind::ShapeMismatch, "one weight per row required");
  if (in.species.rows() != r || in.species.cols() != c.species_dim) {
    throw Error(ErrorKind::ShapeMismatch, "species matrix must be r x species_dim");
  }
  if (!in.mask.empty() && static_cast<Eigen::Index>(in.mask.size()) != r) {
    throw Error(ErrorKind::ShapeMismatch, "one mask entry per row required");
  }
  double total = 0.0;
  for (Eigen::Index i = 0; i < r; ++i) {
    const double w = in.weights(i);
    if (!(w >= 0.0)) throw Error(ErrorKind::InvalidInput, "weights must be non-negative");
    if (!in.mask.empty() && !in.mask[static_cast<std::size_t>(i)] && w != 0.0) {
      throw Error(ErrorKind::InvalidInput, "masked-out rows must have weight 0");
    }
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-9) throw Error(ErrorKind::InvalidInput, "row weights must sum to 1");
}

/// Pads an input with zero-weight, zero-valued rows up to r rows.
inline Input pad_input(const Input& in, Eigen::Index r) {
  if (r < in.size()) throw Error(ErrorKind::ShapeMismatch, "cannot pad to fewer rows");
  Input out;
  out.rows = Matrix::Zero(r, in.rows.cols());
  out.rows.topRows(in.size()) = in.rows;
  out.weights = Vector::Zero(r);
  out.weights.head(in.size()) = in.weights;
  out.species = Matrix::Zero(r, in.species.cols());
  out.species.topRows(in.size()) = in.species;
  out.mask.assign(static_cast<std::size_t>(r), false);
  for (Eigen::Index i = 0; i < in.size(); ++i) {
    out.mask[static_cast<std::size_t>(i)] = in.mask.empty() ? true : in.mask[static_cast<std::size_t>(i)];
  }
  return out;
}

/// sigma(z)_i = w_i exp(z_i) / sum_j w_j exp(z_j), evaluated with a max shift over
/// the positive-weight entries. Zero-weight entries are exactly 0.
inline Vector weighted_softmax(const Vector& z, const Vector& w) {
  if (z.size() != w.size()) throw Error(ErrorKind::LengthMismatch, "scores and weights differ in length");
  double zmax = -std::numeric_limits<double>::infinity();
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (w(i) < 0.0) throw Error(ErrorKind::InvalidInput, "negative softmax weight");
    if (w(i) > 0.0) zmax = std::max(zmax, z(i));
  }
  if (zmax == -std::numeric_limits<double>::infinity()) throw Error(ErrorKind::AllZeroWeights, "all weights are zero");
  Vector out = Vector::Zero(z.size());
  double total = 0.0;
  for (Eigen::Index i = 0; i < z.size(); ++i) {
    if (w(i) > 0.0) {
      out(i) = w(i) * std::exp(z(i) - zmax);
      total += out(i);
    }
  }
  return out / total;
}

/// Train-mode switches. Dropout masks come from a counter-based stream keyed by
/// (seed, step, layer, head, row, column), so train-mode passes are reproducible.
struct Mode {
  bool train = false;
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
};

inline constexpr double kLayerNormEpsilon = 1e-5;

namespace detail {

struct LayerNormCache {
  Matrix xhat;
  Vector inv_sigma;
};

inline Matrix layer_norm(const Matrix& x, const Vector& gain, const Vector& bias, LayerNormCache& cache) {
  const Eigen::Index r = x.rows(), d = x.cols();
  cache.xhat.resize(r, d);
  cache.inv_sigma.resize(r);
  Matrix y(r, d);
  for (Eigen::Index i = 0; i < r; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    const double inv = 1.0 / std::sqrt(var + kLayerNormEpsilon);
    cache.inv_sigma(i) = inv;
    cache.xhat.row(i) = (x.row(i).array() - mean) * inv;
    y.row(i) = cache.xhat.row(i).array() * gain.transpose().array() + bias.transpose().array();
  }
  return y;
}

inline Matrix layer_norm_backward(const Matrix& dy, const Vector& gain, const LayerNormCache& cache, Vector& dgain,
                                  Vector& dbias) {
  const Eigen::Index r = dy.rows(), d = dy.cols();
  Matrix dx(r, d);
  for (Eigen::Index i = 0; i < r; ++i) {
    dgain += (dy.row(i).array() * cache.xhat.row(i).array()).matrix().transpose();
    dbias += dy.row(i).transpose();
    const Eigen::RowVectorXd dxhat = dy.row(i).array() * gain.transpose().array();
    const double m1 = dxhat.mean();
    const double m2 = (dxhat.array() * cache.xhat.row(i).array()).mean();
    dx.row(i) = (dxhat.array() - m1 - cache.xhat.row(i).array() * m2) * cache.inv_sigma(i);
  }
  return dx;
}

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x / std::numbers::sqrt2)); }

inline double gelu_grad(double x) {
  const double cdf = 0.5 * (1.0 + std::erf(x / std::numbers::sqrt2));
  const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
  return cdf + x * pdf;
}

inline double keep_scale(const Mode& mode, double p, std::initializer_list<std::uint64_t> key) {
  if (!mode.train || p <= 0.0) return 1.0;
  std::vector<std::uint64_t> full{mode.seed, mode.step};
  full.insert(full.end(), key.begin(), key.end());
  std::uint64_t h = 0x243f6a8885a308d3ULL;
  for (auto k : full) h = splitmix64(h ^ k);
  const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
  return u < p ? 0.0 : 1.0 / (1.0 - p);
}

}  // namespace detail

struct LayerCache {
  Matrix x_in;
  detail::LayerNormCache ln1;
  Matrix y;  // LN1(x_in)
  Matrix q, k, v;
  std::vector<Matrix> attn;  // per head, post-softmax
  std::vector<Matrix> keep;  // per head dropout scale (empty when inactive)
  Matrix h;                  // concatenated head outputs
  detail::LayerNormCache ln2;
  Matrix z;  // SLP input
  Matrix u;  // SLP pre-activation
  Matrix slp_keep;  // dropout scale on SLP output (empty when inactive)
};

/// Everything backward() needs from a forward pass.
struct Tape {
  Input input;
  Mode mode;
  Matrix x0;
  std::vector<LayerCache> layers;
  Matrix x_final;
  Vector pooled;
  double prediction = 0.0;
};

struct Output {
  double prediction = 0.0;
  Vector embedding;  // pooled d-vector
};

/// One pre-LN encoder block: X + SLP(concat_h sigma_w(Q_h K_h^T / sqrt(dh)) V_h),
/// with Q, K, V taken from LayerNorm(X).
inline Matrix encoder_layer(const Matrix& x, const Vector& weights, const LayerParams& lp, const Config& c,
                            const Mode& mode, std::size_t layer_index, LayerCache* cache = nullptr) {
  const Eigen::Index r = x.rows(), d = c.d_model, dh = c.head_dim();
  if (x.cols() != d || weights.size() != r) throw Error(ErrorKind::ShapeMismatch, "encoder input shape mismatch");
  LayerCache local;
  LayerCache& lc = cache ? *cache : local;
  lc.x_in = x;
  lc.y = detail::layer_norm(x, lp.ln1_gain, lp.ln1_bias, lc.ln1);
  lc.q = lc.y * lp.wq;
  lc.k = lc.y * lp.wk;
  lc.v = lc.y * lp.wv;
  if (!lc.q.allFinite() || !lc.k.allFinite() || !lc.v.allFinite()) {
    throw Error(ErrorKind::NonFiniteActivation, "non-finite activation in encoder layer " + std::to_string(layer_index));
  }
  lc.h.resize(r, d);
  lc.attn.assign(static_cast<std::size_t>(c.heads), Matrix());
  lc.keep.assign(static_cast<std::size_t>(c.heads), Matrix());
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool attn_drop = mode.train && c.attention_dropout > 0.0;
  for (int hd = 0; hd < c.heads; ++hd) {
    const Eigen::Index off = hd * dh;
    const Matrix scores = (lc.q.middleCols(off, dh) * lc.k.middleCols(off, dh).transpose()) * scale;
    Matrix a(r, r);
    for (Eigen::Index i = 0; i < r; ++i) a.row(i) = weighted_softmax(scores.row(i).transpose(), weights).transpose();
    Matrix p = a;
    if (attn_drop) {
      Matrix keep(r, r);
      for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < r; ++j)
          keep(i, j) = detail::keep_scale(mode, c.attention_dropout,
                                          {layer_index, static_cast<std::uint64_t>(hd), static_cast<std::uint64_t>(i),
                                           static_cast<std::uint64_t>(j)});
      p = p.cwiseProduct(keep);
      lc.keep[static_cast<std::size_t>(hd)] = std::move(keep);
    }
    lc.h.middleCols(off, dh) = p * lc.v.middleCols(off, dh);
    lc.attn[static_cast<std::size_t>(hd)] = std::move(a);
  }
  lc.z = c.slp_pre_norm ? detail::layer_norm(lc.h, lp.ln2_gain, lp.ln2_bias, lc.ln2) : lc.h;
  lc.u = (lc.z * lp.slp_w).rowwise() + lp.slp_b.transpose();
  Matrix g = lc.u.unaryExpr([](double t) { return detail::gelu(t); });
  lc.slp_keep.resize(0, 0);
  if (mode.train && c.dropout > 0.0) {
    lc.slp_keep.resize(r, d);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < d; ++j)
        lc.slp_keep(i, j) = detail::keep_scale(mode, c.dropout,
                                               {layer_index, 0xd0u, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)});
    g = g.cwiseProduct(lc.slp_keep);
  }
  return x + g;
}

inline Tape forward_tape(const Input& input, const Params& params, const Config& c, const Mode& mode = {}) {
  validate_input(input, c);
  Tape t;
  t.input = input;
  t.mode = mode;
  t.x0 = input.rows * params.w_s;
  if (c.species_dim > 0) t.x0 += input.species * params.w_c;
  Matrix x = t.x0;
  t.layers.resize(params.layers.size());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    x = encoder_layer(x, input.weights, params.layers[l], c, mode, l, &t.layers[l]);
    if (!x.allFinite()) throw Error(ErrorKind::NonFiniteActivation, "non-finite activation in encoder layer " + std::to_string(l));
  }
  t.x_final = x;
  t.pooled = x.transpose() * input.weights;
  t.prediction = t.pooled.dot(params.head_w) + params.head_b(0);
  if (!std::isfinite(t.prediction)) throw Error(ErrorKind::NonFiniteActivation, "non-finite prediction");
  return t;
}

inline Output forward(const Input& input, const Params& params, const Config& c, const Mode& mode = {}) {
  Tape t = forward_tape(input, params, c, mode);
  return {t.prediction, std::move(t.pooled)};
}

/// Reverse-mode gradients of (loss_grad * prediction) with respect to every
/// parameter tensor, accumulated into `grads` (which must have Params::zeros shapes).
inline void backward(const Tape& t, const Params& params, const Config& c, double loss_grad, Params& grads) {
  const Eigen::Index dh = c.head_dim();
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  const Vector& w = t.input.weights;

  grads.head_w += loss_grad * t.pooled;
  grads.head_b(0) += loss_grad;
  const Vector dpooled = loss_grad * params.head_w;
  Matrix dx = w * dpooled.transpose();  // r x d

  for (std::size_t li = params.layers.size(); li-- > 0;) {
    const LayerParams& lp = params.layers[li];
    LayerParams& gp = grads.layers[li];
    const LayerCache& lc = t.layers[li];

    Matrix dg = dx;
    if (lc.slp_keep.size() > 0) dg = dg.cwiseProduct(lc.slp_keep);
    const Matrix du = dg.cwiseProduct(lc.u.unaryExpr([](double v) { return detail::gelu_grad(v); }));
    gp.slp_w += lc.z.transpose() * du;
    gp.slp_b += du.colwise().sum().transpose();
    const Matrix dz = du * lp.slp_w.transpose();
    const Matrix dh_all = c.slp_pre_norm ? detail::layer_norm_backward(dz, lp.ln2_gain, lc.ln2, gp.ln2_gain, gp.ln2_bias) : dz;

    Matrix dq(lc.q.rows(), lc.q.cols()), dk(lc.k.rows(), lc.k.cols()), dv(lc.v.rows(), lc.v.cols());
    for (int hd = 0; hd < c.heads; ++hd) {
      const Eigen::Index off = hd * dh;
      const Matrix& a = lc.attn[static_cast<std::size_t>(hd)];
      const Matrix& keep = lc.keep[static_cast<std::size_t>(hd)];
      const Matrix p = keep.size() > 0 ? Matrix(a.cwiseProduct(keep)) : a;
      const Matrix dhh = dh_all.middleCols(off, dh);
      Matrix dp = dhh * lc.v.middleCols(off, dh).transpose();
      dv.middleCols(off, dh) = p.transpose() * dhh;
      if (keep.size() > 0) dp = dp.cwiseProduct(keep);
      // Softmax backward; the weights act as additive log-offsets to the scores.
      const Vector row_dot = a.cwiseProduct(dp).rowwise().sum();
      const Matrix ds = a.cwiseProduct(dp.colwise() - row_dot) * scale;
      dq.middleCols(off, dh) = ds * lc.k.middleCols(off, dh);
      dk.middleCols(off, dh) = ds.transpose() * lc.q.middleCols(off, dh);
    }
    gp.wq += lc.y.transpose() * dq;
    gp.wk += lc.y.transpose() * dk;
    gp.wv += lc.y.transpose() * dv;
    const Matrix dy = dq * lp.wq.transpose() + dk * lp.wk.transpose() + dv * lp.wv.transpose();
    dx += detail::layer_norm_backward(dy, lp.ln1_gain, lc.ln1, gp.ln1_gain, gp.ln1_bias);
  }

  grads.w_s += t.input.rows.transpose() * dx;
  if (c.species_dim > 0) grads.w_c += t.input.species.transpose() * dx;
}

inline Params backward(const Tape& t, const Params& params, const Config& c, double loss_grad) {
  Params grads = Params::zeros(c);
  backward(t, params, c, loss_grad, grads);
  return grads;
}

}  // namespace pddkit::pst
