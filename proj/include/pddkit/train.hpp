#pragma once

// Data preparation and the desk-scale trainer for the PST model.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <map>
#include <numbers>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "pddkit/elements.hpp"
#include "pddkit/error.hpp"
#include "pddkit/pdd.hpp"
#include "pddkit/pst.hpp"
#include "pddkit/rng.hpp"

namespace pddkit::pst {

/// Per-element feature vectors: either a loaded table or the 118-wide one-hot fallback.
class EmbeddingTable {
 public:
  static EmbeddingTable one_hot() { return EmbeddingTable(); }

  /// CSV with header `element,dim_0,...,dim_{n-1}`; the element column holds a
  /// symbol or an atomic number.
  static EmbeddingTable from_csv(std::istream& in) {
    EmbeddingTable t;
    t.loaded_ = true;
    std::string line;
    if (!std::getline(in, line)) throw Error(ErrorKind::InvalidInput, "embedding table is empty");
    const auto header = split(line);
    if (header.size() < 2 || header[0] != "element") {
      throw Error(ErrorKind::InvalidInput, "embedding table header must start with 'element'");
    }
    t.dim_ = static_cast<int>(header.size() - 1);
    int lineno = 1;
    while (std::getline(in, line)) {
      ++lineno;
      if (line.empty() || line == "\r") continue;
      const auto cells = split(line);
      if (static_cast<int>(cells.size()) != t.dim_ + 1) {
        throw Error(ErrorKind::InvalidInput, "embedding table line " + std::to_string(lineno) + " has wrong arity");
      }
      int z = 0;
      if (auto byname = atomic_number(cells[0])) {
        z = *byname;
      } else {
        try {
          z = std::stoi(cells[0]);
        } catch (...) {
          throw Error(ErrorKind::UnknownElement, "unknown element '" + cells[0] + "' in embedding table");
        }
      }
      if (!is_valid_atomic_number(z)) throw Error(ErrorKind::UnknownElement, "atomic number out of range in embedding table");
      Vector v(t.dim_);
      for (int j = 0; j < t.dim_; ++j) v(j) = std::stod(cells[static_cast<std::size_t>(j + 1)]);
      t.rows_[z] = std::move(v);
    }
    return t;
  }

  static EmbeddingTable from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
    return from_csv(in);
  }

  static EmbeddingTable from_rows(std::map<int, Vector> rows) {
    EmbeddingTable t;
    t.loaded_ = true;
    t.dim_ = rows.empty() ? 0 : static_cast<int>(rows.begin()->second.size());
    t.rows_ = std::move(rows);
    return t;
  }

  bool loaded() const { return loaded_; }
  int dim() const { return dim_; }
  const std::map<int, Vector>& rows() const { return rows_; }

  Vector lookup(int z) const {
    if (!is_valid_atomic_number(z)) throw Error(ErrorKind::UnknownElement, "atomic number out of range: " + std::to_string(z));
    if (!loaded_) {
      Vector v = Vector::Zero(kMaxAtomicNumber);
      v(z - 1) = 1.0;
      return v;
    }
    auto it = rows_.find(z);
    if (it == rows_.end()) throw Error(ErrorKind::MissingElement, "embedding table has no row for element " + std::to_string(z));
    return it->second;
  }

 private:
  EmbeddingTable() = default;

  static std::vector<std::string> split(const std::string& line) {
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) {
      while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
      while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
      cells.push_back(cell);
    }
    return cells;
  }

  bool loaded_ = false;
  int dim_ = kMaxAtomicNumber;
  std::map<int, Vector> rows_;
};

inline Vector species_embedding(int z, const EmbeddingTable& table) { return table.lookup(z); }

/// Dataset-wide per-column min/max used to map PDD columns into [0,1].
struct ColumnStats {
  std::vector<double> min;
  std::vector<double> max;

  RowMatrix apply(const RowMatrix& rows) const {
    if (static_cast<std::size_t>(rows.cols()) != min.size()) throw Error(ErrorKind::KMismatch, "column count differs from stats");
    RowMatrix out(rows.rows(), rows.cols());
    for (Eigen::Index j = 0; j < rows.cols(); ++j) {
      const double lo = min[static_cast<std::size_t>(j)], span = max[static_cast<std::size_t>(j)] - lo;
      for (Eigen::Index i = 0; i < rows.rows(); ++i) out(i, j) = span > 0.0 ? (rows(i, j) - lo) / span : 0.0;
    }
    return out;
  }
};

inline ColumnStats column_stats(const std::vector<Pdd>& pdds) {
  if (pdds.empty()) throw Error(ErrorKind::EmptyDataset, "no PDDs to normalise");
  const auto k = static_cast<std::size_t>(pdds.front().k);
  ColumnStats s{std::vector<double>(k, std::numeric_limits<double>::infinity()),
                std::vector<double>(k, -std::numeric_limits<double>::infinity())};
  for (const auto& p : pdds) {
    if (static_cast<std::size_t>(p.k) != k) throw Error(ErrorKind::KMismatch, "PDDs differ in k");
    for (Eigen::Index i = 0; i < p.rows.rows(); ++i)
      for (std::size_t j = 0; j < k; ++j) {
        s.min[j] = std::min(s.min[j], p.rows(i, static_cast<Eigen::Index>(j)));
        s.max[j] = std::max(s.max[j], p.rows(i, static_cast<Eigen::Index>(j)));
      }
  }
  return s;
}

struct NormalizedColumns {
  std::vector<RowMatrix> rows;
  ColumnStats stats;
};

inline NormalizedColumns normalize_columns(const std::vector<Pdd>& pdds) {
  NormalizedColumns out;
  out.stats = column_stats(pdds);
  for (const auto& p : pdds) out.rows.push_back(out.stats.apply(p.rows));
  return out;
}

/// Builds the model input for one PDD: normalised rows, weights and species features.
inline Input make_input(const Pdd& p, const ColumnStats& stats, const EmbeddingTable& table, const Config& c) {
  Input in;
  in.rows = stats.apply(p.rows);
  in.weights = Eigen::Map<const Vector>(p.weights.data(), static_cast<Eigen::Index>(p.weights.size()));
  in.species = Matrix::Zero(static_cast<Eigen::Index>(p.size()), c.species_dim);
  if (c.species_dim > 0) {
    if (!p.species) throw Error(ErrorKind::InvalidInput, "composition embedding needs a species-aware PDD");
    if (table.dim() != c.species_dim) {
      throw Error(ErrorKind::ShapeMismatch, "embedding width " + std::to_string(table.dim()) + " differs from species_dim " +
                                                std::to_string(c.species_dim));
    }
    for (std::size_t i = 0; i < p.size(); ++i) in.species.row(static_cast<Eigen::Index>(i)) = table.lookup((*p.species)[i]).transpose();
  }
  return in;
}

struct DatasetRecord {
  std::string id;
  Pdd pdd;
  double target = 0.0;
};

struct TrainOpts {
  int epochs = 250;
  int batch_size = 0;  // 0 = 32 below 5000 samples, 64 otherwise
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  bool cosine_schedule = true;
  double validation_fraction = 0.1;
  bool shift_targets = false;
};

inline int default_batch_size(std::size_t n) { return n < 5000 ? 32 : 64; }

struct EpochStats {
  int epoch = 0;
  double train_mae = 0.0;
  double val_mae = 0.0;
};

/// A trained model plus what is needed to featurise new structures.
struct Model {
  Config config;
  Params params;
  ColumnStats stats;
  double target_shift = 0.0;
  double tolerance = kDefaultCollapseTolerance;
  bool species_aware = true;
  EmbeddingTable embedding = EmbeddingTable::one_hot();

  double predict(const Pdd& p) const {
    return forward(make_input(p, stats, embedding, config), params, config).prediction + target_shift;
  }
};

struct TrainResult {
  Model model;
  std::vector<EpochStats> history;
  std::vector<std::size_t> train_indices;
  std::vector<std::size_t> val_indices;
};

/// FNV-1a over the raw bytes of every parameter, in for_each order.
inline std::uint64_t checksum(const Params& p) {
  std::uint64_t h = 1469598103934665603ULL;
  p.for_each([&](const std::string&, const auto& t) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(t.data());
    for (std::size_t i = 0; i < static_cast<std::size_t>(t.size()) * sizeof(double); ++i) {
      h ^= bytes[i];
      h *= 1099511628211ULL;
    }
  });
  return h;
}

namespace detail {

class AdamW {
 public:
  AdamW(const Config& c, const TrainOpts& o) : opts_(o), m_(Params::zeros(c)), v_(Params::zeros(c)) {}

  void step(Params& params, const Params& grads, double lr) {
    ++t_;
    const double bc1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(t_));
    std::vector<const double*> gs;
    std::vector<Eigen::Index> sizes;
    std::vector<double*> pd, md, vd;
    params.for_each([&](const std::string&, auto& t) { pd.push_back(t.data()); sizes.push_back(t.size()); });
    m_.for_each([&](const std::string&, auto& t) { md.push_back(t.data()); });
    v_.for_each([&](const std::string&, auto& t) { vd.push_back(t.data()); });
    grads.for_each([&](const std::string&, const auto& t) { gs.push_back(t.data()); });
    for (std::size_t n = 0; n < pd.size(); ++n) {
      for (Eigen::Index i = 0; i < sizes[n]; ++i) {
        const double g = gs[n][i];
        md[n][i] = opts_.beta1 * md[n][i] + (1.0 - opts_.beta1) * g;
        vd[n][i] = opts_.beta2 * vd[n][i] + (1.0 - opts_.beta2) * g * g;
        const double mhat = md[n][i] / bc1, vhat = vd[n][i] / bc2;
        pd[n][i] -= lr * (mhat / (std::sqrt(vhat) + opts_.adam_epsilon) + opts_.weight_decay * pd[n][i]);
      }
    }
  }

 private:
  TrainOpts opts_;
  Params m_, v_;
  std::uint64_t t_ = 0;
};

inline void scale_grads(Params& g, double s) {
  g.for_each([&](const std::string&, auto& t) { t *= s; });
}

}  // namespace detail

inline double mean_absolute_error(const Model& model, const std::vector<Input>& inputs, const std::vector<double>& targets,
                                  const std::vector<std::size_t>& indices) {
  if (indices.empty()) return std::numeric_limits<double>::quiet_NaN();
  double total = 0.0;
  for (auto i : indices) {
    total += std::abs(forward(inputs[i], model.params, model.config).prediction + model.target_shift - targets[i]);
  }
  return total / static_cast<double>(indices.size());
}

/// Minimises MAE with AdamW (decoupled weight decay) and a cosine learning-rate
/// decay over the epoch budget. Batches are padded to their largest row count
/// with zero-weight rows. Deterministic in config.seed.
inline TrainResult train(const std::vector<DatasetRecord>& dataset, const Config& config, const TrainOpts& opts,
                         const EmbeddingTable& table = EmbeddingTable::one_hot(), double tolerance = kDefaultCollapseTolerance,
                         bool species_aware = true) {
  if (dataset.empty()) throw Error(ErrorKind::EmptyDataset, "training set is empty");
  config.validate();
  for (const auto& rec : dataset) {
    if (!std::isfinite(rec.target)) throw Error(ErrorKind::InvalidInput, "non-finite target for " + rec.id);
  }
  const std::size_t n = dataset.size();

  TrainResult result;
  Rng split_rng(config.seed ^ 0x73706c6974ULL);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  split_rng.shuffle(order);
  const auto n_val = n > 1 ? static_cast<std::size_t>(std::floor(opts.validation_fraction * static_cast<double>(n))) : 0;
  result.val_indices.assign(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  result.train_indices.assign(order.begin(), order.end() - static_cast<std::ptrdiff_t>(n_val));
  std::sort(result.val_indices.begin(), result.val_indices.end());

  std::vector<Pdd> train_pdds;
  for (auto i : result.train_indices) train_pdds.push_back(dataset[i].pdd);

  Model& model = result.model;
  model.config = config;
  model.stats = column_stats(train_pdds);
  model.tolerance = tolerance;
  model.species_aware = species_aware;
  model.embedding = table;
  model.params = Params::init(config);

  std::vector<Input> inputs;
  std::vector<double> targets;
  for (const auto& rec : dataset) {
    inputs.push_back(make_input(rec.pdd, model.stats, table, config));
    targets.push_back(rec.target);
  }
  if (opts.shift_targets) {
    double s = 0.0;
    for (auto i : result.train_indices) s += targets[i];
    model.target_shift = s / static_cast<double>(result.train_indices.size());
  }

  const std::size_t batch = static_cast<std::size_t>(opts.batch_size > 0 ? opts.batch_size : default_batch_size(n));
  const std::size_t n_train = result.train_indices.size();
  const std::size_t batches_per_epoch = (n_train + batch - 1) / batch;
  const double total_steps = static_cast<double>(std::max(1, opts.epochs)) * static_cast<double>(batches_per_epoch);

  detail::AdamW optimizer(config, opts);
  Rng shuffle_rng(config.seed ^ 0x7368756666ULL);
  std::vector<std::size_t> epoch_order = result.train_indices;
  std::uint64_t step = 0;

  for (int epoch = 0; epoch < opts.epochs; ++epoch) {
    shuffle_rng.shuffle(epoch_order);
    double loss_sum = 0.0;
    for (std::size_t b = 0; b < batches_per_epoch; ++b) {
      const std::size_t lo = b * batch, hi = std::min(n_train, lo + batch);
      Eigen::Index r_max = 0;
      for (std::size_t t = lo; t < hi; ++t) r_max = std::max(r_max, inputs[epoch_order[t]].size());

      Params grads = Params::zeros(config);
      for (std::size_t t = lo; t < hi; ++t) {
        const std::size_t i = epoch_order[t];
        const Input padded = pad_input(inputs[i], r_max);
        const Mode mode{true, config.seed, (step << 16) ^ static_cast<std::uint64_t>(t - lo)};
        Tape tape;
        try {
          tape = forward_tape(padded, model.params, config, mode);
        } catch (const Error& e) {
          if (e.kind() == ErrorKind::NonFiniteActivation) {
            throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + " batch " + std::to_string(b) + ": " + e.what());
          }
          throw;
        }
        const double residual = tape.prediction + model.target_shift - targets[i];
        loss_sum += std::abs(residual);
        const double sign = residual > 0.0 ? 1.0 : (residual < 0.0 ? -1.0 : 0.0);
        backward(tape, model.params, config, sign, grads);
      }
      detail::scale_grads(grads, 1.0 / static_cast<double>(hi - lo));
      const double lr = opts.cosine_schedule
                            ? opts.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / total_steps))
                            : opts.learning_rate;
      optimizer.step(model.params, grads, lr);
      ++step;
    }
    const double train_mae = loss_sum / static_cast<double>(n_train);
    if (!std::isfinite(train_mae)) throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + ": non-finite loss");
    double val_mae = 0.0;
    try {
      val_mae = mean_absolute_error(model, inputs, targets, result.val_indices.empty() ? result.train_indices : result.val_indices);
    } catch (const Error& e) {
      if (e.kind() == ErrorKind::NonFiniteActivation) {
        throw Error(ErrorKind::NonFiniteLoss, "epoch " + std::to_string(epoch) + " validation: " + e.what());
      }
      throw;
    }
    result.history.push_back({epoch + 1, train_mae, val_mae});
  }
  return result;
}

}  // namespace pddkit::pst
