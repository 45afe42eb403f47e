#pragma once

// JSON and CSV forms of the library's value types.

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pddkit/error.hpp"
#include "pddkit/geometry.hpp"
#include "pddkit/mds.hpp"
#include "pddkit/metric.hpp"
#include "pddkit/pdd.hpp"
#include "pddkit/train.hpp"

namespace pddkit::io {

using json = nlohmann::json;

/// Shortest decimal that round-trips the double ("%.17g" then trimmed).
inline std::string format_double(double v) {
  char buf[32];
  for (int prec = 15; prec <= 17; ++prec) {
    std::snprintf(buf, sizeof buf, "%.*g", prec, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

inline std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write " + path);
  out << text;
}

// ---- PeriodicSet ----------------------------------------------------------

inline json to_json(const PeriodicSet& s) {
  json basis = json::array();
  for (int i = 0; i < 3; ++i) basis.push_back({s.basis.matrix()(i, 0), s.basis.matrix()(i, 1), s.basis.matrix()(i, 2)});
  json frac = json::array();
  for (const auto& f : s.motif.positions()) frac.push_back({f.x(), f.y(), f.z()});
  return {{"id", s.id}, {"basis", basis}, {"frac_coords", frac}, {"species", s.motif.species()}};
}

inline PeriodicSet periodic_set_from_json(const json& j) {
  try {
    Mat3 rows;
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < 3; ++c) rows(i, c) = j.at("basis").at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<double>();
    std::vector<Vec3> frac;
    for (const auto& f : j.at("frac_coords")) frac.emplace_back(f.at(0).get<double>(), f.at(1).get<double>(), f.at(2).get<double>());
    return {LatticeBasis(rows), Motif(std::move(frac), j.at("species").get<std::vector<int>>()), j.value("id", std::string{})};
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("malformed periodic set JSON: ") + e.what());
  }
}

// ---- Pdd ------------------------------------------------------------------

inline json to_json(const Pdd& p) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < p.rows.rows(); ++i) {
    rows.push_back(std::vector<double>(p.rows.row(i).data(), p.rows.row(i).data() + p.rows.cols()));
  }
  json out = {{"id", p.source_id}, {"k", p.k}, {"tolerance", p.tolerance}, {"weights", p.weights}, {"rows", rows}};
  out["species"] = p.species ? json(*p.species) : json(nullptr);
  return out;
}

inline Pdd pdd_from_json(const json& j) {
  try {
    Pdd p;
    p.source_id = j.value("id", std::string{});
    p.k = j.at("k").get<int>();
    p.tolerance = j.at("tolerance").get<double>();
    p.weights = j.at("weights").get<std::vector<double>>();
    const auto& rows = j.at("rows");
    if (rows.size() != p.weights.size()) throw Error(ErrorKind::InvalidInput, "PDD JSON: rows and weights differ in length");
    p.rows.resize(static_cast<Eigen::Index>(rows.size()), p.k);
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const auto row = rows[i].get<std::vector<double>>();
      if (static_cast<int>(row.size()) != p.k) throw Error(ErrorKind::InvalidInput, "PDD JSON: row length differs from k");
      for (int c = 0; c < p.k; ++c) p.rows(static_cast<Eigen::Index>(i), c) = row[static_cast<std::size_t>(c)];
    }
    if (j.contains("species") && !j["species"].is_null()) p.species = j["species"].get<std::vector<int>>();
    return p;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("malformed PDD JSON: ") + e.what());
  }
}

inline Pdd read_pdd(const std::string& path) {
  try {
    return pdd_from_json(json::parse(read_text(path)));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::InvalidInput, path + ": " + e.what());
  }
}

/// CSV with the weight as the first column, then species (when present), then d_1..d_k.
inline std::string to_csv(const Pdd& p) {
  std::ostringstream out;
  out << "weight";
  if (p.species) out << ",species";
  for (int j = 0; j < p.k; ++j) out << ",d" << j + 1;
  out << '\n';
  for (std::size_t i = 0; i < p.size(); ++i) {
    out << format_double(p.weights[i]);
    if (p.species) out << ',' << (*p.species)[i];
    for (int j = 0; j < p.k; ++j) out << ',' << format_double(p.rows(static_cast<Eigen::Index>(i), j));
    out << '\n';
  }
  return out.str();
}

inline json to_json(const Amd& a) { return {{"k", a.k}, {"values", a.values}}; }

// ---- Transport plan -------------------------------------------------------

inline json to_json(const TransportPlan& plan) {
  json flows = json::array();
  for (const auto& f : plan.flows) flows.push_back({{"source", f.source}, {"target", f.target}, {"mass", f.mass}});
  return {{"cost", plan.cost}, {"flows", flows}};
}

// ---- Distance matrix CSV ---------------------------------------------------

struct LabeledMatrix {
  std::vector<std::string> ids;
  RowMatrix values;
};

/// Header `id,<id_1>,...,<id_n>`, then one row per structure starting with its id.
inline std::string distance_matrix_csv(const std::vector<std::string>& ids, const RowMatrix& d) {
  std::ostringstream out;
  out << "id";
  for (const auto& id : ids) out << ',' << id;
  out << '\n';
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    out << ids[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j < d.cols(); ++j) out << ',' << format_double(d(i, j));
    out << '\n';
  }
  return out.str();
}

namespace detail {
inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    if (!cell.empty() && cell.back() == '\r') cell.pop_back();
    cells.push_back(cell);
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}
}  // namespace detail

inline LabeledMatrix parse_distance_matrix_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::InvalidInput, "distance matrix CSV is empty");
  auto header = detail::split_csv_line(line);
  if (header.empty() || header[0] != "id") throw Error(ErrorKind::InvalidInput, "distance matrix CSV must start with 'id'");
  LabeledMatrix out;
  out.ids.assign(header.begin() + 1, header.end());
  const auto n = static_cast<Eigen::Index>(out.ids.size());
  out.values.resize(n, n);
  Eigen::Index row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r" || line[0] == '#') continue;
    const auto cells = detail::split_csv_line(line);
    if (row >= n || static_cast<Eigen::Index>(cells.size()) != n + 1) {
      throw Error(ErrorKind::InvalidInput, "distance matrix CSV row " + std::to_string(row + 1) + " has wrong shape");
    }
    for (Eigen::Index j = 0; j < n; ++j) {
      try {
        out.values(row, j) = std::stod(cells[static_cast<std::size_t>(j + 1)]);
      } catch (...) {
        throw Error(ErrorKind::InvalidInput, "distance matrix CSV has a non-numeric entry");
      }
    }
    ++row;
  }
  if (row != n) throw Error(ErrorKind::InvalidInput, "distance matrix CSV is not square");
  return out;
}

/// `id,x,y[,z]` rows preceded by a `# stress=<value>` comment line.
inline std::string embedding_csv(const Embedding& e) {
  std::ostringstream out;
  out << "# stress=" << format_double(e.stress) << '\n';
  out << "id,x,y";
  if (e.coords.cols() == 3) out << ",z";
  out << '\n';
  for (Eigen::Index i = 0; i < e.coords.rows(); ++i) {
    out << (e.labels.empty() ? std::to_string(i) : e.labels[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < e.coords.cols(); ++j) out << ',' << format_double(e.coords(i, j));
    out << '\n';
  }
  return out.str();
}

// ---- Model checkpoint -----------------------------------------------------

inline json to_json(const pst::Config& c) {
  return {{"d_model", c.d_model},
          {"heads", c.heads},
          {"encoders", c.encoders},
          {"attention_dropout", c.attention_dropout},
          {"dropout", c.dropout},
          {"k", c.k},
          {"species_dim", c.species_dim},
          {"seed", c.seed},
          {"slp_pre_norm", c.slp_pre_norm}};
}

/// Fields absent from `j` keep the values already in `c`.
inline void merge_config(const json& j, pst::Config& c) {
  c.d_model = j.value("d_model", c.d_model);
  c.heads = j.value("heads", c.heads);
  c.encoders = j.value("encoders", c.encoders);
  c.attention_dropout = j.value("attention_dropout", c.attention_dropout);
  c.dropout = j.value("dropout", c.dropout);
  c.k = j.value("k", c.k);
  c.species_dim = j.value("species_dim", c.species_dim);
  c.seed = j.value("seed", c.seed);
  c.slp_pre_norm = j.value("slp_pre_norm", c.slp_pre_norm);
}

inline json to_json(const pst::TrainOpts& o) {
  return {{"epochs", o.epochs},
          {"batch_size", o.batch_size},
          {"learning_rate", o.learning_rate},
          {"weight_decay", o.weight_decay},
          {"beta1", o.beta1},
          {"beta2", o.beta2},
          {"adam_epsilon", o.adam_epsilon},
          {"cosine_schedule", o.cosine_schedule},
          {"validation_fraction", o.validation_fraction},
          {"shift_targets", o.shift_targets}};
}

inline void merge_train_opts(const json& j, pst::TrainOpts& o) {
  o.epochs = j.value("epochs", o.epochs);
  o.batch_size = j.value("batch_size", o.batch_size);
  o.learning_rate = j.value("learning_rate", o.learning_rate);
  o.weight_decay = j.value("weight_decay", o.weight_decay);
  o.beta1 = j.value("beta1", o.beta1);
  o.beta2 = j.value("beta2", o.beta2);
  o.adam_epsilon = j.value("adam_epsilon", o.adam_epsilon);
  o.cosine_schedule = j.value("cosine_schedule", o.cosine_schedule);
  o.validation_fraction = j.value("validation_fraction", o.validation_fraction);
  o.shift_targets = j.value("shift_targets", o.shift_targets);
}

/// Tensors are stored as {"shape": [rows, cols], "data": [...]} in row-major order.
inline json to_json(const pst::Model& m) {
  json tensors = json::object();
  m.params.for_each([&](const std::string& name, const auto& t) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(t.size()));
    for (Eigen::Index i = 0; i < t.rows(); ++i)
      for (Eigen::Index c = 0; c < t.cols(); ++c) data.push_back(t(i, c));
    tensors[name] = {{"shape", {t.rows(), t.cols()}}, {"data", data}};
  });
  json embedding = "one-hot";
  if (m.embedding.loaded()) {
    embedding = json::object();
    for (const auto& [z, v] : m.embedding.rows()) embedding[std::to_string(z)] = std::vector<double>(v.data(), v.data() + v.size());
  }
  return {{"format", "pddkit-pst-checkpoint"},
          {"version", 1},
          {"config", to_json(m.config)},
          {"tensors", tensors},
          {"column_min", m.stats.min},
          {"column_max", m.stats.max},
          {"target_shift", m.target_shift},
          {"tolerance", m.tolerance},
          {"species_aware", m.species_aware},
          {"embedding", embedding}};
}

inline pst::Model model_from_json(const json& j) {
  try {
    if (j.value("format", std::string{}) != "pddkit-pst-checkpoint") throw Error(ErrorKind::InvalidInput, "not a PST checkpoint");
    pst::Model m;
    merge_config(j.at("config"), m.config);
    m.config.validate();
    m.params = pst::Params::zeros(m.config);
    const auto& tensors = j.at("tensors");
    m.params.for_each([&](const std::string& name, auto& t) {
      const auto& entry = tensors.at(name);
      const auto shape = entry.at("shape").get<std::vector<Eigen::Index>>();
      const auto data = entry.at("data").get<std::vector<double>>();
      if (shape.size() != 2 || shape[0] != t.rows() || shape[1] != t.cols() || static_cast<Eigen::Index>(data.size()) != t.size()) {
        throw Error(ErrorKind::ShapeMismatch, "checkpoint tensor " + name + " has the wrong shape");
      }
      std::size_t n = 0;
      for (Eigen::Index i = 0; i < t.rows(); ++i)
        for (Eigen::Index c = 0; c < t.cols(); ++c) t(i, c) = data[n++];
    });
    m.stats.min = j.at("column_min").get<std::vector<double>>();
    m.stats.max = j.at("column_max").get<std::vector<double>>();
    m.target_shift = j.at("target_shift").get<double>();
    m.tolerance = j.value("tolerance", kDefaultCollapseTolerance);
    m.species_aware = j.value("species_aware", true);
    const auto& emb = j.at("embedding");
    if (emb.is_object()) {
      std::map<int, pst::Vector> rows;
      for (const auto& [key, value] : emb.items()) {
        const auto v = value.get<std::vector<double>>();
        rows[std::stoi(key)] = Eigen::Map<const pst::Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
      }
      m.embedding = pst::EmbeddingTable::from_rows(std::move(rows));
    }
    return m;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::InvalidInput, std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace pddkit::io
