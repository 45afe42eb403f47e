// pddkit command-line tool: PDD/AMD computation, EMD distances, MDS
// projection, PST training and prediction, benchmarking and corpus generation.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pddkit/pddkit.hpp"

#ifndef PDDKIT_VERSION
#define PDDKIT_VERSION "0.0.0"
#endif

namespace fs = std::filesystem;
using pddkit::io::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInput = 2;
constexpr int kExitNumerical = 3;

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 1469598103934665603ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string file_hash(const fs::path& p) { return hex64(fnv1a(pddkit::io::read_text(p.string()))); }

std::string utc_stamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

/// Output directory, manifest and phase timings for one invocation.
class Run {
 public:
  Run(std::string command, std::vector<std::string> argv) : command_(std::move(command)), argv_(std::move(argv)) {}

  void open(const std::string& out) {
    if (!out.empty()) {
      dir_ = out;
    } else {
      std::string joined;
      for (const auto& a : argv_) joined += a + '\0';
      dir_ = fs::path("runs") / (utc_stamp() + "-" + hex64(fnv1a(joined)).substr(0, 8));
    }
    fs::create_directories(dir_);
  }

  const fs::path& dir() const { return dir_; }
  bool opened() const { return !dir_.empty(); }

  void input(const fs::path& p) {
    inputs_.push_back({{"path", p.string()}, {"fnv1a64", file_hash(p)}});
  }

  fs::path write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    pddkit::io::write_text(p.string(), text);
    outputs_.push_back({{"path", p.string()}, {"fnv1a64", hex64(fnv1a(text))}});
    return p;
  }

  template <typename Fn>
  auto phase(const std::string& name, Fn&& fn) {
    const auto t0 = std::chrono::steady_clock::now();
    struct Stop {
      Run* run;
      std::string name;
      std::chrono::steady_clock::time_point t0;
      ~Stop() { run->timings_[name] += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count(); }
    } stop{this, name, t0};
    return fn();
  }

  json config = json::object();
  std::optional<std::uint64_t> seed;

  void finish(int exit_code, const std::string& message) {
    if (!opened()) return;
    json m = {{"command", command_},
              {"argv", argv_},
              {"tool", "pddkit"},
              {"version", PDDKIT_VERSION},
              {"config", config},
              {"inputs", inputs_},
              {"outputs", outputs_},
              {"timings_s", timings_},
              {"exit_code", exit_code}};
    m["seed"] = seed ? json(*seed) : json(nullptr);
    if (!message.empty()) m["error"] = message;
    pddkit::io::write_text((dir_ / "manifest.json").string(), m.dump(2) + "\n");
  }

 private:
  std::string command_;
  std::vector<std::string> argv_;
  fs::path dir_;
  json inputs_ = json::array();
  json outputs_ = json::array();
  std::map<std::string, double> timings_;
};

/// Files named directly plus matching files inside named directories, sorted.
std::vector<fs::path> collect(const std::vector<std::string>& args, const std::set<std::string>& exts) {
  std::vector<fs::path> out;
  for (const auto& a : args) {
    const fs::path p(a);
    if (fs::is_directory(p)) {
      for (const auto& e : fs::directory_iterator(p)) {
        if (!e.is_regular_file() || !exts.count(e.path().extension().string())) continue;
        // Inside directories only `*.pdd.json` counts as JSON input, so manifests are skipped.
        if (e.path().extension() == ".json" && !e.path().stem().string().ends_with(".pdd")) continue;
        out.push_back(e.path());
      }
    } else if (fs::exists(p)) {
      out.push_back(p);
    } else {
      throw pddkit::Error(pddkit::ErrorKind::Io, "no such file or directory: " + a);
    }
  }
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

/// Structure id for a path: the file name without `.cif` / `.pdd.json` / `.json`.
std::string stem_id(const fs::path& p) {
  std::string name = p.filename().string();
  for (const char* suffix : {".pdd.json", ".json", ".cif"}) {
    const std::string s(suffix);
    if (name.size() > s.size() && name.compare(name.size() - s.size(), s.size(), s) == 0) return name.substr(0, name.size() - s.size());
  }
  return p.stem().string();
}

bool is_pdd_json(const fs::path& p) { return p.extension() == ".json"; }

pddkit::Pdd load_or_compute(const fs::path& p, int k, double tol, bool species_aware) {
  if (is_pdd_json(p)) return pddkit::io::read_pdd(p.string());
  auto set = pddkit::cif::read_periodic_set(p.string());
  auto out = pddkit::pdd(set, k, tol, species_aware);
  out.source_id = stem_id(p);
  return out;
}

std::string describe(const std::exception& e) { return e.what(); }

/// Per-file failures collected for the `.errors` sidecar.
class ErrorLog {
 public:
  void add(const fs::path& p, const std::exception& e) {
    std::lock_guard lock(mu_);
    lines_[p.string()] = describe(e);
  }
  bool empty() const { return lines_.empty(); }
  std::string text() const {
    std::string out;
    for (const auto& [path, msg] : lines_) out += path + ": " + msg + "\n";
    return out;
  }

 private:
  std::mutex mu_;
  std::map<std::string, std::string> lines_;
};

int flush_errors(Run& run, const ErrorLog& log, const std::string& name) {
  if (log.empty()) return kExitOk;
  run.write(name + ".errors", log.text());
  std::cerr << log.text();
  return kExitInput;
}

// ---------------------------------------------------------------------------

struct PddArgs {
  std::vector<std::string> inputs;
  int k = pddkit::kDefaultK;
  double tol = pddkit::kDefaultCollapseTolerance;
  bool species_aware = true;
  std::string format = "json";
};

int cmd_pdd(Run& run, const PddArgs& a) {
  run.config = {{"k", a.k}, {"tolerance", a.tol}, {"species_aware", a.species_aware}, {"format", a.format}};
  const auto files = collect(a.inputs, {".cif"});
  for (const auto& f : files) run.input(f);
  std::vector<std::optional<pddkit::Pdd>> results(files.size());
  ErrorLog errors;
  run.phase("pdd", [&] {
    pddkit::parallel_for(files.size(), [&](std::size_t i) {
      try {
        results[i] = load_or_compute(files[i], a.k, a.tol, a.species_aware);
      } catch (const std::exception& e) {
        errors.add(files[i], e);
      }
    });
    return 0;
  });
  run.phase("write", [&] {
    for (std::size_t i = 0; i < files.size(); ++i) {
      if (!results[i]) continue;
      const std::string id = stem_id(files[i]);
      if (a.format == "csv") {
        run.write(id + ".pdd.csv", pddkit::io::to_csv(*results[i]));
      } else {
        run.write(id + ".pdd.json", pddkit::io::to_json(*results[i]).dump() + "\n");
      }
    }
    return 0;
  });
  return flush_errors(run, errors, "pdd");
}

int cmd_amd(Run& run, const PddArgs& a) {
  run.config = {{"k", a.k}, {"tolerance", a.tol}, {"species_aware", a.species_aware}};
  const auto files = collect(a.inputs, {".cif", ".json"});
  for (const auto& f : files) run.input(f);
  std::vector<std::optional<pddkit::Amd>> results(files.size());
  ErrorLog errors;
  run.phase("amd", [&] {
    pddkit::parallel_for(files.size(), [&](std::size_t i) {
      try {
        results[i] = pddkit::amd(load_or_compute(files[i], a.k, a.tol, a.species_aware));
      } catch (const std::exception& e) {
        errors.add(files[i], e);
      }
    });
    return 0;
  });
  std::ostringstream csv;
  int k = 0;
  for (const auto& r : results)
    if (r) k = std::max(k, r->k);
  csv << "id";
  for (int j = 0; j < k; ++j) csv << ",a" << j + 1;
  csv << '\n';
  for (std::size_t i = 0; i < files.size(); ++i) {
    if (!results[i]) continue;
    csv << stem_id(files[i]);
    for (double v : results[i]->values) csv << ',' << pddkit::io::format_double(v);
    csv << '\n';
  }
  run.write("amd.csv", csv.str());
  return flush_errors(run, errors, "amd");
}

struct DistArgs {
  std::vector<std::string> inputs;
  std::string matrix;
  bool emit_plan = false;
  std::string metric = "linf";
  int k = pddkit::kDefaultK;
  double tol = pddkit::kDefaultCollapseTolerance;
};

pddkit::GroundMetric parse_metric(const std::string& s) {
  if (s == "linf") return pddkit::GroundMetric::Chebyshev;
  if (s == "l1") return pddkit::GroundMetric::Manhattan;
  if (s == "l2") return pddkit::GroundMetric::Euclidean;
  throw pddkit::Error(pddkit::ErrorKind::InvalidInput, "unknown metric " + s);
}

int cmd_dist(Run& run, const DistArgs& a) {
  run.config = {{"metric", a.metric}, {"k", a.k}, {"tolerance", a.tol}, {"emit_plan", a.emit_plan}};
  const auto metric = parse_metric(a.metric);
  if (!a.matrix.empty()) {
    const auto files = collect({a.matrix}, {".json", ".cif"});
    for (const auto& f : files) run.input(f);
    std::vector<pddkit::Pdd> pdds(files.size());
    run.phase("load", [&] {
      pddkit::parallel_for(files.size(), [&](std::size_t i) { pdds[i] = load_or_compute(files[i], a.k, a.tol, true); });
      return 0;
    });
    const auto d = run.phase("emd", [&] { return pddkit::distance_matrix(pdds, metric); });
    std::vector<std::string> ids;
    for (const auto& f : files) ids.push_back(stem_id(f));
    run.write("distances.csv", pddkit::io::distance_matrix_csv(ids, d));
    return kExitOk;
  }
  if (a.inputs.size() != 2) throw pddkit::Error(pddkit::ErrorKind::InvalidInput, "dist needs exactly two PDD files or --matrix DIR");
  std::vector<pddkit::Pdd> pair;
  for (const auto& s : a.inputs) {
    run.input(s);
    pair.push_back(load_or_compute(s, a.k, a.tol, true));
  }
  const auto r = run.phase("emd", [&] { return pddkit::emd(pair[0], pair[1], metric); });
  json out = {{"a", a.inputs[0]}, {"b", a.inputs[1]}, {"metric", a.metric}, {"cost", r.cost}};
  if (a.emit_plan) out["plan"] = pddkit::io::to_json(r.plan);
  run.write("dist.json", out.dump(2) + "\n");
  std::cout << pddkit::io::format_double(r.cost) << '\n';
  if (a.emit_plan) std::cout << pddkit::io::to_json(r.plan).dump() << '\n';
  return kExitOk;
}

int cmd_mds(Run& run, const std::string& input, int dims) {
  run.config = {{"dims", dims}};
  run.input(input);
  const auto m = pddkit::io::parse_distance_matrix_csv(pddkit::io::read_text(input));
  const auto e = run.phase("mds", [&] { return pddkit::classical_mds(m.values, dims, m.ids); });
  run.write("embedding.csv", pddkit::io::embedding_csv(e));
  std::cout << "stress=" << pddkit::io::format_double(e.stress) << '\n';
  return kExitOk;
}

struct TrainArgs {
  std::vector<std::string> data;
  std::string targets;
  std::string config;
  std::string embedding;
  // Flag values; applied only when given on the command line.
  int epochs = 0, batch_size = 0, d_model = 0, heads = 0, encoders = 0, k = 0;
  double lr = 0, weight_decay = 0, val_fraction = 0, tol = 0, attention_dropout = 0;
  std::uint64_t seed = 0;
  bool shift_targets = false;
  bool no_species_aware = false;
};

std::map<std::string, double> read_targets(const std::string& path) {
  std::map<std::string, double> out;
  std::istringstream in(pddkit::io::read_text(path));
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const auto cells = pddkit::io::detail::split_csv_line(line);
    if (cells.size() != 2) throw pddkit::Error(pddkit::ErrorKind::InvalidInput, path + ":" + std::to_string(lineno) + ": expected id,value");
    if (lineno == 1 && cells[0] == "id") continue;
    try {
      std::size_t used = 0;
      const double v = std::stod(cells[1], &used);
      if (used != cells[1].size()) throw std::invalid_argument("trailing characters");
      out[cells[0]] = v;
    } catch (const std::exception&) {
      throw pddkit::Error(pddkit::ErrorKind::InvalidInput, path + ":" + std::to_string(lineno) + ": bad value '" + cells[1] + "'");
    }
  }
  return out;
}

int cmd_train(Run& run, const TrainArgs& a, const CLI::App& sub) {
  pddkit::pst::Config config;
  pddkit::pst::TrainOpts opts;
  double tol = pddkit::kDefaultCollapseTolerance;
  std::optional<bool> species_aware;
  if (!a.config.empty()) {
    run.input(a.config);
    json j;
    try {
      j = json::parse(pddkit::io::read_text(a.config));
    } catch (const json::parse_error& e) {
      throw pddkit::Error(pddkit::ErrorKind::InvalidInput, a.config + ": " + e.what());
    }
    const json model = j.contains("model") ? j["model"] : j;
    const json train = j.contains("train") ? j["train"] : j;
    pddkit::io::merge_config(model, config);
    pddkit::io::merge_train_opts(train, opts);
    tol = j.value("tolerance", tol);
    if (j.contains("species_aware")) species_aware = j["species_aware"].get<bool>();
  }
  auto given = [&](const char* name) { return sub.count(name) > 0; };
  if (given("--epochs")) opts.epochs = a.epochs;
  if (given("--batch-size")) opts.batch_size = a.batch_size;
  if (given("--lr")) opts.learning_rate = a.lr;
  if (given("--weight-decay")) opts.weight_decay = a.weight_decay;
  if (given("--val-fraction")) opts.validation_fraction = a.val_fraction;
  if (given("--shift-targets")) opts.shift_targets = true;
  if (given("--d-model")) config.d_model = a.d_model;
  if (given("--heads")) config.heads = a.heads;
  if (given("--encoders")) config.encoders = a.encoders;
  if (given("--k")) config.k = a.k;
  if (given("--attention-dropout")) config.attention_dropout = a.attention_dropout;
  if (given("--seed")) config.seed = a.seed;
  if (given("--tol")) tol = a.tol;

  auto table = pddkit::pst::EmbeddingTable::one_hot();
  if (!a.embedding.empty()) {
    run.input(a.embedding);
    table = pddkit::pst::EmbeddingTable::from_file(a.embedding);
    config.species_dim = table.dim();
  }
  if (a.no_species_aware) species_aware = false;
  const bool aware = species_aware.value_or(config.species_dim > 0);
  config.validate();
  run.seed = config.seed;
  run.config = {{"model", pddkit::io::to_json(config)}, {"train", pddkit::io::to_json(opts)}, {"tolerance", tol}, {"species_aware", aware}};

  const auto files = collect(a.data, {".cif"});
  for (const auto& f : files) run.input(f);
  run.input(a.targets);
  const auto targets = read_targets(a.targets);
  std::vector<std::string> missing;
  for (const auto& f : files)
    if (!targets.count(stem_id(f))) missing.push_back(stem_id(f));
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    throw pddkit::Error(pddkit::ErrorKind::InvalidInput, "missing target ids: " + list);
  }

  std::vector<pddkit::pst::DatasetRecord> dataset(files.size());
  run.phase("pdd", [&] {
    pddkit::parallel_for(files.size(), [&](std::size_t i) {
      const std::string id = stem_id(files[i]);
      dataset[i] = {id, load_or_compute(files[i], config.k, tol, aware), targets.at(id)};
    });
    return 0;
  });
  const auto result = run.phase("train", [&] { return pddkit::pst::train(dataset, config, opts, table, tol, aware); });

  std::ostringstream hist;
  hist << "epoch,train_mae,val_mae\n";
  for (const auto& h : result.history) {
    hist << h.epoch << ',' << pddkit::io::format_double(h.train_mae) << ',' << pddkit::io::format_double(h.val_mae) << '\n';
  }
  run.write("history.csv", hist.str());
  run.write("model.json", pddkit::io::to_json(result.model).dump() + "\n");
  if (!result.history.empty()) {
    std::cout << "final train_mae=" << pddkit::io::format_double(result.history.back().train_mae)
              << " val_mae=" << pddkit::io::format_double(result.history.back().val_mae) << '\n';
  }
  return kExitOk;
}

int cmd_predict(Run& run, const std::string& model_path, const std::vector<std::string>& inputs) {
  run.input(model_path);
  pddkit::pst::Model model;
  try {
    model = pddkit::io::model_from_json(json::parse(pddkit::io::read_text(model_path)));
  } catch (const json::parse_error& e) {
    throw pddkit::Error(pddkit::ErrorKind::InvalidInput, model_path + ": " + e.what());
  }
  run.seed = model.config.seed;
  run.config = {{"model", pddkit::io::to_json(model.config)}, {"tolerance", model.tolerance}, {"species_aware", model.species_aware}};
  const auto files = collect(inputs, {".cif"});
  for (const auto& f : files) run.input(f);
  std::vector<std::optional<double>> preds(files.size());
  ErrorLog errors;
  bool numerical = false;
  run.phase("predict", [&] {
    pddkit::parallel_for(files.size(), [&](std::size_t i) {
      try {
        preds[i] = model.predict(load_or_compute(files[i], model.config.k, model.tolerance, model.species_aware));
      } catch (const pddkit::Error& e) {
        if (e.is_numerical()) numerical = true;
        errors.add(files[i], e);
      } catch (const std::exception& e) {
        errors.add(files[i], e);
      }
    });
    return 0;
  });
  std::ostringstream csv;
  csv << "id,prediction\n";
  for (std::size_t i = 0; i < files.size(); ++i)
    if (preds[i]) csv << stem_id(files[i]) << ',' << pddkit::io::format_double(*preds[i]) << '\n';
  run.write("predictions.csv", csv.str());
  const int code = flush_errors(run, errors, "predict");
  return numerical ? kExitNumerical : code;
}

struct BenchArgs {
  std::vector<int> sizes{2, 4, 8, 16};
  int k = pddkit::kDefaultK;
  int repeats = 5;
  std::uint64_t seed = 0;
};

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

double rel_spread(const std::vector<double>& v) {
  double mean = 0.0, sq = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  for (double x : v) sq += (x - mean) * (x - mean);
  return mean > 0.0 ? std::sqrt(sq / static_cast<double>(v.size())) / mean : 0.0;
}

// Least-squares slope of log(t) against log(m).
double fit_exponent(const std::vector<int>& m, const std::vector<double>& t) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  const double n = static_cast<double>(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) {
    const double x = std::log(static_cast<double>(m[i])), y = std::log(std::max(t[i], 1e-12));
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double den = n * sxx - sx * sx;
  return den > 0.0 ? (n * sxy - sx * sy) / den : 0.0;
}

int cmd_bench(Run& run, const BenchArgs& a) {
  run.seed = a.seed;
  run.config = {{"sizes", a.sizes}, {"k", a.k}, {"repeats", a.repeats}};
  if (a.sizes.empty() || a.repeats < 1) throw pddkit::Error(pddkit::ErrorKind::InvalidInput, "need at least one size and one repeat");
  using clock = std::chrono::steady_clock;
  std::ostringstream csv;
  csv << "m,k,median_pdd_s,median_emd_s,pdd_rel_spread,emd_rel_spread\n";
  std::vector<double> pdd_medians, emd_medians;
  for (int m : a.sizes) {
    if (m < 1) throw pddkit::Error(pddkit::ErrorKind::InvalidInput, "sizes must be positive");
    std::vector<double> tp, te;
    for (int r = 0; r < a.repeats; ++r) {
      const std::uint64_t s = pddkit::splitmix64(a.seed + static_cast<std::uint64_t>(m) * 1000 + static_cast<std::uint64_t>(r));
      const auto x = pddkit::random_periodic_set(s, static_cast<std::size_t>(m), 0.3);
      const auto y = pddkit::random_periodic_set(s ^ 1, static_cast<std::size_t>(m), 0.3);
      auto t0 = clock::now();
      const auto px = pddkit::pdd(x, a.k, 0.0);
      tp.push_back(std::chrono::duration<double>(clock::now() - t0).count());
      const auto py = pddkit::pdd(y, a.k, 0.0);
      t0 = clock::now();
      (void)pddkit::emd(px, py);
      te.push_back(std::chrono::duration<double>(clock::now() - t0).count());
    }
    pdd_medians.push_back(median(tp));
    emd_medians.push_back(median(te));
    csv << m << ',' << a.k << ',' << pddkit::io::format_double(pdd_medians.back()) << ','
        << pddkit::io::format_double(emd_medians.back()) << ',' << pddkit::io::format_double(rel_spread(tp)) << ','
        << pddkit::io::format_double(rel_spread(te)) << '\n';
  }
  run.write("bench.csv", csv.str());
  const double ep = fit_exponent(a.sizes, pdd_medians), ee = fit_exponent(a.sizes, emd_medians);
  run.write("bench_fit.json", json{{"pdd_exponent", ep}, {"emd_exponent", ee}}.dump(2) + "\n");
  std::cout << csv.str() << "pdd_exponent=" << pddkit::io::format_double(ep) << " emd_exponent=" << pddkit::io::format_double(ee)
            << '\n';
  return kExitOk;
}

struct GenArgs {
  int count = 10;
  int min_atoms = 1;
  int max_atoms = 8;
  double distortion = 0.3;
  std::uint64_t seed = 0;
};

int cmd_gen(Run& run, const GenArgs& a) {
  run.seed = a.seed;
  run.config = {{"count", a.count}, {"min_atoms", a.min_atoms}, {"max_atoms", a.max_atoms}, {"distortion", a.distortion}};
  if (a.count < 0 || a.min_atoms < 1 || a.max_atoms < a.min_atoms) {
    throw pddkit::Error(pddkit::ErrorKind::InvalidInput, "need count >= 0 and 1 <= min-atoms <= max-atoms");
  }
  pddkit::Rng rng(a.seed);
  run.phase("gen", [&] {
    for (int i = 0; i < a.count; ++i) {
      const auto m = static_cast<std::size_t>(a.min_atoms) + rng.index(static_cast<std::uint64_t>(a.max_atoms - a.min_atoms + 1));
      auto s = pddkit::random_periodic_set(rng.next_u64(), m, a.distortion);
      char name[32];
      std::snprintf(name, sizeof name, "gen_%04d", i);
      s.id = name;
      run.write(std::string(name) + ".cif", pddkit::cif::write_cif(s));
    }
    return 0;
  });
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"pddkit: pointwise distance distributions, EMD and the periodic set transformer"};
  app.set_version_flag("--version", PDDKIT_VERSION);
  app.require_subcommand(1);
  std::string out;

  PddArgs pdd_args;
  auto* pdd = app.add_subcommand("pdd", "compute PDDs of CIF files");
  pdd->add_option("inputs", pdd_args.inputs, "CIF files or directories")->required();
  pdd->add_option("--k", pdd_args.k, "neighbour count")->check(CLI::PositiveNumber);
  pdd->add_option("--tol", pdd_args.tol, "collapse tolerance")->check(CLI::NonNegativeNumber);
  pdd->add_flag("--species-aware,!--no-species-aware", pdd_args.species_aware, "keep rows of different elements apart");
  pdd->add_option("--format", pdd_args.format, "json or csv")->check(CLI::IsMember({"json", "csv"}));
  pdd->add_option("--out", out, "output directory");

  PddArgs amd_args;
  auto* amd = app.add_subcommand("amd", "compute AMDs of CIF or PDD files");
  amd->add_option("inputs", amd_args.inputs, "CIF / PDD JSON files or directories")->required();
  amd->add_option("--k", amd_args.k, "neighbour count")->check(CLI::PositiveNumber);
  amd->add_option("--tol", amd_args.tol, "collapse tolerance")->check(CLI::NonNegativeNumber);
  amd->add_option("--out", out, "output directory");

  DistArgs dist_args;
  auto* dist = app.add_subcommand("dist", "EMD between two PDDs, or a distance matrix");
  dist->add_option("inputs", dist_args.inputs, "two PDD JSON (or CIF) files");
  dist->add_option("--matrix", dist_args.matrix, "directory of PDD JSON (or CIF) files");
  dist->add_flag("--emit-plan", dist_args.emit_plan, "also output the transport plan");
  dist->add_option("--metric", dist_args.metric, "ground metric: linf, l1 or l2")->check(CLI::IsMember({"linf", "l1", "l2"}));
  dist->add_option("--k", dist_args.k, "neighbour count for CIF inputs")->check(CLI::PositiveNumber);
  dist->add_option("--tol", dist_args.tol, "collapse tolerance for CIF inputs")->check(CLI::NonNegativeNumber);
  dist->add_option("--out", out, "output directory");

  std::string mds_input;
  int mds_dims = 2;
  auto* mds = app.add_subcommand("mds", "classical MDS of a distance-matrix CSV");
  mds->add_option("input", mds_input, "distance matrix CSV")->required();
  mds->add_option("--dims", mds_dims, "2 or 3")->check(CLI::IsMember({2, 3}));
  mds->add_option("--out", out, "output directory");

  TrainArgs train_args;
  auto* train = app.add_subcommand("train", "train a PST regressor");
  train->add_option("--data", train_args.data, "CIF files or directories")->required();
  train->add_option("--targets", train_args.targets, "CSV of id,value")->required();
  train->add_option("--config", train_args.config, "JSON config (model/train sections or flat)");
  train->add_option("--embedding", train_args.embedding, "element embedding CSV");
  train->add_option("--epochs", train_args.epochs)->check(CLI::NonNegativeNumber);
  train->add_option("--batch-size", train_args.batch_size)->check(CLI::NonNegativeNumber);
  train->add_option("--lr", train_args.lr)->check(CLI::PositiveNumber);
  train->add_option("--weight-decay", train_args.weight_decay)->check(CLI::NonNegativeNumber);
  train->add_option("--val-fraction", train_args.val_fraction)->check(CLI::Range(0.0, 0.9));
  train->add_option("--d-model", train_args.d_model)->check(CLI::PositiveNumber);
  train->add_option("--heads", train_args.heads)->check(CLI::PositiveNumber);
  train->add_option("--encoders", train_args.encoders)->check(CLI::NonNegativeNumber);
  train->add_option("--k", train_args.k)->check(CLI::PositiveNumber);
  train->add_option("--attention-dropout", train_args.attention_dropout);
  train->add_option("--tol", train_args.tol)->check(CLI::NonNegativeNumber);
  train->add_option("--seed", train_args.seed);
  train->add_flag("--shift-targets", train_args.shift_targets, "subtract the mean training target");
  train->add_flag("--no-species-aware", train_args.no_species_aware, "collapse rows regardless of element");
  train->add_option("--out", out, "output directory");

  std::string model_path;
  std::vector<std::string> predict_inputs;
  auto* predict = app.add_subcommand("predict", "predict with a trained checkpoint");
  predict->add_option("--model", model_path, "checkpoint JSON")->required();
  predict->add_option("inputs", predict_inputs, "CIF files or directories")->required();
  predict->add_option("--out", out, "output directory");

  BenchArgs bench_args;
  auto* bench = app.add_subcommand("bench", "PDD and EMD timing against motif size");
  bench->add_option("--sizes", bench_args.sizes, "motif sizes")->delimiter(',');
  bench->add_option("--k", bench_args.k)->check(CLI::PositiveNumber);
  bench->add_option("--repeats", bench_args.repeats)->check(CLI::PositiveNumber);
  bench->add_option("--seed", bench_args.seed);
  bench->add_option("--out", out, "output directory");

  GenArgs gen_args;
  auto* gen = app.add_subcommand("gen", "write a random corpus of CIF files");
  gen->add_option("--count", gen_args.count);
  gen->add_option("--min-atoms", gen_args.min_atoms);
  gen->add_option("--max-atoms", gen_args.max_atoms);
  gen->add_option("--distortion", gen_args.distortion)->check(CLI::Range(0.0, 1.0));
  gen->add_option("--seed", gen_args.seed);
  gen->add_option("--out", out, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInput;
  }

  const CLI::App* sub = app.get_subcommands().front();
  Run run(sub->get_name(), std::vector<std::string>(argv, argv + argc));
  int code = kExitOk;
  std::string message;
  try {
    run.open(out);
    if (sub == pdd) code = cmd_pdd(run, pdd_args);
    else if (sub == amd) code = cmd_amd(run, amd_args);
    else if (sub == dist) code = cmd_dist(run, dist_args);
    else if (sub == mds) code = cmd_mds(run, mds_input, mds_dims);
    else if (sub == train) code = cmd_train(run, train_args, *train);
    else if (sub == predict) code = cmd_predict(run, model_path, predict_inputs);
    else if (sub == bench) code = cmd_bench(run, bench_args);
    else if (sub == gen) code = cmd_gen(run, gen_args);
  } catch (const pddkit::Error& e) {
    message = describe(e);
    std::cerr << "error: " << message << '\n';
    code = e.is_numerical() ? kExitNumerical : kExitInput;
  } catch (const fs::filesystem_error& e) {
    message = e.what();
    std::cerr << "error: " << message << '\n';
    code = kExitInput;
  } catch (const std::exception& e) {
    message = std::string("internal error: ") + e.what();
    std::cerr << "error: " << message << '\n';
    code = 1;
  }
  try {
    run.finish(code, message);
  } catch (const std::exception& e) {
    std::cerr << "error: cannot write manifest: " << e.what() << '\n';
    if (code == kExitOk) code = kExitInput;
  }
  if (code == kExitOk && run.opened()) std::cerr << "output: " << run.dir().string() << '\n';
  return code;
}
