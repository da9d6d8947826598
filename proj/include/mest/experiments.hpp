#pragma once

// Monte Carlo sweeps over (p/n, kappa) counting datasets whose minimizer
// exists, the theoretical threshold curve, and CSV/JSON emission.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mest/empirical.hpp"
#include "mest/errors.hpp"
#include "mest/models.hpp"
#include "mest/quadrature.hpp"
#include "mest/system.hpp"
#include "mest/threshold.hpp"

namespace mest {

/// Short tag for an error cell: the library error name, or "error".
inline std::string error_tag(const std::exception& e) {
  if (dynamic_cast<const Error*>(&e) == nullptr) return "error";
  const std::string_view what = e.what();
  const auto colon = what.find(':');
  return std::string(colon == std::string_view::npos ? what : what.substr(0, colon));
}

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

inline double parse_double(std::string_view s) {
  if (s == "nan") return std::numeric_limits<double>::quiet_NaN();
  if (s == "inf") return std::numeric_limits<double>::infinity();
  if (s == "-inf") return -std::numeric_limits<double>::infinity();
  double v = 0.0;
  const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
  if (r.ec != std::errc() || r.ptr != s.data() + s.size())
    throw ConfigError("not a number: '" + std::string(s) + "'");
  return v;
}

struct SweepConfig {
  ModelSpec model = ModelSpec::poisson(0.0);  ///< family and q; kappa comes from kappa_grid
  Eigen::Index n = 500;
  std::vector<double> pn_grid;
  std::vector<double> kappa_grid;
  int reps = 20;
  int rep_offset = 0;  ///< replications run are rep_offset .. rep_offset + reps - 1
  std::uint64_t base_seed = 1;
  QuadratureSettings grid;
  ExistenceOptions existence;
  unsigned threads = 0;  ///< 0 means hardware concurrency
  std::string output_path;

  Eigen::Index p_for(double pn) const { return static_cast<Eigen::Index>(std::lround(pn * static_cast<double>(n))); }

  void validate() const {
    model.validate();
    if (reps < 1) throw ConfigError("reps must be >= 1");
    if (rep_offset < 0) throw ConfigError("rep_offset must be >= 0");
    if (n < 2) throw ConfigError("n must be >= 2");
    for (double pn : pn_grid) {
      if (!(pn > 0.0 && pn < 1.0)) throw ConfigError("pn values must lie in (0, 1), got " + format_double(pn));
      const Eigen::Index p = p_for(pn);
      if (p < 1 || p >= n)
        throw ConfigError("pn=" + format_double(pn) + " gives p=" + std::to_string(p) +
                          " outside [1, n)");
    }
    for (double k : kappa_grid)
      if (!(k >= 0.0) || !std::isfinite(k)) throw ConfigError("kappa values must be finite and >= 0");
  }
};

struct SweepCell {
  double pn = 0.0;
  double kappa = 0.0;
  int reps = 0;
  int exist_count = 0;
  double delta_inf_inverse = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t cell_seed = 0;
  std::string status = "ok";

  bool ok() const { return status == "ok"; }
  /// NaN for error cells, which stay in the file but out of any rate.
  double exist_rate() const {
    return ok() ? static_cast<double>(exist_count) / reps : std::numeric_limits<double>::quiet_NaN();
  }

  friend bool operator==(const SweepCell& a, const SweepCell& b) {
    auto same = [](double x, double y) { return x == y || (std::isnan(x) && std::isnan(y)); };
    return same(a.pn, b.pn) && same(a.kappa, b.kappa) && a.reps == b.reps &&
           a.exist_count == b.exist_count && same(a.delta_inf_inverse, b.delta_inf_inverse) &&
           a.cell_seed == b.cell_seed && a.status == b.status;
  }
};

/// Seed of cell (kappa index, pn index); replication r uses cell_seed ^ r.
inline std::uint64_t cell_seed(std::uint64_t base_seed, std::size_t kappa_index, std::size_t pn_index) {
  const std::uint64_t key = (static_cast<std::uint64_t>(kappa_index) << 32) | pn_index;
  return splitmix64(base_seed ^ splitmix64(key));
}

inline std::uint64_t replication_seed(std::uint64_t cell, int r) {
  return cell ^ static_cast<std::uint64_t>(r);
}

/// Runs `task(i)` for i in [0, count) on `threads` workers pulling from a shared counter.
template <class Task>
void parallel_for(std::size_t count, unsigned threads, Task&& task) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) task(i);
  };
  if (threads == 1) {
    worker();
    return;
  }
  std::vector<std::jthread> pool;
  pool.reserve(threads);
  for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
}

/// Cells in kappa-major, pn-minor order, independent of thread timing.
inline std::vector<SweepCell> run_phase_grid(const SweepConfig& cfg) {
  cfg.validate();
  const QuadratureGrid grid(cfg.grid);
  const std::size_t nk = cfg.kappa_grid.size(), np = cfg.pn_grid.size();
  const auto reps = static_cast<std::size_t>(cfg.reps);

  std::vector<SweepCell> cells(nk * np);
  std::vector<double> threshold(nk, std::numeric_limits<double>::quiet_NaN());
  std::vector<std::string> threshold_status(nk, "ok");
  // 1 exists, 0 does not, -1 failed; error names kept per replication.
  std::vector<int> outcome(cells.size() * reps, 0);
  std::vector<std::string> failure(cells.size() * reps);

  parallel_for(nk + outcome.size(), cfg.threads, [&](std::size_t task) {
    if (task < nk) {
      ModelSpec m = cfg.model;
      m.kappa = cfg.kappa_grid[task];
      try {
        threshold[task] = solve_threshold(m, grid).phi_star;
      } catch (const std::exception& e) {
        threshold_status[task] = "threshold_" + error_tag(e);
      }
      return;
    }
    const std::size_t job = task - nk, c = job / reps, r = job % reps;
    const std::size_t ik = c / np, ip = c % np;
    ModelSpec m = cfg.model;
    m.kappa = cfg.kappa_grid[ik];
    const int rep = cfg.rep_offset + static_cast<int>(r);
    try {
      const Dataset d = generate_dataset(m, cfg.n, cfg.p_for(cfg.pn_grid[ip]),
                                         replication_seed(cell_seed(cfg.base_seed, ik, ip), rep));
      outcome[job] = mle_exists(d, cfg.existence).exists ? 1 : 0;
    } catch (const std::exception& e) {
      outcome[job] = -1;
      failure[job] = error_tag(e);
    }
  });

  for (std::size_t ik = 0; ik < nk; ++ik) {
    for (std::size_t ip = 0; ip < np; ++ip) {
      const std::size_t c = ik * np + ip;
      SweepCell& cell = cells[c];
      cell.pn = cfg.pn_grid[ip];
      cell.kappa = cfg.kappa_grid[ik];
      cell.reps = cfg.reps;
      cell.cell_seed = cell_seed(cfg.base_seed, ik, ip);
      cell.delta_inf_inverse = threshold[ik];
      for (std::size_t r = 0; r < reps; ++r) {
        const std::size_t job = c * reps + r;
        if (outcome[job] == 1) ++cell.exist_count;
        if (outcome[job] < 0 && cell.ok()) cell.status = failure[job];
      }
      if (cell.ok() && threshold_status[ik] != "ok") cell.status = threshold_status[ik];
    }
  }
  return cells;
}

/// Adds the counts of `extra` (same grid and seeds, disjoint replications) to `base`.
inline std::vector<SweepCell> merge_cells(std::vector<SweepCell> base, const std::vector<SweepCell>& extra) {
  if (base.size() != extra.size()) throw InvalidArgument("cannot merge sweeps of different shape");
  for (std::size_t i = 0; i < base.size(); ++i) {
    SweepCell& b = base[i];
    const SweepCell& e = extra[i];
    if (b.pn != e.pn || b.kappa != e.kappa || b.cell_seed != e.cell_seed)
      throw InvalidArgument("cannot merge sweeps over different cells");
    b.reps += e.reps;
    b.exist_count += e.exist_count;
    if (b.ok() && !e.ok()) b.status = e.status;
  }
  return base;
}

struct ThresholdRow {
  double kappa = 0.0;
  double t_star = std::numeric_limits<double>::quiet_NaN();
  double delta_inf_inverse = std::numeric_limits<double>::quiet_NaN();
  double delta_inf = std::numeric_limits<double>::quiet_NaN();
  /// |E[p*^2] - (1 - 1/delta_inf)|, zero up to quadrature error
  double pstar_gap = std::numeric_limits<double>::quiet_NaN();
  std::string status = "ok";
};

struct ThresholdCurve {
  std::vector<ThresholdRow> rows;
  /// 1/delta_inf is non-increasing along the kappa-sorted ok rows
  bool monotone = true;
};

inline ThresholdCurve run_threshold_curve(const ModelSpec& base, const std::vector<double>& kappa_grid,
                                          const QuadratureGrid& grid, unsigned threads = 1) {
  ThresholdCurve curve;
  curve.rows.resize(kappa_grid.size());
  parallel_for(kappa_grid.size(), threads, [&](std::size_t i) {
    ThresholdRow& row = curve.rows[i];
    row.kappa = kappa_grid[i];
    ModelSpec m = base;
    m.kappa = row.kappa;
    try {
      const ThresholdResult t = solve_threshold(m, grid);
      row.t_star = t.t_star;
      row.delta_inf_inverse = t.phi_star;
      row.delta_inf = t.delta_inf;
      row.pstar_gap = std::abs(t.pstar_norm_sq - (1.0 - t.phi_star));
    } catch (const std::exception& e) {
      row.status = error_tag(e);
    }
  });

  std::vector<const ThresholdRow*> ok;
  for (const auto& r : curve.rows)
    if (r.status == "ok") ok.push_back(&r);
  std::sort(ok.begin(), ok.end(), [](auto* a, auto* b) { return a->kappa < b->kappa; });
  for (std::size_t i = 1; i < ok.size(); ++i)
    if (ok[i]->delta_inf_inverse > ok[i - 1]->delta_inf_inverse + 1e-12) curve.monotone = false;
  return curve;
}

// ---- emission ----

inline constexpr std::string_view kCellHeader =
    "pn,kappa,reps,exist_count,exist_rate,delta_inf_inverse,cell_seed,status";
inline constexpr std::string_view kThresholdHeader = "kappa,t_star,delta_inf_inverse,delta_inf,pstar_gap,status";

inline void write_cells_csv(std::ostream& out, const std::vector<SweepCell>& cells) {
  out << kCellHeader << '\n';
  for (const auto& c : cells)
    out << format_double(c.pn) << ',' << format_double(c.kappa) << ',' << c.reps << ','
        << c.exist_count << ',' << format_double(c.exist_rate()) << ','
        << format_double(c.delta_inf_inverse) << ',' << c.cell_seed << ',' << c.status << '\n';
}

inline nlohmann::json cells_json(const std::vector<SweepCell>& cells) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : cells)
    arr.push_back({{"pn", c.pn},
                   {"kappa", c.kappa},
                   {"reps", c.reps},
                   {"exist_count", c.exist_count},
                   {"exist_rate", num(c.exist_rate())},
                   {"delta_inf_inverse", num(c.delta_inf_inverse)},
                   {"cell_seed", c.cell_seed},
                   {"status", c.status}});
  return arr;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

inline std::vector<SweepCell> read_cells_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCellHeader) throw IoError("cell CSV has an unexpected header");
  std::vector<SweepCell> cells;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 8) throw IoError("cell CSV row has " + std::to_string(f.size()) + " fields");
    SweepCell c;
    try {
      c.pn = parse_double(f[0]);
      c.kappa = parse_double(f[1]);
      c.reps = std::stoi(f[2]);
      c.exist_count = std::stoi(f[3]);
      c.delta_inf_inverse = parse_double(f[5]);
      c.cell_seed = std::stoull(f[6]);
    } catch (const std::logic_error&) {
      throw IoError("cell CSV row is malformed: " + line);
    } catch (const ConfigError&) {
      throw IoError("cell CSV row is malformed: " + line);
    }
    c.status = f[7];
    cells.push_back(c);
  }
  return cells;
}

inline void write_threshold_csv(std::ostream& out, const ThresholdCurve& curve) {
  out << kThresholdHeader << '\n';
  for (const auto& r : curve.rows)
    out << format_double(r.kappa) << ',' << format_double(r.t_star) << ','
        << format_double(r.delta_inf_inverse) << ',' << format_double(r.delta_inf) << ','
        << format_double(r.pstar_gap) << ',' << r.status << '\n';
}

inline nlohmann::json threshold_json(const ThresholdCurve& curve) {
  auto num = [](double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr); };
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : curve.rows)
    rows.push_back({{"kappa", r.kappa},
                    {"t_star", num(r.t_star)},
                    {"delta_inf_inverse", num(r.delta_inf_inverse)},
                    {"delta_inf", num(r.delta_inf)},
                    {"pstar_gap", num(r.pstar_gap)},
                    {"status", r.status}});
  return {{"monotone", curve.monotone}, {"rows", rows}};
}

inline nlohmann::json system_json(const ModelSpec& m, double delta, double delta_inf, const SolveVerdict& v) {
  nlohmann::json j = {{"model", family_name(m.family)},
                      {"q", m.q},
                      {"kappa", m.kappa},
                      {"delta", delta},
                      {"delta_inf", std::isfinite(delta_inf) ? nlohmann::json(delta_inf) : nlohmann::json(nullptr)}};
  if (v.solved()) {
    const SystemSolution& s = v.solution();
    j["verdict"] = "solved";
    j["a"] = s.a;
    j["sigma"] = s.sigma;
    j["gamma"] = s.gamma;
    j["residuals"] = {s.residuals[0], s.residuals[1], s.residuals[2]};
    j["iterations"] = s.iterations;
    j["kkt"] = {{"v_norm_sq", s.kkt.v_norm_sq},
                {"corr_vg", s.kkt.corr_vg},
                {"mu_star", s.kkt.mu_star},
                {"constraint", s.kkt.constraint}};
  } else {
    const NoSolutionDetected& f = v.failure();
    j["verdict"] = "no_solution";
    j["reason"] = to_string(f.reason);
    j["failed_at_delta"] = f.delta;
    j["last_iterate"] = {{"a", f.last_iterate.a}, {"sigma", f.last_iterate.sigma}, {"gamma", f.last_iterate.gamma}};
    j["last_residual"] = f.last_residual;
    nlohmann::json rungs = nlohmann::json::array();
    for (const auto& r : f.trajectory)
      rungs.push_back({{"delta", r.delta},
                       {"max_residual", r.max_residual},
                       {"iterations", r.iterations},
                       {"converged", r.converged}});
    j["trajectory"] = rungs;
  }
  return j;
}

/// Writes `text` to `path`, surfacing failures with the path.
inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out << text;
  if (!out) throw IoError("write failed for " + path);
}

}  // namespace mest
