#pragma once

// Command-line front end: threshold, system, phase and selftest.

#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "acceptance/criteria.hpp"
#include "mest/experiments.hpp"

namespace mest::cli {

enum ExitCode { kOk = 0, kChecksFailed = 1, kUsage = 2, kRuntime = 3 };

struct Settings {
  std::string model = "poisson";
  int q = 1;
  double kappa = 0.0;
  std::vector<double> kappa_grid;
  long n = 500;
  std::vector<double> pn_grid;
  int reps = 20;
  int rep_offset = 0;
  std::uint64_t seed = 1;
  int nodes = 101;
  unsigned threads = 0;
  double delta = 0.0;
  double delta_ratio = 0.0;
  std::string out;
  std::string format = "csv";
};

inline std::vector<double> default_pn_grid() {
  std::vector<double> g;
  for (int i = 0; i < 12; ++i) g.push_back(0.05 + 0.08 * i);
  return g;
}

class Cli {
 public:
  Cli() : app_("Existence thresholds and asymptotics of M-estimators in Gaussian single-index models") {
    app_.set_config("--config", "", "flat key = value file; command-line flags override it");
    app_.fallthrough();
    app_.require_subcommand(1);
    app_.add_option("--model", s_.model, "loss family")
        ->check(CLI::IsMember({"logistic", "binomial", "poisson"}))
        ->capture_default_str();
    app_.add_option("--q", s_.q, "binomial trials")->check(CLI::PositiveNumber)->capture_default_str();
    app_.add_option("--kappa", s_.kappa, "signal strength")->capture_default_str();
    app_.add_option("--kappa-grid", s_.kappa_grid, "comma-separated kappa values")->delimiter(',');
    app_.add_option("--n", s_.n, "sample size per dataset")->capture_default_str();
    app_.add_option("--pn-grid", s_.pn_grid, "comma-separated p/n values")->delimiter(',');
    app_.add_option("--reps", s_.reps, "datasets per cell")->capture_default_str();
    app_.add_option("--rep-offset", s_.rep_offset, "index of the first replication")->capture_default_str();
    app_.add_option("--seed", s_.seed, "base seed")->capture_default_str();
    app_.add_option("--nodes", s_.nodes, "Gauss-Hermite nodes per dimension")->capture_default_str();
    app_.add_option("--threads", s_.threads, "worker threads, 0 for all cores")->capture_default_str();
    app_.add_option("--delta", s_.delta, "n/p for the system command");
    app_.add_option("--delta-ratio", s_.delta_ratio, "n/p as a multiple of delta_inf");
    app_.add_option("--out", s_.out, "output file (default stdout)");
    app_.add_option("--format", s_.format, "output format")
        ->check(CLI::IsMember({"csv", "json"}))
        ->capture_default_str();

    threshold_ = app_.add_subcommand("threshold", "threshold curve 1/delta_inf over the kappa grid");
    system_ = app_.add_subcommand("system", "solve the (a, sigma, gamma) system at one delta (JSON)");
    phase_ = app_.add_subcommand("phase", "Monte Carlo existence counts over (p/n, kappa)");
    selftest_ = app_.add_subcommand("selftest", "run the acceptance checks");
    for (auto* sub : {threshold_, system_, phase_, selftest_}) sub->fallthrough();
  }

  const Settings& settings() const { return s_; }
  CLI::App& app() { return app_; }

  int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    try {
      app_.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
      return app_.exit(e, out, err) == 0 ? kOk : kUsage;
    }
    try {
      if (threshold_->parsed()) return run_threshold(out);
      if (system_->parsed()) return run_system(out);
      if (phase_->parsed()) return run_phase(out);
      return run_selftest(out);
    } catch (const ConfigError& e) {
      err << e.what() << '\n';
      return kUsage;
    } catch (const InvalidArgument& e) {
      err << e.what() << '\n';
      return kUsage;
    } catch (const std::exception& e) {
      err << e.what() << '\n';
      return kRuntime;
    }
  }

 private:
  ModelSpec model(double kappa) const {
    const Family f = parse_family(s_.model);
    ModelSpec m{f, f == Family::Binomial ? s_.q : 1, kappa};
    m.validate();
    return m;
  }

  std::vector<double> kappas() const { return s_.kappa_grid.empty() ? std::vector<double>{s_.kappa} : s_.kappa_grid; }

  QuadratureGrid grid() const { return QuadratureGrid(s_.nodes); }

  void emit(std::ostream& out, const std::string& text) const {
    if (s_.out.empty())
      out << text;
    else
      write_text_file(s_.out, text);
  }

  int run_threshold(std::ostream& out) {
    const ThresholdCurve curve = run_threshold_curve(model(0.0), kappas(), grid(), s_.threads);
    std::ostringstream os;
    if (s_.format == "json")
      os << threshold_json(curve).dump(2) << '\n';
    else
      write_threshold_csv(os, curve);
    emit(out, os.str());
    return kOk;
  }

  int run_system(std::ostream& out) {
    const ModelSpec m = model(s_.kappa);
    const QuadratureGrid g = grid();
    if (!(s_.delta > 0.0) && !(s_.delta_ratio > 0.0)) throw ConfigError("system needs --delta or --delta-ratio");
    const double delta_inf = solve_threshold(m, g).delta_inf;
    const double delta = s_.delta_ratio > 0.0 ? s_.delta_ratio * delta_inf : s_.delta;
    const SolveVerdict v = solve_system(m, delta, g);
    emit(out, system_json(m, delta, delta_inf, v).dump(2) + "\n");
    return kOk;
  }

  int run_phase(std::ostream& out) {
    SweepConfig cfg;
    cfg.model = model(0.0);
    cfg.n = s_.n;
    cfg.pn_grid = s_.pn_grid.empty() ? default_pn_grid() : s_.pn_grid;
    cfg.kappa_grid = kappas();
    cfg.reps = s_.reps;
    cfg.rep_offset = s_.rep_offset;
    cfg.base_seed = s_.seed;
    cfg.grid = QuadratureSettings{s_.nodes, s_.nodes};
    cfg.threads = s_.threads;
    cfg.output_path = s_.out;
    const std::vector<SweepCell> cells = run_phase_grid(cfg);
    std::ostringstream os;
    if (s_.format == "json")
      os << cells_json(cells).dump(2) << '\n';
    else
      write_cells_csv(os, cells);
    emit(out, os.str());
    return kOk;
  }

  int run_selftest(std::ostream& out) {
    acceptance::Options opt;
    opt.threads = s_.threads;
    acceptance::Suite suite(opt);
    int failed = 0;
    suite.run([&](const acceptance::Outcome& o) {
      out << acceptance::format_line(o) << std::endl;
      if (!o.pass) ++failed;
    });
    return failed == 0 ? kOk : kChecksFailed;
  }

  CLI::App app_;
  Settings s_;
  CLI::App* threshold_ = nullptr;
  CLI::App* system_ = nullptr;
  CLI::App* phase_ = nullptr;
  CLI::App* selftest_ = nullptr;
};

}  // namespace mest::cli
