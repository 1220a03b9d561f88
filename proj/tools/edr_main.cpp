// Command-line front end: Monte Carlo simulation cells, CSV data analysis
// (mean response and two-group mean difference), and reference-table
// reproduction runs. All artifacts are deterministic for a fixed seed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "edr/config.hpp"
#include "edr/csv.hpp"
#include "edr/estimators.hpp"
#include "edr/inference.hpp"
#include "edr/simlab.hpp"

namespace {

using edr::Dataset;
using edr::MatrixXd;
using edr::Method;
using edr::Observation;
using edr::VectorXd;

constexpr const char* kVersion = "1.0.0";

// ---------------------------------------------------------------------------
// small utilities
// ---------------------------------------------------------------------------

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(text);
  while (std::getline(in, item, ',')) {
    const auto a = item.find_first_not_of(" \t");
    const auto b = item.find_last_not_of(" \t");
    if (a != std::string::npos) out.push_back(item.substr(a, b - a + 1));
  }
  return out;
}

std::vector<Method> parse_estimators(const std::string& text) {
  std::vector<Method> out;
  for (const auto& tag : split_list(text)) {
    const auto m = edr::method_from_name(tag);
    if (!m) throw std::runtime_error("unknown-estimator: " + tag);
    out.push_back(*m);
  }
  if (out.empty()) throw std::runtime_error("unknown-estimator: empty list");
  return out;
}

VectorXd parse_vector(const std::string& text, const std::string& what) {
  const auto parts = split_list(text);
  VectorXd v(static_cast<Eigen::Index>(parts.size()));
  for (std::size_t i = 0; i < parts.size(); ++i) {
    try {
      v[static_cast<Eigen::Index>(i)] = std::stod(parts[i]);
    } catch (const std::exception&) {
      throw std::runtime_error("bad-number in " + what + ": " + parts[i]);
    }
  }
  return v;
}

void write_file(const std::filesystem::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("write-failed: " + path.string());
  out << content;
}

int resolve_jobs(int jobs) {
  if (jobs > 0) return jobs;
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

// Run manifest: resolved settings echoed as sorted key=value lines. No
// timestamps, so identical runs produce byte-identical manifests.
std::string manifest_text(const std::string& command,
                          const std::map<std::string, std::string>& settings) {
  std::ostringstream out;
  out << "command=" << command << "\n";
  out << "version=" << kVersion << "\n";
  for (const auto& [key, value] : settings) out << key << "=" << value << "\n";
  return out.str();
}

// Config-file layering: a flag wins when given on the command line, otherwise
// the config key (subcommand.flag_name) wins, otherwise the compiled default.
struct ConfigBinding {
  CLI::Option* opt;
  std::string key;
  std::function<void(const std::string&)> assign;
};

class Bindings {
 public:
  explicit Bindings(std::string prefix) : prefix_(std::move(prefix)) {}

  void bind(CLI::Option* opt, const std::string& name, std::string* target) {
    items_.push_back({opt, prefix_ + "." + name,
                      [target](const std::string& v) { *target = v; }});
  }
  void bind(CLI::Option* opt, const std::string& name, int* target) {
    items_.push_back({opt, prefix_ + "." + name, [target](const std::string& v) {
                        *target = std::stoi(v);
                      }});
  }
  void bind(CLI::Option* opt, const std::string& name, double* target) {
    items_.push_back({opt, prefix_ + "." + name, [target](const std::string& v) {
                        *target = std::stod(v);
                      }});
  }
  void bind(CLI::Option* opt, const std::string& name, std::uint64_t* target) {
    items_.push_back({opt, prefix_ + "." + name, [target](const std::string& v) {
                        *target = std::stoull(v);
                      }});
  }
  void bind(CLI::Option* opt, const std::string& name, bool* target) {
    items_.push_back({opt, prefix_ + "." + name, [target](const std::string& v) {
                        *target = (v == "1" || v == "true" || v == "yes");
                      }});
  }

  void apply(const std::string& config_path) const {
    if (config_path.empty()) return;
    const edr::Config cfg = edr::load_config(config_path);
    for (const auto& item : items_) {
      if (item.opt->count() > 0) continue;  // explicit flag wins
      if (cfg.has(item.key)) item.assign(cfg.get(item.key));
    }
  }

 private:
  std::string prefix_;
  std::vector<ConfigBinding> items_;
};

// ---------------------------------------------------------------------------
// cell grids shared by `simulate --preset` and `reproduce`
// ---------------------------------------------------------------------------

const std::vector<std::vector<double>>& model_taus(int model) {
  static const std::vector<std::vector<double>> m1 = {
      {1, 0, 0, 0},    {1, 0.5, 0.5, 0}, {0.5, -0.5, 0.5, 0},
      {0.5, 0.5, 1, 0}, {0, 0.5, 1, 1},  {-1, 0.5, 1, 1}};
  static const std::vector<std::vector<double>> m2 = {
      {1, 0, 0},     {1, 1, 0}, {0.5, 0.5, 0},
      {0, 0.5, 0},   {0, 1, 1}, {-1, 1, 1}};
  static const std::vector<std::vector<double>> m3 = {
      {1, 0, 0, 0},   {-3, 2, 2, -1}, {-2, 2, 2, -1},
      {-4, 2, 2, -1}, {-2, 2, 2, -2}};
  switch (model) {
    case 1: return m1;
    case 2: return m2;
    default: return m3;
  }
}

std::vector<edr::SimDesign> table_grid(int table, const edr::SimDesign& base) {
  const int model = (table == 1 || table == 4) ? 1
                    : (table == 2 || table == 5) ? 2
                                                 : 3;
  std::vector<edr::SimDesign> grid;
  for (const auto& tau : model_taus(model)) {
    VectorXd tv(static_cast<Eigen::Index>(tau.size()));
    for (std::size_t i = 0; i < tau.size(); ++i) {
      tv[static_cast<Eigen::Index>(i)] = tau[i];
    }
    const std::vector<int> ks = (model == 3) ? std::vector<int>{0}
                                             : std::vector<int>{1, 2, 4};
    for (int k : ks) {
      edr::SimDesign design = base;
      design.model = model;
      design.tau = tv;
      design.k = k;
      grid.push_back(design);
    }
  }
  return grid;
}

// ---------------------------------------------------------------------------
// pretty text table for simulation cells
// ---------------------------------------------------------------------------

std::string pretty_cells(const std::vector<edr::SimCell>& cells) {
  std::ostringstream out;
  out << std::left << std::setw(6) << "model" << std::setw(22) << "tau"
      << std::setw(3) << "k" << std::setw(9) << "est" << std::right
      << std::setw(6) << "n" << std::setw(6) << "reps" << std::setw(10)
      << "bias" << std::setw(10) << "rmse" << std::setw(10) << "ev"
      << std::setw(10) << "mv" << std::setw(8) << "cp" << std::setw(7)
      << "miss" << std::setw(6) << "fail" << "\n";
  for (const auto& cell : cells) {
    for (const auto& stats : cell.stats) {
      const int p = static_cast<int>(stats.bias.size());
      for (int j = 0; j < p; ++j) {
        std::string tag = edr::method_name(stats.method);
        if (p > 1) tag += "[" + std::to_string(j) + "]";
        out << std::left << std::setw(6) << cell.design.model << std::setw(22)
            << edr::format_tau(cell.design.tau) << std::setw(3)
            << cell.design.k << std::setw(9) << tag << std::right
            << std::setw(6) << cell.design.n << std::setw(6)
            << cell.design.reps << std::setw(10)
            << edr::format_double(stats.bias[j], 4) << std::setw(10)
            << edr::format_double(stats.rmse[j], 4) << std::setw(10)
            << edr::format_double(stats.ev[j], 4) << std::setw(10)
            << edr::format_double(stats.mv[j], 4) << std::setw(8)
            << edr::format_double(stats.cp[j], 3) << std::setw(7)
            << edr::format_double(cell.miss_rate, 2) << std::setw(6)
            << stats.failures << "\n";
      }
    }
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// simulate
// ---------------------------------------------------------------------------

struct SimulateArgs {
  std::string config;
  int model = 1;
  int k = 1;
  std::string tau;
  int n = 200;
  int reps = 1000;
  std::uint64_t seed = 20260825;
  int jobs = 0;
  std::string estimators = "ALL,CCA,HT,RRZ,EDR";
  double ci_level = 0.95;
  bool no_coverage = false;
  std::string cca_divisor = "complete";
  std::string preset;
  std::string out = ".";
};

int cmd_simulate(const SimulateArgs& args) {
  edr::SimDesign base;
  base.model = args.model;
  base.k = args.k;
  base.n = args.n;
  base.reps = args.reps;
  base.seed = args.seed;
  base.jobs = resolve_jobs(args.jobs);
  base.estimators = parse_estimators(args.estimators);
  base.ci_level = args.ci_level;
  base.with_coverage = !args.no_coverage;
  if (args.cca_divisor == "complete") {
    base.cca_divisor = edr::CcaDivisor::n_complete;
  } else if (args.cca_divisor == "n") {
    base.cca_divisor = edr::CcaDivisor::n;
  } else {
    throw std::runtime_error("bad-cca-divisor: " + args.cca_divisor);
  }

  std::vector<edr::SimDesign> designs;
  if (!args.preset.empty()) {
    if (args.preset.size() != 6 || args.preset.rfind("table", 0) != 0 ||
        args.preset[5] < '1' || args.preset[5] > '6') {
      throw std::runtime_error("bad-preset: " + args.preset);
    }
    designs = table_grid(args.preset[5] - '0', base);
  } else {
    if (!args.tau.empty()) {
      base.tau = parse_vector(args.tau, "tau");
    } else {
      const auto& def = model_taus(base.model).front();
      base.tau = VectorXd::Zero(static_cast<Eigen::Index>(def.size()));
      base.tau[0] = 1.0;
    }
    if (base.model == 3) base.k = 0;
    designs.push_back(base);
  }

  std::vector<edr::SimCell> cells;
  for (const auto& design : designs) {
    cells.push_back(edr::run_monte_carlo(design));
  }

  const std::filesystem::path dir(args.out);
  std::filesystem::create_directories(dir);
  write_file(dir / "cells.csv", edr::summarize(cells));
  const std::string pretty = pretty_cells(cells);
  write_file(dir / "table.txt", pretty);
  write_file(dir / "manifest.txt",
             manifest_text(
                 "simulate",
                 {{"simulate.model", std::to_string(args.model)},
                  {"simulate.k", std::to_string(base.k)},
                  {"simulate.tau",
                   args.preset.empty() ? edr::format_tau(base.tau) : "(grid)"},
                  {"simulate.n", std::to_string(base.n)},
                  {"simulate.reps", std::to_string(base.reps)},
                  {"simulate.seed", std::to_string(base.seed)},
                  {"simulate.jobs", std::to_string(base.jobs)},
                  {"simulate.estimators", args.estimators},
                  {"simulate.ci_level", edr::format_double(base.ci_level, 3)},
                  {"simulate.coverage", base.with_coverage ? "1" : "0"},
                  {"simulate.cca_divisor", args.cca_divisor},
                  {"simulate.preset", args.preset},
                  {"simulate.out", args.out}}));
  std::cout << pretty;
  for (const auto& cell : cells) {
    for (const auto& diag : cell.diagnostics) {
      std::cerr << "note: " << diag.code << ": " << diag.detail << "\n";
    }
  }
  return 0;
}

// ---------------------------------------------------------------------------
// analyze
// ---------------------------------------------------------------------------

struct AnalyzeArgs {
  std::string config;
  std::string data;
  std::string x_cols;
  std::string y_col;
  std::string group_col;
  std::string delta_col;
  std::string missing_token = "NA";
  std::string estimators = "CCA,HT,RRZ,EDR";
  double ci_level = 0.95;
  int bootstrap_b = 0;
  std::uint64_t seed = 20260825;
  std::string out = ".";
};

struct AnalyzeModels {
  edr::EstimatingFunction ef;
  edr::PropensityModel pm;
  edr::RegressionModel rm;
};

// Mean-response problem on covariates x: s(z,b) = y - b, logistic propensity
// on (1, x), linear working regression on (1, x).
AnalyzeModels mean_response_models(int dx) {
  AnalyzeModels m;
  m.ef.r = 1;
  m.ef.p = 1;
  m.ef.eval = [](const VectorXd&, const VectorXd& y, const VectorXd& beta) {
    return VectorXd::Constant(1, y[0] - beta[0]);
  };
  m.ef.jac_beta = [](const VectorXd&, const VectorXd&, const VectorXd&) {
    return MatrixXd::Constant(1, 1, -1.0);
  };
  m.pm.q = dx + 1;
  m.pm.design = [dx](const VectorXd& x) {
    VectorXd d(dx + 1);
    d[0] = 1.0;
    d.tail(dx) = x;
    return d;
  };
  m.rm.alpha_dim = dx + 1;
  m.rm.ls_basis = [dx](const VectorXd& x) {
    MatrixXd b(1, dx + 1);
    b(0, 0) = 1.0;
    b.row(0).tail(dx) = x.transpose();
    return b;
  };
  m.rm.u_eval = [basis = m.rm.ls_basis](const VectorXd& x, const VectorXd& beta,
                                        const VectorXd& alpha) {
    return VectorXd::Constant(1, (basis(x) * alpha)(0) - beta[0]);
  };
  return m;
}

double point_estimate(Method method, const Dataset& ds,
                      const AnalyzeModels& base) {
  AnalyzeModels m = base;  // fresh nuisance fits per call (bootstrap safety)
  switch (method) {
    case Method::CCA:
      return edr::estimate_cca(ds, m.ef).beta_hat[0];
    case Method::HT:
      return edr::estimate_ht(ds, m.ef, m.pm).beta_hat[0];
    case Method::RRZ:
      return edr::estimate_rrz(ds, m.ef, m.pm, m.rm).beta_hat[0];
    case Method::EDR:
      return edr::edr_mean_response(ds, m.pm, m.rm).beta_hat[0];
    default:
      throw std::runtime_error("analyze-estimator-unavailable: " +
                               edr::method_name(method));
  }
}

std::optional<double> formula_se(Method method, const Dataset& ds,
                                 const AnalyzeModels& base, double beta) {
  AnalyzeModels m = base;
  VectorXd bv = VectorXd::Constant(1, beta);
  switch (method) {
    case Method::HT: {
      edr::ensure_gamma(ds, m.pm);
      return edr::var_ht(ds, m.ef, m.pm, bv).se[0];
    }
    case Method::RRZ: {
      edr::ensure_gamma(ds, m.pm);
      edr::ensure_alpha(ds, m.rm);
      return edr::var_rrz(ds, m.ef, m.pm, m.rm, bv).se[0];
    }
    case Method::EDR: {
      edr::EstimateReport fit;
      fit.beta_hat = bv;
      fit.gamma_hat = edr::ensure_gamma(ds, m.pm);
      fit.alpha_hat = edr::ensure_alpha(ds, m.rm);
      return edr::var_edr(ds, m.ef, m.pm, m.rm, fit).se[0];
    }
    default:
      return std::nullopt;  // CCA: bootstrap only
  }
}

int cmd_analyze(const AnalyzeArgs& args) {
  if (args.data.empty()) throw std::runtime_error("analyze-missing-data-path");
  if (args.y_col.empty()) throw std::runtime_error("analyze-missing-y-col");
  const auto x_names = split_list(args.x_cols);
  if (x_names.empty()) throw std::runtime_error("analyze-missing-x-cols");
  const std::vector<Method> methods = parse_estimators(args.estimators);

  const edr::CsvTable table = edr::read_csv_file(args.data);
  std::vector<std::size_t> x_idx;
  for (const auto& name : x_names) x_idx.push_back(table.column(name));
  const std::size_t y_idx = table.column(args.y_col);
  const bool two_group = !args.group_col.empty();
  const std::size_t g_idx = two_group ? table.column(args.group_col) : 0;
  const std::size_t d_idx =
      args.delta_col.empty() ? 0 : table.column(args.delta_col);
  const int dx = static_cast<int>(x_idx.size());

  // Parse rows once into covariates / outcome / group.
  struct Row {
    VectorXd x;
    std::optional<double> y;
    int group = 1;
  };
  std::vector<Row> rows;
  for (const auto& record : table.rows) {
    Row row;
    row.x = VectorXd(dx);
    for (int j = 0; j < dx; ++j) {
      row.x[j] = edr::csv_to_double(record[x_idx[static_cast<std::size_t>(j)]]);
    }
    bool observed = !record[y_idx].empty() &&
                    record[y_idx] != args.missing_token;
    if (!args.delta_col.empty()) {
      observed = observed && edr::csv_to_double(record[d_idx]) != 0.0;
    }
    if (observed) row.y = edr::csv_to_double(record[y_idx]);
    if (two_group) {
      const double g = edr::csv_to_double(record[g_idx]);
      if (g != 0.0 && g != 1.0) {
        throw std::runtime_error("analyze-bad-group: expected 0/1 values");
      }
      row.group = static_cast<int>(g);
    }
    rows.push_back(std::move(row));
  }

  // A group's dataset treats the other group's outcome as missing; with a
  // single group this is just the plain missing-data layout.
  auto group_dataset = [&](const std::vector<Row>& src, int group) {
    Dataset ds;
    ds.dim_x = dx;
    ds.dim_y = 1;
    for (const auto& row : src) {
      Observation t;
      t.x = row.x;
      const bool mine = !two_group || row.group == group;
      if (mine && row.y) {
        t.delta = 1;
        t.y = VectorXd::Constant(1, *row.y);
      } else {
        t.delta = 0;
      }
      ds.rows.push_back(std::move(t));
    }
    if (ds.n_complete() == 0) {
      throw std::runtime_error("analyze-empty-group: no observed outcomes in group " +
                               std::to_string(group));
    }
    return ds;
  };

  const AnalyzeModels base = mean_response_models(dx);
  const std::vector<int> groups = two_group ? std::vector<int>{1, 0}
                                            : std::vector<int>{1};
  std::vector<std::string> quantities =
      two_group ? std::vector<std::string>{"mu1", "mu0", "delta"}
                : std::vector<std::string>{"mu"};

  // point estimates per method: per-group means and (two-group) contrast
  auto evaluate = [&](const std::vector<Row>& src, Method method) {
    std::vector<double> values;
    for (int g : groups) {
      values.push_back(point_estimate(method, group_dataset(src, g), base));
    }
    if (two_group) values.push_back(values[0] - values[1]);
    return values;
  };

  struct MethodReport {
    Method method;
    std::vector<double> estimate;
    std::vector<std::optional<double>> se_formula;
    std::vector<std::optional<double>> se_bootstrap;
  };
  std::vector<MethodReport> reports;
  for (Method method : methods) {
    MethodReport rep;
    rep.method = method;
    rep.estimate = evaluate(rows, method);
    std::vector<std::optional<double>> ses;
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      ses.push_back(formula_se(method, group_dataset(rows, groups[gi]), base,
                               rep.estimate[gi]));
    }
    if (two_group) {
      if (ses[0] && ses[1]) {
        ses.push_back(std::sqrt(*ses[0] * *ses[0] + *ses[1] * *ses[1]));
      } else {
        ses.push_back(std::nullopt);
      }
    }
    rep.se_formula = ses;
    rep.se_bootstrap.assign(quantities.size(), std::nullopt);
    reports.push_back(std::move(rep));
  }

  // Joint nonparametric bootstrap: one resampling plan shared by all
  // estimators and quantities so contrasts stay internally consistent.
  if (args.bootstrap_b > 0) {
    if (args.bootstrap_b < 50) {
      throw std::runtime_error("bootstrap requires B >= 50");
    }
    const std::size_t n = rows.size();
    std::vector<std::vector<std::vector<double>>> draws(methods.size());
    std::vector<int> failures(methods.size(), 0);
    for (int b = 0; b < args.bootstrap_b; ++b) {
      edr::Rng rng = edr::Rng::stream(args.seed, static_cast<std::uint64_t>(b));
      std::vector<Row> resampled;
      resampled.reserve(n);
      for (std::size_t i = 0; i < n; ++i) {
        resampled.push_back(rows[rng.below(n)]);
      }
      for (std::size_t mi = 0; mi < methods.size(); ++mi) {
        try {
          draws[mi].push_back(evaluate(resampled, methods[mi]));
        } catch (const std::exception&) {
          ++failures[mi];
        }
      }
    }
    for (std::size_t mi = 0; mi < methods.size(); ++mi) {
      if (failures[mi] * 20 > args.bootstrap_b) {
        throw std::runtime_error("bootstrap failure rate above 5% for " +
                                 edr::method_name(methods[mi]));
      }
      const double m = static_cast<double>(draws[mi].size());
      for (std::size_t qi = 0; qi < quantities.size(); ++qi) {
        double mean = 0.0;
        for (const auto& d : draws[mi]) mean += d[qi];
        mean /= m;
        double ss = 0.0;
        for (const auto& d : draws[mi]) ss += (d[qi] - mean) * (d[qi] - mean);
        reports[mi].se_bootstrap[qi] = std::sqrt(ss / (m - 1.0));
      }
    }
  }

  // artifacts
  edr::CsvTable out_table;
  out_table.header = {"estimator", "quantity", "estimate", "se_formula",
                      "se_bootstrap"};
  std::ostringstream pretty;
  pretty << std::left << std::setw(10) << "estimator" << std::setw(8)
         << "qty" << std::right << std::setw(14) << "estimate" << std::setw(14)
         << "se(formula)" << std::setw(14) << "se(boot)" << "\n";
  auto fmt_opt = [](const std::optional<double>& v) {
    return v ? edr::format_double(*v, 4) : std::string("NA");
  };
  for (const auto& rep : reports) {
    for (std::size_t qi = 0; qi < quantities.size(); ++qi) {
      out_table.rows.push_back({edr::method_name(rep.method), quantities[qi],
                                edr::format_double(rep.estimate[qi], 6),
                                fmt_opt(rep.se_formula[qi]),
                                fmt_opt(rep.se_bootstrap[qi])});
      pretty << std::left << std::setw(10) << edr::method_name(rep.method)
             << std::setw(8) << quantities[qi] << std::right << std::setw(14)
             << edr::format_double(rep.estimate[qi], 4) << std::setw(14)
             << fmt_opt(rep.se_formula[qi]) << std::setw(14)
             << fmt_opt(rep.se_bootstrap[qi]) << "\n";
    }
  }
  const std::filesystem::path dir(args.out);
  std::filesystem::create_directories(dir);
  write_file(dir / "report.csv", edr::write_csv(out_table));
  write_file(dir / "report.txt", pretty.str());
  write_file(dir / "manifest.txt",
             manifest_text("analyze",
                           {{"analyze.data", args.data},
                            {"analyze.x_cols", args.x_cols},
                            {"analyze.y_col", args.y_col},
                            {"analyze.group_col", args.group_col},
                            {"analyze.delta_col", args.delta_col},
                            {"analyze.missing_token", args.missing_token},
                            {"analyze.estimators", args.estimators},
                            {"analyze.ci_level",
                             edr::format_double(args.ci_level, 3)},
                            {"analyze.bootstrap_b",
                             std::to_string(args.bootstrap_b)},
                            {"analyze.seed", std::to_string(args.seed)},
                            {"analyze.out", args.out}}));
  std::cout << pretty.str();
  return 0;
}

// ---------------------------------------------------------------------------
// generate: synthetic two-group stand-in dataset
// ---------------------------------------------------------------------------

struct GenerateArgs {
  std::string out = "synthetic.csv";
  int n = 445;
  int treated = 185;
  std::uint64_t seed = 20260825;
};

int cmd_generate(const GenerateArgs& args) {
  if (args.n <= 0 || args.treated <= 0 || args.treated >= args.n) {
    throw std::runtime_error("bad-split: need 0 < treated < n");
  }
  edr::Rng rng = edr::Rng::stream(args.seed, 0);
  edr::CsvTable table;
  table.header = {"group", "y", "x1", "x2", "x3"};
  for (int i = 0; i < args.n; ++i) {
    const int group = i < args.treated ? 1 : 0;
    // covariate shift between groups so the two-group propensity is nontrivial
    const double x1 = rng.normal() + (group == 1 ? 0.35 : -0.15);
    const double x2 = rng.bernoulli(group == 1 ? 0.45 : 0.35) ? 1.0 : 0.0;
    const double x3 = rng.normal() + (group == 1 ? 0.2 : 0.0);
    const double y = 4200.0 + 950.0 * x1 + 650.0 * x2 + 380.0 * x3 +
                     1750.0 * group + 1500.0 * rng.normal();
    table.rows.push_back({std::to_string(group), edr::format_double(y, 2),
                          edr::format_double(x1, 6), edr::format_double(x2, 0),
                          edr::format_double(x3, 6)});
  }
  write_file(args.out, edr::write_csv(table));
  std::cout << "wrote " << args.n << " rows (" << args.treated
            << " treated) to " << args.out << "\n";
  return 0;
}

// ---------------------------------------------------------------------------
// reproduce: run a reference-table grid and compare
// ---------------------------------------------------------------------------

struct ReproduceArgs {
  std::string config;
  int table = 0;
  int n = 200;
  int reps = 1000;
  std::uint64_t seed = 20260825;
  int jobs = 0;
  std::string reference = "data/reference_tables.csv";
  std::string out = ".";
};

struct RefRow {
  double bias = std::numeric_limits<double>::quiet_NaN();
  double rmse = std::numeric_limits<double>::quiet_NaN();
  double cp = std::numeric_limits<double>::quiet_NaN();
};

double ref_value(const std::string& field) {
  if (edr::csv_is_missing(field)) {
    return std::numeric_limits<double>::quiet_NaN();
  }
  return edr::csv_to_double(field);
}

int cmd_reproduce(const ReproduceArgs& args) {
  if (args.table < 1 || args.table > 6) {
    throw std::runtime_error("argument-error: table must be in 1..6");
  }

  // load reference rows for this table ('#' comment lines stripped)
  std::ifstream in(args.reference);
  if (!in) throw std::runtime_error("csv-open-failed: " + args.reference);
  std::ostringstream cleaned;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line[0] == '#') continue;
    cleaned << line << "\n";
  }
  std::istringstream cleaned_in(cleaned.str());
  const edr::CsvTable ref = edr::read_csv(cleaned_in);
  const std::size_t c_table = ref.column("table");
  const std::size_t c_tau = ref.column("tau");
  const std::size_t c_k = ref.column("k");
  const std::size_t c_coord = ref.column("coord");
  const std::size_t c_est = ref.column("estimator");
  const std::size_t c_bias = ref.column("bias");
  const std::size_t c_rmse = ref.column("rmse");
  const std::size_t c_cp = ref.column("cp");
  std::map<std::string, RefRow> lookup;
  for (const auto& row : ref.rows) {
    if (row[c_table] != std::to_string(args.table)) continue;
    const std::string key =
        row[c_tau] + "|" + row[c_k] + "|" + row[c_coord] + "|" + row[c_est];
    lookup[key] = {ref_value(row[c_bias]), ref_value(row[c_rmse]),
                   ref_value(row[c_cp])};
  }
  if (lookup.empty()) {
    throw std::runtime_error("reference-table-missing: table " +
                             std::to_string(args.table) + " not in " +
                             args.reference);
  }

  const bool coverage_table = args.table >= 4;
  edr::SimDesign base;
  base.n = args.n;
  base.reps = args.reps;
  base.seed = args.seed;
  base.jobs = resolve_jobs(args.jobs);
  base.with_coverage = coverage_table;
  base.estimators = coverage_table
                        ? std::vector<Method>{Method::HT, Method::RRZ,
                                              Method::EDR}
                        : std::vector<Method>{Method::ALL, Method::CCA,
                                              Method::HT, Method::RRZ,
                                              Method::EDR};

  // Comparison tolerances, pinned here:
  //  bias: |obs - ref| <= max(0.025, 4 * rmse_ref / sqrt(reps))
  //  rmse: obs/ref in [0.85, 1.15] ([0.7, 1.4] below 200 reps)
  //  cp:   |obs - ref| <= max(0.03, 4 * sqrt(ref(1-ref)/reps))
  //  k=4 cells (models 1-2): heavy-tailed, checked only for the efficiency
  //  ordering rmse(EDR) <= 1.1 * rmse(HT)
  const double rmse_lo = args.reps >= 200 ? 0.85 : 0.70;
  const double rmse_hi = args.reps >= 200 ? 1.15 : 1.40;
  const double root_reps = std::sqrt(static_cast<double>(args.reps));

  edr::CsvTable report;
  report.header = {"table", "tau", "k", "coord", "estimator", "metric",
                   "reference", "observed", "tolerance", "status"};
  int checks = 0, fails = 0;
  auto emit = [&](const edr::SimDesign& d, int coord, const std::string& est,
                  const std::string& metric, double refv, double obs,
                  const std::string& tol, bool pass) {
    report.rows.push_back(
        {std::to_string(args.table), edr::format_tau(d.tau),
         std::to_string(d.k), std::to_string(coord), est, metric,
         edr::format_double(refv, 4), edr::format_double(obs, 4), tol,
         pass ? "pass" : "fail"});
    ++checks;
    if (!pass) ++fails;
  };

  std::vector<edr::SimCell> cells;
  for (const auto& design : table_grid(args.table, base)) {
    const edr::SimCell cell = edr::run_monte_carlo(design);
    cells.push_back(cell);
    const std::string tau_s = edr::format_tau(design.tau);
    const bool heavy = design.model != 3 && design.k == 4;

    double rmse_ht = 0.0, rmse_edr = 0.0;
    for (const auto& stats : cell.stats) {
      const std::string est = edr::method_name(stats.method);
      if (stats.method == Method::HT) rmse_ht = stats.rmse[0];
      if (stats.method == Method::EDR) rmse_edr = stats.rmse[0];
      for (int j = 0; j < static_cast<int>(stats.bias.size()); ++j) {
        const auto it = lookup.find(tau_s + "|" + std::to_string(design.k) +
                                    "|" + std::to_string(j) + "|" + est);
        if (it == lookup.end()) continue;
        const RefRow& r = it->second;
        if (!coverage_table && !heavy) {
          const double tol_b =
              std::max(0.025, 4.0 * r.rmse / root_reps);
          emit(design, j, est, "bias", r.bias, stats.bias[j],
               edr::format_double(tol_b, 4),
               std::abs(stats.bias[j] - r.bias) <= tol_b);
          const double ratio = stats.rmse[j] / r.rmse;
          emit(design, j, est, "rmse", r.rmse, stats.rmse[j],
               edr::format_double(rmse_lo, 2) + ".." +
                   edr::format_double(rmse_hi, 2),
               ratio >= rmse_lo && ratio <= rmse_hi);
        } else if (coverage_table) {
          const double tol_c = std::max(
              0.03, 4.0 * std::sqrt(r.cp * (1.0 - r.cp)) / root_reps);
          emit(design, j, est, "cp", r.cp, stats.cp[j],
               edr::format_double(tol_c, 4),
               std::abs(stats.cp[j] - r.cp) <= tol_c);
        }
      }
    }
    if (!coverage_table && heavy) {
      emit(design, 0, "EDR", "rmse-order", 1.1, rmse_edr / rmse_ht, "<=1.10",
           rmse_edr <= 1.1 * rmse_ht);
    }
  }

  const std::filesystem::path dir(args.out);
  std::filesystem::create_directories(dir);
  write_file(dir / "comparison.csv", edr::write_csv(report));
  write_file(dir / "cells.csv", edr::summarize(cells));
  write_file(dir / "manifest.txt",
             manifest_text("reproduce",
                           {{"reproduce.table", std::to_string(args.table)},
                            {"reproduce.n", std::to_string(args.n)},
                            {"reproduce.reps", std::to_string(args.reps)},
                            {"reproduce.seed", std::to_string(args.seed)},
                            {"reproduce.jobs", std::to_string(base.jobs)},
                            {"reproduce.reference", args.reference},
                            {"reproduce.out", args.out}}));

  std::ostringstream pretty;
  for (const auto& row : report.rows) {
    pretty << std::left << std::setw(22) << row[1] << " k=" << row[2]
           << " [" << row[3] << "] " << std::setw(5) << row[4] << std::setw(11)
           << row[5] << " ref=" << std::setw(10) << row[6]
           << " obs=" << std::setw(10) << row[7] << " tol=" << std::setw(10)
           << row[8] << " " << row[9] << "\n";
  }
  pretty << checks << " comparisons, " << fails << " outside tolerance\n";
  write_file(dir / "comparison.txt", pretty.str());
  std::cout << pretty.str();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"estimating equations with missing responses: simulation, "
               "analysis, and reference-table reproduction"};
  app.set_version_flag("--version", std::string("edr ") + kVersion);
  app.require_subcommand(1);

  SimulateArgs sim;
  Bindings sim_bind("simulate");
  auto* sim_cmd = app.add_subcommand("simulate", "run Monte Carlo cells");
  sim_cmd->add_option("--config", sim.config, "config file (key=value)");
  sim_bind.bind(sim_cmd->add_option("--model", sim.model, "model id (1-3)"),
                "model", &sim.model);
  sim_bind.bind(sim_cmd->add_option("--k", sim.k, "response exponent"), "k",
                &sim.k);
  sim_bind.bind(sim_cmd->add_option("--tau", sim.tau,
                                    "missingness coefficients, comma-separated"),
                "tau", &sim.tau);
  sim_bind.bind(sim_cmd->add_option("--n", sim.n, "sample size"), "n", &sim.n);
  sim_bind.bind(sim_cmd->add_option("--reps", sim.reps, "replicates"), "reps",
                &sim.reps);
  sim_bind.bind(sim_cmd->add_option("--seed", sim.seed, "master seed"), "seed",
                &sim.seed);
  sim_bind.bind(sim_cmd->add_option("--jobs", sim.jobs,
                                    "worker threads (0 = all cores)"),
                "jobs", &sim.jobs);
  sim_bind.bind(sim_cmd->add_option("--estimators", sim.estimators,
                                    "comma-separated estimator tags"),
                "estimators", &sim.estimators);
  sim_bind.bind(sim_cmd->add_option("--ci-level", sim.ci_level,
                                    "confidence level"),
                "ci_level", &sim.ci_level);
  sim_bind.bind(sim_cmd->add_flag("--no-coverage", sim.no_coverage,
                                  "skip variance/coverage work"),
                "no_coverage", &sim.no_coverage);
  sim_bind.bind(sim_cmd->add_option("--cca-divisor", sim.cca_divisor,
                                    "CCA divisor: complete | n"),
                "cca_divisor", &sim.cca_divisor);
  sim_bind.bind(sim_cmd->add_option("--preset", sim.preset,
                                    "table1..table6: run the full cell grid"),
                "preset", &sim.preset);
  sim_bind.bind(sim_cmd->add_option("--out", sim.out, "output directory"),
                "out", &sim.out);

  AnalyzeArgs ana;
  Bindings ana_bind("analyze");
  auto* ana_cmd = app.add_subcommand("analyze", "analyze a CSV dataset");
  ana_cmd->add_option("--config", ana.config, "config file (key=value)");
  ana_bind.bind(ana_cmd->add_option("--data", ana.data, "input CSV path"),
                "data", &ana.data);
  ana_bind.bind(ana_cmd->add_option("--x-cols", ana.x_cols,
                                    "covariate column names, comma-separated"),
                "x_cols", &ana.x_cols);
  ana_bind.bind(ana_cmd->add_option("--y-col", ana.y_col, "outcome column"),
                "y_col", &ana.y_col);
  ana_bind.bind(ana_cmd->add_option("--group-col", ana.group_col,
                                    "0/1 group column for mean differences"),
                "group_col", &ana.group_col);
  ana_bind.bind(ana_cmd->add_option("--delta-col", ana.delta_col,
                                    "explicit missingness indicator column"),
                "delta_col", &ana.delta_col);
  ana_bind.bind(ana_cmd->add_option("--missing-token", ana.missing_token,
                                    "missing-value token"),
                "missing_token", &ana.missing_token);
  ana_bind.bind(ana_cmd->add_option("--estimators", ana.estimators,
                                    "comma-separated estimator tags"),
                "estimators", &ana.estimators);
  ana_bind.bind(ana_cmd->add_option("--ci-level", ana.ci_level,
                                    "confidence level"),
                "ci_level", &ana.ci_level);
  ana_bind.bind(ana_cmd->add_option("--bootstrap-b", ana.bootstrap_b,
                                    "bootstrap replicates (0 = off)"),
                "bootstrap_b", &ana.bootstrap_b);
  ana_bind.bind(ana_cmd->add_option("--seed", ana.seed, "bootstrap seed"),
                "seed", &ana.seed);
  ana_bind.bind(ana_cmd->add_option("--out", ana.out, "output directory"),
                "out", &ana.out);

  GenerateArgs gen;
  auto* gen_cmd =
      app.add_subcommand("generate", "write a synthetic two-group CSV");
  gen_cmd->add_option("--out", gen.out, "output CSV path");
  gen_cmd->add_option("--n", gen.n, "total rows");
  gen_cmd->add_option("--treated", gen.treated, "rows in group 1");
  gen_cmd->add_option("--seed", gen.seed, "generator seed");

  ReproduceArgs rep;
  Bindings rep_bind("reproduce");
  auto* rep_cmd = app.add_subcommand(
      "reproduce", "rerun a reference table grid and compare");
  rep_cmd->add_option("--config", rep.config, "config file (key=value)");
  rep_bind.bind(rep_cmd->add_option("--table", rep.table, "table id (1-6)"),
                "table", &rep.table);
  rep_bind.bind(rep_cmd->add_option("--n", rep.n, "sample size"), "n", &rep.n);
  rep_bind.bind(rep_cmd->add_option("--reps", rep.reps, "replicates"), "reps",
                &rep.reps);
  rep_bind.bind(rep_cmd->add_option("--seed", rep.seed, "master seed"), "seed",
                &rep.seed);
  rep_bind.bind(rep_cmd->add_option("--jobs", rep.jobs,
                                    "worker threads (0 = all cores)"),
                "jobs", &rep.jobs);
  rep_bind.bind(rep_cmd->add_option("--reference", rep.reference,
                                    "reference values CSV"),
                "reference", &rep.reference);
  rep_bind.bind(rep_cmd->add_option("--out", rep.out, "output directory"),
                "out", &rep.out);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (sim_cmd->parsed()) {
      sim_bind.apply(sim.config);
      return cmd_simulate(sim);
    }
    if (ana_cmd->parsed()) {
      ana_bind.apply(ana.config);
      return cmd_analyze(ana);
    }
    if (gen_cmd->parsed()) return cmd_generate(gen);
    if (rep_cmd->parsed()) {
      rep_bind.apply(rep.config);
      return cmd_reproduce(rep);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
