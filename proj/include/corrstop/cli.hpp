#pragma once

#include <CLI11.hpp>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <sstream>
#include <string>
#include <vector>

#include "corrstop/csv.hpp"
#include "corrstop/procedure.hpp"
#include "corrstop/simbench.hpp"
#include "corrstop/trace_io.hpp"

// Command line front end. Exit codes: 0 success, 1 usage error, 2 data
// error, 3 numerical failure.

namespace corrstop::cli {

namespace detail {

inline DesignData load_design(const std::string& path, const std::string& response) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  const CsvTable table = read_csv(in);
  return design_from_csv(table, response);
}

inline void write_text(const std::string& path, const std::string& text) {
  if (path.empty()) {
    std::cout << text;
    return;
  }
  std::ofstream out(path);
  if (!out) throw DataError("cannot write '" + path + "'");
  out << text;
}

inline int cmd_select(const std::string& data_path, const std::string& response,
                      const std::string& method, double gamma, const std::string& mode,
                      int rounds, std::uint64_t seed, const std::string& out_path,
                      const std::string& format) {
  const DesignData data = load_design(data_path, response);
  SelectionConfig cfg;
  cfg.method = method_from_name(method);
  cfg.gamma = gamma;
  cfg.test_mode = test_policy_from_name(mode);
  cfg.permutation_rounds = rounds;
  cfg.seed = seed;
  const SelectionTrace trace = run_selection(data, cfg);
  if (format == "json") {
    write_text(out_path, trace_to_json_text(trace));
  } else {
    std::ostringstream os;
    trace_to_csv(trace, os);
    write_text(out_path, os.str());
  }
  return 0;
}

inline int cmd_nulldist(int p, int n, int s, double rho,
                        const std::vector<double>& quantiles,
                        const std::vector<double>& t_grid, const std::string& out_path) {
  std::ostringstream os;
  os.precision(17);
  auto arg_fmt = [](double v) {
    std::ostringstream s;
    s.precision(12);
    s << v;
    return s.str();
  };
  const NullParams np = null_params(p, n, s);
  os << "quantity,argument,value\n";
  os << "location,," << np.location << '\n';
  os << "scale,," << np.scale << '\n';
  os << "correction,," << np.correction << '\n';
  const double m = static_cast<double>(n - s - 2);
  for (double q : quantiles) {
    if (q <= 0.0 || q >= 1.0)
      throw std::domain_error("quantile probabilities lie in (0,1)");
    // critical value whose upper-tail mass under the limit law equals q
    const double x = 0.5 * m * (1.0 - std::pow(-std::log1p(-q), 2.0 / m));
    os << "upper_quantile_std," << arg_fmt(q) << ',' << x << '\n';
    os << "upper_quantile_r2," << arg_fmt(q) << ',' << np.location + np.scale * x << '\n';
  }
  if (rho > 0.0) {
    const EquicorrContext ctx(rho, p, n, s);
    for (double t : t_grid)
      os << "equicorr_tail," << arg_fmt(t) << ',' << tail_prob_equicorr(t, ctx) << '\n';
  }
  write_text(out_path, os.str());
  return 0;
}

inline int cmd_permtest(const std::string& data_path, const std::string& response,
                        const std::string& active_arg, int rounds, std::uint64_t seed,
                        const std::string& out_path) {
  const DesignData data = load_design(data_path, response);
  std::vector<int> active;
  if (!active_arg.empty()) {
    std::stringstream ss(active_arg);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      if (b == std::string::npos) continue;
      item = item.substr(b, e - b + 1);
      int idx = -1;
      for (int j = 0; j < static_cast<int>(data.column_names.size()); ++j)
        if (data.column_names[static_cast<std::size_t>(j)] == item) idx = j;
      if (idx < 0) {
        try {
          idx = std::stoi(item);
        } catch (...) {
          throw DataError("unknown active column '" + item + "'");
        }
      }
      if (idx < 0 || idx >= data.n_cols())
        throw DataError("active column index out of range: " + item);
      active.push_back(idx);
    }
  }
  const TestOutcome outcome = permutation_pvalue(data, active, rounds, seed);
  nlohmann::json j;
  j["p_value"] = outcome.p_value;
  j["r_max"] = outcome.statistics.r_max;
  j["u_max"] = outcome.statistics.u_max;
  j["v_max"] = outcome.statistics.v_max;
  j["argmax_index"] = outcome.statistics.argmax_index;
  j["permutations"] = *outcome.permutations_used;
  j["seed"] = seed;
  write_text(out_path, j.dump(2) + "\n");
  return 0;
}

inline int cmd_simulate(const std::string& spec_path, const std::string& out_dir,
                        int threads) {
  std::ifstream in(spec_path);
  if (!in) throw DataError("cannot open spec '" + spec_path + "'");
  const ExperimentSpec spec = parse_experiment_spec(in);
  const ExperimentReport report = run_experiment(spec, threads);

  std::ostringstream csv;
  report_to_csv(report, csv);
  write_text(out_dir + "/report.csv", csv.str());

  nlohmann::json j;
  j["replications"] = report.replications;
  j["seed"] = report.seed;
  j["rows"] = nlohmann::json::array();
  for (const ExperimentRow& r : report.rows) {
    nlohmann::json row;
    row["method"] = r.method_label;
    if (!std::isnan(r.gamma)) row["gamma"] = r.gamma;
    row["mse"] = r.mse;
    row["mse_se"] = r.mse_se;
    row["fn"] = r.fn;
    row["fn_se"] = r.fn_se;
    row["fp"] = r.fp;
    row["fp_se"] = r.fp_se;
    row["time"] = r.time;
    row["time_se"] = r.time_se;
    row["failures"] = r.failures;
    j["rows"].push_back(std::move(row));
  }
  write_text(out_dir + "/report.json", j.dump(2) + "\n");

  for (const ExperimentRow& r : report.rows) {
    std::cout << r.method_label;
    if (!std::isnan(r.gamma)) std::cout << " gamma=" << r.gamma;
    std::cout << ": mse=" << r.mse << " (" << r.mse_se << ")"
              << " fn=" << r.fn << " fp=" << r.fp << " time=" << r.time << "s";
    if (r.failures > 0) std::cout << " failures=" << r.failures;
    std::cout << "\n";
  }
  const int total = report.replications * static_cast<int>(report.rows.size());
  const int succeeded = total - report.total_failures;
  return (total == 0 || 10 * succeeded >= 9 * total) ? 0 : 2;
}

}  // namespace detail

inline int run(const std::vector<std::string>& args) {
  CLI::App app{"Test-based stopping for sequential variable selection"};
  app.require_subcommand(1);

  // select
  auto* select = app.add_subcommand("select", "Run test-based selection on a CSV dataset");
  std::string data_path, response, method = "lars", mode = "auto", out_path, format = "json";
  double gamma = 0.05;
  int rounds = 500;
  std::uint64_t seed = 0;
  select->add_option("--data", data_path, "CSV file with a header row")->required();
  select->add_option("--response", response, "response column name")->required();
  select->add_option("--method", method)->check(CLI::IsMember({"fsr", "lars", "lasso"}));
  select->add_option("--gamma", gamma, "stopping level in [0,1)");
  select->add_option("--mode", mode)->check(CLI::IsMember({"auto", "iid", "equicorr", "perm"}));
  select->add_option("--q", rounds, "permutation rounds");
  select->add_option("--seed", seed);
  select->add_option("--out", out_path, "output path (stdout when omitted)");
  select->add_option("--format", format)->check(CLI::IsMember({"json", "csv"}));

  // nulldist
  auto* nd = app.add_subcommand("nulldist", "Tabulate null-distribution constants and tails");
  int nd_p = 0, nd_n = 0, nd_s = 0;
  double nd_rho = 0.0;
  std::vector<double> nd_quantiles, nd_tgrid;
  std::string nd_out;
  nd->add_option("--p", nd_p)->required();
  nd->add_option("--n", nd_n)->required();
  nd->add_option("--s", nd_s)->required();
  nd->add_option("--rho", nd_rho, "equicorrelation level for tail output");
  nd->add_option("--quantiles", nd_quantiles)->delimiter(',');
  nd->add_option("--t-grid", nd_tgrid, "tail evaluation points")->delimiter(',');
  nd->add_option("--out", nd_out);

  // permtest
  auto* pt = app.add_subcommand("permtest", "Permutation test at a fixed active set");
  std::string pt_data, pt_response, pt_active, pt_out;
  int pt_rounds = 500;
  std::uint64_t pt_seed = 0;
  pt->add_option("--data", pt_data)->required();
  pt->add_option("--response", pt_response)->required();
  pt->add_option("--active", pt_active, "comma-separated active columns (names or indices)");
  pt->add_option("--q", pt_rounds);
  pt->add_option("--seed", pt_seed);
  pt->add_option("--out", pt_out);

  // simulate
  auto* sim = app.add_subcommand("simulate", "Run a benchmark experiment from a spec file");
  std::string sim_spec, sim_out_dir = ".";
  int sim_threads = 1;
  sim->add_option("--spec", sim_spec)->required();
  sim->add_option("--out-dir", sim_out_dir);
  sim->add_option("--threads", sim_threads);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 1;
  }

  try {
    if (select->parsed()) {
      if (!(gamma >= 0.0 && gamma < 1.0)) {
        std::cerr << "--gamma must lie in [0,1)\n";
        return 1;
      }
      return detail::cmd_select(data_path, response, method, gamma, mode, rounds, seed,
                                out_path, format);
    }
    if (nd->parsed()) {
      if (nd_n < nd_s + 3) {
        std::cerr << "nulldist requires n >= s + 3\n";
        return 1;
      }
      if (nd_tgrid.empty()) {
        for (int i = 0; i <= 20; ++i) nd_tgrid.push_back(0.05 * i);
      }
      return detail::cmd_nulldist(nd_p, nd_n, nd_s, nd_rho, nd_quantiles, nd_tgrid, nd_out);
    }
    if (pt->parsed()) {
      return detail::cmd_permtest(pt_data, pt_response, pt_active, pt_rounds, pt_seed, pt_out);
    }
    if (sim->parsed()) {
      return detail::cmd_simulate(sim_spec, sim_out_dir, sim_threads);
    }
  } catch (const CsvError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 2;
  } catch (const QuadratureFailure& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  } catch (const std::domain_error& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

inline int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace corrstop::cli
