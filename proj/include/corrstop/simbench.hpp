#pragma once

#include <algorithm>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <numeric>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "corrstop/linalg.hpp"
#include "corrstop/nulldist.hpp"
#include "corrstop/procedure.hpp"
#include "corrstop/rng.hpp"

// Data generators for the benchmark examples, support-recovery metrics with
// out-of-sample refits, the cross-validation baseline, and the experiment
// runner that aggregates replications into a report.

namespace corrstop {

enum class DesignKind { Equicorr, Ar1, T5Independent };
enum class NoiseKind { Gaussian, T5 };

struct GenerativeModel {
  std::vector<std::pair<int, double>> beta;  // sparse true coefficients
  double sigma = 1.0;
  DesignKind design = DesignKind::Equicorr;
  double rho = 0.0;
  NoiseKind noise = NoiseKind::Gaussian;

  std::vector<int> support() const {
    std::vector<int> s;
    for (const auto& [j, v] : beta)
      if (v != 0.0) s.push_back(j);
    std::sort(s.begin(), s.end());
    return s;
  }
};

// Equicorrelated columns come from the shared-factor decomposition
// X_j = sqrt(1-rho) Z_j + w * mean(Z)*sqrt(p), which is O(np) and never
// factors a p x p matrix. AR(1) uses the scalar recursion across columns.
inline Matrix gen_design(int n, int p, DesignKind kind, double rho, std::uint64_t seed) {
  if (n < 1 || p < 1) throw std::domain_error("gen_design: n, p must be positive");
  Matrix x(n, p);
  Rng rng(seed);
  switch (kind) {
    case DesignKind::Equicorr: {
      // a single column carries no shared factor
      const double w = p > 1 ? mixing_weight(rho, p) : 0.0;
      const double sq = std::sqrt(1.0 - rho);
      Vector shared = Vector::Zero(n);
      for (int j = 0; j < p; ++j) {
        for (int i = 0; i < n; ++i) {
          const double z = rng.normal();
          x(i, j) = z;
          shared(i) += z;
        }
      }
      shared /= std::sqrt(static_cast<double>(p));
      for (int j = 0; j < p; ++j)
        x.col(j) = sq * x.col(j) + w * shared;
      break;
    }
    case DesignKind::Ar1: {
      if (rho <= -1.0 || rho >= 1.0) throw std::domain_error("gen_design: AR(1) needs |rho| < 1");
      const double innov = std::sqrt(1.0 - rho * rho);
      for (int i = 0; i < n; ++i) {
        double prev = rng.normal();
        x(i, 0) = prev;
        for (int j = 1; j < p; ++j) {
          prev = rho * prev + innov * rng.normal();
          x(i, j) = prev;
        }
      }
      break;
    }
    case DesignKind::T5Independent: {
      for (int j = 0; j < p; ++j)
        for (int i = 0; i < n; ++i) x(i, j) = rng.student_t5();
      break;
    }
  }
  return x;
}

inline Vector gen_response(const Matrix& x, const GenerativeModel& model, std::uint64_t seed) {
  const int n = static_cast<int>(x.rows());
  Vector y = Vector::Zero(n);
  for (const auto& [j, v] : model.beta) {
    if (j < 0 || j >= x.cols()) throw std::domain_error("gen_response: beta index out of range");
    y += v * x.col(j);
  }
  Rng rng(seed);
  // t5 noise is scaled to unit variance so sigma^2 is the noise variance in
  // every configuration; the t5 *design* columns stay on their raw scale.
  const double noise_scale =
      model.noise == NoiseKind::Gaussian ? 1.0 : std::sqrt(3.0 / 5.0);
  for (int i = 0; i < n; ++i) {
    const double eps = model.noise == NoiseKind::Gaussian ? rng.normal() : rng.student_t5();
    y(i) += model.sigma * noise_scale * eps;
  }
  return y;
}

// Least-squares refit of y on the support columns plus an intercept.
inline SparseCoefficients refit_ols(const Matrix& x, const Vector& y,
                                    const std::vector<int>& support) {
  const int n = static_cast<int>(x.rows());
  Matrix design(n, static_cast<int>(support.size()) + 1);
  design.col(0).setOnes();
  for (int i = 0; i < static_cast<int>(support.size()); ++i)
    design.col(i + 1) = x.col(support[static_cast<std::size_t>(i)]);
  const Vector coef = ols_fit(design, y);
  SparseCoefficients out;
  out.intercept = coef(0);
  for (int i = 0; i < static_cast<int>(support.size()); ++i) {
    out.indices.push_back(support[static_cast<std::size_t>(i)]);
    out.values.push_back(coef(i + 1));
  }
  return out;
}

struct Metrics {
  int fn = 0;
  int fp = 0;
  double mse = 0.0;
};

// FN = truly nonzero coefficients estimated as zero; FP = the reverse.
// MSE is the mean squared prediction error of the fitted refit on held-out
// data.
inline Metrics metrics(const std::vector<int>& estimated_support,
                       const std::vector<int>& true_support,
                       const SparseCoefficients& fitted, const Matrix& test_x,
                       const Vector& test_y) {
  const std::set<int> est(estimated_support.begin(), estimated_support.end());
  const std::set<int> tru(true_support.begin(), true_support.end());
  Metrics m;
  for (int j : tru)
    if (!est.count(j)) ++m.fn;
  for (int j : est)
    if (!tru.count(j)) ++m.fp;
  Vector pred = Vector::Constant(test_y.size(), fitted.intercept);
  for (std::size_t i = 0; i < fitted.indices.size(); ++i)
    pred += fitted.values[i] * test_x.col(fitted.indices[i]);
  m.mse = (test_y - pred).squaredNorm() / static_cast<double>(test_y.size());
  return m;
}

// 10-fold-style cross validation over the path step (model size): every fold
// runs the untested path, refits each prefix, and scores the held-out fold;
// the full-data path truncated at the best step is returned.
inline std::vector<int> cv_baseline(const DesignData& data, Method method, int folds,
                                    std::uint64_t seed) {
  const int n = data.n_rows();
  if (folds < 2 || folds > n) throw std::domain_error("cv_baseline: folds outside [2, n]");

  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, 0));
  rng.shuffle(order);
  std::vector<int> fold_of(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) fold_of[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = i % folds;

  const int k_cap = std::min(data.n_cols(), n - 2);
  std::vector<double> sse(static_cast<std::size_t>(k_cap) + 1, 0.0);
  int k_common = k_cap;

  for (int f = 0; f < folds; ++f) {
    std::vector<int> train_rows, test_rows;
    for (int i = 0; i < n; ++i)
      (fold_of[static_cast<std::size_t>(i)] == f ? test_rows : train_rows).push_back(i);
    if (static_cast<int>(train_rows.size()) < 4) continue;

    Matrix xtr(static_cast<int>(train_rows.size()), data.n_cols());
    Vector ytr(static_cast<int>(train_rows.size()));
    for (int i = 0; i < static_cast<int>(train_rows.size()); ++i) {
      xtr.row(i) = data.x.row(train_rows[static_cast<std::size_t>(i)]);
      ytr(i) = data.y(train_rows[static_cast<std::size_t>(i)]);
    }
    Matrix xte(static_cast<int>(test_rows.size()), data.n_cols());
    Vector yte(static_cast<int>(test_rows.size()));
    for (int i = 0; i < static_cast<int>(test_rows.size()); ++i) {
      xte.row(i) = data.x.row(test_rows[static_cast<std::size_t>(i)]);
      yte(i) = data.y(test_rows[static_cast<std::size_t>(i)]);
    }

    DesignData train = DesignData::build(std::move(xtr), std::move(ytr));
    PathState path(train, method);
    ActiveBasis basis(train.n_rows());
    // step 0: intercept-only prediction
    const double mean = train.y.mean();
    sse[0] += (yte.array() - mean).matrix().squaredNorm();

    int steps_done = 0;
    while (steps_done < k_cap) {
      const StepEvent ev = path.next_event();
      if (ev.kind == EventKind::Exhausted) break;
      if (ev.kind == EventKind::Drop) continue;  // model size tracks entries
      if (!basis.try_extend(train.x.col(ev.variable), ev.variable)) break;
      ++steps_done;
      const Vector coef = basis.solve_coefficients(train.y);
      Vector pred = Vector::Constant(yte.size(), coef(0));
      for (int t = 1; t < basis.size(); ++t)
        pred += coef(t) * xte.col(basis.source_indices()[static_cast<std::size_t>(t)]);
      sse[static_cast<std::size_t>(steps_done)] += (yte - pred).squaredNorm();
    }
    k_common = std::min(k_common, steps_done);
  }

  int best_k = 0;
  double best = sse[0];
  for (int k = 1; k <= k_common; ++k) {
    if (sse[static_cast<std::size_t>(k)] < best) {
      best = sse[static_cast<std::size_t>(k)];
      best_k = k;
    }
  }

  PathState full(data, method);
  std::vector<int> active;
  int entered = 0;
  while (entered < best_k) {
    const StepEvent ev = full.next_event();
    if (ev.kind == EventKind::Exhausted) break;
    if (ev.kind == EventKind::Drop) {
      active.erase(std::find(active.begin(), active.end(), ev.variable));
      continue;
    }
    active.push_back(ev.variable);
    ++entered;
  }
  std::sort(active.begin(), active.end());
  return active;
}

// --- experiment runner ---

struct ExperimentSpec {
  int example = 1;  // 1, 2, 3 or 0 for custom
  int n = 200;
  int p = 2000;
  double rho = 0.0;
  double sigma = 2.0;
  int n_test = 500;
  int reps = 100;
  std::uint64_t seed = 1;
  int folds = 10;
  int permutation_rounds = 500;
  std::vector<Method> methods{Method::Lars};
  std::vector<double> gammas{0.01};
  std::vector<std::string> modes{"corr"};  // corr|iid|equicorr|perm|cv
  std::vector<std::pair<int, double>> custom_beta;
  std::string custom_design = "equicorr";  // equicorr|ar1|t5
  std::string custom_noise = "gaussian";   // gaussian|t5

  GenerativeModel model() const {
    GenerativeModel m;
    m.sigma = sigma;
    m.rho = rho;
    switch (example) {
      case 1:
        m.beta = {{0, 3.0}, {1, -1.5}, {2, 2.0}};
        m.design = DesignKind::Equicorr;
        m.noise = NoiseKind::Gaussian;
        break;
      case 2:
        for (int j = 0; j < 10; ++j) m.beta.push_back({j, 2.0});
        m.design = DesignKind::Ar1;
        m.noise = NoiseKind::Gaussian;
        break;
      case 3:
        m.beta = {{0, 3.0}, {1, -1.5}, {2, 2.0}};
        m.design = DesignKind::T5Independent;
        m.noise = NoiseKind::T5;
        break;
      case 0:
        m.beta = custom_beta;
        m.design = custom_design == "ar1"  ? DesignKind::Ar1
                   : custom_design == "t5" ? DesignKind::T5Independent
                                           : DesignKind::Equicorr;
        m.noise = custom_noise == "t5" ? NoiseKind::T5 : NoiseKind::Gaussian;
        break;
      default:
        throw std::domain_error("ExperimentSpec: unknown example");
    }
    return m;
  }
};

struct ExperimentRow {
  std::string method_label;
  double gamma = 0.0;  // NaN for cv rows
  double mse = 0.0, mse_se = 0.0;
  double fn = 0.0, fn_se = 0.0;
  double fp = 0.0, fp_se = 0.0;
  double time = 0.0, time_se = 0.0;
  int failures = 0;
};

struct ExperimentReport {
  std::vector<ExperimentRow> rows;
  int replications = 0;
  std::uint64_t seed = 0;
  int total_failures = 0;
};

// Plain key = value config file; '#' starts a comment. Lists are
// comma-separated. Keys: example, n, p, rho, sigma, n_test, reps, seed,
// folds, Q, methods, gammas, modes, beta, design, noise.
inline ExperimentSpec parse_experiment_spec(std::istream& in) {
  ExperimentSpec spec;
  std::string line;
  int line_no = 0;
  auto split = [](const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto b = item.find_first_not_of(" \t");
      const auto e = item.find_last_not_of(" \t");
      if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
    }
    return out;
  };
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      if (b == std::string::npos) return std::string();
      const auto e = s.find_last_not_of(" \t\r");
      return s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string val = trim(line.substr(eq + 1));
    if (key.empty() || val.empty()) continue;
    try {
      if (key == "example") {
        spec.example = val == "custom" ? 0 : std::stoi(val);
      } else if (key == "n") {
        spec.n = std::stoi(val);
      } else if (key == "p") {
        spec.p = std::stoi(val);
      } else if (key == "rho") {
        spec.rho = std::stod(val);
      } else if (key == "sigma") {
        spec.sigma = std::stod(val);
      } else if (key == "n_test") {
        spec.n_test = std::stoi(val);
      } else if (key == "reps") {
        spec.reps = std::stoi(val);
      } else if (key == "seed") {
        spec.seed = std::stoull(val);
      } else if (key == "folds") {
        spec.folds = std::stoi(val);
      } else if (key == "Q" || key == "q") {
        spec.permutation_rounds = std::stoi(val);
      } else if (key == "methods") {
        spec.methods.clear();
        for (const auto& m : split(val)) {
          if (m == "fsr") spec.methods.push_back(Method::Fsr);
          else if (m == "lars") spec.methods.push_back(Method::Lars);
          else if (m == "lasso") spec.methods.push_back(Method::Lasso);
          else throw std::invalid_argument("unknown method '" + m + "'");
        }
      } else if (key == "gammas") {
        spec.gammas.clear();
        for (const auto& g : split(val)) spec.gammas.push_back(std::stod(g));
      } else if (key == "modes") {
        spec.modes = split(val);
        for (const auto& m : spec.modes)
          if (m != "corr" && m != "iid" && m != "equicorr" && m != "perm" && m != "cv")
            throw std::invalid_argument("unknown mode '" + m + "'");
      } else if (key == "beta") {
        spec.custom_beta.clear();
        for (const auto& b : split(val)) {
          const auto colon = b.find(':');
          if (colon == std::string::npos)
            throw std::invalid_argument("beta entries are index:value");
          spec.custom_beta.push_back(
              {std::stoi(b.substr(0, colon)), std::stod(b.substr(colon + 1))});
        }
      } else if (key == "design") {
        spec.custom_design = val;
      } else if (key == "noise") {
        spec.custom_noise = val;
      } else {
        throw std::invalid_argument("unknown key '" + key + "'");
      }
    } catch (const std::invalid_argument& e) {
      throw DataError("spec line " + std::to_string(line_no) + ": " + e.what());
    } catch (const std::out_of_range&) {
      throw DataError("spec line " + std::to_string(line_no) + ": value out of range");
    }
  }
  return spec;
}

namespace detail {

struct CellAccum {
  std::vector<double> mse, fn, fp, time;
  int failures = 0;
};

inline std::string combo_label(Method m, const std::string& mode) {
  std::string base = method_name(m);
  for (auto& c : base) c = static_cast<char>(std::toupper(c));
  if (mode == "cv") return base + "-CV";
  if (mode == "perm") return base + "-Perm";
  if (mode == "iid") return base + "-IID";
  if (mode == "equicorr") return base + "-Equicorr";
  return base + "-Corr";
}

}  // namespace detail

// Runs every configured method x mode x gamma combination on `reps` fresh
// train/test draws. Per-replication seeds derive from the master seed by
// stream index, so serial and parallel execution agree replication by
// replication.
inline ExperimentReport run_experiment(const ExperimentSpec& spec, int threads = 1) {
  struct Combo {
    Method method;
    std::string mode;
    double gamma;
  };
  std::vector<Combo> combos;
  for (Method m : spec.methods) {
    for (const std::string& mode : spec.modes) {
      if (mode == "cv") {
        combos.push_back({m, mode, std::numeric_limits<double>::quiet_NaN()});
      } else {
        for (double g : spec.gammas) combos.push_back({m, mode, g});
      }
    }
  }

  const GenerativeModel model = spec.model();
  const std::vector<int> true_support = model.support();

  std::vector<detail::CellAccum> cells(combos.size());
  for (auto& c : cells) {
    c.mse.resize(static_cast<std::size_t>(spec.reps));
    c.fn.resize(static_cast<std::size_t>(spec.reps));
    c.fp.resize(static_cast<std::size_t>(spec.reps));
    c.time.resize(static_cast<std::size_t>(spec.reps));
  }
  std::vector<std::vector<bool>> ok(combos.size(),
                                    std::vector<bool>(static_cast<std::size_t>(spec.reps), false));

  auto run_rep = [&](int rep) {
    const std::uint64_t base = derive_seed(spec.seed, static_cast<std::uint64_t>(rep));
    const Matrix xtr = gen_design(spec.n, spec.p, model.design, model.rho, derive_seed(base, 1));
    const Vector ytr = gen_response(xtr, model, derive_seed(base, 2));
    const Matrix xte = gen_design(spec.n_test, spec.p, model.design, model.rho, derive_seed(base, 3));
    const Vector yte = gen_response(xte, model, derive_seed(base, 4));
    const DesignData train = DesignData::build(xtr, ytr);

    for (std::size_t ci = 0; ci < combos.size(); ++ci) {
      const Combo& combo = combos[ci];
      const auto t0 = std::chrono::steady_clock::now();
      try {
        std::vector<int> support;
        if (combo.mode == "cv") {
          support = cv_baseline(train, combo.method, spec.folds, derive_seed(base, 5));
        } else {
          SelectionConfig cfg;
          cfg.method = combo.method;
          cfg.gamma = combo.gamma;
          cfg.test_mode = combo.mode == "iid"        ? TestPolicy::ForceIid
                          : combo.mode == "equicorr" ? TestPolicy::ForceEquicorr
                          : combo.mode == "perm"     ? TestPolicy::ForcePermutation
                                                     : TestPolicy::Auto;
          cfg.permutation_rounds = spec.permutation_rounds;
          cfg.seed = derive_seed(base, 6);
          support = run_selection(train, cfg).final_active;
          std::sort(support.begin(), support.end());
        }
        const SparseCoefficients fit = refit_ols(train.x, train.y, support);
        const Metrics m = metrics(support, true_support, fit, xte, yte);
        const double dt =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        cells[ci].mse[static_cast<std::size_t>(rep)] = m.mse;
        cells[ci].fn[static_cast<std::size_t>(rep)] = m.fn;
        cells[ci].fp[static_cast<std::size_t>(rep)] = m.fp;
        cells[ci].time[static_cast<std::size_t>(rep)] = dt;
        ok[ci][static_cast<std::size_t>(rep)] = true;
      } catch (const std::exception&) {
        ok[ci][static_cast<std::size_t>(rep)] = false;
      }
    }
  };

  if (threads <= 1 || spec.reps <= 1) {
    for (int rep = 0; rep < spec.reps; ++rep) run_rep(rep);
  } else {
    std::vector<std::thread> pool;
    std::atomic<int> next{0};
    const int workers = std::min(threads, spec.reps);
    for (int w = 0; w < workers; ++w) {
      pool.emplace_back([&]() {
        int rep;
        while ((rep = next.fetch_add(1)) < spec.reps) run_rep(rep);
      });
    }
    for (auto& t : pool) t.join();
  }

  ExperimentReport report;
  report.replications = spec.reps;
  report.seed = spec.seed;
  auto mean_se = [](const std::vector<double>& v, const std::vector<bool>& okv,
                    double& mean, double& se) {
    double sum = 0.0;
    int cnt = 0;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (okv[i]) {
        sum += v[i];
        ++cnt;
      }
    if (cnt == 0) {
      mean = se = 0.0;
      return;
    }
    mean = sum / cnt;
    double ss = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (okv[i]) ss += (v[i] - mean) * (v[i] - mean);
    se = cnt > 1 ? std::sqrt(ss / (cnt - 1) / cnt) : 0.0;
  };
  for (std::size_t ci = 0; ci < combos.size(); ++ci) {
    ExperimentRow row;
    row.method_label = detail::combo_label(combos[ci].method, combos[ci].mode);
    row.gamma = combos[ci].gamma;
    mean_se(cells[ci].mse, ok[ci], row.mse, row.mse_se);
    mean_se(cells[ci].fn, ok[ci], row.fn, row.fn_se);
    mean_se(cells[ci].fp, ok[ci], row.fp, row.fp_se);
    mean_se(cells[ci].time, ok[ci], row.time, row.time_se);
    for (std::size_t r = 0; r < ok[ci].size(); ++r)
      if (!ok[ci][r]) ++row.failures;
    report.total_failures += row.failures;
    report.rows.push_back(std::move(row));
  }
  return report;
}

inline void report_to_csv(const ExperimentReport& report, std::ostream& out) {
  out.precision(17);
  out << "method,gamma,mse,mse_se,fn,fn_se,fp,fp_se,time,time_se,failures\n";
  for (const ExperimentRow& r : report.rows) {
    out << r.method_label << ',';
    if (std::isnan(r.gamma)) {
      out << "";
    } else {
      out << r.gamma;
    }
    out << ',' << r.mse << ',' << r.mse_se << ',' << r.fn << ',' << r.fn_se << ','
        << r.fp << ',' << r.fp_se << ',' << r.time << ',' << r.time_se << ','
        << r.failures << '\n';
  }
}

}  // namespace corrstop
