#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

// Dense kernels for the sequential selection machinery: centering, Pearson
// correlation of zero-mean vectors, an incrementally grown orthonormal basis
// for the active-set projector, and least-squares refits.

namespace corrstop {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ZeroNormError : std::domain_error {
  using std::domain_error::domain_error;
};

inline Vector center(const Vector& v) {
  if (v.size() < 1) throw std::domain_error("center: empty vector");
  return v.array() - v.mean();
}

// Pearson correlation of two zero-mean vectors: <u,v>/(|u||v|). Callers
// residualize first; residuals against a basis containing the intercept are
// zero-mean by construction.
inline double pearson(const Vector& u, const Vector& v) {
  const double nu = u.norm();
  const double nv = v.norm();
  if (nu == 0.0 || nv == 0.0) throw ZeroNormError("pearson: zero-norm input");
  return u.dot(v) / (nu * nv);
}

// Orthonormal basis of span{1, x_j : j in active}, grown one column at a
// time by modified Gram-Schmidt with one reorthogonalization pass. The
// first column is always the normalized all-ones vector, so residualizing
// against the basis also removes the mean.
class ActiveBasis {
 public:
  static constexpr int kIntercept = -1;

  explicit ActiveBasis(int n, double rank_tolerance = 1e-8)
      : n_(n), rank_tolerance_(rank_tolerance) {
    if (n < 1) throw std::domain_error("ActiveBasis: n must be positive");
    q_.resize(n, 8);
    r_.resize(8, 8);
    r_.setZero();
    q_.col(0).setConstant(1.0 / std::sqrt(static_cast<double>(n)));
    r_(0, 0) = std::sqrt(static_cast<double>(n));
    cols_ = 1;
    sources_.push_back(kIntercept);
  }

  int n() const { return n_; }
  int size() const { return cols_; }
  double rank_tolerance() const { return rank_tolerance_; }
  const std::vector<int>& source_indices() const { return sources_; }
  auto columns() const { return q_.leftCols(cols_); }

  // Appends v's component orthogonal to the current span. Returns false and
  // leaves the basis unchanged when v already lies in the span (relative to
  // rank_tolerance), which signals a collinear entrant.
  bool try_extend(const Vector& v, int source_index) {
    if (v.size() != n_) throw std::domain_error("ActiveBasis: size mismatch");
    if (cols_ >= n_) return false;
    const double vnorm = v.norm();
    if (vnorm == 0.0) return false;
    ensure_capacity(cols_ + 1);
    Vector w = v;
    Vector coef = Vector::Zero(cols_);
    for (int pass = 0; pass < 2; ++pass) {
      const Vector c = q_.leftCols(cols_).transpose() * w;
      w.noalias() -= q_.leftCols(cols_) * c;
      coef += c;
    }
    const double wnorm = w.norm();
    if (wnorm <= rank_tolerance_ * vnorm) return false;
    q_.col(cols_) = w / wnorm;
    r_.col(cols_).head(cols_) = coef;
    r_(cols_, cols_) = wnorm;
    ++cols_;
    sources_.push_back(source_index);
    return true;
  }

  Vector residualize(const Vector& v) const {
    Vector w = v;
    residualize_inplace(w);
    return w;
  }

  // Two projection passes keep the residual orthogonal to the basis at the
  // 1e-10 level even after many extensions.
  void residualize_inplace(Vector& v) const {
    if (v.size() != n_) throw std::domain_error("ActiveBasis: size mismatch");
    for (int pass = 0; pass < 2; ++pass) {
      v.noalias() -= q_.leftCols(cols_) * (q_.leftCols(cols_).transpose() * v);
    }
  }

  // Removes the newest orthonormal component of v only (used to update
  // column residuals incrementally after an extension).
  void residualize_against_last(Vector& v) const {
    const auto q = q_.col(cols_ - 1);
    v.noalias() -= q * q.dot(v);
  }

  // Least-squares coefficients of y on the source columns (intercept first),
  // via the R factor accumulated during extension. The basis is full rank by
  // construction, so back-substitution is exact.
  Vector solve_coefficients(const Vector& y) const {
    const Vector z = q_.leftCols(cols_).transpose() * y;
    Vector beta(cols_);
    for (int i = cols_ - 1; i >= 0; --i) {
      double acc = z(i);
      for (int j = i + 1; j < cols_; ++j) acc -= r_(i, j) * beta(j);
      beta(i) = acc / r_(i, i);
    }
    return beta;
  }

 private:
  void ensure_capacity(int want) {
    if (want <= q_.cols()) return;
    int cap = static_cast<int>(q_.cols());
    while (cap < want) cap *= 2;
    q_.conservativeResize(Eigen::NoChange, cap);
    Matrix r2 = Matrix::Zero(cap, cap);
    r2.topLeftCorner(cols_, cols_) = r_.topLeftCorner(cols_, cols_);
    r_.swap(r2);
  }

  int n_;
  double rank_tolerance_;
  int cols_ = 0;
  Matrix q_;  // n x capacity, first cols_ columns orthonormal
  Matrix r_;  // upper triangular, source = Q R
  std::vector<int> sources_;
};

// Minimum-norm least squares fit of y on the given design columns (the
// caller includes an intercept column when one is wanted). Rank-deficient
// designs resolve via the pseudo-inverse convention.
inline Vector ols_fit(const Matrix& columns, const Vector& y) {
  if (columns.rows() != y.size()) throw std::domain_error("ols_fit: size mismatch");
  Eigen::CompleteOrthogonalDecomposition<Matrix> cod(columns);
  return cod.solve(y);
}

// Observation matrix plus response with per-column summaries. Construction
// validates the shape requirements of the sequential procedure.
struct DesignData {
  Matrix x;
  Vector y;
  Vector column_means;
  Vector column_sds;
  std::vector<bool> degenerate;  // zero sample variance
  std::vector<std::string> column_names;

  int n_rows() const { return static_cast<int>(x.rows()); }
  int n_cols() const { return static_cast<int>(x.cols()); }

  int non_degenerate_count() const {
    int c = 0;
    for (bool d : degenerate) c += d ? 0 : 1;
    return c;
  }

  std::vector<int> degenerate_columns() const {
    std::vector<int> out;
    for (int j = 0; j < n_cols(); ++j)
      if (degenerate[static_cast<std::size_t>(j)]) out.push_back(j);
    return out;
  }

  static DesignData build(Matrix x, Vector y, std::vector<std::string> names = {}) {
    const int n = static_cast<int>(x.rows());
    const int p = static_cast<int>(x.cols());
    if (n < 3) throw DataError("DesignData: need at least 3 observations");
    if (p < 1) throw DataError("DesignData: need at least 1 covariate");
    if (y.size() != n) throw DataError("DesignData: response length mismatch");
    if (!names.empty() && static_cast<int>(names.size()) != p)
      throw DataError("DesignData: column name count mismatch");

    DesignData d;
    d.column_means.resize(p);
    d.column_sds.resize(p);
    d.degenerate.assign(static_cast<std::size_t>(p), false);
    for (int j = 0; j < p; ++j) {
      const double mean = x.col(j).mean();
      const double ss = (x.col(j).array() - mean).matrix().squaredNorm();
      d.column_means(j) = mean;
      d.column_sds(j) = std::sqrt(ss / (n - 1));
      if (d.column_sds(j) == 0.0) d.degenerate[static_cast<std::size_t>(j)] = true;
    }
    const double ymean = y.mean();
    const double yss = (y.array() - ymean).matrix().squaredNorm();
    if (yss <= 0.0) throw DataError("DesignData: response has zero variance");

    d.x = std::move(x);
    d.y = std::move(y);
    d.column_names = std::move(names);
    return d;
  }
};

struct SparseCoefficients {
  std::vector<int> indices;
  std::vector<double> values;
  double intercept = 0.0;
};

}  // namespace corrstop
