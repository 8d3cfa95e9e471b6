// Apache License, Version 2.0, refer to LICENSE.txt

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_set>
#include <utility>
#include <vector>

namespace pmclust {

// Error classes map onto CLI exit codes: ValidationError -> 3,
// InvariantError -> 4. DomainError is raised by numeric kernels handed
// arguments outside their support.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class InvariantError : public Error {
 public:
  using Error::Error;
};

namespace detail {

template <class... Args>
std::string concat(Args&&... args) {
  std::ostringstream os;
  (os << ... << std::forward<Args>(args));
  return os.str();
}

}  // namespace detail

/// Dense row-major matrix. Rows are exposed as spans.
template <class T>
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, T fill = T{})
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept {
    return data_[r * cols_ + c];
  }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  bool operator==(const Matrix&) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<T> data_;
};

/// Validated N x J table of nonnegative counts with unit and feature labels.
class CountMatrix {
 public:
  CountMatrix() = default;

  std::size_t n_units() const noexcept { return counts_.rows(); }
  std::size_t n_features() const noexcept { return counts_.cols(); }
  const std::vector<std::string>& unit_ids() const noexcept { return unit_ids_; }
  const std::vector<std::string>& feature_names() const noexcept { return feature_names_; }
  const Matrix<std::int64_t>& counts() const noexcept { return counts_; }

  std::int64_t operator()(std::size_t i, std::size_t j) const noexcept { return counts_(i, j); }
  std::span<const std::int64_t> row(std::size_t i) const noexcept { return counts_.row(i); }

  bool operator==(const CountMatrix&) const = default;

 private:
  friend CountMatrix validate_counts(Matrix<std::int64_t>, std::vector<std::string>,
                                     std::vector<std::string>);
  Matrix<std::int64_t> counts_;
  std::vector<std::string> unit_ids_;
  std::vector<std::string> feature_names_;
};

namespace detail {

inline void require_distinct(const std::vector<std::string>& names, std::string_view what) {
  std::unordered_set<std::string> seen;
  for (const auto& n : names) {
    if (!seen.insert(n).second) {
      throw ValidationError(concat("duplicate ", what, " '", n, "'"));
    }
  }
}

}  // namespace detail

inline CountMatrix validate_counts(Matrix<std::int64_t> raw, std::vector<std::string> unit_ids,
                                   std::vector<std::string> feature_names) {
  if (raw.rows() == 0 || raw.cols() == 0) {
    throw ValidationError("count matrix is empty");
  }
  if (unit_ids.size() != raw.rows()) {
    throw ValidationError(detail::concat("expected ", raw.rows(), " unit ids, got ",
                                         unit_ids.size()));
  }
  if (feature_names.size() != raw.cols()) {
    throw ValidationError(detail::concat("expected ", raw.cols(), " feature names, got ",
                                         feature_names.size()));
  }
  detail::require_distinct(unit_ids, "unit id");
  detail::require_distinct(feature_names, "feature name");
  for (std::size_t i = 0; i < raw.rows(); ++i) {
    for (std::size_t j = 0; j < raw.cols(); ++j) {
      if (raw(i, j) < 0) {
        throw ValidationError(detail::concat("negative count ", raw(i, j), " at row ", i + 1,
                                             " (", unit_ids[i], "), column ", j + 1, " (",
                                             feature_names[j], ")"));
      }
    }
  }
  CountMatrix out;
  out.counts_ = std::move(raw);
  out.unit_ids_ = std::move(unit_ids);
  out.feature_names_ = std::move(feature_names);
  return out;
}

/// Convenience overload taking nested rows; raggedness is a validation error.
inline CountMatrix validate_counts(const std::vector<std::vector<std::int64_t>>& rows,
                                   std::vector<std::string> unit_ids,
                                   std::vector<std::string> feature_names) {
  const std::size_t cols = rows.empty() ? 0 : rows.front().size();
  Matrix<std::int64_t> raw(rows.size(), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != cols) {
      throw ValidationError(detail::concat("row ", i + 1, " has ", rows[i].size(),
                                           " entries, expected ", cols));
    }
    std::copy(rows[i].begin(), rows[i].end(), raw.row(i).begin());
  }
  return validate_counts(std::move(raw), std::move(unit_ids), std::move(feature_names));
}

/// Labels "<prefix>1".."<prefix>n".
inline std::vector<std::string> numbered_labels(std::string_view prefix, std::size_t n) {
  std::vector<std::string> out;
  out.reserve(n);
  for (std::size_t i = 1; i <= n; ++i) out.push_back(std::string(prefix) + std::to_string(i));
  return out;
}

inline constexpr double kSimplexTolerance = 1e-12;

/// Point on the probability simplex; construction renormalizes.
class SimplexVector {
 public:
  SimplexVector() = default;

  /// Throws DomainError unless weights are finite, nonnegative, and not all zero.
  explicit SimplexVector(std::vector<double> weights) : w_(std::move(weights)) {
    double total = 0.0;
    for (double v : w_) {
      if (!std::isfinite(v) || v < 0.0) {
        throw DomainError("simplex weights must be finite and nonnegative");
      }
      total += v;
    }
    if (w_.empty() || !(total > 0.0)) {
      throw DomainError("simplex weights must have a positive sum");
    }
    for (double& v : w_) v /= total;
  }

  std::size_t size() const noexcept { return w_.size(); }
  double operator[](std::size_t k) const noexcept { return w_[k]; }
  std::span<const double> weights() const noexcept { return w_; }
  const std::vector<double>& vector() const noexcept { return w_; }

  bool operator==(const SimplexVector&) const = default;

 private:
  std::vector<double> w_;
};

inline SimplexVector normalize_simplex(std::span<const double> v) {
  return SimplexVector(std::vector<double>(v.begin(), v.end()));
}

/// True when every entry is in [0,1] and the entries sum to one within tol.
inline bool is_simplex(std::span<const double> v, double tol = kSimplexTolerance) {
  if (v.empty()) return false;
  double total = 0.0;
  for (double x : v) {
    if (!(x >= 0.0 && x <= 1.0)) return false;
    total += x;
  }
  return std::abs(total - 1.0) <= tol;
}

/// K x J table of strictly positive Poisson rates.
class RateMatrix {
 public:
  RateMatrix() = default;
  explicit RateMatrix(Matrix<double> rates) : rates_(std::move(rates)) {
    if (rates_.empty()) throw DomainError("rate matrix is empty");
    for (double v : rates_.data()) {
      if (!std::isfinite(v) || !(v > 0.0)) {
        throw DomainError(detail::concat("rates must be positive and finite, got ", v));
      }
    }
  }
  RateMatrix(std::size_t k, std::size_t j, double fill) : RateMatrix(Matrix<double>(k, j, fill)) {}

  std::size_t n_clusters() const noexcept { return rates_.rows(); }
  std::size_t n_features() const noexcept { return rates_.cols(); }
  double operator()(std::size_t k, std::size_t j) const noexcept { return rates_(k, j); }
  std::span<const double> row(std::size_t k) const noexcept { return rates_.row(k); }
  const Matrix<double>& matrix() const noexcept { return rates_; }

  bool operator==(const RateMatrix&) const = default;

 private:
  Matrix<double> rates_;
};

struct Hyperparams {
  double alpha = 1.0;      // Gamma shape on rates
  double beta = 1.0;       // Gamma rate on rates
  double a = 0.0;          // Dirichlet concentration lower bound
  double b = 10.0;         // Dirichlet concentration upper bound
  double gamma_mix = 1.0;  // symmetric Dirichlet on mixture weights

  void validate() const {
    if (!(alpha > 0.0) || !(beta > 0.0)) throw ValidationError("alpha and beta must be positive");
    if (!(a >= 0.0) || !(b > a) || !std::isfinite(b)) {
      throw ValidationError("delta bounds must satisfy 0 <= a < b");
    }
    if (!(gamma_mix > 0.0)) throw ValidationError("gamma_mix must be positive");
  }

  bool operator==(const Hyperparams&) const = default;
};

enum class ModelKind { PM, MM, Mixture };

inline std::string_view to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::PM: return "pm";
    case ModelKind::MM: return "mm";
    case ModelKind::Mixture: return "mix";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  if (s == "pm") return ModelKind::PM;
  if (s == "mm") return ModelKind::MM;
  if (s == "mix" || s == "mixture") return ModelKind::Mixture;
  throw ValidationError(detail::concat("unknown model kind '", s, "'"));
}

/// Which partial-membership likelihood a posterior is built on. Blended is
/// the normalized Poisson with geometric-mean rate; WeightedProduct is the
/// unnormalized product of component densities raised to the memberships.
enum class PmForm { Blended, WeightedProduct };

inline std::string_view to_string(PmForm f) {
  return f == PmForm::Blended ? "blended" : "weighted";
}

inline PmForm parse_pm_form(std::string_view s) {
  if (s == "blended") return PmForm::Blended;
  if (s == "weighted") return PmForm::WeightedProduct;
  throw ValidationError(detail::concat("unknown PM likelihood form '", s, "'"));
}

struct ModelSpec {
  ModelKind kind = ModelKind::PM;
  std::size_t k = 1;
  Hyperparams hyper{};
  PmForm pm_form = PmForm::Blended;

  void validate() const {
    if (k < 1) throw ValidationError("number of clusters must be at least 1");
    hyper.validate();
  }

  bool operator==(const ModelSpec&) const = default;
};

/// One retained MCMC state. PM/MM draws carry tau and delta; mixture draws
/// carry pi and z (zero-based labels).
struct ChainDraw {
  std::int64_t iteration = 0;
  double log_posterior = 0.0;
  RateMatrix lambda;
  Matrix<double> tau;
  std::vector<double> delta;
  std::vector<double> pi;
  std::vector<std::size_t> z;

  bool operator==(const ChainDraw&) const = default;
};

inline bool has_memberships(ModelKind kind) { return kind != ModelKind::Mixture; }

inline void validate_draw(const ChainDraw& d, const ModelSpec& spec, std::size_t n_units,
                          std::size_t n_features) {
  const std::size_t k = spec.k;
  if (d.lambda.n_clusters() != k || d.lambda.n_features() != n_features) {
    throw ValidationError("draw rate matrix has the wrong shape");
  }
  if (has_memberships(spec.kind)) {
    if (d.tau.rows() != n_units || d.tau.cols() != k) {
      throw ValidationError("draw membership matrix has the wrong shape");
    }
    if (d.delta.size() != k) throw ValidationError("draw delta has the wrong length");
    if (!d.pi.empty() || !d.z.empty()) {
      throw ValidationError("membership draw must not carry mixture fields");
    }
    for (double v : d.delta) {
      if (!(v > spec.hyper.a && v < spec.hyper.b)) {
        throw ValidationError(detail::concat("delta entry ", v, " outside (a, b)"));
      }
    }
    for (std::size_t i = 0; i < n_units; ++i) {
      if (!is_simplex(d.tau.row(i), 1e-9)) {
        throw ValidationError(detail::concat("membership row ", i + 1, " is not on the simplex"));
      }
    }
  } else {
    if (d.pi.size() != k || !is_simplex(d.pi, 1e-9)) {
      throw ValidationError("draw mixture weights are not a simplex of length K");
    }
    if (d.z.size() != n_units) throw ValidationError("draw labels have the wrong length");
    for (auto l : d.z) {
      if (l >= k) throw ValidationError("draw label out of range");
    }
    if (!d.tau.empty() || !d.delta.empty()) {
      throw ValidationError("mixture draw must not carry membership fields");
    }
  }
}

struct Chain {
  ModelSpec spec;
  std::uint64_t seed = 0;
  std::int64_t n_iterations = 0;
  std::int64_t burn_in = 0;
  std::int64_t thin = 1;
  std::size_t n_units = 0;
  std::size_t n_features = 0;
  std::vector<ChainDraw> draws;
  std::map<std::string, double> acceptance_rates;

  bool operator==(const Chain&) const = default;

  void validate() const {
    spec.validate();
    for (std::size_t s = 0; s < draws.size(); ++s) {
      if (s > 0 && draws[s].iteration <= draws[s - 1].iteration) {
        throw ValidationError("chain draws must be strictly increasing in iteration");
      }
      validate_draw(draws[s], spec, n_units, n_features);
    }
    for (const auto& [name, rate] : acceptance_rates) {
      if (!(rate >= 0.0 && rate <= 1.0)) {
        throw ValidationError(detail::concat("acceptance rate for ", name, " outside [0,1]"));
      }
    }
  }
};

inline void require_compatible(const Chain& chain, const CountMatrix& x) {
  if (chain.n_units != x.n_units() || chain.n_features != x.n_features()) {
    throw ValidationError(detail::concat("chain was fitted to ", chain.n_units, "x",
                                         chain.n_features, " data but the data are ",
                                         x.n_units(), "x", x.n_features()));
  }
}

}  // namespace pmclust
