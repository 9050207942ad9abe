#pragma once

#include <qent/error.hpp>
#include <qent/measurement.hpp>
#include <qent/measures.hpp>
#include <qent/nnet.hpp>
#include <qent/states.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <vector>

namespace qent {

inline double mse(std::span<const double> predictions, std::span<const double> labels) {
  if (predictions.size() != labels.size()) throw DataError("mse: length mismatch");
  if (predictions.empty()) throw DataError("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) s += (labels[i] - predictions[i]) * (labels[i] - predictions[i]);
  return s / static_cast<double>(labels.size());
}

/// Boxplot summary. Quartiles are medians of the lower and upper halves (the overall median is
/// excluded from both halves when N is odd); whiskers are the extreme values inside
/// [q1 - 1.5 IQR, q3 + 1.5 IQR].
struct FiveNumber {
  double min = 0.0;
  double q1 = 0.0;
  double median = 0.0;
  double q3 = 0.0;
  double max = 0.0;
  std::size_t outliers = 0;
};

namespace detail {
inline double median_sorted(std::span<const double> v) {
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}
}  // namespace detail

inline FiveNumber five_number(std::vector<double> values) {
  if (values.empty()) throw DataError("five_number: empty input");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  FiveNumber f;
  f.median = detail::median_sorted(values);
  if (n == 1) {
    f.q1 = f.q3 = f.min = f.max = values[0];
    return f;
  }
  const std::size_t half = n / 2;
  const std::span<const double> all(values);
  f.q1 = detail::median_sorted(all.first(half));
  f.q3 = detail::median_sorted(all.last(half));
  const double iqr = f.q3 - f.q1;
  const double lo = f.q1 - 1.5 * iqr, hi = f.q3 + 1.5 * iqr;
  f.min = f.q1;
  f.max = f.q3;
  for (double v : values) {
    if (v < lo || v > hi) {
      ++f.outliers;
      continue;
    }
    f.min = std::min(f.min, v);
    f.max = std::max(f.max, v);
  }
  return f;
}

/// Pearson correlation coefficient.
inline double pcc(std::span<const double> xs, std::span<const double> ys) {
  if (xs.size() != ys.size()) throw DataError("pcc: length mismatch");
  if (xs.size() < 2) throw DataError("pcc: need at least two pairs");
  const double n = static_cast<double>(xs.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) mx += xs[i], my += ys[i];
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double dx = xs[i] - mx, dy = ys[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw DataError("pcc: zero variance");
  return std::clamp(sxy / (std::sqrt(sxx) * std::sqrt(syy)), -1.0, 1.0);
}

struct RelativeError {
  double threshold = 0.0;
  double mean = 0.0;  // NaN when no label exceeds the threshold
  std::size_t count = 0;
};

/// Mean |prediction - label| / |label| over samples with |label| > threshold.
inline RelativeError mean_relative_error(std::span<const double> predictions, std::span<const double> labels,
                                         double threshold) {
  if (predictions.size() != labels.size()) throw DataError("relative error: length mismatch");
  RelativeError r{threshold, 0.0, 0};
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (std::abs(labels[i]) <= threshold) continue;
    r.mean += std::abs(predictions[i] - labels[i]) / std::abs(labels[i]);
    ++r.count;
  }
  r.mean = r.count ? r.mean / double(r.count) : std::numeric_limits<double>::quiet_NaN();
  return r;
}

struct EvalReport {
  double mse = 0.0;
  FiveNumber squared_errors;
  std::vector<RelativeError> relative;  // thresholds 0.5 and 1.0
  std::size_t n = 0;
};

inline EvalReport evaluate_predictions(std::span<const double> predictions, std::span<const double> labels) {
  EvalReport r;
  r.mse = mse(predictions, labels);
  std::vector<double> sq(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) sq[i] = (predictions[i] - labels[i]) * (predictions[i] - labels[i]);
  r.squared_errors = five_number(std::move(sq));
  r.relative = {mean_relative_error(predictions, labels, 0.5), mean_relative_error(predictions, labels, 1.0)};
  r.n = labels.size();
  return r;
}

// ---------------------------------------------------------------------------
// Nonlocality study on (1 - p) I/9 + p |phi_gamma><phi_gamma|

struct NonlocalityRecord {
  double p = 0.0;
  double gamma = 0.0;
  double coherent_info = 0.0;
  double violation = 0.0;
  double prediction = 0.0;
  double squared_error = 0.0;
};

struct NonlocalityStudy {
  std::vector<NonlocalityRecord> records;
  double pcc_error_ci = 0.0;
  double pcc_error_violation = 0.0;
};

/// p from 0 to 1 at step 0.01; pairs with non-positive CI are dropped by the study.
inline std::vector<double> default_p_grid() {
  std::vector<double> g;
  for (int i = 0; i <= 100; ++i) g.push_back(i / 100.0);
  return g;
}

/// gamma from 0.6 at step 0.005, closed with sqrt(2)/2.
inline std::vector<double> default_gamma_grid() {
  std::vector<double> g;
  const double top = std::numbers::sqrt2 / 2;
  for (int i = 0;; ++i) {
    const double v = 0.6 + 0.005 * i;
    if (v > top - 1e-12) break;
    g.push_back(v);
  }
  g.push_back(top);
  return g;
}

inline DensityMatrix rho_p_gamma(double p, double gamma) {
  return nmr_mixture(p, phi_gamma(gamma).projector());
}

/// Runs a qutrit CI model (flat CGLMP features) over the (p, gamma) grid, keeping pairs with
/// positive coherent information.
inline NonlocalityStudy nonlocality_study(const nn::Model& model, std::span<const double> p_grid,
                                          std::span<const double> gamma_grid, Layout layout = Layout::Flat) {
  if (model.input_shape().size() != 36) throw ConfigError("nonlocality study needs a d=3 CGLMP model (36 inputs)");
  const auto bases = cglmp_bases(3);
  NonlocalityStudy study;
  for (double g : gamma_grid) {
    for (double p : p_grid) {
      const auto rho = rho_p_gamma(p, g);
      const double ci = coherent_information(rho);
      if (!(ci > 0.0)) continue;
      const auto table = outcome_distribution(rho, bases);
      const auto features = features_bipartite(table, layout);
      NonlocalityRecord r;
      r.p = p;
      r.gamma = g;
      r.coherent_info = ci;
      r.violation = cglmp_value(table, 3);
      r.prediction = nn::forward(model, features);
      r.squared_error = (r.prediction - ci) * (r.prediction - ci);
      study.records.push_back(r);
    }
  }
  if (study.records.empty()) throw DataError("nonlocality study: no (p, gamma) pair has positive coherent information");
  std::vector<double> err, ci, viol;
  for (const auto& r : study.records) {
    err.push_back(r.squared_error);
    ci.push_back(r.coherent_info);
    viol.push_back(r.violation);
  }
  study.pcc_error_ci = pcc(err, ci);
  study.pcc_error_violation = pcc(err, viol);
  return study;
}

}  // namespace qent
