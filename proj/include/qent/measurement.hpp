#pragma once

#include <qent/error.hpp>
#include <qent/linalg.hpp>
#include <qent/rng.hpp>
#include <qent/states.hpp>

#include <cmath>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace qent {

enum class Party { A, B };
enum class PauliAxis { X, Y };

/// Rank-1 projective measurement: one orthonormal vector per outcome.
struct MeasBasis {
  std::vector<CVec> vectors;
  int party = 0;
  int setting = 0;

  std::size_t outcomes() const { return vectors.size(); }

  /// Columns are the outcome vectors.
  CMat as_matrix() const {
    const auto d = static_cast<Eigen::Index>(vectors.size());
    CMat u(vectors.empty() ? 0 : vectors.front().size(), d);
    for (Eigen::Index k = 0; k < d; ++k) u.col(k) = vectors[static_cast<std::size_t>(k)];
    return u;
  }

  double max_gram_deviation() const {
    const CMat u = as_matrix();
    return (u.adjoint() * u - CMat::Identity(u.cols(), u.cols())).cwiseAbs().maxCoeff();
  }
};

/// CGLMP-optimal qudit bases. Alice: exp(i 2pi k (i + alpha_a) / d) / sqrt(d) with alpha = (0, 1/2);
/// Bob: exp(i 2pi l (-j + beta_b) / d) / sqrt(d) with beta = (1/4, -1/4). `setting` is 1 or 2.
inline MeasBasis cglmp_basis(std::size_t d, Party party, int setting) {
  if (d < 2) throw ConfigError("cglmp_basis needs d >= 2");
  if (setting != 1 && setting != 2) throw ConfigError("cglmp_basis setting must be 1 or 2");
  const double phase = party == Party::A ? (setting == 1 ? 0.0 : 0.5) : (setting == 1 ? 0.25 : -0.25);
  const double sign = party == Party::A ? 1.0 : -1.0;
  const double norm = 1.0 / std::sqrt(static_cast<double>(d));
  MeasBasis basis;
  basis.party = party == Party::A ? 0 : 1;
  basis.setting = setting;
  for (std::size_t outcome = 0; outcome < d; ++outcome) {
    CVec v(static_cast<Eigen::Index>(d));
    for (std::size_t k = 0; k < d; ++k) {
      const double angle = 2.0 * std::numbers::pi * double(k) * (sign * double(outcome) + phase) / double(d);
      v(static_cast<Eigen::Index>(k)) = norm * std::polar(1.0, angle);
    }
    basis.vectors.push_back(std::move(v));
  }
  return basis;
}

/// Eigenbasis of sigma_x or sigma_y; outcome 0 is the +1 eigenvector.
inline MeasBasis pauli_basis(PauliAxis axis) {
  const double r = 1.0 / std::numbers::sqrt2;
  const cplx second = axis == PauliAxis::X ? cplx(1.0, 0.0) : cplx(0.0, 1.0);
  MeasBasis basis;
  basis.setting = axis == PauliAxis::X ? 0 : 1;
  CVec plus(2), minus(2);
  plus << r, r * second;
  minus << r, -r * second;
  basis.vectors = {plus, minus};
  return basis;
}

/// p(a_1..a_n | x_1..x_n), dense. Settings tuples are row-major blocks; within a block the
/// outcome tuple is row-major.
class ProbTable {
 public:
  ProbTable() = default;
  ProbTable(std::vector<std::size_t> settings, std::vector<std::size_t> outcomes)
      : settings_(std::move(settings)), outcomes_(std::move(outcomes)) {
    if (settings_.size() != outcomes_.size() || settings_.empty())
      throw ConfigError("ProbTable needs one settings and one outcomes count per party");
    probs_.assign(settings_blocks() * block_size(), 0.0);
  }

  std::size_t parties() const { return settings_.size(); }
  const std::vector<std::size_t>& settings() const { return settings_; }
  const std::vector<std::size_t>& outcomes() const { return outcomes_; }
  std::size_t settings_blocks() const { return product(settings_); }
  std::size_t block_size() const { return product(outcomes_); }
  std::size_t size() const { return probs_.size(); }

  double& operator[](std::size_t i) { return probs_[i]; }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::vector<double>& data() { return probs_; }
  const std::vector<double>& data() const { return probs_; }

  double& at(std::size_t settings_index, std::size_t outcome_index) {
    return probs_[settings_index * block_size() + outcome_index];
  }
  double at(std::size_t settings_index, std::size_t outcome_index) const {
    return probs_[settings_index * block_size() + outcome_index];
  }

  /// Bipartite accessor p(a, b | x, y), 0-based settings.
  double p(std::size_t x, std::size_t y, std::size_t a, std::size_t b) const {
    return at(x * settings_[1] + y, a * outcomes_[1] + b);
  }

  bool same_shape(const ProbTable& o) const { return settings_ == o.settings_ && outcomes_ == o.outcomes_; }

  /// Throws DataError unless entries lie in [-1e-12, 1 + 1e-12] and each block sums to 1 within 1e-10.
  void validate() const {
    for (std::size_t s = 0; s < settings_blocks(); ++s) {
      double sum = 0.0;
      for (std::size_t o = 0; o < block_size(); ++o) {
        const double v = at(s, o);
        if (!(v >= -1e-12 && v <= 1.0 + 1e-12))
          throw DataError("probability out of range in settings block " + std::to_string(s));
        sum += v;
      }
      if (std::abs(sum - 1.0) > 1e-10) throw DataError("settings block " + std::to_string(s) + " does not sum to 1");
    }
  }

 private:
  static std::size_t product(const std::vector<std::size_t>& v) {
    std::size_t p = 1;
    for (auto x : v) p *= x;
    return p;
  }

  std::vector<std::size_t> settings_;
  std::vector<std::size_t> outcomes_;
  std::vector<double> probs_;
};

/// Per party, the list of measurement settings available to it.
using PartyBases = std::vector<std::vector<MeasBasis>>;

inline PartyBases cglmp_bases(std::size_t d) {
  return {{cglmp_basis(d, Party::A, 1), cglmp_basis(d, Party::A, 2)},
          {cglmp_basis(d, Party::B, 1), cglmp_basis(d, Party::B, 2)}};
}

inline PartyBases pauli_xy_bases(std::size_t parties) {
  return PartyBases(parties, {pauli_basis(PauliAxis::X), pauli_basis(PauliAxis::Y)});
}

namespace detail {

inline void check_bases(const Dims& dims, const PartyBases& bases) {
  if (bases.size() != dims.size()) throw ConfigError("one basis list per party required");
  for (std::size_t i = 0; i < dims.size(); ++i) {
    if (bases[i].empty()) throw ConfigError("party " + std::to_string(i) + " has no measurement");
    for (const auto& b : bases[i]) {
      if (b.outcomes() != dims[i] || b.vectors.front().size() != static_cast<Eigen::Index>(dims[i]))
        throw ConfigError("basis dimension does not match party " + std::to_string(i));
    }
  }
}

inline ProbTable empty_table(const Dims& dims, const PartyBases& bases) {
  std::vector<std::size_t> settings;
  for (const auto& b : bases) settings.push_back(b.size());
  return ProbTable(settings, dims);
}

/// Joint measurement unitary for a settings tuple: columns are tensor products of outcome vectors.
inline CMat joint_basis(const PartyBases& bases, const std::vector<std::size_t>& setting_tuple) {
  CMat u = CMat::Ones(1, 1);
  for (std::size_t i = 0; i < bases.size(); ++i) u = kron(u, bases[i][setting_tuple[i]].as_matrix());
  return u;
}

inline void check_real(const CVec& values) {
  for (Eigen::Index i = 0; i < values.size(); ++i)
    if (std::abs(values(i).imag()) > 1e-12) throw DataError("outcome probability has an imaginary residue");
}

}  // namespace detail

/// Born-rule statistics Tr((tensor of projectors) rho), exact.
inline ProbTable outcome_distribution(const DensityMatrix& rho, const PartyBases& bases) {
  detail::check_bases(rho.dims(), bases);
  ProbTable table = detail::empty_table(rho.dims(), bases);
  std::vector<std::size_t> nsettings;
  for (const auto& b : bases) nsettings.push_back(b.size());
  for (std::size_t s = 0; s < table.settings_blocks(); ++s) {
    const CMat u = detail::joint_basis(bases, unravel(s, nsettings));
    const CMat rho_u = rho.mat() * u;
    const CVec diag = (u.adjoint().array() * rho_u.transpose().array()).rowwise().sum();
    detail::check_real(diag);
    for (std::size_t o = 0; o < table.block_size(); ++o) table.at(s, o) = diag(static_cast<Eigen::Index>(o)).real();
  }
  return table;
}

/// Pure-state shortcut |<v|psi>|^2.
inline ProbTable outcome_distribution(const PureState& psi, const PartyBases& bases) {
  detail::check_bases(psi.dims(), bases);
  ProbTable table = detail::empty_table(psi.dims(), bases);
  std::vector<std::size_t> nsettings;
  for (const auto& b : bases) nsettings.push_back(b.size());
  for (std::size_t s = 0; s < table.settings_blocks(); ++s) {
    const CVec amp = detail::joint_basis(bases, unravel(s, nsettings)).adjoint() * psi.amps();
    for (std::size_t o = 0; o < table.block_size(); ++o) table.at(s, o) = std::norm(amp(static_cast<Eigen::Index>(o)));
  }
  return table;
}

/// Finite-shot estimate: per settings block, multinomial counts over `shots` trials divided by shots.
inline ProbTable sample_shots(const ProbTable& exact, std::size_t shots, Rng& rng) {
  if (shots == 0) throw ConfigError("shots must be positive");
  ProbTable out = exact;
  for (std::size_t s = 0; s < exact.settings_blocks(); ++s) {
    std::size_t remaining = shots;
    double mass = 1.0;
    for (std::size_t o = 0; o < exact.block_size(); ++o) {
      const double p = std::max(0.0, exact.at(s, o));
      std::size_t k = remaining;
      if (o + 1 < exact.block_size()) {
        const double q = mass > 0.0 ? std::clamp(p / mass, 0.0, 1.0) : 0.0;
        k = std::binomial_distribution<std::size_t>(remaining, q)(rng.engine());
      }
      out.at(s, o) = static_cast<double>(k) / static_cast<double>(shots);
      remaining -= k;
      mass -= p;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Feature layouts

enum class Layout { Flat, Grid };

namespace detail {
inline void check_bipartite_shape(const ProbTable& t) {
  if (t.parties() != 2 || t.settings() != std::vector<std::size_t>{2, 2} || t.outcomes()[0] != t.outcomes()[1])
    throw ConfigError("expected a bipartite table with 2 settings and d outcomes per party");
}
}  // namespace detail

/// Flat: index ((x * 2) + y) d^2 + a d + b (0-based settings).
/// Grid: (2d) x (2d) row-major, row x d + a (Alice), column y d + b (Bob).
inline std::vector<double> features_bipartite(const ProbTable& table, Layout layout) {
  detail::check_bipartite_shape(table);
  const std::size_t d = table.outcomes()[0];
  if (layout == Layout::Flat) return table.data();
  const std::size_t side = 2 * d;
  std::vector<double> grid(side * side);
  for (std::size_t x = 0; x < 2; ++x)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b) grid[(x * d + a) * side + (y * d + b)] = table.p(x, y, a, b);
  return grid;
}

inline ProbTable table_from_bipartite_features(std::span<const double> features, std::size_t d, Layout layout) {
  if (features.size() != 4 * d * d) throw DataError("bipartite feature vector must have length 4 d^2");
  ProbTable table({2, 2}, {d, d});
  if (layout == Layout::Flat) {
    std::copy(features.begin(), features.end(), table.data().begin());
    return table;
  }
  const std::size_t side = 2 * d;
  for (std::size_t x = 0; x < 2; ++x)
    for (std::size_t y = 0; y < 2; ++y)
      for (std::size_t a = 0; a < d; ++a)
        for (std::size_t b = 0; b < d; ++b)
          table.at(x * 2 + y, a * d + b) = features[(x * d + a) * side + (y * d + b)];
  return table;
}

/// Length 64: 8 (4 x1 + 2 x2 + x3) + (4 a1 + 2 a2 + a3), x = 0 for sigma_x, 1 for sigma_y.
inline std::vector<double> features_threequbit(const ProbTable& table) {
  if (table.parties() != 3 || table.settings() != std::vector<std::size_t>{2, 2, 2} ||
      table.outcomes() != std::vector<std::size_t>{2, 2, 2})
    throw ConfigError("expected a three-qubit table with 2 settings and 2 outcomes per party");
  return table.data();
}

inline ProbTable table_from_threequbit_features(std::span<const double> features) {
  if (features.size() != 64) throw DataError("three-qubit feature vector must have length 64");
  ProbTable table({2, 2, 2}, {2, 2, 2});
  std::copy(features.begin(), features.end(), table.data().begin());
  return table;
}

// ---------------------------------------------------------------------------
// CGLMP

/// CGLMP Bell value I_d (classical bound 2) of a bipartite table whose settings are ordered
/// (A1, A2) x (B1, B2).
inline double cglmp_value(const ProbTable& table, std::size_t d) {
  detail::check_bipartite_shape(table);
  if (table.outcomes()[0] != d) throw ConfigError("table outcome count does not match d");
  const auto D = static_cast<long>(d);
  auto mod = [D](long v) { return static_cast<std::size_t>(((v % D) + D) % D); };
  // P(A_x = B_y + k)
  auto a_eq_b = [&](std::size_t x, std::size_t y, long k) {
    double s = 0.0;
    for (long j = 0; j < D; ++j) s += table.p(x, y, mod(j + k), static_cast<std::size_t>(j));
    return s;
  };
  // P(B_y = A_x + k)
  auto b_eq_a = [&](std::size_t x, std::size_t y, long k) {
    double s = 0.0;
    for (long j = 0; j < D; ++j) s += table.p(x, y, static_cast<std::size_t>(j), mod(j + k));
    return s;
  };
  double total = 0.0;
  for (long k = 0; k < D / 2; ++k) {
    const double weight = 1.0 - 2.0 * double(k) / double(D - 1);
    const double plus = a_eq_b(0, 0, k) + b_eq_a(1, 0, k + 1) + a_eq_b(1, 1, k) + b_eq_a(0, 1, k);
    const double minus = a_eq_b(0, 0, -k - 1) + b_eq_a(1, 0, -k) + a_eq_b(1, 1, -k - 1) + b_eq_a(0, 1, -k - 1);
    total += weight * (plus - minus);
  }
  return total;
}

/// CGLMP value of a state measured in the CGLMP-optimal bases.
inline double cglmp_violation(const DensityMatrix& rho) {
  if (rho.parties() != 2 || rho.dims()[0] != rho.dims()[1]) throw ConfigError("cglmp_violation needs dims [d, d]");
  return cglmp_value(outcome_distribution(rho, cglmp_bases(rho.dims()[0])), rho.dims()[0]);
}

inline double cglmp_violation(const PureState& psi) {
  if (psi.parties() != 2 || psi.dims()[0] != psi.dims()[1]) throw ConfigError("cglmp_violation needs dims [d, d]");
  return cglmp_value(outcome_distribution(psi, cglmp_bases(psi.dims()[0])), psi.dims()[0]);
}

/// Golden-section maximization of f on [lo, hi].
template <class F>
double golden_section_argmax(F&& f, double lo, double hi, double tol = 1e-12) {
  const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a), e = a + inv_phi * (b - a);
  double fc = f(c), fe = f(e);
  while (b - a > tol) {
    if (fc > fe) {
      b = e, e = c, fe = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c, c = e, fc = fe;
      e = a + inv_phi * (b - a);
      fe = f(e);
    }
  }
  return 0.5 * (a + b);
}

/// gamma maximizing the CGLMP value of psi3_mv (refines the printed 0.617).
inline double optimal_psi3_mv_gamma() {
  return golden_section_argmax([](double g) { return cglmp_violation(psi3_mv(g)); }, 0.55, 0.7);
}

}  // namespace qent
