#pragma once

#include <qent/error.hpp>
#include <qent/linalg.hpp>
#include <qent/rng.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace qent {

inline constexpr double kNormTol = 1e-12;
inline constexpr double kHermitianTol = 1e-12;
inline constexpr double kTraceTol = 1e-12;
inline constexpr double kEigenFloor = -1e-10;

/// gamma printed for the maximally CGLMP-violating qutrit state.
inline constexpr double kPsi3MvGamma = 0.617;
/// Same gamma maximized numerically (golden section on the CGLMP value, 1e-12 tolerance).
inline constexpr double kPsi3MvGammaOptimal = 0.616894034111568;

namespace detail {
inline void check_dims(const Dims& dims) {
  if (dims.empty()) throw ConfigError("dims must be non-empty");
  for (auto d : dims)
    if (d < 2) throw ConfigError("every subsystem dimension must be >= 2, got " + std::to_string(d));
}
}  // namespace detail

class DensityMatrix;

/// Unit vector on a tensor product of subsystems.
class PureState {
 public:
  PureState(CVec amps, Dims dims) : amps_(std::move(amps)), dims_(std::move(dims)) {
    detail::check_dims(dims_);
    if (static_cast<std::size_t>(amps_.size()) != total_dim(dims_))
      throw ConfigError("amplitude count " + std::to_string(amps_.size()) + " does not match dims product " +
                        std::to_string(total_dim(dims_)));
    if (std::abs(amps_.norm() - 1.0) > kNormTol)
      throw ConfigError("state is not normalized (norm " + std::to_string(amps_.norm()) + ")");
  }

  /// Normalizes before validating.
  static PureState normalized(CVec amps, Dims dims) {
    const double n = amps.norm();
    if (!(n > 0.0)) throw ConfigError("cannot normalize a zero vector");
    amps /= n;
    return PureState(std::move(amps), std::move(dims));
  }

  const CVec& amps() const { return amps_; }
  const Dims& dims() const { return dims_; }
  std::size_t dim() const { return static_cast<std::size_t>(amps_.size()); }
  std::size_t parties() const { return dims_.size(); }

  DensityMatrix projector() const;

  friend bool operator==(const PureState& a, const PureState& b) {
    return a.dims_ == b.dims_ && a.amps_ == b.amps_;
  }

 private:
  CVec amps_;
  Dims dims_;
};

/// Hermitian, unit-trace, positive semidefinite matrix with its subsystem signature.
class DensityMatrix {
 public:
  DensityMatrix(CMat mat, Dims dims) : mat_(std::move(mat)), dims_(std::move(dims)) {
    detail::check_dims(dims_);
    const auto n = total_dim(dims_);
    if (static_cast<std::size_t>(mat_.rows()) != n || static_cast<std::size_t>(mat_.cols()) != n)
      throw ConfigError("matrix shape does not match dims product " + std::to_string(n));
    if (max_hermitian_deviation(mat_) > kHermitianTol) throw ConfigError("density matrix is not Hermitian");
    if (std::abs(mat_.trace() - cplx(1.0)) > kTraceTol) throw ConfigError("density matrix trace is not 1");
    if (hermitian_eigenvalues(mat_).minCoeff() < kEigenFloor)
      throw ConfigError("density matrix has a negative eigenvalue");
  }

  /// Symmetrizes and rescales to unit trace, then validates.
  static DensityMatrix normalized(CMat mat, Dims dims) {
    CMat h = 0.5 * (mat + mat.adjoint());
    const double tr = h.trace().real();
    if (!(tr > 0.0)) throw ConfigError("matrix has non-positive trace");
    h /= tr;
    return DensityMatrix(std::move(h), std::move(dims));
  }

  static DensityMatrix maximally_mixed(const Dims& dims) {
    const auto n = static_cast<Eigen::Index>(total_dim(dims));
    return DensityMatrix(CMat::Identity(n, n) / static_cast<double>(n), dims);
  }

  const CMat& mat() const { return mat_; }
  const Dims& dims() const { return dims_; }
  std::size_t dim() const { return static_cast<std::size_t>(mat_.rows()); }
  std::size_t parties() const { return dims_.size(); }
  double purity() const { return (mat_ * mat_).trace().real(); }

  friend bool operator==(const DensityMatrix& a, const DensityMatrix& b) {
    return a.dims_ == b.dims_ && a.mat_ == b.mat_;
  }

 private:
  CMat mat_;
  Dims dims_;
};

inline DensityMatrix PureState::projector() const {
  CMat p = amps_ * amps_.adjoint();
  // exact Hermitian symmetry; the outer product is only Hermitian up to rounding of conj()
  p = 0.5 * (p + p.adjoint());
  return DensityMatrix(std::move(p), dims_);
}

// ---------------------------------------------------------------------------
// Random states

/// Haar-random pure state: normalized vector of i.i.d. complex Gaussians.
inline PureState haar_pure(const Dims& dims, Rng& rng) {
  detail::check_dims(dims);
  CVec v(static_cast<Eigen::Index>(total_dim(dims)));
  for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.complex_normal();
  return PureState::normalized(std::move(v), dims);
}

/// Product of independent Haar-random single-party states.
inline PureState separable_pure(const Dims& dims, Rng& rng) {
  detail::check_dims(dims);
  CVec v = CVec::Ones(1);
  for (auto d : dims) v = kron(v, haar_pure({d}, rng).amps());
  return PureState::normalized(std::move(v), dims);
}

/// Hilbert-Schmidt-induced random mixed state G G^dagger / Tr, G of shape D x rank.
/// rank == 0 means full rank.
inline DensityMatrix hs_mixed(const Dims& dims, std::size_t rank, Rng& rng) {
  detail::check_dims(dims);
  const auto n = total_dim(dims);
  if (rank == 0) rank = n;
  if (rank < 1 || rank > n)
    throw ConfigError("rank " + std::to_string(rank) + " outside [1, " + std::to_string(n) + "]");
  CMat g(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(rank));
  for (Eigen::Index c = 0; c < g.cols(); ++c)
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = rng.complex_normal();
  return DensityMatrix::normalized(g * g.adjoint(), dims);
}

// ---------------------------------------------------------------------------
// Named states

inline PureState maximally_entangled(std::size_t d) {
  if (d < 2) throw ConfigError("maximally entangled state needs d >= 2");
  CVec v = CVec::Zero(static_cast<Eigen::Index>(d * d));
  for (std::size_t i = 0; i < d; ++i) v(static_cast<Eigen::Index>(i * d + i)) = 1.0 / std::sqrt(double(d));
  return PureState::normalized(std::move(v), {d, d});
}

/// gamma(|00> + |22>) + sqrt(1 - 2 gamma^2)|11>
inline PureState psi3_mv(double gamma = kPsi3MvGamma) {
  if (!(gamma >= 0.0 && gamma <= std::numbers::sqrt2 / 2 + 1e-15))
    throw ConfigError("psi3_mv gamma must lie in [0, sqrt(2)/2]");
  CVec v = CVec::Zero(9);
  v(0) = gamma;
  v(8) = gamma;
  v(4) = std::sqrt(std::max(0.0, 1.0 - 2.0 * gamma * gamma));
  return PureState::normalized(std::move(v), {3, 3});
}

/// gamma(|00> + |11>) + sqrt(1 - 2 gamma^2)|22>, gamma in [0.6, sqrt(2)/2].
inline PureState phi_gamma(double gamma) {
  if (!(gamma >= 0.6 - 1e-15 && gamma <= std::numbers::sqrt2 / 2 + 1e-15))
    throw ConfigError("phi_gamma gamma must lie in [0.6, sqrt(2)/2], got " + std::to_string(gamma));
  CVec v = CVec::Zero(9);
  v(0) = gamma;
  v(4) = gamma;
  v(8) = std::sqrt(std::max(0.0, 1.0 - 2.0 * gamma * gamma));
  return PureState::normalized(std::move(v), {3, 3});
}

namespace detail {
inline CVec qubit_basis_sum(std::initializer_list<int> kets) {
  CVec v = CVec::Zero(8);
  for (int k : kets) v(k) = 1.0;
  return v;
}
}  // namespace detail

inline PureState ghz() {
  return PureState::normalized(detail::qubit_basis_sum({0b000, 0b111}), {2, 2, 2});
}

inline PureState w_state() {
  return PureState::normalized(detail::qubit_basis_sum({0b001, 0b010, 0b100}), {2, 2, 2});
}

inline PureState wbar_state() {
  return PureState::normalized(detail::qubit_basis_sum({0b110, 0b101, 0b011}), {2, 2, 2});
}

namespace detail {
inline void check_unit_interval(double p, const char* what) {
  if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(what) + " must lie in [0, 1]");
}
}  // namespace detail

/// sqrt(p)|W> + sqrt(1-p)|Wbar>
inline PureState varphi(double p) {
  detail::check_unit_interval(p, "p");
  CVec v = std::sqrt(p) * w_state().amps() + std::sqrt(1.0 - p) * wbar_state().amps();
  return PureState(std::move(v), {2, 2, 2});
}

/// sqrt(p)|GHZ> + sqrt((1-p)/2)(|W> + |Wbar>)
inline PureState varphi_prime(double p) {
  detail::check_unit_interval(p, "p");
  CVec v = std::sqrt(p) * ghz().amps() + std::sqrt((1.0 - p) / 2.0) * (w_state().amps() + wbar_state().amps());
  return PureState(std::move(v), {2, 2, 2});
}

/// Lookup by name: me (params {d}), psi3_mv ({} or {gamma}), ghz, w, wbar, varphi ({p}),
/// varphi_prime ({p}), phi_gamma ({gamma}).
inline PureState named_state(std::string_view name, std::span<const double> params = {}) {
  auto need = [&](std::size_t n) {
    if (params.size() != n)
      throw ConfigError(std::string(name) + " expects " + std::to_string(n) + " parameter(s), got " +
                        std::to_string(params.size()));
  };
  if (name == "me") {
    need(1);
    if (params[0] < 2 || params[0] != std::floor(params[0])) throw ConfigError("me(d) needs integer d >= 2");
    return maximally_entangled(static_cast<std::size_t>(params[0]));
  }
  if (name == "psi3_mv") {
    if (params.empty()) return psi3_mv();
    need(1);
    return psi3_mv(params[0]);
  }
  if (name == "ghz") return need(0), ghz();
  if (name == "w") return need(0), w_state();
  if (name == "wbar") return need(0), wbar_state();
  if (name == "varphi") return need(1), varphi(params[0]);
  if (name == "varphi_prime") return need(1), varphi_prime(params[0]);
  if (name == "phi_gamma") return need(1), phi_gamma(params[0]);
  throw ConfigError("unknown state name '" + std::string(name) + "'");
}

// ---------------------------------------------------------------------------
// Mixtures

/// (1 - eps) I/D + eps rho0
inline DensityMatrix nmr_mixture(double eps, const DensityMatrix& rho0) {
  if (!(eps >= 0.0 && eps <= 1.0)) throw ConfigError("eps must lie in [0, 1]");
  const auto n = static_cast<Eigen::Index>(rho0.dim());
  CMat m = eps * rho0.mat();
  m.diagonal().array() += (1.0 - eps) / static_cast<double>(n);
  return DensityMatrix(std::move(m), rho0.dims());
}

/// alpha rho0 + beta I/d^2 + gamma |me_d><me_d|
inline DensityMatrix three_way_mixture(double alpha, double beta, double gamma, const DensityMatrix& rho0,
                                       std::size_t d) {
  if (alpha < 0.0 || beta < 0.0 || gamma < 0.0) throw ConfigError("mixture coefficients must be non-negative");
  if (std::abs(alpha + beta + gamma - 1.0) > 1e-12) throw ConfigError("mixture coefficients must sum to 1");
  if (rho0.dims() != Dims{d, d}) throw ConfigError("rho0 must live on [d, d]");
  const auto me = maximally_entangled(d).amps();
  CMat m = alpha * rho0.mat() + gamma * (me * me.adjoint());
  m.diagonal().array() += beta / static_cast<double>(d * d);
  m = 0.5 * (m + m.adjoint());
  return DensityMatrix(std::move(m), rho0.dims());
}

/// normalize(alpha psi + (1 - alpha) psi_sep); redraws psi_sep (separable, same dims) while the
/// combination is numerically zero.
inline PureState pure_interpolation(double alpha, const PureState& psi, PureState psi_sep, Rng& rng) {
  detail::check_unit_interval(alpha, "alpha");
  if (psi.dims() != psi_sep.dims()) throw ConfigError("pure_interpolation: dims mismatch");
  for (;;) {
    CVec v = alpha * psi.amps() + (1.0 - alpha) * psi_sep.amps();
    if (v.norm() >= 1e-8) return PureState::normalized(std::move(v), psi.dims());
    psi_sep = separable_pure(psi.dims(), rng);
  }
}

// ---------------------------------------------------------------------------
// Partial trace

/// Reduced state on the subsystems listed in `keep` (kept in ascending order).
inline DensityMatrix partial_trace(const DensityMatrix& rho, std::vector<std::size_t> keep) {
  const auto& dims = rho.dims();
  std::sort(keep.begin(), keep.end());
  keep.erase(std::unique(keep.begin(), keep.end()), keep.end());
  if (keep.empty() || keep.size() >= dims.size()) throw ConfigError("keep must be a nonempty strict subset");
  if (keep.back() >= dims.size()) throw ConfigError("keep index out of range");

  std::vector<std::size_t> traced;
  for (std::size_t k = 0; k < dims.size(); ++k)
    if (!std::binary_search(keep.begin(), keep.end(), k)) traced.push_back(k);

  Dims kept_dims, traced_dims;
  for (auto k : keep) kept_dims.push_back(dims[k]);
  for (auto k : traced) traced_dims.push_back(dims[k]);
  const auto nk = total_dim(kept_dims);
  const auto nt = total_dim(traced_dims);

  // full index for every (kept, traced) pair
  std::vector<std::size_t> full(nk * nt);
  std::vector<std::size_t> idx(dims.size());
  for (std::size_t a = 0; a < nk; ++a) {
    const auto ka = unravel(a, kept_dims);
    for (std::size_t t = 0; t < nt; ++t) {
      const auto kt = unravel(t, traced_dims);
      for (std::size_t i = 0; i < keep.size(); ++i) idx[keep[i]] = ka[i];
      for (std::size_t i = 0; i < traced.size(); ++i) idx[traced[i]] = kt[i];
      full[a * nt + t] = ravel(idx, dims);
    }
  }

  const CMat& m = rho.mat();
  CMat out = CMat::Zero(static_cast<Eigen::Index>(nk), static_cast<Eigen::Index>(nk));
  for (std::size_t a = 0; a < nk; ++a)
    for (std::size_t b = 0; b < nk; ++b) {
      cplx s = 0.0;
      for (std::size_t t = 0; t < nt; ++t)
        s += m(static_cast<Eigen::Index>(full[a * nt + t]), static_cast<Eigen::Index>(full[b * nt + t]));
      out(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) = s;
    }
  out = 0.5 * (out + out.adjoint());
  const double tr = out.trace().real();
  out /= tr;
  return DensityMatrix(std::move(out), std::move(kept_dims));
}

}  // namespace qent
