#pragma once

#include <qent/error.hpp>
#include <qent/linalg.hpp>
#include <qent/rng.hpp>
#include <qent/states.hpp>

#include <cmath>
#include <vector>

namespace qent {

/// Eigenvalues at or below this are treated as exact zeros in 0 log 0.
inline constexpr double kEntropyClamp = 1e-12;

/// Shannon entropy (bits) of a spectrum; entries <= 1e-12 (including negatives) contribute 0.
inline double spectrum_entropy(const RVec& eigenvalues) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i) {
    const double l = eigenvalues(i);
    if (l > kEntropyClamp) s -= l * std::log2(l);
  }
  return s;
}

inline double von_neumann_entropy(const CMat& rho) {
  if (max_hermitian_deviation(rho) > kHermitianTol) throw DataError("von_neumann_entropy: matrix is not Hermitian");
  return spectrum_entropy(hermitian_eigenvalues(rho));
}

inline double von_neumann_entropy(const DensityMatrix& rho) { return spectrum_entropy(hermitian_eigenvalues(rho.mat())); }

/// I_C = S(rho_A) - S(rho), in bits.
inline double coherent_information(const DensityMatrix& rho) {
  if (rho.parties() != 2) throw ConfigError("coherent_information needs a bipartite state");
  return von_neumann_entropy(partial_trace(rho, {0})) - von_neumann_entropy(rho);
}

/// Pure input: S(rho) = 0 and S(rho_A) from the Schmidt coefficients.
inline double coherent_information(const PureState& psi) {
  if (psi.parties() != 2) throw ConfigError("coherent_information needs a bipartite state");
  const auto da = static_cast<Eigen::Index>(psi.dims()[0]);
  const auto db = static_cast<Eigen::Index>(psi.dims()[1]);
  // row-major amplitudes -> (da x db) coefficient matrix
  const CMat c = Eigen::Map<const Eigen::Matrix<cplx, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
      psi.amps().data(), da, db);
  const CMat rho_a = c * c.adjoint();
  return spectrum_entropy(hermitian_eigenvalues(rho_a));
}

// ---------------------------------------------------------------------------
// Geometric measure of entanglement

struct GmeOptions {
  std::size_t restarts = 20;
  std::size_t max_iters = 500;
  double tol = 1e-10;
  /// Record the overlap after every single-party update (per restart, starting with the
  /// initial overlap).
  bool keep_trace = false;
};

struct GmeResult {
  double gme = 1.0;
  double overlap = 0.0;
  std::size_t restarts_used = 0;
  bool converged = false;
  std::vector<std::vector<double>> trace;
};

namespace detail {

/// v_i[k] = <phi_others| psi> with party i left open.
inline CVec open_contraction(const PureState& psi, const std::vector<CVec>& factors, std::size_t open) {
  const auto& dims = psi.dims();
  CVec v = CVec::Zero(static_cast<Eigen::Index>(dims[open]));
  std::vector<std::size_t> idx(dims.size(), 0);
  for (std::size_t flat = 0; flat < psi.dim(); ++flat) {
    cplx w = psi.amps()(static_cast<Eigen::Index>(flat));
    for (std::size_t p = 0; p < dims.size(); ++p)
      if (p != open) w *= std::conj(factors[p](static_cast<Eigen::Index>(idx[p])));
    v(static_cast<Eigen::Index>(idx[open])) += w;
    // increment row-major multi-index
    for (std::size_t p = dims.size(); p-- > 0;) {
      if (++idx[p] < dims[p]) break;
      idx[p] = 0;
    }
  }
  return v;
}

inline double product_overlap(const PureState& psi, const std::vector<CVec>& factors) {
  const CVec v = open_contraction(psi, factors, 0);
  return std::abs(factors[0].dot(v));
}

}  // namespace detail

/// Largest overlap with a fully product state by alternating single-party maximization
/// (each update is the exact optimum with the other factors fixed), best of several
/// Haar-random starts. gme = 1 - overlap^2.
inline GmeResult gme_pure(const PureState& psi, Rng& rng, const GmeOptions& opt = {}) {
  if (psi.parties() < 2) throw ConfigError("gme_pure needs at least two parties");
  if (opt.restarts == 0) throw ConfigError("gme_pure needs at least one restart");
  GmeResult result;
  double best = -1.0;
  for (std::size_t r = 0; r < opt.restarts; ++r) {
    Rng local = rng.split(r);
    std::vector<CVec> factors;
    for (auto d : psi.dims()) factors.push_back(haar_pure({d}, local).amps());
    double overlap = detail::product_overlap(psi, factors);
    std::vector<double> trace;
    if (opt.keep_trace) trace.push_back(overlap);
    bool converged = false;
    for (std::size_t it = 0; it < opt.max_iters; ++it) {
      const double before = overlap;
      for (std::size_t p = 0; p < psi.parties(); ++p) {
        const CVec v = detail::open_contraction(psi, factors, p);
        const double n = v.norm();
        if (n > 0.0) factors[p] = v / n;
        overlap = n;
        if (opt.keep_trace) trace.push_back(overlap);
      }
      if (overlap - before < opt.tol) {
        converged = true;
        break;
      }
    }
    result.restarts_used = r + 1;
    result.converged = result.converged || converged;
    if (opt.keep_trace) result.trace.push_back(std::move(trace));
    if (overlap > best) best = overlap;
  }
  result.overlap = std::min(best, 1.0);
  result.gme = 1.0 - result.overlap * result.overlap;
  return result;
}

}  // namespace qent
