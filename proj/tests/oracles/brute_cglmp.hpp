#pragma once

#include <qent/linalg.hpp>

#include <cmath>
#include <complex>
#include <numbers>

namespace oracle {

using qent::CVec;
using qent::cplx;

// Independent evaluation: probabilities from explicit basis formulas, functional from a
// coefficient table built over outcome differences (a - b) mod d.
struct BruteCglmp {
  std::size_t d;

  cplx alice(std::size_t x, std::size_t outcome, std::size_t k) const {
    const double alpha = x == 0 ? 0.0 : 0.5;
    return std::exp(cplx(0, 2 * std::numbers::pi * double(k) * (double(outcome) + alpha) / double(d))) /
           std::sqrt(double(d));
  }
  cplx bob(std::size_t y, std::size_t outcome, std::size_t l) const {
    const double beta = y == 0 ? 0.25 : -0.25;
    return std::exp(cplx(0, 2 * std::numbers::pi * double(l) * (-double(outcome) + beta) / double(d))) /
           std::sqrt(double(d));
  }
  double prob(const CVec& psi, std::size_t x, std::size_t y, std::size_t a, std::size_t b) const {
    cplx amp = 0;
    for (std::size_t k = 0; k < d; ++k)
      for (std::size_t l = 0; l < d; ++l) amp += std::conj(alice(x, a, k) * bob(y, b, l)) * psi(Eigen::Index(k * d + l));
    return std::norm(amp);
  }
  // Weight of p(a, b | x, y) in the functional: for each k, +w when the outcome difference
  // matches the "plus" event of that block and -w for the "minus" event.
  double coefficient(std::size_t x, std::size_t y, std::size_t a, std::size_t b) const {
    const long D = long(d);
    auto m = [D](long v) { return ((v % D) + D) % D; };
    const long ab = m(long(a) - long(b));
    const long ba = m(long(b) - long(a));
    double c = 0.0;
    for (long k = 0; k < D / 2; ++k) {
      const double w = 1.0 - 2.0 * double(k) / double(D - 1);
      long plus = 0, minus = 0, diff = 0;
      if (x == 0 && y == 0) diff = ab, plus = k, minus = -k - 1;
      if (x == 1 && y == 0) diff = ba, plus = k + 1, minus = -k;
      if (x == 1 && y == 1) diff = ab, plus = k, minus = -k - 1;
      if (x == 0 && y == 1) diff = ba, plus = k, minus = -k - 1;
      if (diff == m(plus)) c += w;
      if (diff == m(minus)) c -= w;
    }
    return c;
  }
  double value(const CVec& psi) const {
    double s = 0.0;
    for (std::size_t x = 0; x < 2; ++x)
      for (std::size_t y = 0; y < 2; ++y)
        for (std::size_t a = 0; a < d; ++a)
          for (std::size_t b = 0; b < d; ++b) s += coefficient(x, y, a, b) * prob(psi, x, y, a, b);
    return s;
  }
};

}  // namespace oracle
