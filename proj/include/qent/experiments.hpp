#pragma once

#include <qent/analysis.hpp>
#include <qent/datagen.hpp>
#include <qent/measurement.hpp>
#include <qent/measures.hpp>
#include <qent/nnet.hpp>
#include <qent/states.hpp>

#include <cmath>
#include <string>
#include <string_view>
#include <vector>

// Named experiment protocols shared by the CLI and the acceptance suite.
namespace qent::experiments {

inline std::size_t scaled(std::size_t n, double scale) {
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(double(n) * scale)));
}

/// eps = 0.2, 0.225, ..., `split` with `low` draws each, then up to `top` with `high` draws each.
inline std::vector<EpsilonCount> epsilon_schedule(std::size_t low, std::size_t high, double top = 1.0,
                                                  double split = 0.75) {
  std::vector<EpsilonCount> grid;
  for (int i = 0;; ++i) {
    const double eps = (200 + 25 * i) / 1000.0;
    if (eps > top + 1e-12) break;
    grid.push_back({eps, eps <= split + 1e-12 ? low : high});
  }
  return grid;
}

/// Qutrit warm-up: 1000 states per eps up to 0.75, 2000 above (43,000 at scale 1).
inline std::vector<EpsilonCount> qutrit_warmup_schedule(double scale = 1.0) {
  return epsilon_schedule(scaled(1000, scale), scaled(2000, scale));
}

inline double log2d(std::size_t d) { return std::log2(static_cast<double>(d)); }

struct PresetResult {
  Dataset dataset;
  std::vector<std::pair<std::string, BinReport>> bin_reports;
};

struct PresetOptions {
  double scale = 1.0;
  std::size_t d = 3;
  Layout layout = Layout::Flat;
  std::size_t threads = 1;
  GmeOptions gme{};
  /// Rank policy for the warm-up rho0 draws (see rank_policy).
  double warmup_rank = rank_policy::kFull;
};

inline const std::vector<std::string_view>& preset_names() {
  static const std::vector<std::string_view> names = {"qutrit-warmup", "qutrit-general", "qudit-mixture",
                                                      "general-pure", "general-mixed", "three-qubit-gme"};
  return names;
}

/// Builds a named training dataset. Stream ids are split per protocol so sub-datasets never
/// share randomness.
inline PresetResult generate_preset(std::string_view name, std::uint64_t seed, const PresetOptions& opt) {
  const Rng root(seed);
  GenOptions gen;
  gen.layout = opt.layout;
  gen.threads = opt.threads;
  gen.gme = opt.gme;
  PresetResult out;
  auto binned = [&](const char* tag, Family fam, std::size_t d, BinSpec spec, std::uint64_t stream) {
    auto r = gen_binned(fam, d, spec, root.split(stream), gen);
    out.bin_reports.emplace_back(tag, r.report);
    if (out.dataset.samples.empty()) out.dataset.schema = r.dataset.schema;
    out.dataset.append(r.dataset);
  };
  auto append = [&](const Dataset& ds) {
    if (out.dataset.samples.empty()) out.dataset.schema = ds.schema;
    out.dataset.append(ds);
  };

  if (name == "qutrit-warmup") {
    gen.rank = opt.warmup_rank;
    append(gen_epsilon_grid(Family::NmrMixed, 3, qutrit_warmup_schedule(opt.scale), root.split(1), gen));
  } else if (name == "qutrit-general") {
    // NMR classes: 2000 per eps up to 0.75, 4000 per eps to 0.975; general classes binned by CI
    const auto sched = epsilon_schedule(scaled(2000, opt.scale), scaled(4000, opt.scale), 0.975);
    append(gen_epsilon_grid(Family::NmrPure, 3, sched, root.split(1), gen));
    append(gen_epsilon_grid(Family::NmrMixed, 3, sched, root.split(2), gen));
    binned("general_pure", Family::GeneralPure, 3, {make_bin_edges(0.0, log2d(3), 0.1), scaled(4000, opt.scale)}, 3);
    binned("general_mixed", Family::GeneralMixed, 3,
           {make_bin_edges(-log2d(3), 1.5, 0.1), scaled(4000, opt.scale), 0, true}, 4);
  } else if (name == "qudit-mixture") {
    const std::size_t d = opt.d;
    append(gen_coefficient_grid(d, default_coefficient_grid(opt.scale), root.split(1), gen));
    const double top = log2d(d);
    const auto ci_edges = make_bin_edges(-top, top, 0.1);
    const std::size_t nb = ci_edges.size() - 1;
    binned("nmr_pure", Family::NmrPure, d, {make_bin_edges(-top, top, 0.1), scaled(82000 / nb, opt.scale)}, 2);
    binned("nmr_mixed", Family::NmrMixed, d, {ci_edges, scaled(130000 / nb, opt.scale)}, 3);
    binned("interpolated_pure", Family::InterpolatedPure, d,
           {make_bin_edges(0.0, top, 0.1), scaled(40000 / std::size_t(std::ceil(top / 0.1)), opt.scale)}, 4);
    binned("general_mixed", Family::GeneralMixed, d, {ci_edges, scaled(84000 / nb, opt.scale)}, 5);
  } else if (name == "general-pure") {
    const double top = log2d(opt.d);
    const auto edges = make_bin_edges(0.0, top, 0.1);
    binned("interpolated_pure", Family::InterpolatedPure, opt.d, {edges, scaled(40000 / (edges.size() - 1), opt.scale)}, 1);
  } else if (name == "general-mixed") {
    const double top = log2d(opt.d);
    const auto edges = make_bin_edges(-top, top, 0.1);
    binned("general_mixed", Family::GeneralMixed, opt.d, {edges, scaled(40000 / (edges.size() - 1), opt.scale)}, 1);
  } else if (name == "three-qubit-gme") {
    // GME of three qubits never exceeds 5/9, so the top bin cannot fill; cap the search.
    const auto edges = make_bin_edges(0.0, 0.7, 0.1);
    const std::size_t per_bin = scaled(5000, opt.scale);
    binned("three_qubit_pure", Family::ThreeQubitPure, 2, {edges, per_bin, 60 * per_bin * (edges.size() - 1), true}, 1);
    // separable extras: every draw lands in [0, 1e-6]
    binned("three_qubit_separable", Family::ThreeQubitSeparable, 2, {{0.0, 1.0}, scaled(5000, opt.scale)}, 2);
  } else {
    throw ConfigError("unknown preset '" + std::string(name) + "'");
  }
  return out;
}

// ---------------------------------------------------------------------------
// Deterministic test grids

struct EvalPoint {
  double param = 0.0;
  std::vector<double> features;
  double label = 0.0;
};

inline std::vector<double> unit_grid(double step) {
  std::vector<double> g;
  const auto n = static_cast<int>(std::llround(1.0 / step));
  for (int i = 0; i <= n; ++i) g.push_back(double(i) / double(n));
  return g;
}

/// (1 - eps) I/9 + eps |psi3_mv><psi3_mv|, eps = 0..1 step 0.005, CI labels.
inline std::vector<EvalPoint> cglmp_eps_grid(Layout layout = Layout::Flat, double gamma = kPsi3MvGamma) {
  const auto proj = psi3_mv(gamma).projector();
  const auto bases = cglmp_bases(3);
  std::vector<EvalPoint> pts;
  for (double eps : unit_grid(0.005)) {
    const auto rho = nmr_mixture(eps, proj);
    pts.push_back({eps, features_bipartite(outcome_distribution(rho, bases), layout), coherent_information(rho)});
  }
  return pts;
}

/// GME test grid over p = 0..1 step 0.005 for a three-qubit family (varphi or varphi_prime).
template <class StateFn>
std::vector<EvalPoint> gme_grid(StateFn&& state, std::uint64_t seed = 0, const GmeOptions& gme = {}) {
  const auto bases = pauli_xy_bases(3);
  std::vector<EvalPoint> pts;
  Rng rng(seed);
  for (double p : unit_grid(0.005)) {
    const PureState psi = state(p);
    Rng local = rng.split(pts.size());
    pts.push_back({p, features_threequbit(outcome_distribution(psi, bases)), gme_pure(psi, local, gme).gme});
  }
  return pts;
}

inline std::vector<EvalPoint> gme_w_wbar_grid(std::uint64_t seed = 0) { return gme_grid(varphi, seed); }
inline std::vector<EvalPoint> gme_ghz_w_grid(std::uint64_t seed = 0) { return gme_grid(varphi_prime, seed); }

inline std::vector<EvalPoint> eval_preset(std::string_view name, Layout layout = Layout::Flat) {
  if (name == "cglmp-eps-grid") return cglmp_eps_grid(layout);
  if (name == "gme-w-wbar") return gme_w_wbar_grid();
  if (name == "gme-ghz-w") return gme_ghz_w_grid();
  throw ConfigError("unknown evaluation preset '" + std::string(name) + "'");
}

inline std::vector<EvalPoint> to_eval_points(const Dataset& ds) {
  std::vector<EvalPoint> pts;
  pts.reserve(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) pts.push_back({double(i), ds.samples[i].features, ds.samples[i].label});
  return pts;
}

inline std::vector<double> predict_points(const nn::Model& model, const std::vector<EvalPoint>& pts) {
  if (pts.empty()) throw DataError("empty test set");
  RMat x(static_cast<Eigen::Index>(pts.front().features.size()), static_cast<Eigen::Index>(pts.size()));
  for (std::size_t i = 0; i < pts.size(); ++i) {
    if (pts[i].features.size() != static_cast<std::size_t>(x.rows())) throw DataError("inconsistent test features");
    x.col(static_cast<Eigen::Index>(i)) =
        Eigen::Map<const RVec>(pts[i].features.data(), static_cast<Eigen::Index>(pts[i].features.size()));
  }
  const RVec y = nn::predict(model, x);
  return {y.data(), y.data() + y.size()};
}

inline std::vector<double> labels_of(const std::vector<EvalPoint>& pts) {
  std::vector<double> y;
  for (const auto& p : pts) y.push_back(p.label);
  return y;
}

// ---------------------------------------------------------------------------
// Architectures

/// "mlp-400-200-100-50", "mlp-50-20-10-5", "cnn-k2p2", "cnn-k3p3" (cnn needs grid features).
inline nn::Model build_arch(std::string_view arch, const Schema& schema, std::uint64_t seed) {
  if (arch.starts_with("mlp-")) {
    std::vector<std::size_t> widths;
    std::string_view rest = arch.substr(4);
    while (!rest.empty()) {
      const auto dash = rest.find('-');
      const auto tok = rest.substr(0, dash);
      std::size_t w = 0;
      for (char c : tok) {
        if (c < '0' || c > '9') throw ConfigError("bad mlp width in '" + std::string(arch) + "'");
        w = w * 10 + std::size_t(c - '0');
      }
      if (w == 0) throw ConfigError("bad mlp width in '" + std::string(arch) + "'");
      widths.push_back(w);
      rest = dash == std::string_view::npos ? std::string_view{} : rest.substr(dash + 1);
    }
    return nn::build_mlp(schema.feature_length, widths, seed);
  }
  if (arch == "cnn-k2p2" || arch == "cnn-k3p3") {
    if (schema.layout != Layout::Grid) throw ConfigError("cnn architectures need grid-layout datasets");
    const std::size_t k = arch == "cnn-k2p2" ? 2 : 3;
    return nn::build_cnn(2 * schema.d, k, k, seed, nn::CnnPadding::Auto);
  }
  throw ConfigError("unknown architecture '" + std::string(arch) + "'");
}

}  // namespace qent::experiments
