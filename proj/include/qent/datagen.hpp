#pragma once

#include <qent/error.hpp>
#include <qent/measurement.hpp>
#include <qent/measures.hpp>
#include <qent/parallel.hpp>
#include <qent/rng.hpp>
#include <qent/states.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace qent {

enum class Family {
  NmrPure,              // (1 - eps) I/D + eps |psi><psi|, psi Haar
  NmrMixed,             // (1 - eps) I/D + eps rho0, rho0 Hilbert-Schmidt
  GeneralPure,          // Haar |psi>
  GeneralMixed,         // Hilbert-Schmidt rho0
  ThreeWay,             // alpha rho0 + beta I/d^2 + gamma |me><me|
  InterpolatedPure,     // normalize(a psi + (1 - a) psi_sep), a ~ U[0, 1]
  ThreeQubitPure,       // GME-labelled three-qubit pure states
  ThreeQubitSeparable,  // product three-qubit states
};

inline constexpr std::pair<Family, std::string_view> kFamilyNames[] = {
    {Family::NmrPure, "nmr_pure"},
    {Family::NmrMixed, "nmr_mixed"},
    {Family::GeneralPure, "general_pure"},
    {Family::GeneralMixed, "general_mixed"},
    {Family::ThreeWay, "three_way"},
    {Family::InterpolatedPure, "interpolated_pure"},
    {Family::ThreeQubitPure, "three_qubit_pure"},
    {Family::ThreeQubitSeparable, "three_qubit_separable"},
};

inline std::string_view to_string(Family f) {
  for (const auto& [fam, name] : kFamilyNames)
    if (fam == f) return name;
  return "unknown";
}

inline Family family_from_string(std::string_view s) {
  for (const auto& [fam, name] : kFamilyNames)
    if (name == s) return fam;
  throw ConfigError("unknown state family '" + std::string(s) + "'");
}

inline bool is_three_qubit(Family f) { return f == Family::ThreeQubitPure || f == Family::ThreeQubitSeparable; }

enum class LabelKind { CoherentInformation, Gme };

inline std::string_view to_string(LabelKind k) {
  return k == LabelKind::Gme ? "gme" : "coherent_information";
}

inline LabelKind label_kind_from_string(std::string_view s) {
  if (s == "gme") return LabelKind::Gme;
  if (s == "coherent_information") return LabelKind::CoherentInformation;
  throw DataError("unknown label kind '" + std::string(s) + "'");
}

inline std::string_view to_string(Layout l) { return l == Layout::Grid ? "grid" : "flat"; }

inline Layout layout_from_string(std::string_view s) {
  if (s == "grid") return Layout::Grid;
  if (s == "flat") return Layout::Flat;
  throw ConfigError("unknown feature layout '" + std::string(s) + "'");
}

/// Rank policy for Hilbert-Schmidt draws, stored as a number in sample metadata:
/// 0 = full rank, k > 0 = rank k, -1 = rank uniform in [1, D].
namespace rank_policy {
inline constexpr double kFull = 0.0;
inline constexpr double kRandom = -1.0;
}  // namespace rank_policy

struct SampleMeta {
  Family family = Family::GeneralPure;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  /// Generating parameters: the inputs first, then any values drawn during generation.
  std::vector<double> params;

  friend bool operator==(const SampleMeta&, const SampleMeta&) = default;
};

struct LabeledSample {
  std::vector<double> features;
  double label = 0.0;
  SampleMeta meta;

  friend bool operator==(const LabeledSample&, const LabeledSample&) = default;
};

struct Schema {
  LabelKind label = LabelKind::CoherentInformation;
  std::size_t d = 3;
  std::string measurement = "cglmp";  // "cglmp" (bipartite) or "pauli_xy" (three qubits)
  Layout layout = Layout::Flat;
  std::size_t feature_length = 36;

  /// (rows, cols) for grid layout; (1, length) otherwise.
  std::pair<std::size_t, std::size_t> feature_shape() const {
    if (layout == Layout::Grid) return {2 * d, 2 * d};
    return {1, feature_length};
  }

  friend bool operator==(const Schema&, const Schema&) = default;
};

struct Dataset {
  Schema schema;
  std::vector<LabeledSample> samples;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }

  /// Appends another dataset with an identical schema.
  void append(const Dataset& other) {
    if (!(other.schema == schema)) throw DataError("cannot append datasets with different schemas");
    samples.insert(samples.end(), other.samples.begin(), other.samples.end());
  }
};

inline Schema schema_for(Family family, std::size_t d, Layout layout) {
  Schema s;
  if (is_three_qubit(family)) {
    s.label = LabelKind::Gme;
    s.d = 2;
    s.measurement = "pauli_xy";
    s.layout = Layout::Flat;
    s.feature_length = 64;
  } else {
    if (d < 2) throw ConfigError("local dimension must be >= 2");
    s.label = LabelKind::CoherentInformation;
    s.d = d;
    s.measurement = "cglmp";
    s.layout = layout;
    s.feature_length = 4 * d * d;
  }
  return s;
}

/// Per settings block (or d x d grid block) the features must sum to 1.
inline void check_feature_normalization(const Schema& schema, const LabeledSample& s, double tol = 1e-8) {
  if (s.features.size() != schema.feature_length)
    throw DataError("feature length " + std::to_string(s.features.size()) + " does not match schema " +
                    std::to_string(schema.feature_length));
  std::vector<double> sums;
  if (schema.measurement == "pauli_xy") {
    for (std::size_t b = 0; b < 8; ++b) {
      double t = 0.0;
      for (std::size_t o = 0; o < 8; ++o) t += s.features[b * 8 + o];
      sums.push_back(t);
    }
  } else {
    const auto table = table_from_bipartite_features(s.features, schema.d, schema.layout);
    for (std::size_t b = 0; b < 4; ++b) {
      double t = 0.0;
      for (std::size_t o = 0; o < table.block_size(); ++o) t += table.at(b, o);
      sums.push_back(t);
    }
  }
  for (double t : sums)
    if (std::abs(t - 1.0) > tol) throw DataError("sample features violate per-setting normalization");
}

struct GenOptions {
  Layout layout = Layout::Flat;
  double rank = rank_policy::kFull;
  GmeOptions gme{};
  std::size_t threads = 1;
};

using AnyState = std::variant<PureState, DensityMatrix>;

namespace detail {

inline std::size_t resolve_rank(double code, std::size_t dim, Rng& rng) {
  if (code == rank_policy::kRandom) return 1 + rng.index(dim);
  if (code < 0.0 || code != std::floor(code)) throw ConfigError("invalid rank policy");
  return static_cast<std::size_t>(code);
}

}  // namespace detail

/// Number of generating inputs per family; anything drawn during generation is appended after
/// them. nmr_*: {eps (< 0: drawn uniformly), [rank]}, general_mixed: {rank},
/// three_way: {alpha, beta, rank}; the rest take none.
inline std::size_t input_arity(Family f) {
  switch (f) {
    case Family::NmrPure: return 1;
    case Family::NmrMixed: return 2;
    case Family::GeneralMixed: return 1;
    case Family::ThreeWay: return 3;
    default: return 0;
  }
}

/// Draws the state for one sample. On return `params` holds the inputs (defaults filled in)
/// followed by the values drawn along the way.
inline AnyState draw_state(Family family, std::size_t d, std::vector<double>& params, Rng& rng) {
  const Dims dd{d, d};
  const Dims qubits{2, 2, 2};
  const std::size_t arity = input_arity(family);
  if (family == Family::NmrPure || family == Family::NmrMixed || family == Family::ThreeWay) {
    const std::size_t required = family == Family::ThreeWay ? 2 : 1;
    if (params.size() < required)
      throw ConfigError(std::string(to_string(family)) + " needs " + std::to_string(required) + " parameter(s)");
  }
  params.resize(arity, rank_policy::kFull);
  auto mixed = [&](double code) {
    const bool random = code == rank_policy::kRandom;
    const auto rank = detail::resolve_rank(code, d * d, rng);
    if (random) params.push_back(double(rank));
    return hs_mixed(dd, rank, rng);
  };
  auto epsilon = [&] {
    if (params[0] >= 0.0) return params[0];
    const double eps = rng.uniform();
    params.push_back(eps);
    return eps;
  };
  switch (family) {
    case Family::NmrPure: {
      const double eps = epsilon();
      return nmr_mixture(eps, haar_pure(dd, rng).projector());
    }
    case Family::NmrMixed: {
      const double eps = epsilon();
      return nmr_mixture(eps, mixed(params[1]));
    }
    case Family::GeneralPure:
      return haar_pure(dd, rng);
    case Family::GeneralMixed:
      return mixed(params[0]);
    case Family::ThreeWay: {
      const double alpha = params[0], beta = params[1];
      const double gamma = std::max(0.0, 1.0 - alpha - beta);
      return three_way_mixture(alpha, beta, gamma, mixed(params[2]), d);
    }
    case Family::InterpolatedPure: {
      const double a = rng.uniform();
      params.push_back(a);
      const auto psi = haar_pure(dd, rng);
      return pure_interpolation(a, psi, separable_pure(dd, rng), rng);
    }
    case Family::ThreeQubitPure: {
      // half Haar, half pulled toward product states so low-GME bins fill
      const bool haar = rng.uniform() < 0.5;
      const double a = haar ? 1.0 : rng.uniform();
      params.push_back(a);
      const auto psi = haar_pure(qubits, rng);
      if (haar) return psi;
      return pure_interpolation(a, psi, separable_pure(qubits, rng), rng);
    }
    case Family::ThreeQubitSeparable:
      return separable_pure(qubits, rng);
  }
  throw ConfigError("unhandled family");
}

/// Features and label for a state under `schema`. `rng` drives only the GME restarts.
inline std::pair<std::vector<double>, double> measure_and_label(const AnyState& state, const Schema& schema,
                                                                const GmeOptions& gme, Rng& rng) {
  if (schema.measurement == "pauli_xy") {
    const auto* psi = std::get_if<PureState>(&state);
    if (!psi || psi->dims() != Dims{2, 2, 2}) throw ConfigError("three-qubit features need a pure three-qubit state");
    auto features = features_threequbit(outcome_distribution(*psi, pauli_xy_bases(3)));
    return {std::move(features), gme_pure(*psi, rng, gme).gme};
  }
  const auto bases = cglmp_bases(schema.d);
  return std::visit(
      [&](const auto& s) {
        auto features = features_bipartite(outcome_distribution(s, bases), schema.layout);
        return std::pair{std::move(features), coherent_information(s)};
      },
      state);
}

/// Builds the sample whose randomness is Rng(seed, stream). Fully determined by its metadata.
inline LabeledSample make_sample(Family family, const Schema& schema, std::vector<double> params, std::uint64_t seed,
                                 std::uint64_t stream, const GmeOptions& gme) {
  Rng rng(seed, stream);
  const auto state = draw_state(family, schema.d, params, rng);
  Rng label_rng = rng.split(0x9e3779b9);
  auto [features, label] = measure_and_label(state, schema, gme, label_rng);
  return LabeledSample{std::move(features), label, SampleMeta{family, seed, stream, std::move(params)}};
}

/// Recomputes a stored sample from its metadata (audit).
inline LabeledSample regenerate(const Schema& schema, const SampleMeta& meta, const GmeOptions& gme = {}) {
  return make_sample(meta.family, schema, meta.params, meta.seed, meta.stream, gme);
}

// ---------------------------------------------------------------------------
// Sampling protocols

struct EpsilonCount {
  double eps;
  std::size_t count;
};

/// `count` base states per epsilon, mixed with white noise, CGLMP features, CI labels.
inline Dataset gen_epsilon_grid(Family family, std::size_t d, const std::vector<EpsilonCount>& grid, const Rng& rng,
                                const GenOptions& opt = {}) {
  if (family != Family::NmrPure && family != Family::NmrMixed)
    throw ConfigError("gen_epsilon_grid needs family nmr_pure or nmr_mixed");
  struct Job {
    double eps;
    std::uint64_t index;
  };
  std::vector<Job> jobs;
  for (const auto& g : grid) {
    if (!(g.eps >= 0.0 && g.eps <= 1.0)) throw ConfigError("epsilon outside [0, 1]");
    for (std::size_t k = 0; k < g.count; ++k) jobs.push_back({g.eps, jobs.size()});
  }
  Dataset ds{schema_for(family, d, opt.layout), std::vector<LabeledSample>(jobs.size())};
  parallel_for(jobs.size(), opt.threads, [&](std::size_t i) {
    const Rng child = rng.split(jobs[i].index);
    std::vector<double> params{jobs[i].eps};
    if (family == Family::NmrMixed) params.push_back(opt.rank);
    ds.samples[i] = make_sample(family, ds.schema, std::move(params), child.seed(), child.stream(), opt.gme);
  });
  return ds;
}

/// lo, lo + width, ..., with the final edge exactly `hi`.
inline std::vector<double> make_bin_edges(double lo, double hi, double width) {
  if (!(width > 0.0) || !(hi > lo)) throw ConfigError("bin edges need hi > lo and width > 0");
  std::vector<double> edges;
  for (std::size_t k = 0;; ++k) {
    const double e = lo + double(k) * width;
    if (e >= hi - 1e-12) break;
    edges.push_back(e);
  }
  edges.push_back(hi);
  return edges;
}

struct BinSpec {
  std::vector<double> edges;  // strictly increasing; bins [e_k, e_{k+1}), the last one closed
  std::size_t per_bin = 0;
  std::size_t max_attempts = 0;  // 0: 200 x per_bin x bins
  bool collect_overflow = false;  // keep every label above the last edge without a quota
};

struct BinReport {
  std::vector<std::size_t> filled;
  std::size_t requested_per_bin = 0;
  std::size_t overflow = 0;
  std::size_t attempts = 0;

  std::vector<std::size_t> shortfall_bins() const {
    std::vector<std::size_t> out;
    for (std::size_t b = 0; b < filled.size(); ++b)
      if (filled[b] < requested_per_bin) out.push_back(b);
    return out;
  }
};

struct BinnedDataset {
  Dataset dataset;
  BinReport report;
};

inline std::optional<std::size_t> find_bin(const std::vector<double>& edges, double x) {
  if (x < edges.front() || x > edges.back()) return std::nullopt;
  auto it = std::upper_bound(edges.begin(), edges.end(), x);
  const auto b = static_cast<std::size_t>(std::distance(edges.begin(), it));
  return b == 0 ? 0 : std::min(b - 1, edges.size() - 2);
}

/// Rejection sampling by label: draws from `family` until each bin holds `per_bin` samples or
/// the attempt budget is spent. Under-filled bins are reported, not fatal.
inline BinnedDataset gen_binned(Family family, std::size_t d, const BinSpec& spec, const Rng& rng,
                                const GenOptions& opt = {}, std::vector<double> base_params = {}) {
  if (spec.edges.size() < 2) throw ConfigError("need at least one bin");
  for (std::size_t i = 1; i < spec.edges.size(); ++i)
    if (!(spec.edges[i] > spec.edges[i - 1])) throw ConfigError("bin edges must be strictly increasing");
  if (spec.per_bin == 0) throw ConfigError("per_bin must be positive");
  // nmr_*: eps < 0 draws eps uniformly per attempt
  if (family == Family::NmrPure || family == Family::NmrMixed) {
    if (base_params.empty()) base_params.push_back(-1.0);
    if (family == Family::NmrMixed && base_params.size() == 1) base_params.push_back(opt.rank);
  }
  if (family == Family::GeneralMixed && base_params.empty()) base_params.push_back(opt.rank);
  if (family == Family::ThreeWay && base_params.size() == 2) base_params.push_back(opt.rank);

  const std::size_t nbins = spec.edges.size() - 1;
  const std::size_t budget = spec.max_attempts ? spec.max_attempts : 200 * spec.per_bin * nbins;
  BinnedDataset out{{schema_for(family, d, opt.layout), {}}, {}};
  out.report.filled.assign(nbins, 0);
  out.report.requested_per_bin = spec.per_bin;

  auto all_full = [&] {
    return std::all_of(out.report.filled.begin(), out.report.filled.end(),
                       [&](std::size_t n) { return n >= spec.per_bin; });
  };
  const std::size_t chunk = std::max<std::size_t>(64, 16 * std::max<std::size_t>(1, opt.threads));
  std::vector<LabeledSample> batch;
  std::size_t next = 0;
  while (next < budget && !all_full()) {
    const std::size_t n = std::min(chunk, budget - next);
    batch.assign(n, {});
    parallel_for(n, opt.threads, [&](std::size_t i) {
      const Rng child = rng.split(next + i);
      batch[i] = make_sample(family, out.dataset.schema, base_params, child.seed(), child.stream(), opt.gme);
    });
    for (std::size_t i = 0; i < n && !all_full(); ++i) {
      ++out.report.attempts;
      const double y = batch[i].label;
      if (spec.collect_overflow && y > spec.edges.back()) {
        ++out.report.overflow;
        out.dataset.samples.push_back(std::move(batch[i]));
        continue;
      }
      const auto bin = find_bin(spec.edges, y);
      if (!bin || out.report.filled[*bin] >= spec.per_bin) continue;
      ++out.report.filled[*bin];
      out.dataset.samples.push_back(std::move(batch[i]));
    }
    next += n;
  }
  if (out.dataset.samples.empty()) throw DataError("gen_binned accepted no samples");
  return out;
}

struct GridRegion {
  double alpha_start;
  double alpha_end;
  bool include_end;
  double step;
  std::size_t count;
};

/// Default d=5 grid: alpha >= 0.4 at step 0.02 with 200 draws per point; alpha < 0.4 at step
/// 0.04 with 100 draws per point.
inline std::vector<GridRegion> default_coefficient_grid(double scale = 1.0) {
  auto scaled = [scale](std::size_t n) { return std::max<std::size_t>(1, std::size_t(std::llround(double(n) * scale))); };
  return {{0.4, 1.0, true, 0.02, scaled(200)}, {0.0, 0.4, false, 0.04, scaled(100)}};
}

struct GridPoint {
  double alpha;
  double beta;
  std::size_t count;
};

inline std::vector<GridPoint> enumerate_coefficient_grid(const std::vector<GridRegion>& regions) {
  std::vector<GridPoint> points;
  for (const auto& r : regions) {
    if (!(r.step > 0.0)) throw ConfigError("grid step must be positive");
    const double span = (r.alpha_end - r.alpha_start) / r.step;
    auto na = static_cast<long>(std::floor(span + 1e-9));
    if (!r.include_end && std::abs(span - std::round(span)) < 1e-9) --na;
    for (long i = 0; i <= na; ++i) {
      const double alpha = r.alpha_start + double(i) * r.step;
      const auto nb = static_cast<long>(std::floor((1.0 - alpha) / r.step + 1e-9));
      for (long j = 0; j <= nb; ++j) points.push_back({alpha, std::min(double(j) * r.step, 1.0 - alpha), r.count});
    }
  }
  return points;
}

/// three_way_mixture samples over an (alpha, beta) grid covering the simplex.
inline Dataset gen_coefficient_grid(std::size_t d, const std::vector<GridRegion>& regions, const Rng& rng,
                                    const GenOptions& opt = {}) {
  const auto points = enumerate_coefficient_grid(regions);
  std::vector<std::pair<std::size_t, std::uint64_t>> jobs;
  for (std::size_t p = 0; p < points.size(); ++p)
    for (std::size_t k = 0; k < points[p].count; ++k) jobs.emplace_back(p, jobs.size());
  Dataset ds{schema_for(Family::ThreeWay, d, opt.layout), std::vector<LabeledSample>(jobs.size())};
  parallel_for(jobs.size(), opt.threads, [&](std::size_t i) {
    const auto& pt = points[jobs[i].first];
    const Rng child = rng.split(jobs[i].second);
    ds.samples[i] = make_sample(Family::ThreeWay, ds.schema, {pt.alpha, pt.beta, opt.rank}, child.seed(),
                                child.stream(), opt.gme);
  });
  return ds;
}

/// Regenerates every `stride`-th sample and returns the largest label discrepancy.
inline double audit_labels(const Dataset& ds, std::size_t stride = 100, const GmeOptions& gme = {}) {
  double worst = 0.0;
  for (std::size_t i = 0; i < ds.samples.size(); i += std::max<std::size_t>(1, stride)) {
    const auto again = regenerate(ds.schema, ds.samples[i].meta, gme);
    worst = std::max(worst, std::abs(again.label - ds.samples[i].label));
  }
  return worst;
}

/// Column-per-sample feature matrix and label vector.
inline std::pair<RMat, RVec> to_matrix(const Dataset& ds) {
  RMat x(static_cast<Eigen::Index>(ds.schema.feature_length), static_cast<Eigen::Index>(ds.size()));
  RVec y(static_cast<Eigen::Index>(ds.size()));
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const auto& s = ds.samples[i];
    if (s.features.size() != ds.schema.feature_length) throw DataError("sample " + std::to_string(i) + " has wrong feature length");
    x.col(static_cast<Eigen::Index>(i)) = Eigen::Map<const RVec>(s.features.data(), static_cast<Eigen::Index>(s.features.size()));
    y(static_cast<Eigen::Index>(i)) = s.label;
  }
  return {std::move(x), std::move(y)};
}

}  // namespace qent
