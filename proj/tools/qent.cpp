// qent: command-line front end for dataset generation, training, evaluation and the
// nonlocality study.

#include <qent/qent.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

std::string fmt(double v) { return qent::io::format_double(v); }

void write_json(const fs::path& path, const ordered_json& j) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw qent::DataError("cannot write '" + path.string() + "'");
  os << j.dump(2) << '\n';
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw qent::DataError("cannot write '" + path.string() + "'");
  return os;
}

fs::path prepare_dir(const std::string& dir) {
  fs::path p(dir);
  std::error_code ec;
  fs::create_directories(p, ec);
  if (ec) throw qent::DataError("cannot create run directory '" + dir + "': " + ec.message());
  return p;
}

void write_manifest(const fs::path& dir, const std::string& command, const ordered_json& inputs,
                    const std::vector<std::string>& files) {
  ordered_json j;
  j["tool"] = "qent";
  j["version"] = qent::kVersion;
  j["command"] = command;
  j["inputs"] = inputs;
  j["files"] = files;
  write_json(dir / "manifest.json", j);
}

double parse_rank(const std::string& s) {
  if (s == "full") return qent::rank_policy::kFull;
  if (s == "random") return qent::rank_policy::kRandom;
  try {
    std::size_t used = 0;
    const long r = std::stol(s, &used);
    if (used == s.size() && r >= 1) return double(r);
  } catch (const std::exception&) {
  }
  throw qent::ConfigError("rank must be 'full', 'random' or a positive integer, got '" + s + "'");
}

qent::Layout model_layout(const qent::nn::Model& m) {
  return m.input_shape().height > 1 ? qent::Layout::Grid : qent::Layout::Flat;
}

void require_inputs(const qent::nn::Model& m, std::size_t features, const std::string& what) {
  if (m.input_shape().size() != features)
    throw qent::ConfigError("schema mismatch: model expects " + std::to_string(m.input_shape().size()) +
                            " features, " + what + " provides " + std::to_string(features));
}

// ---------------------------------------------------------------------------

struct GenArgs {
  std::string preset;
  std::uint64_t seed = 0;
  double scale = 1.0;
  std::size_t d = 3;
  std::string layout = "flat";
  std::string rank = "full";
  std::string out;
};

int cmd_gen_dataset(const GenArgs& a, std::size_t threads) {
  qent::experiments::PresetOptions opt;
  if (!(a.scale > 0.0)) throw qent::ConfigError("scale must be positive");
  opt.scale = a.scale;
  opt.d = a.d;
  opt.layout = qent::layout_from_string(a.layout);
  opt.threads = threads;
  opt.warmup_rank = parse_rank(a.rank);
  const auto dir = prepare_dir(a.out.empty() ? "runs/gen-" + a.preset + "-" + std::to_string(a.seed) : a.out);

  const auto result = qent::experiments::generate_preset(a.preset, a.seed, opt);
  qent::save_dataset(result.dataset, dir / "dataset.csv");

  ordered_json inputs{{"preset", a.preset}, {"seed", a.seed},   {"scale", a.scale},
                      {"d", a.d},           {"layout", a.layout}, {"rank", a.rank}};
  ordered_json prov;
  prov["tool"] = "qent";
  prov["version"] = qent::kVersion;
  prov["spec"] = inputs;
  prov["samples"] = result.dataset.size();
  prov["label"] = std::string(qent::to_string(result.dataset.schema.label));
  ordered_json bins = ordered_json::array();
  for (const auto& [tag, rep] : result.bin_reports) {
    const auto short_bins = rep.shortfall_bins();
    bins.push_back({{"family", tag},
                    {"requested_per_bin", rep.requested_per_bin},
                    {"filled", rep.filled},
                    {"overflow", rep.overflow},
                    {"attempts", rep.attempts},
                    {"shortfall_bins", short_bins}});
    for (auto b : short_bins)
      std::cerr << "shortfall: " << tag << " bin " << b << " filled " << rep.filled[b] << " of "
                << rep.requested_per_bin << '\n';
  }
  prov["bins"] = bins;
  write_json(dir / "dataset.provenance.json", prov);
  write_manifest(dir, "gen-dataset", inputs, {"dataset.csv", "dataset.provenance.json"});
  std::cout << "wrote " << result.dataset.size() << " samples to " << (dir / "dataset.csv").string() << '\n';
  return qent::exit_code::kOk;
}

// ---------------------------------------------------------------------------

struct TrainArgs {
  std::string arch;
  std::string data;
  std::uint64_t seed = 0;
  qent::nn::TrainConfig cfg;
  std::string optimizer = "adam";
  std::string out;
};

int cmd_train(TrainArgs a) {
  const auto ds = qent::load_dataset(a.data);
  if (ds.empty()) throw qent::DataError("dataset '" + a.data + "' has no samples");
  if (a.optimizer == "adam") {
    a.cfg.optimizer = qent::nn::Optimizer::Adam;
  } else if (a.optimizer == "sgd") {
    a.cfg.optimizer = qent::nn::Optimizer::Sgd;
  } else {
    throw qent::ConfigError("optimizer must be 'adam' or 'sgd'");
  }
  a.cfg.seed = a.seed;
  const auto dir = prepare_dir(a.out.empty() ? "runs/train-" + a.arch + "-" + std::to_string(a.seed) : a.out);

  auto model = qent::experiments::build_arch(a.arch, ds.schema, a.seed);
  const auto [x, y] = qent::to_matrix(ds);
  const auto result = qent::nn::train(std::move(model), x, y, a.cfg);
  qent::nn::save_model(result.model, dir / "model.txt");

  auto hist = open_out(dir / "history.csv");
  hist << "epoch,train_loss,validation_loss,learning_rate\n";
  for (std::size_t e = 0; e < result.history.size(); ++e) {
    const auto& s = result.history[e];
    hist << e << ',' << fmt(s.train_loss) << ',' << (std::isnan(s.validation_loss) ? "" : fmt(s.validation_loss))
         << ',' << fmt(s.learning_rate) << '\n';
  }
  hist.close();

  ordered_json inputs{{"arch", a.arch},
                      {"data", a.data},
                      {"seed", a.seed},
                      {"epochs", a.cfg.epochs},
                      {"batch_size", a.cfg.batch_size},
                      {"learning_rate", a.cfg.learning_rate},
                      {"final_lr_fraction", a.cfg.final_lr_fraction},
                      {"optimizer", a.optimizer},
                      {"validation_fraction", a.cfg.validation_fraction}};
  write_manifest(dir, "train", inputs, {"model.txt", "history.csv"});
  std::cout << "parameters " << result.model.parameter_count() << ", final train loss "
            << fmt(result.history.empty() ? 0.0 : result.history.back().train_loss) << '\n';
  return qent::exit_code::kOk;
}

// ---------------------------------------------------------------------------

struct EvalArgs {
  std::string model;
  std::string data;
  std::string preset;
  std::string out;
};

ordered_json report_json(const qent::EvalReport& r) {
  auto num = [](double v) { return std::isnan(v) ? ordered_json(nullptr) : ordered_json(v); };
  ordered_json rel = ordered_json::array();
  for (const auto& e : r.relative) rel.push_back({{"threshold", e.threshold}, {"mean", num(e.mean)}, {"count", e.count}});
  const auto& f = r.squared_errors;
  return {{"n", r.n},
          {"mse", r.mse},
          {"squared_error_summary",
           {{"min", f.min}, {"q1", f.q1}, {"median", f.median}, {"q3", f.q3}, {"max", f.max}, {"outliers", f.outliers}}},
          {"relative_error", rel}};
}

int cmd_evaluate(const EvalArgs& a) {
  if (a.data.empty() == a.preset.empty()) throw qent::ConfigError("evaluate needs exactly one of --data or --preset");
  const auto model = qent::nn::load_model(a.model);
  std::vector<qent::experiments::EvalPoint> pts;
  std::string param_name = "index";
  if (!a.preset.empty()) {
    pts = qent::experiments::eval_preset(a.preset, model_layout(model));
    param_name = a.preset == "cglmp-eps-grid" ? "eps" : "p";
  } else {
    pts = qent::experiments::to_eval_points(qent::load_dataset(a.data));
  }
  if (pts.empty()) throw qent::DataError("empty test set");
  require_inputs(model, pts.front().features.size(), a.preset.empty() ? "dataset '" + a.data + "'" : a.preset);

  const auto pred = qent::experiments::predict_points(model, pts);
  const auto labels = qent::experiments::labels_of(pts);
  const auto report = qent::evaluate_predictions(pred, labels);

  const auto dir = prepare_dir(a.out.empty() ? "runs/evaluate" : a.out);
  auto os = open_out(dir / "predictions.csv");
  os << param_name << ",prediction,exact\n";
  for (std::size_t i = 0; i < pts.size(); ++i) os << fmt(pts[i].param) << ',' << fmt(pred[i]) << ',' << fmt(labels[i]) << '\n';
  os.close();
  write_json(dir / "report.json", report_json(report));
  write_manifest(dir, "evaluate", {{"model", a.model}, {"data", a.data}, {"preset", a.preset}},
                 {"predictions.csv", "report.json"});
  std::cout << "n " << report.n << ", mse " << fmt(report.mse) << '\n';
  return qent::exit_code::kOk;
}

// ---------------------------------------------------------------------------

struct NonlocalArgs {
  std::string model;
  double p_step = 0.01;
  double gamma_step = 0.005;
  std::optional<double> p_only;
  std::optional<double> gamma_only;
  std::string out;
};

std::vector<double> stepped(double lo, double hi, double step, bool add_hi) {
  if (!(step > 0.0)) throw qent::ConfigError("grid step must be positive");
  std::vector<double> g;
  for (long i = 0;; ++i) {
    const double v = lo + double(i) * step;
    if (v > hi + 1e-12) break;
    g.push_back(v);
  }
  if (add_hi && hi - g.back() > 1e-12) g.push_back(hi);
  return g;
}

int cmd_analyze_nonlocality(const NonlocalArgs& a) {
  const auto model = qent::nn::load_model(a.model);
  const auto ps = a.p_only ? std::vector<double>{*a.p_only} : stepped(0.0, 1.0, a.p_step, false);
  const auto gs = a.gamma_only ? std::vector<double>{*a.gamma_only}
                               : stepped(0.6, std::numbers::sqrt2 / 2, a.gamma_step, true);
  const auto study = qent::nonlocality_study(model, ps, gs, model_layout(model));

  const auto dir = prepare_dir(a.out.empty() ? "runs/nonlocality" : a.out);
  auto os = open_out(dir / "records.csv");
  os << "p,gamma,coherent_info,violation,prediction,squared_error\n";
  for (const auto& r : study.records)
    os << fmt(r.p) << ',' << fmt(r.gamma) << ',' << fmt(r.coherent_info) << ',' << fmt(r.violation) << ','
       << fmt(r.prediction) << ',' << fmt(r.squared_error) << '\n';
  os.close();
  write_json(dir / "pcc.json", {{"records", study.records.size()},
                                {"pcc_squared_error_violation", study.pcc_error_violation},
                                {"pcc_squared_error_coherent_info", study.pcc_error_ci}});
  write_manifest(dir, "analyze-nonlocality", {{"model", a.model}, {"p_step", a.p_step}, {"gamma_step", a.gamma_step}},
                 {"records.csv", "pcc.json"});
  std::cout << "records " << study.records.size() << '\n'
            << "pcc(squared_error, violation) " << fmt(study.pcc_error_violation) << '\n'
            << "pcc(squared_error, coherent_info) " << fmt(study.pcc_error_ci) << '\n';
  return qent::exit_code::kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"qent: learning entanglement measures from measurement statistics"};
  app.set_version_flag("--version", std::string(qent::kVersion));
  app.set_config("--config", "", "key=value config file; keys are long option names, sections name subcommands");
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default();
  std::size_t threads = 1;
  app.add_option("--threads", threads, "Worker threads for dataset generation")->check(CLI::PositiveNumber);

  GenArgs gen;
  auto* g = app.add_subcommand("gen-dataset", "Generate a labeled dataset from a preset");
  g->add_option("--preset", gen.preset, "qutrit-warmup | qutrit-general | qudit-mixture | general-pure | "
                                        "general-mixed | three-qubit-gme")
      ->required();
  g->add_option("--seed", gen.seed, "Root seed")->required();
  g->add_option("--scale", gen.scale, "Sample-count multiplier");
  g->add_option("--d", gen.d, "Local dimension for qudit presets");
  g->add_option("--layout", gen.layout, "Feature layout: flat | grid");
  g->add_option("--rank", gen.rank, "Rank of rho0 in the warm-up preset: full | random | <k>");
  g->add_option("--out", gen.out, "Run directory");

  TrainArgs tr;
  auto* t = app.add_subcommand("train", "Train a network on a dataset file");
  t->add_option("--arch", tr.arch, "mlp-<w1>-<w2>-... | cnn-k2p2 | cnn-k3p3")->required();
  t->add_option("--data", tr.data, "Dataset file")->required();
  t->add_option("--seed", tr.seed, "Initialization and shuffling seed")->required();
  t->add_option("--epochs", tr.cfg.epochs);
  t->add_option("--batch", tr.cfg.batch_size, "Mini-batch size (0: full batch)");
  t->add_option("--lr", tr.cfg.learning_rate);
  t->add_option("--final-lr-fraction", tr.cfg.final_lr_fraction, "Geometric decay target as a fraction of --lr");
  t->add_option("--optimizer", tr.optimizer, "adam | sgd");
  t->add_option("--validation", tr.cfg.validation_fraction, "Held-out fraction");
  t->add_option("--out", tr.out, "Run directory");

  EvalArgs ev;
  auto* e = app.add_subcommand("evaluate", "Score a model on a dataset file or a test preset");
  e->add_option("--model", ev.model, "Model file")->required();
  e->add_option("--data", ev.data, "Dataset file");
  e->add_option("--preset", ev.preset, "cglmp-eps-grid | gme-w-wbar | gme-ghz-w");
  e->add_option("--out", ev.out, "Run directory");

  NonlocalArgs nl;
  auto* n = app.add_subcommand("analyze-nonlocality", "Correlate prediction error with CGLMP violation");
  n->add_option("--model", nl.model, "Qutrit model file")->required();
  n->add_option("--p-step", nl.p_step);
  n->add_option("--gamma-step", nl.gamma_step);
  n->add_option("--p", nl.p_only, "Evaluate a single p");
  n->add_option("--gamma", nl.gamma_only, "Evaluate a single gamma");
  n->add_option("--out", nl.out, "Run directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& s) {
    return app.exit(s);
  } catch (const CLI::ParseError& err) {
    app.exit(err);
    return qent::exit_code::kConfig;
  }

  try {
    if (*g) return cmd_gen_dataset(gen, threads);
    if (*t) return cmd_train(tr);
    if (*e) return cmd_evaluate(ev);
    if (*n) return cmd_analyze_nonlocality(nl);
  } catch (const qent::ConfigError& err) {
    std::cerr << "configuration error: " << err.what() << '\n';
    return qent::exit_code::kConfig;
  } catch (const qent::DataError& err) {
    std::cerr << "data error: " << err.what() << '\n';
    return qent::exit_code::kData;
  } catch (const qent::TrainingError& err) {
    std::cerr << "training error: " << err.what() << '\n';
    return qent::exit_code::kTraining;
  }
  return qent::exit_code::kConfig;
}
