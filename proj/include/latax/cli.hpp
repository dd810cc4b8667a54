#pragma once

// Command-line surface: synth, fit, ortho, extend, edit, traverse, eval, train,
// ablate, metrics and run. Exit status: 0 ok, 1 invalid input, 2 file errors.

#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "latax/latax.hpp"

namespace latax::cli {

namespace fs = std::filesystem;

/// Six base expressions followed by four local attributes.
inline const std::vector<std::string>& default_attribute_names() {
  static const std::vector<std::string> names = {"natural", "happy",   "angry", "fear",
                                                 "sad",     "surprise", "beard", "mouth",
                                                 "eyebrow", "eye"};
  return names;
}

inline std::vector<std::string> names_for(std::size_t k) {
  const auto& d = default_attribute_names();
  if (k <= d.size()) return {d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k)};
  std::vector<std::string> out;
  for (std::size_t i = 0; i < k; ++i) out.push_back("a" + std::to_string(i));
  return out;
}

inline void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

/// Collects the human-readable report; flushed to stdout and optionally a file.
class Report {
 public:
  void config(const json& j) { line("config: " + j.dump()); }
  void line(const std::string& s) { text_ += s + "\n"; }
  const std::string& text() const noexcept { return text_; }

 private:
  std::string text_;
};

inline std::string fixed(double x, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
  return buf;
}

inline std::string pad(std::string s, std::size_t width) {
  if (s.size() < width) s.append(width - s.size(), ' ');
  return s;
}

inline void write_latent_rows(const fs::path& path, const std::vector<double>& alphas,
                              const std::vector<Vec>& rows) {
  std::string out = "step,alpha";
  for (std::size_t j = 0; j < rows.front().dim(); ++j) out += ",z_" + std::to_string(j);
  out += "\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out += std::to_string(i) + "," + format_real(alphas[i]);
    for (const double v : rows[i].data()) out += "," + format_real(v);
    out += "\n";
  }
  write_file_atomic(path, out);
}

inline std::string image_extension(ImageFormat f) { return f == ImageFormat::kPgm8 ? ".pgm" : ".f64"; }

// ---------------------------------------------------------------------------
// Stages shared by the subcommands and `run`

struct SynthArgs {
  WorldParams world;
  std::size_t n = 4000;
  std::uint64_t seed = 0;
};

inline json synth_config(const SynthArgs& a) {
  return json{{"command", "synth"}, {"seed", a.seed},           {"p", a.world.p},
              {"k", a.world.k},     {"rho", a.world.rho},       {"noise_sigma", a.world.noise_sigma},
              {"img_h", a.world.img_h}, {"img_w", a.world.img_w}, {"n", a.n},
              {"names", a.world.names}};
}

inline std::pair<ToyWorldSpec, LatentDataset> run_synth(const SynthArgs& a, const fs::path& out,
                                                        Report& rep) {
  WorldParams wp = a.world;
  if (wp.names.empty()) wp.names = names_for(wp.k);
  wp.seed = derive_seed(a.seed, "world");
  if (a.n == 0) throw ValidationError("synth: n must be >= 1");
  ToyWorldSpec world = make_world(wp);
  LatentDataset ds = sample_dataset(world, a.n, derive_seed(a.seed, "dataset"));
  make_dir(out);
  write_world(out / "world.json", world);
  write_dataset(out / "dataset.csv", ds);
  rep.line("world: p=" + std::to_string(world.p()) + " k=" + std::to_string(world.k()) +
           " rho=" + format_real(wp.rho) + " noise_sigma=" + format_real(wp.noise_sigma));
  rep.line("wrote " + (out / "world.json").string() + ", " + (out / "dataset.csv").string() + " (" +
           std::to_string(ds.size()) + " samples)");
  return {std::move(world), std::move(ds)};
}

inline std::vector<std::string> default_base(const LatentDataset& ds) {
  const auto& attrs = ds.attributes();
  const std::size_t n = std::min<std::size_t>(6, attrs.size());
  return {attrs.begin(), attrs.begin() + static_cast<std::ptrdiff_t>(n)};
}

inline AxisBank run_fit(const LatentDataset& ds, const std::vector<std::string>& base, Report& rep) {
  AxisBank bank = build_bank(ds, base);
  rep.line(pad("axis", 12) + pad("r_squared", 12) + pad("bias", 12) + "rank_deficient");
  for (const auto& a : bank.base_raw()) {
    rep.line(pad(a.name, 12) + pad(fixed(a.r_squared, 6), 12) + pad(fixed(a.bias, 6), 12) +
             (a.rank_deficient ? "yes" : "no"));
  }
  rep.line("base_ortho gram deviation: " + format_real(max_identity_deviation(gram_matrix(bank.base_ortho()))));
  return bank;
}

inline AxisBank run_extend(AxisBank bank, const LatentDataset& ds, const std::vector<std::string>& names,
                           ExtensionMode mode, const std::optional<std::vector<double>>& weights,
                           Report& rep) {
  for (const auto& n : names) {
    bank = extend_axis(bank, ds, n, mode, weights);
    const Extension& e = bank.extensions().back();
    double worst = 0.0;
    for (const auto& b : bank.base_ortho()) worst = std::max(worst, std::abs(dot(b, e.d_out)));
    rep.line("extended '" + n + "' (" + std::string(to_string(mode)) +
             "): max |base . d_out| = " + format_real(worst));
  }
  return bank;
}

struct EvalArgs {
  std::size_t trials = 100;
  double alpha = 6.0;
  std::uint64_t seed = 0;
};

struct EvalResult {
  std::vector<std::string> axes;
  std::vector<FlipAccuracyReport> ortho;
  std::vector<FlipAccuracyReport> raw;
};

inline EvalResult run_eval(const ToyWorldSpec& world, const AxisBank& bank, const EvalArgs& a,
                           Report& rep) {
  EvalResult r;
  r.axes = bank.axis_names();
  for (const auto& axis : r.axes) {
    const std::uint64_t s = derive_seed(a.seed, axis);
    r.ortho.push_back(flip_accuracy(world, bank, axis, a.trials, a.alpha, s, DirectionKind::kOrthogonal));
    r.raw.push_back(flip_accuracy(world, bank, axis, a.trials, a.alpha, s, DirectionKind::kRaw));
  }
  std::string head = pad("", 14);
  std::string acc = pad("accuracy", 14);
  std::string acc_raw = pad("accuracy_raw", 14);
  std::string lo = pad("leak_ortho", 14);
  std::string lr = pad("leak_raw", 14);
  std::size_t lower = 0;
  for (std::size_t i = 0; i < r.axes.size(); ++i) {
    head += pad(r.axes[i], 10);
    acc += pad(fixed(r.ortho[i].accuracy, 2), 10);
    acc_raw += pad(fixed(r.raw[i].accuracy, 2), 10);
    lo += pad(fixed(r.ortho[i].non_target_leakage, 4), 10);
    lr += pad(fixed(r.raw[i].non_target_leakage, 4), 10);
    if (r.ortho[i].non_target_leakage < r.raw[i].non_target_leakage) ++lower;
  }
  for (auto* s : {&head, &acc, &acc_raw, &lo, &lr}) {
    while (!s->empty() && s->back() == ' ') s->pop_back();
    rep.line(*s);
  }
  rep.line("leakage below raw: " + std::to_string(lower) + "/" + std::to_string(r.axes.size()));
  return r;
}

inline json eval_to_json(const EvalResult& r, const EvalArgs& a) {
  json rows = json::array();
  for (std::size_t i = 0; i < r.axes.size(); ++i) {
    rows.push_back({{"axis", r.axes[i]},
                    {"accuracy", r.ortho[i].accuracy},
                    {"accuracy_raw", r.raw[i].accuracy},
                    {"leakage", r.ortho[i].non_target_leakage},
                    {"leakage_raw", r.raw[i].non_target_leakage},
                    {"target_delta", r.ortho[i].target_mean_delta},
                    {"mean_abs_delta", r.ortho[i].mean_abs_delta},
                    {"mean_abs_delta_raw", r.raw[i].mean_abs_delta}});
  }
  return json{{"trials", a.trials}, {"alpha", a.alpha}, {"seed", a.seed}, {"rows", std::move(rows)}};
}

struct TrainArgs {
  std::size_t n_images = 16;
  PixelLossKind loss{PixelLoss::kMsSsimMse, kDefaultMsSsimMix, 0, {}};
  OptimizerConfig opt;
  std::uint64_t seed = 0;
};

inline json optimizer_json(const OptimizerConfig& c) {
  return json{{"beta1", c.beta1},       {"beta2", c.beta2},         {"epsilon", c.epsilon},
              {"lr0", c.lr0},           {"halve_every", c.halve_every}, {"max_epochs", c.max_epochs},
              {"batch", c.batch},       {"seed", c.seed},           {"workers", c.workers}};
}

/// Optimizer and pyramid seeds are derived from the master seed.
inline OptimizerConfig seeded(OptimizerConfig c, std::uint64_t seed) {
  c.seed = derive_seed(seed, "optimizer");
  return c;
}

inline FeaturePyramidSpec pyramid_for(std::uint64_t seed) {
  return FeaturePyramidSpec::standard(derive_seed(seed, "pyramid"));
}

inline TrainReport run_train(const ToyWorldSpec& world, const TrainArgs& a, Report& rep) {
  const auto images = sample_images(world, a.n_images, derive_seed(a.seed, "train-images"));
  TrainReport tr = train_encoder(world, pyramid_for(a.seed), a.loss, images, seeded(a.opt, a.seed));
  rep.line("loss " + std::string(to_string(a.loss.kind)) + ": initial " + format_real(tr.initial_loss) +
           ", final " + format_real(tr.final_loss) + " after " + std::to_string(tr.epochs_run) +
           " epochs");
  return tr;
}

struct AblateRow {
  std::string loss;
  double psnr = 0.0;
  double ssim = 0.0;
  double final_loss = 0.0;
};

inline std::vector<AblateRow> run_ablate(const ToyWorldSpec& world, const TrainArgs& a,
                                         std::size_t n_test, Report& rep) {
  if (n_test == 0) throw ValidationError("ablate: need at least one test image");
  const auto train = sample_images(world, a.n_images, derive_seed(a.seed, "train-images"));
  const auto test = sample_images(world, n_test, derive_seed(a.seed, "test-images"));
  const Mat decoder = decoder_matrix(world);
  std::vector<AblateRow> rows;
  for (const PixelLoss k : {PixelLoss::kLogCosh, PixelLoss::kMse, PixelLoss::kMae, PixelLoss::kMsSsimMse}) {
    PixelLossKind kind = a.loss;
    kind.kind = k;
    const TrainReport tr = train_encoder(world, pyramid_for(a.seed), kind, train, seeded(a.opt, a.seed));
    AblateRow row{std::string(to_string(k)), 0.0, 0.0, tr.final_loss};
    for (const auto& x : test) {
      const ImageGrid xs = reconstruct(decoder, tr.encoder, x);
      row.psnr += psnr(x, xs);
      row.ssim += ssim(x, xs);
    }
    row.psnr /= static_cast<double>(n_test);
    row.ssim /= static_cast<double>(n_test);
    rows.push_back(row);
  }
  rep.line(pad("loss", 14) + pad("PSNR", 10) + "SSIM");
  for (const auto& r : rows) rep.line(pad(r.loss, 14) + pad(fixed(r.psnr, 2), 10) + fixed(r.ssim, 4));
  return rows;
}

// ---------------------------------------------------------------------------
// Run configuration: one master seed drives synth -> fit -> extend -> eval.

struct RunConfig {
  std::uint64_t master_seed = 0;
  WorldParams world;
  std::size_t n_samples = 4000;
  std::vector<std::string> base;
  std::vector<std::string> extend;
  ExtensionMode extension_mode = ExtensionMode::kResidual;
  EvalArgs eval;
  std::string output_dir = "out";
};

inline RunConfig run_config_from_json(const json& j) {
  const std::string where = "run config";
  if (!j.is_object()) throw ParseError(where + ": expected a JSON object");
  for (const auto& [key, _] : j.items()) {
    static const std::vector<std::string> known = {"master_seed", "world", "n_samples", "base", "extend",
                                                   "extension_mode", "eval", "output_dir"};
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ParseError(where + ": unknown field '" + key + "'");
  }
  RunConfig c;
  try {
    c.master_seed = j.value("master_seed", std::uint64_t{0});
    c.n_samples = j.value("n_samples", c.n_samples);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("world")) {
      const json& w = j["world"];
      for (const auto& [key, _] : w.items()) {
        static const std::vector<std::string> known = {"p", "k", "rho", "noise_sigma", "img_h", "img_w", "names"};
        if (std::find(known.begin(), known.end(), key) == known.end())
          throw ParseError(where + ": unknown world field '" + key + "'");
      }
      c.world.p = w.value("p", c.world.p);
      c.world.k = w.value("k", c.world.k);
      c.world.rho = w.value("rho", c.world.rho);
      c.world.noise_sigma = w.value("noise_sigma", c.world.noise_sigma);
      c.world.img_h = w.value("img_h", c.world.img_h);
      c.world.img_w = w.value("img_w", c.world.img_w);
      c.world.names = w.value("names", c.world.names);
    }
    if (c.world.names.empty()) c.world.names = names_for(c.world.k);
    const auto& names = c.world.names;
    const std::size_t nb = std::min<std::size_t>(6, names.size());
    c.base = j.value("base", std::vector<std::string>(names.begin(), names.begin() + static_cast<std::ptrdiff_t>(nb)));
    c.extend = j.value("extend", std::vector<std::string>(names.begin() + static_cast<std::ptrdiff_t>(nb), names.end()));
    c.extension_mode = parse_extension_mode(j.value("extension_mode", std::string("residual")));
    if (j.contains("eval")) {
      c.eval.trials = j["eval"].value("trials", c.eval.trials);
      c.eval.alpha = j["eval"].value("alpha", c.eval.alpha);
    }
  } catch (const json::exception& e) {
    throw ParseError(where + ": " + e.what());
  }
  c.eval.seed = derive_seed(c.master_seed, "eval");
  for (const auto& n : c.base)
    if (std::find(c.world.names.begin(), c.world.names.end(), n) == c.world.names.end())
      throw ValidationError(where + ": base attribute '" + n + "' is not a world attribute");
  for (const auto& n : c.extend)
    if (std::find(c.world.names.begin(), c.world.names.end(), n) == c.world.names.end())
      throw ValidationError(where + ": extension attribute '" + n + "' is not a world attribute");
  return c;
}

inline json run_config_to_json(const RunConfig& c) {
  return json{{"master_seed", c.master_seed},
              {"world",
               {{"p", c.world.p},
                {"k", c.world.k},
                {"rho", c.world.rho},
                {"noise_sigma", c.world.noise_sigma},
                {"img_h", c.world.img_h},
                {"img_w", c.world.img_w},
                {"names", c.world.names}}},
              {"n_samples", c.n_samples},
              {"base", c.base},
              {"extend", c.extend},
              {"extension_mode", std::string(to_string(c.extension_mode))},
              {"eval", {{"trials", c.eval.trials}, {"alpha", c.eval.alpha}}},
              {"output_dir", c.output_dir}};
}

inline void run_pipeline(const RunConfig& c, Report& rep) {
  const fs::path out = c.output_dir;
  json echo = run_config_to_json(c);
  echo["command"] = "run";
  rep.config(echo);
  SynthArgs sa{c.world, c.n_samples, derive_seed(c.master_seed, "synth")};
  auto [world, ds] = run_synth(sa, out, rep);
  AxisBank bank = run_fit(ds, c.base, rep);
  write_axis_bank(out / "bank_base.json", bank);
  bank = run_extend(std::move(bank), ds, c.extend, c.extension_mode, std::nullopt, rep);
  write_axis_bank(out / "bank.json", bank);
  const EvalResult r = run_eval(world, bank, c.eval, rep);
  write_file_atomic(out / "eval.json", eval_to_json(r, c.eval).dump(2) + "\n");
  write_file_atomic(out / "config.json", echo.dump(2) + "\n");
  write_file_atomic(out / "report.txt", rep.text());
}

// ---------------------------------------------------------------------------

inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout,
                    std::ostream& err = std::cerr) {
  CLI::App app{"Latent attribute axes: fit, decouple, extend, edit and evaluate on a toy world", "latax"};
  app.require_subcommand(1);
  std::string report_path;
  app.add_option("--report", report_path, "also write the report to this file");
  app.fallthrough();

  // synth
  SynthArgs synth;
  std::string synth_out = ".";
  auto* c_synth = app.add_subcommand("synth", "make a toy world and a labeled latent dataset");
  c_synth->add_option("--p", synth.world.p, "latent dimension")->capture_default_str();
  c_synth->add_option("--k", synth.world.k, "attribute count")->capture_default_str();
  c_synth->add_option("--rho", synth.world.rho, "pairwise cosine of true directions")->capture_default_str();
  c_synth->add_option("--noise", synth.world.noise_sigma, "label noise sigma")->capture_default_str();
  c_synth->add_option("--img-h", synth.world.img_h, "image height")->capture_default_str();
  c_synth->add_option("--img-w", synth.world.img_w, "image width")->capture_default_str();
  c_synth->add_option("--names", synth.world.names, "attribute names")->delimiter(',');
  c_synth->add_option("--n", synth.n, "samples")->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "master seed")->capture_default_str();
  c_synth->add_option("--out", synth_out, "output directory")->capture_default_str();

  // fit
  std::string fit_data, fit_out = "bank.json";
  std::vector<std::string> fit_base;
  auto* c_fit = app.add_subcommand("fit", "fit and orthonormalize base attribute axes");
  c_fit->add_option("--data", fit_data, "dataset csv")->required();
  c_fit->add_option("--base", fit_base, "base attributes, in order (default: first six)")->delimiter(',');
  c_fit->add_option("--out", fit_out, "axis bank json")->capture_default_str();

  // ortho
  std::string ortho_bank;
  auto* c_ortho = app.add_subcommand("ortho", "print the Gram matrix of a bank's directions");
  c_ortho->add_option("--bank", ortho_bank, "axis bank json")->required();

  // extend
  std::string ext_bank, ext_data, ext_out, ext_mode = "residual";
  std::vector<std::string> ext_names;
  std::vector<double> ext_weights;
  auto* c_ext = app.add_subcommand("extend", "add attribute axes orthogonal to the base");
  c_ext->add_option("--bank", ext_bank, "axis bank json")->required();
  c_ext->add_option("--data", ext_data, "dataset csv")->required();
  c_ext->add_option("--names", ext_names, "attributes to add (default: all not in the bank)")->delimiter(',');
  c_ext->add_option("--mode", ext_mode, "residual | per-subvector")->capture_default_str();
  c_ext->add_option("--weights", ext_weights, "per-subvector weights")->delimiter(',');
  c_ext->add_option("--out", ext_out, "output bank json (default: overwrite --bank)");

  // edit
  std::string edit_bank, edit_data, edit_world, edit_out = ".", edit_format = "pgm8";
  std::size_t edit_index = 0;
  std::vector<std::string> edit_steps;
  bool edit_raw = false;
  auto* c_edit = app.add_subcommand("edit", "edit one latent along one or more axes");
  c_edit->add_option("--bank", edit_bank, "axis bank json")->required();
  c_edit->add_option("--data", edit_data, "dataset csv holding the latent")->required();
  c_edit->add_option("--index", edit_index, "row of the latent")->capture_default_str();
  c_edit->add_option("--step", edit_steps, "axis=alpha, applied in order")->required();
  c_edit->add_flag("--raw", edit_raw, "use raw fitted directions");
  c_edit->add_option("--world", edit_world, "world json for preview images");
  c_edit->add_option("--format", edit_format, "pgm8 | f64raw")->capture_default_str();
  c_edit->add_option("--out", edit_out, "output directory")->capture_default_str();

  // traverse
  std::string tr_bank, tr_data, tr_world, tr_axis, tr_out = ".", tr_format = "pgm8";
  std::size_t tr_index = 0, tr_steps = 7;
  double tr_start = -3.0, tr_end = 3.0;
  bool tr_raw = false;
  auto* c_tr = app.add_subcommand("traverse", "evenly spaced edits along one axis");
  c_tr->add_option("--bank", tr_bank, "axis bank json")->required();
  c_tr->add_option("--data", tr_data, "dataset csv holding the latent")->required();
  c_tr->add_option("--index", tr_index, "row of the latent")->capture_default_str();
  c_tr->add_option("--axis", tr_axis, "axis name")->required();
  c_tr->add_option("--start", tr_start, "first alpha")->capture_default_str();
  c_tr->add_option("--end", tr_end, "last alpha")->capture_default_str();
  c_tr->add_option("--steps", tr_steps, "number of frames")->capture_default_str();
  c_tr->add_flag("--raw", tr_raw, "use raw fitted directions");
  c_tr->add_option("--world", tr_world, "world json for preview images");
  c_tr->add_option("--format", tr_format, "pgm8 | f64raw")->capture_default_str();
  c_tr->add_option("--out", tr_out, "output directory")->capture_default_str();

  // eval
  std::string ev_world, ev_bank, ev_out;
  EvalArgs ev;
  auto* c_ev = app.add_subcommand("eval", "flip accuracy and leakage per axis");
  c_ev->add_option("--world", ev_world, "world json")->required();
  c_ev->add_option("--bank", ev_bank, "axis bank json")->required();
  c_ev->add_option("--trials", ev.trials, "edits per axis")->capture_default_str();
  c_ev->add_option("--alpha", ev.alpha, "edit intensity")->capture_default_str();
  c_ev->add_option("--seed", ev.seed, "seed")->capture_default_str();
  c_ev->add_option("--out", ev_out, "eval json");

  // train / ablate share options
  TrainArgs ta;
  std::string ta_world, ta_out, ta_loss = "ms_ssim_mse";
  std::size_t n_test = 100;
  auto add_train_opts = [&](CLI::App* c) {
    c->add_option("--world", ta_world, "world json")->required();
    c->add_option("--images", ta.n_images, "training images")->capture_default_str();
    c->add_option("--lambda", ta.loss.lambda, "ms_ssim_mse mix weight")->capture_default_str();
    c->add_option("--epochs", ta.opt.max_epochs, "epochs")->capture_default_str();
    c->add_option("--lr", ta.opt.lr0, "initial learning rate")->capture_default_str();
    c->add_option("--halve-every", ta.opt.halve_every, "epochs per learning-rate halving")->capture_default_str();
    c->add_option("--batch", ta.opt.batch, "batch size, 0 for full batch")->capture_default_str();
    c->add_option("--workers", ta.opt.workers, "gradient worker threads")->capture_default_str();
    c->add_option("--seed", ta.seed, "master seed")->capture_default_str();
    c->add_option("--out", ta_out, "report json");
  };
  auto* c_train = app.add_subcommand("train", "train the toy linear encoder with Adam");
  add_train_opts(c_train);
  c_train->add_option("--loss", ta_loss, "mse | mae | log_cosh | ms_ssim_mse")->capture_default_str();
  auto* c_abl = app.add_subcommand("ablate", "PSNR/SSIM of encoders trained with each pixel loss");
  add_train_opts(c_abl);
  c_abl->add_option("--test", n_test, "test images")->capture_default_str();

  // metrics
  std::string m_a, m_b;
  std::size_t m_scales = 0;
  auto* c_met = app.add_subcommand("metrics", "PSNR, SSIM and MS-SSIM between two images");
  c_met->add_option("a", m_a, "first image")->required();
  c_met->add_option("b", m_b, "second image")->required();
  c_met->add_option("--scales", m_scales, "MS-SSIM scales, 0 for as many as fit (max 5)")->capture_default_str();

  // run
  std::string run_cfg, run_out;
  auto* c_run = app.add_subcommand("run", "synth -> fit -> extend -> eval from one config");
  c_run->add_option("--config", run_cfg, "run config json")->required();
  c_run->add_option("--out", run_out, "output directory (overrides the config)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 1;
  }

  Report rep;
  try {
    if (c_synth->parsed()) {
      rep.config(synth_config(synth));
      run_synth(synth, synth_out, rep);
    } else if (c_fit->parsed()) {
      const LatentDataset ds = read_dataset(fit_data);
      const auto base = fit_base.empty() ? default_base(ds) : fit_base;
      rep.config({{"command", "fit"}, {"data", fit_data}, {"base", base}, {"out", fit_out}});
      write_axis_bank(fit_out, run_fit(ds, base, rep));
    } else if (c_ortho->parsed()) {
      rep.config({{"command", "ortho"}, {"bank", ortho_bank}});
      const AxisBank bank = read_axis_bank(ortho_bank);
      const Mat g = gram_matrix(bank.base_ortho());
      for (std::size_t i = 0; i < g.rows(); ++i) {
        std::string row = pad(bank.base_raw()[i].name, 12);
        for (std::size_t j = 0; j < g.cols(); ++j) row += " " + format_real(g(i, j));
        rep.line(row);
      }
      rep.line("max |G - I|: " + format_real(max_identity_deviation(g)));
      std::vector<Vec> all(bank.base_ortho());
      for (const auto& e : bank.extensions()) all.push_back(e.d_out);
      rep.line("max |G - I| with extensions: " + format_real(max_identity_deviation(gram_matrix(all))));
    } else if (c_ext->parsed()) {
      const AxisBank bank = read_axis_bank(ext_bank);
      const LatentDataset ds = read_dataset(ext_data);
      std::vector<std::string> names = ext_names;
      if (names.empty())
        for (const auto& a : ds.attributes())
          if (!bank.has_axis(a)) names.push_back(a);
      const std::string dest = ext_out.empty() ? ext_bank : ext_out;
      rep.config({{"command", "extend"}, {"bank", ext_bank}, {"data", ext_data}, {"names", names},
                  {"mode", ext_mode}, {"weights", ext_weights}, {"out", dest}});
      std::optional<std::vector<double>> w;
      if (!ext_weights.empty()) w = ext_weights;
      write_axis_bank(dest, run_extend(bank, ds, names, parse_extension_mode(ext_mode), w, rep));
    } else if (c_edit->parsed()) {
      const ImageFormat fmt = parse_image_format(edit_format);
      const AxisBank bank = read_axis_bank(edit_bank);
      const LatentDataset ds = read_dataset(edit_data);
      if (edit_index >= ds.size()) throw ValidationError("edit: --index out of range");
      EditPlan plan;
      for (const auto& s : edit_steps) {
        const auto eq = s.rfind('=');
        const auto alpha = eq == std::string::npos ? std::nullopt : parse_real(std::string_view(s).substr(eq + 1));
        if (!alpha || !std::isfinite(*alpha)) throw ValidationError("edit: step '" + s + "' is not axis=alpha");
        plan.push_back(EditStep{s.substr(0, eq), *alpha});
      }
      rep.config({{"command", "edit"}, {"bank", edit_bank}, {"data", edit_data}, {"index", edit_index},
                  {"steps", edit_steps}, {"raw", edit_raw}, {"out", edit_out}});
      const DirectionKind kind = edit_raw ? DirectionKind::kRaw : DirectionKind::kOrthogonal;
      const Vec z = ds.latent(edit_index);
      const Vec z2 = apply_plan(z, bank, plan, kind);
      make_dir(edit_out);
      write_latent_rows(fs::path(edit_out) / "edited.csv", {0.0, 1.0}, {z, z2});
      if (!edit_world.empty()) {
        const ToyWorldSpec world = read_world(edit_world);
        write_image(fs::path(edit_out) / ("original" + image_extension(fmt)), decode(world, z, true), fmt);
        write_image(fs::path(edit_out) / ("edited" + image_extension(fmt)), decode(world, z2, true), fmt);
        const Vec before = true_scores(world, z);
        const Vec after = true_scores(world, z2);
        for (std::size_t j = 0; j < world.k(); ++j)
          rep.line(pad(world.names[j], 12) + fixed(before[j], 4) + " -> " + fixed(after[j], 4));
      }
      rep.line("wrote " + (fs::path(edit_out) / "edited.csv").string());
    } else if (c_tr->parsed()) {
      const ImageFormat fmt = parse_image_format(tr_format);
      const AxisBank bank = read_axis_bank(tr_bank);
      const LatentDataset ds = read_dataset(tr_data);
      if (tr_index >= ds.size()) throw ValidationError("traverse: --index out of range");
      rep.config({{"command", "traverse"}, {"bank", tr_bank}, {"data", tr_data}, {"index", tr_index},
                  {"axis", tr_axis}, {"start", tr_start}, {"end", tr_end}, {"steps", tr_steps},
                  {"raw", tr_raw}, {"out", tr_out}});
      const DirectionKind kind = tr_raw ? DirectionKind::kRaw : DirectionKind::kOrthogonal;
      const auto alphas = traversal_alphas(tr_start, tr_end, tr_steps);
      const auto frames = traverse(ds.latent(tr_index), bank, tr_axis, tr_start, tr_end, tr_steps, kind);
      make_dir(tr_out);
      write_latent_rows(fs::path(tr_out) / "traverse.csv", alphas, frames);
      if (!tr_world.empty()) {
        const ToyWorldSpec world = read_world(tr_world);
        for (std::size_t i = 0; i < frames.size(); ++i) {
          char name[32];
          std::snprintf(name, sizeof name, "frame_%03zu", i);
          write_image(fs::path(tr_out) / (name + image_extension(fmt)), decode(world, frames[i], true), fmt);
        }
      }
      rep.line("wrote " + std::to_string(frames.size()) + " frames to " + tr_out);
    } else if (c_ev->parsed()) {
      const ToyWorldSpec world = read_world(ev_world);
      const AxisBank bank = read_axis_bank(ev_bank);
      rep.config({{"command", "eval"}, {"world", ev_world}, {"bank", ev_bank}, {"trials", ev.trials},
                  {"alpha", ev.alpha}, {"seed", ev.seed}});
      const EvalResult r = run_eval(world, bank, ev, rep);
      if (!ev_out.empty()) write_file_atomic(ev_out, eval_to_json(r, ev).dump(2) + "\n");
    } else if (c_train->parsed() || c_abl->parsed()) {
      const bool ablate = c_abl->parsed();
      const ToyWorldSpec world = read_world(ta_world);
      if (!ablate) ta.loss.kind = parse_pixel_loss(ta_loss);
      json cfg{{"command", ablate ? "ablate" : "train"}, {"world", ta_world}, {"seed", ta.seed},
               {"images", ta.n_images}, {"lambda", ta.loss.lambda},
               {"optimizer", optimizer_json(seeded(ta.opt, ta.seed))}};
      if (ablate) cfg["test"] = n_test;
      else cfg["loss"] = ta_loss;
      rep.config(cfg);
      json result;
      if (ablate) {
        json rows = json::array();
        for (const auto& r : run_ablate(world, ta, n_test, rep))
          rows.push_back({{"loss", r.loss}, {"psnr", r.psnr}, {"ssim", r.ssim}, {"final_loss", r.final_loss}});
        result = {{"config", cfg}, {"rows", rows}};
      } else {
        const TrainReport tr = run_train(world, ta, rep);
        result = {{"config", cfg},
                  {"initial_loss", tr.initial_loss},
                  {"final_loss", tr.final_loss},
                  {"epochs_run", tr.epochs_run},
                  {"loss_trace", tr.loss_trace}};
        if (!ta_out.empty()) {
          fs::path enc = ta_out;
          enc.replace_extension(".encoder.f64");
          write_image(enc, ImageGrid(tr.encoder.rows(), tr.encoder.cols(), tr.encoder.data()),
                      ImageFormat::kF64Raw);
        }
      }
      if (!ta_out.empty()) write_file_atomic(ta_out, result.dump(2) + "\n");
    } else if (c_met->parsed()) {
      rep.config({{"command", "metrics"}, {"a", m_a}, {"b", m_b}, {"scales", m_scales}});
      const ImageGrid a = read_image(m_a);
      const ImageGrid b = read_image(m_b);
      rep.line("psnr: " + format_real(psnr(a, b)));
      rep.line("ssim: " + format_real(ssim(a, b)));
      const std::size_t s = m_scales ? m_scales : std::min<std::size_t>(5, max_ms_ssim_scales(a.height(), a.width()));
      if (s == 0) rep.line("ms_ssim: n/a (image smaller than the SSIM window)");
      else rep.line("ms_ssim: " + format_real(ms_ssim(a, b, s)) + " (" + std::to_string(s) + " scales)");
    } else if (c_run->parsed()) {
      RunConfig cfg = run_config_from_json(detail::parse_json(read_file(run_cfg), "run config"));
      if (!run_out.empty()) cfg.output_dir = run_out;
      run_pipeline(cfg, rep);
    }
  } catch (const IoError& e) {
    out << rep.text();
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const fs::filesystem_error& e) {
    out << rep.text();
    err << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    out << rep.text();
    err << "error: " << e.what() << "\n";
    return 1;
  }

  out << rep.text();
  if (!report_path.empty()) {
    try {
      write_file_atomic(report_path, rep.text());
    } catch (const IoError& e) {
      err << "io error: " << e.what() << "\n";
      return 2;
    }
  }
  return 0;
}

}  // namespace latax::cli
