#include <catch_amalgamated.hpp>

#include <filesystem>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "latax/cli.hpp"

using namespace latax;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

Run invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "latax");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  Run r;
  r.code = cli::cli_main(static_cast<int>(argv.size()), argv.data(), out, err);
  r.out = out.str();
  r.err = err.str();
  return r;
}

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("latax_test_cli_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::map<std::string, std::string> snapshot(const fs::path& dir) {
  std::map<std::string, std::string> files;
  for (const auto& e : fs::recursive_directory_iterator(dir))
    if (e.is_regular_file()) files[fs::relative(e.path(), dir).string()] = read_file(e.path());
  return files;
}

std::vector<std::string> lines_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::vector<std::string> words_of(const std::string& s) {
  std::vector<std::string> out;
  std::istringstream in(s);
  for (std::string w; in >> w;) out.push_back(w);
  return out;
}

}  // namespace

TEST_CASE("synth twice with the same seed writes identical files") {
  const fs::path d = scratch("synth");
  const std::vector<std::string> common = {"synth", "--p", "64", "--k", "6", "--rho", "0.5",
                                           "--n", "4000", "--seed", "7", "--img-h", "16", "--img-w", "16"};
  auto a = common, b = common;
  a.insert(a.end(), {"--out", (d / "a").string()});
  b.insert(b.end(), {"--out", (d / "b").string()});
  REQUIRE(invoke(a).code == 0);
  REQUIRE(invoke(b).code == 0);
  const auto fa = snapshot(d / "a");
  const auto fb = snapshot(d / "b");
  CHECK(fa.size() == 2);
  CHECK(fa == fb);
  const auto ds = read_dataset(d / "a" / "dataset.csv");
  CHECK(ds.size() == 4000);
  CHECK(ds.dim() == 64);
}

TEST_CASE("exit codes") {
  const fs::path d = scratch("codes");
  const Run unknown = invoke({"frobnicate"});
  CHECK(unknown.code == 1);
  CHECK_THAT(unknown.err, ContainsSubstring("Usage") || ContainsSubstring("SUBCOMMANDS"));
  CHECK(invoke({}).code == 1);
  CHECK(invoke({"synth", "--bogus-flag", "1"}).code == 1);
  CHECK(invoke({"fit", "--data", (d / "missing.csv").string()}).code == 2);
  CHECK(invoke({"synth", "--rho", "0.99", "--out", (d / "s").string()}).code == 1);
  CHECK(invoke({"--help"}).code == 0);

  std::string junk = "id,z_0,happy\n0,1\n";
  write_file_atomic(d / "junk.csv", junk);
  const Run parse = invoke({"fit", "--data", (d / "junk.csv").string()});
  CHECK(parse.code == 1);
  CHECK_THAT(parse.err, ContainsSubstring("row 1"));
}

TEST_CASE("every run echoes its resolved config with the seed") {
  const fs::path d = scratch("echo");
  const Run r = invoke({"synth", "--p", "8", "--k", "2", "--n", "20", "--seed", "31", "--img-h", "16",
                     "--img-w", "16", "--out", d.string()});
  REQUIRE(r.code == 0);
  const auto first = lines_of(r.out).front();
  CHECK(first.rfind("config: ", 0) == 0);
  const auto cfg = json::parse(first.substr(8));
  CHECK(cfg["seed"] == 31);
  CHECK(cfg["p"] == 8);
}

TEST_CASE("fit, ortho, extend, edit, traverse and eval chain through files") {
  const fs::path d = scratch("chain");
  REQUIRE(invoke({"synth", "--p", "32", "--k", "10", "--rho", "0.5", "--noise", "0", "--n", "600", "--seed",
               "3", "--img-h", "16", "--img-w", "16", "--out", d.string()})
              .code == 0);
  const std::string data = (d / "dataset.csv").string();
  const std::string bank = (d / "bank.json").string();
  REQUIRE(invoke({"fit", "--data", data, "--out", bank}).code == 0);
  CHECK(read_axis_bank(bank).base_raw().size() == 6);

  const Run ortho = invoke({"ortho", "--bank", bank});
  REQUIRE(ortho.code == 0);
  CHECK_THAT(ortho.out, ContainsSubstring("max |G - I|"));

  REQUIRE(invoke({"extend", "--bank", bank, "--data", data}).code == 0);
  const AxisBank full = read_axis_bank(bank);
  CHECK(full.axis_names().size() == 10);
  CHECK(full.axis_names()[9] == "eye");

  const fs::path ed = d / "edit";
  const Run edit = invoke({"edit", "--bank", bank, "--data", data, "--index", "4", "--step", "happy=2",
                        "--step", "beard=-1", "--world", (d / "world.json").string(), "--out", ed.string()});
  REQUIRE(edit.code == 0);
  CHECK(fs::exists(ed / "edited.csv"));
  CHECK(fs::exists(ed / "original.pgm"));
  CHECK(read_image(ed / "edited.pgm").height() == 16);
  CHECK(invoke({"edit", "--bank", bank, "--data", data, "--step", "nope=1"}).code == 1);
  CHECK(invoke({"edit", "--bank", bank, "--data", data, "--step", "happy"}).code == 1);

  const fs::path td = d / "trav";
  const Run trav = invoke({"traverse", "--bank", bank, "--data", data, "--axis", "mouth", "--world",
                        (d / "world.json").string(), "--format", "f64raw", "--out", td.string()});
  REQUIRE(trav.code == 0);
  CHECK(fs::exists(td / "frame_006.f64"));
  CHECK(lines_of(read_file(td / "traverse.csv")).size() == 8);

  const Run ev = invoke({"eval", "--world", (d / "world.json").string(), "--bank", bank, "--trials", "100",
                      "--out", (d / "eval.json").string()});
  REQUIRE(ev.code == 0);
  const auto rows = lines_of(ev.out);
  auto find_row = [&](const std::string& label) {
    for (const auto& l : rows)
      if (l.rfind(label + " ", 0) == 0) return words_of(l);
    return std::vector<std::string>{};
  };
  const auto header = words_of(rows[1]);
  CHECK(header.size() == 10);
  CHECK(find_row("accuracy").size() == 11);
  CHECK(find_row("leak_ortho").size() == 11);
  const auto ej = json::parse(read_file(d / "eval.json"));
  CHECK(ej["rows"].size() == 10);
}

TEST_CASE("metrics compares two image files") {
  const fs::path d = scratch("metrics");
  write_image(d / "a.f64", ImageGrid::filled(32, 32, 0.25), ImageFormat::kF64Raw);
  write_image(d / "b.pgm", ImageGrid::filled(32, 32, 0.25), ImageFormat::kPgm8);
  const Run same = invoke({"metrics", (d / "a.f64").string(), (d / "a.f64").string()});
  REQUIRE(same.code == 0);
  CHECK_THAT(same.out, ContainsSubstring("psnr: 100"));
  CHECK(invoke({"metrics", (d / "a.f64").string(), (d / "b.pgm").string()}).code == 0);
  write_image(d / "c.f64", ImageGrid::filled(16, 32, 0.25), ImageFormat::kF64Raw);
  CHECK(invoke({"metrics", (d / "a.f64").string(), (d / "c.f64").string()}).code == 1);
}

TEST_CASE("train and ablate on a small world") {
  const fs::path d = scratch("train");
  REQUIRE(invoke({"synth", "--p", "8", "--k", "3", "--n", "10", "--seed", "5", "--img-h", "32", "--img-w", "32",
               "--out", d.string()})
              .code == 0);
  const std::string world = (d / "world.json").string();
  const Run tr = invoke({"train", "--world", world, "--images", "4", "--epochs", "30", "--loss", "mse", "--out",
                      (d / "train.json").string()});
  REQUIRE(tr.code == 0);
  const auto tj = json::parse(read_file(d / "train.json"));
  CHECK(tj["loss_trace"].size() == 30);
  CHECK(fs::exists(d / "train.encoder.f64"));
  CHECK(invoke({"train", "--world", world, "--loss", "huber"}).code == 1);

  const std::vector<std::string> ablate = {"ablate", "--world", world, "--images", "4", "--epochs", "20",
                                           "--test", "3"};
  const Run a1 = invoke(ablate);
  const Run a2 = invoke(ablate);
  REQUIRE(a1.code == 0);
  CHECK(a1.out == a2.out);
  const auto rows = lines_of(a1.out);
  std::vector<std::string> losses;
  bool in_table = false;
  for (const auto& l : rows) {
    const auto w = words_of(l);
    if (!w.empty() && w[0] == "loss" && w.size() == 3) {
      CHECK(w[1] == "PSNR");
      CHECK(w[2] == "SSIM");
      in_table = true;
      continue;
    }
    if (in_table && w.size() == 3) losses.push_back(w[0]);
  }
  CHECK(losses == std::vector<std::string>{"log_cosh", "mse", "mae", "ms_ssim_mse"});
}

TEST_CASE("run pipeline reproduces byte-identical outputs") {
  const fs::path d = scratch("run");
  write_file_atomic(d / "cfg.json", R"({"master_seed": 99,
    "world": {"p": 32, "k": 10, "rho": 0.5, "noise_sigma": 0.0, "img_h": 16, "img_w": 16},
    "n_samples": 800, "eval": {"trials": 20}})");
  const fs::path out = d / "out";
  const Run first = invoke({"run", "--config", (d / "cfg.json").string(), "--out", out.string()});
  REQUIRE(first.code == 0);
  const auto s1 = snapshot(out);
  CHECK(s1.size() == 7);
  const Run second = invoke({"run", "--config", (d / "cfg.json").string(), "--out", out.string()});
  REQUIRE(second.code == 0);
  CHECK(first.out == second.out);
  CHECK(snapshot(out) == s1);

  write_file_atomic(d / "bad.json", R"({"master_seed": 1, "colour": "blue"})");
  CHECK(invoke({"run", "--config", (d / "bad.json").string()}).code == 1);
  write_file_atomic(d / "bad2.json", R"({"world": {"k": 3}, "base": ["nobody"]})");
  CHECK(invoke({"run", "--config", (d / "bad2.json").string()}).code == 1);
}
