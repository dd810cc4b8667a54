#include <catch_amalgamated.hpp>

#include <bit>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "latax/axes.hpp"
#include "latax/io.hpp"
#include "latax/toyworld.hpp"
#include "oracles.hpp"

using namespace latax;
using Catch::Matchers::ContainsSubstring;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("latax_test_io_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

bool same_bits(const Vec& a, const Vec& b) {
  if (a.dim() != b.dim()) return false;
  for (std::size_t i = 0; i < a.dim(); ++i)
    if (std::bit_cast<std::uint64_t>(a[i]) != std::bit_cast<std::uint64_t>(b[i])) return false;
  return true;
}

LatentDataset random_dataset(std::size_t n, std::size_t p, std::size_t m, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::int64_t> ids(n);
  std::vector<double> z(n * p), y(n * m);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i) * 3 - 7;
  for (double& v : z) v = rng.normal() * std::exp(4.0 * rng.normal());
  for (double& v : y) v = rng.normal();
  y[0] = 1e-310;  // subnormal
  y[1] = -0.0;
  std::vector<std::string> names;
  for (std::size_t j = 0; j < m; ++j) names.push_back("attr" + std::to_string(j));
  return LatentDataset(std::move(ids), Mat(n, p, std::move(z)), std::move(names), Mat(n, m, std::move(y)));
}

AxisBank six_plus_four() {
  WorldParams w;
  w.p = 32;
  w.k = 10;
  w.rho = 0.5;
  w.img_h = 16;
  w.img_w = 16;
  w.seed = 12;
  const auto world = make_world(w);
  const auto ds = sample_dataset(world, 400, 13);
  AxisBank bank = build_bank(ds, std::vector<std::string>(world.names.begin(), world.names.begin() + 6));
  for (std::size_t j = 6; j < 10; ++j) bank = extend_axis(bank, ds, world.names[j], ExtensionMode::kResidual);
  return bank;
}

}  // namespace

TEST_CASE("real formatting round-trips bit-exactly") {
  Rng rng(1);
  for (int i = 0; i < 2000; ++i) {
    const double x = rng.normal() * std::exp(30.0 * rng.normal());
    const auto back = parse_real(format_real(x));
    REQUIRE(back.has_value());
    CHECK(std::bit_cast<std::uint64_t>(*back) == std::bit_cast<std::uint64_t>(x));
  }
  CHECK(format_real(0.1) == "0.10000000000000001");
  CHECK_FALSE(parse_real("1.5x").has_value());
  CHECK_FALSE(parse_real("").has_value());
}

TEST_CASE("dataset csv round-trip of a 10 x 8 dataset is bit-identical") {
  const auto ds = random_dataset(10, 8, 3, 2);
  const auto back = dataset_from_csv(dataset_to_csv(ds));
  CHECK(back.ids() == ds.ids());
  CHECK(back.attributes() == ds.attributes());
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(same_bits(back.latent(i), ds.latent(i)));
    for (std::size_t j = 0; j < 3; ++j)
      CHECK(std::bit_cast<std::uint64_t>(back.labels()(i, j)) ==
            std::bit_cast<std::uint64_t>(ds.labels()(i, j)));
  }
  const fs::path d = scratch("csv");
  write_dataset(d / "ds.csv", ds);
  CHECK(read_dataset(d / "ds.csv") == ds);
  CHECK(dataset_to_csv(ds).rfind("id,z_0,z_1,z_2,z_3,z_4,z_5,z_6,z_7,attr0,attr1,attr2\n", 0) == 0);
}

TEST_CASE("dataset csv errors name the row and column") {
  const std::string header = "id,z_0,z_1,happy,sad\n";
  CHECK_THROWS_WITH(dataset_from_csv(header + "0,1,2,3,4\n1,1,2,3\n"),
                    ContainsSubstring("row 2") && ContainsSubstring("sad"));
  CHECK_THROWS_WITH(dataset_from_csv(header + "0,1,abc,3,4\n"),
                    ContainsSubstring("row 1") && ContainsSubstring("z_1"));
  CHECK_THROWS_WITH(dataset_from_csv(header + "0,1,2,nan,4\n"),
                    ContainsSubstring("row 1") && ContainsSubstring("happy"));
  CHECK_THROWS_AS(dataset_from_csv(header + "0,1,2,inf,4\n"), ParseError);
  CHECK_THROWS_AS(dataset_from_csv("idx,z_0,happy\n0,1,2\n"), ParseError);
  CHECK_THROWS_AS(dataset_from_csv("id,z_1,happy\n0,1,2\n"), ParseError);
  CHECK_THROWS_AS(dataset_from_csv("id,z_0\n0,1\n"), ParseError);
  CHECK_THROWS_AS(dataset_from_csv(header), ParseError);
  CHECK_THROWS_AS(dataset_from_csv(""), ParseError);
}

TEST_CASE("4000 x 64 dataset round-trips in under a second") {
  const auto ds = random_dataset(4000, 64, 10, 3);
  const fs::path d = scratch("big");
  const auto t0 = std::chrono::steady_clock::now();
  write_dataset(d / "big.csv", ds);
  const auto back = read_dataset(d / "big.csv");
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  INFO("round-trip took " << secs << " s");
  CHECK(back == ds);
  CHECK(secs < 1.0);
}

TEST_CASE("a 6 + 4 axis bank round-trips bit-identically") {
  const auto bank = six_plus_four();
  const fs::path d = scratch("bank");
  write_axis_bank(d / "bank.json", bank);
  const auto back = read_axis_bank(d / "bank.json");
  REQUIRE(back.axis_names() == bank.axis_names());
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(same_bits(back.base_raw()[i].direction, bank.base_raw()[i].direction));
    CHECK(same_bits(back.base_ortho()[i], bank.base_ortho()[i]));
    CHECK(back.base_raw()[i].bias == bank.base_raw()[i].bias);
    CHECK(back.base_raw()[i].rss == bank.base_raw()[i].rss);
    CHECK(back.base_raw()[i].r_squared == bank.base_raw()[i].r_squared);
    CHECK(back.base_raw()[i].n_samples == bank.base_raw()[i].n_samples);
  }
  for (std::size_t e = 0; e < 4; ++e) {
    CHECK(back.extensions()[e].name == bank.extensions()[e].name);
    CHECK(same_bits(back.extensions()[e].d_in, bank.extensions()[e].d_in));
    CHECK(same_bits(back.extensions()[e].d_out, bank.extensions()[e].d_out));
  }
  // serializing the loaded bank reproduces the same document
  CHECK(bank_to_json(back).dump() == bank_to_json(bank).dump());
}

TEST_CASE("loading a bank re-checks its invariants") {
  const json good = bank_to_json(six_plus_four());

  json bad_norm = good;
  bad_norm["base_axes"][2]["direction"][0] = bad_norm["base_axes"][2]["direction"][0].get<double>() + 0.01;
  const std::string name = good["base_axes"][2]["name"].get<std::string>();
  CHECK_THROWS_WITH(bank_from_json(bad_norm), ContainsSubstring(name) && ContainsSubstring("unit norm"));

  // base_ortho perturbed while staying unit norm: the Gram recheck fires
  json skew = good;
  std::vector<double> v = skew["base_ortho"][1].get<std::vector<double>>();
  const std::vector<double> u = skew["base_ortho"][0].get<std::vector<double>>();
  double n2 = 0.0;
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] += 1e-6 * u[i];
    n2 += v[i] * v[i];
  }
  for (double& x : v) x /= std::sqrt(n2);
  skew["base_ortho"][1] = v;
  CHECK_THROWS_WITH(bank_from_json(skew), ContainsSubstring("identity"));

  json extra = good;
  extra["comment"] = "from the future";
  CHECK_THROWS_AS(bank_from_json(extra), VersionError);
  json extra_axis = good;
  extra_axis["base_axes"][0]["color"] = "red";
  CHECK_THROWS_AS(bank_from_json(extra_axis), VersionError);
  json newer = good;
  newer["format_version"] = 2;
  CHECK_THROWS_AS(bank_from_json(newer), VersionError);
  json missing = good;
  missing.erase("dim");
  CHECK_THROWS_AS(bank_from_json(missing), ParseError);
  CHECK_THROWS_AS(detail::parse_json("{not json", "bank"), ParseError);
}

TEST_CASE("f64raw images round-trip bit-identically") {
  Rng rng(4);
  std::vector<double> px(12 * 7);
  for (double& v : px) v = rng.normal() * 1e3;
  px[0] = -0.0;
  px[1] = 5e-324;
  const ImageGrid img(12, 7, px);
  const std::string bytes = encode_f64raw(img);
  CHECK(bytes.size() == 24 + 8 * 84);
  CHECK(bytes.substr(0, 8) == "F64RAW01");
  const auto back = decode_f64raw(bytes);
  REQUIRE(back.height() == 12);
  REQUIRE(back.width() == 7);
  for (std::size_t i = 0; i < px.size(); ++i)
    CHECK(std::bit_cast<std::uint64_t>(back.data()[i]) == std::bit_cast<std::uint64_t>(px[i]));
  const fs::path d = scratch("img");
  write_image(d / "x.f64", img, ImageFormat::kF64Raw);
  CHECK(read_image(d / "x.f64") == img);
  CHECK_THROWS_AS(decode_f64raw(bytes.substr(0, bytes.size() - 1)), ParseError);
}

TEST_CASE("pgm8 encoding") {
  const std::string half = encode_pgm8(ImageGrid::filled(64, 64, 0.5));
  const std::string header = "P5\n64 64\n255\n";
  REQUIRE(half.size() == header.size() + 64 * 64);
  CHECK(half.substr(0, header.size()) == header);
  for (std::size_t i = header.size(); i < half.size(); ++i) CHECK(static_cast<unsigned char>(half[i]) == 128);

  CHECK(quantize8(-1.0) == 0);
  CHECK(quantize8(2.0) == 255);
  CHECK(quantize8(1.5 / 255.0) == 2);   // 1.5 -> 2
  CHECK(quantize8(2.5 / 255.0) == 2);   // 2.5 -> 2
  CHECK(quantize8(0.6 / 255.0) == 1);
  CHECK(encode_pgm8(ImageGrid::filled(2, 3, 0.0)).substr(0, 10) == "P5\n3 2\n255");

  // decode of our own output recovers the quantized levels
  std::vector<double> px = {0.0, 0.25, 0.5, 0.75, 1.0, 0.1};
  const auto back = decode_pgm(encode_pgm8(ImageGrid(2, 3, px)));
  for (std::size_t i = 0; i < px.size(); ++i) CHECK(back.data()[i] == quantize8(px[i]) / 255.0);
  CHECK(decode_pgm("P5\n# comment\n2 1\n255\n\x01\x02").data()[1] == 2.0 / 255.0);
  CHECK_THROWS_AS(decode_pgm("P2\n1 1\n255\n0"), ParseError);
  CHECK_THROWS_AS(decode_pgm("P5\n4 4\n255\n\x01"), ParseError);
}

TEST_CASE("unwritable and unreadable paths raise io errors") {
  const fs::path d = scratch("unwritable");
  CHECK_THROWS_AS(write_image(d / "missing_dir" / "x.pgm", ImageGrid::filled(2, 2, 0.0), ImageFormat::kPgm8),
                  IoError);
  CHECK_THROWS_AS(read_dataset(d / "nope.csv"), IoError);
  CHECK_THROWS_AS(read_axis_bank(d / "nope.json"), IoError);
  // a directory cannot be overwritten by a file
  fs::create_directories(d / "occupied");
  CHECK_THROWS_AS(write_file_atomic(d / "occupied", "x"), IoError);
}

TEST_CASE("world json rebuilds the same world") {
  WorldParams w;
  w.p = 24;
  w.k = 4;
  w.rho = 0.35;
  w.noise_sigma = 0.05;
  w.img_h = 20;
  w.img_w = 12;
  w.seed = 0xDEADBEEFCAFEF00Dull;
  w.names = {"w", "x", "y", "z"};
  const auto world = make_world(w);
  const fs::path d = scratch("world");
  write_world(d / "world.json", world);
  CHECK(read_world(d / "world.json") == world);
  json j = world_to_json(world);
  j["format_version"] = 7;
  CHECK_THROWS_AS(world_from_json(j), VersionError);
}
