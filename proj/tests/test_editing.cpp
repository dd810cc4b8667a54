#include <catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "latax/axes.hpp"
#include "latax/editing.hpp"
#include "latax/toyworld.hpp"

using namespace latax;
using Catch::Matchers::WithinAbs;

namespace {

ToyWorldSpec orthonormal_world() {
  WorldParams w;
  w.p = 16;
  w.k = 4;
  w.img_h = 16;
  w.img_w = 16;
  w.seed = 5;
  return make_world(w);
}

// Bank whose axes are exactly the world's true directions.
AxisBank truth_bank(const ToyWorldSpec& world) {
  std::vector<AttributeAxis> raw;
  for (std::size_t j = 0; j < world.k(); ++j)
    raw.push_back({world.names[j], world.true_dirs[j], world.biases[j], 0.0, 1.0, 1, false});
  return AxisBank(world.p(), raw, world.true_dirs, {});
}

Vec some_latent(std::size_t p) {
  std::vector<double> z(p);
  for (std::size_t i = 0; i < p; ++i) z[i] = std::sin(1.3 * static_cast<double>(i) + 0.2);
  return Vec(z);
}

}  // namespace

TEST_CASE("zero edit returns the latent bit-identically") {
  const auto world = orthonormal_world();
  const auto bank = truth_bank(world);
  const Vec z = some_latent(16);
  CHECK(apply_edit(z, bank, "a1", 0.0).data() == z.data());
}

TEST_CASE("editing along a true axis moves only that score") {
  const auto world = orthonormal_world();
  const auto bank = truth_bank(world);
  const Vec z = some_latent(16);
  const Vec before = true_scores(world, z);
  const Vec after = true_scores(world, apply_edit(z, bank, "a2", 2.0));
  for (std::size_t j = 0; j < 4; ++j)
    CHECK_THAT(after[j] - before[j], WithinAbs(j == 2 ? 2.0 : 0.0, 1e-12));
}

TEST_CASE("edit then inverse edit restores the latent; step size equals |alpha|") {
  const auto world = orthonormal_world();
  const auto bank = truth_bank(world);
  const Vec z = some_latent(16);
  const Vec e = apply_edit(z, bank, "a0", 1.75);
  CHECK_THAT(norm(e - z), WithinAbs(1.75, 1e-12));
  const Vec back = apply_edit(e, bank, "a0", -1.75);
  for (std::size_t t = 0; t < 16; ++t) CHECK_THAT(back[t], WithinAbs(z[t], 1e-12));
}

TEST_CASE("score change along a fitted axis is alpha times a_j . d") {
  WorldParams w;
  w.p = 16;
  w.k = 3;
  w.rho = 0.4;
  w.noise_sigma = 0.2;
  w.img_h = 16;
  w.img_w = 16;
  w.seed = 8;
  const auto world = make_world(w);
  const auto bank = build_bank(sample_dataset(world, 100, 9), world.names);
  const Vec z = some_latent(16);
  for (std::size_t j = 0; j < 3; ++j) {
    const Vec& d = bank.direction(world.names[j]);
    const double got = true_scores(world, apply_edit(z, bank, world.names[j], 1.5))[j] - true_scores(world, z)[j];
    CHECK_THAT(got, WithinAbs(1.5 * dot(world.true_dirs[j], d), 1e-12));
  }
}

TEST_CASE("edit errors") {
  const auto world = orthonormal_world();
  const auto bank = truth_bank(world);
  CHECK_THROWS_AS(apply_edit(some_latent(16), bank, "nope", 1.0), UnknownAxisError);
  CHECK_THROWS_AS(apply_edit(some_latent(15), bank, "a0", 1.0), DimensionError);
  CHECK_THROWS_AS(apply_edit(some_latent(16), bank, "a0", NAN), ValidationError);
}

TEST_CASE("traverse endpoints, midpoint and spacing") {
  const auto world = orthonormal_world();
  const auto bank = truth_bank(world);
  const Vec z = some_latent(16);

  const auto two = traverse(z, bank, "a1", -3.0, 3.0, 2);
  REQUIRE(two.size() == 2);
  CHECK(two[0].data() == apply_edit(z, bank, "a1", -3.0).data());
  CHECK(two[1].data() == apply_edit(z, bank, "a1", 3.0).data());

  const auto five = traverse(z, bank, "a1", -1.0, 1.0, 5);
  CHECK(five[2].data() == z.data());

  const auto seven = traverse(z, bank, "a3", -0.5, 2.5, 7);
  const auto alphas = traversal_alphas(-0.5, 2.5, 7);
  const Vec& d = bank.direction("a3");
  for (std::size_t i = 0; i < 7; ++i) CHECK(seven[i].data() == apply_edit(z, bank, "a3", alphas[i]).data());
  for (std::size_t i = 1; i < 7; ++i)
    for (std::size_t t = 0; t < 16; ++t) CHECK_THAT(seven[i][t] - seven[i - 1][t], WithinAbs(0.5 * d[t], 1e-12));

  CHECK_THROWS_AS(traverse(z, bank, "a3", 0.0, 1.0, 1), ValidationError);
}

TEST_CASE("edit plans") {
  const auto world = orthonormal_world();
  const auto bank = truth_bank(world);
  const Vec z = some_latent(16);
  CHECK(apply_plan(z, bank, {}).data() == z.data());

  const Vec ab = apply_plan(z, bank, {{"a0", 1.0}, {"a1", 1.0}});
  const Vec ba = apply_plan(z, bank, {{"a1", 1.0}, {"a0", 1.0}});
  for (std::size_t t = 0; t < 16; ++t) CHECK_THAT(ab[t], WithinAbs(ba[t], 1e-12));

  const Vec undo = apply_plan(z, bank, {{"a2", 1.0}, {"a2", -1.0}});
  for (std::size_t t = 0; t < 16; ++t) CHECK_THAT(undo[t], WithinAbs(z[t], 1e-12));

  CHECK_THROWS_AS(apply_plan(z, bank, {{"a0", 1.0}, {"zz", 1.0}}), UnknownAxisError);
}

TEST_CASE("raw directions are used only on request") {
  const std::vector<AttributeAxis> raw = {{"a", Vec{1, 0}, 0, 0, 1, 2, false},
                                          {"b", normalized(Vec{1, 1}), 0, 0, 1, 2, false}};
  const AxisBank bank(2, raw, {Vec{1, 0}, Vec{0, 1}}, {});
  const Vec z{0, 0};
  const Vec o = apply_edit(z, bank, "b", 1.0);
  const Vec r = apply_edit(z, bank, "b", 1.0, DirectionKind::kRaw);
  CHECK(o[0] == 0.0);
  CHECK_THAT(r[0], WithinAbs(1.0 / std::sqrt(2.0), 1e-15));
}
