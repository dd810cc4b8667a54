#pragma once

// Editing accuracy against the toy world's noiseless labeler.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "latax/axes.hpp"
#include "latax/editing.hpp"
#include "latax/error.hpp"
#include "latax/rng.hpp"
#include "latax/toyworld.hpp"

namespace latax {

struct FlipAccuracyReport {
  std::string axis;
  std::size_t n_trials = 0;
  double alpha = 0.0;
  double accuracy = 0.0;                // fraction of negatives pushed above the boundary
  std::vector<double> mean_abs_delta;  // per world attribute, mean |score change|
  double target_mean_delta = 0.0;       // signed mean change of the target score
  double non_target_leakage = 0.0;      // mean of mean_abs_delta over the other attributes
};

/// Draws n_trials latents whose true score for `axis` lies strictly below its
/// bias, edits each by +alpha, and counts how many end strictly above. Trial i
/// uses its own seed derived from (seed, i).
inline FlipAccuracyReport flip_accuracy(const ToyWorldSpec& world, const AxisBank& bank,
                                        const std::string& axis, std::size_t n_trials,
                                        double alpha, std::uint64_t seed,
                                        DirectionKind kind = DirectionKind::kOrthogonal) {
  if (!bank.has_axis(axis)) throw UnknownAxisError("flip_accuracy: unknown axis '" + axis + "'");
  if (n_trials == 0) throw ValidationError("flip_accuracy: n_trials must be >= 1");
  if (bank.dim() != world.p()) throw DimensionError("flip_accuracy: bank and world dims differ");
  const std::size_t target = world.index_of(axis);
  const std::size_t k = world.k();

  FlipAccuracyReport rep;
  rep.axis = axis;
  rep.n_trials = n_trials;
  rep.alpha = alpha;
  rep.mean_abs_delta.assign(k, 0.0);

  std::size_t flipped = 0;
  for (std::size_t t = 0; t < n_trials; ++t) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(t)));
    std::vector<double> zv(world.p());
    for (;;) {
      for (double& x : zv) x = rng.normal();
      if (dot(world.true_dirs[target].values(), zv) < 0.0) break;
    }
    const Vec z(zv);
    const Vec before = true_scores(world, z);
    const Vec after = true_scores(world, apply_edit(z, bank, axis, alpha, kind));
    if (after[target] > world.biases[target]) ++flipped;
    for (std::size_t j = 0; j < k; ++j) rep.mean_abs_delta[j] += std::abs(after[j] - before[j]);
    rep.target_mean_delta += after[target] - before[target];
  }
  const double n = static_cast<double>(n_trials);
  rep.accuracy = static_cast<double>(flipped) / n;
  rep.target_mean_delta /= n;
  for (double& d : rep.mean_abs_delta) d /= n;
  if (k > 1) {
    double s = 0.0;
    for (std::size_t j = 0; j < k; ++j)
      if (j != target) s += rep.mean_abs_delta[j];
    rep.non_target_leakage = s / static_cast<double>(k - 1);
  }
  return rep;
}

}  // namespace latax
