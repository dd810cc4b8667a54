#pragma once

// Linear guidance of latent vectors along bank axes.

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "latax/axes.hpp"
#include "latax/error.hpp"
#include "latax/linalg.hpp"

namespace latax {

struct EditStep {
  std::string axis;
  double alpha = 0.0;
};

using EditPlan = std::vector<EditStep>;

/// z' = z + alpha * d. With alpha == 0 the input is returned bit-identical.
inline Vec apply_edit(const Vec& z, const AxisBank& bank, const std::string& axis, double alpha,
                      DirectionKind kind = DirectionKind::kOrthogonal) {
  if (!std::isfinite(alpha)) throw ValidationError("apply_edit: alpha must be finite");
  const Vec& d = bank.direction(axis, kind);
  if (z.dim() != bank.dim()) {
    throw DimensionError("apply_edit: latent dim " + std::to_string(z.dim()) +
                         " differs from bank dim " + std::to_string(bank.dim()));
  }
  if (alpha == 0.0) return z;
  return axpy(z, alpha, d);
}

/// Evenly spaced intensities from alpha_start to alpha_end inclusive.
inline std::vector<double> traversal_alphas(double alpha_start, double alpha_end, std::size_t steps) {
  if (steps < 2) throw ValidationError("traverse: steps must be >= 2");
  std::vector<double> out(steps);
  const double span = alpha_end - alpha_start;
  const double last = static_cast<double>(steps - 1);
  for (std::size_t i = 0; i < steps; ++i) {
    // endpoints exact; interior points symmetric around the midpoint
    if (i == 0) out[i] = alpha_start;
    else if (i + 1 == steps) out[i] = alpha_end;
    else out[i] = alpha_start + span * (static_cast<double>(i) / last);
  }
  return out;
}

inline std::vector<Vec> traverse(const Vec& z, const AxisBank& bank, const std::string& axis,
                                 double alpha_start, double alpha_end, std::size_t steps,
                                 DirectionKind kind = DirectionKind::kOrthogonal) {
  std::vector<Vec> out;
  for (const double a : traversal_alphas(alpha_start, alpha_end, steps))
    out.push_back(apply_edit(z, bank, axis, a, kind));
  return out;
}

/// Applies the steps in order. All axes are resolved before any edit happens.
inline Vec apply_plan(const Vec& z, const AxisBank& bank, const EditPlan& plan,
                      DirectionKind kind = DirectionKind::kOrthogonal) {
  for (const EditStep& s : plan) {
    if (!bank.has_axis(s.axis)) throw UnknownAxisError("apply_plan: unknown axis '" + s.axis + "'");
  }
  Vec out = z;
  for (const EditStep& s : plan) out = apply_edit(out, bank, s.axis, s.alpha, kind);
  return out;
}

}  // namespace latax
