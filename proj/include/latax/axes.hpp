#pragma once

// Attribute axes: regression of per-attribute directions, orthonormalization of
// the base set, and extension with new attributes against that base.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "latax/dataset.hpp"
#include "latax/error.hpp"
#include "latax/linalg.hpp"
#include "latax/toyworld.hpp"

namespace latax {

struct AttributeAxis {
  std::string name;
  Vec direction;  // unit
  double bias = 0.0;
  double rss = 0.0;
  double r_squared = 0.0;
  std::size_t n_samples = 0;
  bool rank_deficient = false;

  friend bool operator==(const AttributeAxis&, const AttributeAxis&) = default;
};

enum class ExtensionMode { kResidual, kPerSubvector };

inline std::string_view to_string(ExtensionMode m) {
  return m == ExtensionMode::kResidual ? "residual" : "per-subvector";
}

inline ExtensionMode parse_extension_mode(std::string_view s) {
  if (s == "residual") return ExtensionMode::kResidual;
  if (s == "per-subvector") return ExtensionMode::kPerSubvector;
  throw ValidationError("unknown extension mode '" + std::string(s) +
                        "' (expected residual or per-subvector)");
}

struct Extension {
  std::string name;
  Vec d_in;   // fitted direction
  Vec d_out;  // unit, decoupled from the base
  ExtensionMode mode = ExtensionMode::kResidual;
  std::vector<double> weights;  // per-subvector mode only

  friend bool operator==(const Extension&, const Extension&) = default;
};

/// Which version of an axis an edit or report should use.
enum class DirectionKind { kOrthogonal, kRaw };

inline constexpr double kUnitNormTolerance = 1e-12;
inline constexpr double kOrthonormalTolerance = 1e-10;

class AxisBank {
 public:
  AxisBank(std::size_t dim, std::vector<AttributeAxis> base_raw, std::vector<Vec> base_ortho,
           std::vector<Extension> extensions)
      : dim_(dim),
        base_raw_(std::move(base_raw)),
        base_ortho_(std::move(base_ortho)),
        extensions_(std::move(extensions)) {
    validate();
  }

  std::size_t dim() const noexcept { return dim_; }
  const std::vector<AttributeAxis>& base_raw() const noexcept { return base_raw_; }
  const std::vector<Vec>& base_ortho() const noexcept { return base_ortho_; }
  const std::vector<Extension>& extensions() const noexcept { return extensions_; }

  /// Base names in fit order, then extension names in insertion order.
  std::vector<std::string> axis_names() const {
    std::vector<std::string> out;
    for (const auto& a : base_raw_) out.push_back(a.name);
    for (const auto& e : extensions_) out.push_back(e.name);
    return out;
  }

  bool has_axis(std::string_view name) const {
    for (const auto& a : base_raw_)
      if (a.name == name) return true;
    for (const auto& e : extensions_)
      if (e.name == name) return true;
    return false;
  }

  const Vec& direction(std::string_view name, DirectionKind kind = DirectionKind::kOrthogonal) const {
    for (std::size_t i = 0; i < base_raw_.size(); ++i) {
      if (base_raw_[i].name == name)
        return kind == DirectionKind::kOrthogonal ? base_ortho_[i] : base_raw_[i].direction;
    }
    for (const auto& e : extensions_) {
      if (e.name == name) return kind == DirectionKind::kOrthogonal ? e.d_out : e.d_in;
    }
    throw UnknownAxisError("axis bank has no axis '" + std::string(name) + "'");
  }

  friend bool operator==(const AxisBank&, const AxisBank&) = default;

 private:
  void require_unit(const Vec& v, const std::string& label) const {
    if (v.dim() != dim_) {
      throw DimensionError("axis bank: '" + label + "' has dim " + std::to_string(v.dim()) +
                           ", bank dim is " + std::to_string(dim_));
    }
    if (std::abs(norm(v) - 1.0) > kUnitNormTolerance) {
      throw ValidationError("axis bank: direction of '" + label + "' is not unit norm (|d| = " +
                            std::to_string(norm(v)) + ")");
    }
  }

  void validate() const {
    if (dim_ == 0) throw ValidationError("axis bank: dim must be >= 1");
    if (base_raw_.empty()) throw ValidationError("axis bank: at least one base axis required");
    if (base_ortho_.size() != base_raw_.size()) {
      throw ValidationError("axis bank: base_ortho and base_raw lengths differ");
    }
    std::vector<std::string> seen;
    auto check_name = [&seen](const std::string& n) {
      if (n.empty()) throw ValidationError("axis bank: empty axis name");
      if (std::find(seen.begin(), seen.end(), n) != seen.end())
        throw ValidationError("axis bank: duplicate axis name '" + n + "'");
      seen.push_back(n);
    };
    for (std::size_t i = 0; i < base_raw_.size(); ++i) {
      const AttributeAxis& a = base_raw_[i];
      check_name(a.name);
      require_unit(a.direction, a.name);
      require_unit(base_ortho_[i], a.name + " (orthonormalized)");
      if (!(a.rss >= 0.0)) throw ValidationError("axis bank: negative rss for '" + a.name + "'");
      if (!(a.r_squared >= 0.0 && a.r_squared <= 1.0))
        throw ValidationError("axis bank: r_squared out of [0, 1] for '" + a.name + "'");
    }
    const double dev = max_identity_deviation(gram_matrix(base_ortho_));
    if (dev > kOrthonormalTolerance) {
      throw ValidationError("axis bank: orthonormalized base deviates from identity by " +
                            std::to_string(dev));
    }
    for (const Extension& e : extensions_) {
      check_name(e.name);
      if (e.d_in.dim() != dim_) throw DimensionError("axis bank: d_in of '" + e.name + "' has wrong dim");
      require_unit(e.d_out, e.name);
      if (e.mode == ExtensionMode::kResidual) {
        if (!e.weights.empty())
          throw ValidationError("axis bank: residual extension '" + e.name + "' carries weights");
        for (std::size_t i = 0; i < base_ortho_.size(); ++i) {
          const double c = std::abs(dot(base_ortho_[i], e.d_out));
          if (c > kOrthonormalTolerance) {
            throw ValidationError("axis bank: extension '" + e.name +
                                  "' is not orthogonal to base axis '" + base_raw_[i].name +
                                  "' (|cos| = " + std::to_string(c) + ")");
          }
        }
      } else {
        if (e.weights.size() != base_ortho_.size()) {
          throw ValidationError("axis bank: extension '" + e.name + "' needs " +
                                std::to_string(base_ortho_.size()) + " weights");
        }
        double s = 0.0;
        for (const double w : e.weights) s += w;
        if (std::abs(s - 1.0) > 1e-12)
          throw ValidationError("axis bank: weights of '" + e.name + "' do not sum to 1");
      }
    }
  }

  std::size_t dim_;
  std::vector<AttributeAxis> base_raw_;
  std::vector<Vec> base_ortho_;
  std::vector<Extension> extensions_;
};

namespace detail {

inline void require_nondegenerate(const Vec& y, const std::string& name) {
  double mean = 0.0;
  for (const double v : y.values()) mean += v;
  mean /= static_cast<double>(y.dim());
  double var = 0.0;
  for (const double v : y.values()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(y.dim());
  if (std::sqrt(var) <= 1e-14 * std::max(1.0, std::abs(mean))) {
    throw DegenerateAttributeError("attribute '" + name + "' has constant labels");
  }
}

inline AttributeAxis fit_axis_with(const OlsFactorization& ols, const LatentDataset& ds,
                                   const std::string& attribute) {
  if (!ds.has_attribute(attribute))
    throw ValidationError("fit_axis: dataset has no attribute '" + attribute + "'");
  if (ds.size() < 2) throw ValidationError("fit_axis: need at least 2 samples");
  const Vec y = ds.labels_of(attribute);
  require_nondegenerate(y, attribute);

  const OlsResult fit = ols.solve(y);
  const auto& w = fit.weights.data();
  const Vec slope(std::vector<double>(w.begin() + 1, w.end()));
  const double slope_norm = norm(slope);
  if (slope_norm == 0.0)
    throw DegenerateAttributeError("attribute '" + attribute + "' has a zero regression slope");

  double mean = 0.0;
  for (const double v : y.values()) mean += v;
  mean /= static_cast<double>(y.dim());
  double tss = 0.0;
  for (const double v : y.values()) tss += (v - mean) * (v - mean);
  const double r2 = std::clamp(1.0 - fit.residual_sum_squares / tss, 0.0, 1.0);

  return AttributeAxis{attribute,
                       normalized(slope),
                       w[0],
                       fit.residual_sum_squares,
                       r2,
                       ds.size(),
                       fit.rank_deficient};
}

}  // namespace detail

/// Regresses the attribute's labels on the latents (with intercept) and keeps
/// the normalized slope as the axis direction.
inline AttributeAxis fit_axis(const LatentDataset& ds, const std::string& attribute) {
  if (ds.size() < 2) throw ValidationError("fit_axis: need at least 2 samples");
  const OlsFactorization ols(ds.latents(), /*add_intercept=*/true);
  return detail::fit_axis_with(ols, ds, attribute);
}

/// Fits every base attribute in order and orthonormalizes them by Gram-Schmidt.
inline AxisBank build_bank(const LatentDataset& ds, std::span<const std::string> base_names,
                           double tol = kDefaultDependenceTolerance) {
  if (base_names.empty()) throw ValidationError("build_bank: at least one base attribute needed");
  if (ds.size() < 2) throw ValidationError("build_bank: need at least 2 samples");
  const OlsFactorization ols(ds.latents(), /*add_intercept=*/true);
  std::vector<AttributeAxis> raw;
  std::vector<Vec> dirs;
  for (const std::string& name : base_names) {
    raw.push_back(detail::fit_axis_with(ols, ds, name));
    dirs.push_back(raw.back().direction);
  }
  std::vector<Vec> ortho;
  try {
    ortho = gram_schmidt(dirs, tol);
  } catch (const DependenceError& e) {
    throw DependenceError(e.index(), "build_bank: axis '" + std::string(base_names[e.index()]) +
                                         "' is linearly dependent on earlier base axes");
  }
  return AxisBank(ds.dim(), std::move(raw), std::move(ortho), {});
}

/// Adds a new attribute decoupled from the base axes. Residual mode removes the
/// projection onto span(base); per-subvector mode superposes the weighted
/// single-axis residuals d_in - (e_i . d_in) e_i, which is only orthogonal to
/// the base when there is a single base axis.
inline AxisBank extend_axis(const AxisBank& bank, const LatentDataset& ds,
                            const std::string& new_name, ExtensionMode mode,
                            std::optional<std::vector<double>> weights = std::nullopt,
                            double tol = kDefaultDependenceTolerance) {
  if (bank.has_axis(new_name))
    throw ValidationError("extend_axis: axis '" + new_name + "' already in bank");
  if (ds.dim() != bank.dim()) throw DimensionError("extend_axis: dataset dim differs from bank dim");
  const std::size_t n_base = bank.base_ortho().size();

  std::vector<double> w;
  if (mode == ExtensionMode::kPerSubvector) {
    if (weights) {
      w = *weights;
      if (w.size() != n_base)
        throw ValidationError("extend_axis: expected " + std::to_string(n_base) + " weights");
      double s = 0.0;
      for (const double x : w) s += x;
      if (std::abs(s - 1.0) > 1e-12) throw ValidationError("extend_axis: weights must sum to 1");
    } else {
      w.assign(n_base, 1.0 / static_cast<double>(n_base));
      // keep the stored weights summing to 1 within rounding
      double s = 0.0;
      for (std::size_t i = 0; i + 1 < n_base; ++i) s += w[i];
      w.back() = 1.0 - s;
    }
  } else if (weights) {
    throw ValidationError("extend_axis: weights apply only to per-subvector mode");
  }

  const AttributeAxis fitted = fit_axis(ds, new_name);
  const Vec& d_in = fitted.direction;
  const Vec resid = residual_perp(d_in, bank.base_ortho());
  if (norm(resid) < tol * norm(d_in)) {
    throw InseparableAttributeError("extend_axis: attribute '" + new_name +
                                    "' lies in the span of the base axes");
  }

  Vec d_out = normalized(resid);
  if (mode == ExtensionMode::kPerSubvector) {
    std::vector<double> acc(bank.dim(), 0.0);
    for (std::size_t i = 0; i < n_base; ++i) {
      const Vec& e = bank.base_ortho()[i];
      const double c = dot(e, d_in);
      for (std::size_t t = 0; t < acc.size(); ++t) acc[t] += w[i] * (d_in[t] - c * e[t]);
    }
    Vec sum(std::move(acc));
    if (norm(sum) < tol) {
      throw InseparableAttributeError("extend_axis: per-subvector superposition of '" + new_name +
                                      "' vanishes");
    }
    d_out = normalized(sum);
  }

  std::vector<Extension> exts = bank.extensions();
  exts.push_back(Extension{new_name, d_in, std::move(d_out), mode, std::move(w)});
  return AxisBank(bank.dim(), bank.base_raw(), bank.base_ortho(), std::move(exts));
}

/// Entry (j, m) = a_j . d_m for true world direction a_j and bank axis m
/// (base axes first, then extensions).
inline Mat leakage_matrix(const AxisBank& bank, const ToyWorldSpec& world,
                          DirectionKind kind = DirectionKind::kOrthogonal) {
  if (bank.dim() != world.p())
    throw DimensionError("leakage_matrix: bank dim " + std::to_string(bank.dim()) +
                         " differs from world dim " + std::to_string(world.p()));
  const auto names = bank.axis_names();
  std::vector<double> m(world.k() * names.size());
  for (std::size_t c = 0; c < names.size(); ++c) {
    const Vec& d = bank.direction(names[c], kind);
    for (std::size_t j = 0; j < world.k(); ++j) m[j * names.size() + c] = dot(world.true_dirs[j], d);
  }
  return Mat(world.k(), names.size(), std::move(m));
}

/// Sum of |leakage| over entries whose row is not the bank axis's own world attribute.
inline double off_target_leakage(const Mat& leakage, const AxisBank& bank, const ToyWorldSpec& world) {
  const auto names = bank.axis_names();
  double total = 0.0;
  for (std::size_t c = 0; c < names.size(); ++c) {
    const std::size_t own = world.index_of(names[c]);
    for (std::size_t j = 0; j < leakage.rows(); ++j)
      if (j != own) total += std::abs(leakage(j, c));
  }
  return total;
}

}  // namespace latax
