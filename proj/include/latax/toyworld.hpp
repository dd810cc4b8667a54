#pragma once

// Synthetic ground-truth world: known attribute directions, a linear template
// decoder, and a noiseless labeler. Every quantity is derived from the seed.

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "latax/dataset.hpp"
#include "latax/error.hpp"
#include "latax/image.hpp"
#include "latax/linalg.hpp"
#include "latax/rng.hpp"

namespace latax {

inline constexpr double kMaxEntanglement = 0.95;

struct WorldParams {
  std::size_t p = 64;
  std::size_t k = 6;
  double rho = 0.0;
  double noise_sigma = 0.0;
  std::size_t img_h = 64;
  std::size_t img_w = 64;
  std::uint64_t seed = 0;
  std::vector<std::string> names;  // empty -> a0, a1, ...

  friend bool operator==(const WorldParams&, const WorldParams&) = default;
};

struct ToyWorldSpec {
  WorldParams params;
  std::vector<std::string> names;
  std::vector<Vec> true_dirs;  // rows of A
  std::vector<double> biases;
  std::vector<ImageGrid> templates;
  ImageGrid background;

  std::size_t p() const noexcept { return params.p; }
  std::size_t k() const noexcept { return params.k; }

  std::size_t index_of(const std::string& name) const {
    for (std::size_t j = 0; j < names.size(); ++j)
      if (names[j] == name) return j;
    throw UnknownAxisError("toy world has no attribute '" + name + "'");
  }

  friend bool operator==(const ToyWorldSpec&, const ToyWorldSpec&) = default;
};

namespace detail {

enum class TemplateShape { kHorizontalBar, kVerticalBar, kBlob, kGradient };

inline ImageGrid make_template(TemplateShape shape, std::size_t h, std::size_t w, Rng& rng) {
  std::vector<double> px(h * w);
  const double hh = static_cast<double>(h);
  const double ww = static_cast<double>(w);
  switch (shape) {
    case TemplateShape::kHorizontalBar: {
      const double center = rng.uniform(0.15, 0.85) * hh;
      const double width = rng.uniform(0.04, 0.12) * hh + 0.5;
      for (std::size_t r = 0; r < h; ++r) {
        const double d = (static_cast<double>(r) - center) / width;
        for (std::size_t c = 0; c < w; ++c) px[r * w + c] = std::exp(-0.5 * d * d);
      }
      break;
    }
    case TemplateShape::kVerticalBar: {
      const double center = rng.uniform(0.15, 0.85) * ww;
      const double width = rng.uniform(0.04, 0.12) * ww + 0.5;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          const double d = (static_cast<double>(c) - center) / width;
          px[r * w + c] = std::exp(-0.5 * d * d);
        }
      }
      break;
    }
    case TemplateShape::kBlob: {
      const double cr = rng.uniform(0.25, 0.75) * hh;
      const double cc = rng.uniform(0.25, 0.75) * ww;
      const double s = rng.uniform(0.06, 0.18) * std::min(hh, ww) + 0.5;
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          const double dr = (static_cast<double>(r) - cr) / s;
          const double dc = (static_cast<double>(c) - cc) / s;
          px[r * w + c] = std::exp(-0.5 * (dr * dr + dc * dc));
        }
      }
      break;
    }
    case TemplateShape::kGradient: {
      const double theta = rng.uniform(0.0, 2.0 * std::numbers::pi);
      const double ct = std::cos(theta);
      const double st = std::sin(theta);
      for (std::size_t r = 0; r < h; ++r) {
        for (std::size_t c = 0; c < w; ++c) {
          const double y = (static_cast<double>(r) + 0.5) / hh - 0.5;
          const double x = (static_cast<double>(c) + 0.5) / ww - 0.5;
          px[r * w + c] = x * ct + y * st;
        }
      }
      break;
    }
  }
  double peak = 0.0;
  for (const double v : px) peak = std::max(peak, std::abs(v));
  if (peak > 0.0)
    for (double& v : px) v /= peak;
  return ImageGrid(h, w, std::move(px));
}

inline double max_abs_difference(const ImageGrid& a, const ImageGrid& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a.data()[i] - b.data()[i]));
  return d;
}

}  // namespace detail

/// Builds a world whose k unit attribute directions have pairwise cosine rho.
/// A = S U where U holds k random orthonormal rows and S is the symmetric
/// square root of the equicorrelation matrix (1 - rho) I + rho 11^T.
inline ToyWorldSpec make_world(const WorldParams& params) {
  const std::size_t p = params.p;
  const std::size_t k = params.k;
  if (p == 0 || k == 0) throw ValidationError("make_world: p and k must be >= 1");
  if (k > p) throw ValidationError("make_world: k (" + std::to_string(k) + ") exceeds p (" +
                                   std::to_string(p) + ")");
  if (!(params.rho >= 0.0 && params.rho <= kMaxEntanglement)) {
    throw ValidationError("make_world: rho must lie in [0, 0.95]");
  }
  if (!(params.noise_sigma >= 0.0) || !std::isfinite(params.noise_sigma)) {
    throw ValidationError("make_world: noise_sigma must be finite and >= 0");
  }
  if (params.img_h == 0 || params.img_w == 0) {
    throw ValidationError("make_world: image dimensions must be >= 1");
  }
  if (!params.names.empty() && params.names.size() != k) {
    throw ValidationError("make_world: expected " + std::to_string(k) + " attribute names");
  }

  std::vector<std::string> names = params.names;
  if (names.empty())
    for (std::size_t j = 0; j < k; ++j) names.push_back("a" + std::to_string(j));
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (names[i] == names[j]) throw ValidationError("make_world: duplicate name " + names[i]);

  Rng dir_rng(derive_seed(params.seed, "directions"));
  std::vector<Vec> gaussian;
  gaussian.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> g(p);
    for (double& x : g) x = dir_rng.normal();
    gaussian.emplace_back(std::move(g));
  }
  const std::vector<Vec> basis = gram_schmidt(gaussian);

  const double rho = params.rho;
  const double kd = static_cast<double>(k);
  const double diag = std::sqrt(1.0 - rho);
  const double off = (std::sqrt(1.0 - rho + rho * kd) - diag) / kd;

  std::vector<Vec> dirs;
  dirs.reserve(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::vector<double> a(p, 0.0);
    for (std::size_t m = 0; m < k; ++m) {
      const double s = (m == j ? diag : 0.0) + off;
      if (s == 0.0) continue;
      for (std::size_t t = 0; t < p; ++t) a[t] += s * basis[m][t];
    }
    dirs.emplace_back(std::move(a));
  }

  Rng bias_rng(derive_seed(params.seed, "biases"));
  std::vector<double> biases(k);
  for (double& b : biases) b = bias_rng.uniform(-0.5, 0.5);

  Rng tpl_rng(derive_seed(params.seed, "templates"));
  std::vector<ImageGrid> templates;
  templates.reserve(k);
  const detail::TemplateShape shapes[] = {
      detail::TemplateShape::kHorizontalBar, detail::TemplateShape::kVerticalBar,
      detail::TemplateShape::kBlob, detail::TemplateShape::kGradient};
  for (std::size_t j = 0; j < k; ++j) {
    for (int attempt = 0;; ++attempt) {
      ImageGrid t = detail::make_template(shapes[j % 4], params.img_h, params.img_w, tpl_rng);
      bool distinct = true;
      for (const ImageGrid& prev : templates)
        if (detail::max_abs_difference(prev, t) < 1e-3) distinct = false;
      if (distinct) {
        templates.push_back(std::move(t));
        break;
      }
      if (attempt > 64) throw ValidationError("make_world: could not build distinct templates");
    }
  }

  return ToyWorldSpec{params,
                      std::move(names),
                      std::move(dirs),
                      std::move(biases),
                      std::move(templates),
                      ImageGrid::filled(params.img_h, params.img_w, 0.5)};
}

inline void require_latent_dim(const ToyWorldSpec& world, const Vec& z, const char* what) {
  if (z.dim() != world.p()) {
    throw DimensionError(std::string(what) + ": latent has dim " + std::to_string(z.dim()) +
                         ", world expects " + std::to_string(world.p()));
  }
}

/// Noiseless labeler: score_j = a_j . z + b_j.
inline Vec true_scores(const ToyWorldSpec& world, const Vec& z) {
  require_latent_dim(world, z, "true_scores");
  std::vector<double> s(world.k());
  for (std::size_t j = 0; j < s.size(); ++j) s[j] = dot(world.true_dirs[j], z) + world.biases[j];
  return Vec(std::move(s));
}

/// Labels y_j = a_j . z + b_j + noise with z ~ N(0, I).
inline LatentDataset sample_dataset(const ToyWorldSpec& world, std::size_t n, std::uint64_t seed) {
  if (n == 0) throw ValidationError("sample_dataset: n must be >= 1");
  const std::size_t p = world.p();
  const std::size_t k = world.k();
  Rng latent_rng(derive_seed(seed, "latents"));
  Rng noise_rng(derive_seed(seed, "label-noise"));
  std::vector<double> z(n * p);
  for (double& x : z) x = latent_rng.normal();
  std::vector<double> y(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const std::span<const double> zi(z.data() + i * p, p);
    for (std::size_t j = 0; j < k; ++j) {
      double v = dot(world.true_dirs[j].values(), zi) + world.biases[j];
      if (world.params.noise_sigma > 0.0) v += world.params.noise_sigma * noise_rng.normal();
      y[i * k + j] = v;
    }
  }
  std::vector<std::int64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<std::int64_t>(i);
  return LatentDataset(std::move(ids), Mat(n, p, std::move(z)), world.names, Mat(n, k, std::move(y)));
}

/// img = background + sum_j (a_j . z) template_j, clamped to [0, 1] only on request.
inline ImageGrid decode(const ToyWorldSpec& world, const Vec& z, bool clamp = false) {
  require_latent_dim(world, z, "decode");
  std::vector<double> px(world.background.data());
  for (std::size_t j = 0; j < world.k(); ++j) {
    const double s = dot(world.true_dirs[j], z);
    const auto& t = world.templates[j].data();
    for (std::size_t i = 0; i < px.size(); ++i) px[i] += s * t[i];
  }
  ImageGrid img(world.params.img_h, world.params.img_w, std::move(px));
  return clamp ? img.clamped() : img;
}

/// The decoder as a matrix on homogeneous latents [z; 1]: (h*w) x (p + 1),
/// last column the background. decode(z) == D [z; 1].
inline Mat decoder_matrix(const ToyWorldSpec& world) {
  const std::size_t hw = world.background.size();
  const std::size_t p = world.p();
  std::vector<double> d(hw * (p + 1), 0.0);
  for (std::size_t j = 0; j < world.k(); ++j) {
    const auto& t = world.templates[j].data();
    const Vec& a = world.true_dirs[j];
    for (std::size_t i = 0; i < hw; ++i) {
      double* row = d.data() + i * (p + 1);
      const double ti = t[i];
      if (ti == 0.0) continue;
      for (std::size_t c = 0; c < p; ++c) row[c] += ti * a[c];
    }
  }
  for (std::size_t i = 0; i < hw; ++i) d[i * (p + 1) + p] = world.background.data()[i];
  return Mat(hw, p + 1, std::move(d));
}

/// Images for the toy autoencoding task: decode(scale * z), z ~ N(0, I).
inline std::vector<ImageGrid> sample_images(const ToyWorldSpec& world, std::size_t n,
                                            std::uint64_t seed, double latent_scale = 0.2) {
  Rng rng(derive_seed(seed, "images"));
  std::vector<ImageGrid> out;
  out.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::vector<double> z(world.p());
    for (double& x : z) x = latent_scale * rng.normal();
    out.push_back(decode(world, Vec(std::move(z))));
  }
  return out;
}

}  // namespace latax
