#pragma once

// PSNR, SSIM and MS-SSIM. SSIM statistics use a separable Gaussian window in
// "valid" mode (no padding); MS-SSIM downsamples with 2x2 mean pooling. The
// *_with_grad variants also return the gradient with respect to the second
// image, used by the reconstruction losses.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "latax/error.hpp"
#include "latax/image.hpp"

namespace latax {

struct SsimParams {
  std::size_t window = 11;
  double gaussian_sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 1.0;

  void validate() const {
    if (window < 3 || window % 2 == 0) throw ValidationError("SsimParams: window must be odd and >= 3");
    if (!(gaussian_sigma > 0.0)) throw ValidationError("SsimParams: gaussian_sigma must be > 0");
    if (!(k1 > 0.0) || !(k2 > 0.0)) throw ValidationError("SsimParams: k1 and k2 must be > 0");
    if (!(dynamic_range > 0.0)) throw ValidationError("SsimParams: dynamic_range must be > 0");
  }
  double c1() const { return (k1 * dynamic_range) * (k1 * dynamic_range); }
  double c2() const { return (k2 * dynamic_range) * (k2 * dynamic_range); }
};

inline constexpr double kPsnrCap = 100.0;
inline constexpr std::size_t kMaxMsSsimScales = 5;
inline constexpr double kMsSsimWeights[kMaxMsSsimScales] = {0.0448, 0.2856, 0.3001, 0.2363, 0.1333};

/// The published five-scale weights (they sum to 1.0001); for fewer scales the
/// leading weights are renormalized to sum to 1.
inline std::vector<double> default_ms_ssim_weights(std::size_t scales) {
  if (scales == 0 || scales > kMaxMsSsimScales)
    throw ValidationError("ms_ssim: scales must be in [1, 5] for default weights");
  std::vector<double> w(kMsSsimWeights, kMsSsimWeights + scales);
  if (scales == kMaxMsSsimScales) return w;
  double s = 0.0;
  for (const double x : w) s += x;
  for (double& x : w) x /= s;
  return w;
}

inline std::size_t ms_ssim_min_size(std::size_t scales, std::size_t window) {
  return window << (scales - 1);
}

/// Largest scale count (<= 5) the image supports; 0 if even one scale does not fit.
inline std::size_t max_ms_ssim_scales(std::size_t h, std::size_t w, std::size_t window = 11) {
  std::size_t s = 0;
  while (s < kMaxMsSsimScales && std::min(h, w) >= ms_ssim_min_size(s + 1, window)) ++s;
  return s;
}

namespace detail {

struct Plane {
  std::size_t h = 0;
  std::size_t w = 0;
  std::vector<double> v;

  Plane() = default;
  Plane(std::size_t h_, std::size_t w_, double fill = 0.0) : h(h_), w(w_), v(h_ * w_, fill) {}
  Plane(std::size_t h_, std::size_t w_, std::vector<double> data) : h(h_), w(w_), v(std::move(data)) {}
  double& at(std::size_t r, std::size_t c) { return v[r * w + c]; }
  double at(std::size_t r, std::size_t c) const { return v[r * w + c]; }
};

inline Plane to_plane(const ImageGrid& img) { return Plane(img.height(), img.width(), img.data()); }

inline std::vector<double> gaussian_kernel(std::size_t window, double sigma) {
  std::vector<double> g(window);
  const double c = static_cast<double>(window / 2);
  double s = 0.0;
  for (std::size_t i = 0; i < window; ++i) {
    const double d = static_cast<double>(i) - c;
    g[i] = std::exp(-(d * d) / (2.0 * sigma * sigma));
    s += g[i];
  }
  for (double& x : g) x /= s;
  return g;
}

/// Separable correlation with g along both axes, valid region only.
inline Plane filter_valid(const Plane& in, std::span<const double> g) {
  const std::size_t k = g.size();
  const std::size_t ow = in.w - k + 1;
  const std::size_t oh = in.h - k + 1;
  Plane tmp(in.h, ow);
  for (std::size_t r = 0; r < in.h; ++r) {
    const double* src = in.v.data() + r * in.w;
    double* dst = tmp.v.data() + r * ow;
    for (std::size_t c = 0; c < ow; ++c) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += g[t] * src[c + t];
      dst[c] = s;
    }
  }
  Plane out(oh, ow);
  for (std::size_t r = 0; r < oh; ++r) {
    double* dst = out.v.data() + r * ow;
    for (std::size_t t = 0; t < k; ++t) {
      const double gt = g[t];
      const double* src = tmp.v.data() + (r + t) * ow;
      for (std::size_t c = 0; c < ow; ++c) dst[c] += gt * src[c];
    }
  }
  return out;
}

/// Adjoint of filter_valid: scatters an (h-k+1) x (w-k+1) gradient back to h x w.
inline Plane filter_valid_adjoint(const Plane& grad, std::span<const double> g, std::size_t h,
                                  std::size_t w) {
  const std::size_t k = g.size();
  const std::size_t ow = grad.w;
  Plane tmp(h, ow);
  for (std::size_t r = 0; r < grad.h; ++r) {
    const double* src = grad.v.data() + r * ow;
    for (std::size_t t = 0; t < k; ++t) {
      const double gt = g[t];
      double* dst = tmp.v.data() + (r + t) * ow;
      for (std::size_t c = 0; c < ow; ++c) dst[c] += gt * src[c];
    }
  }
  Plane out(h, w);
  for (std::size_t r = 0; r < h; ++r) {
    const double* src = tmp.v.data() + r * ow;
    double* dst = out.v.data() + r * w;
    for (std::size_t c = 0; c < ow; ++c) {
      const double s = src[c];
      for (std::size_t t = 0; t < k; ++t) dst[c + t] += g[t] * s;
    }
  }
  return out;
}

/// 2x2 mean pooling; a trailing odd row/column is dropped.
inline Plane pool2(const Plane& in) {
  Plane out(in.h / 2, in.w / 2);
  for (std::size_t r = 0; r < out.h; ++r) {
    for (std::size_t c = 0; c < out.w; ++c) {
      out.at(r, c) = 0.25 * (in.at(2 * r, 2 * c) + in.at(2 * r, 2 * c + 1) +
                             in.at(2 * r + 1, 2 * c) + in.at(2 * r + 1, 2 * c + 1));
    }
  }
  return out;
}

inline void pool2_adjoint_add(const Plane& grad, Plane& into) {
  for (std::size_t r = 0; r < grad.h; ++r) {
    for (std::size_t c = 0; c < grad.w; ++c) {
      const double g = 0.25 * grad.at(r, c);
      into.at(2 * r, 2 * c) += g;
      into.at(2 * r, 2 * c + 1) += g;
      into.at(2 * r + 1, 2 * c) += g;
      into.at(2 * r + 1, 2 * c + 1) += g;
    }
  }
}

inline Plane product(const Plane& a, const Plane& b) {
  Plane out(a.h, a.w);
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

/// Local SSIM statistics of one scale, kept for the backward pass.
struct SsimScale {
  Plane x, y;             // inputs at this scale
  Plane mu_x, mu_y;       // local means
  Plane l, cs;            // luminance and contrast-structure maps
  Plane b2;               // sigma_x^2 + sigma_y^2 + C2
  Plane b1;               // mu_x^2 + mu_y^2 + C1
  double mean_ssim = 0.0;
  double mean_cs = 0.0;
};

inline SsimScale ssim_scale(Plane x, Plane y, std::span<const double> g, double c1, double c2) {
  SsimScale s;
  s.mu_x = filter_valid(x, g);
  s.mu_y = filter_valid(y, g);
  const Plane exx = filter_valid(product(x, x), g);
  const Plane eyy = filter_valid(product(y, y), g);
  const Plane exy = filter_valid(product(x, y), g);
  const std::size_t n = s.mu_x.v.size();
  s.l = Plane(s.mu_x.h, s.mu_x.w);
  s.cs = Plane(s.mu_x.h, s.mu_x.w);
  s.b1 = Plane(s.mu_x.h, s.mu_x.w);
  s.b2 = Plane(s.mu_x.h, s.mu_x.w);
  double sum_ssim = 0.0;
  double sum_cs = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double mx = s.mu_x.v[i];
    const double my = s.mu_y.v[i];
    const double sxx = exx.v[i] - mx * mx;
    const double syy = eyy.v[i] - my * my;
    const double sxy = exy.v[i] - mx * my;
    const double b1 = mx * mx + my * my + c1;
    const double b2 = sxx + syy + c2;
    const double l = (2.0 * mx * my + c1) / b1;
    const double cs = (2.0 * sxy + c2) / b2;
    s.l.v[i] = l;
    s.cs.v[i] = cs;
    s.b1.v[i] = b1;
    s.b2.v[i] = b2;
    sum_ssim += l * cs;
    sum_cs += cs;
  }
  s.mean_ssim = sum_ssim / static_cast<double>(n);
  s.mean_cs = sum_cs / static_cast<double>(n);
  s.x = std::move(x);
  s.y = std::move(y);
  return s;
}

/// Gradient w.r.t. y of  w_ssim * mean(ssim map) + w_cs * mean(cs map).
inline Plane ssim_scale_backward(const SsimScale& s, std::span<const double> g, double w_ssim,
                                 double w_cs) {
  const std::size_t n = s.l.v.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  Plane d_mu(s.l.h, s.l.w);
  Plane d_exy(s.l.h, s.l.w);
  Plane d_eyy(s.l.h, s.l.w);
  for (std::size_t i = 0; i < n; ++i) {
    const double mx = s.mu_x.v[i];
    const double my = s.mu_y.v[i];
    const double l = s.l.v[i];
    const double cs = s.cs.v[i];
    const double b2 = s.b2.v[i];
    const double dl_dmu = 2.0 * (mx - l * my) / s.b1.v[i];
    const double coef = (w_ssim * l + w_cs) * inv_n;  // d/d(cs)
    const double g_sxy = coef * 2.0 / b2;
    const double g_syy = -coef * cs / b2;
    const double g_mu = w_ssim * inv_n * cs * dl_dmu;
    d_exy.v[i] = g_sxy;
    d_eyy.v[i] = g_syy;
    d_mu.v[i] = g_mu - g_sxy * mx - 2.0 * g_syy * my;
  }
  const std::size_t h = s.y.h;
  const std::size_t w = s.y.w;
  Plane out = filter_valid_adjoint(d_mu, g, h, w);
  const Plane a_xy = filter_valid_adjoint(d_exy, g, h, w);
  const Plane a_yy = filter_valid_adjoint(d_eyy, g, h, w);
  for (std::size_t i = 0; i < out.v.size(); ++i)
    out.v[i] += s.x.v[i] * a_xy.v[i] + 2.0 * s.y.v[i] * a_yy.v[i];
  return out;
}

}  // namespace detail

/// 10 log10(max_val^2 / MSE), capped at 100 dB (identical images hit the cap).
inline double psnr(const ImageGrid& a, const ImageGrid& b, double max_val = 1.0) {
  require_same_shape(a, b, "psnr");
  if (!(max_val > 0.0)) throw ValidationError("psnr: max_val must be > 0");
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a.data()[i] - b.data()[i];
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_val * max_val / mse));
}

inline double ssim(const ImageGrid& a, const ImageGrid& b, const SsimParams& params = {}) {
  require_same_shape(a, b, "ssim");
  params.validate();
  if (a.height() < params.window || a.width() < params.window) {
    throw ValidationError("ssim: image " + std::to_string(a.height()) + "x" +
                          std::to_string(a.width()) + " is smaller than the " +
                          std::to_string(params.window) + "-pixel window");
  }
  const auto g = detail::gaussian_kernel(params.window, params.gaussian_sigma);
  return detail::ssim_scale(detail::to_plane(a), detail::to_plane(b), g, params.c1(), params.c2())
      .mean_ssim;
}

struct MsSsimResult {
  double value = 0.0;
  std::vector<double> grad;  // d value / d b, row-major, empty unless requested
};

namespace detail {

inline MsSsimResult ms_ssim_impl(const ImageGrid& a, const ImageGrid& b, std::size_t scales,
                                 std::span<const double> weights, const SsimParams& params,
                                 bool want_grad) {
  require_same_shape(a, b, "ms_ssim");
  params.validate();
  if (scales == 0) throw ValidationError("ms_ssim: scales must be >= 1");
  if (weights.size() != scales)
    throw ValidationError("ms_ssim: expected " + std::to_string(scales) + " weights");
  double wsum = 0.0;
  for (const double w : weights) {
    if (!(w > 0.0)) throw ValidationError("ms_ssim: weights must be positive");
    wsum += w;
  }
  if (std::abs(wsum - 1.0) > 1e-3) throw ValidationError("ms_ssim: weights must sum to 1");
  const std::size_t min_size = ms_ssim_min_size(scales, params.window);
  if (std::min(a.height(), a.width()) < min_size) {
    throw ValidationError("ms_ssim: image " + std::to_string(a.height()) + "x" +
                          std::to_string(a.width()) + " is too small for " +
                          std::to_string(scales) + " scales; minimum side is " +
                          std::to_string(min_size));
  }

  const auto g = gaussian_kernel(params.window, params.gaussian_sigma);
  std::vector<SsimScale> levels;
  levels.reserve(scales);
  Plane x = to_plane(a);
  Plane y = to_plane(b);
  for (std::size_t s = 0; s < scales; ++s) {
    Plane nx = (s + 1 < scales) ? pool2(x) : Plane();
    Plane ny = (s + 1 < scales) ? pool2(y) : Plane();
    levels.push_back(ssim_scale(std::move(x), std::move(y), g, params.c1(), params.c2()));
    x = std::move(nx);
    y = std::move(ny);
  }

  // Negative terms are clamped to zero before the fractional powers.
  std::vector<double> term(scales);
  for (std::size_t s = 0; s < scales; ++s) {
    const double raw = (s + 1 == scales) ? levels[s].mean_ssim : levels[s].mean_cs;
    term[s] = std::max(raw, 0.0);
  }
  double value = 1.0;
  for (std::size_t s = 0; s < scales; ++s) value *= std::pow(term[s], weights[s]);

  MsSsimResult result{value, {}};
  if (!want_grad) return result;

  Plane carry;  // gradient flowing from coarser scales
  for (std::size_t s = scales; s-- > 0;) {
    double d_term = 0.0;
    if (term[s] > 0.0) {
      d_term = weights[s] * std::pow(term[s], weights[s] - 1.0);
      for (std::size_t o = 0; o < scales; ++o)
        if (o != s) d_term *= std::pow(term[o], weights[o]);
    }
    const bool last = (s + 1 == scales);
    Plane gy = ssim_scale_backward(levels[s], g, last ? d_term : 0.0, last ? 0.0 : d_term);
    if (!carry.v.empty()) pool2_adjoint_add(carry, gy);
    carry = std::move(gy);
  }
  result.grad = std::move(carry.v);
  return result;
}

}  // namespace detail

inline double ms_ssim(const ImageGrid& a, const ImageGrid& b, std::size_t scales = 5,
                      std::span<const double> weights = {}, const SsimParams& params = {}) {
  const auto w = weights.empty() ? default_ms_ssim_weights(scales)
                                 : std::vector<double>(weights.begin(), weights.end());
  return detail::ms_ssim_impl(a, b, scales, w, params, false).value;
}

inline MsSsimResult ms_ssim_with_grad(const ImageGrid& a, const ImageGrid& b, std::size_t scales,
                                      std::span<const double> weights = {},
                                      const SsimParams& params = {}) {
  const auto w = weights.empty() ? default_ms_ssim_weights(scales)
                                 : std::vector<double>(weights.begin(), weights.end());
  return detail::ms_ssim_impl(a, b, scales, w, params, true);
}

}  // namespace latax
