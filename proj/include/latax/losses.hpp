#pragma once

// Reconstruction objective: pixel loss + multi-layer feature (perceptual) loss,
// with gradients obtained by running each stage's adjoint in reverse order.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "latax/error.hpp"
#include "latax/image.hpp"
#include "latax/linalg.hpp"
#include "latax/quality.hpp"
#include "latax/rng.hpp"

namespace latax {

struct ConvLayerSpec {
  std::size_t out_channels = 4;
  std::size_t kernel = 3;
  std::size_t stride = 1;

  friend bool operator==(const ConvLayerSpec&, const ConvLayerSpec&) = default;
};

/// Fixed random convolutional pyramid. Every layer is a valid-mode strided
/// convolution followed by tanh; weights are N(0, 1) / sqrt(fan_in) drawn from
/// the seed, biases are zero unless bias_scale > 0.
struct FeaturePyramidSpec {
  std::vector<ConvLayerSpec> layers;
  std::vector<std::size_t> tap_layers;
  std::uint64_t seed = 0;
  double bias_scale = 0.0;
  bool squared_distance = true;  // false: plain L2 norm per tap

  /// Four layers, all tapped.
  static FeaturePyramidSpec standard(std::uint64_t seed = 0) {
    FeaturePyramidSpec s;
    s.layers = {{4, 3, 1}, {4, 3, 2}, {8, 3, 2}, {8, 3, 2}};
    s.tap_layers = {0, 1, 2, 3};
    s.seed = seed;
    return s;
  }

  void validate() const {
    if (layers.empty()) throw ValidationError("FeaturePyramidSpec: no layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& l = layers[i];
      if (l.out_channels == 0 || l.kernel == 0 || l.stride == 0) {
        throw ValidationError("FeaturePyramidSpec: layer " + std::to_string(i) +
                              " needs channels, kernel and stride >= 1");
      }
    }
    for (const std::size_t t : tap_layers) {
      if (t >= layers.size())
        throw ValidationError("FeaturePyramidSpec: tap layer " + std::to_string(t) + " out of range");
    }
    if (!(bias_scale >= 0.0)) throw ValidationError("FeaturePyramidSpec: bias_scale must be >= 0");
  }

  friend bool operator==(const FeaturePyramidSpec&, const FeaturePyramidSpec&) = default;
};

struct FeatureMap {
  std::size_t channels = 0;
  std::size_t height = 0;
  std::size_t width = 0;
  std::vector<double> values;  // channel-major

  friend bool operator==(const FeatureMap&, const FeatureMap&) = default;
};

struct LayerShape {
  std::size_t channels, height, width;
};

/// Output shape of each layer for an h x w single-channel input.
inline std::vector<LayerShape> pyramid_shapes(const FeaturePyramidSpec& spec, std::size_t h,
                                              std::size_t w) {
  spec.validate();
  std::vector<LayerShape> out;
  std::size_t ch = h;
  std::size_t cw = w;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    if (ch < l.kernel || cw < l.kernel) {
      throw ValidationError("feature pyramid: input " + std::to_string(h) + "x" + std::to_string(w) +
                            " is too small at layer " + std::to_string(i) + " (" +
                            std::to_string(ch) + "x" + std::to_string(cw) + " < kernel " +
                            std::to_string(l.kernel) + ")");
    }
    ch = (ch - l.kernel) / l.stride + 1;
    cw = (cw - l.kernel) / l.stride + 1;
    out.push_back({l.out_channels, ch, cw});
  }
  return out;
}

/// Materialized weights of a FeaturePyramidSpec.
class FeaturePyramid {
 public:
  explicit FeaturePyramid(FeaturePyramidSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    Rng rng(derive_seed(spec_.seed, "feature-pyramid"));
    std::size_t in_c = 1;
    for (const auto& l : spec_.layers) {
      const std::size_t fan_in = in_c * l.kernel * l.kernel;
      const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::vector<double> w(l.out_channels * fan_in);
      for (double& x : w) x = scale * rng.normal();
      std::vector<double> b(l.out_channels, 0.0);
      if (spec_.bias_scale > 0.0)
        for (double& x : b) x = spec_.bias_scale * rng.normal();
      weights_.push_back(std::move(w));
      biases_.push_back(std::move(b));
      in_c = l.out_channels;
    }
  }

  const FeaturePyramidSpec& spec() const noexcept { return spec_; }

  /// Outputs of every layer (post-nonlinearity).
  std::vector<FeatureMap> forward(std::span<const double> image, std::size_t h, std::size_t w) const {
    const auto shapes = pyramid_shapes(spec_, h, w);
    std::vector<FeatureMap> outs;
    outs.reserve(shapes.size());
    FeatureMap in{1, h, w, std::vector<double>(image.begin(), image.end())};
    for (std::size_t li = 0; li < spec_.layers.size(); ++li) {
      const FeatureMap& src = li == 0 ? in : outs.back();
      outs.push_back(conv_forward(li, src, shapes[li]));
    }
    return outs;
  }

  /// Given d loss / d (layer outputs) for each layer (empty = no direct
  /// contribution), returns d loss / d image.
  std::vector<double> backward(std::span<const double> image, std::size_t h, std::size_t w,
                               const std::vector<FeatureMap>& outs,
                               std::vector<std::vector<double>> d_outs) const {
    std::vector<double> carry;  // d loss / d output of layer li
    for (std::size_t li = spec_.layers.size(); li-- > 0;) {
      const FeatureMap& out = outs[li];
      std::vector<double> d(out.values.size(), 0.0);
      if (!d_outs[li].empty())
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += d_outs[li][i];
      if (!carry.empty())
        for (std::size_t i = 0; i < d.size(); ++i) d[i] += carry[i];
      // through tanh
      for (std::size_t i = 0; i < d.size(); ++i) d[i] *= 1.0 - out.values[i] * out.values[i];
      if (li == 0) {
        carry = conv_input_adjoint(li, d, out, 1, h, w);
      } else {
        const FeatureMap& src = outs[li - 1];
        carry = conv_input_adjoint(li, d, out, src.channels, src.height, src.width);
      }
    }
    (void)image;
    return carry;
  }

 private:
  FeatureMap conv_forward(std::size_t li, const FeatureMap& in, const LayerShape& shape) const {
    const auto& l = spec_.layers[li];
    const auto& wt = weights_[li];
    const std::size_t k = l.kernel;
    const std::size_t s = l.stride;
    FeatureMap out{shape.channels, shape.height, shape.width,
                   std::vector<double>(shape.channels * shape.height * shape.width, 0.0)};
    const std::size_t plane = shape.height * shape.width;
    for (std::size_t o = 0; o < shape.channels; ++o) {
      double* dst = out.values.data() + o * plane;
      std::fill(dst, dst + plane, biases_[li][o]);
      for (std::size_t i = 0; i < in.channels; ++i) {
        const double* src = in.values.data() + i * in.height * in.width;
        for (std::size_t u = 0; u < k; ++u) {
          for (std::size_t v = 0; v < k; ++v) {
            const double wv = wt[((o * in.channels + i) * k + u) * k + v];
            for (std::size_t r = 0; r < shape.height; ++r) {
              const double* srow = src + (r * s + u) * in.width + v;
              double* drow = dst + r * shape.width;
              for (std::size_t c = 0; c < shape.width; ++c) drow[c] += wv * srow[c * s];
            }
          }
        }
      }
      for (std::size_t t = 0; t < plane; ++t) dst[t] = std::tanh(dst[t]);
    }
    return out;
  }

  std::vector<double> conv_input_adjoint(std::size_t li, const std::vector<double>& d_pre,
                                         const FeatureMap& out, std::size_t in_c, std::size_t in_h,
                                         std::size_t in_w) const {
    const auto& l = spec_.layers[li];
    const auto& wt = weights_[li];
    const std::size_t k = l.kernel;
    const std::size_t s = l.stride;
    std::vector<double> d_in(in_c * in_h * in_w, 0.0);
    const std::size_t plane = out.height * out.width;
    for (std::size_t o = 0; o < out.channels; ++o) {
      const double* g = d_pre.data() + o * plane;
      for (std::size_t i = 0; i < in_c; ++i) {
        double* dst = d_in.data() + i * in_h * in_w;
        for (std::size_t u = 0; u < k; ++u) {
          for (std::size_t v = 0; v < k; ++v) {
            const double wv = wt[((o * in_c + i) * k + u) * k + v];
            for (std::size_t r = 0; r < out.height; ++r) {
              double* drow = dst + (r * s + u) * in_w + v;
              const double* grow = g + r * out.width;
              for (std::size_t c = 0; c < out.width; ++c) drow[c * s] += wv * grow[c];
            }
          }
        }
      }
    }
    return d_in;
  }

  FeaturePyramidSpec spec_;
  std::vector<std::vector<double>> weights_;  // [out][in][u][v]
  std::vector<std::vector<double>> biases_;
};

inline std::vector<FeatureMap> extract_features(const FeaturePyramidSpec& spec, const ImageGrid& x) {
  return FeaturePyramid(spec).forward(x.pixels(), x.height(), x.width());
}

// ---------------------------------------------------------------------------
// Pixel losses

enum class PixelLoss { kMse, kMae, kLogCosh, kMsSsimMse };

inline std::string_view to_string(PixelLoss k) {
  switch (k) {
    case PixelLoss::kMse: return "mse";
    case PixelLoss::kMae: return "mae";
    case PixelLoss::kLogCosh: return "log_cosh";
    case PixelLoss::kMsSsimMse: return "ms_ssim_mse";
  }
  return "?";
}

inline PixelLoss parse_pixel_loss(std::string_view s) {
  if (s == "mse") return PixelLoss::kMse;
  if (s == "mae") return PixelLoss::kMae;
  if (s == "log_cosh") return PixelLoss::kLogCosh;
  if (s == "ms_ssim_mse") return PixelLoss::kMsSsimMse;
  throw ValidationError("unknown loss kind '" + std::string(s) +
                        "' (expected mse, mae, log_cosh or ms_ssim_mse)");
}

inline constexpr double kDefaultMsSsimMix = 0.84;

struct PixelLossKind {
  PixelLoss kind = PixelLoss::kMse;
  double lambda = kDefaultMsSsimMix;  // ms_ssim_mse only
  std::size_t ms_ssim_scales = 0;     // 0: as many as the image supports, up to 5
  SsimParams ssim;

  std::size_t scales_for(std::size_t h, std::size_t w) const {
    if (ms_ssim_scales != 0) return ms_ssim_scales;
    const std::size_t s = max_ms_ssim_scales(h, w, ssim.window);
    if (s == 0) {
      throw ValidationError("ms_ssim_mse: image " + std::to_string(h) + "x" + std::to_string(w) +
                            " is smaller than the SSIM window");
    }
    return s;
  }
};

/// log(cosh(d)) without overflow.
inline double log_cosh(double d) {
  const double a = std::abs(d);
  return a + std::log1p(std::exp(-2.0 * a)) - std::log(2.0);
}

namespace detail {

/// Pixel loss of (reference r, synthesized s); adds d loss / d s into grad when non-empty.
inline double pixel_loss_eval(const PixelLossKind& kind, const ImageGrid& r, const ImageGrid& s,
                              std::span<double> grad) {
  require_same_shape(r, s, "pixel_loss");
  const std::size_t n = r.size();
  const double inv_n = 1.0 / static_cast<double>(n);
  const auto& a = r.data();
  const auto& b = s.data();
  auto mse_part = [&](double scale) {
    long double sum = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = b[i] - a[i];
      sum += static_cast<long double>(d) * d;
      if (!grad.empty()) grad[i] += scale * 2.0 * d * inv_n;
    }
    return static_cast<double>(sum) * inv_n;
  };
  switch (kind.kind) {
    case PixelLoss::kMse:
      return mse_part(1.0);
    case PixelLoss::kMae: {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = b[i] - a[i];
        sum += std::abs(d);
        if (!grad.empty()) grad[i] += (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * inv_n;
      }
      return sum * inv_n;
    }
    case PixelLoss::kLogCosh: {
      double sum = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double d = b[i] - a[i];
        sum += log_cosh(d);
        if (!grad.empty()) grad[i] += std::tanh(d) * inv_n;
      }
      return sum * inv_n;
    }
    case PixelLoss::kMsSsimMse: {
      if (!(kind.lambda >= 0.0 && kind.lambda <= 1.0))
        throw ValidationError("ms_ssim_mse: lambda must lie in [0, 1]");
      const std::size_t scales = kind.scales_for(r.height(), r.width());
      const auto weights = default_ms_ssim_weights(scales);
      const MsSsimResult ms = grad.empty()
                                  ? MsSsimResult{ms_ssim(r, s, scales, weights, kind.ssim), {}}
                                  : ms_ssim_with_grad(r, s, scales, weights, kind.ssim);
      if (!grad.empty())
        for (std::size_t i = 0; i < n; ++i) grad[i] -= kind.lambda * ms.grad[i];
      const double mse = mse_part(1.0 - kind.lambda);
      return kind.lambda * (1.0 - ms.value) + (1.0 - kind.lambda) * mse;
    }
  }
  return 0.0;
}

/// Perceptual loss given precomputed reference features; adds d loss / d s into grad.
inline double perceptual_eval(const FeaturePyramid& pyr, const std::vector<FeatureMap>& ref,
                              const ImageGrid& s, std::span<double> grad) {
  if (pyr.spec().tap_layers.empty()) return 0.0;
  const auto outs = pyr.forward(s.pixels(), s.height(), s.width());
  const auto& spec = pyr.spec();
  std::vector<std::vector<double>> d_outs(outs.size());
  double total = 0.0;
  for (const std::size_t t : spec.tap_layers) {
    const auto& fr = ref[t].values;
    const auto& fs = outs[t].values;
    const double count = static_cast<double>(fs.size());
    double ss = 0.0;
    for (std::size_t i = 0; i < fs.size(); ++i) {
      const double d = fs[i] - fr[i];
      ss += d * d;
    }
    const double dist = spec.squared_distance ? ss : std::sqrt(ss);
    total += dist / count;
    if (!grad.empty()) {
      auto& g = d_outs[t];
      if (g.empty()) g.assign(fs.size(), 0.0);
      double coef = 0.0;
      if (spec.squared_distance) coef = 2.0 / count;
      else if (dist > 0.0) coef = 1.0 / (count * dist);
      for (std::size_t i = 0; i < fs.size(); ++i) g[i] += coef * (fs[i] - fr[i]);
    }
  }
  if (!grad.empty()) {
    const auto d_img = pyr.backward(s.pixels(), s.height(), s.width(), outs, std::move(d_outs));
    for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += d_img[i];
  }
  return total;
}

}  // namespace detail

inline double pixel_loss(const PixelLossKind& kind, const ImageGrid& x_r, const ImageGrid& x_s) {
  return detail::pixel_loss_eval(kind, x_r, x_s, {});
}

/// sum over tapped layers of |E_i(x_r) - E_i(x_s)|^2 / (C_i H_i W_i)
inline double perceptual_loss(const FeaturePyramidSpec& spec, const ImageGrid& x_r,
                              const ImageGrid& x_s) {
  require_same_shape(x_r, x_s, "perceptual_loss");
  const FeaturePyramid pyr(spec);
  const auto ref = pyr.forward(x_r.pixels(), x_r.height(), x_r.width());
  return detail::perceptual_eval(pyr, ref, x_s, {});
}

/// Unweighted sum of the pixel and perceptual terms.
inline double total_loss(const FeaturePyramidSpec& spec, const PixelLossKind& kind,
                         const ImageGrid& x_r, const ImageGrid& x_s) {
  return pixel_loss(kind, x_r, x_s) + perceptual_loss(spec, x_r, x_s);
}

// ---------------------------------------------------------------------------
// Linear autoencoder objective

struct LossAndGrad {
  double loss = 0.0;
  Mat grad;  // same shape as the encoder
};

/// Reconstruction loss of x_s = decoder * encoder * x_r for a linear toy
/// encoder/decoder. The pyramid weights and the reference features of each
/// image are built once and reused across evaluations.
class ReconstructionObjective {
 public:
  ReconstructionObjective(const FeaturePyramidSpec& spec, PixelLossKind kind, Mat decoder,
                          std::size_t img_h, std::size_t img_w)
      : pyramid_(spec), kind_(std::move(kind)), decoder_(std::move(decoder)), h_(img_h), w_(img_w) {
    if (decoder_.rows() != h_ * w_) {
      throw DimensionError("reconstruction: decoder has " + std::to_string(decoder_.rows()) +
                           " rows, image has " + std::to_string(h_ * w_) + " pixels");
    }
    if (!spec.tap_layers.empty()) pyramid_shapes(spec, h_, w_);
    if (kind_.kind == PixelLoss::kMsSsimMse) {
      const std::size_t s = kind_.scales_for(h_, w_);
      if (std::min(h_, w_) < ms_ssim_min_size(s, kind_.ssim.window)) {
        throw ValidationError("reconstruction: image too small for " + std::to_string(s) +
                              " MS-SSIM scales; minimum side is " +
                              std::to_string(ms_ssim_min_size(s, kind_.ssim.window)));
      }
    }
  }

  std::size_t code_dim() const noexcept { return decoder_.cols(); }
  std::size_t pixel_count() const noexcept { return h_ * w_; }
  const Mat& decoder() const noexcept { return decoder_; }
  const FeaturePyramid& pyramid() const noexcept { return pyramid_; }
  const PixelLossKind& kind() const noexcept { return kind_; }

  std::vector<FeatureMap> reference_features(const ImageGrid& x_r) const {
    if (pyramid_.spec().tap_layers.empty()) return {};
    return pyramid_.forward(x_r.pixels(), h_, w_);
  }

  /// encoder is code_dim x pixel_count, row-major. Adds d loss / d encoder into
  /// grad (scaled by grad_scale) when grad is non-empty.
  double evaluate(std::span<const double> encoder, const ImageGrid& x_r,
                  const std::vector<FeatureMap>& ref, std::span<double> grad,
                  double grad_scale = 1.0) const {
    const std::size_t q = code_dim();
    const std::size_t hw = pixel_count();
    if (x_r.height() != h_ || x_r.width() != w_) throw DimensionError("reconstruction: image shape");
    if (encoder.size() != q * hw) throw DimensionError("reconstruction: encoder shape");
    const auto& x = x_r.data();

    std::vector<double> code(q, 0.0);
    for (std::size_t i = 0; i < q; ++i) code[i] = dot_extended(encoder.subspan(i * hw, hw), x);
    std::vector<double> xs(hw);
    for (std::size_t r = 0; r < hw; ++r) {
      xs[r] = dot_extended(decoder_.row(r), code);
      if (!std::isfinite(xs[r])) {
        throw NonFiniteError("reconstruction: non-finite synthesized pixel " + std::to_string(r));
      }
    }
    const ImageGrid x_s(h_, w_, std::move(xs));

    std::vector<double> g_s;
    if (!grad.empty()) g_s.assign(hw, 0.0);
    const double pix = detail::pixel_loss_eval(kind_, x_r, x_s, g_s);
    const double per = detail::perceptual_eval(pyramid_, ref, x_s, g_s);
    const double loss = pix + per;
    if (!std::isfinite(loss)) throw NonFiniteError("reconstruction: non-finite loss");

    if (!grad.empty()) {
      // d/d encoder = (decoder^T g_s) x^T
      std::vector<double> u(q, 0.0);
      for (std::size_t r = 0; r < hw; ++r) {
        const double g = g_s[r];
        if (g == 0.0) continue;
        const auto drow = decoder_.row(r);
        for (std::size_t i = 0; i < q; ++i) u[i] += drow[i] * g;
      }
      for (std::size_t i = 0; i < q; ++i) {
        const double ui = grad_scale * u[i];
        double* gi = grad.data() + i * hw;
        for (std::size_t c = 0; c < hw; ++c) gi[c] += ui * x[c];
      }
    }
    return loss;
  }

 private:
  FeaturePyramid pyramid_;
  PixelLossKind kind_;
  Mat decoder_;
  std::size_t h_, w_;
};

inline LossAndGrad total_loss_grad(const FeaturePyramidSpec& spec, const PixelLossKind& kind,
                                   const Mat& decoder, const Mat& encoder, const ImageGrid& x_r) {
  if (encoder.rows() != decoder.cols() || encoder.cols() != x_r.size()) {
    throw DimensionError("total_loss_grad: encoder is " + std::to_string(encoder.rows()) + "x" +
                         std::to_string(encoder.cols()) + ", expected " +
                         std::to_string(decoder.cols()) + "x" + std::to_string(x_r.size()));
  }
  const ReconstructionObjective obj(spec, kind, decoder, x_r.height(), x_r.width());
  std::vector<double> g(encoder.rows() * encoder.cols(), 0.0);
  const double loss = obj.evaluate(encoder.values(), x_r, obj.reference_features(x_r), g);
  return LossAndGrad{loss, Mat(encoder.rows(), encoder.cols(), std::move(g))};
}

}  // namespace latax
