#pragma once

// Adam training of the toy linear encoder against the frozen template decoder.

#include <algorithm>
#include <chrono>
#include <exception>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "latax/error.hpp"
#include "latax/image.hpp"
#include "latax/linalg.hpp"
#include "latax/losses.hpp"
#include "latax/rng.hpp"
#include "latax/toyworld.hpp"

namespace latax {

struct OptimizerConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double lr0 = 1e-3;
  std::size_t halve_every = 500;  // epochs
  std::size_t max_epochs = 2000;
  std::size_t batch = 0;          // 0: full batch
  std::uint64_t seed = 0;
  std::size_t workers = 1;        // >1: per-sample gradients on worker threads

  void validate() const {
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ValidationError("optimizer: beta1 must lie in (0, 1)");
    if (!(beta2 > 0.0 && beta2 < 1.0)) throw ValidationError("optimizer: beta2 must lie in (0, 1)");
    if (!(epsilon > 0.0)) throw ValidationError("optimizer: epsilon must be > 0");
    if (!(lr0 > 0.0)) throw ValidationError("optimizer: lr0 must be > 0");
    if (halve_every == 0) throw ValidationError("optimizer: halve_every must be >= 1");
    if (workers == 0) throw ValidationError("optimizer: workers must be >= 1");
  }

  friend bool operator==(const OptimizerConfig&, const OptimizerConfig&) = default;
};

/// lr0 * 0.5^floor(epoch / halve_every)
inline double learning_rate(const OptimizerConfig& cfg, std::size_t epoch) {
  const std::size_t halvings = epoch / cfg.halve_every;
  return std::ldexp(cfg.lr0, -static_cast<int>(std::min<std::size_t>(halvings, 2000)));
}

struct AdamState {
  Mat m;
  Mat v;

  static AdamState zeros(std::size_t rows, std::size_t cols) {
    return AdamState{Mat::zeros(rows, cols), Mat::zeros(rows, cols)};
  }
};

namespace detail {

inline void adam_update(std::span<double> params, std::span<const double> grad, std::span<double> m,
                        std::span<double> v, std::uint64_t t, double lr,
                        const OptimizerConfig& cfg) {
  const double td = static_cast<double>(t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, td);
  const double bc2 = 1.0 - std::pow(cfg.beta2, td);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double g = grad[i];
    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
    const double m_hat = m[i] / bc1;
    const double v_hat = v[i] / bc2;
    params[i] -= lr * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
  }
}

}  // namespace detail

struct AdamStepResult {
  Mat params;
  AdamState state;
};

/// One bias-corrected Adam update at step t >= 1 with learning rate lr.
inline AdamStepResult adam_step(const Mat& params, const Mat& grad, const AdamState& state,
                                std::uint64_t t, double lr, const OptimizerConfig& cfg) {
  if (grad.rows() != params.rows() || grad.cols() != params.cols() ||
      state.m.rows() != params.rows() || state.m.cols() != params.cols() ||
      state.v.rows() != params.rows() || state.v.cols() != params.cols()) {
    throw DimensionError("adam_step: shape mismatch");
  }
  if (t == 0) throw ValidationError("adam_step: step counter starts at 1");
  std::vector<double> p(params.data());
  std::vector<double> m(state.m.data());
  std::vector<double> v(state.v.data());
  detail::adam_update(p, grad.values(), m, v, t, lr, cfg);
  return AdamStepResult{Mat(params.rows(), params.cols(), std::move(p)),
                        AdamState{Mat(params.rows(), params.cols(), std::move(m)),
                                  Mat(params.rows(), params.cols(), std::move(v))}};
}

struct TrainReport {
  std::vector<double> loss_trace;  // mean loss per epoch, measured before that epoch's updates
  double initial_loss = 0.0;
  double final_loss = 0.0;         // at the returned encoder
  Mat encoder;
  std::size_t epochs_run = 0;
  double wall_seconds = 0.0;
  OptimizerConfig config;
  std::string loss_kind;
};

class DivergenceError : public Error {
 public:
  DivergenceError(const std::string& what, TrainReport report)
      : Error(what), report_(std::move(report)) {}
  const TrainReport& report() const noexcept { return report_; }

 private:
  TrainReport report_;
};

inline constexpr double kDivergenceLimit = 1e6;

/// Seeded uniform initialization in [-s, s] with s = 1 / sqrt(pixel count).
inline Mat initial_encoder(std::size_t code_dim, std::size_t pixels, std::uint64_t seed) {
  Rng rng(derive_seed(seed, "encoder-init"));
  const double s = 1.0 / std::sqrt(static_cast<double>(pixels));
  std::vector<double> e(code_dim * pixels);
  for (double& x : e) x = rng.uniform(-s, s);
  return Mat(code_dim, pixels, std::move(e));
}

namespace detail {

/// Mean loss over `batch` and its gradient. Per-sample gradients are summed in
/// batch order regardless of worker count, so results do not depend on it.
inline double batch_loss_grad(const ReconstructionObjective& obj, std::span<const double> encoder,
                              const std::vector<ImageGrid>& images,
                              const std::vector<std::vector<FeatureMap>>& refs,
                              std::span<const std::size_t> batch, std::span<double> grad,
                              std::size_t workers) {
  const double scale = 1.0 / static_cast<double>(batch.size());
  std::fill(grad.begin(), grad.end(), 0.0);
  double loss = 0.0;
  if (workers <= 1 || batch.size() <= 1) {
    for (const std::size_t i : batch) loss += obj.evaluate(encoder, images[i], refs[i], grad, scale);
    return loss * scale;
  }
  std::vector<std::vector<double>> per(batch.size(), std::vector<double>(grad.size(), 0.0));
  std::vector<double> losses(batch.size(), 0.0);
  std::vector<std::exception_ptr> errors(batch.size());
  {
    std::vector<std::jthread> pool;
    const std::size_t nw = std::min(workers, batch.size());
    for (std::size_t w = 0; w < nw; ++w) {
      pool.emplace_back([&, w] {
        for (std::size_t b = w; b < batch.size(); b += nw) {
          try {
            losses[b] = obj.evaluate(encoder, images[batch[b]], refs[batch[b]], per[b], scale);
          } catch (...) {
            errors[b] = std::current_exception();
          }
        }
      });
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);
  for (std::size_t b = 0; b < batch.size(); ++b) {
    loss += losses[b];
    for (std::size_t c = 0; c < grad.size(); ++c) grad[c] += per[b][c];
  }
  return loss * scale;
}

inline double mean_loss(const ReconstructionObjective& obj, std::span<const double> encoder,
                        const std::vector<ImageGrid>& images,
                        const std::vector<std::vector<FeatureMap>>& refs) {
  double s = 0.0;
  for (std::size_t i = 0; i < images.size(); ++i) s += obj.evaluate(encoder, images[i], refs[i], {});
  return s / static_cast<double>(images.size());
}

}  // namespace detail

/// Trains a (p+1) x (h*w) encoder so that decoder * encoder * x reconstructs
/// each image, with the world's template decoder held fixed.
inline TrainReport train_encoder(const ToyWorldSpec& world, const FeaturePyramidSpec& spec,
                                 const PixelLossKind& kind, const std::vector<ImageGrid>& images,
                                 const OptimizerConfig& cfg) {
  cfg.validate();
  if (images.empty()) throw ValidationError("train_encoder: need at least one image");
  const std::size_t h = world.params.img_h;
  const std::size_t w = world.params.img_w;
  for (const auto& img : images) {
    if (img.height() != h || img.width() != w)
      throw DimensionError("train_encoder: image shape differs from the world's image shape");
  }
  const auto t0 = std::chrono::steady_clock::now();
  const ReconstructionObjective obj(spec, kind, decoder_matrix(world), h, w);
  std::vector<std::vector<FeatureMap>> refs;
  refs.reserve(images.size());
  for (const auto& img : images) refs.push_back(obj.reference_features(img));

  const std::size_t q = obj.code_dim();
  const std::size_t hw = obj.pixel_count();
  std::vector<double> enc(initial_encoder(q, hw, cfg.seed).data());
  std::vector<double> m(enc.size(), 0.0);
  std::vector<double> v(enc.size(), 0.0);
  std::vector<double> grad(enc.size(), 0.0);

  TrainReport rep{{}, 0.0, 0.0, Mat::zeros(1, 1), 0, 0.0, cfg, std::string(to_string(kind.kind))};
  rep.initial_loss = detail::mean_loss(obj, enc, images, refs);

  const std::size_t n = images.size();
  const std::size_t bsz = (cfg.batch == 0 || cfg.batch >= n) ? n : cfg.batch;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng shuffle_rng(derive_seed(cfg.seed, "batches"));
  std::uint64_t step = 0;

  auto finish = [&](double final_loss) {
    rep.final_loss = final_loss;
    rep.encoder = Mat(q, hw, enc);
    rep.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  };

  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const double lr = learning_rate(cfg, epoch);
    if (bsz < n) {
      for (std::size_t i = n; i > 1; --i) std::swap(order[i - 1], order[shuffle_rng.below(i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += bsz) {
      const std::size_t len = std::min(bsz, n - start);
      const std::span<const std::size_t> batch(order.data() + start, len);
      double loss = 0.0;
      try {
        loss = detail::batch_loss_grad(obj, enc, images, refs, batch, grad, cfg.workers);
      } catch (const NonFiniteError& e) {
        rep.epochs_run = epoch;
        finish(rep.loss_trace.empty() ? rep.initial_loss : rep.loss_trace.back());
        throw DivergenceError(std::string("train_encoder: diverged at epoch ") +
                                  std::to_string(epoch) + ": " + e.what(),
                              std::move(rep));
      }
      if (!std::isfinite(loss) || loss > kDivergenceLimit) {
        rep.epochs_run = epoch;
        finish(loss);
        throw DivergenceError("train_encoder: loss " + std::to_string(loss) + " at epoch " +
                                  std::to_string(epoch) + " exceeds the divergence limit",
                              std::move(rep));
      }
      epoch_loss += loss * static_cast<double>(len);
      ++step;
      detail::adam_update(enc, grad, m, v, step, lr, cfg);
    }
    rep.loss_trace.push_back(epoch_loss / static_cast<double>(n));
    rep.epochs_run = epoch + 1;
  }
  finish(detail::mean_loss(obj, enc, images, refs));
  return rep;
}

/// x_s = decoder * (encoder * x), unclamped.
inline ImageGrid reconstruct(const Mat& decoder, const Mat& encoder, const ImageGrid& x) {
  if (encoder.cols() != x.size() || decoder.cols() != encoder.rows() || decoder.rows() != x.size())
    throw DimensionError("reconstruct: encoder/decoder shapes do not match the image");
  const Vec code = encoder * x.flatten();
  return ImageGrid(x.height(), x.width(), (decoder * code).data());
}

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::vector<std::size_t> coords;
};

/// Compares the analytic encoder gradient against central differences at
/// n_coords randomly chosen entries; error = |a - fd| / max(1e-8, |fd|).
inline GradCheckResult grad_check(const FeaturePyramidSpec& spec, const PixelLossKind& kind,
                                  const Mat& decoder, const Mat& encoder, const ImageGrid& x,
                                  std::size_t n_coords, double h, std::uint64_t seed) {
  if (n_coords == 0) throw ValidationError("grad_check: n_coords must be >= 1");
  if (!(h > 0.0)) throw ValidationError("grad_check: h must be > 0");
  const LossAndGrad analytic = total_loss_grad(spec, kind, decoder, encoder, x);
  const ReconstructionObjective obj(spec, kind, decoder, x.height(), x.width());
  const auto ref = obj.reference_features(x);

  Rng rng(derive_seed(seed, "grad-check"));
  GradCheckResult res;
  std::vector<double> e(encoder.data());
  for (std::size_t c = 0; c < n_coords; ++c) {
    const std::size_t idx = static_cast<std::size_t>(rng.below(e.size()));
    res.coords.push_back(idx);
    const double orig = e[idx];
    e[idx] = orig + h;
    const double lp = obj.evaluate(e, x, ref, {});
    e[idx] = orig - h;
    const double lm = obj.evaluate(e, x, ref, {});
    e[idx] = orig;
    const double fd = (lp - lm) / (2.0 * h);
    const double a = analytic.grad.data()[idx];
    const double err = std::abs(a - fd) / std::max(1e-8, std::abs(fd));
    res.max_relative_error = std::max(res.max_relative_error, err);
  }
  return res;
}

}  // namespace latax
