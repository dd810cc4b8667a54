#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "latax/error.hpp"
#include "latax/linalg.hpp"

namespace latax {

/// n latent vectors of dimension p, each carrying a score for every declared
/// attribute. Stored column-wise: latents is n x p, labels is n x m.
class LatentDataset {
 public:
  LatentDataset(std::vector<std::int64_t> ids, Mat latents, std::vector<std::string> attributes,
                Mat labels)
      : ids_(std::move(ids)),
        latents_(std::move(latents)),
        attributes_(std::move(attributes)),
        labels_(std::move(labels)) {
    if (ids_.size() != latents_.rows()) {
      throw DimensionError("LatentDataset: id count does not match sample count");
    }
    if (labels_.rows() != latents_.rows()) {
      throw DimensionError("LatentDataset: label rows do not match sample count");
    }
    if (labels_.cols() != attributes_.size()) {
      throw DimensionError("LatentDataset: label columns do not match attribute names");
    }
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
      if (attributes_[i].empty()) throw ValidationError("LatentDataset: empty attribute name");
      for (std::size_t j = 0; j < i; ++j) {
        if (attributes_[i] == attributes_[j]) {
          throw ValidationError("LatentDataset: duplicate attribute '" + attributes_[i] + "'");
        }
      }
    }
  }

  std::size_t size() const noexcept { return latents_.rows(); }
  std::size_t dim() const noexcept { return latents_.cols(); }
  const std::vector<std::int64_t>& ids() const noexcept { return ids_; }
  const Mat& latents() const noexcept { return latents_; }
  const Mat& labels() const noexcept { return labels_; }
  const std::vector<std::string>& attributes() const noexcept { return attributes_; }

  Vec latent(std::size_t i) const {
    const auto r = latents_.row(i);
    return Vec(std::vector<double>(r.begin(), r.end()));
  }

  bool has_attribute(const std::string& name) const {
    return std::find(attributes_.begin(), attributes_.end(), name) != attributes_.end();
  }

  std::size_t attribute_index(const std::string& name) const {
    const auto it = std::find(attributes_.begin(), attributes_.end(), name);
    if (it == attributes_.end()) {
      throw ValidationError("LatentDataset: unknown attribute '" + name + "'");
    }
    return static_cast<std::size_t>(it - attributes_.begin());
  }

  Vec labels_of(const std::string& name) const {
    const std::size_t c = attribute_index(name);
    std::vector<double> y(size());
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = labels_(i, c);
    return Vec(std::move(y));
  }

  friend bool operator==(const LatentDataset&, const LatentDataset&) = default;

 private:
  std::vector<std::int64_t> ids_;
  Mat latents_;
  std::vector<std::string> attributes_;
  Mat labels_;
};

/// Binary labels are coded as -1 / +1 so the intercept absorbs the class midpoint.
inline double binary_label(bool positive) { return positive ? 1.0 : -1.0; }

}  // namespace latax
