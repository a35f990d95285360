#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace prognosis {

/// 16-bit grayscale image as read from disk, row-major.
struct RawImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint16_t> pixels;
};

/// Floating-point grayscale image, row-major.
class GrayImage {
 public:
  GrayImage() = default;
  GrayImage(std::size_t rows, std::size_t cols, double fill = 0.0);
  GrayImage(std::size_t rows, std::size_t cols, std::vector<double> pixels);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  bool square() const noexcept { return rows_ == cols_; }
  double& at(std::size_t r, std::size_t c) { return pixels_[r * cols_ + c]; }
  double at(std::size_t r, std::size_t c) const { return pixels_[r * cols_ + c]; }
  std::span<double> pixels() noexcept { return pixels_; }
  std::span<const double> pixels() const noexcept { return pixels_; }

  friend bool operator==(const GrayImage&, const GrayImage&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> pixels_;
};

/// Bilinear resampling with half-pixel centres; same-size resize is the identity.
GrayImage resize_bilinear(const GrayImage& src, std::size_t rows, std::size_t cols);
GrayImage crop(const GrayImage& src, std::size_t row, std::size_t col, std::size_t rows,
               std::size_t cols);
GrayImage flip_horizontal(const GrayImage& src);

struct PreprocessOptions {
  double low_quantile = 0.01;
  double high_quantile = 0.99;
};

/// Strip all-zero border rows/columns, clip to the [low, high] intensity
/// quantiles (nearest rank, rounded inward), min-max normalise to [0, 1],
/// centre-crop to the largest square and rescale to side x side. A constant
/// image normalises to all zeros; an all-zero image is rejected.
GrayImage preprocess(const RawImage& raw, std::size_t side, const PreprocessOptions& options = {});
GrayImage preprocess(const GrayImage& image, std::size_t side,
                     const PreprocessOptions& options = {});

struct AugmentPolicy {
  double flip_probability = 0.5;
  double rotation_min_degrees = -45.0;
  double rotation_max_degrees = 45.0;
  double max_translation_fraction = 0.1;
  std::uint64_t seed = 0;

  /// Throws if probabilities or ranges are out of bounds.
  void validate() const;
  static AugmentPolicy identity();
};

/// Concrete transform drawn for one (seed, draw_index).
struct AugmentDraw {
  bool flip = false;
  double angle_degrees = 0.0;
  double shift_rows = 0.0;
  double shift_cols = 0.0;
};

AugmentDraw draw_augmentation(const AugmentPolicy& policy, std::uint64_t draw_index);

/// Flip, then rotate about the centre, then translate; bilinear resampling
/// with zero fill. Deterministic in (policy.seed, draw_index).
GrayImage augment(const GrayImage& image, const AugmentPolicy& policy, std::uint64_t draw_index);
GrayImage apply_augmentation(const GrayImage& image, const AugmentDraw& draw);

using ImageForward = std::function<std::vector<double>(const GrayImage&)>;

/// Mean prediction over augmented copies with draw indices 0..n-1.
std::vector<double> tta_average(const ImageForward& model, const GrayImage& image,
                                const AugmentPolicy& policy, std::size_t n = 10);

}  // namespace prognosis
