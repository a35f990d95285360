#include "prognosis/image.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "prognosis/error.hpp"
#include "prognosis/random.hpp"

namespace prognosis {

GrayImage::GrayImage(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), pixels_(rows * cols, fill) {}

GrayImage::GrayImage(std::size_t rows, std::size_t cols, std::vector<double> pixels)
    : rows_(rows), cols_(cols), pixels_(std::move(pixels)) {
  if (pixels_.size() != rows_ * cols_) throw ShapeError("image pixel count does not match dimensions");
}

namespace {

// Bilinear sample where everything outside the pixel grid reads as zero.
double sample_zero_fill(const GrayImage& img, double r, double c) {
  const auto rows = static_cast<double>(img.rows());
  const auto cols = static_cast<double>(img.cols());
  if (r <= -1.0 || c <= -1.0 || r >= rows || c >= cols) return 0.0;
  const double r0f = std::floor(r), c0f = std::floor(c);
  const double fr = r - r0f, fc = c - c0f;
  const auto r0 = static_cast<std::ptrdiff_t>(r0f), c0 = static_cast<std::ptrdiff_t>(c0f);
  auto px = [&](std::ptrdiff_t rr, std::ptrdiff_t cc) {
    if (rr < 0 || cc < 0 || rr >= static_cast<std::ptrdiff_t>(img.rows()) ||
        cc >= static_cast<std::ptrdiff_t>(img.cols())) {
      return 0.0;
    }
    return img.at(static_cast<std::size_t>(rr), static_cast<std::size_t>(cc));
  };
  return (1 - fr) * ((1 - fc) * px(r0, c0) + fc * px(r0, c0 + 1)) +
         fr * ((1 - fc) * px(r0 + 1, c0) + fc * px(r0 + 1, c0 + 1));
}

}  // namespace

GrayImage resize_bilinear(const GrayImage& src, std::size_t rows, std::size_t cols) {
  if (src.rows() == 0 || src.cols() == 0 || rows == 0 || cols == 0) {
    throw ShapeError("resize of empty image");
  }
  if (rows == src.rows() && cols == src.cols()) return src;
  GrayImage out(rows, cols);
  const double sy = static_cast<double>(src.rows()) / static_cast<double>(rows);
  const double sx = static_cast<double>(src.cols()) / static_cast<double>(cols);
  const auto max_r = static_cast<double>(src.rows() - 1);
  const auto max_c = static_cast<double>(src.cols() - 1);
  for (std::size_t r = 0; r < rows; ++r) {
    const double y = std::clamp((static_cast<double>(r) + 0.5) * sy - 0.5, 0.0, max_r);
    const auto y0 = static_cast<std::size_t>(y);
    const std::size_t y1 = std::min(y0 + 1, src.rows() - 1);
    const double fy = y - static_cast<double>(y0);
    for (std::size_t c = 0; c < cols; ++c) {
      const double x = std::clamp((static_cast<double>(c) + 0.5) * sx - 0.5, 0.0, max_c);
      const auto x0 = static_cast<std::size_t>(x);
      const std::size_t x1 = std::min(x0 + 1, src.cols() - 1);
      const double fx = x - static_cast<double>(x0);
      out.at(r, c) = (1 - fy) * ((1 - fx) * src.at(y0, x0) + fx * src.at(y0, x1)) +
                     fy * ((1 - fx) * src.at(y1, x0) + fx * src.at(y1, x1));
    }
  }
  return out;
}

GrayImage crop(const GrayImage& src, std::size_t row, std::size_t col, std::size_t rows,
               std::size_t cols) {
  if (row + rows > src.rows() || col + cols > src.cols()) {
    throw ShapeError("crop window exceeds image bounds");
  }
  GrayImage out(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c) out.at(r, c) = src.at(row + r, col + c);
  return out;
}

GrayImage flip_horizontal(const GrayImage& src) {
  GrayImage out(src.rows(), src.cols());
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c) out.at(r, c) = src.at(r, src.cols() - 1 - c);
  return out;
}

GrayImage preprocess(const RawImage& raw, std::size_t side, const PreprocessOptions& options) {
  if (raw.width == 0 || raw.height == 0 || raw.pixels.size() != raw.width * raw.height) {
    throw Error("raw image is empty or inconsistent");
  }
  std::vector<double> pixels(raw.pixels.begin(), raw.pixels.end());
  return preprocess(GrayImage(raw.height, raw.width, std::move(pixels)), side, options);
}

GrayImage preprocess(const GrayImage& image, std::size_t side, const PreprocessOptions& options) {
  if (image.rows() == 0 || image.cols() == 0) throw Error("image is empty");
  if (side == 0) throw Error("target side must be positive");
  if (!(options.low_quantile >= 0.0 && options.low_quantile <= options.high_quantile &&
        options.high_quantile <= 1.0)) {
    throw Error("quantiles must satisfy 0 <= low <= high <= 1");
  }

  // Bounding box of nonzero pixels.
  std::size_t top = image.rows(), bottom = 0, left = image.cols(), right = 0;
  for (std::size_t r = 0; r < image.rows(); ++r)
    for (std::size_t c = 0; c < image.cols(); ++c)
      if (image.at(r, c) != 0.0) {
        top = std::min(top, r);
        bottom = std::max(bottom, r);
        left = std::min(left, c);
        right = std::max(right, c);
      }
  if (top == image.rows()) throw Error("blank image");

  const std::size_t rows = bottom - top + 1, cols = right - left + 1;
  GrayImage core = crop(image, top, left, rows, cols);

  std::vector<double> sorted(core.pixels().begin(), core.pixels().end());
  std::sort(sorted.begin(), sorted.end());
  const double last = static_cast<double>(sorted.size() - 1);
  const auto lo_rank = static_cast<std::size_t>(std::floor(options.low_quantile * last));
  const auto hi_rank = static_cast<std::size_t>(std::ceil(options.high_quantile * last));
  const double lo = sorted[lo_rank];
  const double hi = sorted[hi_rank];
  const double range = hi - lo;
  for (auto& v : core.pixels()) v = range > 0.0 ? (std::clamp(v, lo, hi) - lo) / range : 0.0;

  const std::size_t square = std::min(rows, cols);
  GrayImage centered = crop(core, (rows - square) / 2, (cols - square) / 2, square, square);
  GrayImage out = resize_bilinear(centered, side, side);
  for (auto& v : out.pixels()) v = std::clamp(v, 0.0, 1.0);
  return out;
}

void AugmentPolicy::validate() const {
  if (!(flip_probability >= 0.0 && flip_probability <= 1.0)) {
    throw Error("flip probability must lie in [0, 1]");
  }
  if (!(rotation_min_degrees <= rotation_max_degrees) || !std::isfinite(rotation_min_degrees) ||
      !std::isfinite(rotation_max_degrees)) {
    throw Error("rotation range must be finite with min <= max");
  }
  if (!(max_translation_fraction >= 0.0 && max_translation_fraction <= 1.0)) {
    throw Error("translation fraction must lie in [0, 1]");
  }
}

AugmentPolicy AugmentPolicy::identity() {
  AugmentPolicy p;
  p.flip_probability = 0.0;
  p.rotation_min_degrees = 0.0;
  p.rotation_max_degrees = 0.0;
  p.max_translation_fraction = 0.0;
  return p;
}

AugmentDraw draw_augmentation(const AugmentPolicy& policy, std::uint64_t draw_index) {
  policy.validate();
  Rng rng(derive_seed(policy.seed, draw_index));
  AugmentDraw d;
  d.flip = rng.bernoulli(policy.flip_probability);
  d.angle_degrees = rng.uniform(policy.rotation_min_degrees, policy.rotation_max_degrees);
  const double t = policy.max_translation_fraction;
  d.shift_rows = rng.uniform(-t, t);
  d.shift_cols = rng.uniform(-t, t);
  return d;
}

GrayImage apply_augmentation(const GrayImage& image, const AugmentDraw& draw) {
  GrayImage out = draw.flip ? flip_horizontal(image) : image;
  if (draw.angle_degrees == 0.0 && draw.shift_rows == 0.0 && draw.shift_cols == 0.0) return out;

  const GrayImage src = out;
  const double theta = draw.angle_degrees * std::numbers::pi / 180.0;
  const double cos_t = std::cos(theta), sin_t = std::sin(theta);
  const double cy = (static_cast<double>(src.rows()) - 1.0) / 2.0;
  const double cx = (static_cast<double>(src.cols()) - 1.0) / 2.0;
  const double ty = draw.shift_rows * static_cast<double>(src.rows());
  const double tx = draw.shift_cols * static_cast<double>(src.cols());
  for (std::size_t r = 0; r < src.rows(); ++r)
    for (std::size_t c = 0; c < src.cols(); ++c) {
      // Undo the translation, then the rotation about the centre.
      const double y = static_cast<double>(r) - ty - cy;
      const double x = static_cast<double>(c) - tx - cx;
      const double sy = cos_t * y - sin_t * x + cy;
      const double sx = sin_t * y + cos_t * x + cx;
      out.at(r, c) = sample_zero_fill(src, sy, sx);
    }
  return out;
}

GrayImage augment(const GrayImage& image, const AugmentPolicy& policy, std::uint64_t draw_index) {
  return apply_augmentation(image, draw_augmentation(policy, draw_index));
}

std::vector<double> tta_average(const ImageForward& model, const GrayImage& image,
                                const AugmentPolicy& policy, std::size_t n) {
  if (n == 0) throw Error("test-time augmentation needs at least one draw");
  std::vector<double> mean;
  for (std::size_t i = 0; i < n; ++i) {
    const auto pred = model(augment(image, policy, i));
    if (mean.empty()) mean.assign(pred.size(), 0.0);
    if (pred.size() != mean.size()) throw ShapeError("model output size changed across draws");
    for (std::size_t k = 0; k < pred.size(); ++k) mean[k] += pred[k];
  }
  for (auto& v : mean) v /= static_cast<double>(n);
  return mean;
}

}  // namespace prognosis
