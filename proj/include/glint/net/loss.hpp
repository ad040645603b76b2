// Training loss: L1 plus structural dissimilarity, per patch, with the
// analytic gradient with respect to the prediction.
#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "glint/core.hpp"
#include "glint/net/generator.hpp"

namespace glint {

inline constexpr int kSsimWindow = 8;
inline constexpr int kSsimStride = 4;

/// A patch occupying `width * height` consecutive batch columns, pixels
/// in row-major order.
struct PatchExtent {
  Eigen::Index begin = 0;
  int width = 0;
  int height = 0;

  Eigen::Index count() const { return static_cast<Eigen::Index>(width) * height; }
  ColumnRange columns() const { return {begin, count()}; }
};

struct PatchLoss {
  double l1 = 0;
  double dssim = 0;
  double total() const { return l1 + dssim; }
};

struct LossValue {
  double total = 0;
  double l1 = 0;
  double dssim = 0;
  std::vector<PatchLoss> per_patch;
};

/// Running maximum of target luminance that sets the SSIM constants.
class SsimRange {
 public:
  double max_val() const { return max_; }

  template <typename Derived>
  void observe(const Eigen::MatrixBase<Derived>& target) {
    for (Eigen::Index i = 0; i < target.cols(); ++i) {
      const double y = 0.2126 * target(0, i) + 0.7152 * target(1, i) + 0.0722 * target(2, i);
      if (std::isfinite(y)) max_ = std::max(max_, y);
    }
  }

  void set(double v) { max_ = std::max(1.0, v); }

 private:
  double max_ = 1.0;
};

/// SSIM of one window of one channel plus its gradient factors.
struct SsimWindow {
  double ssim = 0;
  // dS/dx_i = ga + gx * (x_i - mu_x) + gy * (y_i - mu_y)
  double ga = 0, gx = 0, gy = 0;
  double mu_x = 0, mu_y = 0;
};

/// `x` is the prediction, `y` the target; both are read at
/// data[3 * (row * stride_px + col) + channel].
template <typename Scalar>
SsimWindow ssim_window(const Scalar* x, const Scalar* y, int stride_px, int x0, int y0, int channel, double c1,
                       double c2) {
  constexpr double n = kSsimWindow * kSsimWindow;
  double sx = 0, sy = 0;
  for (int r = 0; r < kSsimWindow; ++r)
    for (int c = 0; c < kSsimWindow; ++c) {
      const std::size_t idx = 3 * (static_cast<std::size_t>(y0 + r) * stride_px + x0 + c) + channel;
      sx += static_cast<double>(x[idx]);
      sy += static_cast<double>(y[idx]);
    }
  SsimWindow w;
  w.mu_x = sx / n;
  w.mu_y = sy / n;
  double vxx = 0, vyy = 0, vxy = 0;
  for (int r = 0; r < kSsimWindow; ++r)
    for (int c = 0; c < kSsimWindow; ++c) {
      const std::size_t idx = 3 * (static_cast<std::size_t>(y0 + r) * stride_px + x0 + c) + channel;
      const double dx = static_cast<double>(x[idx]) - w.mu_x;
      const double dy = static_cast<double>(y[idx]) - w.mu_y;
      vxx += dx * dx;
      vyy += dy * dy;
      vxy += dx * dy;
    }
  vxx /= n;
  vyy /= n;
  vxy /= n;
  const double a1 = 2 * w.mu_x * w.mu_y + c1;
  const double a2 = 2 * vxy + c2;
  const double b1 = w.mu_x * w.mu_x + w.mu_y * w.mu_y + c1;
  const double b2 = vxx + vyy + c2;
  w.ssim = (a1 * a2) / (b1 * b2);
  // d(a1)/dx_i = 2 mu_y / n, d(a2)/dx_i = 2 (y_i - mu_y) / n,
  // d(b1)/dx_i = 2 mu_x / n, d(b2)/dx_i = 2 (x_i - mu_x) / n.
  const double bb = b1 * b2;
  w.ga = (2 * w.mu_y / n * a2 * bb - a1 * a2 * (2 * w.mu_x / n) * b2) / (bb * bb);
  w.gy = (a1 * (2 / n) * bb) / (bb * bb);
  w.gx = -(a1 * a2 * b1 * (2 / n)) / (bb * bb);
  return w;
}

/// Loss of one patch. When `grad` is given it receives d(l1 + dssim)/d(pred)
/// in the same layout as `pred`.
template <typename Scalar>
PatchLoss patch_loss(const Scalar* pred, const Scalar* target, int width, int height, double max_val,
                     Scalar* grad = nullptr) {
  const std::size_t values = static_cast<std::size_t>(width) * height * 3;
  for (std::size_t i = 0; i < values; ++i) {
    if (!std::isfinite(static_cast<double>(target[i]))) throw RangeError("loss: target contains a non-finite value");
    if (!std::isfinite(static_cast<double>(pred[i])))
      throw DivergenceError("loss: prediction contains a non-finite value");
  }
  PatchLoss out;
  const double inv_values = 1.0 / static_cast<double>(values);
  for (std::size_t i = 0; i < values; ++i) {
    const double d = static_cast<double>(pred[i]) - static_cast<double>(target[i]);
    out.l1 += std::abs(d);
    if (grad) grad[i] = static_cast<Scalar>(d > 0 ? inv_values : (d < 0 ? -inv_values : 0.0));
  }
  out.l1 *= inv_values;

  if (width < kSsimWindow || height < kSsimWindow) return out;
  const double c1 = std::pow(0.01 * max_val, 2);
  const double c2 = std::pow(0.03 * max_val, 2);
  const int nx = (width - kSsimWindow) / kSsimStride + 1;
  const int ny = (height - kSsimWindow) / kSsimStride + 1;
  const double windows = static_cast<double>(nx) * ny * 3;
  // d(dssim)/dS for each window.
  const double scale = -0.5 / windows;
  double ssim_sum = 0;
  for (int c = 0; c < 3; ++c)
    for (int wy = 0; wy < ny; ++wy)
      for (int wx = 0; wx < nx; ++wx) {
        const int x0 = wx * kSsimStride, y0 = wy * kSsimStride;
        const SsimWindow w = ssim_window(pred, target, width, x0, y0, c, c1, c2);
        ssim_sum += w.ssim;
        if (!grad) continue;
        for (int r = 0; r < kSsimWindow; ++r)
          for (int k = 0; k < kSsimWindow; ++k) {
            const std::size_t idx = 3 * (static_cast<std::size_t>(y0 + r) * width + x0 + k) + c;
            const double dsdx = w.ga + w.gx * (static_cast<double>(pred[idx]) - w.mu_x) +
                                w.gy * (static_cast<double>(target[idx]) - w.mu_y);
            grad[idx] += static_cast<Scalar>(scale * dsdx);
          }
      }
  out.dssim = std::clamp((1.0 - ssim_sum / windows) * 0.5, 0.0, 1.0);
  return out;
}

/// Mean of per-patch losses over a batch laid out as 3 x N matrices.
/// `d_patch`, when given, receives each patch's gradient of its own loss
/// (not divided by the patch count) in the columns that patch occupies.
template <typename Scalar>
LossValue batch_loss(const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& pred,
                     const Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>& target,
                     std::span<const PatchExtent> patches, double max_val,
                     Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>* d_patch = nullptr) {
  if (pred.rows() != 3 || target.rows() != 3 || pred.cols() != target.cols())
    throw DimensionError("loss: prediction and target shapes differ");
  if (d_patch) d_patch->setZero(3, pred.cols());
  LossValue out;
  out.per_patch.reserve(patches.size());
  for (const auto& p : patches) {
    if (p.begin < 0 || p.begin + p.count() > pred.cols()) throw DimensionError("loss: patch extends past the batch");
    const std::size_t off = static_cast<std::size_t>(p.begin) * 3;
    const PatchLoss l = patch_loss(pred.data() + off, target.data() + off, p.width, p.height, max_val,
                                   d_patch ? d_patch->data() + off : nullptr);
    out.per_patch.push_back(l);
    out.l1 += l.l1;
    out.dssim += l.dssim;
  }
  if (!patches.empty()) {
    out.l1 /= static_cast<double>(patches.size());
    out.dssim /= static_cast<double>(patches.size());
  }
  out.total = out.l1 + out.dssim;
  return out;
}

}  // namespace glint
