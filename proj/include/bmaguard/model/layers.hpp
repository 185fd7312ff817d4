// Forward/backward primitives for the classifier. Activations are stored
// feature-major: one column per pixel or per token.

#ifndef BMAGUARD_MODEL_LAYERS_HPP_
#define BMAGUARD_MODEL_LAYERS_HPP_

#include <cmath>
#include <random>

#include "bmaguard/model/params.hpp"

namespace bmaguard::layers {

struct ConvGeometry {
  int channels, height, width;
  int out_height() const noexcept { return (height - 1) / 2 + 1; }
  int out_width() const noexcept { return (width - 1) / 2 + 1; }
};

/// 3x3, stride 2, zero padding 1. Input (C, H*W) -> patches (C*9, Ho*Wo).
template <typename S>
Mat<S> im2col(const Mat<S>& x, const ConvGeometry& g) {
  const int ho = g.out_height(), wo = g.out_width();
  Mat<S> cols = Mat<S>::Zero(static_cast<Eigen::Index>(g.channels) * 9, static_cast<Eigen::Index>(ho) * wo);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const Eigen::Index o = static_cast<Eigen::Index>(oy) * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = 2 * oy - 1 + ky;
        if (iy < 0 || iy >= g.height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = 2 * ox - 1 + kx;
          if (ix < 0 || ix >= g.width) continue;
          const Eigen::Index src = static_cast<Eigen::Index>(iy) * g.width + ix;
          for (int c = 0; c < g.channels; ++c) cols(c * 9 + ky * 3 + kx, o) = x(c, src);
        }
      }
    }
  }
  return cols;
}

/// Adjoint of im2col.
template <typename S>
Mat<S> col2im(const Mat<S>& cols, const ConvGeometry& g) {
  const int ho = g.out_height(), wo = g.out_width();
  Mat<S> x = Mat<S>::Zero(g.channels, static_cast<Eigen::Index>(g.height) * g.width);
  for (int oy = 0; oy < ho; ++oy) {
    for (int ox = 0; ox < wo; ++ox) {
      const Eigen::Index o = static_cast<Eigen::Index>(oy) * wo + ox;
      for (int ky = 0; ky < 3; ++ky) {
        const int iy = 2 * oy - 1 + ky;
        if (iy < 0 || iy >= g.height) continue;
        for (int kx = 0; kx < 3; ++kx) {
          const int ix = 2 * ox - 1 + kx;
          if (ix < 0 || ix >= g.width) continue;
          const Eigen::Index dst = static_cast<Eigen::Index>(iy) * g.width + ix;
          for (int c = 0; c < g.channels; ++c) x(c, dst) += cols(c * 9 + ky * 3 + kx, o);
        }
      }
    }
  }
  return x;
}

/// Per-column layer normalization state kept for the backward pass.
template <typename S>
struct LayerNormCache {
  Mat<S> xhat;
  Vec<S> inv_std;
};

inline constexpr double kLayerNormEps = 1e-5;

template <typename S>
Mat<S> layer_norm(const Mat<S>& x, const Mat<S>& gamma, const Mat<S>& beta, LayerNormCache<S>* cache) {
  const auto d = static_cast<S>(x.rows());
  const Eigen::Matrix<S, 1, Eigen::Dynamic> mean = x.colwise().sum() / d;
  Mat<S> centered = x.rowwise() - mean;
  const Eigen::Matrix<S, 1, Eigen::Dynamic> var = centered.array().square().colwise().sum() / d;
  const Vec<S> inv_std = (var.array() + static_cast<S>(kLayerNormEps)).rsqrt().transpose();
  Mat<S> xhat = centered * inv_std.asDiagonal();
  Mat<S> y = (xhat.array().colwise() * gamma.col(0).array()).colwise() + beta.col(0).array();
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = inv_std;
  }
  return y;
}

template <typename S>
Mat<S> layer_norm_backward(const Mat<S>& dy, const Mat<S>& gamma, const LayerNormCache<S>& cache, Mat<S>* dgamma,
                           Mat<S>* dbeta) {
  if (dgamma) dgamma->col(0) += (dy.array() * cache.xhat.array()).rowwise().sum().matrix();
  if (dbeta) dbeta->col(0) += dy.rowwise().sum();
  const auto d = static_cast<S>(dy.rows());
  const Mat<S> dxhat = dy.array().colwise() * gamma.col(0).array();
  const Eigen::Matrix<S, 1, Eigen::Dynamic> mean_dxhat = dxhat.colwise().sum() / d;
  const Eigen::Matrix<S, 1, Eigen::Dynamic> mean_dxhat_xhat =
      (dxhat.array() * cache.xhat.array()).colwise().sum().matrix() / d;
  Mat<S> dx = dxhat.rowwise() - mean_dxhat;
  dx -= cache.xhat * mean_dxhat_xhat.asDiagonal();
  return dx * cache.inv_std.asDiagonal();
}

/// tanh approximation of GELU.
template <typename S>
S gelu(S x) {
  const S k = static_cast<S>(0.7978845608028654);
  return static_cast<S>(0.5) * x * (1 + std::tanh(k * (x + static_cast<S>(0.044715) * x * x * x)));
}

template <typename S>
S gelu_grad(S x) {
  const S k = static_cast<S>(0.7978845608028654);
  const S t = std::tanh(k * (x + static_cast<S>(0.044715) * x * x * x));
  return static_cast<S>(0.5) * (1 + t) +
         static_cast<S>(0.5) * x * (1 - t * t) * k * (1 + static_cast<S>(3 * 0.044715) * x * x);
}

/// Row-wise softmax of a square score matrix.
template <typename S>
Mat<S> softmax_rows(const Mat<S>& scores) {
  Mat<S> p = scores.colwise() - scores.rowwise().maxCoeff();
  p = p.array().exp();
  return p.array().colwise() / p.rowwise().sum().array();
}

template <typename S>
Vec<S> softmax(const Vec<S>& logits) {
  Vec<S> e = (logits.array() - logits.maxCoeff()).exp();
  return e / e.sum();
}

/// Inverted dropout mask (entries 0 or 1/(1-p)); all ones when p == 0.
template <typename S>
Vec<S> dropout_mask(Eigen::Index n, double p, std::mt19937_64& rng) {
  Vec<S> mask = Vec<S>::Ones(n);
  if (p <= 0.0) return mask;
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const S keep = static_cast<S>(1.0 / (1.0 - p));
  for (Eigen::Index i = 0; i < n; ++i) mask(i) = u(rng) < p ? S(0) : keep;
  return mask;
}

} // namespace bmaguard::layers

#endif
