#pragma once

// Differentiable operators used by the lattice CNNs.
//
// Spatial ops take [B, C, H, W] or [C, H, W] (treated as B = 1; the output
// keeps the input rank).

#include <cmath>
#include <cstddef>
#include <memory>
#include <random>
#include <vector>

#include <Eigen/Core>

#include "holstein/tensor.hpp"

namespace holstein::ad {

namespace detail {

struct Dims4 {
  int B, C, H, W;
  std::size_t plane() const { return static_cast<std::size_t>(H) * W; }
};

template <typename T>
Dims4 spatial_dims(const Tensor<T>& x, const char* op) {
  if (x.rank() == 4) return {x.dim(0), x.dim(1), x.dim(2), x.dim(3)};
  if (x.rank() == 3) return {1, x.dim(0), x.dim(1), x.dim(2)};
  throw InvalidArgument(std::string(op) + ": expected [B,C,H,W] or [C,H,W], got " + shape_str(x.shape()));
}

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapRow = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapRow = Eigen::Map<const RowMat<T>>;

inline int wrap(int i, int n) { return (i % n + n) % n; }

// col[(c*k + di)*k + dj, h*W + w] = x[c, h + di - r, w + dj - r] (indices mod H, W)
template <typename T>
void im2col_circular(const T* x, int C, int H, int W, int k, T* col) {
  const int r = k / 2;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c)
    for (int di = 0; di < k; ++di)
      for (int dj = 0; dj < k; ++dj) {
        T* row = col + (static_cast<std::size_t>(c * k + di) * k + dj) * plane;
        const T* xc = x + c * plane;
        for (int h = 0; h < H; ++h) {
          const int hs = wrap(h + di - r, H);
          const T* src = xc + static_cast<std::size_t>(hs) * W;
          T* dst = row + static_cast<std::size_t>(h) * W;
          for (int w = 0; w < W; ++w) dst[w] = src[wrap(w + dj - r, W)];
        }
      }
}

template <typename T>
void col2im_circular_add(const T* col, int C, int H, int W, int k, T* dx) {
  const int r = k / 2;
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  for (int c = 0; c < C; ++c)
    for (int di = 0; di < k; ++di)
      for (int dj = 0; dj < k; ++dj) {
        const T* row = col + (static_cast<std::size_t>(c * k + di) * k + dj) * plane;
        T* xc = dx + c * plane;
        for (int h = 0; h < H; ++h) {
          const int hs = wrap(h + di - r, H);
          T* dst = xc + static_cast<std::size_t>(hs) * W;
          const T* src = row + static_cast<std::size_t>(h) * W;
          for (int w = 0; w < W; ++w) dst[wrap(w + dj - r, W)] += src[w];
        }
      }
}

}  // namespace detail

/// Cross-correlation with periodic (circular) padding; spatial size preserved.
/// kernels: [C_out, C_in, k, k] with k odd; bias: [C_out].
template <typename T>
Tensor<T> conv2d_circular(const Tensor<T>& input, const Tensor<T>& kernels, const Tensor<T>& bias) {
  const auto d = detail::spatial_dims(input, "conv2d_circular");
  if (kernels.rank() != 4 || kernels.dim(1) != d.C || kernels.dim(2) != kernels.dim(3))
    throw InvalidArgument("conv2d_circular: kernel shape " + shape_str(kernels.shape()) +
                          " incompatible with input " + shape_str(input.shape()));
  const int Cout = kernels.dim(0);
  const int k = kernels.dim(2);
  if (k % 2 == 0) throw InvalidArgument("conv2d_circular: kernel size must be odd");
  if (bias.rank() != 1 || bias.dim(0) != Cout) throw InvalidArgument("conv2d_circular: bias shape mismatch");
  if (d.H < 1 || d.W < 1) throw InvalidArgument("conv2d_circular: empty spatial extent");

  const std::size_t plane = d.plane();
  const int patch = d.C * k * k;
  std::vector<T> out(static_cast<std::size_t>(d.B) * Cout * plane);
  std::vector<T> col(static_cast<std::size_t>(patch) * plane);
  detail::CMapRow<T> Wm(kernels.data(), Cout, patch);
  Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, 1>> bvec(bias.data(), Cout);
  for (int b = 0; b < d.B; ++b) {
    detail::im2col_circular(input.data() + static_cast<std::size_t>(b) * d.C * plane, d.C, d.H, d.W, k, col.data());
    detail::MapRow<T> Y(out.data() + static_cast<std::size_t>(b) * Cout * plane, Cout, plane);
    Y.noalias() = Wm * detail::CMapRow<T>(col.data(), patch, plane);
    Y.colwise() += bvec;
  }

  Shape shape = input.rank() == 4 ? Shape{d.B, Cout, d.H, d.W} : Shape{Cout, d.H, d.W};
  return detail::make_result<T>(
      std::move(shape), std::move(out), {input, kernels, bias}, "conv2d_circular",
      [d, Cout, k, patch, plane](Node<T>& self) {
        Node<T>& x = *self.parents[0];
        Node<T>& wn = *self.parents[1];
        Node<T>& bn = *self.parents[2];
        std::vector<T> col(static_cast<std::size_t>(patch) * plane);
        std::vector<T> dcol(static_cast<std::size_t>(patch) * plane);
        detail::CMapRow<T> Wm(wn.value.data(), Cout, patch);
        for (int b = 0; b < d.B; ++b) {
          detail::CMapRow<T> dY(self.grad.data() + static_cast<std::size_t>(b) * Cout * plane, Cout, plane);
          if (bn.requires_grad) {
            Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, 1>> db(bn.grad.data(), Cout);
            db += dY.rowwise().sum();
          }
          if (wn.requires_grad) {
            detail::im2col_circular(x.value.data() + static_cast<std::size_t>(b) * d.C * plane, d.C, d.H, d.W, k,
                                    col.data());
            detail::MapRow<T> dW(wn.grad.data(), Cout, patch);
            dW.noalias() += dY * detail::CMapRow<T>(col.data(), patch, plane).transpose();
          }
          if (x.requires_grad) {
            detail::MapRow<T> dC(dcol.data(), patch, plane);
            dC.noalias() = Wm.transpose() * dY;
            detail::col2im_circular_add(dcol.data(), d.C, d.H, d.W, k,
                                        x.grad.data() + static_cast<std::size_t>(b) * d.C * plane);
          }
        }
      });
}

/// Normalizes the channel vector at every spatial location, then applies a
/// per-channel affine map.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& input, const Tensor<T>& gain, const Tensor<T>& shift, T eps = T(1e-5)) {
  const auto d = detail::spatial_dims(input, "layer_norm");
  if (d.C < 1) throw InvalidArgument("layer_norm: need at least one channel");
  if (gain.numel() != static_cast<std::size_t>(d.C) || shift.numel() != static_cast<std::size_t>(d.C))
    throw InvalidArgument("layer_norm: affine parameters must have one entry per channel");
  const std::size_t plane = d.plane();
  const std::size_t total = static_cast<std::size_t>(d.B) * d.C * plane;
  std::vector<T> out(total);
  auto xhat = std::make_shared<std::vector<T>>(total);
  auto rstd = std::make_shared<std::vector<T>>(static_cast<std::size_t>(d.B) * plane);
  const T* x = input.data();
  const T* g = gain.data();
  const T* s = shift.data();
  for (int b = 0; b < d.B; ++b) {
    const std::size_t base = static_cast<std::size_t>(b) * d.C * plane;
    for (std::size_t p = 0; p < plane; ++p) {
      T mean = 0;
      for (int c = 0; c < d.C; ++c) mean += x[base + c * plane + p];
      mean /= d.C;
      T var = 0;
      for (int c = 0; c < d.C; ++c) {
        const T dev = x[base + c * plane + p] - mean;
        var += dev * dev;
      }
      var /= d.C;
      const T inv = T(1) / std::sqrt(var + eps);
      (*rstd)[b * plane + p] = inv;
      for (int c = 0; c < d.C; ++c) {
        const std::size_t i = base + c * plane + p;
        (*xhat)[i] = (x[i] - mean) * inv;
        out[i] = g[c] * (*xhat)[i] + s[c];
      }
    }
  }
  return detail::make_result<T>(
      input.shape(), std::move(out), {input, gain, shift}, "layer_norm", [d, plane, xhat, rstd](Node<T>& self) {
        Node<T>& xn = *self.parents[0];
        Node<T>& gn = *self.parents[1];
        Node<T>& sn = *self.parents[2];
        const T* dy = self.grad.data();
        const T* g = gn.value.data();
        std::vector<T> dxh(d.C);
        for (int b = 0; b < d.B; ++b) {
          const std::size_t base = static_cast<std::size_t>(b) * d.C * plane;
          for (std::size_t p = 0; p < plane; ++p) {
            T mean_dxh = 0, mean_dxh_xh = 0;
            for (int c = 0; c < d.C; ++c) {
              const std::size_t i = base + c * plane + p;
              if (gn.requires_grad) gn.grad[c] += dy[i] * (*xhat)[i];
              if (sn.requires_grad) sn.grad[c] += dy[i];
              dxh[c] = dy[i] * g[c];
              mean_dxh += dxh[c];
              mean_dxh_xh += dxh[c] * (*xhat)[i];
            }
            if (!xn.requires_grad) continue;
            mean_dxh /= d.C;
            mean_dxh_xh /= d.C;
            const T inv = (*rstd)[b * plane + p];
            for (int c = 0; c < d.C; ++c) {
              const std::size_t i = base + c * plane + p;
              xn.grad[i] += inv * (dxh[c] - mean_dxh - (*xhat)[i] * mean_dxh_xh);
            }
          }
        }
      });
}

enum class Mode { train, eval };

/// Zeroes whole channels with probability p in train mode and scales the
/// survivors by 1/(1-p). Identity in eval mode.
template <typename T, typename Rng>
Tensor<T> channel_dropout(const Tensor<T>& input, double p, Mode mode, Rng& rng) {
  if (!(p >= 0.0 && p < 1.0)) throw InvalidArgument("channel_dropout: p must lie in [0, 1)");
  if (mode == Mode::eval || p == 0.0) return input;
  const auto d = detail::spatial_dims(input, "channel_dropout");
  const std::size_t plane = d.plane();
  auto mask = std::make_shared<std::vector<T>>(static_cast<std::size_t>(d.B) * d.C);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const T keep_scale = T(1.0 / (1.0 - p));
  for (auto& m : *mask) m = u(rng) < p ? T(0) : keep_scale;
  std::vector<T> out(input.numel());
  const T* x = input.data();
  for (std::size_t bc = 0; bc < mask->size(); ++bc)
    for (std::size_t q = 0; q < plane; ++q) out[bc * plane + q] = x[bc * plane + q] * (*mask)[bc];
  return detail::make_result<T>(input.shape(), std::move(out), {input}, "channel_dropout",
                                [mask, plane](Node<T>& self) {
                                  Node<T>& xn = *self.parents[0];
                                  for (std::size_t bc = 0; bc < mask->size(); ++bc)
                                    for (std::size_t q = 0; q < plane; ++q)
                                      xn.grad[bc * plane + q] += self.grad[bc * plane + q] * (*mask)[bc];
                                });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& input) {
  std::vector<T> out(input.numel());
  const T* x = input.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(x[i]);
  return detail::make_result<T>(input.shape(), std::move(out), {input}, "tanh", [](Node<T>& self) {
    Node<T>& xn = *self.parents[0];
    for (std::size_t i = 0; i < self.value.size(); ++i)
      xn.grad[i] += self.grad[i] * (T(1) - self.value[i] * self.value[i]);
  });
}

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw InvalidArgument("add: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + b.data()[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, "add", [](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad)
        for (std::size_t i = 0; i < self.grad.size(); ++i) p->grad[i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape())
    throw InvalidArgument("mul: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * b.data()[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a, b}, "mul", [](Node<T>& self) {
    Node<T>& an = *self.parents[0];
    Node<T>& bn = *self.parents[1];
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      if (an.requires_grad) an.grad[i] += self.grad[i] * bn.value[i];
      if (bn.requires_grad) bn.grad[i] += self.grad[i] * an.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * factor;
  return detail::make_result<T>(a.shape(), std::move(out), {a}, "scale", [factor](Node<T>& self) {
    Node<T>& an = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i] * factor;
  });
}

/// Elementwise product with a constant pattern of shape [C, H, W] repeated
/// over the batch axis.
template <typename T>
Tensor<T> mul_pattern(const Tensor<T>& a, std::shared_ptr<const std::vector<T>> pattern) {
  const std::size_t n = pattern->size();
  if (n == 0 || a.numel() % n != 0) throw InvalidArgument("mul_pattern: pattern does not tile the input");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] * (*pattern)[i % n];
  return detail::make_result<T>(a.shape(), std::move(out), {a}, "mul_pattern", [pattern, n](Node<T>& self) {
    Node<T>& an = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i] * (*pattern)[i % n];
  });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T total = 0;
  for (T v : a.values()) total += v;
  return detail::make_result<T>({1}, {total}, {a}, "sum", [](Node<T>& self) {
    Node<T>& an = *self.parents[0];
    for (auto& g : an.grad) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> add_scalars(const std::vector<Tensor<T>>& terms) {
  if (terms.empty()) throw InvalidArgument("add_scalars: no terms");
  T total = 0;
  for (const auto& t : terms) total += t.item();
  return detail::make_result<T>({1}, {total}, terms, "add_scalars", [](Node<T>& self) {
    for (auto& p : self.parents)
      if (p->requires_grad) p->grad[0] += self.grad[0];
  });
}

/// Sum over samples and groups of unsquared Euclidean distances:
///   sum_b sum_g || target[b, g] - pred[b, g] ||_2
/// `group_of` assigns each element of one sample ([C, H, W]) to a group in
/// [0, n_groups) or to -1 (ignored). The target carries no gradient.
/// The subgradient at zero distance is taken as zero.
template <typename T>
Tensor<T> grouped_l2_distance(const Tensor<T>& pred, const std::vector<T>& target,
                              std::shared_ptr<const std::vector<int>> group_of, int n_groups) {
  if (target.size() != pred.numel()) throw InvalidArgument("grouped_l2_distance: target size mismatch");
  const std::size_t per_sample = group_of->size();
  if (per_sample == 0 || pred.numel() % per_sample != 0)
    throw InvalidArgument("grouped_l2_distance: group map does not tile the prediction");
  const std::size_t B = pred.numel() / per_sample;
  auto norms = std::make_shared<std::vector<T>>(B * n_groups, T(0));
  const T* p = pred.data();
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t e = 0; e < per_sample; ++e) {
      const int g = (*group_of)[e];
      if (g < 0) continue;
      const T diff = target[b * per_sample + e] - p[b * per_sample + e];
      (*norms)[b * n_groups + g] += diff * diff;
    }
  T total = 0;
  for (auto& v : *norms) {
    v = std::sqrt(v);
    total += v;
  }
  auto tgt = std::make_shared<const std::vector<T>>(target);
  return detail::make_result<T>(
      {1}, {total}, {pred}, "grouped_l2_distance", [norms, tgt, group_of, n_groups, per_sample, B](Node<T>& self) {
        Node<T>& pn = *self.parents[0];
        const T up = self.grad[0];
        for (std::size_t b = 0; b < B; ++b)
          for (std::size_t e = 0; e < per_sample; ++e) {
            const int g = (*group_of)[e];
            if (g < 0) continue;
            const T nrm = (*norms)[b * n_groups + g];
            if (nrm == T(0)) continue;
            const std::size_t i = b * per_sample + e;
            pn.grad[i] += up * (pn.value[i] - (*tgt)[i]) / nrm;
          }
      });
}

/// Adds a constant (no-gradient) array to a tensor.
template <typename T>
Tensor<T> add_constant(const Tensor<T>& a, const std::vector<T>& c) {
  if (c.size() != a.numel()) throw InvalidArgument("add_constant: size mismatch");
  std::vector<T> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.data()[i] + c[i];
  return detail::make_result<T>(a.shape(), std::move(out), {a}, "add_constant", [](Node<T>& self) {
    Node<T>& an = *self.parents[0];
    for (std::size_t i = 0; i < self.grad.size(); ++i) an.grad[i] += self.grad[i];
  });
}

}  // namespace holstein::ad
