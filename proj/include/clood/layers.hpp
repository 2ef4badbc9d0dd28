#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cstdint>
#include <vector>

#include "clood/tensor.hpp"

// Layer kernels shared by the classifier network and the probe MLP.
// Convolutions are 3x3, stride 1, zero padding 1, lowered to a matrix
// product through a per-image patch matrix.
namespace clood::nn::ops {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using CMapMat = Eigen::Map<const RowMat<T>>;
template <typename T>
using CMapRow = Eigen::Map<const Eigen::Matrix<T, 1, Eigen::Dynamic>>;

// cols has shape (B*H*W, 9*C); column index = (ky*3 + kx)*C + c.
template <typename T>
void im2col3x3(const T* in, int B, int H, int W, int C, T* cols) {
  const std::size_t row_len = 9 * static_cast<std::size_t>(C);
  for (int b = 0; b < B; ++b) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        T* dst = cols + ((static_cast<std::size_t>(b) * H + y) * W + x) * row_len;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = x + kx - 1;
            T* d = dst + (ky * 3 + kx) * C;
            if (sy < 0 || sy >= H || sx < 0 || sx >= W) {
              for (int c = 0; c < C; ++c) d[c] = T(0);
            } else {
              const T* s = in + ((static_cast<std::size_t>(b) * H + sy) * W + sx) * C;
              for (int c = 0; c < C; ++c) d[c] = s[c];
            }
          }
        }
      }
    }
  }
}

// Adjoint of im2col3x3; accumulates into din, which must be zeroed.
template <typename T>
void col2im3x3(const T* cols, int B, int H, int W, int C, T* din) {
  const std::size_t row_len = 9 * static_cast<std::size_t>(C);
  for (int b = 0; b < B; ++b) {
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        const T* src = cols + ((static_cast<std::size_t>(b) * H + y) * W + x) * row_len;
        for (int ky = 0; ky < 3; ++ky) {
          const int sy = y + ky - 1;
          if (sy < 0 || sy >= H) continue;
          for (int kx = 0; kx < 3; ++kx) {
            const int sx = x + kx - 1;
            if (sx < 0 || sx >= W) continue;
            const T* s = src + (ky * 3 + kx) * C;
            T* d = din + ((static_cast<std::size_t>(b) * H + sy) * W + sx) * C;
            for (int c = 0; c < C; ++c) d[c] += s[c];
          }
        }
      }
    }
  }
}

// Row-order accumulation. Eigen's colwise().sum() on a mapped buffer picks its
// reduction order from the pointer alignment, which breaks run-to-run
// reproducibility.
template <typename T>
void add_column_sums(const T* m, Eigen::Index rows, int cols, T* acc) {
  for (Eigen::Index r = 0; r < rows; ++r) {
    const T* row = m + r * cols;
    for (int c = 0; c < cols; ++c) acc[c] += row[c];
  }
}

// out = patches * w + bias, w is (9*Cin, Cout), in is (B,H,W,Cin). Works one
// image at a time so the patch matrix stays cache resident.
template <typename T>
void conv3x3_forward(const Tensor<T>& in, const T* w, const T* bias, int cout, Tensor<T>& out) {
  const int B = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
  const Eigen::Index rows = static_cast<Eigen::Index>(H) * W;
  std::vector<T> cols(static_cast<std::size_t>(rows) * 9 * C);
  out = Tensor<T>({B, H, W, cout});
  CMapMat<T> wm(w, 9 * C, cout);
  for (int b = 0; b < B; ++b) {
    im2col3x3(in.ptr() + static_cast<std::size_t>(b) * rows * C, 1, H, W, C, cols.data());
    MapMat<T> o(out.ptr() + static_cast<std::size_t>(b) * rows * cout, rows, cout);
    o.noalias() = CMapMat<T>(cols.data(), rows, 9 * C) * wm;
    o.rowwise() += CMapRow<T>(bias, cout);
  }
}

// Overwrites dw and dbias. din may be null when the input gradient is not
// needed.
template <typename T>
void conv3x3_backward(const Tensor<T>& dout, const Tensor<T>& in, const T* w, T* dw, T* dbias,
                      Tensor<T>* din) {
  const int B = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
  const int cout = dout.dim(3);
  const Eigen::Index rows = static_cast<Eigen::Index>(H) * W;
  std::vector<T> cols(static_cast<std::size_t>(rows) * 9 * C);
  RowMat<T> dcols;
  MapMat<T> dwm(dw, 9 * C, cout);
  CMapMat<T> wm(w, 9 * C, cout);
  Eigen::Map<Eigen::Matrix<T, 1, Eigen::Dynamic>> dbm(dbias, cout);
  dwm.setZero();
  dbm.setZero();
  if (din) {
    *din = Tensor<T>(in.shape);
    dcols.resize(rows, 9 * C);
  }
  for (int b = 0; b < B; ++b) {
    im2col3x3(in.ptr() + static_cast<std::size_t>(b) * rows * C, 1, H, W, C, cols.data());
    CMapMat<T> g(dout.ptr() + static_cast<std::size_t>(b) * rows * cout, rows, cout);
    dwm.noalias() += CMapMat<T>(cols.data(), rows, 9 * C).transpose() * g;
    add_column_sums(g.data(), rows, cout, dbias);
    if (din) {
      dcols.noalias() = g * wm.transpose();
      col2im3x3(dcols.data(), 1, H, W, C, din->ptr() + static_cast<std::size_t>(b) * rows * C);
    }
  }
}

template <typename T>
void relu_inplace(Tensor<T>& t) {
  for (T& v : t.data) v = v > T(0) ? v : T(0);
}

// Masks grad where the post-activation output is zero.
template <typename T>
void relu_backward_inplace(const Tensor<T>& out, Tensor<T>& grad) {
  for (std::size_t i = 0; i < grad.data.size(); ++i) {
    if (!(out.data[i] > T(0))) grad.data[i] = T(0);
  }
}

// 2x2 max pooling, stride 2. argmax stores the flat input index per output.
// Ties resolve to the first element in (dy, dx) scan order.
template <typename T>
void maxpool2_forward(const Tensor<T>& in, Tensor<T>& out, std::vector<std::int32_t>& argmax) {
  const int B = in.dim(0), H = in.dim(1), W = in.dim(2), C = in.dim(3);
  const int Ho = H / 2, Wo = W / 2;
  out = Tensor<T>({B, Ho, Wo, C});
  argmax.resize(out.size());
  for (int b = 0; b < B; ++b) {
    for (int y = 0; y < Ho; ++y) {
      for (int x = 0; x < Wo; ++x) {
        for (int c = 0; c < C; ++c) {
          std::int32_t best = static_cast<std::int32_t>(((b * H + 2 * y) * W + 2 * x) * C + c);
          T bv = in.data[best];
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              const auto idx = static_cast<std::int32_t>(((b * H + 2 * y + dy) * W + 2 * x + dx) * C + c);
              if (in.data[idx] > bv) {
                bv = in.data[idx];
                best = idx;
              }
            }
          }
          const std::size_t o = ((static_cast<std::size_t>(b) * Ho + y) * Wo + x) * C + c;
          out.data[o] = bv;
          argmax[o] = best;
        }
      }
    }
  }
}

template <typename T>
void maxpool2_backward(const Tensor<T>& dout, const std::vector<std::int32_t>& argmax,
                       const std::vector<int>& in_shape, Tensor<T>& din) {
  din = Tensor<T>(in_shape);
  for (std::size_t i = 0; i < dout.data.size(); ++i) din.data[argmax[i]] += dout.data[i];
}

// out (B, O) = in (B, I) * w (I, O) + bias.
template <typename T>
void dense_forward(const T* in, int B, int I, const T* w, const T* bias, int O, Tensor<T>& out) {
  out = Tensor<T>({B, O});
  MapMat<T> o(out.ptr(), B, O);
  o.noalias() = CMapMat<T>(in, B, I) * CMapMat<T>(w, I, O);
  o.rowwise() += CMapRow<T>(bias, O);
}

template <typename T>
void dense_backward(const Tensor<T>& dout, const T* in, int I, const T* w, T* dw, T* dbias, T* din) {
  const int B = dout.dim(0), O = dout.dim(1);
  CMapMat<T> g(dout.ptr(), B, O);
  MapMat<T>(dw, I, O).noalias() = CMapMat<T>(in, B, I).transpose() * g;
  std::fill(dbias, dbias + O, T(0));
  add_column_sums(dout.ptr(), B, O, dbias);
  if (din) MapMat<T>(din, B, I).noalias() = g * CMapMat<T>(w, I, O).transpose();
}

}  // namespace clood::nn::ops
