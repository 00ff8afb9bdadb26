#pragma once
#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <vector>

#include "faultface/nn/layers.hpp"
#include "faultface/nn/ndarray.hpp"
#include "faultface/nn/params.hpp"

namespace faultface::nn {

enum class Mode { Train, Infer };

/// Per-layer values cached by a forward pass for the backward pass.
struct LayerCache {
  std::vector<double> aux;             // batchnorm: normalized input;
  std::vector<double> inv_std;         // batchnorm: 1/sqrt(var + eps) per channel
  std::vector<std::size_t> argmax;     // maxpool: flat input index of each output
};

struct Tape {
  Mode mode = Mode::Infer;
  std::vector<NdArray> acts;  // acts[0] input, acts[i+1] output of layer i
  std::vector<LayerCache> cache;
};

struct ForwardResult {
  NdArray output;
  Tape tape;
  /// Batchnorm running statistics after this pass (updated in Train mode);
  /// empty vectors for layers without state.
  std::vector<std::vector<NdArray>> state;
};

struct BackwardResult {
  GradSet grads;
  NdArray input_grad;
};

namespace detail {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MatMap = Eigen::Map<RowMat>;
using ConstMatMap = Eigen::Map<const RowMat>;

inline ConstMatMap as_mat(const double* p, std::size_t rows, std::size_t cols) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}
inline MatMap as_mat(double* p, std::size_t rows, std::size_t cols) {
  return {p, static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols)};
}

struct ConvGeom {
  std::size_t n, c, h, w, ho, wo, stride, pad_h, pad_w;
  std::size_t p() const { return ho * wo; }
  std::size_t k() const { return c * kTaps; }
};

inline ConvGeom conv_geom(const Shape& in, std::size_t stride) {
  return {in[0], in[1], in[2], in[3], conv_out_size(in[2], stride), conv_out_size(in[3], stride),
          stride, conv_pad_before(in[2], stride), conv_pad_before(in[3], stride)};
}

/// Samples per GEMM chunk: about kChunkColumns output positions, so each chunk's
/// working set stays in cache. Depends only on the layer geometry.
inline constexpr std::size_t kChunkColumns = 384;
inline std::size_t chunk_samples(std::size_t positions) {
  return std::max<std::size_t>(1, (kChunkColumns + positions - 1) / positions);
}

/// cols[(ci*9 + ky*3 + kx), j*P + oy*Wo + ox] = x[n0 + j, ci, oy*s + ky - pad, ox*s + kx - pad] for j < m
inline void im2col(const NdArray& x, const ConvGeom& g, std::size_t n0, std::size_t m, double* cols) {
  const std::size_t stride_cols = m * g.p();
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t ky = 0; ky < kKernel; ++ky)
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        double* row = cols + ((ci * kKernel + ky) * kKernel + kx) * stride_cols;
        for (std::size_t j = 0; j < m; ++j) {
          const double* src = x.ptr() + ((n0 + j) * g.c + ci) * g.h * g.w;
          double* dst = row + j * g.p();
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_h);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) {
              std::fill_n(dst + oy * g.wo, g.wo, 0.0);
              continue;
            }
            const double* srow = src + static_cast<std::size_t>(iy) * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_w);
              dst[oy * g.wo + ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(g.w)) ? 0.0 : srow[ix];
            }
          }
        }
      }
}

/// Adjoint of im2col: accumulates the columns of samples n0..n0+m back into dx.
inline void col2im_add(const double* cols, const ConvGeom& g, std::size_t n0, std::size_t m, double* dx) {
  const std::size_t stride_cols = m * g.p();
  for (std::size_t ci = 0; ci < g.c; ++ci)
    for (std::size_t ky = 0; ky < kKernel; ++ky)
      for (std::size_t kx = 0; kx < kKernel; ++kx) {
        const double* row = cols + ((ci * kKernel + ky) * kKernel + kx) * stride_cols;
        for (std::size_t j = 0; j < m; ++j) {
          double* dst = dx + ((n0 + j) * g.c + ci) * g.h * g.w;
          const double* src = row + j * g.p();
          for (std::size_t oy = 0; oy < g.ho; ++oy) {
            const auto iy = static_cast<std::ptrdiff_t>(oy * g.stride + ky) - static_cast<std::ptrdiff_t>(g.pad_h);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(g.h)) continue;
            double* drow = dst + static_cast<std::size_t>(iy) * g.w;
            for (std::size_t ox = 0; ox < g.wo; ++ox) {
              const auto ix = static_cast<std::ptrdiff_t>(ox * g.stride + kx) - static_cast<std::ptrdiff_t>(g.pad_w);
              if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(g.w)) drow[ix] += src[oy * g.wo + ox];
            }
          }
        }
      }
}

/// Samples n0..n0+m of [N, C, P] -> [C, m*P]
inline void channels_first(const double* x, std::size_t n0, std::size_t m, std::size_t c, std::size_t p, double* out) {
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t ci = 0; ci < c; ++ci) std::copy_n(x + ((n0 + j) * c + ci) * p, p, out + ci * m * p + j * p);
}

/// [C, m*P] -> samples n0..n0+m of [N, C, P]
inline void batch_first(const double* in, std::size_t n0, std::size_t m, std::size_t c, std::size_t p, double* out) {
  for (std::size_t j = 0; j < m; ++j)
    for (std::size_t ci = 0; ci < c; ++ci) std::copy_n(in + ci * m * p + j * p, p, out + ((n0 + j) * c + ci) * p);
}

/// Resizes a reused work matrix; no reallocation when the size is unchanged.
inline double* scratch(RowMat& m, std::size_t rows, std::size_t cols) {
  m.resize(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
  return m.data();
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

// ---- Conv ---------------------------------------------------------------
// Stride-1 convolutions with few output channels run as direct shifted-row sums: an
// im2col matrix would be as large as the whole multiply-add count.

inline constexpr std::size_t kDirectConvMaxOut = 4;

inline bool use_direct_conv(const Conv& spec) { return spec.stride == 1 && spec.out_ch <= kDirectConvMaxOut; }

/// Calls fn(oy, iy, ox_begin, ox_end, ix_offset) for every valid output row segment of tap (ky,kx).
template <class Fn>
inline void direct_rows(const ConvGeom& g, std::size_t ky, std::size_t kx, Fn&& fn) {
  const auto off_y = static_cast<std::ptrdiff_t>(ky) - static_cast<std::ptrdiff_t>(g.pad_h);
  const auto off_x = static_cast<std::ptrdiff_t>(kx) - static_cast<std::ptrdiff_t>(g.pad_w);
  const auto w = static_cast<std::ptrdiff_t>(g.w), h = static_cast<std::ptrdiff_t>(g.h);
  const std::ptrdiff_t x0 = std::max<std::ptrdiff_t>(0, -off_x);
  const std::ptrdiff_t x1 = std::min<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(g.wo), w - off_x);
  for (std::ptrdiff_t oy = 0; oy < static_cast<std::ptrdiff_t>(g.ho); ++oy) {
    const std::ptrdiff_t iy = oy + off_y;
    if (iy < 0 || iy >= h || x0 >= x1) continue;
    fn(static_cast<std::size_t>(oy), static_cast<std::size_t>(iy), static_cast<std::size_t>(x0),
       static_cast<std::size_t>(x1), off_x);
  }
}

inline NdArray conv_direct_forward(const Conv& spec, const LayerParams& lp, const NdArray& x, const ConvGeom& g) {
  const auto& w = lp.trainable[0];
  const auto& b = lp.trainable[1];
  NdArray out({g.n, spec.out_ch, g.ho, g.wo});
  for (std::size_t n = 0; n < g.n; ++n)
    for (std::size_t o = 0; o < spec.out_ch; ++o) {
      double* dst = out.ptr() + (n * spec.out_ch + o) * g.p();
      std::fill_n(dst, g.p(), b[o]);
      for (std::size_t i = 0; i < g.c; ++i) {
        const double* src = x.ptr() + (n * g.c + i) * g.h * g.w;
        for (std::size_t ky = 0; ky < kKernel; ++ky)
          for (std::size_t kx = 0; kx < kKernel; ++kx) {
            const double wv = w[((o * g.c + i) * kKernel + ky) * kKernel + kx];
            direct_rows(g, ky, kx, [&](std::size_t oy, std::size_t iy, std::size_t x0, std::size_t x1, std::ptrdiff_t off) {
              double* d = dst + oy * g.wo;
              const double* s = src + iy * g.w + off;
              for (std::size_t ox = x0; ox < x1; ++ox) d[ox] += wv * s[ox];
            });
          }
      }
    }
  return out;
}

inline NdArray conv_direct_backward(const Conv& spec, const LayerParams& lp, const NdArray& x, const NdArray& dy,
                                    const ConvGeom& g, std::vector<NdArray>& grads) {
  const auto& w = lp.trainable[0];
  auto& dw = grads[0];
  auto& db = grads[1];
  NdArray dx(x.shape, 0.0);
  std::vector<double> part(g.wo);  // per-column partial sums keep the inner loop vectorizable
  for (std::size_t o = 0; o < spec.out_ch; ++o) {
    double acc = 0.0;
    for (std::size_t n = 0; n < g.n; ++n) {
      const double* d = dy.ptr() + (n * spec.out_ch + o) * g.p();
      for (std::size_t q = 0; q < g.p(); ++q) acc += d[q];
    }
    db[o] = acc;
  }
  for (std::size_t o = 0; o < spec.out_ch; ++o)
    for (std::size_t i = 0; i < g.c; ++i)
      for (std::size_t ky = 0; ky < kKernel; ++ky)
        for (std::size_t kx = 0; kx < kKernel; ++kx) {
          const std::size_t widx = ((o * g.c + i) * kKernel + ky) * kKernel + kx;
          const double wv = w[widx];
          std::fill(part.begin(), part.end(), 0.0);
          for (std::size_t n = 0; n < g.n; ++n) {
            const double* d = dy.ptr() + (n * spec.out_ch + o) * g.p();
            const double* src = x.ptr() + (n * g.c + i) * g.h * g.w;
            double* dsrc = dx.ptr() + (n * g.c + i) * g.h * g.w;
            direct_rows(g, ky, kx, [&](std::size_t oy, std::size_t iy, std::size_t x0, std::size_t x1, std::ptrdiff_t off) {
              const double* drow = d + oy * g.wo;
              const double* s = src + iy * g.w + off;
              double* ds = dsrc + iy * g.w + off;
              for (std::size_t ox = x0; ox < x1; ++ox) {
                part[ox] += drow[ox] * s[ox];
                ds[ox] += wv * drow[ox];
              }
            });
          }
          double acc = 0.0;
          for (double v : part) acc += v;
          dw[widx] = acc;
        }
  return dx;
}


inline NdArray conv_forward(const Conv& spec, const LayerParams& lp, const NdArray& x) {
  const auto g = conv_geom(x.shape, spec.stride);
  if (use_direct_conv(spec)) return conv_direct_forward(spec, lp, x, g);
  const auto w = as_mat(lp.trainable[0].ptr(), spec.out_ch, g.k());
  const auto& b = lp.trainable[1];
  NdArray out({g.n, spec.out_ch, g.ho, g.wo});
  const std::size_t chunk = chunk_samples(g.p());
  RowMat cols, y;
  for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::size_t m = std::min(chunk, g.n - n0);
    im2col(x, g, n0, m, scratch(cols, g.k(), m * g.p()));
    y.noalias() = w * cols;
    for (std::size_t o = 0; o < spec.out_ch; ++o) y.row(static_cast<Eigen::Index>(o)).array() += b[o];
    batch_first(y.data(), n0, m, spec.out_ch, g.p(), out.ptr());
  }
  return out;
}

inline NdArray conv_backward(const Conv& spec, const LayerParams& lp, const NdArray& x, const NdArray& dy,
                             std::vector<NdArray>& grads) {
  const auto g = conv_geom(x.shape, spec.stride);
  if (use_direct_conv(spec)) return conv_direct_backward(spec, lp, x, dy, g, grads);
  const auto w = as_mat(lp.trainable[0].ptr(), spec.out_ch, g.k());
  auto dw = as_mat(grads[0].ptr(), spec.out_ch, g.k());
  dw.setZero();
  NdArray dx(x.shape, 0.0);
  const std::size_t chunk = chunk_samples(g.p());
  RowMat cols, dm, dcols;
  for (std::size_t n0 = 0; n0 < g.n; n0 += chunk) {
    const std::size_t m = std::min(chunk, g.n - n0);
    im2col(x, g, n0, m, scratch(cols, g.k(), m * g.p()));
    channels_first(dy.ptr(), n0, m, spec.out_ch, g.p(), scratch(dm, spec.out_ch, m * g.p()));
    dw.noalias() += dm * cols.transpose();
    for (std::size_t o = 0; o < spec.out_ch; ++o) grads[1][o] += dm.row(static_cast<Eigen::Index>(o)).sum();
    dcols.noalias() = w.transpose() * dm;
    col2im_add(dcols.data(), g, n0, m, dx.ptr());
  }
  return dx;
}

// ---- TConv --------------------------------------------------------------
// Input (a,b) feeds output (2a - ky + 1, 2b - kx + 1) through tap (ky,kx): the
// zero-inserted image has x[a,b] at (2a,2b) and the 3x3 conv pads by one.

inline RowMat tconv_tap_matrix(const TConv& spec, const NdArray& w) {
  RowMat m(static_cast<Eigen::Index>(spec.out_ch * kTaps), static_cast<Eigen::Index>(spec.in_ch));
  for (std::size_t o = 0; o < spec.out_ch; ++o)
    for (std::size_t i = 0; i < spec.in_ch; ++i)
      for (std::size_t k = 0; k < kTaps; ++k)
        m(static_cast<Eigen::Index>(o * kTaps + k), static_cast<Eigen::Index>(i)) = w[(o * spec.in_ch + i) * kTaps + k];
  return m;
}

template <class Fn>
inline void tconv_for_each_tap(std::size_t h, std::size_t w, Fn&& fn) {
  const std::size_t oh = 2 * h, ow = 2 * w;
  for (std::size_t ky = 0; ky < kKernel; ++ky)
    for (std::size_t kx = 0; kx < kKernel; ++kx)
      for (std::size_t a = 0; a < h; ++a) {
        const auto oy = static_cast<std::ptrdiff_t>(2 * a + 1) - static_cast<std::ptrdiff_t>(ky);
        if (oy < 0 || oy >= static_cast<std::ptrdiff_t>(oh)) continue;
        for (std::size_t b = 0; b < w; ++b) {
          const auto ox = static_cast<std::ptrdiff_t>(2 * b + 1) - static_cast<std::ptrdiff_t>(kx);
          if (ox < 0 || ox >= static_cast<std::ptrdiff_t>(ow)) continue;
          fn(ky * kKernel + kx, a * w + b, static_cast<std::size_t>(oy) * ow + static_cast<std::size_t>(ox));
        }
      }
}

inline NdArray tconv_forward(const TConv& spec, const LayerParams& lp, const NdArray& x) {
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), pin = h * w, pout = 4 * pin;
  const RowMat taps = tconv_tap_matrix(spec, lp.trainable[0]);
  NdArray out({n, spec.out_ch, 2 * h, 2 * w});
  const auto& b = lp.trainable[1];
  const std::size_t chunk = chunk_samples(pin);
  RowMat xm, c;
  for (std::size_t n0 = 0; n0 < n; n0 += chunk) {
    const std::size_t m = std::min(chunk, n - n0);
    channels_first(x.ptr(), n0, m, spec.in_ch, pin, scratch(xm, spec.in_ch, m * pin));
    c.noalias() = taps * xm;
    for (std::size_t j = 0; j < m; ++j)
      for (std::size_t o = 0; o < spec.out_ch; ++o) {
        double* dst = out.ptr() + ((n0 + j) * spec.out_ch + o) * pout;
        std::fill_n(dst, pout, b[o]);
        const double* base = c.data() + o * kTaps * m * pin + j * pin;
        tconv_for_each_tap(h, w, [&](std::size_t k, std::size_t q, std::size_t p) { dst[p] += base[k * m * pin + q]; });
      }
  }
  return out;
}

inline NdArray tconv_backward(const TConv& spec, const LayerParams& lp, const NdArray& x, const NdArray& dy,
                              std::vector<NdArray>& grads) {
  const std::size_t n = x.dim(0), h = x.dim(2), w = x.dim(3), pin = h * w, pout = 4 * pin;
  const RowMat taps = tconv_tap_matrix(spec, lp.trainable[0]);
  RowMat dtaps = RowMat::Zero(static_cast<Eigen::Index>(spec.out_ch * kTaps), static_cast<Eigen::Index>(spec.in_ch));
  auto& db = grads[1];
  NdArray dx(x.shape);
  const std::size_t chunk = chunk_samples(pin);
  RowMat gathered, xm, dxm;
  for (std::size_t n0 = 0; n0 < n; n0 += chunk) {
    const std::size_t m = std::min(chunk, n - n0);
    gathered.setZero(static_cast<Eigen::Index>(spec.out_ch * kTaps), static_cast<Eigen::Index>(m * pin));
    for (std::size_t o = 0; o < spec.out_ch; ++o)
      for (std::size_t j = 0; j < m; ++j) {
        const double* src = dy.ptr() + ((n0 + j) * spec.out_ch + o) * pout;
        double acc = 0.0;
        for (std::size_t p = 0; p < pout; ++p) acc += src[p];
        db[o] += acc;
        double* base = gathered.data() + o * kTaps * m * pin + j * pin;
        tconv_for_each_tap(h, w, [&](std::size_t k, std::size_t q, std::size_t p) { base[k * m * pin + q] = src[p]; });
      }
    channels_first(x.ptr(), n0, m, spec.in_ch, pin, scratch(xm, spec.in_ch, m * pin));
    dtaps.noalias() += gathered * xm.transpose();
    dxm.noalias() = taps.transpose() * gathered;
    batch_first(dxm.data(), n0, m, spec.in_ch, pin, dx.ptr());
  }
  auto& dw = grads[0];
  for (std::size_t o = 0; o < spec.out_ch; ++o)
    for (std::size_t i = 0; i < spec.in_ch; ++i)
      for (std::size_t k = 0; k < kTaps; ++k)
        dw[(o * spec.in_ch + i) * kTaps + k] = dtaps(static_cast<Eigen::Index>(o * kTaps + k), static_cast<Eigen::Index>(i));
  return dx;
}

// ---- Dense --------------------------------------------------------------

inline NdArray dense_forward(const Dense& spec, const LayerParams& lp, const NdArray& x) {
  const std::size_t n = x.dim(0);
  NdArray out({n, spec.out});
  auto y = as_mat(out.ptr(), n, spec.out);
  y.noalias() = as_mat(x.ptr(), n, spec.in) * as_mat(lp.trainable[0].ptr(), spec.out, spec.in).transpose();
  for (std::size_t r = 0; r < n; ++r)
    for (std::size_t o = 0; o < spec.out; ++o) out[r * spec.out + o] += lp.trainable[1][o];
  return out;
}

inline NdArray dense_backward(const Dense& spec, const LayerParams& lp, const NdArray& x, const NdArray& dy,
                              std::vector<NdArray>& grads) {
  const std::size_t n = x.dim(0);
  const auto dmat = as_mat(dy.ptr(), n, spec.out);
  as_mat(grads[0].ptr(), spec.out, spec.in).noalias() = dmat.transpose() * as_mat(x.ptr(), n, spec.in);
  for (std::size_t o = 0; o < spec.out; ++o) grads[1][o] = dmat.col(static_cast<Eigen::Index>(o)).sum();
  NdArray dx(x.shape);
  as_mat(dx.ptr(), n, spec.in).noalias() = dmat * as_mat(lp.trainable[0].ptr(), spec.out, spec.in);
  return dx;
}

// ---- BatchNorm ----------------------------------------------------------

struct BnGeom {
  std::size_t n, c, p;
};
inline BnGeom bn_geom(const NdArray& x) {
  return {x.dim(0), x.dim(1), x.rank() == 4 ? x.dim(2) * x.dim(3) : 1};
}

inline NdArray batchnorm_forward(const BatchNorm& spec, const LayerParams& lp, const NdArray& x, Mode mode,
                                 LayerCache& cache, std::vector<NdArray>& state) {
  const auto g = bn_geom(x);
  const double m = static_cast<double>(g.n * g.p);
  const auto& gamma = lp.trainable[0];
  const auto& beta = lp.trainable[1];
  NdArray out(x.shape);
  cache.aux.assign(x.size(), 0.0);
  cache.inv_std.assign(g.c, 0.0);
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    double mean, var;
    if (mode == Mode::Train) {
      double s = 0.0;
      for (std::size_t ni = 0; ni < g.n; ++ni)
        for (std::size_t q = 0; q < g.p; ++q) s += x[(ni * g.c + ch) * g.p + q];
      mean = s / m;
      double v = 0.0;
      for (std::size_t ni = 0; ni < g.n; ++ni)
        for (std::size_t q = 0; q < g.p; ++q) {
          const double d = x[(ni * g.c + ch) * g.p + q] - mean;
          v += d * d;
        }
      var = v / m;
      const double unbiased = m > 1.0 ? v / (m - 1.0) : var;
      state[0][ch] = (1.0 - spec.momentum) * state[0][ch] + spec.momentum * mean;
      state[1][ch] = (1.0 - spec.momentum) * state[1][ch] + spec.momentum * unbiased;
    } else {
      mean = state[0][ch];
      var = state[1][ch];
    }
    const double inv = 1.0 / std::sqrt(var + spec.eps);
    cache.inv_std[ch] = inv;
    for (std::size_t ni = 0; ni < g.n; ++ni)
      for (std::size_t q = 0; q < g.p; ++q) {
        const std::size_t idx = (ni * g.c + ch) * g.p + q;
        const double xh = (x[idx] - mean) * inv;
        cache.aux[idx] = xh;
        out[idx] = gamma[ch] * xh + beta[ch];
      }
  }
  return out;
}

inline NdArray batchnorm_backward(const LayerParams& lp, const NdArray& x, const LayerCache& cache,
                                  const NdArray& dy, std::vector<NdArray>& grads) {
  const auto g = bn_geom(x);
  const double m = static_cast<double>(g.n * g.p);
  NdArray dx(x.shape);
  for (std::size_t ch = 0; ch < g.c; ++ch) {
    double sum_dy = 0.0, sum_dy_xh = 0.0;
    for (std::size_t ni = 0; ni < g.n; ++ni)
      for (std::size_t q = 0; q < g.p; ++q) {
        const std::size_t idx = (ni * g.c + ch) * g.p + q;
        sum_dy += dy[idx];
        sum_dy_xh += dy[idx] * cache.aux[idx];
      }
    grads[0][ch] = sum_dy_xh;
    grads[1][ch] = sum_dy;
    const double k = lp.trainable[0][ch] * cache.inv_std[ch] / m;
    for (std::size_t ni = 0; ni < g.n; ++ni)
      for (std::size_t q = 0; q < g.p; ++q) {
        const std::size_t idx = (ni * g.c + ch) * g.p + q;
        dx[idx] = k * (m * dy[idx] - sum_dy - cache.aux[idx] * sum_dy_xh);
      }
  }
  return dx;
}

// ---- Activations, pooling -----------------------------------------------

template <class F>
inline NdArray map_values(const NdArray& x, F f) {
  NdArray y(x.shape);
  const double* px = x.ptr();
  double* py = y.ptr();
  for (std::size_t i = 0; i < x.size(); ++i) py[i] = f(px[i]);
  return y;
}

inline NdArray activation_forward(const Activation& a, const NdArray& x) {
  switch (a.kind) {
    case Act::ReLU: return map_values(x, [](double v) { return v > 0.0 ? v : 0.0; });
    case Act::LeakyReLU: return map_values(x, [al = a.alpha](double v) { return v > 0.0 ? v : al * v; });
    case Act::Tanh: return map_values(x, [](double v) { return std::tanh(v); });
    case Act::Sigmoid: return map_values(x, [](double v) { return sigmoid(v); });
  }
  return x;
}

inline NdArray activation_backward(const Activation& a, const NdArray& x, const NdArray& y, const NdArray& dy) {
  NdArray dx(x.shape);
  const std::size_t n = x.size();
  const double *px = x.ptr(), *py = y.ptr(), *pd = dy.ptr();
  double* out = dx.ptr();
  switch (a.kind) {
    case Act::ReLU:
      for (std::size_t i = 0; i < n; ++i) out[i] = px[i] > 0.0 ? pd[i] : 0.0;
      break;
    case Act::LeakyReLU:
      for (std::size_t i = 0; i < n; ++i) out[i] = px[i] > 0.0 ? pd[i] : a.alpha * pd[i];
      break;
    case Act::Tanh:
      for (std::size_t i = 0; i < n; ++i) out[i] = pd[i] * (1.0 - py[i] * py[i]);
      break;
    case Act::Sigmoid:
      for (std::size_t i = 0; i < n; ++i) out[i] = pd[i] * py[i] * (1.0 - py[i]);
      break;
  }
  return dx;
}

inline NdArray maxpool_forward(const NdArray& x, LayerCache& cache) {
  const std::size_t n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3), oh = h / 2, ow = w / 2;
  NdArray y({n, c, oh, ow});
  cache.argmax.assign(y.size(), 0);
  for (std::size_t plane = 0; plane < n * c; ++plane)
    for (std::size_t oy = 0; oy < oh; ++oy)
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = plane * h * w + 2 * oy * w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy)
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = plane * h * w + (2 * oy + dy) * w + 2 * ox + dx;
            if (x[idx] > x[best]) best = idx;
          }
        const std::size_t o = (plane * oh + oy) * ow + ox;
        y[o] = x[best];
        cache.argmax[o] = best;
      }
  return y;
}

inline NdArray maxpool_backward(const NdArray& x, const LayerCache& cache, const NdArray& dy) {
  NdArray dx(x.shape, 0.0);
  for (std::size_t o = 0; o < dy.size(); ++o) dx[cache.argmax[o]] += dy[o];
  return dx;
}

}  // namespace detail

/// Runs the network on a batch shaped [N, input_shape...]. Does not modify `params`;
/// batchnorm running statistics after the pass are returned in `state`.
inline ForwardResult forward(const NetworkSpec& net, const ParamSet& params, const NdArray& batch, Mode mode) {
  const auto shapes = infer_shapes(net);
  if (batch.rank() != shapes[0].size() + 1 || !std::equal(shapes[0].begin(), shapes[0].end(), batch.shape.begin() + 1))
    throw numeric_error("forward: batch shape " + to_string(batch.shape) + " does not match network input " +
                        to_string(shapes[0]));
  if (batch.dim(0) == 0) throw numeric_error("forward: empty batch");
  if (params.layers.size() != net.layers.size()) throw numeric_error("forward: parameter set does not match network");
  const std::size_t n = batch.dim(0);
  ForwardResult r;
  r.tape.mode = mode;
  r.tape.acts.reserve(net.layers.size() + 1);
  r.tape.acts.push_back(batch);
  r.tape.cache.resize(net.layers.size());
  r.state.resize(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const auto& x = r.tape.acts.back();
    const auto& lp = params.layers[i];
    auto& cache = r.tape.cache[i];
    NdArray y = std::visit(
        Overloaded{
            [&](const Conv& c) { return detail::conv_forward(c, lp, x); },
            [&](const TConv& c) { return detail::tconv_forward(c, lp, x); },
            [&](const Dense& d) { return detail::dense_forward(d, lp, x); },
            [&](const BatchNorm& b) {
              r.state[i] = lp.state;
              return detail::batchnorm_forward(b, lp, x, mode, cache, r.state[i]);
            },
            [&](const Activation& a) { return detail::activation_forward(a, x); },
            [&](const MaxPool&) { return detail::maxpool_forward(x, cache); },
            [&](const Flatten&) { return NdArray(batched(n, shapes[i + 1]), x.data); },
            [&](const Reshape&) { return NdArray(batched(n, shapes[i + 1]), x.data); },
        },
        net.layers[i]);
    if (y.shape != batched(n, shapes[i + 1]))
      throw numeric_error("layer " + std::to_string(i) + " produced " + to_string(y.shape));
    r.tape.acts.push_back(std::move(y));
  }
  r.output = r.tape.acts.back();
  return r;
}

/// Gradients of sum(output * output_grad) with respect to every trainable tensor and the input.
inline BackwardResult backward(const NetworkSpec& net, const ParamSet& params, const Tape& tape,
                               const NdArray& output_grad) {
  if (tape.mode != Mode::Train) throw numeric_error("backward: tape was not recorded in Train mode");
  if (tape.acts.size() != net.layers.size() + 1 || tape.cache.size() != net.layers.size() ||
      params.layers.size() != net.layers.size())
    throw numeric_error("backward: tape does not match network");
  if (output_grad.shape != tape.acts.back().shape)
    throw numeric_error("backward: output gradient shape " + to_string(output_grad.shape) + " differs from output " +
                        to_string(tape.acts.back().shape));
  BackwardResult r;
  r.grads = zero_grads(params);
  NdArray g = output_grad;
  for (std::size_t li = net.layers.size(); li-- > 0;) {
    const auto& x = tape.acts[li];
    const auto& y = tape.acts[li + 1];
    const auto& lp = params.layers[li];
    auto& grads = r.grads.layers[li];
    g = std::visit(Overloaded{
                       [&](const Conv& c) { return detail::conv_backward(c, lp, x, g, grads); },
                       [&](const TConv& c) { return detail::tconv_backward(c, lp, x, g, grads); },
                       [&](const Dense& d) { return detail::dense_backward(d, lp, x, g, grads); },
                       [&](const BatchNorm&) { return detail::batchnorm_backward(lp, x, tape.cache[li], g, grads); },
                       [&](const Activation& a) { return detail::activation_backward(a, x, y, g); },
                       [&](const MaxPool&) { return detail::maxpool_backward(x, tape.cache[li], g); },
                       [&](const Flatten&) { return NdArray(x.shape, std::move(g.data)); },
                       [&](const Reshape&) { return NdArray(x.shape, std::move(g.data)); },
                   },
                   net.layers[li]);
  }
  r.input_grad = std::move(g);
  return r;
}

/// Copies running statistics returned by a forward pass into `params`.
inline void apply_state(ParamSet& params, const std::vector<std::vector<NdArray>>& state) {
  for (std::size_t i = 0; i < state.size() && i < params.layers.size(); ++i)
    if (!state[i].empty()) params.layers[i].state = state[i];
}

/// Convenience inference: Infer-mode forward, output only.
inline NdArray infer(const NetworkSpec& net, const ParamSet& params, const NdArray& batch) {
  return forward(net, params, batch, Mode::Infer).output;
}

}  // namespace faultface::nn
