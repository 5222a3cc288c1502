#pragma once

// Layer kernels: forward and backward for valid/stride-1 convolution
// (cross-correlation), 2x2 max pooling, ReLU, dense and softmax. All tensors
// are channels-last. Backward functions take the gradient with respect to the
// layer's own output and return gradients for parameters and input.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "mfd/gemm.hpp"
#include "mfd/tensor.hpp"

namespace mfd {

enum class KernelPath { optimized, reference };

template <class T>
struct Conv2DParams {
  Tensor<T> kernel;  // kh x kw x in_channels x out_channels
  Tensor<T> bias;    // out_channels

  std::size_t kh() const { return kernel.dim(0); }
  std::size_t kw() const { return kernel.dim(1); }
  std::size_t in_channels() const { return kernel.dim(2); }
  std::size_t out_channels() const { return kernel.dim(3); }
  std::size_t param_count() const { return kernel.size() + bias.size(); }
};

template <class T>
struct DenseParams {
  Tensor<T> weights;  // in x out
  Tensor<T> bias;     // out

  std::size_t in_features() const { return weights.dim(0); }
  std::size_t out_features() const { return weights.dim(1); }
  std::size_t param_count() const { return weights.size() + bias.size(); }
};

namespace detail {

template <class T>
std::vector<T>& im2col_buffer() {
  thread_local std::vector<T> buf;
  return buf;
}

// One sample (H x W x C) -> rows of (kh*kw*C) patch values, one per output pixel.
template <class T>
void im2col(const T* in, std::size_t h, std::size_t w, std::size_t c, std::size_t kh,
            std::size_t kw, T* cols) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  const std::size_t seg = kw * c;
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      T* row = cols + (i * ow + j) * kh * seg;
      for (std::size_t u = 0; u < kh; ++u) {
        const T* src = in + ((i + u) * w + j) * c;
        std::copy(src, src + seg, row + u * seg);
      }
    }
}

template <class T>
void col2im_add(const T* cols, std::size_t h, std::size_t w, std::size_t c, std::size_t kh,
                std::size_t kw, T* in) {
  const std::size_t oh = h - kh + 1, ow = w - kw + 1;
  const std::size_t seg = kw * c;
  for (std::size_t i = 0; i < oh; ++i)
    for (std::size_t j = 0; j < ow; ++j) {
      const T* row = cols + (i * ow + j) * kh * seg;
      for (std::size_t u = 0; u < kh; ++u) {
        T* dst = in + ((i + u) * w + j) * c;
        const T* src = row + u * seg;
        for (std::size_t e = 0; e < seg; ++e) dst[e] += src[e];
      }
    }
}

inline void require_rank(const char* op, const Shape& s, std::size_t rank) {
  if (s.size() != rank)
    throw ShapeError(std::string(op) + ": expected rank " + std::to_string(rank) + ", got " +
                     to_string(s));
}

}  // namespace detail

template <class T>
Tensor<T> conv2d_forward(const Tensor<T>& input, const Conv2DParams<T>& p,
                         KernelPath path = KernelPath::optimized) {
  detail::require_rank("conv2d", input.shape(), 4);
  const std::size_t b = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  const std::size_t kh = p.kh(), kw = p.kw(), oc = p.out_channels();
  if (c != p.in_channels())
    throw ShapeError("conv2d: input has " + std::to_string(c) + " channels, kernel expects " +
                     std::to_string(p.in_channels()));
  if (h < kh || w < kw)
    throw ShapeError("conv2d: input " + to_string(input.shape()) + " smaller than kernel");
  const std::size_t oh = h - kh + 1, ow = w - kw + 1, k = kh * kw * c;
  Tensor<T> out({b, oh, ow, oc});

  for (std::size_t s = 0; s < b; ++s) {
    const T* x = input.slice(s).data();
    T* y = out.slice(s).data();
    for (std::size_t px = 0; px < oh * ow; ++px)
      std::copy(p.bias.data(), p.bias.data() + oc, y + px * oc);
    if (path == KernelPath::optimized) {
      auto& cols = detail::im2col_buffer<T>();
      cols.resize(oh * ow * k);
      detail::im2col(x, h, w, c, kh, kw, cols.data());
      gemm::gemm(gemm::Trans::no, gemm::Trans::no, oh * ow, oc, k, cols.data(), k,
                 p.kernel.data(), oc, y, oc, true);
    } else {
      for (std::size_t i = 0; i < oh; ++i)
        for (std::size_t j = 0; j < ow; ++j) {
          T* o = y + (i * ow + j) * oc;
          for (std::size_t u = 0; u < kh; ++u)
            for (std::size_t v = 0; v < kw; ++v)
              for (std::size_t ci = 0; ci < c; ++ci) {
                const T xv = x[((i + u) * w + (j + v)) * c + ci];
                const T* kr = p.kernel.data() + ((u * kw + v) * c + ci) * oc;
                for (std::size_t o2 = 0; o2 < oc; ++o2) o[o2] += xv * kr[o2];
              }
        }
    }
  }
  return out;
}

template <class T>
struct Conv2DGrads {
  Tensor<T> kernel;
  Tensor<T> bias;
  std::optional<Tensor<T>> input;
};

// `grad_out` is dLoss/d(conv output), shape b x oh x ow x oc.
template <class T>
Conv2DGrads<T> conv2d_backward(const Tensor<T>& input, const Conv2DParams<T>& p,
                               const Tensor<T>& grad_out, bool need_input_grad) {
  const std::size_t b = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  const std::size_t kh = p.kh(), kw = p.kw(), oc = p.out_channels();
  const std::size_t oh = h - kh + 1, ow = w - kw + 1, k = kh * kw * c;
  if (grad_out.shape() != Shape{b, oh, ow, oc})
    throw ShapeError("conv2d_backward: gradient shape " + to_string(grad_out.shape()) +
                     " does not match output shape");

  Conv2DGrads<T> g{Tensor<T>(p.kernel.shape()), Tensor<T>(p.bias.shape()), std::nullopt};
  if (need_input_grad) g.input = Tensor<T>(input.shape());
  std::vector<T> cols(oh * ow * k);
  std::vector<T> dcols;
  if (need_input_grad) dcols.resize(oh * ow * k);

  for (std::size_t s = 0; s < b; ++s) {
    const T* dy = grad_out.slice(s).data();
    detail::im2col(input.slice(s).data(), h, w, c, kh, kw, cols.data());
    // dK (k x oc) += cols^T (k x M) * dy (M x oc)
    gemm::gemm(gemm::Trans::yes, gemm::Trans::no, k, oc, oh * ow, cols.data(), k, dy, oc,
               g.kernel.data(), oc, true);
    for (std::size_t px = 0; px < oh * ow; ++px)
      for (std::size_t o = 0; o < oc; ++o) g.bias[o] += dy[px * oc + o];
    if (need_input_grad) {
      // dcols (M x k) = dy (M x oc) * K^T (oc x k)
      gemm::gemm(gemm::Trans::no, gemm::Trans::yes, oh * ow, k, oc, dy, oc, p.kernel.data(), oc,
                 dcols.data(), k, false);
      detail::col2im_add(dcols.data(), h, w, c, kh, kw, g.input->slice(s).data());
    }
  }
  return g;
}

template <class T>
struct PoolResult {
  Tensor<T> output;
  // Flat input index of the winning element for each output element.
  std::vector<std::uint32_t> argmax;
};

// Non-overlapping 2x2 windows, stride 2; odd trailing rows/columns dropped.
// Ties go to the first maximal element in row-major window order.
template <class T>
PoolResult<T> maxpool2d_forward(const Tensor<T>& input) {
  detail::require_rank("maxpool2d", input.shape(), 4);
  const std::size_t b = input.dim(0), h = input.dim(1), w = input.dim(2), c = input.dim(3);
  if (h < 2 || w < 2)
    throw ShapeError("maxpool2d: input " + to_string(input.shape()) + " smaller than 2x2 window");
  const std::size_t oh = h / 2, ow = w / 2;
  PoolResult<T> r{Tensor<T>({b, oh, ow, c}), std::vector<std::uint32_t>(b * oh * ow * c)};
  const T* x = input.data();
  T* y = r.output.data();
  std::size_t o = 0;
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t i = 0; i < oh; ++i)
      for (std::size_t j = 0; j < ow; ++j) {
        const std::size_t base = ((s * h + 2 * i) * w + 2 * j) * c;
        const std::size_t offs[4] = {0, c, w * c, w * c + c};
        for (std::size_t ch = 0; ch < c; ++ch, ++o) {
          std::size_t best = base + ch;
          for (std::size_t q = 1; q < 4; ++q)
            if (x[base + offs[q] + ch] > x[best]) best = base + offs[q] + ch;
          y[o] = x[best];
          r.argmax[o] = static_cast<std::uint32_t>(best);
        }
      }
  return r;
}

template <class T>
Tensor<T> maxpool2d_backward(const Shape& input_shape, const std::vector<std::uint32_t>& argmax,
                             const Tensor<T>& grad_out) {
  if (grad_out.size() != argmax.size())
    throw ShapeError("maxpool2d_backward: gradient does not match argmax map");
  Tensor<T> g(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) g[argmax[o]] += grad_out[o];
  return g;
}

template <class T>
Tensor<T> relu(const Tensor<T>& t) {
  Tensor<T> out = t;
  for (auto& v : out.values()) v = v > T(0) ? v : T(0);
  return out;
}

template <class T>
void relu_inplace(Tensor<T>& t) {
  for (auto& v : t.values()) v = v > T(0) ? v : T(0);
}

// Derivative at exactly 0 is taken as 0.
template <class T>
Tensor<T> relu_backward(const Tensor<T>& output, Tensor<T> g) {
  if (g.shape() != output.shape()) throw ShapeError("relu_backward: shape mismatch");
  for (std::size_t i = 0; i < g.size(); ++i)
    if (!(output[i] > T(0))) g[i] = T(0);
  return g;
}

template <class T>
Tensor<T> dense_forward(const Tensor<T>& input, const DenseParams<T>& p,
                        KernelPath path = KernelPath::optimized) {
  detail::require_rank("dense", input.shape(), 2);
  const std::size_t b = input.dim(0), in = input.dim(1), out = p.out_features();
  if (in != p.in_features())
    throw ShapeError("dense: input has " + std::to_string(in) + " features, layer expects " +
                     std::to_string(p.in_features()));
  Tensor<T> y({b, out});
  for (std::size_t s = 0; s < b; ++s)
    std::copy(p.bias.data(), p.bias.data() + out, y.data() + s * out);
  auto kernel = path == KernelPath::optimized ? &gemm::gemm<T> : &gemm::gemm_reference<T>;
  kernel(gemm::Trans::no, gemm::Trans::no, b, out, in, input.data(), in, p.weights.data(), out,
         y.data(), out, true);
  return y;
}

template <class T>
struct DenseGrads {
  Tensor<T> weights;
  Tensor<T> bias;
  Tensor<T> input;
};

template <class T>
DenseGrads<T> dense_backward(const Tensor<T>& input, const DenseParams<T>& p,
                             const Tensor<T>& grad_out) {
  const std::size_t b = input.dim(0), in = input.dim(1), out = p.out_features();
  if (grad_out.shape() != Shape{b, out})
    throw ShapeError("dense_backward: gradient shape " + to_string(grad_out.shape()));
  DenseGrads<T> g{Tensor<T>({in, out}), Tensor<T>({out}), Tensor<T>({b, in})};
  gemm::gemm(gemm::Trans::yes, gemm::Trans::no, in, out, b, input.data(), in, grad_out.data(), out,
             g.weights.data(), out, false);
  for (std::size_t s = 0; s < b; ++s)
    for (std::size_t o = 0; o < out; ++o) g.bias[o] += grad_out[s * out + o];
  gemm::gemm(gemm::Trans::no, gemm::Trans::yes, b, in, out, grad_out.data(), out,
             p.weights.data(), out, g.input.data(), in, false);
  return g;
}

// Row-wise softmax with max subtraction.
template <class T>
Tensor<T> softmax(const Tensor<T>& logits) {
  detail::require_rank("softmax", logits.shape(), 2);
  const std::size_t b = logits.dim(0), k = logits.dim(1);
  Tensor<T> out(logits.shape());
  for (std::size_t s = 0; s < b; ++s) {
    const T* x = logits.data() + s * k;
    T* y = out.data() + s * k;
    const T mx = *std::max_element(x, x + k);
    T sum = 0;
    for (std::size_t i = 0; i < k; ++i) sum += (y[i] = std::exp(x[i] - mx));
    for (std::size_t i = 0; i < k; ++i) y[i] /= sum;
  }
  return out;
}

// dL/dlogits from dL/dprobs through the softmax Jacobian.
template <class T>
Tensor<T> softmax_backward(const Tensor<T>& probs, const Tensor<T>& grad_probs) {
  const std::size_t b = probs.dim(0), k = probs.dim(1);
  Tensor<T> g(probs.shape());
  for (std::size_t s = 0; s < b; ++s) {
    const T* p = probs.data() + s * k;
    const T* dp = grad_probs.data() + s * k;
    T dot = 0;
    for (std::size_t i = 0; i < k; ++i) dot += p[i] * dp[i];
    for (std::size_t i = 0; i < k; ++i) g[s * k + i] = p[i] * (dp[i] - dot);
  }
  return g;
}

}  // namespace mfd
