#pragma once

// Packed, cache-blocked matrix multiply used by the dense and convolution
// layers. The loop nest follows the usual panel/micro-kernel decomposition:
// B is packed into kc x NR column panels, A into MR x kc row panels, and a
// register-blocked micro-kernel accumulates one MR x NR tile of C at a time.

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <vector>

#if defined(__AVX512F__) || defined(__AVX2__)
#include <immintrin.h>
#endif

namespace mfd::gemm {

enum class Trans { no, yes };

namespace detail {

// Thin SIMD wrappers; `width` lanes of T per register.
template <class T>
struct Simd {
  using reg = T;
  static constexpr std::size_t width = 1;
  static reg zero() { return T(0); }
  static reg set1(T x) { return x; }
  static reg load(const T* p) { return *p; }
  static void store(T* p, reg v) { *p = v; }
  static reg fmadd(reg a, reg b, reg c) { return a * b + c; }
};

#if defined(__AVX512F__)
template <>
struct Simd<float> {
  using reg = __m512;
  static constexpr std::size_t width = 16;
  static reg zero() { return _mm512_setzero_ps(); }
  static reg set1(float x) { return _mm512_set1_ps(x); }
  static reg load(const float* p) { return _mm512_loadu_ps(p); }
  static void store(float* p, reg v) { _mm512_storeu_ps(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm512_fmadd_ps(a, b, c); }
};
template <>
struct Simd<double> {
  using reg = __m512d;
  static constexpr std::size_t width = 8;
  static reg zero() { return _mm512_setzero_pd(); }
  static reg set1(double x) { return _mm512_set1_pd(x); }
  static reg load(const double* p) { return _mm512_loadu_pd(p); }
  static void store(double* p, reg v) { _mm512_storeu_pd(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm512_fmadd_pd(a, b, c); }
};
#elif defined(__AVX2__) && defined(__FMA__)
template <>
struct Simd<float> {
  using reg = __m256;
  static constexpr std::size_t width = 8;
  static reg zero() { return _mm256_setzero_ps(); }
  static reg set1(float x) { return _mm256_set1_ps(x); }
  static reg load(const float* p) { return _mm256_loadu_ps(p); }
  static void store(float* p, reg v) { _mm256_storeu_ps(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_ps(a, b, c); }
};
template <>
struct Simd<double> {
  using reg = __m256d;
  static constexpr std::size_t width = 4;
  static reg zero() { return _mm256_setzero_pd(); }
  static reg set1(double x) { return _mm256_set1_pd(x); }
  static reg load(const double* p) { return _mm256_loadu_pd(p); }
  static void store(double* p, reg v) { _mm256_storeu_pd(p, v); }
  static reg fmadd(reg a, reg b, reg c) { return _mm256_fmadd_pd(a, b, c); }
};
#endif

// Register tile shape: MR rows by NV vectors. With 32 vector registers
// (AVX-512) a 12 x 2 tile leaves room for the B loads and A broadcasts;
// with 16 (AVX2) the classic 6 x 2 tile is used.
template <class T>
struct Tile {
  static constexpr std::size_t nv = Simd<T>::width == 1 ? 4 : 2;
#if defined(__AVX512F__)
  static constexpr std::size_t mr = Simd<T>::width == 1 ? 4 : 12;
#else
  static constexpr std::size_t mr = Simd<T>::width == 1 ? 4 : 6;
#endif
  static constexpr std::size_t nr = nv * Simd<T>::width;
};

template <class T>
struct Blocking {
  static constexpr std::size_t kc = 256;
  static constexpr std::size_t mc = Tile<T>::mr * (sizeof(T) == 4 ? 16 : 8);
  static constexpr std::size_t nc = 4096;
};

// Element accessor honoring the transpose flag: logical (row, col).
template <class T>
inline const T& at(const T* m, std::size_t ld, Trans t, std::size_t r, std::size_t c) {
  return t == Trans::no ? m[r * ld + c] : m[c * ld + r];
}

// Packs rows [i0, i0+mc) x cols [p0, p0+kc) of op(A) into MR-row panels,
// k-major inside a panel; short panels are zero padded.
template <class T>
void pack_a(const T* a, std::size_t lda, Trans ta, std::size_t i0, std::size_t mc, std::size_t p0,
            std::size_t kc, T* out) {
  constexpr std::size_t mr = Tile<T>::mr;
  for (std::size_t ir = 0; ir < mc; ir += mr) {
    const std::size_t rows = std::min(mr, mc - ir);
    if (ta == Trans::no) {
      for (std::size_t p = 0; p < kc; ++p) {
        T* dst = out + p * mr;
        for (std::size_t r = 0; r < rows; ++r) dst[r] = a[(i0 + ir + r) * lda + p0 + p];
        for (std::size_t r = rows; r < mr; ++r) dst[r] = T(0);
      }
    } else {
      for (std::size_t p = 0; p < kc; ++p) {
        const T* src = a + (p0 + p) * lda + i0 + ir;
        T* dst = out + p * mr;
        for (std::size_t r = 0; r < rows; ++r) dst[r] = src[r];
        for (std::size_t r = rows; r < mr; ++r) dst[r] = T(0);
      }
    }
    out += mr * kc;
  }
}

// Packs rows [p0, p0+kc) x cols [j0, j0+nc) of op(B) into NR-column panels.
template <class T>
void pack_b(const T* b, std::size_t ldb, Trans tb, std::size_t p0, std::size_t kc, std::size_t j0,
            std::size_t nc, T* out) {
  constexpr std::size_t nr = Tile<T>::nr;
  for (std::size_t jr = 0; jr < nc; jr += nr) {
    const std::size_t cols = std::min(nr, nc - jr);
    for (std::size_t p = 0; p < kc; ++p) {
      T* dst = out + p * nr;
      if (tb == Trans::no) {
        const T* src = b + (p0 + p) * ldb + j0 + jr;
        std::copy(src, src + cols, dst);
      } else {
        for (std::size_t c = 0; c < cols; ++c) dst[c] = b[(j0 + jr + c) * ldb + p0 + p];
      }
      std::fill(dst + cols, dst + nr, T(0));
    }
    out += nr * kc;
  }
}

// C[0:rows, 0:cols] (+)= Apanel * Bpanel over kc.
template <class T>
void micro_kernel(std::size_t kc, const T* ap, const T* bp, T* c, std::size_t ldc, std::size_t rows,
                  std::size_t cols, bool accumulate) {
  using S = Simd<T>;
  using reg = typename S::reg;
  constexpr std::size_t mr = Tile<T>::mr;
  constexpr std::size_t nv = Tile<T>::nv;
  constexpr std::size_t nr = Tile<T>::nr;
  constexpr std::size_t w = S::width;

  reg acc[mr][nv];
  for (std::size_t i = 0; i < mr; ++i)
    for (std::size_t v = 0; v < nv; ++v) acc[i][v] = S::zero();

  for (std::size_t p = 0; p < kc; ++p) {
    reg bv[nv];
    for (std::size_t v = 0; v < nv; ++v) bv[v] = S::load(bp + p * nr + v * w);
    for (std::size_t i = 0; i < mr; ++i) {
      const reg av = S::set1(ap[p * mr + i]);
      for (std::size_t v = 0; v < nv; ++v) acc[i][v] = S::fmadd(av, bv[v], acc[i][v]);
    }
  }

  if (rows == mr && cols == nr) {
    for (std::size_t i = 0; i < mr; ++i) {
      T* crow = c + i * ldc;
      for (std::size_t v = 0; v < nv; ++v) {
        reg out = acc[i][v];
        if (accumulate) {
          alignas(64) T tmp[w];
          S::store(tmp, out);
          for (std::size_t l = 0; l < w; ++l) crow[v * w + l] += tmp[l];
        } else {
          S::store(crow + v * w, out);
        }
      }
    }
    return;
  }
  alignas(64) T tile[mr * nr];
  for (std::size_t i = 0; i < mr; ++i)
    for (std::size_t v = 0; v < nv; ++v) S::store(tile + i * nr + v * w, acc[i][v]);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) {
      if (accumulate)
        c[i * ldc + j] += tile[i * nr + j];
      else
        c[i * ldc + j] = tile[i * nr + j];
    }
}

template <class T>
struct Workspace {
  std::vector<T> a;
  std::vector<T> b;
};

template <class T>
Workspace<T>& thread_workspace() {
  thread_local Workspace<T> ws;
  return ws;
}

}  // namespace detail

// C (m x n, leading dimension ldc) = op(A) * op(B), or C += op(A) * op(B) when
// `accumulate` is set. op(A) is m x k and op(B) is k x n; leading dimensions
// refer to the matrices as stored.
template <class T>
void gemm(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
          std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc, bool accumulate) {
  using detail::Blocking;
  using detail::Tile;
  if (m == 0 || n == 0) return;
  if (k == 0) {
    if (!accumulate)
      for (std::size_t i = 0; i < m; ++i) std::fill(c + i * ldc, c + i * ldc + n, T(0));
    return;
  }
  constexpr std::size_t mr = Tile<T>::mr;
  constexpr std::size_t nr = Tile<T>::nr;

  // A few rows against a row-major B: packing B would cost more than the
  // multiply itself (batch-1 dense layers), so stream B rows directly.
  if (m < 4 && tb == Trans::no) {
    for (std::size_t i = 0; i < m; ++i) {
      T* crow = c + i * ldc;
      if (!accumulate) std::fill(crow, crow + n, T(0));
      for (std::size_t p = 0; p < k; ++p) {
        const T av = detail::at(a, lda, ta, i, p);
        const T* brow = b + p * ldb;
        for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      }
    }
    return;
  }

  auto& ws = detail::thread_workspace<T>();
  const std::size_t nc_max = std::min(Blocking<T>::nc, (n + nr - 1) / nr * nr);
  const std::size_t kc_max = std::min(Blocking<T>::kc, k);
  const std::size_t mc_max = std::min(Blocking<T>::mc, (m + mr - 1) / mr * mr);
  ws.a.resize(mc_max * kc_max + mr * kc_max);
  ws.b.resize(nc_max * kc_max + nr * kc_max);

  for (std::size_t jc = 0; jc < n; jc += Blocking<T>::nc) {
    const std::size_t nc = std::min(Blocking<T>::nc, n - jc);
    for (std::size_t pc = 0; pc < k; pc += Blocking<T>::kc) {
      const std::size_t kc = std::min(Blocking<T>::kc, k - pc);
      const bool acc = accumulate || pc > 0;
      detail::pack_b(b, ldb, tb, pc, kc, jc, nc, ws.b.data());
      for (std::size_t ic = 0; ic < m; ic += Blocking<T>::mc) {
        const std::size_t mc = std::min(Blocking<T>::mc, m - ic);
        detail::pack_a(a, lda, ta, ic, mc, pc, kc, ws.a.data());
        for (std::size_t jr = 0; jr < nc; jr += nr) {
          const std::size_t cols = std::min(nr, nc - jr);
          const T* bp = ws.b.data() + (jr / nr) * nr * kc;
          for (std::size_t ir = 0; ir < mc; ir += mr) {
            const std::size_t rows = std::min(mr, mc - ir);
            const T* ap = ws.a.data() + (ir / mr) * mr * kc;
            detail::micro_kernel(kc, ap, bp, c + (ic + ir) * ldc + jc + jr, ldc, rows, cols, acc);
          }
        }
      }
    }
  }
}

// Straight triple loop; used by the reference inference path.
template <class T>
void gemm_reference(Trans ta, Trans tb, std::size_t m, std::size_t n, std::size_t k, const T* a,
                    std::size_t lda, const T* b, std::size_t ldb, T* c, std::size_t ldc,
                    bool accumulate) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T sum = accumulate ? c[i * ldc + j] : T(0);
      for (std::size_t p = 0; p < k; ++p)
        sum += detail::at(a, lda, ta, i, p) * detail::at(b, ldb, tb, p, j);
      c[i * ldc + j] = sum;
    }
}

}  // namespace mfd::gemm
