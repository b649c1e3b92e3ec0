#include "lvr/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "lvr/fft.hpp"
#include "lvr/kernels.hpp"

namespace lvr::ops {

namespace {

template <typename T>
void require_same_shape(const Var<T>& a, const Var<T>& b, const char* op) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size()) {
    throw std::invalid_argument(std::string(op) + ": rank mismatch " + shape_str(sa) + " vs " + shape_str(sb));
  }
  for (std::size_t i = 0; i < sa.size(); ++i) {
    if (sa[i] != sb[i]) {
      throw std::invalid_argument(std::string(op) + ": dimension " + std::to_string(i) + " differs (" +
                                  std::to_string(sa[i]) + " vs " + std::to_string(sb[i]) + ")");
    }
  }
}

// Runs `fn(grad_buffer)` only when the input participates in differentiation.
template <typename T, typename F>
void accumulate(Tape<T>& t, std::size_t id, F&& fn) {
  if (t.requires_grad(id)) fn(t.grad_buffer(id));
}

template <typename T, typename F, typename D>
Var<T> unary(Var<T> a, F f, D dfdx) {
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = f(x[i]);
  const std::size_t ai = a.id;
  return a.tape->record(std::move(y), {a}, [ai, dfdx](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    const Tensor<T>& x = t.value(ai);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& gx = t.grad_buffer(ai);
    for (std::size_t i = 0; i < gy.size(); ++i) gx[i] += gy[i] * dfdx(x[i], y[i]);
  });
}

struct Nchw {
  std::size_t n, c, h, w;
};

Nchw nchw(const Shape& s, const char* op) {
  require_rank(s, 4, op);
  return {s[0], s[1], s[2], s[3]};
}

}  // namespace

template <typename T>
Var<T> add(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "add");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] += bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {a, b}, [ai, bi](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    for (std::size_t id : {ai, bi}) {
      accumulate(t, id, [&](Tensor<T>& g) {
        for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
      });
    }
  });
}

template <typename T>
Var<T> sub(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "sub");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] -= bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {a, b}, [ai, bi](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    accumulate(t, ai, [&](Tensor<T>& g) {
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
    });
    accumulate(t, bi, [&](Tensor<T>& g) {
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] -= gy[i];
    });
  });
}

template <typename T>
Var<T> mul(Var<T> a, Var<T> b) {
  require_same_shape(a, b, "mul");
  Tensor<T> y = a.value();
  const Tensor<T>& bv = b.value();
  for (std::size_t i = 0; i < y.size(); ++i) y[i] *= bv[i];
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {a, b}, [ai, bi](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    const Tensor<T>& av = t.value(ai);
    const Tensor<T>& bv = t.value(bi);
    accumulate(t, ai, [&](Tensor<T>& g) {
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * bv[i];
    });
    accumulate(t, bi, [&](Tensor<T>& g) {
      for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i] * av[i];
    });
  });
}

template <typename T>
Var<T> scale(Var<T> a, T s) {
  return unary(a, [s](T x) { return x * s; }, [s](T, T) { return s; });
}

template <typename T>
Var<T> add_scalar(Var<T> a, T s) {
  return unary(a, [s](T x) { return x + s; }, [](T, T) { return T(1); });
}

template <typename T>
Var<T> square(Var<T> a) {
  return unary(a, [](T x) { return x * x; }, [](T x, T) { return T(2) * x; });
}

template <typename T>
Var<T> sqrt(Var<T> a) {
  return unary(
      a, [](T x) { return std::sqrt(x); }, [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

template <typename T>
Var<T> abs(Var<T> a) {
  return unary(
      a, [](T x) { return std::abs(x); }, [](T x, T) { return x > T(0) ? T(1) : (x < T(0) ? T(-1) : T(0)); });
}

template <typename T>
Var<T> sigmoid(Var<T> a) {
  return unary(
      a, [](T x) { return T(1) / (T(1) + std::exp(-x)); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Var<T> relu(Var<T> a) {
  return unary(
      a, [](T x) { return x > T(0) ? x : T(0); }, [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Var<T> tanh(Var<T> a) {
  return unary(
      a, [](T x) { return std::tanh(x); }, [](T, T y) { return T(1) - y * y; });
}

template <typename T>
Var<T> sum(Var<T> a) {
  double acc = 0;
  for (T v : a.value().data()) acc += v;
  const std::size_t ai = a.id;
  return a.tape->record(Tensor<T>({1}, {static_cast<T>(acc)}), {a}, [ai](Tape<T>& t, std::size_t self) {
    const T gy = t.grad_of(self)[0];
    Tensor<T>& g = t.grad_buffer(ai);
    for (auto& v : g.data()) v += gy;
  });
}

template <typename T>
Var<T> mean(Var<T> a) {
  double acc = 0;
  for (T v : a.value().data()) acc += v;
  const double n = static_cast<double>(a.value().size());
  const std::size_t ai = a.id;
  return a.tape->record(Tensor<T>({1}, {static_cast<T>(acc / n)}), {a}, [ai, n](Tape<T>& t, std::size_t self) {
    const T gy = static_cast<T>(t.grad_of(self)[0] / n);
    Tensor<T>& g = t.grad_buffer(ai);
    for (auto& v : g.data()) v += gy;
  });
}

template <typename T>
Var<T> reshape(Var<T> a, Shape shape) {
  Tensor<T> y = a.value().reshaped(std::move(shape));
  const std::size_t ai = a.id;
  return a.tape->record(std::move(y), {a}, [ai](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    Tensor<T>& g = t.grad_buffer(ai);
    for (std::size_t i = 0; i < gy.size(); ++i) g[i] += gy[i];
  });
}

template <typename T>
Var<T> concat_channels(const std::vector<Var<T>>& xs) {
  if (xs.empty()) throw std::invalid_argument("concat_channels: no inputs");
  const Nchw first = nchw(xs[0].shape(), "concat_channels");
  std::size_t total = 0;
  std::vector<std::size_t> chans;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Nchw d = nchw(xs[k].shape(), "concat_channels");
    if (d.n != first.n) throw std::invalid_argument("concat_channels: input " + std::to_string(k) + " batch differs");
    if (d.h != first.h) throw std::invalid_argument("concat_channels: input " + std::to_string(k) + " height differs");
    if (d.w != first.w) throw std::invalid_argument("concat_channels: input " + std::to_string(k) + " width differs");
    chans.push_back(d.c);
    total += d.c;
  }
  const std::size_t hw = first.h * first.w;
  Tensor<T> y({first.n, total, first.h, first.w});
  std::size_t offset = 0;
  for (std::size_t k = 0; k < xs.size(); ++k) {
    const Tensor<T>& x = xs[k].value();
    for (std::size_t n = 0; n < first.n; ++n) {
      std::copy_n(x.raw() + n * chans[k] * hw, chans[k] * hw, y.raw() + (n * total + offset) * hw);
    }
    offset += chans[k];
  }
  std::vector<std::size_t> ids;
  for (const auto& x : xs) ids.push_back(x.id);
  return xs[0].tape->record(std::move(y), xs, [ids, chans, total, first, hw](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    std::size_t offset = 0;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      accumulate(t, ids[k], [&](Tensor<T>& g) {
        for (std::size_t n = 0; n < first.n; ++n) {
          const T* src = gy.raw() + (n * total + offset) * hw;
          T* dst = g.raw() + n * chans[k] * hw;
          for (std::size_t i = 0; i < chans[k] * hw; ++i) dst[i] += src[i];
        }
      });
      offset += chans[k];
    }
  });
}

template <typename T>
std::pair<Var<T>, Var<T>> split_channels_in_two(Var<T> x) {
  const Nchw d = nchw(x.shape(), "split_channels_in_two");
  if (d.c % 2) {
    throw std::invalid_argument("split_channels_in_two: channel dimension 1 is odd (" + std::to_string(d.c) + ")");
  }
  const std::size_t half = d.c / 2;
  const std::size_t hw = d.h * d.w;
  auto slice = [&](std::size_t start) {
    Tensor<T> y({d.n, half, d.h, d.w});
    const Tensor<T>& xv = x.value();
    for (std::size_t n = 0; n < d.n; ++n) {
      std::copy_n(xv.raw() + (n * d.c + start) * hw, half * hw, y.raw() + n * half * hw);
    }
    const std::size_t xi = x.id;
    return x.tape->record(std::move(y), {x}, [xi, d, half, hw, start](Tape<T>& t, std::size_t self) {
      const Tensor<T>& gy = t.grad_of(self);
      Tensor<T>& g = t.grad_buffer(xi);
      for (std::size_t n = 0; n < d.n; ++n) {
        const T* src = gy.raw() + n * half * hw;
        T* dst = g.raw() + (n * d.c + start) * hw;
        for (std::size_t i = 0; i < half * hw; ++i) dst[i] += src[i];
      }
    });
  };
  Var<T> first = slice(0);
  Var<T> second = slice(half);
  return {first, second};
}

template <typename T>
Var<T> global_avg_pool(Var<T> x) {
  const Nchw d = nchw(x.shape(), "global_avg_pool");
  const std::size_t hw = d.h * d.w;
  Tensor<T> y({d.n, d.c, 1, 1});
  const Tensor<T>& xv = x.value();
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    double acc = 0;
    for (std::size_t i = 0; i < hw; ++i) acc += xv[p * hw + i];
    y[p] = static_cast<T>(acc / static_cast<double>(hw));
  }
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {x}, [xi, d, hw](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    Tensor<T>& g = t.grad_buffer(xi);
    for (std::size_t p = 0; p < d.n * d.c; ++p) {
      const T v = gy[p] / static_cast<T>(hw);
      for (std::size_t i = 0; i < hw; ++i) g[p * hw + i] += v;
    }
  });
}

template <typename T>
Var<T> channel_scale(Var<T> x, Var<T> s) {
  const Nchw d = nchw(x.shape(), "channel_scale");
  const Nchw ds = nchw(s.shape(), "channel_scale (scale)");
  if (ds.c != d.c) throw std::invalid_argument("channel_scale: scale channel dimension 1 differs from input");
  if (ds.h != 1 || ds.w != 1) throw std::invalid_argument("channel_scale: scale spatial dimensions must be 1");
  if (ds.n != d.n && ds.n != 1) throw std::invalid_argument("channel_scale: scale batch dimension 0 must be 1 or N");
  const bool broadcast = ds.n == 1;
  const std::size_t hw = d.h * d.w;
  Tensor<T> y = x.value();
  const Tensor<T>& sv = s.value();
  for (std::size_t n = 0; n < d.n; ++n) {
    for (std::size_t c = 0; c < d.c; ++c) {
      const T f = sv[(broadcast ? 0 : n) * d.c + c];
      T* row = y.raw() + (n * d.c + c) * hw;
      for (std::size_t i = 0; i < hw; ++i) row[i] *= f;
    }
  }
  const std::size_t xi = x.id, si = s.id;
  return x.tape->record(std::move(y), {x, s}, [xi, si, d, hw, broadcast](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    const Tensor<T>& xv = t.value(xi);
    const Tensor<T>& sv = t.value(si);
    accumulate(t, xi, [&](Tensor<T>& g) {
      for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t c = 0; c < d.c; ++c) {
          const T f = sv[(broadcast ? 0 : n) * d.c + c];
          const std::size_t base = (n * d.c + c) * hw;
          for (std::size_t i = 0; i < hw; ++i) g[base + i] += gy[base + i] * f;
        }
      }
    });
    accumulate(t, si, [&](Tensor<T>& g) {
      for (std::size_t n = 0; n < d.n; ++n) {
        for (std::size_t c = 0; c < d.c; ++c) {
          const std::size_t base = (n * d.c + c) * hw;
          T acc = 0;
          for (std::size_t i = 0; i < hw; ++i) acc += gy[base + i] * xv[base + i];
          g[(broadcast ? 0 : n) * d.c + c] += acc;
        }
      }
    });
  });
}

template <typename T>
Var<T> pad_replicate(Var<T> x, std::size_t pad) {
  const Nchw d = nchw(x.shape(), "pad_replicate");
  const std::size_t ho = d.h + 2 * pad, wo = d.w + 2 * pad;
  auto src_index = [=](std::size_t oh, std::size_t ow) {
    const std::size_t ih = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(oh) - static_cast<std::ptrdiff_t>(pad), 0,
                                                      static_cast<std::ptrdiff_t>(d.h) - 1);
    const std::size_t iw = std::clamp<std::ptrdiff_t>(static_cast<std::ptrdiff_t>(ow) - static_cast<std::ptrdiff_t>(pad), 0,
                                                      static_cast<std::ptrdiff_t>(d.w) - 1);
    return ih * d.w + iw;
  };
  Tensor<T> y({d.n, d.c, ho, wo});
  const Tensor<T>& xv = x.value();
  for (std::size_t p = 0; p < d.n * d.c; ++p) {
    for (std::size_t oh = 0; oh < ho; ++oh) {
      for (std::size_t ow = 0; ow < wo; ++ow) y[(p * ho + oh) * wo + ow] = xv[p * d.h * d.w + src_index(oh, ow)];
    }
  }
  const std::size_t xi = x.id;
  return x.tape->record(std::move(y), {x}, [xi, d, ho, wo, src_index](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    Tensor<T>& g = t.grad_buffer(xi);
    for (std::size_t p = 0; p < d.n * d.c; ++p) {
      for (std::size_t oh = 0; oh < ho; ++oh) {
        for (std::size_t ow = 0; ow < wo; ++ow) g[p * d.h * d.w + src_index(oh, ow)] += gy[(p * ho + oh) * wo + ow];
      }
    }
  });
}

namespace {

struct MatDims {
  std::size_t batch, m, k, n;
};

// c[b] (+)= op(a[b]) * op(b[b]) with optional transposes; row-major.
template <typename T>
void batched_gemm(const MatDims& d, const T* a, bool ta, const T* b, bool tb, T* c) {
  for (std::size_t bi = 0; bi < d.batch; ++bi) {
    const T* A = a + bi * d.m * d.k;
    const T* B = b + bi * d.k * d.n;
    T* C = c + bi * d.m * d.n;
    for (std::size_t i = 0; i < d.m; ++i) {
      for (std::size_t p = 0; p < d.k; ++p) {
        const T av = ta ? A[p * d.m + i] : A[i * d.k + p];
        if (av == T(0)) continue;
        if (tb) {
          for (std::size_t j = 0; j < d.n; ++j) C[i * d.n + j] += av * B[j * d.k + p];
        } else {
          const T* Brow = B + p * d.n;
          T* Crow = C + i * d.n;
          for (std::size_t j = 0; j < d.n; ++j) Crow[j] += av * Brow[j];
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Var<T> matmul(Var<T> a, Var<T> b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa.size() != sb.size() || (sa.size() != 2 && sa.size() != 3)) {
    throw std::invalid_argument("matmul: expected two rank-2 or two rank-3 operands, got " + shape_str(sa) + " and " +
                                shape_str(sb));
  }
  const bool batched = sa.size() == 3;
  const std::size_t off = batched ? 1 : 0;
  if (batched && sa[0] != sb[0]) throw std::invalid_argument("matmul: batch dimension 0 differs");
  if (sa[off + 1] != sb[off]) {
    throw std::invalid_argument("matmul: inner dimension mismatch (" + std::to_string(sa[off + 1]) + " vs " +
                                std::to_string(sb[off]) + ")");
  }
  const MatDims d{batched ? sa[0] : 1, sa[off], sa[off + 1], sb[off + 1]};
  Shape out_shape = batched ? Shape{d.batch, d.m, d.n} : Shape{d.m, d.n};
  Tensor<T> y(out_shape);
  batched_gemm(d, a.value().raw(), false, b.value().raw(), false, y.raw());
  const std::size_t ai = a.id, bi = b.id;
  return a.tape->record(std::move(y), {a, b}, [ai, bi, d](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    // dA = dC * B^T  (m x n by n x k)
    accumulate(t, ai, [&](Tensor<T>& g) {
      batched_gemm(MatDims{d.batch, d.m, d.n, d.k}, gy.raw(), false, t.value(bi).raw(), true, g.raw());
    });
    // dB = A^T * dC  (k x m by m x n)
    accumulate(t, bi, [&](Tensor<T>& g) {
      batched_gemm(MatDims{d.batch, d.k, d.m, d.n}, t.value(ai).raw(), true, gy.raw(), false, g.raw());
    });
  });
}

template <typename T>
Var<T> transpose(Var<T> a) {
  const Shape& s = a.shape();
  if (s.size() < 2) throw std::invalid_argument("transpose: rank must be at least 2, got " + shape_str(s));
  const std::size_t r = s[s.size() - 2], c = s[s.size() - 1];
  const std::size_t batch = a.value().size() / (r * c);
  Shape out_shape = s;
  std::swap(out_shape[s.size() - 2], out_shape[s.size() - 1]);
  auto permute = [batch, r, c](const T* src, T* dst, bool accumulate_into) {
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) {
          T& out = dst[b * r * c + j * r + i];
          out = accumulate_into ? out + src[b * r * c + i * c + j] : src[b * r * c + i * c + j];
        }
      }
    }
  };
  Tensor<T> y(out_shape);
  permute(a.value().raw(), y.raw(), false);
  const std::size_t ai = a.id;
  // Gradient flows through the inverse permutation: swap roles of r and c.
  return a.tape->record(std::move(y), {a}, [ai, batch, r, c](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    Tensor<T>& g = t.grad_buffer(ai);
    for (std::size_t b = 0; b < batch; ++b) {
      for (std::size_t i = 0; i < r; ++i) {
        for (std::size_t j = 0; j < c; ++j) g[b * r * c + i * c + j] += gy[b * r * c + j * r + i];
      }
    }
  });
}

template <typename T>
Var<T> softmax_rows(Var<T> a) {
  const Shape& s = a.shape();
  const std::size_t cols = s.back();
  const std::size_t rows = a.value().size() / cols;
  Tensor<T> y(s);
  const Tensor<T>& x = a.value();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = x.raw() + r * cols;
    T* yr = y.raw() + r * cols;
    const T mx = *std::max_element(xr, xr + cols);
    T total = 0;
    for (std::size_t j = 0; j < cols; ++j) {
      yr[j] = std::exp(xr[j] - mx);
      total += yr[j];
    }
    for (std::size_t j = 0; j < cols; ++j) yr[j] /= total;
  }
  const std::size_t ai = a.id;
  return a.tape->record(std::move(y), {a}, [ai, rows, cols](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    const Tensor<T>& y = t.value(self);
    Tensor<T>& g = t.grad_buffer(ai);
    for (std::size_t r = 0; r < rows; ++r) {
      T dot = 0;
      for (std::size_t j = 0; j < cols; ++j) dot += gy[r * cols + j] * y[r * cols + j];
      for (std::size_t j = 0; j < cols; ++j) g[r * cols + j] += y[r * cols + j] * (gy[r * cols + j] - dot);
    }
  });
}

template <typename T>
Var<T> conv2d(Var<T> input, Var<T> weight, std::optional<Var<T>> bias, std::size_t stride, std::size_t padding,
              std::size_t groups) {
  const Nchw d = nchw(input.shape(), "conv2d (input)");
  const Nchw wd = nchw(weight.shape(), "conv2d (weight)");
  if (groups == 0 || d.c % groups) {
    throw std::invalid_argument("conv2d: input channel dimension 1 (" + std::to_string(d.c) +
                                ") not divisible by groups " + std::to_string(groups));
  }
  if (wd.n % groups) {
    throw std::invalid_argument("conv2d: weight dimension 0 (" + std::to_string(wd.n) + ") not divisible by groups");
  }
  if (wd.c != d.c / groups) {
    throw std::invalid_argument("conv2d: weight dimension 1 is " + std::to_string(wd.c) + ", expected C/groups = " +
                                std::to_string(d.c / groups));
  }
  if (wd.h != wd.w) throw std::invalid_argument("conv2d: weight dimensions 2 and 3 must be equal (square kernel)");
  if (wd.h % 2 == 0) throw std::invalid_argument("conv2d: kernel size (weight dimension 2) must be odd");
  if (stride == 0) throw std::invalid_argument("conv2d: stride must be positive");
  if (d.h + 2 * padding < wd.h || d.w + 2 * padding < wd.w) {
    throw std::invalid_argument("conv2d: input height/width (dimensions 2/3) smaller than the kernel");
  }
  if (bias && (bias->value().size() != wd.n)) {
    throw std::invalid_argument("conv2d: bias length " + std::to_string(bias->value().size()) +
                                " does not match weight dimension 0 (" + std::to_string(wd.n) + ")");
  }
  kernels::Conv2dGeometry g{d.n, d.c, d.h, d.w, wd.n, wd.h, stride, padding, groups};
  Tensor<T> y({d.n, wd.n, g.out_height(), g.out_width()});
  std::span<const T> bspan;
  if (bias) bspan = bias->value().data();
  kernels::conv2d_forward<T>(g, input.value().data(), weight.value().data(), bspan, y.data());

  std::vector<Var<T>> inputs{input, weight};
  if (bias) inputs.push_back(*bias);
  const std::size_t xi = input.id, wi = weight.id;
  const std::optional<std::size_t> bi = bias ? std::optional<std::size_t>(bias->id) : std::nullopt;
  return input.tape->record(std::move(y), inputs, [g, xi, wi, bi](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    accumulate(t, xi, [&](Tensor<T>& gx) {
      kernels::conv2d_backward_input<T>(g, gy.data(), t.value(wi).data(), gx.data());
    });
    const bool need_w = t.requires_grad(wi);
    const bool need_b = bi && t.requires_grad(*bi);
    if (!need_w && !need_b) return;
    Tensor<T> scratch;
    std::span<T> gw;
    if (need_w) {
      gw = t.grad_buffer(wi).data();
    } else {
      scratch = Tensor<T>(t.value(wi).shape());
      gw = scratch.data();
    }
    std::span<T> gb;
    if (need_b) gb = t.grad_buffer(*bi).data();
    kernels::conv2d_backward_weight<T>(g, gy.data(), t.value(xi).data(), gw, gb);
  });
}

template <typename T>
Var<T> layer_norm(Var<T> input, Var<T> gain, Var<T> offset, T eps) {
  const Nchw d = nchw(input.shape(), "layer_norm");
  if (gain.value().size() != d.c) throw std::invalid_argument("layer_norm: gain length differs from channel dimension 1");
  if (offset.value().size() != d.c) {
    throw std::invalid_argument("layer_norm: offset length differs from channel dimension 1");
  }
  const std::size_t hw = d.h * d.w;
  const Tensor<T>& x = input.value();
  const Tensor<T>& gv = gain.value();
  const Tensor<T>& ov = offset.value();
  Tensor<T> y(x.shape());
  Tensor<T> xhat(x.shape());
  std::vector<T> rstd(d.n * hw);
  for (std::size_t n = 0; n < d.n; ++n) {
    const T* xs = x.raw() + n * d.c * hw;
    for (std::size_t p = 0; p < hw; ++p) {
      T mu = 0;
      for (std::size_t c = 0; c < d.c; ++c) mu += xs[c * hw + p];
      mu /= static_cast<T>(d.c);
      T var = 0;
      for (std::size_t c = 0; c < d.c; ++c) {
        const T dv = xs[c * hw + p] - mu;
        var += dv * dv;
      }
      var /= static_cast<T>(d.c);
      const T r = T(1) / std::sqrt(var + eps);
      rstd[n * hw + p] = r;
      for (std::size_t c = 0; c < d.c; ++c) {
        const std::size_t i = (n * d.c + c) * hw + p;
        xhat[i] = (x[i] - mu) * r;
        y[i] = gv[c] * xhat[i] + ov[c];
      }
    }
  }
  const std::size_t xi = input.id, gi = gain.id, oi = offset.id;
  return input.tape->record(
      std::move(y), {input, gain, offset},
      [xi, gi, oi, d, hw, xhat = std::move(xhat), rstd = std::move(rstd)](Tape<T>& t, std::size_t self) {
        const Tensor<T>& gy = t.grad_of(self);
        const Tensor<T>& gv = t.value(gi);
        accumulate(t, xi, [&](Tensor<T>& gx) {
          const T inv_c = T(1) / static_cast<T>(d.c);
          for (std::size_t n = 0; n < d.n; ++n) {
            for (std::size_t p = 0; p < hw; ++p) {
              T mean_g = 0, mean_gx = 0;
              for (std::size_t c = 0; c < d.c; ++c) {
                const std::size_t i = (n * d.c + c) * hw + p;
                const T gh = gy[i] * gv[c];
                mean_g += gh;
                mean_gx += gh * xhat[i];
              }
              mean_g *= inv_c;
              mean_gx *= inv_c;
              const T r = rstd[n * hw + p];
              for (std::size_t c = 0; c < d.c; ++c) {
                const std::size_t i = (n * d.c + c) * hw + p;
                gx[i] += r * (gy[i] * gv[c] - mean_g - xhat[i] * mean_gx);
              }
            }
          }
        });
        accumulate(t, gi, [&](Tensor<T>& gg) {
          for (std::size_t n = 0; n < d.n; ++n)
            for (std::size_t c = 0; c < d.c; ++c) {
              T acc = 0;
              for (std::size_t p = 0; p < hw; ++p) acc += gy[(n * d.c + c) * hw + p] * xhat[(n * d.c + c) * hw + p];
              gg[c] += acc;
            }
        });
        accumulate(t, oi, [&](Tensor<T>& go) {
          for (std::size_t n = 0; n < d.n; ++n)
            for (std::size_t c = 0; c < d.c; ++c) {
              T acc = 0;
              for (std::size_t p = 0; p < hw; ++p) acc += gy[(n * d.c + c) * hw + p];
              go[c] += acc;
            }
        });
      });
}

namespace {

// H*W * Re(ifft2(re + i*im)): the adjoint of the forward real-input DFT.
template <typename T>
void accumulate_dft_adjoint(const Tensor<T>& re, const Tensor<T>& im, Tensor<T>& g) {
  const std::size_t h = re.dim(re.rank() - 2), w = re.dim(re.rank() - 1);
  ComplexPlane<T> spec{re, im};
  ComplexPlane<T> back = fft2(spec, true);
  const T hw = static_cast<T>(h * w);
  for (std::size_t i = 0; i < g.size(); ++i) g[i] += hw * back.real[i];
}

}  // namespace

template <typename T>
ComplexVar<T> fft2(Var<T> x) {
  ComplexPlane<T> z = lvr::fft2(x.value());
  const std::size_t xi = x.id;
  Var<T> re = x.tape->record(std::move(z.real), {x}, [xi](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    accumulate_dft_adjoint(gy, Tensor<T>(gy.shape()), t.grad_buffer(xi));
  });
  Var<T> im = x.tape->record(std::move(z.imag), {x}, [xi](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    accumulate_dft_adjoint(Tensor<T>(gy.shape()), gy, t.grad_buffer(xi));
  });
  return {re, im};
}

template <typename T>
Var<T> amplitude(const ComplexVar<T>& z) {
  require_same_shape(z.real, z.imag, "amplitude");
  const Tensor<T>& re = z.real.value();
  const Tensor<T>& im = z.imag.value();
  Tensor<T> y(re.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::hypot(re[i], im[i]);
  const std::size_t ri = z.real.id, ii = z.imag.id;
  return z.real.tape->record(std::move(y), {z.real, z.imag}, [ri, ii](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    const Tensor<T>& a = t.value(self);
    const Tensor<T>& re = t.value(ri);
    const Tensor<T>& im = t.value(ii);
    const T floor = static_cast<T>(kSpectralFloor);
    accumulate(t, ri, [&](Tensor<T>& g) {
      for (std::size_t i = 0; i < gy.size(); ++i)
        if (a[i] >= floor) g[i] += gy[i] * re[i] / a[i];
    });
    accumulate(t, ii, [&](Tensor<T>& g) {
      for (std::size_t i = 0; i < gy.size(); ++i)
        if (a[i] >= floor) g[i] += gy[i] * im[i] / a[i];
    });
  });
}

template <typename T>
Var<T> phase(const ComplexVar<T>& z) {
  require_same_shape(z.real, z.imag, "phase");
  const Tensor<T>& re = z.real.value();
  const Tensor<T>& im = z.imag.value();
  Tensor<T> y(re.shape());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::atan2(im[i], re[i]);
  const std::size_t ri = z.real.id, ii = z.imag.id;
  return z.real.tape->record(std::move(y), {z.real, z.imag}, [ri, ii](Tape<T>& t, std::size_t self) {
    const Tensor<T>& gy = t.grad_of(self);
    const Tensor<T>& re = t.value(ri);
    const Tensor<T>& im = t.value(ii);
    const T floor = static_cast<T>(kSpectralFloor);
    auto mag2 = [&](std::size_t i) { return re[i] * re[i] + im[i] * im[i]; };
    accumulate(t, ri, [&](Tensor<T>& g) {
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const T m2 = mag2(i);
        if (std::sqrt(m2) >= floor) g[i] -= gy[i] * im[i] / m2;
      }
    });
    accumulate(t, ii, [&](Tensor<T>& g) {
      for (std::size_t i = 0; i < gy.size(); ++i) {
        const T m2 = mag2(i);
        if (std::sqrt(m2) >= floor) g[i] += gy[i] * re[i] / m2;
      }
    });
  });
}

#define LVR_INSTANTIATE_OPS(T)                                                                              \
  template Var<T> add<T>(Var<T>, Var<T>);                                                                   \
  template Var<T> sub<T>(Var<T>, Var<T>);                                                                   \
  template Var<T> mul<T>(Var<T>, Var<T>);                                                                   \
  template Var<T> scale<T>(Var<T>, T);                                                                      \
  template Var<T> add_scalar<T>(Var<T>, T);                                                                 \
  template Var<T> square<T>(Var<T>);                                                                        \
  template Var<T> sqrt<T>(Var<T>);                                                                          \
  template Var<T> abs<T>(Var<T>);                                                                           \
  template Var<T> sigmoid<T>(Var<T>);                                                                       \
  template Var<T> relu<T>(Var<T>);                                                                          \
  template Var<T> tanh<T>(Var<T>);                                                                          \
  template Var<T> sum<T>(Var<T>);                                                                           \
  template Var<T> mean<T>(Var<T>);                                                                          \
  template Var<T> reshape<T>(Var<T>, Shape);                                                                \
  template Var<T> concat_channels<T>(const std::vector<Var<T>>&);                                           \
  template std::pair<Var<T>, Var<T>> split_channels_in_two<T>(Var<T>);                                      \
  template Var<T> global_avg_pool<T>(Var<T>);                                                               \
  template Var<T> channel_scale<T>(Var<T>, Var<T>);                                                         \
  template Var<T> pad_replicate<T>(Var<T>, std::size_t);                                                    \
  template Var<T> matmul<T>(Var<T>, Var<T>);                                                                \
  template Var<T> transpose<T>(Var<T>);                                                                     \
  template Var<T> softmax_rows<T>(Var<T>);                                                                  \
  template Var<T> conv2d<T>(Var<T>, Var<T>, std::optional<Var<T>>, std::size_t, std::size_t, std::size_t); \
  template Var<T> layer_norm<T>(Var<T>, Var<T>, Var<T>, T);                                                 \
  template ComplexVar<T> fft2<T>(Var<T>);                                                                   \
  template Var<T> amplitude<T>(const ComplexVar<T>&);                                                       \
  template Var<T> phase<T>(const ComplexVar<T>&);

LVR_INSTANTIATE_OPS(float)
LVR_INSTANTIATE_OPS(double)

}  // namespace lvr::ops
