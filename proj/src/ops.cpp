#include "tmnn/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

namespace tmnn::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MapMat = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMapMat = Eigen::Map<const RowMat<T>>;

template <typename T>
void check_finite_impl(std::span<const T> values, const char* op) {
  for (T v : values) {
    if (!std::isfinite(v)) throw NumericalError(std::string("non-finite value produced by ") + op);
  }
}

// Gradient buffer of an input, or an empty span when the input is not tracked.
template <typename T>
std::span<T> grad_of(const Tensor<T>& t) {
  if (!t.requires_grad()) return {};
  return t.ensure_grad();
}

struct BroadcastPlan {
  Shape out;
  bool same = false;
  std::vector<std::size_t> index_a;
  std::vector<std::size_t> index_b;
};

BroadcastPlan plan_broadcast(const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  std::vector<std::size_t> pa(rank, 1), pb(rank, 1);
  std::copy(a.begin(), a.end(), pa.begin() + static_cast<std::ptrdiff_t>(rank - a.size()));
  std::copy(b.begin(), b.end(), pb.begin() + static_cast<std::ptrdiff_t>(rank - b.size()));
  plan.out.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) {
    if (pa[i] == pb[i] || pb[i] == 1) {
      plan.out[i] = pa[i];
    } else if (pa[i] == 1) {
      plan.out[i] = pb[i];
    } else {
      throw ShapeError("cannot broadcast " + shape_string(a) + " with " + shape_string(b));
    }
  }
  // Strides with zero on broadcast axes.
  std::vector<std::size_t> sa(rank), sb(rank);
  std::size_t ra = 1, rb = 1;
  for (std::size_t i = rank; i-- > 0;) {
    sa[i] = pa[i] == 1 ? 0 : ra;
    sb[i] = pb[i] == 1 ? 0 : rb;
    ra *= pa[i];
    rb *= pb[i];
  }
  const std::size_t n = shape_numel(plan.out);
  plan.index_a.resize(n);
  plan.index_b.resize(n);
  std::vector<std::size_t> idx(rank, 0);
  for (std::size_t flat = 0; flat < n; ++flat) {
    std::size_t ia = 0, ib = 0;
    for (std::size_t d = 0; d < rank; ++d) {
      ia += idx[d] * sa[d];
      ib += idx[d] * sb[d];
    }
    plan.index_a[flat] = ia;
    plan.index_b[flat] = ib;
    for (std::size_t d = rank; d-- > 0;) {
      if (++idx[d] < plan.out[d]) break;
      idx[d] = 0;
    }
  }
  return plan;
}

template <typename T, typename Fwd, typename DA, typename DB>
Tensor<T> binary(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b, const char* name, Fwd fwd,
                 DA da, DB db) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(a.shape(), b.shape()));
  Tensor<T> out(plan->out);
  auto o = out.data();
  auto av = a.data();
  auto bv = b.data();
  if (plan->same) {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(av[i], bv[i]);
  } else {
    for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(av[plan->index_a[i]], bv[plan->index_b[i]]);
  }
  check_finite_impl<T>(o, name);
  if (g.tracks({&a, &b})) {
    g.record(name, {a, b}, out, [a, b, out, plan, da, db]() mutable {
      auto go = out.grad();
      auto av = a.data();
      auto bv = b.data();
      auto ga = grad_of(a);
      auto gb = grad_of(b);
      for (std::size_t i = 0; i < go.size(); ++i) {
        const std::size_t ia = plan->same ? i : plan->index_a[i];
        const std::size_t ib = plan->same ? i : plan->index_b[i];
        if (!ga.empty()) ga[ia] += go[i] * da(av[ia], bv[ib]);
        if (!gb.empty()) gb[ib] += go[i] * db(av[ia], bv[ib]);
      }
    });
  }
  return out;
}

// dfdx receives the input value and the forward output.
template <typename T, typename Fwd, typename Deriv>
Tensor<T> unary(Graph<T>& g, const Tensor<T>& a, const char* name, Fwd fwd, Deriv dfdx) {
  Tensor<T> out(a.shape());
  auto o = out.data();
  auto av = a.data();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] = fwd(av[i]);
  check_finite_impl<T>(o, name);
  if (g.tracks({&a})) {
    g.record(name, {a}, out, [a, out, dfdx]() mutable {
      auto go = out.grad();
      auto ga = grad_of(a);
      auto av = a.data();
      auto ov = out.data();
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i] * dfdx(av[i], ov[i]);
    });
  }
  return out;
}

template <typename T>
T stable_sigmoid(T x) {
  if (x >= T(0)) return T(1) / (T(1) + std::exp(-x));
  const T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
T stable_softplus(T x) {
  return x > T(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename T>
void im2col(const T* x, std::size_t channels, std::size_t height, std::size_t width, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w,
            T* cols) {
  const std::size_t spatial = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        T* row = cols + ((c * kh + i) * kw + j) * spatial;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + i) - static_cast<std::ptrdiff_t>(pad);
          T* dst = row + oy * out_w;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) {
            std::fill(dst, dst + out_w, T(0));
            continue;
          }
          const T* src = x + (c * height + static_cast<std::size_t>(iy)) * width;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(width)) ? T(0) : src[ix];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im(const T* cols, std::size_t channels, std::size_t height, std::size_t width, std::size_t kh,
            std::size_t kw, std::size_t stride, std::size_t pad, std::size_t out_h, std::size_t out_w,
            T* x) {
  const std::size_t spatial = out_h * out_w;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const T* row = cols + ((c * kh + i) * kw + j) * spatial;
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + i) - static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(height)) continue;
          T* dst = x + (c * height + static_cast<std::size_t>(iy)) * width;
          const T* src = row + oy * out_w;
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + j) - static_cast<std::ptrdiff_t>(pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(width)) dst[ix] += src[ox];
          }
        }
      }
    }
  }
}

}  // namespace

void check_finite(std::span<const float> values, const char* op) { check_finite_impl(values, op); }
void check_finite(std::span<const double> values, const char* op) { check_finite_impl(values, op); }

template <typename T>
Tensor<T> add(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      g, a, b, "add", [](T x, T y) { return x + y; }, [](T, T) { return T(1); },
      [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> sub(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      g, a, b, "sub", [](T x, T y) { return x - y; }, [](T, T) { return T(1); },
      [](T, T) { return T(-1); });
}

template <typename T>
Tensor<T> mul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  return binary(
      g, a, b, "mul", [](T x, T y) { return x * y; }, [](T, T y) { return y; },
      [](T x, T) { return x; });
}

template <typename T>
Tensor<T> scale(Graph<T>& g, const Tensor<T>& a, T factor) {
  return unary(
      g, a, "scale", [factor](T x) { return x * factor; }, [factor](T, T) { return factor; });
}

template <typename T>
Tensor<T> add_scalar(Graph<T>& g, const Tensor<T>& a, T offset) {
  return unary(
      g, a, "add_scalar", [offset](T x) { return x + offset; }, [](T, T) { return T(1); });
}

template <typename T>
Tensor<T> clamp_max(Graph<T>& g, const Tensor<T>& a, T limit) {
  return unary(
      g, a, "clamp_max", [limit](T x) { return std::min(x, limit); },
      [limit](T x, T) { return x < limit ? T(1) : T(0); });
}

template <typename T>
Tensor<T> relu(Graph<T>& g, const Tensor<T>& a) {
  return unary(
      g, a, "relu", [](T x) { return x > T(0) ? x : T(0); },
      [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> sigmoid(Graph<T>& g, const Tensor<T>& a) {
  return unary(
      g, a, "sigmoid", [](T x) { return stable_sigmoid(x); }, [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> softplus(Graph<T>& g, const Tensor<T>& a) {
  return unary(
      g, a, "softplus", [](T x) { return stable_softplus(x); }, [](T x, T) { return stable_sigmoid(x); });
}

template <typename T>
Tensor<T> log1p(Graph<T>& g, const Tensor<T>& a) {
  for (T v : a.data()) {
    if (v <= T(-1)) throw NumericalError("log1p argument must exceed -1");
  }
  return unary(
      g, a, "log1p", [](T x) { return std::log1p(x); }, [](T x, T) { return T(1) / (T(1) + x); });
}

template <typename T>
Tensor<T> sum(Graph<T>& g, const Tensor<T>& a) {
  T total = T(0);
  for (T v : a.data()) total += v;
  Tensor<T> out = Tensor<T>::scalar(total);
  check_finite_impl<T>(out.data(), "sum");
  if (g.tracks({&a})) {
    g.record("sum", {a}, out, [a, out]() mutable {
      const T go = out.grad()[0];
      for (auto& v : grad_of(a)) v += go;
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean(Graph<T>& g, const Tensor<T>& a) {
  return scale(g, sum(g, a), T(1) / static_cast<T>(a.numel()));
}

template <typename T>
Tensor<T> reshape(Graph<T>& g, const Tensor<T>& a, Shape shape) {
  if (shape_numel(shape) != a.numel()) {
    throw ShapeError("cannot reshape " + shape_string(a.shape()) + " to " + shape_string(shape));
  }
  Tensor<T> out(std::move(shape), a.values());
  if (g.tracks({&a})) {
    g.record("reshape", {a}, out, [a, out]() mutable {
      auto go = out.grad();
      auto ga = grad_of(a);
      for (std::size_t i = 0; i < go.size(); ++i) ga[i] += go[i];
    });
  }
  return out;
}

template <typename T>
Tensor<T> stack(Graph<T>& g, std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw ShapeError("stack of zero tensors");
  const Shape& part_shape = parts[0].shape();
  Shape shape{parts.size()};
  shape.insert(shape.end(), part_shape.begin(), part_shape.end());
  const std::size_t chunk = parts[0].numel();
  std::vector<T> values;
  values.reserve(chunk * parts.size());
  bool tracked = false;
  for (const auto& p : parts) {
    if (p.shape() != part_shape) throw ShapeError("stack requires equal shapes");
    values.insert(values.end(), p.data().begin(), p.data().end());
    tracked = tracked || g.tracks({&p});
  }
  Tensor<T> out(std::move(shape), std::move(values));
  if (tracked) {
    std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
    g.record("stack", inputs, out, [inputs, out, chunk]() mutable {
      auto go = out.grad();
      for (std::size_t p = 0; p < inputs.size(); ++p) {
        auto gp = grad_of(inputs[p]);
        if (gp.empty()) continue;
        for (std::size_t i = 0; i < chunk; ++i) gp[i] += go[p * chunk + i];
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> matmul(Graph<T>& g, const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.size(1) != b.size(0)) {
    throw ShapeError("matmul dimension mismatch: " + shape_string(a.shape()) + " . " +
                     shape_string(b.shape()));
  }
  const auto m = static_cast<Eigen::Index>(a.size(0));
  const auto k = static_cast<Eigen::Index>(a.size(1));
  const auto n = static_cast<Eigen::Index>(b.size(1));
  Tensor<T> out(Shape{a.size(0), b.size(1)});
  MapMat<T>(out.data().data(), m, n).noalias() =
      ConstMapMat<T>(a.data().data(), m, k) * ConstMapMat<T>(b.data().data(), k, n);
  check_finite_impl<T>(out.data(), "matmul");
  if (g.tracks({&a, &b})) {
    g.record("matmul", {a, b}, out, [a, b, out, m, k, n]() mutable {
      ConstMapMat<T> go(out.grad().data(), m, n);
      if (a.requires_grad()) {
        MapMat<T>(a.ensure_grad().data(), m, k).noalias() +=
            go * ConstMapMat<T>(b.data().data(), k, n).transpose();
      }
      if (b.requires_grad()) {
        MapMat<T>(b.ensure_grad().data(), k, n).noalias() +=
            ConstMapMat<T>(a.data().data(), m, k).transpose() * go;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv1d_bank(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& kernels) {
  if (x.rank() != 2 || kernels.rank() != 2) throw ShapeError("conv1d_bank expects x [R x T] and kernels [M x L]");
  const std::size_t rows = x.size(0), len = x.size(1);
  const std::size_t n_kernels = kernels.size(0), klen = kernels.size(1);
  if (klen % 2 == 0) throw ShapeError("conv1d kernel length must be odd, got " + std::to_string(klen));
  const auto center = static_cast<std::ptrdiff_t>(klen / 2);
  const auto tlen = static_cast<std::ptrdiff_t>(len);

  // y[r,m,t] = sum_j k[m,j] * x[r, t + center - j]
  auto for_each_tap = [=](auto&& body) {
    for (std::size_t j = 0; j < klen; ++j) {
      const std::ptrdiff_t shift = center - static_cast<std::ptrdiff_t>(j);
      const std::ptrdiff_t t0 = std::max<std::ptrdiff_t>(0, -shift);
      const std::ptrdiff_t t1 = std::min<std::ptrdiff_t>(tlen, tlen - shift);
      if (t0 < t1) body(j, shift, t0, t1);
    }
  };

  Tensor<T> out(Shape{rows, n_kernels, len});
  auto o = out.data();
  auto xv = x.data();
  auto kv = kernels.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* xr = xv.data() + r * len;
    for (std::size_t m = 0; m < n_kernels; ++m) {
      T* yr = o.data() + (r * n_kernels + m) * len;
      const T* km = kv.data() + m * klen;
      for_each_tap([&](std::size_t j, std::ptrdiff_t shift, std::ptrdiff_t t0, std::ptrdiff_t t1) {
        const T w = km[j];
        for (std::ptrdiff_t t = t0; t < t1; ++t) yr[t] += w * xr[t + shift];
      });
    }
  }
  check_finite_impl<T>(o, "conv1d");
  if (g.tracks({&x, &kernels})) {
    g.record("conv1d", {x, kernels}, out, [=]() mutable {
      auto go = out.grad();
      auto gx = grad_of(x);
      auto gk = grad_of(kernels);
      auto xv = x.data();
      auto kv = kernels.data();
      for (std::size_t r = 0; r < rows; ++r) {
        const T* xr = xv.data() + r * len;
        for (std::size_t m = 0; m < n_kernels; ++m) {
          const T* gy = go.data() + (r * n_kernels + m) * len;
          for_each_tap([&](std::size_t j, std::ptrdiff_t shift, std::ptrdiff_t t0, std::ptrdiff_t t1) {
            if (!gx.empty()) {
              const T w = kv[m * klen + j];
              T* gxr = gx.data() + r * len;
              for (std::ptrdiff_t t = t0; t < t1; ++t) gxr[t + shift] += w * gy[t];
            }
            if (!gk.empty()) {
              T acc = T(0);
              for (std::ptrdiff_t t = t0; t < t1; ++t) acc += gy[t] * xr[t + shift];
              gk[m * klen + j] += acc;
            }
          });
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> conv1d_same(Graph<T>& g, const Tensor<T>& signal, const Tensor<T>& kernel) {
  if (signal.rank() != 1 || kernel.rank() != 1) throw ShapeError("conv1d_same expects 1-D signal and kernel");
  auto rows = reshape(g, signal, Shape{1, signal.numel()});
  auto bank = reshape(g, kernel, Shape{1, kernel.numel()});
  return reshape(g, conv1d_bank(g, rows, bank), Shape{signal.numel()});
}

template <typename T>
Tensor<T> conv2d(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 std::size_t stride, std::size_t padding) {
  if (x.rank() != 4 || weight.rank() != 4) throw ShapeError("conv2d expects 4-D input and weight");
  const std::size_t batch = x.size(0), channels = x.size(1), height = x.size(2), width = x.size(3);
  const std::size_t out_ch = weight.size(0), kh = weight.size(2), kw = weight.size(3);
  if (weight.size(1) != channels) {
    throw ShapeError("conv2d channel mismatch: input " + shape_string(x.shape()) + ", weight " +
                     shape_string(weight.shape()));
  }
  if (stride == 0) throw ShapeError("conv2d stride must be positive");
  if (height + 2 * padding < kh || width + 2 * padding < kw) throw ShapeError("conv2d kernel larger than padded input");
  if (bias.defined() && (bias.rank() != 1 || bias.size(0) != out_ch)) throw ShapeError("conv2d bias shape mismatch");
  const std::size_t out_h = (height + 2 * padding - kh) / stride + 1;
  const std::size_t out_w = (width + 2 * padding - kw) / stride + 1;
  const std::size_t spatial = out_h * out_w;
  const std::size_t patch = channels * kh * kw;
  const auto ei = [](std::size_t v) { return static_cast<Eigen::Index>(v); };

  Tensor<T> out(Shape{batch, out_ch, out_h, out_w});
  std::vector<T> cols(patch * spatial);
  ConstMapMat<T> wmat(weight.data().data(), ei(out_ch), ei(patch));
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(x.data().data() + b * channels * height * width, channels, height, width, kh, kw, stride, padding,
           out_h, out_w, cols.data());
    MapMat<T> ob(out.data().data() + b * out_ch * spatial, ei(out_ch), ei(spatial));
    ob.noalias() = wmat * ConstMapMat<T>(cols.data(), ei(patch), ei(spatial));
    if (bias.defined()) {
      for (std::size_t o = 0; o < out_ch; ++o) ob.row(ei(o)).array() += bias.data()[o];
    }
  }
  check_finite_impl<T>(out.data(), "conv2d");

  const bool has_bias = bias.defined();
  if (g.tracks({&x, &weight, has_bias ? &bias : nullptr})) {
    std::vector<Tensor<T>> inputs{x, weight};
    if (has_bias) inputs.push_back(bias);
    g.record("conv2d", inputs, out, [=]() mutable {
      auto go = out.grad();
      const bool need_x = x.requires_grad();
      const bool need_w = weight.requires_grad();
      std::vector<T> cols(patch * spatial);
      std::vector<T> gcols(need_x ? patch * spatial : 0);
      ConstMapMat<T> wmat(weight.data().data(), ei(out_ch), ei(patch));
      for (std::size_t b = 0; b < batch; ++b) {
        ConstMapMat<T> gob(go.data() + b * out_ch * spatial, ei(out_ch), ei(spatial));
        if (need_w) {
          im2col(x.data().data() + b * channels * height * width, channels, height, width, kh, kw, stride,
                 padding, out_h, out_w, cols.data());
          MapMat<T>(weight.ensure_grad().data(), ei(out_ch), ei(patch)).noalias() +=
              gob * ConstMapMat<T>(cols.data(), ei(patch), ei(spatial)).transpose();
        }
        if (need_x) {
          MapMat<T>(gcols.data(), ei(patch), ei(spatial)).noalias() = wmat.transpose() * gob;
          col2im(gcols.data(), channels, height, width, kh, kw, stride, padding, out_h, out_w,
                 x.ensure_grad().data() + b * channels * height * width);
        }
        if (has_bias && bias.requires_grad()) {
          auto gb = bias.ensure_grad();
          for (std::size_t o = 0; o < out_ch; ++o) gb[o] += gob.row(ei(o)).sum();
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> mean_pool(Graph<T>& g, const Tensor<T>& x, std::size_t window) {
  if (x.rank() != 4) throw ShapeError("mean_pool expects [B x C x H x W]");
  if (window == 0 || x.size(2) < window || x.size(3) < window) throw ShapeError("mean_pool window larger than input");
  const std::size_t planes = x.size(0) * x.size(1), height = x.size(2), width = x.size(3);
  const std::size_t out_h = height / window, out_w = width / window;
  const T inv = T(1) / static_cast<T>(window * window);
  Tensor<T> out(Shape{x.size(0), x.size(1), out_h, out_w});
  auto o = out.data();
  auto xv = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    for (std::size_t oy = 0; oy < out_h; ++oy) {
      for (std::size_t ox = 0; ox < out_w; ++ox) {
        T acc = T(0);
        for (std::size_t i = 0; i < window; ++i) {
          for (std::size_t j = 0; j < window; ++j) acc += xv[(p * height + oy * window + i) * width + ox * window + j];
        }
        o[(p * out_h + oy) * out_w + ox] = acc * inv;
      }
    }
  }
  if (g.tracks({&x})) {
    g.record("mean_pool", {x}, out, [=]() mutable {
      auto go = out.grad();
      auto gx = grad_of(x);
      for (std::size_t p = 0; p < planes; ++p) {
        for (std::size_t oy = 0; oy < out_h; ++oy) {
          for (std::size_t ox = 0; ox < out_w; ++ox) {
            const T v = go[(p * out_h + oy) * out_w + ox] * inv;
            for (std::size_t i = 0; i < window; ++i) {
              for (std::size_t j = 0; j < window; ++j) gx[(p * height + oy * window + i) * width + ox * window + j] += v;
            }
          }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> global_avg_pool(Graph<T>& g, const Tensor<T>& x) {
  if (x.rank() != 4) throw ShapeError("global_avg_pool expects [B x C x H x W]");
  const std::size_t planes = x.size(0) * x.size(1);
  const std::size_t area = x.size(2) * x.size(3);
  const T inv = T(1) / static_cast<T>(area);
  Tensor<T> out(Shape{x.size(0), x.size(1)});
  auto xv = x.data();
  for (std::size_t p = 0; p < planes; ++p) {
    T acc = T(0);
    for (std::size_t i = 0; i < area; ++i) acc += xv[p * area + i];
    out.data()[p] = acc * inv;
  }
  if (g.tracks({&x})) {
    g.record("global_avg_pool", {x}, out, [=]() mutable {
      auto go = out.grad();
      auto gx = grad_of(x);
      for (std::size_t p = 0; p < planes; ++p) {
        const T v = go[p] * inv;
        for (std::size_t i = 0; i < area; ++i) gx[p * area + i] += v;
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> batch_norm(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     BatchNormStats<T>& stats, bool training, T momentum, T eps) {
  if (x.rank() < 2) throw ShapeError("batch_norm expects at least [B x C]");
  const std::size_t batch = x.size(0), channels = x.size(1);
  if (gamma.numel() != channels || beta.numel() != channels) throw ShapeError("batch_norm parameter size mismatch");
  const std::size_t inner = x.numel() / (batch * channels);
  const std::size_t count = batch * inner;
  auto xv = x.data();
  auto at = [=](std::size_t b, std::size_t c, std::size_t i) { return (b * channels + c) * inner + i; };

  std::vector<T> mean_c(channels), inv_std(channels);
  if (training) {
    if (count < 2) throw ShapeError("batch_norm training needs more than one value per channel");
    if (!stats.initialized) {
      stats.running_mean.assign(channels, T(0));
      stats.running_var.assign(channels, T(1));
      stats.initialized = true;
    }
    for (std::size_t c = 0; c < channels; ++c) {
      T acc = T(0);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < inner; ++i) acc += xv[at(b, c, i)];
      const T mu = acc / static_cast<T>(count);
      T var = T(0);
      for (std::size_t b = 0; b < batch; ++b)
        for (std::size_t i = 0; i < inner; ++i) {
          const T d = xv[at(b, c, i)] - mu;
          var += d * d;
        }
      const T biased = var / static_cast<T>(count);
      const T unbiased = var / static_cast<T>(count - 1);
      mean_c[c] = mu;
      inv_std[c] = T(1) / std::sqrt(biased + eps);
      stats.running_mean[c] = momentum * stats.running_mean[c] + (T(1) - momentum) * mu;
      stats.running_var[c] = momentum * stats.running_var[c] + (T(1) - momentum) * unbiased;
    }
  } else {
    if (!stats.initialized) throw GraphError("batch_norm inference without accumulated statistics");
    for (std::size_t c = 0; c < channels; ++c) {
      mean_c[c] = stats.running_mean[c];
      inv_std[c] = T(1) / std::sqrt(stats.running_var[c] + eps);
    }
  }

  Tensor<T> normalized(x.shape());
  Tensor<T> out(x.shape());
  auto nv = normalized.data();
  auto o = out.data();
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t c = 0; c < channels; ++c)
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = at(b, c, i);
        nv[k] = (xv[k] - mean_c[c]) * inv_std[c];
        o[k] = gamma.data()[c] * nv[k] + beta.data()[c];
      }
  check_finite_impl<T>(o, "batch_norm");

  if (g.tracks({&x, &gamma, &beta})) {
    g.record("batch_norm", {x, gamma, beta}, out, [=]() mutable {
      auto go = out.grad();
      auto gx = grad_of(x);
      auto gg = grad_of(gamma);
      auto gb = grad_of(beta);
      auto nv = normalized.data();
      for (std::size_t c = 0; c < channels; ++c) {
        T sum_dy = T(0), sum_dy_n = T(0);
        for (std::size_t b = 0; b < batch; ++b)
          for (std::size_t i = 0; i < inner; ++i) {
            const std::size_t k = at(b, c, i);
            sum_dy += go[k];
            sum_dy_n += go[k] * nv[k];
          }
        if (!gg.empty()) gg[c] += sum_dy_n;
        if (!gb.empty()) gb[c] += sum_dy;
        if (gx.empty()) continue;
        const T gam = gamma.data()[c];
        if (training) {
          const T n = static_cast<T>(count);
          const T coef = gam * inv_std[c] / n;
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = at(b, c, i);
              gx[k] += coef * (n * go[k] - sum_dy - nv[k] * sum_dy_n);
            }
        } else {
          for (std::size_t b = 0; b < batch; ++b)
            for (std::size_t i = 0; i < inner; ++i) {
              const std::size_t k = at(b, c, i);
              gx[k] += go[k] * gam * inv_std[c];
            }
        }
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> linear(Graph<T>& g, const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias) {
  if (x.rank() != 2 || weight.rank() != 2 || x.size(1) != weight.size(1)) {
    throw ShapeError("linear shape mismatch: " + shape_string(x.shape()) + " with weight " +
                     shape_string(weight.shape()));
  }
  if (bias.numel() != weight.size(0)) throw ShapeError("linear bias size mismatch");
  const auto b = static_cast<Eigen::Index>(x.size(0));
  const auto in = static_cast<Eigen::Index>(x.size(1));
  const auto outn = static_cast<Eigen::Index>(weight.size(0));
  Tensor<T> out(Shape{x.size(0), weight.size(0)});
  MapMat<T> o(out.data().data(), b, outn);
  o.noalias() = ConstMapMat<T>(x.data().data(), b, in) * ConstMapMat<T>(weight.data().data(), outn, in).transpose();
  for (Eigen::Index r = 0; r < b; ++r)
    for (Eigen::Index c = 0; c < outn; ++c) o(r, c) += bias.data()[static_cast<std::size_t>(c)];
  check_finite_impl<T>(out.data(), "linear");
  if (g.tracks({&x, &weight, &bias})) {
    g.record("linear", {x, weight, bias}, out, [=]() mutable {
      ConstMapMat<T> go(out.grad().data(), b, outn);
      if (x.requires_grad()) {
        MapMat<T>(x.ensure_grad().data(), b, in).noalias() += go * ConstMapMat<T>(weight.data().data(), outn, in);
      }
      if (weight.requires_grad()) {
        MapMat<T>(weight.ensure_grad().data(), outn, in).noalias() +=
            go.transpose() * ConstMapMat<T>(x.data().data(), b, in);
      }
      if (bias.requires_grad()) {
        auto gb = bias.ensure_grad();
        for (Eigen::Index c = 0; c < outn; ++c) gb[static_cast<std::size_t>(c)] += go.col(c).sum();
      }
    });
  }
  return out;
}

template <typename T>
Tensor<T> bce_with_logits(Graph<T>& g, const Tensor<T>& logits, const Tensor<T>& targets) {
  if (logits.shape() != targets.shape()) throw ShapeError("bce_with_logits shape mismatch");
  for (T t : targets.data()) {
    if (t != T(0) && t != T(1)) throw std::invalid_argument("bce_with_logits targets must be 0 or 1");
  }
  const std::size_t n = logits.numel();
  auto z = logits.data();
  auto t = targets.data();
  T total = T(0);
  for (std::size_t i = 0; i < n; ++i) {
    total += std::max(z[i], T(0)) - z[i] * t[i] + std::log1p(std::exp(-std::abs(z[i])));
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(n));
  check_finite_impl<T>(out.data(), "bce_with_logits");
  if (g.tracks({&logits})) {
    g.record("bce_with_logits", {logits, targets}, out, [=]() mutable {
      const T go = out.grad()[0] / static_cast<T>(n);
      auto gz = grad_of(logits);
      auto z = logits.data();
      auto t = targets.data();
      for (std::size_t i = 0; i < n; ++i) gz[i] += go * (stable_sigmoid(z[i]) - t[i]);
    });
  }
  return out;
}

template <typename T>
std::vector<T> softmax_rows(const Tensor<T>& logits) {
  if (logits.rank() != 2) throw ShapeError("softmax_rows expects [B x C]");
  const std::size_t rows = logits.size(0), cols = logits.size(1);
  std::vector<T> p(logits.numel());
  auto z = logits.data();
  for (std::size_t r = 0; r < rows; ++r) {
    const T* zr = z.data() + r * cols;
    const T mx = *std::max_element(zr, zr + cols);
    T denom = T(0);
    for (std::size_t c = 0; c < cols; ++c) {
      p[r * cols + c] = std::exp(zr[c] - mx);
      denom += p[r * cols + c];
    }
    for (std::size_t c = 0; c < cols; ++c) p[r * cols + c] /= denom;
  }
  return p;
}

template <typename T>
Tensor<T> cross_entropy(Graph<T>& g, const Tensor<T>& logits, std::span<const int> labels) {
  if (logits.rank() != 2 || logits.size(0) != labels.size()) throw ShapeError("cross_entropy shape mismatch");
  const std::size_t rows = logits.size(0), cols = logits.size(1);
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= cols) {
      throw std::invalid_argument("cross_entropy label " + std::to_string(l) + " outside [0, " +
                                  std::to_string(cols) + ")");
    }
  }
  auto z = logits.data();
  T total = T(0);
  for (std::size_t r = 0; r < rows; ++r) {
    const T* zr = z.data() + r * cols;
    const T mx = *std::max_element(zr, zr + cols);
    T acc = T(0);
    for (std::size_t c = 0; c < cols; ++c) acc += std::exp(zr[c] - mx);
    total += mx + std::log(acc) - zr[labels[r]];
  }
  Tensor<T> out = Tensor<T>::scalar(total / static_cast<T>(rows));
  check_finite_impl<T>(out.data(), "cross_entropy");
  if (g.tracks({&logits})) {
    std::vector<int> saved(labels.begin(), labels.end());
    g.record("cross_entropy", {logits}, out, [=]() mutable {
      const T go = out.grad()[0] / static_cast<T>(rows);
      auto gz = grad_of(logits);
      const auto p = softmax_rows(logits);
      for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
          const T onehot = static_cast<int>(c) == saved[r] ? T(1) : T(0);
          gz[r * cols + c] += go * (p[r * cols + c] - onehot);
        }
      }
    });
  }
  return out;
}

#define TMNN_INSTANTIATE_OPS(T)                                                                          \
  template Tensor<T> add(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> sub(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> mul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                                 \
  template Tensor<T> scale(Graph<T>&, const Tensor<T>&, T);                                              \
  template Tensor<T> add_scalar(Graph<T>&, const Tensor<T>&, T);                                         \
  template Tensor<T> clamp_max(Graph<T>&, const Tensor<T>&, T);                                          \
  template Tensor<T> relu(Graph<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> sigmoid(Graph<T>&, const Tensor<T>&);                                               \
  template Tensor<T> softplus(Graph<T>&, const Tensor<T>&);                                              \
  template Tensor<T> log1p(Graph<T>&, const Tensor<T>&);                                                 \
  template Tensor<T> sum(Graph<T>&, const Tensor<T>&);                                                   \
  template Tensor<T> mean(Graph<T>&, const Tensor<T>&);                                                  \
  template Tensor<T> reshape(Graph<T>&, const Tensor<T>&, Shape);                                        \
  template Tensor<T> stack(Graph<T>&, std::span<const Tensor<T>>);                                       \
  template Tensor<T> matmul(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                              \
  template Tensor<T> conv1d_same(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> conv1d_bank(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                         \
  template Tensor<T> conv2d(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, std::size_t, \
                            std::size_t);                                                                \
  template Tensor<T> mean_pool(Graph<T>&, const Tensor<T>&, std::size_t);                                \
  template Tensor<T> global_avg_pool(Graph<T>&, const Tensor<T>&);                                       \
  template Tensor<T> batch_norm(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,        \
                                BatchNormStats<T>&, bool, T, T);                                         \
  template Tensor<T> linear(Graph<T>&, const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);            \
  template Tensor<T> bce_with_logits(Graph<T>&, const Tensor<T>&, const Tensor<T>&);                     \
  template Tensor<T> cross_entropy(Graph<T>&, const Tensor<T>&, std::span<const int>);                   \
  template std::vector<T> softmax_rows(const Tensor<T>&);

TMNN_INSTANTIATE_OPS(float)
TMNN_INSTANTIATE_OPS(double)

#undef TMNN_INSTANTIATE_OPS

}  // namespace tmnn::ops
