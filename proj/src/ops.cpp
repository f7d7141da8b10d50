// Copyright 2026 The shape_tta Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "shape_tta/ops.hpp"

#include <algorithm>
#include <cmath>

#include "op_util.hpp"

namespace shape_tta {

using detail::grad_target;
using detail::make_output;
using detail::record;
using detail::tracking;

namespace {

struct BroadcastPlan {
  Shape out;
  std::vector<std::size_t> a_strides;  // 0 on broadcast axes
  std::vector<std::size_t> b_strides;
  bool same = false;
};

std::vector<std::size_t> aligned_strides(const Shape& s, std::size_t rank) {
  std::vector<std::size_t> strides(rank, 0);
  std::size_t stride = 1;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const std::size_t axis = s.size() - 1 - i;
    const std::size_t out_axis = rank - 1 - i;
    strides[out_axis] = s[axis] == 1 ? 0 : stride;
    stride *= s[axis];
  }
  return strides;
}

BroadcastPlan plan_broadcast(const char* op, const Shape& a, const Shape& b) {
  BroadcastPlan plan;
  if (a == b) {
    plan.out = a;
    plan.same = true;
    return plan;
  }
  const std::size_t rank = std::max(a.size(), b.size());
  plan.out.assign(rank, 1);
  for (std::size_t i = 0; i < rank; ++i) {
    const std::size_t da = i < a.size() ? a[a.size() - 1 - i] : 1;
    const std::size_t db = i < b.size() ? b[b.size() - 1 - i] : 1;
    if (da != db && da != 1 && db != 1) throw ShapeError(op, {a, b});
    plan.out[rank - 1 - i] = std::max(da, db);
  }
  plan.a_strides = aligned_strides(a, rank);
  plan.b_strides = aligned_strides(b, rank);
  return plan;
}

// Calls f(out_index, a_index, b_index) for every output element.
template <typename F>
void for_each_broadcast(const BroadcastPlan& plan, F&& f) {
  const std::size_t n = numel(plan.out);
  if (plan.same) {
    for (std::size_t i = 0; i < n; ++i) f(i, i, i);
    return;
  }
  const std::size_t rank = plan.out.size();
  std::vector<std::size_t> counter(rank, 0);
  std::size_t ia = 0;
  std::size_t ib = 0;
  for (std::size_t i = 0; i < n; ++i) {
    f(i, ia, ib);
    for (std::size_t axis = rank; axis-- > 0;) {
      ++counter[axis];
      ia += plan.a_strides[axis];
      ib += plan.b_strides[axis];
      if (counter[axis] < plan.out[axis]) break;
      ia -= plan.a_strides[axis] * counter[axis];
      ib -= plan.b_strides[axis] * counter[axis];
      counter[axis] = 0;
    }
  }
}

enum class BinaryKind { kAdd, kSub, kMul, kDiv };

Tensor binary(const char* name, BinaryKind kind, const Tensor& a, const Tensor& b) {
  auto plan = std::make_shared<BroadcastPlan>(plan_broadcast(name, a.shape(), b.shape()));
  std::vector<double> out(numel(plan->out));
  const auto av = a.values();
  const auto bv = b.values();
  for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
    switch (kind) {
      case BinaryKind::kAdd: out[i] = av[ia] + bv[ib]; break;
      case BinaryKind::kSub: out[i] = av[ia] - bv[ib]; break;
      case BinaryKind::kMul: out[i] = av[ia] * bv[ib]; break;
      case BinaryKind::kDiv: out[i] = av[ia] / bv[ib]; break;
    }
  });
  Tensor result = make_output(plan->out, std::move(out));
  if (tracking({&a, &b})) {
    record({&a, &b}, result,
           [pa = a.impl(), pb = b.impl(), plan, kind](const TensorImpl& o) {
             double* ga = grad_target(pa);
             double* gb = grad_target(pb);
             const auto& g = o.grad;
             const auto& x = pa->data;
             const auto& y = pb->data;
             for_each_broadcast(*plan, [&](std::size_t i, std::size_t ia, std::size_t ib) {
               switch (kind) {
                 case BinaryKind::kAdd:
                   if (ga) ga[ia] += g[i];
                   if (gb) gb[ib] += g[i];
                   break;
                 case BinaryKind::kSub:
                   if (ga) ga[ia] += g[i];
                   if (gb) gb[ib] -= g[i];
                   break;
                 case BinaryKind::kMul:
                   if (ga) ga[ia] += g[i] * y[ib];
                   if (gb) gb[ib] += g[i] * x[ia];
                   break;
                 case BinaryKind::kDiv:
                   if (ga) ga[ia] += g[i] / y[ib];
                   if (gb) gb[ib] -= g[i] * x[ia] / (y[ib] * y[ib]);
                   break;
               }
             });
           });
  }
  return result;
}

// Element-wise unary op; `deriv(x, y)` returns dy/dx.
template <typename F, typename D>
Tensor unary(const Tensor& x, F&& f, D deriv) {
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) out[i] = f(xv[i]);
  Tensor result = make_output(x.shape(), std::move(out));
  if (tracking({&x})) {
    record({&x}, result, [px = x.impl(), deriv](const TensorImpl& o) {
      double* gx = grad_target(px);
      if (!gx) return;
      for (std::size_t i = 0; i < o.data.size(); ++i) {
        gx[i] += o.grad[i] * deriv(px->data[i], o.data[i]);
      }
    });
  }
  return result;
}

// Splits a shape around `axis` into (outer, n, inner) extents.
struct AxisSplit {
  std::size_t outer = 1, n = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& s, std::size_t axis) {
  if (axis >= s.size()) {
    throw ShapeError(op, {s}, "axis " + std::to_string(axis) + " out of range");
  }
  AxisSplit r;
  for (std::size_t i = 0; i < axis; ++i) r.outer *= s[i];
  r.n = s[axis];
  for (std::size_t i = axis + 1; i < s.size(); ++i) r.inner *= s[i];
  return r;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) { return binary("add", BinaryKind::kAdd, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return binary("sub", BinaryKind::kSub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return binary("mul", BinaryKind::kMul, a, b); }
Tensor div(const Tensor& a, const Tensor& b) { return binary("div", BinaryKind::kDiv, a, b); }

Tensor add_scalar(const Tensor& x, double c) {
  return unary(x, [c](double v) { return v + c; }, [](double, double) { return 1.0; });
}

Tensor mul_scalar(const Tensor& x, double c) {
  return unary(x, [c](double v) { return v * c; }, [c](double, double) { return c; });
}

Tensor neg(const Tensor& x) { return mul_scalar(x, -1.0); }

Tensor square(const Tensor& x) {
  return unary(x, [](double v) { return v * v; }, [](double v, double) { return 2.0 * v; });
}

Tensor log(const Tensor& x) {
  return unary(x, [](double v) { return std::log(v); },
               [](double v, double) { return 1.0 / v; });
}

Tensor exp(const Tensor& x) {
  return unary(x, [](double v) { return std::exp(v); }, [](double, double y) { return y; });
}

Tensor sqrt(const Tensor& x) {
  return unary(x, [](double v) { return std::sqrt(v); },
               [](double, double y) { return y > 0.0 ? 0.5 / y : 0.0; });
}

Tensor relu(const Tensor& x) {
  return unary(x, [](double v) { return v > 0.0 ? v : 0.0; },
               [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor clamp_min(const Tensor& x, double floor) {
  return unary(x, [floor](double v) { return v > floor ? v : floor; },
               [floor](double v, double) { return v > floor ? 1.0 : 0.0; });
}

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  Tensor result = make_output({}, {total});
  if (tracking({&x})) {
    record({&x}, result, [px = x.impl()](const TensorImpl& o) {
      double* gx = grad_target(px);
      if (!gx) return;
      const double g = o.grad[0];
      for (std::size_t i = 0; i < px->data.size(); ++i) gx[i] += g;
    });
  }
  return result;
}

Tensor mean(const Tensor& x) {
  return mul_scalar(sum(x), 1.0 / static_cast<double>(x.numel()));
}

Tensor sum(const Tensor& x, std::size_t axis) {
  const AxisSplit sp = split_axis("sum", x.shape(), axis);
  Shape out_shape = x.shape();
  out_shape.erase(out_shape.begin() + static_cast<std::ptrdiff_t>(axis));
  std::vector<double> out(sp.outer * sp.inner, 0.0);
  const auto xv = x.values();
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t k = 0; k < sp.n; ++k) {
      const double* src = xv.data() + (o * sp.n + k) * sp.inner;
      double* dst = out.data() + o * sp.inner;
      for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
    }
  }
  Tensor result = make_output(std::move(out_shape), std::move(out));
  if (tracking({&x})) {
    record({&x}, result, [px = x.impl(), sp](const TensorImpl& o) {
      double* gx = grad_target(px);
      if (!gx) return;
      for (std::size_t b = 0; b < sp.outer; ++b) {
        for (std::size_t k = 0; k < sp.n; ++k) {
          double* dst = gx + (b * sp.n + k) * sp.inner;
          const double* src = o.grad.data() + b * sp.inner;
          for (std::size_t i = 0; i < sp.inner; ++i) dst[i] += src[i];
        }
      }
    });
  }
  return result;
}

Tensor mean(const Tensor& x, std::size_t axis) {
  const double n = static_cast<double>(split_axis("mean", x.shape(), axis).n);
  return mul_scalar(sum(x, axis), 1.0 / n);
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel(shape) != x.numel()) throw ShapeError("reshape", {x.shape(), shape});
  const auto xv = x.values();
  Tensor result = make_output(std::move(shape), std::vector<double>(xv.begin(), xv.end()));
  if (tracking({&x})) {
    record({&x}, result, [px = x.impl()](const TensorImpl& o) {
      double* gx = grad_target(px);
      if (!gx) return;
      for (std::size_t i = 0; i < o.grad.size(); ++i) gx[i] += o.grad[i];
    });
  }
  return result;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat", {}, "no inputs");
  const Shape& first = parts.front().shape();
  std::vector<Shape> shapes;
  for (const auto& p : parts) shapes.push_back(p.shape());
  if (axis >= first.size()) throw ShapeError("concat", shapes, "axis out of range");
  Shape out_shape = first;
  out_shape[axis] = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    if (s.size() != first.size()) throw ShapeError("concat", shapes, "rank mismatch");
    for (std::size_t i = 0; i < s.size(); ++i) {
      if (i != axis && s[i] != first[i]) throw ShapeError("concat", shapes);
    }
    out_shape[axis] += s[axis];
  }
  const AxisSplit sp = split_axis("concat", out_shape, axis);
  std::vector<double> out(numel(out_shape));
  std::vector<std::size_t> offsets;
  std::size_t offset = 0;
  for (const auto& p : parts) {
    offsets.push_back(offset);
    const std::size_t len = p.shape()[axis] * sp.inner;
    const auto pv = p.values();
    for (std::size_t o = 0; o < sp.outer; ++o) {
      std::copy_n(pv.data() + o * len, len, out.data() + o * sp.n * sp.inner + offset);
    }
    offset += len;
  }
  Tensor result = make_output(std::move(out_shape), std::move(out));
  bool any = false;
  for (const auto& p : parts) any = any || tracking({&p});
  if (any) {
    std::vector<std::shared_ptr<TensorImpl>> impls;
    for (const auto& p : parts) impls.push_back(p.impl());
    Tape::active()->record(
        impls, result.impl(),
        [impls, offsets, sp, axis](const TensorImpl& o) {
          for (std::size_t j = 0; j < impls.size(); ++j) {
            double* g = grad_target(impls[j]);
            if (!g) continue;
            const std::size_t len = impls[j]->shape[axis] * sp.inner;
            for (std::size_t b = 0; b < sp.outer; ++b) {
              const double* src = o.grad.data() + b * sp.n * sp.inner + offsets[j];
              double* dst = g + b * len;
              for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
            }
          }
        });
  }
  return result;
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start, std::size_t length) {
  const AxisSplit sp = split_axis("slice", x.shape(), axis);
  if (start + length > sp.n) {
    throw ShapeError("slice", {x.shape()},
                     "range [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") exceeds axis " +
                         std::to_string(axis));
  }
  Shape out_shape = x.shape();
  out_shape[axis] = length;
  std::vector<double> out(numel(out_shape));
  const auto xv = x.values();
  const std::size_t len = length * sp.inner;
  for (std::size_t o = 0; o < sp.outer; ++o) {
    std::copy_n(xv.data() + (o * sp.n + start) * sp.inner, len, out.data() + o * len);
  }
  Tensor result = make_output(std::move(out_shape), std::move(out));
  if (tracking({&x})) {
    record({&x}, result, [px = x.impl(), sp, start, len](const TensorImpl& o) {
      double* gx = grad_target(px);
      if (!gx) return;
      for (std::size_t b = 0; b < sp.outer; ++b) {
        const double* src = o.grad.data() + b * len;
        double* dst = gx + (b * sp.n + start) * sp.inner;
        for (std::size_t i = 0; i < len; ++i) dst[i] += src[i];
      }
    });
  }
  return result;
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit sp = split_axis("softmax", x.shape(), axis);
  const auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t o = 0; o < sp.outer; ++o) {
    for (std::size_t i = 0; i < sp.inner; ++i) {
      const std::size_t base = o * sp.n * sp.inner + i;
      double top = xv[base];
      for (std::size_t k = 1; k < sp.n; ++k) top = std::max(top, xv[base + k * sp.inner]);
      double z = 0.0;
      for (std::size_t k = 0; k < sp.n; ++k) {
        const double e = std::exp(xv[base + k * sp.inner] - top);
        out[base + k * sp.inner] = e;
        z += e;
      }
      for (std::size_t k = 0; k < sp.n; ++k) out[base + k * sp.inner] /= z;
    }
  }
  Tensor result = make_output(x.shape(), std::move(out));
  if (tracking({&x})) {
    record({&x}, result, [px = x.impl(), sp](const TensorImpl& o) {
      double* gx = grad_target(px);
      if (!gx) return;
      const auto& y = o.data;
      const auto& g = o.grad;
      for (std::size_t b = 0; b < sp.outer; ++b) {
        for (std::size_t i = 0; i < sp.inner; ++i) {
          const std::size_t base = b * sp.n * sp.inner + i;
          double dot = 0.0;
          for (std::size_t k = 0; k < sp.n; ++k) {
            dot += g[base + k * sp.inner] * y[base + k * sp.inner];
          }
          for (std::size_t k = 0; k < sp.n; ++k) {
            const std::size_t j = base + k * sp.inner;
            gx[j] += y[j] * (g[j] - dot);
          }
        }
      }
    });
  }
  return result;
}

Tensor upsample_nearest(const Tensor& x, std::size_t factor) {
  const Shape& s = x.shape();
  if (s.size() < 2 || factor == 0) throw ShapeError("upsample_nearest", {s});
  const std::size_t h = s[s.size() - 2];
  const std::size_t w = s[s.size() - 1];
  const std::size_t planes = x.numel() / (h * w);
  Shape out_shape = s;
  out_shape[s.size() - 2] = h * factor;
  out_shape[s.size() - 1] = w * factor;
  const std::size_t ho = h * factor;
  const std::size_t wo = w * factor;
  std::vector<double> out(planes * ho * wo);
  const auto xv = x.values();
  for (std::size_t p = 0; p < planes; ++p) {
    const double* src = xv.data() + p * h * w;
    double* dst = out.data() + p * ho * wo;
    for (std::size_t r = 0; r < ho; ++r) {
      for (std::size_t c = 0; c < wo; ++c) dst[r * wo + c] = src[(r / factor) * w + c / factor];
    }
  }
  Tensor result = make_output(std::move(out_shape), std::move(out));
  if (tracking({&x})) {
    record({&x}, result, [px = x.impl(), planes, h, w, factor](const TensorImpl& o) {
      double* gx = grad_target(px);
      if (!gx) return;
      const std::size_t ho = h * factor;
      const std::size_t wo = w * factor;
      for (std::size_t p = 0; p < planes; ++p) {
        const double* src = o.grad.data() + p * ho * wo;
        double* dst = gx + p * h * w;
        for (std::size_t r = 0; r < ho; ++r) {
          for (std::size_t c = 0; c < wo; ++c) dst[(r / factor) * w + c / factor] += src[r * wo + c];
        }
      }
    });
  }
  return result;
}

namespace {

void check_bn_shapes(const char* op, const Tensor& x, const Tensor& gamma,
                     const Tensor& beta) {
  const Shape& s = x.shape();
  if (s.size() != 4 || gamma.shape() != Shape{s[1]} || beta.shape() != Shape{s[1]}) {
    throw ShapeError(op, {s, gamma.shape(), beta.shape()},
                     "expected x: B x C x H x W, gamma/beta: C");
  }
}

}  // namespace

BatchNormOutput batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                           double eps) {
  check_bn_shapes("batch_norm", x, gamma, beta);
  const Shape& s = x.shape();
  const std::size_t batch = s[0], channels = s[1], plane = s[2] * s[3];
  const double count = static_cast<double>(batch * plane);
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();

  BatchNormOutput result;
  result.batch_mean.assign(channels, 0.0);
  result.batch_var.assign(channels, 0.0);
  auto inv_std = std::make_shared<std::vector<double>>(channels);
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t c = 0; c < channels; ++c) {
    double m = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* p = xv.data() + (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) m += p[i];
    }
    m /= count;
    double v = 0.0;
    for (std::size_t b = 0; b < batch; ++b) {
      const double* p = xv.data() + (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) v += (p[i] - m) * (p[i] - m);
    }
    v /= count;
    result.batch_mean[c] = m;
    result.batch_var[c] = v;
    const double is = 1.0 / std::sqrt(v + eps);
    (*inv_std)[c] = is;
    for (std::size_t b = 0; b < batch; ++b) {
      const std::size_t off = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        const double xh = (xv[off + i] - m) * is;
        (*xhat)[off + i] = xh;
        out[off + i] = gv[c] * xh + bv[c];
      }
    }
  }
  result.output = make_output(s, std::move(out));
  if (tracking({&x, &gamma, &beta})) {
    record({&x, &gamma, &beta}, result.output,
           [px = x.impl(), pg = gamma.impl(), pb = beta.impl(), inv_std, xhat, batch,
            channels, plane, count](const TensorImpl& o) {
             double* gx = grad_target(px);
             double* gg = grad_target(pg);
             double* gb = grad_target(pb);
             const auto& g = o.grad;
             const auto& xh = *xhat;
             for (std::size_t c = 0; c < channels; ++c) {
               double sum_g = 0.0;
               double sum_gx = 0.0;
               for (std::size_t b = 0; b < batch; ++b) {
                 const std::size_t off = (b * channels + c) * plane;
                 for (std::size_t i = 0; i < plane; ++i) {
                   sum_g += g[off + i];
                   sum_gx += g[off + i] * xh[off + i];
                 }
               }
               if (gg) gg[c] += sum_gx;
               if (gb) gb[c] += sum_g;
               if (!gx) continue;
               const double scale = pg->data[c] * (*inv_std)[c];
               const double mg = sum_g / count;
               const double mgx = sum_gx / count;
               for (std::size_t b = 0; b < batch; ++b) {
                 const std::size_t off = (b * channels + c) * plane;
                 for (std::size_t i = 0; i < plane; ++i) {
                   gx[off + i] += scale * (g[off + i] - mg - xh[off + i] * mgx);
                 }
               }
             }
           });
  }
  return result;
}

Tensor batch_norm_fixed(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                        const std::vector<double>& mean, const std::vector<double>& var,
                        double eps) {
  check_bn_shapes("batch_norm_fixed", x, gamma, beta);
  const Shape& s = x.shape();
  const std::size_t batch = s[0], channels = s[1], plane = s[2] * s[3];
  if (mean.size() != channels || var.size() != channels) {
    throw ShapeError("batch_norm_fixed", {s, Shape{mean.size()}, Shape{var.size()}},
                     "running statistics must have one entry per channel");
  }
  const auto xv = x.values();
  const auto gv = gamma.values();
  const auto bv = beta.values();
  auto inv_std = std::make_shared<std::vector<double>>(channels);
  for (std::size_t c = 0; c < channels; ++c) (*inv_std)[c] = 1.0 / std::sqrt(var[c] + eps);
  std::vector<double> out(xv.size());
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t c = 0; c < channels; ++c) {
      const std::size_t off = (b * channels + c) * plane;
      for (std::size_t i = 0; i < plane; ++i) {
        out[off + i] = gv[c] * (xv[off + i] - mean[c]) * (*inv_std)[c] + bv[c];
      }
    }
  }
  Tensor result = make_output(s, std::move(out));
  if (tracking({&x, &gamma, &beta})) {
    record({&x, &gamma, &beta}, result,
           [px = x.impl(), pg = gamma.impl(), pb = beta.impl(), inv_std, mean, batch,
            channels, plane](const TensorImpl& o) {
             double* gx = grad_target(px);
             double* gg = grad_target(pg);
             double* gb = grad_target(pb);
             for (std::size_t b = 0; b < batch; ++b) {
               for (std::size_t c = 0; c < channels; ++c) {
                 const std::size_t off = (b * channels + c) * plane;
                 const double is = (*inv_std)[c];
                 for (std::size_t i = 0; i < plane; ++i) {
                   const double g = o.grad[off + i];
                   if (gx) gx[off + i] += g * pg->data[c] * is;
                   if (gg) gg[c] += g * (px->data[off + i] - mean[c]) * is;
                   if (gb) gb[c] += g;
                 }
               }
             }
           });
  }
  return result;
}

}  // namespace shape_tta
