#include "fino/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fino::ops {

namespace {
thread_local BranchTrace* g_trace = nullptr;

template <class F>
void trace_each(std::span<const double> values, F branch) {
  if (!g_trace) return;
  for (double v : values) g_trace->record(branch(v));
}
}  // namespace

BranchTrace::BranchTrace() : outer_(g_trace) { g_trace = this; }
BranchTrace::~BranchTrace() { g_trace = outer_; }
BranchTrace* BranchTrace::active() { return g_trace; }

void BranchTrace::record(std::uint64_t branch) {
  digest_ = (digest_ ^ (branch + 0x9e3779b97f4a7c15ULL)) * 0x100000001b3ULL;
  ++decisions_;
  if (outer_) outer_->record(branch);
}

using detail::make_result;
using detail::TensorImpl;

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

struct Dims4 {
  std::size_t b, c, h, w;
};

Dims4 dims4(const Tensor& t, const char* op) {
  const auto& s = t.shape();
  if (s.size() != 4) throw PreconditionError(std::string(op) + ": expected rank-4 tensor, got " + shape_str(s));
  return {s[0], s[1], s[2], s[3]};
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw PreconditionError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                            shape_str(b.shape()));
  }
}

// Grad buffer of parent `i` when it participates in differentiation.
std::vector<double>* parent_grad(TensorImpl& self, std::size_t i) {
  auto& p = *self.parents[i];
  return p.requires_grad ? &p.grad_buffer() : nullptr;
}

const std::vector<double>& parent_data(TensorImpl& self, std::size_t i) { return self.parents[i]->data; }

// Lays out the receptive fields of one image as a (Cin*kh*kw) x (Ho*Wo) matrix.
void im2col(const double* img, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, Padding pad, std::size_t ho, std::size_t wo, double* cols) {
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        double* row = cols + ((c * kh + i) * kw + j) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto y = static_cast<long>(oy * stride + i) - static_cast<long>(pad.h);
          double* out = row + oy * wo;
          if (y < 0 || y >= static_cast<long>(h)) {
            std::fill(out, out + wo, 0.0);
            continue;
          }
          const double* src = img + (c * h + static_cast<std::size_t>(y)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto x = static_cast<long>(ox * stride + j) - static_cast<long>(pad.w);
            out[ox] = (x < 0 || x >= static_cast<long>(w)) ? 0.0 : src[x];
          }
        }
      }
    }
  }
}

void col2im(const double* cols, std::size_t cin, std::size_t h, std::size_t w, std::size_t kh, std::size_t kw,
            std::size_t stride, Padding pad, std::size_t ho, std::size_t wo, double* img) {
  for (std::size_t c = 0; c < cin; ++c) {
    for (std::size_t i = 0; i < kh; ++i) {
      for (std::size_t j = 0; j < kw; ++j) {
        const double* row = cols + ((c * kh + i) * kw + j) * ho * wo;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const auto y = static_cast<long>(oy * stride + i) - static_cast<long>(pad.h);
          if (y < 0 || y >= static_cast<long>(h)) continue;
          double* dst = img + (c * h + static_cast<std::size_t>(y)) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const auto x = static_cast<long>(ox * stride + j) - static_cast<long>(pad.w);
            if (x >= 0 && x < static_cast<long>(w)) dst[x] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

template <typename F, typename G>
Tensor unary(const char* op, const Tensor& x, F forward, G derivative) {
  const auto in = x.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return make_result(op, x.shape(), std::move(out), {x}, [derivative](TensorImpl& self) {
    auto* gx = parent_grad(self, 0);
    if (!gx) return;
    const auto& xin = parent_data(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i] * derivative(xin[i], self.data[i]);
  });
}

}  // namespace

Padding same_padding(const Tensor& kernel) {
  const auto k = dims4(kernel, "same_padding");
  return {k.h / 2, k.w / 2};
}

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride, Padding pad) {
  const auto x = dims4(input, "conv2d");
  const auto k = dims4(kernel, "conv2d");
  if (stride == 0) throw PreconditionError("conv2d: stride must be positive");
  if (k.c != x.c) {
    throw PreconditionError("conv2d: kernel expects " + std::to_string(k.c) + " input channels, input has " +
                            std::to_string(x.c));
  }
  if (x.h + 2 * pad.h < k.h || x.w + 2 * pad.w < k.w) {
    throw PreconditionError("conv2d: padded input " + shape_str(input.shape()) + " smaller than kernel " +
                            shape_str(kernel.shape()));
  }
  const std::size_t ho = (x.h + 2 * pad.h - k.h) / stride + 1;
  const std::size_t wo = (x.w + 2 * pad.w - k.w) / stride + 1;
  const std::size_t kdim = x.c * k.h * k.w;
  const std::size_t n = ho * wo;
  const bool pointwise = k.h == 1 && k.w == 1 && stride == 1 && pad.h == 0 && pad.w == 0;

  std::vector<double> out(x.b * k.b * n);
  std::vector<double> cols(pointwise ? 0 : kdim * n);
  const auto in = input.values();
  ConstMapMat weight(kernel.values().data(), k.b, kdim);
  for (std::size_t b = 0; b < x.b; ++b) {
    const double* img = in.data() + b * x.c * x.h * x.w;
    const double* colp = img;
    if (!pointwise) {
      im2col(img, x.c, x.h, x.w, k.h, k.w, stride, pad, ho, wo, cols.data());
      colp = cols.data();
    }
    MapMat(out.data() + b * k.b * n, k.b, n).noalias() = weight * ConstMapMat(colp, kdim, n);
  }

  return make_result("conv2d", {x.b, k.b, ho, wo}, std::move(out), {input, kernel},
                     [x, k, stride, pad, ho, wo, kdim, n, pointwise](TensorImpl& self) {
                       auto* gin = parent_grad(self, 0);
                       auto* gker = parent_grad(self, 1);
                       const auto& in = parent_data(self, 0);
                       const auto& ker = parent_data(self, 1);
                       std::vector<double> cols(pointwise ? 0 : kdim * n);
                       ConstMapMat weight(ker.data(), k.b, kdim);
                       for (std::size_t b = 0; b < x.b; ++b) {
                         ConstMapMat gout(self.grad.data() + b * k.b * n, k.b, n);
                         const double* img = in.data() + b * x.c * x.h * x.w;
                         if (gker) {
                           const double* colp = img;
                           if (!pointwise) {
                             im2col(img, x.c, x.h, x.w, k.h, k.w, stride, pad, ho, wo, cols.data());
                             colp = cols.data();
                           }
                           MapMat(gker->data(), k.b, kdim).noalias() += gout * ConstMapMat(colp, kdim, n).transpose();
                         }
                         if (gin) {
                           double* gimg = gin->data() + b * x.c * x.h * x.w;
                           if (pointwise) {
                             MapMat(gimg, kdim, n).noalias() += weight.transpose() * gout;
                           } else {
                             MapMat(cols.data(), kdim, n).noalias() = weight.transpose() * gout;
                             col2im(cols.data(), x.c, x.h, x.w, k.h, k.w, stride, pad, ho, wo, gimg);
                           }
                         }
                       }
                     });
}

Tensor add_channel_bias(const Tensor& input, const Tensor& bias) {
  const auto x = dims4(input, "add_channel_bias");
  if (bias.shape() != Shape{x.c}) {
    throw PreconditionError("add_channel_bias: bias shape " + shape_str(bias.shape()) + " does not match " +
                            std::to_string(x.c) + " channels");
  }
  const std::size_t hw = x.h * x.w;
  std::vector<double> out(input.values().begin(), input.values().end());
  const auto bv = bias.values();
  for (std::size_t b = 0; b < x.b; ++b)
    for (std::size_t c = 0; c < x.c; ++c)
      for (std::size_t i = 0; i < hw; ++i) out[(b * x.c + c) * hw + i] += bv[c];
  return make_result("add_channel_bias", input.shape(), std::move(out), {input, bias}, [x, hw](TensorImpl& self) {
    if (auto* gx = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*gx)[i] += self.grad[i];
    }
    if (auto* gb = parent_grad(self, 1)) {
      for (std::size_t b = 0; b < x.b; ++b)
        for (std::size_t c = 0; c < x.c; ++c)
          for (std::size_t i = 0; i < hw; ++i) (*gb)[c] += self.grad[(b * x.c + c) * hw + i];
    }
  });
}

Tensor pool2d(const Tensor& input, PoolKind kind, std::size_t window, std::size_t stride) {
  const auto x = dims4(input, "pool2d");
  std::size_t wh = window, ww = window, sh = stride, sw = stride;
  if (kind == PoolKind::AdaptiveAvg || kind == PoolKind::AdaptiveMax) {
    wh = sh = x.h;
    ww = sw = x.w;
  } else {
    if (window == 0 || stride == 0) throw PreconditionError("pool2d: window and stride must be positive");
    if (window > x.h || window > x.w) {
      throw PreconditionError("pool2d: window " + std::to_string(window) + " larger than input " +
                              shape_str(input.shape()));
    }
  }
  const bool is_max = kind == PoolKind::Max || kind == PoolKind::AdaptiveMax;
  const std::size_t ho = (x.h - wh) / sh + 1;
  const std::size_t wo = (x.w - ww) / sw + 1;
  const auto in = input.values();
  std::vector<double> out(x.b * x.c * ho * wo);
  std::vector<std::size_t> argmax(is_max ? out.size() : 0);
  const double inv_area = 1.0 / static_cast<double>(wh * ww);
  for (std::size_t p = 0; p < x.b * x.c; ++p) {
    const double* plane = in.data() + p * x.h * x.w;
    for (std::size_t oy = 0; oy < ho; ++oy) {
      for (std::size_t ox = 0; ox < wo; ++ox) {
        const std::size_t o = (p * ho + oy) * wo + ox;
        if (is_max) {
          std::size_t best = (oy * sh) * x.w + ox * sw;
          for (std::size_t i = 0; i < wh; ++i)
            for (std::size_t j = 0; j < ww; ++j) {
              const std::size_t idx = (oy * sh + i) * x.w + ox * sw + j;
              if (plane[idx] > plane[best]) best = idx;
            }
          out[o] = plane[best];
          argmax[o] = p * x.h * x.w + best;
          if (g_trace) g_trace->record(best);
        } else {
          double acc = 0.0;
          for (std::size_t i = 0; i < wh; ++i)
            for (std::size_t j = 0; j < ww; ++j) acc += plane[(oy * sh + i) * x.w + ox * sw + j];
          out[o] = acc * inv_area;
        }
      }
    }
  }
  const char* name = is_max ? "max_pool" : "avg_pool";
  return make_result(name, {x.b, x.c, ho, wo}, std::move(out), {input},
                     [=, argmax = std::move(argmax)](TensorImpl& self) {
                       auto* gx = parent_grad(self, 0);
                       if (!gx) return;
                       if (is_max) {
                         for (std::size_t o = 0; o < self.grad.size(); ++o) (*gx)[argmax[o]] += self.grad[o];
                         return;
                       }
                       for (std::size_t p = 0; p < x.b * x.c; ++p)
                         for (std::size_t oy = 0; oy < ho; ++oy)
                           for (std::size_t ox = 0; ox < wo; ++ox) {
                             const double g = self.grad[(p * ho + oy) * wo + ox] * inv_area;
                             for (std::size_t i = 0; i < wh; ++i)
                               for (std::size_t j = 0; j < ww; ++j)
                                 (*gx)[p * x.h * x.w + (oy * sh + i) * x.w + ox * sw + j] += g;
                           }
                     });
}

Tensor softmax(const Tensor& input, std::size_t axis) {
  const auto& s = input.shape();
  if (axis >= s.size()) throw PreconditionError("softmax: axis out of range for " + shape_str(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t len = s[axis];
  const auto in = input.values();
  std::vector<double> out(in.size());
  for (std::size_t o = 0; o < outer; ++o) {
    for (std::size_t r = 0; r < inner; ++r) {
      const std::size_t base = o * len * inner + r;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t i = 0; i < len; ++i) mx = std::max(mx, in[base + i * inner]);
      double z = 0.0;
      for (std::size_t i = 0; i < len; ++i) z += out[base + i * inner] = std::exp(in[base + i * inner] - mx);
      for (std::size_t i = 0; i < len; ++i) out[base + i * inner] /= z;
    }
  }
  return make_result("softmax", s, std::move(out), {input}, [outer, inner, len](TensorImpl& self) {
    auto* gx = parent_grad(self, 0);
    if (!gx) return;
    for (std::size_t o = 0; o < outer; ++o) {
      for (std::size_t r = 0; r < inner; ++r) {
        const std::size_t base = o * len * inner + r;
        double dot = 0.0;
        for (std::size_t i = 0; i < len; ++i) dot += self.grad[base + i * inner] * self.data[base + i * inner];
        for (std::size_t i = 0; i < len; ++i) {
          const std::size_t k = base + i * inner;
          (*gx)[k] += self.data[k] * (self.grad[k] - dot);
        }
      }
    }
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
  return make_result("add", a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (auto* g = parent_grad(self, p))
        for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
  return make_result("sub", a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] -= self.grad[i];
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "mul");
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return make_result("mul", a.shape(), std::move(out), {a, b}, [](TensorImpl& self) {
    const auto& ad = parent_data(self, 0);
    const auto& bd = parent_data(self, 1);
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * bd[i];
    if (auto* g = parent_grad(self, 1))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i] * ad[i];
  });
}

Tensor abs(const Tensor& x) {
  trace_each(x.values(), [](double v) -> std::uint64_t { return v > 0.0 ? 2 : (v < 0.0 ? 0 : 1); });
  return unary(
      "abs", x, [](double v) { return std::abs(v); },
      [](double v, double) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      "sigmoid", x,
      [](double v) {
        if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor relu(const Tensor& x) {
  trace_each(x.values(), [](double v) -> std::uint64_t { return v > 0.0; });
  return unary(
      "relu", x, [](double v) { return v > 0.0 ? v : 0.0; }, [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

Tensor concat_channels(std::span<const Tensor> parts) {
  if (parts.empty()) throw PreconditionError("concat_channels: no inputs");
  const auto first = dims4(parts[0], "concat_channels");
  std::vector<std::size_t> channels;
  std::size_t total = 0;
  for (const auto& p : parts) {
    const auto d = dims4(p, "concat_channels");
    if (d.b != first.b || d.h != first.h || d.w != first.w) {
      throw PreconditionError("concat_channels: incompatible shapes " + shape_str(parts[0].shape()) + " and " +
                              shape_str(p.shape()));
    }
    channels.push_back(d.c);
    total += d.c;
  }
  const std::size_t hw = first.h * first.w;
  std::vector<double> out(first.b * total * hw);
  for (std::size_t b = 0; b < first.b; ++b) {
    std::size_t offset = 0;
    for (std::size_t p = 0; p < parts.size(); ++p) {
      const auto v = parts[p].values();
      std::copy_n(v.data() + b * channels[p] * hw, channels[p] * hw, out.data() + (b * total + offset) * hw);
      offset += channels[p];
    }
  }
  std::vector<Tensor> parents(parts.begin(), parts.end());
  return make_result("concat_channels", {first.b, total, first.h, first.w}, std::move(out), std::move(parents),
                     [channels, total, hw, batch = first.b](TensorImpl& self) {
                       std::size_t offset = 0;
                       for (std::size_t p = 0; p < channels.size(); ++p) {
                         if (auto* g = parent_grad(self, p)) {
                           for (std::size_t b = 0; b < batch; ++b) {
                             const double* src = self.grad.data() + (b * total + offset) * hw;
                             double* dst = g->data() + b * channels[p] * hw;
                             for (std::size_t i = 0; i < channels[p] * hw; ++i) dst[i] += src[i];
                           }
                         }
                         offset += channels[p];
                       }
                     });
}

Tensor concat_channels(std::initializer_list<Tensor> parts) {
  return concat_channels(std::span<const Tensor>(parts.begin(), parts.size()));
}

Tensor broadcast_mul(const Tensor& features, const Tensor& map) {
  const auto f = dims4(features, "broadcast_mul");
  const auto m = dims4(map, "broadcast_mul");
  if (m.c != 1 || m.b != f.b || m.h != f.h || m.w != f.w) {
    throw PreconditionError("broadcast_mul: map " + shape_str(map.shape()) + " cannot broadcast against " +
                            shape_str(features.shape()));
  }
  const std::size_t hw = f.h * f.w;
  const auto fv = features.values(), mv = map.values();
  std::vector<double> out(fv.size());
  for (std::size_t b = 0; b < f.b; ++b)
    for (std::size_t c = 0; c < f.c; ++c)
      for (std::size_t i = 0; i < hw; ++i) out[(b * f.c + c) * hw + i] = fv[(b * f.c + c) * hw + i] * mv[b * hw + i];
  return make_result("broadcast_mul", features.shape(), std::move(out), {features, map}, [f, hw](TensorImpl& self) {
    const auto& fd = parent_data(self, 0);
    const auto& md = parent_data(self, 1);
    auto* gf = parent_grad(self, 0);
    auto* gm = parent_grad(self, 1);
    for (std::size_t b = 0; b < f.b; ++b)
      for (std::size_t c = 0; c < f.c; ++c)
        for (std::size_t i = 0; i < hw; ++i) {
          const std::size_t k = (b * f.c + c) * hw + i;
          if (gf) (*gf)[k] += self.grad[k] * md[b * hw + i];
          if (gm) (*gm)[b * hw + i] += self.grad[k] * fd[k];
        }
  });
}

Tensor elementwise(const Tensor& a, const Tensor& b, Elementwise kind) {
  switch (kind) {
    case Elementwise::Add: return add(a, b);
    case Elementwise::Sub: return sub(a, b);
    case Elementwise::Mul: return mul(a, b);
    case Elementwise::Abs: return abs(a);
    case Elementwise::Sigmoid: return sigmoid(a);
    case Elementwise::Relu: return relu(a);
    case Elementwise::ConcatChannels: return concat_channels({a, b});
    case Elementwise::BroadcastMul: return broadcast_mul(a, b);
  }
  throw PreconditionError("elementwise: unknown kind");
}

Tensor scale_channels(const Tensor& input, const Tensor& weights) {
  const auto x = dims4(input, "scale_channels");
  const bool shared = weights.shape() == Shape{x.c};
  if (!shared && weights.shape() != Shape{x.b, x.c, 1, 1}) {
    throw PreconditionError("scale_channels: weights " + shape_str(weights.shape()) + " do not match " +
                            shape_str(input.shape()));
  }
  const std::size_t hw = x.h * x.w;
  const auto xv = input.values(), wv = weights.values();
  std::vector<double> out(xv.size());
  for (std::size_t b = 0; b < x.b; ++b)
    for (std::size_t c = 0; c < x.c; ++c) {
      const double s = wv[shared ? c : b * x.c + c];
      for (std::size_t i = 0; i < hw; ++i) out[(b * x.c + c) * hw + i] = xv[(b * x.c + c) * hw + i] * s;
    }
  return make_result("scale_channels", input.shape(), std::move(out), {input, weights},
                     [x, hw, shared](TensorImpl& self) {
                       const auto& xd = parent_data(self, 0);
                       const auto& wd = parent_data(self, 1);
                       auto* gx = parent_grad(self, 0);
                       auto* gw = parent_grad(self, 1);
                       for (std::size_t b = 0; b < x.b; ++b)
                         for (std::size_t c = 0; c < x.c; ++c) {
                           const std::size_t wi = shared ? c : b * x.c + c;
                           double acc = 0.0;
                           for (std::size_t i = 0; i < hw; ++i) {
                             const std::size_t k = (b * x.c + c) * hw + i;
                             if (gx) (*gx)[k] += self.grad[k] * wd[wi];
                             acc += self.grad[k] * xd[k];
                           }
                           if (gw) (*gw)[wi] += acc;
                         }
                     });
}

Tensor scale(const Tensor& x, double factor) {
  return unary(
      "scale", x, [factor](double v) { return v * factor; }, [factor](double, double) { return factor; });
}

Tensor add_scalar(const Tensor& x, double offset) {
  return unary(
      "add_scalar", x, [offset](double v) { return v + offset; }, [](double, double) { return 1.0; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (lo > hi) throw PreconditionError("clamp: lo > hi");
  trace_each(x.values(), [lo, hi](double v) -> std::uint64_t { return v < lo ? 0 : (v > hi ? 2 : 1); });
  return unary(
      "clamp", x, [lo, hi](double v) { return std::clamp(v, lo, hi); },
      [lo, hi](double v, double) { return (v >= lo && v <= hi) ? 1.0 : 0.0; });
}

namespace {

struct Tap {
  std::size_t i0, i1;
  double w1;  // weight of i1; i0 gets 1 - w1
};

std::vector<Tap> bilinear_taps(std::size_t in, std::size_t out) {
  std::vector<Tap> taps(out);
  const double ratio = static_cast<double>(in) / static_cast<double>(out);
  for (std::size_t d = 0; d < out; ++d) {
    double src = (static_cast<double>(d) + 0.5) * ratio - 0.5;
    if (src < 0.0) src = 0.0;
    auto i0 = static_cast<std::size_t>(src);
    if (i0 > in - 1) i0 = in - 1;
    const std::size_t i1 = std::min(i0 + 1, in - 1);
    taps[d] = {i0, i1, i1 == i0 ? 0.0 : src - static_cast<double>(i0)};
  }
  return taps;
}

std::vector<std::size_t> nearest_taps(std::size_t in, std::size_t out) {
  std::vector<std::size_t> taps(out);
  for (std::size_t d = 0; d < out; ++d) taps[d] = std::min(d * in / out, in - 1);
  return taps;
}

}  // namespace

Tensor resize(const Tensor& input, std::size_t height, std::size_t width, ResizeMode mode) {
  const auto x = dims4(input, "resize");
  if (height == 0 || width == 0) throw PreconditionError("resize: target extents must be positive");
  const auto in = input.values();
  std::vector<double> out(x.b * x.c * height * width);
  if (mode == ResizeMode::Nearest) {
    auto ty = nearest_taps(x.h, height);
    auto tx = nearest_taps(x.w, width);
    for (std::size_t p = 0; p < x.b * x.c; ++p)
      for (std::size_t oy = 0; oy < height; ++oy)
        for (std::size_t ox = 0; ox < width; ++ox)
          out[(p * height + oy) * width + ox] = in[(p * x.h + ty[oy]) * x.w + tx[ox]];
    return make_result("resize_nearest", {x.b, x.c, height, width}, std::move(out), {input},
                       [x, height, width, ty = std::move(ty), tx = std::move(tx)](TensorImpl& self) {
                         auto* gx = parent_grad(self, 0);
                         if (!gx) return;
                         for (std::size_t p = 0; p < x.b * x.c; ++p)
                           for (std::size_t oy = 0; oy < height; ++oy)
                             for (std::size_t ox = 0; ox < width; ++ox)
                               (*gx)[(p * x.h + ty[oy]) * x.w + tx[ox]] += self.grad[(p * height + oy) * width + ox];
                       });
  }
  auto ty = bilinear_taps(x.h, height);
  auto tx = bilinear_taps(x.w, width);
  for (std::size_t p = 0; p < x.b * x.c; ++p) {
    const double* plane = in.data() + p * x.h * x.w;
    for (std::size_t oy = 0; oy < height; ++oy) {
      const auto& a = ty[oy];
      for (std::size_t ox = 0; ox < width; ++ox) {
        const auto& c = tx[ox];
        const double top = plane[a.i0 * x.w + c.i0] * (1.0 - c.w1) + plane[a.i0 * x.w + c.i1] * c.w1;
        const double bot = plane[a.i1 * x.w + c.i0] * (1.0 - c.w1) + plane[a.i1 * x.w + c.i1] * c.w1;
        out[(p * height + oy) * width + ox] = top * (1.0 - a.w1) + bot * a.w1;
      }
    }
  }
  return make_result("resize_bilinear", {x.b, x.c, height, width}, std::move(out), {input},
                     [x, height, width, ty = std::move(ty), tx = std::move(tx)](TensorImpl& self) {
                       auto* gx = parent_grad(self, 0);
                       if (!gx) return;
                       for (std::size_t p = 0; p < x.b * x.c; ++p) {
                         double* plane = gx->data() + p * x.h * x.w;
                         for (std::size_t oy = 0; oy < height; ++oy) {
                           const auto& a = ty[oy];
                           for (std::size_t ox = 0; ox < width; ++ox) {
                             const auto& c = tx[ox];
                             const double g = self.grad[(p * height + oy) * width + ox];
                             plane[a.i0 * x.w + c.i0] += g * (1.0 - a.w1) * (1.0 - c.w1);
                             plane[a.i0 * x.w + c.i1] += g * (1.0 - a.w1) * c.w1;
                             plane[a.i1 * x.w + c.i0] += g * a.w1 * (1.0 - c.w1);
                             plane[a.i1 * x.w + c.i1] += g * a.w1 * c.w1;
                           }
                         }
                       }
                     });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  return make_result("sum", {1}, {acc}, {x}, [](TensorImpl& self) {
    if (auto* g = parent_grad(self, 0))
      for (auto& v : *g) v += self.grad[0];
  });
}

Tensor mean(const Tensor& x) { return scale(sum(x), 1.0 / static_cast<double>(x.numel())); }

Tensor gather(const Tensor& x, Shape out_shape, std::vector<std::size_t> index) {
  if (index.size() != shape_numel(out_shape)) {
    throw PreconditionError("gather: index count does not match output shape " + shape_str(out_shape));
  }
  const auto in = x.values();
  std::vector<double> out(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= in.size()) throw PreconditionError("gather: index out of range");
    out[i] = in[index[i]];
  }
  return make_result("gather", std::move(out_shape), std::move(out), {x},
                     [index = std::move(index)](TensorImpl& self) {
                       auto* g = parent_grad(self, 0);
                       if (!g) return;
                       for (std::size_t i = 0; i < index.size(); ++i) (*g)[index[i]] += self.grad[i];
                     });
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw PreconditionError("reshape: " + shape_str(x.shape()) + " cannot become " + shape_str(shape));
  }
  std::vector<double> out(x.values().begin(), x.values().end());
  return make_result("reshape", std::move(shape), std::move(out), {x}, [](TensorImpl& self) {
    if (auto* g = parent_grad(self, 0))
      for (std::size_t i = 0; i < self.grad.size(); ++i) (*g)[i] += self.grad[i];
  });
}

Tensor channel_cosine(const Tensor& a, const Tensor& b, double eps) {
  require_same_shape(a, b, "channel_cosine");
  const auto d = dims4(a, "channel_cosine");
  const std::size_t hw = d.h * d.w;
  const auto av = a.values(), bv = b.values();
  std::vector<double> out(d.b * hw);
  // Per position: dot, |a|^2, |b|^2.
  std::vector<double> stats(3 * d.b * hw, 0.0);
  for (std::size_t n = 0; n < d.b; ++n)
    for (std::size_t c = 0; c < d.c; ++c)
      for (std::size_t i = 0; i < hw; ++i) {
        const std::size_t k = (n * d.c + c) * hw + i;
        double* s = &stats[3 * (n * hw + i)];
        s[0] += av[k] * bv[k];
        s[1] += av[k] * av[k];
        s[2] += bv[k] * bv[k];
      }
  for (std::size_t p = 0; p < d.b * hw; ++p) {
    const double* s = &stats[3 * p];
    out[p] = s[0] / std::max(std::sqrt(s[1]) * std::sqrt(s[2]), eps);
    if (g_trace) g_trace->record(std::sqrt(s[1]) * std::sqrt(s[2]) <= eps);
  }
  return make_result("channel_cosine", {d.b, 1, d.h, d.w}, std::move(out), {a, b},
                     [d, hw, eps, stats = std::move(stats)](TensorImpl& self) {
                       const auto& ad = parent_data(self, 0);
                       const auto& bd = parent_data(self, 1);
                       auto* ga = parent_grad(self, 0);
                       auto* gb = parent_grad(self, 1);
                       for (std::size_t n = 0; n < d.b; ++n)
                         for (std::size_t i = 0; i < hw; ++i) {
                           const std::size_t p = n * hw + i;
                           const double* s = &stats[3 * p];
                           const double na = std::sqrt(s[1]), nb = std::sqrt(s[2]);
                           const double g = self.grad[p];
                           const double cos = self.data[p];
                           const bool guarded = na * nb <= eps;
                           const double denom = guarded ? eps : na * nb;
                           for (std::size_t c = 0; c < d.c; ++c) {
                             const std::size_t k = (n * d.c + c) * hw + i;
                             if (ga) (*ga)[k] += g * (bd[k] / denom - (guarded ? 0.0 : cos * ad[k] / s[1]));
                             if (gb) (*gb)[k] += g * (ad[k] / denom - (guarded ? 0.0 : cos * bd[k] / s[2]));
                           }
                         }
                     });
}

Tensor bce_mean(const Tensor& prob, const Tensor& target, double eps) {
  require_same_shape(prob, target, "bce_mean");
  const auto pv = prob.values(), tv = target.values();
  const double inv_n = 1.0 / static_cast<double>(pv.size());
  trace_each(pv, [eps](double p) -> std::uint64_t { return p < eps ? 0 : (p > 1.0 - eps ? 2 : 1); });
  double acc = 0.0;
  for (std::size_t i = 0; i < pv.size(); ++i) {
    const double p = std::clamp(pv[i], eps, 1.0 - eps);
    acc -= tv[i] * std::log(p) + (1.0 - tv[i]) * std::log(1.0 - p);
  }
  return make_result("bce_mean", {1}, {acc * inv_n}, {prob, target}, [eps, inv_n](TensorImpl& self) {
    auto* gp = parent_grad(self, 0);
    if (!gp) return;
    const auto& pd = parent_data(self, 0);
    const auto& td = parent_data(self, 1);
    const double g = self.grad[0] * inv_n;
    for (std::size_t i = 0; i < pd.size(); ++i) {
      const double p = pd[i];
      if (p < eps || p > 1.0 - eps) continue;
      (*gp)[i] += g * (-td[i] / p + (1.0 - td[i]) / (1.0 - p));
    }
  });
}

Tensor group_norm(const Tensor& input, std::size_t groups, const Tensor& gamma, const Tensor& beta, double eps) {
  const auto x = dims4(input, "group_norm");
  if (groups == 0 || x.c % groups != 0) {
    throw PreconditionError("group_norm: " + std::to_string(groups) + " groups do not divide " +
                            std::to_string(x.c) + " channels");
  }
  if (gamma.shape() != Shape{x.c} || beta.shape() != Shape{x.c}) {
    throw PreconditionError("group_norm: affine parameters must have shape [C]");
  }
  const std::size_t cpg = x.c / groups;
  const std::size_t hw = x.h * x.w;
  const std::size_t m = cpg * hw;
  const auto in = input.values();
  const auto gv = gamma.values(), bv = beta.values();
  std::vector<double> xhat(in.size()), out(in.size()), inv_std(x.b * groups);
  for (std::size_t n = 0; n < x.b; ++n)
    for (std::size_t g = 0; g < groups; ++g) {
      const std::size_t base = (n * x.c + g * cpg) * hw;
      double mu = 0.0;
      for (std::size_t i = 0; i < m; ++i) mu += in[base + i];
      mu /= static_cast<double>(m);
      double var = 0.0;
      for (std::size_t i = 0; i < m; ++i) var += (in[base + i] - mu) * (in[base + i] - mu);
      var /= static_cast<double>(m);
      const double is = 1.0 / std::sqrt(var + eps);
      inv_std[n * groups + g] = is;
      for (std::size_t i = 0; i < m; ++i) {
        const std::size_t c = g * cpg + i / hw;
        xhat[base + i] = (in[base + i] - mu) * is;
        out[base + i] = xhat[base + i] * gv[c] + bv[c];
      }
    }
  return make_result("group_norm", input.shape(), std::move(out), {input, gamma, beta},
                     [x, groups, cpg, hw, m, xhat = std::move(xhat), inv_std = std::move(inv_std)](TensorImpl& self) {
                       const auto& gam = parent_data(self, 1);
                       auto* gx = parent_grad(self, 0);
                       auto* gg = parent_grad(self, 1);
                       auto* gb = parent_grad(self, 2);
                       for (std::size_t n = 0; n < x.b; ++n)
                         for (std::size_t g = 0; g < groups; ++g) {
                           const std::size_t base = (n * x.c + g * cpg) * hw;
                           double sum_dy = 0.0, sum_dy_xhat = 0.0;
                           for (std::size_t i = 0; i < m; ++i) {
                             const std::size_t c = g * cpg + i / hw;
                             const double dy = self.grad[base + i];
                             if (gg) (*gg)[c] += dy * xhat[base + i];
                             if (gb) (*gb)[c] += dy;
                             const double dxhat = dy * gam[c];
                             sum_dy += dxhat;
                             sum_dy_xhat += dxhat * xhat[base + i];
                           }
                           if (!gx) continue;
                           const double is = inv_std[n * groups + g];
                           const double inv_m = 1.0 / static_cast<double>(m);
                           for (std::size_t i = 0; i < m; ++i) {
                             const std::size_t c = g * cpg + i / hw;
                             const double dxhat = self.grad[base + i] * gam[c];
                             (*gx)[base + i] += is * (dxhat - inv_m * sum_dy - xhat[base + i] * inv_m * sum_dy_xhat);
                           }
                         }
                     });
}

}  // namespace fino::ops
