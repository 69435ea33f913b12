#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "fino/tensor.hpp"

// Random inputs and brute-force reference implementations shared by the
// unit tests and the acceptance runner. Oracles work on plain vectors and
// never call into the library's ops.
namespace fino::testing {

inline std::vector<double> random_values(std::size_t n, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  std::vector<double> v(n);
  for (auto& x : v) x = dist(rng);
  return v;
}

inline Tensor random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0,
                            bool requires_grad = false) {
  const auto n = shape_numel(shape);
  return Tensor::from(std::move(shape), random_values(n, rng, lo, hi), requires_grad);
}

inline Tensor random_mask(Shape shape, std::mt19937_64& rng, double p = 0.5) {
  std::bernoulli_distribution coin(p);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = coin(rng) ? 1.0 : 0.0;
  return Tensor::from(std::move(shape), std::move(v));
}

inline std::size_t pick(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = a.size() == b.size() ? 0.0 : INFINITY;
  for (std::size_t i = 0; i < std::min(a.size(), b.size()); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double max_abs_diff(const Tensor& a, const std::vector<double>& b) { return max_abs_diff(a.values(), b); }

namespace oracle {

/// Direct seven-loop cross-correlation with zero padding.
inline std::vector<double> conv2d(const std::vector<double>& x, std::size_t batch, std::size_t cin, std::size_t h,
                                  std::size_t w, const std::vector<double>& k, std::size_t cout, std::size_t kh,
                                  std::size_t kw, std::size_t stride, std::size_t ph, std::size_t pw) {
  const std::size_t oh = (h + 2 * ph - kh) / stride + 1, ow = (w + 2 * pw - kw) / stride + 1;
  std::vector<double> out(batch * cout * oh * ow, 0.0);
  for (std::size_t b = 0; b < batch; ++b)
    for (std::size_t o = 0; o < cout; ++o)
      for (std::size_t y = 0; y < oh; ++y)
        for (std::size_t xo = 0; xo < ow; ++xo) {
          double acc = 0.0;
          for (std::size_t c = 0; c < cin; ++c)
            for (std::size_t i = 0; i < kh; ++i)
              for (std::size_t j = 0; j < kw; ++j) {
                const long iy = static_cast<long>(y * stride + i) - static_cast<long>(ph);
                const long ix = static_cast<long>(xo * stride + j) - static_cast<long>(pw);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(h) || ix >= static_cast<long>(w)) continue;
                acc += x[((b * cin + c) * h + iy) * w + ix] * k[((o * cin + c) * kh + i) * kw + j];
              }
          out[((b * cout + o) * oh + y) * ow + xo] = acc;
        }
  return out;
}

/// Window max or mean over [planes, h, w] without padding.
inline std::vector<double> pool(const std::vector<double>& x, std::size_t planes, std::size_t h, std::size_t w,
                                std::size_t window, std::size_t stride, bool max) {
  const std::size_t oh = (h - window) / stride + 1, ow = (w - window) / stride + 1;
  std::vector<double> out;
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < oh; ++y)
      for (std::size_t xo = 0; xo < ow; ++xo) {
        double acc = max ? -INFINITY : 0.0;
        for (std::size_t i = 0; i < window; ++i)
          for (std::size_t j = 0; j < window; ++j) {
            const double v = x[(p * h + y * stride + i) * w + xo * stride + j];
            acc = max ? std::max(acc, v) : acc + v;
          }
        out.push_back(max ? acc : acc / static_cast<double>(window * window));
      }
  return out;
}

/// Mean of -[t log p + (1-t) log(1-p)] with p clamped to [eps, 1-eps].
inline double bce(const std::vector<double>& p, const std::vector<double>& t, double eps) {
  double acc = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double q = std::min(std::max(p[i], eps), 1.0 - eps);
    acc -= t[i] * std::log(q) + (1.0 - t[i]) * std::log(1.0 - q);
  }
  return acc / static_cast<double>(p.size());
}

struct Counts {
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
};

inline Counts confusion(const std::vector<double>& pred, const std::vector<double>& gt) {
  Counts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] == 1.0 && gt[i] == 1.0) ++c.tp;
    else if (pred[i] == 1.0) ++c.fp;
    else if (gt[i] == 1.0) ++c.fn;
    else ++c.tn;
  }
  return c;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Channel attention: d [B,C,H,W]; fc1 [hid,C] + b1, fc2 [C,hid] + b2.
/// Returns d[b,c,:,:] * sigmoid(fc2 relu(fc1 (max + mean))).
inline std::vector<double> channel_attention(const std::vector<double>& d, std::size_t batch, std::size_t c,
                                             std::size_t hw, const std::vector<double>& w1,
                                             const std::vector<double>& b1, const std::vector<double>& w2,
                                             const std::vector<double>& b2, std::size_t hidden) {
  std::vector<double> out(d.size());
  for (std::size_t b = 0; b < batch; ++b) {
    std::vector<double> desc(c);
    for (std::size_t ch = 0; ch < c; ++ch) {
      double mx = -INFINITY, sum = 0.0;
      for (std::size_t k = 0; k < hw; ++k) {
        const double v = d[(b * c + ch) * hw + k];
        mx = std::max(mx, v);
        sum += v;
      }
      desc[ch] = mx + sum / static_cast<double>(hw);
    }
    std::vector<double> hid(hidden);
    for (std::size_t j = 0; j < hidden; ++j) {
      double acc = b1[j];
      for (std::size_t ch = 0; ch < c; ++ch) acc += w1[j * c + ch] * desc[ch];
      hid[j] = std::max(acc, 0.0);
    }
    for (std::size_t ch = 0; ch < c; ++ch) {
      double acc = b2[ch];
      for (std::size_t j = 0; j < hidden; ++j) acc += w2[ch * hidden + j] * hid[j];
      const double g = sigmoid(acc);
      for (std::size_t k = 0; k < hw; ++k) out[(b * c + ch) * hw + k] = d[(b * c + ch) * hw + k] * g;
    }
  }
  return out;
}

}  // namespace oracle
}  // namespace fino::testing
