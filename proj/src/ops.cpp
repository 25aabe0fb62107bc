#include "demixkit/ops.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>

#include "demixkit/kernels.hpp"

namespace demixkit {

namespace {

bool wants_grad(std::initializer_list<const Tensor*> inputs) {
  if (!Tape::active()) return false;
  for (const Tensor* t : inputs) {
    if (t->requires_grad()) return true;
  }
  return false;
}

double* grad_of(const std::shared_ptr<TensorImpl>& t) {
  return t->grad.empty() ? nullptr : t->grad.data();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shapes " + a.shape_str() + " and " +
                     b.shape_str() + " differ");
  }
}

std::size_t segment_rows(const Tensor& x, std::size_t n_segments, const char* op) {
  const std::size_t r = x.rows();
  if (n_segments == 0 || r % n_segments != 0) {
    throw ShapeError(std::string(op) + ": " + std::to_string(r) +
                     " rows do not split into " + std::to_string(n_segments) +
                     " segments");
  }
  return r / n_segments;
}

struct SpliceGeometry {
  int min_offset;
  std::size_t span;      // max - min
  std::size_t out_rows;  // per segment
};

SpliceGeometry splice_geometry(std::size_t seg_rows, const std::vector<int>& context,
                               const char* op) {
  if (context.empty()) throw ValueError(std::string(op) + ": empty context");
  const auto [lo, hi] = std::minmax_element(context.begin(), context.end());
  const std::size_t span = static_cast<std::size_t>(*hi - *lo);
  if (seg_rows <= span) {
    throw ValueError(std::string(op) + ": segment of " + std::to_string(seg_rows) +
                     " frames is too short for a context span of " +
                     std::to_string(span));
  }
  return SpliceGeometry{*lo, span, seg_rows - span};
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions of " + a.shape_str() + " and " +
                     b.shape_str() + " disagree");
  }
  Tensor out({m, n});
  kernels::gemm(a.values().data(), b.values().data(), out.values().data(), m, k, n);
  out.check_finite("matmul");
  if (wants_grad({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.handle(), bi = b.handle(), oi = out.handle();
    Tape::active()->record({ai, bi}, oi, [ai, bi, oi, m, k, n] {
      const double* g = oi->grad.data();
      if (double* ga = grad_of(ai)) kernels::gemm_nt(g, bi->value.data(), ga, m, n, k);
      if (double* gb = grad_of(bi)) kernels::gemm_tn(ai->value.data(), g, gb, m, k, n);
    });
  }
  return out;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& bias) {
  const std::size_t m = x.rows(), k = x.cols(), n = w.cols();
  if (w.rows() != k) {
    throw ShapeError("linear: input " + x.shape_str() + " does not match weight " +
                     w.shape_str());
  }
  if (bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("linear: bias " + bias.shape_str() + " must be [1x" +
                     std::to_string(n) + "]");
  }
  Tensor out({m, n});
  double* o = out.values().data();
  const double* bv = bias.values().data();
  for (std::size_t i = 0; i < m; ++i) std::memcpy(o + i * n, bv, n * sizeof(double));
  kernels::gemm(x.values().data(), w.values().data(), o, m, k, n);
  out.check_finite("linear");
  if (wants_grad({&x, &w, &bias})) {
    out.set_requires_grad(true);
    auto xi = x.handle(), wi = w.handle(), bi = bias.handle(), oi = out.handle();
    Tape::active()->record({xi, wi, bi}, oi, [xi, wi, bi, oi, m, k, n] {
      const double* g = oi->grad.data();
      if (double* gx = grad_of(xi)) kernels::gemm_nt(g, wi->value.data(), gx, m, n, k);
      if (double* gw = grad_of(wi)) kernels::gemm_tn(xi->value.data(), g, gw, m, k, n);
      if (double* gb = grad_of(bi)) {
        for (std::size_t i = 0; i < m; ++i) {
          const double* grow = g + i * n;
          for (std::size_t j = 0; j < n; ++j) gb[j] += grow[j];
        }
      }
    });
  }
  return out;
}

Tensor tdnn_splice(const Tensor& x, const std::vector<int>& context,
                   std::size_t n_segments) {
  const std::size_t t = segment_rows(x, n_segments, "tdnn_splice");
  const std::size_t d = x.cols();
  const SpliceGeometry geo = splice_geometry(t, context, "tdnn_splice");
  const std::size_t taps = context.size();
  Tensor out({n_segments * geo.out_rows, taps * d});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (std::size_t s = 0; s < n_segments; ++s) {
    const double* xs = xv + s * t * d;
    double* os = ov + s * geo.out_rows * taps * d;
    for (std::size_t i = 0; i < geo.out_rows; ++i) {
      for (std::size_t c = 0; c < taps; ++c) {
        const std::size_t src = i + static_cast<std::size_t>(context[c] - geo.min_offset);
        std::memcpy(os + (i * taps + c) * d, xs + src * d, d * sizeof(double));
      }
    }
  }
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    auto xi = x.handle(), oi = out.handle();
    Tape::active()->record({xi}, oi, [xi, oi, context, geo, n_segments, t, d, taps] {
      double* gx = grad_of(xi);
      if (!gx) return;
      const double* g = oi->grad.data();
      for (std::size_t s = 0; s < n_segments; ++s) {
        double* gxs = gx + s * t * d;
        const double* gs = g + s * geo.out_rows * taps * d;
        for (std::size_t i = 0; i < geo.out_rows; ++i) {
          for (std::size_t c = 0; c < taps; ++c) {
            const std::size_t dst = i + static_cast<std::size_t>(context[c] - geo.min_offset);
            const double* grow = gs + (i * taps + c) * d;
            double* grad_row = gxs + dst * d;
            for (std::size_t j = 0; j < d; ++j) grad_row[j] += grow[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor tdnn_linear(const Tensor& x, const Tensor& w, const Tensor& bias,
                   const std::vector<int>& context, std::size_t n_segments) {
  const std::size_t t = segment_rows(x, n_segments, "tdnn_linear");
  const std::size_t d = x.cols();
  const SpliceGeometry geo = splice_geometry(t, context, "tdnn_linear");
  const std::size_t taps = context.size();
  if (w.rows() != taps * d) {
    throw ShapeError("tdnn_linear: weight " + w.shape_str() + " does not match " +
                     std::to_string(taps) + " taps of width " + std::to_string(d));
  }
  const std::size_t n = w.cols();
  if (bias.rows() != 1 || bias.cols() != n) {
    throw ShapeError("tdnn_linear: bias " + bias.shape_str() + " must be [1x" +
                     std::to_string(n) + "]");
  }

  Tensor out({n_segments * geo.out_rows, n});
  double* ov = out.values().data();
  const double* bv = bias.values().data();
  for (std::size_t i = 0; i < out.rows(); ++i) {
    std::memcpy(ov + i * n, bv, n * sizeof(double));
  }
  const double* xv = x.values().data();
  const double* wv = w.values().data();
  // One GEMM per (segment, tap); tap c multiplies the weight block at rows
  // [c*d, (c+1)*d) against input rows shifted by its offset.
  for (std::size_t s = 0; s < n_segments; ++s) {
    for (std::size_t c = 0; c < taps; ++c) {
      const std::size_t shift = static_cast<std::size_t>(context[c] - geo.min_offset);
      const double* xs = xv + (s * t + shift) * d;
      kernels::gemm(xs, wv + c * d * n, ov + s * geo.out_rows * n, geo.out_rows, d, n);
    }
  }
  out.check_finite("tdnn_linear");

  if (wants_grad({&x, &w, &bias})) {
    out.set_requires_grad(true);
    auto xi = x.handle(), wi = w.handle(), bi = bias.handle(), oi = out.handle();
    Tape::active()->record(
        {xi, wi, bi}, oi, [xi, wi, bi, oi, context, geo, n_segments, t, d, taps, n] {
          const double* g = oi->grad.data();
          double* gx = grad_of(xi);
          double* gw = grad_of(wi);
          for (std::size_t s = 0; s < n_segments; ++s) {
            const double* gs = g + s * geo.out_rows * n;
            for (std::size_t c = 0; c < taps; ++c) {
              const std::size_t shift =
                  static_cast<std::size_t>(context[c] - geo.min_offset);
              const std::size_t row0 = s * t + shift;
              if (gx) {
                kernels::gemm_nt(gs, wi->value.data() + c * d * n, gx + row0 * d,
                                 geo.out_rows, n, d);
              }
              if (gw) {
                kernels::gemm_tn(xi->value.data() + row0 * d, gs, gw + c * d * n,
                                 geo.out_rows, d, n);
              }
            }
          }
          if (double* gb = grad_of(bi)) {
            const std::size_t rows = n_segments * geo.out_rows;
            for (std::size_t i = 0; i < rows; ++i) {
              const double* grow = g + i * n;
              for (std::size_t j = 0; j < n; ++j) gb[j] += grow[j];
            }
          }
        });
  }
  return out;
}

Tensor relu(const Tensor& x) {
  Tensor out(x.shape());
  const double* xv = x.values().data();
  double* ov = out.values().data();
  const std::size_t n = x.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = xv[i] > 0.0 ? xv[i] : 0.0;
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    auto xi = x.handle(), oi = out.handle();
    Tape::active()->record({xi}, oi, [xi, oi, n] {
      double* gx = grad_of(xi);
      if (!gx) return;
      const double* g = oi->grad.data();
      const double* xv = xi->value.data();
      // Subgradient at exactly zero is zero.
      for (std::size_t i = 0; i < n; ++i) {
        if (xv[i] > 0.0) gx[i] += g[i];
      }
    });
  }
  return out;
}

Tensor batch_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  BatchNormState& state, Mode mode) {
  const std::size_t b = x.rows(), d = x.cols();
  if (gamma.rows() != 1 || gamma.cols() != d || beta.rows() != 1 || beta.cols() != d) {
    throw ShapeError("batch_norm: gamma " + gamma.shape_str() + " / beta " +
                     beta.shape_str() + " must be [1x" + std::to_string(d) + "]");
  }
  if (state.running_mean.size() != d || state.running_var.size() != d) {
    throw ShapeError("batch_norm: state dimension " +
                     std::to_string(state.running_mean.size()) + " != " +
                     std::to_string(d));
  }
  if (mode == Mode::kTrain && b < 2) {
    throw ValueError("batch_norm: train mode needs a batch of at least 2 rows, got " +
                     std::to_string(b));
  }

  std::vector<double> mean(d), inv_std(d);
  if (mode == Mode::kTrain) {
    const double* xv = x.values().data();
    std::vector<double> var(d, 0.0);
    for (std::size_t i = 0; i < b; ++i) {
      const double* row = xv + i * d;
      for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(b);
    for (std::size_t i = 0; i < b; ++i) {
      const double* row = xv + i * d;
      for (std::size_t j = 0; j < d; ++j) {
        const double c = row[j] - mean[j];
        var[j] += c * c;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      var[j] /= static_cast<double>(b);
      inv_std[j] = 1.0 / std::sqrt(var[j] + state.eps);
      state.running_mean[j] = state.momentum * state.running_mean[j] +
                              (1.0 - state.momentum) * mean[j];
      state.running_var[j] = state.momentum * state.running_var[j] +
                             (1.0 - state.momentum) * var[j];
    }
  } else {
    for (std::size_t j = 0; j < d; ++j) {
      mean[j] = state.running_mean[j];
      inv_std[j] = 1.0 / std::sqrt(state.running_var[j] + state.eps);
    }
  }

  Tensor out({b, d});
  {
    const double* xv = x.values().data();
    const double* gv = gamma.values().data();
    const double* bv = beta.values().data();
    double* ov = out.values().data();
    for (std::size_t i = 0; i < b; ++i) {
      const double* row = xv + i * d;
      double* orow = ov + i * d;
      for (std::size_t j = 0; j < d; ++j) {
        orow[j] = gv[j] * (row[j] - mean[j]) * inv_std[j] + bv[j];
      }
    }
  }
  out.check_finite("batch_norm");

  if (wants_grad({&x, &gamma, &beta})) {
    out.set_requires_grad(true);
    auto xi = x.handle(), gi = gamma.handle(), bi = beta.handle(), oi = out.handle();
    const bool train = mode == Mode::kTrain;
    Tape::active()->record(
        {xi, gi, bi}, oi, [xi, gi, bi, oi, mean, inv_std, b, d, train] {
          const double* g = oi->grad.data();
          const double* xv = xi->value.data();
          const double* gv = gi->value.data();
          // Column sums of g and of g * xhat, shared by all three gradients.
          std::vector<double> sum_g(d, 0.0), sum_gx(d, 0.0);
          for (std::size_t i = 0; i < b; ++i) {
            const double* grow = g + i * d;
            const double* xrow = xv + i * d;
            for (std::size_t j = 0; j < d; ++j) {
              const double xhat = (xrow[j] - mean[j]) * inv_std[j];
              sum_g[j] += grow[j];
              sum_gx[j] += grow[j] * xhat;
            }
          }
          if (double* gb = grad_of(bi)) {
            for (std::size_t j = 0; j < d; ++j) gb[j] += sum_g[j];
          }
          if (double* gg = grad_of(gi)) {
            for (std::size_t j = 0; j < d; ++j) gg[j] += sum_gx[j];
          }
          if (double* gx = grad_of(xi)) {
            const double inv_b = 1.0 / static_cast<double>(b);
            for (std::size_t i = 0; i < b; ++i) {
              const double* grow = g + i * d;
              const double* xrow = xv + i * d;
              double* gxrow = gx + i * d;
              for (std::size_t j = 0; j < d; ++j) {
                if (train) {
                  const double xhat = (xrow[j] - mean[j]) * inv_std[j];
                  gxrow[j] += gv[j] * inv_std[j] *
                              (grow[j] - sum_g[j] * inv_b - xhat * sum_gx[j] * inv_b);
                } else {
                  gxrow[j] += gv[j] * inv_std[j] * grow[j];
                }
              }
            }
          }
        });
  }
  return out;
}

Tensor stats_pool(const Tensor& x, std::size_t n_segments) {
  const std::size_t t = segment_rows(x, n_segments, "stats_pool");
  const std::size_t d = x.cols();
  if (t < 1) throw ValueError("stats_pool: empty sequence");
  constexpr double kVarEps = 1e-10;

  Tensor out({n_segments, 2 * d});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (std::size_t s = 0; s < n_segments; ++s) {
    const double* xs = xv + s * t * d;
    double* mean = ov + s * 2 * d;
    double* stdv = mean + d;
    for (std::size_t j = 0; j < d; ++j) mean[j] = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      const double* row = xs + i * d;
      for (std::size_t j = 0; j < d; ++j) mean[j] += row[j];
    }
    for (std::size_t j = 0; j < d; ++j) mean[j] /= static_cast<double>(t);
    for (std::size_t j = 0; j < d; ++j) stdv[j] = 0.0;
    for (std::size_t i = 0; i < t; ++i) {
      const double* row = xs + i * d;
      for (std::size_t j = 0; j < d; ++j) {
        const double c = row[j] - mean[j];
        stdv[j] += c * c;
      }
    }
    for (std::size_t j = 0; j < d; ++j) {
      stdv[j] = std::sqrt(stdv[j] / static_cast<double>(t) + kVarEps);
    }
  }
  out.check_finite("stats_pool");

  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    auto xi = x.handle(), oi = out.handle();
    Tape::active()->record({xi}, oi, [xi, oi, n_segments, t, d] {
      double* gx = grad_of(xi);
      if (!gx) return;
      const double* g = oi->grad.data();
      const double* ov = oi->value.data();
      const double* xv = xi->value.data();
      const double inv_t = 1.0 / static_cast<double>(t);
      for (std::size_t s = 0; s < n_segments; ++s) {
        const double* gmean = g + s * 2 * d;
        const double* gstd = gmean + d;
        const double* mean = ov + s * 2 * d;
        const double* stdv = mean + d;
        const double* xs = xv + s * t * d;
        double* gxs = gx + s * t * d;
        for (std::size_t i = 0; i < t; ++i) {
          const double* row = xs + i * d;
          double* grow = gxs + i * d;
          for (std::size_t j = 0; j < d; ++j) {
            grow[j] += gmean[j] * inv_t +
                       gstd[j] * (row[j] - mean[j]) * inv_t / stdv[j];
          }
        }
      }
    });
  }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b) {
  const std::size_t r = a.rows();
  if (b.rows() != r) {
    throw ShapeError("concat: row counts of " + a.shape_str() + " and " +
                     b.shape_str() + " differ");
  }
  const std::size_t da = a.cols(), db = b.cols();
  Tensor out({r, da + db});
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  for (std::size_t i = 0; i < r; ++i) {
    std::memcpy(ov + i * (da + db), av + i * da, da * sizeof(double));
    std::memcpy(ov + i * (da + db) + da, bv + i * db, db * sizeof(double));
  }
  if (wants_grad({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.handle(), bi = b.handle(), oi = out.handle();
    Tape::active()->record({ai, bi}, oi, [ai, bi, oi, r, da, db] {
      const double* g = oi->grad.data();
      double* ga = grad_of(ai);
      double* gb = grad_of(bi);
      for (std::size_t i = 0; i < r; ++i) {
        const double* grow = g + i * (da + db);
        if (ga) {
          for (std::size_t j = 0; j < da; ++j) ga[i * da + j] += grow[j];
        }
        if (gb) {
          for (std::size_t j = 0; j < db; ++j) gb[i * db + j] += grow[da + j];
        }
      }
    });
  }
  return out;
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ValueError("concat_rows: no tensors given");
  const std::size_t d = parts.front().cols();
  std::size_t total = 0;
  for (const Tensor& p : parts) {
    if (p.cols() != d) {
      throw ShapeError("concat_rows: column count of " + p.shape_str() +
                       " differs from " + parts.front().shape_str());
    }
    total += p.rows();
  }
  Tensor out({total, d});
  double* ov = out.values().data();
  std::size_t at = 0;
  for (const Tensor& p : parts) {
    std::memcpy(ov + at * d, p.values().data(), p.size() * sizeof(double));
    at += p.rows();
  }
  bool any_grad = false;
  for (const Tensor& p : parts) any_grad = any_grad || p.requires_grad();
  if (Tape::active() && any_grad) {
    out.set_requires_grad(true);
    std::vector<std::shared_ptr<TensorImpl>> handles;
    handles.reserve(parts.size());
    for (const Tensor& p : parts) handles.push_back(p.handle());
    auto oi = out.handle();
    Tape::active()->record(handles, oi, [handles, oi, d] {
      const double* g = oi->grad.data();
      std::size_t at = 0;
      for (const auto& h : handles) {
        const std::size_t n = h->value.size();
        if (double* gp = grad_of(h)) {
          for (std::size_t i = 0; i < n; ++i) gp[i] += g[at + i];
        }
        at += n;
      }
    });
  }
  return out;
}

Tensor crop_rows(const Tensor& x, std::size_t head, std::size_t tail,
                 std::size_t n_segments) {
  const std::size_t t = segment_rows(x, n_segments, "crop_rows");
  const std::size_t d = x.cols();
  if (head + tail >= t) {
    throw ValueError("crop_rows: dropping " + std::to_string(head + tail) +
                     " rows from segments of " + std::to_string(t));
  }
  const std::size_t keep = t - head - tail;
  Tensor out({n_segments * keep, d});
  const double* xv = x.values().data();
  double* ov = out.values().data();
  for (std::size_t s = 0; s < n_segments; ++s) {
    std::memcpy(ov + s * keep * d, xv + (s * t + head) * d, keep * d * sizeof(double));
  }
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    auto xi = x.handle(), oi = out.handle();
    Tape::active()->record({xi}, oi, [xi, oi, n_segments, t, d, head, keep] {
      double* gx = grad_of(xi);
      if (!gx) return;
      const double* g = oi->grad.data();
      for (std::size_t s = 0; s < n_segments; ++s) {
        double* dst = gx + (s * t + head) * d;
        const double* src = g + s * keep * d;
        for (std::size_t i = 0; i < keep * d; ++i) dst[i] += src[i];
      }
    });
  }
  return out;
}

namespace {

template <typename Fwd, typename Bwd>
Tensor elementwise_binary(const Tensor& a, const Tensor& b, const char* name,
                          Fwd fwd, Bwd bwd) {
  require_same_shape(a, b, name);
  Tensor out(a.shape());
  const double* av = a.values().data();
  const double* bv = b.values().data();
  double* ov = out.values().data();
  const std::size_t n = a.size();
  for (std::size_t i = 0; i < n; ++i) ov[i] = fwd(av[i], bv[i]);
  out.check_finite(name);
  if (wants_grad({&a, &b})) {
    out.set_requires_grad(true);
    auto ai = a.handle(), bi = b.handle(), oi = out.handle();
    Tape::active()->record({ai, bi}, oi, [ai, bi, oi, n, bwd] {
      const double* g = oi->grad.data();
      double* ga = grad_of(ai);
      double* gb = grad_of(bi);
      const double* av = ai->value.data();
      const double* bv = bi->value.data();
      for (std::size_t i = 0; i < n; ++i) {
        const auto [da, db] = bwd(av[i], bv[i]);
        if (ga) ga[i] += g[i] * da;
        if (gb) gb[i] += g[i] * db;
      }
    });
  }
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise_binary(a, b, "add", [](double x, double y) { return x + y; },
                            [](double, double) { return std::pair{1.0, 1.0}; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise_binary(a, b, "sub", [](double x, double y) { return x - y; },
                            [](double, double) { return std::pair{1.0, -1.0}; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise_binary(a, b, "mul", [](double x, double y) { return x * y; },
                            [](double x, double y) { return std::pair{y, x}; });
}

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.values()) acc += v;
  Tensor out = Tensor::scalar(acc);
  out.check_finite("sum");
  if (wants_grad({&x})) {
    out.set_requires_grad(true);
    auto xi = x.handle(), oi = out.handle();
    Tape::active()->record({xi}, oi, [xi, oi] {
      if (double* gx = grad_of(xi)) {
        const double g = oi->grad[0];
        for (std::size_t i = 0; i < xi->value.size(); ++i) gx[i] += g;
      }
    });
  }
  return out;
}

Tensor mae_loss(const Tensor& pred, const Tensor& target) {
  require_same_shape(pred, target, "mae_loss");
  const std::size_t n = pred.size();
  const double* pv = pred.values().data();
  const double* tv = target.values().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < n; ++i) acc += std::abs(pv[i] - tv[i]);
  Tensor out = Tensor::scalar(acc / static_cast<double>(n));
  out.check_finite("mae_loss");
  if (wants_grad({&pred, &target})) {
    out.set_requires_grad(true);
    auto pi = pred.handle(), ti = target.handle(), oi = out.handle();
    Tape::active()->record({pi, ti}, oi, [pi, ti, oi, n] {
      const double g = oi->grad[0] / static_cast<double>(n);
      double* gp = grad_of(pi);
      double* gt = grad_of(ti);
      const double* pv = pi->value.data();
      const double* tv = ti->value.data();
      for (std::size_t i = 0; i < n; ++i) {
        const double diff = pv[i] - tv[i];
        const double s = diff > 0.0 ? 1.0 : (diff < 0.0 ? -1.0 : 0.0);
        if (gp) gp[i] += g * s;
        if (gt) gt[i] -= g * s;
      }
    });
  }
  return out;
}

Tensor softmax_cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  const std::size_t b = logits.rows(), c = logits.cols();
  if (labels.size() != b) {
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(b) + " rows");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= c) {
      throw ValueError("softmax_cross_entropy: label " + std::to_string(label) +
                       " outside [0, " + std::to_string(c) + ")");
    }
  }
  const double* lv = logits.values().data();
  double acc = 0.0;
  for (std::size_t i = 0; i < b; ++i) {
    const double* row = lv + i * c;
    const double mx = *std::max_element(row, row + c);
    double denom = 0.0;
    for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
    acc += std::log(denom) + mx - row[labels[i]];
  }
  Tensor out = Tensor::scalar(acc / static_cast<double>(b));
  out.check_finite("softmax_cross_entropy");
  if (wants_grad({&logits})) {
    out.set_requires_grad(true);
    auto li = logits.handle(), oi = out.handle();
    Tape::active()->record({li}, oi, [li, oi, labels, b, c] {
      double* gl = grad_of(li);
      if (!gl) return;
      const double g = oi->grad[0] / static_cast<double>(b);
      const double* lv = li->value.data();
      for (std::size_t i = 0; i < b; ++i) {
        const double* row = lv + i * c;
        double* grow = gl + i * c;
        const double mx = *std::max_element(row, row + c);
        double denom = 0.0;
        for (std::size_t j = 0; j < c; ++j) denom += std::exp(row[j] - mx);
        for (std::size_t j = 0; j < c; ++j) {
          const double p = std::exp(row[j] - mx) / denom;
          grow[j] += g * (p - (static_cast<std::size_t>(labels[i]) == j ? 1.0 : 0.0));
        }
      }
    });
  }
  return out;
}

Tensor detach(const Tensor& x) {
  return Tensor(x.shape(), x.values());
}

std::vector<double> softmax_row(const std::vector<double>& logits) {
  if (logits.empty()) throw ValueError("softmax_row: empty input");
  const double mx = *std::max_element(logits.begin(), logits.end());
  std::vector<double> out(logits.size());
  double denom = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    out[i] = std::exp(logits[i] - mx);
    denom += out[i];
  }
  for (double& v : out) v /= denom;
  return out;
}

}  // namespace demixkit
