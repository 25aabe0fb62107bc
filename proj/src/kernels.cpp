#include "demixkit/kernels.hpp"

#include <algorithm>

#include "demixkit/threading.hpp"

namespace demixkit::kernels {

namespace {

// Panels of the streamed matrix are kept near 1 MB so they stay L2-resident
// while being reused across row groups.
constexpr std::size_t kPanelDoubles = 128 * 1024;
// Below this many multiply-adds a parallel launch costs more than it saves.
constexpr std::size_t kParallelCutoff = 1u << 22;

std::size_t panel_rows(std::size_t n) {
  return std::clamp<std::size_t>(kPanelDoubles / std::max<std::size_t>(n, 1), 8, 256);
}

// 4 rows x 16 columns accumulated in registers across the whole k loop; C
// is read and written once per tile, B column strips stay L2-resident.
constexpr std::size_t kColTile = 16;

void gemm_cols(const double* a, const double* b, double* c,
               std::size_t m, std::size_t k, std::size_t n,
               std::size_t j_begin, std::size_t j_end) {
  for (std::size_t j0 = j_begin; j0 + kColTile <= j_end; j0 += kColTile) {
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      const double* a0 = a + (i + 0) * k;
      const double* a1 = a + (i + 1) * k;
      const double* a2 = a + (i + 2) * k;
      const double* a3 = a + (i + 3) * k;
      double* c0 = c + (i + 0) * n + j0;
      double* c1 = c + (i + 1) * n + j0;
      double* c2 = c + (i + 2) * n + j0;
      double* c3 = c + (i + 3) * n + j0;
      double acc0[kColTile], acc1[kColTile], acc2[kColTile], acc3[kColTile];
      for (std::size_t j = 0; j < kColTile; ++j) {
        acc0[j] = c0[j];
        acc1[j] = c1[j];
        acc2[j] = c2[j];
        acc3[j] = c3[j];
      }
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double* brow = b + kk * n + j0;
        const double v0 = a0[kk], v1 = a1[kk], v2 = a2[kk], v3 = a3[kk];
        for (std::size_t j = 0; j < kColTile; ++j) {
          const double bj = brow[j];
          acc0[j] += v0 * bj;
          acc1[j] += v1 * bj;
          acc2[j] += v2 * bj;
          acc3[j] += v3 * bj;
        }
      }
      for (std::size_t j = 0; j < kColTile; ++j) {
        c0[j] = acc0[j];
        c1[j] = acc1[j];
        c2[j] = acc2[j];
        c3[j] = acc3[j];
      }
    }
    for (; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n + j0;
      double acc[kColTile];
      for (std::size_t j = 0; j < kColTile; ++j) acc[j] = crow[j];
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double v = arow[kk];
        const double* brow = b + kk * n + j0;
        for (std::size_t j = 0; j < kColTile; ++j) acc[j] += v * brow[j];
      }
      for (std::size_t j = 0; j < kColTile; ++j) crow[j] = acc[j];
    }
  }
  // ragged tail columns
  const std::size_t tail = j_begin + (j_end - j_begin) / kColTile * kColTile;
  if (tail < j_end) {
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      double* crow = c + i * n;
      for (std::size_t kk = 0; kk < k; ++kk) {
        const double v = arow[kk];
        const double* brow = b + kk * n;
        for (std::size_t j = tail; j < j_end; ++j) crow[j] += v * brow[j];
      }
    }
  }
}

}  // namespace

void gemm(const double* a, const double* b, double* c,
          std::size_t m, std::size_t k, std::size_t n) {
  const std::size_t workers = worker_count();
  const std::size_t n_tiles = n / kColTile;
  if (m * k * n < kParallelCutoff || workers <= 1 || n_tiles < 2) {
    gemm_cols(a, b, c, m, k, n, 0, n);
    return;
  }
  // Column stripes are independent: one writer per stripe.
  const std::size_t stripes = std::min(workers, n_tiles);
  const std::size_t per = n_tiles / stripes * kColTile;
  parallel_for(stripes, [&](std::size_t s) {
    const std::size_t lo = s * per;
    const std::size_t hi = s + 1 == stripes ? n : lo + per;
    gemm_cols(a, b, c, m, k, n, lo, hi);
  });
}

void gemm_nt(const double* a, const double* b, double* c,
             std::size_t m, std::size_t n, std::size_t k) {
  // c[i, kk] += dot(a[i, :], b[kk, :]). Broadcast-style row updates beat
  // dot-product reductions here, so transpose B once and reuse the gemm
  // kernel; the scratch pays for itself for everything but tiny calls.
  if (m * k * n >= (1u << 18)) {
    thread_local std::vector<double> scratch;
    scratch.resize(n * k);
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n;
      for (std::size_t j = 0; j < n; ++j) scratch[j * k + kk] = brow[j];
    }
    gemm(a, scratch.data(), c, m, n, k);
    return;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double* arow = a + i * n;
    double* crow = c + i * k;
    for (std::size_t kk = 0; kk < k; ++kk) {
      const double* brow = b + kk * n;
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += arow[j] * brow[j];
      crow[kk] += acc;
    }
  }
}

void gemm_tn(const double* a, const double* b, double* c,
             std::size_t m, std::size_t k, std::size_t n) {
  // c[kk, j] += sum_i a[i, kk] * b[i, j]. The C rows are walked in L2-sized
  // tiles held hot across the whole i loop; each tile has a single writer,
  // so parallel tiles stay deterministic.
  const std::size_t tile = panel_rows(n);
  const std::size_t n_tiles = (k + tile - 1) / tile;
  const std::size_t work = m * k * n;
  const auto run_tile = [&](std::size_t t) {
    const std::size_t t0 = t * tile;
    const std::size_t t1 = std::min(k, t0 + tile);
    for (std::size_t i = 0; i < m; ++i) {
      const double* arow = a + i * k;
      const double* brow = b + i * n;
      for (std::size_t kk = t0; kk < t1; ++kk) {
        const double v = arow[kk];
        if (v == 0.0) continue;  // ReLU upstreams make this common
        double* crow = c + kk * n;
        for (std::size_t j = 0; j < n; ++j) crow[j] += v * brow[j];
      }
    }
  };
  if (work < kParallelCutoff || worker_count() <= 1 || n_tiles <= 1) {
    for (std::size_t t = 0; t < n_tiles; ++t) run_tile(t);
  } else {
    parallel_for(n_tiles, run_tile);
  }
}

}  // namespace demixkit::kernels
