#include "xmr/knn.hpp"

#include <algorithm>
#include <cmath>

#if defined(__AVX2__) || defined(__AVX512F__)
#include <immintrin.h>
#endif

#include "xmr/parallel.hpp"

namespace xmr {

std::vector<std::size_t> NeighborList::indices() const {
  std::vector<std::size_t> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(e.index);
  return out;
}

std::vector<std::string> NeighborList::ids(const EmbeddingSet& set) const {
  std::vector<std::string> out;
  out.reserve(entries.size());
  for (const auto& e : entries) out.push_back(set.id(e.index));
  return out;
}

namespace {

constexpr int kLanes = 16;
constexpr int kTileQueries = 4;
constexpr int kTileRows = 4;
// Rows of the searched set per cache tile; 256 rows of d=1024 floats is 1 MiB.
constexpr std::size_t kRowTile = 256;
constexpr std::size_t kQueryBlock = 16;

// Sixteen double accumulators. Lane j only ever receives
// fma(row[i + j], query[i + j], lane) for i stepping by 16, and fma is
// exact, so every backend below produces bit-identical sums.
#if defined(__AVX512F__)
struct Lanes {
  __m512d lo = _mm512_setzero_pd(), hi = _mm512_setzero_pd();
};
struct Chunk {
  __m512d lo, hi;
};
inline Chunk load(const float* p) {
  return {_mm512_cvtps_pd(_mm256_loadu_ps(p)), _mm512_cvtps_pd(_mm256_loadu_ps(p + 8))};
}
inline Chunk load(const double* p) { return {_mm512_loadu_pd(p), _mm512_loadu_pd(p + 8)}; }
inline void madd(Lanes& acc, const Chunk& r, const Chunk& q) {
  acc.lo = _mm512_fmadd_pd(r.lo, q.lo, acc.lo);
  acc.hi = _mm512_fmadd_pd(r.hi, q.hi, acc.hi);
}
/// Lane j absorbs lane j + width for width = 8, 4, 2, 1.
inline double reduce(const Lanes& acc) {
  const __m512d s8 = _mm512_add_pd(acc.lo, acc.hi);
  const __m256d s4 = _mm256_add_pd(_mm512_castpd512_pd256(s8), _mm512_extractf64x4_pd(s8, 1));
  const __m128d s2 = _mm_add_pd(_mm256_castpd256_pd128(s4), _mm256_extractf128_pd(s4, 1));
  return _mm_cvtsd_f64(_mm_add_sd(s2, _mm_unpackhi_pd(s2, s2)));
}
#elif defined(__AVX2__) && defined(__FMA__)
struct Lanes {
  __m256d v[4] = {_mm256_setzero_pd(), _mm256_setzero_pd(), _mm256_setzero_pd(), _mm256_setzero_pd()};
};
struct Chunk {
  __m256d v[4];
};
inline Chunk load(const float* p) {
  return {{_mm256_cvtps_pd(_mm_loadu_ps(p)), _mm256_cvtps_pd(_mm_loadu_ps(p + 4)), _mm256_cvtps_pd(_mm_loadu_ps(p + 8)),
           _mm256_cvtps_pd(_mm_loadu_ps(p + 12))}};
}
inline Chunk load(const double* p) {
  return {{_mm256_loadu_pd(p), _mm256_loadu_pd(p + 4), _mm256_loadu_pd(p + 8), _mm256_loadu_pd(p + 12)}};
}
inline void madd(Lanes& acc, const Chunk& r, const Chunk& q) {
  for (int k = 0; k < 4; ++k) acc.v[k] = _mm256_fmadd_pd(r.v[k], q.v[k], acc.v[k]);
}
/// Lane j absorbs lane j + width for width = 8, 4, 2, 1.
inline double reduce(const Lanes& acc) {
  const __m256d s4 = _mm256_add_pd(_mm256_add_pd(acc.v[0], acc.v[2]), _mm256_add_pd(acc.v[1], acc.v[3]));
  const __m128d s2 = _mm_add_pd(_mm256_castpd256_pd128(s4), _mm256_extractf128_pd(s4, 1));
  return _mm_cvtsd_f64(_mm_add_sd(s2, _mm_unpackhi_pd(s2, s2)));
}
#else
struct Lanes {
  double v[kLanes] = {};
};
struct Chunk {
  double v[kLanes];
};
template <typename T>
Chunk load(const T* p) {
  Chunk c;
  for (int j = 0; j < kLanes; ++j) c.v[j] = static_cast<double>(p[j]);
  return c;
}
inline void madd(Lanes& acc, const Chunk& r, const Chunk& q) {
  for (int j = 0; j < kLanes; ++j) acc.v[j] = std::fma(r.v[j], q.v[j], acc.v[j]);
}
/// Lane j absorbs lane j + width for width = 8, 4, 2, 1.
inline double reduce(Lanes acc) {
  for (int width = kLanes / 2; width > 0; width /= 2) {
    for (int j = 0; j < width; ++j) acc.v[j] += acc.v[j + width];
  }
  return acc.v[0];
}
#endif

/// Dot products of NQ query rows with NR set rows. Every product is
/// accumulated in the same order, so a pair gets the same bits whatever
/// tile it is computed in; single dot products are the 1 x 1 tile.
template <int NQ, int NR, typename QT, typename RT>
void dot_tile(const QT* const* q, const RT* const* r, Eigen::Index n, double* out) {
  Lanes acc[NQ][NR];
  Eigen::Index i = 0;
  for (; i + kLanes <= n; i += kLanes) {
    Chunk rows[NR];
    for (int b = 0; b < NR; ++b) rows[b] = load(r[b] + i);
    for (int a = 0; a < NQ; ++a) {
      const Chunk query = load(q[a] + i);
      for (int b = 0; b < NR; ++b) madd(acc[a][b], rows[b], query);
    }
  }
  for (int a = 0; a < NQ; ++a) {
    for (int b = 0; b < NR; ++b) {
      double tail = 0.0;
      for (Eigen::Index t = i; t < n; ++t) tail = std::fma(static_cast<double>(r[b][t]), static_cast<double>(q[a][t]), tail);
      out[a * NR + b] = reduce(acc[a][b]) + tail;
    }
  }
}

template <typename A, typename B>
double single_dot(const A* a, const B* b, Eigen::Index n) {
  double out;
  dot_tile<1, 1>(&b, &a, n, &out);
  return out;
}

}  // namespace

namespace detail {

double dot_kernel(const float* a, const float* b, Eigen::Index n) { return single_dot(a, b, n); }
double dot_kernel(const float* a, const double* b, Eigen::Index n) { return single_dot(a, b, n); }
double dot_kernel(const double* a, const float* b, Eigen::Index n) { return single_dot(a, b, n); }
double dot_kernel(const double* a, const double* b, Eigen::Index n) { return single_dot(a, b, n); }

template <typename RT>
void dot_rows_impl(const double* query, const RT* rows, std::size_t n_rows, Eigen::Index dim, double* out) {
  const double* qp[1] = {query};
  std::size_t r = 0;
  for (; r + kTileRows <= n_rows; r += kTileRows) {
    const RT* rp[kTileRows];
    for (int c = 0; c < kTileRows; ++c) rp[c] = rows + (r + static_cast<std::size_t>(c)) * static_cast<std::size_t>(dim);
    dot_tile<1, kTileRows>(qp, rp, dim, out + r);
  }
  for (; r < n_rows; ++r) {
    const RT* rp[1] = {rows + r * static_cast<std::size_t>(dim)};
    dot_tile<1, 1>(qp, rp, dim, out + r);
  }
}

void dot_rows(const double* query, const double* rows, std::size_t n_rows, Eigen::Index dim, double* out) {
  dot_rows_impl(query, rows, n_rows, dim, out);
}

void dot_rows(const double* query, const float* rows, std::size_t n_rows, Eigen::Index dim, double* out) {
  dot_rows_impl(query, rows, n_rows, dim, out);
}

}  // namespace detail

std::vector<NeighborList> batch_top_k(const EmbeddingSet& set, const RowMatrixXf& queries, std::size_t k,
                                      unsigned threads) {
  if (k == 0) fail(ErrorCode::kInvalidConfig, "k must be >= 1");
  if (queries.rows() > 0 && queries.cols() != set.dim()) {
    fail(ErrorCode::kDimensionMismatch,
         "query dim " + std::to_string(queries.cols()) + " vs set dim " + std::to_string(set.dim()));
  }
  const auto nq = static_cast<std::size_t>(queries.rows());
  if (nq > 0 && set.empty()) fail(ErrorCode::kEmptySearchSet, "no searchable items");

  std::vector<double> query_sq(nq);
  for (std::size_t q = 0; q < nq; ++q) {
    query_sq[q] = squared_norm64(queries.row(static_cast<Eigen::Index>(q)));
    if (!(query_sq[q] > 0.0)) fail(ErrorCode::kZeroNorm, "query row " + std::to_string(q));
  }

  const Eigen::Index d = set.dim();
  std::vector<NeighborList> out(nq);
  const std::size_t blocks = (nq + kQueryBlock - 1) / kQueryBlock;
  parallel_for(blocks, threads, [&](std::size_t b) {
    const std::size_t q0 = b * kQueryBlock;
    const std::size_t q1 = std::min(nq, q0 + kQueryBlock);
    const RowMatrixXd block = queries.middleRows(static_cast<Eigen::Index>(q0), static_cast<Eigen::Index>(q1 - q0))
                                  .cast<double>();
    std::vector<TopKSelector> best(q1 - q0, TopKSelector(k));
    auto emit = [&](std::size_t q, std::size_t row, double dot) {
      best[q - q0].offer({row, cosine_from_dot(dot, set.squared_norm(row), query_sq[q])});
    };
    for (std::size_t r0 = 0; r0 < set.size(); r0 += kRowTile) {
      const std::size_t r1 = std::min(set.size(), r0 + kRowTile);
      std::size_t q = q0;
      for (; q + kTileQueries <= q1; q += kTileQueries) {
        const double* qp[kTileQueries];
        for (int a = 0; a < kTileQueries; ++a) qp[a] = block.row(static_cast<Eigen::Index>(q - q0) + a).data();
        std::size_t i = r0;
        for (; i + kTileRows <= r1; i += kTileRows) {
          const float* rp[kTileRows];
          for (int c = 0; c < kTileRows; ++c) rp[c] = set.row(i + static_cast<std::size_t>(c)).data();
          double dots[kTileQueries * kTileRows];
          dot_tile<kTileQueries, kTileRows>(qp, rp, d, dots);
          for (int a = 0; a < kTileQueries; ++a) {
            for (int c = 0; c < kTileRows; ++c) {
              emit(q + static_cast<std::size_t>(a), i + static_cast<std::size_t>(c), dots[a * kTileRows + c]);
            }
          }
        }
        for (; i < r1; ++i) {
          const float* rp[1] = {set.row(i).data()};
          double dots[kTileQueries];
          dot_tile<kTileQueries, 1>(qp, rp, d, dots);
          for (int a = 0; a < kTileQueries; ++a) emit(q + static_cast<std::size_t>(a), i, dots[a]);
        }
      }
      for (; q < q1; ++q) {
        const double* qp[1] = {block.row(static_cast<Eigen::Index>(q - q0)).data()};
        for (std::size_t i = r0; i < r1; ++i) {
          const float* rp[1] = {set.row(i).data()};
          double dot;
          dot_tile<1, 1>(qp, rp, d, &dot);
          emit(q, i, dot);
        }
      }
    }
    for (std::size_t q = q0; q < q1; ++q) out[q].entries = best[q - q0].take();
  });
  return out;
}

std::vector<NeighborList> batch_top_k(const EmbeddingSet& set, const EmbeddingSet& queries, std::size_t k,
                                      unsigned threads) {
  auto out = batch_top_k(set, queries.matrix(), k, threads);
  for (std::size_t q = 0; q < out.size(); ++q) out[q].query_id = queries.id(q);
  return out;
}

}  // namespace xmr
