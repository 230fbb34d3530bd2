#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include <Eigen/Dense>

#include "xmr/embedstore.hpp"
#include "xmr/errors.hpp"

namespace xmr {

namespace detail {

/// Dot product in double over 16 interleaved fused multiply-add lanes
/// combined in a fixed tree: the summation order depends only on n, never
/// on alignment or call site.
double dot_kernel(const float* a, const float* b, Eigen::Index n);
double dot_kernel(const float* a, const double* b, Eigen::Index n);
double dot_kernel(const double* a, const float* b, Eigen::Index n);
double dot_kernel(const double* a, const double* b, Eigen::Index n);

/// out[r] = dot_kernel(row r, query) for `n_rows` contiguous rows of `dim`.
void dot_rows(const double* query, const double* rows, std::size_t n_rows, Eigen::Index dim, double* out);
void dot_rows(const double* query, const float* rows, std::size_t n_rows, Eigen::Index dim, double* out);

template <typename A>
constexpr bool kContiguous =
    (int(Eigen::internal::traits<A>::Flags) & Eigen::DirectAccessBit) != 0 && A::InnerStrideAtCompileTime == 1 &&
    (A::IsVectorAtCompileTime == 1);

}  // namespace detail

/// Inner product accumulated in 64-bit regardless of the operands' scalar type.
/// Every distance in the library goes through this one kernel, so the single
/// and batched search paths agree bit for bit.
template <typename A, typename B>
double dot64(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  if constexpr (detail::kContiguous<A> && detail::kContiguous<B>) {
    if (a.size() != b.size()) fail(ErrorCode::kDimensionMismatch, "dot of unequal sizes");
    return detail::dot_kernel(a.derived().data(), b.derived().data(), a.size());
  } else {
    const Eigen::Matrix<typename A::Scalar, Eigen::Dynamic, 1> ta = a.derived().reshaped();
    const Eigen::Matrix<typename B::Scalar, Eigen::Dynamic, 1> tb = b.derived().reshaped();
    return dot64(ta, tb);
  }
}

template <typename A>
double squared_norm64(const Eigen::MatrixBase<A>& a) {
  return dot64(a, a);
}

/// 1 - cos from a dot product and the two squared norms, clamped to [0, 2].
/// Taking the root of the product makes the self-distance exactly zero.
inline double cosine_from_dot(double dot, double sq_norm_u, double sq_norm_v) {
  return std::clamp(1.0 - dot / std::sqrt(sq_norm_u * sq_norm_v), 0.0, 2.0);
}

template <typename A, typename B>
double cosine_distance(const Eigen::MatrixBase<A>& u, const Eigen::MatrixBase<B>& v) {
  if (u.size() != v.size()) {
    fail(ErrorCode::kDimensionMismatch, std::to_string(u.size()) + " vs " + std::to_string(v.size()));
  }
  const double nu = squared_norm64(u);
  const double nv = squared_norm64(v);
  if (!(nu > 0.0) || !(nv > 0.0)) fail(ErrorCode::kZeroNorm, "cosine distance of a zero vector");
  return cosine_from_dot(dot64(u, v), nu, nv);
}

struct Neighbor {
  std::size_t index = 0;  ///< row in the searched set
  double distance = 0.0;

  friend bool operator==(const Neighbor&, const Neighbor&) = default;
};

/// Strict weak order used for every ranking: distance, then source index.
inline bool closer(const Neighbor& a, const Neighbor& b) {
  return a.distance < b.distance || (a.distance == b.distance && a.index < b.index);
}

struct NeighborList {
  std::optional<std::string> query_id;
  std::vector<Neighbor> entries;  ///< ascending by (distance, index)

  std::vector<std::size_t> indices() const;
  std::vector<std::string> ids(const EmbeddingSet& set) const;
};

using IdSet = std::unordered_set<std::string>;

/// Keeps the k best entries of `scored` under `closer`, sorted.
/// Keeps the k closest neighbours offered so far under `closer`.
class TopKSelector {
 public:
  explicit TopKSelector(std::size_t k) : k_(k) { heap_.reserve(k); }

  void offer(const Neighbor& n) {
    if (heap_.size() < k_) {
      heap_.push_back(n);
      std::push_heap(heap_.begin(), heap_.end(), closer);
    } else if (closer(n, heap_.front())) {
      std::pop_heap(heap_.begin(), heap_.end(), closer);
      heap_.back() = n;
      std::push_heap(heap_.begin(), heap_.end(), closer);
    }
  }

  bool empty() const { return heap_.empty(); }

  /// The kept neighbours in ascending order; leaves the selector empty.
  std::vector<Neighbor> take() {
    std::sort_heap(heap_.begin(), heap_.end(), closer);
    return std::move(heap_);
  }

 private:
  std::size_t k_;
  std::vector<Neighbor> heap_;
};

/// Exact cosine top-k over all rows of `set` not named in `exclude`.
template <typename Derived>
NeighborList top_k(const EmbeddingSet& set, const Eigen::MatrixBase<Derived>& query, std::size_t k,
                   const IdSet& exclude = {}) {
  if (k == 0) fail(ErrorCode::kInvalidConfig, "k must be >= 1");
  if (query.size() != set.dim()) {
    fail(ErrorCode::kDimensionMismatch, "query dim " + std::to_string(query.size()) + " vs set dim " + std::to_string(set.dim()));
  }
  const double qn = squared_norm64(query);
  if (!(qn > 0.0)) fail(ErrorCode::kZeroNorm, "query vector");
  TopKSelector best(k);
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (!exclude.empty() && exclude.contains(set.id(i))) continue;
    best.offer({i, cosine_from_dot(dot64(set.row(i), query), set.squared_norm(i), qn)});
  }
  if (best.empty()) fail(ErrorCode::kEmptySearchSet, "no searchable items");
  return NeighborList{std::nullopt, best.take()};
}

/// top_k for every row of `queries`; element-wise identical to the single
/// query path. Work is blocked over queries and rows and spread over
/// `threads` workers (0 = all cores) without changing the output.
std::vector<NeighborList> batch_top_k(const EmbeddingSet& set, const RowMatrixXf& queries, std::size_t k,
                                      unsigned threads = 0);

/// Convenience overload that also fills query_id from the query set.
std::vector<NeighborList> batch_top_k(const EmbeddingSet& set, const EmbeddingSet& queries, std::size_t k,
                                      unsigned threads = 0);

}  // namespace xmr
