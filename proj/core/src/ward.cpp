#include <cmath>
#include <limits>
#include <numeric>

#include "cgir/subcluster.hpp"

namespace cgir {
namespace {

// Lance-Williams Ward agglomeration over squared Euclidean distances. Each
// row caches its nearest active neighbour; because Ward linkage is
// reducible, a merge can only invalidate the cache of rows that pointed at
// one of the two merged slots.
class WardMerger {
 public:
  explicit WardMerger(const Matrix& points)
      : n_(points.rows()),
        dist_(static_cast<std::size_t>(n_ * n_), 0.0),
        size_(static_cast<std::size_t>(n_), 1.0),
        active_(static_cast<std::size_t>(n_), 1),
        parent_(static_cast<std::size_t>(n_)),
        nn_(static_cast<std::size_t>(n_), -1),
        nn_dist_(static_cast<std::size_t>(n_), kInf) {
    std::iota(parent_.begin(), parent_.end(), Index{0});
    for (Index i = 0; i < n_; ++i) {
      for (Index j = i + 1; j < n_; ++j) {
        const double d = (points.row(i) - points.row(j)).squaredNorm();
        if (!std::isfinite(d)) throw NumericError("ward: non-finite distance between rows");
        at(i, j) = d;
        at(j, i) = d;
      }
    }
    for (Index i = 0; i < n_; ++i) rescan(i);
  }

  Labels run(Index clusters) {
    Index remaining = n_;
    while (remaining > clusters) {
      merge_best();
      --remaining;
    }
    return labels();
  }

 private:
  static constexpr double kInf = std::numeric_limits<double>::infinity();

  double& at(Index i, Index j) { return dist_[static_cast<std::size_t>(i * n_ + j)]; }
  bool active(Index i) const { return active_[static_cast<std::size_t>(i)] != 0; }
  Index& nn(Index i) { return nn_[static_cast<std::size_t>(i)]; }
  double& nn_dist(Index i) { return nn_dist_[static_cast<std::size_t>(i)]; }
  double& size(Index i) { return size_[static_cast<std::size_t>(i)]; }

  void rescan(Index i) {
    nn(i) = -1;
    nn_dist(i) = kInf;
    for (Index j = 0; j < n_; ++j) {
      if (j == i || !active(j)) continue;
      if (at(i, j) < nn_dist(i)) {
        nn_dist(i) = at(i, j);
        nn(i) = j;
      }
    }
  }

  void merge_best() {
    Index best_a = -1;
    Index best_b = -1;
    double best = kInf;
    for (Index i = 0; i < n_; ++i) {
      if (!active(i) || nn(i) < 0) continue;
      const Index a = std::min(i, nn(i));
      const Index b = std::max(i, nn(i));
      const double d = nn_dist(i);
      if (d < best || (d == best && (a < best_a || (a == best_a && b < best_b)))) {
        best = d;
        best_a = a;
        best_b = b;
      }
    }
    const Index a = best_a;
    const Index b = best_b;
    const double sa = size(a);
    const double sb = size(b);
    const double dab = at(a, b);
    for (Index k = 0; k < n_; ++k) {
      if (!active(k) || k == a || k == b) continue;
      const double sk = size(k);
      const double d = ((sa + sk) * at(a, k) + (sb + sk) * at(b, k) - sk * dab) / (sa + sb + sk);
      at(a, k) = d;
      at(k, a) = d;
    }
    size(a) = sa + sb;
    active_[static_cast<std::size_t>(b)] = 0;
    parent_[static_cast<std::size_t>(b)] = a;

    for (Index k = 0; k < n_; ++k) {
      if (!active(k)) continue;
      if (k == a || nn(k) == a || nn(k) == b) {
        rescan(k);
      } else if (at(k, a) < nn_dist(k) || (at(k, a) == nn_dist(k) && a < nn(k))) {
        nn_dist(k) = at(k, a);
        nn(k) = a;
      }
    }
  }

  Index root(Index i) const {
    while (parent_[static_cast<std::size_t>(i)] != i) i = parent_[static_cast<std::size_t>(i)];
    return i;
  }

  Labels labels() const {
    std::vector<int> slot_label(static_cast<std::size_t>(n_), -1);
    int next = 0;
    for (Index i = 0; i < n_; ++i) {
      if (active(i)) slot_label[static_cast<std::size_t>(i)] = next++;
    }
    Labels out(static_cast<std::size_t>(n_));
    for (Index i = 0; i < n_; ++i) out[static_cast<std::size_t>(i)] = slot_label[static_cast<std::size_t>(root(i))];
    return out;
  }

  Index n_;
  std::vector<double> dist_;
  std::vector<double> size_;
  std::vector<std::uint8_t> active_;
  std::vector<Index> parent_;
  std::vector<Index> nn_;
  std::vector<double> nn_dist_;
};

}  // namespace

Labels ward_cluster(const Matrix& points, Index clusters) {
  if (clusters < 1) throw ArgumentError("ward_cluster needs at least one cluster");
  if (clusters > points.rows()) {
    throw ArgumentError("cannot form " + std::to_string(clusters) + " clusters from " +
                        std::to_string(points.rows()) + " points");
  }
  return WardMerger(points).run(clusters);
}

}  // namespace cgir
