#include "cgir/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>

#include "cgir/random.hpp"

namespace cgir {
namespace {

Labels densify(const Labels& labels, int* count) {
  std::map<int, int> ids;
  for (int y : labels) ids.emplace(y, 0);
  int next = 0;
  for (auto& [y, id] : ids) id = next++;
  Labels out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) out[i] = ids[labels[i]];
  if (count) *count = next;
  return out;
}

void check_lengths(const Labels& pred, const Labels& truth) {
  if (pred.size() != truth.size()) {
    throw ArgumentError("label length mismatch: " + std::to_string(pred.size()) + " vs " +
                        std::to_string(truth.size()));
  }
  if (pred.empty()) throw ArgumentError("empty labelling");
}

double entropy(const Vector& counts, double n) {
  double h = 0.0;
  for (Index i = 0; i < counts.size(); ++i) {
    if (counts(i) > 0.0) {
      const double p = counts(i) / n;
      h -= p * std::log(p);
    }
  }
  return h;
}

double comb2(double x) { return x * (x - 1.0) / 2.0; }

double squared_distance(const Matrix& points, Index i, const Matrix& centroids, Index j) {
  return (points.row(i) - centroids.row(j)).squaredNorm();
}

KMeansResult kmeans_once(const Matrix& points, int clusters, Rng& rng, const KMeansOptions& options) {
  const Index n = points.rows();
  Matrix centroids(clusters, points.cols());
  std::vector<std::uint8_t> chosen(static_cast<std::size_t>(n), 0);

  // k-means++ seeding.
  std::uniform_int_distribution<Index> first(0, n - 1);
  Index pick = first(rng);
  centroids.row(0) = points.row(pick);
  chosen[static_cast<std::size_t>(pick)] = 1;
  Vector closest(n);
  for (Index i = 0; i < n; ++i) closest(i) = squared_distance(points, i, centroids, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int c = 1; c < clusters; ++c) {
    const double total = closest.sum();
    if (total > 0.0) {
      const double target = unit(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (Index i = 0; i < n; ++i) {
        acc += closest(i);
        if (acc > target && closest(i) > 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = 0;
      while (pick < n - 1 && chosen[static_cast<std::size_t>(pick)]) ++pick;
    }
    chosen[static_cast<std::size_t>(pick)] = 1;
    centroids.row(c) = points.row(pick);
    for (Index i = 0; i < n; ++i) closest(i) = std::min(closest(i), squared_distance(points, i, centroids, c));
  }

  Labels labels(static_cast<std::size_t>(n), -1);
  Vector dist(n);
  for (int iter = 0; iter < options.max_iterations; ++iter) {
    bool changed = false;
    for (Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(points, i, centroids, 0);
      for (int c = 1; c < clusters; ++c) {
        const double d = squared_distance(points, i, centroids, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      dist(i) = best_d;
      if (labels[static_cast<std::size_t>(i)] != best) {
        labels[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    Matrix next = Matrix::Zero(clusters, points.cols());
    Vector counts = Vector::Zero(clusters);
    for (Index i = 0; i < n; ++i) {
      next.row(labels[static_cast<std::size_t>(i)]) += points.row(i);
      counts(labels[static_cast<std::size_t>(i)]) += 1.0;
    }
    for (int c = 0; c < clusters; ++c) {
      if (counts(c) > 0.0) {
        next.row(c) /= counts(c);
        continue;
      }
      // Empty cluster: move it to the worst-served point.
      Index far = 0;
      dist.maxCoeff(&far);
      next.row(c) = points.row(far);
      const int old = labels[static_cast<std::size_t>(far)];
      labels[static_cast<std::size_t>(far)] = c;
      dist(far) = 0.0;
      counts(c) = 1.0;
      counts(old) -= 1.0;
      changed = true;
    }
    const double shift = (next - centroids).squaredNorm();
    centroids = std::move(next);
    if (!changed || shift <= options.tolerance) break;
  }

  KMeansResult result;
  result.inertia = 0.0;
  for (Index i = 0; i < n; ++i) {
    int best = 0;
    double best_d = squared_distance(points, i, centroids, 0);
    for (int c = 1; c < clusters; ++c) {
      const double d = squared_distance(points, i, centroids, c);
      if (d < best_d) {
        best_d = d;
        best = c;
      }
    }
    labels[static_cast<std::size_t>(i)] = best;
    result.inertia += best_d;
  }
  result.labels = std::move(labels);
  result.centroids = std::move(centroids);
  return result;
}

}  // namespace

MetricsReport summarize(const std::vector<Metrics>& runs) {
  MetricsReport report;
  report.runs = runs;
  if (runs.empty()) return report;
  const auto k = static_cast<double>(runs.size());
  auto field_stats = [&](double Metrics::*field, double& mean, double& sd) {
    double s = 0.0;
    for (const auto& r : runs) s += r.*field;
    mean = s / k;
    double v = 0.0;
    for (const auto& r : runs) v += (r.*field - mean) * (r.*field - mean);
    sd = std::sqrt(v / k);
  };
  field_stats(&Metrics::acc, report.mean.acc, report.std.acc);
  field_stats(&Metrics::nmi, report.mean.nmi, report.std.nmi);
  field_stats(&Metrics::ari, report.mean.ari, report.std.ari);
  field_stats(&Metrics::f1, report.mean.f1, report.std.f1);
  return report;
}

KMeansResult kmeans(const Matrix& points, int clusters, std::uint64_t seed, KMeansOptions options) {
  if (clusters < 1 || clusters > points.rows()) {
    throw ArgumentError("k-means needs 1 <= clusters <= points");
  }
  Rng rng = make_rng(seed, Stream::kKMeans);
  KMeansResult best;
  best.inertia = std::numeric_limits<double>::infinity();
  for (int r = 0; r < std::max(1, options.restarts); ++r) {
    KMeansResult candidate = kmeans_once(points, clusters, rng, options);
    if (candidate.inertia < best.inertia) best = std::move(candidate);
  }
  return best;
}

Labels kmeans_cluster(const Matrix& points, int clusters, int restarts, std::uint64_t seed) {
  KMeansOptions options;
  options.restarts = restarts;
  return kmeans(points, clusters, seed, options).labels;
}

Matrix contingency(const Labels& pred, const Labels& truth) {
  check_lengths(pred, truth);
  int kp = 0;
  int kt = 0;
  const Labels p = densify(pred, &kp);
  const Labels t = densify(truth, &kt);
  Matrix table = Matrix::Zero(kp, kt);
  for (std::size_t i = 0; i < p.size(); ++i) table(p[i], t[i]) += 1.0;
  return table;
}

std::vector<int> max_weight_assignment(const Matrix& weights) {
  // Square, min-cost Hungarian method with potentials on cost = -weight.
  const Index rows = weights.rows();
  const Index cols = weights.cols();
  const Index size = std::max(rows, cols);
  Matrix cost = Matrix::Zero(size, size);
  cost.topLeftCorner(rows, cols) = -weights;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(static_cast<std::size_t>(size + 1), 0.0), v(static_cast<std::size_t>(size + 1), 0.0);
  std::vector<Index> match(static_cast<std::size_t>(size + 1), 0), way(static_cast<std::size_t>(size + 1), 0);
  for (Index i = 1; i <= size; ++i) {
    match[0] = i;
    Index j0 = 0;
    std::vector<double> minv(static_cast<std::size_t>(size + 1), inf);
    std::vector<std::uint8_t> used(static_cast<std::size_t>(size + 1), 0);
    do {
      used[static_cast<std::size_t>(j0)] = 1;
      const Index i0 = match[static_cast<std::size_t>(j0)];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= size; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[static_cast<std::size_t>(i0)] - v[ju];
        if (cur < minv[ju]) {
          minv[ju] = cur;
          way[ju] = j0;
        }
        if (minv[ju] < delta) {
          delta = minv[ju];
          j1 = j;
        }
      }
      for (Index j = 0; j <= size; ++j) {
        const auto ju = static_cast<std::size_t>(j);
        if (used[ju]) {
          u[static_cast<std::size_t>(match[ju])] += delta;
          v[ju] -= delta;
        } else {
          minv[ju] -= delta;
        }
      }
      j0 = j1;
    } while (match[static_cast<std::size_t>(j0)] != 0);
    do {
      const Index j1 = way[static_cast<std::size_t>(j0)];
      match[static_cast<std::size_t>(j0)] = match[static_cast<std::size_t>(j1)];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> row_to_col(static_cast<std::size_t>(rows), -1);
  for (Index j = 1; j <= size; ++j) {
    const Index i = match[static_cast<std::size_t>(j)];
    if (i >= 1 && i <= rows && j <= cols) row_to_col[static_cast<std::size_t>(i - 1)] = static_cast<int>(j - 1);
  }
  return row_to_col;
}

std::vector<int> best_label_mapping(const Labels& pred, const Labels& truth) {
  return max_weight_assignment(contingency(pred, truth));
}

double clustering_accuracy(const Labels& pred, const Labels& truth) {
  const Matrix table = contingency(pred, truth);
  const std::vector<int> map = max_weight_assignment(table);
  double hits = 0.0;
  for (Index r = 0; r < table.rows(); ++r) {
    if (map[static_cast<std::size_t>(r)] >= 0) hits += table(r, map[static_cast<std::size_t>(r)]);
  }
  return hits / static_cast<double>(pred.size());
}

double normalized_mutual_info(const Labels& pred, const Labels& truth) {
  const Matrix table = contingency(pred, truth);
  const auto n = static_cast<double>(pred.size());
  if (table.rows() == 1 && table.cols() == 1) return 1.0;
  const Vector row = table.rowwise().sum();
  const Vector col = table.colwise().sum().transpose();
  double mi = 0.0;
  for (Index i = 0; i < table.rows(); ++i) {
    for (Index j = 0; j < table.cols(); ++j) {
      const double nij = table(i, j);
      if (nij > 0.0) mi += nij / n * std::log(n * nij / (row(i) * col(j)));
    }
  }
  const double norm = 0.5 * (entropy(row, n) + entropy(col, n));
  if (norm <= 0.0) return 0.0;
  return std::clamp(mi / norm, 0.0, 1.0);
}

double adjusted_rand_index(const Labels& pred, const Labels& truth) {
  const Matrix table = contingency(pred, truth);
  const auto n = static_cast<double>(pred.size());
  // Identical trivial partitions (one cluster each, or all singletons).
  if (table.rows() == table.cols() && (table.rows() <= 1 || static_cast<double>(table.rows()) == n)) {
    return 1.0;
  }
  double index = 0.0;
  for (Index i = 0; i < table.size(); ++i) index += comb2(table.data()[i]);
  double a = 0.0;
  for (Index i = 0; i < table.rows(); ++i) a += comb2(table.row(i).sum());
  double b = 0.0;
  for (Index j = 0; j < table.cols(); ++j) b += comb2(table.col(j).sum());
  const double expected = a * b / comb2(n);
  const double maximum = 0.5 * (a + b);
  if (maximum == expected) return 1.0;
  return (index - expected) / (maximum - expected);
}

double macro_f1(const Labels& pred, const Labels& truth) {
  check_lengths(pred, truth);
  int kp = 0;
  int kt = 0;
  const Labels p = densify(pred, &kp);
  const Labels t = densify(truth, &kt);
  Matrix table = Matrix::Zero(kp, kt);
  for (std::size_t i = 0; i < p.size(); ++i) table(p[i], t[i]) += 1.0;
  const std::vector<int> map = max_weight_assignment(table);
  Vector tp = Vector::Zero(kt), fp = Vector::Zero(kt), fn = Vector::Zero(kt);
  for (std::size_t i = 0; i < p.size(); ++i) {
    const int mapped = map[static_cast<std::size_t>(p[i])];
    if (mapped == t[i]) {
      tp(t[i]) += 1.0;
    } else {
      fn(t[i]) += 1.0;
      if (mapped >= 0) fp(mapped) += 1.0;
    }
  }
  double total = 0.0;
  for (int k = 0; k < kt; ++k) {
    const double denom = 2.0 * tp(k) + fp(k) + fn(k);
    total += denom > 0.0 ? 2.0 * tp(k) / denom : 0.0;
  }
  return total / static_cast<double>(kt);
}

Metrics cluster_metrics(const Labels& pred, const Labels& truth) {
  check_lengths(pred, truth);
  return Metrics{clustering_accuracy(pred, truth), normalized_mutual_info(pred, truth),
                 adjusted_rand_index(pred, truth), macro_f1(pred, truth)};
}

}  // namespace cgir
