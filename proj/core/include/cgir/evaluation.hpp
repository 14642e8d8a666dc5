#pragma once

#include "cgir/types.hpp"

namespace cgir {

struct Metrics {
  double acc = 0.0;
  double nmi = 0.0;
  double ari = 0.0;
  double f1 = 0.0;
};

/// Per-repeat metrics with their mean and (population) standard deviation.
struct MetricsReport {
  std::vector<Metrics> runs;
  Metrics mean;
  Metrics std;
};

MetricsReport summarize(const std::vector<Metrics>& runs);

struct KMeansOptions {
  int restarts = 10;
  int max_iterations = 300;
  double tolerance = 1e-10;
};

struct KMeansResult {
  Labels labels;
  Matrix centroids;
  double inertia = 0.0;  // within-cluster sum of squares
};

/// Lloyd iterations from k-means++ seeds; the restart with the lowest
/// inertia wins. An emptied cluster is reseeded at the point farthest from
/// its current centroid.
KMeansResult kmeans(const Matrix& points, int clusters, std::uint64_t seed, KMeansOptions options = {});
Labels kmeans_cluster(const Matrix& points, int clusters, int restarts, std::uint64_t seed);

/// Contingency table of (pred, truth), relabelled to dense ids.
Matrix contingency(const Labels& pred, const Labels& truth);

/// Maximum-weight assignment on a (possibly rectangular) matrix, Hungarian
/// method. Returns for every row the matched column, or -1.
std::vector<int> max_weight_assignment(const Matrix& weights);

/// For each predicted cluster id, the class it maps to under the ACC-optimal
/// matching (-1 when unmatched).
std::vector<int> best_label_mapping(const Labels& pred, const Labels& truth);

double clustering_accuracy(const Labels& pred, const Labels& truth);
double normalized_mutual_info(const Labels& pred, const Labels& truth);
double adjusted_rand_index(const Labels& pred, const Labels& truth);
double macro_f1(const Labels& pred, const Labels& truth);

Metrics cluster_metrics(const Labels& pred, const Labels& truth);

}  // namespace cgir
