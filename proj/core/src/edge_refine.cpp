#include "cgir/edge_refine.hpp"

#include <cmath>
#include <unordered_set>

#include "cgir/adversarial.hpp"
#include "cgir/random.hpp"

namespace cgir {
namespace {

double logistic(double t) {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

void normalize_rows(const Matrix& x, Matrix& unit, Vector& norms) {
  norms = x.rowwise().norm();
  unit.resize(x.rows(), x.cols());
  for (Index i = 0; i < x.rows(); ++i) unit.row(i) = x.row(i) / std::max(norms(i), kNormGuard);
}

Matrix normalize_rows_backward(const Matrix& unit, const Vector& norms, const Matrix& grad_unit) {
  Matrix grad(unit.rows(), unit.cols());
  for (Index i = 0; i < unit.rows(); ++i) {
    if (norms(i) > kNormGuard) {
      grad.row(i) = (grad_unit.row(i) - unit.row(i) * unit.row(i).dot(grad_unit.row(i))) / norms(i);
    } else {
      grad.row(i) = grad_unit.row(i) / kNormGuard;
    }
  }
  return grad;
}

// Exactly symmetric U U^T.
Matrix gram(const Matrix& u) {
  Matrix t = Matrix::Zero(u.rows(), u.rows());
  t.selfadjointView<Eigen::Lower>().rankUpdate(u);
  return t.selfadjointView<Eigen::Lower>();
}

}  // namespace

SparseMatrix neighbor_mean_operator(const SparseMatrix& adjacency) {
  const Index n = adjacency.rows();
  std::vector<std::vector<Index>> neighbors(static_cast<std::size_t>(n));
  for (Index k = 0; k < adjacency.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(adjacency, k); it; ++it) {
      if (it.value() != 0.0) neighbors[static_cast<std::size_t>(it.row())].push_back(it.col());
    }
  }
  std::vector<Eigen::Triplet<double>> triplets;
  for (Index i = 0; i < n; ++i) {
    auto& nb = neighbors[static_cast<std::size_t>(i)];
    if (nb.empty()) nb.push_back(i);
    const double w = 1.0 / static_cast<double>(nb.size());
    for (Index j : nb) triplets.emplace_back(i, j, w);
  }
  SparseMatrix op(n, n);
  op.setFromTriplets(triplets.begin(), triplets.end());
  return op;
}

EanLayerState ean_layer(const Matrix& input, const SparseMatrix& neighbor_mean,
                        const EanWeights& weights, int layer_index) {
  if (weights.query.rows() != input.cols()) {
    throw ConfigError("ean layer " + std::to_string(layer_index) + ": input width " +
                      std::to_string(input.cols()) + " != " + std::to_string(weights.query.rows()));
  }
  EanLayerState s;
  s.layer_index = layer_index;
  s.input = input;
  s.query = input * weights.query;
  s.key = input * weights.key;
  s.value = input * weights.value;
  normalize_rows(s.query, s.query_unit, s.query_norm);
  normalize_rows(s.key, s.key_unit, s.key_norm);
  s.key_context = neighbor_mean * s.key_unit;
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.query.cols()));
  s.attention = softmax_rows(s.query_unit.cwiseProduct(s.key_context) * scale);
  s.output = s.value.cwiseProduct(s.attention);
  return s;
}

EanLayerGrads ean_layer_backward(const EanLayerState& s, const SparseMatrix& neighbor_mean,
                                 const EanWeights& weights, const Matrix& grad_output,
                                 const Matrix* grad_attention) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(s.query.cols()));
  const Matrix grad_value = grad_output.cwiseProduct(s.attention);
  Matrix grad_attn = grad_output.cwiseProduct(s.value);
  if (grad_attention) grad_attn += *grad_attention;
  const Matrix grad_pre = softmax_rows_backward(s.attention, grad_attn);
  const Matrix grad_query_unit = grad_pre.cwiseProduct(s.key_context) * scale;
  const Matrix grad_context = grad_pre.cwiseProduct(s.query_unit) * scale;
  const Matrix grad_key_unit = neighbor_mean.transpose() * grad_context;
  const Matrix grad_query = normalize_rows_backward(s.query_unit, s.query_norm, grad_query_unit);
  const Matrix grad_key = normalize_rows_backward(s.key_unit, s.key_norm, grad_key_unit);

  EanLayerGrads g;
  g.weights.query = s.input.transpose() * grad_query;
  g.weights.key = s.input.transpose() * grad_key;
  g.weights.value = s.input.transpose() * grad_value;
  g.input = grad_query * weights.query.transpose() + grad_key * weights.key.transpose() +
            grad_value * weights.value.transpose();
  return g;
}

double attention_contrastive(const Matrix& attention, const Labels& pseudo_labels, double tau,
                             Matrix* grad_attention) {
  if (!(tau > 0.0)) throw ArgumentError("contrastive temperature must be positive");
  const Index n = attention.rows();
  if (static_cast<Index>(pseudo_labels.size()) != n) {
    throw ConfigError("pseudo-label count does not match attention rows");
  }
  Matrix unit;
  Vector norms;
  normalize_rows(attention, unit, norms);
  const Matrix cosine = gram(unit);
  // Shifting by the maximum cosine (1) cancels in every ratio.
  const Matrix expd = ((cosine.array() - 1.0) / tau).exp().matrix();
  Vector positive = Vector::Zero(n);
  Vector total = Vector::Zero(n);
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      total(i) += expd(i, j);
      if (pseudo_labels[static_cast<std::size_t>(i)] == pseudo_labels[static_cast<std::size_t>(j)]) {
        positive(i) += expd(i, j);
      }
    }
  }
  double loss = 0.0;
  for (Index i = 0; i < n; ++i) loss -= std::log(positive(i) / total(i));
  loss /= static_cast<double>(n);

  if (grad_attention) {
    Matrix grad_cos(n, n);
    const double coef = -1.0 / (static_cast<double>(n) * tau);
    for (Index j = 0; j < n; ++j) {
      for (Index i = 0; i < n; ++i) {
        const bool same =
            pseudo_labels[static_cast<std::size_t>(i)] == pseudo_labels[static_cast<std::size_t>(j)];
        grad_cos(i, j) = coef * expd(i, j) * ((same ? 1.0 / positive(i) : 0.0) - 1.0 / total(i));
      }
    }
    const Matrix grad_unit = (grad_cos + grad_cos.transpose()) * unit;
    *grad_attention = normalize_rows_backward(unit, norms, grad_unit);
  }
  return loss;
}

double contrastive_loss(const std::vector<Matrix>& attention_layers, const Labels& pseudo_labels,
                        double tau, std::vector<Matrix>* grads) {
  if (attention_layers.empty()) return 0.0;
  const auto layers = static_cast<double>(attention_layers.size());
  double total = 0.0;
  if (grads) grads->clear();
  for (const Matrix& a : attention_layers) {
    Matrix g;
    total += attention_contrastive(a, pseudo_labels, tau, grads ? &g : nullptr);
    if (grads) grads->push_back(g / layers);
  }
  return total / layers;
}

ReconstructionResult reconstruct_and_score(const Matrix& refined, const Matrix& target,
                                           Matrix* grad_refined) {
  const Index n = refined.rows();
  if (target.rows() != n || target.cols() != n) {
    throw ConfigError("reconstruction target must be n x n");
  }
  ReconstructionResult r;
  r.refined = refined;
  const Matrix logits = gram(refined);
  r.links.resize(n, n);
  Matrix grad_logits;
  if (grad_refined) grad_logits.resize(n, n);
  const double inv = 1.0 / static_cast<double>(n * n);
  double loss = 0.0;
  for (Index j = 0; j < n; ++j) {
    for (Index i = 0; i < n; ++i) {
      const double t = logits(i, j);
      const double s = logistic(t);
      const double s_neg = logistic(-t);  // 1 - s without cancellation
      r.links(i, j) = s;
      const double g = target(i, j);
      double grad = 0.0;
      if (g != 0.0) {
        loss -= g * std::log(std::max(s, kLogClamp));
        if (s > kLogClamp) grad -= g * s_neg;
      }
      if (g != 1.0) {
        loss -= (1.0 - g) * std::log(std::max(s_neg, kLogClamp));
        if (s_neg > kLogClamp) grad += (1.0 - g) * s;
      }
      if (grad_refined) grad_logits(i, j) = grad * inv;
    }
  }
  r.loss = loss * inv;
  if (grad_refined) *grad_refined = (grad_logits + grad_logits.transpose()) * refined;
  return r;
}

double sampled_reconstruction_loss(const Matrix& refined, const SparseMatrix& adjacency,
                                   std::uint64_t seed, Matrix* grad_refined) {
  const Index n = refined.rows();
  std::vector<std::pair<Index, Index>> positives;
  std::vector<double> weights;
  std::unordered_set<std::uint64_t> edge_keys;
  for (Index k = 0; k < adjacency.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(adjacency, k); it; ++it) {
      positives.emplace_back(it.row(), it.col());
      weights.push_back(std::min(it.value(), 1.0));
      edge_keys.insert(static_cast<std::uint64_t>(it.row()) * static_cast<std::uint64_t>(n) +
                       static_cast<std::uint64_t>(it.col()));
    }
  }
  std::vector<std::pair<Index, Index>> negatives;
  Rng rng = make_rng(seed, Stream::kSampledBce);
  std::uniform_int_distribution<Index> pick(0, n - 1);
  const auto max_pairs = static_cast<std::size_t>(n) * static_cast<std::size_t>(n);
  const std::size_t wanted = std::min(positives.size(), max_pairs - edge_keys.size());
  while (negatives.size() < wanted) {
    const Index i = pick(rng);
    const Index j = pick(rng);
    const auto key = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(n) + static_cast<std::uint64_t>(j);
    if (edge_keys.count(key) == 0) negatives.emplace_back(i, j);
  }
  if (grad_refined) grad_refined->setZero(n, refined.cols());
  double pos_loss = 0.0;
  double neg_loss = 0.0;
  const double pos_scale = positives.empty() ? 0.0 : 1.0 / static_cast<double>(positives.size());
  const double neg_scale = negatives.empty() ? 0.0 : 1.0 / static_cast<double>(negatives.size());
  auto accumulate = [&](Index i, Index j, double g, double scale, double& sink) {
    const double t = refined.row(i).dot(refined.row(j));
    const double s = logistic(t);
    const double s_neg = logistic(-t);
    double grad = 0.0;
    if (g != 0.0) {
      sink -= g * std::log(std::max(s, kLogClamp));
      if (s > kLogClamp) grad -= g * s_neg;
    }
    if (g != 1.0) {
      sink -= (1.0 - g) * std::log(std::max(s_neg, kLogClamp));
      if (s_neg > kLogClamp) grad += (1.0 - g) * s;
    }
    if (grad_refined) {
      grad_refined->row(i) += grad * scale * refined.row(j);
      grad_refined->row(j) += grad * scale * refined.row(i);
    }
  };
  for (std::size_t e = 0; e < positives.size(); ++e) {
    accumulate(positives[e].first, positives[e].second, weights[e], pos_scale, pos_loss);
  }
  for (const auto& [i, j] : negatives) accumulate(i, j, 0.0, neg_scale, neg_loss);
  return pos_loss * pos_scale + neg_loss * neg_scale;
}

}  // namespace cgir
