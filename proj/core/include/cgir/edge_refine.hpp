#pragma once

#include <optional>

#include "cgir/nn_core.hpp"

namespace cgir {

inline constexpr double kNormGuard = 1e-12;

/// Row-stochastic neighbour-averaging operator: row i has 1/|xi(i)| on each
/// neighbour of i in the raw graph, or a single 1 on the diagonal when i is
/// isolated.
SparseMatrix neighbor_mean_operator(const SparseMatrix& adjacency);

/// Forward state of one edge attention layer.
struct EanLayerState {
  Matrix input;        // H
  Matrix query, key, value;
  Vector query_norm, key_norm;
  Matrix query_unit, key_unit;
  Matrix key_context;  // neighbour mean of key_unit
  Matrix attention;    // A, row-wise softmax over the d' dimensions
  Matrix output;       // U = V (.) A
  int layer_index = 0;
};

/// Q = H W1, K = H W2, V = H W3; A_i = softmax(mean_{j in xi(i)} Qhat_i (.) Khat_j / sqrt(d'));
/// U = V (.) A.
EanLayerState ean_layer(const Matrix& input, const SparseMatrix& neighbor_mean,
                        const EanWeights& weights, int layer_index = 0);

struct EanLayerGrads {
  Matrix input;
  EanWeights weights;
};
/// Backward through one layer given gradients w.r.t. its output U and,
/// separately, w.r.t. its attention matrix A (from the contrastive loss).
EanLayerGrads ean_layer_backward(const EanLayerState& state, const SparseMatrix& neighbor_mean,
                                 const EanWeights& weights, const Matrix& grad_output,
                                 const Matrix* grad_attention);

/// Omega(A): pseudo-label supervised contrastive loss on cosine similarity of
/// attention rows. Positives include j == i.
double attention_contrastive(const Matrix& attention, const Labels& pseudo_labels, double tau,
                             Matrix* grad_attention = nullptr);

/// L_con = mean over layers of Omega(A^(l)).
double contrastive_loss(const std::vector<Matrix>& attention_layers, const Labels& pseudo_labels,
                        double tau, std::vector<Matrix>* grads = nullptr);

struct ReconstructionResult {
  Matrix refined;  // U
  Matrix links;    // S = logistic(U U^T)
  double loss = 0.0;
};

/// S = logistic(U U^T) and the mean binary cross entropy over all n^2 pairs
/// (diagonal included) against a target in [0, 1].
ReconstructionResult reconstruct_and_score(const Matrix& refined, const Matrix& target,
                                           Matrix* grad_refined = nullptr);

/// Opt-in approximation for large graphs: BCE over every stored edge plus an
/// equal number of uniformly sampled non-edges, each group averaged.
double sampled_reconstruction_loss(const Matrix& refined, const SparseMatrix& adjacency,
                                   std::uint64_t seed, Matrix* grad_refined = nullptr);

}  // namespace cgir
