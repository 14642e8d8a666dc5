#pragma once

#include "cgir/graph_data.hpp"
#include "cgir/nn_core.hpp"

namespace cgir {

/// Floor applied to probabilities before taking logs.
inline constexpr double kLogClamp = 1e-12;

/// Discriminator probabilities over m real subclusters plus the fake class,
/// which is always the last column.
struct DiscriminatorOutput {
  Matrix probs;   // R, n x (m+1)
  Matrix hidden;  // pre-activation of the hidden layer (kept for backward)
  Index fake_column() const { return probs.cols() - 1; }
};

/// R = softmax(relu(F W_0) W_1) row-wise.
DiscriminatorOutput discriminate(const Matrix& fused, const std::vector<Matrix>& weights);

struct DiscriminatorGrads {
  Matrix input;                 // dL/dF
  std::vector<Matrix> weights;  // dL/dW_l
};
DiscriminatorGrads discriminator_backward(const Matrix& fused, const std::vector<Matrix>& weights,
                                          const DiscriminatorOutput& out, const Matrix& grad_probs);

/// [P | 0].
Matrix extend_assignment(const Matrix& assignment);

/// Row cross entropy -sum_k t_k log max(q_k, clamp) with its gradient w.r.t. q.
double cross_entropy_row(const Eigen::Ref<const RowVector>& target,
                         const Eigen::Ref<const RowVector>& probs, RowVector* grad = nullptr);

/// L_ad1 = mean_i CE(P_hat_i, R_i). Fills dL/dR when `grad_probs` is set.
double generator_alignment_loss(const Matrix& extended, const DiscriminatorOutput& disc,
                                Matrix* grad_probs = nullptr);

/// L_ad2: missing rows are pushed to the fake class, available rows to their
/// extended assignment; each group is averaged separately and an empty group
/// contributes nothing.
double discriminator_loss(const Matrix& extended, const DiscriminatorOutput& disc,
                          const MissingMask& mask, Matrix* grad_probs = nullptr);

}  // namespace cgir
