#include "cgir/adversarial.hpp"

#include <cmath>

namespace cgir {

DiscriminatorOutput discriminate(const Matrix& fused, const std::vector<Matrix>& weights) {
  if (weights.size() != 2) throw ConfigError("discriminator expects two weight matrices");
  if (fused.cols() != weights[0].rows() || weights[0].cols() != weights[1].rows()) {
    throw ConfigError("discriminator shape mismatch: input width " + std::to_string(fused.cols()) +
                      ", first layer expects " + std::to_string(weights[0].rows()));
  }
  DiscriminatorOutput out;
  out.hidden = fused * weights[0];
  out.probs = softmax_rows(relu(out.hidden) * weights[1]);
  return out;
}

DiscriminatorGrads discriminator_backward(const Matrix& fused, const std::vector<Matrix>& weights,
                                          const DiscriminatorOutput& out, const Matrix& grad_probs) {
  DiscriminatorGrads grads;
  const Matrix grad_logits = softmax_rows_backward(out.probs, grad_probs);
  const Matrix activated = relu(out.hidden);
  grads.weights.resize(2);
  grads.weights[1] = activated.transpose() * grad_logits;
  const Matrix grad_hidden = (grad_logits * weights[1].transpose())
                                 .cwiseProduct((out.hidden.array() > 0.0).cast<double>().matrix());
  grads.weights[0] = fused.transpose() * grad_hidden;
  grads.input = grad_hidden * weights[0].transpose();
  return grads;
}

Matrix extend_assignment(const Matrix& assignment) {
  Matrix out = Matrix::Zero(assignment.rows(), assignment.cols() + 1);
  out.leftCols(assignment.cols()) = assignment;
  return out;
}

double cross_entropy_row(const Eigen::Ref<const RowVector>& target,
                         const Eigen::Ref<const RowVector>& probs, RowVector* grad) {
  double loss = 0.0;
  if (grad) grad->setZero(probs.size());
  for (Index k = 0; k < probs.size(); ++k) {
    if (target(k) == 0.0) continue;
    const double q = probs(k);
    if (q > kLogClamp) {
      loss -= target(k) * std::log(q);
      if (grad) (*grad)(k) = -target(k) / q;
    } else {
      loss -= target(k) * std::log(kLogClamp);
    }
  }
  return loss;
}

double generator_alignment_loss(const Matrix& extended, const DiscriminatorOutput& disc,
                                Matrix* grad_probs) {
  const Matrix& r = disc.probs;
  if (extended.rows() != r.rows() || extended.cols() != r.cols()) {
    throw ConfigError("generator_alignment_loss: shape mismatch");
  }
  const auto n = static_cast<double>(r.rows());
  if (grad_probs) grad_probs->setZero(r.rows(), r.cols());
  double loss = 0.0;
  RowVector g;
  for (Index i = 0; i < r.rows(); ++i) {
    loss += cross_entropy_row(extended.row(i), r.row(i), grad_probs ? &g : nullptr);
    if (grad_probs) grad_probs->row(i) = g / n;
  }
  return loss / n;
}

double discriminator_loss(const Matrix& extended, const DiscriminatorOutput& disc,
                          const MissingMask& mask, Matrix* grad_probs) {
  const Matrix& r = disc.probs;
  if (extended.rows() != r.rows() || extended.cols() != r.cols() || mask.size() != r.rows()) {
    throw ConfigError("discriminator_loss: shape mismatch");
  }
  const Index n_missing = mask.num_missing();
  const Index n_available = mask.num_available();
  RowVector fake = RowVector::Zero(r.cols());
  fake(disc.fake_column()) = 1.0;
  if (grad_probs) grad_probs->setZero(r.rows(), r.cols());
  double missing_sum = 0.0;
  double available_sum = 0.0;
  RowVector g;
  for (Index i = 0; i < r.rows(); ++i) {
    const bool avail = mask.is_available(i);
    const double ce = avail ? cross_entropy_row(extended.row(i), r.row(i), grad_probs ? &g : nullptr)
                            : cross_entropy_row(fake, r.row(i), grad_probs ? &g : nullptr);
    if (avail) {
      available_sum += ce;
      if (grad_probs) grad_probs->row(i) = g / static_cast<double>(n_available);
    } else {
      missing_sum += ce;
      if (grad_probs) grad_probs->row(i) = g / static_cast<double>(n_missing);
    }
  }
  double loss = 0.0;
  if (n_missing > 0) loss += missing_sum / static_cast<double>(n_missing);
  if (n_available > 0) loss += available_sum / static_cast<double>(n_available);
  return loss;
}

}  // namespace cgir
