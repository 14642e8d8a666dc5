#pragma once

#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>

#include "cgir/random.hpp"
#include "cgir/types.hpp"

namespace cgir {

/// Query/key/value projections of one edge attention layer.
struct EanWeights {
  Matrix query;
  Matrix key;
  Matrix value;
};

/// All learnable tensors of a model. Names are stable ("gcn.0", "disc.1",
/// "ean.0.query", ...) and key both gradients and optimizer state.
struct ModelParams {
  std::vector<Matrix> gcn;   // ReLU between layers, linear output
  std::vector<Matrix> disc;  // ReLU hidden layer(s), softmax output
  std::vector<EanWeights> ean;

  std::vector<std::pair<std::string, Matrix*>> named();
  std::vector<std::pair<std::string, const Matrix*>> named() const;
  const Matrix& get(const std::string& name) const;
  Matrix& get(const std::string& name);

  bool is_discriminator(const std::string& name) const { return name.rfind("disc.", 0) == 0; }

  /// Throws ConfigError if consecutive layer shapes do not chain.
  void validate() const;
};

using GradMap = std::map<std::string, Matrix>;

struct ModelShape {
  Index input_dim = 0;
  std::vector<Index> gcn_hidden = {64};
  Index embed_dim = 16;
  Index disc_hidden = 64;
  Index disc_classes = 0;  // m + 1
  int ean_layers = 2;
};

/// Glorot-uniform initialisation, U(+-sqrt(6 / (fan_in + fan_out))).
Matrix glorot_uniform(Index fan_in, Index fan_out, Rng& rng);
ModelParams init_params(const ModelShape& shape, std::uint64_t seed);

/// Activations kept for the backward pass of the GCN encoder.
struct GcnCache {
  std::vector<Matrix> aggregated;  // A_hat * H_in for each layer
  std::vector<Matrix> preact;      // aggregated * W for each layer
};

/// Z = W_L(A . relu(... relu(A X W_1) ...)). `aggregated_input` is A_hat X,
/// which is constant across epochs and therefore computed once by the caller.
Matrix gcn_forward(const Matrix& aggregated_input, const SparseMatrix& norm_adj,
                   const std::vector<Matrix>& weights, GcnCache* cache = nullptr);

/// Convenience overload that aggregates X itself.
Matrix gcn_embed(const Matrix& features, const SparseMatrix& norm_adj,
                 const std::vector<Matrix>& weights);

/// Gradients of the GCN weights given dL/dZ. The normalized adjacency is
/// assumed symmetric.
std::vector<Matrix> gcn_backward(const SparseMatrix& norm_adj, const std::vector<Matrix>& weights,
                                 const GcnCache& cache, const Matrix& grad_out);

Matrix relu(const Matrix& x);
/// Row-wise softmax, max-shifted.
Matrix softmax_rows(const Matrix& logits);
/// dL/dlogits from dL/dprobs for a row-wise softmax.
Matrix softmax_rows_backward(const Matrix& probs, const Matrix& grad_probs);

struct AdamOptions {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam with bias correction. Moments and step counts are kept per named
/// parameter; a parameter absent from the gradient map is left untouched.
class Adam {
 public:
  explicit Adam(AdamOptions options = {}) : options_(options) {}

  void step(ModelParams& params, const GradMap& grads);
  /// Single-tensor form; useful outside a ModelParams bundle.
  void step(const std::string& name, Matrix& param, const Matrix& grad);

  const AdamOptions& options() const { return options_; }
  void set_lr(double lr) { options_.lr = lr; }
  std::int64_t step_count(const std::string& name) const;

 private:
  struct Slot {
    Matrix first;
    Matrix second;
    std::int64_t steps = 0;
  };
  AdamOptions options_;
  std::map<std::string, Slot> slots_;
};

/// Free-function form of Adam::step.
void adam_step(ModelParams& params, const GradMap& grads, Adam& optimizer);

// ---------------------------------------------------------------------------
// Finite-difference gradient verification.

/// Scalar objective over a list of tensors. When `grads` is non-null the
/// function must also fill it with analytic gradients (same shapes as input).
using Objective = std::function<double(std::span<const Matrix> point, std::vector<Matrix>* grads)>;

struct GradCheckReport {
  std::vector<double> max_relative_error;  // one entry per tensor
  double worst() const;
  bool passed(double tol) const { return worst() <= tol; }
};

/// Central differences with step h compared against the analytic gradient;
/// relative error is |a - b| / max(|a|, |b|, 1e-8), maximised per tensor.
GradCheckReport check_gradients(const Objective& objective, std::span<const Matrix> point,
                                double step = 1e-4);

// ---------------------------------------------------------------------------
// Checkpoints: one CGIRMAT1 file per tensor plus a manifest listing names.

void save_checkpoint(const ModelParams& params, const std::filesystem::path& dir);
ModelParams load_checkpoint(const std::filesystem::path& dir);

}  // namespace cgir
