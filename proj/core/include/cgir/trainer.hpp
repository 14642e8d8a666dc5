#pragma once

#include <functional>
#include <optional>

#include "cgir/adversarial.hpp"
#include "cgir/edge_refine.hpp"
#include "cgir/evaluation.hpp"
#include "cgir/graph_data.hpp"
#include "cgir/nn_core.hpp"
#include "cgir/subcluster.hpp"

namespace cgir {

struct TrainConfig {
  int epochs = 100;
  double lr = 1e-3;
  double lambda1 = 10.0;
  double lambda2 = 10.0;
  double lambda3 = 10.0;
  double tau = 0.1;
  int m_factor = 4;
  int subclusters = 0;  // explicit m; 0 means m_factor * classes
  int classes = 0;  // 0: take the class count from the graph labels
  Index embed_dim = 16;
  std::vector<Index> gcn_hidden = {64};
  Index disc_hidden = 64;
  int ean_layers = 2;
  std::uint64_t seed = 0;
  bool wo_gi = false;  // skip generative imputation and the adversarial game
  bool wo_ea = false;  // skip the edge attention stack and L_con
  bool wo_sl = false;  // drop L_sub from the objective
  bool sampled_bce = false;  // approximate L_gra with edges + sampled non-edges

  /// Throws ConfigError on invalid values.
  void validate(Index nodes, int class_count) const;
};

struct LossParts {
  double sub = 0.0;
  double ad1 = 0.0;
  double con = 0.0;
  double gra = 0.0;
};

/// L = w L_sub + lambda1 L_ad1 + lambda2 L_con + lambda3 L_gra, with w = 0
/// under wo_sl.
double total_loss(const LossParts& parts, const TrainConfig& config);

/// Per-run constants derived from the graph and the mask.
struct TrainingProblem {
  Matrix aggregated;            // A_hat X_masked
  SparseMatrix norm_adj;        // A_hat
  SparseMatrix neighbor_mean;   // EAN neighbourhood operator
  SparseMatrix adjacency;       // raw G
  Matrix recon_target;          // dense G (sigmoid-preprocessed when needed)
  MissingMask mask;
  int classes = 0;
  Index subclusters = 0;

  static TrainingProblem build(const AttributeGraph& graph, const MissingMask& mask,
                               const TrainConfig& config);
  Index nodes() const { return aggregated.rows(); }
};

/// Per-epoch discrete or random quantities the loss treats as constants.
struct EpochContext {
  Matrix centroids;
  Labels pseudo_labels;
  Matrix noise;
  std::uint64_t bce_seed = 0;
};

/// Derives the noise seed for one epoch from the run seed.
std::uint64_t epoch_noise_seed(std::uint64_t seed, int epoch);

Matrix embed(const TrainingProblem& problem, const ModelParams& params, GcnCache* cache = nullptr);

/// Subcluster search, pseudo-labels and imputation noise for one epoch.
EpochContext make_context(const TrainingProblem& problem, const Matrix& embedding,
                          const TrainConfig& config, int epoch);

struct ForwardState {
  GcnCache gcn;
  Matrix embedding;     // Z
  SubclusterModel sub;
  Matrix fused;         // F
  Matrix extended;      // P_hat
  std::optional<DiscriminatorOutput> disc;
  std::vector<EanLayerState> ean;
  Matrix refined;       // U fed to the decoder
  Matrix links;         // S (empty under sampled BCE)
  LossParts losses;
  double total = 0.0;
};

ForwardState forward_pass(const TrainingProblem& problem, const ModelParams& params,
                          const EpochContext& context, const TrainConfig& config);

/// Gradients of the composite objective w.r.t. every non-discriminator
/// parameter; the discriminator is treated as fixed.
GradMap generator_gradients(const TrainingProblem& problem, const ModelParams& params,
                            const ForwardState& state, const EpochContext& context,
                            const TrainConfig& config);

/// L_ad2 and its gradients w.r.t. the discriminator weights only.
double discriminator_gradients(const TrainingProblem& problem, const ModelParams& params,
                               const ForwardState& state, GradMap* grads);

struct EpochRecord {
  int epoch = 0;
  double l_sub = 0.0;
  double l_ad1 = 0.0;
  double l_ad2 = 0.0;
  double l_con = 0.0;
  double l_gra = 0.0;
  double l_total = 0.0;
  double seconds = 0.0;
};

struct RunReport {
  std::vector<EpochRecord> history;
  double seconds = 0.0;
  Matrix final_embedding;  // Z after training
  Matrix final_fused;      // F after training, input to k-means
  ModelParams params;
  std::optional<Metrics> metrics;
};

/// Everything visible at the end of one epoch; passed to an optional observer.
struct EpochObservation {
  int epoch;
  const EpochContext& context;
  const ForwardState& d_state;   // forward pass seen by the D-step
  const ForwardState& g_state;   // forward pass seen by the G-step
  const ModelParams& before;     // parameters at the start of the epoch
  const ModelParams& after_d;    // after the D-step
  const ModelParams& after_g;    // after the G-step
};
using EpochObserver = std::function<void(const EpochObservation&)>;

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(int epoch, const std::string& what)
      : NumericError("epoch " + std::to_string(epoch) + ": " + what), epoch_(epoch) {}
  int epoch() const { return epoch_; }

 private:
  int epoch_;
};

/// Alternating optimisation: per epoch one D-step on L_ad2, then one G-step
/// on the composite objective with the updated discriminator.
RunReport train(const AttributeGraph& graph, const MissingMask& mask, const TrainConfig& config,
                const EpochObserver& observer = {});

}  // namespace cgir
