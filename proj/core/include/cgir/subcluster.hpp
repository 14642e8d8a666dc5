#pragma once

#include "cgir/graph_data.hpp"
#include "cgir/types.hpp"

namespace cgir {

/// Ridge added to each covariance before factorisation.
inline constexpr double kCovarianceRidge = 1e-6;

/// Agglomerative clustering of the rows of `points` with Ward linkage, merged
/// until `clusters` groups remain. Among equal merge costs the pair with the
/// smallest (i, j) slot indices wins; a merged cluster keeps the smaller slot,
/// so every slot is named by its smallest member row. Output labels are
/// numbered 0..clusters-1 in order of that smallest member.
Labels ward_cluster(const Matrix& points, Index clusters);

struct SubclusterSearch {
  Labels assignment;  // length n, values in [0, m)
  Matrix centroids;   // m x d_hat
};

/// Divides the embedding into m subclusters; centroids are cluster means.
SubclusterSearch find_subclusters(const Matrix& embedding, Index m);

/// Student-t kernel soft assignment, row-normalised. Centroids are constants.
Matrix soft_assignment(const Matrix& embedding, const Matrix& centroids);

/// dL/dZ for soft_assignment given dL/dP.
Matrix soft_assignment_backward(const Matrix& embedding, const Matrix& centroids,
                                const Matrix& assignment, const Matrix& grad_assignment);

/// Weighted Gaussian fit per subcluster.
struct GaussianFit {
  Vector weights;              // column sums of P
  Matrix mean;                 // m x d_hat
  std::vector<Matrix> cov;     // m of d_hat x d_hat
  std::vector<Matrix> chol;    // lower factors of cov + ridge*I
  double ridge = kCovarianceRidge;

  Index components() const { return mean.rows(); }
  Index dim() const { return mean.cols(); }
};

GaussianFit estimate_gaussians(const Matrix& embedding, const Matrix& assignment,
                               double ridge = kCovarianceRidge);

/// Backpropagates gradients w.r.t. the means and covariances into the
/// embedding and the soft assignment. Entries of `grad_cov` may be
/// non-symmetric; each is treated as the gradient of the full matrix.
struct GaussianGrads {
  Matrix embedding;
  Matrix assignment;
};
GaussianGrads estimate_gaussians_backward(const Matrix& embedding, const Matrix& assignment,
                                          const GaussianFit& fit, const Matrix& grad_mean,
                                          const std::vector<Matrix>& grad_cov);

/// Determinant of cov + ridge*I from its Cholesky factor.
double cholesky_determinant(const Matrix& chol);

/// Mean over subclusters of det(cov_j + ridge I).
double subcluster_loss(const GaussianFit& fit);
/// dL_sub / d cov_j for every subcluster: det_j (cov_j + ridge I)^{-1} / m.
std::vector<Matrix> subcluster_loss_grad(const GaussianFit& fit);

/// Maps dL/dL (lower factor) to dL/dC for C = L L^T, symmetric form.
Matrix cholesky_backward(const Matrix& chol, const Matrix& grad_chol);

/// Everything the imputation step needs about the current subclusters.
struct SubclusterModel {
  Matrix centroids;
  Matrix assignment;  // P
  GaussianFit fit;

  Index size() const { return centroids.rows(); }
};

SubclusterModel build_subcluster_model(const Matrix& embedding, const Matrix& centroids,
                                       double ridge = kCovarianceRidge);

/// Standard normal draws for the missing rows (zero rows elsewhere), taken in
/// node order from a stream seeded by `noise_seed`.
Matrix draw_imputation_noise(const MissingMask& mask, Index dim, std::uint64_t noise_seed);

/// Missing rows: F_i = (Z_i + sum_j p_ij (mu_j + eps_i L_j^T)) / 2.
/// Available rows are copied from Z unchanged.
Matrix sample_and_fuse(const Matrix& embedding, const SubclusterModel& model,
                       const MissingMask& mask, const Matrix& noise);
Matrix sample_and_fuse(const Matrix& embedding, const SubclusterModel& model,
                       const MissingMask& mask, std::uint64_t noise_seed);

struct FuseGrads {
  Matrix embedding;              // direct path only (Z -> F)
  Matrix assignment;             // dL/dP
  Matrix mean;                   // dL/dmu
  std::vector<Matrix> chol;      // dL/dL_j (lower triangular)
};
FuseGrads sample_and_fuse_backward(const SubclusterModel& model, const MissingMask& mask,
                                   const Matrix& noise, const Matrix& grad_fused);

/// Groups the m centroids into c classes (Ward) and labels every node with
/// the class of its most probable subcluster.
Labels merge_pseudo_labels(const Matrix& centroids, const Matrix& assignment, int classes);

}  // namespace cgir
