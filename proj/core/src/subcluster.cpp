#include "cgir/subcluster.hpp"

#include <cmath>

#include "cgir/random.hpp"

namespace cgir {

SubclusterSearch find_subclusters(const Matrix& embedding, Index m) {
  if (m < 1 || m > embedding.rows()) {
    throw ArgumentError("subcluster count " + std::to_string(m) + " must lie in [1, " +
                        std::to_string(embedding.rows()) + "]");
  }
  SubclusterSearch out;
  out.assignment = ward_cluster(embedding, m);
  out.centroids = Matrix::Zero(m, embedding.cols());
  Vector counts = Vector::Zero(m);
  for (Index i = 0; i < embedding.rows(); ++i) {
    const int j = out.assignment[static_cast<std::size_t>(i)];
    out.centroids.row(j) += embedding.row(i);
    counts(j) += 1.0;
  }
  for (Index j = 0; j < m; ++j) out.centroids.row(j) /= counts(j);
  return out;
}

Matrix soft_assignment(const Matrix& embedding, const Matrix& centroids) {
  const Index n = embedding.rows();
  const Index m = centroids.rows();
  Matrix p(n, m);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < m; ++j) {
      p(i, j) = 1.0 / (1.0 + (embedding.row(i) - centroids.row(j)).squaredNorm());
    }
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Matrix soft_assignment_backward(const Matrix& embedding, const Matrix& centroids,
                                const Matrix& assignment, const Matrix& grad_assignment) {
  const Index n = embedding.rows();
  const Index m = centroids.rows();
  Matrix grad = Matrix::Zero(n, embedding.cols());
  for (Index i = 0; i < n; ++i) {
    // Recover the unnormalised kernel values and their sum.
    double kernel_sum = 0.0;
    RowVector kernel(m);
    for (Index j = 0; j < m; ++j) {
      kernel(j) = 1.0 / (1.0 + (embedding.row(i) - centroids.row(j)).squaredNorm());
      kernel_sum += kernel(j);
    }
    const double inner = assignment.row(i).dot(grad_assignment.row(i));
    for (Index j = 0; j < m; ++j) {
      const double grad_kernel = (grad_assignment(i, j) - inner) / kernel_sum;
      const double grad_dist = -kernel(j) * kernel(j) * grad_kernel;
      grad.row(i) += 2.0 * grad_dist * (embedding.row(i) - centroids.row(j));
    }
  }
  return grad;
}

GaussianFit estimate_gaussians(const Matrix& embedding, const Matrix& assignment, double ridge) {
  const Index m = assignment.cols();
  const Index k = embedding.cols();
  GaussianFit fit;
  fit.ridge = ridge;
  fit.weights = assignment.colwise().sum().transpose();
  fit.mean.resize(m, k);
  fit.cov.resize(static_cast<std::size_t>(m));
  fit.chol.resize(static_cast<std::size_t>(m));
  const Matrix identity = Matrix::Identity(k, k);
  for (Index j = 0; j < m; ++j) {
    const double w = fit.weights(j);
    if (!(w > 0.0)) throw NumericError("subcluster " + std::to_string(j) + " has zero total weight");
    const Vector p = assignment.col(j);
    fit.mean.row(j) = (p.transpose() * embedding) / w;
    const Matrix centered = embedding.rowwise() - fit.mean.row(j);
    Matrix cov = centered.transpose() * p.asDiagonal() * centered / w;
    cov = 0.5 * (cov + cov.transpose());
    Eigen::LLT<Matrix> llt(cov + ridge * identity);
    if (llt.info() != Eigen::Success) {
      throw NumericError("Cholesky failed for subcluster " + std::to_string(j) + " after ridge");
    }
    fit.chol[static_cast<std::size_t>(j)] = llt.matrixL();
    fit.cov[static_cast<std::size_t>(j)] = std::move(cov);
  }
  return fit;
}

GaussianGrads estimate_gaussians_backward(const Matrix& embedding, const Matrix& assignment,
                                          const GaussianFit& fit, const Matrix& grad_mean,
                                          const std::vector<Matrix>& grad_cov) {
  const Index n = embedding.rows();
  const Index m = fit.components();
  GaussianGrads out{Matrix::Zero(n, embedding.cols()), Matrix::Zero(n, m)};
  for (Index j = 0; j < m; ++j) {
    const double w = fit.weights(j);
    const Matrix& g = grad_cov[static_cast<std::size_t>(j)];
    const Matrix g_sym = g + g.transpose();
    const Matrix centered = embedding.rowwise() - fit.mean.row(j);
    const Matrix centered_g = centered * g;
    const double trace_term = g.cwiseProduct(fit.cov[static_cast<std::size_t>(j)]).sum();
    const Vector quad = centered_g.cwiseProduct(centered).rowwise().sum();
    const Vector lin = centered * grad_mean.row(j).transpose();
    out.assignment.col(j) = ((quad + lin).array() - trace_term).matrix() / w;
    const Matrix direction = (centered * g_sym).rowwise() + grad_mean.row(j);
    out.embedding += (assignment.col(j) / w).asDiagonal() * direction;
  }
  return out;
}

double cholesky_determinant(const Matrix& chol) {
  return std::exp(2.0 * chol.diagonal().array().log().sum());
}

double subcluster_loss(const GaussianFit& fit) {
  double total = 0.0;
  for (const Matrix& l : fit.chol) total += cholesky_determinant(l);
  return total / static_cast<double>(fit.chol.size());
}

std::vector<Matrix> subcluster_loss_grad(const GaussianFit& fit) {
  const auto m = static_cast<double>(fit.chol.size());
  std::vector<Matrix> grads;
  grads.reserve(fit.chol.size());
  for (const Matrix& l : fit.chol) {
    const Index k = l.rows();
    const Matrix l_inv = l.triangularView<Eigen::Lower>().solve(Matrix::Identity(k, k));
    grads.push_back(cholesky_determinant(l) / m * (l_inv.transpose() * l_inv));
  }
  return grads;
}

Matrix cholesky_backward(const Matrix& chol, const Matrix& grad_chol) {
  const Index k = chol.rows();
  Matrix phi = (chol.transpose() * grad_chol).triangularView<Eigen::Lower>();
  phi.diagonal() *= 0.5;
  const Matrix l_inv = chol.triangularView<Eigen::Lower>().solve(Matrix::Identity(k, k));
  const Matrix grad = l_inv.transpose() * phi * l_inv;
  return 0.5 * (grad + grad.transpose());
}

SubclusterModel build_subcluster_model(const Matrix& embedding, const Matrix& centroids, double ridge) {
  SubclusterModel model;
  model.centroids = centroids;
  model.assignment = soft_assignment(embedding, centroids);
  model.fit = estimate_gaussians(embedding, model.assignment, ridge);
  return model;
}

Matrix draw_imputation_noise(const MissingMask& mask, Index dim, std::uint64_t noise_seed) {
  Matrix noise = Matrix::Zero(mask.size(), dim);
  Rng rng = make_rng(noise_seed, Stream::kNoise);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (Index i = 0; i < mask.size(); ++i) {
    if (mask.is_available(i)) continue;
    for (Index a = 0; a < dim; ++a) noise(i, a) = gauss(rng);
  }
  return noise;
}

Matrix sample_and_fuse(const Matrix& embedding, const SubclusterModel& model,
                       const MissingMask& mask, const Matrix& noise) {
  if (mask.size() != embedding.rows() || noise.rows() != embedding.rows() ||
      noise.cols() != embedding.cols() || model.fit.dim() != embedding.cols()) {
    throw ConfigError("sample_and_fuse: inconsistent shapes");
  }
  Matrix fused = embedding;
  const Index m = model.size();
  for (Index i = 0; i < embedding.rows(); ++i) {
    if (mask.is_available(i)) continue;
    RowVector sample = RowVector::Zero(embedding.cols());
    for (Index j = 0; j < m; ++j) {
      const Matrix& l = model.fit.chol[static_cast<std::size_t>(j)];
      sample += model.assignment(i, j) * (model.fit.mean.row(j) + noise.row(i) * l.transpose());
    }
    fused.row(i) = 0.5 * (embedding.row(i) + sample);
  }
  return fused;
}

Matrix sample_and_fuse(const Matrix& embedding, const SubclusterModel& model,
                       const MissingMask& mask, std::uint64_t noise_seed) {
  return sample_and_fuse(embedding, model, mask,
                         draw_imputation_noise(mask, embedding.cols(), noise_seed));
}

FuseGrads sample_and_fuse_backward(const SubclusterModel& model, const MissingMask& mask,
                                   const Matrix& noise, const Matrix& grad_fused) {
  const Index n = grad_fused.rows();
  const Index k = grad_fused.cols();
  const Index m = model.size();
  FuseGrads out;
  out.embedding = grad_fused;
  out.assignment = Matrix::Zero(n, m);
  out.mean = Matrix::Zero(m, k);
  out.chol.assign(static_cast<std::size_t>(m), Matrix::Zero(k, k));
  for (Index i = 0; i < n; ++i) {
    if (mask.is_available(i)) continue;
    const RowVector g = 0.5 * grad_fused.row(i);
    out.embedding.row(i) = g;
    const Matrix outer = g.transpose() * noise.row(i);
    for (Index j = 0; j < m; ++j) {
      const Matrix& l = model.fit.chol[static_cast<std::size_t>(j)];
      const double p = model.assignment(i, j);
      out.assignment(i, j) = g.dot(model.fit.mean.row(j) + noise.row(i) * l.transpose());
      out.mean.row(j) += p * g;
      out.chol[static_cast<std::size_t>(j)] += p * outer;
    }
  }
  for (Matrix& gl : out.chol) gl = Matrix(gl.triangularView<Eigen::Lower>());
  return out;
}

Labels merge_pseudo_labels(const Matrix& centroids, const Matrix& assignment, int classes) {
  if (classes < 1 || classes > centroids.rows()) {
    throw ArgumentError("cannot merge " + std::to_string(centroids.rows()) + " subclusters into " +
                        std::to_string(classes) + " classes");
  }
  const Labels group = ward_cluster(centroids, classes);
  Labels out(static_cast<std::size_t>(assignment.rows()));
  for (Index i = 0; i < assignment.rows(); ++i) {
    Index best = 0;
    assignment.row(i).maxCoeff(&best);
    out[static_cast<std::size_t>(i)] = group[static_cast<std::size_t>(best)];
  }
  return out;
}

}  // namespace cgir
