#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "cgir/types.hpp"

namespace cgir {

/// Attribute graph: dense node attributes, a symmetric non-negative sparse
/// adjacency and optional ground-truth classes.
struct AttributeGraph {
  std::string name;
  Matrix features;         // n x d
  SparseMatrix adjacency;  // n x n, symmetric, no implicit self-loops
  std::optional<Labels> labels;
  int num_classes = 0;     // 0 when unlabeled

  Index num_nodes() const { return features.rows(); }
  Index num_attributes() const { return features.cols(); }

  /// Throws ConsistencyError when any invariant is broken.
  void validate() const;
};

/// Availability indicator h (1 = attributes observed).
struct MissingMask {
  std::vector<std::uint8_t> available;
  double ratio = 0.0;
  std::uint64_t seed = 0;

  Index size() const { return static_cast<Index>(available.size()); }
  bool is_available(Index i) const { return available[static_cast<std::size_t>(i)] != 0; }
  Index num_missing() const;
  Index num_available() const { return size() - num_missing(); }

  static MissingMask all_available(Index n);
};

struct MaskedAttributes {
  Matrix features;
  MissingMask mask;
};

/// Number of rows removed for a given ratio (round half up).
Index missing_count(Index n, double ratio);

AttributeGraph load_graph(const std::filesystem::path& edge_path,
                          const std::filesystem::path& feature_path,
                          const std::optional<std::filesystem::path>& label_path = std::nullopt);

/// Writes the graph back in the load_graph formats. Features are written as
/// CSV with shortest round-trip formatting so reloading is exact.
void save_graph(const AttributeGraph& graph, const std::filesystem::path& edge_path,
                const std::filesystem::path& feature_path,
                const std::optional<std::filesystem::path>& label_path = std::nullopt);

SparseMatrix read_edge_list(const std::filesystem::path& path, Index num_nodes);
Labels read_labels(const std::filesystem::path& path);

/// Draws round(n * ratio) distinct rows uniformly with a seeded generator and
/// zeroes them.
MaskedAttributes apply_missing_mask(const AttributeGraph& graph, double ratio, std::uint64_t seed);
MissingMask make_missing_mask(Index n, double ratio, std::uint64_t seed);
Matrix mask_rows(const Matrix& features, const MissingMask& mask);

/// D^{-1/2} (G + I) D^{-1/2}.
SparseMatrix normalize_adjacency(const SparseMatrix& adjacency);

/// Dense reconstruction target. Applies the logistic function element-wise
/// when any entry exceeds 1, otherwise returns G unchanged.
Matrix sigmoid_preprocess(const SparseMatrix& adjacency);

bool is_symmetric(const SparseMatrix& m, double tol = 0.0);

struct SbmParams {
  Index nodes = 300;
  int classes = 3;
  double p_in = 0.1;
  double p_out = 0.01;
  Index attr_dim = 32;
  double separation = 10.0;
  std::uint64_t seed = 0;
};

/// Stochastic block model with class-conditional Gaussian attributes. Class k
/// has mean separation * e_k (a random unit direction when attr_dim < classes)
/// and identity covariance. Nodes are assigned to classes in contiguous
/// blocks whose sizes differ by at most one.
AttributeGraph generate_sbm(const SbmParams& params);

}  // namespace cgir
