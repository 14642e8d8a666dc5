#include "cgir/graph_data.hpp"

#include <algorithm>
#include <array>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>

#include "cgir/matrix_io.hpp"
#include "cgir/random.hpp"

namespace cgir {
namespace {

std::vector<std::string_view> split_ws(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    std::size_t j = i;
    while (j < s.size() && s[j] != ' ' && s[j] != '\t' && s[j] != '\r') ++j;
    if (j > i) out.push_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

template <typename T>
bool parse_number(std::string_view field, T& out) {
  const auto res = std::from_chars(field.data(), field.data() + field.size(), out);
  return res.ec == std::errc{} && res.ptr == field.data() + field.size();
}

std::string where(const std::filesystem::path& path, std::size_t line_no) {
  return path.string() + ":" + std::to_string(line_no);
}

}  // namespace

void AttributeGraph::validate() const {
  const Index n = num_nodes();
  if (adjacency.rows() != n || adjacency.cols() != n) {
    throw ConsistencyError("adjacency is " + std::to_string(adjacency.rows()) + "x" +
                           std::to_string(adjacency.cols()) + " but graph has " +
                           std::to_string(n) + " nodes");
  }
  if (!features.allFinite()) throw ConsistencyError("attribute matrix has non-finite entries");
  for (Index k = 0; k < adjacency.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(adjacency, k); it; ++it) {
      if (!(it.value() >= 0.0) || !std::isfinite(it.value())) {
        throw ConsistencyError("adjacency entries must be finite and non-negative");
      }
    }
  }
  if (!is_symmetric(adjacency)) throw ConsistencyError("adjacency is not symmetric");
  if (labels) {
    if (static_cast<Index>(labels->size()) != n) {
      throw ConsistencyError("label count " + std::to_string(labels->size()) +
                             " does not match node count " + std::to_string(n));
    }
    for (int y : *labels) {
      if (y < 0 || y >= num_classes) {
        throw ConsistencyError("label " + std::to_string(y) + " outside [0, " +
                               std::to_string(num_classes) + ")");
      }
    }
  }
}

Index MissingMask::num_missing() const {
  return static_cast<Index>(std::count(available.begin(), available.end(), std::uint8_t{0}));
}

MissingMask MissingMask::all_available(Index n) {
  MissingMask mask;
  mask.available.assign(static_cast<std::size_t>(n), 1);
  return mask;
}

Index missing_count(Index n, double ratio) {
  return static_cast<Index>(std::floor(static_cast<double>(n) * ratio + 0.5));
}

bool is_symmetric(const SparseMatrix& m, double tol) {
  if (m.rows() != m.cols()) return false;
  const SparseMatrix diff = SparseMatrix(m.transpose()) - m;
  for (Index k = 0; k < diff.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(diff, k); it; ++it) {
      if (std::abs(it.value()) > tol) return false;
    }
  }
  return true;
}

SparseMatrix read_edge_list(const std::filesystem::path& path, Index num_nodes) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  // Keyed on the unordered pair so a later (j, i) overrides an earlier (i, j).
  std::map<std::pair<Index, Index>, double> edges;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty() || fields.front().front() == '#') continue;
    if (fields.size() != 2 && fields.size() != 3) {
      throw ParseError(where(path, line_no) + ": expected 'src dst [weight]'");
    }
    long long src = 0;
    long long dst = 0;
    double weight = 1.0;
    if (!parse_number(fields[0], src) || !parse_number(fields[1], dst) ||
        (fields.size() == 3 && !parse_number(fields[2], weight))) {
      throw ParseError(where(path, line_no) + ": malformed edge '" + line + "'");
    }
    if (src < 0 || dst < 0) throw ParseError(where(path, line_no) + ": negative node id");
    if (src >= num_nodes || dst >= num_nodes) {
      throw BoundsError(where(path, line_no) + ": node id " + std::to_string(std::max(src, dst)) +
                        " >= node count " + std::to_string(num_nodes));
    }
    if (!std::isfinite(weight) || weight < 0.0) {
      throw ParseError(where(path, line_no) + ": edge weight must be finite and non-negative");
    }
    const Index a = std::min<Index>(src, dst);
    const Index b = std::max<Index>(src, dst);
    edges[{a, b}] = weight;
  }
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(edges.size() * 2);
  for (const auto& [key, w] : edges) {
    if (w == 0.0) continue;
    triplets.emplace_back(key.first, key.second, w);
    if (key.first != key.second) triplets.emplace_back(key.second, key.first, w);
  }
  SparseMatrix g(num_nodes, num_nodes);
  g.setFromTriplets(triplets.begin(), triplets.end());
  return g;
}

Labels read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Labels labels;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_ws(line);
    if (fields.empty()) continue;
    int y = 0;
    if (fields.size() != 1 || !parse_number(fields[0], y) || y < 0) {
      throw ParseError(where(path, line_no) + ": expected one non-negative integer label");
    }
    labels.push_back(y);
  }
  return labels;
}

AttributeGraph load_graph(const std::filesystem::path& edge_path,
                          const std::filesystem::path& feature_path,
                          const std::optional<std::filesystem::path>& label_path) {
  AttributeGraph graph;
  graph.name = feature_path.stem().string();
  graph.features = read_matrix(feature_path);
  graph.adjacency = read_edge_list(edge_path, graph.features.rows());
  if (label_path) {
    Labels labels = read_labels(*label_path);
    if (static_cast<Index>(labels.size()) != graph.num_nodes()) {
      throw ConsistencyError("label file has " + std::to_string(labels.size()) +
                             " rows but feature matrix has " + std::to_string(graph.num_nodes()));
    }
    graph.num_classes = labels.empty() ? 0 : *std::max_element(labels.begin(), labels.end()) + 1;
    graph.labels = std::move(labels);
  }
  graph.validate();
  return graph;
}

void save_graph(const AttributeGraph& graph, const std::filesystem::path& edge_path,
                const std::filesystem::path& feature_path,
                const std::optional<std::filesystem::path>& label_path) {
  {
    std::ofstream out(edge_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + edge_path.string());
    std::array<char, 32> buf{};
    for (Index k = 0; k < graph.adjacency.outerSize(); ++k) {
      for (SparseMatrix::InnerIterator it(graph.adjacency, k); it; ++it) {
        if (it.row() > it.col()) continue;
        const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), it.value());
        out << it.row() << '\t' << it.col() << '\t';
        out.write(buf.data(), res.ptr - buf.data());
        out << '\n';
      }
    }
    if (!out) throw IoError("write failed: " + edge_path.string());
  }
  write_matrix_csv(feature_path, graph.features);
  if (label_path) {
    if (!graph.labels) throw ArgumentError("graph has no labels to save");
    std::ofstream out(*label_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + label_path->string());
    for (int y : *graph.labels) out << y << '\n';
  }
}

MissingMask make_missing_mask(Index n, double ratio, std::uint64_t seed) {
  if (!(ratio >= 0.0 && ratio < 1.0)) {
    throw ArgumentError("missing ratio must lie in [0, 1), got " + std::to_string(ratio));
  }
  MissingMask mask = MissingMask::all_available(n);
  mask.ratio = ratio;
  mask.seed = seed;
  const Index drop = missing_count(n, ratio);
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index{0});
  Rng rng = make_rng(seed, Stream::kMask);
  // Partial Fisher-Yates: the first `drop` slots are a uniform sample without replacement.
  for (Index i = 0; i < drop; ++i) {
    std::uniform_int_distribution<Index> pick(i, n - 1);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(pick(rng))]);
    mask.available[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 0;
  }
  return mask;
}

Matrix mask_rows(const Matrix& features, const MissingMask& mask) {
  if (mask.size() != features.rows()) {
    throw ConsistencyError("mask length does not match attribute rows");
  }
  Matrix out = features;
  for (Index i = 0; i < out.rows(); ++i) {
    if (!mask.is_available(i)) out.row(i).setZero();
  }
  return out;
}

MaskedAttributes apply_missing_mask(const AttributeGraph& graph, double ratio, std::uint64_t seed) {
  MissingMask mask = make_missing_mask(graph.num_nodes(), ratio, seed);
  Matrix masked = mask_rows(graph.features, mask);
  return {std::move(masked), std::move(mask)};
}

SparseMatrix normalize_adjacency(const SparseMatrix& adjacency) {
  if (!is_symmetric(adjacency)) throw ConsistencyError("normalize_adjacency: input is not symmetric");
  const Index n = adjacency.rows();
  SparseMatrix identity(n, n);
  identity.setIdentity();
  SparseMatrix with_loops = adjacency + identity;
  Vector degree = Vector::Zero(n);
  for (Index k = 0; k < with_loops.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(with_loops, k); it; ++it) degree(it.row()) += it.value();
  }
  const Vector inv_sqrt = degree.array().rsqrt();
  for (Index k = 0; k < with_loops.outerSize(); ++k) {
    for (SparseMatrix::InnerIterator it(with_loops, k); it; ++it) {
      it.valueRef() *= inv_sqrt(it.row()) * inv_sqrt(it.col());
    }
  }
  with_loops.makeCompressed();
  return with_loops;
}

Matrix sigmoid_preprocess(const SparseMatrix& adjacency) {
  Matrix dense = Matrix(adjacency);
  if (dense.size() > 0 && dense.maxCoeff() > 1.0) {
    dense = (1.0 + (-dense.array()).exp()).inverse().matrix();
  }
  return dense;
}

AttributeGraph generate_sbm(const SbmParams& params) {
  if (!(params.p_in >= 0.0 && params.p_in <= 1.0 && params.p_out >= 0.0 &&
        params.p_out <= params.p_in)) {
    throw ArgumentError("generate_sbm requires 0 <= p_out <= p_in <= 1");
  }
  if (params.classes < 1 || params.nodes < params.classes) {
    throw ArgumentError("generate_sbm requires 1 <= classes <= nodes");
  }
  if (params.attr_dim < 1) throw ArgumentError("generate_sbm requires attr_dim >= 1");

  const Index n = params.nodes;
  AttributeGraph graph;
  graph.name = "sbm";
  graph.num_classes = params.classes;
  Labels labels(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) {
    labels[static_cast<std::size_t>(i)] = static_cast<int>(i * params.classes / n);
  }

  Rng edge_rng = make_rng(params.seed, Stream::kGraph);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<Eigen::Triplet<double>> triplets;
  for (Index i = 0; i < n; ++i) {
    for (Index j = i + 1; j < n; ++j) {
      const double p = labels[static_cast<std::size_t>(i)] == labels[static_cast<std::size_t>(j)]
                           ? params.p_in
                           : params.p_out;
      if (unit(edge_rng) < p) {
        triplets.emplace_back(i, j, 1.0);
        triplets.emplace_back(j, i, 1.0);
      }
    }
  }
  graph.adjacency.resize(n, n);
  graph.adjacency.setFromTriplets(triplets.begin(), triplets.end());

  Rng attr_rng = make_rng(params.seed, Stream::kAttributes);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix means = Matrix::Zero(params.classes, params.attr_dim);
  if (params.attr_dim >= params.classes) {
    for (int k = 0; k < params.classes; ++k) means(k, k) = 1.0;
  } else {
    for (int k = 0; k < params.classes; ++k) {
      for (Index j = 0; j < params.attr_dim; ++j) means(k, j) = gauss(attr_rng);
      means.row(k).normalize();
    }
  }
  means *= params.separation;
  graph.features.resize(n, params.attr_dim);
  for (Index i = 0; i < n; ++i) {
    for (Index j = 0; j < params.attr_dim; ++j) {
      graph.features(i, j) = means(labels[static_cast<std::size_t>(i)], j) + gauss(attr_rng);
    }
  }
  graph.labels = std::move(labels);
  return graph;
}

}  // namespace cgir
