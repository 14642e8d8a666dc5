#include <doctest.h>

#include <fstream>

#include "cgir/graph_data.hpp"
#include "cgir/evaluation.hpp"
#include "cgir/matrix_io.hpp"
#include "support/oracles.hpp"

using namespace cgir;
namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream out(p);
  out << text;
}

int count_components(const SparseMatrix& g) {
  const Index n = g.rows();
  std::vector<int> comp(static_cast<std::size_t>(n), -1);
  int next = 0;
  for (Index s = 0; s < n; ++s) {
    if (comp[static_cast<std::size_t>(s)] >= 0) continue;
    std::vector<Index> stack{s};
    comp[static_cast<std::size_t>(s)] = next;
    while (!stack.empty()) {
      const Index v = stack.back();
      stack.pop_back();
      for (SparseMatrix::InnerIterator it(g, v); it; ++it) {
        if (comp[static_cast<std::size_t>(it.row())] < 0) {
          comp[static_cast<std::size_t>(it.row())] = next;
          stack.push_back(it.row());
        }
      }
    }
    ++next;
  }
  return next;
}

}  // namespace

TEST_SUITE("graph_data") {

TEST_CASE("load_graph symmetrizes a single edge") {
  const auto dir = testing::scratch_dir("load_single");
  write_text(dir / "e.txt", "0 1\n");
  write_text(dir / "x.csv", "1\n2\n");
  const AttributeGraph g = load_graph(dir / "e.txt", dir / "x.csv");
  CHECK(g.num_nodes() == 2);
  CHECK(g.adjacency.coeff(0, 1) == 1.0);
  CHECK(g.adjacency.coeff(1, 0) == 1.0);
  CHECK(g.adjacency.coeff(0, 0) == 0.0);
}

TEST_CASE("load_graph with empty edge file") {
  const auto dir = testing::scratch_dir("load_empty");
  write_text(dir / "e.txt", "");
  write_text(dir / "x.csv", "1,2\n3,4\n5,6\n");
  const AttributeGraph g = load_graph(dir / "e.txt", dir / "x.csv");
  CHECK(g.num_nodes() == 3);
  CHECK(g.num_attributes() == 2);
  CHECK(g.adjacency.nonZeros() == 0);
}

TEST_CASE("load_graph keeps the last duplicate weight and skips comments") {
  const auto dir = testing::scratch_dir("load_dup");
  write_text(dir / "e.txt", "# header\n0\t1\t0.5\n1\t0\t0.25\n1\t2\n");
  write_text(dir / "x.csv", "0\n0\n0\n");
  const AttributeGraph g = load_graph(dir / "e.txt", dir / "x.csv");
  CHECK(g.adjacency.coeff(0, 1) == 0.25);
  CHECK(g.adjacency.coeff(1, 0) == 0.25);
  CHECK(g.adjacency.coeff(2, 1) == 1.0);
}

TEST_CASE("load_graph error paths") {
  const auto dir = testing::scratch_dir("load_err");
  write_text(dir / "x.csv", "1\n2\n");

  write_text(dir / "bad.txt", "0 1\n0 x\n");
  try {
    load_graph(dir / "bad.txt", dir / "x.csv");
    FAIL("expected ParseError");
  } catch (const ParseError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }

  write_text(dir / "oob.txt", "0 5\n");
  CHECK_THROWS_AS(load_graph(dir / "oob.txt", dir / "x.csv"), BoundsError);

  write_text(dir / "e.txt", "0 1\n");
  write_text(dir / "y.txt", "0\n1\n1\n");
  CHECK_THROWS_AS(load_graph(dir / "e.txt", dir / "x.csv", dir / "y.txt"), ConsistencyError);
}

TEST_CASE("binary and CSV feature files load identically") {
  const auto dir = testing::scratch_dir("load_bin");
  Matrix x(3, 2);
  x << 0.5, -1.25, 2.0, 3.0, 0.0, 1.0;  // exactly representable in float32
  write_matrix_binary(dir / "x.bin", x);
  write_matrix_csv(dir / "x.csv", x);
  CHECK(read_matrix(dir / "x.bin") == x);
  CHECK(read_matrix(dir / "x.csv") == x);
}

TEST_CASE("save/load round trip reproduces X, G and labels exactly") {
  SbmParams p;
  p.nodes = 60;
  p.classes = 3;
  p.attr_dim = 5;
  p.seed = 11;
  AttributeGraph g = generate_sbm(p);
  // Add a non-unit weight so weights are exercised too.
  g.adjacency.coeffRef(0, 1) = 0.1;
  g.adjacency.coeffRef(1, 0) = 0.1;
  const auto dir = testing::scratch_dir("roundtrip");
  save_graph(g, dir / "e.txt", dir / "x.csv", dir / "y.txt");
  const AttributeGraph back = load_graph(dir / "e.txt", dir / "x.csv", dir / "y.txt");
  CHECK(back.features == g.features);
  CHECK(Matrix(back.adjacency) == Matrix(g.adjacency));
  CHECK(*back.labels == *g.labels);
  CHECK(back.num_classes == 3);
}

TEST_CASE("apply_missing_mask") {
  std::mt19937_64 rng(3);
  AttributeGraph g;
  g.features = testing::random_matrix(10, 4, rng);
  g.adjacency.resize(10, 10);

  SUBCASE("ratio 0 is a no-op") {
    const auto m = apply_missing_mask(g, 0.0, 1);
    CHECK(m.mask.num_missing() == 0);
    CHECK(m.features == g.features);
  }
  SUBCASE("exact count of zero rows, others untouched") {
    const auto m = apply_missing_mask(g, 0.2, 5);
    CHECK(m.mask.num_missing() == 2);
    int zero_rows = 0;
    for (Index i = 0; i < 10; ++i) {
      if (m.mask.is_available(i)) {
        CHECK(m.features.row(i) == g.features.row(i));
      } else {
        CHECK(m.features.row(i).isZero(0.0));
        ++zero_rows;
      }
    }
    CHECK(zero_rows == 2);
  }
  SUBCASE("deterministic for identical seed") {
    const auto a = apply_missing_mask(g, 0.4, 7);
    const auto b = apply_missing_mask(g, 0.4, 7);
    CHECK(a.mask.available == b.mask.available);
    CHECK(a.features == b.features);
  }
  SUBCASE("ratio outside [0,1) rejected") {
    CHECK_THROWS_AS(apply_missing_mask(g, 1.0, 1), ArgumentError);
    CHECK_THROWS_AS(apply_missing_mask(g, -0.1, 1), ArgumentError);
  }
}

TEST_CASE("mask count rounds half up and holds for many sizes") {
  CHECK(missing_count(10, 0.25) == 3);  // 2.5 -> 3
  CHECK(missing_count(10, 0.24) == 2);
  for (Index n = 1; n < 60; n += 7) {
    for (double r : {0.0, 0.1, 0.33, 0.5, 0.9}) {
      const MissingMask m = make_missing_mask(n, r, 99);
      CHECK(m.num_missing() == static_cast<Index>(std::floor(n * r + 0.5)));
    }
  }
}

TEST_CASE("normalize_adjacency") {
  SUBCASE("2-node path is [[.5,.5],[.5,.5]]") {
    SparseMatrix g(2, 2);
    g.insert(0, 1) = 1.0;
    g.insert(1, 0) = 1.0;
    const Matrix a = Matrix(normalize_adjacency(g));
    CHECK(a.isApprox(Matrix::Constant(2, 2, 0.5), 1e-15));
  }
  SUBCASE("isolated node row is a unit vector") {
    SparseMatrix g(3, 3);
    g.insert(0, 1) = 1.0;
    g.insert(1, 0) = 1.0;
    const Matrix a = Matrix(normalize_adjacency(g));
    CHECK(a(2, 2) == 1.0);
    CHECK(a.row(2).sum() == 1.0);
  }
  SUBCASE("non-symmetric input rejected") {
    SparseMatrix g(2, 2);
    g.insert(0, 1) = 1.0;
    CHECK_THROWS_AS(normalize_adjacency(g), ConsistencyError);
  }
  SUBCASE("symmetric, spectrum in [-1,1], support is self plus neighbours") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
      const Index n = 12;
      SparseMatrix g(n, n);
      for (Index i = 0; i < n; ++i)
        for (Index j = i + 1; j < n; ++j)
          if (u(rng) < 0.3) {
            const double w = 0.5 + 2.0 * u(rng);
            g.insert(i, j) = w;
            g.insert(j, i) = w;
          }
      const Matrix a = Matrix(normalize_adjacency(g));
      CHECK((a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-15);
      Eigen::SelfAdjointEigenSolver<Matrix> es(a);
      CHECK(es.eigenvalues().minCoeff() >= -1.0 - 1e-12);
      CHECK(es.eigenvalues().maxCoeff() <= 1.0 + 1e-12);
      const Matrix dense_g = Matrix(g);
      for (Index i = 0; i < n; ++i)
        for (Index j = 0; j < n; ++j) CHECK((a(i, j) != 0.0) == (i == j || dense_g(i, j) != 0.0));
    }
  }
}

TEST_CASE("sigmoid_preprocess") {
  SparseMatrix binary(2, 2);
  binary.insert(0, 1) = 1.0;
  binary.insert(1, 0) = 1.0;
  CHECK(sigmoid_preprocess(binary) == Matrix(binary));

  SparseMatrix weighted(2, 2);
  weighted.insert(0, 1) = 2.0;
  weighted.insert(1, 0) = 2.0;
  const Matrix s = sigmoid_preprocess(weighted);
  CHECK(s(0, 0) == doctest::Approx(0.5));
  CHECK(s(0, 1) == doctest::Approx(0.8807970779778823).epsilon(1e-12));
}

TEST_CASE("generate_sbm") {
  SUBCASE("no inter-block edges gives >= 2 components") {
    SbmParams p;
    p.nodes = 40;
    p.classes = 2;
    p.p_in = 0.5;
    p.p_out = 0.0;
    CHECK(count_components(generate_sbm(p).adjacency) >= 2);
  }
  SUBCASE("edge counts within 4 sigma of binomial expectation") {
    SbmParams p;
    p.nodes = 300;
    p.classes = 3;
    p.p_in = 0.1;
    p.p_out = 0.01;
    p.seed = 5;
    const AttributeGraph g = generate_sbm(p);
    double intra = 0, inter = 0;
    for (Index k = 0; k < g.adjacency.outerSize(); ++k)
      for (SparseMatrix::InnerIterator it(g.adjacency, k); it; ++it) {
        if (it.row() >= it.col()) continue;
        ((*g.labels)[it.row()] == (*g.labels)[it.col()] ? intra : inter) += 1;
      }
    const double intra_pairs = 3.0 * 100 * 99 / 2;
    const double inter_pairs = 300.0 * 299 / 2 - intra_pairs;
    const double e_in = intra_pairs * 0.1, sd_in = std::sqrt(intra_pairs * 0.1 * 0.9);
    const double e_out = inter_pairs * 0.01, sd_out = std::sqrt(inter_pairs * 0.01 * 0.99);
    CHECK(std::abs(intra - e_in) <= 4 * sd_in);
    CHECK(std::abs(inter - e_out) <= 4 * sd_out);
  }
  SUBCASE("separation 10 makes raw attributes perfectly clusterable") {
    SbmParams p;
    p.separation = 10.0;
    p.seed = 2;
    const AttributeGraph g = generate_sbm(p);
    const Labels pred = kmeans_cluster(g.features, 3, 10, 1);
    CHECK(clustering_accuracy(pred, *g.labels) == 1.0);
  }
  SUBCASE("bit reproducible and validated") {
    SbmParams p;
    p.nodes = 90;
    p.seed = 8;
    const AttributeGraph a = generate_sbm(p);
    const AttributeGraph b = generate_sbm(p);
    CHECK(a.features == b.features);
    CHECK(Matrix(a.adjacency) == Matrix(b.adjacency));
    CHECK_NOTHROW(a.validate());
  }
  SUBCASE("invalid probabilities rejected") {
    SbmParams p;
    p.p_in = 0.1;
    p.p_out = 0.2;
    CHECK_THROWS_AS(generate_sbm(p), ArgumentError);
    p.p_out = 0.0;
    p.p_in = 1.5;
    CHECK_THROWS_AS(generate_sbm(p), ArgumentError);
  }
}

}  // TEST_SUITE
