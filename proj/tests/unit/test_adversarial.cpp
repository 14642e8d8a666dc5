#include <doctest.h>

#include "cgir/adversarial.hpp"
#include "support/oracles.hpp"

using namespace cgir;

namespace {

MissingMask mask_from(std::initializer_list<int> bits) {
  MissingMask m;
  for (int b : bits) m.available.push_back(static_cast<std::uint8_t>(b));
  return m;
}

Matrix row_stochastic(Index rows, Index cols, std::mt19937_64& rng) {
  return softmax_rows(testing::random_matrix(rows, cols, rng));
}

}  // namespace

TEST_SUITE("adversarial") {

TEST_CASE("discriminate") {
  SUBCASE("zero output weights give uniform rows") {
    std::mt19937_64 rng(1);
    const Matrix f = testing::random_matrix(5, 3, rng);
    const DiscriminatorOutput out = discriminate(f, {testing::random_matrix(3, 4, rng), Matrix::Zero(4, 4)});
    CHECK((out.probs.array() - 0.25).abs().maxCoeff() <= 1e-15);
    CHECK(out.fake_column() == 3);
  }
  SUBCASE("a +20 logit dominates and rows sum to one") {
    Matrix f = Matrix::Ones(1, 1);
    Matrix w1(1, 3);
    w1 << 20, 0, 0;
    const DiscriminatorOutput out = discriminate(f, {Matrix::Ones(1, 1), w1});
    CHECK(out.probs(0, 0) == doctest::Approx(std::exp(20.0) / (std::exp(20.0) + 2.0)).epsilon(1e-14));
    CHECK(out.probs(0, 0) > 1.0 - 1e-8);
    CHECK(std::abs(out.probs.sum() - 1.0) <= 1e-15);
  }
  SUBCASE("wrong layer count rejected") {
    CHECK_THROWS_AS(discriminate(Matrix::Ones(1, 1), {Matrix::Ones(1, 2)}), ConfigError);
  }
}

TEST_CASE("extend_assignment appends a zero fake column") {
  Matrix p(2, 2);
  p << 0.3, 0.7, 1, 0;
  const Matrix e = extend_assignment(p);
  CHECK(e.cols() == 3);
  CHECK(e.leftCols(2) == p);
  CHECK(e.col(2).isZero(0.0));
}

TEST_CASE("cross_entropy_row") {
  RowVector t(2), q(2);
  t << 1, 0;
  q << 1, 0;
  CHECK(cross_entropy_row(t, q) == 0.0);
  t << 0.5, 0.5;
  q << 0.5, 0.5;
  CHECK(cross_entropy_row(t, q) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  t << 1, 0;
  q << 0, 1;
  // Clamped: -log(1e-12).
  CHECK(cross_entropy_row(t, q) == doctest::Approx(-std::log(1e-12)).epsilon(1e-14));
  CHECK(std::isfinite(cross_entropy_row(t, q)));
}

TEST_CASE("L_ad1 against a uniform discriminator is log(m+1)") {
  std::mt19937_64 rng(3);
  for (Index m : {1, 3, 8}) {
    const Matrix ext = extend_assignment(row_stochastic(6, m, rng));
    DiscriminatorOutput d;
    d.probs = Matrix::Constant(6, m + 1, 1.0 / static_cast<double>(m + 1));
    CHECK(generator_alignment_loss(ext, d) == doctest::Approx(std::log(static_cast<double>(m + 1))).epsilon(1e-13));
  }
}

TEST_CASE("L_ad1 is zero exactly when R matches a one-hot P_hat") {
  Matrix p(2, 2);
  p << 1, 0, 0, 1;
  DiscriminatorOutput d;
  d.probs = extend_assignment(p);
  CHECK(generator_alignment_loss(extend_assignment(p), d) == 0.0);
}

TEST_CASE("L_ad2 group averaging") {
  Matrix p(3, 2);
  p << 1, 0, 0, 1, 0.5, 0.5;
  const Matrix ext = extend_assignment(p);
  DiscriminatorOutput d;
  d.probs = Matrix::Constant(3, 3, 1.0 / 3.0);

  SUBCASE("no missing rows: only the available term") {
    // Each available row: CE = log 3.
    CHECK(discriminator_loss(ext, d, mask_from({1, 1, 1})) == doctest::Approx(std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("both groups averaged separately then summed") {
    // Missing row 2 pushed to fake: -log(1/3); available rows: log 3 each.
    CHECK(discriminator_loss(ext, d, mask_from({1, 1, 0})) == doctest::Approx(2.0 * std::log(3.0)).epsilon(1e-14));
  }
  SUBCASE("perfect discriminator gives zero") {
    Matrix r(3, 3);
    r << 1, 0, 0, 0, 1, 0, 0, 0, 1;
    d.probs = r;
    CHECK(discriminator_loss(extend_assignment(p.topRows(3)), d, mask_from({1, 1, 0})) == 0.0);
  }
}

TEST_CASE("adversarial gradients pass finite differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(50 + seed);
    const Index n = 8, d = 3, m = 3;
    const Matrix ext = extend_assignment(row_stochastic(n, m, rng));
    const MissingMask mask = make_missing_mask(n, 0.4, seed);
    const std::vector<Matrix> w = {testing::random_matrix(d, 6, rng), testing::random_matrix(6, m + 1, rng)};
    const Matrix f0 = testing::random_matrix(n, d, rng);

    Objective l_ad1 = [&](std::span<const Matrix> x, std::vector<Matrix>* grads) {
      const DiscriminatorOutput out = discriminate(x[0], w);
      Matrix gp;
      const double l = generator_alignment_loss(ext, out, grads ? &gp : nullptr);
      if (grads) *grads = {discriminator_backward(x[0], w, out, gp).input};
      return l;
    };
    Objective l_ad2 = [&](std::span<const Matrix> x, std::vector<Matrix>* grads) {
      const std::vector<Matrix> ws(x.begin(), x.end());
      const DiscriminatorOutput out = discriminate(f0, ws);
      Matrix gp;
      const double l = discriminator_loss(ext, out, mask, grads ? &gp : nullptr);
      if (grads) *grads = discriminator_backward(f0, ws, out, gp).weights;
      return l;
    };
    CAPTURE(seed);
    CHECK(check_gradients(l_ad1, std::vector<Matrix>{f0}).worst() <= 1e-4);
    CHECK(check_gradients(l_ad2, w).worst() <= 1e-4);
  }
}

}  // TEST_SUITE
