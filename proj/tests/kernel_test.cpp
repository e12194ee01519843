#include <doctest.h>

#include <cmath>
#include <random>

#include <sgptd/kernel.hpp>

#include "support.hpp"

using namespace sgptd;
using sgptd::testing::random_query;

namespace {

// Direct transcription of the covariance formula, kept separate from the
// library implementation on purpose.
double reference_eval(const Vector& x, const Vector& y,
                      const KernelParams& p) {
  double acc = 0.0;
  for (Index d = 0; d < p.dim(); ++d)
    acc += std::exp(p.log_length_scales[d]) * (x[d] - y[d]) * (x[d] - y[d]);
  return std::exp(p.log_signal_variance) * std::exp(-0.5 * acc);
}

KernelParams sample_params(std::mt19937_64& rng, Index dim) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  KernelParams p;
  p.log_signal_variance = u(rng);
  p.log_length_scales.resize(dim);
  for (Index d = 0; d < dim; ++d) p.log_length_scales[d] = u(rng);
  return p;
}

}  // namespace

TEST_SUITE("kernel") {

TEST_CASE("matches the closed form and is symmetric") {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    const Index dim = 1 + static_cast<Index>(trial % 4);
    const KernelParams p = sample_params(rng, dim);
    const Vector x = random_query(rng, dim);
    const Vector y = random_query(rng, dim);
    CHECK(kernel_eval(x, y, p) ==
          doctest::Approx(reference_eval(x, y, p)).epsilon(1e-14));
    CHECK(kernel_eval(x, y, p) == doctest::Approx(kernel_eval(y, x, p)));
    CHECK(kernel_eval(x, x, p) ==
          doctest::Approx(p.signal_variance()).epsilon(1e-14));
  }
}

TEST_CASE("matrix and vector forms agree with pointwise evaluation") {
  std::mt19937_64 rng(11);
  const Index dim = 3;
  const KernelParams p = sample_params(rng, dim);
  Matrix a(5, dim), b(4, dim);
  for (Index i = 0; i < a.rows(); ++i) a.row(i) = random_query(rng, dim);
  for (Index i = 0; i < b.rows(); ++i) b.row(i) = random_query(rng, dim);

  const Matrix k = kernel_matrix(a, b, p);
  REQUIRE(k.rows() == 5);
  REQUIRE(k.cols() == 4);
  for (Index i = 0; i < a.rows(); ++i)
    for (Index j = 0; j < b.rows(); ++j)
      CHECK(k(i, j) == doctest::Approx(kernel_eval(a.row(i).transpose(),
                                                   b.row(j).transpose(), p)));

  const Vector x = random_query(rng, dim);
  const Vector kv = kernel_vector(a, x, p);
  for (Index i = 0; i < a.rows(); ++i)
    CHECK(kv[i] == doctest::Approx(kernel_eval(a.row(i).transpose(), x, p)));
}

TEST_CASE("self-covariance is positive semidefinite") {
  std::mt19937_64 rng(13);
  const Index dim = 2;
  const KernelParams p = sample_params(rng, dim);
  Matrix a(12, dim);
  for (Index i = 0; i < a.rows(); ++i) a.row(i) = random_query(rng, dim);
  Matrix k = kernel_matrix(a, a, p);
  CHECK((k - k.transpose()).cwiseAbs().maxCoeff() < 1e-14);
  Eigen::SelfAdjointEigenSolver<Matrix> eig(k);
  CHECK(eig.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("hyperparameter gradient matches finite differences") {
  std::mt19937_64 rng(17);
  const Index dim = 3;
  for (int trial = 0; trial < 20; ++trial) {
    KernelParams p = sample_params(rng, dim);
    const Vector x = random_query(rng, dim);
    const Vector y = random_query(rng, dim);
    const Vector grad = kernel_grad_params(x, y, p);
    REQUIRE(grad.size() == dim + 1);

    const double h = 1e-6;
    for (Index i = 0; i <= dim; ++i) {
      KernelParams pp = p;
      KernelParams pm = p;
      if (i == 0) {
        pp.log_signal_variance += h;
        pm.log_signal_variance -= h;
      } else {
        pp.log_length_scales[i - 1] += h;
        pm.log_length_scales[i - 1] -= h;
      }
      const double fd =
          (kernel_eval(x, y, pp) - kernel_eval(x, y, pm)) / (2.0 * h);
      CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("input gradient matches finite differences and is antisymmetric") {
  std::mt19937_64 rng(19);
  const Index dim = 2;
  const KernelParams p = sample_params(rng, dim);
  const Vector x = random_query(rng, dim);
  const Vector y = random_query(rng, dim);

  const double h = 1e-6;
  for (Index d = 0; d < dim; ++d) {
    Vector xp = x, xm = x;
    xp[d] += h;
    xm[d] -= h;
    const double fd = (kernel_eval(xp, y, p) - kernel_eval(xm, y, p)) / (2 * h);
    const double g1 = kernel_grad_input(x, y, p, KernelArg::First, d);
    CHECK(g1 == doctest::Approx(fd).epsilon(1e-6));
    CHECK(kernel_grad_input(x, y, p, KernelArg::Second, d) ==
          doctest::Approx(-g1));
  }
}

TEST_CASE("a constant padded dimension changes nothing") {
  std::mt19937_64 rng(23);
  KernelParams p2 = sample_params(rng, 2);
  KernelParams p3 = p2;
  p3.log_length_scales.conservativeResize(3);
  p3.log_length_scales[2] = 0.4;

  const Vector x2 = random_query(rng, 2);
  const Vector y2 = random_query(rng, 2);
  Vector x3(3), y3(3);
  x3 << x2, 7.5;
  y3 << y2, 7.5;

  CHECK(kernel_eval(x3, y3, p3) == doctest::Approx(kernel_eval(x2, y2, p2)));
  const Vector grad = kernel_grad_params(x3, y3, p3);
  CHECK(grad[3] == 0.0);  // length-scale gradient of the constant dimension
  CHECK(kernel_grad_input(x3, y3, p3, KernelArg::First, 2) == 0.0);
}

TEST_CASE("validation rejects non-finite settings") {
  KernelParams p = KernelParams::isotropic(2);
  CHECK_NOTHROW(p.validate());
  p.log_signal_variance = std::nan("");
  CHECK_THROWS_AS(p.validate(), InvalidInput);

  KernelParams q = KernelParams::isotropic(2);
  q.log_length_scales[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(q.validate(), InvalidInput);
}

TEST_CASE("isotropic constructor repeats one length scale") {
  const KernelParams p = KernelParams::isotropic(4, 0.3, -0.7);
  CHECK(p.dim() == 4);
  CHECK(p.log_signal_variance == 0.3);
  for (Index d = 0; d < 4; ++d) CHECK(p.log_length_scales[d] == -0.7);
}

}  // TEST_SUITE
