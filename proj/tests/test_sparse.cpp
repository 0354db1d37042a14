#include <doctest.h>

#include <Eigen/Dense>
#include <filesystem>
#include <fstream>

#include "mdfsc/sparse.hpp"
#include "test_util.hpp"

using namespace mdfsc;
using namespace mdfsc::test;
namespace fs = std::filesystem;

namespace {

Eigen::MatrixXd random_normalized_dict(int d, int n, Rng& rng) {
  Eigen::MatrixXd D(d, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < d; ++i) D(i, j) = rng.normal();
    D.col(j).normalize();
  }
  return D;
}

double objective(const Eigen::MatrixXd& D, const Eigen::VectorXd& f,
                 const Eigen::VectorXd& w, double alpha) {
  return 0.5 * (f - D * w).squaredNorm() + alpha * w.lpNorm<1>();
}

// reference solver: proximal gradient (ISTA) with exact Lipschitz step
Eigen::VectorXd ista(const Eigen::MatrixXd& D, const Eigen::VectorXd& f,
                     double alpha, int iters) {
  const Eigen::MatrixXd G = D.transpose() * D;
  const Eigen::VectorXd b = D.transpose() * f;
  const double L =
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(G).eigenvalues().maxCoeff();
  const double step = 1.0 / std::max(L, 1e-12);
  Eigen::VectorXd w = Eigen::VectorXd::Zero(D.cols());
  for (int it = 0; it < iters; ++it) {
    Eigen::VectorXd z = w - step * (G * w - b);
    for (int j = 0; j < z.size(); ++j) {
      const double t = std::abs(z[j]) - alpha * step;
      z[j] = t > 0 ? (z[j] > 0 ? t : -t) : 0.0;
    }
    w = z;
  }
  return w;
}

// max KKT violation of a Lasso solution; 0 means exactly stationary
double kkt_violation(const Eigen::MatrixXd& D, const Eigen::VectorXd& f,
                     const SparseCode& code, double alpha) {
  const Eigen::VectorXd corr = D.transpose() * (f - D * code.coeffs);
  double worst = 0;
  for (int j = 0; j < corr.size(); ++j) {
    const double w = code.coeffs[j];
    if (w != 0.0)
      worst = std::max(worst, std::abs(corr[j] - (w > 0 ? alpha : -alpha)));
    else
      worst = std::max(worst, std::max(0.0, std::abs(corr[j]) - alpha));
  }
  return worst;
}

}  // namespace

TEST_CASE("lasso on a zero signal returns the zero code") {
  Rng rng(80);
  Eigen::MatrixXd D = random_normalized_dict(6, 4, rng);
  SparseCode code = lasso_lars(D, Eigen::VectorXd::Zero(6), 1.0);
  CHECK(code.support.empty());
  CHECK(code.coeffs.isZero(0));
}

TEST_CASE("lasso with orthonormal atoms soft-thresholds") {
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(2, 2);
  Eigen::VectorXd f(2);
  f << 3.0, 0.5;
  SparseCode code = lasso_lars(D, f, 1.0);
  CHECK(code.coeffs[0] == doctest::Approx(2.0).epsilon(1e-10));
  CHECK(code.coeffs[1] == 0.0);
  CHECK(code.support == std::vector<int>{0});
}

TEST_CASE("lasso at alpha 0 with orthonormal atoms is the projection") {
  Rng rng(81);
  // random orthonormal frame via QR
  Eigen::MatrixXd A(5, 5);
  for (int i = 0; i < 25; ++i) A(i / 5, i % 5) = rng.normal();
  Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ();
  Eigen::MatrixXd D = Q.leftCols(4);
  Eigen::VectorXd f(5);
  for (int i = 0; i < 5; ++i) f[i] = rng.normal();
  SparseCode code = lasso_lars(D, f, 0.0);
  Eigen::VectorXd want = D.transpose() * f;
  CHECK((code.coeffs - want).lpNorm<Eigen::Infinity>() < 1e-9);
}

TEST_CASE("lasso objective never exceeds the ISTA reference") {
  Rng rng(82);
  for (int trial = 0; trial < 20; ++trial) {
    const int d = 4 + static_cast<int>(rng.uniform_int(0, 8));
    const int n = 3 + static_cast<int>(rng.uniform_int(0, 9));
    Eigen::MatrixXd D = random_normalized_dict(d, n, rng);
    Eigen::VectorXd f(d);
    for (int i = 0; i < d; ++i) f[i] = rng.normal();
    const double alpha = trial % 3 == 0 ? 0.1 : (trial % 3 == 1 ? 1.0 : 5.0);
    SparseCode code = lasso_lars(D, f, alpha);
    Eigen::VectorXd ref = ista(D, f, alpha, 20000);
    CHECK(objective(D, f, code.coeffs, alpha) <=
          objective(D, f, ref, alpha) + 1e-8);
  }
}

TEST_CASE("lasso satisfies the KKT conditions on random problems") {
  Rng rng(83);
  int solved = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int d = 2 + static_cast<int>(rng.uniform_int(0, 14));
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 22));
    Eigen::MatrixXd D = random_normalized_dict(d, n, rng);
    Eigen::VectorXd f(d);
    for (int i = 0; i < d; ++i) f[i] = rng.normal() * 2.0;
    const double alpha = trial % 3 == 0 ? 0.1 : (trial % 3 == 1 ? 1.0 : 5.0);
    SparseCode code = lasso_lars(D, f, alpha);
    CHECK(kkt_violation(D, f, code, alpha) <= 1e-6);
    ++solved;
  }
  CHECK(solved >= 100);
}

TEST_CASE("lasso respects the nonzero cap") {
  Rng rng(84);
  Eigen::MatrixXd D = random_normalized_dict(8, 12, rng);
  Eigen::VectorXd f(8);
  for (int i = 0; i < 8; ++i) f[i] = rng.normal() * 3.0;
  SparseCode code = lasso_lars(D, f, 0.01, /*max_nonzeros=*/3);
  CHECK(code.support.size() <= 3);
}

TEST_CASE("residual trivial cases") {
  Rng rng(85);
  Dictionary D;
  D.atoms = random_normalized_dict(5, 3, rng);
  Eigen::VectorXd f(5);
  for (int i = 0; i < 5; ++i) f[i] = rng.normal();

  SparseCode zero;
  zero.coeffs = Eigen::VectorXd::Zero(3);
  CHECK(residual(D, f, zero) == doctest::Approx(0.5 * f.squaredNorm()));

  // f exactly in the span of atom 0
  Eigen::VectorXd f2 = 1.7 * D.atoms.col(0);
  SparseCode exact;
  exact.coeffs = Eigen::VectorXd::Zero(3);
  exact.coeffs[0] = 1.7;
  exact.support = {0};
  CHECK(residual(D, f2, exact) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("dictionary learning recovers a single direction") {
  Rng rng(86);
  Eigen::VectorXd dir(6);
  for (int i = 0; i < 6; ++i) dir[i] = rng.normal();
  dir.normalize();
  Eigen::MatrixXf F(6, 40);
  for (int j = 0; j < 40; ++j) {
    const double scale = 1.0 + rng.uniform(0, 2);
    F.col(j) = (scale * dir).cast<float>();
  }
  DictLearnConfig cfg;
  cfg.n_atoms = 1;
  cfg.alpha = 0.01;
  auto [D, rep] = dict_learn(F, cfg, rng);
  CHECK(std::abs(D.atoms.col(0).dot(dir)) >= 0.999);
}

TEST_CASE("dictionary learning separates two orthogonal directions") {
  Rng rng(87);
  Eigen::MatrixXd A(8, 8);
  for (int i = 0; i < 64; ++i) A(i / 8, i % 8) = rng.normal();
  Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ();
  Eigen::VectorXd u = Q.col(0), v = Q.col(1);
  Eigen::MatrixXf F(8, 60);
  for (int j = 0; j < 60; ++j) {
    const Eigen::VectorXd& base = j % 2 == 0 ? u : v;
    F.col(j) = ((1.0 + rng.uniform(0, 1)) * base).cast<float>();
  }
  DictLearnConfig cfg;
  cfg.n_atoms = 2;
  cfg.alpha = 0.01;
  auto [D, rep] = dict_learn(F, cfg, rng);
  D.validate_norms();

  // each true direction is matched by some atom
  for (const Eigen::VectorXd* t : {&u, &v}) {
    double best = 0;
    for (int j = 0; j < 2; ++j)
      best = std::max(best, std::abs(D.atoms.col(j).dot(*t)));
    CHECK(best >= 0.99);
  }
}

TEST_CASE("dictionary learning objective trace is monotone non-increasing") {
  Rng rng(88);
  Eigen::MatrixXf F(10, 80);
  for (int j = 0; j < 80; ++j)
    for (int i = 0; i < 10; ++i) F(i, j) = static_cast<float>(rng.normal());
  DictLearnConfig cfg;
  cfg.n_atoms = 6;
  cfg.alpha = 0.5;
  cfg.max_outer = 10;
  auto [D, rep] = dict_learn(F, cfg, rng);
  REQUIRE(!rep.objective_trace.empty());
  for (std::size_t i = 1; i < rep.objective_trace.size(); ++i)
    CHECK(rep.objective_trace[i] <= rep.objective_trace[i - 1] + 1e-9);
  CHECK(D.objective_trace == rep.objective_trace);
}

TEST_CASE("dictionary learning flags and rejects edge inputs") {
  Rng rng(89);
  Eigen::MatrixXf zero = Eigen::MatrixXf::Zero(5, 10);
  DictLearnConfig cfg;
  cfg.n_atoms = 3;
  CHECK_THROWS_AS(dict_learn(zero, cfg, rng), DataError);

  Eigen::MatrixXf small(5, 2);
  for (int i = 0; i < 10; ++i) small(i / 2, i % 2) = static_cast<float>(rng.normal());
  DictLearnConfig cfg2;
  cfg2.n_atoms = 4;  // more atoms than columns
  cfg2.alpha = 0.0;
  cfg2.max_outer = 2;
  auto [D, rep] = dict_learn(small, cfg2, rng);
  CHECK(rep.underdetermined);
}

TEST_CASE("l1 norm of the lasso solution is non-increasing in alpha") {
  Rng rng(90);
  Eigen::MatrixXd D = random_normalized_dict(8, 10, rng);
  Eigen::VectorXd f(8);
  for (int i = 0; i < 8; ++i) f[i] = rng.normal() * 2.0;
  double prev = std::numeric_limits<double>::infinity();
  for (double alpha : {0.01, 0.1, 0.5, 1.0, 2.0, 5.0}) {
    SparseCode code = lasso_lars(D, f, alpha);
    const double l1 = code.coeffs.lpNorm<1>();
    CHECK(l1 <= prev + 1e-9);
    prev = l1;
  }
}

TEST_CASE("dictionary persistence round-trip and tamper detection") {
  const fs::path dir = fs::temp_directory_path() / "mdfsc_dict_test";
  fs::create_directories(dir);
  Rng rng(91);
  Dictionary D;
  D.atoms = random_normalized_dict(7, 4, rng);
  D.alpha_fit = 0.75;
  D.seed = 123;
  D.objective_trace = {3.0, 2.0, 1.5};

  const std::string path = (dir / "d.bin").string();
  save_dictionary(D, path);
  Dictionary back = load_dictionary(path);
  CHECK(back.d() == 7);
  CHECK(back.n() == 4);
  CHECK(back.alpha_fit == 0.75);
  CHECK(back.seed == 123);
  CHECK(back.objective_trace == D.objective_trace);
  // stored as f32; compare at that precision
  CHECK((back.atoms.cast<float>() - D.atoms.cast<float>()).norm() == 0.0f);

  std::fstream fsq(path, std::ios::in | std::ios::out | std::ios::binary);
  fsq.seekp(40);
  char byte = 0;
  fsq.seekg(40);
  fsq.read(&byte, 1);
  byte = static_cast<char>(byte ^ 0x10);
  fsq.seekp(40);
  fsq.write(&byte, 1);
  fsq.close();
  CHECK_THROWS_AS(load_dictionary(path), DataError);
}
