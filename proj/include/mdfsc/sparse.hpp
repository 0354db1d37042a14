#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "mdfsc/rng.hpp"

namespace mdfsc {

// Learned dictionary with unit-norm atoms (columns).
struct Dictionary {
  Eigen::MatrixXd atoms;  // d x n
  double alpha_fit = 1.0;
  std::uint64_t seed = 0;
  std::vector<double> objective_trace;

  int d() const { return static_cast<int>(atoms.rows()); }
  int n() const { return static_cast<int>(atoms.cols()); }
  void validate_norms(double tol = 1e-4) const;
};

struct SparseCode {
  Eigen::VectorXd coeffs;    // length n; exactly 0 off support
  std::vector<int> support;  // indices of nonzeros
  bool degenerate = false;   // a rank-deficient entering atom was dropped
};

// Lasso solved along the LARS homotopy path with the Lasso modification
// (sign-crossing atoms are dropped). Minimizes 1/2 ||f - D w||^2 + alpha ||w||_1.
// Gram form: G = D^T D, b = D^T f. max_nonzeros < 0 means no cap.
SparseCode lasso_lars_gram(const Eigen::MatrixXd& G, const Eigen::VectorXd& b,
                           double alpha, int max_nonzeros = -1,
                           double tol = 1e-7);

SparseCode lasso_lars(const Eigen::MatrixXd& D, const Eigen::VectorXd& f,
                      double alpha, int max_nonzeros = -1, double tol = 1e-7);

// 1/2 ||f - D w||^2 (data-fit term only).
double residual(const Dictionary& D, const Eigen::VectorXd& f,
                const SparseCode& w);

// Full objective over a column set.
double sparse_objective(const Eigen::MatrixXd& D, const Eigen::MatrixXd& F,
                        const Eigen::MatrixXd& W, double alpha);

struct DictLearnConfig {
  int n_atoms = 50;
  double alpha = 1.0;
  int max_outer = 30;
  double tol = 1e-4;  // relative objective decrease
};

struct DictFitReport {
  std::vector<double> objective_trace;  // one entry per outer iteration
  int outer_iterations = 0;
  bool underdetermined = false;  // n > m with alpha == 0
  int degeneracy_count = 0;
  int dead_atom_reseeds = 0;
};

// Alternating minimization: exact Lasso per column, then atom-wise block
// coordinate descent with renormalization. Dead atoms are reseeded from the
// worst-reconstructed column.
std::pair<Dictionary, DictFitReport> dict_learn(const Eigen::MatrixXf& F,
                                                const DictLearnConfig& cfg,
                                                Rng& rng);

void save_dictionary(const Dictionary& D, const std::string& path);
Dictionary load_dictionary(const std::string& path);

}  // namespace mdfsc
