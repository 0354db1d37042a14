#include "mdfsc/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>

#include "mdfsc/container.hpp"
#include "mdfsc/errors.hpp"

namespace mdfsc {

void Dictionary::validate_norms(double tol) const {
  for (int j = 0; j < n(); ++j) {
    const double nrm = atoms.col(j).norm();
    if (std::abs(nrm - 1.0) > tol)
      throw DataError("dictionary atom " + std::to_string(j) +
                      " norm deviates from 1 by " +
                      std::to_string(std::abs(nrm - 1.0)));
  }
}

SparseCode lasso_lars_gram(const Eigen::MatrixXd& G, const Eigen::VectorXd& b,
                           double alpha, int max_nonzeros, double tol) {
  const int n = static_cast<int>(b.size());
  require(G.rows() == n && G.cols() == n, "lasso_lars: Gram dims mismatch");
  require(alpha >= 0.0, "lasso_lars: alpha must be >= 0");
  require(b.allFinite() && G.allFinite(), "lasso_lars: non-finite inputs");
  if (max_nonzeros < 0 || max_nonzeros > n) max_nonzeros = n;

  SparseCode out;
  out.coeffs = Eigen::VectorXd::Zero(n);
  if (n == 0) return out;

  double lambda = b.cwiseAbs().maxCoeff();
  if (lambda <= alpha + tol) return out;

  std::vector<int> active;
  std::vector<double> sign;
  std::vector<bool> in_active(n, false), banned(n, false);

  // first atom: largest absolute correlation, smallest index on ties
  {
    int j0 = 0;
    double best = -1;
    for (int j = 0; j < n; ++j)
      if (std::abs(b[j]) > best + tol) {
        best = std::abs(b[j]);
        j0 = j;
      }
    active.push_back(j0);
    sign.push_back(b[j0] >= 0 ? 1.0 : -1.0);
    in_active[j0] = true;
  }

  Eigen::VectorXd w_active;
  const int max_events = 8 * n + 16;
  for (int event = 0; event < max_events; ++event) {
    const int k = static_cast<int>(active.size());
    Eigen::MatrixXd Gaa(k, k);
    Eigen::VectorXd ba(k), sa(k);
    for (int i = 0; i < k; ++i) {
      ba[i] = b[active[i]];
      sa[i] = sign[i];
      for (int j = 0; j < k; ++j) Gaa(i, j) = G(active[i], active[j]);
    }
    Eigen::FullPivLU<Eigen::MatrixXd> lu(Gaa);
    lu.setThreshold(1e-10);
    if (lu.rank() < k) {
      // rank-deficient active set: drop the atom that just entered
      const int j_bad = active.back();
      in_active[j_bad] = false;
      banned[j_bad] = true;
      active.pop_back();
      sign.pop_back();
      out.degenerate = true;
      if (active.empty()) break;
      continue;
    }
    // w_A(l) = w0 - l * u along the current segment
    const Eigen::VectorXd w0 = lu.solve(ba);
    const Eigen::VectorXd u = lu.solve(sa);

    // next event while decreasing l from lambda toward alpha
    double next_l = alpha;
    int enter_j = -1, drop_i = -1;
    double enter_sign = 0;

    if (k < max_nonzeros) {
      for (int j = 0; j < n; ++j) {
        if (in_active[j] || banned[j]) continue;
        double p = b[j], q = 0;
        for (int i = 0; i < k; ++i) {
          p -= G(j, active[i]) * w0[i];
          q += G(j, active[i]) * u[i];
        }
        // c_j(l) = p + l*q meets +l or -l
        const double cand[2] = {(1.0 - q) != 0 ? p / (1.0 - q) : -1.0,
                                (1.0 + q) != 0 ? -p / (1.0 + q) : -1.0};
        for (int t = 0; t < 2; ++t) {
          const double l = cand[t];
          if (l > next_l + tol && l < lambda - tol) {
            next_l = l;
            enter_j = j;
            enter_sign = t == 0 ? 1.0 : -1.0;
            drop_i = -1;
          }
        }
      }
    }
    for (int i = 0; i < k; ++i) {
      if (std::abs(u[i]) < 1e-14) continue;
      const double l = w0[i] / u[i];  // w_i(l) == 0
      if (l > next_l + tol && l < lambda - tol) {
        next_l = l;
        drop_i = i;
        enter_j = -1;
      }
    }

    if (enter_j < 0 && drop_i < 0) {
      // path reaches alpha on this segment
      w_active = w0 - alpha * u;
      break;
    }
    lambda = next_l;
    if (drop_i >= 0) {
      // Lasso modification: coefficient crossed zero, remove the atom
      in_active[active[drop_i]] = false;
      active.erase(active.begin() + drop_i);
      sign.erase(sign.begin() + drop_i);
      if (active.empty()) {
        w_active.resize(0);
        break;
      }
    } else {
      active.push_back(enter_j);
      sign.push_back(enter_sign);
      in_active[enter_j] = true;
      if (static_cast<int>(active.size()) >= max_nonzeros &&
          max_nonzeros < n) {
        // cap reached: report the solution at the entry breakpoint
        w_active = w0 - lambda * u;
        w_active.conservativeResize(active.size());
        w_active[active.size() - 1] = 0.0;
        break;
      }
    }
  }

  for (std::size_t i = 0; i < active.size(); ++i) {
    if (i < static_cast<std::size_t>(w_active.size()) &&
        std::abs(w_active[i]) > 0) {
      out.coeffs[active[i]] = w_active[i];
      out.support.push_back(active[i]);
    }
  }
  std::sort(out.support.begin(), out.support.end());
  return out;
}

SparseCode lasso_lars(const Eigen::MatrixXd& D, const Eigen::VectorXd& f,
                      double alpha, int max_nonzeros, double tol) {
  require(D.rows() == f.size(), "lasso_lars: dimension mismatch");
  require(f.allFinite() && D.allFinite(), "lasso_lars: non-finite inputs");
  return lasso_lars_gram(D.transpose() * D, D.transpose() * f, alpha,
                         max_nonzeros, tol);
}

double residual(const Dictionary& D, const Eigen::VectorXd& f,
                const SparseCode& w) {
  require(D.d() == f.size() && D.n() == w.coeffs.size(),
          "residual: dimension mismatch");
  return 0.5 * (f - D.atoms * w.coeffs).squaredNorm();
}

double sparse_objective(const Eigen::MatrixXd& D, const Eigen::MatrixXd& F,
                        const Eigen::MatrixXd& W, double alpha) {
  double obj = 0;
  for (Eigen::Index i = 0; i < F.cols(); ++i)
    obj += 0.5 * (F.col(i) - D * W.col(i)).squaredNorm() +
           alpha * W.col(i).lpNorm<1>();
  return obj;
}

std::pair<Dictionary, DictFitReport> dict_learn(const Eigen::MatrixXf& Ff,
                                                const DictLearnConfig& cfg,
                                                Rng& rng) {
  require(cfg.n_atoms >= 1, "dict_learn: n_atoms must be >= 1");
  require(Ff.cols() >= 1, "dict_learn: empty feature matrix");
  const Eigen::MatrixXd F = Ff.cast<double>();
  const int d = static_cast<int>(F.rows());
  const int m = static_cast<int>(F.cols());
  const int n = cfg.n_atoms;
  if (F.cwiseAbs().maxCoeff() == 0.0)
    throw DataError("dict_learn: all-zero feature matrix");

  DictFitReport report;
  report.underdetermined = (n > m && cfg.alpha == 0.0);

  // init atoms from distinct random data columns, fall back to random vectors
  Dictionary dict;
  dict.alpha_fit = cfg.alpha;
  dict.atoms.resize(d, n);
  {
    std::vector<int> order(m);
    for (int i = 0; i < m; ++i) order[i] = i;
    for (int i = m - 1; i > 0; --i)
      std::swap(order[i], order[rng.uniform_int(0, i)]);
    for (int j = 0; j < n; ++j) {
      Eigen::VectorXd v;
      if (j < m) v = F.col(order[j]);
      if (j >= m || v.norm() < 1e-12) {
        v.resize(d);
        for (int i = 0; i < d; ++i) v[i] = rng.normal();
      }
      dict.atoms.col(j) = v / v.norm();
    }
  }

  Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, m);
  double prev_obj = std::numeric_limits<double>::infinity();

  for (int outer = 0; outer < cfg.max_outer; ++outer) {
    // sparse step (exact per column)
    const Eigen::MatrixXd G = dict.atoms.transpose() * dict.atoms;
    const Eigen::MatrixXd B_corr = dict.atoms.transpose() * F;  // n x m
    for (int i = 0; i < m; ++i) {
      SparseCode code = lasso_lars_gram(G, B_corr.col(i), cfg.alpha);
      if (code.degenerate) ++report.degeneracy_count;
      W.col(i) = code.coeffs;
    }

    // dictionary step: atom-wise BCD on the quadratic surrogate
    const Eigen::MatrixXd A = W * W.transpose();  // n x n
    const Eigen::MatrixXd B = F * W.transpose();  // d x n
    std::vector<int> dead;
    for (int j = 0; j < n; ++j) {
      if (A(j, j) < 1e-12) {
        dead.push_back(j);
        continue;
      }
      const Eigen::VectorXd u =
          B.col(j) - dict.atoms * A.col(j) + A(j, j) * dict.atoms.col(j);
      const double nrm = u.norm();
      if (nrm > 1e-12) dict.atoms.col(j) = u / nrm;
    }
    // dead atoms carry zero coefficient rows; reseeding them leaves the
    // objective unchanged but gives the next sparse step a useful direction
    if (!dead.empty()) {
      Eigen::VectorXd errs(m);
      for (int i = 0; i < m; ++i)
        errs[i] = (F.col(i) - dict.atoms * W.col(i)).squaredNorm();
      for (int j : dead) {
        int worst = 0;
        errs.maxCoeff(&worst);
        Eigen::VectorXd v = F.col(worst);
        if (v.norm() < 1e-12) {
          v.resize(d);
          for (int i = 0; i < d; ++i) v[i] = rng.normal();
        }
        dict.atoms.col(j) = v / v.norm();
        errs[worst] = -1;  // don't pick the same column twice
        ++report.dead_atom_reseeds;
      }
    }

    const double obj = sparse_objective(dict.atoms, F, W, cfg.alpha);
    report.objective_trace.push_back(obj);
    report.outer_iterations = outer + 1;
    if (std::isfinite(prev_obj) &&
        prev_obj - obj <= cfg.tol * std::max(1.0, std::abs(prev_obj)))
      break;
    prev_obj = obj;
  }

  dict.objective_trace = report.objective_trace;
  return {std::move(dict), std::move(report)};
}

namespace {
constexpr const char* kMagic = "MDFSCD1";
constexpr int kFormatVersion = 1;
}  // namespace

void save_dictionary(const Dictionary& D, const std::string& path) {
  nlohmann::json manifest;
  manifest["format_version"] = kFormatVersion;
  manifest["d"] = D.d();
  manifest["n"] = D.n();
  manifest["alpha"] = D.alpha_fit;
  manifest["seed"] = D.seed;
  manifest["objective_trace"] = D.objective_trace;

  std::vector<std::uint8_t> payload(sizeof(float) * D.atoms.size());
  const Eigen::MatrixXf atoms32 = D.atoms.cast<float>();
  std::memcpy(payload.data(), atoms32.data(), payload.size());
  write_container(path, kMagic, manifest, payload);
}

Dictionary load_dictionary(const std::string& path) {
  Container c = read_container(path, kMagic);
  Dictionary D;
  try {
    if (c.manifest.at("format_version").get<int>() != kFormatVersion)
      throw DataError("dictionary format version mismatch: " + path);
    const int d = c.manifest.at("d").get<int>();
    const int n = c.manifest.at("n").get<int>();
    if (c.payload.size() != sizeof(float) * static_cast<std::size_t>(d) * n)
      throw DataError("dictionary payload size mismatch: " + path);
    Eigen::MatrixXf atoms32(d, n);
    std::memcpy(atoms32.data(), c.payload.data(), c.payload.size());
    D.atoms = atoms32.cast<double>();
    D.alpha_fit = c.manifest.at("alpha").get<double>();
    D.seed = c.manifest.at("seed").get<std::uint64_t>();
    D.objective_trace =
        c.manifest.at("objective_trace").get<std::vector<double>>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError("bad dictionary manifest in " + path + ": " + e.what());
  }
  D.validate_norms(1e-4);
  return D;
}

}  // namespace mdfsc
