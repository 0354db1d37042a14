// Acceptance gate: one PASS/FAIL line per criterion, exit 0 iff all pass.

#include <Eigen/Dense>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "grad_suite.hpp"
#include "mdfsc/autoencoder.hpp"
#include "mdfsc/commands.hpp"
#include "mdfsc/container.hpp"
#include "mdfsc/features.hpp"
#include "mdfsc/metrics.hpp"
#include "mdfsc/rng.hpp"
#include "mdfsc/sparse.hpp"

using namespace mdfsc;
using namespace mdfsc::test;
namespace fs = std::filesystem;
using Clock = std::chrono::steady_clock;

namespace {

int g_failures = 0;

void report(const std::string& name, bool ok, const std::string& detail) {
  std::printf("%s %s (%s)\n", ok ? "PASS" : "FAIL", name.c_str(),
              detail.c_str());
  std::fflush(stdout);
  if (!ok) ++g_failures;
}

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

// ---------------------------------------------------------------- gradients

void criterion_gradients() {
  const auto t0 = Clock::now();
  const GradResult rd = run_grad_suite<double>(20, 2024, 1e-6);
  const GradResult rf = run_grad_suite<float>(20, 4048, 1e-2);
  const double elapsed = seconds_since(t0);
  const bool ok = rd.worst <= 1e-6 && rf.worst <= 1e-3 && elapsed < 60.0;
  report("gradient-checks", ok,
         "worst rel err " + fmt(rd.worst) + " f64 / " + fmt(rf.worst) +
             " f32 over 20 tensors per op, " + fmt(elapsed) + "s");
}

// ------------------------------------------------------------------- lasso

Eigen::MatrixXd random_dict(int d, int n, Rng& rng) {
  Eigen::MatrixXd D(d, n);
  for (int j = 0; j < n; ++j) {
    for (int i = 0; i < d; ++i) D(i, j) = rng.normal();
    D.col(j).normalize();
  }
  return D;
}

double lasso_objective(const Eigen::MatrixXd& D, const Eigen::VectorXd& f,
                       const Eigen::VectorXd& w, double alpha) {
  return 0.5 * (f - D * w).squaredNorm() + alpha * w.lpNorm<1>();
}

Eigen::VectorXd ista_reference(const Eigen::MatrixXd& D,
                               const Eigen::VectorXd& f, double alpha,
                               int iters) {
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

double kkt_violation(const Eigen::MatrixXd& D, const Eigen::VectorXd& f,
                     const Eigen::VectorXd& w, double alpha) {
  const Eigen::VectorXd corr = D.transpose() * (f - D * w);
  double worst = 0;
  for (int j = 0; j < corr.size(); ++j) {
    if (w[j] != 0.0)
      worst = std::max(worst, std::abs(corr[j] - (w[j] > 0 ? alpha : -alpha)));
    else
      worst = std::max(worst, std::max(0.0, std::abs(corr[j]) - alpha));
  }
  return worst;
}

void criterion_lasso() {
  const auto t0 = Clock::now();
  Rng rng(90210);
  const double alphas[3] = {0.1, 1.0, 5.0};
  double worst_kkt = 0, worst_gap = -1e30;
  int problems = 0;
  for (int trial = 0; trial < 120; ++trial) {
    const int d = 2 + static_cast<int>(rng.uniform_int(0, 14));
    const int n = 2 + static_cast<int>(rng.uniform_int(0, 22));
    Eigen::MatrixXd D = random_dict(d, n, rng);
    Eigen::VectorXd f(d);
    for (int i = 0; i < d; ++i) f[i] = 2.0 * rng.normal();
    const double alpha = alphas[trial % 3];
    const SparseCode code = lasso_lars(D, f, alpha);
    worst_kkt = std::max(worst_kkt, kkt_violation(D, f, code.coeffs, alpha));
    const Eigen::VectorXd ref = ista_reference(D, f, alpha, 20000);
    worst_gap = std::max(worst_gap,
                         lasso_objective(D, f, code.coeffs, alpha) -
                             lasso_objective(D, f, ref, alpha));
    ++problems;
  }
  const double elapsed = seconds_since(t0);
  const bool ok =
      problems >= 100 && worst_kkt <= 1e-6 && worst_gap <= 1e-8 && elapsed < 60.0;
  report("lasso-kkt-certificates", ok,
         std::to_string(problems) + " problems, worst KKT " + fmt(worst_kkt) +
             ", worst objective gap vs ISTA " + fmt(worst_gap) + ", " +
             fmt(elapsed) + "s");
}

// -------------------------------------------------------------- dictionary

void criterion_dictionary() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;

  {  // random data: unit norms and monotone objective
    Rng rng(555);
    Eigen::MatrixXf F(12, 120);
    for (int j = 0; j < 120; ++j)
      for (int i = 0; i < 12; ++i) F(i, j) = static_cast<float>(rng.normal());
    DictLearnConfig cfg;
    cfg.n_atoms = 8;
    cfg.alpha = 0.5;
    cfg.max_outer = 15;
    auto [D, rep] = dict_learn(F, cfg, rng);
    double norm_err = 0;
    for (int j = 0; j < D.n(); ++j)
      norm_err = std::max(norm_err, std::abs(D.atoms.col(j).norm() - 1.0));
    bool monotone = true;
    for (std::size_t i = 1; i < rep.objective_trace.size(); ++i)
      monotone = monotone &&
                 rep.objective_trace[i] <= rep.objective_trace[i - 1] + 1e-9;
    ok = ok && norm_err <= 1e-6 && monotone;
    detail = "atom norm err " + fmt(norm_err) +
             (monotone ? ", monotone trace" : ", NON-MONOTONE trace");
  }
  {  // planted single direction
    Rng rng(556);
    Eigen::VectorXd dir(6);
    for (int i = 0; i < 6; ++i) dir[i] = rng.normal();
    dir.normalize();
    Eigen::MatrixXf F(6, 40);
    for (int j = 0; j < 40; ++j)
      F.col(j) = ((1.0 + rng.uniform(0, 2)) * dir).cast<float>();
    DictLearnConfig cfg;
    cfg.n_atoms = 1;
    cfg.alpha = 0.01;
    auto [D, rep] = dict_learn(F, cfg, rng);
    const double cosine = std::abs(D.atoms.col(0).dot(dir));
    ok = ok && cosine >= 0.99;
    detail += ", 1-dir cos " + fmt(cosine);
  }
  {  // planted orthogonal pair
    Rng rng(557);
    Eigen::MatrixXd A(8, 8);
    for (int i = 0; i < 64; ++i) A(i / 8, i % 8) = rng.normal();
    Eigen::MatrixXd Q = Eigen::HouseholderQR<Eigen::MatrixXd>(A).householderQ();
    Eigen::MatrixXf F(8, 60);
    for (int j = 0; j < 60; ++j)
      F.col(j) = ((1.0 + rng.uniform(0, 1)) * Q.col(j % 2)).cast<float>();
    DictLearnConfig cfg;
    cfg.n_atoms = 2;
    cfg.alpha = 0.01;
    auto [D, rep] = dict_learn(F, cfg, rng);
    double worst_cos = 1.0;
    for (int t = 0; t < 2; ++t) {
      double best = 0;
      for (int j = 0; j < 2; ++j)
        best = std::max(best, std::abs(D.atoms.col(j).dot(Q.col(t))));
      worst_cos = std::min(worst_cos, best);
    }
    ok = ok && worst_cos >= 0.99;
    detail += ", 2-dir worst cos " + fmt(worst_cos);
  }
  const double elapsed = seconds_since(t0);
  ok = ok && elapsed < 120.0;
  report("dictionary-learning", ok, detail + ", " + fmt(elapsed) + "s");
}

// ----------------------------------------------------------------- metrics

double auc_oracle(const std::vector<ScoredLabel>& items) {
  double num = 0;
  long pairs = 0;
  for (const auto& p : items) {
    if (p.label != 1) continue;
    for (const auto& n : items) {
      if (n.label != 0) continue;
      ++pairs;
      if (p.score > n.score) num += 1.0;
      else if (p.score == n.score) num += 0.5;
    }
  }
  return num / static_cast<double>(pairs);
}

double ap_oracle(std::vector<ScoredLabel> items) {
  std::stable_sort(items.begin(), items.end(),
                   [](const ScoredLabel& a, const ScoredLabel& b) {
                     return a.score > b.score;
                   });
  int total_pos = 0;
  for (const auto& it : items) total_pos += it.label;
  double ap = 0;
  int tp = 0, seen = 0, prev_tp = 0;
  std::size_t i = 0;
  while (i < items.size()) {
    std::size_t j = i;
    while (j < items.size() && items[j].score == items[i].score) {
      tp += items[j].label;
      ++seen;
      ++j;
    }
    ap += (static_cast<double>(tp) / seen) *
          (static_cast<double>(tp - prev_tp) / total_pos);
    prev_tp = tp;
    i = j;
  }
  return ap;
}

void criterion_metrics() {
  const auto t0 = Clock::now();
  Rng rng(31337);
  double worst = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const int count = 3 + static_cast<int>(rng.uniform_int(0, 60));
    std::vector<ScoredLabel> items;
    bool has_pos = false, has_neg = false;
    for (int i = 0; i < count; ++i) {
      const int label = rng.uniform() < 0.4 ? 1 : 0;
      // coarse quantization every third set makes ties frequent
      double score = rng.uniform();
      if (trial % 3 == 0) score = std::floor(score * 5) / 5.0;
      items.push_back({score, label});
      has_pos = has_pos || label == 1;
      has_neg = has_neg || label == 0;
    }
    if (!has_pos) items[0].label = 1;
    if (!has_neg) items[1].label = 0;
    worst = std::max(worst, std::abs(roc_auc(items) - auc_oracle(items)));
    worst =
        std::max(worst, std::abs(average_precision(items) - ap_oracle(items)));
  }
  const std::vector<ScoredLabel> wk1 = {
      {0.8, 1}, {0.35, 1}, {0.4, 0}, {0.1, 0}};
  const std::vector<ScoredLabel> wk2 = {{0.9, 1}, {0.8, 0}, {0.7, 1}};
  const bool worked = roc_auc(wk1) == 0.75 &&
                      std::abs(average_precision(wk2) - 5.0 / 6.0) <= 1e-15;
  const bool ok = worst <= 1e-12 && worked;
  report("metrics-oracles", ok,
         "1000 random sets, worst |delta| " + fmt(worst) +
             (worked ? ", worked examples exact" : ", worked examples WRONG") +
             ", " + fmt(seconds_since(t0)) + "s");
}

// ---------------------------------------------------------- feature dims

void criterion_feature_dims() {
  ArchSpec desk;
  ArchSpec paper;
  paper.stage_widths = ArchSpec::paper_widths();
  const int d_desk = feature_dim(desk, 16);
  const int d_paper = feature_dim(paper, 16);
  report("feature-dimensions", d_desk == 448 && d_paper == 3584,
         "desk d=" + std::to_string(d_desk) +
             ", full-width d=" + std::to_string(d_paper));
}

// ------------------------------------------------------------ e2e helpers

double read_auc(const std::string& path) {
  std::ifstream is(path);
  nlohmann::json j;
  is >> j;
  return j.at("auc").get<double>();
}

RunConfig e2e_config(const fs::path& dir) {
  RunConfig cfg;
  cfg.seed = 42;
  cfg.image_size = 128;
  cfg.ae.lr = 1e-3;
  cfg.features.budget_per_image = 200;
  cfg.paths.out_dir = dir.string();
  cfg.paths.train_manifest = (dir / "train.tsv").string();
  cfg.paths.test_manifest = (dir / "test.tsv").string();
  cfg.paths.checkpoint = (dir / "model.ckpt").string();
  cfg.paths.dictionary = (dir / "dict.bin").string();
  cfg.paths.reports = (dir / "reports.jsonl").string();
  cfg.paths.metrics_out = (dir / "metrics.json").string();
  return cfg;
}

void criterion_e2e() {
  const auto t0 = Clock::now();
  const fs::path dir = fs::temp_directory_path() / "mdfsc_acceptance_e2e";
  fs::remove_all(dir);
  fs::create_directories(dir);
  RunConfig cfg = e2e_config(dir);

  bool ok = true;
  std::string detail;
  try {
    cmd_synth(cfg);
    cmd_train_ae(cfg);
    cmd_fit_dict(cfg);
    cmd_score(cfg);
    cmd_eval(cfg);
    const double auc = read_auc(cfg.paths.metrics_out);

    // reconstruction-loss baseline: same data, fully convolutional model
    RunConfig base = cfg;
    base.ae.linear_head = false;
    base.scoring.scorer = "recon";
    base.paths.checkpoint = (dir / "recon.ckpt").string();
    base.paths.reports = (dir / "recon.jsonl").string();
    base.paths.metrics_out = (dir / "recon_metrics.json").string();
    cmd_train_ae(base);
    cmd_score(base);
    cmd_eval(base);
    const double base_auc = read_auc(base.paths.metrics_out);

    ok = auc >= 0.90 && auc > base_auc;
    detail = "AUC " + fmt(auc) + " vs recon baseline " + fmt(base_auc);
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  report("e2e-benchmark", ok, detail + ", " + fmt(seconds_since(t0)) + "s");
}

// ------------------------------------------------------------ determinism

void criterion_determinism() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail = "synth/train-ae/fit-dict digests + score bytes";
  try {
    std::vector<std::string> digests[2];
    std::vector<char> reports[2];
    for (int run = 0; run < 2; ++run) {
      const fs::path dir = fs::temp_directory_path() /
                           ("mdfsc_acceptance_det" + std::to_string(run));
      fs::remove_all(dir);
      fs::create_directories(dir);
      RunConfig cfg = e2e_config(dir);
      cfg.seed = 7;
      cfg.image_size = 64;
      cfg.synth.n_train = 12;
      cfg.synth.n_test_normal = 3;
      cfg.synth.n_test_anom = 3;
      cfg.ae.epochs = 3;
      cfg.features.budget_per_image = 8;
      cfg.sparse.n_atoms = 10;
      cfg.sparse.max_outer = 5;
      cmd_synth(cfg);
      cmd_train_ae(cfg);
      cmd_fit_dict(cfg);
      cmd_score(cfg);
      digests[run] = {file_sha256((dir / "train/train_0000.pgm").string()),
                      file_sha256((dir / "train.tsv").string()),
                      file_sha256((dir / "test.tsv").string()),
                      file_sha256(cfg.paths.checkpoint),
                      file_sha256(cfg.paths.dictionary)};
      std::ifstream rs(cfg.paths.reports, std::ios::binary);
      reports[run].assign(std::istreambuf_iterator<char>(rs), {});
    }
    ok = digests[0] == digests[1] && !reports[0].empty() &&
         reports[0] == reports[1];
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  report("determinism", ok, detail + ", " + fmt(seconds_since(t0)) + "s");
}

// ------------------------------------------------------------ persistence

void criterion_persistence() {
  const auto t0 = Clock::now();
  bool ok = true;
  std::string detail;
  try {
    const fs::path dir = fs::temp_directory_path() / "mdfsc_acceptance_persist";
    fs::remove_all(dir);
    fs::create_directories(dir);

    ArchSpec a;
    a.stage_widths = {4, 8, 8, 8, 8};
    Rng rng(99);
    Autoencoder model = build_autoencoder<float>(a, rng);
    model.norm.mean = {0.4};
    model.norm.std_dev = {0.2};
    const std::string ck1 = (dir / "m1.ckpt").string();
    const std::string ck2 = (dir / "m2.ckpt").string();
    save_autoencoder(model, ck1);
    save_autoencoder(load_autoencoder(ck1), ck2);
    const bool ckpt_rt = file_sha256(ck1) == file_sha256(ck2);

    Dictionary D;
    D.atoms = random_dict(20, 6, rng);
    D.alpha_fit = 1.0;
    const std::string d1 = (dir / "d1.bin").string();
    const std::string d2 = (dir / "d2.bin").string();
    save_dictionary(D, d1);
    save_dictionary(load_dictionary(d1), d2);
    const bool dict_rt = file_sha256(d1) == file_sha256(d2);

    // single-byte corruption at random offsets must always be caught
    std::ifstream in(ck1, std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    int caught = 0;
    const int attempts = 40;
    for (int t = 0; t < attempts; ++t) {
      auto corrupted = bytes;
      const std::size_t pos = static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(bytes.size()) - 1));
      corrupted[pos] = static_cast<char>(
          corrupted[pos] ^ (1 << rng.uniform_int(0, 7)));
      const std::string cp = (dir / "corrupt.ckpt").string();
      {
        std::ofstream os(cp, std::ios::binary | std::ios::trunc);
        os.write(corrupted.data(),
                 static_cast<std::streamsize>(corrupted.size()));
      }
      try {
        load_autoencoder(cp);
      } catch (const DataError&) {
        ++caught;
      }
    }
    ok = ckpt_rt && dict_rt && caught == attempts;
    detail = std::string("checkpoint round-trip ") + (ckpt_rt ? "ok" : "BAD") +
             ", dictionary round-trip " + (dict_rt ? "ok" : "BAD") + ", " +
             std::to_string(caught) + "/" + std::to_string(attempts) +
             " corruptions caught";
  } catch (const std::exception& e) {
    ok = false;
    detail = std::string("exception: ") + e.what();
  }
  report("persistence", ok, detail + ", " + fmt(seconds_since(t0)) + "s");
}

}  // namespace

int main() {
  criterion_gradients();
  criterion_lasso();
  criterion_dictionary();
  criterion_metrics();
  criterion_feature_dims();
  criterion_e2e();
  criterion_determinism();
  criterion_persistence();
  if (g_failures > 0) {
    std::printf("acceptance: %d criterion(s) failed\n", g_failures);
    return 1;
  }
  std::printf("acceptance: all criteria passed\n");
  return 0;
}
