#include "mdfsc/commands.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <json.hpp>

#include "mdfsc/autoencoder.hpp"
#include "mdfsc/container.hpp"
#include "mdfsc/errors.hpp"
#include "mdfsc/features.hpp"
#include "mdfsc/metrics.hpp"
#include "mdfsc/pipeline.hpp"
#include "mdfsc/scoring.hpp"
#include "mdfsc/sparse.hpp"

namespace fs = std::filesystem;

namespace mdfsc {

std::vector<int> RunConfig::parsed_widths() const {
  std::vector<int> out;
  std::stringstream ss(ae.widths);
  std::string tok;
  while (std::getline(ss, tok, ',')) {
    try {
      out.push_back(std::stoi(tok));
    } catch (...) {
      throw ContractError("bad ae.widths entry: '" + tok + "'");
    }
  }
  require(out.size() == 5, "ae.widths must list 5 stage widths");
  return out;
}

std::string RunConfig::resolved_toml() const {
  std::ostringstream os;
  os << "seed = " << seed << "\n";
  os << "image_size = " << image_size << "\n";
  os << "threads = " << threads << "\n";
  os << "[ae]\n";
  os << "widths = \"" << ae.widths << "\"\n";
  os << "latent_dim = " << ae.latent_dim << "\n";
  os << "epochs = " << ae.epochs << "\n";
  os << "batch = " << ae.batch << "\n";
  os << "lr = " << ae.lr << "\n";
  os << "crop = " << ae.crop << "\n";
  os << "input_channels = " << ae.input_channels << "\n";
  os << "linear_head = " << (ae.linear_head ? "true" : "false") << "\n";
  os << "[features]\n";
  os << "patch = " << features.patch << "\n";
  os << "stride = " << features.stride << "\n";
  os << "budget_per_image = " << features.budget_per_image << "\n";
  os << "[sparse]\n";
  os << "n_atoms = " << sparse.n_atoms << "\n";
  os << "alpha = " << sparse.alpha << "\n";
  os << "max_outer = " << sparse.max_outer << "\n";
  os << "tol = " << sparse.tol << "\n";
  os << "[scoring]\n";
  os << "k = " << scoring.k << "\n";
  os << "normalize_by_count = " << (scoring.normalize_by_count ? "true" : "false") << "\n";
  os << "scorer = \"" << scoring.scorer << "\"\n";
  os << "[synth]\n";
  os << "n_train = " << synth.n_train << "\n";
  os << "n_test_normal = " << synth.n_test_normal << "\n";
  os << "n_test_anom = " << synth.n_test_anom << "\n";
  os << "anomaly_min = " << synth.anomaly_min << "\n";
  os << "anomaly_max = " << synth.anomaly_max << "\n";
  os << "contrast = " << synth.contrast << "\n";
  os << "[paths]\n";
  os << "train_manifest = \"" << paths.train_manifest << "\"\n";
  os << "test_manifest = \"" << paths.test_manifest << "\"\n";
  os << "checkpoint = \"" << paths.checkpoint << "\"\n";
  os << "dictionary = \"" << paths.dictionary << "\"\n";
  os << "reports = \"" << paths.reports << "\"\n";
  os << "out_dir = \"" << paths.out_dir << "\"\n";
  os << "metrics_out = \"" << paths.metrics_out << "\"\n";
  os << "roc_csv = \"" << paths.roc_csv << "\"\n";
  return os.str();
}

namespace {

std::string unquote(std::string v) {
  if (v.size() >= 2 && v.front() == '"' && v.back() == '"')
    return v.substr(1, v.size() - 2);
  return v;
}

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

long to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const long x = std::stol(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw ContractError("config: '" + key + "' expects an integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double x = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return x;
  } catch (...) {
    throw ContractError("config: '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ContractError("config: '" + key + "' expects a boolean, got '" + v + "'");
}

void write_runlog(const std::string& artifact_path, const RunConfig& cfg,
                  const std::string& extra) {
  std::ofstream os(artifact_path + ".runlog", std::ios::trunc);
  if (!os) throw DataError("cannot write run log for " + artifact_path);
  os << cfg.resolved_toml();
  if (!extra.empty()) os << "# " << extra << "\n";
}

ScoringConfig make_scoring_config(const RunConfig& cfg) {
  ScoringConfig sc;
  sc.k = cfg.scoring.k;
  sc.alpha = cfg.sparse.alpha;
  sc.patch = cfg.features.patch;
  sc.stride = cfg.features.stride;
  sc.normalize_by_count = cfg.scoring.normalize_by_count;
  sc.threads = cfg.threads;
  return sc;
}

ArchSpec make_arch(const RunConfig& cfg) {
  ArchSpec arch;
  arch.stage_widths = cfg.parsed_widths();
  arch.latent_dim = cfg.ae.latent_dim;
  arch.input_channels = cfg.ae.input_channels;
  arch.with_linear_head = cfg.ae.linear_head;
  arch.patch_size = cfg.ae.crop;
  arch.validate();
  return arch;
}

std::vector<ImageRecord> load_normals(const std::string& manifest, int size) {
  auto images = load_manifest_images(manifest, size);
  std::vector<ImageRecord> normals;
  for (auto& r : images)
    if (r.label == Label::normal) normals.push_back(std::move(r));
  if (normals.empty())
    throw DataError("no normal images in manifest: " + manifest);
  return normals;
}

}  // namespace

void apply_override(RunConfig& cfg, const std::string& key,
                    const std::string& raw) {
  const std::string v = unquote(trim(raw));
  if (key == "seed") cfg.seed = static_cast<std::uint64_t>(to_int(key, v));
  else if (key == "image_size") cfg.image_size = static_cast<int>(to_int(key, v));
  else if (key == "threads") cfg.threads = static_cast<int>(to_int(key, v));
  else if (key == "ae.widths") cfg.ae.widths = v;
  else if (key == "ae.latent_dim") cfg.ae.latent_dim = static_cast<int>(to_int(key, v));
  else if (key == "ae.epochs") cfg.ae.epochs = static_cast<int>(to_int(key, v));
  else if (key == "ae.batch") cfg.ae.batch = static_cast<int>(to_int(key, v));
  else if (key == "ae.lr") cfg.ae.lr = to_double(key, v);
  else if (key == "ae.crop") cfg.ae.crop = static_cast<int>(to_int(key, v));
  else if (key == "ae.input_channels") cfg.ae.input_channels = static_cast<int>(to_int(key, v));
  else if (key == "ae.linear_head") cfg.ae.linear_head = to_bool(key, v);
  else if (key == "features.patch") cfg.features.patch = static_cast<int>(to_int(key, v));
  else if (key == "features.stride") cfg.features.stride = static_cast<int>(to_int(key, v));
  else if (key == "features.budget_per_image") cfg.features.budget_per_image = static_cast<int>(to_int(key, v));
  else if (key == "sparse.n_atoms") cfg.sparse.n_atoms = static_cast<int>(to_int(key, v));
  else if (key == "sparse.alpha") cfg.sparse.alpha = to_double(key, v);
  else if (key == "sparse.max_outer") cfg.sparse.max_outer = static_cast<int>(to_int(key, v));
  else if (key == "sparse.tol") cfg.sparse.tol = to_double(key, v);
  else if (key == "scoring.k") cfg.scoring.k = static_cast<int>(to_int(key, v));
  else if (key == "scoring.normalize_by_count") cfg.scoring.normalize_by_count = to_bool(key, v);
  else if (key == "scoring.scorer") {
    if (v != "mdfsc" && v != "recon")
      throw ContractError("scoring.scorer must be 'mdfsc' or 'recon'");
    cfg.scoring.scorer = v;
  }
  else if (key == "synth.n_train") cfg.synth.n_train = static_cast<int>(to_int(key, v));
  else if (key == "synth.n_test_normal") cfg.synth.n_test_normal = static_cast<int>(to_int(key, v));
  else if (key == "synth.n_test_anom") cfg.synth.n_test_anom = static_cast<int>(to_int(key, v));
  else if (key == "synth.anomaly_min") cfg.synth.anomaly_min = static_cast<int>(to_int(key, v));
  else if (key == "synth.anomaly_max") cfg.synth.anomaly_max = static_cast<int>(to_int(key, v));
  else if (key == "synth.contrast") cfg.synth.contrast = to_double(key, v);
  else if (key == "paths.train_manifest") cfg.paths.train_manifest = v;
  else if (key == "paths.test_manifest") cfg.paths.test_manifest = v;
  else if (key == "paths.checkpoint") cfg.paths.checkpoint = v;
  else if (key == "paths.dictionary") cfg.paths.dictionary = v;
  else if (key == "paths.reports") cfg.paths.reports = v;
  else if (key == "paths.out_dir") cfg.paths.out_dir = v;
  else if (key == "paths.metrics_out") cfg.paths.metrics_out = v;
  else if (key == "paths.roc_csv") cfg.paths.roc_csv = v;
  else throw ContractError("unknown config key: '" + key + "'");
}

RunConfig parse_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ContractError("cannot open config file: " + path);
  RunConfig cfg;
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    if (t.front() == '[' && t.back() == ']') {
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ContractError("config line " + std::to_string(lineno) +
                          " is not 'key = value': " + path);
    const std::string key = trim(t.substr(0, eq));
    const std::string full = section.empty() ? key : section + "." + key;
    apply_override(cfg, full, t.substr(eq + 1));
  }
  return cfg;
}

int cmd_synth(const RunConfig& cfg) {
  SynthConfig sc;
  sc.size = cfg.image_size;
  sc.n_train = cfg.synth.n_train;
  sc.n_test_normal = cfg.synth.n_test_normal;
  sc.n_test_anom = cfg.synth.n_test_anom;
  sc.anomaly_min = cfg.synth.anomaly_min;
  sc.anomaly_max = cfg.synth.anomaly_max;
  sc.contrast = cfg.synth.contrast;
  require(sc.n_train >= 0 && sc.n_test_normal >= 0 && sc.n_test_anom >= 0 &&
              sc.anomaly_min >= 0 && sc.anomaly_max >= sc.anomaly_min &&
              sc.size >= 32,
          "cmd_synth: invalid generator parameters");

  const SynthDataset ds = synth_dataset(sc, cfg.seed);
  const fs::path out(cfg.paths.out_dir);
  fs::create_directories(out / "train");
  fs::create_directories(out / "test");

  auto dump = [&](const std::vector<ImageRecord>& recs, const std::string& sub,
                  const std::string& manifest) {
    std::vector<ManifestEntry> entries;
    for (const auto& r : recs) {
      const std::string rel = sub + "/" + r.id + ".pgm";
      save_pgm((out / rel).string(), r.pixels);
      entries.push_back({rel, r.label});
    }
    write_manifest((out / manifest).string(), entries);
  };
  dump(ds.train, "train", "train.tsv");
  dump(ds.test, "test", "test.tsv");

  write_runlog((out / "dataset").string(), cfg,
               "train=" + std::to_string(ds.train.size()) +
                   " test=" + std::to_string(ds.test.size()));
  std::cout << "synth: wrote " << ds.train.size() << " train / "
            << ds.test.size() << " test images to " << out.string() << "\n";
  return 0;
}

int cmd_train_ae(const RunConfig& cfg) {
  require(!cfg.paths.train_manifest.empty(), "paths.train_manifest is required");
  auto normals = load_normals(cfg.paths.train_manifest, cfg.image_size);

  const NormStats stats = fit_norm_stats(normals);
  for (auto& r : normals) r = apply_norm(r, stats);

  Rng rng(cfg.seed);
  Autoencoder model = build_autoencoder<float>(make_arch(cfg), rng);
  model.norm = stats;
  model.meta.seed = cfg.seed;

  TrainConfig tc;
  tc.epochs = cfg.ae.epochs;
  tc.batch_size = cfg.ae.batch;
  tc.lr = cfg.ae.lr;
  tc.crop = cfg.ae.crop;
  const TrainReport report = train_autoencoder(model, normals, tc, rng);

  save_autoencoder(model, cfg.paths.checkpoint);
  std::ostringstream extra;
  extra << "final_loss=" << report.final_loss
        << " epochs=" << report.epoch_loss.size();
  write_runlog(cfg.paths.checkpoint, cfg, extra.str());
  std::cout << "train-ae: " << normals.size() << " normals, final loss "
            << report.final_loss << " -> " << cfg.paths.checkpoint << "\n";
  return 0;
}

int cmd_fit_dict(const RunConfig& cfg) {
  Autoencoder model = load_autoencoder(cfg.paths.checkpoint);
  auto normals = load_normals(cfg.paths.train_manifest, cfg.image_size);
  for (auto& r : normals) r = apply_norm(r, model.norm);

  Rng rng(cfg.seed);
  const FeatureMatrix F =
      build_feature_matrix(model, normals, cfg.features.budget_per_image, rng,
                           cfg.features.patch, cfg.features.stride);

  DictLearnConfig dc;
  dc.n_atoms = cfg.sparse.n_atoms;
  dc.alpha = cfg.sparse.alpha;
  dc.max_outer = cfg.sparse.max_outer;
  dc.tol = cfg.sparse.tol;
  auto [dict, report] = dict_learn(F.columns, dc, rng);
  dict.seed = cfg.seed;

  save_dictionary(dict, cfg.paths.dictionary);
  std::ostringstream extra;
  extra << "m=" << F.m() << " d=" << F.d
        << " outer=" << report.outer_iterations << " objective="
        << (report.objective_trace.empty() ? 0.0 : report.objective_trace.back());
  write_runlog(cfg.paths.dictionary, cfg, extra.str());
  std::cout << "fit-dict: " << F.m() << " columns (d=" << F.d << ") -> "
            << dict.n() << " atoms, " << report.outer_iterations
            << " outer iterations -> " << cfg.paths.dictionary << "\n";
  return 0;
}

int cmd_score(const RunConfig& cfg) {
  Autoencoder model = load_autoencoder(cfg.paths.checkpoint);
  require(!cfg.paths.test_manifest.empty(), "paths.test_manifest is required");
  auto images = load_manifest_images(cfg.paths.test_manifest, cfg.image_size);
  for (auto& r : images) r = apply_norm(r, model.norm);

  std::vector<AnomalyReport> reports;
  int errors = 0;
  if (cfg.scoring.scorer == "recon") {
    for (const auto& img : images) {
      AnomalyReport rep;
      rep.image_id = img.id;
      rep.k = 0;
      rep.score = recon_baseline_score(model, img);
      reports.push_back(std::move(rep));
    }
  } else {
    const Dictionary dict = load_dictionary(cfg.paths.dictionary);
    for (auto& result : score_batch(model, dict, images, make_scoring_config(cfg))) {
      if (auto* rep = std::get_if<AnomalyReport>(&result)) {
        reports.push_back(std::move(*rep));
      } else {
        const auto& err = std::get<ScoreError>(result);
        std::cerr << "score: error on " << err.image_id << ": " << err.message
                  << "\n";
        ++errors;
      }
    }
  }
  write_reports_jsonl(reports, cfg.paths.reports);
  write_runlog(cfg.paths.reports, cfg,
               "scored=" + std::to_string(reports.size()) +
                   " errors=" + std::to_string(errors));
  std::cout << "score: " << reports.size() << " reports -> "
            << cfg.paths.reports << "\n";
  return errors == 0 ? 0 : 3;
}

int cmd_eval(const RunConfig& cfg) {
  std::ifstream is(cfg.paths.reports);
  if (!is) throw DataError("cannot open reports: " + cfg.paths.reports);
  auto manifest = read_manifest(cfg.paths.test_manifest);

  std::vector<ScoredLabel> items;
  std::vector<std::string> missing;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw DataError(std::string("bad report line: ") + e.what());
    }
    const std::string id = j.at("id").get<std::string>();
    const auto it = std::find_if(manifest.begin(), manifest.end(),
                                 [&](const ManifestEntry& e) { return e.path == id; });
    if (it == manifest.end()) {
      missing.push_back(id);
      continue;
    }
    items.push_back({j.at("score").get<double>(),
                     it->label == Label::anomalous ? 1 : 0});
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& id : missing) list += (list.empty() ? "" : ", ") + id;
    throw DataError("report ids missing from manifest: " + list);
  }
  if (items.empty()) throw MetricError("eval: no reports to evaluate");

  std::size_t n_pos = 0;
  for (const auto& it : items) n_pos += it.label;
  nlohmann::json out = {{"n", items.size()},
                        {"n_pos", n_pos},
                        {"auc", roc_auc(items)},
                        {"ap", average_precision(items)}};
  std::cout << out.dump() << "\n";
  if (!cfg.paths.metrics_out.empty()) {
    std::ofstream os(cfg.paths.metrics_out, std::ios::trunc);
    if (!os) throw DataError("cannot write: " + cfg.paths.metrics_out);
    os << out.dump() << "\n";
  }
  if (!cfg.paths.roc_csv.empty()) {
    std::ofstream os(cfg.paths.roc_csv, std::ios::trunc);
    if (!os) throw DataError("cannot write: " + cfg.paths.roc_csv);
    os << "fpr,tpr\n";
    for (const auto& p : roc_points(items)) os << p.fpr << "," << p.tpr << "\n";
  }
  return 0;
}

}  // namespace mdfsc
