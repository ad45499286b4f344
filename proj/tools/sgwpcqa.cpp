#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include "sgwpcqa/sgwpcqa.hpp"

namespace {

using namespace sgwpcqa;

struct MetricFlags {
  MetricConfig cfg;
  std::string dump_graph;
  std::string dump_coefficients;
};

void add_metric_flags(CLI::App* app, MetricConfig& cfg) {
  app->add_option("--knn", cfg.k, "Neighbors per point in the kNN graph")->check(CLI::PositiveNumber);
  app->add_option("--bands", cfg.m_bands, "Number of wavelet subbands M")->check(CLI::Range(2, 64));
  app->add_option("--geometry-bands", cfg.geometry_bands, "1-based subbands scored on coordinates")->delimiter(',');
  app->add_option("--color-bands", cfg.color_bands, "1-based subbands scored on lightness")->delimiter(',');
  app->add_flag("--plus", cfg.plus_variant, "Append point-to-point and total-variation scores");
  app->add_option("--order", cfg.chebyshev_order, "Chebyshev polynomial order")->check(CLI::PositiveNumber);
  app->add_flag("--exact", cfg.exact_sgwt, "Dense eigendecomposition transform (small clouds only)");
  app->add_option("--threads", cfg.threads, "Worker threads per pair (0 = logical cores)");
}

void add_svr_flags(CLI::App* app, SVRHyperparams& hp, std::optional<double>& gamma) {
  app->add_option("--C", hp.c, "SVR box constraint")->check(CLI::PositiveNumber);
  app->add_option("--epsilon", hp.epsilon, "SVR tube width on [0,1]-scaled targets")->check(CLI::NonNegativeNumber);
  app->add_option("--gamma", gamma, "RBF width (default 1/feature count)")->check(CLI::PositiveNumber);
  app->add_option("--tol", hp.tol, "SMO stopping tolerance on the KKT gap")->check(CLI::PositiveNumber);
}

std::string num(double v) { return eval_detail::format_double(v); }

std::optional<FeatureCache> open_cache(const std::string& flag, bool disabled) {
  if (disabled) return std::nullopt;
  if (!flag.empty()) return FeatureCache(flag);
  if (auto dir = FeatureCache::directory_from_env()) return FeatureCache(*dir);
  return std::nullopt;
}

int cmd_score(const std::string& ref_path, const std::string& dist_path, const std::string& model_path,
              const MetricFlags& flags, const std::string& csv_path) {
  const PointCloud ref = load_ply(ref_path);
  const PointCloud dist = load_ply(dist_path);
  std::optional<SVRModel> model;
  if (!model_path.empty()) model = load_model(model_path);

  StageTimings timings;
  PipelineState state;
  const FeatureVector fv = extract_features(ref, dist, flags.cfg, &timings, &state);
  const auto names = fv.names();
  const auto values = fv.flatten();
  for (std::size_t i = 0; i < names.size(); ++i) std::cout << names[i] << ' ' << num(values[i]) << '\n';
  if (model) {
    if (model->feature_layout != names)
      throw Error(ErrorCode::DimensionMismatch, "model was trained on a different feature layout");
    std::cout << "predicted_mos " << num(predict(*model, values)) << '\n';
  }
  if (!csv_path.empty()) {
    std::ofstream out(csv_path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + csv_path + "'");
    out << "feature,score\n";
    for (std::size_t i = 0; i < names.size(); ++i) out << names[i] << ',' << num(values[i]) << '\n';
  }
  if (!flags.dump_graph.empty()) state.laplacian->graph().write_edges(flags.dump_graph);
  if (!flags.dump_coefficients.empty()) {
    const PointCloud r = with_lightness(ref);
    const char* axes[] = {"x", "y", "z", "L"};
    for (std::size_t s = 0; s < (r.lightness ? 4u : 3u); ++s) {
      const std::vector<double> sig = s < 3 ? r.coordinate(s) : *r.lightness;
      const auto psi = sgwt_forward(*state.laplacian, sig, *state.bank, flags.cfg.chebyshev_order, flags.cfg.threads);
      write_coefficients(flags.dump_coefficients + "_" + axes[s] + ".sgwc", psi);
    }
  }
  std::fprintf(stderr, "timing: graph %.3fs projection %.3fs sgwt %.3fs scores %.3fs total %.3fs\n", timings.graph,
               timings.projection, timings.sgwt, timings.scores, timings.total());
  return 0;
}

int cmd_features(const std::string& manifest_path, const std::string& out_path, const MetricConfig& cfg,
                 const std::string& cache_dir, bool no_cache, unsigned workers) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  const auto cache = open_cache(cache_dir, no_cache);
  const BatchResult batch = extract_batch(manifest, cfg, cache ? &*cache : nullptr, workers);
  for (const auto& f : batch.failures) std::cerr << "skipped " << f.id << ": " << f.message << '\n';
  write_feature_csv(out_path, make_feature_table(manifest, batch, cfg));
  std::fprintf(stderr, "features: %zu records, %zu failed, %zu cached, wall %.3fs\n", manifest.records.size(),
               batch.failures.size(), batch.cache_hits, batch.seconds);
  return 0;
}

int cmd_train(const std::string& csv_path, const std::string& model_path, SVRHyperparams hp,
              const std::optional<double>& gamma, bool grid, std::uint64_t seed) {
  const FeatureTable t = load_feature_csv(csv_path);
  if (t.mos.size() != t.size()) throw Error(ErrorCode::SchemaMismatch, "training CSV needs a mos column");
  hp.gamma = gamma;
  if (grid) hp = select_hyperparameters(t.rows, t.mos, hp, seed);
  SVRModel model = train(t.rows, t.mos, hp);
  model.feature_layout = t.names;
  save_model(model, model_path);
  std::fprintf(stderr, "trained on %zu rows: %zu support vectors, C %g, gamma %g, KKT gap %.3g, %zu iterations\n",
               t.size(), model.support_vectors.size(), model.c, model.gamma, model.solver.kkt_gap,
               model.solver.iterations);
  return 0;
}

int cmd_predict(const std::string& model_path, const std::string& csv_path, const std::string& out_path) {
  const SVRModel model = load_model(model_path);
  const FeatureTable t = load_feature_csv(csv_path);
  if (!model.feature_layout.empty() && t.names != model.feature_layout)
    throw Error(ErrorCode::DimensionMismatch, "feature CSV columns do not match the model layout");
  std::ofstream file;
  if (!out_path.empty()) {
    file.open(out_path);
    if (!file) throw Error(ErrorCode::IoError, "cannot write '" + out_path + "'");
  }
  std::ostream& out = out_path.empty() ? std::cout : file;
  out << "id,predicted_mos\n";
  for (std::size_t r = 0; r < t.size(); ++r) out << t.ids[r] << ',' << num(predict(model, t.rows[r])) << '\n';
  return 0;
}

int cmd_evaluate(const std::string& manifest_path, const MetricConfig& cfg, SVRHyperparams hp,
                 const std::optional<double>& gamma, const EvalOptions& opt, bool require_split,
                 const std::string& report_path, bool timing, const std::string& cache_dir, bool no_cache,
                 unsigned workers) {
  const DatasetManifest manifest = load_manifest(manifest_path);
  if (require_split && !manifest.has_split())
    throw Error(ErrorCode::SchemaMismatch, "--split-column given but the manifest has no split tags");
  hp.gamma = gamma;
  const auto cache = open_cache(cache_dir, no_cache);
  const EvalReport rep = kfold_evaluate(manifest, cfg, hp, opt, cache ? &*cache : nullptr, workers);
  for (const auto& f : rep.failures) std::cerr << "skipped " << f.id << ": " << f.message << '\n';
  std::cout << rep.table();
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    if (!out) throw Error(ErrorCode::IoError, "cannot write '" + report_path + "'");
    out << rep.to_json(timing).dump(2) << '\n';
  }
  std::fprintf(stderr, "timing: features %.3fs training %.3fs\n", rep.feature_seconds, rep.train_seconds);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Full-reference point cloud quality assessment with spectral graph wavelets"};
  app.option_defaults()->always_capture_default();
  app.require_subcommand(1);

  MetricFlags score_flags;
  std::string score_ref, score_dist, score_model, score_csv;
  auto* score = app.add_subcommand("score", "Score a distorted cloud against its reference");
  score->add_option("reference", score_ref, "Reference PLY")->required();
  score->add_option("distorted", score_dist, "Distorted PLY")->required();
  score->add_option("--model", score_model, "Trained SVR model; prints a predicted MOS");
  score->add_option("--csv", score_csv, "Also write per-feature scores as CSV");
  score->add_option("--dump-graph", score_flags.dump_graph, "Write the reference graph edges (i j w)");
  score->add_option("--dump-coefficients", score_flags.dump_coefficients,
                    "Write reference wavelet coefficients to <prefix>_{x,y,z,L}.sgwc");
  add_metric_flags(score, score_flags.cfg);

  MetricConfig feat_cfg;
  std::string feat_manifest, feat_out, feat_cache;
  bool feat_no_cache = false;
  unsigned feat_workers = 0;
  auto* features = app.add_subcommand("features", "Extract features for every record of a manifest");
  features->add_option("manifest", feat_manifest, "CSV: id,reference,distorted,mos[,split]")->required();
  features->add_option("output", feat_out, "Feature CSV to write")->required();
  features->add_option("--cache-dir", feat_cache, "Feature cache directory (default: $SGWPCQA_CACHE_DIR)");
  features->add_flag("--no-cache", feat_no_cache, "Ignore the feature cache");
  features->add_option("--workers", feat_workers, "Records processed in parallel (0 = logical cores)");
  add_metric_flags(features, feat_cfg);

  SVRHyperparams train_hp;
  std::optional<double> train_gamma;
  std::string train_csv, train_model;
  bool train_grid = false;
  std::uint64_t train_seed = 0;
  auto* trn = app.add_subcommand("train", "Train the SVR on a feature CSV");
  trn->add_option("features", train_csv, "Feature CSV with a mos column")->required();
  trn->add_option("model", train_model, "Model JSON to write")->required();
  add_svr_flags(trn, train_hp, train_gamma);
  trn->add_flag("--grid-search", train_grid, "Pick C and gamma by inner 3-fold SROCC");
  trn->add_option("--seed", train_seed, "Seed for the grid-search folds");

  std::string pred_model, pred_csv, pred_out;
  auto* pred = app.add_subcommand("predict", "Predict MOS for a feature CSV");
  pred->add_option("model", pred_model, "Model JSON")->required();
  pred->add_option("features", pred_csv, "Feature CSV (mos column optional)")->required();
  pred->add_option("--output", pred_out, "Write predictions here instead of stdout");

  MetricConfig eval_cfg;
  SVRHyperparams eval_hp;
  std::optional<double> eval_gamma;
  EvalOptions eval_opt;
  std::string eval_manifest, eval_report, eval_cache;
  bool eval_split = false, eval_timing = false, eval_no_cache = false;
  unsigned eval_workers = 0;
  auto* ev = app.add_subcommand("evaluate", "Cross-validated PLCC/SROCC on a manifest");
  ev->add_option("manifest", eval_manifest, "CSV: id,reference,distorted,mos[,split]")->required();
  ev->add_option("--k,--folds", eval_opt.folds, "Number of folds")->check(CLI::Range(2, 1000000));
  ev->add_option("--seed", eval_opt.seed, "Fold shuffling seed");
  ev->add_flag("--split-column", eval_split, "Require and use the manifest's train/test split tags");
  ev->add_flag("--logistic", eval_opt.logistic, "Fit a 4-parameter logistic before PLCC");
  ev->add_flag("--grid-search", eval_opt.grid_search, "Pick C and gamma per fold by inner 3-fold SROCC");
  ev->add_option("--report", eval_report, "Write the JSON report here");
  ev->add_flag("--timing", eval_timing, "Include wall-clock timing in the JSON report");
  ev->add_option("--cache-dir", eval_cache, "Feature cache directory (default: $SGWPCQA_CACHE_DIR)");
  ev->add_flag("--no-cache", eval_no_cache, "Ignore the feature cache");
  ev->add_option("--workers", eval_workers, "Records processed in parallel (0 = logical cores)");
  add_metric_flags(ev, eval_cfg);
  add_svr_flags(ev, eval_hp, eval_gamma);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*score) return cmd_score(score_ref, score_dist, score_model, score_flags, score_csv);
    if (*features) return cmd_features(feat_manifest, feat_out, feat_cfg, feat_cache, feat_no_cache, feat_workers);
    if (*trn) return cmd_train(train_csv, train_model, train_hp, train_gamma, train_grid, train_seed);
    if (*pred) return cmd_predict(pred_model, pred_csv, pred_out);
    if (*ev)
      return cmd_evaluate(eval_manifest, eval_cfg, eval_hp, eval_gamma, eval_opt, eval_split, eval_report, eval_timing,
                          eval_cache, eval_no_cache, eval_workers);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 1;
}
