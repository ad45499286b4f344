#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "sgwpcqa/error.hpp"
#include "sgwpcqa/graph.hpp"
#include "sgwpcqa/stats.hpp"

namespace sgwpcqa {

/// epsilon-SVR settings. epsilon is in units of the [0,1]-scaled target;
/// gamma defaults to 1/d on standardized features.
struct SVRHyperparams {
  double c = 10.0;
  double epsilon = 0.05;
  std::optional<double> gamma;
  double tol = 1e-3;
  std::size_t max_iterations = 10'000'000;

  void validate() const {
    if (!(c > 0.0)) throw Error(ErrorCode::InvalidArgument, "C must be positive");
    if (!(epsilon >= 0.0)) throw Error(ErrorCode::InvalidArgument, "epsilon must be non-negative");
    if (gamma && !(*gamma > 0.0)) throw Error(ErrorCode::InvalidArgument, "gamma must be positive");
    if (!(tol > 0.0)) throw Error(ErrorCode::InvalidArgument, "tol must be positive");
    if (max_iterations == 0) throw Error(ErrorCode::InvalidArgument, "max_iterations must be positive");
  }
};

/// Solver diagnostics of the last training run.
struct SMOReport {
  std::size_t iterations = 0;
  double kkt_gap = 0.0;         // max violating pair gap at exit
  double dual_objective = 0.0;  // maximization form; grows with C
  bool converged = false;
};

struct SVRModel {
  std::vector<std::vector<double>> support_vectors;  // standardized
  std::vector<double> dual_coeffs;                   // alpha_i - alpha_i^*
  double bias = 0.0;                                 // scaled-target units
  double gamma = 1.0;
  double c = 0.0;
  double epsilon = 0.0;
  std::vector<double> feature_means;
  std::vector<double> feature_stds;
  double target_min = 0.0;
  double target_max = 1.0;
  std::vector<std::string> feature_layout;
  std::string metric_config;
  SMOReport solver;

  std::size_t dimension() const noexcept { return feature_means.size(); }
};

inline constexpr int kModelVersion = 1;
inline constexpr const char* kModelFormat = "sgwpcqa-svr";

namespace svr_detail {

inline double rbf(std::span<const double> a, std::span<const double> b, double gamma) {
  double d2 = 0.0;
  for (std::size_t t = 0; t < a.size(); ++t) {
    const double d = a[t] - b[t];
    d2 += d * d;
  }
  return std::exp(-gamma * d2);
}

// LIBSVM-style formulation over 2l variables beta = [alpha; alpha*] with
// labels y = [+1..; -1..]:  min 1/2 b'Qb + p'b,  y'b = 0,  0 <= b <= C,
// Q_st = y_s y_t K(s mod l, t mod l),  p = [eps - z; eps + z].
struct SmoResult {
  std::vector<double> beta;
  double rho = 0.0;
  SMOReport report;
};

inline SmoResult solve(const std::vector<double>& kernel, std::span<const double> z, double c, double eps, double tol,
                       std::size_t max_iterations) {
  const std::size_t l = z.size();
  const std::size_t n = 2 * l;
  auto sign = [l](std::size_t t) { return t < l ? 1.0 : -1.0; };
  auto kidx = [l](std::size_t t) { return t < l ? t : t - l; };
  auto q = [&](std::size_t s, std::size_t t) { return sign(s) * sign(t) * kernel[kidx(s) * l + kidx(t)]; };

  std::vector<double> beta(n, 0.0), grad(n), p(n);
  for (std::size_t t = 0; t < l; ++t) {
    p[t] = eps - z[t];
    p[t + l] = eps + z[t];
  }
  grad = p;
  auto in_up = [&](std::size_t t) { return sign(t) > 0 ? beta[t] < c : beta[t] > 0.0; };
  auto in_low = [&](std::size_t t) { return sign(t) > 0 ? beta[t] > 0.0 : beta[t] < c; };

  SmoResult res;
  std::size_t iter = 0;
  double gap = 0.0;
  for (; iter < max_iterations; ++iter) {
    // Maximal violating pair; ties resolve to the lowest index.
    double gmax = -std::numeric_limits<double>::infinity();
    double gmin = std::numeric_limits<double>::infinity();
    std::size_t i = n, j = n;
    for (std::size_t t = 0; t < n; ++t) {
      const double v = -sign(t) * grad[t];
      if (in_up(t) && v > gmax) gmax = v, i = t;
      if (in_low(t) && v < gmin) gmin = v, j = t;
    }
    gap = (i == n || j == n) ? 0.0 : gmax - gmin;
    if (gap <= tol) break;

    const double ci = c, cj = c;
    const double old_i = beta[i], old_j = beta[j];
    const double qii = q(i, i), qjj = q(j, j), qij = q(i, j);
    if (sign(i) != sign(j)) {
      double quad = qii + qjj + 2.0 * qij;
      if (quad <= 0.0) quad = 1e-12;
      const double delta = (-grad[i] - grad[j]) / quad;
      const double diff = beta[i] - beta[j];
      beta[i] += delta;
      beta[j] += delta;
      if (diff > 0.0) {
        if (beta[j] < 0.0) beta[j] = 0.0, beta[i] = diff;
      } else {
        if (beta[i] < 0.0) beta[i] = 0.0, beta[j] = -diff;
      }
      if (diff > ci - cj) {
        if (beta[i] > ci) beta[i] = ci, beta[j] = ci - diff;
      } else {
        if (beta[j] > cj) beta[j] = cj, beta[i] = cj + diff;
      }
    } else {
      double quad = qii + qjj - 2.0 * qij;
      if (quad <= 0.0) quad = 1e-12;
      const double delta = (grad[i] - grad[j]) / quad;
      const double sum = beta[i] + beta[j];
      beta[i] -= delta;
      beta[j] += delta;
      if (sum > ci) {
        if (beta[i] > ci) beta[i] = ci, beta[j] = sum - ci;
      } else {
        if (beta[j] < 0.0) beta[j] = 0.0, beta[i] = sum;
      }
      if (sum > cj) {
        if (beta[j] > cj) beta[j] = cj, beta[i] = sum - cj;
      } else {
        if (beta[i] < 0.0) beta[i] = 0.0, beta[j] = sum;
      }
    }
    const double di = beta[i] - old_i, dj = beta[j] - old_j;
    for (std::size_t t = 0; t < n; ++t) grad[t] += q(t, i) * di + q(t, j) * dj;
  }

  // rho from free variables, or the midpoint of the feasible interval.
  double ub = std::numeric_limits<double>::infinity(), lb = -ub, sum_free = 0.0;
  std::size_t nr_free = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const double yg = sign(t) * grad[t];
    if (beta[t] >= c) {
      if (sign(t) < 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else if (beta[t] <= 0.0) {
      if (sign(t) > 0) ub = std::min(ub, yg);
      else lb = std::max(lb, yg);
    } else {
      ++nr_free;
      sum_free += yg;
    }
  }
  res.rho = nr_free > 0 ? sum_free / static_cast<double>(nr_free) : (ub + lb) / 2.0;

  double v = 0.0;
  for (std::size_t t = 0; t < n; ++t) v += beta[t] * (grad[t] + p[t]);
  res.report.dual_objective = -v / 2.0;
  res.report.iterations = iter;
  res.report.kkt_gap = gap;
  res.report.converged = gap <= tol;
  res.beta = std::move(beta);
  return res;
}

}  // namespace svr_detail

/// Trains epsilon-SVR with an RBF kernel by SMO. Features are z-scored and
/// targets min-max scaled to [0, 1] internally; predictions come back in the
/// original target units.
inline SVRModel train(const std::vector<std::vector<double>>& features, std::span<const double> mos,
                      const SVRHyperparams& hp = {}) {
  hp.validate();
  const std::size_t l = features.size();
  if (l != mos.size()) throw Error(ErrorCode::DimensionMismatch, "feature and target counts differ");
  if (l < 2) throw Error(ErrorCode::InsufficientData, "training needs at least two samples");
  const std::size_t d = features.front().size();
  if (d == 0) throw Error(ErrorCode::DimensionMismatch, "empty feature vectors");
  for (const auto& x : features) {
    if (x.size() != d) throw Error(ErrorCode::DimensionMismatch, "inconsistent feature dimension");
    for (double v : x)
      if (!std::isfinite(v)) throw Error(ErrorCode::NonFinite, "non-finite feature value");
  }
  for (double y : mos)
    if (!std::isfinite(y)) throw Error(ErrorCode::NonFinite, "non-finite target value");

  SVRModel model;
  model.feature_means.assign(d, 0.0);
  model.feature_stds.assign(d, 0.0);
  for (const auto& x : features)
    for (std::size_t t = 0; t < d; ++t) model.feature_means[t] += x[t];
  for (auto& m : model.feature_means) m /= static_cast<double>(l);
  for (const auto& x : features)
    for (std::size_t t = 0; t < d; ++t) model.feature_stds[t] += (x[t] - model.feature_means[t]) * (x[t] - model.feature_means[t]);
  for (auto& s : model.feature_stds) {
    s = std::sqrt(s / static_cast<double>(l));
    if (!(s > 0.0)) s = 1.0;
  }
  model.target_min = *std::min_element(mos.begin(), mos.end());
  model.target_max = *std::max_element(mos.begin(), mos.end());
  if (!(model.target_max > model.target_min)) throw Error(ErrorCode::DegenerateTargets, "all targets are equal");
  const double range = model.target_max - model.target_min;
  model.gamma = hp.gamma.value_or(1.0 / static_cast<double>(d));
  model.c = hp.c;
  model.epsilon = hp.epsilon;

  std::vector<std::vector<double>> xs(l, std::vector<double>(d));
  for (std::size_t i = 0; i < l; ++i)
    for (std::size_t t = 0; t < d; ++t) xs[i][t] = (features[i][t] - model.feature_means[t]) / model.feature_stds[t];
  std::vector<double> z(l);
  for (std::size_t i = 0; i < l; ++i) z[i] = (mos[i] - model.target_min) / range;

  std::vector<double> kernel(l * l);
  for (std::size_t i = 0; i < l; ++i) {
    kernel[i * l + i] = 1.0;
    for (std::size_t j = i + 1; j < l; ++j) kernel[i * l + j] = kernel[j * l + i] = svr_detail::rbf(xs[i], xs[j], model.gamma);
  }
  const auto res = svr_detail::solve(kernel, z, hp.c, hp.epsilon, hp.tol, hp.max_iterations);
  for (std::size_t i = 0; i < l; ++i) {
    const double coeff = res.beta[i] - res.beta[i + l];
    if (coeff != 0.0) {
      model.support_vectors.push_back(xs[i]);
      model.dual_coeffs.push_back(coeff);
    }
  }
  model.bias = -res.rho;
  model.solver = res.report;
  return model;
}

/// Decision value in scaled-target units for an already standardized input.
inline double decision_value(const SVRModel& model, std::span<const double> standardized) {
  double f = model.bias;
  for (std::size_t s = 0; s < model.support_vectors.size(); ++s)
    f += model.dual_coeffs[s] * svr_detail::rbf(model.support_vectors[s], standardized, model.gamma);
  return f;
}

inline double predict(const SVRModel& model, std::span<const double> feature) {
  if (feature.size() != model.dimension())
    throw Error(ErrorCode::DimensionMismatch, "feature dimension " + std::to_string(feature.size()) +
                                                  " does not match model dimension " + std::to_string(model.dimension()));
  std::vector<double> xs(feature.size());
  for (std::size_t t = 0; t < xs.size(); ++t) xs[t] = (feature[t] - model.feature_means[t]) / model.feature_stds[t];
  return model.target_min + decision_value(model, xs) * (model.target_max - model.target_min);
}

inline nlohmann::ordered_json model_to_json(const SVRModel& m) {
  nlohmann::ordered_json j;
  j["format"] = kModelFormat;
  j["version"] = kModelVersion;
  j["gamma"] = m.gamma;
  j["c"] = m.c;
  j["epsilon"] = m.epsilon;
  j["bias"] = m.bias;
  j["feature_means"] = m.feature_means;
  j["feature_stds"] = m.feature_stds;
  j["target_min"] = m.target_min;
  j["target_max"] = m.target_max;
  j["support_vectors"] = m.support_vectors;
  j["dual_coeffs"] = m.dual_coeffs;
  j["feature_layout"] = m.feature_layout;
  j["metric_config"] = m.metric_config;
  j["solver"] = {{"iterations", m.solver.iterations},
                 {"kkt_gap", m.solver.kkt_gap},
                 {"dual_objective", m.solver.dual_objective},
                 {"converged", m.solver.converged}};
  return j;
}

inline SVRModel model_from_json(const nlohmann::json& j) {
  try {
    if (!j.is_object() || j.value("format", std::string{}) != kModelFormat)
      throw Error(ErrorCode::SchemaMismatch, "not an sgwpcqa SVR model");
    if (!j.contains("version") || j.at("version") != kModelVersion)
      throw Error(ErrorCode::SchemaMismatch, "unsupported model version " + (j.contains("version") ? j.at("version").dump() : "<none>"));
    SVRModel m;
    m.gamma = j.at("gamma").get<double>();
    m.c = j.at("c").get<double>();
    m.epsilon = j.at("epsilon").get<double>();
    m.bias = j.at("bias").get<double>();
    m.feature_means = j.at("feature_means").get<std::vector<double>>();
    m.feature_stds = j.at("feature_stds").get<std::vector<double>>();
    m.target_min = j.at("target_min").get<double>();
    m.target_max = j.at("target_max").get<double>();
    m.support_vectors = j.at("support_vectors").get<std::vector<std::vector<double>>>();
    m.dual_coeffs = j.at("dual_coeffs").get<std::vector<double>>();
    m.feature_layout = j.at("feature_layout").get<std::vector<std::string>>();
    m.metric_config = j.at("metric_config").get<std::string>();
    if (j.contains("solver")) {
      const auto& s = j.at("solver");
      m.solver = {s.at("iterations").get<std::size_t>(), s.at("kkt_gap").get<double>(),
                  s.at("dual_objective").get<double>(), s.at("converged").get<bool>()};
    }
    if (m.feature_stds.size() != m.feature_means.size() || m.dual_coeffs.size() != m.support_vectors.size())
      throw Error(ErrorCode::CorruptFile, "inconsistent model array sizes");
    for (const auto& sv : m.support_vectors)
      if (sv.size() != m.feature_means.size()) throw Error(ErrorCode::CorruptFile, "support vector dimension mismatch");
    for (double s : m.feature_stds)
      if (!(s > 0.0)) throw Error(ErrorCode::CorruptFile, "non-positive feature std");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, std::string("malformed model: ") + e.what());
  }
}

inline void save_model(const SVRModel& model, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::IoError, "cannot write '" + path.string() + "'");
  out << model_to_json(model).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::IoError, "failed writing '" + path.string() + "'");
}

inline SVRModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::IoError, "cannot open '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::CorruptFile, "'" + path.string() + "': " + e.what());
  }
  return model_from_json(j);
}

/// Deterministic partition of [0, n) into k folds after a seeded shuffle.
inline std::vector<std::vector<std::size_t>> make_folds(std::size_t n, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw Error(ErrorCode::InvalidArgument, "need at least two folds");
  if (n < k) throw Error(ErrorCode::InsufficientData, "fewer samples than folds");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::mt19937_64 engine(seed);
  for (std::size_t i = n; i-- > 1;) std::swap(idx[i], idx[uniform_index(engine, i + 1)]);
  std::vector<std::vector<std::size_t>> folds(k);
  for (std::size_t i = 0; i < n; ++i) folds[i * k / n].push_back(idx[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

/// Grid search over C in {1, 10, 100} and gamma in {0.1, 1/d, 1}, scored by
/// mean validation SROCC of an inner 3-fold split. Other fields come from
/// `base`. Returns `base` unchanged when there is too little data.
inline SVRHyperparams select_hyperparameters(const std::vector<std::vector<double>>& features,
                                             std::span<const double> mos, const SVRHyperparams& base,
                                             std::uint64_t seed) {
  const std::size_t inner = 3;
  if (features.size() < 2 * inner || features.empty()) return base;
  const double d = static_cast<double>(features.front().size());
  const auto folds = make_folds(features.size(), inner, seed);
  SVRHyperparams best = base;
  double best_score = -std::numeric_limits<double>::infinity();
  for (double c : {1.0, 10.0, 100.0}) {
    for (double gamma : {0.1, 1.0 / d, 1.0}) {
      SVRHyperparams hp = base;
      hp.c = c;
      hp.gamma = gamma;
      double total = 0.0;
      bool ok = true;
      for (std::size_t f = 0; f < inner && ok; ++f) {
        std::vector<std::vector<double>> xtr;
        std::vector<double> ytr, pred, ytest;
        for (std::size_t g = 0; g < inner; ++g) {
          for (auto i : folds[g]) {
            if (g == f) continue;
            xtr.push_back(features[i]);
            ytr.push_back(mos[i]);
          }
        }
        try {
          const auto model = train(xtr, ytr, hp);
          for (auto i : folds[f]) {
            pred.push_back(predict(model, features[i]));
            ytest.push_back(mos[i]);
          }
          total += srocc(pred, ytest);
        } catch (const Error&) {
          ok = false;
        }
      }
      if (ok && total / inner > best_score) {
        best_score = total / inner;
        best = hp;
      }
    }
  }
  return best;
}

}  // namespace sgwpcqa
