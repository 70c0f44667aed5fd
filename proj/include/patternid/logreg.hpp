// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "patternid/errors.hpp"
#include "patternid/parallel.hpp"
#include "patternid/random.hpp"
#include "patternid/tensor_io.hpp"

namespace patternid {

/// One-vs-rest L1-regularized logistic regression model. Per-class score is
/// sigmoid(w_c . x + b_c); the class order is fixed and persisted because
/// score rows map to identities positionally. Feature standardization used
/// during training is folded into the stored weights, so the model applies
/// directly to raw feature vectors.
struct IdentModel {
  std::vector<std::string> classes;
  Eigen::MatrixXd weights;  // K x k
  Eigen::VectorXd biases;   // K
  double C = 1.0;

  int n_classes() const { return static_cast<int>(classes.size()); }

  void save(const std::filesystem::path& tensor_path,
            const std::filesystem::path& classes_path) const {
    WeightStore store;
    std::vector<float> w(static_cast<std::size_t>(weights.size()));
    for (int r = 0; r < weights.rows(); ++r)
      for (int c = 0; c < weights.cols(); ++c)
        w[static_cast<std::size_t>(r) * weights.cols() + c] =
            static_cast<float>(weights(r, c));
    store.put("weights",
              {static_cast<std::uint64_t>(weights.rows()),
               static_cast<std::uint64_t>(weights.cols())},
              std::move(w));
    store.put("biases", {static_cast<std::uint64_t>(biases.size())},
              std::vector<float>(biases.data(), biases.data() + biases.size()));
    store.put("C", {1}, {static_cast<float>(C)});
    store.save(tensor_path);

    std::ofstream out(classes_path);
    if (!out)
      throw IoError("cannot open file for writing: " + classes_path.string());
    for (const std::string& c : classes) out << c << "\n";
    if (!out) throw IoError("write failure: " + classes_path.string());
  }

  static IdentModel load(const std::filesystem::path& tensor_path,
                         const std::filesystem::path& classes_path) {
    const WeightStore store = WeightStore::load(tensor_path);
    IdentModel model;
    const NamedTensor& w = store.get("weights");
    if (w.shape.size() != 2)
      throw FormatError("weights tensor must be 2-D: " + tensor_path.string());
    model.weights =
        Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>(
            w.values.data(), static_cast<Eigen::Index>(w.shape[0]),
            static_cast<Eigen::Index>(w.shape[1]))
            .cast<double>();
    const NamedTensor& b = store.get("biases");
    model.biases = Eigen::Map<const Eigen::VectorXf>(
                       b.values.data(),
                       static_cast<Eigen::Index>(b.values.size()))
                       .cast<double>();
    model.C = store.get("C").values.at(0);

    std::ifstream in(classes_path);
    if (!in) throw IoError("cannot open class list: " + classes_path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) model.classes.push_back(line);
    }
    if (model.classes.size() != static_cast<std::size_t>(model.weights.rows()))
      throw FormatError("class list does not match weight rows: " +
                        classes_path.string());
    return model;
  }
};

/// Full ranking of the model's classes by descending score. Ties keep the
/// model's class order.
struct RankedPrediction {
  std::vector<std::pair<std::string, double>> ranked;
};

namespace detail {

/// log(1 + exp(-m)), stable for large |m|.
inline double softplus_neg(double m) {
  return m > 0 ? std::log1p(std::exp(-m)) : -m + std::log1p(std::exp(m));
}

/// sigmoid(-m) = 1 / (1 + exp(m)), stable for large |m|.
inline double sigmoid_neg(double m) {
  if (m > 0) {
    const double e = std::exp(-m);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(m));
}

inline double sigmoid(double m) { return sigmoid_neg(-m); }

/// Sum_i log(1 + exp(-t_i (X_i . w + b))) given precomputed margins
/// m_i = t_i (X_i . w + b).
inline double smooth_loss_from_margins(const Eigen::VectorXd& margins) {
  double loss = 0;
  for (Eigen::Index i = 0; i < margins.size(); ++i)
    loss += softplus_neg(margins(i));
  return loss;
}

inline Eigen::VectorXd soft_threshold(const Eigen::VectorXd& v, double t) {
  return v.unaryExpr([t](double x) {
    if (x > t) return x - t;
    if (x < -t) return x + t;
    return 0.0;
  });
}

}  // namespace detail

/// Regularized objective and the gradient of its smooth part at (w, b):
/// value = sum_i log(1 + exp(-t_i (w.x_i + b))) + (1/C) ||w||_1.
/// The L1 term never contributes to the gradient; the proximal step owns it.
struct SmoothGradient {
  double objective = 0;      // smooth loss + (1/C) ||w||_1
  double smooth_loss = 0;    // smooth part alone
  Eigen::VectorXd grad_w;    // d smooth / d w
  double grad_b = 0;         // d smooth / d b
};

inline SmoothGradient objective_and_gradient(const Eigen::VectorXd& w,
                                             double b,
                                             const Eigen::MatrixXd& X,
                                             const Eigen::VectorXd& t,
                                             double C) {
  if (X.cols() != w.size() || X.rows() != t.size())
    throw InvalidArgument("objective_and_gradient shape mismatch");
  if (!(C > 0)) throw InvalidArgument("C must be positive");

  const Eigen::VectorXd z = X * w + Eigen::VectorXd::Constant(X.rows(), b);
  const Eigen::VectorXd margins = t.cwiseProduct(z);
  SmoothGradient result;
  result.smooth_loss = detail::smooth_loss_from_margins(margins);
  result.objective = result.smooth_loss + w.lpNorm<1>() / C;

  Eigen::VectorXd coeff(t.size());
  for (Eigen::Index i = 0; i < t.size(); ++i)
    coeff(i) = -t(i) * detail::sigmoid_neg(margins(i));
  result.grad_w = X.transpose() * coeff;
  result.grad_b = coeff.sum();
  return result;
}

struct SolverOptions {
  double tol = 1e-8;      // relative objective decrease
  int max_iter = 10000;
  double initial_step = 1.0;
};

struct BinaryFit {
  Eigen::VectorXd w;
  double b = 0;
  std::vector<double> objective_trace;  // value after each accepted step
  int iterations = 0;
};

/// Minimize sum_i log(1+exp(-t_i (w.x_i + b))) + (1/C)||w||_1 by proximal
/// gradient with backtracking line search. The bias is unregularized. The
/// accepted-step objective sequence is nonincreasing.
inline BinaryFit fit_binary(const Eigen::MatrixXd& X, const Eigen::VectorXd& t,
                            double C, const SolverOptions& opts = {}) {
  if (!(C > 0)) throw InvalidArgument("C must be positive");
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();

  BinaryFit fit;
  fit.w = Eigen::VectorXd::Zero(d);
  fit.b = 0;

  Eigen::VectorXd z = Eigen::VectorXd::Zero(n);  // X w + b, kept in sync
  double smooth = detail::smooth_loss_from_margins(t.cwiseProduct(z));
  double objective = smooth;  // ||0||_1 = 0
  fit.objective_trace.push_back(objective);

  double step = opts.initial_step;
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    Eigen::VectorXd coeff(n);
    const Eigen::VectorXd margins = t.cwiseProduct(z);
    for (Eigen::Index i = 0; i < n; ++i)
      coeff(i) = -t(i) * detail::sigmoid_neg(margins(i));
    const Eigen::VectorXd grad_w = X.transpose() * coeff;
    const double grad_b = coeff.sum();

    // Backtrack until the smooth part satisfies the quadratic upper bound.
    Eigen::VectorXd w_next;
    double b_next = 0, smooth_next = 0;
    Eigen::VectorXd z_next;
    for (;;) {
      w_next = detail::soft_threshold(fit.w - step * grad_w, step / C);
      b_next = fit.b - step * grad_b;
      z_next = X * w_next + Eigen::VectorXd::Constant(n, b_next);
      smooth_next = detail::smooth_loss_from_margins(t.cwiseProduct(z_next));
      const Eigen::VectorXd dw = w_next - fit.w;
      const double db = b_next - fit.b;
      const double bound = smooth + grad_w.dot(dw) + grad_b * db +
                           (dw.squaredNorm() + db * db) / (2.0 * step);
      if (smooth_next <= bound + 1e-12 * std::abs(bound)) break;
      step *= 0.5;
      if (step < 1e-18) break;  // step has collapsed; accept and stop below
    }

    const double objective_next = smooth_next + w_next.lpNorm<1>() / C;
    if (objective_next > objective) break;  // numerical floor reached

    const double decrease = objective - objective_next;
    fit.w = std::move(w_next);
    fit.b = b_next;
    z = std::move(z_next);
    smooth = smooth_next;
    objective = objective_next;
    fit.objective_trace.push_back(objective);
    fit.iterations = iter + 1;

    if (decrease < opts.tol * std::max(std::abs(objective), 1e-12)) break;
    step *= 1.25;  // regrow after conservative backtracks
  }
  return fit;
}

struct TrainOptions {
  SolverOptions solver;
  bool standardize = true;
};

/// Fit the one-vs-rest model. Features are standardized to zero mean / unit
/// variance (training statistics) before the solver; the scaling is folded
/// back into the returned weights. Per-class fits run in parallel.
inline IdentModel train(const Eigen::MatrixXd& X,
                        const std::vector<std::string>& y, double C,
                        const TrainOptions& opts = {}) {
  if (!(C > 0)) throw InvalidArgument("C must be positive");
  if (X.rows() != static_cast<Eigen::Index>(y.size()))
    throw InvalidArgument("feature/label count mismatch");
  if (!X.allFinite()) throw InvalidArgument("non-finite features");

  std::vector<std::string> classes;
  {
    std::map<std::string, int> counts;
    for (const std::string& label : y) ++counts[label];
    for (const auto& [label, count] : counts) classes.push_back(label);
    if (classes.size() < 2)
      throw InvalidArgument("training needs at least 2 classes");
  }
  if (X.rows() < static_cast<Eigen::Index>(classes.size()))
    throw InvalidArgument("fewer samples than classes");

  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(d);
  Eigen::VectorXd sigma = Eigen::VectorXd::Ones(d);
  Eigen::MatrixXd Xs = X;
  if (opts.standardize) {
    mu = X.colwise().mean();
    Xs = X.rowwise() - mu.transpose();
    for (Eigen::Index j = 0; j < d; ++j) {
      const double var = Xs.col(j).squaredNorm() / static_cast<double>(n);
      sigma(j) = var > 0 ? std::sqrt(var) : 1.0;
      Xs.col(j) /= sigma(j);
    }
  }

  IdentModel model;
  model.classes = classes;
  model.C = C;
  model.weights.resize(static_cast<Eigen::Index>(classes.size()), d);
  model.biases.resize(static_cast<Eigen::Index>(classes.size()));

  parallel_for(classes.size(), [&](std::size_t c) {
    Eigen::VectorXd t(n);
    for (Eigen::Index i = 0; i < n; ++i)
      t(i) = y[static_cast<std::size_t>(i)] == classes[c] ? 1.0 : -1.0;
    const BinaryFit fit = fit_binary(Xs, t, C, opts.solver);
    // fold the standardization back into raw-feature space
    Eigen::VectorXd w = fit.w.cwiseQuotient(sigma);
    model.weights.row(static_cast<Eigen::Index>(c)) = w.transpose();
    model.biases(static_cast<Eigen::Index>(c)) = fit.b - w.dot(mu);
  });
  return model;
}

/// Score every class and rank by descending sigmoid score; equal scores keep
/// class order.
inline RankedPrediction predict_ranked(const IdentModel& model,
                                       const Eigen::VectorXd& x) {
  if (x.size() != model.weights.cols())
    throw InvalidArgument("predict_ranked dimension mismatch");
  const Eigen::VectorXd margins = model.weights * x + model.biases;
  std::vector<std::size_t> order(model.classes.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return margins(static_cast<Eigen::Index>(a)) >
           margins(static_cast<Eigen::Index>(b));
  });
  RankedPrediction prediction;
  for (std::size_t i : order)
    prediction.ranked.emplace_back(
        model.classes[i],
        detail::sigmoid(margins(static_cast<Eigen::Index>(i))));
  return prediction;
}

struct GridSearchResult {
  double best_C = 0;
  std::vector<std::pair<double, double>> accuracy_per_C;  // (C, mean accuracy)
};

/// Stratified cross-validation over a C grid. Best C is the highest mean
/// accuracy; ties go to the larger C (weaker regularization).
inline GridSearchResult grid_search(const Eigen::MatrixXd& X,
                                    const std::vector<std::string>& y,
                                    const std::vector<double>& C_grid,
                                    int n_folds, std::uint64_t seed,
                                    const TrainOptions& opts = {}) {
  if (C_grid.empty()) throw InvalidArgument("empty C grid");
  if (n_folds < 2) throw InvalidArgument("n_folds must be >= 2");
  for (double c : C_grid)
    if (!(c > 0)) throw InvalidArgument("grid C values must be positive");

  // Stratified fold assignment: per class, shuffle then deal round-robin.
  std::map<std::string, std::vector<Eigen::Index>> by_class;
  for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(y.size()); ++i)
    by_class[y[static_cast<std::size_t>(i)]].push_back(i);
  std::vector<int> fold_of(y.size(), 0);
  Rng rng(derive_seed(seed, 0xF01D5ULL));
  for (auto& [label, indices] : by_class) {
    if (static_cast<int>(indices.size()) < n_folds)
      throw InvalidArgument("class '" + label + "' has fewer members (" +
                            std::to_string(indices.size()) + ") than folds");
    rng.shuffle(indices);
    for (std::size_t i = 0; i < indices.size(); ++i)
      fold_of[static_cast<std::size_t>(indices[i])] =
          static_cast<int>(i % static_cast<std::size_t>(n_folds));
  }

  GridSearchResult result;
  for (double C : C_grid) {
    double accuracy_sum = 0;
    for (int fold = 0; fold < n_folds; ++fold) {
      std::vector<Eigen::Index> train_idx, val_idx;
      for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(y.size()); ++i)
        (fold_of[static_cast<std::size_t>(i)] == fold ? val_idx : train_idx)
            .push_back(i);
      Eigen::MatrixXd X_train(train_idx.size(), X.cols());
      std::vector<std::string> y_train;
      y_train.reserve(train_idx.size());
      for (std::size_t i = 0; i < train_idx.size(); ++i) {
        X_train.row(static_cast<Eigen::Index>(i)) = X.row(train_idx[i]);
        y_train.push_back(y[static_cast<std::size_t>(train_idx[i])]);
      }
      const IdentModel model = train(X_train, y_train, C, opts);
      int correct = 0;
      for (Eigen::Index i : val_idx) {
        const RankedPrediction p = predict_ranked(model, X.row(i).transpose());
        if (p.ranked.front().first == y[static_cast<std::size_t>(i)])
          ++correct;
      }
      accuracy_sum += static_cast<double>(correct) /
                      static_cast<double>(val_idx.size());
    }
    const double mean_accuracy = accuracy_sum / n_folds;
    result.accuracy_per_C.emplace_back(C, mean_accuracy);
  }

  result.best_C = result.accuracy_per_C.front().first;
  double best = result.accuracy_per_C.front().second;
  for (const auto& [C, acc] : result.accuracy_per_C)
    if (acc > best || (acc == best && C > result.best_C)) {
      best = acc;
      result.best_C = C;
    }
  return result;
}

}  // namespace patternid
