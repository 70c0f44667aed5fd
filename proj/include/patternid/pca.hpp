// Copyright (c) 2026 the patternid authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <vector>

#include <Eigen/Dense>

#include "patternid/errors.hpp"
#include "patternid/tensor_io.hpp"

namespace patternid {

/// Fitted PCA basis: component rows are orthonormal and ordered by
/// descending variance; k is the smallest count whose cumulative variance
/// ratio reaches the energy threshold.
struct PCAModel {
  Eigen::VectorXd mean;
  Eigen::MatrixXd components;          // k x d
  Eigen::VectorXd explained_variance;  // k, nonincreasing
  double energy_threshold = 0.99;
  double total_variance = 0.0;

  int k() const { return static_cast<int>(components.rows()); }
  int dim() const { return static_cast<int>(components.cols()); }

  void save(const std::filesystem::path& path) const {
    WeightStore store;
    store.put("mean", {static_cast<std::uint64_t>(mean.size())},
              std::vector<float>(mean.data(), mean.data() + mean.size()));
    std::vector<float> comp(static_cast<std::size_t>(components.size()));
    for (int r = 0; r < components.rows(); ++r)
      for (int c = 0; c < components.cols(); ++c)
        comp[static_cast<std::size_t>(r) * components.cols() + c] =
            static_cast<float>(components(r, c));
    store.put("components",
              {static_cast<std::uint64_t>(components.rows()),
               static_cast<std::uint64_t>(components.cols())},
              std::move(comp));
    store.put("explained_variance",
              {static_cast<std::uint64_t>(explained_variance.size())},
              std::vector<float>(
                  explained_variance.data(),
                  explained_variance.data() + explained_variance.size()));
    store.put("energy_threshold", {1},
              {static_cast<float>(energy_threshold)});
    store.put("total_variance", {1}, {static_cast<float>(total_variance)});
    store.save(path);
  }

  static PCAModel load(const std::filesystem::path& path) {
    const WeightStore store = WeightStore::load(path);
    PCAModel model;
    const NamedTensor& mean = store.get("mean");
    model.mean = Eigen::Map<const Eigen::VectorXf>(
                     mean.values.data(),
                     static_cast<Eigen::Index>(mean.values.size()))
                     .cast<double>();
    const NamedTensor& comp = store.get("components");
    if (comp.shape.size() != 2)
      throw FormatError("components tensor must be 2-D: " + path.string());
    model.components =
        Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                       Eigen::RowMajor>>(
            comp.values.data(), static_cast<Eigen::Index>(comp.shape[0]),
            static_cast<Eigen::Index>(comp.shape[1]))
            .cast<double>();
    const NamedTensor& ev = store.get("explained_variance");
    model.explained_variance =
        Eigen::Map<const Eigen::VectorXf>(
            ev.values.data(), static_cast<Eigen::Index>(ev.values.size()))
            .cast<double>();
    model.energy_threshold = store.get("energy_threshold").values.at(0);
    model.total_variance = store.get("total_variance").values.at(0);
    return model;
  }
};

namespace detail {

/// Flip each component row so its largest-magnitude entry is positive.
inline void fix_component_signs(Eigen::MatrixXd& components) {
  for (int r = 0; r < components.rows(); ++r) {
    Eigen::Index max_idx = 0;
    components.row(r).cwiseAbs().maxCoeff(&max_idx);
    if (components(r, max_idx) < 0) components.row(r) = -components.row(r);
  }
}

}  // namespace detail

/// Fit PCA on the rows of X, retaining the smallest number of components
/// whose cumulative variance ratio reaches energy_threshold. For d > n the
/// n x n Gram matrix is decomposed instead of the d x d covariance; both
/// routes produce the same spectrum.
inline PCAModel pca_fit(const Eigen::MatrixXd& X, double energy_threshold) {
  const Eigen::Index n = X.rows();
  const Eigen::Index d = X.cols();
  if (n < 2) throw InvalidArgument("pca_fit needs at least 2 samples");
  if (!(energy_threshold > 0.0 && energy_threshold <= 1.0))
    throw InvalidArgument("energy_threshold must be in (0, 1]");
  if (!X.allFinite()) throw InvalidArgument("non-finite feature matrix");

  PCAModel model;
  model.energy_threshold = energy_threshold;
  model.mean = X.colwise().mean();
  const Eigen::MatrixXd centered = X.rowwise() - model.mean.transpose();

  // Centering leaves at most min(n-1, d) directions with variance.
  const Eigen::Index rank_limit = std::min<Eigen::Index>(n - 1, d);
  Eigen::VectorXd eigenvalues;   // descending
  Eigen::MatrixXd components;    // rows
  if (d <= n) {
    const Eigen::MatrixXd cov =
        centered.transpose() * centered / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
    if (solver.info() != Eigen::Success)
      throw Error("eigendecomposition failed");
    eigenvalues = solver.eigenvalues().reverse();
    components = solver.eigenvectors().rowwise().reverse().transpose();
  } else {
    const Eigen::MatrixXd gram =
        centered * centered.transpose() / static_cast<double>(n - 1);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(gram);
    if (solver.info() != Eigen::Success)
      throw Error("eigendecomposition failed");
    eigenvalues = solver.eigenvalues().reverse();
    const Eigen::MatrixXd u = solver.eigenvectors().rowwise().reverse();
    components.resize(n, d);
    for (Eigen::Index i = 0; i < n; ++i) {
      // v_i = X_c^T u_i / sqrt(lambda_i (n-1)); skip the null directions
      const double lambda = eigenvalues(i);
      if (lambda <= 0) {
        components.row(i).setZero();
        continue;
      }
      components.row(i) = (centered.transpose() * u.col(i)).transpose() /
                          std::sqrt(lambda * static_cast<double>(n - 1));
    }
  }

  double total = 0;
  for (Eigen::Index i = 0; i < eigenvalues.size(); ++i)
    total += std::max(0.0, eigenvalues(i));
  model.total_variance = total;

  // Usable spectrum: positive eigenvalues up to the centering rank limit.
  Eigen::Index available = std::min(rank_limit, eigenvalues.size());
  while (available > 1 && eigenvalues(available - 1) <= total * 1e-12)
    --available;

  Eigen::Index k = available;
  if (total > 0) {
    double cumulative = 0;
    for (Eigen::Index i = 0; i < available; ++i) {
      cumulative += std::max(0.0, eigenvalues(i));
      if (cumulative / total >= energy_threshold - 1e-12) {
        k = i + 1;
        break;
      }
    }
  } else {
    k = 1;  // degenerate: all rows identical
  }

  model.explained_variance = eigenvalues.head(k).cwiseMax(0.0);
  model.components = components.topRows(k);
  if (total <= 0) {
    // no variance anywhere: fall back to an arbitrary unit direction
    model.components.setZero();
    model.components(0, 0) = 1.0;
  }
  detail::fix_component_signs(model.components);
  return model;
}

/// Project one d-vector: components * (x - mean).
inline Eigen::VectorXd pca_transform(const PCAModel& model,
                                     const Eigen::VectorXd& x) {
  if (x.size() != model.mean.size())
    throw InvalidArgument("pca_transform dimension mismatch");
  return model.components * (x - model.mean);
}

/// Project the rows of an n x d matrix to n x k.
inline Eigen::MatrixXd pca_transform(const PCAModel& model,
                                     const Eigen::MatrixXd& X) {
  if (X.cols() != model.mean.size())
    throw InvalidArgument("pca_transform dimension mismatch");
  return (X.rowwise() - model.mean.transpose()) * model.components.transpose();
}

/// Reconstruct: mean + components^T * z.
inline Eigen::VectorXd pca_inverse(const PCAModel& model,
                                   const Eigen::VectorXd& z) {
  if (z.size() != model.components.rows())
    throw InvalidArgument("pca_inverse dimension mismatch");
  return model.mean + model.components.transpose() * z;
}

}  // namespace patternid
