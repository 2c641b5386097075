#pragma once

#include <Eigen/SparseCore>

#include <cstdint>
#include <string>
#include <type_traits>

#include <json.hpp>

#include "skm/core.hpp"
#include "skm/kernels.hpp"

namespace skm {

enum class SketchKind {
  PSparseRademacher,  // p-SR
  PSparseGaussian,    // p-SG
  Gaussian,           // dense, same law as p-SG with p = 1
  Rademacher,         // dense, same law as p-SR with p = 1
  SubSampling,        // s distinct columns, scaled sqrt(n / s)
  Accumulation,       // sum of m signed sub-sampling matrices
  CountSketch,        // one +-1 per column
  Explicit            // user-supplied matrix, not reproducible from a record
};

std::string to_string(SketchKind kind);
SketchKind sketch_kind_from_string(const std::string& name);

// Everything needed to regenerate an operator bit-for-bit.
struct SketchRecord {
  SketchKind kind = SketchKind::Gaussian;
  Index s = 1;
  Index n = 2;
  double p = 1.0;
  int m = 1;
  std::uint64_t seed = 0;

  void validate() const;
  bool operator==(const SketchRecord&) const = default;
};

nlohmann::json to_json(const SketchRecord& record);
SketchRecord sketch_record_from_json(const nlohmann::json& j);

// An s x n sketch stored as S = mixing * selection, where selection keeps
// the strictly increasing column positions `indices` (every nonzero column
// of S) and mixing is the s x s' matrix of those columns.
class SketchOperator {
 public:
  SketchOperator(SketchRecord record, MatrixXd mixing, IndexList indices);

  // Builds an Explicit operator by deleting the null columns of S.
  static SketchOperator from_dense(const MatrixXd& S);

  const SketchRecord& record() const { return record_; }
  SketchKind kind() const { return record_.kind; }
  Index rows() const { return record_.s; }
  Index cols() const { return record_.n; }
  const MatrixXd& mixing() const { return mixing_; }
  const IndexList& indices() const { return indices_; }
  Index active_columns() const { return static_cast<Index>(indices_.size()); }

  // Sub-sampling operators have mixing = c * I; application then reduces to
  // scaled row selection.
  bool is_selection() const { return selection_scale_ != 0; }
  double selection_scale() const { return selection_scale_; }
  bool has_sparse_mixing() const { return use_sparse_; }
  const Eigen::SparseMatrix<double>& sparse_mixing() const { return sparse_mixing_; }

  // Dense s x n matrix; for tests and small diagnostics.
  MatrixXd dense() const;

  // S * A for A with n rows, touching only the active rows of A.
  template <typename Derived>
  Matrix<typename Derived::Scalar> apply(const Eigen::MatrixBase<Derived>& A) const {
    using Scalar = typename Derived::Scalar;
    require(A.rows() == cols(), "SketchOperator::apply: row count must equal n");
    const Matrix<Scalar> rows = A(indices_, Eigen::all);
    return mix_left<Scalar>(rows);
  }

  // mixing * B for B with s' rows.
  template <typename Scalar>
  Matrix<Scalar> mix_left(const Matrix<Scalar>& B) const {
    if (is_selection()) return static_cast<Scalar>(selection_scale_) * B;
    if constexpr (std::is_same_v<Scalar, double>) {
      if (use_sparse_) return sparse_mixing_ * B;
      return mixing_ * B;
    } else {
      return mixing_.template cast<Scalar>() * B;
    }
  }

 private:
  SketchRecord record_;
  MatrixXd mixing_;
  IndexList indices_;
  Eigen::SparseMatrix<double> sparse_mixing_;
  bool use_sparse_ = false;
  double selection_scale_ = 0;
};

// Seeded generation; deterministic given the record. Throws NumericalError
// when a sparsified draw leaves every column null.
SketchOperator generate_sketch(const SketchRecord& record);

// Entrywise dense draw of a p-SR / p-SG / Gaussian / Rademacher sketch,
// independent of the column-deletion path used by generate_sketch.
MatrixXd draw_dense_sketch(const SketchRecord& record);

// n (1 - (1 - p)^s).
double expected_active_columns(double s, double n, double p);

// Fraction of active columns when s = c0_dn / p^2: 1 - (1 - p)^(c0_dn / p^2).
double sparsity_cost(double c0_dn, double p);

// argmin over p in (0, 1] of sparsity_cost.
double optimal_sparsity(double c0_dn);

// ---------------------------------------------------------------------------
// Sketched Gram products. Both evaluate kernel rows only at the active
// indices, in blocks, so the n x n Gram matrix is never held in memory.

inline constexpr Index kGramBlock = 256;

// S K, s x n.
template <typename Derived>
Matrix<typename Derived::Scalar> sketch_gram_left(const SketchOperator& S, const KernelSpec& spec,
                                                  const Eigen::MatrixBase<Derived>& X) {
  using Scalar = typename Derived::Scalar;
  require(S.cols() == X.rows(), "sketch_gram_left: sketch width must equal number of points");
  const Index n = X.rows();
  const IndexList& idx = S.indices();
  const Index active = static_cast<Index>(idx.size());
  if (S.is_selection()) {
    return static_cast<Scalar>(S.selection_scale()) * gram_rows(spec, X, idx);
  }
  Matrix<Scalar> out = Matrix<Scalar>::Zero(S.rows(), n);
  for (Index b = 0; b < active; b += kGramBlock) {
    const Index len = std::min(kGramBlock, active - b);
    const IndexList block(idx.begin() + b, idx.begin() + b + len);
    const Matrix<Scalar> rows = gram_rows(spec, X, block);
    if constexpr (std::is_same_v<Scalar, double>) {
      if (S.has_sparse_mixing()) {
        out += S.sparse_mixing().middleCols(b, len) * rows;
        continue;
      }
    }
    out += S.mixing().middleCols(b, len).template cast<Scalar>() * rows;
  }
  return out;
}

// S K S^T, s x s, symmetrized.
template <typename Derived>
Matrix<typename Derived::Scalar> sketch_gram_both(const SketchOperator& S, const KernelSpec& spec,
                                                  const Eigen::MatrixBase<Derived>& X) {
  using Scalar = typename Derived::Scalar;
  require(S.cols() == X.rows(), "sketch_gram_both: sketch width must equal number of points");
  const IndexList& idx = S.indices();
  const Index active = static_cast<Index>(idx.size());
  const Matrix<Scalar> Xa = X(idx, Eigen::all);
  Matrix<Scalar> out;
  if (S.is_selection()) {
    const Scalar c = static_cast<Scalar>(S.selection_scale());
    out = (c * c) * gram(spec, Xa);
  } else {
    out = Matrix<Scalar>::Zero(S.rows(), S.rows());
    const Matrix<Scalar> mixT = S.mixing().transpose().template cast<Scalar>();
    for (Index b = 0; b < active; b += kGramBlock) {
      const Index len = std::min(kGramBlock, active - b);
      const Matrix<Scalar> rows = gram_cross(spec, Xa.middleRows(b, len), Xa);
      const Matrix<Scalar> partial = rows * mixT;  // len x s
      out += mixT.middleRows(b, len).transpose() * partial;
    }
  }
  return Scalar(0.5) * (out + out.transpose());
}

// ---------------------------------------------------------------------------
// Random Fourier features for the Gaussian kernel exp(-|x - x'|^2 / bandwidth):
// frequencies ~ N(0, (2 / bandwidth) I), paired cos / sin features.
class RandomFeatureMap {
 public:
  RandomFeatureMap(const KernelSpec& spec, Index num_features, Index input_dim,
                   std::uint64_t seed);

  Index size() const { return 2 * frequencies_.cols(); }
  Index input_dim() const { return frequencies_.rows(); }
  std::uint64_t seed() const { return seed_; }
  const MatrixXd& frequencies() const { return frequencies_; }

  // n x num_features.
  MatrixXd features(const MatrixXd& X) const;

 private:
  MatrixXd frequencies_;  // q x (num_features / 2)
  std::uint64_t seed_;
};

MatrixXd rff_features(const KernelSpec& spec, Index num_features, const MatrixXd& X,
                      std::uint64_t seed);

}  // namespace skm
