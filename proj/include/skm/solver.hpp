#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "skm/core.hpp"
#include "skm/kernels.hpp"
#include "skm/losses.hpp"
#include "skm/sketch.hpp"

namespace skm {

inline constexpr double kRankTolerance = 1e-10;

struct AdamConfig {
  double step = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  Index batch = 256;
  int epochs = 100;
  std::uint64_t seed = 0;
  // Step at epoch e is step / (1 + decay * e); 0 keeps it constant.
  double decay = 0.0;

  void validate() const;
};

struct AdamTrace {
  std::vector<double> objective;  // [0] at the initial point, then one per epoch
  double best = 0;
  int best_epoch = 0;
};

// Regularized ERM that is linear in the parameters W (p x d):
//
//   (1/n) sum_i l([Z W M]_i, y_i) + (lambda / 2) tr(W^T R W M)
//
// Z is n x p, M is d x d (empty means d = 1) and R is p x p PSD (empty means
// identity). The sketched feature-map problem, the direct sketched
// coefficients and the unsketched baselines are all instances. The problem
// refers to Z, R, M and Y without copying them.
class LinearErmProblem {
 public:
  LinearErmProblem(const MatrixXd& Z, const MatrixXd& Y, LossSpec loss, double lambda,
                   const MatrixXd* M = nullptr, const MatrixXd* R = nullptr);

  Index samples() const { return Z_->rows(); }
  Index params() const { return Z_->cols(); }
  Index outputs() const { return d_; }
  const LossSpec& loss() const { return loss_; }

  MatrixXd predictions(const MatrixXd& W) const;  // n x d
  double regularizer(const MatrixXd& W) const;    // tr(W^T R W M)
  double objective(const MatrixXd& W) const;
  // Subgradient of the objective with the data term averaged over `batch`.
  MatrixXd gradient(const MatrixXd& W, std::span<const Index> batch) const;
  MatrixXd gradient(const MatrixXd& W) const;

 private:
  MatrixXd apply_output(const MatrixXd& A) const;  // A M
  MatrixXd apply_reg(const MatrixXd& W) const;     // R W

  const MatrixXd* Z_;
  const MatrixXd* Y_;
  const MatrixXd* M_;
  const MatrixXd* R_;
  LossSpec loss_;
  double lambda_;
  Index d_;
};

struct AdamResult {
  MatrixXd W;  // best iterate by full objective at epoch ends
  AdamTrace trace;
};

// Minibatch ADAM with deterministic shuffling from config.seed. Throws
// NumericalError if the objective becomes non-finite.
AdamResult adam_minimize(const LinearErmProblem& problem, MatrixXd W0, const AdamConfig& config);

// Pseudo-inverse of a symmetric PSD matrix, cutting eigenvalues at
// tol * largest.
MatrixXd symmetric_pinv(const MatrixXd& A, double tol = kRankTolerance);

// ---------------------------------------------------------------------------
// Sketched feature maps z_S(x) = Kr^T S k_x, Kr = U_r D_r^{-1/2} from the
// eigenpairs of S K S^T.

struct FeatureMapState {
  Index rank = 0;
  MatrixXd whitening;     // Kr, s x r
  MatrixXd sketched_gram; // S K, s x n
  VectorXd eigenvalues;   // of S K S^T, descending
  MatrixXd eigenvectors;  // matching columns

  // Rows are z_S(x_i) for the training points, n x r.
  MatrixXd train_features() const { return sketched_gram.transpose() * whitening; }
};

// From precomputed S K S^T (s x s) and S K (s x n). Throws NumericalError
// when S K S^T is numerically zero.
FeatureMapState feature_maps_from_parts(const MatrixXd& sks, MatrixXd sk,
                                        double rank_tol = kRankTolerance);

FeatureMapState build_feature_maps(const SketchOperator& S, const KernelSpec& spec,
                                   const MatrixXd& X, double rank_tol = kRankTolerance);

// Kr^T S k for a kernel column k against the n training points.
VectorXd featurize_column(const FeatureMapState& state, const SketchOperator& S,
                          const VectorXd& kernel_column);

// z_S(x); evaluates the kernel only at the s' active training points.
VectorXd featurize(const FeatureMapState& state, const SketchOperator& S,
                   const KernelSpec& spec, const MatrixXd& X_train, const VectorXd& x);

// ---------------------------------------------------------------------------

enum class ModelKind {
  ScalarSketched,       // f(x) = gamma^T S k_x
  MultiOutputSketched,  // f(x) = M Gamma^T S k_x
  ScalarExact,          // f(x) = alpha^T k_x
  MultiOutputExact,     // f(x) = M A^T k_x
  RandomFeatures        // f(x) = M W^T z_rff(x)
};

std::string to_string(ModelKind kind);

class FittedModel {
 public:
  ModelKind kind = ModelKind::ScalarExact;
  KernelSpec kernel;
  LossSpec loss;
  double lambda = 0;
  MatrixXd coefficients;  // gamma | Gamma | alpha | A | W
  MatrixXd output_matrix; // d x d; 1 x 1 for scalar models
  std::optional<SketchOperator> sketch;
  std::optional<RandomFeatureMap> random_features;
  MatrixXd feature_weights;  // omega of the feature-map problem, when fitted that way
  double final_objective = 0;
  AdamTrace trace;

  Index output_dim() const { return output_matrix.rows(); }
  Index train_size() const { return train_size_; }
  std::uint64_t train_hash() const { return train_hash_; }

  // Retains the training inputs needed for prediction.
  void attach_training_inputs(const MatrixXd& X_train);

  // Prediction for one point, d entries.
  VectorXd predict_point(const VectorXd& x) const;

 private:
  Matrix<double> support_;  // q x m training points the kernel is evaluated at
  Index train_size_ = 0;
  std::uint64_t train_hash_ = 0;
};

// Rows of predictions, n_new x d; equals predict_point row by row.
MatrixXd predict(const FittedModel& model, const MatrixXd& X_new);

// The fitted problem's objective evaluated on (X, Y), using the model's own
// prediction path for the data term and its RKHS norm for the penalty.
double training_objective(const FittedModel& model, const MatrixXd& X, const MatrixXd& Y);

// S K and S K S^T, the only kernel quantities the sketched fits need.
struct SketchedGram {
  MatrixXd sk;   // s x n
  MatrixXd sks;  // s x s
};
SketchedGram sketched_gram(const SketchOperator& S, const KernelSpec& spec, const MatrixXd& X);

FittedModel fit_scalar_sketched(const KernelSpec& spec, const MatrixXd& X, const VectorXd& y,
                                const LossSpec& loss, double lambda, const SketchOperator& S,
                                const AdamConfig& adam);
FittedModel fit_scalar_sketched(const KernelSpec& spec, const MatrixXd& X, const VectorXd& y,
                                const LossSpec& loss, double lambda, const SketchOperator& S,
                                const SketchedGram& parts, const AdamConfig& adam);

// Closed-form sketched square-loss solution
// gamma = (SK KS^T + lambda n SKS^T)^+ SK y.
FittedModel solve_krr_sketched(const KernelSpec& spec, const MatrixXd& X, const VectorXd& y,
                               double lambda, const SketchOperator& S);

FittedModel fit_multioutput_sketched(const KernelSpec& spec, const MatrixXd& X,
                                     const MatrixXd& Y, const OutputMatrix& M,
                                     const LossSpec& loss, double lambda,
                                     const SketchOperator& S, const AdamConfig& adam);
FittedModel fit_multioutput_sketched(const KernelSpec& spec, const MatrixXd& X,
                                     const MatrixXd& Y, const OutputMatrix& M,
                                     const LossSpec& loss, double lambda,
                                     const SketchOperator& S, const SketchedGram& parts,
                                     const AdamConfig& adam);

// Unsketched baseline. Optimizes in the coordinates A = U_r D_r^{-1/2} W of
// the full Gram eigendecomposition, which spans every attainable K A.
FittedModel fit_exact(const KernelSpec& spec, const MatrixXd& X, const MatrixXd& Y,
                      const std::optional<OutputMatrix>& M, const LossSpec& loss,
                      double lambda, const AdamConfig& adam);
// Same, with the Gram matrix of X precomputed.
FittedModel fit_exact(const KernelSpec& spec, const MatrixXd& X, const MatrixXd& K,
                      const MatrixXd& Y, const std::optional<OutputMatrix>& M,
                      const LossSpec& loss, double lambda, const AdamConfig& adam);

// alpha = (K + lambda n I)^{-1} y.
FittedModel solve_krr_exact(const KernelSpec& spec, const MatrixXd& X, const VectorXd& y,
                            double lambda);

// Linear model on random Fourier features (Gaussian kernel only).
FittedModel fit_random_features(const KernelSpec& spec, const MatrixXd& X, const MatrixXd& Y,
                                const std::optional<OutputMatrix>& M, const LossSpec& loss,
                                double lambda, Index num_features, std::uint64_t seed,
                                const AdamConfig& adam);

// ---------------------------------------------------------------------------
// Serialization: coefficients, kernel, loss, sketch record and a hash of the
// training inputs. Loading needs the same training inputs.

std::uint64_t hash_inputs(const MatrixXd& X);
nlohmann::json to_json(const FittedModel& model);
FittedModel model_from_json(const nlohmann::json& j, const MatrixXd& X_train);

nlohmann::json to_json(const KernelSpec& spec);
KernelSpec kernel_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossSpec& spec);
LossSpec loss_from_json(const nlohmann::json& j);

}  // namespace skm
