#include "skm/solver.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <cstring>
#include <numeric>
#include <sstream>

#include "skm/random.hpp"

namespace skm {

void AdamConfig::validate() const {
  require(step > 0, "adam: step size must be positive");
  require(beta1 >= 0 && beta1 < 1, "adam: beta1 must lie in [0, 1)");
  require(beta2 >= 0 && beta2 < 1, "adam: beta2 must lie in [0, 1)");
  require(epsilon > 0, "adam: epsilon must be positive");
  require(batch >= 1, "adam: batch size must be >= 1");
  require(epochs >= 0, "adam: epochs must be >= 0");
  require(decay >= 0, "adam: decay must be >= 0");
}

// ---------------------------------------------------------------------------
// LinearErmProblem

LinearErmProblem::LinearErmProblem(const MatrixXd& Z, const MatrixXd& Y, LossSpec loss,
                                   double lambda, const MatrixXd* M, const MatrixXd* R)
    : Z_(&Z), Y_(&Y), M_(M), R_(R), loss_(std::move(loss)), lambda_(lambda) {
  loss_.validate();
  require(lambda_ > 0, "regularization lambda must be positive");
  require(Z.rows() >= 1, "ERM problem: no samples");
  require(Y.rows() == Z.rows(), "ERM problem: targets must have one row per sample");
  d_ = (M_ && M_->size() > 0) ? M_->rows() : 1;
  if (M_ && M_->size() > 0) require(M_->cols() == d_, "ERM problem: M must be square");
  require(loss_.output_dim == d_, "ERM problem: loss dimension must match M");
  require(Y.cols() == loss_.target_dim(), "ERM problem: target width mismatch");
  if (R_ && R_->size() > 0) {
    require(R_->rows() == Z.cols() && R_->cols() == Z.cols(),
            "ERM problem: R must be p x p with p the feature count");
  }
}

MatrixXd LinearErmProblem::apply_output(const MatrixXd& A) const {
  if (M_ && M_->size() > 0) return A * (*M_);
  return A;
}

MatrixXd LinearErmProblem::apply_reg(const MatrixXd& W) const {
  if (R_ && R_->size() > 0) return (*R_) * W;
  return W;
}

MatrixXd LinearErmProblem::predictions(const MatrixXd& W) const {
  return apply_output((*Z_) * W);
}

double LinearErmProblem::regularizer(const MatrixXd& W) const {
  return (W.transpose() * apply_reg(W) * (M_ && M_->size() > 0 ? *M_ : MatrixXd::Ones(1, 1)))
      .trace();
}

double LinearErmProblem::objective(const MatrixXd& W) const {
  require(W.rows() == params() && W.cols() == d_, "ERM problem: parameter shape mismatch");
  const MatrixXd P = predictions(W);
  double data = 0;
  for (Index i = 0; i < P.rows(); ++i) {
    data += loss_value(loss_, P.row(i).transpose(), Y_->row(i).transpose());
  }
  return data / static_cast<double>(samples()) + 0.5 * lambda_ * regularizer(W);
}

MatrixXd LinearErmProblem::gradient(const MatrixXd& W, std::span<const Index> batch) const {
  require(W.rows() == params() && W.cols() == d_, "ERM problem: parameter shape mismatch");
  require(!batch.empty(), "ERM problem: empty batch");
  const IndexList rows(batch.begin(), batch.end());
  const MatrixXd Zb = (*Z_)(rows, Eigen::all);
  const MatrixXd Pb = apply_output(Zb * W);
  MatrixXd G(static_cast<Index>(rows.size()), d_);
  for (Index k = 0; k < G.rows(); ++k) {
    G.row(k) = loss_subgradient(loss_, Pb.row(k).transpose(), Y_->row(rows[k]).transpose())
                   .transpose();
  }
  MatrixXd grad = apply_output(Zb.transpose() * G) / static_cast<double>(rows.size());
  grad += lambda_ * apply_output(apply_reg(W));
  return grad;
}

MatrixXd LinearErmProblem::gradient(const MatrixXd& W) const {
  std::vector<Index> all(static_cast<size_t>(samples()));
  std::iota(all.begin(), all.end(), Index{0});
  return gradient(W, all);
}

// ---------------------------------------------------------------------------
// ADAM

AdamResult adam_minimize(const LinearErmProblem& problem, MatrixXd W0, const AdamConfig& config) {
  config.validate();
  const Index n = problem.samples();
  const Index batch = std::min(config.batch, n);
  AdamResult result;
  MatrixXd W = std::move(W0);
  MatrixXd m = MatrixXd::Zero(W.rows(), W.cols());
  MatrixXd v = MatrixXd::Zero(W.rows(), W.cols());

  double current = problem.objective(W);
  if (!std::isfinite(current)) throw NumericalError("adam: non-finite objective at start");
  result.W = W;
  result.trace.objective.push_back(current);
  result.trace.best = current;
  result.trace.best_epoch = 0;

  double pow1 = 1, pow2 = 1;
  for (int epoch = 1; epoch <= config.epochs; ++epoch) {
    const double step = config.step / (1.0 + config.decay * (epoch - 1));
    Rng rng(config.seed, static_cast<std::uint64_t>(epoch));
    const auto order = rng.permutation(static_cast<std::uint64_t>(n));
    std::vector<Index> idx(order.begin(), order.end());
    for (Index start = 0; start < n; start += batch) {
      const Index len = std::min(batch, n - start);
      const MatrixXd g =
          problem.gradient(W, std::span<const Index>(idx.data() + start, static_cast<size_t>(len)));
      m = config.beta1 * m + (1 - config.beta1) * g;
      v = config.beta2 * v + (1 - config.beta2) * g.cwiseProduct(g);
      pow1 *= config.beta1;
      pow2 *= config.beta2;
      const double c1 = 1 - pow1, c2 = 1 - pow2;
      W.array() -= step * (m.array() / c1) / ((v.array() / c2).sqrt() + config.epsilon);
    }
    current = problem.objective(W);
    result.trace.objective.push_back(current);
    if (!std::isfinite(current)) {
      std::ostringstream msg;
      msg << "adam: objective diverged at epoch " << epoch << "; trace:";
      for (double o : result.trace.objective) msg << ' ' << o;
      throw NumericalError(msg.str());
    }
    if (current < result.trace.best) {
      result.trace.best = current;
      result.trace.best_epoch = epoch;
      result.W = W;
    }
  }
  return result;
}

MatrixXd symmetric_pinv(const MatrixXd& A, double tol) {
  require(A.rows() == A.cols(), "symmetric_pinv: matrix must be square");
  if (A.size() == 0) return A;
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(0.5 * (A + A.transpose()));
  const VectorXd& ev = eig.eigenvalues();
  const double cut = tol * std::max(0.0, ev.cwiseAbs().maxCoeff());
  VectorXd inv(ev.size());
  for (Index i = 0; i < ev.size(); ++i) inv[i] = std::abs(ev[i]) > cut ? 1.0 / ev[i] : 0.0;
  return eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose();
}

// ---------------------------------------------------------------------------
// Feature maps

FeatureMapState feature_maps_from_parts(const MatrixXd& sks, MatrixXd sk, double rank_tol) {
  require(sks.rows() == sks.cols(), "feature maps: S K S^T must be square");
  require(sk.rows() == sks.rows(), "feature maps: S K must have s rows");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(sks);
  if (eig.info() != Eigen::Success) throw NumericalError("feature maps: eigensolver failed");
  FeatureMapState state;
  state.eigenvalues = eig.eigenvalues().reverse();
  state.eigenvectors = eig.eigenvectors().rowwise().reverse();
  const double top = state.eigenvalues.size() ? state.eigenvalues[0] : 0.0;
  if (!(top > 0)) throw NumericalError("feature maps: S K S^T is numerically zero (rank 0)");
  Index r = 0;
  while (r < state.eigenvalues.size() && state.eigenvalues[r] > rank_tol * top) ++r;
  state.rank = r;
  state.whitening = state.eigenvectors.leftCols(r) *
                    state.eigenvalues.head(r).cwiseSqrt().cwiseInverse().asDiagonal();
  state.sketched_gram = std::move(sk);
  return state;
}

FeatureMapState build_feature_maps(const SketchOperator& S, const KernelSpec& spec,
                                   const MatrixXd& X, double rank_tol) {
  require(S.cols() == X.rows(), "build_feature_maps: sketch width must equal n");
  MatrixXd sk = sketch_gram_left(S, spec, X);
  const MatrixXd sks = sketch_gram_both(S, spec, X);
  return feature_maps_from_parts(sks, std::move(sk), rank_tol);
}

VectorXd featurize_column(const FeatureMapState& state, const SketchOperator& S,
                          const VectorXd& kernel_column) {
  require(kernel_column.size() == S.cols(), "featurize: kernel column must have n entries");
  require(state.whitening.rows() == S.rows(), "featurize: state and sketch disagree on s");
  return state.whitening.transpose() * S.apply(kernel_column);
}

VectorXd featurize(const FeatureMapState& state, const SketchOperator& S,
                   const KernelSpec& spec, const MatrixXd& X_train, const VectorXd& x) {
  require(X_train.rows() == S.cols(), "featurize: sketch width must equal n");
  require(x.size() == X_train.cols(), "featurize: input dimension mismatch");
  const MatrixXd active = X_train(S.indices(), Eigen::all);
  const MatrixXd k = gram_cross(spec, active, x.transpose());
  return state.whitening.transpose() * S.mix_left(k);
}

// ---------------------------------------------------------------------------
// Models

std::string to_string(ModelKind kind) {
  switch (kind) {
    case ModelKind::ScalarSketched: return "scalar_sketched";
    case ModelKind::MultiOutputSketched: return "multioutput_sketched";
    case ModelKind::ScalarExact: return "scalar_exact";
    case ModelKind::MultiOutputExact: return "multioutput_exact";
    case ModelKind::RandomFeatures: return "random_features";
  }
  return "unknown";
}

namespace {

ModelKind model_kind_from_string(const std::string& name) {
  for (auto k : {ModelKind::ScalarSketched, ModelKind::MultiOutputSketched,
                 ModelKind::ScalarExact, ModelKind::MultiOutputExact,
                 ModelKind::RandomFeatures}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown model kind: " + name);
}

bool is_sketched(ModelKind kind) {
  return kind == ModelKind::ScalarSketched || kind == ModelKind::MultiOutputSketched;
}

}  // namespace

void FittedModel::attach_training_inputs(const MatrixXd& X_train) {
  train_size_ = X_train.rows();
  train_hash_ = hash_inputs(X_train);
  if (is_sketched(kind)) {
    require(sketch.has_value(), "model: sketched model without sketch");
    require(sketch->cols() == X_train.rows(), "model: sketch width must equal n");
    support_ = detail::as_columns(kernel, X_train(sketch->indices(), Eigen::all));
  } else if (kind == ModelKind::RandomFeatures) {
    support_.resize(0, 0);
  } else {
    support_ = detail::as_columns(kernel, X_train);
  }
}

VectorXd FittedModel::predict_point(const VectorXd& x) const {
  VectorXd inner;
  if (kind == ModelKind::RandomFeatures) {
    require(random_features.has_value(), "model: random-feature model without feature map");
    require(x.size() == random_features->input_dim(), "predict: input dimension mismatch");
    const VectorXd z = random_features->features(x.transpose()).transpose();
    inner = coefficients.transpose() * z;
  } else {
    require(support_.cols() > 0, "predict: model has no training inputs attached");
    require(x.size() == support_.rows(), "predict: input dimension mismatch");
    if (kernel.family == KernelFamily::SobolevFirstOrder) {
      require(x[0] >= 0 && x[0] <= 1, "sobolev kernel: inputs must lie in [0, 1]");
    }
    const Index q = support_.rows();
    VectorXd k(support_.cols());
    for (Index j = 0; j < support_.cols(); ++j) {
      k[j] = detail::eval_points(kernel, support_.col(j).data(), x.data(), q);
    }
    if (is_sketched(kind)) {
      const MatrixXd sk = sketch->mix_left(MatrixXd(k));
      inner = coefficients.transpose() * sk.col(0);
    } else {
      inner = coefficients.transpose() * k;
    }
  }
  return output_matrix * inner;
}

MatrixXd predict(const FittedModel& model, const MatrixXd& X_new) {
  MatrixXd out(X_new.rows(), model.output_dim());
  for (Index i = 0; i < X_new.rows(); ++i) {
    out.row(i) = model.predict_point(X_new.row(i).transpose()).transpose();
  }
  return out;
}

double training_objective(const FittedModel& model, const MatrixXd& X, const MatrixXd& Y) {
  require(X.rows() == Y.rows(), "training_objective: X and Y row mismatch");
  const MatrixXd P = predict(model, X);
  double data = 0;
  for (Index i = 0; i < P.rows(); ++i) {
    data += loss_value(model.loss, P.row(i).transpose(), Y.row(i).transpose());
  }
  data /= static_cast<double>(X.rows());
  const MatrixXd& C = model.coefficients;
  MatrixXd gram_part;
  switch (model.kind) {
    case ModelKind::ScalarSketched:
    case ModelKind::MultiOutputSketched:
      gram_part = sketch_gram_both(*model.sketch, model.kernel, X) * C;
      break;
    case ModelKind::ScalarExact:
    case ModelKind::MultiOutputExact:
      gram_part = gram(model.kernel, X) * C;
      break;
    case ModelKind::RandomFeatures:
      gram_part = C;
      break;
  }
  const double penalty = (C.transpose() * gram_part * model.output_matrix).trace();
  return data + 0.5 * model.lambda * penalty;
}

namespace {

FittedModel base_model(ModelKind kind, const KernelSpec& spec, const LossSpec& loss,
                       double lambda, MatrixXd output) {
  FittedModel model;
  model.kind = kind;
  model.kernel = spec;
  model.loss = loss;
  model.lambda = lambda;
  model.output_matrix = std::move(output);
  return model;
}

void check_fit_inputs(const KernelSpec& spec, const MatrixXd& X, Index target_rows,
                      double lambda) {
  spec.validate();
  require(X.rows() >= 1 && X.cols() >= 1, "fit: empty input matrix");
  require(target_rows == X.rows(), "fit: targets must have one row per input");
  require(lambda > 0, "fit: lambda must be positive");
}

}  // namespace

SketchedGram sketched_gram(const SketchOperator& S, const KernelSpec& spec, const MatrixXd& X) {
  require(S.cols() == X.rows(), "sketched_gram: sketch width must equal n");
  return {sketch_gram_left(S, spec, X), sketch_gram_both(S, spec, X)};
}

FittedModel fit_scalar_sketched(const KernelSpec& spec, const MatrixXd& X, const VectorXd& y,
                                const LossSpec& loss, double lambda, const SketchOperator& S,
                                const AdamConfig& adam) {
  return fit_scalar_sketched(spec, X, y, loss, lambda, S, sketched_gram(S, spec, X), adam);
}

FittedModel fit_scalar_sketched(const KernelSpec& spec, const MatrixXd& X, const VectorXd& y,
                                const LossSpec& loss, double lambda, const SketchOperator& S,
                                const SketchedGram& parts, const AdamConfig& adam) {
  check_fit_inputs(spec, X, y.size(), lambda);
  require(loss.output_dim == 1 && loss.target_dim() == 1, "fit_scalar_sketched: scalar loss required");
  require(S.cols() == X.rows(), "fit_scalar_sketched: sketch width must equal n");
  require(parts.sk.rows() == S.rows() && parts.sk.cols() == X.rows(),
          "fit_scalar_sketched: S K has the wrong shape");
  const FeatureMapState state = feature_maps_from_parts(parts.sks, parts.sk);
  const MatrixXd Z = state.train_features();
  const MatrixXd Y = y;
  const LinearErmProblem problem(Z, Y, loss, lambda);
  AdamResult res = adam_minimize(problem, MatrixXd::Zero(state.rank, 1), adam);

  FittedModel model = base_model(ModelKind::ScalarSketched, spec, loss, lambda, MatrixXd::Ones(1, 1));
  model.coefficients = state.whitening * res.W;
  model.feature_weights = std::move(res.W);
  model.sketch = S;
  model.final_objective = res.trace.best;
  model.trace = std::move(res.trace);
  model.attach_training_inputs(X);
  return model;
}

FittedModel solve_krr_sketched(const KernelSpec& spec, const MatrixXd& X, const VectorXd& y,
                               double lambda, const SketchOperator& S) {
  check_fit_inputs(spec, X, y.size(), lambda);
  require(S.cols() == X.rows(), "solve_krr_sketched: sketch width must equal n");
  const double n = static_cast<double>(X.rows());
  const MatrixXd sk = sketch_gram_left(S, spec, X);
  const MatrixXd sks = sketch_gram_both(S, spec, X);
  const MatrixXd system = sk * sk.transpose() + lambda * n * sks;
  const VectorXd rhs = sk * y;

  FittedModel model =
      base_model(ModelKind::ScalarSketched, spec, LossSpec::square(), lambda, MatrixXd::Ones(1, 1));
  model.coefficients = symmetric_pinv(system) * rhs;
  model.sketch = S;
  const VectorXd fitted = sk.transpose() * model.coefficients;
  model.final_objective = 0.5 * (fitted - y).squaredNorm() / n +
                          0.5 * lambda * model.coefficients.col(0).dot(sks * model.coefficients.col(0));
  model.attach_training_inputs(X);
  return model;
}

FittedModel fit_multioutput_sketched(const KernelSpec& spec, const MatrixXd& X,
                                     const MatrixXd& Y, const OutputMatrix& M,
                                     const LossSpec& loss, double lambda,
                                     const SketchOperator& S, const AdamConfig& adam) {
  return fit_multioutput_sketched(spec, X, Y, M, loss, lambda, S, sketched_gram(S, spec, X), adam);
}

FittedModel fit_multioutput_sketched(const KernelSpec& spec, const MatrixXd& X,
                                     const MatrixXd& Y, const OutputMatrix& M,
                                     const LossSpec& loss, double lambda,
                                     const SketchOperator& S, const SketchedGram& parts,
                                     const AdamConfig& adam) {
  check_fit_inputs(spec, X, Y.rows(), lambda);
  require(S.cols() == X.rows(), "fit_multioutput_sketched: sketch width must equal n");
  require(M.M.rows() == loss.output_dim, "fit_multioutput_sketched: M must match loss dimension");
  require(parts.sk.rows() == S.rows() && parts.sk.cols() == X.rows(),
          "fit_multioutput_sketched: S K has the wrong shape");
  const MatrixXd Z = parts.sk.transpose();  // K S^T
  const LinearErmProblem problem(Z, Y, loss, lambda, &M.M, &parts.sks);
  AdamResult res = adam_minimize(problem, MatrixXd::Zero(S.rows(), M.dim()), adam);

  FittedModel model = base_model(ModelKind::MultiOutputSketched, spec, loss, lambda, M.M);
  model.coefficients = std::move(res.W);
  model.sketch = S;
  model.final_objective = res.trace.best;
  model.trace = std::move(res.trace);
  model.attach_training_inputs(X);
  return model;
}

FittedModel fit_exact(const KernelSpec& spec, const MatrixXd& X, const MatrixXd& Y,
                      const std::optional<OutputMatrix>& M, const LossSpec& loss,
                      double lambda, const AdamConfig& adam) {
  return fit_exact(spec, X, gram(spec, X), Y, M, loss, lambda, adam);
}

FittedModel fit_exact(const KernelSpec& spec, const MatrixXd& X, const MatrixXd& K,
                      const MatrixXd& Y, const std::optional<OutputMatrix>& M,
                      const LossSpec& loss, double lambda, const AdamConfig& adam) {
  check_fit_inputs(spec, X, Y.rows(), lambda);
  const MatrixXd output = M ? M->M : MatrixXd::Ones(1, 1);
  require(output.rows() == loss.output_dim, "fit_exact: M must match loss dimension");
  require(K.rows() == X.rows() && K.cols() == X.rows(), "fit_exact: K must be n x n");
  Eigen::SelfAdjointEigenSolver<MatrixXd> eig(K);
  if (eig.info() != Eigen::Success) throw NumericalError("fit_exact: eigensolver failed");
  const VectorXd ev = eig.eigenvalues().reverse();
  const MatrixXd U = eig.eigenvectors().rowwise().reverse();
  if (!(ev[0] > 0)) throw NumericalError("fit_exact: Gram matrix is numerically zero");
  Index r = 0;
  while (r < ev.size() && ev[r] > kRankTolerance * ev[0]) ++r;
  const MatrixXd Z = U.leftCols(r) * ev.head(r).cwiseSqrt().asDiagonal();
  const MatrixXd* Mp = M ? &M->M : nullptr;
  const LinearErmProblem problem(Z, Y, loss, lambda, Mp);
  AdamResult res = adam_minimize(problem, MatrixXd::Zero(r, output.rows()), adam);

  const bool scalar = output.rows() == 1 && !M;
  FittedModel model = base_model(scalar ? ModelKind::ScalarExact : ModelKind::MultiOutputExact,
                                 spec, loss, lambda, output);
  model.coefficients = U.leftCols(r) * ev.head(r).cwiseSqrt().cwiseInverse().asDiagonal() * res.W;
  model.feature_weights = std::move(res.W);
  model.final_objective = res.trace.best;
  model.trace = std::move(res.trace);
  model.attach_training_inputs(X);
  return model;
}

FittedModel solve_krr_exact(const KernelSpec& spec, const MatrixXd& X, const VectorXd& y,
                            double lambda) {
  check_fit_inputs(spec, X, y.size(), lambda);
  const double n = static_cast<double>(X.rows());
  const MatrixXd K = gram(spec, X);
  MatrixXd A = K;
  A.diagonal().array() += lambda * n;
  FittedModel model =
      base_model(ModelKind::ScalarExact, spec, LossSpec::square(), lambda, MatrixXd::Ones(1, 1));
  model.coefficients = A.llt().solve(y);
  const VectorXd fitted = K * model.coefficients;
  model.final_objective = 0.5 * (fitted - y).squaredNorm() / n +
                          0.5 * lambda * model.coefficients.col(0).dot(K * model.coefficients.col(0));
  model.attach_training_inputs(X);
  return model;
}

FittedModel fit_random_features(const KernelSpec& spec, const MatrixXd& X, const MatrixXd& Y,
                                const std::optional<OutputMatrix>& M, const LossSpec& loss,
                                double lambda, Index num_features, std::uint64_t seed,
                                const AdamConfig& adam) {
  check_fit_inputs(spec, X, Y.rows(), lambda);
  const MatrixXd output = M ? M->M : MatrixXd::Ones(1, 1);
  require(output.rows() == loss.output_dim, "fit_random_features: M must match loss dimension");
  RandomFeatureMap map(spec, num_features, X.cols(), seed);
  const MatrixXd Z = map.features(X);
  const MatrixXd* Mp = M ? &M->M : nullptr;
  const LinearErmProblem problem(Z, Y, loss, lambda, Mp);
  AdamResult res = adam_minimize(problem, MatrixXd::Zero(Z.cols(), output.rows()), adam);

  FittedModel model = base_model(ModelKind::RandomFeatures, spec, loss, lambda, output);
  model.coefficients = std::move(res.W);
  model.random_features = std::move(map);
  model.final_objective = res.trace.best;
  model.trace = std::move(res.trace);
  model.attach_training_inputs(X);
  return model;
}

// ---------------------------------------------------------------------------
// Serialization

std::uint64_t hash_inputs(const MatrixXd& X) {
  // FNV-1a over dimensions and the bit patterns of the entries, row-major.
  std::uint64_t h = 0xCBF29CE484222325ULL;
  auto feed = [&h](std::uint64_t word) {
    for (int b = 0; b < 8; ++b) {
      h ^= (word >> (8 * b)) & 0xFF;
      h *= 0x100000001B3ULL;
    }
  };
  feed(static_cast<std::uint64_t>(X.rows()));
  feed(static_cast<std::uint64_t>(X.cols()));
  for (Index i = 0; i < X.rows(); ++i) {
    for (Index j = 0; j < X.cols(); ++j) {
      std::uint64_t bits;
      const double v = X(i, j);
      std::memcpy(&bits, &v, sizeof bits);
      feed(bits);
    }
  }
  return h;
}

namespace {

nlohmann::json matrix_to_json(const MatrixXd& A) {
  std::vector<double> data(A.data(), A.data() + A.size());
  return {{"rows", A.rows()}, {"cols", A.cols()}, {"data", data}};
}

MatrixXd matrix_from_json(const nlohmann::json& j) {
  const auto rows = j.at("rows").get<Index>();
  const auto cols = j.at("cols").get<Index>();
  const auto data = j.at("data").get<std::vector<double>>();
  require(static_cast<Index>(data.size()) == rows * cols, "matrix record: size mismatch");
  return Eigen::Map<const MatrixXd>(data.data(), rows, cols);
}

}  // namespace

nlohmann::json to_json(const KernelSpec& spec) {
  return {{"family", to_string(spec.family)},
          {"bandwidth", spec.bandwidth},
          {"degree", spec.degree},
          {"offset", spec.offset}};
}

KernelSpec kernel_from_json(const nlohmann::json& j) {
  KernelSpec spec;
  spec.family = kernel_family_from_string(j.value("family", std::string("gaussian")));
  spec.bandwidth = j.value("bandwidth", 1.0);
  spec.degree = j.value("degree", 1);
  spec.offset = j.value("offset", 0.0);
  spec.validate();
  return spec;
}

nlohmann::json to_json(const LossSpec& spec) {
  return {{"family", to_string(spec.family)},
          {"kappa", spec.kappa},
          {"epsilon", spec.epsilon},
          {"levels", spec.levels},
          {"output_dim", spec.output_dim}};
}

LossSpec loss_from_json(const nlohmann::json& j) {
  LossSpec spec;
  spec.family = loss_family_from_string(j.at("family").get<std::string>());
  spec.kappa = j.value("kappa", 1.0);
  spec.epsilon = j.value("epsilon", 0.0);
  spec.levels = j.value("levels", std::vector<double>{});
  spec.output_dim = j.value("output_dim", static_cast<Index>(spec.levels.empty() ? 1 : spec.levels.size()));
  spec.validate();
  return spec;
}

nlohmann::json to_json(const FittedModel& model) {
  nlohmann::json j;
  j["kind"] = to_string(model.kind);
  j["kernel"] = to_json(model.kernel);
  j["loss"] = to_json(model.loss);
  j["lambda"] = model.lambda;
  j["coefficients"] = matrix_to_json(model.coefficients);
  j["output_matrix"] = matrix_to_json(model.output_matrix);
  j["final_objective"] = model.final_objective;
  j["train_size"] = model.train_size();
  j["train_hash"] = model.train_hash();
  if (model.sketch) {
    if (model.sketch->kind() == SketchKind::Explicit) {
      j["sketch"] = {{"kind", "explicit"},
                     {"n", model.sketch->cols()},
                     {"mixing", matrix_to_json(model.sketch->mixing())},
                     {"indices", model.sketch->indices()}};
    } else {
      j["sketch"] = to_json(model.sketch->record());
    }
  }
  if (model.random_features) {
    j["random_features"] = {{"num_features", model.random_features->size()},
                            {"seed", model.random_features->seed()}};
  }
  return j;
}

FittedModel model_from_json(const nlohmann::json& j, const MatrixXd& X_train) {
  FittedModel model;
  model.kind = model_kind_from_string(j.at("kind").get<std::string>());
  model.kernel = kernel_from_json(j.at("kernel"));
  model.loss = loss_from_json(j.at("loss"));
  model.lambda = j.at("lambda").get<double>();
  model.coefficients = matrix_from_json(j.at("coefficients"));
  model.output_matrix = matrix_from_json(j.at("output_matrix"));
  model.final_objective = j.value("final_objective", 0.0);
  if (j.contains("sketch")) {
    const auto& sj = j.at("sketch");
    if (sj.at("kind").get<std::string>() == "explicit") {
      SketchRecord r;
      r.kind = SketchKind::Explicit;
      MatrixXd mixing = matrix_from_json(sj.at("mixing"));
      r.s = mixing.rows();
      r.n = sj.at("n").get<Index>();
      model.sketch.emplace(r, std::move(mixing), sj.at("indices").get<IndexList>());
    } else {
      model.sketch = generate_sketch(sketch_record_from_json(sj));
    }
  }
  if (j.contains("random_features")) {
    const auto& rj = j.at("random_features");
    model.random_features.emplace(model.kernel, rj.at("num_features").get<Index>(), X_train.cols(),
                                  rj.at("seed").get<std::uint64_t>());
  }
  const auto expected = j.at("train_hash").get<std::uint64_t>();
  if (hash_inputs(X_train) != expected) {
    throw InvalidArgument("model_from_json: training inputs do not match the stored hash");
  }
  model.attach_training_inputs(X_train);
  return model;
}

}  // namespace skm
