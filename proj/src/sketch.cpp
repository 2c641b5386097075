#include "skm/sketch.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <vector>

#include "skm/random.hpp"

namespace skm {

namespace {

constexpr std::uint64_t kMaskStream = 1;
constexpr std::uint64_t kValueStream = 2;
constexpr std::uint64_t kSubsampleStream = 3;
constexpr std::uint64_t kCountRowStream = 4;
constexpr std::uint64_t kCountSignStream = 5;
constexpr std::uint64_t kAccIndexStream = 6;
constexpr std::uint64_t kAccSignStream = 7;
constexpr std::uint64_t kRffStream = 8;

bool is_sparsified(SketchKind kind) {
  return kind == SketchKind::PSparseRademacher || kind == SketchKind::PSparseGaussian ||
         kind == SketchKind::Gaussian || kind == SketchKind::Rademacher;
}

bool is_rademacher_valued(SketchKind kind) {
  return kind == SketchKind::PSparseRademacher || kind == SketchKind::Rademacher;
}

double effective_p(const SketchRecord& r) {
  return (r.kind == SketchKind::Gaussian || r.kind == SketchKind::Rademacher) ? 1.0 : r.p;
}

// Bernoulli(p) mask bit of entry (i, j).
bool mask_bit(std::uint64_t seed, double p, Index i, Index j) {
  if (p >= 1.0) return true;
  return to_unit(counter_hash(seed, kMaskStream, static_cast<std::uint64_t>(i),
                              static_cast<std::uint64_t>(j))) < p;
}

// Unscaled value R_ij: Rademacher sign or standard normal.
double raw_value(SketchKind kind, std::uint64_t seed, Index i, Index j) {
  const auto a = static_cast<std::uint64_t>(i);
  const auto b = static_cast<std::uint64_t>(j);
  if (is_rademacher_valued(kind)) {
    return (counter_hash(seed, kValueStream, a, b) >> 63) ? -1.0 : 1.0;
  }
  return counter_normal(seed, kValueStream, a, b);
}

double sign_bit(std::uint64_t h) { return (h >> 63) ? -1.0 : 1.0; }

SketchOperator generate_sparsified(const SketchRecord& r) {
  const double p = effective_p(r);
  const double scale = 1.0 / std::sqrt(static_cast<double>(r.s) * p);
  IndexList indices;
  std::vector<double> values;  // column-major s x s'
  std::vector<double> column(static_cast<size_t>(r.s));
  for (Index j = 0; j < r.n; ++j) {
    bool any = false;
    for (Index i = 0; i < r.s; ++i) {
      if (mask_bit(r.seed, p, i, j)) {
        column[static_cast<size_t>(i)] = scale * raw_value(r.kind, r.seed, i, j);
        any = true;
      } else {
        column[static_cast<size_t>(i)] = 0.0;
      }
    }
    if (any) {
      indices.push_back(j);
      values.insert(values.end(), column.begin(), column.end());
    }
  }
  if (indices.empty()) {
    throw NumericalError("generate_sketch: every column of the sparsified sketch is null; "
                         "retry with another seed");
  }
  const Index active = static_cast<Index>(indices.size());
  MatrixXd mixing = Eigen::Map<const MatrixXd>(values.data(), r.s, active);
  return SketchOperator(r, std::move(mixing), std::move(indices));
}

SketchOperator generate_subsampling(const SketchRecord& r) {
  Rng rng(r.seed, kSubsampleStream);
  const auto picked = rng.sample_without_replacement(static_cast<std::uint64_t>(r.n),
                                                     static_cast<std::uint64_t>(r.s));
  IndexList indices(picked.begin(), picked.end());
  const double scale = std::sqrt(static_cast<double>(r.n) / static_cast<double>(r.s));
  MatrixXd mixing = scale * MatrixXd::Identity(r.s, r.s);
  return SketchOperator(r, std::move(mixing), std::move(indices));
}

SketchOperator generate_countsketch(const SketchRecord& r) {
  MatrixXd mixing = MatrixXd::Zero(r.s, r.n);
  IndexList indices(static_cast<size_t>(r.n));
  for (Index j = 0; j < r.n; ++j) {
    const auto u = static_cast<std::uint64_t>(j);
    const auto row = static_cast<Index>(
        counter_below(static_cast<std::uint64_t>(r.s), r.seed, kCountRowStream, u));
    mixing(row, j) = sign_bit(counter_hash(r.seed, kCountSignStream, u, 0));
    indices[static_cast<size_t>(j)] = j;
  }
  return SketchOperator(r, std::move(mixing), std::move(indices));
}

SketchOperator generate_accumulation(const SketchRecord& r) {
  const double scale =
      std::sqrt(static_cast<double>(r.n) / (static_cast<double>(r.s) * r.m));
  // column -> (row, value) contributions
  std::map<Index, std::vector<std::pair<Index, double>>> entries;
  for (Index i = 0; i < r.s; ++i) {
    for (int k = 0; k < r.m; ++k) {
      const auto draw = static_cast<std::uint64_t>(i) * static_cast<std::uint64_t>(r.m) +
                        static_cast<std::uint64_t>(k);
      const auto col = static_cast<Index>(
          counter_below(static_cast<std::uint64_t>(r.n), r.seed, kAccIndexStream, draw));
      const double sign = sign_bit(counter_hash(r.seed, kAccSignStream,
                                                static_cast<std::uint64_t>(i),
                                                static_cast<std::uint64_t>(k)));
      entries[col].emplace_back(i, scale * sign);
    }
  }
  IndexList indices;
  indices.reserve(entries.size());
  MatrixXd mixing = MatrixXd::Zero(r.s, static_cast<Index>(entries.size()));
  Index c = 0;
  for (const auto& [col, contribs] : entries) {
    indices.push_back(col);
    for (const auto& [row, v] : contribs) mixing(row, c) += v;
    ++c;
  }
  return SketchOperator(r, std::move(mixing), std::move(indices));
}

}  // namespace

std::string to_string(SketchKind kind) {
  switch (kind) {
    case SketchKind::PSparseRademacher: return "psr";
    case SketchKind::PSparseGaussian: return "psg";
    case SketchKind::Gaussian: return "gaussian";
    case SketchKind::Rademacher: return "rademacher";
    case SketchKind::SubSampling: return "subsampling";
    case SketchKind::Accumulation: return "accumulation";
    case SketchKind::CountSketch: return "countsketch";
    case SketchKind::Explicit: return "explicit";
  }
  return "unknown";
}

SketchKind sketch_kind_from_string(const std::string& name) {
  for (auto k : {SketchKind::PSparseRademacher, SketchKind::PSparseGaussian,
                 SketchKind::Gaussian, SketchKind::Rademacher, SketchKind::SubSampling,
                 SketchKind::Accumulation, SketchKind::CountSketch, SketchKind::Explicit}) {
    if (to_string(k) == name) return k;
  }
  throw InvalidArgument("unknown sketch kind: " + name);
}

void SketchRecord::validate() const {
  if (kind == SketchKind::Explicit) return;
  require(s >= 1, "sketch: s must be >= 1");
  require(s < n, "sketch: s must be smaller than n");
  require(p > 0 && p <= 1, "sketch: p must lie in (0, 1]");
  require(m >= 1, "sketch: m must be >= 1");
  if (kind == SketchKind::Gaussian || kind == SketchKind::Rademacher) {
    require(p == 1, "sketch: dense Gaussian / Rademacher sketches have p = 1");
  }
}

nlohmann::json to_json(const SketchRecord& r) {
  return {{"kind", to_string(r.kind)}, {"s", r.s}, {"n", r.n},
          {"p", r.p},                  {"m", r.m}, {"seed", r.seed}};
}

SketchRecord sketch_record_from_json(const nlohmann::json& j) {
  SketchRecord r;
  r.kind = sketch_kind_from_string(j.at("kind").get<std::string>());
  require(r.kind != SketchKind::Explicit, "explicit sketches cannot be regenerated from a record");
  r.s = j.at("s").get<Index>();
  r.n = j.at("n").get<Index>();
  r.p = j.value("p", 1.0);
  r.m = j.value("m", 1);
  r.seed = j.value("seed", std::uint64_t{0});
  r.validate();
  return r;
}

SketchOperator::SketchOperator(SketchRecord record, MatrixXd mixing, IndexList indices)
    : record_(record), mixing_(std::move(mixing)), indices_(std::move(indices)) {
  require(mixing_.rows() == record_.s, "SketchOperator: mixing must have s rows");
  require(mixing_.cols() == static_cast<Index>(indices_.size()),
          "SketchOperator: mixing must have one column per index");
  for (size_t k = 0; k < indices_.size(); ++k) {
    require(indices_[k] >= 0 && indices_[k] < record_.n, "SketchOperator: index out of range");
    if (k > 0) require(indices_[k - 1] < indices_[k], "SketchOperator: indices must increase");
  }
  if (record_.kind == SketchKind::SubSampling) {
    selection_scale_ = mixing_.rows() > 0 ? mixing_(0, 0) : 0.0;
    return;
  }
  const Index nnz = (mixing_.array() != 0.0).count();
  if (mixing_.size() > 0 && nnz < mixing_.size() / 4) {
    sparse_mixing_ = mixing_.sparseView();
    sparse_mixing_.makeCompressed();
    use_sparse_ = true;
  }
}

SketchOperator SketchOperator::from_dense(const MatrixXd& S) {
  IndexList indices;
  for (Index j = 0; j < S.cols(); ++j) {
    if ((S.col(j).array() != 0.0).any()) indices.push_back(j);
  }
  SketchRecord r;
  r.kind = SketchKind::Explicit;
  r.s = S.rows();
  r.n = S.cols();
  r.p = 1.0;
  MatrixXd mixing = S(Eigen::all, indices);
  return SketchOperator(r, std::move(mixing), std::move(indices));
}

MatrixXd SketchOperator::dense() const {
  MatrixXd S = MatrixXd::Zero(rows(), cols());
  for (size_t k = 0; k < indices_.size(); ++k) {
    S.col(indices_[k]) = mixing_.col(static_cast<Index>(k));
  }
  return S;
}

SketchOperator generate_sketch(const SketchRecord& record) {
  record.validate();
  switch (record.kind) {
    case SketchKind::PSparseRademacher:
    case SketchKind::PSparseGaussian:
    case SketchKind::Gaussian:
    case SketchKind::Rademacher:
      return generate_sparsified(record);
    case SketchKind::SubSampling:
      return generate_subsampling(record);
    case SketchKind::Accumulation:
      return generate_accumulation(record);
    case SketchKind::CountSketch:
      return generate_countsketch(record);
    case SketchKind::Explicit:
      break;
  }
  throw InvalidArgument("generate_sketch: explicit sketches have no generator");
}

MatrixXd draw_dense_sketch(const SketchRecord& record) {
  record.validate();
  require(is_sparsified(record.kind),
          "draw_dense_sketch: only p-SR, p-SG, Gaussian and Rademacher sketches");
  const double p = effective_p(record);
  const double scale = 1.0 / std::sqrt(static_cast<double>(record.s) * p);
  MatrixXd S(record.s, record.n);
  for (Index i = 0; i < record.s; ++i) {
    for (Index j = 0; j < record.n; ++j) {
      S(i, j) = mask_bit(record.seed, p, i, j)
                    ? scale * raw_value(record.kind, record.seed, i, j)
                    : 0.0;
    }
  }
  return S;
}

double expected_active_columns(double s, double n, double p) {
  require(p > 0 && p <= 1, "expected_active_columns: p must lie in (0, 1]");
  require(s >= 1, "expected_active_columns: s must be >= 1");
  if (p == 1) return n;
  return n * (1.0 - std::exp(s * std::log1p(-p)));
}

double sparsity_cost(double c0_dn, double p) {
  require(p > 0 && p <= 1, "sparsity_cost: p must lie in (0, 1]");
  if (p == 1) return 1.0;
  return 1.0 - std::exp(c0_dn / (p * p) * std::log1p(-p));
}

double optimal_sparsity(double c0_dn) {
  require(c0_dn > 0, "optimal_sparsity: C0 d_n must be positive");
  // 1 - (1-p)^e is increasing in (1-p)^e, so minimize the negated log of
  // (1-p)^(c/p^2); this stays well conditioned when the cost saturates at 1.
  auto neg_log_survival = [c0_dn](double p) {
    if (p >= 1) return std::numeric_limits<double>::infinity();
    return -c0_dn / (p * p) * std::log1p(-p);
  };
  constexpr int kGrid = 2000;
  double best_p = 0.5, best = std::numeric_limits<double>::infinity();
  for (int k = 1; k < kGrid; ++k) {
    const double p = static_cast<double>(k) / kGrid;
    const double v = neg_log_survival(p);
    if (v < best) {
      best = v;
      best_p = p;
    }
  }
  double lo = std::max(best_p - 1.0 / kGrid, 1e-9);
  double hi = std::min(best_p + 1.0 / kGrid, 1.0);
  const double inv_phi = (std::sqrt(5.0) - 1) / 2;
  double a = hi - inv_phi * (hi - lo), b = lo + inv_phi * (hi - lo);
  double fa = neg_log_survival(a), fb = neg_log_survival(b);
  while (hi - lo > 1e-12) {
    if (fa < fb) {
      hi = b;
      b = a;
      fb = fa;
      a = hi - inv_phi * (hi - lo);
      fa = neg_log_survival(a);
    } else {
      lo = a;
      a = b;
      fa = fb;
      b = lo + inv_phi * (hi - lo);
      fb = neg_log_survival(b);
    }
  }
  return 0.5 * (lo + hi);
}

RandomFeatureMap::RandomFeatureMap(const KernelSpec& spec, Index num_features, Index input_dim,
                                   std::uint64_t seed)
    : seed_(seed) {
  require(spec.family == KernelFamily::Gaussian,
          "random Fourier features require a gaussian kernel");
  spec.validate();
  require(num_features >= 2 && num_features % 2 == 0,
          "random Fourier features: feature count must be positive and even");
  require(input_dim >= 1, "random Fourier features: input dimension must be >= 1");
  const double freq_scale = std::sqrt(2.0 / spec.bandwidth);
  frequencies_.resize(input_dim, num_features / 2);
  for (Index c = 0; c < input_dim; ++c) {
    for (Index k = 0; k < num_features / 2; ++k) {
      frequencies_(c, k) = freq_scale * counter_normal(seed, kRffStream,
                                                       static_cast<std::uint64_t>(c),
                                                       static_cast<std::uint64_t>(k));
    }
  }
}

MatrixXd RandomFeatureMap::features(const MatrixXd& X) const {
  require(X.cols() == input_dim(), "random Fourier features: input dimension mismatch");
  const MatrixXd phase = X * frequencies_;
  const Index half = frequencies_.cols();
  const double scale = std::sqrt(1.0 / static_cast<double>(half));
  MatrixXd Z(X.rows(), 2 * half);
  Z.leftCols(half) = scale * phase.array().cos().matrix();
  Z.rightCols(half) = scale * phase.array().sin().matrix();
  return Z;
}

MatrixXd rff_features(const KernelSpec& spec, Index num_features, const MatrixXd& X,
                      std::uint64_t seed) {
  return RandomFeatureMap(spec, num_features, X.cols(), seed).features(X);
}

}  // namespace skm
