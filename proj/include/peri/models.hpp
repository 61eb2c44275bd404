#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <variant>
#include <vector>

namespace peri::ml {

/// Dense row-major matrix of samples x features.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  Matrix() = default;
  Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  double& at(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  bool operator==(const Matrix&) const = default;
};

// --- standardisation -----------------------------------------------------------

struct StandardizerStats {
  std::vector<std::string> names;  // one per raw column
  std::vector<double> mean;
  std::vector<double> sd;             // population
  std::vector<std::uint8_t> keep;     // variance > 1e-12

  std::size_t n_kept() const;
  std::vector<std::string> kept_names() const;
  bool operator==(const StandardizerStats&) const = default;
};

/// Column statistics from training rows. Throws TooFewSamples when rows < 2.
StandardizerStats fit_standardizer(const Matrix& x, std::vector<std::string> names = {});
/// z-scores with the training statistics and drops the constant columns.
Matrix apply(const StandardizerStats& stats, const Matrix& x);

// --- logistic regression --------------------------------------------------------

struct LogisticParams {
  double lambda = 1.0;
  double grad_tol = 1e-6;  // on the infinity norm of the gradient
  int max_iter = 5000;
  int history = 10;  // L-BFGS memory
  bool operator==(const LogisticParams&) const = default;
};

struct LogisticModel {
  std::vector<double> w;
  double b = 0.0;
  double lambda = 1.0;
  int iterations = 0;
  bool converged = false;
  std::vector<double> loss_history;  // objective after each accepted step, starting at w = 0
  bool operator==(const LogisticModel&) const = default;
};

/// J(w, b) = mean log-loss + lambda / (2n) * |w|^2; the bias is not penalised.
double logistic_objective(const Matrix& x, std::span<const int> y, std::span<const double> w, double b, double lambda);
/// Gradient of logistic_objective; grad_w must have x.cols entries.
void logistic_gradient(const Matrix& x, std::span<const int> y, std::span<const double> w, double b, double lambda,
                       std::span<double> grad_w, double& grad_b);

/// L-BFGS from w = 0, b = 0 with a backtracking Armijo line search, so the
/// objective never increases. Throws SingleClassTraining.
LogisticModel train_logreg(const Matrix& x, std::span<const int> y, const LogisticParams& params = {});
std::vector<double> predict_proba(const LogisticModel& model, const Matrix& x);

// --- random forest ---------------------------------------------------------------

struct ForestParams {
  int n_trees = 200;
  int mtry = 0;       // 0: floor(sqrt(d))
  int min_leaf = 1;
  int max_depth = 0;  // 0: unlimited
  bool bootstrap = true;
  bool operator==(const ForestParams&) const = default;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  double value = 0.0;  // class-1 fraction of the training rows reaching the node
  std::size_t n = 0;
  bool operator==(const TreeNode&) const = default;
};

struct Tree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root
  double predict(std::span<const double> row) const;
  bool operator==(const Tree&) const = default;
};

struct ForestModel {
  std::vector<Tree> trees;
  std::uint64_t seed = 0;
  ForestParams params;
  std::size_t n_features = 0;
  std::vector<double> importance;  // Gini decrease per feature, sums to 1 (or all 0)
  bool operator==(const ForestModel&) const = default;
};

/// Grows one tree on `rows` (duplicates allowed). Splits are Gini-greedy over
/// `mtry` features drawn from `stream_seed`, at midpoints of sorted unique
/// values; ties go to the lowest feature index, then the lowest threshold.
/// `importance` accumulates the weighted impurity decrease per feature.
Tree grow_tree(const Matrix& x, std::span<const int> y, std::span<const std::size_t> rows, const ForestParams& params,
               std::uint64_t stream_seed, std::vector<double>* importance = nullptr);

/// Trees are grown on OpenMP threads, each from its own derived stream; the
/// model is bitwise identical to serial::train_random_forest.
ForestModel train_random_forest(const Matrix& x, std::span<const int> y, const ForestParams& params, std::uint64_t seed,
                                int threads = 0);

namespace serial {
ForestModel train_random_forest(const Matrix& x, std::span<const int> y, const ForestParams& params,
                                std::uint64_t seed);
}  // namespace serial

std::vector<double> predict_proba(const ForestModel& model, const Matrix& x);

// --- k nearest neighbours ------------------------------------------------------------

struct KnnModel {
  Matrix x;
  std::vector<int> y;
  int k = 5;
  bool operator==(const KnnModel&) const = default;
};

/// Stores the training set. k must be odd and <= rows.
KnnModel train_knn(const Matrix& x, std::span<const int> y, int k = 5);
/// Fraction of positives among the k nearest rows (ties to the lowest row index).
/// Throws DimensionMismatch.
std::vector<double> predict_proba(const KnnModel& model, const Matrix& x);

// --- pipeline ------------------------------------------------------------------------

enum class ClassifierKind { RandomForest, Logistic, Knn };

inline constexpr ClassifierKind kAllClassifiers[] = {ClassifierKind::RandomForest, ClassifierKind::Logistic,
                                                     ClassifierKind::Knn};

std::string_view to_string(ClassifierKind kind);
/// "rf"/"random_forest", "logreg"/"logistic", "knn".
ClassifierKind parse_classifier(std::string_view text);

struct ModelParams {
  LogisticParams logistic;
  ForestParams forest;
  int knn_k = 5;
};

using Classifier = std::variant<LogisticModel, ForestModel, KnnModel>;

struct TrainedPipeline {
  StandardizerStats stats;
  Classifier model;
  std::uint64_t seed = 0;

  ClassifierKind kind() const;
  /// Scores in [0, 1] for raw (unstandardised) feature rows.
  std::vector<double> predict(const Matrix& raw) const;
  bool operator==(const TrainedPipeline&) const = default;
};

TrainedPipeline train_pipeline(ClassifierKind kind, const Matrix& raw, std::span<const int> y,
                               std::vector<std::string> names, const ModelParams& params, std::uint64_t seed,
                               int threads = 0);

/// Descending (name, score): |w| for logistic, normalised Gini decrease for the
/// forest. Throws UnsupportedModel for k-NN.
std::vector<std::pair<std::string, double>> feature_importance(const Classifier& model,
                                                               const std::vector<std::string>& names);
std::vector<std::pair<std::string, double>> feature_importance(const TrainedPipeline& pipeline);

}  // namespace peri::ml
