#include "peri/models.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <numeric>

#include "peri/error.hpp"
#include "peri/parallel.hpp"
#include "peri/rng.hpp"

namespace peri::ml {

namespace {

void check_labels(const Matrix& x, std::span<const int> y, bool need_both) {
  if (y.size() != x.rows) fail(ErrorKind::DimensionMismatch, "label count does not match rows");
  std::size_t pos = 0;
  for (int v : y) {
    if (v != 0 && v != 1) fail(ErrorKind::InvalidArgument, "labels must be 0 or 1");
    pos += static_cast<std::size_t>(v);
  }
  if (need_both && (pos == 0 || pos == y.size()))
    fail(ErrorKind::SingleClassTraining, "training data contains a single class");
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + exp(z)) without overflow
double softplus(double z) { return z > 0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

}  // namespace

// --- standardisation -------------------------------------------------------------

std::size_t StandardizerStats::n_kept() const {
  return static_cast<std::size_t>(std::count(keep.begin(), keep.end(), std::uint8_t{1}));
}

std::vector<std::string> StandardizerStats::kept_names() const {
  std::vector<std::string> out;
  for (std::size_t j = 0; j < keep.size(); ++j)
    if (keep[j]) out.push_back(names[j]);
  return out;
}

StandardizerStats fit_standardizer(const Matrix& x, std::vector<std::string> names) {
  if (x.rows < 2) fail(ErrorKind::TooFewSamples, "standardizer needs at least two rows");
  if (names.empty())
    for (std::size_t j = 0; j < x.cols; ++j) names.push_back("feature" + std::to_string(j + 1));
  if (names.size() != x.cols) fail(ErrorKind::DimensionMismatch, "feature names do not match columns");
  StandardizerStats s;
  s.names = std::move(names);
  s.mean.assign(x.cols, 0.0);
  s.sd.assign(x.cols, 0.0);
  s.keep.assign(x.cols, 0);
  const double n = static_cast<double>(x.rows);
  for (std::size_t j = 0; j < x.cols; ++j) {
    double sum = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) sum += x.at(i, j);
    const double mu = sum / n;
    double ss = 0.0;
    for (std::size_t i = 0; i < x.rows; ++i) ss += (x.at(i, j) - mu) * (x.at(i, j) - mu);
    const double var = ss / n;
    s.mean[j] = mu;
    s.sd[j] = std::sqrt(var);
    s.keep[j] = var > 1e-12 ? 1 : 0;
  }
  return s;
}

Matrix apply(const StandardizerStats& stats, const Matrix& x) {
  if (x.cols != stats.keep.size()) fail(ErrorKind::DimensionMismatch, "column count differs from training data");
  Matrix out(x.rows, stats.n_kept());
  for (std::size_t i = 0; i < x.rows; ++i) {
    std::size_t c = 0;
    for (std::size_t j = 0; j < x.cols; ++j) {
      if (!stats.keep[j]) continue;
      out.at(i, c++) = (x.at(i, j) - stats.mean[j]) / stats.sd[j];
    }
  }
  return out;
}

// --- logistic regression -----------------------------------------------------------

double logistic_objective(const Matrix& x, std::span<const int> y, std::span<const double> w, double b,
                          double lambda) {
  const double n = static_cast<double>(x.rows);
  double loss = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = x.row(i);
    double z = b;
    for (std::size_t j = 0; j < x.cols; ++j) z += w[j] * row[j];
    loss += softplus(z) - static_cast<double>(y[i]) * z;
  }
  double w2 = 0.0;
  for (double v : w) w2 += v * v;
  return loss / n + lambda / (2.0 * n) * w2;
}

void logistic_gradient(const Matrix& x, std::span<const int> y, std::span<const double> w, double b, double lambda,
                       std::span<double> grad_w, double& grad_b) {
  const double n = static_cast<double>(x.rows);
  std::fill(grad_w.begin(), grad_w.end(), 0.0);
  grad_b = 0.0;
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = x.row(i);
    double z = b;
    for (std::size_t j = 0; j < x.cols; ++j) z += w[j] * row[j];
    const double r = sigmoid(z) - static_cast<double>(y[i]);
    for (std::size_t j = 0; j < x.cols; ++j) grad_w[j] += r * row[j];
    grad_b += r;
  }
  for (std::size_t j = 0; j < x.cols; ++j) grad_w[j] = grad_w[j] / n + lambda / n * w[j];
  grad_b /= n;
}

LogisticModel train_logreg(const Matrix& x, std::span<const int> y, const LogisticParams& params) {
  check_labels(x, y, true);
  if (!(params.lambda >= 0.0)) fail(ErrorKind::InvalidArgument, "lambda must be >= 0");
  const std::size_t d = x.cols;
  const std::size_t p = d + 1;  // last entry is the bias

  auto objective = [&](const std::vector<double>& t) {
    return logistic_objective(x, y, std::span(t).first(d), t[d], params.lambda);
  };
  auto gradient = [&](const std::vector<double>& t, std::vector<double>& g) {
    logistic_gradient(x, y, std::span(t).first(d), t[d], params.lambda, std::span(g).first(d), g[d]);
  };
  auto inf_norm = [](const std::vector<double>& v) {
    double m = 0.0;
    for (double e : v) m = std::max(m, std::abs(e));
    return m;
  };
  auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
  };

  std::vector<double> theta(p, 0.0), g(p), g_new(p), dir(p), trial(p);
  double f = objective(theta);
  gradient(theta, g);
  LogisticModel model;
  model.lambda = params.lambda;
  model.loss_history.push_back(f);

  std::deque<std::pair<std::vector<double>, std::vector<double>>> memory;  // (s, y) pairs
  for (int it = 1; it <= params.max_iter; ++it) {
    if (inf_norm(g) <= params.grad_tol) {
      model.converged = true;
      break;
    }
    // two-loop recursion
    dir = g;
    std::vector<double> alpha(memory.size());
    for (std::size_t m = memory.size(); m-- > 0;) {
      const auto& [s, yv] = memory[m];
      alpha[m] = dot(s, dir) / dot(yv, s);
      for (std::size_t i = 0; i < p; ++i) dir[i] -= alpha[m] * yv[i];
    }
    if (!memory.empty()) {
      const auto& [s, yv] = memory.back();
      const double gamma = dot(s, yv) / dot(yv, yv);
      for (double& e : dir) e *= gamma;
    }
    for (std::size_t m = 0; m < memory.size(); ++m) {
      const auto& [s, yv] = memory[m];
      const double beta = dot(yv, dir) / dot(yv, s);
      for (std::size_t i = 0; i < p; ++i) dir[i] += s[i] * (alpha[m] - beta);
    }
    for (double& e : dir) e = -e;
    double slope = dot(g, dir);
    if (!(slope < 0.0)) {
      memory.clear();
      for (std::size_t i = 0; i < p; ++i) dir[i] = -g[i];
      slope = dot(g, dir);
    }

    double step = memory.empty() ? std::min(1.0, 1.0 / inf_norm(g)) : 1.0;
    bool accepted = false;
    double f_new = f;
    for (int ls = 0; ls < 60; ++ls) {
      for (std::size_t i = 0; i < p; ++i) trial[i] = theta[i] + step * dir[i];
      f_new = objective(trial);
      if (f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted || !(f_new <= f)) break;  // no further progress at machine precision

    gradient(trial, g_new);
    std::vector<double> s(p), yv(p);
    for (std::size_t i = 0; i < p; ++i) {
      s[i] = trial[i] - theta[i];
      yv[i] = g_new[i] - g[i];
    }
    if (dot(s, yv) > 1e-12 * dot(yv, yv)) {
      memory.emplace_back(std::move(s), std::move(yv));
      if (static_cast<int>(memory.size()) > params.history) memory.pop_front();
    }
    theta.swap(trial);
    g.swap(g_new);
    f = f_new;
    model.iterations = it;
    model.loss_history.push_back(f);
  }
  if (!model.converged && inf_norm(g) <= params.grad_tol) model.converged = true;
  model.w.assign(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(d));
  model.b = theta[d];
  return model;
}

std::vector<double> predict_proba(const LogisticModel& model, const Matrix& x) {
  if (x.cols != model.w.size()) fail(ErrorKind::DimensionMismatch, "feature count differs from the model");
  std::vector<double> out(x.rows);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto row = x.row(i);
    double z = model.b;
    for (std::size_t j = 0; j < x.cols; ++j) z += model.w[j] * row[j];
    out[i] = sigmoid(z);
  }
  return out;
}

// --- random forest -------------------------------------------------------------------

double Tree::predict(std::span<const double> row) const {
  std::size_t node = 0;
  while (nodes[node].feature >= 0) {
    const TreeNode& n = nodes[node];
    node = static_cast<std::size_t>(row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[node].value;
}

namespace {

double gini(double pos, double n) {
  if (n <= 0.0) return 0.0;
  const double p = pos / n;
  return 2.0 * p * (1.0 - p);
}

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double decrease = -1.0;
};

struct Pending {
  int node;
  std::vector<std::size_t> rows;
  int depth;
};

int resolve_mtry(const ForestParams& params, std::size_t d) {
  int m = params.mtry > 0 ? params.mtry : static_cast<int>(std::floor(std::sqrt(static_cast<double>(d))));
  return std::clamp(m, 1, static_cast<int>(d));
}

std::vector<std::size_t> bootstrap_rows(std::size_t n, const ForestParams& params, std::uint64_t stream_seed) {
  std::vector<std::size_t> rows(n);
  if (!params.bootstrap) {
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
  }
  rng::Stream s(rng::derive_seed(stream_seed, "bootstrap"));
  for (auto& r : rows) r = static_cast<std::size_t>(s.below(n));
  return rows;
}

void check_forest_params(const ForestParams& params) {
  if (params.n_trees < 1) fail(ErrorKind::InvalidArgument, "n_trees must be >= 1");
  if (params.min_leaf < 1) fail(ErrorKind::InvalidArgument, "min_leaf must be >= 1");
  if (params.mtry < 0 || params.max_depth < 0) fail(ErrorKind::InvalidArgument, "mtry and max_depth must be >= 0");
}

ForestModel assemble(std::vector<Tree> trees, std::vector<std::vector<double>> per_tree_importance,
                     const ForestParams& params, std::uint64_t seed, std::size_t d) {
  ForestModel m;
  m.trees = std::move(trees);
  m.seed = seed;
  m.params = params;
  m.n_features = d;
  m.importance.assign(d, 0.0);
  for (const auto& imp : per_tree_importance)
    for (std::size_t j = 0; j < d; ++j) m.importance[j] += imp[j];
  const double total = std::accumulate(m.importance.begin(), m.importance.end(), 0.0);
  if (total > 0.0)
    for (double& v : m.importance) v /= total;
  return m;
}

}  // namespace

Tree grow_tree(const Matrix& x, std::span<const int> y, std::span<const std::size_t> rows, const ForestParams& params,
               std::uint64_t stream_seed, std::vector<double>* importance) {
  const std::size_t d = x.cols;
  const int mtry = resolve_mtry(params, d);
  rng::Stream features_rng(rng::derive_seed(stream_seed, "features"));
  const double n_root = static_cast<double>(rows.size());

  Tree tree;
  std::vector<Pending> stack;
  tree.nodes.emplace_back();
  stack.push_back({0, std::vector<std::size_t>(rows.begin(), rows.end()), 0});

  std::vector<std::size_t> feature_pool(d);
  std::vector<std::pair<double, int>> column;
  while (!stack.empty()) {
    Pending cur = std::move(stack.back());
    stack.pop_back();
    const double n = static_cast<double>(cur.rows.size());
    double pos = 0.0;
    for (std::size_t r : cur.rows) pos += y[r];
    TreeNode& node = tree.nodes[static_cast<std::size_t>(cur.node)];
    node.value = pos / n;
    node.n = cur.rows.size();

    const bool pure = pos == 0.0 || pos == n;
    const bool too_small = cur.rows.size() < 2 * static_cast<std::size_t>(params.min_leaf);
    const bool too_deep = params.max_depth > 0 && cur.depth >= params.max_depth;
    if (pure || too_small || too_deep) continue;

    // mtry distinct features by partial Fisher-Yates, then scanned in index order
    std::iota(feature_pool.begin(), feature_pool.end(), std::size_t{0});
    for (int k = 0; k < mtry; ++k) {
      const std::size_t pick = static_cast<std::size_t>(k) + static_cast<std::size_t>(features_rng.below(d - k));
      std::swap(feature_pool[k], feature_pool[pick]);
    }
    std::vector<std::size_t> chosen(feature_pool.begin(), feature_pool.begin() + mtry);
    std::sort(chosen.begin(), chosen.end());

    const double parent_gini = gini(pos, n);
    Split best;
    for (std::size_t f : chosen) {
      column.clear();
      for (std::size_t r : cur.rows) column.emplace_back(x.at(r, f), y[r]);
      std::sort(column.begin(), column.end());
      double left_n = 0.0, left_pos = 0.0;
      for (std::size_t i = 0; i + 1 < column.size(); ++i) {
        left_n += 1.0;
        left_pos += column[i].second;
        const double a = column[i].first, b = column[i + 1].first;
        if (a == b) continue;
        const double right_n = n - left_n;
        if (left_n < params.min_leaf || right_n < params.min_leaf) continue;
        double threshold = a + (b - a) / 2.0;
        if (!(threshold < b)) threshold = a;  // adjacent doubles
        const double child = (left_n / n) * gini(left_pos, left_n) + (right_n / n) * gini(pos - left_pos, right_n);
        const double decrease = parent_gini - child;
        if (decrease > best.decrease) best = {static_cast<int>(f), threshold, decrease};
      }
    }
    if (best.feature < 0) continue;

    if (importance) (*importance)[static_cast<std::size_t>(best.feature)] += (n / n_root) * std::max(best.decrease, 0.0);
    std::vector<std::size_t> left, right;
    for (std::size_t r : cur.rows)
      (x.at(r, static_cast<std::size_t>(best.feature)) <= best.threshold ? left : right).push_back(r);
    const int li = static_cast<int>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    TreeNode& parent = tree.nodes[static_cast<std::size_t>(cur.node)];
    parent.feature = best.feature;
    parent.threshold = best.threshold;
    parent.left = li;
    parent.right = li + 1;
    // right pushed first so the left subtree is numbered first
    stack.push_back({li + 1, std::move(right), cur.depth + 1});
    stack.push_back({li, std::move(left), cur.depth + 1});
  }
  return tree;
}

ForestModel train_random_forest(const Matrix& x, std::span<const int> y, const ForestParams& params,
                                std::uint64_t seed, int threads) {
  check_labels(x, y, true);
  check_forest_params(params);
  const auto n_trees = static_cast<std::size_t>(params.n_trees);
  std::vector<Tree> trees(n_trees);
  std::vector<std::vector<double>> importance(n_trees, std::vector<double>(x.cols, 0.0));
  parallel_for(n_trees, threads, [&](std::size_t t) {
    const std::uint64_t stream = rng::derive_seed(seed, "forest.tree", t);
    const std::vector<std::size_t> rows = bootstrap_rows(x.rows, params, stream);
    trees[t] = grow_tree(x, y, rows, params, stream, &importance[t]);
  });
  return assemble(std::move(trees), std::move(importance), params, seed, x.cols);
}

namespace serial {

ForestModel train_random_forest(const Matrix& x, std::span<const int> y, const ForestParams& params,
                                std::uint64_t seed) {
  check_labels(x, y, true);
  check_forest_params(params);
  const auto n_trees = static_cast<std::size_t>(params.n_trees);
  std::vector<Tree> trees;
  std::vector<std::vector<double>> importance;
  for (std::size_t t = 0; t < n_trees; ++t) {
    const std::uint64_t stream = rng::derive_seed(seed, "forest.tree", t);
    importance.emplace_back(x.cols, 0.0);
    trees.push_back(grow_tree(x, y, bootstrap_rows(x.rows, params, stream), params, stream, &importance.back()));
  }
  return assemble(std::move(trees), std::move(importance), params, seed, x.cols);
}

}  // namespace serial

std::vector<double> predict_proba(const ForestModel& model, const Matrix& x) {
  if (x.cols != model.n_features) fail(ErrorKind::DimensionMismatch, "feature count differs from the model");
  std::vector<double> out(x.rows, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    double s = 0.0;
    for (const Tree& t : model.trees) s += t.predict(x.row(i));
    out[i] = s / static_cast<double>(model.trees.size());
  }
  return out;
}

// --- k-NN ----------------------------------------------------------------------------

KnnModel train_knn(const Matrix& x, std::span<const int> y, int k) {
  check_labels(x, y, false);
  if (k < 1 || k % 2 == 0) fail(ErrorKind::InvalidArgument, "k must be odd and >= 1");
  if (static_cast<std::size_t>(k) > x.rows) fail(ErrorKind::InvalidArgument, "k exceeds the number of training rows");
  return {x, std::vector<int>(y.begin(), y.end()), k};
}

std::vector<double> predict_proba(const KnnModel& model, const Matrix& x) {
  if (x.cols != model.x.cols) fail(ErrorKind::DimensionMismatch, "feature count differs from the model");
  std::vector<double> out(x.rows);
  std::vector<std::pair<double, std::size_t>> d(model.x.rows);
  const auto k = static_cast<std::size_t>(model.k);
  for (std::size_t i = 0; i < x.rows; ++i) {
    const auto q = x.row(i);
    for (std::size_t r = 0; r < model.x.rows; ++r) {
      const auto t = model.x.row(r);
      double s = 0.0;
      for (std::size_t j = 0; j < x.cols; ++j) s += (q[j] - t[j]) * (q[j] - t[j]);
      d[r] = {s, r};
    }
    std::partial_sort(d.begin(), d.begin() + static_cast<std::ptrdiff_t>(k), d.end());
    double pos = 0.0;
    for (std::size_t m = 0; m < k; ++m) pos += model.y[d[m].second];
    out[i] = pos / static_cast<double>(k);
  }
  return out;
}

// --- pipeline ----------------------------------------------------------------------------

std::string_view to_string(ClassifierKind kind) {
  switch (kind) {
    case ClassifierKind::RandomForest: return "random_forest";
    case ClassifierKind::Logistic: return "logistic_regression";
    case ClassifierKind::Knn: return "knn";
  }
  return "knn";
}

ClassifierKind parse_classifier(std::string_view text) {
  std::string s(text);
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (s == "rf" || s == "random_forest" || s == "forest") return ClassifierKind::RandomForest;
  if (s == "logreg" || s == "logistic" || s == "logistic_regression") return ClassifierKind::Logistic;
  if (s == "knn") return ClassifierKind::Knn;
  fail(ErrorKind::InvalidArgument, "unknown classifier '" + std::string(text) + "'");
}

ClassifierKind TrainedPipeline::kind() const {
  if (std::holds_alternative<LogisticModel>(model)) return ClassifierKind::Logistic;
  if (std::holds_alternative<ForestModel>(model)) return ClassifierKind::RandomForest;
  return ClassifierKind::Knn;
}

std::vector<double> TrainedPipeline::predict(const Matrix& raw) const {
  const Matrix z = apply(stats, raw);
  return std::visit([&](const auto& m) { return predict_proba(m, z); }, model);
}

TrainedPipeline train_pipeline(ClassifierKind kind, const Matrix& raw, std::span<const int> y,
                               std::vector<std::string> names, const ModelParams& params, std::uint64_t seed,
                               int threads) {
  TrainedPipeline p;
  p.seed = seed;
  p.stats = fit_standardizer(raw, std::move(names));
  const Matrix z = apply(p.stats, raw);
  switch (kind) {
    case ClassifierKind::Logistic: p.model = train_logreg(z, y, params.logistic); break;
    case ClassifierKind::RandomForest:
      p.model = train_random_forest(z, y, params.forest, rng::derive_seed(seed, "forest"), threads);
      break;
    case ClassifierKind::Knn: p.model = train_knn(z, y, params.knn_k); break;
  }
  return p;
}

std::vector<std::pair<std::string, double>> feature_importance(const Classifier& model,
                                                               const std::vector<std::string>& names) {
  std::vector<double> score;
  if (const auto* lm = std::get_if<LogisticModel>(&model)) {
    for (double w : lm->w) score.push_back(std::abs(w));
  } else if (const auto* fm = std::get_if<ForestModel>(&model)) {
    score = fm->importance;
  } else {
    fail(ErrorKind::UnsupportedModel, "k-NN has no feature importance");
  }
  if (names.size() != score.size()) fail(ErrorKind::DimensionMismatch, "feature names do not match the model");
  std::vector<std::size_t> order(score.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return score[a] > score[b]; });
  std::vector<std::pair<std::string, double>> out;
  for (std::size_t i : order) out.emplace_back(names[i], score[i]);
  return out;
}

std::vector<std::pair<std::string, double>> feature_importance(const TrainedPipeline& pipeline) {
  return feature_importance(pipeline.model, pipeline.stats.kept_names());
}

}  // namespace peri::ml
