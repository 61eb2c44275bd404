#include "peri/model_io.hpp"

#include <fstream>

#include "peri/error.hpp"

namespace peri::ml {

using nlohmann::json;

namespace {

json forest_params_json(const ForestParams& p) {
  return {{"n_trees", p.n_trees}, {"mtry", p.mtry}, {"min_leaf", p.min_leaf}, {"max_depth", p.max_depth},
          {"bootstrap", p.bootstrap}};
}

ForestParams forest_params_from(const json& j) {
  ForestParams p;
  p.n_trees = j.at("n_trees").get<int>();
  p.mtry = j.at("mtry").get<int>();
  p.min_leaf = j.at("min_leaf").get<int>();
  p.max_depth = j.at("max_depth").get<int>();
  p.bootstrap = j.at("bootstrap").get<bool>();
  return p;
}

json model_json(const LogisticModel& m) {
  return {{"w", m.w}, {"b", m.b}, {"lambda", m.lambda}, {"iterations", m.iterations}, {"converged", m.converged}};
}

json model_json(const ForestModel& m) {
  json trees = json::array();
  for (const Tree& t : m.trees) {
    json nodes = json::array();
    for (const TreeNode& n : t.nodes) nodes.push_back(json::array({n.feature, n.threshold, n.left, n.right, n.value, n.n}));
    trees.push_back(std::move(nodes));
  }
  return {{"seed", m.seed},           {"n_features", m.n_features}, {"params", forest_params_json(m.params)},
          {"importance", m.importance}, {"trees", std::move(trees)}};
}

json model_json(const KnnModel& m) {
  return {{"k", m.k}, {"rows", m.x.rows}, {"cols", m.x.cols}, {"x", m.x.data}, {"y", m.y}};
}

Classifier model_from(ClassifierKind kind, const json& j) {
  switch (kind) {
    case ClassifierKind::Logistic: {
      LogisticModel m;
      m.w = j.at("w").get<std::vector<double>>();
      m.b = j.at("b").get<double>();
      m.lambda = j.at("lambda").get<double>();
      m.iterations = j.at("iterations").get<int>();
      m.converged = j.at("converged").get<bool>();
      return m;
    }
    case ClassifierKind::RandomForest: {
      ForestModel m;
      m.seed = j.at("seed").get<std::uint64_t>();
      m.n_features = j.at("n_features").get<std::size_t>();
      m.params = forest_params_from(j.at("params"));
      m.importance = j.at("importance").get<std::vector<double>>();
      for (const json& jt : j.at("trees")) {
        Tree t;
        for (const json& jn : jt) {
          TreeNode n;
          n.feature = jn.at(0).get<int>();
          n.threshold = jn.at(1).get<double>();
          n.left = jn.at(2).get<int>();
          n.right = jn.at(3).get<int>();
          n.value = jn.at(4).get<double>();
          n.n = jn.at(5).get<std::size_t>();
          const auto size = static_cast<int>(jt.size());
          if (n.feature >= 0 && (n.left <= 0 || n.right <= 0 || n.left >= size || n.right >= size))
            fail(ErrorKind::ParseError, "tree node refers to a missing child");
          t.nodes.push_back(n);
        }
        if (t.nodes.empty()) fail(ErrorKind::ParseError, "empty tree");
        m.trees.push_back(std::move(t));
      }
      return m;
    }
    case ClassifierKind::Knn: {
      KnnModel m;
      m.k = j.at("k").get<int>();
      m.x.rows = j.at("rows").get<std::size_t>();
      m.x.cols = j.at("cols").get<std::size_t>();
      m.x.data = j.at("x").get<std::vector<double>>();
      m.y = j.at("y").get<std::vector<int>>();
      if (m.x.data.size() != m.x.rows * m.x.cols || m.y.size() != m.x.rows)
        fail(ErrorKind::ParseError, "k-NN training matrix has the wrong size");
      return m;
    }
  }
  fail(ErrorKind::ParseError, "unknown classifier");
}

}  // namespace

json to_json(const TrainedPipeline& p) {
  json doc;
  doc["format"] = "peritumoral-model";
  doc["version"] = kModelFormatVersion;
  doc["classifier"] = std::string(to_string(p.kind()));
  doc["seed"] = p.seed;
  doc["standardizer"] = {{"names", p.stats.names}, {"mean", p.stats.mean}, {"sd", p.stats.sd}, {"keep", p.stats.keep}};
  doc["model"] = std::visit([](const auto& m) { return model_json(m); }, p.model);
  return doc;
}

TrainedPipeline pipeline_from_json(const json& doc) {
  try {
    if (doc.at("format").get<std::string>() != "peritumoral-model")
      fail(ErrorKind::ParseError, "not a model document");
    const int version = doc.at("version").get<int>();
    if (version != kModelFormatVersion)
      fail(ErrorKind::ParseError, "unsupported model format version " + std::to_string(version));
    TrainedPipeline p;
    p.seed = doc.at("seed").get<std::uint64_t>();
    const json& s = doc.at("standardizer");
    p.stats.names = s.at("names").get<std::vector<std::string>>();
    p.stats.mean = s.at("mean").get<std::vector<double>>();
    p.stats.sd = s.at("sd").get<std::vector<double>>();
    p.stats.keep = s.at("keep").get<std::vector<std::uint8_t>>();
    const std::size_t d = p.stats.names.size();
    if (p.stats.mean.size() != d || p.stats.sd.size() != d || p.stats.keep.size() != d)
      fail(ErrorKind::ParseError, "standardizer arrays differ in length");
    p.model = model_from(parse_classifier(doc.at("classifier").get<std::string>()), doc.at("model"));
    return p;
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, std::string("model document: ") + e.what());
  } catch (const Error& e) {
    if (e.kind() == ErrorKind::InvalidArgument) fail(ErrorKind::ParseError, e.what());
    throw;
  }
}

void save_model(const TrainedPipeline& pipeline, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorKind::IoError, "cannot write " + path.string());
  out << to_json(pipeline).dump(1) << '\n';
  if (!out) fail(ErrorKind::IoError, "write failed for " + path.string());
}

TrainedPipeline load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::MissingFile, "cannot open " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    fail(ErrorKind::ParseError, path.string() + ": " + e.what());
  }
  return pipeline_from_json(doc);
}

}  // namespace peri::ml
