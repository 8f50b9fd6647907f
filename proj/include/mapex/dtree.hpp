#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mapex/errors.hpp"

namespace mapex {

// --- Samples ---

struct WeightedSample {
  std::vector<double> features;
  int label = 0;
  double weight = 1.0;
};

struct RegressionSample {
  std::vector<double> features;
  double target = 0.0;
  double weight = 1.0;
};

// --- Trees ---
//
// Nodes live in one array, root at index 0, children appended in breadth-first
// order. Internal nodes route `feature < threshold` to the left child.

struct TreeNode {
  bool leaf = true;
  int feature = -1;
  double threshold = 0.0;
  int left = -1;
  int right = -1;
  int action = 0;                // classification leaves
  std::vector<double> counts;    // classification leaves: per-class weight
  double value = 0.0;            // regression leaves
};

enum class SplitCriterion { Gini, Entropy };

struct DecisionTreePolicy {
  std::vector<TreeNode> nodes;
  int max_depth = 0;
  int n_features = 0;
  int n_classes = 0;
  SplitCriterion criterion = SplitCriterion::Gini;
  std::vector<std::string> feature_names;  // optional, parallel to features
  std::vector<std::string> action_names;   // optional, parallel to classes
};

struct RegressionTree {
  std::vector<TreeNode> nodes;
  int max_depth = 0;
  int n_features = 0;
};

struct TrainOptions {
  int max_depth = 4;
  double min_samples_split = 2.0;  // measured on total node weight
  SplitCriterion criterion = SplitCriterion::Gini;
  int n_classes = -1;  // -1: derive from the data
};

// --- Split search ---

struct Split {
  int feature = -1;
  double threshold = 0.0;
  double score = 0.0;
};

namespace detail {

inline double impurity(std::span<const double> class_weights, double total,
                       SplitCriterion crit) {
  if (total <= 0.0) return 0.0;
  if (crit == SplitCriterion::Gini) {
    double acc = 0.0;
    for (double c : class_weights) {
      double p = c / total;
      acc += p * p;
    }
    return 1.0 - acc;
  }
  double acc = 0.0;
  for (double c : class_weights) {
    if (c <= 0.0) continue;
    double p = c / total;
    acc -= p * std::log2(p);
  }
  return acc;
}

// Candidate thresholds for one feature: midpoints between consecutive
// distinct sorted values observed at the node.
inline std::vector<double> candidate_thresholds(std::vector<double> values) {
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());
  std::vector<double> mids;
  for (std::size_t i = 0; i + 1 < values.size(); ++i)
    mids.push_back((values[i] + values[i + 1]) / 2.0);
  return mids;
}

}  // namespace detail

// Exhaustive search over (feature, midpoint) candidates. Scores are computed
// by a fresh pass per candidate in dataset order, so the winning score is
// bit-reproducible and directly comparable against an independent
// re-evaluation of the same candidate. Ties keep the first candidate in
// (feature, ascending threshold) order. Returns nullopt when no feature has
// two distinct values.
inline std::optional<Split> best_classification_split(
    std::span<const WeightedSample> data, std::span<const int> idx, int n_features,
    int n_classes, SplitCriterion crit) {
  std::optional<Split> best;
  std::vector<double> left(n_classes), right(n_classes), values;
  for (int f = 0; f < n_features; ++f) {
    values.clear();
    for (int i : idx) values.push_back(data[i].features[f]);
    for (double t : detail::candidate_thresholds(std::move(values))) {
      std::fill(left.begin(), left.end(), 0.0);
      std::fill(right.begin(), right.end(), 0.0);
      double wl = 0.0, wr = 0.0;
      std::size_t nl = 0;
      for (int i : idx) {
        const WeightedSample& s = data[i];
        if (s.features[f] < t) {
          left[s.label] += s.weight;
          wl += s.weight;
          ++nl;
        } else {
          right[s.label] += s.weight;
          wr += s.weight;
        }
      }
      if (nl == 0 || nl == idx.size()) continue;  // degenerate midpoint rounding
      double score = (wl * detail::impurity(left, wl, crit) +
                      wr * detail::impurity(right, wr, crit)) /
                     (wl + wr);
      if (!best || score < best->score) best = Split{f, t, score};
    }
  }
  return best;
}

inline std::optional<Split> best_regression_split(
    std::span<const RegressionSample> data, std::span<const int> idx,
    int n_features) {
  std::optional<Split> best;
  std::vector<double> values;
  for (int f = 0; f < n_features; ++f) {
    values.clear();
    for (int i : idx) values.push_back(data[i].features[f]);
    for (double t : detail::candidate_thresholds(std::move(values))) {
      double wl = 0.0, wr = 0.0, suml = 0.0, sumr = 0.0;
      std::size_t nl = 0;
      for (int i : idx) {
        const RegressionSample& s = data[i];
        if (s.features[f] < t) {
          wl += s.weight;
          suml += s.weight * s.target;
          ++nl;
        } else {
          wr += s.weight;
          sumr += s.weight * s.target;
        }
      }
      if (nl == 0 || nl == idx.size()) continue;
      double ml = wl > 0.0 ? suml / wl : 0.0;
      double mr = wr > 0.0 ? sumr / wr : 0.0;
      double sse = 0.0;
      for (int i : idx) {
        const RegressionSample& s = data[i];
        double dev = s.target - (s.features[f] < t ? ml : mr);
        sse += s.weight * dev * dev;
      }
      double score = sse / (wl + wr);
      if (!best || score < best->score) best = Split{f, t, score};
    }
  }
  return best;
}

// --- Leaf statistics ---

inline std::vector<double> class_weights(std::span<const WeightedSample> data,
                                         std::span<const int> idx, int n_classes) {
  std::vector<double> counts(n_classes, 0.0);
  for (int i : idx) counts[data[i].label] += data[i].weight;
  return counts;
}

inline int argmax_class(std::span<const double> counts) {
  int best = 0;
  for (int c = 1; c < static_cast<int>(counts.size()); ++c)
    if (counts[c] > counts[best]) best = c;
  return best;
}

// --- Training ---

namespace detail {

struct GrowItem {
  int node;
  std::vector<int> idx;
  int depth;
};

inline bool labels_pure(std::span<const WeightedSample> data, std::span<const int> idx) {
  for (std::size_t i = 1; i < idx.size(); ++i)
    if (data[idx[i]].label != data[idx[0]].label) return false;
  return true;
}

inline double total_weight_cls(std::span<const WeightedSample> data,
                               std::span<const int> idx) {
  double w = 0.0;
  for (int i : idx) w += data[i].weight;
  return w;
}

}  // namespace detail

inline DecisionTreePolicy train_decision_tree(std::span<const WeightedSample> data,
                                              const TrainOptions& opt) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(data.size()); ++i)
    if (data[i].weight > 0.0) idx.push_back(i);
  if (idx.empty()) throw EmptyDataset("decision tree training needs positive-weight samples");

  DecisionTreePolicy tree;
  tree.max_depth = opt.max_depth;
  tree.n_features = static_cast<int>(data[idx[0]].features.size());
  tree.criterion = opt.criterion;
  int n_classes = opt.n_classes;
  if (n_classes < 0) {
    n_classes = 0;
    for (int i : idx) n_classes = std::max(n_classes, data[i].label + 1);
  }
  tree.n_classes = n_classes;

  std::deque<detail::GrowItem> queue;
  tree.nodes.emplace_back();
  queue.push_back({0, std::move(idx), 0});
  while (!queue.empty()) {
    detail::GrowItem item = std::move(queue.front());
    queue.pop_front();
    TreeNode& node = tree.nodes[item.node];
    node.counts = class_weights(data, item.idx, n_classes);
    node.action = argmax_class(node.counts);

    bool stop = item.depth >= opt.max_depth || detail::labels_pure(data, item.idx) ||
                detail::total_weight_cls(data, item.idx) < opt.min_samples_split;
    std::optional<Split> split;
    if (!stop)
      split = best_classification_split(data, item.idx, tree.n_features, n_classes,
                                        opt.criterion);
    if (stop || !split) {
      node.leaf = true;
      continue;
    }
    node.leaf = false;
    node.feature = split->feature;
    node.threshold = split->threshold;
    node.counts.clear();  // internal nodes carry no counts
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    int l = node.left, r = node.right;
    std::vector<int> left_idx, right_idx;
    for (int i : item.idx) {
      if (data[i].features[split->feature] < split->threshold)
        left_idx.push_back(i);
      else
        right_idx.push_back(i);
    }
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    queue.push_back({l, std::move(left_idx), item.depth + 1});
    queue.push_back({r, std::move(right_idx), item.depth + 1});
  }
  return tree;
}

inline RegressionTree train_regression_tree(std::span<const RegressionSample> data,
                                            int max_depth,
                                            double min_samples_split = 2.0) {
  std::vector<int> idx;
  for (int i = 0; i < static_cast<int>(data.size()); ++i)
    if (data[i].weight > 0.0) idx.push_back(i);

  RegressionTree tree;
  tree.max_depth = max_depth;
  if (idx.empty()) {  // constant-zero tree
    tree.nodes.push_back(TreeNode{});
    return tree;
  }
  tree.n_features = static_cast<int>(data[idx[0]].features.size());

  auto weighted_mean = [&](const std::vector<int>& ids) {
    double w = 0.0, sum = 0.0;
    for (int i : ids) {
      w += data[i].weight;
      sum += data[i].weight * data[i].target;
    }
    return w > 0.0 ? sum / w : 0.0;
  };
  auto pure = [&](const std::vector<int>& ids) {
    for (std::size_t i = 1; i < ids.size(); ++i)
      if (data[ids[i]].target != data[ids[0]].target) return false;
    return true;
  };

  std::deque<detail::GrowItem> queue;
  tree.nodes.emplace_back();
  queue.push_back({0, std::move(idx), 0});
  while (!queue.empty()) {
    detail::GrowItem item = std::move(queue.front());
    queue.pop_front();
    TreeNode& node = tree.nodes[item.node];
    node.value = weighted_mean(item.idx);

    double w = 0.0;
    for (int i : item.idx) w += data[i].weight;
    bool stop = item.depth >= max_depth || pure(item.idx) || w < min_samples_split;
    std::optional<Split> split;
    if (!stop) split = best_regression_split(data, item.idx, tree.n_features);
    if (stop || !split) {
      node.leaf = true;
      continue;
    }
    node.leaf = false;
    node.feature = split->feature;
    node.threshold = split->threshold;
    std::vector<int> left_idx, right_idx;
    for (int i : item.idx) {
      if (data[i].features[split->feature] < split->threshold)
        left_idx.push_back(i);
      else
        right_idx.push_back(i);
    }
    node.left = static_cast<int>(tree.nodes.size());
    node.right = node.left + 1;
    int l = node.left, r = node.right;
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    queue.push_back({l, std::move(left_idx), item.depth + 1});
    queue.push_back({r, std::move(right_idx), item.depth + 1});
  }
  return tree;
}

// --- Prediction ---

template <typename Tree>
inline int leaf_index(const Tree& tree, std::span<const double> features) {
  int n = 0;
  while (!tree.nodes[n].leaf) {
    const TreeNode& node = tree.nodes[n];
    n = features[node.feature] < node.threshold ? node.left : node.right;
  }
  return n;
}

inline int predict(const DecisionTreePolicy& tree, std::span<const double> features) {
  return tree.nodes[leaf_index(tree, features)].action;
}

inline double predict(const RegressionTree& tree, std::span<const double> features) {
  return tree.nodes[leaf_index(tree, features)].value;
}

// --- Feature importance ---
//
// Per-feature sum of weighted impurity decrease over the internal nodes that
// split on it, normalized to sum one; uniform when the tree never splits.
// Node statistics are rebuilt from the leaf counts, so importances survive a
// serialization round trip.

inline std::vector<double> feature_importance(const DecisionTreePolicy& tree) {
  std::vector<std::vector<double>> counts(tree.nodes.size());
  // Children precede nothing: node indices only grow toward the leaves, so a
  // reverse sweep sees children before parents.
  for (int n = static_cast<int>(tree.nodes.size()) - 1; n >= 0; --n) {
    const TreeNode& node = tree.nodes[n];
    if (node.leaf) {
      counts[n] = node.counts;
      if (counts[n].empty()) counts[n].assign(tree.n_classes, 0.0);
    } else {
      counts[n].assign(tree.n_classes, 0.0);
      for (int c = 0; c < tree.n_classes; ++c)
        counts[n][c] = counts[node.left][c] + counts[node.right][c];
    }
  }
  std::vector<double> importance(tree.n_features, 0.0);
  double any = 0.0;
  for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
    const TreeNode& node = tree.nodes[n];
    if (node.leaf) continue;
    auto wsum = [](const std::vector<double>& c) {
      double w = 0.0;
      for (double x : c) w += x;
      return w;
    };
    double w = wsum(counts[n]), wl = wsum(counts[node.left]), wr = wsum(counts[node.right]);
    double gain = w * detail::impurity(counts[n], w, tree.criterion) -
                  wl * detail::impurity(counts[node.left], wl, tree.criterion) -
                  wr * detail::impurity(counts[node.right], wr, tree.criterion);
    importance[node.feature] += gain;
    any += gain;
  }
  if (any <= 0.0) {
    if (tree.n_features > 0)
      importance.assign(tree.n_features, 1.0 / tree.n_features);
    return importance;
  }
  for (double& v : importance) v /= any;
  return importance;
}

// --- Serialization ---

inline nlohmann::json tree_to_json(const DecisionTreePolicy& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const TreeNode& n : tree.nodes) {
    if (n.leaf) {
      nodes.push_back({{"kind", "leaf"}, {"action", n.action}, {"counts", n.counts}});
    } else {
      nodes.push_back({{"kind", "internal"},
                       {"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right}});
    }
  }
  return nlohmann::json{
      {"kind", "policy_tree"},
      {"criterion", tree.criterion == SplitCriterion::Gini ? "gini" : "entropy"},
      {"max_depth", tree.max_depth},
      {"n_features", tree.n_features},
      {"n_classes", tree.n_classes},
      {"feature_names", tree.feature_names},
      {"action_names", tree.action_names},
      {"nodes", nodes}};
}

inline std::string serialize_tree(const DecisionTreePolicy& tree) {
  return tree_to_json(tree).dump(2) + "\n";
}

namespace detail {

inline void validate_tree_shape(const std::vector<TreeNode>& nodes) {
  if (nodes.empty()) throw ParseError("tree has no nodes");
  std::vector<int> refs(nodes.size(), 0);
  for (std::size_t n = 0; n < nodes.size(); ++n) {
    const TreeNode& node = nodes[n];
    if (node.leaf) continue;
    for (int child : {node.left, node.right}) {
      if (child < 0 || child >= static_cast<int>(nodes.size()))
        throw ParseError("node " + std::to_string(n) + " has child index " +
                         std::to_string(child) + " out of range");
      if (child == static_cast<int>(n))
        throw ParseError("node " + std::to_string(n) + " references itself");
      refs[child] += 1;
    }
    if (node.left == node.right)
      throw ParseError("node " + std::to_string(n) + " has identical children");
  }
  if (refs[0] != 0) throw ParseError("root node is referenced as a child");
  for (std::size_t n = 1; n < nodes.size(); ++n)
    if (refs[n] != 1)
      throw ParseError("node " + std::to_string(n) + " referenced " +
                       std::to_string(refs[n]) + " times");
}

}  // namespace detail

inline DecisionTreePolicy tree_from_json(const nlohmann::json& j) {
  DecisionTreePolicy tree;
  try {
    if (j.at("kind").get<std::string>() != "policy_tree")
      throw ParseError("expected kind 'policy_tree'");
    tree.criterion = j.at("criterion").get<std::string>() == "entropy"
                         ? SplitCriterion::Entropy
                         : SplitCriterion::Gini;
    tree.max_depth = j.at("max_depth").get<int>();
    tree.n_features = j.at("n_features").get<int>();
    tree.n_classes = j.at("n_classes").get<int>();
    tree.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    tree.action_names = j.at("action_names").get<std::vector<std::string>>();
    for (const nlohmann::json& nj : j.at("nodes")) {
      TreeNode n;
      std::string kind = nj.at("kind").get<std::string>();
      if (kind == "leaf") {
        n.leaf = true;
        n.action = nj.at("action").get<int>();
        n.counts = nj.at("counts").get<std::vector<double>>();
      } else if (kind == "internal") {
        n.leaf = false;
        n.feature = nj.at("feature").get<int>();
        n.threshold = nj.at("threshold").get<double>();
        n.left = nj.at("left").get<int>();
        n.right = nj.at("right").get<int>();
        if (n.feature < 0 || n.feature >= tree.n_features)
          throw ParseError("split feature " + std::to_string(n.feature) +
                           " out of range");
      } else {
        throw ParseError("unknown node kind '" + kind + "'");
      }
      tree.nodes.push_back(std::move(n));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed tree json: ") + e.what());
  }
  detail::validate_tree_shape(tree.nodes);
  return tree;
}

inline DecisionTreePolicy deserialize_tree(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("tree json parse failure: ") + e.what());
  }
  return tree_from_json(j);
}

inline nlohmann::json regression_tree_to_json(const RegressionTree& tree) {
  nlohmann::json nodes = nlohmann::json::array();
  for (const TreeNode& n : tree.nodes) {
    if (n.leaf) {
      nodes.push_back({{"kind", "leaf"}, {"value", n.value}});
    } else {
      nodes.push_back({{"kind", "internal"},
                       {"feature", n.feature},
                       {"threshold", n.threshold},
                       {"left", n.left},
                       {"right", n.right}});
    }
  }
  return nlohmann::json{{"kind", "regression_tree"},
                        {"max_depth", tree.max_depth},
                        {"n_features", tree.n_features},
                        {"nodes", nodes}};
}

inline RegressionTree regression_tree_from_json(const nlohmann::json& j) {
  RegressionTree tree;
  try {
    if (j.at("kind").get<std::string>() != "regression_tree")
      throw ParseError("expected kind 'regression_tree'");
    tree.max_depth = j.at("max_depth").get<int>();
    tree.n_features = j.at("n_features").get<int>();
    for (const nlohmann::json& nj : j.at("nodes")) {
      TreeNode n;
      if (nj.at("kind").get<std::string>() == "leaf") {
        n.leaf = true;
        n.value = nj.at("value").get<double>();
      } else {
        n.leaf = false;
        n.feature = nj.at("feature").get<int>();
        n.threshold = nj.at("threshold").get<double>();
        n.left = nj.at("left").get<int>();
        n.right = nj.at("right").get<int>();
      }
      tree.nodes.push_back(std::move(n));
    }
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("malformed tree json: ") + e.what());
  }
  detail::validate_tree_shape(tree.nodes);
  return tree;
}

// --- DOT export ---

namespace detail {

inline std::string dot_number(double v) { return nlohmann::json(v).dump(); }

inline std::string dot_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    if (c == '"' || c == '\\') out.push_back('\\');
    out.push_back(c);
  }
  return out;
}

}  // namespace detail

inline std::string tree_to_dot(const DecisionTreePolicy& tree) {
  auto feature_label = [&](int f) {
    if (f >= 0 && f < static_cast<int>(tree.feature_names.size()))
      return tree.feature_names[f];
    return "f" + std::to_string(f);
  };
  auto action_label = [&](int a) {
    if (a >= 0 && a < static_cast<int>(tree.action_names.size()))
      return tree.action_names[a];
    return "a" + std::to_string(a);
  };
  std::string out = "digraph policy_tree {\n";
  for (std::size_t n = 0; n < tree.nodes.size(); ++n) {
    const TreeNode& node = tree.nodes[n];
    if (node.leaf) {
      out += "  n" + std::to_string(n) + " [shape=box, label=\"" +
             detail::dot_escape(action_label(node.action)) + "\"];\n";
    } else {
      std::string cond = feature_label(node.feature);
      out += "  n" + std::to_string(n) + " [label=\"" + detail::dot_escape(cond) +
             "\"];\n";
      out += "  n" + std::to_string(n) + " -> n" + std::to_string(node.left) +
             " [label=\"" + detail::dot_escape(cond) + " < " +
             detail::dot_number(node.threshold) + "\"];\n";
      out += "  n" + std::to_string(n) + " -> n" + std::to_string(node.right) +
             " [label=\"" + detail::dot_escape(cond) + " >= " +
             detail::dot_number(node.threshold) + "\"];\n";
    }
  }
  out += "}\n";
  return out;
}

}  // namespace mapex
