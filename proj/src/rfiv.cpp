#include "minimax_iv/rfiv.hpp"

#include "minimax_iv/rng.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

namespace minimax_iv::rfiv {

void TreeParams::validate() const {
  if (max_depth < 0) throw InvalidInput("tree: max_depth must be >= 0");
  if (min_leaf < 1) throw InvalidInput("tree: min_leaf must be >= 1");
  if (max_features < 0) throw InvalidInput("tree: max_features must be >= 0");
}

void ForestParams::validate() const {
  tree.validate();
  if (n_trees < 1) throw InvalidInput("forest: n_trees must be >= 1");
}

void RfivConfig::validate() const {
  forest.validate();
  classifier.validate();
  if (iters < 1) throw InvalidInput("rfiv: T must be >= 1");
  if (classifier_trees < 1) throw InvalidInput("rfiv: classifier_trees must be >= 1");
}

Tree::Tree(std::vector<TreeNode> nodes) : nodes_(std::move(nodes)) {
  if (nodes_.empty()) throw InvalidInput("Tree: needs at least one node");
  const int m = static_cast<int>(nodes_.size());
  for (const auto& nd : nodes_)
    if (nd.feature >= 0 && (nd.left <= 0 || nd.left >= m || nd.right <= 0 || nd.right >= m))
      throw InvalidInput("Tree: child index out of range");
}

double Tree::predict(const Eigen::Ref<const Vector>& x) const {
  int k = 0;
  while (nodes_[static_cast<std::size_t>(k)].feature >= 0) {
    const auto& nd = nodes_[static_cast<std::size_t>(k)];
    if (nd.feature >= x.size()) throw InvalidInput("Tree: feature index exceeds input dimension");
    k = x(nd.feature) <= nd.threshold ? nd.left : nd.right;
  }
  return nodes_[static_cast<std::size_t>(k)].value;
}

Vector Tree::predict_rows(const Matrix& x) const {
  Vector out(x.rows());
  for (Eigen::Index i = 0; i < x.rows(); ++i) out(i) = predict(x.row(i).transpose());
  return out;
}

int Tree::depth() const {
  std::function<int(int)> rec = [&](int k) -> int {
    const auto& nd = nodes_[static_cast<std::size_t>(k)];
    return nd.feature < 0 ? 0 : 1 + std::max(rec(nd.left), rec(nd.right));
  };
  return rec(0);
}

std::vector<Eigen::Index> Tree::leaf_sizes(const Matrix& x) const {
  std::vector<Eigen::Index> per_node(nodes_.size(), 0);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    int k = 0;
    while (nodes_[static_cast<std::size_t>(k)].feature >= 0) {
      const auto& nd = nodes_[static_cast<std::size_t>(k)];
      k = x(i, nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    ++per_node[static_cast<std::size_t>(k)];
  }
  std::vector<Eigen::Index> out;
  for (std::size_t k = 0; k < nodes_.size(); ++k)
    if (nodes_[k].feature < 0) out.push_back(per_node[k]);
  return out;
}

SortedFeatures::SortedFeatures(const Matrix& features) : features_(&features) {
  if (features.rows() < 1 || features.cols() < 1) throw InvalidInput("trees: empty feature matrix");
  orders_.resize(static_cast<std::size_t>(features.cols()));
  for (Eigen::Index j = 0; j < features.cols(); ++j) {
    auto& ord = orders_[static_cast<std::size_t>(j)];
    ord.resize(static_cast<std::size_t>(features.rows()));
    std::iota(ord.begin(), ord.end(), Eigen::Index{0});
    std::stable_sort(ord.begin(), ord.end(),
                     [&](Eigen::Index a, Eigen::Index b) { return features(a, j) < features(b, j); });
  }
}

namespace {

// Greedy top-down growth shared by both tree kinds. Row i enters with
// multiplicity count[i] (which min_leaf counts), carries mass m[i] and
// contributes s[i] to the node statistic S; the node score is score(M, S)
// with M the summed mass.
struct Grower {
  const SortedFeatures& sf;
  const std::vector<int>& count;
  const Vector& m;
  const Vector& s;
  const TreeParams& params;
  std::function<double(double, double)> score;
  std::function<double(double, double)> leaf_value;
  std::uint64_t seed = 0;

  std::vector<int> node_of;
  std::vector<TreeNode> nodes;

  Tree grow() {
    const Eigen::Index n = sf.features().rows();
    node_of.assign(static_cast<std::size_t>(n), -1);
    double w = 0.0, mass = 0.0, tot = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      if (count[static_cast<std::size_t>(i)] > 0) {
        node_of[static_cast<std::size_t>(i)] = 0;
        w += count[static_cast<std::size_t>(i)];
        mass += m(i);
        tot += s(i);
      }
    }
    nodes.push_back({});
    split(0, 0, w, mass, tot);
    return Tree(std::move(nodes));
  }

  std::vector<Eigen::Index> candidate_features(int id) const {
    const Eigen::Index p = sf.features().cols();
    std::vector<Eigen::Index> all(static_cast<std::size_t>(p));
    std::iota(all.begin(), all.end(), Eigen::Index{0});
    if (params.max_features == 0 || params.max_features >= p) return all;
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(id)}));
    const auto k = static_cast<std::size_t>(params.max_features);
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, all.size() - 1);
      std::swap(all[i], all[pick(rng)]);
    }
    all.resize(k);
    std::sort(all.begin(), all.end());
    return all;
  }

  void split(int id, int depth, double w, double mass, double tot) {
    nodes[static_cast<std::size_t>(id)].value = leaf_value(mass, tot);
    const auto min_leaf = static_cast<double>(params.min_leaf);
    if (depth >= params.max_depth || w < 2.0 * min_leaf) return;

    const Matrix& x = sf.features();
    const double parent = score(mass, tot);
    double best_gain = 1e-12 * std::max(1.0, std::abs(parent));
    int best_feature = -1;
    double best_threshold = 0.0, best_wl = 0.0, best_ml = 0.0, best_sl = 0.0;
    for (Eigen::Index j : candidate_features(id)) {
      double wl = 0.0, ml = 0.0, sl = 0.0;
      Eigen::Index prev = -1;
      for (Eigen::Index i : sf.order(j)) {
        if (node_of[static_cast<std::size_t>(i)] != id) continue;
        if (prev >= 0 && x(i, j) > x(prev, j) && wl >= min_leaf && w - wl >= min_leaf) {
          const double gain = score(ml, sl) + score(mass - ml, tot - sl) - parent;
          if (gain > best_gain) {
            best_gain = gain;
            best_feature = static_cast<int>(j);
            double mid = 0.5 * (x(prev, j) + x(i, j));
            if (!(mid < x(i, j))) mid = x(prev, j);
            best_threshold = mid;
            best_wl = wl;
            best_ml = ml;
            best_sl = sl;
          }
        }
        wl += count[static_cast<std::size_t>(i)];
        ml += m(i);
        sl += s(i);
        prev = i;
      }
    }
    if (best_feature < 0) return;

    const int left = static_cast<int>(nodes.size());
    const int right = left + 1;
    nodes.push_back({});
    nodes.push_back({});
    auto& nd = nodes[static_cast<std::size_t>(id)];
    nd.feature = best_feature;
    nd.threshold = best_threshold;
    nd.left = left;
    nd.right = right;
    for (std::size_t i = 0; i < node_of.size(); ++i)
      if (node_of[i] == id)
        node_of[i] = x(static_cast<Eigen::Index>(i), best_feature) <= best_threshold ? left : right;
    split(left, depth + 1, best_wl, best_ml, best_sl);
    split(right, depth + 1, w - best_wl, mass - best_ml, tot - best_sl);
  }
};

void check_rows(const SortedFeatures& sf, Eigen::Index n, const char* what) {
  if (sf.features().rows() != n) throw InvalidInput(std::string(what) + ": length mismatch with features");
}

}  // namespace

Tree fit_regression_tree(const SortedFeatures& sf, const Vector& targets, const std::vector<int>& counts,
                         const TreeParams& params, std::uint64_t seed) {
  params.validate();
  check_rows(sf, targets.size(), "regression tree");
  if (static_cast<Eigen::Index>(counts.size()) != targets.size())
    throw InvalidInput("regression tree: counts length mismatch");
  Vector s(targets.size()), mass(targets.size());
  for (Eigen::Index i = 0; i < targets.size(); ++i) {
    mass(i) = counts[static_cast<std::size_t>(i)];
    s(i) = mass(i) * targets(i);
  }
  Grower g{sf,
           counts,
           mass,
           s,
           params,
           [](double w, double t) { return w > 0.0 ? t * t / w : 0.0; },
           [](double w, double t) { return w > 0.0 ? t / w : 0.0; },
           seed,
           {},
           {}};
  return g.grow();
}

RegressionForest::RegressionForest(std::vector<Tree> trees) : trees_(std::move(trees)) {
  if (trees_.empty()) throw InvalidInput("RegressionForest: needs at least one tree");
}

double RegressionForest::predict(const Eigen::Ref<const Vector>& x) const {
  double acc = 0.0;
  for (const auto& t : trees_) acc += t.predict(x);
  return acc / static_cast<double>(trees_.size());
}

Vector RegressionForest::predict_rows(const Matrix& x) const {
  Vector acc = Vector::Zero(x.rows());
  for (const auto& t : trees_) acc += t.predict_rows(x);
  return acc / static_cast<double>(trees_.size());
}

RegressionForest regression_oracle(const SortedFeatures& z, const Vector& u, const ForestParams& params,
                                   std::uint64_t seed) {
  params.validate();
  const Eigen::Index n = u.size();
  check_rows(z, n, "regression oracle");
  std::vector<Tree> trees;
  trees.reserve(static_cast<std::size_t>(params.n_trees));
  std::vector<int> counts(static_cast<std::size_t>(n));
  for (int k = 0; k < params.n_trees; ++k) {
    if (params.bootstrap) {
      std::fill(counts.begin(), counts.end(), 0);
      Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(k)}));
      std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
      for (Eigen::Index i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(pick(rng))];
    } else {
      std::fill(counts.begin(), counts.end(), 1);
    }
    trees.push_back(fit_regression_tree(z, u, counts, params.tree,
                                        derive_seed(seed, {static_cast<std::uint64_t>(k), 1})));
  }
  return RegressionForest(std::move(trees));
}

RegressionForest regression_oracle(const Matrix& z, const Vector& u, const ForestParams& params, std::uint64_t seed) {
  return regression_oracle(SortedFeatures(z), u, params, seed);
}

std::string to_string(LeafRule rule) { return rule == LeafRule::hard ? "hard" : "soft"; }

LeafRule leaf_rule_from_string(const std::string& name) {
  if (name == "hard") return LeafRule::hard;
  if (name == "soft") return LeafRule::soft;
  throw InvalidInput("unknown leaf rule '" + name + "' (expected hard or soft)");
}

Tree classification_oracle(const SortedFeatures& x, const std::vector<int>& labels, const Vector& weights,
                           const TreeParams& params, LeafRule rule, std::uint64_t seed) {
  params.validate();
  const Eigen::Index n = weights.size();
  check_rows(x, n, "classification oracle");
  if (static_cast<Eigen::Index>(labels.size()) != n) throw InvalidInput("classification oracle: labels length mismatch");
  Vector s(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int v = labels[static_cast<std::size_t>(i)];
    if (v != 0 && v != 1) throw InvalidInput("classification oracle: labels must be 0 or 1");
    if (!(weights(i) >= 0.0)) throw InvalidInput("classification oracle: weights must be nonnegative");
    s(i) = weights(i) * (2.0 * v - 1.0);
  }
  const std::vector<int> ones(static_cast<std::size_t>(n), 1);
  if (rule == LeafRule::hard) {
    // The weighted accuracy of a +-1 leaf exceeds that of the opposite label by
    // |sum w (2v - 1)|, so hard leaves with this score maximize the objective.
    Grower g{x,
             ones,
             weights,
             s,
             params,
             [](double, double t) { return std::abs(t); },
             [](double, double t) { return t > 0.0 ? 1.0 : (t < 0.0 ? -1.0 : 0.0); },
             seed,
             {},
             {}};
    return g.grow();
  }
  // Weighted Gini impurity of a leaf with mass M and signed mass S is
  // (M - S^2 / M) / 2, so minimizing it maximizes the summed S^2 / M.
  Grower g{x,
           ones,
           weights,
           s,
           params,
           [](double m, double t) { return m > 0.0 ? t * t / m : 0.0; },
           [](double m, double t) { return m > 0.0 ? t / m : 0.0; },
           seed,
           {},
           {}};
  return g.grow();
}

Tree classification_oracle(const Matrix& x, const std::vector<int>& labels, const Vector& weights,
                           const TreeParams& params, LeafRule rule, std::uint64_t seed) {
  return classification_oracle(SortedFeatures(x), labels, weights, params, rule, seed);
}

EnsembleModel::EnsembleModel(std::vector<Tree> trees, double offset, double scale, Eigen::Index input_dim,
                             Vector mean_adversary)
    : trees_(std::move(trees)),
      offset_(offset),
      scale_(scale),
      input_dim_(input_dim),
      mean_adversary_(std::move(mean_adversary)) {
  if (trees_.empty()) throw InvalidInput("EnsembleModel: needs at least one tree");
  if (!(scale_ > 0.0)) throw InvalidInput("EnsembleModel: scale must be positive");
}

Vector EnsembleModel::predict_normalized(const Matrix& x) const {
  if (x.cols() != input_dim_) throw InvalidInput("EnsembleModel: dimension mismatch");
  Vector acc = Vector::Zero(x.rows());
  for (const auto& t : trees_) acc += t.predict_rows(x);
  return acc / static_cast<double>(trees_.size());
}

double EnsembleModel::predict(const Eigen::Ref<const Vector>& x) const {
  if (x.size() != input_dim_) throw InvalidInput("EnsembleModel: dimension mismatch");
  double acc = 0.0;
  for (const auto& t : trees_) acc += t.predict(x);
  return offset_ + scale_ * acc / static_cast<double>(trees_.size());
}

Vector EnsembleModel::predict_rows(const Matrix& x) const {
  return (offset_ + scale_ * predict_normalized(x).array()).matrix();
}

std::pair<double, double> normalization(const Vector& y) {
  const double lo = y.minCoeff(), hi = y.maxCoeff();
  const double half = 0.5 * (hi - lo);
  return {0.5 * (hi + lo), half > 0.0 ? half : 1.0};
}

EnsembleModel fit_rfiv(const Dataset& data, const RfivConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = data.n();
  const auto [offset, scale] = normalization(data.y());
  const Vector y = ((data.y().array() - offset) / scale).matrix();
  const SortedFeatures sz(data.z());
  const SortedFeatures sx(data.x());

  std::vector<Tree> trees;
  trees.reserve(static_cast<std::size_t>(cfg.iters) * static_cast<std::size_t>(cfg.classifier_trees));
  std::vector<RoundDiagnostics> rounds;
  Vector h_sum = Vector::Zero(n);
  Vector a_sum = Vector::Zero(n);
  std::vector<int> labels(static_cast<std::size_t>(n));
  Vector u(n);
  for (int t = 1; t <= cfg.iters; ++t) {
    // Follow-the-leader for the adversary in completed-square form.
    if (t == 1)
      u = 0.5 * y;
    else
      u = 0.5 * (y - h_sum / static_cast<double>(t - 1));
    const RegressionForest f = regression_oracle(sz, u, cfg.forest, derive_seed(cfg.seed, {static_cast<std::uint64_t>(t)}));
    const Vector a = f.predict_rows(data.z());
    for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = a(i) > 0.0 ? 1 : 0;
    const Vector w = a.cwiseAbs();
    std::vector<Tree> round_trees;
    Vector hx = Vector::Zero(n);
    for (int k = 0; k < cfg.classifier_trees; ++k) {
      round_trees.push_back(classification_oracle(
          sx, labels, w, cfg.classifier, cfg.leaf_rule,
          derive_seed(cfg.seed, {static_cast<std::uint64_t>(t), hash_name("learner"), static_cast<std::uint64_t>(k)})));
      hx += round_trees.back().predict_rows(data.x());
    }
    hx /= static_cast<double>(cfg.classifier_trees);

    RoundDiagnostics rd;
    const Vector resid = t == 1 ? y : Vector(y - h_sum / static_cast<double>(t - 1));
    rd.adversary_loss = (resid.dot(a) - a.squaredNorm()) / static_cast<double>(n);
    rd.learner_objective = hx.dot(a) / static_cast<double>(n);
    rounds.push_back(rd);

    h_sum += hx;
    a_sum += a;
    for (auto& tr : round_trees) trees.push_back(std::move(tr));
  }
  EnsembleModel model(std::move(trees), offset, scale, data.p(), a_sum / static_cast<double>(cfg.iters));
  model.rounds = std::move(rounds);
  return model;
}

double minimax_gap(const EnsembleModel& model, const Dataset& data, const RfivConfig& cfg) {
  cfg.validate();
  const Eigen::Index n = data.n();
  if (model.mean_adversary().size() != n) throw InvalidInput("minimax_gap: model was not fitted on this data");
  const double nd = static_cast<double>(n);
  const Vector y = ((data.y().array() - model.offset()) / model.scale()).matrix();
  const Vector h_bar = model.predict_normalized(data.x());
  const Vector& a_bar = model.mean_adversary();

  // max_a (1/n) sum r_i a_i - a_i^2 is least squares of a on r/2.
  const Vector r = y - h_bar;
  const RegressionForest f =
      regression_oracle(data.z(), 0.5 * r, cfg.forest, derive_seed(cfg.seed, {static_cast<std::uint64_t>(cfg.iters) + 1}));
  const Vector a = f.predict_rows(data.z());
  // The zero function is a one-leaf tree, so the value is at least 0.
  const double best_max = std::max((r.dot(a) - a.squaredNorm()) / nd, 0.0);

  // min_b (1/n) sum (y_i - b_i) a_bar_i - a_bar_i^2 maximizes sum b_i a_bar_i;
  // hard leaves attain the greedy optimum whatever rule the fit used.
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (Eigen::Index i = 0; i < n; ++i) labels[static_cast<std::size_t>(i)] = a_bar(i) > 0.0 ? 1 : 0;
  const Tree h = classification_oracle(data.x(), labels, a_bar.cwiseAbs(), cfg.classifier, LeafRule::hard);
  const Vector b = h.predict_rows(data.x());
  const double best_min = ((y - b).dot(a_bar) - a_bar.squaredNorm()) / nd;
  return best_max - best_min;
}

double rfiv_bound(int iters) {
  if (iters < 1) throw InvalidInput("rfiv_bound: T must be >= 1");
  const double t = static_cast<double>(iters);
  return 8.0 * (std::log(t) + 1.0) / t;
}

}  // namespace minimax_iv::rfiv
