#include "minimax_iv/config_io.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace minimax_iv {

namespace {

// Wraps one JSON object; every key must be claimed before finish().
class Fields {
 public:
  Fields(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw InvalidInput(path_ + ": expected a JSON object");
  }

  // Claims `key`; true when it is present and not null.
  bool has(const std::string& key) {
    claimed_.insert(key);
    return j_.contains(key) && !j_.at(key).is_null();
  }

  template <class T>
  void get(const std::string& key, T& out) {
    if (has(key)) out = as<T>(key);
  }

  // Claims `key`; true when it is present, even as null.
  bool contains(const std::string& key) {
    claimed_.insert(key);
    return j_.contains(key);
  }

  // null resets the optional, absence leaves it untouched.
  template <class T>
  void get_optional(const std::string& key, std::optional<T>& out) {
    claimed_.insert(key);
    if (!j_.contains(key)) return;
    if (j_.at(key).is_null())
      out.reset();
    else
      out = as<T>(key);
  }

  template <class T>
  T as(const std::string& key) const {
    try {
      return j_.at(key).get<T>();
    } catch (const nlohmann::json::exception&) {
      throw InvalidInput(path(key) + ": wrong value type");
    }
  }

  const Json& at(const std::string& key) const { return j_.at(key); }
  std::string path(const std::string& key) const { return path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!claimed_.count(it.key())) throw InvalidInput(path_ + ": unknown key '" + it.key() + "'");
  }

 private:
  const Json& j_;
  std::string path_;
  std::set<std::string> claimed_;
};

template <class T>
Json opt(const std::optional<T>& v) {
  return v ? Json(*v) : Json(nullptr);
}

Json box_json(const std::optional<shape::Box>& b) { return b ? Json::array({b->lo, b->hi}) : Json(nullptr); }

void read_box(Fields& f, const std::string& key, std::optional<shape::Box>& out) {
  if (!f.contains(key)) return;
  if (!f.has(key)) {
    out.reset();
    return;
  }
  const auto v = f.as<std::vector<double>>(key);
  if (v.size() != 2) throw InvalidInput(f.path(key) + ": expected [lo, hi]");
  out = shape::Box{v[0], v[1]};
}

Json tree_json(const rfiv::TreeParams& p) {
  return Json{{"max_depth", p.max_depth}, {"min_leaf", p.min_leaf}, {"max_features", p.max_features}};
}

void read_tree(Fields& f, rfiv::TreeParams& p) {
  f.get("max_depth", p.max_depth);
  f.get("min_leaf", p.min_leaf);
  f.get("max_features", p.max_features);
}

}  // namespace

Json to_json(const KernelConfig& cfg) {
  Json j{{"kind", to_string(cfg.kind)}};
  if (cfg.kind == KernelKind::rbf) j["gamma"] = cfg.gamma;
  if (cfg.kind == KernelKind::polynomial) j["degree"] = cfg.degree;
  return j;
}

KernelConfig kernel_config_from_json(const Json& j, const std::string& path) {
  Fields f(j, path);
  KernelConfig cfg;
  if (f.has("kind")) cfg.kind = kernel_kind_from_string(f.as<std::string>("kind"));
  if (cfg.kind == KernelKind::rbf) f.get("gamma", cfg.gamma);
  if (cfg.kind == KernelKind::polynomial) f.get("degree", cfg.degree);
  f.finish();
  cfg.validate();
  return cfg;
}

Json to_json(const sparse::SaddleConfig& cfg) {
  return Json{{"b_bound", cfg.b_bound},
              {"u_bound", cfg.u_bound},
              {"mu", cfg.mu},
              {"eta", opt(cfg.eta)},
              {"iters", cfg.iters},
              {"batch_size", opt(cfg.batch_size)},
              {"batch_mode", cfg.batch_mode == sparse::BatchMode::all_rows ? "all_rows" : "with_replacement"},
              {"shrink_threshold", opt(cfg.shrink_threshold)},
              {"gap_checkpoints", cfg.gap_checkpoints}};
}

sparse::SaddleConfig saddle_config_from_json(const Json& j, sparse::SaddleConfig cfg, const std::string& path) {
  Fields f(j, path);
  f.get("b_bound", cfg.b_bound);
  f.get("u_bound", cfg.u_bound);
  f.get("mu", cfg.mu);
  f.get_optional("eta", cfg.eta);
  f.get("iters", cfg.iters);
  f.get_optional("batch_size", cfg.batch_size);
  if (f.has("batch_mode")) {
    const auto m = f.as<std::string>("batch_mode");
    if (m == "all_rows")
      cfg.batch_mode = sparse::BatchMode::all_rows;
    else if (m == "with_replacement")
      cfg.batch_mode = sparse::BatchMode::with_replacement;
    else
      throw InvalidInput(f.path("batch_mode") + ": expected with_replacement or all_rows");
  }
  f.get_optional("shrink_threshold", cfg.shrink_threshold);
  f.get("gap_checkpoints", cfg.gap_checkpoints);
  f.finish();
  cfg.validate();
  return cfg;
}

Json to_json(const shape::ShapeConfig& cfg) {
  return Json{{"kind", shape::to_string(cfg.kind)},
              {"lipschitz", cfg.lipschitz},
              {"lambda", cfg.lambda},
              {"eta", opt(cfg.eta)},
              {"iters", cfg.iters},
              {"theta_plus_box", box_json(cfg.theta_plus_box)},
              {"theta_minus_box", box_json(cfg.theta_minus_box)},
              {"adversary_box", box_json(cfg.adversary_box)},
              {"convex_knots", cfg.convex_knots},
              {"dykstra_max_iter", cfg.dykstra_max_iter},
              {"gap_iters", cfg.gap_iters}};
}

shape::ShapeConfig shape_config_from_json(const Json& j, shape::ShapeConfig cfg, const std::string& path) {
  Fields f(j, path);
  if (f.has("kind")) cfg.kind = shape::shape_kind_from_string(f.as<std::string>("kind"));
  f.get("lipschitz", cfg.lipschitz);
  f.get("lambda", cfg.lambda);
  f.get_optional("eta", cfg.eta);
  f.get("iters", cfg.iters);
  read_box(f, "theta_plus_box", cfg.theta_plus_box);
  read_box(f, "theta_minus_box", cfg.theta_minus_box);
  read_box(f, "adversary_box", cfg.adversary_box);
  f.get("convex_knots", cfg.convex_knots);
  f.get("dykstra_max_iter", cfg.dykstra_max_iter);
  f.get("gap_iters", cfg.gap_iters);
  f.finish();
  cfg.validate();
  return cfg;
}

Json to_json(const rfiv::RfivConfig& cfg) {
  Json forest = tree_json(cfg.forest.tree);
  forest["n_trees"] = cfg.forest.n_trees;
  forest["bootstrap"] = cfg.forest.bootstrap;
  return Json{{"iters", cfg.iters},
              {"forest", forest},
              {"classifier", tree_json(cfg.classifier)},
              {"leaf_rule", rfiv::to_string(cfg.leaf_rule)},
              {"classifier_trees", cfg.classifier_trees}};
}

rfiv::RfivConfig rfiv_config_from_json(const Json& j, rfiv::RfivConfig cfg, const std::string& path) {
  Fields f(j, path);
  f.get("iters", cfg.iters);
  if (f.has("forest")) {
    Fields g(f.at("forest"), f.path("forest"));
    read_tree(g, cfg.forest.tree);
    g.get("n_trees", cfg.forest.n_trees);
    g.get("bootstrap", cfg.forest.bootstrap);
    g.finish();
  }
  if (f.has("classifier")) {
    Fields g(f.at("classifier"), f.path("classifier"));
    read_tree(g, cfg.classifier);
    g.finish();
  }
  if (f.has("leaf_rule")) cfg.leaf_rule = rfiv::leaf_rule_from_string(f.as<std::string>("leaf_rule"));
  f.get("classifier_trees", cfg.classifier_trees);
  f.finish();
  cfg.validate();
  return cfg;
}

Json to_json(const bench::EstimatorSpec& s) {
  using bench::EstimatorKind;
  Json j{{"kind", bench::to_string(s.kind)}, {"label", s.display_label()}};
  switch (s.kind) {
    case EstimatorKind::kernel:
    case EstimatorKind::nystrom:
      j["kernel_h"] = to_json(s.kernel_h);
      j["kernel_f"] = to_json(s.kernel_f);
      if (s.kind == EstimatorKind::nystrom) {
        j["rank"] = s.rank;
        j["center_rule"] = to_string(s.center_rule);
      }
      j["tune"] = s.tune;
      j["lambda_mu"] = opt(s.lambda_mu);
      j["cv_folds"] = s.cv_folds;
      j["cv_repeats"] = s.cv_repeats;
      break;
    case EstimatorKind::sparse_ell1:
    case EstimatorKind::sparse_ell2:
      j["saddle"] = to_json(s.saddle);
      break;
    case EstimatorKind::shape:
      j["shape"] = to_json(s.shape);
      break;
    case EstimatorKind::rfiv:
      j["rfiv"] = to_json(s.rfiv);
      break;
    case EstimatorKind::twosls:
      j["poly_degree"] = s.poly_degree;
      break;
  }
  return j;
}

bench::EstimatorSpec estimator_spec_from_json(const Json& j, const std::string& path) {
  using bench::EstimatorKind;
  Fields f(j, path);
  if (!f.has("kind")) throw InvalidInput(path + ": missing required key 'kind'");
  bench::EstimatorSpec s = bench::default_spec(bench::estimator_kind_from_string(f.as<std::string>("kind")));
  f.get("label", s.label);
  switch (s.kind) {
    case EstimatorKind::kernel:
    case EstimatorKind::nystrom:
      if (f.has("kernel_h")) s.kernel_h = kernel_config_from_json(f.at("kernel_h"), f.path("kernel_h"));
      if (f.has("kernel_f")) s.kernel_f = kernel_config_from_json(f.at("kernel_f"), f.path("kernel_f"));
      if (s.kind == EstimatorKind::nystrom) {
        f.get("rank", s.rank);
        if (f.has("center_rule")) s.center_rule = center_rule_from_string(f.as<std::string>("center_rule"));
      }
      f.get("tune", s.tune);
      f.get_optional("lambda_mu", s.lambda_mu);
      f.get("cv_folds", s.cv_folds);
      f.get("cv_repeats", s.cv_repeats);
      break;
    case EstimatorKind::sparse_ell1:
    case EstimatorKind::sparse_ell2:
      if (f.has("saddle")) s.saddle = saddle_config_from_json(f.at("saddle"), s.saddle, f.path("saddle"));
      break;
    case EstimatorKind::shape:
      if (f.has("shape")) s.shape = shape_config_from_json(f.at("shape"), s.shape, f.path("shape"));
      break;
    case EstimatorKind::rfiv:
      if (f.has("rfiv")) s.rfiv = rfiv_config_from_json(f.at("rfiv"), s.rfiv, f.path("rfiv"));
      break;
    case EstimatorKind::twosls:
      f.get("poly_degree", s.poly_degree);
      break;
  }
  f.finish();
  s.validate();
  return s;
}

Json to_json(const bench::CellSpec& c) {
  return Json{{"function", c.function}, {"label", c.display_label()}, {"n", c.n},
              {"n_x", c.n_x},           {"n_z", c.n_z},               {"strength", c.strength}};
}

bench::CellSpec cell_spec_from_json(const Json& j, const std::string& path) {
  Fields f(j, path);
  bench::CellSpec c;
  f.get("function", c.function);
  f.get("label", c.label);
  f.get("n", c.n);
  f.get("n_x", c.n_x);
  f.get("n_z", c.n_z);
  f.get("strength", c.strength);
  f.finish();
  c.dgp(0).validate();
  return c;
}

Json to_json(const bench::BenchSpec& s) {
  Json cells = Json::array(), ests = Json::array();
  for (const auto& c : s.cells) cells.push_back(to_json(c));
  for (const auto& e : s.estimators) ests.push_back(to_json(e));
  return Json{{"name", s.name}, {"seed", s.seed},   {"reps", s.reps},
              {"n_test", s.n_test}, {"cells", cells}, {"estimators", ests}};
}

bench::BenchSpec bench_spec_from_json(const Json& j) {
  Fields f(j, "benchmark");
  bench::BenchSpec s;
  f.get("name", s.name);
  f.get("seed", s.seed);
  f.get("reps", s.reps);
  f.get("n_test", s.n_test);
  if (f.has("cells")) {
    const Json& a = f.at("cells");
    if (!a.is_array()) throw InvalidInput("benchmark.cells: expected an array");
    for (std::size_t i = 0; i < a.size(); ++i)
      s.cells.push_back(cell_spec_from_json(a[i], "benchmark.cells[" + std::to_string(i) + "]"));
  }
  if (f.has("estimators")) {
    const Json& a = f.at("estimators");
    if (!a.is_array()) throw InvalidInput("benchmark.estimators: expected an array");
    for (std::size_t i = 0; i < a.size(); ++i)
      s.estimators.push_back(estimator_spec_from_json(a[i], "benchmark.estimators[" + std::to_string(i) + "]"));
  }
  f.finish();
  return s;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("cannot open '" + path + "'");
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path + ": " + e.what());
  }
}

}  // namespace minimax_iv
