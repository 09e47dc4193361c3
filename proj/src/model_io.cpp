#include "minimax_iv/model_io.hpp"

#include "minimax_iv/dgp.hpp"
#include "minimax_iv/rfiv.hpp"
#include "minimax_iv/rkhs.hpp"
#include "minimax_iv/shape.hpp"
#include "minimax_iv/sparse_linear.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>

namespace minimax_iv {

namespace {

constexpr const char* kMagic = "minimax_iv_model";

void write_vector(std::ostream& out, const char* key, const Vector& v) {
  out << key << ' ' << v.size() << '\n';
  for (Eigen::Index i = 0; i < v.size(); ++i) out << format_double(v(i)) << '\n';
}

void write_matrix(std::ostream& out, const char* key, const Matrix& m) {
  out << key << ' ' << m.rows() << ' ' << m.cols() << '\n';
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << format_double(m(i, j));
    out << '\n';
  }
}

void write_kernel(std::ostream& out, const KernelConfig& k) {
  out << "kernel " << to_string(k.kind) << ' ' << format_double(k.gamma) << ' ' << k.degree << '\n';
}

void write_hyper(std::ostream& out, const HyperParams& h) {
  out << "hyper " << format_double(h.lambda) << ' ' << format_double(h.mu) << ' ' << format_double(h.delta) << ' '
      << format_double(h.u_bound) << ' ' << format_double(h.b_bound) << '\n';
}

class Reader {
 public:
  explicit Reader(std::istream& in) : in_(in) {}

  std::string word() {
    std::string w;
    if (!(in_ >> w)) throw ParseError("model file: unexpected end of input");
    return w;
  }

  void expect(const std::string& key) {
    const std::string w = word();
    if (w != key) throw ParseError("model file: expected '" + key + "', found '" + w + "'");
  }

  double real() {
    const std::string w = word();
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size()) throw ParseError("model file: bad number '" + w + "'");
    return v;
  }

  long integer() {
    const std::string w = word();
    long v = 0;
    auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
    if (ec != std::errc() || ptr != w.data() + w.size()) throw ParseError("model file: bad integer '" + w + "'");
    return v;
  }

  Eigen::Index size() {
    const long v = integer();
    if (v < 0 || v > 100000000) throw ParseError("model file: size out of range");
    return static_cast<Eigen::Index>(v);
  }

  Vector vector(const char* key) {
    expect(key);
    Vector v(size());
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = real();
    return v;
  }

  Matrix matrix(const char* key) {
    expect(key);
    const Eigen::Index r = size(), c = size();
    Matrix m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
      for (Eigen::Index j = 0; j < c; ++j) m(i, j) = real();
    return m;
  }

  KernelConfig kernel() {
    expect("kernel");
    KernelConfig k;
    k.kind = kernel_kind_from_string(word());
    k.gamma = real();
    k.degree = static_cast<int>(integer());
    return k;
  }

  HyperParams hyper() {
    expect("hyper");
    HyperParams h;
    h.lambda = real();
    h.mu = real();
    h.delta = real();
    h.u_bound = real();
    h.b_bound = real();
    return h;
  }

 private:
  std::istream& in_;
};

}  // namespace

std::string model_kind(const Model& model) {
  if (dynamic_cast<const rkhs::KernelModel*>(&model)) return "kernel";
  if (dynamic_cast<const rkhs::NystromModel*>(&model)) return "nystrom";
  if (dynamic_cast<const sparse::SparseLinearModel*>(&model)) return "sparse_linear";
  if (dynamic_cast<const shape::PiecewiseModel*>(&model)) return "piecewise";
  if (dynamic_cast<const rfiv::EnsembleModel*>(&model)) return "ensemble";
  if (dynamic_cast<const dgp::TwoSlsModel*>(&model)) return "twosls";
  throw InvalidInput("save_model: this model type has no file format");
}

void save_model(const Model& model, std::ostream& out) {
  const std::string kind = model_kind(model);
  out << kMagic << ' ' << kModelFormatVersion << '\n' << "kind " << kind << '\n';
  if (const auto* m = dynamic_cast<const rkhs::KernelModel*>(&model)) {
    write_kernel(out, m->kernel());
    write_hyper(out, m->hyper());
    write_matrix(out, "support", m->support_x());
    write_vector(out, "alpha", m->alpha());
  } else if (const auto* m = dynamic_cast<const rkhs::NystromModel*>(&model)) {
    write_kernel(out, m->factor().cfg);
    write_hyper(out, m->hyper());
    write_matrix(out, "centers", m->factor().centers);
    write_matrix(out, "m_half", m->factor().m_half);
    write_vector(out, "gamma", m->gamma_weights());
  } else if (const auto* m = dynamic_cast<const sparse::SparseLinearModel*>(&model)) {
    out << "gap " << format_double(m->gap()) << '\n' << "iterations " << m->iterations() << '\n';
    write_vector(out, "theta", m->theta());
    write_vector(out, "rho", m->rho());
    write_vector(out, "dual", m->dual());
  } else if (const auto* m = dynamic_cast<const shape::PiecewiseModel*>(&model)) {
    out << "shape " << shape::to_string(m->kind()) << '\n'
        << "lipschitz " << (m->lipschitz() ? format_double(*m->lipschitz()) : std::string("none")) << '\n';
    write_vector(out, "knots", m->knots());
    write_vector(out, "values", m->values());
  } else if (const auto* m = dynamic_cast<const rfiv::EnsembleModel*>(&model)) {
    out << "input_dim " << m->input_dim() << '\n'
        << "offset " << format_double(m->offset()) << '\n'
        << "scale " << format_double(m->scale()) << '\n'
        << "trees " << m->trees().size() << '\n';
    for (const auto& t : m->trees()) {
      out << "tree " << t.nodes().size() << '\n';
      for (const auto& nd : t.nodes())
        out << nd.feature << ' ' << format_double(nd.threshold) << ' ' << nd.left << ' ' << nd.right << ' '
            << format_double(nd.value) << '\n';
    }
  } else if (const auto* m = dynamic_cast<const dgp::TwoSlsModel*>(&model)) {
    out << "input_dim " << m->input_dim() << '\n' << "degree " << m->degree() << '\n';
    write_vector(out, "coef", m->coef());
  }
  out << "end\n";
  if (!out) throw std::runtime_error("save_model: write failed");
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw InvalidInput("save_model: cannot open '" + path + "' for writing");
  save_model(model, out);
}

std::unique_ptr<Model> load_model(std::istream& in) {
  Reader r(in);
  r.expect(kMagic);
  const long version = r.integer();
  if (version != kModelFormatVersion)
    throw ParseError("model file: unsupported format version " + std::to_string(version));
  r.expect("kind");
  const std::string kind = r.word();
  std::unique_ptr<Model> model;
  try {
    if (kind == "kernel") {
      const KernelConfig k = r.kernel();
      const HyperParams h = r.hyper();
      Matrix support = r.matrix("support");
      Vector alpha = r.vector("alpha");
      model = std::make_unique<rkhs::KernelModel>(std::move(support), std::move(alpha), k, h);
    } else if (kind == "nystrom") {
      NystromFactor f;
      f.cfg = r.kernel();
      const HyperParams h = r.hyper();
      f.centers = r.matrix("centers");
      f.m_half = r.matrix("m_half");
      Vector gamma = r.vector("gamma");
      model = std::make_unique<rkhs::NystromModel>(std::move(f), std::move(gamma), h);
    } else if (kind == "sparse_linear") {
      r.expect("gap");
      const double gap = r.real();
      r.expect("iterations");
      const int iters = static_cast<int>(r.integer());
      Vector theta = r.vector("theta");
      Vector rho = r.vector("rho");
      Vector dual = r.vector("dual");
      model = std::make_unique<sparse::SparseLinearModel>(std::move(theta), std::move(rho), std::move(dual), gap,
                                                          iters);
    } else if (kind == "piecewise") {
      r.expect("shape");
      const shape::ShapeKind sk = shape::shape_kind_from_string(r.word());
      r.expect("lipschitz");
      const std::string lw = r.word();
      std::optional<double> lip;
      if (lw != "none") {
        double v = 0.0;
        auto [ptr, ec] = std::from_chars(lw.data(), lw.data() + lw.size(), v);
        if (ec != std::errc() || ptr != lw.data() + lw.size()) throw ParseError("model file: bad number '" + lw + "'");
        lip = v;
      }
      Vector knots = r.vector("knots");
      Vector values = r.vector("values");
      model = std::make_unique<shape::PiecewiseModel>(std::move(knots), std::move(values), sk, lip);
    } else if (kind == "ensemble") {
      r.expect("input_dim");
      const Eigen::Index dim = r.size();
      r.expect("offset");
      const double offset = r.real();
      r.expect("scale");
      const double scale = r.real();
      r.expect("trees");
      const Eigen::Index count = r.size();
      std::vector<rfiv::Tree> trees;
      for (Eigen::Index t = 0; t < count; ++t) {
        r.expect("tree");
        std::vector<rfiv::TreeNode> nodes(static_cast<std::size_t>(r.size()));
        for (auto& nd : nodes) {
          nd.feature = static_cast<int>(r.integer());
          nd.threshold = r.real();
          nd.left = static_cast<int>(r.integer());
          nd.right = static_cast<int>(r.integer());
          nd.value = r.real();
          if (nd.feature >= dim) throw ParseError("model file: tree feature exceeds input_dim");
        }
        trees.emplace_back(std::move(nodes));
      }
      model = std::make_unique<rfiv::EnsembleModel>(std::move(trees), offset, scale, dim, Vector());
    } else if (kind == "twosls") {
      r.expect("input_dim");
      const Eigen::Index dim = r.size();
      r.expect("degree");
      const int degree = static_cast<int>(r.integer());
      Vector coef = r.vector("coef");
      model = std::make_unique<dgp::TwoSlsModel>(dim, degree, std::move(coef));
    } else {
      throw ParseError("model file: unknown kind '" + kind + "'");
    }
  } catch (const InvalidInput& e) {
    throw ParseError(std::string("model file: inconsistent contents: ") + e.what());
  }
  r.expect("end");
  return model;
}

std::unique_ptr<Model> load_model(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidInput("load_model: cannot open '" + path + "'");
  return load_model(in);
}

}  // namespace minimax_iv
