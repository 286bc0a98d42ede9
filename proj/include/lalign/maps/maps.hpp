#pragma once

#include <filesystem>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "lalign/core/expm.hpp"
#include "lalign/core/rng.hpp"
#include "lalign/core/svd.hpp"

namespace lalign {

// Returns the first target_dim coordinates.
inline Vector truncate_to(const Vector& x, std::size_t target_dim) {
  if (target_dim > x.size())
    fail("TargetTooLarge", "truncate target exceeds vector dim");
  return Vector(x.begin(), x.begin() + static_cast<long>(target_dim));
}

inline Matrix truncate_cols(const Matrix& x, std::size_t target_dim) {
  if (target_dim > x.cols())
    fail("TargetTooLarge", "truncate target exceeds column count");
  if (target_dim == x.cols()) return x;
  Matrix out(x.rows(), target_dim);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < target_dim; ++j) out(i, j) = x(i, j);
  return out;
}

// Learnable transformation between embedding spaces. Batches are row-major
// (one sample per row); apply on a batch equals row-wise single application.
class Map {
public:
  virtual ~Map() = default;
  virtual std::string kind() const = 0;
  virtual std::size_t in_dim() const = 0;
  virtual std::size_t out_dim() const = 0;
  virtual std::size_t param_count() const = 0;
  virtual void get_params(std::span<double> out) const = 0;
  virtual void set_params(std::span<const double> in) = 0;
  virtual Matrix apply(const Matrix& x) const = 0;
  // Accumulates dL/dparams into grad_params; optionally writes dL/dx.
  virtual void backprop(const Matrix& x, const Matrix& grad_out,
                        std::span<double> grad_params,
                        Matrix* grad_in) const = 0;
  virtual nlohmann::json header() const = 0;
  virtual std::unique_ptr<Map> clone() const = 0;

  Vector apply_vec(const Vector& x) const {
    Matrix m(1, x.size());
    m.set_row(0, x);
    return apply(m).row_copy(0);
  }

  std::vector<double> params() const {
    std::vector<double> p(param_count());
    get_params(p);
    return p;
  }

protected:
  void check_in_dim(const Matrix& x) const {
    if (x.cols() != in_dim()) fail("DimMismatch", "map input dim mismatch");
  }
};

// Affine map y = W x + b with W of shape out_dim x in_dim.
class AffineMap final : public Map {
public:
  AffineMap(std::size_t in_dim, std::size_t out_dim)
      : w_(out_dim, in_dim), b_(out_dim, 0.0) {}

  static AffineMap identity(std::size_t n) {
    AffineMap m(n, n);
    m.w_ = Matrix::identity(n);
    return m;
  }

  // W ~ N(0, 1/in_dim), b = 0.
  static AffineMap random_init(std::size_t in_dim, std::size_t out_dim,
                               std::mt19937_64& rng) {
    AffineMap m(in_dim, out_dim);
    m.w_ = random_normal(out_dim, in_dim, rng, 1.0 / std::sqrt(double(in_dim)));
    return m;
  }

  std::string kind() const override { return "affine"; }
  std::size_t in_dim() const override { return w_.cols(); }
  std::size_t out_dim() const override { return w_.rows(); }
  std::size_t param_count() const override { return w_.size() + b_.size(); }

  const Matrix& weight() const { return w_; }
  Matrix& weight() { return w_; }
  const Vector& bias() const { return b_; }
  Vector& bias() { return b_; }

  void get_params(std::span<double> out) const override {
    std::size_t k = 0;
    for (double v : w_.data()) out[k++] = v;
    for (double v : b_) out[k++] = v;
  }

  void set_params(std::span<const double> in) override {
    std::size_t k = 0;
    for (double& v : w_.data()) v = in[k++];
    for (double& v : b_) v = in[k++];
  }

  Matrix apply(const Matrix& x) const override {
    check_in_dim(x);
    Matrix y = matmul(x, transpose(w_));
    for (std::size_t i = 0; i < y.rows(); ++i)
      for (std::size_t j = 0; j < y.cols(); ++j) y(i, j) += b_[j];
    return y;
  }

  void backprop(const Matrix& x, const Matrix& grad_out,
                std::span<double> grad_params, Matrix* grad_in) const override {
    check_in_dim(x);
    const Matrix gw = matmul(transpose(grad_out), x);  // out_dim x in_dim
    std::size_t k = 0;
    for (double v : gw.data()) grad_params[k++] += v;
    for (std::size_t j = 0; j < b_.size(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i < grad_out.rows(); ++i) s += grad_out(i, j);
      grad_params[k++] += s;
    }
    if (grad_in) *grad_in = matmul(grad_out, w_);
  }

  nlohmann::json header() const override {
    return {{"kind", "affine"}, {"in_dim", in_dim()}, {"out_dim", out_dim()}};
  }

  std::unique_ptr<Map> clone() const override {
    return std::make_unique<AffineMap>(*this);
  }

private:
  Matrix w_;
  Vector b_;
};

// Strictly orthogonal map realized as exp(P) for skew-symmetric P whose
// upper-triangular entries are the learnable parameters.
class OrthogonalMap final : public Map {
public:
  explicit OrthogonalMap(std::size_t n)
      : n_(n), skew_params_(n * (n - 1) / 2, 0.0) {
    refresh();
  }

  // skew params ~ N(0, 1e-4): near-identity start.
  static OrthogonalMap random_init(std::size_t n, std::mt19937_64& rng) {
    OrthogonalMap m(n);
    std::normal_distribution<double> dist(0.0, 1e-2);
    for (double& v : m.skew_params_) v = dist(rng);
    m.refresh();
    return m;
  }

  std::string kind() const override { return "orthogonal"; }
  std::size_t in_dim() const override { return n_; }
  std::size_t out_dim() const override { return n_; }
  std::size_t param_count() const override { return skew_params_.size(); }

  const Matrix& realized() const { return cached_b_; }
  const Vector& skew_params() const { return skew_params_; }

  Matrix skew_matrix() const {
    Matrix p(n_, n_);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      for (std::size_t j = i + 1; j < n_; ++j, ++k) {
        p(i, j) = skew_params_[k];
        p(j, i) = -skew_params_[k];
      }
    }
    return p;
  }

  void get_params(std::span<double> out) const override {
    for (std::size_t i = 0; i < skew_params_.size(); ++i) out[i] = skew_params_[i];
  }

  void set_params(std::span<const double> in) override {
    for (std::size_t i = 0; i < skew_params_.size(); ++i) skew_params_[i] = in[i];
    refresh();
  }

  Matrix apply(const Matrix& x) const override {
    check_in_dim(x);
    return matmul(x, transpose(cached_b_));
  }

  void backprop(const Matrix& x, const Matrix& grad_out,
                std::span<double> grad_params, Matrix* grad_in) const override {
    check_in_dim(x);
    const Matrix gb = matmul(transpose(grad_out), x);  // dL/dB
    // Adjoint of the exponential's Frechet derivative: <dL/dB, L(P,E)> =
    // <L(P^T, dL/dB), E>, then map onto the free upper-triangular entries.
    const Matrix g = expm_frechet(transpose(skew_matrix()), gb);
    std::size_t k = 0;
    for (std::size_t i = 0; i < n_; ++i)
      for (std::size_t j = i + 1; j < n_; ++j, ++k)
        grad_params[k] += g(i, j) - g(j, i);
    if (grad_in) *grad_in = matmul(grad_out, cached_b_);
  }

  nlohmann::json header() const override {
    return {{"kind", "orthogonal"}, {"dim", n_}};
  }

  std::unique_ptr<Map> clone() const override {
    return std::make_unique<OrthogonalMap>(*this);
  }

private:
  void refresh() { cached_b_ = expm(skew_matrix()); }

  std::size_t n_;
  Vector skew_params_;
  Matrix cached_b_;
};

// Stack of affine layers with ReLU between; final layer linear.
class MlpMap final : public Map {
public:
  explicit MlpMap(std::vector<AffineMap> layers) : layers_(std::move(layers)) {
    if (layers_.empty()) fail("InvalidSpec", "mlp needs at least one layer");
    for (std::size_t i = 0; i + 1 < layers_.size(); ++i)
      if (layers_[i].out_dim() != layers_[i + 1].in_dim())
        fail("DimMismatch", "mlp layer dims do not chain");
  }

  // Two layers, hidden width max(in_dim, out_dim), ReLU between.
  static MlpMap random_init(std::size_t in_dim, std::size_t out_dim,
                            std::mt19937_64& rng) {
    const std::size_t hidden = std::max(in_dim, out_dim);
    std::vector<AffineMap> layers;
    layers.push_back(AffineMap::random_init(in_dim, hidden, rng));
    layers.push_back(AffineMap::random_init(hidden, out_dim, rng));
    return MlpMap(std::move(layers));
  }

  std::string kind() const override { return "mlp"; }
  std::size_t in_dim() const override { return layers_.front().in_dim(); }
  std::size_t out_dim() const override { return layers_.back().out_dim(); }

  std::size_t param_count() const override {
    std::size_t n = 0;
    for (const auto& l : layers_) n += l.param_count();
    return n;
  }

  const std::vector<AffineMap>& layers() const { return layers_; }

  void get_params(std::span<double> out) const override {
    std::size_t off = 0;
    for (const auto& l : layers_) {
      l.get_params(out.subspan(off, l.param_count()));
      off += l.param_count();
    }
  }

  void set_params(std::span<const double> in) override {
    std::size_t off = 0;
    for (auto& l : layers_) {
      l.set_params(in.subspan(off, l.param_count()));
      off += l.param_count();
    }
  }

  Matrix apply(const Matrix& x) const override {
    check_in_dim(x);
    Matrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      h = layers_[i].apply(h);
      if (i + 1 < layers_.size())
        for (double& v : h.data()) v = std::max(v, 0.0);
    }
    return h;
  }

  void backprop(const Matrix& x, const Matrix& grad_out,
                std::span<double> grad_params, Matrix* grad_in) const override {
    check_in_dim(x);
    // Forward pass storing pre-activation outputs.
    std::vector<Matrix> inputs;
    inputs.push_back(x);
    std::vector<Matrix> pre;
    Matrix h = x;
    for (std::size_t i = 0; i < layers_.size(); ++i) {
      Matrix z = layers_[i].apply(h);
      pre.push_back(z);
      if (i + 1 < layers_.size())
        for (double& v : z.data()) v = std::max(v, 0.0);
      h = z;
      if (i + 1 < layers_.size()) inputs.push_back(h);
    }
    // Backward pass.
    Matrix g = grad_out;
    std::size_t off = param_count();
    for (std::size_t i = layers_.size(); i-- > 0;) {
      if (i + 1 < layers_.size()) {
        // Through the ReLU applied to pre[i].
        for (std::size_t k = 0; k < g.size(); ++k)
          if (pre[i].data()[k] <= 0.0) g.data()[k] = 0.0;
      }
      off -= layers_[i].param_count();
      Matrix gin;
      layers_[i].backprop(inputs[i], g,
                          grad_params.subspan(off, layers_[i].param_count()),
                          (i > 0 || grad_in) ? &gin : nullptr);
      if (i > 0)
        g = std::move(gin);
      else if (grad_in)
        *grad_in = std::move(gin);
    }
  }

  nlohmann::json header() const override {
    nlohmann::json layers = nlohmann::json::array();
    for (const auto& l : layers_)
      layers.push_back({{"in", l.in_dim()}, {"out", l.out_dim()}});
    return {{"kind", "mlp"}, {"layers", layers}};
  }

  std::unique_ptr<Map> clone() const override {
    return std::make_unique<MlpMap>(*this);
  }

private:
  std::vector<AffineMap> layers_;
};

struct ProcrustesResult {
  Matrix rotation;
  bool degenerate = false;
};

// Orthogonal R minimizing ||source R^T - target||_F (rows are samples),
// via the SVD of target^T source: R = U V^T.
inline ProcrustesResult procrustes_fit(const Matrix& source, const Matrix& target) {
  if (source.rows() != target.rows() || source.cols() != target.cols())
    fail("ShapeMismatch", "procrustes needs equal-shaped point sets");
  const Matrix cross = matmul(transpose(target), source);
  const SvdResult f = svd(cross);
  ProcrustesResult out;
  out.rotation = matmul(f.u, transpose(f.v));
  const double smax = f.s.empty() ? 0.0 : f.s.front();
  const double smin = f.s.empty() ? 0.0 : f.s.back();
  out.degenerate = (smin <= 1e-10 * std::max(smax, 1.0));
  return out;
}

// --- map file format: 8 magic bytes, JSON header line, f64le parameters ---

inline constexpr char kMapMagic[9] = "LALNMAP1";

inline void save_map(const Map& map, const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) fail("IoFailure", "cannot write map file " + path.string());
  f.write(kMapMagic, 8);
  const std::string header = map.header().dump();
  f.write(header.data(), static_cast<std::streamsize>(header.size()));
  f.put('\n');
  const std::vector<double> p = map.params();
  f.write(reinterpret_cast<const char*>(p.data()),
          static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!f) fail("IoFailure", "short write to map file " + path.string());
}

inline std::unique_ptr<Map> load_map(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail("MissingFile", "missing map file " + path.string());
  char magic[8];
  f.read(magic, 8);
  if (!f || std::string(magic, 8) != std::string(kMapMagic, 8))
    fail("FormatVersionMismatch", "bad magic bytes in " + path.string());
  std::string header_line;
  if (!std::getline(f, header_line))
    fail("FormatVersionMismatch", "missing map header in " + path.string());
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_line);
  } catch (const nlohmann::json::exception& e) {
    fail("FormatVersionMismatch", std::string("bad map header: ") + e.what());
  }

  std::unique_ptr<Map> map;
  const std::string kind = header.value("kind", "");
  if (kind == "affine") {
    map = std::make_unique<AffineMap>(header.at("in_dim").get<std::size_t>(),
                                      header.at("out_dim").get<std::size_t>());
  } else if (kind == "orthogonal") {
    map = std::make_unique<OrthogonalMap>(header.at("dim").get<std::size_t>());
  } else if (kind == "mlp") {
    std::vector<AffineMap> layers;
    for (const auto& l : header.at("layers"))
      layers.emplace_back(l.at("in").get<std::size_t>(),
                          l.at("out").get<std::size_t>());
    map = std::make_unique<MlpMap>(std::move(layers));
  } else {
    fail("FormatVersionMismatch", "unknown map kind: " + kind);
  }

  std::vector<double> p(map->param_count());
  f.read(reinterpret_cast<char*>(p.data()),
         static_cast<std::streamsize>(p.size() * sizeof(double)));
  if (!f) fail("FormatVersionMismatch", "map file truncated: " + path.string());
  map->set_params(p);
  return map;
}

}  // namespace lalign
