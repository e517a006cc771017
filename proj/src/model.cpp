#include "graphfl/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "graphfl/rng.hpp"
#include "json.hpp"

namespace graphfl::gnn {

std::string to_string(ModelKind kind) { return kind == ModelKind::Gcn2 ? "gcn2" : "sgc"; }

ModelKind model_kind_from_string(const std::string& s) {
  if (s == "gcn2" || s == "gcn" || s == "GCN2" || s == "GCN") return ModelKind::Gcn2;
  if (s == "sgc" || s == "SGC") return ModelKind::Sgc;
  throw InvalidArgument("unknown model kind '" + s + "' (expected gcn2 or sgc)");
}

void ModelSpec::validate() const {
  if (hidden_dim < 1) throw InvalidArgument("hidden_dim must be >= 1");
  if (propagation_steps < 1) throw InvalidArgument("propagation_steps must be >= 1");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) {
    throw InvalidArgument("weight_decay must be finite and >= 0");
  }
}

// ---------------------------------------------------------------------------
// Parameters

ParamShape::ParamShape(std::vector<ParamBlock> blocks) : blocks_(std::move(blocks)) {
  std::size_t offset = 0;
  for (ParamBlock& b : blocks_) {
    b.offset = offset;
    offset += b.size();
  }
  size_ = offset;
}

ParamShape ParamShape::for_model(const ModelSpec& spec, std::size_t num_features,
                                 std::size_t num_classes) {
  if (spec.kind == ModelKind::Gcn2) {
    return ParamShape({{"W1", num_features, spec.hidden_dim, 0},
                       {"W2", spec.hidden_dim, num_classes, 0}});
  }
  return ParamShape({{"W", num_features, num_classes, 0}});
}

const ParamBlock& ParamShape::block(const std::string& name) const {
  for (const ParamBlock& b : blocks_) {
    if (b.name == name) return b;
  }
  throw InvalidArgument("no parameter block named '" + name + "'");
}

ParamVector::ParamVector(ParamShape shape)
    : shape_(std::move(shape)), values_(shape_.size(), 0.0) {}

ParamVector::ParamVector(ParamShape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (values_.size() != shape_.size()) {
    throw ShapeError("ParamVector: " + std::to_string(values_.size()) +
                     " values for a shape of size " + std::to_string(shape_.size()));
  }
}

std::span<double> ParamVector::block(std::size_t i) {
  const ParamBlock& b = shape_.block(i);
  return {values_.data() + b.offset, b.size()};
}

std::span<const double> ParamVector::block(std::size_t i) const {
  const ParamBlock& b = shape_.block(i);
  return {values_.data() + b.offset, b.size()};
}

void ParamVector::check_same_shape(const ParamVector& other, const char* op) const {
  if (!(shape_ == other.shape_)) throw ShapeError(std::string(op) + ": parameter shapes differ");
}

ParamVector& ParamVector::axpy(double a, const ParamVector& x) {
  check_same_shape(x, "axpy");
  for (std::size_t i = 0; i < values_.size(); ++i) values_[i] += a * x.values_[i];
  return *this;
}

ParamVector& ParamVector::scale(double a) {
  for (double& v : values_) v *= a;
  return *this;
}

double ParamVector::dot(const ParamVector& other) const {
  check_same_shape(other, "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < values_.size(); ++i) s += values_[i] * other.values_[i];
  return s;
}

double ParamVector::max_abs() const noexcept {
  double m = 0.0;
  for (double v : values_) m = std::max(m, std::abs(v));
  return m;
}

bool ParamVector::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

namespace {

void glorot_fill(std::span<double> block, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (double& v : block) v = rng.uniform(-limit, limit);
}

}  // namespace

ParamVector init_params(const ModelSpec& spec, std::size_t num_features, std::size_t num_classes,
                        std::uint64_t seed) {
  spec.validate();
  ParamVector params(ParamShape::for_model(spec, num_features, num_classes));
  for (std::size_t i = 0; i < params.shape().blocks().size(); ++i) {
    const ParamBlock& b = params.shape().block(i);
    Rng rng = Rng::substream(seed, "init/" + b.name);
    glorot_fill(params.block(i), b.rows, b.cols, rng);
  }
  return params;
}

ParamVector reinit_output_block(const ParamVector& params, std::size_t num_classes,
                                std::uint64_t seed) {
  std::vector<ParamBlock> blocks = params.shape().blocks();
  if (blocks.empty()) throw ShapeError("reinit_output_block: empty parameter vector");
  blocks.back().cols = num_classes;
  ParamVector out{ParamShape(std::move(blocks))};
  const std::size_t last = out.shape().blocks().size() - 1;
  for (std::size_t i = 0; i < last; ++i) {
    const auto src = params.block(i);
    std::copy(src.begin(), src.end(), out.block(i).begin());
  }
  const ParamBlock& head = out.shape().block(last);
  Rng rng = Rng::substream(seed, "init/" + head.name);
  glorot_fill(out.block(last), head.rows, head.cols, rng);
  return out;
}

// ---------------------------------------------------------------------------
// Context

namespace {

CsrMatrix propagate_features(const ModelSpec& spec, const CsrMatrix& s, const DenseMatrix& x) {
  const std::size_t steps = spec.kind == ModelKind::Gcn2 ? 1 : spec.propagation_steps;
  DenseMatrix current = x;
  for (std::size_t i = 0; i < steps; ++i) current = spmm(s, current);
  return CsrMatrix::from_dense(current);
}

}  // namespace

ModelContext::ModelContext(ModelSpec spec, graph::PropagationMatrix propagation,
                           const DenseMatrix& features)
    : spec_(spec), propagation_(std::move(propagation)) {
  spec_.validate();
  if (propagation_.matrix.cols() != features.rows()) {
    throw ShapeError("ModelContext: propagation matrix and features disagree on node count");
  }
  propagated_ = propagate_features(spec_, propagation_.matrix, features);
}

ModelContext::ModelContext(ModelSpec spec, const graph::GraphDataset& g)
    : ModelContext(spec, graph::normalize_adjacency(g), g.features()) {}

void ModelContext::check_params(const ParamVector& params) const {
  const auto& blocks = params.shape().blocks();
  const bool gcn = spec_.kind == ModelKind::Gcn2;
  const bool ok = gcn ? blocks.size() == 2 && blocks[0].rows == num_features() &&
                            blocks[0].cols == spec_.hidden_dim &&
                            blocks[1].rows == spec_.hidden_dim && blocks[1].cols >= 1
                      : blocks.size() == 1 && blocks[0].rows == num_features() &&
                            blocks[0].cols >= 1;
  if (!ok) {
    throw ShapeError("parameter shape does not match the " + to_string(spec_.kind) +
                     " model on a graph with " + std::to_string(num_features()) + " features");
  }
}

// ---------------------------------------------------------------------------
// Forward and backward over a receptive field

namespace {

std::size_t num_outputs(const ParamVector& params) {
  return params.shape().blocks().back().cols;
}

/// out = row r of (sparse M) * (dense block with `cols` columns).
void sparse_row_times(const CsrMatrix& m, std::size_t r, const double* block, std::size_t cols,
                      double* out) {
  std::fill(out, out + cols, 0.0);
  const auto idx = m.row_cols(r);
  const auto vals = m.row_values(r);
  for (std::size_t k = 0; k < idx.size(); ++k) {
    const double a = vals[k];
    const double* brow = block + static_cast<std::size_t>(idx[k]) * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += a * brow[j];
  }
}

/// out = x (length inner) * block (inner x cols).
void dense_row_times(const double* x, std::size_t inner, const double* block, std::size_t cols,
                     double* out) {
  std::fill(out, out + cols, 0.0);
  for (std::size_t k = 0; k < inner; ++k) {
    const double a = x[k];
    const double* brow = block + k * cols;
    for (std::size_t j = 0; j < cols; ++j) out[j] += a * brow[j];
  }
}

std::size_t position(std::span<const NodeId> sorted, NodeId v) {
  return static_cast<std::size_t>(std::lower_bound(sorted.begin(), sorted.end(), v) -
                                  sorted.begin());
}

/// Intermediate values of a forward pass restricted to `targets`.
struct Forward {
  /// GCN2: nodes whose hidden representation the targets read, ascending.
  std::vector<NodeId> field;
  DenseMatrix pre;     // field x H, S X W1
  DenseMatrix hidden;  // field x H, ReLU(pre)
  DenseMatrix mixed;   // field x K, hidden W2
  DenseMatrix logits;  // targets x K
};

Forward run_forward(const ModelContext& ctx, const ParamVector& params,
                    std::span<const NodeId> targets) {
  ctx.check_params(params);
  const std::size_t n = ctx.num_nodes();
  for (NodeId v : targets) {
    if (v >= n) throw InvalidArgument("node " + std::to_string(v) + " outside the graph");
  }
  const std::size_t k = num_outputs(params);
  Forward f;
  f.logits = DenseMatrix(targets.size(), k);

  if (ctx.spec().kind == ModelKind::Sgc) {
    const double* w = params.block(0).data();
    for (std::size_t i = 0; i < targets.size(); ++i) {
      sparse_row_times(ctx.propagated(), targets[i], w, k, f.logits.row(i).data());
    }
    return f;
  }

  const CsrMatrix& s = ctx.propagation();
  for (NodeId v : targets) {
    const auto cols = s.row_cols(v);
    f.field.insert(f.field.end(), cols.begin(), cols.end());
  }
  std::sort(f.field.begin(), f.field.end());
  f.field.erase(std::unique(f.field.begin(), f.field.end()), f.field.end());

  const std::size_t h = ctx.spec().hidden_dim;
  const double* w1 = params.block(0).data();
  const double* w2 = params.block(1).data();
  f.pre = DenseMatrix(f.field.size(), h);
  f.hidden = DenseMatrix(f.field.size(), h);
  f.mixed = DenseMatrix(f.field.size(), k);
  for (std::size_t i = 0; i < f.field.size(); ++i) {
    double* pre = f.pre.row(i).data();
    double* hid = f.hidden.row(i).data();
    sparse_row_times(ctx.propagated(), f.field[i], w1, h, pre);
    for (std::size_t j = 0; j < h; ++j) hid[j] = pre[j] > 0.0 ? pre[j] : 0.0;
    dense_row_times(hid, h, w2, k, f.mixed.row(i).data());
  }
  for (std::size_t t = 0; t < targets.size(); ++t) {
    auto out = f.logits.row(t);
    const auto cols = s.row_cols(targets[t]);
    const auto vals = s.row_values(targets[t]);
    for (std::size_t e = 0; e < cols.size(); ++e) {
      const auto src = f.mixed.row(position(f.field, cols[e]));
      for (std::size_t j = 0; j < k; ++j) out[j] += vals[e] * src[j];
    }
  }
  return f;
}

std::vector<NodeId> node_ids_of(const LabeledNodes& nodes) {
  std::vector<NodeId> ids(nodes.size());
  for (std::size_t i = 0; i < nodes.size(); ++i) ids[i] = nodes[i].node;
  return ids;
}

void check_labeled(const LabeledNodes& nodes, std::size_t num_classes) {
  if (nodes.empty()) throw InvalidArgument("loss over an empty node set");
  for (const LabeledNode& ln : nodes) {
    if (ln.label < 0 || static_cast<std::size_t>(ln.label) >= num_classes) {
      throw InvalidArgument("label " + std::to_string(ln.label) + " of node " +
                            std::to_string(ln.node) + " outside the model's " +
                            std::to_string(num_classes) + " outputs");
    }
  }
}

constexpr double kLogFloor = 1e-300;

double decay_term(const ModelContext& ctx, const ParamVector& params) {
  const double wd = ctx.spec().weight_decay;
  if (wd == 0.0) return 0.0;
  double sq = 0.0;
  for (double v : params.block(0)) sq += v * v;
  return 0.5 * wd * sq;
}

/// Mean cross-entropy and, when `residual` is non-null, the per-target
/// (softmax - onehot) / |nodes| rows.
double cross_entropy(const DenseMatrix& logits, const LabeledNodes& nodes, DenseMatrix* residual) {
  const std::size_t k = logits.cols();
  const double inv_n = 1.0 / static_cast<double>(nodes.size());
  std::vector<double> p(k);
  double total = 0.0;
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    softmax(logits.row(i), p);
    const auto y = static_cast<std::size_t>(nodes[i].label);
    total += -std::log(std::max(p[y], kLogFloor));
    if (residual) {
      auto r = residual->row(i);
      for (std::size_t j = 0; j < k; ++j) r[j] = (p[j] - (j == y ? 1.0 : 0.0)) * inv_n;
    }
  }
  return total * inv_n;
}

}  // namespace

void softmax(std::span<const double> logits, std::span<double> out) {
  double m = -std::numeric_limits<double>::infinity();
  for (double z : logits) m = std::max(m, z);
  double sum = 0.0;
  for (std::size_t j = 0; j < logits.size(); ++j) {
    out[j] = std::exp(logits[j] - m);
    sum += out[j];
  }
  for (std::size_t j = 0; j < logits.size(); ++j) out[j] /= sum;
}

DenseMatrix forward_rows(const ModelContext& ctx, const ParamVector& params,
                         std::span<const NodeId> nodes) {
  return run_forward(ctx, params, nodes).logits;
}

DenseMatrix forward(const ModelContext& ctx, const ParamVector& params) {
  std::vector<NodeId> all(ctx.num_nodes());
  for (std::size_t v = 0; v < all.size(); ++v) all[v] = static_cast<NodeId>(v);
  return forward_rows(ctx, params, all);
}

double loss(const ModelContext& ctx, const ParamVector& params, const LabeledNodes& nodes) {
  ctx.check_params(params);
  check_labeled(nodes, num_outputs(params));
  const std::vector<NodeId> ids = node_ids_of(nodes);
  const Forward f = run_forward(ctx, params, ids);
  return cross_entropy(f.logits, nodes, nullptr) + decay_term(ctx, params);
}

LossGrad loss_and_grad(const ModelContext& ctx, const ParamVector& params,
                       const LabeledNodes& nodes) {
  ctx.check_params(params);
  const std::size_t k = num_outputs(params);
  check_labeled(nodes, k);
  const std::vector<NodeId> ids = node_ids_of(nodes);
  const Forward f = run_forward(ctx, params, ids);
  DenseMatrix residual(nodes.size(), k);
  LossGrad out;
  out.loss = cross_entropy(f.logits, nodes, &residual) + decay_term(ctx, params);
  out.grad = ParamVector(params.shape());

  const CsrMatrix& z = ctx.propagated();
  if (ctx.spec().kind == ModelKind::Sgc) {
    double* dw = out.grad.block(0).data();
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto cols = z.row_cols(ids[i]);
      const auto vals = z.row_values(ids[i]);
      const auto r = residual.row(i);
      for (std::size_t e = 0; e < cols.size(); ++e) {
        double* drow = dw + static_cast<std::size_t>(cols[e]) * k;
        for (std::size_t j = 0; j < k; ++j) drow[j] += vals[e] * r[j];
      }
    }
  } else {
    const std::size_t h = ctx.spec().hidden_dim;
    const CsrMatrix& s = ctx.propagation();
    // Residual pushed back through the outer propagation (S is symmetric).
    DenseMatrix d_mixed(f.field.size(), k);
    for (std::size_t i = 0; i < ids.size(); ++i) {
      const auto cols = s.row_cols(ids[i]);
      const auto vals = s.row_values(ids[i]);
      const auto r = residual.row(i);
      for (std::size_t e = 0; e < cols.size(); ++e) {
        auto dst = d_mixed.row(position(f.field, cols[e]));
        for (std::size_t j = 0; j < k; ++j) dst[j] += vals[e] * r[j];
      }
    }
    const double* w2 = params.block(1).data();
    double* dw1 = out.grad.block(0).data();
    double* dw2 = out.grad.block(1).data();
    std::vector<double> d_pre(h);
    for (std::size_t i = 0; i < f.field.size(); ++i) {
      const auto hid = f.hidden.row(i);
      const auto pre = f.pre.row(i);
      const auto dm = d_mixed.row(i);
      for (std::size_t a = 0; a < h; ++a) {
        double* drow = dw2 + a * k;
        double back = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
          drow[j] += hid[a] * dm[j];
          back += dm[j] * w2[a * k + j];
        }
        d_pre[a] = pre[a] > 0.0 ? back : 0.0;
      }
      const auto cols = z.row_cols(f.field[i]);
      const auto vals = z.row_values(f.field[i]);
      for (std::size_t e = 0; e < cols.size(); ++e) {
        double* drow = dw1 + static_cast<std::size_t>(cols[e]) * h;
        for (std::size_t a = 0; a < h; ++a) drow[a] += vals[e] * d_pre[a];
      }
    }
  }

  const double wd = ctx.spec().weight_decay;
  if (wd != 0.0) {
    auto g0 = out.grad.block(0);
    const auto w0 = params.block(0);
    for (std::size_t i = 0; i < g0.size(); ++i) g0[i] += wd * w0[i];
  }
  return out;
}

ParamVector grad(const ModelContext& ctx, const ParamVector& params, const LabeledNodes& nodes) {
  return loss_and_grad(ctx, params, nodes).grad;
}

ParamVector hvp(const ModelContext& ctx, const ParamVector& params, const LabeledNodes& nodes,
                const ParamVector& v, HvpMode mode) {
  ctx.check_params(params);
  if (!(v.shape() == params.shape())) throw ShapeError("hvp: direction shape differs from params");

  if (mode == HvpMode::FiniteDiff) {
    const double h = 1e-5 * (1.0 + params.max_abs());
    ParamVector plus = params;
    plus.axpy(h, v);
    ParamVector minus = params;
    minus.axpy(-h, v);
    ParamVector out = grad(ctx, plus, nodes);
    out.axpy(-1.0, grad(ctx, minus, nodes));
    out.scale(1.0 / (2.0 * h));
    return out;
  }

  if (ctx.spec().kind != ModelKind::Sgc) {
    throw UnsupportedModelError("analytic Hessian-vector products are implemented for SGC only");
  }
  const std::size_t k = num_outputs(params);
  check_labeled(nodes, k);
  const std::vector<NodeId> ids = node_ids_of(nodes);
  const DenseMatrix logits = run_forward(ctx, params, ids).logits;
  const CsrMatrix& z = ctx.propagated();
  const double* dir = v.block(0).data();
  const double inv_n = 1.0 / static_cast<double>(nodes.size());

  ParamVector out(params.shape());
  double* acc = out.block(0).data();
  std::vector<double> p(k), zv(k), u(k);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    softmax(logits.row(i), p);
    sparse_row_times(z, ids[i], dir, k, zv.data());
    double pz = 0.0;
    for (std::size_t j = 0; j < k; ++j) pz += p[j] * zv[j];
    // (diag(p) - p p^T) zv
    for (std::size_t j = 0; j < k; ++j) u[j] = p[j] * (zv[j] - pz) * inv_n;
    const auto cols = z.row_cols(ids[i]);
    const auto vals = z.row_values(ids[i]);
    for (std::size_t e = 0; e < cols.size(); ++e) {
      double* row = acc + static_cast<std::size_t>(cols[e]) * k;
      for (std::size_t j = 0; j < k; ++j) row[j] += vals[e] * u[j];
    }
  }
  const double wd = ctx.spec().weight_decay;
  if (wd != 0.0) out.axpy(wd, v);
  return out;
}

ParamVector sgd_steps(const ModelContext& ctx, ParamVector params, const LabeledNodes& nodes,
                      double alpha, std::size_t steps) {
  if (!(alpha > 0.0)) throw InvalidArgument("sgd_steps: learning rate must be positive");
  for (std::size_t step = 0; step < steps; ++step) {
    LossGrad lg = loss_and_grad(ctx, params, nodes);
    if (!std::isfinite(lg.loss) || !lg.grad.all_finite()) {
      throw DivergenceError(step, -1,
                            "non-finite loss at gradient step " + std::to_string(step));
    }
    params.axpy(-alpha, lg.grad);
  }
  return params;
}

std::vector<Prediction> predict(const ModelContext& ctx, const ParamVector& params,
                                std::span<const NodeId> nodes) {
  const DenseMatrix logits = forward_rows(ctx, params, nodes);
  std::vector<Prediction> out(nodes.size());
  std::vector<double> p(logits.cols());
  for (std::size_t i = 0; i < nodes.size(); ++i) {
    const auto row = logits.row(i);
    std::size_t best = 0;
    for (std::size_t j = 1; j < row.size(); ++j) {
      if (row[j] > row[best]) best = j;
    }
    softmax(row, p);
    out[i] = {static_cast<ClassId>(best), p[best]};
  }
  return out;
}

// ---------------------------------------------------------------------------
// Serialization

void write_params(std::ostream& out, const ParamVector& params) {
  nlohmann::json header;
  header["format"] = "graphfl-params";
  header["version"] = 1;
  header["dtype"] = "float64-le";
  header["length"] = params.size();
  for (const ParamBlock& b : params.shape().blocks()) {
    header["blocks"].push_back({{"name", b.name}, {"rows", b.rows}, {"cols", b.cols}});
  }
  out << header.dump() << '\n';
  for (double v : params.values()) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw Error("write_params: stream error");
}

ParamVector read_params(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("parameter file: missing header");
  nlohmann::json header;
  std::vector<ParamBlock> blocks;
  std::size_t length = 0;
  try {
    header = nlohmann::json::parse(line);
    if (header.at("format") != "graphfl-params") throw DataError("parameter file: bad format tag");
    length = header.at("length").get<std::size_t>();
    for (const auto& b : header.at("blocks")) {
      blocks.push_back({b.at("name").get<std::string>(), b.at("rows").get<std::size_t>(),
                        b.at("cols").get<std::size_t>(), 0});
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("parameter file: bad header: ") + e.what());
  }
  ParamShape shape(std::move(blocks));
  if (shape.size() != length) throw DataError("parameter file: length disagrees with blocks");
  std::vector<double> values(length);
  for (double& v : values) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
      throw DataError("parameter file: truncated payload");
    }
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
  return ParamVector(std::move(shape), std::move(values));
}

void save_params(const std::string& path, const ParamVector& params) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path + " for writing");
  write_params(out, params);
}

ParamVector load_params(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError(path, 0, "cannot open file");
  return read_params(in);
}

}  // namespace graphfl::gnn
