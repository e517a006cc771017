#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "graphfl/common.hpp"
#include "graphfl/graph.hpp"
#include "graphfl/matrix.hpp"

namespace graphfl::gnn {

enum class ModelKind { Gcn2, Sgc };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& s);

struct ModelSpec {
  ModelKind kind = ModelKind::Gcn2;
  /// GCN2 only.
  std::size_t hidden_dim = 16;
  /// SGC only: the k in S^k X.
  std::size_t propagation_steps = 2;
  /// Coefficient of 0.5 * ||W||^2 on the first GCN layer or the SGC weight.
  double weight_decay = 5e-4;

  void validate() const;
  friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

/// A named rows x cols block of a flat parameter vector, stored row-major.
struct ParamBlock {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::size_t offset = 0;

  std::size_t size() const noexcept { return rows * cols; }
  friend bool operator==(const ParamBlock&, const ParamBlock&) = default;
};

class ParamShape {
 public:
  ParamShape() = default;
  /// Blocks are laid out contiguously in the given order.
  explicit ParamShape(std::vector<ParamBlock> blocks);

  /// GCN2 = {W1: D x H, W2: H x K}; SGC = {W: D x K}.
  static ParamShape for_model(const ModelSpec& spec, std::size_t num_features,
                              std::size_t num_classes);

  const std::vector<ParamBlock>& blocks() const noexcept { return blocks_; }
  const ParamBlock& block(std::size_t i) const { return blocks_.at(i); }
  const ParamBlock& block(const std::string& name) const;
  std::size_t size() const noexcept { return size_; }

  friend bool operator==(const ParamShape&, const ParamShape&) = default;

 private:
  std::vector<ParamBlock> blocks_;
  std::size_t size_ = 0;
};

/// Flat parameter vector with its block layout.
class ParamVector {
 public:
  ParamVector() = default;
  explicit ParamVector(ParamShape shape);
  ParamVector(ParamShape shape, std::vector<double> values);

  const ParamShape& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::span<double> values() noexcept { return values_; }
  std::span<const double> values() const noexcept { return values_; }
  double& operator[](std::size_t i) noexcept { return values_[i]; }
  double operator[](std::size_t i) const noexcept { return values_[i]; }

  std::span<double> block(std::size_t i);
  std::span<const double> block(std::size_t i) const;

  /// *this += a * x.
  ParamVector& axpy(double a, const ParamVector& x);
  ParamVector& scale(double a);

  double dot(const ParamVector& other) const;
  double max_abs() const noexcept;
  bool all_finite() const noexcept;

  friend bool operator==(const ParamVector&, const ParamVector&) = default;

 private:
  void check_same_shape(const ParamVector& other, const char* op) const;

  ParamShape shape_;
  std::vector<double> values_;
};

/// Glorot-uniform initialization, limit sqrt(6 / (fan_in + fan_out)) per block.
ParamVector init_params(const ModelSpec& spec, std::size_t num_features, std::size_t num_classes,
                        std::uint64_t seed);

/// Replaces the output block (last block) with a freshly Glorot-initialized
/// block of `num_classes` columns; the other blocks are copied.
ParamVector reinit_output_block(const ParamVector& params, std::size_t num_classes,
                                std::uint64_t seed);

/// Everything a model needs about one graph: the propagation matrix and the
/// precomputed propagated features (S X for GCN2, S^k X for SGC).
/// Holds no labels.
class ModelContext {
 public:
  ModelContext(ModelSpec spec, graph::PropagationMatrix propagation, const DenseMatrix& features);
  /// Normalizes the adjacency of `g` and uses its features.
  ModelContext(ModelSpec spec, const graph::GraphDataset& g);

  const ModelSpec& spec() const noexcept { return spec_; }
  std::size_t num_nodes() const noexcept { return propagation_.matrix.rows(); }
  std::size_t num_features() const noexcept { return propagated_.cols(); }
  const CsrMatrix& propagation() const noexcept { return propagation_.matrix; }
  /// S X (GCN2) or S^k X (SGC), sparse.
  const CsrMatrix& propagated() const noexcept { return propagated_; }

  /// Throws ShapeError unless `params` fits this model and graph.
  void check_params(const ParamVector& params) const;

 private:
  ModelSpec spec_;
  graph::PropagationMatrix propagation_;
  CsrMatrix propagated_;
};

/// Logits for every node: S ReLU(S X W1) W2 (GCN2) or (S^k X) W (SGC).
DenseMatrix forward(const ModelContext& ctx, const ParamVector& params);

/// Logits for the listed nodes only, computed over their receptive field.
/// Row i is bitwise identical to row nodes[i] of forward().
DenseMatrix forward_rows(const ModelContext& ctx, const ParamVector& params,
                         std::span<const NodeId> nodes);

struct LossGrad {
  double loss = 0.0;
  ParamVector grad;
};

/// Mean softmax cross-entropy over `nodes` plus the weight-decay term.
double loss(const ModelContext& ctx, const ParamVector& params, const LabeledNodes& nodes);
ParamVector grad(const ModelContext& ctx, const ParamVector& params, const LabeledNodes& nodes);
LossGrad loss_and_grad(const ModelContext& ctx, const ParamVector& params,
                       const LabeledNodes& nodes);

enum class HvpMode { Analytic, FiniteDiff };

/// Hessian of loss() at `params` applied to `v`. Analytic mode is exact and
/// available for SGC only; finite-difference mode uses central differences
/// of grad() with step 1e-5 * (1 + ||params||_inf).
ParamVector hvp(const ModelContext& ctx, const ParamVector& params, const LabeledNodes& nodes,
                const ParamVector& v, HvpMode mode);

/// `steps` iterations of params <- params - alpha * grad(params).
/// Throws DivergenceError (carrying the step index) on a non-finite loss or
/// gradient.
ParamVector sgd_steps(const ModelContext& ctx, ParamVector params, const LabeledNodes& nodes,
                      double alpha, std::size_t steps);

struct Prediction {
  ClassId label = 0;
  double confidence = 0.0;
};

/// Argmax class (lowest index on ties) and its softmax probability.
std::vector<Prediction> predict(const ModelContext& ctx, const ParamVector& params,
                                std::span<const NodeId> nodes);

/// Numerically stable softmax of one logit row.
void softmax(std::span<const double> logits, std::span<double> out);

/// Binary checkpoint: one line of JSON describing the blocks, then the flat
/// values as little-endian IEEE-754 doubles.
void write_params(std::ostream& out, const ParamVector& params);
ParamVector read_params(std::istream& in);
void save_params(const std::string& path, const ParamVector& params);
ParamVector load_params(const std::string& path);

}  // namespace graphfl::gnn
