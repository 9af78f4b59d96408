#pragma once

#include "irgcn/numcore.hpp"
#include "irgcn/views.hpp"

#include <array>
#include <span>
#include <vector>

namespace irgcn {

inline constexpr std::array<Index, 4> kHiddenDims = {50, 10, 10, 5};

enum class Mode { train, eval };

/// Inverted dropout on the outputs of the first `layers` hidden layers.
struct Dropout {
  double rate = 0.0;
  std::size_t layers = 1;
};

/// Exact one-hop convolution on a clique partition. Per clique of size n,
/// with m_u the mean of the other members:
///   contrastive  out_u = z_u - m_u
///   similar      out_u = z_u + m_u
///   reflexive    out_u = z_u
/// Singleton cliques pass through unchanged. The operator is symmetric on
/// every clique, so it is also its own adjoint in backprop.
template <typename Derived>
MatrixX<typename Derived::Scalar> clique_propagate(const Eigen::MatrixBase<Derived>& z,
                                                   const CliquePartition& partition,
                                                   Semantics semantics) {
  using Scalar = typename Derived::Scalar;
  if (static_cast<std::size_t>(z.rows()) != partition.size()) {
    throw DimensionError("clique_propagate: " + std::to_string(z.rows()) + " rows vs partition of " +
                         std::to_string(partition.size()) + " tuples");
  }
  MatrixX<Scalar> out = z;  // evaluates z once; row access on a product expression would recompute it
  if (semantics == Semantics::reflexive) return out;
  const MatrixX<Scalar> in = out;
  const Scalar sign = semantics == Semantics::contrastive ? Scalar(-1) : Scalar(1);
  Eigen::Matrix<Scalar, 1, Eigen::Dynamic> sum(z.cols());
  for (const auto& members : partition.cliques()) {
    const auto n = members.size();
    if (n < 2) continue;
    sum.setZero();
    for (auto u : members) sum += in.row(u);
    const Scalar inv = Scalar(1) / static_cast<Scalar>(n - 1);
    for (auto u : members) out.row(u) = in.row(u) + sign * inv * (sum - in.row(u));
  }
  return out;
}

/// Per-strategy GCN: K layer weights (possibly aliased with other strategies
/// of the same relation type) and a score vector.
struct GcnStack {
  Strategy strategy = Strategy::reflexive;
  Semantics semantics = Semantics::reflexive;
  std::span<const Matrix> layers;
  const Matrix* score = nullptr;
};

/// Forward cache. activations[0] = X and activations[k] = Z^k after dropout.
struct ViewEmbedding {
  std::vector<Matrix> activations;
  std::vector<Matrix> propagated;  // P Z^{k-1}
  std::vector<Matrix> pre;         // P Z^{k-1} W^k
  std::vector<Matrix> masks;       // one per dropped layer; empty in eval mode
  Matrix scores;                   // Z^K W~, N x 1

  const Matrix& output() const { return activations.back(); }
};

ViewEmbedding gcn_forward(const GcnStack& stack, const Matrix& x, const CliquePartition& partition,
                          Mode mode, Dropout dropout, Rng& rng);

struct StackGradient {
  std::vector<Matrix> layers;
  Matrix score;
};

/// Gradients of a scalar loss given dL/dscores (N x 1) and optionally an
/// additional dL/dZ^K from terms acting on the embedding directly.
StackGradient gcn_backward(const GcnStack& stack, const ViewEmbedding& cache,
                           const CliquePartition& partition, const Matrix& d_scores,
                           const Matrix* d_embedding = nullptr);

struct RelationOutput {
  Matrix scores;  // H_R
  std::vector<ViewEmbedding> embeddings;
};

/// H_R = sum of strategy scores. rngs supplies one stream per stack.
RelationOutput relation_score(std::span<const GcnStack> stacks, const Matrix& x,
                              std::span<const CliquePartition* const> partitions, Mode mode,
                              Dropout dropout, std::span<Rng> rngs);

/// Glorot-uniform initialised weights of shapes (input x dims[0]), (dims[0] x dims[1]), ...
std::vector<Matrix> init_layers(Index input_dim, std::span<const Index> dims, Rng& rng);
Matrix init_glorot(Index rows, Index cols, Rng& rng);

}  // namespace irgcn
