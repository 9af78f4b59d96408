#include "irgcn/conv.hpp"

#include "irgcn/parallel.hpp"

namespace irgcn {

Matrix init_glorot(Index rows, Index cols, Rng& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix w(rows, cols);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = rng.uniform(-limit, limit);
  return w;
}

std::vector<Matrix> init_layers(Index input_dim, std::span<const Index> dims, Rng& rng) {
  std::vector<Matrix> layers;
  Index in = input_dim;
  for (auto out : dims) {
    layers.push_back(init_glorot(in, out, rng));
    in = out;
  }
  return layers;
}

ViewEmbedding gcn_forward(const GcnStack& stack, const Matrix& x, const CliquePartition& partition,
                          Mode mode, Dropout dropout, Rng& rng) {
  if (stack.layers.empty() || stack.score == nullptr) throw ConfigError("gcn_forward: empty stack");
  ViewEmbedding cache;
  cache.activations.reserve(stack.layers.size() + 1);
  cache.activations.push_back(x);
  for (std::size_t k = 0; k < stack.layers.size(); ++k) {
    const Matrix& w = stack.layers[k];
    cache.propagated.push_back(clique_propagate(cache.activations.back(), partition, stack.semantics));
    cache.pre.push_back(matmul(cache.propagated.back(), w));
    Matrix z = relu(cache.pre.back());
    if (mode == Mode::train && dropout.rate > 0.0 && k < dropout.layers && k + 1 < stack.layers.size()) {
      cache.masks.push_back(dropout_mask(z.rows(), z.cols(), dropout.rate, rng));
      z.array() *= cache.masks.back().array();
    }
    if (!all_finite(z)) {
      throw NumericError("gcn_forward: non-finite activations in layer " + std::to_string(k + 1) + " of " +
                         std::string(to_string(stack.strategy)));
    }
    cache.activations.push_back(std::move(z));
  }
  cache.scores = matmul(cache.activations.back(), *stack.score);
  return cache;
}

StackGradient gcn_backward(const GcnStack& stack, const ViewEmbedding& cache,
                           const CliquePartition& partition, const Matrix& d_scores,
                           const Matrix* d_embedding) {
  const auto depth = stack.layers.size();
  if (cache.activations.size() != depth + 1 || cache.pre.size() != depth) {
    throw std::logic_error("gcn_backward: missing forward cache");
  }
  if (d_scores.rows() != cache.scores.rows() || d_scores.cols() != 1) {
    throw DimensionError("gcn_backward: score gradient " + shape_string(d_scores) + " vs scores " +
                         shape_string(cache.scores));
  }
  StackGradient grad;
  grad.layers.resize(depth);
  grad.score = cache.activations.back().transpose() * d_scores;

  Matrix dz = d_scores * stack.score->transpose();
  if (d_embedding) {
    if (d_embedding->rows() != dz.rows() || d_embedding->cols() != dz.cols()) {
      throw DimensionError("gcn_backward: embedding gradient " + shape_string(*d_embedding));
    }
    dz += *d_embedding;
  }
  const bool dropped = !cache.masks.empty();
  for (std::size_t k = depth; k-- > 0;) {
    if (dropped && k < cache.masks.size()) dz.array() *= cache.masks[k].array();
    const Matrix da = relu_backward(cache.pre[k], dz);
    grad.layers[k] = cache.propagated[k].transpose() * da;
    if (k > 0) dz = clique_propagate(da * stack.layers[k].transpose(), partition, stack.semantics);
  }
  return grad;
}

RelationOutput relation_score(std::span<const GcnStack> stacks, const Matrix& x,
                              std::span<const CliquePartition* const> partitions, Mode mode,
                              Dropout dropout, std::span<Rng> rngs) {
  if (stacks.empty()) throw ConfigError("relation_score: relation has no strategies");
  if (partitions.size() != stacks.size() || rngs.size() != stacks.size()) {
    throw DimensionError("relation_score: stacks, partitions and rng streams differ in count");
  }
  for (const auto& s : stacks) {
    if (s.semantics != stacks.front().semantics) throw ConfigError("relation_score: strategies differ in semantics");
  }
  RelationOutput out;
  out.embeddings.resize(stacks.size());
  parallel_for(stacks.size(), [&](std::size_t i) {
    out.embeddings[i] = gcn_forward(stacks[i], x, *partitions[i], mode, dropout, rngs[i]);
  });
  out.scores = Matrix::Zero(x.rows(), 1);
  for (const auto& e : out.embeddings) out.scores += e.scores;
  return out;
}

}  // namespace irgcn
