#pragma once

#include "irgcn/conv.hpp"
#include "irgcn/dataset.hpp"
#include "irgcn/views.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace irgcn {

/// A relation type: strategies sharing semantics and layer weights.
struct RelationSpec {
  std::string name;
  std::vector<Strategy> strategies;

  friend bool operator==(const RelationSpec&, const RelationSpec&) = default;
};

/// Parses "C,S,R" style lists. Items are separated by ',', strategies inside
/// an item by '+'. Atoms: C (contrastive), R (reflexive), TS (trueskill),
/// AS (arrival), S (= TS+AS).
std::vector<RelationSpec> parse_relations(std::string_view text);
std::string format_relations(std::span<const RelationSpec> relations);

struct TrainConfig {
  std::size_t epochs = 300;
  double lr = 0.01;
  double gamma1 = 0.05;
  double gamma2 = 0.01;
  double dropout = 0.5;
  std::size_t dropout_layers = 1;  // leading hidden layers that get dropout
  double delta_trueskill = 4.0;
  double delta_arrival = 0.95;
  std::uint64_t seed = 1;
  std::vector<RelationSpec> relations = parse_relations("C,S,R");
  double lambda_max = 1.0;
  double anneal_tau = 0.0;  // 0 selects epochs / 5
  std::size_t batch_tuples = 0;  // 0 = full batch
  bool track_validation = true;

  /// Canonical key = value text; also the input to hash().
  std::string to_text() const;
  std::uint64_t hash() const;
  double effective_tau() const;
  void validate() const;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

/// Flat "key = value" text, '#' starts a comment. Unknown keys throw.
TrainConfig parse_config(std::string_view text);
TrainConfig load_config(const std::filesystem::path& path);

struct RelationType {
  RelationSpec spec;
  Semantics semantics = Semantics::reflexive;
  std::vector<Matrix> layers;  // shared by every strategy of the relation
  std::vector<Matrix> scores;  // one score vector per strategy
  double alpha = 1.0;          // frozen boosting weight for inference

  GcnStack stack(std::size_t i) const;
};

class IrgcnModel {
 public:
  IrgcnModel() = default;
  /// Fresh model with Glorot-initialised weights drawn from config.seed.
  IrgcnModel(const TrainConfig& config, Index input_dim);

  std::vector<RelationType> relations;
  TrainConfig config;
  Index input_dim = 0;
  bool alphas_frozen = false;

  std::vector<double> alphas() const;
  void set_alphas(std::span<const double> alphas);
  std::size_t strategy_count() const;

  friend bool operator==(const IrgcnModel& a, const IrgcnModel& b);
};

/// Labelled rows used for boosting weights and losses.
struct Supervision {
  std::vector<std::size_t> rows;
  std::vector<double> y;  // y[k] is the label of rows[k]

  static Supervision from_dataset(const Dataset& ds, std::span<const std::size_t> rows);
};

inline constexpr double kScoreClip = 50.0;
inline constexpr double kAlphaEpsilon = 1e-10;

/// 1/2 ln((correct mass + eps) / (incorrect mass + eps)), where tuples with
/// y*h = 0 count to neither side.
double compute_alpha(std::span<const double> y, std::span<const double> h, std::span<const double> e);

struct BoostOutput {
  Matrix boosted;                          // H_b
  std::vector<RelationOutput> relations;   // H_R and per-strategy caches
  std::vector<double> alphas;
  std::size_t clipped = 0;
};

/// Boosted score computation. With supervision, alpha_R is recomputed from
/// the exponentially reweighted correct/incorrect mass over the supervised
/// rows; without it the model's frozen alphas are used.
BoostOutput boosted_forward(const IrgcnModel& model, const Matrix& x, const ViewSet& views, Mode mode,
                            const Rng& rng, const Supervision* supervision);

/// lambda_max * (1 - exp(-t / tau))
double anneal_lambda(double t, double lambda_max, double tau);

struct LossBreakdown {
  double boosted = 0.0;
  double l1 = 0.0;
  double l2 = 0.0;
  std::vector<double> relation;   // per relation exponential loss
  std::vector<double> alignment;  // per relation alignment loss
  double lambda = 0.0;
  double total = 0.0;
};

LossBreakdown total_loss(const IrgcnModel& model, const BoostOutput& out, const Supervision& sup,
                         double lambda);

struct RelationGradient {
  std::vector<Matrix> layers;
  std::vector<Matrix> scores;
};
using ModelGradient = std::vector<RelationGradient>;

/// Exact gradient of total_loss with the alphas held constant.
ModelGradient loss_gradient(const IrgcnModel& model, const BoostOutput& out, const Supervision& sup,
                            const ViewSet& views, double lambda);

struct EpochRecord {
  std::size_t epoch = 0;
  LossBreakdown loss;
  std::vector<double> alphas;
  double train_accuracy = 0.0;
  double val_accuracy = -1.0;  // negative when not tracked
  std::size_t clipped = 0;     // boosted margins beyond the exponent clip
};

struct TrainResult {
  IrgcnModel model;
  std::vector<EpochRecord> history;
  bool diverged = false;
  std::string message;
};

struct DivergenceError : NumericError {
  using NumericError::NumericError;
};

/// Full training loop. `labeled` defaults to the training fold; only those
/// rows enter the losses and boosting weights. Alphas are frozen at the end
/// from an eval-mode pass over the labelled rows.
TrainResult train(IrgcnModel model, const Dataset& ds, const ViewSet& views, const TrainConfig& config,
                  const std::vector<std::size_t>* labeled = nullptr);

void write_history_csv(const TrainResult& result, const std::filesystem::path& path);

// Checkpoint layout (little-endian): "IRGM" | u16 version | u64 config hash |
// string config text | u64 input dim | u8 alphas frozen | u32 relation count |
// per relation { string name | u8 semantics | u32 strategy count | u8[] strategy
// ids | u32 layer count | matrices | score matrices (one per strategy) | f64 alpha }
// A matrix is u64 rows | u64 cols | f64[rows*cols] row-major; a string is
// u64 length | bytes. Strategies of a relation form one shared-weight group.
inline constexpr std::uint16_t kCheckpointVersion = 1;

void write_checkpoint(const IrgcnModel& model, const std::filesystem::path& path);
IrgcnModel read_checkpoint(const std::filesystem::path& path);

}  // namespace irgcn
