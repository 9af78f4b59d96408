#pragma once

#include "irgcn/boost.hpp"

#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace irgcn {

struct EmptyEvaluationError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Fraction of rows with y * h > 0. h = 0 counts as wrong.
double accuracy(std::span<const double> y, std::span<const double> h);

/// Mean reciprocal rank of the accepted answer. Rows must be whole
/// questions; ties go to the earlier tuple in canonical order.
double mrr(const Dataset& ds, std::span<const std::int8_t> labels, const Matrix& h,
           std::span<const std::size_t> rows);

struct BinStat {
  std::size_t correct = 0;
  std::size_t count = 0;
  double accuracy() const { return count ? static_cast<double>(correct) / static_cast<double>(count) : 0.0; }
  friend bool operator==(const BinStat&, const BinStat&) = default;
};

inline constexpr std::size_t kMaxCliqueBin = 8;  // sizes >= 8 share one bin

/// Accuracy by contrastive clique size (answers per question).
std::map<std::size_t, BinStat> clique_binned_accuracy(const CliquePartition& contrastive,
                                                      std::span<const std::int8_t> labels, const Matrix& h,
                                                      std::span<const std::size_t> rows);

/// |A n B| / |A u B| over sorted index sets; 1 when both are empty.
double jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b);

/// Rows whose sign(h) disagrees with the label, ascending.
std::vector<std::size_t> misclassified(std::span<const std::int8_t> labels, const Matrix& h,
                                       std::span<const std::size_t> rows);

double misclassification_jaccard(std::span<const std::int8_t> labels, const Matrix& h_a, const Matrix& h_b,
                                 std::span<const std::size_t> rows);

struct EvalReport {
  double accuracy = 0.0;
  double mrr = 0.0;
  std::size_t test_tuples = 0;
  std::size_t test_questions = 0;
  std::map<std::size_t, BinStat> bins;
  std::vector<std::size_t> misclassified;
  std::vector<std::string> relation_names;
  std::vector<double> relation_accuracy;
  std::vector<double> alphas;
  std::vector<std::vector<double>> jaccard;  // relation x relation
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;
  std::size_t labeled_questions = 0;

  friend bool operator==(const EvalReport&, const EvalReport&) = default;
};

/// Scores the test fold with the model's frozen boosting weights. Labels are
/// only read through the dataset's metric accessor.
EvalReport evaluate(const IrgcnModel& model, const Dataset& ds, const ViewSet& views);

void write_report_csv(const EvalReport& report, const std::filesystem::path& path);
std::string format_summary(const EvalReport& report);

/// Indices of questions entirely in the training fold.
std::vector<std::size_t> training_questions(const Dataset& ds);

/// Training rows of the first round(rate * |train questions|) questions of a
/// seed-derived permutation, so lower rates give nested subsets.
std::vector<std::size_t> sample_labeled_rows(const Dataset& ds, double rate, std::uint64_t seed,
                                             std::size_t* question_count = nullptr);

struct SweepPoint {
  double rate = 0.0;
  EvalReport report;
  std::vector<EpochRecord> history;
};

/// Retrains per rate; rates giving fewer than two labelled questions are
/// skipped with a warning.
std::vector<SweepPoint> label_sparsity_sweep(const Dataset& ds, const ViewSet& views, const TrainConfig& config,
                                             std::span<const double> rates);

struct AblationPoint {
  std::string relations;
  EvalReport report;
};

std::vector<AblationPoint> ablation_run(const Dataset& ds, const ViewSet& views, const TrainConfig& config,
                                        std::span<const std::string> subsets);

void write_sweep_csv(std::span<const SweepPoint> points, const TrainConfig& config,
                     const std::filesystem::path& path);
void write_ablation_csv(std::span<const AblationPoint> points, const TrainConfig& config,
                        const std::filesystem::path& path);

/// Rows: tuple index, strategy id, then the last-layer embedding.
void export_embeddings(const IrgcnModel& model, const Dataset& ds, const ViewSet& views,
                       const std::filesystem::path& path);

}  // namespace irgcn
