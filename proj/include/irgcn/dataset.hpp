#pragma once

#include "irgcn/numcore.hpp"

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace irgcn {

inline constexpr Index kFeatureCount = 14;

/// One (question, answer) pair. Timestamps are UTC milliseconds.
struct TupleMeta {
  std::int64_t question_id = 0;
  std::int64_t answer_id = 0;
  std::int64_t answer_author = 0;
  std::int64_t question_author = 0;
  std::int64_t answer_ts = 0;
  std::int64_t question_ts = 0;

  friend bool operator==(const TupleMeta&, const TupleMeta&) = default;
};

/// Contiguous tuple range [begin, end) belonging to one question.
struct QuestionRange {
  std::int64_t question_id = 0;
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  friend bool operator==(const QuestionRange&, const QuestionRange&) = default;
};

struct SplitError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct LabelAccessError : std::logic_error {
  using std::logic_error::logic_error;
};

// Tuples in canonical order (question_id, answer_ts, answer_id), labels,
// raw and standardized features, and the question-level train/test split.
//
// Labels of test tuples are guarded: label() refuses them, and the only way
// to read them is labels_for_metrics(), which is counted.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix raw_features, std::vector<std::int8_t> labels, std::vector<TupleMeta> tuples);
  Dataset(const Dataset& other);
  Dataset& operator=(const Dataset& other);

  std::size_t size() const { return tuples_.size(); }
  Index feature_dim() const { return raw_.cols(); }

  const Matrix& raw_features() const { return raw_; }
  /// Standardized features (equal to raw until standardize() runs).
  const Matrix& features() const { return x_; }
  const std::vector<TupleMeta>& tuples() const { return tuples_; }
  const std::vector<QuestionRange>& questions() const { return questions_; }

  bool is_train(std::size_t i) const { return train_[i] != 0; }
  const std::vector<std::uint8_t>& train_mask() const { return train_; }
  std::vector<std::size_t> train_indices() const;
  std::vector<std::size_t> test_indices() const;
  bool is_split() const { return split_; }

  /// Label of a training tuple. Throws LabelAccessError for test tuples of a
  /// split dataset.
  std::int8_t label(std::size_t i) const;

  /// All labels, including the held-out fold. Reserved for metric
  /// computation; every call is counted.
  std::span<const std::int8_t> labels_for_metrics() const;
  std::size_t metric_label_reads() const { return metric_reads_.load(); }

  /// Unguarded access for serialization and dataset construction only.
  const std::vector<std::int8_t>& stored_labels() const { return labels_; }

  const Vector& means() const { return means_; }
  const Vector& stds() const { return stds_; }

  /// Marks tuples of the given questions as test and the rest as train, then
  /// standardizes with training-fold statistics.
  void apply_split(const std::vector<std::uint8_t>& train_mask);
  /// Restores a split with stored standardization parameters.
  void restore_split(std::vector<std::uint8_t> train_mask, Vector means, Vector stds);

 private:
  void build_question_index();
  void apply_standardization();

  Matrix raw_;
  Matrix x_;
  std::vector<std::int8_t> labels_;
  std::vector<TupleMeta> tuples_;
  std::vector<QuestionRange> questions_;
  std::vector<std::uint8_t> train_;
  Vector means_;
  Vector stds_;
  bool split_ = false;
  mutable std::atomic<std::size_t> metric_reads_{0};
};

/// Column means and population standard deviations over the given rows.
/// Columns with std below 1e-12 get std 1 (centered, unscaled).
std::pair<Vector, Vector> column_stats(const Matrix& m, std::span<const std::size_t> rows);

struct SplitResult {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Random question-level split; llround(test_fraction * |Q|) questions go to
/// the test fold, and the dataset is standardized on the training fold.
SplitResult standardize_and_split(Dataset& ds, double test_fraction, Rng& rng);

// On-disk container. Layout (all little-endian):
//   "IRGD" | u16 version | u64 N | u64 d
//   f64[N*d] raw features, row-major | i8[N] labels
//   N x { i64 question_id, answer_id, answer_author, question_author,
//         answer_ts, question_ts }
//   u8 split flag | u8[N] train mask | f64[d] means | f64[d] stds
inline constexpr std::uint16_t kDatasetVersion = 1;

void write_dataset(const Dataset& ds, const std::filesystem::path& path);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace irgcn
