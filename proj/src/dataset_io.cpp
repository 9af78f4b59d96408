#include "irgcn/binio.hpp"
#include "irgcn/dataset.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>
#include <tuple>

namespace irgcn {

Dataset::Dataset(Matrix raw_features, std::vector<std::int8_t> labels,
                 std::vector<TupleMeta> tuples) {
  const auto n = tuples.size();
  if (static_cast<std::size_t>(raw_features.rows()) != n || labels.size() != n) {
    throw DimensionError("Dataset: " + std::to_string(n) + " tuples, " +
                         std::to_string(labels.size()) + " labels, features " +
                         shape_string(raw_features));
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& ta = tuples[a];
    const auto& tb = tuples[b];
    return std::tie(ta.question_id, ta.answer_ts, ta.answer_id) <
           std::tie(tb.question_id, tb.answer_ts, tb.answer_id);
  });
  raw_.resize(raw_features.rows(), raw_features.cols());
  labels_.resize(n);
  tuples_.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    raw_.row(static_cast<Index>(i)) = raw_features.row(static_cast<Index>(order[i]));
    labels_[i] = labels[order[i]];
    tuples_[i] = tuples[order[i]];
    if (labels_[i] != 1 && labels_[i] != -1) throw std::invalid_argument("Dataset: labels must be +-1");
  }
  x_ = raw_;
  train_.assign(n, 1);
  means_ = Vector::Zero(raw_.cols());
  stds_ = Vector::Ones(raw_.cols());
  build_question_index();
}

Dataset::Dataset(const Dataset& other)
    : raw_(other.raw_),
      x_(other.x_),
      labels_(other.labels_),
      tuples_(other.tuples_),
      questions_(other.questions_),
      train_(other.train_),
      means_(other.means_),
      stds_(other.stds_),
      split_(other.split_) {}

Dataset& Dataset::operator=(const Dataset& other) {
  if (this != &other) {
    raw_ = other.raw_;
    x_ = other.x_;
    labels_ = other.labels_;
    tuples_ = other.tuples_;
    questions_ = other.questions_;
    train_ = other.train_;
    means_ = other.means_;
    stds_ = other.stds_;
    split_ = other.split_;
    metric_reads_ = 0;
  }
  return *this;
}

void Dataset::build_question_index() {
  questions_.clear();
  for (std::size_t i = 0; i < tuples_.size(); ++i) {
    if (questions_.empty() || questions_.back().question_id != tuples_[i].question_id) {
      questions_.push_back({tuples_[i].question_id, i, i + 1});
    } else {
      questions_.back().end = i + 1;
    }
  }
}

std::vector<std::size_t> Dataset::train_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < train_.size(); ++i)
    if (train_[i]) out.push_back(i);
  return out;
}

std::vector<std::size_t> Dataset::test_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < train_.size(); ++i)
    if (!train_[i]) out.push_back(i);
  return out;
}

std::int8_t Dataset::label(std::size_t i) const {
  if (split_ && !train_[i]) {
    throw LabelAccessError("label of held-out tuple " + std::to_string(i) +
                           " requested outside metric computation");
  }
  return labels_[i];
}

std::span<const std::int8_t> Dataset::labels_for_metrics() const {
  metric_reads_.fetch_add(1);
  return labels_;
}

std::pair<Vector, Vector> column_stats(const Matrix& m, std::span<const std::size_t> rows) {
  const Index d = m.cols();
  Vector mean = Vector::Zero(d);
  Vector sd = Vector::Ones(d);
  if (rows.empty()) return {mean, sd};
  for (auto r : rows) mean += m.row(static_cast<Index>(r)).transpose();
  mean /= static_cast<double>(rows.size());
  Vector var = Vector::Zero(d);
  for (auto r : rows) var += (m.row(static_cast<Index>(r)).transpose() - mean).cwiseAbs2();
  var /= static_cast<double>(rows.size());
  for (Index j = 0; j < d; ++j) {
    const double s = std::sqrt(var[j]);
    sd[j] = s < 1e-12 ? 1.0 : s;
  }
  return {mean, sd};
}

void Dataset::apply_standardization() {
  x_ = (raw_.rowwise() - means_.transpose()).array().rowwise() / stds_.transpose().array();
}

void Dataset::apply_split(const std::vector<std::uint8_t>& train_mask) {
  if (train_mask.size() != size()) throw DimensionError("apply_split: mask length mismatch");
  train_ = train_mask;
  split_ = true;
  const auto rows = train_indices();
  std::tie(means_, stds_) = column_stats(raw_, rows);
  apply_standardization();
}

void Dataset::restore_split(std::vector<std::uint8_t> train_mask, Vector means, Vector stds) {
  if (train_mask.size() != size() || means.size() != raw_.cols() || stds.size() != raw_.cols()) {
    throw DimensionError("restore_split: parameter shape mismatch");
  }
  train_ = std::move(train_mask);
  means_ = std::move(means);
  stds_ = std::move(stds);
  split_ = true;
  apply_standardization();
}

SplitResult standardize_and_split(Dataset& ds, double test_fraction, Rng& rng) {
  const auto& qs = ds.questions();
  if (qs.size() < 5) {
    throw SplitError("split needs at least 5 questions, dataset has " + std::to_string(qs.size()));
  }
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) {
    throw ConfigError("test fraction must lie in (0, 1)");
  }
  std::vector<std::size_t> order(qs.size());
  std::iota(order.begin(), order.end(), 0);
  shuffle(order.begin(), order.end(), rng);
  auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(qs.size())));
  n_test = std::clamp<std::size_t>(n_test, 1, qs.size() - 1);

  std::vector<std::uint8_t> mask(ds.size(), 1);
  for (std::size_t k = 0; k < n_test; ++k) {
    const auto& q = qs[order[k]];
    for (std::size_t i = q.begin; i < q.end; ++i) mask[i] = 0;
  }
  ds.apply_split(mask);
  return {ds.train_indices(), ds.test_indices()};
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("IRGD", 4);
  binio::put<std::uint16_t>(out, kDatasetVersion);
  binio::put<std::uint64_t>(out, ds.size());
  binio::put<std::uint64_t>(out, static_cast<std::uint64_t>(ds.feature_dim()));
  const auto& raw = ds.raw_features();
  for (Index i = 0; i < raw.size(); ++i) binio::put<double>(out, raw.data()[i]);
  for (auto y : ds.stored_labels()) binio::put<std::int8_t>(out, y);
  for (const auto& t : ds.tuples()) {
    binio::put(out, t.question_id);
    binio::put(out, t.answer_id);
    binio::put(out, t.answer_author);
    binio::put(out, t.question_author);
    binio::put(out, t.answer_ts);
    binio::put(out, t.question_ts);
  }
  binio::put<std::uint8_t>(out, ds.is_split() ? 1 : 0);
  for (auto m : ds.train_mask()) binio::put<std::uint8_t>(out, m);
  for (Index j = 0; j < ds.feature_dim(); ++j) binio::put<double>(out, ds.means()[j]);
  for (Index j = 0; j < ds.feature_dim(); ++j) binio::put<double>(out, ds.stds()[j]);
  if (!out) throw IoError("write failed: " + path.string());
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path.string());
  binio::expect_magic(in, "IRGD", "dataset " + path.string());
  const auto version = binio::get<std::uint16_t>(in);
  if (version != kDatasetVersion) {
    throw FormatError("dataset " + path.string() + ": unsupported format version " +
                      std::to_string(version));
  }
  const auto n = binio::get<std::uint64_t>(in);
  const auto d = binio::get<std::uint64_t>(in);
  if (n > (1u << 28) || d > 4096) throw FormatError("dataset header out of range");
  Matrix raw(static_cast<Index>(n), static_cast<Index>(d));
  for (Index i = 0; i < raw.size(); ++i) raw.data()[i] = binio::get<double>(in);
  std::vector<std::int8_t> labels(n);
  for (auto& y : labels) y = binio::get<std::int8_t>(in);
  std::vector<TupleMeta> tuples(n);
  for (auto& t : tuples) {
    t.question_id = binio::get<std::int64_t>(in);
    t.answer_id = binio::get<std::int64_t>(in);
    t.answer_author = binio::get<std::int64_t>(in);
    t.question_author = binio::get<std::int64_t>(in);
    t.answer_ts = binio::get<std::int64_t>(in);
    t.question_ts = binio::get<std::int64_t>(in);
  }
  const bool split = binio::get<std::uint8_t>(in) != 0;
  std::vector<std::uint8_t> mask(n);
  for (auto& m : mask) m = binio::get<std::uint8_t>(in);
  Vector means(static_cast<Index>(d));
  Vector stds(static_cast<Index>(d));
  for (Index j = 0; j < means.size(); ++j) means[j] = binio::get<double>(in);
  for (Index j = 0; j < stds.size(); ++j) stds[j] = binio::get<double>(in);

  Dataset ds(std::move(raw), std::move(labels), std::move(tuples));
  if (ds.tuples().size() != n) throw FormatError("dataset tuple count mismatch");
  if (split) ds.restore_split(std::move(mask), std::move(means), std::move(stds));
  return ds;
}

}  // namespace irgcn
