#include "irgcn/eval.hpp"

#include "irgcn/parallel.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace irgcn {

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

bool correct(std::int8_t y, double h) { return static_cast<double>(y) * h > 0.0; }

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  return out;
}

}  // namespace

double accuracy(std::span<const double> y, std::span<const double> h) {
  if (y.size() != h.size()) throw DimensionError("accuracy: label and score counts differ");
  if (y.empty()) throw EmptyEvaluationError("accuracy: empty test set");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < y.size(); ++i) ok += y[i] * h[i] > 0.0;
  return static_cast<double>(ok) / static_cast<double>(y.size());
}

double mrr(const Dataset& ds, std::span<const std::int8_t> labels, const Matrix& h,
           std::span<const std::size_t> rows) {
  if (rows.empty()) throw EmptyEvaluationError("mrr: empty test set");
  std::vector<std::size_t> sorted(rows.begin(), rows.end());
  std::sort(sorted.begin(), sorted.end());
  const auto& tuples = ds.tuples();
  double sum = 0.0;
  std::size_t questions = 0;
  for (std::size_t b = 0; b < sorted.size();) {
    std::size_t e = b;
    while (e < sorted.size() && tuples[sorted[e]].question_id == tuples[sorted[b]].question_id) ++e;
    const auto& qs = ds.questions();
    const auto q = std::prev(std::upper_bound(qs.begin(), qs.end(), sorted[b],
                                              [](std::size_t i, const QuestionRange& r) { return i < r.begin; }));
    if (e - b != q->size()) {
      throw std::invalid_argument("mrr: question " + std::to_string(q->question_id) +
                                  " is only partly in the evaluated rows");
    }
    std::size_t accepted = sorted.size();
    for (std::size_t k = b; k < e; ++k) {
      if (labels[sorted[k]] > 0) {
        accepted = sorted[k];
        break;
      }
    }
    if (accepted == sorted.size()) {
      throw std::invalid_argument("mrr: question " + std::to_string(tuples[sorted[b]].question_id) +
                                  " has no accepted answer among the evaluated rows");
    }
    const double s = h(static_cast<Index>(accepted), 0);
    std::size_t rank = 1;
    for (std::size_t k = b; k < e; ++k) {
      const double o = h(static_cast<Index>(sorted[k]), 0);
      if (o > s || (o == s && sorted[k] < accepted)) ++rank;
    }
    sum += 1.0 / static_cast<double>(rank);
    ++questions;
    b = e;
  }
  return sum / static_cast<double>(questions);
}

std::map<std::size_t, BinStat> clique_binned_accuracy(const CliquePartition& contrastive,
                                                      std::span<const std::int8_t> labels, const Matrix& h,
                                                      std::span<const std::size_t> rows) {
  std::map<std::size_t, BinStat> bins;
  for (auto i : rows) {
    const auto n = std::min(contrastive.members(contrastive.clique_of(i)).size(), kMaxCliqueBin);
    auto& b = bins[n];
    ++b.count;
    b.correct += correct(labels[i], h(static_cast<Index>(i), 0));
  }
  return bins;
}

double jaccard(std::span<const std::size_t> a, std::span<const std::size_t> b) {
  if (a.empty() && b.empty()) return 1.0;
  std::vector<std::size_t> inter;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  const auto uni = a.size() + b.size() - inter.size();
  return static_cast<double>(inter.size()) / static_cast<double>(uni);
}

std::vector<std::size_t> misclassified(std::span<const std::int8_t> labels, const Matrix& h,
                                       std::span<const std::size_t> rows) {
  std::vector<std::size_t> out;
  for (auto i : rows)
    if (!correct(labels[i], h(static_cast<Index>(i), 0))) out.push_back(i);
  std::sort(out.begin(), out.end());
  return out;
}

double misclassification_jaccard(std::span<const std::int8_t> labels, const Matrix& h_a, const Matrix& h_b,
                                 std::span<const std::size_t> rows) {
  return jaccard(misclassified(labels, h_a, rows), misclassified(labels, h_b, rows));
}

EvalReport evaluate(const IrgcnModel& model, const Dataset& ds, const ViewSet& views) {
  if (!model.alphas_frozen) throw std::logic_error("evaluate: model has no frozen boosting weights");
  if (views.size() != ds.size()) throw DimensionError("evaluate: views cover a different tuple count");
  const auto rows = ds.test_indices();
  if (!ds.is_split() || rows.empty()) throw EmptyEvaluationError("evaluate: dataset has no test fold");

  const auto out = boosted_forward(model, ds.features(), views, Mode::eval, Rng(model.config.seed), nullptr);
  const auto labels = ds.labels_for_metrics();

  EvalReport r;
  r.config_hash = model.config.hash();
  r.seed = model.config.seed;
  r.test_tuples = rows.size();
  std::vector<double> y;
  std::vector<double> h;
  for (auto i : rows) {
    y.push_back(labels[i]);
    h.push_back(out.boosted(static_cast<Index>(i), 0));
  }
  r.accuracy = accuracy(y, h);
  r.mrr = mrr(ds, labels, out.boosted, rows);
  for (const auto& q : ds.questions()) r.test_questions += !ds.is_train(q.begin);
  r.bins = clique_binned_accuracy(views.get(Strategy::contrastive), labels, out.boosted, rows);
  r.misclassified = misclassified(labels, out.boosted, rows);
  r.alphas = out.alphas;

  std::vector<std::vector<std::size_t>> miss;
  for (std::size_t k = 0; k < model.relations.size(); ++k) {
    r.relation_names.push_back(model.relations[k].spec.name);
    miss.push_back(misclassified(labels, out.relations[k].scores, rows));
    r.relation_accuracy.push_back(1.0 - static_cast<double>(miss.back().size()) / static_cast<double>(rows.size()));
  }
  r.jaccard.assign(miss.size(), std::vector<double>(miss.size(), 1.0));
  for (std::size_t a = 0; a < miss.size(); ++a)
    for (std::size_t b = 0; b < miss.size(); ++b) r.jaccard[a][b] = jaccard(miss[a], miss[b]);
  return r;
}

void write_report_csv(const EvalReport& r, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "# config_hash=" << hex(r.config_hash) << " seed=" << r.seed << '\n';
  out << "section,key,value,count\n";
  out << "metric,accuracy," << fmt(r.accuracy) << ',' << r.test_tuples << '\n';
  out << "metric,mrr," << fmt(r.mrr) << ',' << r.test_questions << '\n';
  if (r.labeled_questions) out << "metric,labeled_questions," << r.labeled_questions << ",\n";
  for (const auto& [n, b] : r.bins) {
    out << "clique_size," << n << (n == kMaxCliqueBin ? "+" : "") << ',' << fmt(b.accuracy()) << ',' << b.count
        << '\n';
  }
  for (std::size_t k = 0; k < r.relation_names.size(); ++k) {
    out << "relation_accuracy," << r.relation_names[k] << ',' << fmt(r.relation_accuracy[k]) << ",\n";
    out << "alpha," << r.relation_names[k] << ',' << fmt(r.alphas[k]) << ",\n";
  }
  for (std::size_t a = 0; a < r.relation_names.size(); ++a)
    for (std::size_t b = a + 1; b < r.relation_names.size(); ++b)
      out << "jaccard," << r.relation_names[a] << '|' << r.relation_names[b] << ',' << fmt(r.jaccard[a][b]) << ",\n";
  out << "misclassified_count,," << r.misclassified.size() << ",\n";
  for (auto i : r.misclassified) out << "misclassified,tuple," << i << ",\n";
  if (!out) throw IoError("write failed: " + path.string());
}

std::string format_summary(const EvalReport& r) {
  std::ostringstream os;
  char buf[128];
  std::snprintf(buf, sizeof buf, "accuracy %.4f  mrr %.4f  (%zu tuples, %zu questions)\n", r.accuracy, r.mrr,
                r.test_tuples, r.test_questions);
  os << buf;
  for (const auto& [n, b] : r.bins) {
    std::snprintf(buf, sizeof buf, "  answers=%zu%s  accuracy %.4f  (%zu tuples)\n", n,
                  n == kMaxCliqueBin ? "+" : "", b.accuracy(), b.count);
    os << buf;
  }
  for (std::size_t k = 0; k < r.relation_names.size(); ++k) {
    std::snprintf(buf, sizeof buf, "  relation %-8s alpha %+.4f  accuracy %.4f\n", r.relation_names[k].c_str(),
                  r.alphas[k], r.relation_accuracy[k]);
    os << buf;
  }
  return os.str();
}

std::vector<std::size_t> training_questions(const Dataset& ds) {
  std::vector<std::size_t> out;
  const auto& qs = ds.questions();
  for (std::size_t k = 0; k < qs.size(); ++k) {
    bool all = true;
    for (std::size_t i = qs[k].begin; i < qs[k].end; ++i) all = all && ds.is_train(i);
    if (all) out.push_back(k);
  }
  return out;
}

std::vector<std::size_t> sample_labeled_rows(const Dataset& ds, double rate, std::uint64_t seed,
                                             std::size_t* question_count) {
  if (!(rate > 0.0 && rate <= 1.0)) throw ConfigError("label rate must lie in (0, 1]");
  auto qs = training_questions(ds);
  Rng rng = Rng(seed).derive(0x5a5e);
  shuffle(qs.begin(), qs.end(), rng);
  const auto keep = static_cast<std::size_t>(std::llround(rate * static_cast<double>(qs.size())));
  qs.resize(std::min(keep, qs.size()));
  if (question_count) *question_count = qs.size();
  std::vector<std::size_t> rows;
  for (auto k : qs) {
    const auto& q = ds.questions()[k];
    for (std::size_t i = q.begin; i < q.end; ++i) rows.push_back(i);
  }
  std::sort(rows.begin(), rows.end());
  return rows;
}

std::vector<SweepPoint> label_sparsity_sweep(const Dataset& ds, const ViewSet& views, const TrainConfig& config,
                                             std::span<const double> rates) {
  std::vector<std::optional<SweepPoint>> slots(rates.size());
  std::vector<std::size_t> counts(rates.size());
  std::vector<std::vector<std::size_t>> labeled(rates.size());
  for (std::size_t k = 0; k < rates.size(); ++k) {
    labeled[k] = sample_labeled_rows(ds, rates[k], config.seed, &counts[k]);
    if (counts[k] < 2) {
      std::cerr << "warning: label rate " << rates[k] << " leaves " << counts[k]
                << " labelled questions; skipped\n";
    }
  }
  parallel_for(rates.size(), [&](std::size_t k) {
    if (counts[k] < 2) return;
    auto result = train(IrgcnModel(config, ds.feature_dim()), ds, views, config, &labeled[k]);
    if (result.diverged) throw DivergenceError(result.message);
    SweepPoint p;
    p.rate = rates[k];
    p.report = evaluate(result.model, ds, views);
    p.report.labeled_questions = counts[k];
    p.history = std::move(result.history);
    slots[k] = std::move(p);
  });
  std::vector<SweepPoint> out;
  for (auto& s : slots)
    if (s) out.push_back(std::move(*s));
  return out;
}

std::vector<AblationPoint> ablation_run(const Dataset& ds, const ViewSet& views, const TrainConfig& config,
                                        std::span<const std::string> subsets) {
  std::vector<TrainConfig> configs;
  for (const auto& s : subsets) {
    auto c = config;
    c.relations = parse_relations(s);
    configs.push_back(std::move(c));
  }
  std::vector<AblationPoint> out(subsets.size());
  parallel_for(subsets.size(), [&](std::size_t k) {
    auto result = train(IrgcnModel(configs[k], ds.feature_dim()), ds, views, configs[k]);
    if (result.diverged) throw DivergenceError(subsets[k] + ": " + result.message);
    out[k].relations = subsets[k];
    out[k].report = evaluate(result.model, ds, views);
  });
  return out;
}

void write_sweep_csv(std::span<const SweepPoint> points, const TrainConfig& config,
                     const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "# config_hash=" << hex(config.hash()) << " seed=" << config.seed << '\n';
  out << "rate,labeled_questions,accuracy,mrr,test_tuples\n";
  for (const auto& p : points) {
    out << fmt(p.rate) << ',' << p.report.labeled_questions << ',' << fmt(p.report.accuracy) << ','
        << fmt(p.report.mrr) << ',' << p.report.test_tuples << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void write_ablation_csv(std::span<const AblationPoint> points, const TrainConfig& config,
                        const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "# config_hash=" << hex(config.hash()) << " seed=" << config.seed << '\n';
  out << "relations,accuracy,mrr,test_tuples\n";
  for (const auto& p : points) {
    out << '"' << p.relations << "\"," << fmt(p.report.accuracy) << ',' << fmt(p.report.mrr) << ','
        << p.report.test_tuples << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

void export_embeddings(const IrgcnModel& model, const Dataset& ds, const ViewSet& views,
                       const std::filesystem::path& path) {
  if (!model.alphas_frozen) throw std::logic_error("export_embeddings: model is not trained");
  const auto out = boosted_forward(model, ds.features(), views, Mode::eval, Rng(model.config.seed), nullptr);
  auto file = open_out(path);
  file << "# config_hash=" << hex(model.config.hash()) << " seed=" << model.config.seed << '\n';
  file << "tuple,strategy";
  for (Index c = 0; c < kHiddenDims.back(); ++c) file << ",z" << c;
  file << '\n';
  for (std::size_t r = 0; r < model.relations.size(); ++r) {
    const auto& rel = model.relations[r];
    for (std::size_t s = 0; s < rel.spec.strategies.size(); ++s) {
      const auto& z = out.relations[r].embeddings[s].output();
      const auto id = static_cast<int>(rel.spec.strategies[s]);
      for (Index i = 0; i < z.rows(); ++i) {
        file << i << ',' << id;
        for (Index c = 0; c < z.cols(); ++c) file << ',' << fmt(z(i, c));
        file << '\n';
      }
    }
  }
  if (!file) throw IoError("write failed: " + path.string());
}

}  // namespace irgcn
