#pragma once

#include "irgcn/boost.hpp"
#include "irgcn/conv.hpp"
#include "irgcn/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

namespace irgcn::testing {

struct ToySpec {
  std::vector<std::size_t> answers;  // answers per question
  std::size_t authors = 6;
  Index features = kFeatureCount;
  bool split = true;
};

// Random dataset: one random accepted answer per question, authors drawn from
// a small pool, timestamps strictly increasing within a question.
inline Dataset toy_dataset(const ToySpec& spec, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<TupleMeta> tuples;
  std::vector<std::int8_t> labels;
  std::int64_t id = 1;
  for (std::size_t q = 0; q < spec.answers.size(); ++q) {
    const auto qid = id++;
    const std::int64_t qts = 1'000'000 * static_cast<std::int64_t>(q + 1);
    std::int64_t t = qts;
    const auto accepted = rng.below(spec.answers[q]);
    for (std::size_t a = 0; a < spec.answers[q]; ++a) {
      t += 1 + static_cast<std::int64_t>(rng.below(5000));
      TupleMeta m;
      m.question_id = qid;
      m.answer_id = id++;
      m.answer_author = static_cast<std::int64_t>(rng.below(spec.authors)) + 1;
      m.question_author = 1000 + static_cast<std::int64_t>(q);
      m.answer_ts = t;
      m.question_ts = qts;
      tuples.push_back(m);
      labels.push_back(a == accepted ? 1 : -1);
    }
  }
  Matrix x(static_cast<Index>(tuples.size()), spec.features);
  for (Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
  Dataset ds(std::move(x), std::move(labels), std::move(tuples));
  if (spec.split) {
    Rng split(seed + 17);
    standardize_and_split(ds, 0.25, split);
  }
  return ds;
}

inline std::vector<std::size_t> random_sizes(Rng& rng, std::size_t questions, std::size_t lo, std::size_t hi) {
  std::vector<std::size_t> out(questions);
  for (auto& n : out) n = lo + rng.below(hi - lo + 1);
  return out;
}

// Central differences that skip entries whose +-h probe changes the
// piecewise-linear regime (ReLU pattern, clip, sign of an L1 term): across
// a kink the difference quotient is not a derivative of either piece.
struct FdReport {
  double worst = 0.0;
  std::size_t checked = 0;
  std::size_t skipped = 0;

  void merge(const FdReport& o) {
    worst = std::max(worst, o.worst);
    checked += o.checked;
    skipped += o.skipped;
  }
};

using Pattern = std::vector<std::uint8_t>;
using Probe = std::function<std::pair<double, Pattern>(const Matrix&)>;

inline FdReport fd_check_smooth(const Probe& probe_fn, const Matrix& param, const Matrix& analytic,
                                double h = 1e-5) {
  FdReport rep;
  Matrix probe = param;
  const auto [base_loss, base] = probe_fn(param);
  // absolute noise floor of the difference quotient scales with the loss
  const double floor = 1e-6 * std::max(1.0, std::abs(base_loss));
  for (Index i = 0; i < probe.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + h;
    const auto up = probe_fn(probe);
    probe.data()[i] = orig - h;
    const auto down = probe_fn(probe);
    probe.data()[i] = orig;
    if (up.second != base || down.second != base) {
      ++rep.skipped;
      continue;
    }
    const double numeric = (up.first - down.first) / (2.0 * h);
    const double a = analytic.data()[i];
    rep.worst = std::max(rep.worst, std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), floor}));
    ++rep.checked;
  }
  return rep;
}

inline void append_relu_pattern(Pattern& out, const ViewEmbedding& e) {
  for (const auto& pre : e.pre) {
    for (Index i = 0; i < pre.size(); ++i) out.push_back(pre.data()[i] > 0.0);
  }
}

// Checks loss_gradient against the total loss for every tensor of the
// model. The model's alphas must be frozen; they stay constant throughout.
inline FdReport model_fd_check(const IrgcnModel& model, const Matrix& x, const ViewSet& views,
                               const Supervision& sup, double lambda, double h = 1e-5) {
  auto evaluate = [&](const IrgcnModel& m) {
    const auto out = boosted_forward(m, x, views, Mode::eval, Rng(0), nullptr);
    Pattern p;
    for (const auto& ro : out.relations) {
      for (const auto& e : ro.embeddings) append_relu_pattern(p, e);
      for (auto r : sup.rows) p.push_back(std::abs(ro.scores(static_cast<Index>(r), 0)) > kScoreClip);
    }
    for (auto r : sup.rows) p.push_back(std::abs(out.boosted(static_cast<Index>(r), 0)) > kScoreClip);
    for (const auto& rel : m.relations) {
      for (const auto& w : rel.layers) {
        for (Index i = 0; i < w.size(); ++i) p.push_back(w.data()[i] > 0.0);
      }
    }
    return std::pair{total_loss(m, out, sup, lambda).total, p};
  };
  const auto out = boosted_forward(model, x, views, Mode::eval, Rng(0), nullptr);
  const auto grad = loss_gradient(model, out, sup, views, lambda);
  FdReport rep;
  for (std::size_t r = 0; r < model.relations.size(); ++r) {
    for (std::size_t k = 0; k < model.relations[r].layers.size(); ++k) {
      rep.merge(fd_check_smooth(
          [&](const Matrix& w) {
            IrgcnModel m = model;
            m.relations[r].layers[k] = w;
            return evaluate(m);
          },
          model.relations[r].layers[k], grad[r].layers[k], h));
    }
    for (std::size_t i = 0; i < model.relations[r].scores.size(); ++i) {
      rep.merge(fd_check_smooth(
          [&](const Matrix& w) {
            IrgcnModel m = model;
            m.relations[r].scores[i] = w;
            return evaluate(m);
          },
          model.relations[r].scores[i], grad[r].scores[i], h));
    }
  }
  return rep;
}

}  // namespace irgcn::testing
