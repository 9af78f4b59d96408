#include "irgcn/trueskill.hpp"

#include <boost/math/special_functions/erf.hpp>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <tuple>

namespace irgcn {

namespace {

double norm_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }
double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

}  // namespace

double v_win(double t, double eps) {
  const double x = t - eps;
  const double denom = norm_cdf(x);
  if (denom < 2.222758749e-162) return -x;
  return norm_pdf(x) / denom;
}

double w_win(double t, double eps) {
  const double x = t - eps;
  const double denom = norm_cdf(x);
  if (denom < 2.222758749e-162) return x < 0.0 ? 1.0 : 0.0;
  const double v = v_win(t, eps);
  return v * (v + x);
}

TeamUpdate rate_two_teams(std::span<const Rating> winners, std::span<const Rating> losers,
                          const TrueSkillParams& p) {
  if (winners.empty() || losers.empty()) throw std::invalid_argument("rate_two_teams: empty team");
  const double tau2 = p.tau * p.tau;
  const double beta2 = p.beta * p.beta;
  const auto players = static_cast<double>(winners.size() + losers.size());

  double c2 = players * beta2;
  double mu_w = 0.0;
  double mu_l = 0.0;
  for (const auto& r : winners) {
    c2 += r.sigma * r.sigma + tau2;
    mu_w += r.mu;
  }
  for (const auto& r : losers) {
    c2 += r.sigma * r.sigma + tau2;
    mu_l += r.mu;
  }
  const double c = std::sqrt(c2);
  const double draw_margin =
      std::numbers::sqrt2 * boost::math::erf_inv(p.draw_probability) * std::sqrt(players) * p.beta;
  const double t = (mu_w - mu_l) / c;
  const double eps = draw_margin / c;
  const double v = v_win(t, eps);
  const double w = w_win(t, eps);

  auto update = [&](const Rating& r, double sign) {
    const double s2 = r.sigma * r.sigma + tau2;
    Rating out;
    out.mu = r.mu + sign * (s2 / c) * v;
    out.sigma = std::sqrt(s2 * std::max(1.0 - (s2 / c2) * w, 1e-12));
    return out;
  };
  TeamUpdate result;
  for (const auto& r : winners) result.winners.push_back(update(r, +1.0));
  for (const auto& r : losers) result.losers.push_back(update(r, -1.0));
  return result;
}

Rating SkillTable::rating(std::int64_t user) const {
  auto it = ratings_.find(user);
  return it == ratings_.end() ? Rating{params_.mu0, params_.sigma0} : it->second;
}

SkillTable fit_trueskill(const Dataset& ds, std::span<const std::size_t> train_indices,
                         const TrueSkillParams& params) {
  SkillTable table(params);
  std::vector<std::uint8_t> in_train(ds.size(), 0);
  for (auto i : train_indices) in_train.at(i) = 1;

  std::vector<const QuestionRange*> order;
  for (const auto& q : ds.questions()) {
    if (q.size() == 0) continue;
    bool all = true;
    for (std::size_t i = q.begin; i < q.end; ++i) all = all && in_train[i];
    if (all) order.push_back(&q);
  }
  const auto& tuples = ds.tuples();
  std::stable_sort(order.begin(), order.end(), [&](const QuestionRange* a, const QuestionRange* b) {
    return std::tie(tuples[a->begin].question_ts, a->question_id) <
           std::tie(tuples[b->begin].question_ts, b->question_id);
  });

  for (const QuestionRange* q : order) {
    std::int64_t winner = 0;
    bool found = false;
    for (std::size_t i = q->begin; i < q->end; ++i) {
      if (ds.label(i) == 1) {
        winner = tuples[i].answer_author;
        found = true;
      }
    }
    std::vector<std::int64_t> losers;
    for (std::size_t i = q->begin; i < q->end; ++i) {
      const auto a = tuples[i].answer_author;
      if (found && a != winner && std::find(losers.begin(), losers.end(), a) == losers.end()) {
        losers.push_back(a);
      }
    }
    if (!found || losers.empty()) {
      ++table.skipped_;
      continue;
    }
    const Rating w = table.rating(winner);
    std::vector<Rating> ls;
    for (auto u : losers) ls.push_back(table.rating(u));
    const auto updated = rate_two_teams(std::span(&w, 1), ls, params);
    table.ratings_[winner] = updated.winners[0];
    for (std::size_t k = 0; k < losers.size(); ++k) table.ratings_[losers[k]] = updated.losers[k];
    ++table.consumed_;
  }
  return table;
}

}  // namespace irgcn
