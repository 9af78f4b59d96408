#pragma once

#include "irgcn/dataset.hpp"

#include <span>
#include <unordered_map>
#include <vector>

namespace irgcn {

struct Rating {
  double mu = 25.0;
  double sigma = 25.0 / 3.0;
};

struct TrueSkillParams {
  double mu0 = 25.0;
  double sigma0 = 25.0 / 3.0;
  double beta = 25.0 / 6.0;
  double tau = 25.0 / 300.0;
  double draw_probability = 0.10;
};

struct TeamUpdate {
  std::vector<Rating> winners;
  std::vector<Rating> losers;
};

/// Two-team TrueSkill update for a decisive win. Team performance is the sum
/// of member performances; the draw margin scales with sqrt(total players).
TeamUpdate rate_two_teams(std::span<const Rating> winners, std::span<const Rating> losers,
                          const TrueSkillParams& params = {});

/// Additive and multiplicative correction factors for a win at normalized
/// margin t with normalized draw margin eps.
double v_win(double t, double eps);
double w_win(double t, double eps);

class SkillTable {
 public:
  explicit SkillTable(TrueSkillParams params = {}) : params_(params) {}

  /// Rating of a user; users never rated retain the prior.
  Rating rating(std::int64_t user) const;
  double skill(std::int64_t user) const { return rating(user).mu; }
  void set(std::int64_t user, Rating r) { ratings_[user] = r; }

  const TrueSkillParams& params() const { return params_; }
  std::size_t questions_consumed() const { return consumed_; }
  std::size_t questions_skipped() const { return skipped_; }
  std::size_t user_count() const { return ratings_.size(); }

  friend SkillTable fit_trueskill(const Dataset&, std::span<const std::size_t>, const TrueSkillParams&);

 private:
  TrueSkillParams params_;
  std::unordered_map<std::int64_t, Rating> ratings_;
  std::size_t consumed_ = 0;
  std::size_t skipped_ = 0;
};

/// One match per training question in chronological order: the accepted
/// answer's author beats the team of all other distinct answering authors.
/// Questions answered by a single author are skipped.
SkillTable fit_trueskill(const Dataset& ds, std::span<const std::size_t> train_indices,
                         const TrueSkillParams& params = {});

}  // namespace irgcn
