#pragma once

#include "irgcn/dataset.hpp"
#include "irgcn/trueskill.hpp"

#include <array>
#include <filesystem>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace irgcn {

enum class Semantics : std::uint8_t { reflexive = 0, contrastive = 1, similar = 2 };
enum class Strategy : std::uint8_t { reflexive = 0, contrastive = 1, trueskill = 2, arrival = 3 };

inline constexpr std::array<Strategy, 4> kAllStrategies = {
    Strategy::reflexive, Strategy::contrastive, Strategy::trueskill, Strategy::arrival};

std::string_view to_string(Strategy s);
std::string_view to_string(Semantics s);
Semantics semantics_of(Strategy s);

/// A relational view as an equivalence relation over tuple indices: every
/// tuple belongs to exactly one clique. Clique ids are relabelled in order of
/// first appearance, so equal relations compare equal.
class CliquePartition {
 public:
  CliquePartition() = default;
  CliquePartition(Strategy strategy, Semantics semantics, std::vector<std::uint32_t> clique_of);

  Strategy strategy() const { return strategy_; }
  Semantics semantics() const { return semantics_; }
  std::size_t size() const { return clique_of_.size(); }
  std::size_t clique_count() const { return members_.size(); }

  std::uint32_t clique_of(std::size_t tuple) const { return clique_of_[tuple]; }
  const std::vector<std::uint32_t>& assignment() const { return clique_of_; }
  const std::vector<std::uint32_t>& members(std::size_t clique) const { return members_[clique]; }
  const std::vector<std::vector<std::uint32_t>>& cliques() const { return members_; }

  /// clique size -> number of cliques of that size
  std::vector<std::pair<std::size_t, std::size_t>> size_histogram() const;

  /// Restriction to a tuple subset closed under the relation, reindexed to
  /// positions in `tuples`.
  CliquePartition restrict_to(std::span<const std::size_t> tuples) const;

  friend bool operator==(const CliquePartition& a, const CliquePartition& b) {
    return a.strategy_ == b.strategy_ && a.semantics_ == b.semantics_ && a.clique_of_ == b.clique_of_;
  }

 private:
  Strategy strategy_ = Strategy::reflexive;
  Semantics semantics_ = Semantics::reflexive;
  std::vector<std::uint32_t> clique_of_;
  std::vector<std::vector<std::uint32_t>> members_;
};

CliquePartition induce_reflexive(const Dataset& ds);
CliquePartition induce_contrastive(const Dataset& ds);

/// skill(author) minus mean skill of the other answers' authors in the question.
std::vector<double> skill_margins(const Dataset& ds, const SkillTable& skills);

/// Tuples whose margin is >= delta (or <= -delta) join the clique of their
/// author's high (low) class; the rest are singletons.
CliquePartition induce_trueskill(const Dataset& ds, const SkillTable& skills, double delta = 4.0);

/// Relative arrival in [0, 1]: 0 for the first answer, 1 for the last,
/// linear in time between them. When all answers share one timestamp it
/// falls back to (rank - 1) / (n - 1).
std::vector<double> relative_arrival(const Dataset& ds);
/// Relative arrival minus the mean relative arrival of the competitors.
std::vector<double> arrival_contrast(const Dataset& ds);

/// Buckets of width (1 - delta) over arrival contrast shifted to [0, 2].
CliquePartition induce_arrival(const Dataset& ds, double delta = 0.95);

struct ViewSet {
  std::array<CliquePartition, 4> views;  // indexed by Strategy
  double delta_trueskill = 4.0;
  double delta_arrival = 0.95;
  std::uint64_t dataset_fingerprint = 0;

  const CliquePartition& get(Strategy s) const { return views[static_cast<std::size_t>(s)]; }
  std::size_t size() const { return views[0].size(); }
};

/// TrueSkill is fitted on the training fold only.
ViewSet induce_all(const Dataset& ds, double delta_trueskill = 4.0, double delta_arrival = 0.95,
                   const TrueSkillParams& params = {});

std::uint64_t dataset_fingerprint(const Dataset& ds);

/// Connected components of the union of all views; component id per tuple.
std::vector<std::uint32_t> union_components(std::span<const CliquePartition> views);

// Layout (little-endian): "IRGV" | u16 version | u64 N | u64 dataset
// fingerprint | f64 delta_trueskill | f64 delta_arrival | u32 view count |
// per view { u8 strategy | u8 semantics | u32[N] clique_of }
inline constexpr std::uint16_t kViewsVersion = 1;

void write_views(const ViewSet& views, const std::filesystem::path& path);
ViewSet read_views(const std::filesystem::path& path);

}  // namespace irgcn
