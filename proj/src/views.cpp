#include "irgcn/views.hpp"

#include "irgcn/binio.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <unordered_map>

namespace irgcn {

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::reflexive: return "reflexive";
    case Strategy::contrastive: return "contrastive";
    case Strategy::trueskill: return "trueskill";
    case Strategy::arrival: return "arrival";
  }
  return "?";
}

std::string_view to_string(Semantics s) {
  switch (s) {
    case Semantics::reflexive: return "reflexive";
    case Semantics::contrastive: return "contrastive";
    case Semantics::similar: return "similar";
  }
  return "?";
}

Semantics semantics_of(Strategy s) {
  switch (s) {
    case Strategy::reflexive: return Semantics::reflexive;
    case Strategy::contrastive: return Semantics::contrastive;
    case Strategy::trueskill:
    case Strategy::arrival: return Semantics::similar;
  }
  return Semantics::reflexive;
}

CliquePartition::CliquePartition(Strategy strategy, Semantics semantics,
                                 std::vector<std::uint32_t> clique_of)
    : strategy_(strategy), semantics_(semantics), clique_of_(std::move(clique_of)) {
  std::unordered_map<std::uint32_t, std::uint32_t> relabel;
  for (std::size_t i = 0; i < clique_of_.size(); ++i) {
    auto [it, inserted] = relabel.try_emplace(clique_of_[i], static_cast<std::uint32_t>(members_.size()));
    if (inserted) members_.emplace_back();
    clique_of_[i] = it->second;
    members_[it->second].push_back(static_cast<std::uint32_t>(i));
  }
}

std::vector<std::pair<std::size_t, std::size_t>> CliquePartition::size_histogram() const {
  std::map<std::size_t, std::size_t> hist;
  for (const auto& m : members_) ++hist[m.size()];
  return {hist.begin(), hist.end()};
}

CliquePartition CliquePartition::restrict_to(std::span<const std::size_t> tuples) const {
  std::vector<std::uint32_t> sub(tuples.size());
  for (std::size_t k = 0; k < tuples.size(); ++k) sub[k] = clique_of_.at(tuples[k]);
  CliquePartition out(strategy_, semantics_, std::move(sub));
  for (std::size_t c = 0; c < out.clique_count(); ++c) {
    const auto original = clique_of_[tuples[out.members(c).front()]];
    if (out.members(c).size() != members_[original].size()) {
      throw std::invalid_argument("restrict_to: tuple subset splits a clique");
    }
  }
  return out;
}

CliquePartition induce_reflexive(const Dataset& ds) {
  std::vector<std::uint32_t> ids(ds.size());
  std::iota(ids.begin(), ids.end(), 0u);
  return {Strategy::reflexive, Semantics::reflexive, std::move(ids)};
}

CliquePartition induce_contrastive(const Dataset& ds) {
  std::vector<std::uint32_t> ids(ds.size());
  const auto& qs = ds.questions();
  for (std::size_t k = 0; k < qs.size(); ++k) {
    for (std::size_t i = qs[k].begin; i < qs[k].end; ++i) ids[i] = static_cast<std::uint32_t>(k);
  }
  return {Strategy::contrastive, Semantics::contrastive, std::move(ids)};
}

namespace {

// value minus the mean of the other entries of its question
std::vector<double> competitor_contrast(const Dataset& ds, const std::vector<double>& value) {
  std::vector<double> out(ds.size(), 0.0);
  for (const auto& q : ds.questions()) {
    const auto n = q.size();
    if (n < 2) continue;
    double sum = 0.0;
    for (std::size_t i = q.begin; i < q.end; ++i) sum += value[i];
    for (std::size_t i = q.begin; i < q.end; ++i) {
      out[i] = value[i] - (sum - value[i]) / static_cast<double>(n - 1);
    }
  }
  return out;
}

}  // namespace

std::vector<double> skill_margins(const Dataset& ds, const SkillTable& skills) {
  std::vector<double> mu(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) mu[i] = skills.skill(ds.tuples()[i].answer_author);
  return competitor_contrast(ds, mu);
}

CliquePartition induce_trueskill(const Dataset& ds, const SkillTable& skills, double delta) {
  const auto margin = skill_margins(ds, skills);
  std::map<std::pair<std::int64_t, int>, std::uint32_t> class_id;
  std::vector<std::uint32_t> ids(ds.size());
  std::uint32_t next = 0;
  for (std::size_t i = 0; i < ds.size(); ++i) {
    const int polarity = margin[i] >= delta ? 1 : (margin[i] <= -delta ? -1 : 0);
    if (polarity == 0) {
      ids[i] = next++;
      continue;
    }
    auto [it, inserted] = class_id.try_emplace({ds.tuples()[i].answer_author, polarity}, next);
    if (inserted) ++next;
    ids[i] = it->second;
  }
  return {Strategy::trueskill, Semantics::similar, std::move(ids)};
}

std::vector<double> relative_arrival(const Dataset& ds) {
  std::vector<double> r(ds.size(), 0.0);
  const auto& t = ds.tuples();
  for (const auto& q : ds.questions()) {
    const auto n = q.size();
    if (n < 2) continue;
    const auto first = t[q.begin].answer_ts;
    const auto last = t[q.end - 1].answer_ts;
    for (std::size_t i = q.begin; i < q.end; ++i) {
      r[i] = last > first ? static_cast<double>(t[i].answer_ts - first) / static_cast<double>(last - first)
                          : static_cast<double>(i - q.begin) / static_cast<double>(n - 1);
    }
  }
  return r;
}

std::vector<double> arrival_contrast(const Dataset& ds) {
  return competitor_contrast(ds, relative_arrival(ds));
}

CliquePartition induce_arrival(const Dataset& ds, double delta) {
  if (!(delta > 0.0 && delta < 1.0)) throw ConfigError("arrival delta must lie in (0, 1)");
  const double width = 1.0 - delta;
  const auto c = arrival_contrast(ds);
  std::vector<std::uint32_t> ids(ds.size());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    ids[i] = static_cast<std::uint32_t>(std::floor((c[i] + 1.0) / width));
  }
  return {Strategy::arrival, Semantics::similar, std::move(ids)};
}

std::uint64_t dataset_fingerprint(const Dataset& ds) {
  std::uint64_t h = fnv1a("IRGD-meta");
  for (const auto& t : ds.tuples()) {
    for (auto v : {t.question_id, t.answer_id, t.answer_author, t.question_author, t.answer_ts, t.question_ts}) {
      h = fnv1a(std::string_view(reinterpret_cast<const char*>(&v), sizeof v), h);
    }
  }
  return h;
}

ViewSet induce_all(const Dataset& ds, double delta_trueskill, double delta_arrival,
                   const TrueSkillParams& params) {
  const auto train = ds.train_indices();
  const auto skills = fit_trueskill(ds, train, params);
  ViewSet out;
  out.views[static_cast<std::size_t>(Strategy::reflexive)] = induce_reflexive(ds);
  out.views[static_cast<std::size_t>(Strategy::contrastive)] = induce_contrastive(ds);
  out.views[static_cast<std::size_t>(Strategy::trueskill)] = induce_trueskill(ds, skills, delta_trueskill);
  out.views[static_cast<std::size_t>(Strategy::arrival)] = induce_arrival(ds, delta_arrival);
  out.delta_trueskill = delta_trueskill;
  out.delta_arrival = delta_arrival;
  out.dataset_fingerprint = dataset_fingerprint(ds);
  return out;
}

std::vector<std::uint32_t> union_components(std::span<const CliquePartition> views) {
  if (views.empty()) return {};
  const auto n = views.front().size();
  std::vector<std::uint32_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0u);
  auto find = [&](std::uint32_t x) {
    while (parent[x] != x) {
      parent[x] = parent[parent[x]];
      x = parent[x];
    }
    return x;
  };
  for (const auto& v : views) {
    if (v.size() != n) throw DimensionError("union_components: views differ in size");
    for (const auto& m : v.cliques()) {
      for (std::size_t k = 1; k < m.size(); ++k) {
        const auto a = find(m[0]);
        const auto b = find(m[k]);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  std::vector<std::uint32_t> comp(n);
  for (std::uint32_t i = 0; i < n; ++i) comp[i] = find(i);
  return CliquePartition(Strategy::reflexive, Semantics::reflexive, std::move(comp)).assignment();
}

void write_views(const ViewSet& views, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out.write("IRGV", 4);
  binio::put<std::uint16_t>(out, kViewsVersion);
  binio::put<std::uint64_t>(out, views.size());
  binio::put<std::uint64_t>(out, views.dataset_fingerprint);
  binio::put<double>(out, views.delta_trueskill);
  binio::put<double>(out, views.delta_arrival);
  binio::put<std::uint32_t>(out, static_cast<std::uint32_t>(views.views.size()));
  for (const auto& v : views.views) {
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(v.strategy()));
    binio::put<std::uint8_t>(out, static_cast<std::uint8_t>(v.semantics()));
    for (auto c : v.assignment()) binio::put<std::uint32_t>(out, c);
  }
  if (!out) throw IoError("write failed: " + path.string());
}

ViewSet read_views(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open views " + path.string());
  binio::expect_magic(in, "IRGV", "views " + path.string());
  const auto version = binio::get<std::uint16_t>(in);
  if (version != kViewsVersion) {
    throw FormatError("views " + path.string() + ": unsupported format version " + std::to_string(version));
  }
  ViewSet out;
  const auto n = binio::get<std::uint64_t>(in);
  if (n > (1u << 28)) throw FormatError("views header out of range");
  out.dataset_fingerprint = binio::get<std::uint64_t>(in);
  out.delta_trueskill = binio::get<double>(in);
  out.delta_arrival = binio::get<double>(in);
  const auto count = binio::get<std::uint32_t>(in);
  if (count != out.views.size()) throw FormatError("views: expected 4 views");
  std::array<bool, 4> seen{};
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto strategy = binio::get<std::uint8_t>(in);
    const auto semantics = binio::get<std::uint8_t>(in);
    if (strategy > 3 || semantics > 2 || seen[strategy]) throw FormatError("views: bad strategy tag");
    if (static_cast<Semantics>(semantics) != semantics_of(static_cast<Strategy>(strategy))) {
      throw FormatError("views: semantics tag does not match strategy");
    }
    seen[strategy] = true;
    std::vector<std::uint32_t> ids(n);
    for (auto& c : ids) c = binio::get<std::uint32_t>(in);
    out.views[strategy] = CliquePartition(static_cast<Strategy>(strategy), static_cast<Semantics>(semantics),
                                          std::move(ids));
  }
  return out;
}

}  // namespace irgcn
