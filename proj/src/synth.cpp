#include "irgcn/synth.hpp"

#include <algorithm>
#include <cmath>

namespace irgcn {

Preset parse_preset(std::string_view name) {
  if (name == "contrastive") return Preset::contrastive;
  if (name == "mixed") return Preset::mixed;
  throw ConfigError("unknown synthetic preset '" + std::string(name) + "'");
}

namespace {

// answers per question: 2 (60%), 3 (20%), 4 (10%), 5 (10%)
std::size_t draw_answer_count(Rng& rng) {
  const double u = rng.uniform();
  if (u < 0.6) return 2;
  if (u < 0.8) return 3;
  if (u < 0.9) return 4;
  return 5;
}

constexpr double kOffsetSd = 3.0;
constexpr double kSkillWeight = 1.0;
constexpr double kEarlinessWeight = 0.8;
constexpr double kSkillProxySd = 1.5;
constexpr std::int64_t kEpochMs = 1'500'000'000'000;

}  // namespace

Dataset synthesize(Preset preset, std::size_t questions, std::uint64_t seed, double test_fraction) {
  if (questions < 5) throw ConfigError("synthesize: need at least 5 questions");
  Rng rng = Rng(seed).derive(static_cast<std::uint64_t>(preset) + 0x5e7);
  const bool mixed = preset == Preset::mixed;

  const std::size_t pool = mixed ? std::max<std::size_t>(20, questions / 10) : questions * 10;
  std::vector<double> skill(pool);
  for (auto& s : skill) s = rng.normal();

  std::vector<std::vector<double>> rows;
  std::vector<std::int8_t> labels;
  std::vector<TupleMeta> tuples;
  std::int64_t next_id = 1;

  for (std::size_t k = 0; k < questions; ++k) {
    const auto n = draw_answer_count(rng);
    const std::int64_t qid = next_id++;
    const std::int64_t q_ts = kEpochMs + static_cast<std::int64_t>(k) * 3'600'000;
    const double offset = rng.normal(0.0, kOffsetSd);

    // answer times: increasing exponential gaps after the question
    std::vector<std::int64_t> ts(n);
    std::int64_t t = q_ts;
    for (auto& v : ts) {
      t += 1000 + static_cast<std::int64_t>(-std::log(1.0 - rng.uniform()) * 1.8e6);
      v = t;
    }

    std::vector<std::size_t> authors(n);
    for (auto& a : authors) {
      do {
        a = static_cast<std::size_t>(rng.below(pool));
      } while (std::count(authors.data(), &a, a) > 0);
    }

    // mixed: only the idiosyncratic part of quality is visible in column 0
    std::vector<double> own(n);
    std::vector<double> quality(n);
    for (std::size_t i = 0; i < n; ++i) {
      own[i] = rng.normal();
      quality[i] = own[i];
      if (mixed) {
        const double earliness = 1.0 - static_cast<double>(i) / static_cast<double>(n - 1);
        quality[i] += kSkillWeight * skill[authors[i]] + kEarlinessWeight * earliness;
      }
    }
    const auto best = static_cast<std::size_t>(std::max_element(quality.begin(), quality.end()) - quality.begin());

    for (std::size_t i = 0; i < n; ++i) {
      std::vector<double> f(static_cast<std::size_t>(kFeatureCount));
      for (auto& v : f) v = rng.normal();
      f[0] = own[i] + offset + rng.normal(0.0, 0.1);
      if (mixed) {
        f[1] = skill[authors[i]] + rng.normal(0.0, kSkillProxySd);
        f[2] = std::log1p(static_cast<double>(ts[i] - q_ts) / 1000.0);
        f[3] = static_cast<double>(i + 1);
      }
      rows.push_back(std::move(f));
      labels.push_back(i == best ? 1 : -1);
      TupleMeta m;
      m.question_id = qid;
      m.answer_id = next_id++;
      m.answer_author = static_cast<std::int64_t>(authors[i]) + 1;
      m.question_author = -static_cast<std::int64_t>(k) - 1;
      m.answer_ts = ts[i];
      m.question_ts = q_ts;
      tuples.push_back(m);
    }
  }

  Matrix x(static_cast<Index>(rows.size()), kFeatureCount);
  for (std::size_t i = 0; i < rows.size(); ++i)
    for (Index c = 0; c < kFeatureCount; ++c) x(static_cast<Index>(i), c) = rows[i][static_cast<std::size_t>(c)];

  Dataset ds(std::move(x), std::move(labels), std::move(tuples));
  Rng split_rng = Rng(seed).derive(0x5911);
  standardize_and_split(ds, test_fraction, split_rng);
  return ds;
}

}  // namespace irgcn
