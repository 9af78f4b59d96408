#include "irgcn/boost.hpp"

#include "irgcn/parallel.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>

namespace irgcn {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
  }
}

std::uint64_t parse_uint(const std::string& key, const std::string& v) {
  std::uint64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size() || v.empty()) {
    throw ConfigError("config key '" + key + "': expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

double clipped_margin(double y, double h) { return std::clamp(y * h, -kScoreClip, kScoreClip); }

// d/dh exp(-clip(y h)), zero where the clip is active
double exp_loss_grad(double y, double h) {
  const double m = y * h;
  if (m > kScoreClip || m < -kScoreClip) return 0.0;
  return -y * std::exp(-m);
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

}  // namespace

std::vector<RelationSpec> parse_relations(std::string_view text) {
  std::vector<RelationSpec> out;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto comma = text.find(',', pos);
    if (comma == std::string_view::npos) comma = text.size();
    const auto item = trim(text.substr(pos, comma - pos));
    pos = comma + 1;
    if (item.empty()) throw ConfigError("relations: empty item in '" + std::string(text) + "'");
    RelationSpec spec;
    spec.name = item;
    std::size_t p = 0;
    while (p <= item.size()) {
      auto plus = item.find('+', p);
      if (plus == std::string::npos) plus = item.size();
      const auto atom = trim(std::string_view(item).substr(p, plus - p));
      p = plus + 1;
      auto add = [&](Strategy s) {
        if (std::find(spec.strategies.begin(), spec.strategies.end(), s) != spec.strategies.end()) {
          throw ConfigError("relations: strategy repeated in '" + item + "'");
        }
        spec.strategies.push_back(s);
      };
      if (atom == "C") add(Strategy::contrastive);
      else if (atom == "R") add(Strategy::reflexive);
      else if (atom == "TS") add(Strategy::trueskill);
      else if (atom == "AS") add(Strategy::arrival);
      else if (atom == "S") {
        add(Strategy::trueskill);
        add(Strategy::arrival);
      } else {
        throw ConfigError("relations: unknown relation atom '" + atom + "'");
      }
    }
    const auto sem = semantics_of(spec.strategies.front());
    for (auto s : spec.strategies) {
      if (semantics_of(s) != sem) throw ConfigError("relations: '" + item + "' mixes semantics");
    }
    for (const auto& prev : out) {
      for (auto s : spec.strategies) {
        if (std::find(prev.strategies.begin(), prev.strategies.end(), s) != prev.strategies.end()) {
          throw ConfigError("relations: strategy listed in two relation types");
        }
      }
    }
    out.push_back(std::move(spec));
  }
  return out;
}

std::string format_relations(std::span<const RelationSpec> relations) {
  std::string out;
  for (const auto& r : relations) {
    if (!out.empty()) out += ',';
    out += r.name;
  }
  return out;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  os << "epochs = " << epochs << '\n'
     << "lr = " << format_double(lr) << '\n'
     << "gamma1 = " << format_double(gamma1) << '\n'
     << "gamma2 = " << format_double(gamma2) << '\n'
     << "dropout = " << format_double(dropout) << '\n'
     << "dropout_layers = " << dropout_layers << '\n'
     << "delta_trueskill = " << format_double(delta_trueskill) << '\n'
     << "delta_arrival = " << format_double(delta_arrival) << '\n'
     << "seed = " << seed << '\n'
     << "relations = " << format_relations(relations) << '\n'
     << "lambda_max = " << format_double(lambda_max) << '\n'
     << "anneal_tau = " << format_double(anneal_tau) << '\n'
     << "batch_tuples = " << batch_tuples << '\n'
     << "track_validation = " << (track_validation ? "true" : "false") << '\n';
  return os.str();
}

std::uint64_t TrainConfig::hash() const { return fnv1a(to_text()); }

double TrainConfig::effective_tau() const {
  if (anneal_tau > 0.0) return anneal_tau;
  return std::max(1.0, static_cast<double>(epochs) / 5.0);
}

void TrainConfig::validate() const {
  if (!(lr > 0.0)) throw ConfigError("lr must be positive");
  if (!(gamma1 >= 0.0) || !(gamma2 >= 0.0)) throw ConfigError("gamma1 and gamma2 must be non-negative");
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (dropout_layers >= kHiddenDims.size()) {
    throw ConfigError("dropout_layers must be below the layer count " + std::to_string(kHiddenDims.size()));
  }
  if (!(delta_arrival > 0.0 && delta_arrival < 1.0)) throw ConfigError("delta_arrival must lie in (0, 1)");
  if (!(delta_trueskill >= 0.0)) throw ConfigError("delta_trueskill must be non-negative");
  if (!(lambda_max >= 0.0)) throw ConfigError("lambda_max must be non-negative");
  if (!(anneal_tau >= 0.0)) throw ConfigError("anneal_tau must be non-negative");
  if (relations.empty()) throw ConfigError("relations must name at least one relation type");
}

TrainConfig parse_config(std::string_view text) {
  TrainConfig cfg;
  std::istringstream in{std::string(text)};
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
    }
    const auto key = trim(std::string_view(t).substr(0, eq));
    const auto value = trim(std::string_view(t).substr(eq + 1));
    if (key == "epochs") cfg.epochs = parse_uint(key, value);
    else if (key == "lr") cfg.lr = parse_double(key, value);
    else if (key == "gamma1") cfg.gamma1 = parse_double(key, value);
    else if (key == "gamma2") cfg.gamma2 = parse_double(key, value);
    else if (key == "dropout") cfg.dropout = parse_double(key, value);
    else if (key == "dropout_layers") cfg.dropout_layers = parse_uint(key, value);
    else if (key == "delta_trueskill") cfg.delta_trueskill = parse_double(key, value);
    else if (key == "delta_arrival") cfg.delta_arrival = parse_double(key, value);
    else if (key == "seed") cfg.seed = parse_uint(key, value);
    else if (key == "relations") cfg.relations = parse_relations(value);
    else if (key == "lambda_max") cfg.lambda_max = parse_double(key, value);
    else if (key == "anneal_tau") cfg.anneal_tau = parse_double(key, value);
    else if (key == "batch_tuples") cfg.batch_tuples = parse_uint(key, value);
    else if (key == "track_validation") cfg.track_validation = parse_bool(key, value);
    else throw ConfigError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

GcnStack RelationType::stack(std::size_t i) const {
  return {spec.strategies.at(i), semantics, layers, &scores.at(i)};
}

IrgcnModel::IrgcnModel(const TrainConfig& cfg, Index dim) : config(cfg), input_dim(dim) {
  cfg.validate();
  Rng rng = Rng(cfg.seed).derive(0x1417);
  for (const auto& spec : cfg.relations) {
    RelationType r;
    r.spec = spec;
    r.semantics = semantics_of(spec.strategies.front());
    r.layers = init_layers(dim, kHiddenDims, rng);
    for (std::size_t i = 0; i < spec.strategies.size(); ++i) {
      r.scores.push_back(init_glorot(kHiddenDims.back(), 1, rng));
    }
    relations.push_back(std::move(r));
  }
}

std::vector<double> IrgcnModel::alphas() const {
  std::vector<double> out;
  for (const auto& r : relations) out.push_back(r.alpha);
  return out;
}

void IrgcnModel::set_alphas(std::span<const double> a) {
  if (a.size() != relations.size()) throw DimensionError("set_alphas: count mismatch");
  for (std::size_t r = 0; r < a.size(); ++r) relations[r].alpha = a[r];
  alphas_frozen = true;
}

std::size_t IrgcnModel::strategy_count() const {
  std::size_t n = 0;
  for (const auto& r : relations) n += r.spec.strategies.size();
  return n;
}

bool operator==(const IrgcnModel& a, const IrgcnModel& b) {
  if (a.relations.size() != b.relations.size() || a.input_dim != b.input_dim ||
      a.alphas_frozen != b.alphas_frozen || !(a.config == b.config)) {
    return false;
  }
  for (std::size_t r = 0; r < a.relations.size(); ++r) {
    const auto& x = a.relations[r];
    const auto& y = b.relations[r];
    if (!(x.spec == y.spec) || x.semantics != y.semantics || x.alpha != y.alpha ||
        x.layers.size() != y.layers.size() || x.scores.size() != y.scores.size()) {
      return false;
    }
    for (std::size_t k = 0; k < x.layers.size(); ++k)
      if (x.layers[k] != y.layers[k]) return false;
    for (std::size_t k = 0; k < x.scores.size(); ++k)
      if (x.scores[k] != y.scores[k]) return false;
  }
  return true;
}

Supervision Supervision::from_dataset(const Dataset& ds, std::span<const std::size_t> rows) {
  Supervision s;
  s.rows.assign(rows.begin(), rows.end());
  s.y.reserve(rows.size());
  for (auto i : rows) s.y.push_back(static_cast<double>(ds.label(i)));
  return s;
}

double compute_alpha(std::span<const double> y, std::span<const double> h, std::span<const double> e) {
  if (y.size() != h.size() || y.size() != e.size()) throw DimensionError("compute_alpha: length mismatch");
  double correct = 0.0;
  double incorrect = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) {
    const double m = y[k] * h[k];
    if (m > 0.0) correct += e[k];
    else if (m < 0.0) incorrect += e[k];
  }
  return 0.5 * std::log((correct + kAlphaEpsilon) / (incorrect + kAlphaEpsilon));
}

BoostOutput boosted_forward(const IrgcnModel& model, const Matrix& x, const ViewSet& views, Mode mode,
                            const Rng& rng, const Supervision* sup) {
  if (model.relations.empty()) throw ConfigError("boosted_forward: model has no relation types");
  if (!sup && !model.alphas_frozen) {
    throw std::logic_error("boosted_forward: no supervision and no frozen boosting weights");
  }
  if (x.cols() != model.input_dim) {
    throw DimensionError("boosted_forward: features " + shape_string(x) + " but model expects " +
                         std::to_string(model.input_dim) + " columns");
  }
  BoostOutput out;
  out.boosted = Matrix::Zero(x.rows(), 1);
  const auto& cfg = model.config;
  for (std::size_t r = 0; r < model.relations.size(); ++r) {
    const auto& rel = model.relations[r];
    std::vector<GcnStack> stacks;
    std::vector<const CliquePartition*> parts;
    std::vector<Rng> rngs;
    for (std::size_t i = 0; i < rel.spec.strategies.size(); ++i) {
      stacks.push_back(rel.stack(i));
      parts.push_back(&views.get(rel.spec.strategies[i]));
      rngs.push_back(rng.derive(r * 16 + i));
    }
    out.relations.push_back(relation_score(stacks, x, parts, mode, Dropout{cfg.dropout, cfg.dropout_layers}, rngs));
    const Matrix& h_r = out.relations.back().scores;

    double alpha = rel.alpha;
    if (sup) {
      const auto n = sup->rows.size();
      std::vector<double> e(n);
      std::vector<double> h(n);
      for (std::size_t k = 0; k < n; ++k) {
        const auto row = static_cast<Index>(sup->rows[k]);
        const double m = sup->y[k] * out.boosted(row, 0);
        if (std::abs(m) > kScoreClip) ++out.clipped;
        e[k] = std::exp(-clipped_margin(sup->y[k], out.boosted(row, 0)));
        h[k] = h_r(row, 0);
      }
      alpha = compute_alpha(sup->y, h, e);
    }
    out.alphas.push_back(alpha);
    out.boosted += alpha * h_r;
  }
  return out;
}

double anneal_lambda(double t, double lambda_max, double tau) {
  if (t <= 0.0) return 0.0;
  return lambda_max * (1.0 - std::exp(-t / tau));
}

namespace {

double frobenius_on_rows(const Matrix& a, const Matrix& b, std::span<const std::size_t> rows) {
  double s = 0.0;
  for (auto r : rows) s += (a.row(static_cast<Index>(r)) - b.row(static_cast<Index>(r))).squaredNorm();
  return std::sqrt(s);
}

}  // namespace

LossBreakdown total_loss(const IrgcnModel& model, const BoostOutput& out, const Supervision& sup,
                         double lambda) {
  LossBreakdown loss;
  loss.lambda = lambda;
  const auto& cfg = model.config;
  for (std::size_t k = 0; k < sup.rows.size(); ++k) {
    loss.boosted += std::exp(-clipped_margin(sup.y[k], out.boosted(static_cast<Index>(sup.rows[k]), 0)));
  }
  for (const auto& rel : model.relations) {
    for (const auto& w : rel.layers) {
      loss.l1 += cfg.gamma1 * w.cwiseAbs().sum();
      loss.l2 += cfg.gamma2 * w.squaredNorm();
    }
  }
  double relation_sum = 0.0;
  for (std::size_t r = 0; r < model.relations.size(); ++r) {
    const auto& ro = out.relations.at(r);
    double rel_loss = 0.0;
    for (std::size_t k = 0; k < sup.rows.size(); ++k) {
      rel_loss += std::exp(-clipped_margin(sup.y[k], ro.scores(static_cast<Index>(sup.rows[k]), 0)));
    }
    double align = 0.0;
    for (std::size_t i = 0; i < ro.embeddings.size(); ++i) {
      for (std::size_t j = i + 1; j < ro.embeddings.size(); ++j) {
        align += frobenius_on_rows(ro.embeddings[i].output(), ro.embeddings[j].output(), sup.rows);
      }
    }
    loss.relation.push_back(rel_loss);
    loss.alignment.push_back(align);
    relation_sum += rel_loss + align;
  }
  loss.total = loss.boosted + loss.l1 + loss.l2 + lambda * relation_sum;
  if (!std::isfinite(loss.total)) {
    std::string which = !std::isfinite(loss.boosted) ? "boosted" :
                        !std::isfinite(loss.l1 + loss.l2) ? "regularization" : "relation";
    throw NumericError("total_loss: non-finite " + which + " loss component");
  }
  return loss;
}

ModelGradient loss_gradient(const IrgcnModel& model, const BoostOutput& out, const Supervision& sup,
                            const ViewSet& views, double lambda) {
  const Index n = out.boosted.rows();
  const auto& cfg = model.config;

  Vector d_boosted = Vector::Zero(n);
  for (std::size_t k = 0; k < sup.rows.size(); ++k) {
    const auto row = static_cast<Index>(sup.rows[k]);
    d_boosted[row] += exp_loss_grad(sup.y[k], out.boosted(row, 0));
  }

  ModelGradient grad(model.relations.size());
  parallel_for(model.relations.size(), [&](std::size_t r) {
    const auto& rel = model.relations[r];
    const auto& ro = out.relations[r];
    Matrix d_h = out.alphas[r] * d_boosted;
    for (std::size_t k = 0; k < sup.rows.size(); ++k) {
      const auto row = static_cast<Index>(sup.rows[k]);
      d_h(row, 0) += lambda * exp_loss_grad(sup.y[k], ro.scores(row, 0));
    }

    const auto count = ro.embeddings.size();
    std::vector<Matrix> d_emb(count);
    for (std::size_t i = 0; i < count; ++i) d_emb[i] = Matrix::Zero(n, ro.embeddings[i].output().cols());
    if (lambda != 0.0) {
      for (std::size_t i = 0; i < count; ++i) {
        for (std::size_t j = i + 1; j < count; ++j) {
          const auto& zi = ro.embeddings[i].output();
          const auto& zj = ro.embeddings[j].output();
          const double norm = frobenius_on_rows(zi, zj, sup.rows);
          if (norm <= 0.0) continue;
          for (auto row : sup.rows) {
            const auto rr = static_cast<Index>(row);
            const auto diff = (zi.row(rr) - zj.row(rr)) * (lambda / norm);
            d_emb[i].row(rr) += diff;
            d_emb[j].row(rr) -= diff;
          }
        }
      }
    }

    RelationGradient& g = grad[r];
    g.layers.reserve(rel.layers.size());
    for (const auto& w : rel.layers) {
      g.layers.push_back(cfg.gamma1 * w.unaryExpr([](double v) { return sign(v); }) + 2.0 * cfg.gamma2 * w);
    }
    for (std::size_t i = 0; i < count; ++i) {
      const auto stack = rel.stack(i);
      const auto sg = gcn_backward(stack, ro.embeddings[i], views.get(stack.strategy), d_h, &d_emb[i]);
      for (std::size_t k = 0; k < sg.layers.size(); ++k) g.layers[k] += sg.layers[k];
      g.scores.push_back(sg.score);
    }
  });
  return grad;
}

namespace {

double sign_accuracy(const Matrix& h, const Supervision& sup) {
  if (sup.rows.empty()) return 0.0;
  std::size_t ok = 0;
  for (std::size_t k = 0; k < sup.rows.size(); ++k) {
    if (sup.y[k] * h(static_cast<Index>(sup.rows[k]), 0) > 0.0) ++ok;
  }
  return static_cast<double>(ok) / static_cast<double>(sup.rows.size());
}

struct Batch {
  std::vector<std::size_t> rows;  // global tuple indices, ascending
  Matrix x;
  ViewSet views;
  Supervision sup;  // local row indices
};

Batch make_batch(const Dataset& ds, const ViewSet& views, std::vector<std::size_t> rows,
                 const std::vector<std::uint8_t>& labeled_mask) {
  std::sort(rows.begin(), rows.end());
  Batch b;
  b.x.resize(static_cast<Index>(rows.size()), ds.feature_dim());
  for (std::size_t k = 0; k < rows.size(); ++k) {
    b.x.row(static_cast<Index>(k)) = ds.features().row(static_cast<Index>(rows[k]));
    if (labeled_mask[rows[k]]) {
      b.sup.rows.push_back(k);
      b.sup.y.push_back(static_cast<double>(ds.label(rows[k])));
    }
  }
  for (std::size_t s = 0; s < views.views.size(); ++s) b.views.views[s] = views.views[s].restrict_to(rows);
  b.views.delta_trueskill = views.delta_trueskill;
  b.views.delta_arrival = views.delta_arrival;
  b.rows = std::move(rows);
  return b;
}

}  // namespace

TrainResult train(IrgcnModel model, const Dataset& ds, const ViewSet& views, const TrainConfig& config,
                  const std::vector<std::size_t>* labeled) {
  config.validate();
  TrainResult result;
  if (config.epochs == 0) {
    result.model = std::move(model);
    return result;
  }
  if (views.size() != ds.size()) throw DimensionError("train: views cover a different tuple count");
  model.config = config;

  const auto rows = labeled ? *labeled : ds.train_indices();
  const Supervision full_sup = Supervision::from_dataset(ds, rows);
  std::vector<std::uint8_t> labeled_mask(ds.size(), 0);
  for (auto r : rows) labeled_mask.at(r) = 1;
  const auto test_rows = ds.test_indices();

  AdamParams adam;
  adam.lr = config.lr;
  std::vector<std::vector<AdamState>> layer_states;
  std::vector<std::vector<AdamState>> score_states;
  for (const auto& rel : model.relations) {
    auto& ls = layer_states.emplace_back();
    for (const auto& w : rel.layers) ls.emplace_back(w.rows(), w.cols(), adam);
    auto& ss = score_states.emplace_back();
    for (const auto& w : rel.scores) ss.emplace_back(w.rows(), w.cols(), adam);
  }

  // Mini-batches are unions of connected components of all views, so each
  // batch sees complete cliques and the convolution stays exact.
  std::vector<std::vector<std::size_t>> components;
  if (config.batch_tuples > 0) {
    const auto comp = union_components(views.views);
    for (std::size_t i = 0; i < comp.size(); ++i) {
      if (comp[i] >= components.size()) components.resize(comp[i] + 1);
      components[comp[i]].push_back(i);
    }
  }

  const Rng master = Rng(config.seed).derive(0x7a11);
  const double tau = config.effective_tau();
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const double lambda = anneal_lambda(static_cast<double>(epoch), config.lambda_max, tau);
    Rng epoch_rng = master.derive(epoch);
    EpochRecord rec;
    rec.epoch = epoch;

    auto step = [&](const Matrix& x, const ViewSet& v, const Supervision& sup, const Rng& rng) {
      try {
        const auto out = boosted_forward(model, x, v, Mode::train, rng, &sup);
        const auto loss = total_loss(model, out, sup, lambda);
        const auto grad = loss_gradient(model, out, sup, v, lambda);
        // all or nothing: a partial update would leave the model inconsistent
        for (const auto& g : grad) {
          for (const auto* set : {&g.layers, &g.scores}) {
            for (const auto& m : *set) {
              if (!all_finite(m)) throw NumericError("non-finite gradient");
            }
          }
        }
        for (std::size_t r = 0; r < model.relations.size(); ++r) {
          auto& rel = model.relations[r];
          for (std::size_t k = 0; k < rel.layers.size(); ++k) adam_step(rel.layers[k], grad[r].layers[k], layer_states[r][k]);
          for (std::size_t i = 0; i < rel.scores.size(); ++i) adam_step(rel.scores[i], grad[r].scores[i], score_states[r][i]);
        }
        return std::pair(out, loss);
      } catch (const NumericError& e) {
        throw DivergenceError("training diverged at epoch " + std::to_string(epoch) + ": " + e.what());
      }
    };

    try {
      if (components.empty()) {
        auto [out, loss] = step(ds.features(), views, full_sup, epoch_rng);
        rec.loss = loss;
        rec.alphas = out.alphas;
        rec.clipped = out.clipped;
        rec.train_accuracy = sign_accuracy(out.boosted, full_sup);
      } else {
        std::vector<std::size_t> order(components.size());
        std::iota(order.begin(), order.end(), 0);
        Rng shuffle_rng = epoch_rng.derive(0xba7c);
        shuffle(order.begin(), order.end(), shuffle_rng);
        std::size_t correct = 0;
        std::size_t seen = 0;
        std::size_t batch_id = 0;
        std::vector<std::size_t> pending;
        auto flush = [&] {
          if (pending.empty()) return;
          auto batch = make_batch(ds, views, std::move(pending), labeled_mask);
          pending.clear();
          if (batch.sup.rows.empty()) return;
          auto [out, loss] = step(batch.x, batch.views, batch.sup, epoch_rng.derive(1000 + batch_id++));
          if (rec.loss.relation.empty()) {
            rec.loss = loss;
          } else {
            rec.loss.boosted += loss.boosted;
            rec.loss.total += loss.total - loss.l1 - loss.l2;
            for (std::size_t r = 0; r < loss.relation.size(); ++r) {
              rec.loss.relation[r] += loss.relation[r];
              rec.loss.alignment[r] += loss.alignment[r];
            }
          }
          rec.alphas = out.alphas;
          rec.clipped += out.clipped;
          correct += static_cast<std::size_t>(std::llround(sign_accuracy(out.boosted, batch.sup) *
                                                           static_cast<double>(batch.sup.rows.size())));
          seen += batch.sup.rows.size();
        };
        for (auto c : order) {
          pending.insert(pending.end(), components[c].begin(), components[c].end());
          if (pending.size() >= config.batch_tuples) flush();
        }
        flush();
        rec.train_accuracy = seen ? static_cast<double>(correct) / static_cast<double>(seen) : 0.0;
      }
    } catch (const DivergenceError& e) {
      result.diverged = true;
      result.message = e.what();
      break;
    }

    if (config.track_validation && !test_rows.empty()) {
      const auto eval = boosted_forward(model, ds.features(), views, Mode::eval, epoch_rng, &full_sup);
      const auto labels = ds.labels_for_metrics();
      std::size_t ok = 0;
      for (auto t : test_rows) {
        if (labels[t] * eval.boosted(static_cast<Index>(t), 0) > 0.0) ++ok;
      }
      rec.val_accuracy = static_cast<double>(ok) / static_cast<double>(test_rows.size());
    }
    result.history.push_back(std::move(rec));
  }

  std::size_t clipped = 0;
  for (const auto& rec : result.history) clipped += rec.clipped;
  if (clipped) {
    std::cerr << "warning: " << clipped << " boosted margins clipped to +-" << kScoreClip
              << " before exponentiation over the run\n";
  }
  const auto final_pass = boosted_forward(model, ds.features(), views, Mode::eval, master, &full_sup);
  model.set_alphas(final_pass.alphas);
  result.model = std::move(model);
  return result;
}

void write_history_csv(const TrainResult& result, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  const auto& m = result.model;
  char hash[17];
  std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(m.config.hash()));
  out << "# config_hash=" << hash << " seed=" << m.config.seed << '\n';
  out << "epoch,total_loss,boosted_loss,l1_loss,l2_loss,lambda";
  for (const auto& r : m.relations) out << ",relation_loss_" << r.spec.name << ",alignment_loss_" << r.spec.name;
  for (const auto& r : m.relations) out << ",alpha_" << r.spec.name;
  out << ",train_acc,val_acc\n";
  for (const auto& rec : result.history) {
    out << rec.epoch << ',' << format_double(rec.loss.total) << ',' << format_double(rec.loss.boosted) << ','
        << format_double(rec.loss.l1) << ',' << format_double(rec.loss.l2) << ',' << format_double(rec.loss.lambda);
    for (std::size_t r = 0; r < rec.loss.relation.size(); ++r) {
      out << ',' << format_double(rec.loss.relation[r]) << ',' << format_double(rec.loss.alignment[r]);
    }
    for (auto a : rec.alphas) out << ',' << format_double(a);
    out << ',' << format_double(rec.train_accuracy) << ',' << format_double(rec.val_accuracy) << '\n';
  }
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace irgcn
