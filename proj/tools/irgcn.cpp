#include "irgcn/boost.hpp"
#include "irgcn/eval.hpp"
#include "irgcn/ingest.hpp"
#include "irgcn/parallel.hpp"
#include "irgcn/synth.hpp"
#include "irgcn/views.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

using namespace irgcn;
namespace fs = std::filesystem;

constexpr const char* kToolVersion = "irgcn 1.0.0";

struct StageError : std::runtime_error {
  StageError(std::string stage, const std::string& what) : std::runtime_error(what), stage(std::move(stage)) {}
  std::string stage;
};

// Runs f, tagging any failure with the stage name.
template <typename F>
auto stage(const std::string& name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::string hex(std::uint64_t v) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t file_hash(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return fnv1a(ss.str());
}

struct Manifest {
  std::string command;
  std::vector<fs::path> inputs;
  std::vector<fs::path> outputs;
  std::optional<fs::path> config_path;
  std::optional<std::uint64_t> config_hash;
  std::optional<std::uint64_t> seed;

  // Written next to the first output. No timestamps, so reruns are identical.
  void write() const {
    const auto path = fs::path(outputs.front().string() + ".manifest");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("cannot write manifest " + path.string());
    out << "command = " << command << '\n' << "tool_version = " << kToolVersion << '\n';
    if (config_path) out << "config = " << config_path->string() << '\n';
    if (config_hash) out << "config_hash = " << hex(*config_hash) << '\n';
    if (seed) out << "seed = " << *seed << '\n';
    for (const auto& p : inputs) out << "input = " << p.string() << " fnv1a=" << hex(file_hash(p)) << '\n';
    for (const auto& p : outputs) out << "output = " << p.string() << '\n';
  }
};

struct Common {
  std::string data, views, config, out, report;
  std::optional<std::uint64_t> seed;
};

TrainConfig load_run_config(const Common& c) {
  return stage("config", [&] {
    TrainConfig cfg = c.config.empty() ? TrainConfig{} : load_config(c.config);
    if (c.seed) cfg.seed = *c.seed;
    return cfg;
  });
}

Dataset load_data(const std::string& path) {
  return stage("load dataset", [&] { return read_dataset(path); });
}

ViewSet load_matching_views(const std::string& path, const Dataset& ds) {
  return stage("load views", [&] {
    auto v = read_views(path);
    if (v.size() != ds.size() || v.dataset_fingerprint != dataset_fingerprint(ds)) {
      throw FormatError("views " + path + " were induced from a different dataset");
    }
    return v;
  });
}

std::vector<std::string> split_list(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep))
    if (!item.empty()) out.push_back(item);
  return out;
}

void print_histograms(const ViewSet& views) {
  for (auto s : kAllStrategies) {
    const auto& v = views.get(s);
    std::size_t total = 0;
    std::cout << "view " << to_string(s) << " (" << to_string(v.semantics()) << "): " << v.clique_count()
              << " cliques\n  size:count";
    for (const auto& [size, count] : v.size_histogram()) {
      std::cout << ' ' << size << ':' << count;
      total += size * count;
    }
    std::cout << "\n  tuples covered " << total << " of " << v.size() << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  retain_freed_memory();
  CLI::App app{"Induced relational GCN answer selection"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Common c;
  std::string posts, users, preset = "contrastive", subsets = "C;TS+AS;R;C,TS+AS;C,TS+AS,R", rates = "1,0.5,0.1";
  std::string embeddings, history;
  double test_fraction = 0.2;
  std::size_t questions = 1000;
  std::optional<double> delta_ts, delta_as;

  auto* ingest = app.add_subcommand("ingest", "Parse a Posts/Users dump into a dataset");
  ingest->add_option("--posts", posts, "Posts.xml")->required()->check(CLI::ExistingFile);
  ingest->add_option("--users", users, "Users.xml")->required()->check(CLI::ExistingFile);
  ingest->add_option("--out", c.out, "output dataset")->required();
  ingest->add_option("--test-fraction", test_fraction, "held-out question fraction")->check(CLI::Range(0.0, 1.0));
  ingest->add_option("--seed", c.seed, "split seed");

  auto* induce = app.add_subcommand("induce", "Induce the four relational views");
  induce->add_option("--data", c.data)->required()->check(CLI::ExistingFile);
  induce->add_option("--out", c.out)->required();
  induce->add_option("--config", c.config, "take deltas from a training config")->check(CLI::ExistingFile);
  induce->add_option("--delta-trueskill", delta_ts);
  induce->add_option("--delta-arrival", delta_as);

  auto* trn = app.add_subcommand("train", "Train a model");
  trn->add_option("--data", c.data)->required()->check(CLI::ExistingFile);
  trn->add_option("--views", c.views)->required()->check(CLI::ExistingFile);
  trn->add_option("--config", c.config)->check(CLI::ExistingFile);
  trn->add_option("--out", c.out, "checkpoint")->required();
  trn->add_option("--history", history, "per-epoch CSV");
  trn->add_option("--seed", c.seed);

  auto* evl = app.add_subcommand("evaluate", "Evaluate a checkpoint on the test fold");
  evl->add_option("--model", c.config, "checkpoint")->required()->check(CLI::ExistingFile);
  evl->add_option("--data", c.data)->required()->check(CLI::ExistingFile);
  evl->add_option("--views", c.views)->required()->check(CLI::ExistingFile);
  evl->add_option("--report", c.report)->required();
  evl->add_option("--embeddings", embeddings, "export last-layer embeddings");

  auto* abl = app.add_subcommand("ablate", "Train and evaluate relation subsets");
  abl->add_option("--data", c.data)->required()->check(CLI::ExistingFile);
  abl->add_option("--views", c.views)->required()->check(CLI::ExistingFile);
  abl->add_option("--config", c.config)->check(CLI::ExistingFile);
  abl->add_option("--subsets", subsets, "';'-separated relation lists")->capture_default_str();
  abl->add_option("--report", c.report)->required();
  abl->add_option("--seed", c.seed);

  auto* swp = app.add_subcommand("sweep-sparsity", "Retrain at several training label rates");
  swp->add_option("--data", c.data)->required()->check(CLI::ExistingFile);
  swp->add_option("--views", c.views)->required()->check(CLI::ExistingFile);
  swp->add_option("--config", c.config)->check(CLI::ExistingFile);
  swp->add_option("--rates", rates, "comma-separated rates in (0, 1]")->capture_default_str();
  swp->add_option("--report", c.report)->required();
  swp->add_option("--seed", c.seed);

  auto* syn = app.add_subcommand("synth", "Generate a synthetic dataset");
  syn->add_option("--preset", preset)->check(CLI::IsMember({"contrastive", "mixed"}))->capture_default_str();
  syn->add_option("--questions", questions)->check(CLI::Range(5, 10'000'000))->capture_default_str();
  syn->add_option("--seed", c.seed);
  syn->add_option("--out", c.out)->required();
  syn->add_option("--test-fraction", test_fraction)->check(CLI::Range(0.0, 1.0));

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (*ingest) {
      const auto parsed = stage("parse", [&] { return parse_dump(posts, users); });
      std::cout << "parsed " << parsed.posts.size() << " posts, " << parsed.users.size() << " users ("
                << parsed.skipped_posts << " malformed posts, " << parsed.skipped_users << " malformed users, "
                << parsed.ignored_posts << " other posts)\n";
      BuildStats stats;
      auto ds = stage("build", [&] { return build_dataset(parsed.posts, parsed.users, &stats); });
      std::cout << "kept " << stats.questions_kept << " questions, " << ds.size() << " tuples; dropped "
                << stats.dropped_no_accepted << " without accepted answer, " << stats.dropped_missing_accepted
                << " with accepted answer missing, " << stats.dropped_single_answer << " single-answer\n";
      const auto seed = c.seed.value_or(1);
      stage("split", [&] {
        Rng rng = Rng(seed).derive(0x5911);
        standardize_and_split(ds, test_fraction, rng);
      });
      stage("write dataset", [&] { write_dataset(ds, c.out); });
      Manifest{"ingest", {posts, users}, {c.out}, {}, {}, seed}.write();
    } else if (*syn) {
      const auto seed = c.seed.value_or(1);
      auto ds = stage("synth", [&] { return synthesize(parse_preset(preset), questions, seed, test_fraction); });
      stage("write dataset", [&] { write_dataset(ds, c.out); });
      std::cout << "wrote " << ds.size() << " tuples over " << ds.questions().size() << " questions\n";
      Manifest{"synth --preset " + preset + " --questions " + std::to_string(questions), {}, {c.out}, {}, {}, seed}
          .write();
    } else if (*induce) {
      const auto ds = load_data(c.data);
      TrainConfig cfg = load_run_config(c);
      const double dts = delta_ts.value_or(cfg.delta_trueskill);
      const double das = delta_as.value_or(cfg.delta_arrival);
      const auto views = stage("induce", [&] { return induce_all(ds, dts, das); });
      print_histograms(views);
      stage("write views", [&] { write_views(views, c.out); });
      Manifest m{"induce", {c.data}, {c.out}, {}, {}, {}};
      if (!c.config.empty()) m.config_path = c.config;
      m.write();
    } else if (*trn) {
      const auto cfg = load_run_config(c);
      const auto ds = load_data(c.data);
      const auto views = load_matching_views(c.views, ds);
      const auto result = stage("train", [&] { return train(IrgcnModel(cfg, ds.feature_dim()), ds, views, cfg); });
      if (result.diverged) throw StageError("train", result.message);
      if (!result.history.empty()) {
        const auto& last = result.history.back();
        std::printf("epoch %zu  loss %.6g  train acc %.4f  val acc %.4f\n", last.epoch, last.loss.total,
                    last.train_accuracy, last.val_accuracy);
      }
      stage("write checkpoint", [&] { write_checkpoint(result.model, c.out); });
      Manifest m{"train", {c.data, c.views}, {c.out}, {}, cfg.hash(), cfg.seed};
      if (!c.config.empty()) m.config_path = c.config;
      if (!history.empty()) {
        stage("write history", [&] { write_history_csv(result, history); });
        m.outputs.push_back(history);
      }
      m.write();
    } else if (*evl) {
      const auto model = stage("load checkpoint", [&] { return read_checkpoint(c.config); });
      const auto ds = load_data(c.data);
      const auto views = load_matching_views(c.views, ds);
      const auto report = stage("evaluate", [&] { return evaluate(model, ds, views); });
      std::cout << format_summary(report);
      stage("write report", [&] { write_report_csv(report, c.report); });
      Manifest m{"evaluate", {c.config, c.data, c.views}, {c.report}, {}, model.config.hash(), model.config.seed};
      if (!embeddings.empty()) {
        stage("export embeddings", [&] { export_embeddings(model, ds, views, embeddings); });
        m.outputs.push_back(embeddings);
      }
      m.write();
    } else if (*abl) {
      const auto cfg = load_run_config(c);
      const auto ds = load_data(c.data);
      const auto views = load_matching_views(c.views, ds);
      const auto list = split_list(subsets, ';');
      if (list.empty()) throw StageError("config", "--subsets is empty");
      for (const auto& s : list) stage("config", [&] { return parse_relations(s); });
      const auto points = stage("ablate", [&] { return ablation_run(ds, views, cfg, list); });
      for (const auto& p : points) std::printf("%-16s accuracy %.4f  mrr %.4f\n", p.relations.c_str(),
                                               p.report.accuracy, p.report.mrr);
      stage("write report", [&] { write_ablation_csv(points, cfg, c.report); });
      Manifest{"ablate --subsets " + subsets, {c.data, c.views}, {c.report}, {}, cfg.hash(), cfg.seed}.write();
    } else if (*swp) {
      const auto cfg = load_run_config(c);
      const auto ds = load_data(c.data);
      const auto views = load_matching_views(c.views, ds);
      std::vector<double> list;
      for (const auto& s : split_list(rates, ',')) {
        list.push_back(stage("config", [&] {
          std::size_t used = 0;
          const double r = std::stod(s, &used);
          if (used != s.size() || !(r > 0.0 && r <= 1.0)) throw ConfigError("bad label rate '" + s + "'");
          return r;
        }));
      }
      const auto points = stage("sweep", [&] { return label_sparsity_sweep(ds, views, cfg, list); });
      for (const auto& p : points) std::printf("rate %-8g labelled questions %-6zu accuracy %.4f  mrr %.4f\n",
                                               p.rate, p.report.labeled_questions, p.report.accuracy, p.report.mrr);
      stage("write report", [&] { write_sweep_csv(points, cfg, c.report); });
      Manifest{"sweep-sparsity --rates " + rates, {c.data, c.views}, {c.report}, {}, cfg.hash(), cfg.seed}.write();
    }
  } catch (const StageError& e) {
    std::cerr << "error [" << e.stage << "]: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error [manifest]: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
