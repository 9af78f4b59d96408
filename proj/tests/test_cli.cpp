#include "cli_runner.hpp"

#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <regex>

using irgcn::testing::read_bytes;
using irgcn::testing::run_cli;
using irgcn::testing::ScratchDir;

namespace {

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc);
  out << text;
}

// synth + induce into dir, returns the dataset path.
std::string prepare(const ScratchDir& dir, int questions = 60) {
  const auto data = dir / "data.bin";
  REQUIRE(run_cli("synth --preset contrastive --questions " + std::to_string(questions) + " --seed 7 --out " + data)
              .status == 0);
  REQUIRE(run_cli("induce --data " + data + " --out " + (dir / "views.bin")).status == 0);
  write_text(dir / "fast.cfg", "epochs = 5\n");
  return data;
}

}  // namespace

TEST_CASE("synth is byte-identical across runs and writes a manifest") {
  ScratchDir dir("cli_synth");
  const auto r1 = run_cli("synth --preset contrastive --questions 100 --seed 7 --out " + (dir / "a.bin"));
  const auto r2 = run_cli("synth --preset contrastive --questions 100 --seed 7 --out " + (dir / "b.bin"));
  REQUIRE(r1.status == 0);
  REQUIRE(r2.status == 0);
  CHECK(r1.output.find("over 100 questions") != std::string::npos);
  const auto a = read_bytes(dir / "a.bin");
  CHECK(!a.empty());
  CHECK(a == read_bytes(dir / "b.bin"));
  const auto manifest = read_bytes(dir / "a.bin.manifest");
  CHECK(manifest.find("command = synth --preset contrastive --questions 100") != std::string::npos);
  CHECK(manifest.find("seed = 7") != std::string::npos);

  REQUIRE(run_cli("synth --preset contrastive --questions 100 --seed 8 --out " + (dir / "c.bin")).status == 0);
  CHECK(a != read_bytes(dir / "c.bin"));
}

TEST_CASE("usage errors exit with status 2") {
  CHECK(run_cli("").status == 2);
  CHECK(run_cli("no-such-command").status == 2);
  CHECK(run_cli("synth").status == 2);  // --out is required
  CHECK(run_cli("synth --out /tmp/x --preset nope").status == 2);
  CHECK(run_cli("synth --out /tmp/x --questions 2").status == 2);
  CHECK(run_cli("train --data /nonexistent --views /nonexistent --out /tmp/x").status == 2);
  CHECK(run_cli("--help").status == 0);
}

TEST_CASE("runtime errors exit with status 1 and name the stage") {
  ScratchDir dir("cli_err");
  const auto data = prepare(dir);
  write_text(dir / "junk.bin", "not a dataset");
  auto r = run_cli("induce --data " + (dir / "junk.bin") + " --out " + (dir / "v.bin"));
  CHECK(r.status == 1);
  CHECK(r.output.find("error [load dataset]:") != std::string::npos);

  // views induced from another dataset
  const auto other = dir / "other.bin";
  REQUIRE(run_cli("synth --questions 40 --seed 3 --out " + other).status == 0);
  r = run_cli("train --data " + other + " --views " + (dir / "views.bin") + " --out " + (dir / "m.ckpt"));
  CHECK(r.status == 1);
  CHECK(r.output.find("error [load views]:") != std::string::npos);
  CHECK(!std::filesystem::exists(dir / "m.ckpt"));

  write_text(dir / "bad.cfg", "epochs = 5\nunknown_key = 1\n");
  r = run_cli("train --data " + data + " --views " + (dir / "views.bin") + " --config " + (dir / "bad.cfg") +
              " --out " + (dir / "m.ckpt"));
  CHECK(r.status == 1);
  CHECK(r.output.find("error [config]:") != std::string::npos);

  r = run_cli("evaluate --model " + data + " --data " + data + " --views " + (dir / "views.bin") + " --report " +
              (dir / "r.csv"));
  CHECK(r.status == 1);
  CHECK(r.output.find("error [load checkpoint]:") != std::string::npos);

  r = run_cli("sweep-sparsity --data " + data + " --views " + (dir / "views.bin") + " --rates 0,1 --report " +
              (dir / "s.csv"));
  CHECK(r.status == 1);
  CHECK(r.output.find("error [config]:") != std::string::npos);
}

TEST_CASE("induce histograms cover every tuple once") {
  ScratchDir dir("cli_induce");
  const auto data = dir / "data.bin";
  REQUIRE(run_cli("synth --questions 80 --seed 4 --out " + data).status == 0);
  const auto r = run_cli("induce --data " + data + " --out " + (dir / "views.bin"));
  REQUIRE(r.status == 0);
  const std::regex covered(R"(tuples covered (\d+) of (\d+))");
  std::size_t views = 0;
  for (auto it = std::sregex_iterator(r.output.begin(), r.output.end(), covered); it != std::sregex_iterator();
       ++it) {
    ++views;
    CHECK((*it)[1].str() == (*it)[2].str());
  }
  CHECK(views == 4);
  for (const char* name : {"view contrastive ", "view trueskill ", "view arrival ", "view reflexive "})
    CHECK(r.output.find(name) != std::string::npos);
  const auto manifest = read_bytes(dir / "views.bin.manifest");
  CHECK(manifest.find("input = " + data + " fnv1a=") != std::string::npos);
}

TEST_CASE("train, evaluate and the seed override") {
  ScratchDir dir("cli_train");
  const auto data = prepare(dir);
  const auto views = dir / "views.bin";
  const auto cfg = dir / "fast.cfg";
  auto r = run_cli("train --data " + data + " --views " + views + " --config " + cfg + " --out " + (dir / "a.ckpt") +
                   " --history " + (dir / "h.csv"));
  REQUIRE(r.status == 0);
  CHECK(r.output.find("epoch 5 ") != std::string::npos);
  REQUIRE(run_cli("train --data " + data + " --views " + views + " --config " + cfg + " --out " + (dir / "b.ckpt"))
              .status == 0);
  REQUIRE(run_cli("train --data " + data + " --views " + views + " --config " + cfg + " --seed 99 --out " +
                  (dir / "c.ckpt"))
              .status == 0);
  const auto a = read_bytes(dir / "a.ckpt");
  CHECK(a == read_bytes(dir / "b.ckpt"));
  CHECK(a != read_bytes(dir / "c.ckpt"));
  CHECK(read_bytes(dir / "c.ckpt.manifest").find("seed = 99") != std::string::npos);
  CHECK(read_bytes(dir / "a.ckpt.manifest").find("output = " + (dir / "h.csv")) != std::string::npos);

  r = run_cli("evaluate --model " + (dir / "a.ckpt") + " --data " + data + " --views " + views + " --report " +
              (dir / "r.csv") + " --embeddings " + (dir / "e.csv"));
  REQUIRE(r.status == 0);
  CHECK(r.output.find("accuracy ") != std::string::npos);
  const auto report = read_bytes(dir / "r.csv");
  CHECK(report.find("metric,accuracy,") != std::string::npos);
  CHECK(report.find("metric,mrr,") != std::string::npos);
  CHECK(std::filesystem::exists(dir / "e.csv"));
  CHECK(std::filesystem::exists(dir / "r.csv.manifest"));
}

TEST_CASE("ablate and sweep write one row group per run") {
  ScratchDir dir("cli_ablate");
  const auto data = prepare(dir, 80);
  const auto views = dir / "views.bin";
  const auto cfg = dir / "fast.cfg";
  auto r = run_cli("ablate --data " + data + " --views " + views + " --config " + cfg +
                   " --subsets 'C;R' --report " + (dir / "ab.csv"));
  REQUIRE(r.status == 0);
  CHECK(r.output.find("C ") != std::string::npos);
  CHECK(r.output.find("R ") != std::string::npos);
  r = run_cli("ablate --data " + data + " --views " + views + " --config " + cfg + " --subsets 'C;X' --report " +
              (dir / "ab2.csv"));
  CHECK(r.status == 1);
  CHECK(!std::filesystem::exists(dir / "ab2.csv"));

  r = run_cli("sweep-sparsity --data " + data + " --views " + views + " --config " + cfg + " --rates 1,0.5 --report " +
              (dir / "sw.csv"));
  REQUIRE(r.status == 0);
  CHECK(r.output.find("rate 1 ") != std::string::npos);
  CHECK(r.output.find("rate 0.5 ") != std::string::npos);
}
