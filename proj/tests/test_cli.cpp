// End-to-end checks of the command-line binary: exit codes, artifact
// determinism, config precedence. Spawns the real executable via std::system.
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "medkg/corpus.hpp"
#include "medkg/kg.hpp"

#ifndef MEDKG_CLI_PATH
#error "MEDKG_CLI_PATH must point at the CLI binary"
#endif

namespace fs = std::filesystem;

namespace {

int run(const std::string& args) {
  const std::string cmd =
      std::string(MEDKG_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "medkg_cli_tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

}  // namespace

TEST_CASE("cli: usage errors exit with code 2") {
  CHECK(run("gen-data") == 2);                       // missing --out
  CHECK(run("no-such-command") == 2);                // unknown subcommand
  CHECK(run("--help") == 0);
  const fs::path dir = fresh_dir("usage");
  CHECK(run("gen-data --out " + q(dir / "z") + " --docs 0") == 2);
  CHECK(run("gen-data --out " + q(dir / "z") + " --classes 1") == 2);
  CHECK(run("train --corpus " + q(dir) + " --model medkg --out " +
            q(dir / "ckpt")) == 2);                  // medkg without --kg
}

TEST_CASE("cli: gen-data is byte-deterministic and self-describing") {
  const fs::path a = fresh_dir("gen_a");
  const fs::path b = fresh_dir("gen_b");
  const std::string args = " --docs 40 --classes 2 --noise 30 --seed 5";
  REQUIRE(run("gen-data --out " + q(a) + args) == 0);
  REQUIRE(run("gen-data --out " + q(b) + args) == 0);
  for (const char* name :
       {"corpus.jsonl", "gazetteer.tsv", "gold_triples.tsv", "README.md"}) {
    CAPTURE(name);
    CHECK(slurp(a / name) == slurp(b / name));
  }
  const std::string readme = slurp(a / "README.md");
  CHECK(readme.find("seed: 5") != std::string::npos);
  CHECK(readme.find("config_digest: ") != std::string::npos);
  CHECK(medkg::read_corpus((a / "corpus.jsonl").string()).size() == 40);
}

TEST_CASE("cli: config file and flags merge with documented precedence") {
  const fs::path dir = fresh_dir("precedence");
  {
    std::ofstream cfg(dir / "cfg.json");
    cfg << "{\"docs\": 50, \"seed\": 3}\n";
  }
  // Flag --docs beats the file; seed 3 comes from the file.
  REQUIRE(run("gen-data --out " + q(dir / "filecfg") + " --config " +
              q(dir / "cfg.json") + " --docs 20 --classes 2") == 0);
  REQUIRE(run("gen-data --out " + q(dir / "flags") +
              " --docs 20 --classes 2 --seed 3") == 0);
  CHECK(slurp(dir / "filecfg" / "corpus.jsonl") ==
        slurp(dir / "flags" / "corpus.jsonl"));

  // MEDKG_SEED sits below the config file and flags.
  const std::string env = "MEDKG_SEED=3 ";
  const std::string cmd = std::string(MEDKG_CLI_PATH) + " gen-data --out " +
                          q(dir / "env") + " --docs 20 --classes 2" +
                          " >/dev/null 2>&1";
  REQUIRE(std::system((env + cmd).c_str()) == 0);
  CHECK(slurp(dir / "env" / "corpus.jsonl") ==
        slurp(dir / "flags" / "corpus.jsonl"));

  {
    std::ofstream cfg(dir / "bad.json");
    cfg << "{\"dcos\": 50}\n";
  }
  CHECK(run("gen-data --out " + q(dir / "badcfg") + " --config " +
            q(dir / "bad.json")) == 2);  // unknown key
}

TEST_CASE("cli: build-kg with --merge recovers every gold triple") {
  const fs::path dir = fresh_dir("buildkg");
  REQUIRE(run("gen-data --out " + q(dir / "data") +
              " --docs 60 --classes 3 --seed 9") == 0);
  REQUIRE(run("build-kg --corpus " + q(dir / "data") + " --out " +
              q(dir / "kg.tsv") + " --merge " +
              q(dir / "data" / "gold_triples.tsv")) == 0);

  auto gold =
      medkg::read_triples_tsv((dir / "data" / "gold_triples.tsv").string());
  auto built = medkg::read_triples_tsv((dir / "kg.tsv").string());
  for (const medkg::Triple& t : gold) {
    bool found = false;
    for (const medkg::Triple& u : built) {
      if (u.head == t.head && u.relation == t.relation && u.tail == t.tail) {
        found = true;
        break;
      }
    }
    CAPTURE(t.head);
    CHECK(found);
  }
  CHECK(fs::exists(dir / "kg.tsv.meta.json"));

  // Merging the graph with itself must not invent triples (idempotent union).
  REQUIRE(run("build-kg --corpus " + q(dir / "data") + " --out " +
              q(dir / "kg2.tsv") + " --merge " + q(dir / "kg.tsv")) == 0);
  auto merged_self = medkg::read_triples_tsv((dir / "kg2.tsv").string());
  CHECK(merged_self.size() == built.size());
}

TEST_CASE("cli: train, eval, and ablate produce consistent artifacts") {
  const fs::path dir = fresh_dir("train_eval");
  REQUIRE(run("gen-data --out " + q(dir / "data") +
              " --docs 40 --classes 2 --noise 20 --seed 5") == 0);
  REQUIRE(run("build-kg --corpus " + q(dir / "data") + " --out " +
              q(dir / "kg.tsv") + " --merge " +
              q(dir / "data" / "gold_triples.tsv")) == 0);

  const std::string common = " --corpus " + q(dir / "data") + " --kg " +
                             q(dir / "kg.tsv") +
                             " --epochs 3 --batch 8 --lr 0.005 --seed 5";
  REQUIRE(run("train --model medkg --out " + q(dir / "ckpt") + common) == 0);
  for (const char* name :
       {"manifest.json", "params.bin", "run.json", "metrics.json"}) {
    CAPTURE(name);
    CHECK(fs::exists(dir / "ckpt" / name));
  }

  // eval on the test split must reproduce the metrics train wrote, and a
  // second eval must be byte-identical to the first.
  REQUIRE(run("eval --ckpt " + q(dir / "ckpt") + " --corpus " +
              q(dir / "data") + " --kg " + q(dir / "kg.tsv") +
              " --split test --out " + q(dir / "m1.json")) == 0);
  REQUIRE(run("eval --ckpt " + q(dir / "ckpt") + " --corpus " +
              q(dir / "data") + " --kg " + q(dir / "kg.tsv") +
              " --split test --out " + q(dir / "m2.json")) == 0);
  CHECK(slurp(dir / "m1.json") == slurp(dir / "m2.json"));
  CHECK(slurp(dir / "m1.json") == slurp(dir / "ckpt" / "metrics.json"));

  REQUIRE(run("eval --ckpt " + q(dir / "ckpt") + " --corpus " +
              q(dir / "data") + " --kg " + q(dir / "kg.tsv") +
              " --split val --out " + q(dir / "mv.json")) == 0);
  CHECK(run("eval --ckpt " + q(dir / "ckpt") + " --corpus " + q(dir / "data") +
            " --kg " + q(dir / "kg.tsv") + " --split dev") == 2);

  REQUIRE(run("ablate" + common + " --out " + q(dir / "ab.json")) == 0);
  const std::string ab = slurp(dir / "ab.json");
  CHECK(ab.find("\"medkg\"") != std::string::npos);
  CHECK(ab.find("\"medg\"") != std::string::npos);
  CHECK(ab.find("\"config_digest\"") != std::string::npos);
  CHECK(ab.find("\"seed\": 5") != std::string::npos);
}

TEST_CASE("cli: identical train invocations yield identical checkpoints") {
  const fs::path dir = fresh_dir("reprod");
  REQUIRE(run("gen-data --out " + q(dir / "data") +
              " --docs 40 --classes 2 --seed 8") == 0);
  const std::string common = " --corpus " + q(dir / "data") +
                             " --model medg --epochs 3 --batch 8 --seed 8";
  REQUIRE(run("train --out " + q(dir / "c1") + common) == 0);
  REQUIRE(run("train --out " + q(dir / "c2") + common) == 0);
  CHECK(slurp(dir / "c1" / "params.bin") == slurp(dir / "c2" / "params.bin"));
  CHECK(slurp(dir / "c1" / "manifest.json") ==
        slurp(dir / "c2" / "manifest.json"));
  CHECK(slurp(dir / "c1" / "metrics.json") ==
        slurp(dir / "c2" / "metrics.json"));
}

TEST_CASE("cli: grad-check exits zero with all cases passing") {
  CHECK(run("grad-check") == 0);
}
