#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>

#include "mora/config.hpp"
#include "mora/dataset.hpp"
#include "mora/errors.hpp"

using namespace mora;

namespace {

std::filesystem::path scratch(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / "mora_test_config_data";
  std::filesystem::create_directories(dir);
  return dir / name;
}

void write_file(const std::filesystem::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST_CASE("unknown keys and ill-typed values are rejected") {
  RunConfig c;
  CHECK_THROWS_AS(c.set("mawgen.rnak", "4"), ConfigError);
  CHECK_THROWS_AS(c.set("mawgen.rank", "four"), ConfigError);
  CHECK_THROWS_AS(c.set("mawgen.rank", "-1"), ConfigError);
  CHECK_THROWS_AS(c.set("training.lr", "fast"), ConfigError);
  CHECK_THROWS_AS(c.set("mawgen.null_slot", "yes"), ConfigError);
  CHECK_THROWS_AS(c.set("mawgen.targets", "qz"), ConfigError);
  CHECK_THROWS_AS(c.set("training.mode", "lora"), ConfigError);
  CHECK_THROWS_WITH_AS(RunConfig::from_text("seed = 1\nbogus = 2\n"), doctest::Contains("line 2"), ConfigError);
  CHECK_THROWS_WITH_AS(RunConfig::from_text("seed 1\n"), doctest::Contains("line 1"), ConfigError);
}

TEST_CASE("desk defaults and the paper preset") {
  const RunConfig desk;
  CHECK(desk.get("preset") == "desk");
  CHECK(desk.training().lr == 3e-4);
  CHECK(desk.training().batch == 8);
  CHECK(desk.generator().queries == 5);
  CHECK_NOTHROW(desk.validate());

  const RunConfig paper = RunConfig::preset("paper");
  const GeneratorConfig g = paper.generator();
  CHECK(g.blocks == 8);
  CHECK(g.queries == 4);
  CHECK(g.rank == 64);
  CHECK(g.alpha == 64.0);
  CHECK(targets_string(g.targets) == "qkvo");
  const TrainingConfig t = paper.training();
  CHECK(t.lr == 2e-5);
  CHECK(t.batch == 128);
  CHECK(t.warmup == 0.03);
  CHECK(t.weight_decay == 0.0);
  CHECK_NOTHROW(paper.validate());
  CHECK_THROWS_AS(RunConfig::preset("huge"), ConfigError);
}

TEST_CASE("config text: comments, preset line order and round trip") {
  const RunConfig c = RunConfig::from_text("# comment\nmawgen.rank = 8   # trailing\n\npreset = paper\n");
  CHECK(c.get("preset") == "paper");
  CHECK(c.get_int("mawgen.rank") == 8);
  CHECK(c.get_int("mawgen.blocks") == 8);
  const RunConfig back = RunConfig::from_text(c.to_text());
  CHECK(back.values() == c.values());
}

TEST_CASE("config file loading") {
  const auto p = scratch("run.cfg");
  write_file(p, "seed = 99\nbackbone.layers = 2\n");
  const RunConfig c = RunConfig::from_file(p);
  CHECK(c.seed() == 99);
  CHECK(c.backbone().layers == 2);
  CHECK_THROWS_AS(RunConfig::from_file(scratch("missing.cfg")), ConfigError);
}

TEST_CASE("cross-module validation catches a query count mismatch") {
  RunConfig c;
  c.set("mawgen.targets", "qv");
  CHECK_THROWS_WITH_AS(c.validate(), doctest::Contains("mawgen.queries"), ConfigError);
  c.set("mawgen.queries", "2");
  CHECK_NOTHROW(c.validate());
  c.set("mawgen.assignment", "per_layer");
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.set("mawgen.queries", "8");
  CHECK_NOTHROW(c.validate());
  c.set("backbone.heads", "5");
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("MORA_SEED overrides the configured seed") {
  RunConfig c;
  ::setenv("MORA_SEED", "4242", 1);
  c.apply_environment();
  CHECK(c.seed() == 4242);
  ::setenv("MORA_SEED", "x", 1);
  CHECK_THROWS_AS(c.apply_environment(), ConfigError);
  ::unsetenv("MORA_SEED");
  RunConfig d;
  d.apply_environment();
  CHECK(d.seed() == 1234);
}

TEST_CASE("JSONL round trip preserves every synthetic task") {
  for (const char* task : {"atom_count", "bond_count", "element_presence", "graph_copy", "text_only"}) {
    CAPTURE(task);
    const auto data = synth_dataset(parse_task(task), 25, 3);
    const auto p = scratch(std::string(task) + ".jsonl");
    save_dataset(p, data);
    CHECK(load_dataset(p) == data);
    CHECK(parse_dataset(to_jsonl(data)) == data);
  }
}

TEST_CASE("dataset ingestion errors carry line numbers") {
  CHECK(parse_dataset("").empty());
  const auto p = scratch("empty.jsonl");
  write_file(p, "");
  CHECK(load_dataset(p).empty());

  const std::string good = R"({"smiles":"CCO","instruction":"How many heavy atoms?","answer":"3","task_tag":"atom_count"})";
  CHECK(parse_dataset(good + "\n").size() == 1);

  const std::string ring = R"({"smiles":"C1CC","instruction":"x","answer":"3","task_tag":"t"})";
  try {
    parse_dataset(good + "\n" + ring + "\n");
    FAIL("no error");
  } catch (const IngestionError& e) {
    CHECK(e.line() == 2);
    CHECK(std::string(e.what()).find("byte 1") != std::string::npos);
  }
  CHECK_THROWS_WITH_AS(parse_dataset(good + "\n\n{not json\n"), doctest::Contains("line 3"), IngestionError);
  CHECK_THROWS_AS(parse_dataset(R"({"smiles":null,"instruction":"x","answer":"","task_tag":"t"})"), IngestionError);
  CHECK_THROWS_AS(parse_dataset(R"({"instruction":"x","answer":"1","task_tag":"t"})"), IngestionError);
  CHECK_THROWS_AS(parse_dataset(R"({"smiles":null,"instruction":"x","answer":"1","task_tag":"t","extra":1})"),
                  IngestionError);
  CHECK_THROWS_AS(load_dataset(scratch("absent.jsonl")), IngestionError);
}

TEST_CASE("synthetic tasks: determinism and answers") {
  CHECK(synth_dataset(SynthTask::graph_copy, 40, 9) == synth_dataset(SynthTask::graph_copy, 40, 9));
  CHECK(synth_dataset(SynthTask::graph_copy, 40, 9) != synth_dataset(SynthTask::graph_copy, 40, 10));
  CHECK_THROWS_AS(synth_dataset(SynthTask::atom_count, 0, 1), ContractError);
  CHECK_THROWS_AS(parse_task("yield"), ConfigError);

  std::set<std::string> instructions;
  std::map<std::string, int> sizes;
  for (const auto& ex : synth_dataset(SynthTask::atom_count, 900, 11)) {
    REQUIRE(ex.smiles.has_value());
    const MolecularGraph g = parse_smiles(*ex.smiles);
    CHECK(ex.answer == std::to_string(g.atom_count()));
    instructions.insert(ex.instruction);
    ++sizes[ex.answer];
  }
  CHECK(instructions.size() == 1);
  CHECK(sizes.size() == 9);
  for (const auto& [n, count] : sizes) CHECK(count > 60);

  for (const auto& ex : synth_dataset(SynthTask::bond_count, 100, 12))
    CHECK(ex.answer == std::to_string(parse_smiles(*ex.smiles).bond_count()));
  for (const auto& ex : synth_dataset(SynthTask::element_presence, 100, 13)) {
    CHECK((ex.answer == "yes" || ex.answer == "no"));
  }
  for (const auto& ex : synth_dataset(SynthTask::graph_copy, 50, 14)) CHECK(ex.answer == *ex.smiles);
  for (const auto& ex : synth_dataset(SynthTask::text_only, 50, 15)) CHECK_FALSE(ex.smiles.has_value());
}

TEST_CASE("counting oracles on fixed molecules") {
  CHECK(parse_smiles("CCO").atom_count() == 3);
  CHECK(parse_smiles("C1CC1").bond_count() == 3);
}

TEST_CASE("holdout split is deterministic and disjoint in position") {
  const auto all = synth_dataset(SynthTask::bond_count, 50, 16);
  const auto [train_a, test_a] = split_holdout(all, 0.2, 5);
  const auto [train_b, test_b] = split_holdout(all, 0.2, 5);
  CHECK(train_a == train_b);
  CHECK(test_a == test_b);
  CHECK(test_a.size() == 10);
  CHECK(train_a.size() == 40);
  CHECK_THROWS_AS(split_holdout(all, 1.0, 5), ContractError);
}
