#include <doctest.h>

#include <nlohmann/json.hpp>
#include <unistd.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "fcca/app.hpp"
#include "fcca/config.hpp"

using namespace fcca;
namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

const fs::path kFixture = FCCA_FIXTURE_DIR;

// A fresh directory per test case, removed on exit.
struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag) {
    path = fs::temp_directory_path() / ("fcca_cli_" + tag + "_" + std::to_string(::getpid()));
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
  fs::path operator/(const std::string& name) const { return path / name; }
};

void write(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

std::string slurp(const fs::path& p) { return app::read_text(p); }

struct Run {
  int code;
  std::string out, err;
};

Run cli(std::vector<std::string> args) {
  args.insert(args.begin(), "fcca");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  std::ostringstream out, err;
  const int code = app::run_cli(static_cast<int>(argv.size()), argv.data(), out, err);
  return {code, out.str(), err.str()};
}

// Smallest config that still trains: the empty preset, short episodes.
const char* kTinyTrain = R"({
  // comments are allowed
  "seed": 5,
  "world": {"preset": "empty", "max_steps": 20},
  "ppo": {"episodes_per_batch": 2, "epochs_per_batch": 1, "workers": 1},
  "network": {"policy_hidden": 8, "value_hidden": 8},
  "training": {"max_batches": 2},
  "eval": {"episodes": 3, "seeds": [1], "workers": 1}
})";

// Recomputes the digest chain after a journal edit, so only re-execution
// can tell the difference.
std::string rechain(const std::string& text) {
  std::istringstream in(text);
  std::string line, chain, out;
  while (std::getline(in, line)) {
    auto obj = nlohmann::ordered_json::parse(line);
    obj.erase("chain");
    chain = llm::sha256_hex(chain + obj.dump());
    obj["chain"] = chain;
    out += obj.dump() + "\n";
  }
  return out;
}

}  // namespace

TEST_CASE("config rejects unknown keys at every level") {
  CHECK_NOTHROW(config::config_from_json(json::object()));
  CHECK_THROWS_AS(config::config_from_json(json{{"sede", 1}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"ppo", {{"gama", 0.9}}}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"world", {{"presett", "empty"}}}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"tune", {{"eta", 0.5}, {"extra", 1}}}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"backend", {{"kind", "carrier pigeon"}}}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"backend", {{"kind", "replay"}}}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"ppo", "fast"}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"ppo", {{"gamma", "high"}}}}), ConfigError);
}

TEST_CASE("negative counts are rejected instead of wrapping") {
  CHECK_THROWS_AS(config::config_from_json(json{{"ppo", {{"episodes_per_batch", -1}}}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"training", {{"max_batches", -3}}}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"eval", {{"episodes", -10}}}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"network", {{"policy_hidden", -8}}}}), ConfigError);
}

TEST_CASE("world sections start from a preset and accept overrides") {
  const auto c = config::config_from_json(json{{"world", {{"preset", "complex"}, {"max_steps", 77}}}});
  auto expected = sim::make_preset("complex");
  expected.max_steps = 77;
  CHECK(sim::world_to_json(c.world) == sim::world_to_json(expected));
  CHECK_THROWS_AS(config::config_from_json(json{{"world", {{"preset", "moon"}}}}), ConfigError);
  CHECK_THROWS_AS(config::config_from_json(json{{"world", {{"dt", -0.1}}}}), ConfigError);
  CHECK_THROWS_AS(
      config::config_from_json(json{{"init_world", {{"num_agents", 2}, {"formation", {{0, 0}, {1, 0}}},
                                                    {"start_positions", {{0, 0}, {1, 0}}}}}}),
      ConfigError);
}

TEST_CASE("config_to_json round-trips") {
  TempDir dir("roundtrip");
  write(dir / "c.json", kTinyTrain);
  const auto c = config::load_config(dir / "c.json");
  CHECK(c.seed == 5);
  CHECK(c.base_dir == dir.path);
  CHECK(c.world.max_steps == 20);
  const auto j = config::config_to_json(c);
  const auto again = config::config_to_json(config::config_from_json(json::parse(j.dump())));
  CHECK(j.dump() == again.dump());

  write(dir / "bad.json", "{\"seed\": ");
  CHECK_THROWS_AS(config::load_config(dir / "bad.json"), ConfigError);
  CHECK_THROWS_AS(config::load_config(dir / "missing.json"), ConfigError);
}

TEST_CASE("relative paths resolve against the config directory") {
  TempDir dir("resolve");
  fs::create_directories(dir / "sub");
  write(dir / "sub/r.rdsl", "-goal_dist");
  write(dir / "sub/c.json", R"({"reward": "r.rdsl"})");
  const auto c = config::load_config(dir / "sub/c.json");
  CHECK(c.resolve(c.reward) == dir / "sub/r.rdsl");
  write(dir / "sub/c2.json", R"({"reward": "nope.rdsl"})");
  CHECK_THROWS_AS(config::load_config(dir / "sub/c2.json"), ConfigError);
}

TEST_CASE("train writes metrics, checkpoint and summary reproducibly") {
  TempDir dir("train");
  write(dir / "c.json", kTinyTrain);
  const Run a = cli({"train", "-c", (dir / "c.json").string(), "-o", (dir / "a").string()});
  REQUIRE(a.code == app::kExitOk);
  CHECK(a.out.find("trained 2 batches") != std::string::npos);
  CHECK(fs::exists(dir / "a/checkpoint.ckpt"));
  CHECK(fs::exists(dir / "a/train_summary.json"));
  const std::string metrics = slurp(dir / "a/metrics.jsonl");
  CHECK(std::count(metrics.begin(), metrics.end(), '\n') == 2);

  const Run b = cli({"train", "-c", (dir / "c.json").string(), "-o", (dir / "b").string()});
  REQUIRE(b.code == app::kExitOk);
  CHECK(slurp(dir / "b/metrics.jsonl") == metrics);
  CHECK(slurp(dir / "b/checkpoint.ckpt") == slurp(dir / "a/checkpoint.ckpt"));

  const Run seeded = cli({"train", "-c", (dir / "c.json").string(), "-o", (dir / "s").string(), "--seed", "6",
                          "--max-batches", "1"});
  REQUIRE(seeded.code == app::kExitOk);
  CHECK(slurp(dir / "s/metrics.jsonl") != metrics);

  write(dir / "bad.rdsl", "goal_dist +");
  const Run bad = cli({"train", "-c", (dir / "c.json").string(), "-r", (dir / "bad.rdsl").string(), "-o",
                       (dir / "x").string()});
  CHECK(bad.code == app::kExitDsl);
  CHECK(bad.err.find("bad.rdsl") != std::string::npos);

  SUBCASE("eval of the trained checkpoint") {
    const Run e = cli({"eval", "-c", (dir / "c.json").string(), "-k", (dir / "a/checkpoint.ckpt").string(), "-o",
                       (dir / "ev").string()});
    REQUIRE(e.code == app::kExitOk);
    CHECK(e.out.find("success_rate: ") == 0);
    CHECK(e.out.find("episodes: 3") != std::string::npos);
    CHECK(slurp(dir / "ev/eval_report.txt") + "episodes: 3\n" == e.out);
    CHECK(json::parse(slurp(dir / "ev/eval_report.json"))["episodes"] == 3);
    const Run again = cli({"eval", "-c", (dir / "c.json").string(), "-k", (dir / "a/checkpoint.ckpt").string()});
    CHECK(again.out == e.out);
  }
  SUBCASE("plot of the metrics") {
    const Run p = cli({"plot", (dir / "a/metrics.jsonl").string(), "-l", "run", "-o", (dir / "plots").string()});
    REQUIRE(p.code == app::kExitOk);
    for (const char* f : {"run.csv", "reward_curve.svg", "success_trend.svg", "episode_length_trend.svg"})
      CHECK(fs::exists(dir / ("plots/" + std::string(f))));
    CHECK(slurp(dir / "plots/reward_curve.svg").rfind("<svg", 0) == 0);
    const std::string csv = slurp(dir / "plots/run.csv");
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 3);
    const Run mismatched =
        cli({"plot", (dir / "a/metrics.jsonl").string(), "-l", "x", "-l", "y", "-o", (dir / "p2").string()});
    CHECK(mismatched.code == app::kExitConfig);
  }
}

TEST_CASE("eval maps checkpoint problems to their exit code") {
  TempDir dir("eval");
  write(dir / "c.json", kTinyTrain);
  const Run missing = cli({"eval", "-c", (dir / "c.json").string(), "-k", (dir / "none.ckpt").string()});
  CHECK(missing.code == app::kExitCheckpoint);
  write(dir / "junk.ckpt", "definitely not a checkpoint");
  const Run junk = cli({"eval", "-c", (dir / "c.json").string(), "-k", (dir / "junk.ckpt").string()});
  CHECK(junk.code == app::kExitCheckpoint);
  CHECK(junk.err.find("checkpoint error") != std::string::npos);

  // A checkpoint of a differently sized network does not load.
  REQUIRE(cli({"train", "-c", (dir / "c.json").string(), "-o", (dir / "t").string(), "--max-batches", "1"}).code ==
          0);
  write(dir / "wide.json", R"({"world": {"preset": "empty", "max_steps": 20}, "network": {"policy_hidden": 12}})");
  const Run wide = cli({"eval", "-c", (dir / "wide.json").string(), "-k", (dir / "t/checkpoint.ckpt").string()});
  CHECK(wide.code != app::kExitOk);
}

TEST_CASE("dsl-check validates and evaluates programs") {
  TempDir dir("dsl");
  write(dir / "ok.rdsl", "let d = goal_dist;\n-d + 100*reached_goal");
  const Run ok = cli({"dsl-check", (dir / "ok.rdsl").string()});
  CHECK(ok.code == app::kExitOk);
  CHECK(ok.out.rfind("ok: 1 binding(s)\n", 0) == 0);

  const Run ctx = cli({"dsl", "check", (dir / "ok.rdsl").string(), "--context", "goal_dist=2.5", "--context",
                       "reached_goal=1"});
  CHECK(ctx.code == app::kExitOk);
  CHECK(ctx.out.find("reward: 97.500000\n") != std::string::npos);

  write(dir / "bad.rdsl", "goal_dist + warp_factor");
  const Run bad = cli({"dsl-check", (dir / "bad.rdsl").string()});
  CHECK(bad.code == app::kExitDsl);
  CHECK(bad.err.find("warp_factor") != std::string::npos);

  write(dir / "log.rdsl", "log(goal_dist)");
  CHECK(cli({"dsl-check", (dir / "log.rdsl").string(), "--context", "goal_dist=0"}).code == app::kExitDsl);
  CHECK(cli({"dsl-check", (dir / "ok.rdsl").string(), "--context", "nonsense=1"}).code == app::kExitConfig);
  CHECK(cli({"dsl-check", (dir / "ok.rdsl").string(), "--context", "goal_dist"}).code == app::kExitConfig);
  CHECK(cli({"dsl-check", (dir / "ok.rdsl").string(), "--context", "goal_dist=abc"}).code == app::kExitConfig);
  CHECK(cli({"dsl-check", (dir / "absent.rdsl").string()}).code == app::kExitConfig);
}

TEST_CASE("command-line errors exit with the config code") {
  CHECK(cli({}).code == app::kExitConfig);
  CHECK(cli({"fly"}).code == app::kExitConfig);
  CHECK(cli({"train"}).code == app::kExitConfig);
  CHECK(cli({"train", "-c", "/nonexistent/c.json"}).code == app::kExitConfig);
  CHECK(cli({"eval", "-c", (kFixture / "config.json").string(), "-k", "x", "--protocol", "fancy"}).code ==
        app::kExitConfig);
  CHECK(cli({"--help"}).code == app::kExitOk);

  TempDir dir("plot_empty");
  write(dir / "empty.jsonl", "");
  CHECK(cli({"plot", (dir / "empty.jsonl").string(), "-o", (dir / "p").string()}).code == app::kExitFailure);
}

TEST_CASE("tune runs offline from archived responses and replays") {
  TempDir dir("tune");
  const Run t = cli({"tune", "-c", (kFixture / "config.json").string(), "-o", (dir / "a").string()});
  REQUIRE(t.code == app::kExitOk);
  for (const char* f : {"journal.jsonl", "report.csv", "report.txt", "reward_final.rdsl", "checkpoint_final.ckpt"})
    CHECK(fs::exists(dir / ("a/" + std::string(f))));
  CHECK(t.out.find(slurp(dir / "a/report.txt")) != std::string::npos);

  const std::string journal = slurp(dir / "a/journal.jsonl");
  const Run ok = cli({"replay", (dir / "a/journal.jsonl").string(), "-o", (dir / "r").string()});
  CHECK(ok.code == app::kExitOk);
  CHECK(ok.out.find("replay verified") == 0);
  CHECK(slurp(dir / "r/replay_journal.jsonl") == journal);

  SUBCASE("an edited journal fails the chain check") {
    std::string edited = journal;
    const auto at = edited.find("\"stage\":\"tune\"");
    REQUIRE(at != std::string::npos);
    edited.replace(at, 14, "\"stage\":\"tuna\"");
    write(dir / "edited.jsonl", edited);
    const Run r = cli({"replay", (dir / "edited.jsonl").string()});
    CHECK(r.code == app::kExitJournal);
  }
  SUBCASE("a consistent journal with a different config diverges") {
    auto lines = std::vector<std::string>{};
    std::istringstream in(journal);
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    auto header = nlohmann::ordered_json::parse(lines[0]);
    REQUIRE(header.contains("config"));
    header["config"]["seed"] = header["config"]["seed"].get<std::uint64_t>() + 1;
    lines[0] = header.dump();
    std::string text;
    for (const auto& l : lines) text += l + "\n";
    write(dir / "forged.jsonl", rechain(text));
    const Run r = cli({"replay", (dir / "forged.jsonl").string()});
    CHECK(r.code == app::kExitDivergence);
    CHECK(r.err.find("replay diverged at journal line 2") != std::string::npos);
  }
  SUBCASE("a missing journal is a journal error") {
    CHECK(cli({"replay", (dir / "nope.jsonl").string()}).code == app::kExitJournal);
  }
}

TEST_CASE("an http backend without a credential is a config error") {
  TempDir dir("http");
  ::unsetenv("FCCA_TEST_UNSET_TOKEN");
  write(dir / "c.json", R"({"backend": {"kind": "http", "url": "http://127.0.0.1:9/v1/chat/completions",
                                       "token_env": "FCCA_TEST_UNSET_TOKEN"}})");
  const Run r = cli({"tune", "-c", (dir / "c.json").string(), "-o", (dir / "o").string()});
  CHECK(r.code == app::kExitConfig);
  CHECK(r.err.find("FCCA_TEST_UNSET_TOKEN") != std::string::npos);
}
