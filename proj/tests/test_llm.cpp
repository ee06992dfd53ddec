#include <doctest.h>

// fcca headers before httplib: <resolv.h> defines a _res macro that breaks Eigen.
#include "fcca/llm.hpp"

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include <atomic>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <thread>

#include "support.hpp"

using namespace fcca;
using namespace fcca::llm;

namespace {

std::string fenced(const std::string& code) { return "Here is the program.\n```\n" + code + "\n```\n"; }

// Serves scripted responses and remembers every request.
class ScriptedBackend : public Backend {
 public:
  explicit ScriptedBackend(std::vector<std::string> responses) : responses_(std::move(responses)) {}
  std::string complete(const std::vector<Message>& messages) override {
    requests.push_back(messages);
    if (next_ >= responses_.size()) throw BackendError("script exhausted");
    return responses_[next_++];
  }
  std::vector<std::vector<Message>> requests;

 private:
  std::vector<std::string> responses_;
  std::size_t next_ = 0;
};

LoopSettings tiny_settings(double eta) {
  LoopSettings s;
  s.tune.eta = eta;
  s.tune.max_init_iterations = 2;
  s.tune.tuning_iterations = 2;
  s.tune.retry_limit = 2;
  s.init_world = sim::make_preset("empty");
  s.init_world.max_steps = 12;
  s.tune_world = sim::make_preset("simple");
  s.tune_world.max_steps = 12;
  s.ppo.episodes_per_batch = 2;
  s.ppo.epochs_per_batch = 1;
  s.ppo.workers = 1;
  s.network = {8, 16, -1.0};
  s.init_budget = {1, 0, true};
  s.tune_budget = {1, 0, true};
  s.eval.episodes = 2;
  s.eval.workers = 1;
  s.seed = 99;
  return s;
}

struct LoopRun {
  std::string journal;
  InitResult init;
  std::optional<TuneResult> tune;
};

LoopRun run_loop(Backend& backend, const LoopSettings& settings) {
  std::ostringstream out;
  JournalWriter writer(out, nlohmann::ordered_json{{"seed", settings.seed}});
  LoopHooks hooks;
  hooks.on_iteration = [&](const IterationRecord& r, const ppo::Team&) { writer.append(r); };
  LoopRun run;
  run.init = run_initialization(backend, settings, hooks);
  if (run.init.accepted) run.tune = run_tuning(backend, settings, run.init, hooks);
  writer.finish(run.init.accepted ? "completed" : "no-accepted-reward");
  run.journal = out.str();
  return run;
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> lines;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) lines.push_back(l);
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines) {
  std::string s;
  for (const auto& l : lines) s += l + "\n";
  return s;
}

Journal parse_journal(const std::string& text) {
  std::istringstream in(text);
  return read_journal(in);
}

std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("fcca_test_llm_" + name + "_" + std::to_string(::getpid()));
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace

TEST_CASE("initial prompt structure") {
  const auto tasks = default_tasks();
  REQUIRE(tasks.size() == 5);
  CHECK(tasks[0].hard);
  CHECK(tasks[2].hard);
  CHECK_FALSE(tasks[3].hard);
  const auto prompt = build_initial_prompt(tasks);
  const auto msgs = render_messages(prompt);
  REQUIRE(msgs.size() == 2);
  CHECK(msgs[0].role == "system");
  CHECK(msgs[1].role == "user");
  const std::string& u = msgs[1].content;
  const auto pos = [&](const char* s) { return u.find(s); };
  CHECK(pos("## Reward language") < pos("## Context variables (reward-context/1)"));
  CHECK(pos("## Context variables") < pos("## Tasks"));
  CHECK(pos("## Tasks") < pos("## Request"));
  CHECK(pos("1. Avoid collisions") < pos("4. Keep the velocity steady"));
  CHECK(pos("## Evaluation history") == std::string::npos);
  CHECK(pos("reaching the destination") != std::string::npos);
  for (const auto& name : dsl::context_names()) CHECK(u.find(name) != std::string::npos);

  CHECK_THROWS_AS(build_initial_prompt({{"soft", false}, {"hard", true}}), ConfigError);
}

TEST_CASE("feedback history is ordered and rendered") {
  auto prompt = build_initial_prompt(default_tasks());
  prompt.add_feedback({0, "-goal_dist", "success_rate: 0.000000\n", "training_batches: 3\n", ""});
  prompt.add_feedback({1, "", "", "", "the proposed program was rejected: x"});
  CHECK_THROWS_AS(prompt.add_feedback({1, "", "", "", ""}), InputError);
  const std::string u = render_messages(prompt)[1].content;
  CHECK(u.find("## Evaluation history\n### Iteration 0\nReward program:\n```\n-goal_dist\n```\n") !=
        std::string::npos);
  CHECK(u.find("Policy summary:\ntraining_batches: 3\n") != std::string::npos);
  CHECK(u.find("### Iteration 1\nNote: the proposed program was rejected: x") != std::string::npos);
  CHECK(u.find("Revise the reward program") != std::string::npos);
}

TEST_CASE("feedback carries the six metrics and the convergence flag, not rewards") {
  eval::EvalReport r;
  r.success_rate = 0.5;
  const std::string f = format_feedback(r, true);
  CHECK(split_lines(f).size() == 7);
  CHECK(f.rfind("success_rate: 0.500000\n", 0) == 0);
  CHECK(f.find("loss_converged: true") != std::string::npos);
  CHECK(f.find("reward") == std::string::npos);
  ppo::TrainSummary s;
  s.batches = 4;
  s.history.push_back({});
  s.history.back().policy_loss = 0.25;
  CHECK(policy_summary(s) ==
        "training_batches: 4\nfinal_policy_loss: 0.250000\nfinal_value_loss: 0.000000\npolicy_entropy: 0.000000\n");
}

TEST_CASE("code block extraction") {
  CHECK(extract_code_block("```\n-goal_dist\n```") == "-goal_dist");
  CHECK(extract_code_block("text\n```rdsl\nlet a = 1;\na  \n\n```\nmore ```\nsecond\n```") == "let a = 1;\na");
  CHECK_FALSE(extract_code_block("no fence at all"));
  CHECK_FALSE(extract_code_block("```\nnever closed"));
  CHECK_FALSE(extract_code_block("```"));
}

TEST_CASE("program requests retry with diagnostics") {
  const auto prompt = build_initial_prompt(default_tasks());
  ScriptedBackend b({"I think speed matters.", fenced("goal_dist +"), fenced("-goal_dist")});
  const auto req = request_reward_program(b, prompt, 3);
  REQUIRE_FALSE(req.failed());
  CHECK(req.source == "-goal_dist");
  REQUIRE(req.attempts.size() == 3);
  CHECK(req.attempts[0].diagnostics == "the response contains no fenced code block");
  CHECK_FALSE(req.attempts[1].diagnostics.empty());
  CHECK(req.attempts[2].diagnostics.empty());
  CHECK(req.prompt == render_messages(prompt));
  REQUIRE(b.requests.size() == 3);
  const auto& third = b.requests[2];
  REQUIRE(third.size() == 6);
  CHECK(third[2] == Message{"assistant", "I think speed matters."});
  CHECK(third[3].content.rfind("The program was rejected:\nthe response contains no fenced code block", 0) == 0);
  CHECK(third[5].content.find(req.attempts[1].diagnostics) != std::string::npos);

  ScriptedBackend bad({"nothing", fenced("foo(")});
  const auto failed = request_reward_program(bad, prompt, 2);
  CHECK(failed.failed());
  CHECK(failed.attempts.size() == 2);
  CHECK(bad.requests.size() == 2);
}

TEST_CASE("initialization rejects invalid candidates and keeps going") {
  auto settings = tiny_settings(1.0);  // unreachable threshold: no candidate is accepted
  settings.tune.max_init_iterations = 3;
  ScriptedBackend b({"no code", "still no code", fenced("log(collision)"), fenced("-goal_dist")});
  std::vector<IterationRecord> seen;
  LoopHooks hooks;
  hooks.on_iteration = [&](const IterationRecord& r, const ppo::Team&) { seen.push_back(r); };
  const auto init = run_initialization(b, settings, hooks);
  CHECK_FALSE(init.accepted);
  REQUIRE(init.records.size() == 3);
  CHECK(seen.size() == 3);
  CHECK(init.records[0].decision == Decision::RejectCandidate);
  CHECK_FALSE(init.records[0].training);
  CHECK(init.records[1].decision == Decision::RejectCandidate);  // log(0) while training
  CHECK(init.records[1].note.find("reward evaluation failed") != std::string::npos);
  CHECK(init.records[2].decision == Decision::Continue);
  REQUIRE(init.records[2].report);
  CHECK(init.records[2].training->batches == 1);
  // Each later prompt reports what happened before.
  CHECK(b.requests[2][1].content.find("Note: the proposed program was rejected") != std::string::npos);
  CHECK(b.requests[3][1].content.find("### Iteration 1\nReward program:\n```\nlog(collision)") != std::string::npos);
}

TEST_CASE("tuning keeps the previous program when a candidate fails") {
  const auto settings = tiny_settings(0.0);
  ScriptedBackend b({fenced("-goal_dist"), fenced("-goal_dist - collision"), "no code", "nope"});
  const auto run = run_loop(b, settings);
  REQUIRE(run.init.accepted);
  REQUIRE(run.init.records.size() == 1);
  CHECK(run.init.records[0].decision == Decision::Accept);
  REQUIRE(run.tune);
  const auto& recs = run.tune->records;
  REQUIRE(recs.size() == 2);
  CHECK(recs[0].decision == Decision::Accept);
  CHECK(recs[0].trained_source == "-goal_dist");
  CHECK(recs[0].reward_source == "-goal_dist - collision");
  CHECK(recs[1].decision == Decision::RejectCandidate);
  CHECK(recs[1].trained_source == "-goal_dist - collision");
  CHECK(recs[1].note.find("previous program stays in use") != std::string::npos);
  CHECK(run.tune->final_source == "-goal_dist - collision");
  // Tuning prompts carry the evaluation of the policy trained in the complex world.
  CHECK(b.requests[1][1].content.find("### Iteration 1\n") != std::string::npos);
  CHECK_THROWS_AS(run_tuning(b, settings, InitResult{}), InputError);
}

TEST_CASE("the loop is reproducible and its journal verifies") {
  const auto settings = tiny_settings(0.0);
  const std::vector<std::string> responses{fenced("-goal_dist"), "oops", fenced("-goal_dist - collision"),
                                           fenced("-goal_dist - 2*collision")};
  ScriptedBackend first(responses), second(responses);
  const auto a = run_loop(first, settings);
  const auto b = run_loop(second, settings);
  CHECK(a.journal == b.journal);

  const Journal j = parse_journal(a.journal);
  CHECK(j.records.size() == 3);
  CHECK(j.outcome == "completed");
  CHECK(j.config["seed"] == 99);
  CHECK(journal_responses(j) == responses);
  CHECK(j.lines == split_lines(a.journal));
  const auto& rec = j.records[1];
  CHECK(rec["stage"] == "tune");
  CHECK(rec["attempts"].size() == 2);
  CHECK(rec["decision"] == "accept");
  CHECK(rec.begin().key() == "type");
}

TEST_CASE("tampered or incomplete journals are rejected") {
  const auto settings = tiny_settings(0.0);
  ScriptedBackend backend({fenced("-goal_dist"), fenced("-goal_dist"), fenced("-goal_dist")});
  const auto run = run_loop(backend, settings);
  const auto lines = split_lines(run.journal);
  REQUIRE(lines.size() == 5);

  auto edited = lines;
  const auto at = edited[2].find("-goal_dist");
  REQUIRE(at != std::string::npos);
  edited[2].replace(at, 10, "+goal_dist");
  try {
    parse_journal(join_lines(edited));
    FAIL("edit not detected");
  } catch (const JournalError& e) {
    CHECK(std::string(e.what()).find("line 3") != std::string::npos);
  }

  auto reordered = lines;
  std::swap(reordered[1], reordered[2]);
  CHECK_THROWS_AS(parse_journal(join_lines(reordered)), JournalError);

  auto cut = lines;
  cut.pop_back();
  try {
    parse_journal(join_lines(cut));
    FAIL("truncation not detected");
  } catch (const JournalError& e) {
    CHECK(std::string(e.what()).find("truncated") != std::string::npos);
  }
  std::string partial = join_lines(lines);
  partial.resize(partial.size() - 20);
  CHECK_THROWS_AS(parse_journal(partial), JournalError);
  CHECK_THROWS_AS(parse_journal(""), JournalError);
  CHECK_THROWS_AS(parse_journal(join_lines(lines) + lines.back() + "\n"), JournalError);
  CHECK_THROWS_AS(parse_journal(join_lines({lines[1], lines[0]})), JournalError);
}

TEST_CASE("replay and record backends") {
  const auto dir = scratch_dir("replay");
  std::ofstream(dir / "02.txt") << "second";
  std::ofstream(dir / "01.txt") << "first";
  std::ofstream(dir / "10.txt") << "third";
  auto from_dir = ReplayBackend::from_path(dir);
  CHECK(from_dir.remaining() == 3);
  CHECK(from_dir.complete({}) == "first");
  CHECK(from_dir.complete({}) == "second");
  CHECK(from_dir.complete({}) == "third");
  CHECK_THROWS_AS(from_dir.complete({}), BackendError);

  const auto transcript = dir / "transcript.jsonl";
  {
    RecordBackend rec(std::make_unique<ReplayBackend>(std::vector<std::string>{"a\n```\nx\n```", "b"}), transcript);
    CHECK(rec.complete({{"user", "hello"}}) == "a\n```\nx\n```");
    CHECK(rec.complete({{"user", "again"}}) == "b");
  }
  std::ifstream in(transcript);
  std::string line;
  std::getline(in, line);
  const auto j = nlohmann::json::parse(line);
  CHECK(j["request"][0]["content"] == "hello");
  auto replay = ReplayBackend::from_path(transcript);
  CHECK(replay.remaining() == 2);
  CHECK(replay.complete({}) == "a\n```\nx\n```");

  std::ofstream(dir / "bad.jsonl") << "{\"request\": []}\n";
  CHECK_THROWS_AS(ReplayBackend::from_path(dir / "bad.jsonl"), ConfigError);
  CHECK_THROWS_AS(ReplayBackend::from_path(dir / "missing.jsonl"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("HTTP backend speaks chat completions and retries server errors") {
  httplib::Server server;
  std::atomic<int> calls{0};
  std::atomic<int> failures_left{2};
  std::string seen_auth, seen_model;
  std::size_t seen_messages = 0;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    if (failures_left-- > 0) {
      res.status = 503;
      return;
    }
    seen_auth = req.get_header_value("Authorization");
    const auto body = nlohmann::json::parse(req.body);
    seen_model = body["model"].get<std::string>();
    seen_messages = body["messages"].size();
    res.set_content(R"({"choices":[{"message":{"role":"assistant","content":"```\n-goal_dist\n```"}}]})",
                    "application/json");
  });
  server.Post("/missing", [](const httplib::Request&, httplib::Response& res) { res.status = 404; });
  server.Post("/garbled", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("{\"choices\": []}", "application/json");
  });
  const int port = server.bind_to_any_port("127.0.0.1");
  std::thread thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  ::setenv("FCCA_TEST_TOKEN", "s3cret", 1);
  HttpConfig cfg;
  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";
  cfg.token_env = "FCCA_TEST_TOKEN";
  cfg.model = "test-model";
  cfg.timeout_s = 5;
  cfg.max_retries = 3;
  auto backend = make_http_backend(cfg);
  const std::vector<Message> msgs{{"system", "s"}, {"user", "u"}};
  CHECK(backend->complete(msgs) == "```\n-goal_dist\n```");
  CHECK(calls == 3);
  CHECK(seen_auth == "Bearer s3cret");
  CHECK(seen_model == "test-model");
  CHECK(seen_messages == 2);

  failures_left = 100;
  cfg.max_retries = 1;
  CHECK_THROWS_AS(make_http_backend(cfg)->complete(msgs), TransportError);

  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/missing";
  try {
    make_http_backend(cfg)->complete(msgs);
    FAIL("expected a backend error");
  } catch (const TransportError&) {
    FAIL("a 404 must not be retried as a transport failure");
  } catch (const BackendError& e) {
    CHECK(std::string(e.what()).find("404") != std::string::npos);
  }
  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/garbled";
  CHECK_THROWS_AS(make_http_backend(cfg)->complete(msgs), BackendError);

  server.stop();
  thread.join();

  cfg.max_retries = 0;
  cfg.url = "http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions";  // nobody listening now
  CHECK_THROWS_AS(make_http_backend(cfg)->complete(msgs), TransportError);
}

TEST_CASE("HTTP backend configuration errors") {
  HttpConfig cfg;
  cfg.token_env = "FCCA_TEST_TOKEN_UNSET";
  ::unsetenv("FCCA_TEST_TOKEN_UNSET");
  CHECK_THROWS_AS(make_http_backend(cfg), ConfigError);
  ::setenv("FCCA_TEST_TOKEN_UNSET", "", 1);
  CHECK_THROWS_AS(make_http_backend(cfg), ConfigError);
  ::setenv("FCCA_TEST_TOKEN_UNSET", "t", 1);
  cfg.timeout_s = 0;
  CHECK_THROWS_AS(make_http_backend(cfg), ConfigError);
  cfg.timeout_s = 1;
  cfg.url = "ftp://example";
  CHECK_THROWS_AS(make_http_backend(cfg), ConfigError);
}

TEST_CASE("loop settings are validated") {
  TuneConfig t;
  t.eta = 1.5;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t.eta = 0.5;
  t.retry_limit = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}
