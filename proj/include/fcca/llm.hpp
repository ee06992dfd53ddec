#pragma once

// Reward design loop driven by a language model: prompt construction,
// program acquisition with validation retries, initialization in the simple
// world, tuning in the complex world, and the run journal.

#include <nlohmann/json.hpp>

#include <cstdint>
#include <deque>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "fcca/dsl.hpp"
#include "fcca/eval.hpp"
#include "fcca/ppo.hpp"

namespace fcca::llm {

class BackendError : public Error {
 public:
  using Error::Error;
};
// Network failure or timeout; the HTTP backend retries these itself.
class TransportError : public BackendError {
 public:
  using BackendError::BackendError;
};
class JournalError : public Error {
 public:
  using Error::Error;
};

// ---- prompt -----------------------------------------------------------------

struct Task {
  std::string text;
  bool hard = true;
};

// Hard tasks first, each group in priority order.
std::vector<Task> default_tasks();

struct FeedbackEntry {
  std::size_t iteration = 0;
  std::string reward_source;  // program the policy was trained with
  std::string feedback;       // format_feedback output, or empty for a failed candidate
  std::string policy_summary;
  std::string note;           // e.g. why a candidate was rejected
};

struct PromptState {
  std::string system_text;
  std::string schema_version;
  std::string schema_text;
  std::vector<Task> tasks;
  std::vector<FeedbackEntry> history;  // strictly increasing iteration

  void add_feedback(FeedbackEntry entry);
};

// Throws ConfigError when a hard task follows a soft one.
PromptState build_initial_prompt(std::vector<Task> tasks);

struct Message {
  std::string role;  // "system", "user" or "assistant"
  std::string content;
  friend bool operator==(const Message&, const Message&) = default;
};

std::vector<Message> render_messages(const PromptState& prompt);
nlohmann::json messages_to_json(const std::vector<Message>& messages);

// The six report lines plus the loss-convergence flag. Reward magnitudes are
// deliberately absent.
std::string format_feedback(const eval::EvalReport& report, bool loss_converged);
// Training statistics shown next to the feedback: batches, final losses and
// policy entropy.
std::string policy_summary(const ppo::TrainSummary& summary);

// ---- backends ---------------------------------------------------------------

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string complete(const std::vector<Message>& messages) = 0;
};

struct HttpConfig {
  std::string url = "http://127.0.0.1:8000/v1/chat/completions";
  std::string model = "qwen2.5-72b-instruct";
  double timeout_s = 120.0;
  std::size_t max_retries = 3;
  std::string token_env = "FCCA_LLM_TOKEN";
  double temperature = 0.2;
};

// Chat-completion client. The bearer token is read from the environment
// variable named by token_env when the backend is built; a missing or empty
// token is a ConfigError.
std::unique_ptr<Backend> make_http_backend(const HttpConfig& config);

// Serves archived responses strictly in order.
class ReplayBackend : public Backend {
 public:
  explicit ReplayBackend(std::vector<std::string> responses);
  // A directory holds one response per file, ordered by file name; any other
  // path is read as a record-mode transcript.
  static ReplayBackend from_path(const std::filesystem::path& path);
  std::string complete(const std::vector<Message>& messages) override;
  std::size_t remaining() const { return responses_.size(); }

 private:
  std::deque<std::string> responses_;
};

// Forwards to `inner` and appends every exchange to a transcript file (one
// JSON object per line with "request" and "response").
class RecordBackend : public Backend {
 public:
  RecordBackend(std::unique_ptr<Backend> inner, std::filesystem::path transcript);
  std::string complete(const std::vector<Message>& messages) override;

 private:
  std::unique_ptr<Backend> inner_;
  std::filesystem::path transcript_;
};

// ---- program acquisition ----------------------------------------------------

// Contents of the first fenced code block, if any.
std::optional<std::string> extract_code_block(const std::string& response);

struct Attempt {
  std::string response;
  std::string diagnostics;  // empty when the program was accepted
};

struct ProgramRequest {
  std::vector<Message> prompt;  // messages of the first call
  std::vector<Attempt> attempts;
  std::optional<dsl::RewardProgram> program;
  std::string source;  // extracted text of the accepted program
  bool failed() const { return !program.has_value(); }
};

// At most retry_limit calls; each rejected response is answered with its
// diagnostics before the next call.
ProgramRequest request_reward_program(Backend& backend, const PromptState& prompt, std::size_t retry_limit);

// ---- loop -------------------------------------------------------------------

struct TuneConfig {
  double eta = 0.5;
  std::size_t max_init_iterations = 3;
  std::size_t tuning_iterations = 3;
  std::size_t retry_limit = 3;

  void validate() const;
};

enum class Decision { Continue, Accept, RejectCandidate };
const char* to_string(Decision d);

struct TrainingDigest {
  std::size_t batches = 0;
  bool converged = false;
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double train_success_rate = 0.0;
};

struct IterationRecord {
  std::string stage;  // "init" or "tune"
  std::size_t k = 0;
  std::vector<Message> prompt;
  std::vector<Attempt> attempts;
  std::string reward_source;   // program obtained this iteration (empty on failure)
  std::string trained_source;  // program the evaluated policy was trained with
  std::optional<TrainingDigest> training;
  std::optional<eval::EvalReport> report;
  Decision decision = Decision::Continue;
  std::string note;
};

nlohmann::ordered_json record_to_json(const IterationRecord& record);

struct LoopSettings {
  TuneConfig tune;
  sim::WorldConfig init_world;
  sim::WorldConfig tune_world;
  ppo::PpoConfig ppo;
  ppo::NetworkConfig network;
  ppo::TrainBudget init_budget;
  ppo::TrainBudget tune_budget;
  eval::EvalConfig eval;
  std::uint64_t seed = 0;
  std::vector<Task> tasks = default_tasks();
};

struct LoopHooks {
  std::function<void(const std::string& stage, std::size_t k, const ppo::BatchStats&)> on_batch;
  std::function<void(const IterationRecord&, const ppo::Team&)> on_iteration;
};

struct InitResult {
  bool accepted = false;
  std::string reward_source;
  std::optional<dsl::RewardProgram> program;
  std::optional<ppo::Team> team;
  std::vector<IterationRecord> records;
  PromptState prompt;
};

InitResult run_initialization(Backend& backend, const LoopSettings& settings, const LoopHooks& hooks = {});

struct TuneResult {
  ppo::Team team;
  std::vector<IterationRecord> records;
  std::string final_source;
};

TuneResult run_tuning(Backend& backend, const LoopSettings& settings, InitResult init, const LoopHooks& hooks = {});

// ---- journal ----------------------------------------------------------------

// Line-delimited run journal: a header carrying the run configuration, one
// line per iteration record, then an end marker. Every line carries a SHA-256
// chained over all previous lines, so any edit shows up at the edited line.
class JournalWriter {
 public:
  JournalWriter(std::ostream& out, const nlohmann::ordered_json& config);
  void append(const IterationRecord& record);
  void finish(const std::string& outcome);

 private:
  void write(nlohmann::ordered_json line);
  std::ostream& out_;
  std::string chain_;
  std::size_t records_ = 0;
};

// Parsed with key order preserved, so re-serializing gives the archived text.
struct Journal {
  nlohmann::ordered_json config;
  std::vector<nlohmann::ordered_json> records;
  std::vector<std::string> lines;  // raw text of every line
  std::string outcome;
};

// Throws JournalError on a malformed or truncated journal.
Journal read_journal(std::istream& in);

// Every archived response in the order the loop consumed them.
std::vector<std::string> journal_responses(const Journal& journal);

std::string sha256_hex(std::string_view data);

}  // namespace fcca::llm
