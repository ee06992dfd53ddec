#include "fcca/llm.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fcca::llm {

// ---- prompt -----------------------------------------------------------------

std::vector<Task> default_tasks() {
  return {
      {"Avoid collisions with the moving and static obstacles.", true},
      {"Keep the desired formation shape while moving.", true},
      {"Bring the team to the destination.", true},
      {"Keep the velocity steady (small accelerations), so the policy transfers to real robots.", false},
      {"Finish the mission as quickly as possible.", false},
  };
}

void PromptState::add_feedback(FeedbackEntry entry) {
  if (!history.empty() && entry.iteration <= history.back().iteration)
    throw InputError("feedback history must be strictly ordered by iteration");
  history.push_back(std::move(entry));
}

PromptState build_initial_prompt(std::vector<Task> tasks) {
  bool seen_soft = false;
  for (const auto& t : tasks) {
    if (!t.hard) seen_soft = true;
    if (t.hard && seen_soft) throw ConfigError("task list: hard tasks must precede soft tasks");
  }
  PromptState p;
  p.system_text =
      "You are a reward function designer for multi-agent reinforcement learning. A team of robots "
      "must travel to a destination in formation while avoiding obstacles. You write reward programs "
      "in a small expression language and you improve them using evaluation metrics of the trained "
      "policies. Always answer with exactly one reward program inside a single fenced code block.";
  p.schema_version = dsl::kSchemaVersion;
  p.schema_text = dsl::schema_text();
  p.tasks = std::move(tasks);
  return p;
}

namespace {

constexpr const char* kLanguageNotes =
    "A program is zero or more bindings `let name = expr;` followed by one numeric expression, the "
    "reward for one agent at one step.\n"
    "Operators: + - * / (numeric), < <= > >= == (comparisons), and, or, not (logic).\n"
    "Conditional: if(condition, then_value, else_value); comparisons and logic may only appear in "
    "the condition.\n"
    "Functions: abs(x) exp(x) log(x) sqrt(x) tanh(x) min(a, b) max(a, b) pow(a, b) clamp(x, lo, hi).\n"
    "log needs x > 0, sqrt needs x >= 0, division by zero is an error; results are clamped to "
    "[-1e6, 1e6]. Comments start with #.\n"
    "Every agent evaluates the program on its own context; the team reward is the mean over agents.";

std::string render_user(const PromptState& p) {
  std::ostringstream os;
  os << "## Reward language\n" << kLanguageNotes << "\n\n";
  os << "## Context variables (" << p.schema_version << ")\n" << p.schema_text << "\n";
  os << "## Tasks\nHard tasks, in priority order:\n";
  std::size_t i = 1;
  for (const auto& t : p.tasks)
    if (t.hard) os << i++ << ". " << t.text << "\n";
  os << "Soft tasks, to pursue once the hard tasks are met:\n";
  for (const auto& t : p.tasks)
    if (!t.hard) os << i++ << ". " << t.text << "\n";
  os << "\n";
  if (p.history.empty()) {
    os << "## Request\nStart with a simple program whose main goal is reaching the destination; the "
          "other tasks are added in later revisions once this one trains successfully. Reply with the "
          "program in one fenced code block.\n";
    return os.str();
  }
  os << "## Evaluation history\n";
  for (const auto& h : p.history) {
    os << "### Iteration " << h.iteration << "\n";
    if (!h.reward_source.empty()) os << "Reward program:\n```\n" << h.reward_source << "\n```\n";
    if (!h.feedback.empty()) os << "Evaluation:\n" << h.feedback;
    if (!h.policy_summary.empty()) os << "Policy summary:\n" << h.policy_summary;
    if (!h.note.empty()) os << "Note: " << h.note << "\n";
    os << "\n";
  }
  os << "## Request\nRevise the reward program so that the evaluation metrics improve, hard tasks "
        "first. Reply with the complete program in one fenced code block.\n";
  return os.str();
}

}  // namespace

std::vector<Message> render_messages(const PromptState& prompt) {
  return {{"system", prompt.system_text}, {"user", render_user(prompt)}};
}

nlohmann::json messages_to_json(const std::vector<Message>& messages) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& m : messages) a.push_back({{"role", m.role}, {"content", m.content}});
  return a;
}

std::string format_feedback(const eval::EvalReport& report, bool loss_converged) {
  return eval::serialize_report(report) + "loss_converged: " + (loss_converged ? "true" : "false") + "\n";
}

std::string policy_summary(const ppo::TrainSummary& summary) {
  char buf[256];
  const ppo::BatchStats last = summary.history.empty() ? ppo::BatchStats{} : summary.history.back();
  std::snprintf(buf, sizeof buf,
                "training_batches: %zu\nfinal_policy_loss: %.6f\nfinal_value_loss: %.6f\npolicy_entropy: %.6f\n",
                summary.batches, last.policy_loss, last.value_loss, last.entropy);
  return buf;
}

// ---- backends ---------------------------------------------------------------

ReplayBackend::ReplayBackend(std::vector<std::string> responses)
    : responses_(std::make_move_iterator(responses.begin()), std::make_move_iterator(responses.end())) {}

namespace {
std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}
}  // namespace

ReplayBackend ReplayBackend::from_path(const std::filesystem::path& path) {
  std::vector<std::string> responses;
  if (std::filesystem::is_directory(path)) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(path))
      if (e.is_regular_file()) files.push_back(e.path());
    std::sort(files.begin(), files.end(),
              [](const auto& a, const auto& b) { return a.filename().string() < b.filename().string(); });
    for (const auto& f : files) responses.push_back(read_file(f));
    return ReplayBackend(std::move(responses));
  }
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read replay transcript " + path.string());
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (line.empty()) continue;
    try {
      responses.push_back(nlohmann::json::parse(line).at("response").get<std::string>());
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError("replay transcript line " + std::to_string(n) + ": " + e.what());
    }
  }
  return ReplayBackend(std::move(responses));
}

std::string ReplayBackend::complete(const std::vector<Message>&) {
  if (responses_.empty()) throw BackendError("replay backend has no responses left");
  std::string r = std::move(responses_.front());
  responses_.pop_front();
  return r;
}

RecordBackend::RecordBackend(std::unique_ptr<Backend> inner, std::filesystem::path transcript)
    : inner_(std::move(inner)), transcript_(std::move(transcript)) {}

std::string RecordBackend::complete(const std::vector<Message>& messages) {
  std::string response = inner_->complete(messages);
  std::ofstream out(transcript_, std::ios::app);
  if (!out) throw BackendError("cannot append to transcript " + transcript_.string());
  nlohmann::ordered_json j;
  j["request"] = messages_to_json(messages);
  j["response"] = response;
  out << j.dump() << "\n";
  out.flush();
  return response;
}

// ---- program acquisition ----------------------------------------------------

std::optional<std::string> extract_code_block(const std::string& response) {
  const auto open = response.find("```");
  if (open == std::string::npos) return std::nullopt;
  const auto body = response.find('\n', open);
  if (body == std::string::npos) return std::nullopt;
  const auto close = response.find("```", body + 1);
  if (close == std::string::npos) return std::nullopt;
  std::string code = response.substr(body + 1, close - body - 1);
  while (!code.empty() && (code.back() == '\n' || code.back() == '\r' || code.back() == ' ')) code.pop_back();
  return code;
}

ProgramRequest request_reward_program(Backend& backend, const PromptState& prompt, std::size_t retry_limit) {
  ProgramRequest req;
  std::vector<Message> messages = render_messages(prompt);
  req.prompt = messages;
  for (std::size_t attempt = 0; attempt < retry_limit; ++attempt) {
    Attempt a;
    a.response = backend.complete(messages);
    const auto code = extract_code_block(a.response);
    if (!code) {
      a.diagnostics = "the response contains no fenced code block";
    } else {
      dsl::CompileResult compiled = dsl::compile(*code);
      if (compiled.program) {
        req.attempts.push_back(std::move(a));
        req.program = std::move(compiled.program);
        req.source = *code;
        return req;
      }
      a.diagnostics = dsl::format_diagnostics(compiled.diagnostics);
    }
    messages.push_back({"assistant", a.response});
    messages.push_back({"user", "The program was rejected:\n" + a.diagnostics +
                                    "\nReply with a corrected program in one fenced code block."});
    req.attempts.push_back(std::move(a));
  }
  return req;
}

// ---- loop -------------------------------------------------------------------

void TuneConfig::validate() const {
  if (!(eta >= 0.0 && eta <= 1.0)) throw ConfigError("tune: eta must be in [0, 1]");
  if (max_init_iterations == 0) throw ConfigError("tune: max_init_iterations must be positive");
  if (tuning_iterations == 0) throw ConfigError("tune: tuning_iterations must be positive");
  if (retry_limit == 0) throw ConfigError("tune: retry_limit must be positive");
}

const char* to_string(Decision d) {
  switch (d) {
    case Decision::Continue: return "continue";
    case Decision::Accept: return "accept";
    case Decision::RejectCandidate: return "reject-candidate";
  }
  return "?";
}

namespace {

TrainingDigest digest(const ppo::TrainSummary& s) {
  TrainingDigest d;
  d.batches = s.batches;
  d.converged = s.converged;
  if (!s.history.empty()) {
    const auto& last = s.history.back();
    d.policy_loss = last.policy_loss;
    d.value_loss = last.value_loss;
    d.entropy = last.entropy;
    d.train_success_rate = last.train_success_rate;
  }
  return d;
}

std::string last_diagnostics(const ProgramRequest& req) {
  return req.attempts.empty() ? std::string() : req.attempts.back().diagnostics;
}

std::function<bool(const ppo::BatchStats&)> batch_hook(const LoopHooks& hooks, const char* stage, std::size_t k) {
  if (!hooks.on_batch) return {};
  return [&hooks, stage, k](const ppo::BatchStats& s) {
    hooks.on_batch(stage, k, s);
    return true;
  };
}

void notify(const LoopHooks& hooks, const IterationRecord& rec, const ppo::Team& team) {
  if (hooks.on_iteration) hooks.on_iteration(rec, team);
}

}  // namespace

InitResult run_initialization(Backend& backend, const LoopSettings& settings, const LoopHooks& hooks) {
  settings.tune.validate();
  InitResult result;
  result.prompt = build_initial_prompt(settings.tasks);
  for (std::size_t k = 0; k < settings.tune.max_init_iterations; ++k) {
    IterationRecord rec;
    rec.stage = "init";
    rec.k = k;
    ProgramRequest req = request_reward_program(backend, result.prompt, settings.tune.retry_limit);
    rec.prompt = req.prompt;
    rec.attempts = req.attempts;
    ppo::Team team = ppo::Team::create(settings.init_world, settings.network, settings.ppo,
                                       derive_seed(settings.seed, {0x1417, k}));
    if (req.failed()) {
      rec.decision = Decision::RejectCandidate;
      rec.note = "no valid program after " + std::to_string(req.attempts.size()) + " attempts";
      result.prompt.add_feedback({k, "", "", "", "the proposed program was rejected: " + last_diagnostics(req)});
      result.records.push_back(rec);
      notify(hooks, rec, team);
      continue;
    }
    rec.reward_source = rec.trained_source = req.source;
    ppo::TrainSummary summary;
    try {
      summary = ppo::train(team, settings.init_world, *req.program, settings.ppo, settings.init_budget,
                           derive_seed(settings.seed, {0x1417, k, 1}), 0, batch_hook(hooks, "init", k));
    } catch (const dsl::DomainError& e) {
      rec.decision = Decision::RejectCandidate;
      rec.note = std::string("reward evaluation failed during training: ") + e.what();
      result.prompt.add_feedback({k, req.source, "", "", rec.note});
      result.records.push_back(rec);
      notify(hooks, rec, team);
      continue;
    }
    const eval::EvalReport report = eval::run_evaluation(
        eval::team_policy(team, settings.eval.deterministic_policy), settings.init_world, settings.eval);
    rec.training = digest(summary);
    rec.report = report;
    result.prompt.add_feedback({k, req.source, format_feedback(report, summary.converged), policy_summary(summary), ""});
    if (report.success_rate >= settings.tune.eta) {
      rec.decision = Decision::Accept;
      result.records.push_back(rec);
      notify(hooks, rec, team);
      result.accepted = true;
      result.reward_source = req.source;
      result.program = std::move(req.program);
      result.team = std::move(team);
      return result;
    }
    rec.decision = Decision::Continue;
    result.records.push_back(rec);
    notify(hooks, rec, team);
  }
  return result;
}

TuneResult run_tuning(Backend& backend, const LoopSettings& settings, InitResult init, const LoopHooks& hooks) {
  settings.tune.validate();
  if (!init.accepted || !init.team || !init.program) throw InputError("run_tuning needs an accepted initialization");
  TuneResult result{std::move(*init.team), {}, init.reward_source};
  dsl::RewardProgram program = std::move(*init.program);
  PromptState prompt = std::move(init.prompt);
  std::size_t batch = 0;
  for (std::size_t k = 1; k <= settings.tune.tuning_iterations; ++k) {
    IterationRecord rec;
    rec.stage = "tune";
    rec.k = k;
    rec.trained_source = result.final_source;
    ppo::TrainSummary summary;
    try {
      summary = ppo::train(result.team, settings.tune_world, program, settings.ppo, settings.tune_budget,
                           derive_seed(settings.seed, {0x7e2e, k}), batch, batch_hook(hooks, "tune", k));
    } catch (const dsl::DomainError& e) {
      rec.note = std::string("training stopped, reward evaluation failed: ") + e.what();
    }
    batch += summary.batches;
    const eval::EvalReport report = eval::run_evaluation(
        eval::team_policy(result.team, settings.eval.deterministic_policy), settings.tune_world, settings.eval);
    rec.training = digest(summary);
    rec.report = report;
    prompt.add_feedback({k, result.final_source, format_feedback(report, summary.converged), policy_summary(summary),
                         rec.note});
    ProgramRequest req = request_reward_program(backend, prompt, settings.tune.retry_limit);
    rec.prompt = req.prompt;
    rec.attempts = req.attempts;
    if (req.failed()) {
      rec.decision = Decision::RejectCandidate;
      const std::string why = "the program proposed after this evaluation was rejected (" + last_diagnostics(req) +
                              "); the previous program stays in use";
      rec.note = rec.note.empty() ? why : rec.note + "; " + why;
      prompt.history.back().note = rec.note;
    } else {
      rec.decision = Decision::Accept;
      rec.reward_source = req.source;
      result.final_source = req.source;
      program = std::move(*req.program);
    }
    result.records.push_back(rec);
    notify(hooks, rec, result.team);
  }
  return result;
}

nlohmann::ordered_json record_to_json(const IterationRecord& r) {
  nlohmann::ordered_json j;
  j["type"] = "iteration";
  j["stage"] = r.stage;
  j["k"] = r.k;
  j["prompt"] = messages_to_json(r.prompt);
  nlohmann::ordered_json attempts = nlohmann::ordered_json::array();
  for (const auto& a : r.attempts) {
    nlohmann::ordered_json aj;
    aj["response"] = a.response;
    aj["diagnostics"] = a.diagnostics;
    attempts.push_back(std::move(aj));
  }
  j["attempts"] = std::move(attempts);
  j["reward_source"] = r.reward_source;
  j["trained_source"] = r.trained_source;
  if (r.training) {
    nlohmann::ordered_json t;
    t["batches"] = r.training->batches;
    t["converged"] = r.training->converged;
    t["policy_loss"] = r.training->policy_loss;
    t["value_loss"] = r.training->value_loss;
    t["entropy"] = r.training->entropy;
    t["train_success_rate"] = r.training->train_success_rate;
    j["training"] = std::move(t);
  } else {
    j["training"] = nullptr;
  }
  if (r.report) {
    j["report"] = eval::report_to_json(*r.report);
  } else {
    j["report"] = nullptr;
  }
  j["decision"] = to_string(r.decision);
  j["note"] = r.note;
  return j;
}

// ---- journal ----------------------------------------------------------------

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static constexpr char kHex[] = "0123456789abcdef";
  std::string out;
  out.reserve(2 * len);
  for (unsigned int i = 0; i < len; ++i) {
    out.push_back(kHex[digest[i] >> 4]);
    out.push_back(kHex[digest[i] & 0xf]);
  }
  return out;
}

JournalWriter::JournalWriter(std::ostream& out, const nlohmann::ordered_json& config) : out_(out) {
  nlohmann::ordered_json h;
  h["type"] = "header";
  h["format"] = "fcca-journal/1";
  h["schema"] = dsl::kSchemaVersion;
  h["config"] = config;
  write(std::move(h));
}

void JournalWriter::append(const IterationRecord& record) {
  write(record_to_json(record));
  ++records_;
}

void JournalWriter::finish(const std::string& outcome) {
  nlohmann::ordered_json e;
  e["type"] = "end";
  e["records"] = records_;
  e["outcome"] = outcome;
  write(std::move(e));
}

void JournalWriter::write(nlohmann::ordered_json line) {
  chain_ = sha256_hex(chain_ + line.dump());
  line["chain"] = chain_;
  out_ << line.dump() << "\n";
  out_.flush();
  if (!out_) throw JournalError("failed to write the journal");
}

Journal read_journal(std::istream& in) {
  Journal j;
  std::string line;
  bool ended = false;
  std::size_t n = 0;
  std::string chain;
  while (std::getline(in, line)) {
    ++n;
    if (ended) throw JournalError("journal line " + std::to_string(n) + ": content after the end marker");
    nlohmann::ordered_json obj;
    try {
      obj = nlohmann::ordered_json::parse(line);
    } catch (const nlohmann::json::exception&) {
      throw JournalError("journal line " + std::to_string(n) + " is not valid JSON (truncated journal?)");
    }
    if (!obj.is_object() || !obj.contains("chain") || !obj["chain"].is_string())
      throw JournalError("journal line " + std::to_string(n) + " has no chain digest");
    const std::string digest = obj["chain"].get<std::string>();
    obj.erase("chain");
    chain = sha256_hex(chain + obj.dump());
    if (digest != chain) throw JournalError("journal line " + std::to_string(n) + " fails the chain check (edited?)");
    const std::string type = obj.value("type", "");
    if (n == 1 && type != "header") throw JournalError("journal does not start with a header");
    if (type == "header") {
      if (n != 1) throw JournalError("journal line " + std::to_string(n) + ": unexpected header");
      if (!obj.contains("config")) throw JournalError("journal header has no config");
      j.config = obj["config"];
    } else if (type == "iteration") {
      j.records.push_back(obj);
    } else if (type == "end") {
      if (obj.value("records", std::size_t{0}) != j.records.size())
        throw JournalError("journal end marker disagrees with the record count");
      j.outcome = obj.value("outcome", "");
      ended = true;
    } else {
      throw JournalError("journal line " + std::to_string(n) + ": unknown record type '" + type + "'");
    }
    j.lines.push_back(line);
  }
  if (n == 0) throw JournalError("journal is empty");
  if (!ended) throw JournalError("journal is truncated (no end marker)");
  return j;
}

std::vector<std::string> journal_responses(const Journal& journal) {
  std::vector<std::string> out;
  for (const auto& r : journal.records) {
    if (!r.contains("attempts") || !r["attempts"].is_array())
      throw JournalError("journal record without attempts");
    for (const auto& a : r["attempts"]) out.push_back(a.at("response").get<std::string>());
  }
  return out;
}

}  // namespace fcca::llm
