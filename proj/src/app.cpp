#include "fcca/app.hpp"

#include <unistd.h>

#include <cstdio>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "fcca/random.hpp"

namespace fcca::app {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

void atomic_write(const fs::path& path, std::string_view content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + tmp.string());
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) throw Error("failed writing " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw Error("cannot move " + tmp.string() + " to " + path.string() + ": " + ec.message());
  }
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

namespace {

// Maps typed errors to exit codes; nothing escapes a command.
template <class F>
int guarded(std::ostream& err, F&& body) {
  try {
    return body();
  } catch (const ConfigError& e) {
    err << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const nn::CheckpointError& e) {
    err << "checkpoint error: " << e.what() << "\n";
    return kExitCheckpoint;
  } catch (const llm::JournalError& e) {
    err << "journal error: " << e.what() << "\n";
    return kExitJournal;
  } catch (const dsl::DomainError& e) {
    err << "reward evaluation error: " << e.what() << "\n";
    return kExitDsl;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  } catch (const std::exception& e) {
    err << "unexpected error: " << e.what() << "\n";
    return kExitFailure;
  }
}

std::string fmt_double(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

std::optional<dsl::RewardProgram> compile_or_report(const std::string& source, const std::string& origin,
                                                    std::ostream& err) {
  dsl::CompileResult r = dsl::compile(source);
  if (!r.program) err << origin << ":\n" << dsl::format_diagnostics(r.diagnostics);
  return std::move(r.program);
}

ppo::Team load_team(const config::RunConfig& cfg, const sim::WorldConfig& world, const fs::path& checkpoint) {
  ppo::Team team = ppo::Team::create(world, cfg.network, cfg.ppo, 0);
  std::string bytes;
  try {
    bytes = read_text(checkpoint);
  } catch (const ConfigError&) {
    throw nn::CheckpointError("cannot read checkpoint " + checkpoint.string());
  }
  team.load_checkpoint(nn::deserialize_checkpoint(bytes));
  return team;
}

const sim::WorldConfig& world_section(const config::RunConfig& cfg, const std::string& name) {
  if (name == "world") return cfg.world;
  if (name == "init_world") return cfg.init_world;
  if (name == "tune_world") return cfg.tune_world;
  throw ConfigError("unknown world section '" + name + "' (expected world, init_world or tune_world)");
}

std::vector<std::string> split_lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) out.push_back(line);
  return out;
}

}  // namespace

// ---- train --------------------------------------------------------------------

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    config::RunConfig cfg = config::load_config(opts.config);
    if (opts.seed) cfg.seed = *opts.seed;
    if (opts.max_batches) {
      if (*opts.max_batches == 0) throw ConfigError("--max-batches must be positive");
      cfg.training.max_batches = *opts.max_batches;
      cfg.training.min_batches = std::min(cfg.training.min_batches, cfg.training.max_batches);
    }
    std::string source = config::kBuiltinReward;
    std::string origin = "builtin reward";
    if (opts.reward) {
      source = read_text(*opts.reward);
      origin = opts.reward->string();
    } else if (!cfg.reward.empty()) {
      source = read_text(cfg.resolve(cfg.reward));
      origin = cfg.resolve(cfg.reward).string();
    }
    const auto program = compile_or_report(source, origin, err);
    if (!program) return int{kExitDsl};

    const fs::path dir = opts.out ? *opts.out : cfg.resolve(cfg.output_dir);
    fs::create_directories(dir);
    ppo::Team team = ppo::Team::create(cfg.world, cfg.network, cfg.ppo, derive_seed(cfg.seed, {0x7241}));
    std::string metrics;
    const ppo::TrainSummary summary =
        ppo::train(team, cfg.world, *program, cfg.ppo, cfg.training, derive_seed(cfg.seed, {0x7241, 1}), 0,
                   [&](const ppo::BatchStats& s) {
                     metrics += ppo::metrics_line(s) + "\n";
                     atomic_write(dir / "metrics.jsonl", metrics);
                     out << "batch " << s.batch << "  reward " << fmt_double("%.3f", s.mean_reward) << "  success "
                         << fmt_double("%.2f", s.train_success_rate) << "\n";
                     return true;
                   });
    atomic_write(dir / "checkpoint.ckpt", nn::serialize_checkpoint(team.to_checkpoint()));
    ojson s;
    s["batches"] = summary.batches;
    s["converged"] = summary.converged;
    s["reward"] = source;
    s["architecture"] = team.architecture();
    s["config"] = config::config_to_json(cfg);
    atomic_write(dir / "train_summary.json", s.dump(2) + "\n");
    out << "trained " << summary.batches << " batches" << (summary.converged ? " (converged)" : " (batch cap)")
        << "; outputs in " << dir.string() << "\n";
    return int{kExitOk};
  });
}

// ---- eval ---------------------------------------------------------------------

int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    config::RunConfig cfg = config::load_config(opts.config);
    eval::EvalConfig ec = cfg.eval;
    if (opts.protocol == "table2") {
      ec.seeds = {cfg.seed, cfg.seed + 1, cfg.seed + 2};
      ec.episodes = 300;
    } else if (opts.protocol != "default") {
      throw ConfigError("unknown protocol '" + opts.protocol + "' (expected default or table2)");
    }
    if (opts.episodes) ec.episodes = *opts.episodes;
    ec.validate();
    const sim::WorldConfig& world = world_section(cfg, opts.world);
    const ppo::Team team = load_team(cfg, world, opts.checkpoint);
    const eval::EvalReport report = eval::run_evaluation(eval::team_policy(team, ec.deterministic_policy), world, ec);
    const std::string text = eval::serialize_report(report);
    out << text << "episodes: " << report.episodes << "\n";
    if (opts.out) {
      atomic_write(*opts.out / "eval_report.txt", text);
      atomic_write(*opts.out / "eval_report.json", eval::report_to_json(report).dump(2) + "\n");
    }
    return int{kExitOk};
  });
}

// ---- tune loop ----------------------------------------------------------------

nlohmann::ordered_json journal_config(const config::RunConfig& cfg) {
  ojson j = config::config_to_json(cfg);
  j.erase("output_dir");
  j.erase("reward");
  j["backend"].erase("replay_path");
  j["backend"].erase("record_path");
  return j;
}

LoopRun execute_loop(const config::RunConfig& cfg, llm::Backend& backend, llm::JournalWriter& journal,
                     const llm::LoopHooks& hooks) {
  llm::LoopHooks wrapped;
  wrapped.on_batch = hooks.on_batch;
  wrapped.on_iteration = [&](const llm::IterationRecord& rec, const ppo::Team& team) {
    journal.append(rec);
    if (hooks.on_iteration) hooks.on_iteration(rec, team);
  };
  const llm::LoopSettings settings = cfg.loop_settings();
  LoopRun run;
  llm::InitResult init = llm::run_initialization(backend, settings, wrapped);
  run.records = init.records;
  if (!init.accepted) {
    run.outcome = "no-accepted-reward";
    journal.finish(run.outcome);
    return run;
  }
  llm::TuneResult tuned = llm::run_tuning(backend, settings, std::move(init), wrapped);
  run.records.insert(run.records.end(), tuned.records.begin(), tuned.records.end());
  run.accepted = true;
  run.final_source = tuned.final_source;
  run.team = std::move(tuned.team);
  run.outcome = "completed";
  journal.finish(run.outcome);
  return run;
}

std::vector<TableRow> report_table(const std::vector<llm::IterationRecord>& records) {
  std::vector<TableRow> rows;
  auto row = [](std::size_t it, const eval::EvalReport& r) {
    return TableRow{it, 100.0 * r.success_rate, r.total_time_mean, r.formation_error_mean};
  };
  for (const auto& rec : records)
    if (rec.stage == "init" && rec.decision == llm::Decision::Accept && rec.report) rows.push_back(row(0, *rec.report));
  for (const auto& rec : records)
    if (rec.stage == "tune" && rec.report) rows.push_back(row(rec.k, *rec.report));
  return rows;
}

std::string table_csv(const std::vector<TableRow>& rows) {
  std::string s = "iteration,success_rate_pct,average_time_s,formation_error\n";
  for (const auto& r : rows)
    s += std::to_string(r.iteration) + "," + fmt_double("%.2f", r.success_rate_pct) + "," +
         fmt_double("%.3f", r.average_time_s) + "," + fmt_double("%.4f", r.formation_error) + "\n";
  return s;
}

std::string table_text(const std::vector<TableRow>& rows) {
  std::string s = "iteration  success rate (%)  average time (s)  formation error\n";
  char buf[128];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%9zu  %16.2f  %16.3f  %15.4f\n", r.iteration, r.success_rate_pct, r.average_time_s,
                  r.formation_error);
    s += buf;
  }
  return s;
}

int cmd_tune(const TuneOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const config::RunConfig cfg = config::load_config(opts.config);
    // Backend first: a missing token must fail before any training starts.
    std::unique_ptr<llm::Backend> backend;
    if (cfg.backend.kind == "http") {
      backend = llm::make_http_backend(cfg.backend.http);
      const std::optional<fs::path> record =
          opts.record ? opts.record
                      : (cfg.backend.record_path.empty() ? std::nullopt
                                                         : std::optional<fs::path>(cfg.resolve(cfg.backend.record_path)));
      if (record) backend = std::make_unique<llm::RecordBackend>(std::move(backend), *record);
    } else {
      backend = std::make_unique<llm::ReplayBackend>(llm::ReplayBackend::from_path(cfg.resolve(cfg.backend.replay_path)));
    }

    const fs::path dir = opts.out ? *opts.out : cfg.resolve(cfg.output_dir);
    fs::create_directories(dir);
    std::ostringstream journal_text;
    llm::JournalWriter journal(journal_text, journal_config(cfg));
    atomic_write(dir / "journal.jsonl", journal_text.str());

    std::map<std::string, std::string> metrics;
    llm::LoopHooks hooks;
    hooks.on_batch = [&](const std::string& stage, std::size_t k, const ppo::BatchStats& s) {
      const std::string name = stage + "_" + std::to_string(k);
      metrics[name] += ppo::metrics_line(s) + "\n";
      atomic_write(dir / "metrics" / (name + ".jsonl"), metrics[name]);
    };
    hooks.on_iteration = [&](const llm::IterationRecord& rec, const ppo::Team& team) {
      atomic_write(dir / "journal.jsonl", journal_text.str());
      if (rec.training)
        atomic_write(dir / "checkpoints" / (rec.stage + "_" + std::to_string(rec.k) + ".ckpt"),
                     nn::serialize_checkpoint(team.to_checkpoint()));
      out << "[" << rec.stage << " " << rec.k << "] decision " << llm::to_string(rec.decision);
      if (rec.report) out << "  success " << fmt_double("%.2f", rec.report->success_rate);
      if (!rec.note.empty()) out << "  (" << rec.note << ")";
      out << "\n";
    };

    const LoopRun run = execute_loop(cfg, *backend, journal, hooks);
    atomic_write(dir / "journal.jsonl", journal_text.str());
    const auto rows = report_table(run.records);
    atomic_write(dir / "report.csv", table_csv(rows));
    atomic_write(dir / "report.txt", table_text(rows));
    out << table_text(rows);
    if (!run.accepted) {
      err << "no initial reward reached the acceptance threshold after " << cfg.tune.max_init_iterations
          << " iterations\n";
      return int{kExitFailure};
    }
    atomic_write(dir / "reward_final.rdsl", run.final_source + "\n");
    atomic_write(dir / "checkpoint_final.ckpt", nn::serialize_checkpoint(run.team->to_checkpoint()));
    return int{kExitOk};
  });
}

// ---- replay -------------------------------------------------------------------

int cmd_replay(const ReplayOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    std::ifstream in(opts.journal);
    if (!in) throw llm::JournalError("cannot read journal " + opts.journal.string());
    const llm::Journal archived = llm::read_journal(in);

    nlohmann::json cfg_json = nlohmann::json::parse(archived.config.dump());
    cfg_json.erase("backend");
    const config::RunConfig cfg = config::config_from_json(cfg_json);

    llm::ReplayBackend backend(llm::journal_responses(archived));
    std::ostringstream text;
    llm::JournalWriter journal(text, archived.config);
    std::string aborted;
    try {
      execute_loop(cfg, backend, journal);
    } catch (const llm::BackendError& e) {
      aborted = e.what();
    }
    if (opts.out) atomic_write(*opts.out / "replay_journal.jsonl", text.str());

    const std::vector<std::string> rerun = split_lines(text.str());
    const std::size_t n = std::max(rerun.size(), archived.lines.size());
    for (std::size_t i = 0; i < n; ++i) {
      if (i < rerun.size() && i < archived.lines.size() && rerun[i] == archived.lines[i]) continue;
      err << "replay diverged at journal line " << (i + 1);
      if (i >= 1 && i - 1 < archived.records.size()) {
        const auto& rec = archived.records[i - 1];
        err << " (" << rec.value("stage", std::string("?")) << " iteration " << rec.value("k", 0) << ")";
      }
      if (!aborted.empty()) err << "; re-execution stopped: " << aborted;
      err << "\n";
      return int{kExitDivergence};
    }
    if (backend.remaining() != 0) {
      err << "replay diverged: " << backend.remaining() << " archived responses were not consumed\n";
      return int{kExitDivergence};
    }
    out << "replay verified: " << archived.records.size() << " records, outcome " << archived.outcome << "\n";
    return int{kExitOk};
  });
}

// ---- plot ---------------------------------------------------------------------

int cmd_plot(const PlotOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (opts.metrics.empty()) throw ConfigError("plot needs at least one metrics file");
    if (!opts.labels.empty() && opts.labels.size() != opts.metrics.size())
      throw ConfigError("plot: one label per metrics file");
    std::vector<Series> reward, success, length;
    for (std::size_t f = 0; f < opts.metrics.size(); ++f) {
      const fs::path& path = opts.metrics[f];
      const std::string label = opts.labels.empty() ? path.stem().string() : opts.labels[f];
      std::vector<ppo::BatchStats> rows;
      for (const auto& line : split_lines(read_text(path)))
        if (!line.empty()) rows.push_back(ppo::parse_metrics_line(line));
      if (rows.empty()) throw InputError("metrics file " + path.string() + " has no records");
      Series r{label, {}, {}}, s{label, {}, {}}, l{label, {}, {}};
      std::string csv = "batch,mean_reward,train_success_rate,mean_episode_length,policy_loss,value_loss,entropy\n";
      for (const auto& b : rows) {
        const double x = static_cast<double>(b.batch);
        r.x.push_back(x), r.y.push_back(b.mean_reward);
        s.x.push_back(x), s.y.push_back(b.train_success_rate);
        l.x.push_back(x), l.y.push_back(b.mean_episode_length);
        csv += std::to_string(b.batch) + "," + fmt_double("%.6f", b.mean_reward) + "," +
               fmt_double("%.6f", b.train_success_rate) + "," + fmt_double("%.3f", b.mean_episode_length) + "," +
               fmt_double("%.6f", b.policy_loss) + "," + fmt_double("%.6f", b.value_loss) + "," +
               fmt_double("%.6f", b.entropy) + "\n";
      }
      atomic_write(opts.out / (label + ".csv"), csv);
      reward.push_back(std::move(r));
      success.push_back(std::move(s));
      length.push_back(std::move(l));
    }
    atomic_write(opts.out / "reward_curve.svg", render_svg_chart(reward, "Reward curve", "batch", "mean episode reward"));
    atomic_write(opts.out / "success_trend.svg",
                 render_svg_chart(success, "Training success rate", "batch", "success rate"));
    atomic_write(opts.out / "episode_length_trend.svg",
                 render_svg_chart(length, "Episode length", "batch", "steps"));
    out << "wrote plots for " << opts.metrics.size() << " run(s) to " << opts.out.string() << "\n";
    return int{kExitOk};
  });
}

// ---- dsl-check ----------------------------------------------------------------

int cmd_dsl_check(const DslCheckOptions& opts, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const std::string source = read_text(opts.file);
    const auto program = compile_or_report(source, opts.file.string(), err);
    if (!program) return int{kExitDsl};
    out << "ok: " << program->bindings.size() << " binding(s)\n" << dsl::pretty_print(*program) << "\n";
    if (opts.context.empty()) return int{kExitOk};
    const auto names = dsl::context_names();
    auto values = dsl::EvalContext{}.values();
    for (const auto& kv : opts.context) {
      const auto eq = kv.find('=');
      if (eq == std::string::npos) throw ConfigError("context entry '" + kv + "' is not name=value");
      const std::string name = kv.substr(0, eq);
      const auto it = std::find(names.begin(), names.end(), name);
      if (it == names.end()) throw ConfigError("unknown context variable '" + name + "'");
      try {
        values[static_cast<std::size_t>(it - names.begin())] = std::stod(kv.substr(eq + 1));
      } catch (const std::exception&) {
        throw ConfigError("context entry '" + kv + "' has no numeric value");
      }
    }
    out << "reward: " << fmt_double("%.6f", dsl::evaluate(*program, values)) << "\n";
    return int{kExitOk};
  });
}

}  // namespace fcca::app
