#pragma once

// Command implementations behind the fcca executable. Each command returns a
// process exit code and never lets a typed error escape.

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "fcca/config.hpp"
#include "fcca/llm.hpp"

namespace fcca::app {

enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,
  kExitConfig = 2,
  kExitDsl = 3,
  kExitCheckpoint = 4,
  kExitDivergence = 5,
  kExitJournal = 6,
};

// Writes `content` to a sibling temp file, then renames it over `path`.
void atomic_write(const std::filesystem::path& path, std::string_view content);
std::string read_text(const std::filesystem::path& path);

struct TrainOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> reward;
  std::optional<std::filesystem::path> out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> max_batches;
};

struct EvalOptions {
  std::filesystem::path config;
  std::filesystem::path checkpoint;
  std::string protocol = "default";  // "default" or "table2" (3 seeds x 300 episodes)
  std::string world = "world";       // config section: world, init_world, tune_world
  std::optional<std::size_t> episodes;
  std::optional<std::filesystem::path> out;
};

struct TuneOptions {
  std::filesystem::path config;
  std::optional<std::filesystem::path> out;
  std::optional<std::filesystem::path> record;  // transcript of http exchanges
};

struct ReplayOptions {
  std::filesystem::path journal;
  std::optional<std::filesystem::path> out;  // where the re-executed journal goes
};

struct PlotOptions {
  std::vector<std::filesystem::path> metrics;
  std::vector<std::string> labels;
  std::filesystem::path out = "plots";
};

struct DslCheckOptions {
  std::filesystem::path file;
  std::vector<std::string> context;  // name=value pairs; evaluates when given
};

int cmd_train(const TrainOptions& opts, std::ostream& out, std::ostream& err);
int cmd_eval(const EvalOptions& opts, std::ostream& out, std::ostream& err);
int cmd_tune(const TuneOptions& opts, std::ostream& out, std::ostream& err);
int cmd_replay(const ReplayOptions& opts, std::ostream& out, std::ostream& err);
int cmd_plot(const PlotOptions& opts, std::ostream& out, std::ostream& err);
int cmd_dsl_check(const DslCheckOptions& opts, std::ostream& out, std::ostream& err);

// Parses argv with the subcommands above and dispatches.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// ---- tune loop plumbing shared by tune and replay -----------------------------

// The journal header config: the run configuration minus anything that
// depends on where the run happens (output and backend paths).
nlohmann::ordered_json journal_config(const config::RunConfig& config);

struct LoopRun {
  bool accepted = false;
  std::vector<llm::IterationRecord> records;
  std::string final_source;
  std::optional<ppo::Team> team;
  std::string outcome;
};

// Runs initialization then tuning, appending every record to `journal`.
LoopRun execute_loop(const config::RunConfig& config, llm::Backend& backend, llm::JournalWriter& journal,
                     const llm::LoopHooks& hooks = {});

// One row per iteration of the final table: the accepted initialization is
// iteration 0, tuning iteration k is row k.
struct TableRow {
  std::size_t iteration = 0;
  double success_rate_pct = 0.0;
  double average_time_s = 0.0;
  double formation_error = 0.0;
};
std::vector<TableRow> report_table(const std::vector<llm::IterationRecord>& records);
std::string table_csv(const std::vector<TableRow>& rows);
std::string table_text(const std::vector<TableRow>& rows);

// ---- plotting -----------------------------------------------------------------

struct Series {
  std::string label;
  std::vector<double> x;
  std::vector<double> y;
};

// Line chart as a standalone SVG document.
std::string render_svg_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                             const std::string& y_label);

}  // namespace fcca::app
