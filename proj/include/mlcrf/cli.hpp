#ifndef MLCRF_CLI_HPP
#define MLCRF_CLI_HPP

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mlcrf/oracle.hpp"
#include "mlcrf/potentials.hpp"
#include "mlcrf/training.hpp"

namespace mlcrf::cli {

// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitMisaligned = 3;
inline constexpr int kExitGradcheck = 4;

// Bad configuration or command-line input; maps to exit code 2.
class ConfigError : public Error {
 public:
  using Error::Error;
};

struct CliConfig {
  TrainConfig train;
  // "bioes" converts BIO-tagged data to BIOES before training; "keep"
  // uses labels as given.
  std::string scheme = "bioes";
  std::string train_path;
  std::string dev_path;
  std::string test_path;
  std::string embeddings_path;
  std::string model_path;
  std::string output_path;
  std::string report_path;

  friend bool operator==(const CliConfig&, const CliConfig&) = default;
};

// key=value lines, '#' starts a comment line. Unknown keys are rejected.
// Throws ConfigError for unknown keys and unparsable values.
void set_config_value(CliConfig& config, std::string_view key, std::string_view value);
CliConfig parse_config(std::istream& in);
CliConfig parse_config_file(const std::filesystem::path& path);
std::string dump_config(const CliConfig& config);

int cmd_train(const CliConfig& config, std::ostream& out, std::ostream& err);

struct TagOptions {
  std::string model_path;
  std::string input_path;
  std::string output_path;
  std::string embeddings_path;
};
int cmd_tag(const TagOptions& options, std::ostream& out, std::ostream& err);

int cmd_eval(const std::string& gold_path, const std::string& pred_path, std::ostream& out,
             std::ostream& err);

struct GradcheckOptions {
  FamilyTag family = FamilyTag::kDQuadrilinear;
  std::size_t num_labels = 4;
  std::size_t d_h = 5;
  std::size_t d_t = 4;
  std::size_t d_r = 3;
  std::size_t mlp_hidden = 6;
  std::size_t length = 5;
  std::uint64_t seed = 42;
  double threshold = 1e-4;
  // Test hook: perturbs the analytic gradient of this field.
  std::string corrupt_field;
};


struct GradcheckReport {
  std::vector<oracle::FieldError> fields;
  double log_partition_error = 0.0;  // relative, against enumeration
  double marginal_error = 0.0;       // max absolute, against enumeration
  bool viterbi_match = false;
};

// Random parameters, representations and gold labels from the seed; analytic
// NLL gradient against central differences plus the inference checks.
GradcheckReport run_gradcheck(const GradcheckOptions& options);
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err);

struct BenchOptions {
  FamilyTag family = FamilyTag::kVanillaCrf;
  std::size_t num_labels = 17;
  std::size_t d_h = 100;
  std::size_t d_t = 100;
  std::size_t d_r = 128;
  std::size_t mlp_hidden = 128;
  std::size_t length = 30;
  std::size_t batch = 32;
  std::size_t reps = 10;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
};

struct BenchResult {
  double train_step_ms = 0.0;  // mean over reps
  double decode_ms = 0.0;      // mean over reps, whole batch
};

BenchResult run_bench(const BenchOptions& options);
std::string bench_csv_header();
std::string bench_csv_row(const BenchOptions& options, const BenchResult& result);
int cmd_bench(const BenchOptions& options, std::ostream& out, std::ostream& err);

struct SynthOptions {
  oracle::SyntheticSpec spec;
  std::string output_dir;
};
int cmd_synth(const SynthOptions& options, std::ostream& out, std::ostream& err);

// Parses argv and dispatches to a subcommand.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mlcrf::cli

#endif  // MLCRF_CLI_HPP
