#include <charconv>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <string_view>

#include "mlcrf/cli.hpp"

namespace mlcrf::cli {
namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

template <class T>
T parse_number(std::string_view key, std::string_view value) {
  T out{};
  const auto* end = value.data() + value.size();
  const auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end || value.empty()) {
    throw ConfigError("invalid value for " + std::string(key) + ": " + std::string(value));
  }
  return out;
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

using Setter = std::function<void(CliConfig&, std::string_view key, std::string_view value)>;
using Getter = std::function<std::string(const CliConfig&)>;

struct Field {
  Setter set;
  Getter get;
};

template <class T>
Field number_field(T TrainConfig::*member) {
  return {[member](CliConfig& c, std::string_view k, std::string_view v) {
            c.train.*member = parse_number<T>(k, v);
          },
          [member](const CliConfig& c) {
            if constexpr (std::is_floating_point_v<T>) {
              return format_double(c.train.*member);
            } else {
              return std::to_string(c.train.*member);
            }
          }};
}

Field path_field(std::string CliConfig::*member) {
  return {[member](CliConfig& c, std::string_view, std::string_view v) { c.*member = std::string(v); },
          [member](const CliConfig& c) { return c.*member; }};
}

// Ordered so dump_config output is stable.
const std::vector<std::pair<std::string, Field>>& fields() {
  static const std::vector<std::pair<std::string, Field>> table = {
      {"family",
       {[](CliConfig& c, std::string_view, std::string_view v) {
          try {
            c.train.family = parse_family(v);
          } catch (const Error& e) {
            throw ConfigError(e.what());
          }
        },
        [](const CliConfig& c) { return std::string(family_name(c.train.family)); }}},
      {"learning_rate", number_field(&TrainConfig::learning_rate)},
      {"batch_size", number_field(&TrainConfig::batch_size)},
      {"l2", number_field(&TrainConfig::l2)},
      {"max_epochs", number_field(&TrainConfig::max_epochs)},
      {"patience", number_field(&TrainConfig::patience)},
      {"d_t", number_field(&TrainConfig::d_t)},
      {"d_r", number_field(&TrainConfig::d_r)},
      {"mlp_hidden", number_field(&TrainConfig::mlp_hidden)},
      {"seed",
       {[](CliConfig& c, std::string_view k, std::string_view v) {
          c.train.seed = RngSeed{parse_number<std::uint64_t>(k, v)};
        },
        [](const CliConfig& c) { return std::to_string(c.train.seed.seed); }}},
      {"subsample_fraction", number_field(&TrainConfig::subsample_fraction)},
      {"lr_decay", number_field(&TrainConfig::lr_decay)},
      {"max_grad_norm", number_field(&TrainConfig::max_grad_norm)},
      {"threads", number_field(&TrainConfig::threads)},
      {"dev_metric",
       {[](CliConfig& c, std::string_view, std::string_view v) {
          try {
            c.train.dev_metric = parse_dev_metric(v);
          } catch (const Error& e) {
            throw ConfigError(e.what());
          }
        },
        [](const CliConfig& c) { return std::string(dev_metric_name(c.train.dev_metric)); }}},
      {"scheme",
       {[](CliConfig& c, std::string_view, std::string_view v) {
          if (v != "bioes" && v != "keep") throw ConfigError("invalid value for scheme: " + std::string(v));
          c.scheme = std::string(v);
        },
        [](const CliConfig& c) { return c.scheme; }}},
      {"train_path", path_field(&CliConfig::train_path)},
      {"dev_path", path_field(&CliConfig::dev_path)},
      {"test_path", path_field(&CliConfig::test_path)},
      {"embeddings_path", path_field(&CliConfig::embeddings_path)},
      {"model_path", path_field(&CliConfig::model_path)},
      {"output_path", path_field(&CliConfig::output_path)},
      {"report_path", path_field(&CliConfig::report_path)},
  };
  return table;
}

const Field* find_field(std::string_view key) {
  for (const auto& [name, field] : fields()) {
    if (name == key) return &field;
  }
  return nullptr;
}

}  // namespace

void set_config_value(CliConfig& config, std::string_view key, std::string_view value) {
  const Field* field = find_field(key);
  if (field == nullptr) throw ConfigError("unknown key: " + std::string(key));
  field->set(config, key, value);
}

CliConfig parse_config(std::istream& in) {
  CliConfig config;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string_view text = trim(line);
    if (text.empty() || text.front() == '#') continue;
    const auto eq = text.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("line " + std::to_string(line_no) + ": expected key=value");
    }
    set_config_value(config, trim(text.substr(0, eq)), trim(text.substr(eq + 1)));
  }
  return config;
}

CliConfig parse_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  return parse_config(in);
}

std::string dump_config(const CliConfig& config) {
  std::ostringstream out;
  for (const auto& [name, field] : fields()) out << name << '=' << field.get(config) << '\n';
  return out.str();
}

}  // namespace mlcrf::cli
