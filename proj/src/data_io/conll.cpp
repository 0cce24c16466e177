#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mlcrf/data_io.hpp"

namespace mlcrf {

namespace {

std::vector<std::string> split_ws(const std::string& line) {
  std::istringstream ss(line);
  std::vector<std::string> fields;
  std::string f;
  while (ss >> f) fields.push_back(std::move(f));
  return fields;
}

}  // namespace

std::vector<TokenSequence> read_conll(std::istream& in) {
  std::vector<TokenSequence> out;
  TokenSequence current;
  std::size_t columns = 0;
  std::size_t line_no = 0;
  auto flush = [&] {
    if (!current.tokens.empty()) out.push_back(std::move(current));
    current = TokenSequence{};
    columns = 0;
  };
  std::string line;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    const auto fields = split_ws(line);
    if (fields.empty()) {
      flush();
      continue;
    }
    if (fields.front().rfind("-DOCSTART-", 0) == 0) continue;
    if (columns == 0) {
      columns = fields.size();
      if (columns > 1) current.labels.emplace();
    } else if (fields.size() != columns) {
      throw Error("line " + std::to_string(line_no) + ": expected " + std::to_string(columns) +
                  " columns, found " + std::to_string(fields.size()));
    }
    current.tokens.push_back(fields.front());
    if (columns > 1) current.labels->push_back(fields.back());
  }
  flush();
  return out;
}

std::vector<TokenSequence> read_conll(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return read_conll(in);
}

void write_conll(std::ostream& out, const std::vector<TokenSequence>& sentences) {
  for (const auto& s : sentences) {
    for (std::size_t i = 0; i < s.tokens.size(); ++i) {
      out << s.tokens[i];
      if (s.labels) out << ' ' << (*s.labels)[i];
      out << '\n';
    }
    out << '\n';
  }
}

void write_conll(const std::filesystem::path& path, const std::vector<TokenSequence>& sentences) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_conll(out, sentences);
  if (!out) throw Error("write failed: " + path.string());
}

}  // namespace mlcrf
