#include <cctype>
#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

#include "mlcrf/data_io.hpp"

namespace mlcrf {

namespace {

std::vector<std::string_view> split_spaces(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    const std::size_t start = i;
    while (i < line.size() && !std::isspace(static_cast<unsigned char>(line[i]))) ++i;
    if (i > start) out.push_back(line.substr(start, i - start));
  }
  return out;
}

std::optional<double> parse_double(std::string_view s) {
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<std::size_t> parse_count(std::string_view s) {
  std::size_t v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

std::string ascii_lower(const std::string& s) {
  std::string out = s;
  for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return out;
}

void append_double(std::string& out, double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  out.append(buf, ptr);
}

}  // namespace

void EmbeddingTable::set_unk(Vec v) {
  if (v.dim() != dim_) throw Error("unknown-word vector has the wrong dimension");
  unk_ = std::move(v);
}

bool EmbeddingTable::insert(const std::string& token, Vec v) {
  if (v.dim() != dim_) throw Error("embedding for '" + token + "' has the wrong dimension");
  const bool added = vectors_.emplace(token, std::move(v)).second;
  if (added) order_.push_back(token);
  return added;
}

const Vec* EmbeddingTable::find(const std::string& token) const {
  const auto it = vectors_.find(token);
  return it == vectors_.end() ? nullptr : &it->second;
}

const Vec& EmbeddingTable::lookup(const std::string& token) const {
  if (const Vec* v = find(token)) return *v;
  if (const Vec* v = find(ascii_lower(token))) return *v;
  return unk_;
}

EmbeddingTable load_embeddings(std::istream& in, std::optional<std::size_t> expected_dim,
                               std::vector<std::string>* warnings) {
  auto warn = [&](std::string msg) {
    if (warnings) warnings->push_back(std::move(msg));
  };
  std::optional<std::size_t> dim = expected_dim;
  std::optional<std::size_t> header_count;
  std::vector<std::pair<std::string, Vec>> rows;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto fields = split_spaces(line);
    if (fields.empty()) continue;
    if (line_no == 1 && fields.size() == 2) {
      const auto count = parse_count(fields[0]);
      const auto header_dim = parse_count(fields[1]);
      if (count && header_dim) {
        header_count = count;
        if (dim && *dim != *header_dim) {
          throw Error("line 1: header dimension " + std::to_string(*header_dim) +
                      " does not match expected " + std::to_string(*dim));
        }
        dim = header_dim;
        continue;
      }
    }
    if (fields.size() < 2) throw Error("line " + std::to_string(line_no) + ": no vector values");
    const std::size_t d = fields.size() - 1;
    if (!dim) dim = d;
    if (d != *dim) {
      throw Error("line " + std::to_string(line_no) + ": expected " + std::to_string(*dim) +
                  " values, found " + std::to_string(d));
    }
    Vec v(d);
    for (std::size_t k = 0; k < d; ++k) {
      const auto x = parse_double(fields[k + 1]);
      if (!x) {
        throw Error("line " + std::to_string(line_no) + ": non-numeric field '" +
                    std::string(fields[k + 1]) + "'");
      }
      v[k] = *x;
    }
    rows.emplace_back(std::string(fields[0]), std::move(v));
  }
  if (rows.empty()) throw Error("embedding file contains no vectors");
  if (header_count && *header_count != rows.size()) {
    warn("header announces " + std::to_string(*header_count) + " vectors, file has " +
         std::to_string(rows.size()));
  }

  EmbeddingTable table(*dim);
  Vec mean(*dim);
  for (auto& [token, v] : rows) {
    axpy(1.0, v.span(), mean.span());
    if (!table.insert(token, std::move(v))) warn("duplicate token '" + token + "' ignored");
  }
  for (double& x : mean.data) x /= static_cast<double>(rows.size());
  table.set_unk(std::move(mean));
  return table;
}

EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dim,
                               std::vector<std::string>* warnings) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return load_embeddings(in, expected_dim, warnings);
}

void write_embeddings(std::ostream& out, const EmbeddingTable& table) {
  out << table.size() << ' ' << table.dim() << '\n';
  std::string line;
  for (const auto& token : table.tokens()) {
    line = token;
    for (double x : table.find(token)->data) {
      line += ' ';
      append_double(line, x);
    }
    out << line << '\n';
  }
}

void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  write_embeddings(out, table);
}

RepresentationSequence sequence_to_reps(const TokenSequence& seq, const EmbeddingTable& table) {
  Mat h(seq.tokens.size(), table.dim());
  for (std::size_t i = 0; i < seq.tokens.size(); ++i) {
    const Vec& v = table.lookup(seq.tokens[i]);
    std::copy(v.data.begin(), v.data.end(), h.row(i).begin());
  }
  return make_reps(std::move(h));
}

}  // namespace mlcrf
