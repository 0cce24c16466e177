#ifndef MLCRF_DATA_IO_HPP
#define MLCRF_DATA_IO_HPP

#include <compare>
#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mlcrf/core_math.hpp"
#include "mlcrf/potentials.hpp"

namespace mlcrf {

struct TokenSequence {
  std::vector<std::string> tokens;
  std::optional<std::vector<std::string>> labels;

  friend bool operator==(const TokenSequence&, const TokenSequence&) = default;
};

// ---- CoNLL -----------------------------------------------------------------

// Sentences are separated by blank lines; the first column is the token and
// the last column the label (no label when a line has a single column).
// Lines starting with -DOCSTART- are skipped.
std::vector<TokenSequence> read_conll(std::istream& in);
std::vector<TokenSequence> read_conll(const std::filesystem::path& path);
// One "token label" line per token (just the token when unlabeled) and a
// blank line after every sentence.
void write_conll(std::ostream& out, const std::vector<TokenSequence>& sentences);
void write_conll(const std::filesystem::path& path, const std::vector<TokenSequence>& sentences);

// ---- Tagging schemes -------------------------------------------------------

enum class TagScheme { kBioes, kBio, kPlain };

std::string_view scheme_name(TagScheme scheme);
TagScheme parse_scheme(std::string_view name);

struct Tag {
  char prefix = 'O';  // one of B I O E S
  std::string type;   // empty for O
};

// Parses "O" or "<B|I|E|S>-TYPE"; nullopt for anything else.
std::optional<Tag> parse_tag(std::string_view label);

// BIOES when any E-/S- tag appears, BIO when all tags parse, PLAIN otherwise.
TagScheme detect_scheme(const std::vector<std::vector<std::string>>& label_sequences);

// Converts BIO to BIOES. An I-X that does not continue an X chunk starts a
// new one. Input that is already BIOES passes through unchanged.
std::vector<std::string> bio_to_bioes(const std::vector<std::string>& labels);

struct Span {
  std::size_t start = 0;
  std::size_t end = 0;  // inclusive
  std::string type;

  friend auto operator<=>(const Span&, const Span&) = default;
};

// Well-formed BIOES spans only; fragments such as a dangling E are dropped.
std::set<Span> spans_from_bioes(const std::vector<std::string>& labels);
// Chunks of a BIO sequence, conlleval style.
std::set<Span> spans_from_bio(const std::vector<std::string>& labels);
std::set<Span> extract_spans(const std::vector<std::string>& labels, TagScheme scheme);

// ---- Label vocabulary --------------------------------------------------------

class LabelVocab {
 public:
  LabelVocab() = default;
  LabelVocab(std::vector<std::string> labels, TagScheme scheme);

  // Labels are sorted; throws if a sequence is unlabeled.
  static LabelVocab build(const std::vector<TokenSequence>& sentences);

  std::size_t size() const { return labels_.size(); }
  const std::vector<std::string>& labels() const { return labels_; }
  TagScheme scheme() const { return scheme_; }
  bool contains(const std::string& label) const { return id_of_.count(label) > 0; }
  // Throws Error naming the label when it is not in the vocabulary.
  int id(const std::string& label) const;
  const std::string& label(int id) const { return labels_.at(static_cast<std::size_t>(id)); }

  std::vector<int> encode(const std::vector<std::string>& labels) const;
  std::vector<std::string> decode(const std::vector<int>& ids) const;

  friend bool operator==(const LabelVocab& a, const LabelVocab& b) {
    return a.labels_ == b.labels_ && a.scheme_ == b.scheme_;
  }

 private:
  std::vector<std::string> labels_;
  std::unordered_map<std::string, int> id_of_;
  TagScheme scheme_ = TagScheme::kPlain;
};

// ---- Embeddings --------------------------------------------------------------

class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  explicit EmbeddingTable(std::size_t dim) : dim_(dim), unk_(dim) {}

  std::size_t dim() const { return dim_; }
  std::size_t size() const { return vectors_.size(); }
  const Vec& unk() const { return unk_; }
  void set_unk(Vec v);
  // Returns false (and keeps the old vector) when the token already exists.
  bool insert(const std::string& token, Vec v);
  const Vec* find(const std::string& token) const;
  // Exact match, then ASCII-lowercased match, then the unknown vector.
  const Vec& lookup(const std::string& token) const;
  const std::vector<std::string>& tokens() const { return order_; }

 private:
  std::size_t dim_ = 0;
  std::unordered_map<std::string, Vec> vectors_;
  std::vector<std::string> order_;
  Vec unk_;
};

// Text format: optional "count dim" header, then "token v1 ... vd" per line.
// The unknown vector is the mean of all loaded vectors. Header/count
// disagreements are reported through `warnings` rather than failing.
EmbeddingTable load_embeddings(std::istream& in, std::optional<std::size_t> expected_dim = {},
                               std::vector<std::string>* warnings = nullptr);
EmbeddingTable load_embeddings(const std::filesystem::path& path,
                               std::optional<std::size_t> expected_dim = {},
                               std::vector<std::string>* warnings = nullptr);
void write_embeddings(std::ostream& out, const EmbeddingTable& table);
void write_embeddings(const std::filesystem::path& path, const EmbeddingTable& table);

RepresentationSequence sequence_to_reps(const TokenSequence& seq, const EmbeddingTable& table);

// ---- Model files -------------------------------------------------------------

inline constexpr int kModelFormatVersion = 1;

struct SavedModel {
  ModelParams params;
  LabelVocab vocab;
};

// JSON document; doubles are written in shortest round-trip form so
// load_model(save_model(x)) is bit-exact.
void save_model(std::ostream& out, const ModelParams& params, const LabelVocab& vocab);
void save_model(const std::filesystem::path& path, const ModelParams& params, const LabelVocab& vocab);
SavedModel load_model(std::istream& in);
SavedModel load_model(const std::filesystem::path& path);

}  // namespace mlcrf

#endif  // MLCRF_DATA_IO_HPP
