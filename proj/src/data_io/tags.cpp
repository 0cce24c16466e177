#include <algorithm>

#include "mlcrf/data_io.hpp"

namespace mlcrf {

std::string_view scheme_name(TagScheme scheme) {
  switch (scheme) {
    case TagScheme::kBioes:
      return "bioes";
    case TagScheme::kBio:
      return "bio";
    case TagScheme::kPlain:
      return "plain";
  }
  return "plain";
}

TagScheme parse_scheme(std::string_view name) {
  if (name == "bioes") return TagScheme::kBioes;
  if (name == "bio") return TagScheme::kBio;
  if (name == "plain") return TagScheme::kPlain;
  throw Error("unknown tag scheme: " + std::string(name));
}

std::optional<Tag> parse_tag(std::string_view label) {
  if (label == "O") return Tag{'O', ""};
  if (label.size() < 3 || label[1] != '-') return std::nullopt;
  const char p = label[0];
  if (p != 'B' && p != 'I' && p != 'E' && p != 'S') return std::nullopt;
  return Tag{p, std::string(label.substr(2))};
}

TagScheme detect_scheme(const std::vector<std::vector<std::string>>& label_sequences) {
  bool bioes = false;
  for (const auto& seq : label_sequences) {
    for (const auto& l : seq) {
      const auto tag = parse_tag(l);
      if (!tag) return TagScheme::kPlain;
      if (tag->prefix == 'E' || tag->prefix == 'S') bioes = true;
    }
  }
  return bioes ? TagScheme::kBioes : TagScheme::kBio;
}

std::vector<std::string> bio_to_bioes(const std::vector<std::string>& labels) {
  struct Norm {
    bool begins = false;
    std::string type;  // empty for O
  };
  std::vector<Norm> norm(labels.size());
  std::string open;  // type of the chunk a following I- may extend
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto tag = parse_tag(labels[i]);
    if (!tag) throw Error("malformed tag: " + labels[i]);
    if (tag->prefix == 'O') {
      open.clear();
      continue;
    }
    const bool inside = (tag->prefix == 'I' || tag->prefix == 'E') && open == tag->type;
    norm[i] = Norm{!inside, tag->type};
    open = (tag->prefix == 'B' || tag->prefix == 'I') ? tag->type : std::string();
  }
  std::vector<std::string> out(labels.size());
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (norm[i].type.empty()) {
      out[i] = "O";
      continue;
    }
    const bool continues = i + 1 < labels.size() && !norm[i + 1].begins &&
                           norm[i + 1].type == norm[i].type;
    const char prefix = norm[i].begins ? (continues ? 'B' : 'S') : (continues ? 'I' : 'E');
    out[i] = std::string(1, prefix) + "-" + norm[i].type;
  }
  return out;
}

std::set<Span> spans_from_bioes(const std::vector<std::string>& labels) {
  std::set<Span> spans;
  std::optional<Span> open;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto tag = parse_tag(labels[i]);
    if (!tag || tag->prefix == 'O') {
      open.reset();
      continue;
    }
    switch (tag->prefix) {
      case 'S':
        open.reset();
        spans.insert(Span{i, i, tag->type});
        break;
      case 'B':
        open = Span{i, i, tag->type};
        break;
      case 'I':
        if (!open || open->type != tag->type) open.reset();
        break;
      case 'E':
        if (open && open->type == tag->type) spans.insert(Span{open->start, i, tag->type});
        open.reset();
        break;
    }
  }
  return spans;
}

std::set<Span> spans_from_bio(const std::vector<std::string>& labels) {
  std::set<Span> spans;
  std::optional<Span> open;
  auto close = [&] {
    if (open) spans.insert(*open);
    open.reset();
  };
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const auto tag = parse_tag(labels[i]);
    if (!tag || tag->prefix == 'O') {
      close();
      continue;
    }
    const bool extends = (tag->prefix == 'I' || tag->prefix == 'E') && open && open->type == tag->type;
    if (extends) {
      open->end = i;
    } else {
      close();
      open = Span{i, i, tag->type};
    }
  }
  close();
  return spans;
}

std::set<Span> extract_spans(const std::vector<std::string>& labels, TagScheme scheme) {
  switch (scheme) {
    case TagScheme::kBioes:
      return spans_from_bioes(labels);
    case TagScheme::kBio:
      return spans_from_bio(labels);
    case TagScheme::kPlain:
      return {};
  }
  return {};
}

LabelVocab::LabelVocab(std::vector<std::string> labels, TagScheme scheme)
    : labels_(std::move(labels)), scheme_(scheme) {
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    if (!id_of_.emplace(labels_[i], static_cast<int>(i)).second) {
      throw Error("duplicate label in vocabulary: " + labels_[i]);
    }
  }
}

LabelVocab LabelVocab::build(const std::vector<TokenSequence>& sentences) {
  std::set<std::string> seen;
  std::vector<std::vector<std::string>> all;
  for (std::size_t k = 0; k < sentences.size(); ++k) {
    if (!sentences[k].labels) throw Error("sentence " + std::to_string(k) + " has no labels");
    seen.insert(sentences[k].labels->begin(), sentences[k].labels->end());
    all.push_back(*sentences[k].labels);
  }
  return LabelVocab(std::vector<std::string>(seen.begin(), seen.end()), detect_scheme(all));
}

int LabelVocab::id(const std::string& label) const {
  const auto it = id_of_.find(label);
  if (it == id_of_.end()) throw Error("label not in training vocabulary: " + label);
  return it->second;
}

std::vector<int> LabelVocab::encode(const std::vector<std::string>& labels) const {
  std::vector<int> ids;
  ids.reserve(labels.size());
  for (const auto& l : labels) ids.push_back(id(l));
  return ids;
}

std::vector<std::string> LabelVocab::decode(const std::vector<int>& ids) const {
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (int id : ids) out.push_back(label(id));
  return out;
}

}  // namespace mlcrf
