#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "mlcrf/data_io.hpp"

namespace mlcrf {

namespace {

using nlohmann::json;

const json& require(const json& doc, const char* key) {
  if (!doc.is_object() || !doc.contains(key)) throw Error(std::string("missing field: ") + key);
  return doc.at(key);
}

json field_to_json(std::string_view name, const Vec& v) {
  return json{{"name", name}, {"rows", v.dim()}, {"cols", 1}, {"data", v.data}};
}

json field_to_json(std::string_view name, const Mat& m) {
  return json{{"name", name}, {"rows", m.rows}, {"cols", m.cols}, {"data", m.data}};
}

json field_to_json(std::string_view name, const Tensor3& t) {
  return json{{"name", name}, {"rows", t.d1}, {"cols", t.d2}, {"depth", t.d3}, {"data", t.data}};
}

std::vector<double> read_data(const json& entry, std::size_t expected, const std::string& name) {
  auto data = require(entry, "data").get<std::vector<double>>();
  if (data.size() != expected) {
    throw Error("parameter " + name + ": expected " + std::to_string(expected) + " values, found " +
                std::to_string(data.size()));
  }
  return data;
}

void assign_field(ModelParams& p, const json& entry) {
  const auto name = require(entry, "name").get<std::string>();
  const auto rows = require(entry, "rows").get<std::size_t>();
  const auto cols = require(entry, "cols").get<std::size_t>();
  auto as_vec = [&](Vec& v) {
    if (cols != 1) throw Error("parameter " + name + " must have cols = 1");
    v.data = read_data(entry, rows, name);
  };
  auto as_mat = [&](Mat& m) {
    m = Mat(rows, cols);
    m.data = read_data(entry, rows * cols, name);
  };
  if (name == "u_dense") {
    const auto depth = require(entry, "depth").get<std::size_t>();
    p.u_dense = Tensor3(rows, cols, depth);
    p.u_dense.data = read_data(entry, rows * cols * depth, name);
  } else if (name == "mlp_b1") {
    as_vec(p.mlp_b1);
  } else if (name == "boundary_pre") {
    as_vec(p.boundary_pre);
  } else if (name == "boundary_post") {
    as_vec(p.boundary_post);
  } else if (name == "label_embeddings") {
    as_mat(p.label_embeddings);
  } else if (name == "transition_table") {
    as_mat(p.transition_table);
  } else if (name == "w_h") {
    as_mat(p.w_h);
  } else if (name == "w_t") {
    as_mat(p.w_t);
  } else if (name == "w_h1") {
    as_mat(p.w_h1);
  } else if (name == "w_h2") {
    as_mat(p.w_h2);
  } else if (name == "u_t1") {
    as_mat(p.u_t1);
  } else if (name == "u_t2") {
    as_mat(p.u_t2);
  } else if (name == "u_h") {
    as_mat(p.u_h);
  } else if (name == "u_h1") {
    as_mat(p.u_h1);
  } else if (name == "u_h2") {
    as_mat(p.u_h2);
  } else if (name == "u_h3") {
    as_mat(p.u_h3);
  } else if (name == "mlp_w1") {
    as_mat(p.mlp_w1);
  } else if (name == "mlp_w2") {
    as_mat(p.mlp_w2);
  } else {
    throw Error("unknown parameter field: " + name);
  }
}

}  // namespace

void save_model(std::ostream& out, const ModelParams& params, const LabelVocab& vocab) {
  params.validate();
  if (vocab.size() != params.num_labels) throw Error("vocabulary size does not match the model");
  json doc;
  doc["format_version"] = kModelFormatVersion;
  doc["family"] = family_name(params.family);
  doc["L"] = params.num_labels;
  doc["d_h"] = params.d_h;
  doc["d_t"] = params.d_t;
  doc["d_r"] = params.d_r;
  doc["mlp_hidden"] = params.mlp_hidden;
  doc["labels"] = vocab.labels();
  doc["scheme"] = scheme_name(vocab.scheme());
  json fields = json::array();
  params.for_each_field([&](std::string_view name, const auto& t) { fields.push_back(field_to_json(name, t)); });
  doc["params"] = std::move(fields);
  out << doc.dump() << '\n';
}

void save_model(const std::filesystem::path& path, const ModelParams& params, const LabelVocab& vocab) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  save_model(out, params, vocab);
  if (!out) throw Error("write failed: " + path.string());
}

SavedModel load_model(std::istream& in) {
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model file: ") + e.what());
  }
  try {
    const int version = require(doc, "format_version").get<int>();
    if (version != kModelFormatVersion) {
      throw Error("unsupported model format_version " + std::to_string(version));
    }
    SavedModel m;
    ModelParams& p = m.params;
    p.family = parse_family(require(doc, "family").get<std::string>());
    p.num_labels = require(doc, "L").get<std::size_t>();
    p.d_h = require(doc, "d_h").get<std::size_t>();
    p.d_t = require(doc, "d_t").get<std::size_t>();
    p.d_r = require(doc, "d_r").get<std::size_t>();
    p.mlp_hidden = doc.contains("mlp_hidden") ? doc.at("mlp_hidden").get<std::size_t>() : 0;
    auto labels = require(doc, "labels").get<std::vector<std::string>>();
    const auto scheme = parse_scheme(require(doc, "scheme").get<std::string>());
    for (const auto& entry : require(doc, "params")) assign_field(p, entry);
    p.validate();
    if (labels.size() != p.num_labels) throw Error("labels array does not match L");
    m.vocab = LabelVocab(std::move(labels), scheme);
    return m;
  } catch (const json::exception& e) {
    throw Error(std::string("malformed model file: ") + e.what());
  }
}

SavedModel load_model(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open " + path.string());
  return load_model(in);
}

}  // namespace mlcrf
