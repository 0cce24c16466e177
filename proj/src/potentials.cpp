#include "mlcrf/potentials.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mlcrf {

namespace {

struct FamilyInfo {
  FamilyTag tag;
  std::string_view name;
};

constexpr std::array<FamilyInfo, 10> kFamilyNames = {{
    {FamilyTag::kSoftmax, "softmax"},
    {FamilyTag::kVanillaCrf, "vanilla-crf"},
    {FamilyTag::kTwoBilinear, "two-bilinear"},
    {FamilyTag::kThreeBilinear, "three-bilinear"},
    {FamilyTag::kTrilinear, "trilinear"},
    {FamilyTag::kDTrilinear, "d-trilinear"},
    {FamilyTag::kDQuadrilinear, "d-quadrilinear"},
    {FamilyTag::kDPentalinear, "d-pentalinear"},
    {FamilyTag::kConcatMlp1W2L, "concat-mlp-1w2l"},
    {FamilyTag::kConcatMlp2W2L, "concat-mlp-2w2l"},
}};

using Shape = std::vector<std::size_t>;

std::size_t mlp_input_width(FamilyTag family, std::size_t d_h, std::size_t d_t) {
  return family == FamilyTag::kConcatMlp2W2L ? 2 * d_h + 2 * d_t : d_h + 2 * d_t;
}

// Expected shape of every field a family populates, in visiting order.
std::vector<std::pair<std::string_view, Shape>> field_shapes(FamilyTag family, std::size_t L,
                                                             std::size_t d_h, std::size_t d_t,
                                                             std::size_t d_r, std::size_t hidden) {
  std::vector<std::pair<std::string_view, Shape>> out;
  auto add = [&](std::string_view name, Shape shape) { out.emplace_back(name, std::move(shape)); };
  switch (family) {
    case FamilyTag::kSoftmax:
      add("w_h", {d_h, L});
      break;
    case FamilyTag::kVanillaCrf:
      add("transition_table", {L + 1, L});
      add("w_h", {d_h, L});
      break;
    case FamilyTag::kTwoBilinear:
      add("label_embeddings", {L + 1, d_t});
      add("w_h", {d_h, d_t});
      add("w_t", {d_t, d_t});
      break;
    case FamilyTag::kThreeBilinear:
      add("label_embeddings", {L + 1, d_t});
      add("w_t", {d_t, d_t});
      add("w_h1", {d_h, d_t});
      add("w_h2", {d_h, d_t});
      break;
    case FamilyTag::kTrilinear:
      add("label_embeddings", {L + 1, d_t});
      add("u_dense", {d_h, d_t, d_t});
      break;
    case FamilyTag::kDTrilinear:
      add("label_embeddings", {L + 1, d_t});
      add("u_t1", {d_t, d_r});
      add("u_t2", {d_t, d_r});
      add("u_h", {d_h, d_r});
      break;
    case FamilyTag::kDQuadrilinear:
      add("label_embeddings", {L + 1, d_t});
      add("u_t1", {d_t, d_r});
      add("u_t2", {d_t, d_r});
      add("u_h1", {d_h, d_r});
      add("u_h2", {d_h, d_r});
      add("boundary_pre", {d_h});
      break;
    case FamilyTag::kDPentalinear:
      add("label_embeddings", {L + 1, d_t});
      add("u_t1", {d_t, d_r});
      add("u_t2", {d_t, d_r});
      add("u_h1", {d_h, d_r});
      add("u_h2", {d_h, d_r});
      add("u_h3", {d_h, d_r});
      add("boundary_pre", {d_h});
      add("boundary_post", {d_h});
      break;
    case FamilyTag::kConcatMlp1W2L:
    case FamilyTag::kConcatMlp2W2L:
      add("label_embeddings", {L + 1, d_t});
      add("mlp_w1", {hidden, mlp_input_width(family, d_h, d_t)});
      add("mlp_b1", {hidden});
      add("mlp_w2", {1, hidden});
      if (family == FamilyTag::kConcatMlp2W2L) add("boundary_pre", {d_h});
      break;
  }
  return out;
}

Shape shape_of(const Vec& v) { return {v.dim()}; }
Shape shape_of(const Mat& m) { return {m.rows, m.cols}; }
Shape shape_of(const Tensor3& t) { return {t.d1, t.d2, t.d3}; }

void allocate(Vec& v, const Shape& s) { v = Vec(s.at(0)); }
void allocate(Mat& m, const Shape& s) { m = Mat(s.at(0), s.at(1)); }
void allocate(Tensor3& t, const Shape& s) { t = Tensor3(s.at(0), s.at(1), s.at(2)); }

std::string shape_string(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out;
}

void allocate_field(ModelParams& p, std::string_view name, const Shape& shape) {
  if (name == "label_embeddings") allocate(p.label_embeddings, shape);
  else if (name == "transition_table") allocate(p.transition_table, shape);
  else if (name == "w_h") allocate(p.w_h, shape);
  else if (name == "w_t") allocate(p.w_t, shape);
  else if (name == "w_h1") allocate(p.w_h1, shape);
  else if (name == "w_h2") allocate(p.w_h2, shape);
  else if (name == "u_dense") allocate(p.u_dense, shape);
  else if (name == "u_t1") allocate(p.u_t1, shape);
  else if (name == "u_t2") allocate(p.u_t2, shape);
  else if (name == "u_h") allocate(p.u_h, shape);
  else if (name == "u_h1") allocate(p.u_h1, shape);
  else if (name == "u_h2") allocate(p.u_h2, shape);
  else if (name == "u_h3") allocate(p.u_h3, shape);
  else if (name == "mlp_w1") allocate(p.mlp_w1, shape);
  else if (name == "mlp_b1") allocate(p.mlp_b1, shape);
  else if (name == "mlp_w2") allocate(p.mlp_w2, shape);
  else if (name == "boundary_pre") allocate(p.boundary_pre, shape);
  else if (name == "boundary_post") allocate(p.boundary_post, shape);
  else throw Error("unknown parameter field: " + std::string(name));
}

// out[r] += sum_c m(r, c) * v[c]
void add_matvec(const Mat& m, std::span<const double> v, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows; ++r) out[r] += dot(m.row(r), v);
}

// out += v^T m, over the first v.size() rows of m
void add_vecmat(std::span<const double> v, const Mat& m, std::span<double> out) {
  for (std::size_t r = 0; r < v.size(); ++r) {
    if (v[r] != 0.0) axpy(v[r], m.row(r), out);
  }
}

// Rows of `in` projected through `proj`: out = in * proj.
Mat project_rows(const Mat& in, const Mat& proj) {
  Mat out(in.rows, proj.cols);
  gemm(false, false, in.rows, proj.cols, in.cols, 1.0, in.data.data(), in.cols, proj.data.data(), proj.cols,
       0.0, out.data.data(), proj.cols);
  return out;
}

Vec project_vec(const Vec& v, const Mat& proj) {
  Vec out(proj.cols);
  add_vecmat(v.span(), proj, out.span());
  return out;
}

// m += x y^T
void add_outer(std::span<const double> x, std::span<const double> y, Mat& m) {
  for (std::size_t r = 0; r < x.size(); ++r) {
    if (x[r] != 0.0) axpy(x[r], y, m.row(r));
  }
}

// Column sums of the position-0 block: the total weight on each label
// reached from the start state.
std::vector<double> start_column(const LatticeGrad& g) {
  const std::size_t L = g.num_labels;
  std::vector<double> col(L, 0.0);
  for (std::size_t a = 0; a < L; ++a) {
    for (std::size_t b = 0; b < L; ++b) col[b] += g(0, a, b);
  }
  return col;
}

void add_into(std::vector<double>& dst, const std::vector<double>& src) {
  if (src.empty()) return;
  if (dst.empty()) {
    dst = src;
    return;
  }
  for (std::size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
}

}  // namespace

std::string_view family_name(FamilyTag family) {
  for (const auto& info : kFamilyNames) {
    if (info.tag == family) return info.name;
  }
  throw Error("unknown family");
}

FamilyTag parse_family(std::string_view name) {
  for (const auto& info : kFamilyNames) {
    if (info.name == name) return info.tag;
  }
  throw Error("unknown family: " + std::string(name));
}

bool is_crf(FamilyTag family) { return family != FamilyTag::kSoftmax; }

std::vector<std::string_view> required_fields(FamilyTag family) {
  std::vector<std::string_view> names;
  for (const auto& [name, shape] : field_shapes(family, 1, 1, 1, 1, 1)) names.push_back(name);
  return names;
}

std::size_t ModelParams::parameter_count() const {
  std::size_t n = 0;
  for_each_field([&](std::string_view, const auto& t) { n += t.data.size(); });
  return n;
}

void ModelParams::validate() const {
  if (num_labels == 0) throw Error("model has no labels");
  if (d_h == 0) throw Error("model has d_h = 0");
  const auto expected = field_shapes(family, num_labels, d_h, d_t, d_r, mlp_hidden);
  std::size_t k = 0;
  for_each_field([&](std::string_view name, const auto& t) {
    if (k >= expected.size() || expected[k].first != name) {
      throw Error("field " + std::string(name) + " is not used by family " +
                  std::string(family_name(family)));
    }
    if (shape_of(t) != expected[k].second) {
      throw Error("field " + std::string(name) + " has shape " + shape_string(shape_of(t)) +
                  ", expected " + shape_string(expected[k].second));
    }
    if (!all_finite(t.data)) throw Error("non-finite value in parameter field " + std::string(name));
    ++k;
  });
  if (k != expected.size()) {
    throw Error("missing parameter field " + std::string(expected[k].first) + " for family " +
                std::string(family_name(family)));
  }
}

ModelParams init_params(FamilyTag family, const Dims& dims, RngSeed seed) {
  if (dims.num_labels == 0 || dims.d_h == 0) throw Error("init_params: L and d_h must be positive");
  ModelParams p;
  p.family = family;
  p.num_labels = dims.num_labels;
  p.d_h = dims.d_h;
  const bool uses_labels = family != FamilyTag::kSoftmax && family != FamilyTag::kVanillaCrf;
  const bool decomposed = family == FamilyTag::kDTrilinear || family == FamilyTag::kDQuadrilinear ||
                          family == FamilyTag::kDPentalinear;
  const bool mlp = family == FamilyTag::kConcatMlp1W2L || family == FamilyTag::kConcatMlp2W2L;
  p.d_t = uses_labels ? dims.d_t : 0;
  p.d_r = decomposed ? dims.d_r : 0;
  p.mlp_hidden = mlp ? dims.mlp_hidden : 0;
  if (uses_labels && p.d_t == 0) throw Error("init_params: d_t must be positive");
  if (decomposed && p.d_r == 0) throw Error("init_params: d_r must be positive");
  if (mlp && p.mlp_hidden == 0) throw Error("init_params: mlp_hidden must be positive");

  const auto shapes = field_shapes(family, p.num_labels, p.d_h, p.d_t, p.d_r, p.mlp_hidden);
  for (const auto& [name, shape] : shapes) allocate_field(p, name, shape);

  std::uint64_t stream = 0;
  p.for_each_field([&](std::string_view name, auto& t) {
    const RngSeed field_seed = derive_seed(seed, stream++);
    using T = std::decay_t<decltype(t)>;
    if constexpr (std::is_same_v<T, Mat>) {
      t = init_matrix(t.rows, t.cols, field_seed);
    } else if constexpr (std::is_same_v<T, Tensor3>) {
      t = init_tensor3(t.d1, t.d2, t.d3, field_seed);
    }
    // Vectors (hidden bias, boundary offsets) start at zero.
    (void)name;
  });
  return p;
}

ParamGrad zeros_like(const ModelParams& params) {
  ParamGrad g = params;
  g.for_each_field([](std::string_view, auto& t) { std::fill(t.data.begin(), t.data.end(), 0.0); });
  return g;
}

RepresentationSequence make_reps(Mat h) {
  RepresentationSequence reps;
  reps.h_pre = Vec(h.cols);
  reps.h_post = Vec(h.cols);
  reps.h = std::move(h);
  return reps;
}

void GradAccumulator::add(const GradAccumulator& other) {
  direct.for_each_field([&](std::string_view name, auto& t) {
    other.direct.for_each_field([&](std::string_view other_name, const auto& u) {
      if (name == other_name) add_into(t.data, u.data);
    });
  });
  add_into(d_trans.data, other.d_trans.data);
  add_into(d_emit_cur.data, other.d_emit_cur.data);
  add_into(d_emit_prev.data, other.d_emit_prev.data);
  add_into(d_pair.data, other.d_pair.data);
  add_into(d_label_prev.data, other.d_label_prev.data);
  add_into(d_label_cur.data, other.d_label_cur.data);
}

// ---------------------------------------------------------------------------
// Potential: construction caches everything that depends only on labels.

Potential::Potential(const ModelParams& params) : params_(&params) {
  params.validate();
  const std::size_t L = params.num_labels;
  const Mat& T = params.label_embeddings;

  switch (params.family) {
    case FamilyTag::kSoftmax:
    case FamilyTag::kVanillaCrf:
    case FamilyTag::kTwoBilinear:
    case FamilyTag::kThreeBilinear:
      kind_ = Kind::kAdditive;
      break;
    case FamilyTag::kTrilinear:
    case FamilyTag::kDTrilinear:
    case FamilyTag::kDQuadrilinear:
    case FamilyTag::kDPentalinear:
      kind_ = Kind::kMultilinear;
      break;
    case FamilyTag::kConcatMlp1W2L:
    case FamilyTag::kConcatMlp2W2L:
      kind_ = Kind::kMlp;
      break;
  }

  if (kind_ == Kind::kAdditive) {
    trans_ = Mat(L + 1, L);
    switch (params.family) {
      case FamilyTag::kSoftmax:
        emit_cur_ = params.w_h;
        break;
      case FamilyTag::kVanillaCrf:
        trans_ = params.transition_table;
        emit_cur_ = params.w_h;
        break;
      default: {
        // trans = T W_t T[:L]^T
        const Mat tw = project_rows(T, params.w_t);
        for (std::size_t a = 0; a <= L; ++a) {
          for (std::size_t b = 0; b < L; ++b) trans_(a, b) = dot(tw.row(a), T.row(b));
        }
        const Mat& w_cur = params.family == FamilyTag::kTwoBilinear ? params.w_h : params.w_h1;
        emit_cur_ = Mat(params.d_h, L);
        for (std::size_t p = 0; p < params.d_h; ++p) {
          for (std::size_t b = 0; b < L; ++b) emit_cur_(p, b) = dot(w_cur.row(p), T.row(b));
        }
        if (params.family == FamilyTag::kThreeBilinear) {
          emit_prev_ = Mat(params.d_h, L + 1);
          for (std::size_t p = 0; p < params.d_h; ++p) {
            for (std::size_t a = 0; a <= L; ++a) emit_prev_(p, a) = dot(params.w_h2.row(p), T.row(a));
          }
        }
      }
    }
  } else if (kind_ == Kind::kMultilinear) {
    if (params.family == FamilyTag::kTrilinear) {
      rank_ = params.d_h;
      pair_ = Mat((L + 1) * L, rank_);
      const std::size_t d_t = params.d_t;
      Mat tu(L + 1, d_t);
      for (std::size_t p = 0; p < params.d_h; ++p) {
        std::fill(tu.data.begin(), tu.data.end(), 0.0);
        const auto slab = params.u_dense.slab(p);
        for (std::size_t a = 0; a <= L; ++a) {
          for (std::size_t q = 0; q < d_t; ++q) {
            const double tq = T(a, q);
            if (tq != 0.0) axpy(tq, slab.subspan(q * d_t, d_t), tu.row(a));
          }
        }
        for (std::size_t a = 0; a <= L; ++a) {
          for (std::size_t b = 0; b < L; ++b) pair_(a * L + b, p) = dot(tu.row(a), T.row(b));
        }
      }
    } else {
      rank_ = params.d_r;
      g_prev_ = project_rows(T, params.u_t1);
      g_cur_ = Mat(L, rank_);
      for (std::size_t b = 0; b < L; ++b) add_vecmat(T.row(b), params.u_t2, g_cur_.row(b));
      pair_ = Mat((L + 1) * L, rank_);
      for (std::size_t a = 0; a <= L; ++a) {
        const auto ga = g_prev_.row(a);
        for (std::size_t b = 0; b < L; ++b) {
          const auto gb = g_cur_.row(b);
          auto out = pair_.row(a * L + b);
          for (std::size_t j = 0; j < rank_; ++j) out[j] = ga[j] * gb[j];
        }
      }
    }
  } else {
    const std::size_t H = params.mlp_hidden;
    const std::size_t d_t = params.d_t;
    const std::size_t width = params.mlp_w1.cols;
    const std::size_t off_prev_label = width - 2 * d_t;
    const std::size_t off_cur_label = width - d_t;
    label_prev_ = Mat(L + 1, H);
    label_cur_ = Mat(L, H);
    for (std::size_t k = 0; k < H; ++k) {
      const auto w = params.mlp_w1.row(k);
      for (std::size_t a = 0; a <= L; ++a) label_prev_(a, k) = dot(w.subspan(off_prev_label, d_t), T.row(a));
      for (std::size_t b = 0; b < L; ++b) label_cur_(b, k) = dot(w.subspan(off_cur_label, d_t), T.row(b));
    }
  }
}

void Potential::check_reps(const RepresentationSequence& reps) const {
  if (reps.length() == 0) throw Error("empty representation sequence");
  if (reps.dim() != params_->d_h) {
    throw Error("representation dim " + std::to_string(reps.dim()) + " does not match model d_h " +
                std::to_string(params_->d_h));
  }
  if (reps.h_pre.dim() != params_->d_h || reps.h_post.dim() != params_->d_h) {
    throw Error("boundary representation dim does not match model d_h");
  }
}

Vec Potential::effective_pre(const RepresentationSequence& reps) const {
  Vec v = reps.h_pre;
  if (!params_->boundary_pre.empty()) axpy(1.0, params_->boundary_pre.span(), v.span());
  return v;
}

Vec Potential::effective_post(const RepresentationSequence& reps) const {
  Vec v = reps.h_post;
  if (!params_->boundary_post.empty()) axpy(1.0, params_->boundary_post.span(), v.span());
  return v;
}

ScoreLattice Potential::score(const RepresentationSequence& reps) const {
  check_reps(reps);
  ScoreLattice lat(reps.length(), num_labels());
  switch (kind_) {
    case Kind::kAdditive:
      score_additive(reps, lat);
      break;
    case Kind::kMultilinear:
      score_multilinear(reps, lat);
      break;
    case Kind::kMlp:
      score_mlp(reps, lat);
      break;
  }
  return lat;
}

GradAccumulator Potential::make_accumulator() const {
  GradAccumulator acc;
  acc.direct = zeros_like(*params_);
  const std::size_t L = num_labels();
  switch (kind_) {
    case Kind::kAdditive:
      acc.d_trans = Mat(L + 1, L);
      acc.d_emit_cur = Mat(params_->d_h, L);
      if (!emit_prev_.empty()) acc.d_emit_prev = Mat(params_->d_h, L + 1);
      break;
    case Kind::kMultilinear:
      acc.d_pair = Mat((L + 1) * L, rank_);
      break;
    case Kind::kMlp:
      acc.d_label_prev = Mat(L + 1, params_->mlp_hidden);
      acc.d_label_cur = Mat(L, params_->mlp_hidden);
      break;
  }
  return acc;
}

void Potential::accumulate(const RepresentationSequence& reps, const LatticeGrad& lat_grad,
                           GradAccumulator& acc) const {
  check_reps(reps);
  if (lat_grad.length != reps.length() || lat_grad.num_labels != num_labels()) {
    throw Error("lattice gradient shape does not match the sequence");
  }
  switch (kind_) {
    case Kind::kAdditive:
      accumulate_additive(reps, lat_grad, acc);
      break;
    case Kind::kMultilinear:
      accumulate_multilinear(reps, lat_grad, acc);
      break;
    case Kind::kMlp:
      accumulate_mlp(reps, lat_grad, acc);
      break;
  }
}

void Potential::finish(const GradAccumulator& acc, ParamGrad& out) const {
  // Per-sequence parameter gradients first.
  out.for_each_field([&](std::string_view name, auto& t) {
    acc.direct.for_each_field([&](std::string_view src_name, const auto& u) {
      if (name == src_name) axpy(1.0, u.data, t.data);
    });
  });
  switch (kind_) {
    case Kind::kAdditive:
      finish_additive(acc, out);
      break;
    case Kind::kMultilinear:
      finish_multilinear(acc, out);
      break;
    case Kind::kMlp:
      finish_mlp(acc, out);
      break;
  }
}

// ---------------------------------------------------------------------------
// Additive families: s = trans[a][b] + h_i . emit_cur[:, b] + h_i . emit_prev[:, a]

void Potential::score_additive(const RepresentationSequence& reps, ScoreLattice& lat) const {
  const std::size_t M = reps.length();
  const std::size_t L = num_labels();
  const Mat cur = project_rows(reps.h, emit_cur_);
  const Mat prev = emit_prev_.empty() ? Mat() : project_rows(reps.h, emit_prev_);
  for (std::size_t i = 0; i < M; ++i) {
    if (i == 0) {
      const double prev_term = prev.empty() ? 0.0 : prev(0, L);
      for (std::size_t b = 0; b < L; ++b) {
        const double v = trans_(L, b) + cur(0, b) + prev_term;
        for (std::size_t a = 0; a < L; ++a) lat(0, a, b) = v;
      }
      continue;
    }
    for (std::size_t a = 0; a < L; ++a) {
      const double prev_term = prev.empty() ? 0.0 : prev(i, a);
      for (std::size_t b = 0; b < L; ++b) lat(i, a, b) = trans_(a, b) + cur(i, b) + prev_term;
    }
  }
}

void Potential::accumulate_additive(const RepresentationSequence& reps, const LatticeGrad& g,
                                    GradAccumulator& acc) const {
  const std::size_t M = reps.length();
  const std::size_t L = num_labels();
  const bool with_prev = !emit_prev_.empty();
  std::vector<double> cur(L), prev(L + 1);
  for (std::size_t i = 0; i < M; ++i) {
    std::fill(cur.begin(), cur.end(), 0.0);
    std::fill(prev.begin(), prev.end(), 0.0);
    if (i == 0) {
      cur = start_column(g);
      for (std::size_t b = 0; b < L; ++b) {
        acc.d_trans(L, b) += cur[b];
        prev[L] += cur[b];
      }
    } else {
      for (std::size_t a = 0; a < L; ++a) {
        for (std::size_t b = 0; b < L; ++b) {
          const double w = g(i, a, b);
          acc.d_trans(a, b) += w;
          cur[b] += w;
          prev[a] += w;
        }
      }
    }
    add_outer(reps.h.row(i), cur, acc.d_emit_cur);
    if (with_prev) add_outer(reps.h.row(i), prev, acc.d_emit_prev);
  }
}

void Potential::finish_additive(const GradAccumulator& acc, ParamGrad& out) const {
  const ModelParams& p = *params_;
  const std::size_t L = p.num_labels;
  switch (p.family) {
    case FamilyTag::kSoftmax:
      axpy(1.0, acc.d_emit_cur.data, out.w_h.data);
      return;
    case FamilyTag::kVanillaCrf:
      axpy(1.0, acc.d_trans.data, out.transition_table.data);
      axpy(1.0, acc.d_emit_cur.data, out.w_h.data);
      return;
    default:
      break;
  }
  const Mat& T = p.label_embeddings;
  Mat& dT = out.label_embeddings;
  const std::size_t d_t = p.d_t;

  // trans[a][b] = t_a^T W_t t_b
  const Mat& D = acc.d_trans;
  Mat dt(L + 1, d_t);  // D T[:L]
  for (std::size_t a = 0; a <= L; ++a) add_vecmat(D.row(a), T, dt.row(a));
  for (std::size_t a = 0; a <= L; ++a) add_outer(T.row(a), dt.row(a), out.w_t);
  // dT[a] += sum_b D[a][b] W_t t_b
  Mat wt(L, d_t);
  for (std::size_t b = 0; b < L; ++b) add_matvec(p.w_t, T.row(b), wt.row(b));
  for (std::size_t a = 0; a <= L; ++a) add_vecmat(D.row(a), wt, dT.row(a));
  // dT[b] += sum_a D[a][b] W_t^T t_a
  const Mat tw = project_rows(T, p.w_t);
  for (std::size_t a = 0; a <= L; ++a) {
    for (std::size_t b = 0; b < L; ++b) {
      if (D(a, b) != 0.0) axpy(D(a, b), tw.row(a), dT.row(b));
    }
  }

  // emit_cur[p][b] = w_cur[p] . t_b
  const bool two = p.family == FamilyTag::kTwoBilinear;
  const Mat& w_cur = two ? p.w_h : p.w_h1;
  Mat& dw_cur = two ? out.w_h : out.w_h1;
  const Mat& E = acc.d_emit_cur;
  for (std::size_t r = 0; r < p.d_h; ++r) {
    add_vecmat(E.row(r), T, dw_cur.row(r));
    for (std::size_t b = 0; b < L; ++b) {
      if (E(r, b) != 0.0) axpy(E(r, b), w_cur.row(r), dT.row(b));
    }
  }
  if (!emit_prev_.empty()) {
    const Mat& F = acc.d_emit_prev;
    for (std::size_t r = 0; r < p.d_h; ++r) {
      for (std::size_t a = 0; a <= L; ++a) {
        const double w = F(r, a);
        if (w == 0.0) continue;
        axpy(w, T.row(a), out.w_h2.row(r));
        axpy(w, p.w_h2.row(r), dT.row(a));
      }
    }
  }
}

// ---------------------------------------------------------------------------
// Multilinear families: s = pair[a][b] . x_i, with x_i the product of the
// word-side factors (or h_i itself for the dense trilinear tensor).

Mat Potential::multilinear_features(const RepresentationSequence& reps, Mat* prev_proj,
                                    Mat* cur_proj, Mat* next_proj) const {
  const ModelParams& p = *params_;
  const std::size_t M = reps.length();
  switch (p.family) {
    case FamilyTag::kTrilinear:
      return reps.h;
    case FamilyTag::kDTrilinear:
      return project_rows(reps.h, p.u_h);
    default:
      break;
  }
  const std::size_t R = rank_;
  const Mat prev_all = project_rows(reps.h, p.u_h1);
  Mat prev(M, R);
  {
    const Vec pre = project_vec(effective_pre(reps), p.u_h1);
    std::copy(pre.data.begin(), pre.data.end(), prev.row(0).begin());
    for (std::size_t i = 1; i < M; ++i) {
      std::copy(prev_all.row(i - 1).begin(), prev_all.row(i - 1).end(), prev.row(i).begin());
    }
  }
  Mat cur = project_rows(reps.h, p.u_h2);
  Mat next;
  if (p.family == FamilyTag::kDPentalinear) {
    const Mat all3 = project_rows(reps.h, p.u_h3);
    next = Mat(M, R);
    for (std::size_t i = 0; i + 1 < M; ++i) {
      std::copy(all3.row(i + 1).begin(), all3.row(i + 1).end(), next.row(i).begin());
    }
    const Vec post = project_vec(effective_post(reps), p.u_h3);
    std::copy(post.data.begin(), post.data.end(), next.row(M - 1).begin());
  }
  Mat x(M, R);
  for (std::size_t i = 0; i < M; ++i) {
    auto xi = x.row(i);
    const auto pi = prev.row(i);
    const auto ci = cur.row(i);
    for (std::size_t j = 0; j < R; ++j) xi[j] = pi[j] * ci[j];
    if (!next.empty()) {
      const auto ni = next.row(i);
      for (std::size_t j = 0; j < R; ++j) xi[j] *= ni[j];
    }
  }
  if (prev_proj) *prev_proj = std::move(prev);
  if (cur_proj) *cur_proj = std::move(cur);
  if (next_proj) *next_proj = std::move(next);
  return x;
}

void Potential::score_multilinear(const RepresentationSequence& reps, ScoreLattice& lat) const {
  const std::size_t M = reps.length();
  const std::size_t L = num_labels();
  const Mat x = multilinear_features(reps, nullptr, nullptr, nullptr);
  for (std::size_t b = 0; b < L; ++b) {
    const double v = dot(pair_.row(L * L + b), x.row(0));
    for (std::size_t a = 0; a < L; ++a) lat(0, a, b) = v;
  }
  // Positions 1.. form one product: lattice rows (M-1 x L*L) = x * pair^T.
  if (M > 1) {
    const std::size_t LL = L * L;
    gemm(false, true, M - 1, LL, rank_, 1.0, x.data.data() + rank_, rank_, pair_.data.data(), rank_, 0.0,
         lat.values.data() + LL, LL);
  }
}

void Potential::accumulate_multilinear(const RepresentationSequence& reps, const LatticeGrad& g,
                                       GradAccumulator& acc) const {
  const ModelParams& p = *params_;
  const std::size_t M = reps.length();
  const std::size_t L = num_labels();
  const std::size_t R = rank_;
  Mat prev, cur, next;
  const Mat x = multilinear_features(reps, &prev, &cur, &next);
  const bool need_dx = p.family != FamilyTag::kTrilinear;
  Mat dx(M, R);

  const auto col = start_column(g);
  for (std::size_t b = 0; b < L; ++b) {
    if (col[b] == 0.0) continue;
    axpy(col[b], x.row(0), acc.d_pair.row(L * L + b));
    if (need_dx) axpy(col[b], pair_.row(L * L + b), dx.row(0));
  }
  if (M > 1) {
    const std::size_t LL = L * L;
    const double* g_rest = g.values.data() + LL;
    gemm(true, false, LL, R, M - 1, 1.0, g_rest, LL, x.data.data() + R, R, 1.0, acc.d_pair.data.data(), R);
    if (need_dx) gemm(false, false, M - 1, R, LL, 1.0, g_rest, LL, pair_.data.data(), R, 0.0, dx.data.data() + R, R);
  }

  ParamGrad& out = acc.direct;
  const std::size_t D = p.d_h;
  const double* H = reps.h.data.data();
  if (p.family == FamilyTag::kTrilinear) return;
  if (p.family == FamilyTag::kDTrilinear) {
    gemm(true, false, D, R, M, 1.0, H, D, dx.data.data(), R, 1.0, out.u_h.data.data(), R);
    return;
  }

  // Quadrilinear / pentalinear: distribute dx over the word factors.
  const bool penta = p.family == FamilyTag::kDPentalinear;
  Mat d_prev(M, R), d_cur(M, R), d_next(penta ? M : 0, R);
  for (std::size_t i = 0; i < M; ++i) {
    for (std::size_t j = 0; j < R; ++j) {
      const double n = penta ? next(i, j) : 1.0;
      d_prev(i, j) = dx(i, j) * cur(i, j) * n;
      d_cur(i, j) = dx(i, j) * prev(i, j) * n;
      if (penta) d_next(i, j) = dx(i, j) * prev(i, j) * cur(i, j);
    }
  }
  gemm(true, false, D, R, M, 1.0, H, D, d_cur.data.data(), R, 1.0, out.u_h2.data.data(), R);
  // The previous-word factor sees the boundary at i = 0 and h_{i-1} after.
  add_outer(effective_pre(reps).span(), d_prev.row(0), out.u_h1);
  add_matvec(p.u_h1, d_prev.row(0), out.boundary_pre.span());
  gemm(true, false, D, R, M - 1, 1.0, H, D, d_prev.data.data() + R, R, 1.0, out.u_h1.data.data(), R);
  if (penta) {
    add_outer(effective_post(reps).span(), d_next.row(M - 1), out.u_h3);
    add_matvec(p.u_h3, d_next.row(M - 1), out.boundary_post.span());
    gemm(true, false, D, R, M - 1, 1.0, H + D, D, d_next.data.data(), R, 1.0, out.u_h3.data.data(), R);
  }
}

void Potential::finish_multilinear(const GradAccumulator& acc, ParamGrad& out) const {
  const ModelParams& p = *params_;
  const std::size_t L = p.num_labels;
  const std::size_t d_t = p.d_t;
  const Mat& T = p.label_embeddings;
  Mat& dT = out.label_embeddings;

  if (p.family == FamilyTag::kTrilinear) {
    Mat D(L + 1, L), dt(L + 1, d_t), ut(L, d_t), tu(L + 1, d_t);
    for (std::size_t r = 0; r < p.d_h; ++r) {
      for (std::size_t a = 0; a <= L; ++a) {
        for (std::size_t b = 0; b < L; ++b) D(a, b) = acc.d_pair(a * L + b, r);
      }
      const auto slab = p.u_dense.slab(r);
      // dU[r][q][s] += sum_ab D[a][b] t_a[q] t_b[s]
      std::fill(dt.data.begin(), dt.data.end(), 0.0);
      for (std::size_t a = 0; a <= L; ++a) add_vecmat(D.row(a), T, dt.row(a));
      double* du = out.u_dense.data.data() + r * d_t * d_t;
      for (std::size_t a = 0; a <= L; ++a) {
        for (std::size_t q = 0; q < d_t; ++q) {
          const double tq = T(a, q);
          if (tq != 0.0) axpy(tq, dt.row(a), std::span<double>(du + q * d_t, d_t));
        }
      }
      // ut[b][q] = sum_s U[r][q][s] t_b[s];  tu[a][s] = sum_q t_a[q] U[r][q][s]
      std::fill(ut.data.begin(), ut.data.end(), 0.0);
      std::fill(tu.data.begin(), tu.data.end(), 0.0);
      for (std::size_t q = 0; q < d_t; ++q) {
        const auto uq = slab.subspan(q * d_t, d_t);
        for (std::size_t b = 0; b < L; ++b) ut(b, q) = dot(uq, T.row(b));
        for (std::size_t a = 0; a <= L; ++a) {
          if (T(a, q) != 0.0) axpy(T(a, q), uq, tu.row(a));
        }
      }
      for (std::size_t a = 0; a <= L; ++a) {
        for (std::size_t b = 0; b < L; ++b) {
          const double w = D(a, b);
          if (w == 0.0) continue;
          axpy(w, ut.row(b), dT.row(a));
          axpy(w, tu.row(a), dT.row(b));
        }
      }
    }
    return;
  }

  const std::size_t R = rank_;
  Mat d_gprev(L + 1, R), d_gcur(L, R);
  for (std::size_t a = 0; a <= L; ++a) {
    const auto ga = g_prev_.row(a);
    auto dga = d_gprev.row(a);
    for (std::size_t b = 0; b < L; ++b) {
      const auto dp = acc.d_pair.row(a * L + b);
      const auto gb = g_cur_.row(b);
      auto dgb = d_gcur.row(b);
      for (std::size_t j = 0; j < R; ++j) {
        dga[j] += dp[j] * gb[j];
        dgb[j] += dp[j] * ga[j];
      }
    }
  }
  for (std::size_t a = 0; a <= L; ++a) {
    add_outer(T.row(a), d_gprev.row(a), out.u_t1);
    add_matvec(p.u_t1, d_gprev.row(a), dT.row(a));
  }
  for (std::size_t b = 0; b < L; ++b) {
    add_outer(T.row(b), d_gcur.row(b), out.u_t2);
    add_matvec(p.u_t2, d_gcur.row(b), dT.row(b));
  }
}

// ---------------------------------------------------------------------------
// Concatenation MLP: s = w2 . tanh(W1 [h_{i-1};] h_i; t_a; t_b] + b1)

Mat Potential::mlp_position_terms(const RepresentationSequence& reps) const {
  const ModelParams& p = *params_;
  const std::size_t M = reps.length();
  const std::size_t H = p.mlp_hidden;
  const bool two_words = p.family == FamilyTag::kConcatMlp2W2L;
  const std::size_t off_cur = two_words ? p.d_h : 0;
  const Vec pre = two_words ? effective_pre(reps) : Vec();
  Mat terms(M, H);
  for (std::size_t i = 0; i < M; ++i) {
    auto t = terms.row(i);
    for (std::size_t k = 0; k < H; ++k) {
      const auto w = p.mlp_w1.row(k);
      double v = p.mlp_b1[k] + dot(w.subspan(off_cur, p.d_h), reps.h.row(i));
      if (two_words) {
        const std::span<const double> h_prev = i == 0 ? pre.span() : reps.h.row(i - 1);
        v += dot(w.subspan(0, p.d_h), h_prev);
      }
      t[k] = v;
    }
  }
  return terms;
}

void Potential::score_mlp(const RepresentationSequence& reps, ScoreLattice& lat) const {
  const ModelParams& p = *params_;
  const std::size_t M = reps.length();
  const std::size_t L = num_labels();
  const std::size_t H = p.mlp_hidden;
  const Mat terms = mlp_position_terms(reps);
  const auto w2 = p.mlp_w2.row(0);
  auto unit = [&](std::size_t i, std::size_t a, std::size_t b) {
    const auto ti = terms.row(i);
    const auto la = label_prev_.row(a);
    const auto lb = label_cur_.row(b);
    double s = 0.0;
    for (std::size_t k = 0; k < H; ++k) s += w2[k] * std::tanh(ti[k] + la[k] + lb[k]);
    return s;
  };
  for (std::size_t b = 0; b < L; ++b) {
    const double v = unit(0, L, b);
    for (std::size_t a = 0; a < L; ++a) lat(0, a, b) = v;
  }
  for (std::size_t i = 1; i < M; ++i) {
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) lat(i, a, b) = unit(i, a, b);
    }
  }
}

void Potential::accumulate_mlp(const RepresentationSequence& reps, const LatticeGrad& g,
                               GradAccumulator& acc) const {
  const ModelParams& p = *params_;
  const std::size_t M = reps.length();
  const std::size_t L = num_labels();
  const std::size_t H = p.mlp_hidden;
  const bool two_words = p.family == FamilyTag::kConcatMlp2W2L;
  const std::size_t off_cur = two_words ? p.d_h : 0;
  const Mat terms = mlp_position_terms(reps);
  const auto w2 = p.mlp_w2.row(0);
  ParamGrad& out = acc.direct;
  auto dw2 = out.mlp_w2.row(0);
  Mat d_terms(M, H);
  std::vector<double> dz(H);

  auto unit = [&](std::size_t i, std::size_t a, std::size_t b, double w) {
    const auto ti = terms.row(i);
    const auto la = label_prev_.row(a);
    const auto lb = label_cur_.row(b);
    for (std::size_t k = 0; k < H; ++k) {
      const double z = std::tanh(ti[k] + la[k] + lb[k]);
      dw2[k] += w * z;
      dz[k] = w * w2[k] * (1.0 - z * z);
    }
    axpy(1.0, dz, d_terms.row(i));
    axpy(1.0, dz, acc.d_label_prev.row(a));
    axpy(1.0, dz, acc.d_label_cur.row(b));
  };
  const auto col = start_column(g);
  for (std::size_t b = 0; b < L; ++b) {
    if (col[b] != 0.0) unit(0, L, b, col[b]);
  }
  for (std::size_t i = 1; i < M; ++i) {
    for (std::size_t a = 0; a < L; ++a) {
      for (std::size_t b = 0; b < L; ++b) {
        if (g(i, a, b) != 0.0) unit(i, a, b, g(i, a, b));
      }
    }
  }

  const Vec pre = two_words ? effective_pre(reps) : Vec();
  for (std::size_t i = 0; i < M; ++i) {
    const auto dti = d_terms.row(i);
    axpy(1.0, dti, out.mlp_b1.span());
    const std::span<const double> h_prev = two_words ? (i == 0 ? pre.span() : reps.h.row(i - 1))
                                                     : std::span<const double>();
    for (std::size_t k = 0; k < H; ++k) {
      const double w = dti[k];
      if (w == 0.0) continue;
      auto row = out.mlp_w1.row(k);
      axpy(w, reps.h.row(i), row.subspan(off_cur, p.d_h));
      if (two_words) {
        axpy(w, h_prev, row.subspan(0, p.d_h));
        if (i == 0) axpy(w, p.mlp_w1.row(k).subspan(0, p.d_h), out.boundary_pre.span());
      }
    }
  }
}

void Potential::finish_mlp(const GradAccumulator& acc, ParamGrad& out) const {
  const ModelParams& p = *params_;
  const std::size_t L = p.num_labels;
  const std::size_t H = p.mlp_hidden;
  const std::size_t d_t = p.d_t;
  const std::size_t width = p.mlp_w1.cols;
  const std::size_t off_prev_label = width - 2 * d_t;
  const std::size_t off_cur_label = width - d_t;
  const Mat& T = p.label_embeddings;
  Mat& dT = out.label_embeddings;
  for (std::size_t k = 0; k < H; ++k) {
    const auto w = p.mlp_w1.row(k);
    auto dw = out.mlp_w1.row(k);
    for (std::size_t a = 0; a <= L; ++a) {
      const double v = acc.d_label_prev(a, k);
      if (v == 0.0) continue;
      axpy(v, T.row(a), dw.subspan(off_prev_label, d_t));
      axpy(v, w.subspan(off_prev_label, d_t), dT.row(a));
    }
    for (std::size_t b = 0; b < L; ++b) {
      const double v = acc.d_label_cur(b, k);
      if (v == 0.0) continue;
      axpy(v, T.row(b), dw.subspan(off_cur_label, d_t));
      axpy(v, w.subspan(off_cur_label, d_t), dT.row(b));
    }
  }
}

// ---------------------------------------------------------------------------

ScoreLattice score_lattice(const ModelParams& params, const RepresentationSequence& reps) {
  return Potential(params).score(reps);
}

ParamGrad backprop_lattice(const ModelParams& params, const RepresentationSequence& reps,
                           const LatticeGrad& lat_grad) {
  const Potential potential(params);
  GradAccumulator acc = potential.make_accumulator();
  potential.accumulate(reps, lat_grad, acc);
  ParamGrad grad = zeros_like(params);
  potential.finish(acc, grad);
  return grad;
}

Tensor3 reconstruct_dense_trilinear(const Mat& u_t1, const Mat& u_t2, const Mat& u_h) {
  if (u_t1.cols != u_h.cols || u_t2.cols != u_h.cols) {
    throw Error("reconstruct_dense_trilinear: factor matrices need the same column count");
  }
  const std::size_t rank = u_h.cols;
  Tensor3 u(u_h.rows, u_t1.rows, u_t2.rows);
  for (std::size_t p = 0; p < u_h.rows; ++p) {
    for (std::size_t q = 0; q < u_t1.rows; ++q) {
      for (std::size_t r = 0; r < u_t2.rows; ++r) {
        double s = 0.0;
        for (std::size_t j = 0; j < rank; ++j) s += u_h(p, j) * u_t1(q, j) * u_t2(r, j);
        u(p, q, r) = s;
      }
    }
  }
  return u;
}

}  // namespace mlcrf
