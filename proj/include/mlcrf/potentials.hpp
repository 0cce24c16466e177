#ifndef MLCRF_POTENTIALS_HPP
#define MLCRF_POTENTIALS_HPP

#include <array>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "mlcrf/core_math.hpp"

namespace mlcrf {

enum class FamilyTag {
  kSoftmax,
  kVanillaCrf,
  kTwoBilinear,
  kThreeBilinear,
  kTrilinear,
  kDTrilinear,
  kDQuadrilinear,
  kDPentalinear,
  kConcatMlp1W2L,
  kConcatMlp2W2L,
};

inline constexpr std::array<FamilyTag, 10> kAllFamilies = {
    FamilyTag::kSoftmax,       FamilyTag::kVanillaCrf,    FamilyTag::kTwoBilinear,
    FamilyTag::kThreeBilinear, FamilyTag::kTrilinear,     FamilyTag::kDTrilinear,
    FamilyTag::kDQuadrilinear, FamilyTag::kDPentalinear,  FamilyTag::kConcatMlp1W2L,
    FamilyTag::kConcatMlp2W2L,
};

// Lowercase-hyphenated names, e.g. "d-quadrilinear".
std::string_view family_name(FamilyTag family);
// Throws Error("unknown family: ...").
FamilyTag parse_family(std::string_view name);
bool is_crf(FamilyTag family);

struct Dims {
  std::size_t num_labels = 0;
  std::size_t d_h = 0;
  std::size_t d_t = 100;
  std::size_t d_r = 128;
  std::size_t mlp_hidden = 128;
};

// Parameters of one potential family. Fields a family does not use stay empty.
//
// Label-embedding tables have L + 1 rows: row L is the learned start label
// that stands in for y_0. The transition table likewise has L + 1 rows.
// boundary_pre / boundary_post are learned offsets added to the (zero)
// boundary representations h_0 and h_{M+1}; they exist only for families
// that read neighbouring words and are initialised to zero.
struct ModelParams {
  FamilyTag family = FamilyTag::kVanillaCrf;
  std::size_t num_labels = 0;
  std::size_t d_h = 0;
  std::size_t d_t = 0;
  std::size_t d_r = 0;
  std::size_t mlp_hidden = 0;

  Mat label_embeddings;  // (L+1) x d_t
  Mat transition_table;  // (L+1) x L
  Mat w_h;               // d_h x L (softmax, vanilla) or d_h x d_t (two-bilinear)
  Mat w_t;               // d_t x d_t
  Mat w_h1;              // d_h x d_t (three-bilinear, current label)
  Mat w_h2;              // d_h x d_t (three-bilinear, previous label)
  Tensor3 u_dense;       // d_h x d_t x d_t, indexed [word][prev label][label]
  Mat u_t1;              // d_t x d_r
  Mat u_t2;              // d_t x d_r
  Mat u_h;               // d_h x d_r
  Mat u_h1;              // d_h x d_r, previous word
  Mat u_h2;              // d_h x d_r, current word
  Mat u_h3;              // d_h x d_r, next word
  Mat mlp_w1;            // hidden x input
  Vec mlp_b1;            // hidden
  Mat mlp_w2;            // 1 x hidden
  Vec boundary_pre;      // d_h
  Vec boundary_post;     // d_h

  // Visits every populated tensor as f(name, tensor&) in a fixed order.
  template <class F>
  void for_each_field(F&& f) {
    visit_fields(*this, f);
  }
  template <class F>
  void for_each_field(F&& f) const {
    visit_fields(*this, f);
  }

  std::size_t parameter_count() const;
  // Checks populated fields against the family and dims; throws on mismatch
  // or non-finite entries.
  void validate() const;

  friend bool operator==(const ModelParams&, const ModelParams&) = default;

 private:
  template <class Self, class F>
  static void visit_fields(Self& self, F& f) {
    auto visit = [&](std::string_view name, auto& tensor) {
      if (!tensor.empty()) f(name, tensor);
    };
    visit("label_embeddings", self.label_embeddings);
    visit("transition_table", self.transition_table);
    visit("w_h", self.w_h);
    visit("w_t", self.w_t);
    visit("w_h1", self.w_h1);
    visit("w_h2", self.w_h2);
    visit("u_dense", self.u_dense);
    visit("u_t1", self.u_t1);
    visit("u_t2", self.u_t2);
    visit("u_h", self.u_h);
    visit("u_h1", self.u_h1);
    visit("u_h2", self.u_h2);
    visit("u_h3", self.u_h3);
    visit("mlp_w1", self.mlp_w1);
    visit("mlp_b1", self.mlp_b1);
    visit("mlp_w2", self.mlp_w2);
    visit("boundary_pre", self.boundary_pre);
    visit("boundary_post", self.boundary_post);
  }
};

// Gradients share the parameter layout.
using ParamGrad = ModelParams;

// Names of the tensor fields a family populates, in for_each_field order.
std::vector<std::string_view> required_fields(FamilyTag family);

ModelParams init_params(FamilyTag family, const Dims& dims, RngSeed seed);
ParamGrad zeros_like(const ModelParams& params);

struct RepresentationSequence {
  Mat h;        // M x d_h, one row per token
  Vec h_pre;    // stands for h_0
  Vec h_post;   // stands for h_{M+1}

  std::size_t length() const { return h.rows; }
  std::size_t dim() const { return h.cols; }
};

// Builds a sequence with all-zero boundary vectors.
RepresentationSequence make_reps(Mat h);

// M x L x L table. Entry (i, a, b) scores y_{i-1} = a, y_i = b.
// Position 0 has no real previous label: score_lattice writes the
// start-conditioned score into every row there, and inference reads row
// kBosRow only.
struct Lattice {
  std::size_t length = 0;
  std::size_t num_labels = 0;
  std::vector<double> values;

  Lattice() = default;
  Lattice(std::size_t m, std::size_t l, double fill = 0.0)
      : length(m), num_labels(l), values(m * l * l, fill) {}

  double& operator()(std::size_t i, std::size_t a, std::size_t b) {
    return values[(i * num_labels + a) * num_labels + b];
  }
  double operator()(std::size_t i, std::size_t a, std::size_t b) const {
    return values[(i * num_labels + a) * num_labels + b];
  }
  std::span<const double> block(std::size_t i) const {
    return {values.data() + i * num_labels * num_labels, num_labels * num_labels};
  }
};

using ScoreLattice = Lattice;
using LatticeGrad = Lattice;

inline constexpr std::size_t kBosRow = 0;

// Intermediate gradients gathered over many sequences against one Potential;
// Potential::finish maps them onto ParamGrad.
struct GradAccumulator {
  ParamGrad direct;   // gradients of per-sequence parameters
  Mat d_trans;        // (L+1) x L transition scores
  Mat d_emit_cur;     // d_h x L
  Mat d_emit_prev;    // d_h x (L+1)
  Mat d_pair;         // (L+1)L x R label-pair tensor
  Mat d_label_prev;   // (L+1) x hidden MLP label projections
  Mat d_label_cur;    // L x hidden

  void add(const GradAccumulator& other);
};

// Scores sequences under fixed parameters. Quantities that depend only on
// the label side are computed once in the constructor and reused for every
// sequence, so the referenced parameters must outlive the Potential and stay
// unchanged.
class Potential {
 public:
  explicit Potential(const ModelParams& params);

  const ModelParams& params() const { return *params_; }
  std::size_t num_labels() const { return params_->num_labels; }

  ScoreLattice score(const RepresentationSequence& reps) const;

  GradAccumulator make_accumulator() const;
  // Adds the chain rule of sum(lat_grad .* score(reps)) into acc.
  void accumulate(const RepresentationSequence& reps, const LatticeGrad& lat_grad,
                  GradAccumulator& acc) const;
  // Adds the parameter gradient held by acc into out.
  void finish(const GradAccumulator& acc, ParamGrad& out) const;

 private:
  enum class Kind { kAdditive, kMultilinear, kMlp };

  void check_reps(const RepresentationSequence& reps) const;
  Vec effective_pre(const RepresentationSequence& reps) const;
  Vec effective_post(const RepresentationSequence& reps) const;
  // Rows: per-position feature vectors of the multilinear families.
  Mat multilinear_features(const RepresentationSequence& reps, Mat* prev_proj, Mat* cur_proj,
                           Mat* next_proj) const;
  Mat mlp_position_terms(const RepresentationSequence& reps) const;

  void score_additive(const RepresentationSequence& reps, ScoreLattice& lat) const;
  void score_multilinear(const RepresentationSequence& reps, ScoreLattice& lat) const;
  void score_mlp(const RepresentationSequence& reps, ScoreLattice& lat) const;
  void accumulate_additive(const RepresentationSequence& reps, const LatticeGrad& g,
                           GradAccumulator& acc) const;
  void accumulate_multilinear(const RepresentationSequence& reps, const LatticeGrad& g,
                              GradAccumulator& acc) const;
  void accumulate_mlp(const RepresentationSequence& reps, const LatticeGrad& g,
                      GradAccumulator& acc) const;
  void finish_additive(const GradAccumulator& acc, ParamGrad& out) const;
  void finish_multilinear(const GradAccumulator& acc, ParamGrad& out) const;
  void finish_mlp(const GradAccumulator& acc, ParamGrad& out) const;

  const ModelParams* params_;
  Kind kind_;
  std::size_t rank_ = 0;  // feature width R of the multilinear families

  Mat trans_;       // (L+1) x L
  Mat emit_cur_;    // d_h x L
  Mat emit_prev_;   // d_h x (L+1), three-bilinear only
  Mat pair_;        // (L+1)L x R
  Mat g_prev_;      // (L+1) x d_r, previous-label factor
  Mat g_cur_;       // L x d_r, current-label factor
  Mat label_prev_;  // (L+1) x hidden
  Mat label_cur_;   // L x hidden
};

ScoreLattice score_lattice(const ModelParams& params, const RepresentationSequence& reps);
ParamGrad backprop_lattice(const ModelParams& params, const RepresentationSequence& reps,
                           const LatticeGrad& lat_grad);

// U[p][q][r] = sum_j u_h[p][j] * u_t1[q][j] * u_t2[r][j].
Tensor3 reconstruct_dense_trilinear(const Mat& u_t1, const Mat& u_t2, const Mat& u_h);

}  // namespace mlcrf

#endif  // MLCRF_POTENTIALS_HPP
