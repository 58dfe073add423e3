#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "milpevo/bnb.hpp"
#include "milpevo/features.hpp"
#include "milpevo/util.hpp"

namespace milpevo {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Reverse-mode tape over dense matrices.

class Tape {
 public:
  /// Constant input; receives no gradient.
  int constant(Mat value);
  /// Trainable leaf; its gradient is read back with grad().
  int param(const Mat& value);

  const Mat& value(int id) const { return nodes_[id].value; }
  /// Zero-sized until a gradient reaches the node.
  const Mat& grad(int id) const { return nodes_[id].grad; }

  int matmul(int a, int b);
  /// a * b^T
  int matmul_nt(int a, int b);
  int add(int a, int b);
  /// Adds the 1 x d row `bias` to every row of a.
  int add_row(int a, int bias);
  int relu(int a);
  int scale(int a, double s);
  /// Elementwise product with a constant.
  int mul_const(int a, Mat mask);
  /// Row-wise layer normalization with gain/shift rows.
  int layer_norm(int a, int gain, int shift, double eps = 1e-5);
  /// S * a for a constant sparse S.
  int spmm(std::shared_ptr<const Eigen::SparseMatrix<double>> s, int a);
  int gather_rows(int a, std::vector<int> rows);
  int concat_rows(const std::vector<int>& parts);
  int concat_cols(const std::vector<int>& parts);
  int slice_cols(int a, int start, int count);
  /// 1 x d mean of the rows (zero row for an empty input).
  int mean_rows(int a);
  int softmax_rows(int a);

  /// Propagates `seed` (same shape as out) back through the tape.
  void backward(int out, const Mat& seed);

 private:
  struct Node {
    Mat value;
    Mat grad;
    bool needs_grad = false;
    std::function<void(Tape&, const Mat&)> back;
  };
  int push(Mat value, bool needs_grad, std::function<void(Tape&, const Mat&)> back);
  bool ng(int id) const { return nodes_[id].needs_grad; }
  void accumulate(int id, const Mat& g);

  std::vector<Node> nodes_;
};

// ---------------------------------------------------------------------------
// Model parameters.

enum class Task { kGap, kBranch, kAlign };
std::string_view to_string(Task task);
Task parse_task(std::string_view name);

struct GnnHyper {
  Task task = Task::kGap;
  int d_hidden = 64;
  int s_subsample = 512;
  int n_heads = 8;
  int n_conv = 1;
  int ff_width = 256;
  int var_dim = kGapVarDim;
  int cons_dim = kGapConsDim;
  /// Output dimension of the alignment head.
  int embed_dim = 64;
  /// Attention-weight dropout during training.
  double dropout = 0.6;
};

/// Task defaults: one convolution with attention pooling for gap/align,
/// three convolutions and a per-variable head for branch.
GnnHyper default_hyper(Task task);

struct GnnParams {
  GnnHyper hyper;
  /// Named tensors. Names starting with "norm." or "frozen." are not trained.
  std::map<std::string, Mat> tensors;

  const Mat& at(const std::string& name) const;
  bool trainable(const std::string& name) const;
  std::size_t n_trainable() const;
};

/// Glorot-uniform weights, zero biases, unit layer-norm gains, identity
/// input normalization.
GnnParams init_params(const GnnHyper& hyper, Rng& rng);

/// Versioned little-endian binary container.
void save_params(const GnnParams& params, const std::string& path);
GnnParams load_params(const std::string& path);
std::string params_to_bytes(const GnnParams& params);
GnnParams params_from_bytes(std::string_view bytes);

/// Per-column mean and standard deviation (floored) over every graph,
/// written into the norm.* tensors.
void fit_normalization(GnnParams& params, const std::vector<const BipartiteGraph*>& graphs);

// ---------------------------------------------------------------------------
// Forward passes.

struct ForwardMode {
  /// Seeds node subsampling and dropout.
  std::uint64_t seed = 0;
  bool train = false;
};

/// Builds the task model on `tape` and returns the output node: 1 x 1 (gap),
/// 1 x D (align) or k x 1 candidate logits (branch). Parameter leaves are
/// reported through `leaves` (name -> node id) when given.
int build_forward(Tape& tape, const GnnParams& params, const BipartiteGraph& graph,
                  const std::vector<int>* candidates, const ForwardMode& mode,
                  std::map<std::string, int>* leaves = nullptr);

double forward_gap(const BipartiteGraph& graph, const GnnParams& params,
                   const ForwardMode& mode = {});
Vec forward_branch(const BipartiteGraph& graph, const std::vector<int>& candidates,
                   const GnnParams& params);
Vec forward_embed(const BipartiteGraph& graph, const GnnParams& params,
                  const ForwardMode& mode = {});

/// Solver policy: argmax of the branch model's candidate logits.
BranchPolicy make_learned_policy(const GnnParams& params);

// ---------------------------------------------------------------------------
// Losses. Each returns the loss and writes the gradient wrt its first input.

/// delta = 1.
double huber_loss(double pred, double label, double* grad = nullptr);
/// -log softmax(logits)[expert].
double branch_ce_loss(const Vec& logits, int expert, Vec* grad = nullptr);
/// Symmetric cross-entropy over cosine logits of row-normalized embeddings;
/// matching pairs share a row index. Gradient is wrt the MILP-side rows.
double contrastive_loss(const Mat& milp, const Mat& text, Mat* grad_milp = nullptr);

// ---------------------------------------------------------------------------
// Text embedding.

/// Hashed bag of unigrams and bigrams, L2-normalized. Error("config") for
/// D < 8; Error("empty-text") when the text has no tokens.
Vec text_embed(std::string_view text, int dim);

/// id -> vector table from a JSON object file.
std::map<std::string, Vec> load_text_embeddings(const std::string& path);

// ---------------------------------------------------------------------------
// Datasets and training.

struct GapExample {
  std::string id;
  std::string class_id;
  BipartiteGraph graph;
  double label = 0.0;
};

struct AlignExample {
  std::string id;
  std::string class_id;
  BipartiteGraph graph;
  std::string text;
  std::optional<Vec> text_embedding;
};

std::string gap_example_to_json(const GapExample& e);
GapExample gap_example_from_json(std::string_view line);
std::string align_example_to_json(const AlignExample& e);
AlignExample align_example_from_json(std::string_view line);

struct TrainConfig {
  Task task = Task::kGap;
  double learning_rate = 1e-3;
  int batch_size = 32;
  /// Gradient steps; when epochs > 0 the step count is derived from it.
  int steps = 30000;
  int epochs = 0;
  std::uint64_t seed = 0;
  double dropout = 0.6;
  int embed_dim = 64;
  int eval_every = 100;
  int d_hidden = 64;

  /// "paper" or "desk" defaults for the task.
  static TrainConfig defaults(Task task, std::string_view profile = "paper");
  void validate() const;
};

std::string train_config_to_json(const TrainConfig& c);
TrainConfig train_config_from_json(std::string_view text);

struct HistoryEntry {
  int step = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  /// Best-on-validation checkpoint (last one when there is no validation set).
  GnnParams params;
  std::vector<HistoryEntry> history;
  int best_step = 0;
};

struct Adam {
  double lr = 1e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  std::map<std::string, Mat> m, v;
  void step(GnnParams& params, const std::map<std::string, Mat>& grads);
};

/// Loss and parameter gradients of one mini-batch.
struct BatchGrad {
  double loss = 0.0;
  std::map<std::string, Mat> grads;
};

BatchGrad gap_batch_grad(const GnnParams& params, const std::vector<const GapExample*>& batch,
                         const ForwardMode& mode);
BatchGrad branch_batch_grad(const GnnParams& params,
                            const std::vector<const BranchSample*>& batch);
/// `text` rows are the frozen (projected) text embeddings of the batch.
BatchGrad align_batch_grad(const GnnParams& params,
                           const std::vector<const BipartiteGraph*>& graphs, const Mat& text,
                           const ForwardMode& mode);

TrainResult train_gap(const std::vector<GapExample>& train, const std::vector<GapExample>& valid,
                      const TrainConfig& config);
TrainResult train_branch(const std::vector<BranchSample>& train,
                         const std::vector<BranchSample>& valid, const TrainConfig& config);
TrainResult train_align(const std::vector<AlignExample>& train,
                        const std::vector<AlignExample>& valid, const TrainConfig& config);

/// Text side of the alignment model: the example's own embedding (or the
/// hashed one), mapped to D by the frozen projection when dimensions differ.
Vec align_text_vector(const GnnParams& params, const AlignExample& example);

/// Evaluation seed for a sample id.
std::uint64_t eval_seed(const std::string& id);

// ---------------------------------------------------------------------------
// Gradient check.

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Compares analytic gradients with central differences (h = 1e-5) on a
/// random `fraction` of trainable entries (at least `min_entries`). Dropout
/// is off and subsampling uses a fixed seed. Relative error is
/// |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult grad_check_gap(const GnnParams& params, const GapExample& sample, Rng& rng,
                               double fraction = 0.05, std::size_t min_entries = 40);
GradCheckResult grad_check_branch(const GnnParams& params, const BranchSample& sample, Rng& rng,
                                  double fraction = 0.05, std::size_t min_entries = 40);
GradCheckResult grad_check_align(const GnnParams& params,
                                 const std::vector<const BipartiteGraph*>& graphs,
                                 const Mat& text, Rng& rng, double fraction = 0.05,
                                 std::size_t min_entries = 40);

}  // namespace milpevo
