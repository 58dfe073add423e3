#include "milpevo/learn.hpp"

#include <algorithm>
#include <bit>
#include <cctype>
#include <cmath>
#include <cstring>
#include <limits>
#include <numeric>

#include "json.hpp"

namespace milpevo {

static_assert(std::endian::native == std::endian::little, "parameter files assume little-endian");

std::string_view to_string(Task task) {
  switch (task) {
    case Task::kGap: return "gap";
    case Task::kBranch: return "branch";
    case Task::kAlign: return "align";
  }
  return "gap";
}

Task parse_task(std::string_view name) {
  if (name == "gap") return Task::kGap;
  if (name == "branch") return Task::kBranch;
  if (name == "align") return Task::kAlign;
  throw Error("config", "unknown task '" + std::string(name) + "'");
}

GnnHyper default_hyper(Task task) {
  GnnHyper h;
  h.task = task;
  h.ff_width = 4 * h.d_hidden;
  if (task == Task::kBranch) {
    h.n_conv = 3;
    h.var_dim = kBranchVarDim;
    h.cons_dim = kBranchConsDim;
    h.dropout = 0.0;
  } else if (task == Task::kAlign) {
    h.dropout = 0.5;
  }
  return h;
}

const Mat& GnnParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error("shape", "missing parameter tensor '" + name + "'");
  return it->second;
}

bool GnnParams::trainable(const std::string& name) const {
  return name.rfind("norm.", 0) != 0 && name.rfind("frozen.", 0) != 0;
}

std::size_t GnnParams::n_trainable() const {
  std::size_t n = 0;
  for (const auto& [name, t] : tensors) {
    if (trainable(name)) n += static_cast<std::size_t>(t.size());
  }
  return n;
}

namespace {

Mat glorot(Rng& rng, int rows, int cols) {
  const double a = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Mat m(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) m(i, j) = rng.uniform(-a, a);
  }
  return m;
}

void add_linear(GnnParams& p, Rng& rng, const std::string& prefix, int in, int out) {
  p.tensors[prefix + ".w"] = glorot(rng, in, out);
  p.tensors[prefix + ".b"] = Mat::Zero(1, out);
}

void add_layer_norm(GnnParams& p, const std::string& prefix, int d) {
  p.tensors[prefix + ".g"] = Mat::Ones(1, d);
  p.tensors[prefix + ".b"] = Mat::Zero(1, d);
}

void add_half_conv(GnnParams& p, Rng& rng, const std::string& prefix, int d) {
  p.tensors[prefix + ".msg"] = glorot(rng, d, d);
  p.tensors[prefix + ".self"] = glorot(rng, d, d);
  p.tensors[prefix + ".bias"] = Mat::Zero(1, d);
  add_layer_norm(p, prefix + ".ln", d);
  add_linear(p, rng, prefix + ".post1", d, d);
  add_linear(p, rng, prefix + ".post2", d, d);
}

}  // namespace

GnnParams init_params(const GnnHyper& h, Rng& rng) {
  if (h.d_hidden < 1 || h.n_heads < 1 || h.d_hidden % h.n_heads != 0) {
    throw Error("config", "d_hidden must be a positive multiple of n_heads");
  }
  if (h.n_conv < 1 || h.s_subsample < 1 || h.ff_width < 1 || h.embed_dim < 1) {
    throw Error("config", "model sizes must be positive");
  }
  GnnParams p;
  p.hyper = h;
  const int d = h.d_hidden;
  p.tensors["norm.var.mean"] = Mat::Zero(1, h.var_dim);
  p.tensors["norm.var.std"] = Mat::Ones(1, h.var_dim);
  p.tensors["norm.cons.mean"] = Mat::Zero(1, h.cons_dim);
  p.tensors["norm.cons.std"] = Mat::Ones(1, h.cons_dim);
  add_linear(p, rng, "embed.var.l1", h.var_dim, d);
  add_linear(p, rng, "embed.var.l2", d, d);
  add_linear(p, rng, "embed.cons.l1", h.cons_dim, d);
  add_linear(p, rng, "embed.cons.l2", d, d);
  for (int l = 0; l < h.n_conv; ++l) {
    add_half_conv(p, rng, "conv" + std::to_string(l) + ".vc", d);
    add_half_conv(p, rng, "conv" + std::to_string(l) + ".cv", d);
  }
  if (h.task != Task::kBranch) {
    p.tensors["attn.query"] = glorot(rng, 1, d);
    add_linear(p, rng, "attn.key", d, d);
    add_linear(p, rng, "attn.value", d, d);
    add_linear(p, rng, "attn.out", d, d);
    add_layer_norm(p, "attn.ln1", d);
    add_linear(p, rng, "attn.ff1", d, h.ff_width);
    add_linear(p, rng, "attn.ff2", h.ff_width, d);
    add_layer_norm(p, "attn.ln2", d);
  }
  add_linear(p, rng, "head.l1", d, d);
  add_linear(p, rng, "head.l2", d, h.task == Task::kAlign ? h.embed_dim : 1);
  return p;
}

// ---------------------------------------------------------------------------
// Serialization

namespace {

constexpr char kMagic[8] = {'M', 'E', 'V', 'O', 'G', 'N', 'N', '1'};
constexpr std::uint32_t kFormatVersion = 1;

template <typename T>
void put(std::string& out, T v) {
  char buf[sizeof(T)];
  std::memcpy(buf, &v, sizeof(T));
  out.append(buf, sizeof(T));
}

template <typename T>
T take(std::string_view bytes, std::size_t& at) {
  if (at + sizeof(T) > bytes.size()) throw Error("format", "truncated parameter file");
  T v;
  std::memcpy(&v, bytes.data() + at, sizeof(T));
  at += sizeof(T);
  return v;
}

nlohmann::ordered_json hyper_to_json(const GnnHyper& h) {
  nlohmann::ordered_json j;
  j["task"] = std::string(to_string(h.task));
  j["d_hidden"] = h.d_hidden;
  j["s_subsample"] = h.s_subsample;
  j["n_heads"] = h.n_heads;
  j["n_conv"] = h.n_conv;
  j["ff_width"] = h.ff_width;
  j["var_dim"] = h.var_dim;
  j["cons_dim"] = h.cons_dim;
  j["embed_dim"] = h.embed_dim;
  j["dropout"] = h.dropout;
  return j;
}

GnnHyper hyper_from_json(const nlohmann::json& j) {
  GnnHyper h;
  h.task = parse_task(j.at("task").get<std::string>());
  h.d_hidden = j.at("d_hidden").get<int>();
  h.s_subsample = j.at("s_subsample").get<int>();
  h.n_heads = j.at("n_heads").get<int>();
  h.n_conv = j.at("n_conv").get<int>();
  h.ff_width = j.at("ff_width").get<int>();
  h.var_dim = j.at("var_dim").get<int>();
  h.cons_dim = j.at("cons_dim").get<int>();
  h.embed_dim = j.at("embed_dim").get<int>();
  h.dropout = j.at("dropout").get<double>();
  return h;
}

}  // namespace

std::string params_to_bytes(const GnnParams& params) {
  std::string out(kMagic, sizeof(kMagic));
  put<std::uint32_t>(out, kFormatVersion);
  const std::string hyper = hyper_to_json(params.hyper).dump();
  put<std::uint32_t>(out, static_cast<std::uint32_t>(hyper.size()));
  out += hyper;
  put<std::uint32_t>(out, static_cast<std::uint32_t>(params.tensors.size()));
  for (const auto& [name, t] : params.tensors) {
    put<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.rows()));
    put<std::uint64_t>(out, static_cast<std::uint64_t>(t.cols()));
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) put<double>(out, t(i, j));
    }
  }
  return out;
}

GnnParams params_from_bytes(std::string_view bytes) {
  if (bytes.size() < sizeof(kMagic) || std::memcmp(bytes.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error("format", "not a parameter file");
  }
  std::size_t at = sizeof(kMagic);
  const auto version = take<std::uint32_t>(bytes, at);
  if (version != kFormatVersion) {
    throw Error("format", "unsupported parameter file version " + std::to_string(version));
  }
  const auto hyper_len = take<std::uint32_t>(bytes, at);
  if (at + hyper_len > bytes.size()) throw Error("format", "truncated parameter file");
  GnnParams p;
  p.hyper = hyper_from_json(nlohmann::json::parse(bytes.substr(at, hyper_len)));
  at += hyper_len;
  const auto count = take<std::uint32_t>(bytes, at);
  for (std::uint32_t k = 0; k < count; ++k) {
    const auto name_len = take<std::uint32_t>(bytes, at);
    if (at + name_len > bytes.size()) throw Error("format", "truncated parameter file");
    std::string name(bytes.substr(at, name_len));
    at += name_len;
    const auto rows = take<std::uint64_t>(bytes, at);
    const auto cols = take<std::uint64_t>(bytes, at);
    if (rows * cols * sizeof(double) > bytes.size() - at) {
      throw Error("format", "truncated parameter file");
    }
    Mat t(static_cast<Eigen::Index>(rows), static_cast<Eigen::Index>(cols));
    for (Eigen::Index i = 0; i < t.rows(); ++i) {
      for (Eigen::Index j = 0; j < t.cols(); ++j) t(i, j) = take<double>(bytes, at);
    }
    p.tensors.emplace(std::move(name), std::move(t));
  }
  if (at != bytes.size()) throw Error("format", "trailing bytes in parameter file");
  return p;
}

void save_params(const GnnParams& params, const std::string& path) {
  write_file(path, params_to_bytes(params));
}

GnnParams load_params(const std::string& path) { return params_from_bytes(read_file(path)); }

void fit_normalization(GnnParams& params, const std::vector<const BipartiteGraph*>& graphs) {
  auto fit = [&](bool vars, const std::string& prefix) {
    const int dim = vars ? params.hyper.var_dim : params.hyper.cons_dim;
    Vec sum = Vec::Zero(dim), sq = Vec::Zero(dim);
    double n = 0;
    for (const BipartiteGraph* g : graphs) {
      const Mat& f = vars ? g->var_features : g->cons_features;
      if (f.rows() == 0) continue;
      if (f.cols() != dim) throw Error("shape", "feature dimension does not match the model");
      sum += f.colwise().sum().transpose();
      sq += f.array().square().colwise().sum().matrix().transpose();
      n += static_cast<double>(f.rows());
    }
    Mat mean = Mat::Zero(1, dim), sd = Mat::Ones(1, dim);
    if (n > 0) {
      for (int j = 0; j < dim; ++j) {
        mean(0, j) = sum(j) / n;
        const double var = std::max(0.0, sq(j) / n - mean(0, j) * mean(0, j));
        sd(0, j) = std::max(std::sqrt(var), 1e-3);
      }
    }
    params.tensors[prefix + ".mean"] = mean;
    params.tensors[prefix + ".std"] = sd;
  };
  fit(true, "norm.var");
  fit(false, "norm.cons");
}

// ---------------------------------------------------------------------------
// Forward

namespace {

class Builder {
 public:
  Builder(Tape& tape, const GnnParams& params, std::map<std::string, int>* leaves)
      : t_(tape), p_(params), leaves_(leaves) {}

  int P(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const bool train = p_.trainable(name);
    const int id = train ? t_.param(p_.at(name)) : t_.constant(p_.at(name));
    cache_[name] = id;
    if (leaves_ && train) (*leaves_)[name] = id;
    return id;
  }

  int linear(int x, const std::string& prefix) {
    return t_.add_row(t_.matmul(x, P(prefix + ".w")), P(prefix + ".b"));
  }

  int mlp2(int x, const std::string& a, const std::string& b) {
    return linear(t_.relu(linear(x, a)), b);
  }

  int layer_norm(int x, const std::string& prefix) {
    return t_.layer_norm(x, P(prefix + ".g"), P(prefix + ".b"));
  }

  int half_conv(int target, int source, std::shared_ptr<const Eigen::SparseMatrix<double>> s,
                const std::string& prefix) {
    const int msg = t_.spmm(std::move(s), t_.matmul(source, P(prefix + ".msg")));
    const int pre = t_.add_row(t_.add(msg, t_.matmul(target, P(prefix + ".self"))),
                               P(prefix + ".bias"));
    return mlp2(layer_norm(pre, prefix + ".ln"), prefix + ".post1", prefix + ".post2");
  }

  Tape& t_;
  const GnnParams& p_;

 private:
  std::map<std::string, int>* leaves_;
  std::map<std::string, int> cache_;
};

Mat normalized(const Mat& f, const Mat& mean, const Mat& sd) {
  Mat out = f.rowwise() - mean.row(0);
  out.array().rowwise() /= sd.row(0).array();
  return out;
}

}  // namespace

int build_forward(Tape& tape, const GnnParams& params, const BipartiteGraph& graph,
                  const std::vector<int>* candidates, const ForwardMode& mode,
                  std::map<std::string, int>* leaves) {
  const GnnHyper& h = params.hyper;
  const GraphSchema want = h.task == Task::kBranch ? GraphSchema::kBranch : GraphSchema::kGap;
  if (graph.schema != want || graph.var_features.cols() != h.var_dim ||
      graph.cons_features.cols() != h.cons_dim) {
    throw Error("shape", "graph schema does not match the " + std::string(to_string(h.task)) +
                             " model");
  }
  const int n = graph.n_vars(), m = graph.n_cons();
  if (n == 0) throw Error("shape", "graph has no variables");
  Builder b(tape, params, leaves);

  auto s = std::make_shared<Eigen::SparseMatrix<double>>(m, n);
  {
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(graph.n_edges());
    for (std::size_t k = 0; k < graph.n_edges(); ++k) {
      trip.emplace_back(graph.edge_cons[k], graph.edge_var[k], graph.edge_value[k]);
    }
    s->setFromTriplets(trip.begin(), trip.end());
  }
  auto st = std::make_shared<Eigen::SparseMatrix<double>>(s->transpose());

  int v = tape.constant(
      normalized(graph.var_features, params.at("norm.var.mean"), params.at("norm.var.std")));
  int c = tape.constant(
      normalized(graph.cons_features, params.at("norm.cons.mean"), params.at("norm.cons.std")));
  v = tape.relu(b.linear(tape.relu(b.linear(v, "embed.var.l1")), "embed.var.l2"));
  c = tape.relu(b.linear(tape.relu(b.linear(c, "embed.cons.l1")), "embed.cons.l2"));
  for (int l = 0; l < h.n_conv; ++l) {
    const std::string prefix = "conv" + std::to_string(l);
    c = b.half_conv(c, v, s, prefix + ".vc");
    v = b.half_conv(v, c, st, prefix + ".cv");
  }

  if (h.task == Task::kBranch) {
    if (!candidates || candidates->empty()) throw Error("shape", "branch model needs candidates");
    for (int j : *candidates) {
      if (j < 0 || j >= n) throw Error("shape", "candidate index out of range");
    }
    return b.mlp2(tape.gather_rows(v, *candidates), "head.l1", "head.l2");
  }

  // Attention pooling: a sample of node embeddings plus the two mean-pooled
  // nodes and an all-zero summary slot whose output feeds the head.
  const int d = h.d_hidden;
  const int total = n + m;
  int nodes = tape.concat_rows({v, c});
  if (total > h.s_subsample) {
    Rng rng(mix_seed(mode.seed, 0x5B5A));
    auto pick = rng.sample_without_replacement(static_cast<std::size_t>(total),
                                               static_cast<std::size_t>(h.s_subsample));
    std::vector<int> rows(pick.begin(), pick.end());
    std::sort(rows.begin(), rows.end());
    nodes = tape.gather_rows(nodes, std::move(rows));
  }
  const int tokens =
      tape.concat_rows({nodes, tape.mean_rows(v), tape.mean_rows(c), tape.constant(Mat::Zero(1, d))});
  const int keys = b.linear(tokens, "attn.key");
  const int values = b.linear(tokens, "attn.value");
  const int query = b.P("attn.query");
  const int dh = d / h.n_heads;
  const double inv_sqrt = 1.0 / std::sqrt(static_cast<double>(dh));
  const bool drop = mode.train && h.dropout > 0.0;
  Rng drop_rng(mix_seed(mode.seed, 0xD409));
  std::vector<int> heads;
  for (int k = 0; k < h.n_heads; ++k) {
    const int qh = tape.slice_cols(query, k * dh, dh);
    const int kh = tape.slice_cols(keys, k * dh, dh);
    int att = tape.softmax_rows(tape.scale(tape.matmul_nt(qh, kh), inv_sqrt));
    if (drop) {
      Mat mask(1, tape.value(att).cols());
      const double keep = 1.0 - h.dropout;
      for (Eigen::Index j = 0; j < mask.cols(); ++j) {
        mask(0, j) = drop_rng.bernoulli(keep) ? 1.0 / keep : 0.0;
      }
      att = tape.mul_const(att, std::move(mask));
    }
    heads.push_back(tape.matmul(att, tape.slice_cols(values, k * dh, dh)));
  }
  const int attn = b.linear(tape.concat_cols(heads), "attn.out");
  const int x1 = b.layer_norm(attn, "attn.ln1");
  const int x2 = b.layer_norm(tape.add(x1, b.mlp2(x1, "attn.ff1", "attn.ff2")), "attn.ln2");
  return b.mlp2(x2, "head.l1", "head.l2");
}

double forward_gap(const BipartiteGraph& graph, const GnnParams& params, const ForwardMode& mode) {
  if (params.hyper.task != Task::kGap) throw Error("shape", "not a gap model");
  Tape tape;
  return tape.value(build_forward(tape, params, graph, nullptr, mode))(0, 0);
}

Vec forward_branch(const BipartiteGraph& graph, const std::vector<int>& candidates,
                   const GnnParams& params) {
  if (params.hyper.task != Task::kBranch) throw Error("shape", "not a branch model");
  Tape tape;
  return tape.value(build_forward(tape, params, graph, &candidates, {})).col(0);
}

Vec forward_embed(const BipartiteGraph& graph, const GnnParams& params, const ForwardMode& mode) {
  if (params.hyper.task != Task::kAlign) throw Error("shape", "not an alignment model");
  Tape tape;
  return tape.value(build_forward(tape, params, graph, nullptr, mode)).row(0).transpose();
}

BranchPolicy make_learned_policy(const GnnParams& params) {
  auto shared = std::make_shared<const GnnParams>(params);
  return [shared](const BranchContext& ctx) {
    const BipartiteGraph g = extract_branch_features(ctx);
    const auto& cands = ctx.node.candidates;
    const Vec logits = forward_branch(g, cands, *shared);
    Eigen::Index best = 0;
    logits.maxCoeff(&best);
    return cands[static_cast<std::size_t>(best)];
  };
}

// ---------------------------------------------------------------------------
// Losses

double huber_loss(double pred, double label, double* grad) {
  const double d = pred - label;
  if (std::abs(d) <= 1.0) {
    if (grad) *grad = d;
    return 0.5 * d * d;
  }
  if (grad) *grad = d > 0 ? 1.0 : -1.0;
  return std::abs(d) - 0.5;
}

double branch_ce_loss(const Vec& logits, int expert, Vec* grad) {
  if (expert < 0 || expert >= logits.size()) throw Error("range", "expert index out of range");
  const double mx = logits.maxCoeff();
  Vec e = (logits.array() - mx).exp().matrix();
  const double z = e.sum();
  if (grad) {
    *grad = e / z;
    (*grad)(expert) -= 1.0;
  }
  return std::log(z) - (logits(expert) - mx);
}

namespace {

Mat row_normalize(const Mat& x, Vec* norms) {
  Vec n = x.rowwise().norm();
  for (Eigen::Index i = 0; i < n.size(); ++i) {
    if (!(n(i) > 0.0)) throw Error("zero-norm", "embedding row has zero norm");
  }
  if (norms) *norms = n;
  return n.cwiseInverse().asDiagonal() * x;
}

/// Mean cross-entropy of each row of z against the diagonal label; adds
/// d(loss)/dz to grad.
double diag_ce(const Mat& z, Mat& grad) {
  const Eigen::Index k = z.rows();
  double loss = 0.0;
  for (Eigen::Index i = 0; i < k; ++i) {
    const double mx = z.row(i).maxCoeff();
    Eigen::RowVectorXd e = (z.row(i).array() - mx).exp().matrix();
    const double s = e.sum();
    loss += std::log(s) - (z(i, i) - mx);
    e /= s;
    e(i) -= 1.0;
    grad.row(i) += e / static_cast<double>(k);
  }
  return loss / static_cast<double>(k);
}

}  // namespace

double contrastive_loss(const Mat& milp, const Mat& text, Mat* grad_milp) {
  if (milp.rows() < 1 || milp.rows() != text.rows()) {
    throw Error("shape", "contrastive batch needs matching non-empty sides");
  }
  if (milp.cols() != text.cols()) throw Error("shape", "embedding dimensions differ");
  Vec norms;
  const Mat hm = row_normalize(milp, &norms);
  const Mat ht = row_normalize(text, nullptr);
  const Mat z = hm * ht.transpose();
  Mat gz = Mat::Zero(z.rows(), z.cols());
  Mat gzt = Mat::Zero(z.rows(), z.cols());
  const double loss = 0.5 * (diag_ce(z, gz) + diag_ce(z.transpose(), gzt));
  if (grad_milp) {
    const Mat dz = 0.5 * (gz + gzt.transpose());
    const Mat dhm = dz * ht;
    Mat g(milp.rows(), milp.cols());
    for (Eigen::Index i = 0; i < milp.rows(); ++i) {
      const double proj = hm.row(i).dot(dhm.row(i));
      g.row(i) = (dhm.row(i) - proj * hm.row(i)) / norms(i);
    }
    *grad_milp = g;
  }
  return loss;
}

// ---------------------------------------------------------------------------
// Text embedding

Vec text_embed(std::string_view text, int dim) {
  if (dim < 8) throw Error("config", "text embedding dimension must be at least 8");
  std::vector<std::string> tokens;
  std::string cur;
  for (char ch : text) {
    if (std::isalnum(static_cast<unsigned char>(ch))) {
      cur.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(ch))));
    } else if (!cur.empty()) {
      tokens.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) tokens.push_back(std::move(cur));
  if (tokens.empty()) throw Error("empty-text", "text has no tokens");
  Vec v = Vec::Zero(dim);
  auto add = [&](const std::string& feature, double w) {
    const std::uint64_t h = fnv1a64(feature);
    v(static_cast<Eigen::Index>(h % static_cast<std::uint64_t>(dim))) += (h >> 63) ? -w : w;
  };
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    add("u:" + tokens[i], 1.0);
    if (i + 1 < tokens.size()) add("b:" + tokens[i] + " " + tokens[i + 1], 0.5);
  }
  double norm = v.norm();
  if (!(norm > 0.0)) {
    v(static_cast<Eigen::Index>(fnv1a64(text) % static_cast<std::uint64_t>(dim))) = 1.0;
    norm = 1.0;
  }
  return v / norm;
}

std::map<std::string, Vec> load_text_embeddings(const std::string& path) {
  const auto j = nlohmann::json::parse(read_file(path));
  if (!j.is_object()) throw Error("format", "text embedding file must be a JSON object");
  std::map<std::string, Vec> out;
  for (const auto& [id, arr] : j.items()) {
    const auto values = arr.get<std::vector<double>>();
    out[id] = Eigen::Map<const Vec>(values.data(), static_cast<Eigen::Index>(values.size()));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Dataset records

std::string gap_example_to_json(const GapExample& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["class_id"] = e.class_id;
  j["label"] = e.label;
  j["graph"] = nlohmann::ordered_json::parse(graph_to_json(e.graph));
  return j.dump();
}

GapExample gap_example_from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  GapExample e;
  e.id = j.at("id").get<std::string>();
  e.class_id = j.value("class_id", std::string{});
  e.label = j.at("label").get<double>();
  e.graph = graph_from_json(j.at("graph").dump());
  return e;
}

std::string align_example_to_json(const AlignExample& e) {
  nlohmann::ordered_json j;
  j["id"] = e.id;
  j["class_id"] = e.class_id;
  j["text"] = e.text;
  if (e.text_embedding) {
    j["text_embedding"] = std::vector<double>(e.text_embedding->data(),
                                              e.text_embedding->data() + e.text_embedding->size());
  }
  j["graph"] = nlohmann::ordered_json::parse(graph_to_json(e.graph));
  return j.dump();
}

AlignExample align_example_from_json(std::string_view line) {
  const auto j = nlohmann::json::parse(line);
  AlignExample e;
  e.id = j.at("id").get<std::string>();
  e.class_id = j.value("class_id", std::string{});
  e.text = j.at("text").get<std::string>();
  if (j.contains("text_embedding")) {
    const auto v = j.at("text_embedding").get<std::vector<double>>();
    e.text_embedding = Eigen::Map<const Vec>(v.data(), static_cast<Eigen::Index>(v.size()));
  }
  e.graph = graph_from_json(j.at("graph").dump());
  return e;
}

// ---------------------------------------------------------------------------
// Training configuration

TrainConfig TrainConfig::defaults(Task task, std::string_view profile) {
  if (profile != "paper" && profile != "desk") {
    throw Error("config", "unknown training profile '" + std::string(profile) + "'");
  }
  const bool desk = profile == "desk";
  TrainConfig c;
  c.task = task;
  switch (task) {
    case Task::kGap:
      c.learning_rate = 1e-3;
      c.batch_size = desk ? 8 : 32;
      c.steps = desk ? 3000 : 30000;
      c.dropout = 0.6;
      c.eval_every = desk ? 250 : 1000;
      break;
    case Task::kBranch:
      c.learning_rate = 1e-3;
      c.batch_size = 32;
      c.epochs = desk ? 20 : 100;
      c.steps = 0;
      c.dropout = 0.0;
      c.eval_every = desk ? 50 : 500;
      break;
    case Task::kAlign:
      c.learning_rate = desk ? 1e-3 : 5e-5;
      c.batch_size = desk ? 16 : 32;
      c.steps = desk ? 1500 : 20000;
      c.dropout = 0.5;
      c.embed_dim = desk ? 64 : 4096;
      c.eval_every = desk ? 250 : 1000;
      break;
  }
  return c;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || batch_size < 1 || (steps < 1 && epochs < 1) || eval_every < 1 ||
      d_hidden < 8 || embed_dim < 8 || dropout < 0.0 || dropout >= 1.0) {
    throw Error("config", "invalid training configuration");
  }
}

std::string train_config_to_json(const TrainConfig& c) {
  nlohmann::ordered_json j;
  j["task"] = std::string(to_string(c.task));
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["steps"] = c.steps;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["dropout"] = c.dropout;
  j["embed_dim"] = c.embed_dim;
  j["eval_every"] = c.eval_every;
  j["d_hidden"] = c.d_hidden;
  return j.dump();
}

TrainConfig train_config_from_json(std::string_view text) {
  const auto j = nlohmann::json::parse(text);
  TrainConfig c = TrainConfig::defaults(parse_task(j.at("task").get<std::string>()),
                                        j.value("profile", std::string("paper")));
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.steps = j.value("steps", c.steps);
  c.epochs = j.value("epochs", c.epochs);
  c.seed = j.value("seed", c.seed);
  c.dropout = j.value("dropout", c.dropout);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.eval_every = j.value("eval_every", c.eval_every);
  c.d_hidden = j.value("d_hidden", c.d_hidden);
  c.validate();
  return c;
}

// ---------------------------------------------------------------------------
// Optimizer and batch gradients

void Adam::step(GnnParams& params, const std::map<std::string, Mat>& grads) {
  ++t;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
  for (const auto& [name, g] : grads) {
    if (!params.trainable(name)) continue;
    Mat& w = params.tensors.at(name);
    auto& mm = m[name];
    auto& vv = v[name];
    if (mm.size() == 0) {
      mm = Mat::Zero(w.rows(), w.cols());
      vv = Mat::Zero(w.rows(), w.cols());
    }
    mm = beta1 * mm + (1.0 - beta1) * g;
    vv = beta2 * vv + (1.0 - beta2) * g.cwiseProduct(g);
    w.array() -= lr * (mm.array() / c1) / ((vv.array() / c2).sqrt() + eps);
  }
}

namespace {

void collect_grads(const Tape& tape, const std::map<std::string, int>& leaves,
                   std::map<std::string, Mat>& grads) {
  for (const auto& [name, id] : leaves) {
    const Mat& g = tape.grad(id);
    if (g.size() == 0) continue;
    auto it = grads.find(name);
    if (it == grads.end()) {
      grads.emplace(name, g);
    } else {
      it->second += g;
    }
  }
}

}  // namespace

BatchGrad gap_batch_grad(const GnnParams& params, const std::vector<const GapExample*>& batch,
                         const ForwardMode& mode) {
  BatchGrad out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const GapExample* e : batch) {
    Tape tape;
    std::map<std::string, int> leaves;
    ForwardMode m{mix_seed(mode.seed, fnv1a64(e->id)), mode.train};
    const int y = build_forward(tape, params, e->graph, nullptr, m, &leaves);
    double g = 0.0;
    out.loss += huber_loss(tape.value(y)(0, 0), e->label, &g) * inv;
    tape.backward(y, Mat::Constant(1, 1, g * inv));
    collect_grads(tape, leaves, out.grads);
  }
  return out;
}

BatchGrad branch_batch_grad(const GnnParams& params,
                            const std::vector<const BranchSample*>& batch) {
  BatchGrad out;
  const double inv = 1.0 / static_cast<double>(batch.size());
  for (const BranchSample* s : batch) {
    const auto pos = std::find(s->candidates.begin(), s->candidates.end(), s->expert_action);
    if (pos == s->candidates.end()) throw Error("range", "expert action is not a candidate");
    Tape tape;
    std::map<std::string, int> leaves;
    const int y = build_forward(tape, params, s->graph, &s->candidates, {}, &leaves);
    Vec g;
    out.loss += branch_ce_loss(tape.value(y).col(0),
                               static_cast<int>(pos - s->candidates.begin()), &g) *
                inv;
    tape.backward(y, g * inv);
    collect_grads(tape, leaves, out.grads);
  }
  return out;
}

BatchGrad align_batch_grad(const GnnParams& params,
                           const std::vector<const BipartiteGraph*>& graphs, const Mat& text,
                           const ForwardMode& mode) {
  const Eigen::Index k = static_cast<Eigen::Index>(graphs.size());
  if (text.rows() != k) throw Error("shape", "text rows must match the graphs");
  auto mode_of = [&](Eigen::Index i) {
    return ForwardMode{mix_seed(mode.seed, static_cast<std::uint64_t>(i)), mode.train};
  };
  Mat milp(k, params.hyper.embed_dim);
  for (Eigen::Index i = 0; i < k; ++i) {
    Tape tape;
    milp.row(i) = tape.value(build_forward(tape, params, *graphs[i], nullptr, mode_of(i))).row(0);
  }
  BatchGrad out;
  Mat gm;
  out.loss = contrastive_loss(milp, text, &gm);
  for (Eigen::Index i = 0; i < k; ++i) {
    Tape tape;
    std::map<std::string, int> leaves;
    const int y = build_forward(tape, params, *graphs[i], nullptr, mode_of(i), &leaves);
    tape.backward(y, gm.row(i));
    collect_grads(tape, leaves, out.grads);
  }
  return out;
}

std::uint64_t eval_seed(const std::string& id) { return mix_seed(0xE7A1, fnv1a64(id)); }

Vec align_text_vector(const GnnParams& params, const AlignExample& e) {
  const int d = params.hyper.embed_dim;
  Vec t = e.text_embedding ? *e.text_embedding : text_embed(e.text, d);
  if (t.size() == d) return t;
  auto it = params.tensors.find("frozen.text_proj");
  if (it == params.tensors.end() || it->second.cols() != t.size()) {
    throw Error("shape", "text embedding dimension needs a matching projection");
  }
  return it->second * t;
}

// ---------------------------------------------------------------------------
// Training loops

namespace {

struct LoopHooks {
  std::size_t n_train = 0;
  /// Loss and gradients for the given training indices at a step.
  std::function<BatchGrad(const GnnParams&, const std::vector<std::size_t>&, int)> batch;
  /// Validation loss, or NaN when there is no validation set.
  std::function<double(const GnnParams&)> validate;
};

TrainResult run_loop(GnnParams params, const TrainConfig& config, const LoopHooks& hooks) {
  config.validate();
  if (hooks.n_train == 0) throw Error("data", "training set is empty");
  const std::size_t bs = std::min<std::size_t>(static_cast<std::size_t>(config.batch_size),
                                               hooks.n_train);
  const std::size_t per_epoch = (hooks.n_train + bs - 1) / bs;
  const int steps = config.epochs > 0 ? config.epochs * static_cast<int>(per_epoch) : config.steps;
  Rng rng(mix_seed(config.seed, 0x7A1));
  Adam adam;
  adam.lr = config.learning_rate;
  std::vector<std::size_t> order(hooks.n_train);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::size_t cursor = order.size();
  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  double window = 0.0;
  int window_n = 0;
  for (int step = 1; step <= steps; ++step) {
    std::vector<std::size_t> idx;
    while (idx.size() < bs) {
      if (cursor == order.size()) {
        rng.shuffle(order);
        cursor = 0;
      }
      idx.push_back(order[cursor++]);
    }
    BatchGrad g = hooks.batch(params, idx, step);
    if (!std::isfinite(g.loss)) {
      throw Error("train", "non-finite loss at step " + std::to_string(step));
    }
    adam.step(params, g.grads);
    window += g.loss;
    ++window_n;
    if (step % config.eval_every == 0 || step == steps) {
      HistoryEntry h;
      h.step = step;
      h.train_loss = window / window_n;
      window = 0.0;
      window_n = 0;
      h.val_loss = hooks.validate(params);
      const double score = std::isnan(h.val_loss) ? h.train_loss : h.val_loss;
      if (std::isnan(h.val_loss) ? step == steps : score < best) {
        best = score;
        result.params = params;
        result.best_step = step;
      }
      result.history.push_back(h);
    }
  }
  return result;
}

GnnHyper hyper_for(const TrainConfig& c) {
  GnnHyper h = default_hyper(c.task);
  h.d_hidden = c.d_hidden;
  h.ff_width = 4 * c.d_hidden;
  h.dropout = c.task == Task::kBranch ? 0.0 : c.dropout;
  h.embed_dim = c.embed_dim;
  return h;
}

}  // namespace

namespace {

double gap_validation(const GnnParams& p, const std::vector<GapExample>& valid) {
  if (valid.empty()) return std::nan("");
  double loss = 0.0;
  for (const auto& e : valid) {
    loss += huber_loss(forward_gap(e.graph, p, {eval_seed(e.id), false}), e.label);
  }
  return loss / static_cast<double>(valid.size());
}

}  // namespace

TrainResult train_gap(const std::vector<GapExample>& train, const std::vector<GapExample>& valid,
                      const TrainConfig& config) {
  if (config.task != Task::kGap) throw Error("config", "train_gap needs a gap config");
  Rng init(mix_seed(config.seed, 0x1417));
  GnnParams params = init_params(hyper_for(config), init);
  std::vector<const BipartiteGraph*> graphs;
  for (const auto& e : train) graphs.push_back(&e.graph);
  fit_normalization(params, graphs);
  LoopHooks hooks;
  hooks.n_train = train.size();
  hooks.batch = [&](const GnnParams& p, const std::vector<std::size_t>& idx, int step) {
    std::vector<const GapExample*> batch;
    for (std::size_t i : idx) batch.push_back(&train[i]);
    return gap_batch_grad(p, batch, {mix_seed(config.seed, static_cast<std::uint64_t>(step)), true});
  };
  hooks.validate = [&](const GnnParams& p) { return gap_validation(p, valid); };
  return run_loop(std::move(params), config, hooks);
}

TrainResult train_branch(const std::vector<BranchSample>& train,
                         const std::vector<BranchSample>& valid, const TrainConfig& config) {
  if (config.task != Task::kBranch) throw Error("config", "train_branch needs a branch config");
  Rng init(mix_seed(config.seed, 0x1417));
  GnnParams params = init_params(hyper_for(config), init);
  std::vector<const BipartiteGraph*> graphs;
  for (const auto& s : train) graphs.push_back(&s.graph);
  fit_normalization(params, graphs);
  LoopHooks hooks;
  hooks.n_train = train.size();
  hooks.batch = [&](const GnnParams& p, const std::vector<std::size_t>& idx, int) {
    std::vector<const BranchSample*> batch;
    for (std::size_t i : idx) batch.push_back(&train[i]);
    return branch_batch_grad(p, batch);
  };
  hooks.validate = [&](const GnnParams& p) {
    if (valid.empty()) return std::nan("");
    std::vector<const BranchSample*> all;
    for (const auto& s : valid) all.push_back(&s);
    return branch_batch_grad(p, all).loss;
  };
  return run_loop(std::move(params), config, hooks);
}

TrainResult train_align(const std::vector<AlignExample>& train,
                        const std::vector<AlignExample>& valid, const TrainConfig& config) {
  if (config.task != Task::kAlign) throw Error("config", "train_align needs an align config");
  Rng init(mix_seed(config.seed, 0x1417));
  GnnParams params = init_params(hyper_for(config), init);
  std::vector<const BipartiteGraph*> graphs;
  for (const auto& e : train) graphs.push_back(&e.graph);
  fit_normalization(params, graphs);
  // Frozen projection when supplied text vectors have another dimension.
  for (const auto& e : train) {
    if (!e.text_embedding || e.text_embedding->size() == config.embed_dim) continue;
    const auto dt = e.text_embedding->size();
    Rng prng(mix_seed(config.seed, 0x7E47));
    Mat proj(config.embed_dim, dt);
    for (Eigen::Index i = 0; i < proj.rows(); ++i) {
      for (Eigen::Index j = 0; j < proj.cols(); ++j) {
        proj(i, j) = prng.normal() / std::sqrt(static_cast<double>(config.embed_dim));
      }
    }
    params.tensors["frozen.text_proj"] = proj;
    break;
  }
  // Text vectors are cached once; the text side is frozen.
  auto cache = [&](const std::vector<AlignExample>& set) {
    Mat t(static_cast<Eigen::Index>(set.size()), config.embed_dim);
    for (std::size_t i = 0; i < set.size(); ++i) {
      t.row(static_cast<Eigen::Index>(i)) = align_text_vector(params, set[i]).transpose();
    }
    return t;
  };
  const Mat train_text = cache(train);
  const Mat valid_text = cache(valid);
  auto chunked_loss = [&](const GnnParams& p, const std::vector<AlignExample>& set,
                          const Mat& text) {
    const std::size_t bs = static_cast<std::size_t>(config.batch_size);
    double total = 0.0;
    double weight = 0.0;
    for (std::size_t at = 0; at < set.size(); at += bs) {
      const std::size_t end = std::min(set.size(), at + bs);
      Mat milp(static_cast<Eigen::Index>(end - at), config.embed_dim);
      for (std::size_t i = at; i < end; ++i) {
        milp.row(static_cast<Eigen::Index>(i - at)) =
            forward_embed(set[i].graph, p, {eval_seed(set[i].id), false}).transpose();
      }
      const double n = static_cast<double>(end - at);
      total += n * contrastive_loss(milp, text.middleRows(static_cast<Eigen::Index>(at),
                                                          static_cast<Eigen::Index>(end - at)));
      weight += n;
    }
    return total / weight;
  };
  LoopHooks hooks;
  hooks.n_train = train.size();
  hooks.batch = [&](const GnnParams& p, const std::vector<std::size_t>& idx, int step) {
    std::vector<const BipartiteGraph*> batch;
    Mat text(static_cast<Eigen::Index>(idx.size()), config.embed_dim);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      batch.push_back(&train[idx[i]].graph);
      text.row(static_cast<Eigen::Index>(i)) = train_text.row(static_cast<Eigen::Index>(idx[i]));
    }
    return align_batch_grad(p, batch, text,
                            {mix_seed(config.seed, static_cast<std::uint64_t>(step)), true});
  };
  hooks.validate = [&](const GnnParams& p) {
    if (valid.empty()) return std::nan("");
    return chunked_loss(p, valid, valid_text);
  };
  return run_loop(std::move(params), config, hooks);
}

// ---------------------------------------------------------------------------
// Gradient check

namespace {

GradCheckResult grad_check(const GnnParams& params,
                           const std::function<BatchGrad(const GnnParams&)>& eval, Rng& rng,
                           double fraction, std::size_t min_entries) {
  const BatchGrad analytic = eval(params);
  std::vector<std::pair<std::string, Eigen::Index>> entries;
  for (const auto& [name, t] : params.tensors) {
    if (!params.trainable(name)) continue;
    for (Eigen::Index k = 0; k < t.size(); ++k) entries.emplace_back(name, k);
  }
  const std::size_t want = std::min(
      entries.size(),
      std::max(min_entries, static_cast<std::size_t>(fraction * static_cast<double>(entries.size()))));
  GradCheckResult r;
  GnnParams work = params;
  constexpr double h = 1e-5;
  for (std::size_t pick : rng.sample_without_replacement(entries.size(), want)) {
    const auto& [name, k] = entries[pick];
    double& w = work.tensors.at(name).data()[k];
    const double orig = w;
    w = orig + h;
    const double up = eval(work).loss;
    w = orig - h;
    const double down = eval(work).loss;
    w = orig;
    const double numeric = (up - down) / (2.0 * h);
    auto it = analytic.grads.find(name);
    const double a = it == analytic.grads.end() ? 0.0 : it->second.data()[k];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    r.max_rel_error = std::max(r.max_rel_error, rel);
    ++r.checked;
  }
  return r;
}

}  // namespace

GradCheckResult grad_check_gap(const GnnParams& params, const GapExample& sample, Rng& rng,
                               double fraction, std::size_t min_entries) {
  return grad_check(
      params, [&](const GnnParams& p) { return gap_batch_grad(p, {&sample}, {7, false}); }, rng,
      fraction, min_entries);
}

GradCheckResult grad_check_branch(const GnnParams& params, const BranchSample& sample, Rng& rng,
                                  double fraction, std::size_t min_entries) {
  return grad_check(
      params, [&](const GnnParams& p) { return branch_batch_grad(p, {&sample}); }, rng, fraction,
      min_entries);
}

GradCheckResult grad_check_align(const GnnParams& params,
                                 const std::vector<const BipartiteGraph*>& graphs,
                                 const Mat& text, Rng& rng, double fraction,
                                 std::size_t min_entries) {
  return grad_check(
      params, [&](const GnnParams& p) { return align_batch_grad(p, graphs, text, {7, false}); },
      rng, fraction, min_entries);
}

}  // namespace milpevo
