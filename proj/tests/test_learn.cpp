#include <cmath>
#include <cstring>
#include <filesystem>
#include <numeric>
#include <set>

#include "doctest.h"
#include "milpevo/learn.hpp"

using namespace milpevo;

namespace {

BipartiteGraph random_graph(GraphSchema schema, int n, int m, Rng& rng, double density = 0.5) {
  BipartiteGraph g;
  g.schema = schema;
  const int vd = schema == GraphSchema::kGap ? kGapVarDim : kBranchVarDim;
  const int cd = schema == GraphSchema::kGap ? kGapConsDim : kBranchConsDim;
  g.var_features = Mat(n, vd);
  g.cons_features = Mat(m, cd);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < vd; ++j) g.var_features(i, j) = rng.normal();
  for (int i = 0; i < m; ++i)
    for (int j = 0; j < cd; ++j) g.cons_features(i, j) = rng.normal();
  for (int c = 0; c < m; ++c) {
    bool any = false;
    for (int v = 0; v < n; ++v) {
      if (rng.bernoulli(density)) {
        g.edge_cons.push_back(c);
        g.edge_var.push_back(v);
        g.edge_value.push_back(rng.uniform(-1.0, 1.0));
        any = true;
      }
    }
    if (!any) {
      g.edge_cons.push_back(c);
      g.edge_var.push_back(c % n);
      g.edge_value.push_back(0.5);
    }
  }
  return g;
}

/// Variables v0..v(n-1); constraint i links v(i) and v(i+1).
BipartiteGraph path_graph(int n, Rng& rng) {
  BipartiteGraph g = random_graph(GraphSchema::kBranch, n, n - 1, rng, 0.0);
  g.edge_cons.clear();
  g.edge_var.clear();
  g.edge_value.clear();
  for (int i = 0; i + 1 < n; ++i) {
    for (int v : {i, i + 1}) {
      g.edge_cons.push_back(i);
      g.edge_var.push_back(v);
      g.edge_value.push_back(v == i ? 0.6 : -0.8);
    }
  }
  return g;
}

GnnParams small_params(Task task, Rng& rng, int d = 16) {
  GnnHyper h = default_hyper(task);
  h.d_hidden = d;
  h.ff_width = 4 * d;
  h.embed_dim = 8;
  return init_params(h, rng);
}

}  // namespace

TEST_CASE("loss table") {
  CHECK(huber_loss(0.3, 0.3) == 0.0);
  CHECK(huber_loss(1.0, 0.5) == doctest::Approx(0.125).epsilon(1e-12));
  CHECK(huber_loss(-1.0, 1.0) == doctest::Approx(1.5).epsilon(1e-12));
  const double l1e = std::log1p(std::exp(-1.0));
  Vec one(1);
  one << 4.2;
  CHECK(branch_ce_loss(one, 0) == doctest::Approx(0.0));
  Vec two(2);
  two << 1.0, 0.0;
  CHECK(std::abs(branch_ce_loss(two, 0) - 0.31326168751822286) < 1e-12);
  CHECK(std::abs(l1e - 0.31326168751822286) < 1e-15);
  Vec uniform = Vec::Constant(7, 0.3);
  CHECK(branch_ce_loss(uniform, 4) == doctest::Approx(std::log(7.0)));
  Mat a(1, 3);
  a << 0.2, -1.0, 0.5;
  Mat b(1, 3);
  b << 1.0, 1.0, 1.0;
  CHECK(contrastive_loss(a, b) == doctest::Approx(0.0));
  const Mat eye = Mat::Identity(2, 2);
  CHECK(std::abs(contrastive_loss(eye, eye) - l1e) < 1e-12);
  Mat swapped(2, 2);
  swapped << 0, 1, 1, 0;
  CHECK(std::abs(contrastive_loss(eye, swapped) - std::log1p(std::exp(1.0))) < 1e-12);
  CHECK(contrastive_loss(eye, swapped) > contrastive_loss(eye, eye));
}

TEST_CASE("losses are non-negative and gradients match differences") {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    const double p = rng.normal() * 3, y = rng.normal() * 3;
    double g = 0.0;
    CHECK(huber_loss(p, y, &g) >= 0.0);
    const double h = 1e-6;
    CHECK(g == doctest::Approx((huber_loss(p + h, y) - huber_loss(p - h, y)) / (2 * h)).epsilon(1e-5));
    Vec logits(5);
    for (int i = 0; i < 5; ++i) logits(i) = rng.normal();
    Vec gl;
    CHECK(branch_ce_loss(logits, t % 5, &gl) >= 0.0);
    CHECK(std::abs(gl.sum()) < 1e-12);
    Mat mm(3, 4), tt(3, 4);
    for (int i = 0; i < 3; ++i)
      for (int j = 0; j < 4; ++j) {
        mm(i, j) = rng.normal();
        tt(i, j) = rng.normal();
      }
    Mat gm;
    CHECK(contrastive_loss(mm, tt, &gm) >= 0.0);
    for (int k = 0; k < 3; ++k) {
      Mat plus = mm, minus = mm;
      plus(k, k) += h;
      minus(k, k) -= h;
      const double num = (contrastive_loss(plus, tt) - contrastive_loss(minus, tt)) / (2 * h);
      CHECK(gm(k, k) == doctest::Approx(num).epsilon(1e-5));
    }
  }
}

TEST_CASE("gradient checks on tiny graphs") {
  Rng rng(11);
  {
    auto params = small_params(Task::kGap, rng);
    GapExample e;
    e.id = "tiny";
    e.graph = random_graph(GraphSchema::kGap, 5, 4, rng);
    e.label = 0.3;
    const auto r = grad_check_gap(params, e, rng);
    CHECK(r.checked >= 40);
    CHECK(r.max_rel_error < 1e-4);
  }
  {
    auto params = small_params(Task::kBranch, rng);
    BranchSample s;
    s.instance_id = "tiny";
    s.graph = random_graph(GraphSchema::kBranch, 6, 4, rng);
    s.candidates = {0, 2, 5};
    s.expert_action = 2;
    const auto r = grad_check_branch(params, s, rng);
    CHECK(r.max_rel_error < 1e-4);
  }
  {
    auto params = small_params(Task::kAlign, rng);
    std::vector<BipartiteGraph> graphs;
    for (int i = 0; i < 3; ++i) graphs.push_back(random_graph(GraphSchema::kGap, 5, 4, rng));
    std::vector<const BipartiteGraph*> ptrs;
    for (const auto& g : graphs) ptrs.push_back(&g);
    Mat text(3, 8);
    for (int i = 0; i < 3; ++i) text.row(i) = text_embed("class number " + std::to_string(i), 8).transpose();
    const auto r = grad_check_align(params, ptrs, text, rng);
    CHECK(r.max_rel_error < 1e-4);
  }
}

TEST_CASE("forward passes are finite and deterministic") {
  Rng rng(5);
  const auto gp = small_params(Task::kGap, rng);
  const auto g = random_graph(GraphSchema::kGap, 5, 4, rng);
  const double a = forward_gap(g, gp, {1, false});
  CHECK(std::isfinite(a));
  CHECK(forward_gap(g, gp, {1, false}) == a);
  // Below the subsample size every node is used, so the seed is irrelevant.
  CHECK(forward_gap(g, gp, {999, false}) == a);

  const auto ap = small_params(Task::kAlign, rng);
  const Vec emb = forward_embed(g, ap, {2, false});
  CHECK(emb.size() == 8);
  CHECK(forward_embed(g, ap, {2, false}) == emb);

  const auto bp = small_params(Task::kBranch, rng);
  for (int t = 0; t < 20; ++t) {
    const auto bg = random_graph(GraphSchema::kBranch, 3 + t, 2 + t % 5, rng, 0.3);
    std::vector<int> cands;
    for (int v = 0; v < bg.n_vars(); v += 2) cands.push_back(v);
    const Vec logits = forward_branch(bg, cands, bp);
    CHECK(logits.size() == static_cast<Eigen::Index>(cands.size()));
    CHECK(logits.allFinite());
  }
  const auto bg = random_graph(GraphSchema::kBranch, 4, 3, rng);
  const Vec single = forward_branch(bg, {1}, bp);
  REQUIRE(single.size() == 1);
  Vec grad;
  CHECK(branch_ce_loss(single, 0, &grad) == 0.0);
}

TEST_CASE("branch logits are invariant to permuting other variables") {
  Rng rng(8);
  const auto bp = small_params(Task::kBranch, rng);
  const auto g = random_graph(GraphSchema::kBranch, 9, 5, rng, 0.4);
  const std::vector<int> cands = {0, 1, 2};
  const Vec base = forward_branch(g, cands, bp);
  std::vector<int> perm(9);
  std::iota(perm.begin(), perm.end(), 0);
  std::vector<int> tail(perm.begin() + 3, perm.end());
  rng.shuffle(tail);
  std::copy(tail.begin(), tail.end(), perm.begin() + 3);
  BipartiteGraph h = g;
  for (int v = 0; v < 9; ++v) h.var_features.row(perm[v]) = g.var_features.row(v);
  for (auto& v : h.edge_var) v = perm[v];
  const Vec moved = forward_branch(h, cands, bp);
  CHECK((moved - base).cwiseAbs().maxCoeff() < 1e-9);
}

TEST_CASE("learned policy argmax ignores a constant logit shift") {
  Vec logits(4);
  logits << 0.1, 2.0, -1.0, 1.9;
  Eigen::Index a = 0, b = 0;
  logits.maxCoeff(&a);
  (logits.array() + 37.5).matrix().maxCoeff(&b);
  CHECK(a == b);
}

TEST_CASE("convolution locality on a path graph") {
  Rng rng(21);
  const auto bp = small_params(Task::kBranch, rng);
  const int n = 8;
  const auto g = path_graph(n, rng);
  std::vector<int> all(n);
  std::iota(all.begin(), all.end(), 0);
  const Vec base = forward_branch(g, all, bp);
  BipartiteGraph z = g;
  z.var_features.row(0).setZero();
  const Vec changed = forward_branch(z, all, bp);
  const int layers = default_hyper(Task::kBranch).n_conv;
  for (int v = 0; v < n; ++v) {
    CAPTURE(v);
    if (v <= layers) {
      CHECK(std::abs(changed(v) - base(v)) > 1e-12);
    } else {
      CHECK(changed(v) == base(v));
    }
  }
}

TEST_CASE("gradient reaches every trainable tensor") {
  Rng rng(13);
  const auto params = small_params(Task::kAlign, rng);
  std::vector<BipartiteGraph> graphs;
  for (int i = 0; i < 3; ++i) graphs.push_back(random_graph(GraphSchema::kGap, 6, 5, rng));
  std::vector<const BipartiteGraph*> ptrs;
  for (const auto& g : graphs) ptrs.push_back(&g);
  Mat text(3, 8);
  for (int i = 0; i < 3; ++i) text.row(i) = text_embed("text " + std::to_string(i), 8).transpose();
  const auto bg = align_batch_grad(params, ptrs, text, {4, false});
  for (const auto& [name, value] : params.tensors) {
    if (!params.trainable(name)) continue;
    CAPTURE(name);
    REQUIRE(bg.grads.count(name) == 1);
    CHECK(bg.grads.at(name).norm() > 0.0);
  }
}

TEST_CASE("parameter serialization round trips bit-exactly") {
  Rng rng(17);
  for (Task t : {Task::kGap, Task::kBranch, Task::kAlign}) {
    const auto p = small_params(t, rng);
    const auto path = (std::filesystem::temp_directory_path() / "milpevo_params.bin").string();
    save_params(p, path);
    const auto q = load_params(path);
    std::filesystem::remove(path);
    CHECK(params_to_bytes(q) == params_to_bytes(p));
    REQUIRE(q.tensors.size() == p.tensors.size());
    for (const auto& [name, m] : p.tensors) {
      const Mat& o = q.at(name);
      REQUIRE(o.rows() == m.rows());
      REQUIRE(o.cols() == m.cols());
      CHECK(std::memcmp(o.data(), m.data(), sizeof(double) * m.size()) == 0);
    }
    CHECK(q.hyper.task == t);
  }
  CHECK_THROWS_AS(params_from_bytes("not a parameter file"), Error);
}

TEST_CASE("text embedding properties") {
  const Vec a = text_embed("a set cover problem with 40 rows", 64);
  CHECK(a == text_embed("a set cover problem with 40 rows", 64));
  CHECK(std::abs(a.norm() - 1.0) < 1e-9);
  CHECK_THROWS_AS(text_embed("   ", 64), Error);
  CHECK_THROWS_AS(text_embed("hello", 4), Error);
  Rng rng(31);
  const std::vector<std::string> words = {"knapsack", "auction", "facility", "cover",  "flow",
                                          "graph",    "binary",  "integer",  "budget", "demand",
                                          "supply",   "route",   "vehicle",  "shift",  "nurse",
                                          "power",    "grid",    "market",   "bid",    "item"};
  std::set<std::string> sentences;
  while (sentences.size() < 100) {
    std::string s;
    for (int w = 0; w < 8; ++w) s += words[rng.index(words.size())] + " ";
    sentences.insert(s);
  }
  std::vector<Vec> vs;
  for (const auto& s : sentences) vs.push_back(text_embed(s, 64));
  int below = 0, pairs = 0;
  for (std::size_t i = 0; i < vs.size(); ++i)
    for (std::size_t j = i + 1; j < vs.size(); ++j) {
      ++pairs;
      if (vs[i].dot(vs[j]) < 0.99) ++below;
    }
  CHECK(below >= 0.95 * pairs);
}

TEST_CASE("training lowers the loss and is reproducible") {
  Rng rng(41);
  std::vector<GapExample> data;
  for (int i = 0; i < 10; ++i) {
    GapExample e;
    e.id = "g" + std::to_string(i);
    e.class_id = "c";
    e.graph = random_graph(GraphSchema::kGap, 6, 5, rng);
    e.label = 0.1 * i;
    data.push_back(e);
  }
  TrainConfig cfg = TrainConfig::defaults(Task::kGap, "desk");
  cfg.steps = 50;
  cfg.batch_size = 10;
  cfg.eval_every = 5;
  cfg.d_hidden = 16;
  cfg.dropout = 0.0;
  cfg.seed = 3;
  const auto a = train_gap(data, {}, cfg);
  REQUIRE(a.history.size() == 10);
  CHECK(a.history.back().train_loss < a.history.front().train_loss);
  const auto b = train_gap(data, {}, cfg);
  CHECK(params_to_bytes(a.params) == params_to_bytes(b.params));
  CHECK(a.best_step == 50);
}

TEST_CASE("dataset records round trip") {
  Rng rng(2);
  GapExample e;
  e.id = "IS#1000";
  e.class_id = "IS";
  e.graph = random_graph(GraphSchema::kGap, 4, 3, rng);
  e.label = 0.25;
  const auto back = gap_example_from_json(gap_example_to_json(e));
  CHECK(back.label == e.label);
  CHECK(back.graph.var_features == e.graph.var_features);
  AlignExample al;
  al.id = "SC#2000";
  al.class_id = "SC";
  al.graph = e.graph;
  al.text = "A set cover problem.";
  al.text_embedding = text_embed(al.text, 16);
  const auto ab = align_example_from_json(align_example_to_json(al));
  CHECK(ab.text == al.text);
  REQUIRE(ab.text_embedding.has_value());
  CHECK(*ab.text_embedding == *al.text_embedding);
}
