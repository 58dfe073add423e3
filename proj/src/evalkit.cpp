#include "milpevo/evalkit.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace milpevo {

double pearson(const std::vector<double>& xs, const std::vector<double>& ys) {
  if (xs.size() != ys.size() || xs.size() < 2) {
    throw Error("shape", "pearson needs two equal-length series of at least two points");
  }
  const double n = static_cast<double>(xs.size());
  const double mx = std::accumulate(xs.begin(), xs.end(), 0.0) / n;
  const double my = std::accumulate(ys.begin(), ys.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  if (!(sxx > 0.0) || !(syy > 0.0)) throw Error("degenerate", "series has zero variance");
  return sxy / std::sqrt(sxx * syy);
}

double deviation(const std::vector<double>& preds, const std::vector<double>& labels) {
  if (preds.size() != labels.size()) throw Error("shape", "deviation needs equal lengths");
  if (preds.empty()) throw Error("empty", "deviation of an empty set");
  double s = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) s += std::abs(preds[i] - labels[i]);
  return s / static_cast<double>(preds.size());
}

double kway_accuracy(const std::vector<Eigen::VectorXd>& milp,
                     const std::vector<Eigen::VectorXd>& text,
                     const std::vector<std::string>& class_of, int k, int trials, Rng& rng) {
  if (milp.size() != text.size() || milp.size() != class_of.size()) {
    throw Error("shape", "kway inputs must have equal lengths");
  }
  if (k < 2 || trials < 1) throw Error("config", "kway needs k >= 2 and trials >= 1");
  std::map<std::string, std::vector<std::size_t>> by_class;
  for (std::size_t i = 0; i < class_of.size(); ++i) by_class[class_of[i]].push_back(i);
  if (static_cast<int>(by_class.size()) < k) {
    throw Error("config", "kway needs at least k distinct classes");
  }
  std::vector<std::string> classes;
  for (const auto& [c, items] : by_class) classes.push_back(c);
  auto cosine = [](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
    const double d = a.norm() * b.norm();
    return d > 0.0 ? a.dot(b) / d : 0.0;
  };
  int hits = 0;
  for (int t = 0; t < trials; ++t) {
    const std::size_t i = rng.index(milp.size());
    std::vector<std::size_t> others;
    for (std::size_t c = 0; c < classes.size(); ++c) {
      if (classes[c] != class_of[i]) others.push_back(c);
    }
    const double truth = cosine(milp[i], text[i]);
    bool hit = true;
    for (std::size_t pick : rng.sample_without_replacement(others.size(), static_cast<std::size_t>(k - 1))) {
      const auto& items = by_class[classes[others[pick]]];
      const std::size_t j = items[rng.index(items.size())];
      if (cosine(milp[i], text[j]) >= truth) hit = false;
    }
    hits += hit ? 1 : 0;
  }
  return static_cast<double>(hits) / static_cast<double>(trials);
}

double shifted_geometric_mean(const std::vector<double>& times, double shift) {
  if (times.empty()) throw Error("empty", "geometric mean of an empty set");
  double s = 0.0;
  for (double t : times) {
    if (!(t > 0.0)) throw Error("range", "times must be positive");
    s += std::log(t + shift);
  }
  return std::exp(s / static_cast<double>(times.size())) - shift;
}

double time_improvement(const std::vector<double>& default_times,
                        const std::vector<double>& method_times, double shift) {
  if (default_times.size() != method_times.size()) {
    throw Error("shape", "time vectors must have equal lengths");
  }
  const double base = shifted_geometric_mean(default_times, shift);
  const double method = shifted_geometric_mean(method_times, shift);
  return 100.0 * (base - method) / base;
}

double time_improvement_excluding(const std::vector<double>& default_times,
                                  const std::vector<double>& method_times,
                                  const std::vector<double>& policy_seconds, double shift) {
  if (policy_seconds.size() != method_times.size()) {
    throw Error("shape", "policy overhead must align with method times");
  }
  std::vector<double> net(method_times.size());
  for (std::size_t i = 0; i < net.size(); ++i) {
    net[i] = std::max(method_times[i] - policy_seconds[i], 1e-9);
  }
  return time_improvement(default_times, net, shift);
}

double solved_fraction(const std::vector<MilpStatus>& statuses) {
  if (statuses.empty()) throw Error("empty", "no results");
  const auto n = std::count(statuses.begin(), statuses.end(), MilpStatus::kOptimal);
  return 100.0 * static_cast<double>(n) / static_cast<double>(statuses.size());
}

std::vector<double> histogram(const std::vector<double>& values, int n_bins) {
  if (n_bins < 2) throw Error("config", "histogram needs at least two bins");
  if (values.empty()) throw Error("empty", "histogram of an empty set");
  std::vector<double> h(static_cast<std::size_t>(n_bins), 0.0);
  for (double v : values) {
    const double c = std::clamp(v, 0.0, 1.0);
    const int bin = std::min(n_bins - 1, static_cast<int>(c * n_bins));
    h[static_cast<std::size_t>(bin)] += 1.0;
  }
  for (double& x : h) x /= static_cast<double>(values.size());
  return h;
}

HistogramSimilarity compare_histograms(const std::vector<double>& h1,
                                       const std::vector<double>& h2,
                                       const SimilarityConfig& cfg) {
  if (h1.size() != h2.size() || h1.empty()) throw Error("shape", "histograms differ in size");
  HistogramSimilarity s;
  s.correlation = pearson(h1, h2);
  double mn = 0.0, mx = 0.0, bc = 0.0;
  for (std::size_t i = 0; i < h1.size(); ++i) {
    mn += std::min(h1[i], h2[i]);
    mx += std::max(h1[i], h2[i]);
    const double d = h1[i] - h2[i];
    s.chi_square += d * d / (h1[i] + h2[i] + cfg.eps);
    bc += std::sqrt(h1[i] * h2[i]);
  }
  s.intersection = mx > 0.0 ? mn / mx : 0.0;
  s.bhattacharyya = bc > 0.0 ? std::min(cfg.clamp, std::max(0.0, -std::log(bc))) : cfg.clamp;
  return s;
}

HistogramSimilarity histogram_similarity(const std::vector<double>& a,
                                         const std::vector<double>& b,
                                         const SimilarityConfig& cfg) {
  return compare_histograms(histogram(a, cfg.n_bins), histogram(b, cfg.n_bins), cfg);
}

Split split_classes(const std::vector<std::string>& class_ids, const SplitSpec& spec) {
  for (double r : spec.ratios) {
    if (!(r > 0.0)) throw Error("config", "split ratios must be positive");
  }
  const double total = spec.ratios[0] + spec.ratios[1] + spec.ratios[2];
  const double n = static_cast<double>(class_ids.size());
  const auto cut1 = static_cast<std::size_t>(std::llround(n * spec.ratios[0] / total));
  const auto cut2 =
      static_cast<std::size_t>(std::llround(n * (spec.ratios[0] + spec.ratios[1]) / total));
  if (cut1 == 0 || cut2 <= cut1 || cut2 >= class_ids.size()) {
    throw Error("config", "too few classes for the split ratios");
  }
  std::vector<std::string> ids = class_ids;
  Rng rng(spec.seed);
  rng.shuffle(ids);
  Split s;
  s.train.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(cut1));
  s.valid.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut1),
                 ids.begin() + static_cast<std::ptrdiff_t>(cut2));
  s.test.assign(ids.begin() + static_cast<std::ptrdiff_t>(cut2), ids.end());
  return s;
}

MeanStd mean_std(const std::vector<double>& values) {
  MeanStd r;
  r.count = values.size();
  if (values.empty()) return r;
  const double n = static_cast<double>(values.size());
  r.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - r.mean) * (v - r.mean);
  r.std = std::sqrt(ss / n);
  return r;
}

std::map<std::string, MeanStd> corpus_stats(const std::vector<MilpInstance>& instances,
                                            const std::vector<double>& nodes,
                                            const std::vector<double>& times) {
  std::vector<double> nv, cr, nc, dens;
  for (const auto& inst : instances) {
    const double n = inst.n_vars(), m = inst.n_cons();
    nv.push_back(n);
    nc.push_back(m);
    const auto cont = std::count(inst.kind.begin(), inst.kind.end(), VarKind::kContinuous);
    cr.push_back(n > 0 ? static_cast<double>(cont) / n : 0.0);
    dens.push_back(n > 0 && m > 0 ? static_cast<double>(inst.nnz()) / (n * m) : 0.0);
  }
  std::map<std::string, MeanStd> out = {{"n_vars", mean_std(nv)},
                                        {"continuous_ratio", mean_std(cr)},
                                        {"n_cons", mean_std(nc)},
                                        {"density", mean_std(dens)}};
  if (!nodes.empty()) out["nodes"] = mean_std(nodes);
  if (!times.empty()) out["solve_time"] = mean_std(times);
  return out;
}

}  // namespace milpevo
