#pragma once

#include <Eigen/Dense>
#include <array>
#include <map>
#include <string>
#include <vector>

#include "milpevo/bnb.hpp"
#include "milpevo/core.hpp"
#include "milpevo/util.hpp"

namespace milpevo {

/// Error("degenerate") when either series has zero variance; Error("shape")
/// for unequal lengths or fewer than two points.
double pearson(const std::vector<double>& xs, const std::vector<double>& ys);

/// Mean absolute difference.
double deviation(const std::vector<double>& preds, const std::vector<double>& labels);

/// Item i is matched with text[i]. Each trial draws an item, then one random
/// item from each of k - 1 other classes as distractors; a hit needs the
/// matched text to have strictly the largest cosine. Error("config") when
/// fewer than k classes exist.
double kway_accuracy(const std::vector<Eigen::VectorXd>& milp,
                     const std::vector<Eigen::VectorXd>& text,
                     const std::vector<std::string>& class_of, int k, int trials, Rng& rng);

/// exp(mean ln(t + shift)) - shift.
double shifted_geometric_mean(const std::vector<double>& times, double shift = 1.0);

/// 100 * (sgm(default) - sgm(method)) / sgm(default). Error("range") for a
/// non-positive time.
double time_improvement(const std::vector<double>& default_times,
                        const std::vector<double>& method_times, double shift = 1.0);

/// Same with the policy overhead removed from every method time first.
double time_improvement_excluding(const std::vector<double>& default_times,
                                  const std::vector<double>& method_times,
                                  const std::vector<double>& policy_seconds, double shift = 1.0);

/// Percentage of results with status optimal. Error("empty") for none.
double solved_fraction(const std::vector<MilpStatus>& statuses);

struct SimilarityConfig {
  int n_bins = 30;
  double eps = 1e-10;
  double clamp = 1e3;
};

struct HistogramSimilarity {
  double correlation = 0.0;
  double intersection = 0.0;
  double chi_square = 0.0;
  double bhattacharyya = 0.0;
};

/// Normalized histogram on [0, 1]; values are clipped into range.
std::vector<double> histogram(const std::vector<double>& values, int n_bins);

HistogramSimilarity histogram_similarity(const std::vector<double>& a,
                                         const std::vector<double>& b,
                                         const SimilarityConfig& cfg = {});
/// The four measures on two already-normalized histograms.
HistogramSimilarity compare_histograms(const std::vector<double>& h1,
                                       const std::vector<double>& h2,
                                       const SimilarityConfig& cfg = {});

struct SplitSpec {
  std::array<double, 3> ratios{7.0, 1.0, 2.0};
  std::uint64_t seed = 0;
};

struct Split {
  std::vector<std::string> train, valid, test;
};

/// Seeded shuffle, then contiguous cuts at the rounded ratio boundaries.
/// Error("config") when a part would be empty.
Split split_classes(const std::vector<std::string>& class_ids, const SplitSpec& spec = {});

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;
  std::size_t count = 0;
};

MeanStd mean_std(const std::vector<double>& values);

/// Keys: n_vars, continuous_ratio, n_cons, density, and when given, nodes
/// and solve_time.
std::map<std::string, MeanStd> corpus_stats(const std::vector<MilpInstance>& instances,
                                            const std::vector<double>& nodes = {},
                                            const std::vector<double>& times = {});

}  // namespace milpevo
