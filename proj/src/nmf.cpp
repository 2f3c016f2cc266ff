#include "sepp/nmf.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "sepp/error.hpp"

namespace sepp {

namespace {

Eigen::MatrixXd random_factor(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  Eigen::MatrixXd M(rows, cols);
  // Column-major fill order is part of the determinism contract.
  for (Eigen::Index c = 0; c < cols; ++c)
    for (Eigen::Index r = 0; r < rows; ++r) M(r, c) = 1.0 - u(rng);  // (0, 1]
  return M;
}

// Indices of W column k by decreasing weight, ties by substance name.
std::vector<Eigen::Index> ranked_terms(const NmfFactors& F, int k,
                                       const std::vector<std::string>& names) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(F.W.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  std::stable_sort(idx.begin(), idx.end(), [&](Eigen::Index a, Eigen::Index b) {
    const double wa = F.W(a, k), wb = F.W(b, k);
    if (wa != wb) return wa > wb;
    return names[static_cast<std::size_t>(a)] < names[static_cast<std::size_t>(b)];
  });
  return idx;
}

}  // namespace

NmfFactors factorize(const Eigen::MatrixXd& V, int K, std::uint64_t seed,
                     const NmfOptions& options) {
  const Eigen::Index D = V.rows(), N = V.cols();
  if (K < 1 || K > std::min(D, N))
    throw Error("factorize: K=" + std::to_string(K) + " outside 1.." +
                std::to_string(std::min(D, N)));
  if (V.size() == 0 || (V.array() == 0.0).all()) throw Error("factorize: matrix is all zero");
  if ((V.array() < 0.0).any()) throw Error("factorize: matrix has negative entries");
  if (options.iters < 1 || options.restarts < 1)
    throw Error("factorize: iters and restarts must be >= 1");

  NmfFactors best;
  double best_obj = std::numeric_limits<double>::infinity();
  for (int run = 0; run < options.restarts; ++run) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(run)};
    std::mt19937_64 rng(seq);
    Eigen::MatrixXd W = random_factor(D, K, rng);
    Eigen::MatrixXd H = random_factor(K, N, rng);
    std::vector<double> trace;
    trace.reserve(static_cast<std::size_t>(options.iters));
    for (int it = 0; it < options.iters; ++it) {
      const Eigen::MatrixXd WtW = W.transpose() * W;
      H.array() *= (W.transpose() * V).array() / ((WtW * H).array() + options.eps);
      const Eigen::MatrixXd HHt = H * H.transpose();
      W.array() *= (V * H.transpose()).array() / ((W * HHt).array() + options.eps);
      trace.push_back((V - W * H).squaredNorm());
    }
    const double obj = trace.back();
    if (obj < best_obj) {
      best_obj = obj;
      best.W = W;
      best.H = H;
      best.trace = trace;
      best.best_run = run;
    }
    best.run_traces.push_back(std::move(trace));
  }
  return best;
}

ClusterLabels assign_clusters(const NmfFactors& F) {
  ClusterLabels out;
  out.labels.resize(static_cast<std::size_t>(F.H.cols()));
  for (Eigen::Index n = 0; n < F.H.cols(); ++n) {
    Eigen::Index best = 0;
    for (Eigen::Index k = 1; k < F.H.rows(); ++k)
      if (F.H(k, n) > F.H(best, n)) best = k;
    if (F.H(best, n) <= 0.0) ++out.zero_columns;
    out.labels[static_cast<std::size_t>(n)] = static_cast<int>(best);
  }
  return out;
}

CoherenceScore coherence(const NmfFactors& F, const ToxMatrix& tox, int top_m) {
  const Eigen::Index D = tox.V.rows();
  if (top_m < 1 || top_m > D) throw Error("coherence: top_m must be in 1..D");
  if (F.W.rows() != D) throw Error("coherence: factor and matrix disagree on substances");
  const Eigen::MatrixXd B = (tox.V.array() > 0.0).cast<double>();
  const Eigen::VectorXd single = B.rowwise().sum();

  CoherenceScore score;
  for (int k = 0; k < F.K(); ++k) {
    const auto ranked = ranked_terms(F, k, tox.substances);
    double c = 0.0;
    for (int a = 1; a < top_m; ++a) {
      for (int b = 0; b < a; ++b) {
        const Eigen::Index wa = ranked[static_cast<std::size_t>(a)];
        const Eigen::Index wb = ranked[static_cast<std::size_t>(b)];
        if (single(wb) == 0.0) {
          ++score.skipped_pairs;
          continue;
        }
        const double co = B.row(wa).dot(B.row(wb));
        c += std::log((co + 1.0) / single(wb));
      }
    }
    score.per_topic.push_back(c);
  }
  score.mean = std::accumulate(score.per_topic.begin(), score.per_topic.end(), 0.0) /
               static_cast<double>(score.per_topic.size());
  return score;
}

SelectKResult select_k(const ToxMatrix& tox, const std::vector<int>& k_range, std::uint64_t seed,
                       const NmfOptions& options, int top_m) {
  if (k_range.empty()) throw Error("select_k: empty K range");
  std::vector<int> ks = k_range;
  std::sort(ks.begin(), ks.end());
  ks.erase(std::unique(ks.begin(), ks.end()), ks.end());
  SelectKResult out;
  double best = -std::numeric_limits<double>::infinity();
  for (int k : ks) {
    const auto F = factorize(tox.V, k, seed, options);
    const double c = coherence(F, tox, top_m).mean;
    out.ks.push_back(k);
    out.mean_coherence.push_back(c);
    const double slack = 1e-9 * std::max(std::abs(c), std::abs(best));
    if (out.best_k == 0 || c > best + slack) {
      best = c;
      out.best_k = k;
    }
  }
  return out;
}

std::vector<std::vector<std::string>> top_terms(const NmfFactors& F,
                                                const std::vector<std::string>& names, int top_m) {
  if (top_m < 1 || top_m > F.W.rows()) throw Error("top_terms: top_m must be in 1..D");
  if (static_cast<Eigen::Index>(names.size()) != F.W.rows())
    throw Error("top_terms: name count does not match factor rows");
  std::vector<std::vector<std::string>> out;
  for (int k = 0; k < F.K(); ++k) {
    const auto ranked = ranked_terms(F, k, names);
    std::vector<std::string> terms;
    for (int m = 0; m < top_m; ++m) terms.push_back(names[static_cast<std::size_t>(ranked[static_cast<std::size_t>(m)])]);
    out.push_back(std::move(terms));
  }
  return out;
}

}  // namespace sepp
