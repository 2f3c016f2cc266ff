#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

#include "sepp/tox.hpp"

namespace sepp {

struct NmfOptions {
  int iters = 500;
  int restarts = 5;
  double eps = 1e-12;  // added to update denominators
};

// V ~ W H with W: D x K (substance-topic), H: K x N (topic-report).
struct NmfFactors {
  Eigen::MatrixXd W;
  Eigen::MatrixXd H;
  std::vector<double> trace;                    // ||V - WH||_F^2, best run
  std::vector<std::vector<double>> run_traces;  // every restart
  int best_run = 0;

  int K() const { return static_cast<int>(W.cols()); }
};

// Lee-Seung multiplicative updates for the Frobenius loss, best of
// `restarts` seeded runs by final objective.
NmfFactors factorize(const Eigen::MatrixXd& V, int K, std::uint64_t seed,
                     const NmfOptions& options = {});

struct ClusterLabels {
  std::vector<int> labels;
  std::size_t zero_columns = 0;
};

// label(n) = argmax_k H(k, n), lowest k on ties.
ClusterLabels assign_clusters(const NmfFactors& F);

struct CoherenceScore {
  std::vector<double> per_topic;
  double mean = 0.0;
  std::size_t skipped_pairs = 0;
};

// UMass coherence over each topic's top_m substances ranked by W column.
CoherenceScore coherence(const NmfFactors& F, const ToxMatrix& tox,
                         int top_m = 5);

struct SelectKResult {
  int best_k = 0;
  std::vector<int> ks;
  std::vector<double> mean_coherence;
};

// Argmax of mean coherence; scores within 1e-9 relative count as ties and go
// to the smallest K.
SelectKResult select_k(const ToxMatrix& tox, const std::vector<int>& k_range,
                       std::uint64_t seed, const NmfOptions& options = {},
                       int top_m = 5);

// Substance names of each topic ranked by W column; ties broken by name.
std::vector<std::vector<std::string>> top_terms(
    const NmfFactors& F, const std::vector<std::string>& names, int top_m);

}  // namespace sepp
