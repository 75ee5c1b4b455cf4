#pragma once

#include <map>
#include <memory>
#include <optional>
#include <vector>

#include "hdmn/exact.hpp"
#include "hdmn/ijgp.hpp"
#include "hdmn/rng.hpp"

namespace hdmn {

// One Rao-Blackwellised particle: sampled cutset values (state-variable ids)
// plus the analytic interface belief over the non-sampled remainder.
struct Particle {
  std::map<VarId, int> cutset;
  std::shared_ptr<const HybridPotential> belief;  // interface cap Z, state ids
  std::shared_ptr<const Marginals> slice_marginals;
  double log_weight = 0.0;

  bool dead() const;
};

struct ParticleSet {
  std::vector<Particle> particles;
  double ess = 0.0;
  std::int64_t rejections = 0;  // this step
  std::uint64_t rng_stream = 0;
};

// Per-variable sampling structure assembled from calibrated cluster beliefs:
// bucket k holds the home-cluster belief of the k-th cutset variable reduced
// to that variable plus the already-ordered ones it shares scope with.
struct OrderedBuckets {
  std::vector<VarId> order;
  std::vector<HybridPotential> tables;  // discrete, over {order[k]} + earlier
};

OrderedBuckets build_ordered_buckets(const CalibratedGraph& cg,
                                     const std::vector<VarId>& sampling_order);

// Draws the cutset sequentially; returns the assignment and its exact log
// proposal probability, or nullopt on a dead end (a conditioned bucket with
// no live value).
std::optional<std::pair<std::map<VarId, int>, double>> sample_cutset(
    const OrderedBuckets& ob, RngStream& rng);

// Systematic resampling: returns N source indices; expected copy counts match
// the weights within 1/N deterministically.
std::vector<int> systematic_resample(const std::vector<double>& weights, int n,
                                     RngStream& rng);

struct SliceMetrics {
  int t = 0;
  double ess = 0.0;
  std::int64_t rejections = 0;
  std::int64_t draws = 0;  // N_R: proposals actually attempted
  int live = 0;
  double wall_ms = 0.0;
};

struct RbpfOptions {
  int i_bound = 1;
  int w_bound = 1;
  int n_particles = 100;
  std::uint64_t seed = 0;
  enum class Proposal { Ijgp, Prior } proposal = Proposal::Ijgp;
  bool adaptive_resample = false;  // resample only when ESS < N/2
  int max_iters = 30;
  double tol = 1e-6;
  int retry_cap = 25;
};

struct RbpfResult {
  std::vector<BeliefState> beliefs;
  std::vector<SliceMetrics> metrics;
  WCutset cutset;                  // over state ids
  double log_likelihood = 0.0;     // SIS estimate of log P(e_{0:T})
  std::vector<ParticleSet> trace;  // post-weighting particle sets per slice
};

RbpfResult ijgp_rbpf_filter(const DynamicMixedNetwork& dmn,
                            const std::vector<Evidence>& observations,
                            const RbpfOptions& opts);

// Plain particle filter baseline: samples every variable from the transition
// prior and weights by the evidence likelihood.
struct PlainPfResult {
  std::vector<BeliefState> beliefs;
  std::vector<SliceMetrics> metrics;
};

PlainPfResult plain_pf_filter(const DynamicMixedNetwork& dmn,
                              const std::vector<Evidence>& observations,
                              int n_particles, std::uint64_t seed);

}  // namespace hdmn
