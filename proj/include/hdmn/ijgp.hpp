#pragma once

#include <optional>
#include <vector>

#include "hdmn/exact.hpp"
#include "hdmn/joingraph.hpp"

namespace hdmn {

// Result of iterative join-graph propagation: per-edge messages, per-cluster
// beliefs, and the convergence trace. An all-ZERO cluster belief marks the
// evidence/constraints inconsistent; beliefs stay inspectable.
struct CalibratedGraph {
  JoinGraph graph;
  std::vector<HybridPotential> beliefs;   // unnormalized, one per cluster
  std::vector<HybridPotential> messages;  // 2*e: a->b, 2*e+1: b->a
  int iterations = 0;
  double max_residual = 0.0;
  bool inconsistent = false;
  int inconsistent_cluster = -1;
};

struct IjgpOptions {
  int max_iters = 30;
  double tol = 1e-6;
};

// Division-free propagation: each outgoing message is recomputed from the
// cluster's factors and the other incoming messages, marginalized onto the
// separator. Round-robin synchronous schedule over edges in construction
// order; damping 0.5 kicks in after iteration 10 if the residual stops
// decreasing.
CalibratedGraph ijgp_run(const JoinGraph& jg,
                         const std::vector<HybridPotential>& factors,
                         const FactorContext& ctx, const IjgpOptions& opts);

// Convenience entry point on a network: builds the i-bounded join graph,
// conditions the factors, runs propagation.
CalibratedGraph ijgp(const MixedNetwork& net, int i_bound, const Evidence& ev,
                     const IjgpOptions& opts = {});

Marginals read_marginals(const CalibratedGraph& cg,
                         const std::vector<VarId>& queries);

// ---- sequential filtering (EP-style forward pass) ----

struct IjgpSOptions {
  int i = 1;
  int max_iters = 30;
  double tol = 1e-6;
};

struct IjgpSResult {
  std::vector<BeliefState> beliefs;
  int i_used = 0;
  std::vector<std::string> warnings;
};

// Instantiates the pasted slice template per time step, injects the forward
// interface potentials from t-1 and the slice evidence, propagates, and emits
// the new forward interface potentials. Runtime is linear in T.
IjgpSResult ijgp_s_filter(const DynamicMixedNetwork& dmn,
                          const std::vector<Evidence>& observations,
                          const IjgpSOptions& opts = {});

}  // namespace hdmn
