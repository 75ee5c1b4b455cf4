#pragma once

#include <map>
#include <optional>
#include <vector>

#include "hdmn/joingraph.hpp"
#include "hdmn/network.hpp"
#include "hdmn/potential.hpp"

namespace hdmn {

// Filtering/posterior summary. Continuous marginals are reported as the
// moment-matched Gaussian (mixture of size 1); exact_filter also carries the
// joint potential over the interface variables.
struct BeliefState {
  int t = -1;
  std::map<VarId, std::vector<double>> discrete;
  std::map<VarId, GaussianMoments> continuous;  // log_weight = 0 (normalized)
  HybridPotential interface_potential;
  std::vector<VarId> interface_scope;  // state-variable ids
  bool collapse_flagged = false;  // a moment-matching collapse lost information
  double slice_log_likelihood = 0.0;  // log P(e_t | e_{0:t-1})
};

struct Marginals {
  std::map<VarId, std::vector<double>> discrete;
  std::map<VarId, GaussianMoments> continuous;
  double log_mass = 0.0;  // log of the evidence/constraint mass
};

// ---- enumeration oracle ----

// Enumerates discrete configurations, drops constraint violations, integrates
// the per-configuration Gaussian in moment form. Independent of the
// canonical-form potential machinery.
Marginals brute_force_marginals(const MixedNetwork& net, const Evidence& ev);

// Joint posterior over all discrete variables (sorted by id), for support and
// total-variation checks on small networks.
std::map<std::vector<int>, double> brute_force_discrete_joint(
    const MixedNetwork& net, const Evidence& ev);

// ---- join-tree clustering ----

// Calibrated bucket tree over an explicit factor list (factors must already
// be conditioned on any evidence). Collect/distribute uses separator division
// so discrete marginals and Gaussian means/variances stay exact under strong
// elimination orders.
struct CalibratedTree {
  JoinGraph tree;
  std::vector<HybridPotential> cluster_beliefs;  // unnormalized
  double log_mass = 0.0;
  bool collapse_flagged = false;
};

struct FactorContext {
  std::map<VarId, bool> is_cont;
  std::map<VarId, int> card;  // discrete vars
  std::vector<std::pair<VarId, VarId>> cont_arcs;
};

FactorContext factor_context(const MixedNetwork& net);

CalibratedTree jtc_calibrate(const std::vector<HybridPotential>& factors,
                             const FactorContext& ctx);

Marginals read_marginals(const CalibratedTree& ct,
                         const std::vector<VarId>& queries);

Marginals jtc_infer(const MixedNetwork& net, const Evidence& ev,
                    const std::vector<VarId>& queries = {});

// Variable elimination keeping only `keep`; used to extract interface
// potentials. Weak marginals may fire; stats reports them.
HybridPotential ve_keep(std::vector<HybridPotential> factors,
                        const std::vector<VarId>& keep,
                        const FactorContext& ctx,
                        WeakMarginalStats* stats = nullptr);

// Mixture combination of same-scope potentials with log-domain weights;
// per-tuple Gaussian mixtures are moment-matched.
HybridPotential weighted_mixture(
    const std::vector<std::pair<double, const HybridPotential*>>& comps);

// ---- exact recursive filtering ----

// Observations are Evidence over state-variable ids, one entry per slice
// starting at t=0. The interface belief is a single Gaussian per discrete
// interface tuple; steps where that collapse loses information are flagged.
std::vector<BeliefState> exact_filter(const DynamicMixedNetwork& dmn,
                                      const std::vector<Evidence>& observations);

}  // namespace hdmn
