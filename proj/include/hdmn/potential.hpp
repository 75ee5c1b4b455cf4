#pragma once

#include <Eigen/Dense>
#include <optional>
#include <span>
#include <vector>

#include "hdmn/types.hpp"

namespace hdmn {

// Weighted Gaussian in canonical form over an implicit ordered continuous
// scope: phi(x) = exp(g + h'x - x'Kx/2). A 0-dimensional entry is a bare
// weight exp(g).
struct CanonicalGaussian {
  double g = 0.0;
  Eigen::VectorXd h;
  Eigen::MatrixXd K;

  static CanonicalGaussian scalar(double log_weight) {
    CanonicalGaussian c;
    c.g = log_weight;
    c.h = Eigen::VectorXd::Zero(0);
    c.K = Eigen::MatrixXd::Zero(0, 0);
    return c;
  }
};

// Moment-form view of one normalizable entry.
struct GaussianMoments {
  double log_weight = 0.0;  // log of total mass
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Bookkeeping for weak (moment-matching) discrete marginalization.
struct WeakMarginalStats {
  int collapses = 0;  // result tuples where >1 live entries were merged
  bool lossy = false; // some merged entries actually differed
};

// Conditional-Gaussian potential: a dense table over the discrete scope whose
// cells are ZERO (absorbing, constraint-killed) or canonical-form Gaussians
// over the continuous scope. Scopes are kept sorted by variable id; the table
// is row-major with the last scope variable fastest.
class HybridPotential {
 public:
  std::vector<VarId> dscope;   // sorted ascending
  std::vector<int> card;       // aligned with dscope
  std::vector<VarId> cscope;   // sorted ascending
  std::vector<std::optional<CanonicalGaussian>> entries;

  HybridPotential() = default;  // no table; assign scopes and entries before use

  static HybridPotential identity() {
    HybridPotential p;
    p.entries.emplace_back(CanonicalGaussian::scalar(0.0));
    return p;
  }

  // all-ZERO potential over the given scopes
  static HybridPotential zero(std::vector<VarId> dscope, std::vector<int> card,
                              std::vector<VarId> cscope);

  std::size_t table_size() const { return entries.size(); }
  int cdim() const { return static_cast<int>(cscope.size()); }
  bool all_zero() const;
  bool scalar_scope() const { return dscope.empty() && cscope.empty(); }

  int card_of(VarId v) const;
  bool in_dscope(VarId v) const;
  bool in_cscope(VarId v) const;

  // index/tuple conversions over the discrete table
  std::size_t index_of(std::span<const int> tuple) const;
  std::vector<int> tuple_of(std::size_t index) const;

  void check_consistent() const;  // dimension invariants; throws InternalError
};

// ---- entry-level helpers ----

// log of the total mass of one canonical entry; requires K positive definite
// when the continuous dimension is nonzero.
double entry_log_mass(const CanonicalGaussian& e);

GaussianMoments to_moments(const CanonicalGaussian& e);
CanonicalGaussian from_moments(const GaussianMoments& m);

// ---- potential algebra ----

HybridPotential multiply(const HybridPotential& a, const HybridPotential& b);

// b's scopes must be contained in a's; ZERO/ZERO yields ZERO.
HybridPotential divide(const HybridPotential& a, const HybridPotential& b);

// Eliminates the given variables: continuous ones by exact integration
// (strong marginal), then discrete ones by summation. When more than one live
// Gaussian lands on a surviving tuple the sum is replaced by the
// moment-matched single Gaussian (weak marginal).
HybridPotential marginalize(const HybridPotential& p,
                            std::span<const VarId> elim,
                            WeakMarginalStats* stats = nullptr);

HybridPotential condition(const HybridPotential& p, const Evidence& ev);

// Rewrites variable ids; re-sorts scopes and permutes the table accordingly.
HybridPotential rename_scope(const HybridPotential& p,
                             const std::map<VarId, VarId>& id_map);

// log of the summed/integrated total mass; -inf when all entries are ZERO.
double total_log_mass(const HybridPotential& p);

// shifts log-weights so the total mass is 1; throws InconsistentEvidenceError
// on an all-ZERO potential.
HybridPotential normalized(const HybridPotential& p);

// Sums/integrates everything except `v` (discrete) and returns the normalized
// probability vector over its domain.
std::vector<double> discrete_marginal(const HybridPotential& p, VarId v);

// Integrates/sums everything except `v` (continuous); returns the
// moment-matched marginal (log_weight is the total mass before normalizing).
GaussianMoments continuous_marginal(const HybridPotential& p, VarId v);

// Largest absolute difference between the two potentials' parameters after
// aligning scopes; +inf when scopes or ZERO patterns differ. Log-weights are
// compared after shifting both tables by their max g (scale invariance).
double max_param_diff(const HybridPotential& a, const HybridPotential& b);

double logsumexp(std::span<const double> xs);

// Symmetric-PSD inverse with the tolerance policy used across the library:
// eigenvalues below -1e-8*max(1,|lambda|_max) raise DegeneratePotentialError,
// near-zero ones are treated as singular (also an error when inverting).
Eigen::MatrixXd psd_inverse(const Eigen::MatrixXd& m, double* logdet);

}  // namespace hdmn
