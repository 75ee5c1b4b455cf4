#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <variant>
#include <vector>

#include "hdmn/potential.hpp"
#include "hdmn/rng.hpp"
#include "hdmn/types.hpp"

namespace hdmn {

// Tabular CPD for a discrete child. Table is row-major over
// (parents..., child) with the child value fastest.
struct DiscreteCPD {
  VarId child = -1;
  std::vector<VarId> parents;  // ordered, all discrete
  std::vector<double> table;
};

// Conditional linear Gaussian: child | I=i, Z=z ~ N(alpha(i) + beta(i)'z, gamma(i)).
struct LinearGaussianCPD {
  struct Row {
    double intercept = 0.0;
    std::vector<double> coeffs;  // aligned with continuous_parents
    double variance = 1.0;
  };
  VarId child = -1;
  std::vector<VarId> discrete_parents;    // ordered
  std::vector<VarId> continuous_parents;  // ordered
  std::vector<Row> rows;  // dense over discrete parent configs, last parent fastest
};

using Cpd = std::variant<DiscreteCPD, LinearGaussianCPD>;

VarId cpd_child(const Cpd& cpd);
std::vector<VarId> cpd_parents(const Cpd& cpd);

// Hard constraint: the set of allowed value tuples over a discrete scope.
// Tuples are kept lexicographically sorted and unique.
struct ConstraintRelation {
  std::string name;  // optional, for diagnostics
  std::vector<VarId> scope;
  std::vector<std::vector<int>> allowed;

  bool allows(std::span<const int> tuple) const;
};

ConstraintRelation make_relation(std::vector<VarId> scope,
                                 std::vector<std::vector<int>> tuples,
                                 std::string name = "");

ConstraintRelation relation_join(const ConstraintRelation& r1,
                                 const ConstraintRelation& r2);
ConstraintRelation relation_project(const ConstraintRelation& r,
                                    const std::vector<VarId>& onto);

// ---- the static mixed network ----

class MixedNetwork {
 public:
  std::vector<Variable> variables;             // ids are dense 0..n-1
  std::vector<std::vector<VarId>> parents;     // DAG parent lists
  std::vector<std::optional<Cpd>> cpds;        // one per variable (see cpd_free)
  std::vector<ConstraintRelation> constraints;
  std::set<VarId> cpd_free;  // declared CPD-free roots (2-THMN previous slice)

  int size() const { return static_cast<int>(variables.size()); }
  const Variable& var(VarId v) const { return variables.at(static_cast<std::size_t>(v)); }
  VarId by_name(const std::string& name) const;
  std::vector<VarId> discrete_vars() const;
  std::vector<VarId> continuous_vars() const;

  // throws ModelError on structural violations (cycles, CLG rule, CPD
  // coverage, table validity, constraint arity/domains)
  void validate() const;

  std::vector<VarId> topo_order() const;

  // undirected adjacency: family cliques plus constraint-scope cliques
  std::vector<std::set<VarId>> moral_graph() const;
};

// CPDs and constraints compiled to potentials, in a deterministic order:
// CPDs by child id, then constraints in declaration order.
HybridPotential to_potential(const MixedNetwork& net, const Cpd& cpd);
HybridPotential to_potential(const MixedNetwork& net, const ConstraintRelation& rel);
std::vector<HybridPotential> factor_potentials(const MixedNetwork& net);

// Full-assignment log density: sum of CPD log densities, -inf when any
// constraint is violated. Used by enumeration oracles.
double log_density(const MixedNetwork& net,
                   const std::map<VarId, int>& disc,
                   const std::map<VarId, double>& cont);

// Samples unobserved variables in topological order given a partial
// assignment; ignores constraints (callers reject or enforce them).
struct Assignment {
  std::map<VarId, int> discrete;
  std::map<VarId, double> continuous;
};
Assignment sample_forward(const MixedNetwork& net, const Assignment& given,
                          RngStream& rng);

bool satisfies_constraints(const MixedNetwork& net,
                           const std::map<VarId, int>& disc);

// ---- the dynamic network ----

// Transition network layout: ids 0..n-1 are the previous-slice copies X' and
// ids n..2n-1 the current-slice copies X''; index i corresponds to prior
// variable i in both.
class DynamicMixedNetwork {
 public:
  MixedNetwork prior;       // over X, ids 0..n-1
  MixedNetwork transition;  // over X' u X'', ids 0..2n-1
  int n_state = 0;

  VarId prev_id(VarId state) const { return state; }
  VarId cur_id(VarId state) const { return state + n_state; }
  VarId state_of_cur(VarId cur) const { return cur - n_state; }

  void validate() const;

  // state variables whose previous-slice copy interacts with the current
  // slice (as a parent or through a constraint)
  std::vector<VarId> interface_vars() const;
};

MixedNetwork unroll(const DynamicMixedNetwork& dmn, int T);

}  // namespace hdmn
