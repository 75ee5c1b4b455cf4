#pragma once

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "hdmn/network.hpp"

namespace hdmn {

// Undirected view of a problem for triangulation-style work: moral adjacency
// plus parent->child arcs between continuous variables (used to keep the
// elimination order reverse-topological on the Gaussian part, so continuous
// integrations stay proper).
struct ScopeGraph {
  std::vector<VarId> vars;  // sorted
  std::map<VarId, bool> is_cont;
  std::map<VarId, std::set<VarId>> adj;
  std::vector<std::pair<VarId, VarId>> cont_arcs;

  bool continuous(VarId v) const { return is_cont.at(v); }
};

ScopeGraph scope_graph(const MixedNetwork& net);
ScopeGraph scope_graph_from_scopes(
    const std::vector<std::vector<VarId>>& scopes,
    const std::function<bool(VarId)>& is_continuous,
    const std::vector<std::pair<VarId, VarId>>& cont_arcs = {});

// Min-fill greedy order with all continuous variables eliminated first
// (children before parents), ties broken by lowest id.
std::vector<VarId> elimination_order(const ScopeGraph& g);
std::vector<VarId> elimination_order(const MixedNetwork& net);

// Max cluster size - 1 along the order; with discrete_only, clusters are
// measured by their number of discrete member variables.
int induced_width(const ScopeGraph& g, const std::vector<VarId>& order,
                  bool discrete_only = false);

struct Cluster {
  int id = -1;
  std::vector<VarId> vars;        // sorted
  std::vector<int> factor_ids;    // indices into the owning factor list
};

struct JGEdge {
  int a = -1, b = -1;
  std::vector<VarId> separator;   // sorted
};

struct JoinGraph {
  std::vector<Cluster> clusters;
  std::vector<JGEdge> edges;
  bool is_tree = false;
  std::optional<int> i_bound;
  std::vector<VarId> elim_order;
  std::vector<std::vector<VarId>> factor_scopes;  // scope per factor id
  std::map<VarId, bool> var_is_cont;
  std::map<VarId, int> home_cluster;  // first cluster of each variable's bucket
  std::vector<std::string> warnings;

  std::vector<std::vector<int>> adjacency() const;  // cluster -> edge ids
  int max_discrete_cluster() const;
};

// Bucket-tree construction along the order; every factor is assigned to the
// bucket of its earliest-eliminated scope variable.
JoinGraph build_join_tree(const ScopeGraph& g,
                          const std::vector<std::vector<VarId>>& factor_scopes,
                          const std::vector<VarId>& order);
JoinGraph build_join_tree(const MixedNetwork& net,
                          const std::vector<VarId>& order);

// Mini-bucket split of a join tree: clusters end up with at most i+1 discrete
// variables (single factors with larger discrete scopes keep their own
// cluster and are reported in warnings).
JoinGraph build_join_graph(const JoinGraph& jt, int i);

// invariant checks (used by construction in debug paths and by tests)
bool running_intersection_holds(const JoinGraph& jg);
bool variable_connectedness_holds(const JoinGraph& jg);
bool functions_partitioned(const JoinGraph& jg, int n_factors);

// Graphviz text export of a join graph for external visualization.
std::string write_dot(const JoinGraph& jg);

// ---- w-cutset ----

struct WCutset {
  std::vector<VarId> cutset;     // R, discrete
  std::vector<VarId> remainder;  // Z = X \ R
};

// Greedy heuristic: repeatedly removes the discrete variable occurring in the
// most over-width clusters (ties: degree, then lowest id) until conditioning
// on R leaves discrete induced width <= w.
WCutset select_w_cutset(const ScopeGraph& g, int w);
WCutset select_w_cutset(const MixedNetwork& net, int w);

// Elimination clusters of the graph with `removed` conditioned out, along a
// fresh strong order; used to verify and drive cutset selection.
std::vector<std::vector<VarId>> elimination_clusters(
    const ScopeGraph& g, const std::set<VarId>& removed);

// ---- online slice template (interface pasting) ----

// Per-slice propagation template: one join graph over the 2-THMN reused for
// every t >= 1, plus a prior-slice graph for t = 0. The interface is split
// into blocks of at most i+1 discrete variables; forward messages are the
// calibrated block beliefs, re-entering the next slice as factors over the
// previous-slice copies.
struct SlicedJoinGraph {
  JoinGraph graph;        // transition slice (ids: prev 0..n-1, cur n..2n-1)
  JoinGraph prior_graph;  // slice 0 (state ids)
  std::vector<std::vector<VarId>> blocks_cur;   // sorted, mixed kinds (cur ids)
  std::vector<std::vector<VarId>> blocks_prev;  // same blocks shifted to prev ids
  std::vector<int> incoming_factor_slot;  // factor index per block (transition graph)
  std::vector<int> outgoing_cluster;      // covering cluster per cur block
  std::vector<int> prior_outgoing_cluster;
  int n_transition_factors = 0;  // real factors precede block/placeholder slots
  int n_prior_factors = 0;
  int i_requested = 0;
  int i_used = 0;
  std::vector<std::string> warnings;
};

SlicedJoinGraph paste_interfaces(const DynamicMixedNetwork& dmn, int i);

}  // namespace hdmn
