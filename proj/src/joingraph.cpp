#include "hdmn/joingraph.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

namespace hdmn {

namespace {

std::vector<VarId> sorted_unique(std::vector<VarId> v) {
  std::sort(v.begin(), v.end());
  v.erase(std::unique(v.begin(), v.end()), v.end());
  return v;
}

int count_discrete(const std::vector<VarId>& vars,
                   const std::map<VarId, bool>& is_cont) {
  int n = 0;
  for (VarId v : vars)
    if (!is_cont.at(v)) ++n;
  return n;
}

}  // namespace

ScopeGraph scope_graph(const MixedNetwork& net) {
  ScopeGraph g;
  for (const auto& v : net.variables) {
    g.vars.push_back(v.id);
    g.is_cont[v.id] = v.continuous();
  }
  auto adj = net.moral_graph();
  for (VarId v = 0; v < net.size(); ++v)
    g.adj[v] = adj[static_cast<std::size_t>(v)];
  for (VarId v = 0; v < net.size(); ++v) {
    if (!net.var(v).continuous()) continue;
    for (VarId p : net.parents[static_cast<std::size_t>(v)])
      if (net.var(p).continuous()) g.cont_arcs.emplace_back(p, v);
  }
  return g;
}

ScopeGraph scope_graph_from_scopes(
    const std::vector<std::vector<VarId>>& scopes,
    const std::function<bool(VarId)>& is_continuous,
    const std::vector<std::pair<VarId, VarId>>& cont_arcs) {
  ScopeGraph g;
  std::set<VarId> vars;
  for (const auto& s : scopes)
    for (VarId v : s) vars.insert(v);
  g.vars.assign(vars.begin(), vars.end());
  for (VarId v : g.vars) {
    g.is_cont[v] = is_continuous(v);
    g.adj[v];  // ensure entry
  }
  for (const auto& s : scopes)
    for (std::size_t i = 0; i < s.size(); ++i)
      for (std::size_t j = i + 1; j < s.size(); ++j) {
        g.adj[s[i]].insert(s[j]);
        g.adj[s[j]].insert(s[i]);
      }
  for (auto& [p, c] : cont_arcs)
    if (vars.count(p) && vars.count(c)) g.cont_arcs.emplace_back(p, c);
  return g;
}

std::vector<VarId> elimination_order(const ScopeGraph& g) {
  std::map<VarId, std::set<VarId>> adj = g.adj;
  std::set<VarId> remaining(g.vars.begin(), g.vars.end());
  std::map<VarId, int> cont_children;
  std::map<VarId, std::vector<VarId>> cont_parents_of;
  for (VarId v : g.vars)
    if (g.continuous(v)) cont_children[v] = 0;
  for (auto& [p, c] : g.cont_arcs) {
    cont_children[p] += 1;
    cont_parents_of[c].push_back(p);
  }

  auto fill_count = [&](VarId v) {
    std::vector<VarId> nb;
    for (VarId u : adj[v])
      if (remaining.count(u)) nb.push_back(u);
    int fill = 0;
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (std::size_t j = i + 1; j < nb.size(); ++j)
        if (!adj[nb[i]].count(nb[j])) ++fill;
    return fill;
  };

  std::vector<VarId> order;
  while (!remaining.empty()) {
    bool any_cont = false;
    for (VarId v : remaining)
      if (g.continuous(v)) { any_cont = true; break; }
    std::vector<VarId> eligible;
    for (VarId v : remaining) {
      if (any_cont) {
        if (g.continuous(v) && cont_children[v] == 0) eligible.push_back(v);
      } else {
        eligible.push_back(v);
      }
    }
    VarId best = -1;
    int best_fill = -1;
    for (VarId v : eligible) {
      int f = fill_count(v);
      if (best < 0 || f < best_fill || (f == best_fill && v < best)) {
        best = v;
        best_fill = f;
      }
    }
    // connect v's remaining neighbors, then remove v
    std::vector<VarId> nb;
    for (VarId u : adj[best])
      if (remaining.count(u)) nb.push_back(u);
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (std::size_t j = i + 1; j < nb.size(); ++j) {
        adj[nb[i]].insert(nb[j]);
        adj[nb[j]].insert(nb[i]);
      }
    remaining.erase(best);
    if (g.continuous(best))
      for (VarId p : cont_parents_of[best]) cont_children[p] -= 1;
    order.push_back(best);
  }
  return order;
}

std::vector<VarId> elimination_order(const MixedNetwork& net) {
  return elimination_order(scope_graph(net));
}

int induced_width(const ScopeGraph& g, const std::vector<VarId>& order,
                  bool discrete_only) {
  std::map<VarId, std::set<VarId>> adj = g.adj;
  std::set<VarId> remaining(g.vars.begin(), g.vars.end());
  int width = 0;
  for (VarId v : order) {
    std::vector<VarId> nb;
    for (VarId u : adj[v])
      if (remaining.count(u)) nb.push_back(u);
    int members = 0;
    if (discrete_only) {
      if (!g.continuous(v)) ++members;
      for (VarId u : nb)
        if (!g.continuous(u)) ++members;
    } else {
      members = static_cast<int>(nb.size()) + 1;
    }
    width = std::max(width, members - 1);
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (std::size_t j = i + 1; j < nb.size(); ++j) {
        adj[nb[i]].insert(nb[j]);
        adj[nb[j]].insert(nb[i]);
      }
    remaining.erase(v);
  }
  return width;
}

std::vector<std::vector<int>> JoinGraph::adjacency() const {
  std::vector<std::vector<int>> adj(clusters.size());
  for (std::size_t e = 0; e < edges.size(); ++e) {
    adj[static_cast<std::size_t>(edges[e].a)].push_back(static_cast<int>(e));
    adj[static_cast<std::size_t>(edges[e].b)].push_back(static_cast<int>(e));
  }
  return adj;
}

int JoinGraph::max_discrete_cluster() const {
  int m = 0;
  for (const auto& c : clusters)
    m = std::max(m, count_discrete(c.vars, var_is_cont));
  return m;
}

// ---- schematic (mini-)bucket construction ----

namespace {

struct Item {
  std::vector<VarId> scope;  // sorted
  int factor_id = -1;        // >= 0 for factors
  int origin_cluster = -1;   // >= 0 for messages
};

JoinGraph schematic_build(const ScopeGraph& g,
                          const std::vector<std::vector<VarId>>& factor_scopes,
                          const std::vector<VarId>& order,
                          std::optional<int> ibound) {
  JoinGraph jg;
  jg.elim_order = order;
  jg.factor_scopes = factor_scopes;
  jg.var_is_cont = g.is_cont;
  jg.i_bound = ibound;

  std::map<VarId, int> pos;
  for (std::size_t k = 0; k < order.size(); ++k)
    pos[order[k]] = static_cast<int>(k);

  std::vector<std::vector<Item>> bucket_items(order.size());
  auto bucket_of = [&](const std::vector<VarId>& scope) {
    int best = -1;
    for (VarId v : scope) {
      int p = pos.at(v);
      if (best < 0 || p < best) best = p;
    }
    return best;
  };

  std::vector<int> empty_scope_factors;
  for (std::size_t f = 0; f < factor_scopes.size(); ++f) {
    std::vector<VarId> scope = sorted_unique(factor_scopes[f]);
    if (scope.empty()) {
      empty_scope_factors.push_back(static_cast<int>(f));
      continue;
    }
    Item it;
    it.scope = std::move(scope);
    it.factor_id = static_cast<int>(f);
    bucket_items[static_cast<std::size_t>(bucket_of(it.scope))].push_back(std::move(it));
  }

  for (std::size_t k = 0; k < order.size(); ++k) {
    VarId v = order[k];
    auto& items = bucket_items[k];
    // deterministic packing order: larger discrete scopes first
    std::stable_sort(items.begin(), items.end(), [&](const Item& a, const Item& b) {
      int da = count_discrete(a.scope, g.is_cont);
      int db = count_discrete(b.scope, g.is_cont);
      if (da != db) return da > db;
      if (a.scope != b.scope) return a.scope < b.scope;
      return std::make_pair(a.factor_id, a.origin_cluster) <
             std::make_pair(b.factor_id, b.origin_cluster);
    });

    std::vector<int> minibucket_of(items.size(), -1);
    std::vector<std::vector<VarId>> mb_scope;
    for (std::size_t t = 0; t < items.size(); ++t) {
      int placed = -1;
      for (std::size_t m = 0; m < mb_scope.size() && placed < 0; ++m) {
        if (!ibound) { placed = static_cast<int>(m); break; }
        std::vector<VarId> u = mb_scope[m];
        u.insert(u.end(), items[t].scope.begin(), items[t].scope.end());
        u = sorted_unique(u);
        if (count_discrete(u, g.is_cont) <= *ibound + 1)
          placed = static_cast<int>(m);
      }
      if (placed < 0) {
        if (ibound &&
            count_discrete(items[t].scope, g.is_cont) > *ibound + 1) {
          std::ostringstream w;
          w << "scope of size " << count_discrete(items[t].scope, g.is_cont)
            << " exceeds i-bound " << *ibound << " and keeps its own cluster";
          jg.warnings.push_back(w.str());
        }
        mb_scope.push_back(items[t].scope);
        placed = static_cast<int>(mb_scope.size()) - 1;
      } else {
        std::vector<VarId> u = mb_scope[static_cast<std::size_t>(placed)];
        u.insert(u.end(), items[t].scope.begin(), items[t].scope.end());
        mb_scope[static_cast<std::size_t>(placed)] = sorted_unique(u);
      }
      minibucket_of[t] = placed;
    }
    if (mb_scope.empty()) {
      // bucket with no items: lone variable
      mb_scope.push_back({v});
    }

    std::vector<int> cluster_ids;
    for (std::size_t m = 0; m < mb_scope.size(); ++m) {
      Cluster c;
      c.id = static_cast<int>(jg.clusters.size());
      c.vars = mb_scope[m];
      if (!std::binary_search(c.vars.begin(), c.vars.end(), v)) {
        c.vars.push_back(v);
        c.vars = sorted_unique(c.vars);
      }
      jg.clusters.push_back(c);
      cluster_ids.push_back(c.id);
    }
    jg.home_cluster[v] = cluster_ids.front();
    for (std::size_t t = 0; t < items.size(); ++t) {
      int cid = cluster_ids[static_cast<std::size_t>(minibucket_of[t])];
      if (items[t].factor_id >= 0)
        jg.clusters[static_cast<std::size_t>(cid)].factor_ids.push_back(items[t].factor_id);
      else
        jg.edges.push_back(JGEdge{items[t].origin_cluster, cid,
                                  items[t].scope});
    }
    // chain the mini-buckets of this bucket
    for (std::size_t m = 0; m + 1 < cluster_ids.size(); ++m)
      jg.edges.push_back(JGEdge{cluster_ids[m], cluster_ids[m + 1], {v}});

    // emit one message per mini-bucket
    for (std::size_t m = 0; m < cluster_ids.size(); ++m) {
      const auto& cvars = jg.clusters[static_cast<std::size_t>(cluster_ids[m])].vars;
      std::vector<VarId> msg;
      for (VarId u : cvars)
        if (u != v) msg.push_back(u);
      if (msg.empty()) continue;
      Item it;
      it.scope = std::move(msg);
      it.origin_cluster = cluster_ids[m];
      bucket_items[static_cast<std::size_t>(bucket_of(it.scope))].push_back(std::move(it));
    }
  }

  // factors with empty scope are plain scalars; attach them to cluster 0
  for (int f : empty_scope_factors)
    if (!jg.clusters.empty())
      jg.clusters[0].factor_ids.push_back(f);

  jg.is_tree = !ibound.has_value();
  if (ibound) {
    // splitting may have been a no-op; then the result is still a tree
    bool one_per_bucket = true;
    std::map<VarId, int> per_bucket;
    for (const auto& c : jg.clusters) (void)c;
    std::set<VarId> seen;
    for (const auto& [v, cid] : jg.home_cluster) seen.insert(v);
    one_per_bucket = jg.clusters.size() == order.size();
    jg.is_tree = one_per_bucket;
  }
  return jg;
}

}  // namespace

JoinGraph build_join_tree(const ScopeGraph& g,
                          const std::vector<std::vector<VarId>>& factor_scopes,
                          const std::vector<VarId>& order) {
  return schematic_build(g, factor_scopes, order, std::nullopt);
}

JoinGraph build_join_tree(const MixedNetwork& net,
                          const std::vector<VarId>& order) {
  std::vector<std::vector<VarId>> scopes;
  for (VarId v = 0; v < net.size(); ++v)
    if (net.cpds[static_cast<std::size_t>(v)]) {
      std::vector<VarId> s = cpd_parents(*net.cpds[static_cast<std::size_t>(v)]);
      s.push_back(v);
      scopes.push_back(sorted_unique(std::move(s)));
    }
  for (const auto& c : net.constraints)
    scopes.push_back(sorted_unique(c.scope));
  return build_join_tree(scope_graph(net), scopes, order);
}

JoinGraph build_join_graph(const JoinGraph& jt, int i) {
  if (i < 1) throw ParamError("i-bound must be >= 1");
  if (!jt.is_tree) throw ParamError("build_join_graph expects a join tree");
  ScopeGraph g = scope_graph_from_scopes(
      jt.factor_scopes, [&](VarId v) { return jt.var_is_cont.at(v); });
  // lone variables may not appear in any factor scope; keep them known
  for (const auto& [v, cont] : jt.var_is_cont) {
    if (!g.is_cont.count(v)) {
      g.vars.push_back(v);
      g.is_cont[v] = cont;
      g.adj[v];
    }
  }
  std::sort(g.vars.begin(), g.vars.end());
  return schematic_build(g, jt.factor_scopes, jt.elim_order, i);
}

bool running_intersection_holds(const JoinGraph& jg) {
  return variable_connectedness_holds(jg);
}

bool variable_connectedness_holds(const JoinGraph& jg) {
  std::set<VarId> all;
  for (const auto& c : jg.clusters) all.insert(c.vars.begin(), c.vars.end());
  for (VarId v : all) {
    std::vector<int> holders;
    for (const auto& c : jg.clusters)
      if (std::binary_search(c.vars.begin(), c.vars.end(), v))
        holders.push_back(c.id);
    if (holders.size() <= 1) continue;
    // union-find over edges whose separator carries v
    std::map<int, int> rep;
    for (int h : holders) rep[h] = h;
    std::function<int(int)> find = [&](int x) {
      while (rep[x] != x) x = rep[x] = rep[rep[x]];
      return x;
    };
    for (const auto& e : jg.edges) {
      if (!std::binary_search(e.separator.begin(), e.separator.end(), v))
        continue;
      if (!rep.count(e.a) || !rep.count(e.b)) return false;  // separator outside endpoints
      rep[find(e.a)] = find(e.b);
    }
    int r0 = find(holders[0]);
    for (int h : holders)
      if (find(h) != r0) return false;
  }
  return true;
}

bool functions_partitioned(const JoinGraph& jg, int n_factors) {
  std::vector<int> count(static_cast<std::size_t>(n_factors), 0);
  for (const auto& c : jg.clusters)
    for (int f : c.factor_ids) {
      if (f < 0 || f >= n_factors) return false;
      count[static_cast<std::size_t>(f)] += 1;
    }
  for (int k : count)
    if (k != 1) return false;
  // each factor's scope must fit its cluster
  for (const auto& c : jg.clusters)
    for (int f : c.factor_ids)
      for (VarId v : jg.factor_scopes[static_cast<std::size_t>(f)])
        if (!std::binary_search(c.vars.begin(), c.vars.end(), v)) return false;
  return true;
}

std::string write_dot(const JoinGraph& jg) {
  std::ostringstream os;
  os << "graph joingraph {\n";
  for (const auto& c : jg.clusters) {
    os << "  c" << c.id << " [label=\"";
    for (std::size_t k = 0; k < c.vars.size(); ++k)
      os << (k ? " " : "") << c.vars[k];
    os << "\"];\n";
  }
  for (const auto& e : jg.edges) {
    os << "  c" << e.a << " -- c" << e.b << " [label=\"";
    for (std::size_t k = 0; k < e.separator.size(); ++k)
      os << (k ? " " : "") << e.separator[k];
    os << "\"];\n";
  }
  os << "}\n";
  return os.str();
}

// ---- w-cutset ----

std::vector<std::vector<VarId>> elimination_clusters(
    const ScopeGraph& g, const std::set<VarId>& removed) {
  ScopeGraph h;
  for (VarId v : g.vars) {
    if (removed.count(v)) continue;
    h.vars.push_back(v);
    h.is_cont[v] = g.is_cont.at(v);
  }
  for (VarId v : h.vars) {
    for (VarId u : g.adj.at(v))
      if (!removed.count(u)) h.adj[v].insert(u);
    h.adj[v];
  }
  for (auto& [p, c] : g.cont_arcs)
    if (!removed.count(p) && !removed.count(c)) h.cont_arcs.emplace_back(p, c);

  auto order = elimination_order(h);
  std::map<VarId, std::set<VarId>> adj = h.adj;
  std::set<VarId> remaining(h.vars.begin(), h.vars.end());
  std::vector<std::vector<VarId>> clusters;
  for (VarId v : order) {
    std::vector<VarId> cl{v};
    for (VarId u : adj[v])
      if (remaining.count(u)) cl.push_back(u);
    std::sort(cl.begin(), cl.end());
    clusters.push_back(cl);
    for (std::size_t i = 1; i < cl.size(); ++i)
      for (std::size_t j = i + 1; j < cl.size(); ++j)
        if (cl[i] != v && cl[j] != v) {
          adj[cl[i]].insert(cl[j]);
          adj[cl[j]].insert(cl[i]);
        }
    // (cl includes v itself; connect all remaining neighbor pairs)
    std::vector<VarId> nb;
    for (VarId u : cl)
      if (u != v) nb.push_back(u);
    for (std::size_t i = 0; i < nb.size(); ++i)
      for (std::size_t j = i + 1; j < nb.size(); ++j) {
        adj[nb[i]].insert(nb[j]);
        adj[nb[j]].insert(nb[i]);
      }
    remaining.erase(v);
  }
  return clusters;
}

WCutset select_w_cutset(const ScopeGraph& g, int w) {
  if (w < 0) throw ParamError("w must be >= 0");
  std::set<VarId> cut;
  for (;;) {
    auto clusters = elimination_clusters(g, cut);
    std::map<VarId, int> over_count;
    bool any_over = false;
    for (const auto& cl : clusters) {
      int nd = count_discrete(cl, g.is_cont);
      if (nd - 1 > w) {
        any_over = true;
        for (VarId v : cl)
          if (!g.is_cont.at(v)) over_count[v] += 1;
      }
    }
    if (!any_over) break;
    VarId best = -1;
    int best_count = -1, best_deg = -1;
    for (auto& [v, cnt] : over_count) {
      int deg = static_cast<int>(g.adj.at(v).size());
      if (cnt > best_count || (cnt == best_count && deg > best_deg) ||
          (cnt == best_count && deg == best_deg && (best < 0 || v < best))) {
        best = v;
        best_count = cnt;
        best_deg = deg;
      }
    }
    cut.insert(best);
  }
  WCutset out;
  out.cutset.assign(cut.begin(), cut.end());
  for (VarId v : g.vars)
    if (!cut.count(v)) out.remainder.push_back(v);
  return out;
}

WCutset select_w_cutset(const MixedNetwork& net, int w) {
  return select_w_cutset(scope_graph(net), w);
}

// ---- interface pasting ----

namespace {

// packs the interface into blocks of <= i+1 discrete variables; continuous
// interface variables ride with the block holding most of their neighbors
std::vector<std::vector<VarId>> split_interface(
    const DynamicMixedNetwork& dmn, const std::vector<VarId>& iface_cur,
    int i) {
  std::vector<VarId> disc, cont;
  for (VarId v : iface_cur) {
    if (dmn.transition.var(v).discrete()) disc.push_back(v);
    else cont.push_back(v);
  }
  std::vector<std::vector<VarId>> blocks;
  for (std::size_t k = 0; k < disc.size(); k += static_cast<std::size_t>(i + 1)) {
    std::vector<VarId> b(disc.begin() + static_cast<std::ptrdiff_t>(k),
                         disc.begin() + static_cast<std::ptrdiff_t>(
                                            std::min(disc.size(), k + static_cast<std::size_t>(i + 1))));
    blocks.push_back(std::move(b));
  }
  if (blocks.empty()) blocks.emplace_back();
  auto moral = dmn.transition.moral_graph();
  for (VarId c : cont) {
    int best = static_cast<int>(blocks.size()) - 1, best_overlap = -1;
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      int overlap = 0;
      for (VarId v : blocks[b])
        if (moral[static_cast<std::size_t>(c)].count(v)) ++overlap;
      if (overlap > best_overlap) {
        best_overlap = overlap;
        best = static_cast<int>(b);
      }
    }
    blocks[static_cast<std::size_t>(best)].push_back(c);
  }
  for (auto& b : blocks) std::sort(b.begin(), b.end());
  // drop empty block left by an all-continuous interface path
  std::vector<std::vector<VarId>> out;
  for (auto& b : blocks)
    if (!b.empty()) out.push_back(std::move(b));
  return out;
}

std::vector<std::vector<VarId>> transition_factor_scopes(
    const DynamicMixedNetwork& dmn) {
  std::vector<std::vector<VarId>> scopes;
  const auto& net = dmn.transition;
  for (VarId v = 0; v < net.size(); ++v)
    if (net.cpds[static_cast<std::size_t>(v)]) {
      std::vector<VarId> s = cpd_parents(*net.cpds[static_cast<std::size_t>(v)]);
      s.push_back(v);
      scopes.push_back(sorted_unique(std::move(s)));
    }
  for (const auto& c : net.constraints)
    scopes.push_back(sorted_unique(c.scope));
  return scopes;
}

std::vector<std::vector<VarId>> prior_factor_scopes(const MixedNetwork& net) {
  std::vector<std::vector<VarId>> scopes;
  for (VarId v = 0; v < net.size(); ++v)
    if (net.cpds[static_cast<std::size_t>(v)]) {
      std::vector<VarId> s = cpd_parents(*net.cpds[static_cast<std::size_t>(v)]);
      s.push_back(v);
      scopes.push_back(sorted_unique(std::move(s)));
    }
  for (const auto& c : net.constraints)
    scopes.push_back(sorted_unique(c.scope));
  return scopes;
}

}  // namespace

SlicedJoinGraph paste_interfaces(const DynamicMixedNetwork& dmn, int i) {
  if (i < 1) throw ParamError("i-bound must be >= 1");
  SlicedJoinGraph out;
  out.i_requested = i;

  auto iface = dmn.interface_vars();
  std::vector<VarId> iface_cur;
  for (VarId v : iface) iface_cur.push_back(dmn.cur_id(v));

  // usable i is capped by the treewidth of the slice and its interfaces
  ScopeGraph tg = scope_graph(dmn.transition);
  int cap = std::max(1, induced_width(tg, elimination_order(tg), true));
  out.i_used = std::min(i, cap);
  if (out.i_used < i) {
    std::ostringstream w;
    w << "i-bound clamped from " << i << " to slice treewidth cap " << cap;
    out.warnings.push_back(w.str());
  }

  out.blocks_cur = split_interface(dmn, iface_cur, out.i_used);
  for (const auto& b : out.blocks_cur) {
    std::vector<VarId> prev;
    for (VarId v : b) prev.push_back(v - dmn.n_state);
    out.blocks_prev.push_back(std::move(prev));
  }

  // transition-slice graph: real factors, then incoming blocks (prev ids),
  // then outgoing placeholders (cur ids)
  auto scopes = transition_factor_scopes(dmn);
  out.n_transition_factors = static_cast<int>(scopes.size());
  for (const auto& b : out.blocks_prev) {
    out.incoming_factor_slot.push_back(static_cast<int>(scopes.size()));
    scopes.push_back(b);
  }
  std::vector<int> outgoing_slots;
  for (const auto& b : out.blocks_cur) {
    outgoing_slots.push_back(static_cast<int>(scopes.size()));
    scopes.push_back(b);
  }

  // prev vars outside the interface never occur in transition factors; the
  // graph is built over occurring variables only
  ScopeGraph g = scope_graph_from_scopes(
      scopes, [&](VarId v) { return dmn.transition.var(v).continuous(); },
      tg.cont_arcs);
  auto order = elimination_order(g);
  JoinGraph tree = build_join_tree(g, scopes, order);
  out.graph = build_join_graph(tree, out.i_used);
  for (const auto& w : out.graph.warnings) out.warnings.push_back(w);

  for (std::size_t b = 0; b < out.blocks_cur.size(); ++b) {
    int slot = outgoing_slots[b];
    int cl = -1;
    for (const auto& c : out.graph.clusters)
      for (int f : c.factor_ids)
        if (f == slot) cl = c.id;
    if (cl < 0) throw InternalError("interface block not covered by any cluster");
    out.outgoing_cluster.push_back(cl);
  }

  // prior slice graph (state ids; blocks shifted)
  auto pscopes = prior_factor_scopes(dmn.prior);
  out.n_prior_factors = static_cast<int>(pscopes.size());
  std::vector<int> prior_slots;
  for (const auto& b : out.blocks_prev) {
    prior_slots.push_back(static_cast<int>(pscopes.size()));
    pscopes.push_back(b);  // prev ids coincide with state ids
  }
  ScopeGraph pg = scope_graph(dmn.prior);
  ScopeGraph pg2 = scope_graph_from_scopes(
      pscopes, [&](VarId v) { return dmn.prior.var(v).continuous(); },
      pg.cont_arcs);
  JoinGraph ptree = build_join_tree(pg2, pscopes, elimination_order(pg2));
  out.prior_graph = build_join_graph(ptree, out.i_used);
  for (std::size_t b = 0; b < out.blocks_prev.size(); ++b) {
    int slot = prior_slots[b];
    int cl = -1;
    for (const auto& c : out.prior_graph.clusters)
      for (int f : c.factor_ids)
        if (f == slot) cl = c.id;
    if (cl < 0)
      throw InternalError("interface block not covered in the prior graph");
    out.prior_outgoing_cluster.push_back(cl);
  }
  return out;
}

}  // namespace hdmn
