#include "hdmn/rbpf.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <set>
#include <sstream>

namespace hdmn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();

enum RngPurpose : std::uint64_t {
  kSampleDraw = 1,
  kResample = 2,
  kPlainPf = 3,
};
}  // namespace

bool Particle::dead() const { return log_weight == kNegInf; }

// ---- ordered buckets ----

namespace {

// per-entry sampling score: exact mass when the Gaussian part is proper,
// otherwise the bare table weight (proposal-side only; weights stay exact)
HybridPotential discrete_profile(const HybridPotential& p) {
  HybridPotential out = HybridPotential::zero(p.dscope, p.card, {});
  for (std::size_t k = 0; k < p.entries.size(); ++k) {
    if (!p.entries[k]) continue;
    double score;
    try {
      score = entry_log_mass(*p.entries[k]);
    } catch (const DegeneratePotentialError&) {
      score = p.entries[k]->g;
    }
    out.entries[k] = CanonicalGaussian::scalar(score);
  }
  return out;
}

}  // namespace

OrderedBuckets build_ordered_buckets(const CalibratedGraph& cg,
                                     const std::vector<VarId>& sampling_order) {
  OrderedBuckets ob;
  ob.order = sampling_order;
  std::vector<VarId> earlier;
  for (VarId v : sampling_order) {
    // home cluster: most overlap with {v} and the already-ordered variables
    int best = -1, best_score = -1;
    for (const auto& c : cg.graph.clusters) {
      if (!std::binary_search(c.vars.begin(), c.vars.end(), v)) continue;
      int score = 0;
      for (VarId u : earlier)
        if (std::binary_search(c.vars.begin(), c.vars.end(), u)) ++score;
      if (score > best_score) {
        best_score = score;
        best = c.id;
      }
    }
    if (best < 0)
      throw InternalError("cutset variable missing from the proposal graph");
    HybridPotential table =
        discrete_profile(cg.beliefs[static_cast<std::size_t>(best)]);
    std::vector<VarId> elim;
    for (VarId u : table.dscope) {
      if (u == v) continue;
      if (std::find(earlier.begin(), earlier.end(), u) != earlier.end())
        continue;
      elim.push_back(u);
    }
    ob.tables.push_back(marginalize(table, elim));
    earlier.push_back(v);
  }
  return ob;
}

std::optional<std::pair<std::map<VarId, int>, double>> sample_cutset(
    const OrderedBuckets& ob, RngStream& rng) {
  std::map<VarId, int> values;
  double log_q = 0.0;
  for (std::size_t k = 0; k < ob.order.size(); ++k) {
    VarId v = ob.order[k];
    Evidence ev;
    for (VarId u : ob.tables[k].dscope)
      if (u != v && values.count(u)) ev.discrete[u] = values.at(u);
    HybridPotential cond = condition(ob.tables[k], ev);
    // cond is now a table over v alone
    int card = cond.card_of(v);
    std::vector<double> probs(static_cast<std::size_t>(card), 0.0);
    double max_g = kNegInf;
    for (int x = 0; x < card; ++x)
      if (cond.entries[static_cast<std::size_t>(x)])
        max_g = std::max(max_g, cond.entries[static_cast<std::size_t>(x)]->g);
    if (max_g == kNegInf) return std::nullopt;  // dead end
    double total = 0.0;
    for (int x = 0; x < card; ++x)
      if (cond.entries[static_cast<std::size_t>(x)]) {
        probs[static_cast<std::size_t>(x)] =
            std::exp(cond.entries[static_cast<std::size_t>(x)]->g - max_g);
        total += probs[static_cast<std::size_t>(x)];
      }
    int pick = rng.categorical(probs);
    values[v] = pick;
    log_q += std::log(probs[static_cast<std::size_t>(pick)] / total);
  }
  return std::make_pair(std::move(values), log_q);
}

std::vector<int> systematic_resample(const std::vector<double>& weights, int n,
                                     RngStream& rng) {
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw ParamError("systematic_resample: zero total weight");
  double step = total / n;
  double u = rng.uniform() * step;
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(n));
  double acc = 0.0;
  int src = -1;
  for (int j = 0; j < n; ++j) {
    double target = u + j * step;
    while (acc <= target && src + 1 < static_cast<int>(weights.size())) {
      ++src;
      acc += weights[static_cast<std::size_t>(src)];
    }
    out.push_back(src);
  }
  return out;
}

// ---- filter internals ----

namespace {

struct SliceTemplates {
  std::vector<VarId> iface;          // state ids
  std::vector<VarId> cutset;         // state ids (R)
  std::vector<VarId> remainder;      // state ids (Z)
  std::vector<VarId> cutset_iface;   // R intersect interface
  std::vector<VarId> sample_order_prior;  // state ids
  std::vector<VarId> sample_order_trans;  // cur ids
  JoinGraph prop_prior;
  JoinGraph prop_trans;
  std::vector<int> prop_src_prior;  // factor source index, -1 = belief slot
  std::vector<int> prop_src_trans;
  FactorContext prior_ctx, trans_ctx;
};

std::vector<std::vector<VarId>> net_factor_scopes(const MixedNetwork& net,
                                                  bool with_constraints) {
  std::vector<std::vector<VarId>> scopes;
  for (VarId v = 0; v < net.size(); ++v)
    if (net.cpds[static_cast<std::size_t>(v)]) {
      std::vector<VarId> s = cpd_parents(*net.cpds[static_cast<std::size_t>(v)]);
      s.push_back(v);
      std::sort(s.begin(), s.end());
      s.erase(std::unique(s.begin(), s.end()), s.end());
      scopes.push_back(std::move(s));
    }
  if (with_constraints)
    for (const auto& c : net.constraints) {
      std::vector<VarId> s = c.scope;
      std::sort(s.begin(), s.end());
      scopes.push_back(std::move(s));
    }
  return scopes;
}

// greedy slice cutset: candidates are current-slice discrete variables;
// conditioning also removes the previous-slice copy of interface members
std::vector<VarId> slice_w_cutset(const DynamicMixedNetwork& dmn, int w) {
  const int n = dmn.n_state;
  auto iface = dmn.interface_vars();
  auto scopes = net_factor_scopes(dmn.transition, true);
  if (!iface.empty()) {
    std::vector<VarId> clique;  // the analytic belief couples the interface
    for (VarId s : iface) clique.push_back(dmn.prev_id(s));
    scopes.push_back(clique);
  }
  ScopeGraph g = scope_graph_from_scopes(
      scopes, [&](VarId v) { return dmn.transition.var(v).continuous(); });
  ScopeGraph pg = scope_graph(dmn.prior);

  std::set<VarId> cut;  // state ids
  auto removed_set = [&](bool prior_side) {
    std::set<VarId> rm;
    for (VarId s : cut) {
      if (prior_side) {
        rm.insert(s);
      } else {
        rm.insert(dmn.cur_id(s));
        if (std::binary_search(iface.begin(), iface.end(), s))
          rm.insert(dmn.prev_id(s));
      }
    }
    return rm;
  };
  for (;;) {
    std::map<VarId, int> over_count;  // keyed by state id
    bool any_over = false;
    for (const auto& cl : elimination_clusters(g, removed_set(false))) {
      int nd = 0;
      for (VarId v : cl)
        if (!g.is_cont.at(v)) ++nd;
      if (nd - 1 > w) {
        any_over = true;
        for (VarId v : cl)
          if (v >= n && !g.is_cont.at(v)) over_count[v - n] += 1;
      }
    }
    for (const auto& cl : elimination_clusters(pg, removed_set(true))) {
      int nd = 0;
      for (VarId v : cl)
        if (!pg.is_cont.at(v)) ++nd;
      if (nd - 1 > w) {
        any_over = true;
        for (VarId v : cl)
          if (!pg.is_cont.at(v)) over_count[v] += 1;
      }
    }
    if (!any_over) break;
    if (over_count.empty()) break;  // over-width with no free discrete var
    VarId best = -1;
    int best_count = -1, best_deg = -1;
    for (auto& [s, cnt] : over_count) {
      int deg = static_cast<int>(g.adj.at(dmn.cur_id(s)).size());
      if (cnt > best_count || (cnt == best_count && deg > best_deg) ||
          (cnt == best_count && deg == best_deg && (best < 0 || s < best))) {
        best = s;
        best_count = cnt;
        best_deg = deg;
      }
    }
    cut.insert(best);
  }
  return {cut.begin(), cut.end()};
}

SliceTemplates build_templates(const DynamicMixedNetwork& dmn,
                               const RbpfOptions& opts) {
  SliceTemplates st;
  const int n = dmn.n_state;
  st.iface = dmn.interface_vars();
  st.cutset = slice_w_cutset(dmn, opts.w_bound);
  for (VarId s = 0; s < n; ++s)
    if (!std::binary_search(st.cutset.begin(), st.cutset.end(), s))
      st.remainder.push_back(s);
  for (VarId s : st.cutset)
    if (std::binary_search(st.iface.begin(), st.iface.end(), s))
      st.cutset_iface.push_back(s);
  st.prior_ctx = factor_context(dmn.prior);
  st.trans_ctx = factor_context(dmn.transition);

  bool with_constraints = opts.proposal == RbpfOptions::Proposal::Ijgp;

  // prior proposal graph
  {
    std::vector<std::vector<VarId>> scopes;
    int idx = 0;
    for (VarId v = 0; v < dmn.prior.size(); ++v)
      if (dmn.prior.cpds[static_cast<std::size_t>(v)]) {
        std::vector<VarId> s =
            cpd_parents(*dmn.prior.cpds[static_cast<std::size_t>(v)]);
        s.push_back(v);
        std::sort(s.begin(), s.end());
        s.erase(std::unique(s.begin(), s.end()), s.end());
        scopes.push_back(std::move(s));
        st.prop_src_prior.push_back(idx);
        ++idx;
      }
    int n_cpds = idx;
    (void)n_cpds;
    int c_idx = 0;
    for (const auto& c : dmn.prior.constraints) {
      if (with_constraints) {
        std::vector<VarId> s = c.scope;
        std::sort(s.begin(), s.end());
        scopes.push_back(std::move(s));
        st.prop_src_prior.push_back(idx + c_idx);
      }
      ++c_idx;
    }
    ScopeGraph g = scope_graph_from_scopes(
        scopes, [&](VarId v) { return dmn.prior.var(v).continuous(); },
        st.prior_ctx.cont_arcs);
    auto order = elimination_order(g);
    st.prop_prior = build_join_graph(build_join_tree(g, scopes, order),
                                     opts.i_bound);
    for (auto it = order.rbegin(); it != order.rend(); ++it)
      if (std::binary_search(st.cutset.begin(), st.cutset.end(), *it))
        st.sample_order_prior.push_back(*it);
  }

  // transition proposal graph: previous cutset copies conditioned away, the
  // analytic belief enters as one factor over the remaining interface
  {
    std::set<VarId> cond_prev;
    for (VarId s : st.cutset_iface) cond_prev.insert(dmn.prev_id(s));
    std::vector<std::vector<VarId>> scopes;
    int idx = 0;
    for (VarId v = 0; v < dmn.transition.size(); ++v)
      if (dmn.transition.cpds[static_cast<std::size_t>(v)]) {
        std::vector<VarId> s =
            cpd_parents(*dmn.transition.cpds[static_cast<std::size_t>(v)]);
        s.push_back(v);
        std::vector<VarId> red;
        for (VarId u : s)
          if (!cond_prev.count(u)) red.push_back(u);
        std::sort(red.begin(), red.end());
        red.erase(std::unique(red.begin(), red.end()), red.end());
        scopes.push_back(std::move(red));
        st.prop_src_trans.push_back(idx);
        ++idx;
      }
    int c_idx = 0;
    for (const auto& c : dmn.transition.constraints) {
      if (with_constraints) {
        std::vector<VarId> red;
        for (VarId u : c.scope)
          if (!cond_prev.count(u)) red.push_back(u);
        std::sort(red.begin(), red.end());
        scopes.push_back(std::move(red));
        st.prop_src_trans.push_back(idx + c_idx);
      }
      ++c_idx;
    }
    // belief slot
    std::vector<VarId> phi_scope;
    for (VarId s : st.iface)
      if (!std::binary_search(st.cutset.begin(), st.cutset.end(), s))
        phi_scope.push_back(dmn.prev_id(s));
    scopes.push_back(phi_scope);
    st.prop_src_trans.push_back(-1);

    ScopeGraph g = scope_graph_from_scopes(
        scopes, [&](VarId v) { return dmn.transition.var(v).continuous(); },
        st.trans_ctx.cont_arcs);
    auto order = elimination_order(g);
    st.prop_trans = build_join_graph(build_join_tree(g, scopes, order),
                                     opts.i_bound);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      if (*it < n) continue;
      VarId s = *it - n;
      if (std::binary_search(st.cutset.begin(), st.cutset.end(), s))
        st.sample_order_trans.push_back(*it);
    }
  }
  return st;
}

struct ExactStepEntry {
  double log_mass = kNegInf;
  std::shared_ptr<const HybridPotential> phi;
  std::shared_ptr<const Marginals> marginals;
};

// joint over Z given the sampled cutset: calibrate, read the slice marginals,
// extract the next interface belief
ExactStepEntry run_exact_step(const std::vector<HybridPotential>& base_factors,
                              const std::map<VarId, int>& r_cur,
                              const FactorContext& ctx, int cur_offset, int n,
                              const Evidence& slice_ev,
                              const std::vector<VarId>& iface,
                              const std::vector<VarId>& cutset) {
  ExactStepEntry out;
  Evidence rev;
  rev.discrete = r_cur;
  std::vector<HybridPotential> factors;
  factors.reserve(base_factors.size());
  for (const auto& f : base_factors) factors.push_back(condition(f, rev));
  try {
    CalibratedTree ct = jtc_calibrate(factors, ctx);
    out.log_mass = ct.log_mass;
    std::vector<VarId> queries;
    for (VarId s = 0; s < n; ++s) {
      VarId cur = s + cur_offset;
      if (slice_ev.has(cur) || r_cur.count(cur)) continue;
      if (ct.tree.home_cluster.count(cur)) queries.push_back(cur);
    }
    Marginals mg = read_marginals(ct, queries);
    Marginals shifted;
    shifted.log_mass = mg.log_mass;
    for (auto& [v, p] : mg.discrete) shifted.discrete[v - cur_offset] = p;
    for (auto& [v, m] : mg.continuous) shifted.continuous[v - cur_offset] = m;
    out.marginals = std::make_shared<const Marginals>(std::move(shifted));

    std::vector<VarId> keep;
    for (VarId s : iface) {
      if (std::binary_search(cutset.begin(), cutset.end(), s)) continue;
      VarId cur = s + cur_offset;
      if (!slice_ev.has(cur)) keep.push_back(cur);
    }
    HybridPotential phi = normalized(ve_keep(factors, keep, ctx));
    std::map<VarId, VarId> to_state;
    for (VarId v : phi.dscope) to_state[v] = v - cur_offset;
    for (VarId v : phi.cscope) to_state[v] = v - cur_offset;
    out.phi = std::make_shared<const HybridPotential>(
        rename_scope(phi, to_state));
  } catch (const InconsistentEvidenceError&) {
    out.log_mass = kNegInf;
  }
  return out;
}

HybridPotential point_mass_potential(const std::map<VarId, int>& values,
                                     const FactorContext& ctx) {
  std::vector<VarId> scope;
  std::vector<int> card;
  std::vector<int> tuple;
  for (auto& [v, x] : values) {
    scope.push_back(v);
    card.push_back(ctx.card.at(v));
    tuple.push_back(x);
  }
  HybridPotential p = HybridPotential::zero(scope, card, {});
  if (!values.empty())
    p.entries[p.index_of(tuple)] = CanonicalGaussian::scalar(0.0);
  else
    p.entries[0] = CanonicalGaussian::scalar(0.0);
  return p;
}

}  // namespace

RbpfResult ijgp_rbpf_filter(const DynamicMixedNetwork& dmn,
                            const std::vector<Evidence>& observations,
                            const RbpfOptions& opts) {
  dmn.validate();
  if (opts.n_particles < 1) throw ParamError("N must be >= 1");
  if (opts.i_bound < 1) throw ParamError("i must be >= 1");
  if (opts.w_bound < 0) throw ParamError("w must be >= 0");

  const int n = dmn.n_state;
  const int N = opts.n_particles;
  const int T = static_cast<int>(observations.size());
  SliceTemplates st = build_templates(dmn, opts);

  RbpfResult out;
  out.cutset.cutset = st.cutset;
  out.cutset.remainder = st.remainder;

  std::vector<HybridPotential> prior_factors = factor_potentials(dmn.prior);
  std::vector<HybridPotential> trans_factors = factor_potentials(dmn.transition);
  IjgpOptions prop_opts{opts.max_iters, opts.tol};

  std::vector<Particle> particles(static_cast<std::size_t>(N));
  std::int64_t total_rejections = 0;

  for (int t = 0; t < T; ++t) {
    auto t_start = std::chrono::steady_clock::now();
    const bool prior_slice = t == 0;
    const int cur_offset = prior_slice ? 0 : n;
    const FactorContext& ctx = prior_slice ? st.prior_ctx : st.trans_ctx;
    const JoinGraph& prop_graph = prior_slice ? st.prop_prior : st.prop_trans;
    const auto& prop_src = prior_slice ? st.prop_src_prior : st.prop_src_trans;
    const auto& sample_order =
        prior_slice ? st.sample_order_prior : st.sample_order_trans;

    Evidence ev;
    if (prior_slice) {
      ev = observations[0];
    } else {
      for (auto& [v, x] : observations[static_cast<std::size_t>(t)].discrete)
        ev.discrete[v + n] = x;
      for (auto& [v, x] : observations[static_cast<std::size_t>(t)].continuous)
        ev.continuous[v + n] = x;
      const Evidence& prev = observations[static_cast<std::size_t>(t - 1)];
      for (VarId s : st.iface) {
        auto di = prev.discrete.find(s);
        if (di != prev.discrete.end()) ev.discrete[s] = di->second;
        auto ci = prev.continuous.find(s);
        if (ci != prev.continuous.end()) ev.continuous[s] = ci->second;
      }
    }

    // group particles sharing (previous interface cutset values, belief)
    struct Group {
      std::vector<int> members;
      std::map<VarId, int> r_prev;  // prev ids
      std::shared_ptr<const HybridPotential> belief;
      bool dead = false;
      std::vector<HybridPotential> exact_base;  // conditioned on group context
      OrderedBuckets buckets;
      std::map<std::vector<int>, ExactStepEntry> cache;
    };
    std::vector<Group> groups;
    if (prior_slice) {
      groups.emplace_back();
      for (int k = 0; k < N; ++k) groups[0].members.push_back(k);
    } else {
      std::map<std::pair<std::vector<int>, const HybridPotential*>, int> index;
      for (int k = 0; k < N; ++k) {
        std::vector<int> key_vals;
        for (VarId s : st.cutset_iface)
          key_vals.push_back(particles[static_cast<std::size_t>(k)].cutset.at(s));
        auto key = std::make_pair(
            key_vals, particles[static_cast<std::size_t>(k)].belief.get());
        auto it = index.find(key);
        if (it == index.end()) {
          Group g;
          for (std::size_t j = 0; j < st.cutset_iface.size(); ++j)
            g.r_prev[dmn.prev_id(st.cutset_iface[j])] = key_vals[j];
          g.belief = particles[static_cast<std::size_t>(k)].belief;
          index.emplace(key, static_cast<int>(groups.size()));
          groups.push_back(std::move(g));
          it = index.find(key);
        }
        groups[static_cast<std::size_t>(it->second)].members.push_back(k);
      }
    }

    std::int64_t slice_rejections = 0, slice_draws = 0;

    for (auto& g : groups) {
      Evidence gev = ev;
      for (auto& [v, x] : g.r_prev) gev.discrete[v] = x;

      // exact-step base factors: all CPDs and constraints plus the belief
      g.exact_base.clear();
      const auto& net_factors = prior_slice ? prior_factors : trans_factors;
      for (const auto& f : net_factors) g.exact_base.push_back(condition(f, gev));
      if (!prior_slice && g.belief)
        g.exact_base.push_back(condition(*g.belief, gev));

      // proposal
      std::vector<HybridPotential> prop_factors;
      for (int src : prop_src) {
        if (src >= 0)
          prop_factors.push_back(condition(net_factors[static_cast<std::size_t>(src)], gev));
        else
          prop_factors.push_back(condition(*g.belief, gev));
      }
      CalibratedGraph cg = ijgp_run(prop_graph, prop_factors, ctx, prop_opts);
      if (cg.inconsistent) {
        g.dead = true;
        continue;
      }
      try {
        g.buckets = build_ordered_buckets(cg, sample_order);
      } catch (const InconsistentEvidenceError&) {
        g.dead = true;
      }
    }

    // extend each particle
    std::vector<double> slice_log_w(static_cast<std::size_t>(N), kNegInf);
    for (std::size_t gi = 0; gi < groups.size(); ++gi) {
      auto& g = groups[gi];
      for (int k : g.members) {
        auto& p = particles[static_cast<std::size_t>(k)];
        if (g.dead) {
          p.log_weight = kNegInf;
          ++slice_rejections;
          continue;
        }
        RngStream rng(RngStream::derive_key(
            opts.seed, static_cast<std::uint64_t>(t),
            static_cast<std::uint64_t>(k), kSampleDraw));
        double incr = kNegInf;
        std::map<VarId, int> r_state;
        ExactStepEntry entry;
        for (int attempt = 0; attempt <= opts.retry_cap; ++attempt) {
          auto draw = sample_cutset(g.buckets, rng);
          ++slice_draws;
          if (!draw) {
            ++slice_rejections;
            continue;  // dead end; retry
          }
          const auto& [r_cur, log_q] = *draw;
          std::vector<int> key;
          for (VarId v : g.buckets.order) key.push_back(r_cur.at(v));
          auto it = g.cache.find(key);
          if (it == g.cache.end()) {
            it = g.cache
                     .emplace(key, run_exact_step(g.exact_base, r_cur, ctx,
                                                  cur_offset, n, ev, st.iface,
                                                  st.cutset))
                     .first;
          }
          if (it->second.log_mass == kNegInf) {
            ++slice_rejections;  // constraint-violating sample: zero target mass
            incr = kNegInf;
            break;  // rejected, particle dies this step
          }
          entry = it->second;
          incr = it->second.log_mass - log_q;
          for (auto& [v, x] : r_cur) r_state[v - cur_offset] = x;
          break;
        }
        if (incr == kNegInf) {
          p.log_weight = kNegInf;
          continue;
        }
        p.cutset = std::move(r_state);
        p.belief = entry.phi;
        p.slice_marginals = entry.marginals;
        p.log_weight = (opts.adaptive_resample ? p.log_weight : 0.0) + incr;
      }
    }
    total_rejections += slice_rejections;

    // normalized weights and ESS
    std::vector<double> lw(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k)
      lw[static_cast<std::size_t>(k)] = particles[static_cast<std::size_t>(k)].log_weight;
    double z = logsumexp(lw);
    if (z == kNegInf)
      throw FilterFailureError("ijgp_rbpf_filter: no live particles", t,
                               total_rejections);
    std::vector<double> w(static_cast<std::size_t>(N), 0.0);
    double sum_sq = 0.0;
    int live = 0;
    for (int k = 0; k < N; ++k) {
      if (lw[static_cast<std::size_t>(k)] == kNegInf) continue;
      w[static_cast<std::size_t>(k)] = std::exp(lw[static_cast<std::size_t>(k)] - z);
      sum_sq += w[static_cast<std::size_t>(k)] * w[static_cast<std::size_t>(k)];
      ++live;
    }
    double ess = 1.0 / sum_sq;
    out.log_likelihood += z - std::log(static_cast<double>(N));

    // belief state from the weighted set
    BeliefState bs;
    bs.t = t;
    for (VarId s = 0; s < n; ++s) {
      VarId cur = s + cur_offset;
      if (ev.has(cur)) continue;
      const Variable& var = dmn.prior.var(s);
      if (var.discrete()) {
        std::vector<double> acc(static_cast<std::size_t>(var.domain_size), 0.0);
        bool any = false;
        if (std::binary_search(st.cutset.begin(), st.cutset.end(), s)) {
          for (int k = 0; k < N; ++k) {
            if (w[static_cast<std::size_t>(k)] == 0.0) continue;
            acc[static_cast<std::size_t>(
                particles[static_cast<std::size_t>(k)].cutset.at(s))] +=
                w[static_cast<std::size_t>(k)];
            any = true;
          }
        } else {
          for (int k = 0; k < N; ++k) {
            const auto& p = particles[static_cast<std::size_t>(k)];
            if (w[static_cast<std::size_t>(k)] == 0.0 || !p.slice_marginals)
              continue;
            auto it = p.slice_marginals->discrete.find(s);
            if (it == p.slice_marginals->discrete.end()) continue;
            for (std::size_t x = 0; x < acc.size(); ++x)
              acc[x] += w[static_cast<std::size_t>(k)] * it->second[x];
            any = true;
          }
        }
        if (any) bs.discrete[s] = std::move(acc);
      } else {
        double mean = 0.0, m2 = 0.0;
        bool any = false;
        for (int k = 0; k < N; ++k) {
          const auto& p = particles[static_cast<std::size_t>(k)];
          if (w[static_cast<std::size_t>(k)] == 0.0 || !p.slice_marginals)
            continue;
          auto it = p.slice_marginals->continuous.find(s);
          if (it == p.slice_marginals->continuous.end()) continue;
          double mu = it->second.mean(0);
          double va = it->second.cov(0, 0);
          mean += w[static_cast<std::size_t>(k)] * mu;
          m2 += w[static_cast<std::size_t>(k)] * (va + mu * mu);
          any = true;
        }
        if (any) {
          GaussianMoments mo;
          mo.log_weight = 0.0;
          mo.mean = Eigen::VectorXd::Constant(1, mean);
          mo.cov = Eigen::MatrixXd::Constant(1, 1, m2 - mean * mean);
          bs.continuous[s] = std::move(mo);
        }
      }
    }
    // interface potential: weighted mixture of per-particle joints
    {
      std::vector<std::pair<double, HybridPotential>> comps;
      for (int k = 0; k < N; ++k) {
        const auto& p = particles[static_cast<std::size_t>(k)];
        if (w[static_cast<std::size_t>(k)] == 0.0 || !p.belief) continue;
        std::map<VarId, int> iface_cut;
        for (VarId s : st.cutset_iface) iface_cut[s] = p.cutset.at(s);
        HybridPotential joint = multiply(
            *p.belief, point_mass_potential(iface_cut, st.prior_ctx));
        comps.emplace_back(std::log(w[static_cast<std::size_t>(k)]),
                           std::move(joint));
      }
      if (!comps.empty()) {
        std::vector<std::pair<double, const HybridPotential*>> views;
        views.reserve(comps.size());
        for (auto& [lwk, pot] : comps) views.emplace_back(lwk, &pot);
        bs.interface_potential = weighted_mixture(views);
        bs.interface_scope = st.iface;
      }
    }
    out.beliefs.push_back(std::move(bs));

    auto t_end = std::chrono::steady_clock::now();
    SliceMetrics sm;
    sm.t = t;
    sm.ess = ess;
    sm.rejections = slice_rejections;
    sm.draws = slice_draws;
    sm.live = live;
    sm.wall_ms =
        std::chrono::duration<double, std::milli>(t_end - t_start).count();
    out.metrics.push_back(sm);

    ParticleSet ps;
    ps.particles = particles;
    ps.ess = ess;
    ps.rejections = slice_rejections;
    ps.rng_stream = RngStream::derive_key(opts.seed,
                                          static_cast<std::uint64_t>(t), 0,
                                          kSampleDraw);
    out.trace.push_back(std::move(ps));

    // resample (every step by default, matching the SIS template)
    bool do_resample = !opts.adaptive_resample || ess < N / 2.0;
    if (do_resample) {
      RngStream rng(RngStream::derive_key(opts.seed,
                                          static_cast<std::uint64_t>(t), 0,
                                          kResample));
      std::vector<int> src = systematic_resample(w, N, rng);
      std::vector<Particle> next;
      next.reserve(static_cast<std::size_t>(N));
      for (int s : src) {
        Particle p = particles[static_cast<std::size_t>(s)];
        p.log_weight = 0.0;
        next.push_back(std::move(p));
      }
      particles = std::move(next);
    }
  }
  return out;
}

// ---- plain particle filter ----

PlainPfResult plain_pf_filter(const DynamicMixedNetwork& dmn,
                              const std::vector<Evidence>& observations,
                              int n_particles, std::uint64_t seed) {
  dmn.validate();
  if (n_particles < 1) throw ParamError("N must be >= 1");
  const int n = dmn.n_state;
  const int N = n_particles;
  const int T = static_cast<int>(observations.size());

  PlainPfResult out;
  std::vector<Assignment> states(static_cast<std::size_t>(N));
  std::int64_t total_rejections = 0;

  auto cpd_log_density = [](const MixedNetwork& net, VarId v,
                            const Assignment& a) {
    const auto& cpd = net.cpds[static_cast<std::size_t>(v)];
    if (const auto* d = std::get_if<DiscreteCPD>(&*cpd)) {
      std::size_t idx = 0;
      for (VarId p : d->parents)
        idx = idx * static_cast<std::size_t>(net.var(p).domain_size) +
              static_cast<std::size_t>(a.discrete.at(p));
      idx = idx * static_cast<std::size_t>(net.var(v).domain_size) +
            static_cast<std::size_t>(a.discrete.at(v));
      double prob = d->table[idx];
      return prob > 0.0 ? std::log(prob) : kNegInf;
    }
    const auto& lg = std::get<LinearGaussianCPD>(*cpd);
    std::size_t row = 0;
    for (VarId p : lg.discrete_parents)
      row = row * static_cast<std::size_t>(net.var(p).domain_size) +
            static_cast<std::size_t>(a.discrete.at(p));
    const auto& r = lg.rows[row];
    double mean = r.intercept;
    for (std::size_t z = 0; z < lg.continuous_parents.size(); ++z)
      mean += r.coeffs[z] * a.continuous.at(lg.continuous_parents[z]);
    double d2 = a.continuous.at(v) - mean;
    return -0.5 * (d2 * d2 / r.variance +
                   std::log(2.0 * std::numbers::pi * r.variance));
  };

  for (int t = 0; t < T; ++t) {
    auto t_start = std::chrono::steady_clock::now();
    const bool prior_slice = t == 0;
    const MixedNetwork& net = prior_slice ? dmn.prior : dmn.transition;
    const Evidence& obs = observations[static_cast<std::size_t>(t)];
    const int cur_offset = prior_slice ? 0 : n;

    std::vector<double> lw(static_cast<std::size_t>(N), kNegInf);
    std::int64_t slice_rejections = 0;
    std::vector<Assignment> next(static_cast<std::size_t>(N));
    for (int k = 0; k < N; ++k) {
      RngStream rng(RngStream::derive_key(seed, static_cast<std::uint64_t>(t),
                                          static_cast<std::uint64_t>(k),
                                          kPlainPf));
      Assignment given;
      for (auto& [v, x] : obs.discrete) given.discrete[v + cur_offset] = x;
      for (auto& [v, x] : obs.continuous) given.continuous[v + cur_offset] = x;
      if (!prior_slice) {
        const auto& prev = states[static_cast<std::size_t>(k)];
        for (auto& [v, x] : prev.discrete) given.discrete[v] = x;
        for (auto& [v, x] : prev.continuous) given.continuous[v] = x;
      }
      Assignment full = sample_forward(net, given, rng);
      if (!satisfies_constraints(net, full.discrete)) {
        ++slice_rejections;
        continue;
      }
      double ll = 0.0;
      for (auto& [v, x] : obs.discrete)
        ll += cpd_log_density(net, v + cur_offset, full);
      for (auto& [v, x] : obs.continuous)
        ll += cpd_log_density(net, v + cur_offset, full);
      lw[static_cast<std::size_t>(k)] = ll;
      Assignment state;
      for (VarId s = 0; s < n; ++s) {
        VarId cur = s + cur_offset;
        if (full.discrete.count(cur)) state.discrete[s] = full.discrete.at(cur);
        if (full.continuous.count(cur))
          state.continuous[s] = full.continuous.at(cur);
      }
      next[static_cast<std::size_t>(k)] = std::move(state);
    }
    total_rejections += slice_rejections;
    double z = logsumexp(lw);
    if (z == kNegInf)
      throw FilterFailureError("plain_pf_filter: no live particles", t,
                               total_rejections);
    std::vector<double> w(static_cast<std::size_t>(N), 0.0);
    double sum_sq = 0.0;
    int live = 0;
    for (int k = 0; k < N; ++k) {
      if (lw[static_cast<std::size_t>(k)] == kNegInf) continue;
      w[static_cast<std::size_t>(k)] = std::exp(lw[static_cast<std::size_t>(k)] - z);
      sum_sq += w[static_cast<std::size_t>(k)] * w[static_cast<std::size_t>(k)];
      ++live;
    }

    BeliefState bs;
    bs.t = t;
    for (VarId s = 0; s < n; ++s) {
      if (obs.has(s)) continue;
      const Variable& var = dmn.prior.var(s);
      if (var.discrete()) {
        std::vector<double> acc(static_cast<std::size_t>(var.domain_size), 0.0);
        for (int k = 0; k < N; ++k)
          if (w[static_cast<std::size_t>(k)] > 0.0)
            acc[static_cast<std::size_t>(
                next[static_cast<std::size_t>(k)].discrete.at(s))] +=
                w[static_cast<std::size_t>(k)];
        bs.discrete[s] = std::move(acc);
      } else {
        double mean = 0.0, m2 = 0.0;
        for (int k = 0; k < N; ++k)
          if (w[static_cast<std::size_t>(k)] > 0.0) {
            double x = next[static_cast<std::size_t>(k)].continuous.at(s);
            mean += w[static_cast<std::size_t>(k)] * x;
            m2 += w[static_cast<std::size_t>(k)] * x * x;
          }
        GaussianMoments mo;
        mo.log_weight = 0.0;
        mo.mean = Eigen::VectorXd::Constant(1, mean);
        mo.cov = Eigen::MatrixXd::Constant(1, 1, std::max(0.0, m2 - mean * mean));
        bs.continuous[s] = std::move(mo);
      }
    }
    out.beliefs.push_back(std::move(bs));

    auto t_end = std::chrono::steady_clock::now();
    SliceMetrics sm;
    sm.t = t;
    sm.ess = 1.0 / sum_sq;
    sm.rejections = slice_rejections;
    sm.draws = N;
    sm.live = live;
    sm.wall_ms =
        std::chrono::duration<double, std::milli>(t_end - t_start).count();
    out.metrics.push_back(sm);

    RngStream rng(RngStream::derive_key(seed, static_cast<std::uint64_t>(t),
                                        1, kResample));
    std::vector<int> src = systematic_resample(w, N, rng);
    std::vector<Assignment> resampled;
    resampled.reserve(static_cast<std::size_t>(N));
    for (int s : src) resampled.push_back(next[static_cast<std::size_t>(s)]);
    states = std::move(resampled);
  }
  return out;
}

}  // namespace hdmn
