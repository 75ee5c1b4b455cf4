#include "hdmn/ijgp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>

namespace hdmn {

namespace {

HybridPotential vacuous_over_sorted(const std::vector<VarId>& vars,
                                    const FactorContext& ctx) {
  std::vector<VarId> ds, cs;
  std::vector<int> card;
  for (VarId v : vars) {
    if (ctx.is_cont.at(v)) {
      cs.push_back(v);
    } else {
      ds.push_back(v);
      card.push_back(ctx.card.at(v));
    }
  }
  HybridPotential p = HybridPotential::zero(ds, card, cs);
  const int m = p.cdim();
  for (auto& e : p.entries) {
    CanonicalGaussian c;
    c.h = Eigen::VectorXd::Zero(m);
    c.K = Eigen::MatrixXd::Zero(m, m);
    e = std::move(c);
  }
  return p;
}

// geometric damping in canonical parameters; entries with disagreeing ZERO
// patterns take the fresh value
HybridPotential damp(const HybridPotential& fresh, const HybridPotential& old,
                     double alpha) {
  if (fresh.dscope != old.dscope || fresh.cscope != old.cscope) return fresh;
  HybridPotential out = fresh;
  for (std::size_t k = 0; k < out.entries.size(); ++k) {
    auto& e = out.entries[k];
    const auto& eo = old.entries[k];
    if (!e || !eo) continue;
    e->g = alpha * e->g + (1.0 - alpha) * eo->g;
    e->h = alpha * e->h + (1.0 - alpha) * eo->h;
    e->K = alpha * e->K + (1.0 - alpha) * eo->K;
  }
  return out;
}

}  // namespace

CalibratedGraph ijgp_run(const JoinGraph& jg,
                         const std::vector<HybridPotential>& factors,
                         const FactorContext& ctx, const IjgpOptions& opts) {
  CalibratedGraph out;
  out.graph = jg;

  // variables still active after conditioning
  std::set<VarId> active;
  for (const auto& f : factors) {
    active.insert(f.dscope.begin(), f.dscope.end());
    active.insert(f.cscope.begin(), f.cscope.end());
  }

  std::vector<HybridPotential> cluster_prod(jg.clusters.size());
  for (std::size_t c = 0; c < jg.clusters.size(); ++c) {
    HybridPotential p = HybridPotential::identity();
    for (int f : jg.clusters[c].factor_ids)
      p = multiply(p, factors[static_cast<std::size_t>(f)]);
    cluster_prod[c] = std::move(p);
  }

  const std::size_t n_dir = 2 * jg.edges.size();
  std::vector<std::vector<VarId>> msg_scope(n_dir);
  for (std::size_t e = 0; e < jg.edges.size(); ++e) {
    std::vector<VarId> s;
    for (VarId v : jg.edges[e].separator)
      if (active.count(v)) s.push_back(v);
    msg_scope[2 * e] = s;
    msg_scope[2 * e + 1] = s;
  }
  std::vector<HybridPotential> msgs(n_dir);
  for (std::size_t d = 0; d < n_dir; ++d)
    msgs[d] = vacuous_over_sorted(msg_scope[d], ctx);

  auto adj = jg.adjacency();

  auto finish_message = [&](HybridPotential prod, std::size_t dir) {
    bool covered = true;
    for (VarId v : msg_scope[dir])
      if (!prod.in_dscope(v) && !prod.in_cscope(v)) covered = false;
    if (!covered) prod = multiply(prod, vacuous_over_sorted(msg_scope[dir], ctx));
    std::vector<VarId> elim;
    for (VarId v : prod.dscope)
      if (!std::binary_search(msg_scope[dir].begin(), msg_scope[dir].end(), v))
        elim.push_back(v);
    for (VarId v : prod.cscope)
      if (!std::binary_search(msg_scope[dir].begin(), msg_scope[dir].end(), v))
        elim.push_back(v);
    HybridPotential m;
    try {
      m = marginalize(prod, elim);
    } catch (const DegeneratePotentialError&) {
      // not enough incoming Gaussian information yet (vacuous neighbors);
      // send no information until upstream messages arrive
      return vacuous_over_sorted(msg_scope[dir], ctx);
    }
    // normalize for numeric stability; ZERO pattern is preserved
    double shift = -std::numeric_limits<double>::infinity();
    for (const auto& en : m.entries)
      if (en) shift = std::max(shift, en->g);
    if (shift != -std::numeric_limits<double>::infinity())
      for (auto& en : m.entries)
        if (en) en->g -= shift;
    return m;
  };

  // per cluster: incoming directions and the outgoing direction per edge slot
  std::vector<std::vector<std::size_t>> in_dirs(jg.clusters.size());
  std::vector<std::vector<std::size_t>> out_dirs(jg.clusters.size());
  for (std::size_t c = 0; c < jg.clusters.size(); ++c) {
    for (int ae : adj[c]) {
      const auto& edge = jg.edges[static_cast<std::size_t>(ae)];
      bool is_a = edge.a == static_cast<int>(c);
      in_dirs[c].push_back(is_a ? 2 * static_cast<std::size_t>(ae) + 1
                                : 2 * static_cast<std::size_t>(ae));
      out_dirs[c].push_back(is_a ? 2 * static_cast<std::size_t>(ae)
                                 : 2 * static_cast<std::size_t>(ae) + 1);
    }
  }

  double prev_residual = std::numeric_limits<double>::infinity();
  for (int iter = 1; iter <= opts.max_iters; ++iter) {
    std::vector<HybridPotential> next(n_dir);
    double residual = 0.0;
    // division-free leave-one-out products via prefix/suffix factorization
    for (std::size_t c = 0; c < jg.clusters.size(); ++c) {
      const auto& ins = in_dirs[c];
      const std::size_t k = ins.size();
      if (k == 0) continue;
      std::vector<HybridPotential> prefix(k + 1), suffix(k + 1);
      prefix[0] = cluster_prod[c];
      for (std::size_t i = 0; i < k; ++i)
        prefix[i + 1] = multiply(prefix[i], msgs[ins[i]]);
      suffix[k] = HybridPotential::identity();
      for (std::size_t i = k; i-- > 0;)
        suffix[i] = multiply(msgs[ins[i]], suffix[i + 1]);
      for (std::size_t i = 0; i < k; ++i) {
        std::size_t dir = out_dirs[c][i];
        next[dir] = finish_message(multiply(prefix[i], suffix[i + 1]), dir);
      }
    }
    for (std::size_t d = 0; d < n_dir; ++d) {
      double r = max_param_diff(next[d], msgs[d]);
      if (std::isinf(r)) r = 1.0;  // scope/zero-pattern change
      residual = std::max(residual, r);
    }
    bool apply_damping = iter > 10 && residual >= prev_residual;
    if (apply_damping)
      for (std::size_t d = 0; d < n_dir; ++d)
        next[d] = damp(next[d], msgs[d], 0.5);
    msgs = std::move(next);
    out.iterations = iter;
    out.max_residual = residual;
    prev_residual = residual;
    if (residual < opts.tol) break;
  }

  out.beliefs.resize(jg.clusters.size());
  for (std::size_t c = 0; c < jg.clusters.size(); ++c) {
    HybridPotential b = cluster_prod[c];
    for (int ae : adj[c]) {
      const auto& edge = jg.edges[static_cast<std::size_t>(ae)];
      std::size_t in_dir = edge.a == static_cast<int>(c)
                               ? 2 * static_cast<std::size_t>(ae) + 1
                               : 2 * static_cast<std::size_t>(ae);
      b = multiply(b, msgs[in_dir]);
    }
    if (b.all_zero() && !out.inconsistent) {
      out.inconsistent = true;
      out.inconsistent_cluster = static_cast<int>(c);
    }
    out.beliefs[c] = std::move(b);
  }
  out.messages = std::move(msgs);
  return out;
}

CalibratedGraph ijgp(const MixedNetwork& net, int i_bound, const Evidence& ev,
                     const IjgpOptions& opts) {
  net.validate();
  auto order = elimination_order(net);
  JoinGraph jt = build_join_tree(net, order);
  JoinGraph jg = build_join_graph(jt, i_bound);
  std::vector<HybridPotential> factors;
  for (const auto& f : factor_potentials(net)) factors.push_back(condition(f, ev));
  return ijgp_run(jg, factors, factor_context(net), opts);
}

Marginals read_marginals(const CalibratedGraph& cg,
                         const std::vector<VarId>& queries) {
  Marginals out;
  for (VarId v : queries) {
    auto it = cg.graph.home_cluster.find(v);
    if (it == cg.graph.home_cluster.end())
      throw ParamError("query variable absent from the join graph");
    const auto& belief = cg.beliefs[static_cast<std::size_t>(it->second)];
    if (belief.in_dscope(v)) {
      out.discrete[v] = discrete_marginal(belief, v);
    } else if (belief.in_cscope(v)) {
      GaussianMoments m = continuous_marginal(belief, v);
      m.log_weight = 0.0;
      out.continuous[v] = std::move(m);
    } else {
      throw ParamError("query variable conditioned out of its home cluster");
    }
  }
  return out;
}

// ---- IJGP(i)-S ----

namespace {

Evidence slice_conditioning(const DynamicMixedNetwork& dmn,
                            const std::vector<Evidence>& obs, int t) {
  const int n = dmn.n_state;
  Evidence ev;
  for (auto& [v, val] : obs[static_cast<std::size_t>(t)].discrete)
    ev.discrete[v + n] = val;
  for (auto& [v, val] : obs[static_cast<std::size_t>(t)].continuous)
    ev.continuous[v + n] = val;
  const Evidence& prev = obs[static_cast<std::size_t>(t - 1)];
  for (VarId s : dmn.interface_vars()) {
    auto di = prev.discrete.find(s);
    if (di != prev.discrete.end()) ev.discrete[s] = di->second;
    auto ci = prev.continuous.find(s);
    if (ci != prev.continuous.end()) ev.continuous[s] = ci->second;
  }
  return ev;
}

}  // namespace

IjgpSResult ijgp_s_filter(const DynamicMixedNetwork& dmn,
                          const std::vector<Evidence>& observations,
                          const IjgpSOptions& opts) {
  dmn.validate();
  if (observations.empty()) return {};
  const int n = dmn.n_state;

  SlicedJoinGraph tmpl = paste_interfaces(dmn, opts.i);
  IjgpSResult out;
  out.i_used = tmpl.i_used;
  out.warnings = tmpl.warnings;

  FactorContext prior_ctx = factor_context(dmn.prior);
  FactorContext trans_ctx = factor_context(dmn.transition);
  IjgpOptions run_opts{opts.max_iters, opts.tol};

  std::vector<HybridPotential> prior_factors = factor_potentials(dmn.prior);
  std::vector<HybridPotential> trans_factors = factor_potentials(dmn.transition);

  const int T = static_cast<int>(observations.size());
  std::vector<HybridPotential> forward_blocks;  // over prev ids for slice t+1
  for (int t = 0; t < T; ++t) {
    const JoinGraph& graph = t == 0 ? tmpl.prior_graph : tmpl.graph;
    const FactorContext& ctx = t == 0 ? prior_ctx : trans_ctx;
    const auto& outgoing_cluster =
        t == 0 ? tmpl.prior_outgoing_cluster : tmpl.outgoing_cluster;
    int cur_offset = t == 0 ? 0 : n;

    Evidence ev;
    std::vector<HybridPotential> factors;
    if (t == 0) {
      ev = observations[0];
      for (const auto& f : prior_factors) factors.push_back(condition(f, ev));
      // outgoing placeholder slots
      for (std::size_t b = 0; b < tmpl.blocks_prev.size(); ++b)
        factors.push_back(HybridPotential::identity());
    } else {
      ev = slice_conditioning(dmn, observations, t);
      for (const auto& f : trans_factors) factors.push_back(condition(f, ev));
      for (auto& blk : forward_blocks) factors.push_back(condition(blk, ev));
      for (std::size_t b = 0; b < tmpl.blocks_cur.size(); ++b)
        factors.push_back(HybridPotential::identity());
    }

    CalibratedGraph cg = ijgp_run(graph, factors, ctx, run_opts);
    if (cg.inconsistent)
      throw InconsistentEvidenceError("ijgp_s_filter: inconsistent slice", t);

    BeliefState bs;
    bs.t = t;
    std::vector<VarId> queries;
    for (VarId s = 0; s < n; ++s) {
      VarId cur = s + cur_offset;
      if (!ev.has(cur)) queries.push_back(cur);
    }
    Marginals mg = read_marginals(cg, queries);
    for (auto& [v, probs] : mg.discrete) bs.discrete[v - cur_offset] = probs;
    for (auto& [v, mo] : mg.continuous) bs.continuous[v - cur_offset] = mo;

    // forward interface blocks for the next slice
    const auto& blocks =
        t == 0 ? tmpl.blocks_prev /* state ids */ : tmpl.blocks_cur;
    std::vector<HybridPotential> next_blocks;
    HybridPotential iface_joint = HybridPotential::identity();
    for (std::size_t b = 0; b < blocks.size(); ++b) {
      const auto& belief =
          cg.beliefs[static_cast<std::size_t>(outgoing_cluster[b])];
      std::vector<VarId> elim;
      for (VarId v : belief.dscope)
        if (!std::binary_search(blocks[b].begin(), blocks[b].end(), v))
          elim.push_back(v);
      for (VarId v : belief.cscope)
        if (!std::binary_search(blocks[b].begin(), blocks[b].end(), v))
          elim.push_back(v);
      HybridPotential blk = marginalize(belief, elim);
      if (blk.all_zero())
        throw InconsistentEvidenceError("ijgp_s_filter: all-ZERO interface", t);
      blk = normalized(blk);
      iface_joint = multiply(iface_joint, blk);
      // shift to prev ids for the next slice
      std::map<VarId, VarId> to_prev;
      for (VarId v : blk.dscope) to_prev[v] = v - cur_offset;
      for (VarId v : blk.cscope) to_prev[v] = v - cur_offset;
      next_blocks.push_back(rename_scope(blk, to_prev));
    }
    std::map<VarId, VarId> to_state;
    for (VarId v : iface_joint.dscope) to_state[v] = v - cur_offset;
    for (VarId v : iface_joint.cscope) to_state[v] = v - cur_offset;
    bs.interface_potential = rename_scope(iface_joint, to_state);
    bs.interface_scope = dmn.interface_vars();
    forward_blocks = std::move(next_blocks);
    out.beliefs.push_back(std::move(bs));
  }
  return out;
}

}  // namespace hdmn
