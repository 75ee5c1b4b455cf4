#include "hdmn/exact.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace hdmn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;
}  // namespace

// ---- brute force ----

namespace {

struct ContJoint {
  std::vector<VarId> vars;  // sorted
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// joint Gaussian over all continuous variables for a fixed discrete
// configuration: x = A x + b + noise, solved along a topological order
ContJoint continuous_joint(const MixedNetwork& net,
                           const std::map<VarId, int>& disc) {
  ContJoint j;
  j.vars = net.continuous_vars();
  const int m = static_cast<int>(j.vars.size());
  std::map<VarId, int> pos;
  for (int k = 0; k < m; ++k) pos[j.vars[static_cast<std::size_t>(k)]] = k;

  Eigen::MatrixXd A = Eigen::MatrixXd::Zero(m, m);
  Eigen::VectorXd b = Eigen::VectorXd::Zero(m);
  Eigen::VectorXd q = Eigen::VectorXd::Zero(m);
  for (VarId v : j.vars) {
    const auto& lg =
        std::get<LinearGaussianCPD>(*net.cpds[static_cast<std::size_t>(v)]);
    std::size_t row = 0;
    for (VarId p : lg.discrete_parents)
      row = row * static_cast<std::size_t>(net.var(p).domain_size) +
            static_cast<std::size_t>(disc.at(p));
    const auto& r = lg.rows[row];
    b(pos[v]) = r.intercept;
    q(pos[v]) = r.variance;
    for (std::size_t k = 0; k < lg.continuous_parents.size(); ++k)
      A(pos[v], pos[lg.continuous_parents[k]]) = r.coeffs[k];
  }
  Eigen::MatrixXd M = Eigen::MatrixXd::Identity(m, m) - A;
  Eigen::MatrixXd Minv = M.inverse();  // triangular up to permutation
  j.mean = Minv * b;
  j.cov = Minv * q.asDiagonal() * Minv.transpose();
  j.cov = 0.5 * (j.cov + j.cov.transpose());
  return j;
}

// Gaussian conditioning in moment form: returns log N(y; mean_O, cov_OO) and
// the posterior over the kept positions.
double condition_joint(ContJoint& j, const std::vector<int>& obs_pos,
                       const Eigen::VectorXd& y) {
  const int m = static_cast<int>(j.mean.size());
  const int no = static_cast<int>(obs_pos.size());
  if (no == 0) return 0.0;
  std::vector<int> keep_pos;
  for (int k = 0; k < m; ++k)
    if (std::find(obs_pos.begin(), obs_pos.end(), k) == obs_pos.end())
      keep_pos.push_back(k);
  const int nk = static_cast<int>(keep_pos.size());
  Eigen::VectorXd mu_o(no), mu_k(nk);
  Eigen::MatrixXd S_oo(no, no), S_ko(nk, no), S_kk(nk, nk);
  for (int i = 0; i < no; ++i) {
    mu_o(i) = j.mean(obs_pos[static_cast<std::size_t>(i)]);
    for (int l = 0; l < no; ++l)
      S_oo(i, l) = j.cov(obs_pos[static_cast<std::size_t>(i)],
                         obs_pos[static_cast<std::size_t>(l)]);
  }
  for (int i = 0; i < nk; ++i) {
    mu_k(i) = j.mean(keep_pos[static_cast<std::size_t>(i)]);
    for (int l = 0; l < no; ++l)
      S_ko(i, l) = j.cov(keep_pos[static_cast<std::size_t>(i)],
                         obs_pos[static_cast<std::size_t>(l)]);
    for (int l = 0; l < nk; ++l)
      S_kk(i, l) = j.cov(keep_pos[static_cast<std::size_t>(i)],
                         keep_pos[static_cast<std::size_t>(l)]);
  }
  double logdet = 0.0;
  Eigen::MatrixXd S_oo_inv = psd_inverse(S_oo, &logdet);
  Eigen::VectorXd d = y - mu_o;
  double loglik = -0.5 * (no * kLog2Pi + logdet + d.dot(S_oo_inv * d));

  std::vector<VarId> kept_vars;
  for (int k : keep_pos) kept_vars.push_back(j.vars[static_cast<std::size_t>(k)]);
  j.vars = kept_vars;
  j.mean = mu_k + S_ko * S_oo_inv * d;
  j.cov = S_kk - S_ko * S_oo_inv * S_ko.transpose();
  j.cov = 0.5 * (j.cov + j.cov.transpose());
  return loglik;
}

template <typename Fn>
void for_each_discrete_config(const MixedNetwork& net, const Evidence& ev,
                              Fn&& fn) {
  std::vector<VarId> disc = net.discrete_vars();
  std::vector<VarId> free_vars;
  std::map<VarId, int> assign;
  std::size_t total = 1;
  for (VarId v : disc) {
    auto it = ev.discrete.find(v);
    if (it != ev.discrete.end()) {
      assign[v] = it->second;
    } else {
      free_vars.push_back(v);
      total *= static_cast<std::size_t>(net.var(v).domain_size);
      if (total > 1000000)
        throw ParamError("brute force: discrete space exceeds 10^6 configurations");
    }
  }
  std::vector<int> tuple(free_vars.size(), 0);
  for (;;) {
    for (std::size_t k = 0; k < free_vars.size(); ++k)
      assign[free_vars[k]] = tuple[k];
    fn(assign);
    int k = static_cast<int>(free_vars.size()) - 1;
    for (; k >= 0; --k) {
      if (++tuple[static_cast<std::size_t>(k)] <
          net.var(free_vars[static_cast<std::size_t>(k)]).domain_size)
        break;
      tuple[static_cast<std::size_t>(k)] = 0;
    }
    if (k < 0) break;
  }
}

double discrete_log_weight(const MixedNetwork& net,
                           const std::map<VarId, int>& disc) {
  for (const auto& c : net.constraints) {
    std::vector<int> t;
    t.reserve(c.scope.size());
    for (VarId v : c.scope) t.push_back(disc.at(v));
    if (!c.allows(t)) return kNegInf;
  }
  double lw = 0.0;
  for (VarId v = 0; v < net.size(); ++v) {
    const auto& cpd = net.cpds[static_cast<std::size_t>(v)];
    if (!cpd || !std::holds_alternative<DiscreteCPD>(*cpd)) continue;
    const auto& d = std::get<DiscreteCPD>(*cpd);
    std::size_t idx = 0;
    for (VarId p : d.parents)
      idx = idx * static_cast<std::size_t>(net.var(p).domain_size) +
            static_cast<std::size_t>(disc.at(p));
    idx = idx * static_cast<std::size_t>(net.var(v).domain_size) +
          static_cast<std::size_t>(disc.at(v));
    if (d.table[idx] <= 0.0) return kNegInf;
    lw += std::log(d.table[idx]);
  }
  return lw;
}

}  // namespace

Marginals brute_force_marginals(const MixedNetwork& net, const Evidence& ev) {
  net.validate();
  std::vector<VarId> cont = net.continuous_vars();
  std::vector<int> obs_pos;
  std::vector<double> obs_vals;
  std::vector<VarId> kept_cont;
  for (std::size_t k = 0; k < cont.size(); ++k) {
    auto it = ev.continuous.find(cont[k]);
    if (it != ev.continuous.end()) {
      obs_pos.push_back(static_cast<int>(k));
      obs_vals.push_back(it->second);
    } else {
      kept_cont.push_back(cont[k]);
    }
  }
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(
      obs_vals.data(), static_cast<int>(obs_vals.size()));

  struct Config {
    std::map<VarId, int> disc;
    double log_w;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
  };
  std::vector<Config> configs;
  std::vector<double> log_ws;
  for_each_discrete_config(net, ev, [&](const std::map<VarId, int>& disc) {
    double lw = discrete_log_weight(net, disc);
    if (lw == kNegInf) return;
    Config c;
    c.disc = disc;
    if (!cont.empty()) {
      ContJoint j = continuous_joint(net, disc);
      lw += condition_joint(j, obs_pos, y);
      c.mean = j.mean;
      c.cov = j.cov;
    }
    if (lw == kNegInf || std::isnan(lw)) return;
    c.log_w = lw;
    log_ws.push_back(lw);
    configs.push_back(std::move(c));
  });

  double z = logsumexp(log_ws);
  if (z == kNegInf)
    throw InconsistentEvidenceError(
        "brute force: evidence/constraints have zero mass");

  Marginals out;
  out.log_mass = z;
  for (VarId v : net.discrete_vars()) {
    if (ev.discrete.count(v)) continue;
    out.discrete[v] = std::vector<double>(
        static_cast<std::size_t>(net.var(v).domain_size), 0.0);
  }
  std::map<VarId, int> cont_pos;
  for (std::size_t k = 0; k < kept_cont.size(); ++k)
    cont_pos[kept_cont[k]] = static_cast<int>(k);
  std::map<VarId, double> mean_acc, m2_acc;
  for (VarId v : kept_cont) {
    mean_acc[v] = 0.0;
    m2_acc[v] = 0.0;
  }
  for (const auto& c : configs) {
    double w = std::exp(c.log_w - z);
    for (auto& [v, probs] : out.discrete)
      probs[static_cast<std::size_t>(c.disc.at(v))] += w;
    for (VarId v : kept_cont) {
      int k = cont_pos[v];
      mean_acc[v] += w * c.mean(k);
      m2_acc[v] += w * (c.cov(k, k) + c.mean(k) * c.mean(k));
    }
  }
  for (VarId v : kept_cont) {
    GaussianMoments m;
    m.log_weight = 0.0;
    m.mean = Eigen::VectorXd::Constant(1, mean_acc[v]);
    m.cov = Eigen::MatrixXd::Constant(1, 1,
                                      m2_acc[v] - mean_acc[v] * mean_acc[v]);
    out.continuous[v] = std::move(m);
  }
  return out;
}

std::map<std::vector<int>, double> brute_force_discrete_joint(
    const MixedNetwork& net, const Evidence& ev) {
  std::vector<VarId> cont = net.continuous_vars();
  std::vector<int> obs_pos;
  std::vector<double> obs_vals;
  for (std::size_t k = 0; k < cont.size(); ++k) {
    auto it = ev.continuous.find(cont[k]);
    if (it != ev.continuous.end()) {
      obs_pos.push_back(static_cast<int>(k));
      obs_vals.push_back(it->second);
    }
  }
  Eigen::VectorXd y = Eigen::Map<Eigen::VectorXd>(
      obs_vals.data(), static_cast<int>(obs_vals.size()));

  std::map<std::vector<int>, double> weights;
  std::vector<double> log_ws;
  std::vector<std::vector<int>> keys;
  for_each_discrete_config(net, ev, [&](const std::map<VarId, int>& disc) {
    double lw = discrete_log_weight(net, disc);
    if (lw != kNegInf && !cont.empty()) {
      ContJoint j = continuous_joint(net, disc);
      lw += condition_joint(j, obs_pos, y);
    }
    std::vector<int> key;
    key.reserve(disc.size());
    for (auto& [v, val] : disc) key.push_back(val);
    keys.push_back(key);
    log_ws.push_back(lw);
  });
  double z = logsumexp(log_ws);
  if (z == kNegInf)
    throw InconsistentEvidenceError("brute force: zero total mass");
  for (std::size_t k = 0; k < keys.size(); ++k)
    weights[keys[k]] =
        log_ws[k] == kNegInf ? 0.0 : std::exp(log_ws[k] - z);
  return weights;
}

// ---- join-tree calibration over a factor list ----

FactorContext factor_context(const MixedNetwork& net) {
  FactorContext ctx;
  for (const auto& v : net.variables) {
    ctx.is_cont[v.id] = v.continuous();
    if (v.discrete()) ctx.card[v.id] = v.domain_size;
  }
  for (VarId v = 0; v < net.size(); ++v) {
    if (!net.var(v).continuous()) continue;
    for (VarId p : net.parents[static_cast<std::size_t>(v)])
      if (net.var(p).continuous()) ctx.cont_arcs.emplace_back(p, v);
  }
  return ctx;
}

namespace {

HybridPotential vacuous_over(const std::vector<VarId>& vars,
                             const FactorContext& ctx) {
  std::vector<VarId> ds, cs;
  std::vector<int> card;
  std::vector<VarId> sorted = vars;
  std::sort(sorted.begin(), sorted.end());
  for (VarId v : sorted) {
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
    c.g = 0.0;
    c.h = Eigen::VectorXd::Zero(m);
    c.K = Eigen::MatrixXd::Zero(m, m);
    e = std::move(c);
  }
  return p;
}

std::vector<std::vector<VarId>> scopes_of(
    const std::vector<HybridPotential>& factors) {
  std::vector<std::vector<VarId>> scopes;
  scopes.reserve(factors.size());
  for (const auto& f : factors) {
    std::vector<VarId> s = f.dscope;
    s.insert(s.end(), f.cscope.begin(), f.cscope.end());
    std::sort(s.begin(), s.end());
    scopes.push_back(std::move(s));
  }
  return scopes;
}

}  // namespace

CalibratedTree jtc_calibrate(const std::vector<HybridPotential>& factors,
                             const FactorContext& ctx) {
  CalibratedTree out;
  auto scopes = scopes_of(factors);
  ScopeGraph g = scope_graph_from_scopes(
      scopes, [&](VarId v) { return ctx.is_cont.at(v); }, ctx.cont_arcs);

  if (g.vars.empty()) {
    // everything observed: the result is a single scalar cluster
    out.tree.clusters.push_back(Cluster{0, {}, {}});
    HybridPotential prod = HybridPotential::identity();
    for (std::size_t f = 0; f < factors.size(); ++f) {
      out.tree.clusters[0].factor_ids.push_back(static_cast<int>(f));
      prod = multiply(prod, factors[f]);
    }
    out.cluster_beliefs.push_back(prod);
    out.log_mass = total_log_mass(prod);
    if (out.log_mass == kNegInf)
      throw InconsistentEvidenceError("jtc: zero total mass");
    return out;
  }

  auto order = elimination_order(g);
  out.tree = build_join_tree(g, scopes, order);

  const auto& jt = out.tree;
  std::vector<HybridPotential> psi(jt.clusters.size());
  for (std::size_t c = 0; c < jt.clusters.size(); ++c) {
    HybridPotential p = HybridPotential::identity();
    for (int f : jt.clusters[c].factor_ids)
      p = multiply(p, factors[static_cast<std::size_t>(f)]);
    psi[c] = std::move(p);
  }

  // bucket trees have at most one outgoing edge per cluster, recorded in
  // creation order: edge e connects child e.a to parent e.b with e.b > e.a
  std::vector<HybridPotential> lambda(jt.edges.size());
  WeakMarginalStats stats;
  for (std::size_t e = 0; e < jt.edges.size(); ++e) {
    int child = jt.edges[e].a;
    int parent = jt.edges[e].b;
    const auto& sep = jt.edges[e].separator;
    std::vector<VarId> elim;
    for (VarId v : jt.clusters[static_cast<std::size_t>(child)].vars)
      if (!std::binary_search(sep.begin(), sep.end(), v)) elim.push_back(v);
    // scope of psi may be a subset of the cluster after conditioning
    std::vector<VarId> elim_present;
    for (VarId v : elim)
      if (psi[static_cast<std::size_t>(child)].in_dscope(v) ||
          psi[static_cast<std::size_t>(child)].in_cscope(v))
        elim_present.push_back(v);
    lambda[e] = marginalize(psi[static_cast<std::size_t>(child)], elim_present,
                            &stats);
    psi[static_cast<std::size_t>(parent)] =
        multiply(psi[static_cast<std::size_t>(parent)], lambda[e]);
  }

  // roots: clusters with no outgoing edge
  std::vector<bool> has_parent(jt.clusters.size(), false);
  for (const auto& e : jt.edges) has_parent[static_cast<std::size_t>(e.a)] = true;
  double log_z = 0.0;
  for (std::size_t c = 0; c < jt.clusters.size(); ++c) {
    if (has_parent[c]) continue;
    double m = total_log_mass(psi[c]);
    if (m == kNegInf)
      throw InconsistentEvidenceError("jtc: calibration found zero mass");
    log_z += m;
  }
  out.log_mass = log_z;

  // distribute: parents push separator beliefs down, children absorb the
  // ratio against the stored collect message
  for (std::size_t e = jt.edges.size(); e-- > 0;) {
    int child = jt.edges[e].a;
    int parent = jt.edges[e].b;
    const auto& sep = jt.edges[e].separator;
    std::vector<VarId> elim;
    const auto& pp = psi[static_cast<std::size_t>(parent)];
    for (VarId v : pp.dscope)
      if (!std::binary_search(sep.begin(), sep.end(), v)) elim.push_back(v);
    for (VarId v : pp.cscope)
      if (!std::binary_search(sep.begin(), sep.end(), v)) elim.push_back(v);
    HybridPotential pi = marginalize(pp, elim, &stats);
    psi[static_cast<std::size_t>(child)] = multiply(
        psi[static_cast<std::size_t>(child)], divide(pi, lambda[e]));
  }

  out.cluster_beliefs = std::move(psi);
  out.collapse_flagged = stats.lossy;
  return out;
}

Marginals read_marginals(const CalibratedTree& ct,
                         const std::vector<VarId>& queries) {
  Marginals out;
  out.log_mass = ct.log_mass;
  for (VarId v : queries) {
    auto it = ct.tree.home_cluster.find(v);
    if (it == ct.tree.home_cluster.end())
      throw ParamError("query variable absent from the calibrated tree");
    const auto& belief = ct.cluster_beliefs[static_cast<std::size_t>(it->second)];
    if (belief.in_dscope(v)) {
      out.discrete[v] = discrete_marginal(belief, v);
    } else {
      GaussianMoments m = continuous_marginal(belief, v);
      m.log_weight = 0.0;
      out.continuous[v] = std::move(m);
    }
  }
  return out;
}

Marginals jtc_infer(const MixedNetwork& net, const Evidence& ev,
                    const std::vector<VarId>& queries) {
  net.validate();
  std::vector<HybridPotential> factors;
  for (const auto& f : factor_potentials(net)) factors.push_back(condition(f, ev));
  CalibratedTree ct = jtc_calibrate(factors, factor_context(net));
  std::vector<VarId> qs = queries;
  if (qs.empty()) {
    for (const auto& v : net.variables)
      if (!ev.has(v.id)) qs.push_back(v.id);
  }
  return read_marginals(ct, qs);
}

// ---- variable elimination onto a kept set ----

namespace {

std::vector<VarId> elimination_order_excluding(const ScopeGraph& g,
                                               const std::set<VarId>& keep) {
  // same policy as elimination_order, restricted to non-kept variables
  ScopeGraph h = g;
  std::vector<VarId> order = elimination_order(h);
  // recompute with keep-awareness: simplest correct approach is to run the
  // greedy on the full graph but make kept variables ineligible
  std::map<VarId, std::set<VarId>> adj = g.adj;
  std::set<VarId> remaining(g.vars.begin(), g.vars.end());
  std::map<VarId, int> cont_children;
  std::map<VarId, std::vector<VarId>> cont_parents_of;
  for (VarId v : g.vars)
    if (g.continuous(v)) cont_children[v] = 0;
  for (auto& [p, c] : g.cont_arcs) {
    if (keep.count(c)) continue;  // kept children never block their parents
    cont_children[p] += 1;
    cont_parents_of[c].push_back(p);
  }
  std::vector<VarId> out;
  for (;;) {
    bool any_cont = false;
    for (VarId v : remaining)
      if (!keep.count(v) && g.continuous(v)) { any_cont = true; break; }
    std::vector<VarId> eligible;
    for (VarId v : remaining) {
      if (keep.count(v)) continue;
      if (any_cont) {
        if (g.continuous(v) && cont_children[v] == 0) eligible.push_back(v);
      } else {
        eligible.push_back(v);
      }
    }
    if (eligible.empty()) break;
    VarId best = -1;
    int best_fill = -1;
    for (VarId v : eligible) {
      std::vector<VarId> nb;
      for (VarId u : adj[v])
        if (remaining.count(u)) nb.push_back(u);
      int fill = 0;
      for (std::size_t i = 0; i < nb.size(); ++i)
        for (std::size_t j = i + 1; j < nb.size(); ++j)
          if (!adj[nb[i]].count(nb[j])) ++fill;
      if (best < 0 || fill < best_fill || (fill == best_fill && v < best)) {
        best = v;
        best_fill = fill;
      }
    }
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
    out.push_back(best);
  }
  return out;
}

}  // namespace

HybridPotential ve_keep(std::vector<HybridPotential> factors,
                        const std::vector<VarId>& keep,
                        const FactorContext& ctx, WeakMarginalStats* stats) {
  auto scopes = scopes_of(factors);
  ScopeGraph g = scope_graph_from_scopes(
      scopes, [&](VarId v) { return ctx.is_cont.at(v); }, ctx.cont_arcs);
  std::set<VarId> keep_set(keep.begin(), keep.end());
  auto order = elimination_order_excluding(g, keep_set);

  std::vector<HybridPotential> pool = std::move(factors);
  for (VarId v : order) {
    HybridPotential prod = HybridPotential::identity();
    std::vector<HybridPotential> next;
    bool found = false;
    for (auto& f : pool) {
      if (f.in_dscope(v) || f.in_cscope(v)) {
        prod = multiply(prod, f);
        found = true;
      } else {
        next.push_back(std::move(f));
      }
    }
    if (found) {
      std::vector<VarId> elim{v};
      next.push_back(marginalize(prod, elim, stats));
    }
    pool = std::move(next);
  }
  HybridPotential result = vacuous_over(keep, ctx);
  for (auto& f : pool) result = multiply(result, f);
  return result;
}

HybridPotential weighted_mixture(
    const std::vector<std::pair<double, const HybridPotential*>>& comps) {
  if (comps.empty()) throw ParamError("weighted_mixture: no components");
  const HybridPotential& first = *comps.front().second;
  for (auto& [w, p] : comps)
    if (p->dscope != first.dscope || p->cscope != first.cscope ||
        p->card != first.card)
      throw ParamError("weighted_mixture: scope mismatch");

  HybridPotential out =
      HybridPotential::zero(first.dscope, first.card, first.cscope);
  const int m = first.cdim();
  for (std::size_t idx = 0; idx < out.entries.size(); ++idx) {
    std::vector<double> lw;
    std::vector<GaussianMoments> mos;
    std::vector<double> scalar_lw;
    for (auto& [w, p] : comps) {
      const auto& e = p->entries[idx];
      if (!e) continue;
      if (m == 0) {
        scalar_lw.push_back(w + e->g);
      } else {
        GaussianMoments mo = to_moments(*e);
        lw.push_back(w + mo.log_weight);
        mos.push_back(std::move(mo));
      }
    }
    if (m == 0) {
      if (!scalar_lw.empty())
        out.entries[idx] = CanonicalGaussian::scalar(logsumexp(scalar_lw));
      continue;
    }
    if (mos.empty()) continue;
    if (mos.size() == 1) {
      GaussianMoments mo = mos[0];
      mo.log_weight = lw[0];
      out.entries[idx] = from_moments(mo);
      continue;
    }
    double logW = logsumexp(lw);
    GaussianMoments mix;
    mix.log_weight = logW;
    mix.mean = Eigen::VectorXd::Zero(m);
    mix.cov = Eigen::MatrixXd::Zero(m, m);
    std::vector<double> w(mos.size());
    for (std::size_t i = 0; i < mos.size(); ++i) {
      w[i] = std::exp(lw[i] - logW);
      mix.mean += w[i] * mos[i].mean;
    }
    for (std::size_t i = 0; i < mos.size(); ++i) {
      Eigen::VectorXd d = mos[i].mean - mix.mean;
      mix.cov += w[i] * (mos[i].cov + d * d.transpose());
    }
    mix.cov = 0.5 * (mix.cov + mix.cov.transpose());
    out.entries[idx] = from_moments(mix);
  }
  return out;
}

// ---- exact recursive filtering ----

namespace {

Evidence shift_evidence(const Evidence& ev, int offset) {
  Evidence out;
  for (auto& [v, val] : ev.discrete) out.discrete[v + offset] = val;
  for (auto& [v, val] : ev.continuous) out.continuous[v + offset] = val;
  return out;
}

}  // namespace

std::vector<BeliefState> exact_filter(
    const DynamicMixedNetwork& dmn, const std::vector<Evidence>& observations) {
  dmn.validate();
  const int n = dmn.n_state;
  std::vector<VarId> iface = dmn.interface_vars();

  FactorContext prior_ctx = factor_context(dmn.prior);
  FactorContext trans_ctx = factor_context(dmn.transition);

  std::vector<HybridPotential> trans_factors = factor_potentials(dmn.transition);

  std::vector<BeliefState> out;
  HybridPotential phi;  // over interface state ids
  const int T = static_cast<int>(observations.size());
  for (int t = 0; t < T; ++t) {
    std::vector<HybridPotential> factors;
    FactorContext* ctx = nullptr;
    Evidence ev;
    std::vector<VarId> slice_vars;  // cur ids of this slice's state copies
    int cur_offset = 0;
    if (t == 0) {
      ev = observations[0];
      for (const auto& f : factor_potentials(dmn.prior))
        factors.push_back(condition(f, ev));
      ctx = &prior_ctx;
      for (VarId s = 0; s < n; ++s) slice_vars.push_back(s);
    } else {
      ev = shift_evidence(observations[static_cast<std::size_t>(t)], n);
      // previous-slice evidence on interface variables re-enters here
      const Evidence& prev_ev = observations[static_cast<std::size_t>(t - 1)];
      for (VarId s : iface) {
        auto di = prev_ev.discrete.find(s);
        if (di != prev_ev.discrete.end()) ev.discrete[s] = di->second;
        auto ci = prev_ev.continuous.find(s);
        if (ci != prev_ev.continuous.end()) ev.continuous[s] = ci->second;
      }
      for (const auto& f : trans_factors) factors.push_back(condition(f, ev));
      factors.push_back(condition(phi, ev));
      ctx = &trans_ctx;
      for (VarId s = 0; s < n; ++s) slice_vars.push_back(s + n);
      cur_offset = n;
    }

    BeliefState bs;
    bs.t = t;
    try {
      CalibratedTree ct = jtc_calibrate(factors, *ctx);
      bs.slice_log_likelihood = ct.log_mass;
      std::vector<VarId> queries;
      for (VarId v : slice_vars)
        if (!ev.has(v)) queries.push_back(v);
      Marginals mg = read_marginals(ct, queries);
      for (auto& [v, probs] : mg.discrete) bs.discrete[v - cur_offset] = probs;
      for (auto& [v, mo] : mg.continuous) bs.continuous[v - cur_offset] = mo;
      bs.collapse_flagged = ct.collapse_flagged;
    } catch (const InconsistentEvidenceError&) {
      throw InconsistentEvidenceError("exact_filter: inconsistent observation",
                                      t);
    }

    // next interface potential: eliminate everything but the (unobserved)
    // current interface copies
    std::vector<VarId> keep;
    for (VarId s : iface) {
      VarId cur = s + cur_offset;
      if (!ev.has(cur)) keep.push_back(cur);
    }
    WeakMarginalStats stats;
    HybridPotential joint;
    try {
      joint = normalized(ve_keep(factors, keep, *ctx, &stats));
    } catch (const InconsistentEvidenceError&) {
      throw InconsistentEvidenceError("exact_filter: inconsistent observation",
                                      t);
    }
    if (stats.lossy) bs.collapse_flagged = true;

    // store over state ids; observed interface copies drop out and their
    // values re-enter through the next slice's conditioning
    std::map<VarId, VarId> to_state;
    for (VarId v : keep) to_state[v] = v - cur_offset;
    phi = rename_scope(joint, to_state);
    bs.interface_potential = phi;
    bs.interface_scope = iface;
    out.push_back(std::move(bs));
  }
  return out;
}

}  // namespace hdmn
