#include "hdmn/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <queue>
#include <sstream>

namespace hdmn {

namespace {
constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kLog2Pi = 1.8378770664093454836;

std::size_t config_count(const MixedNetwork& net, const std::vector<VarId>& vars) {
  std::size_t n = 1;
  for (VarId v : vars) n *= static_cast<std::size_t>(net.var(v).domain_size);
  return n;
}
}  // namespace

VarId cpd_child(const Cpd& cpd) {
  return std::visit([](const auto& c) { return c.child; }, cpd);
}

std::vector<VarId> cpd_parents(const Cpd& cpd) {
  if (const auto* d = std::get_if<DiscreteCPD>(&cpd)) return d->parents;
  const auto& lg = std::get<LinearGaussianCPD>(cpd);
  std::vector<VarId> out = lg.discrete_parents;
  out.insert(out.end(), lg.continuous_parents.begin(), lg.continuous_parents.end());
  return out;
}

// ---- relations ----

ConstraintRelation make_relation(std::vector<VarId> scope,
                                 std::vector<std::vector<int>> tuples,
                                 std::string name) {
  ConstraintRelation r;
  r.name = std::move(name);
  r.scope = std::move(scope);
  for (const auto& t : tuples)
    if (t.size() != r.scope.size())
      throw ModelError("constraint tuple arity mismatch");
  std::sort(tuples.begin(), tuples.end());
  tuples.erase(std::unique(tuples.begin(), tuples.end()), tuples.end());
  r.allowed = std::move(tuples);
  return r;
}

bool ConstraintRelation::allows(std::span<const int> tuple) const {
  std::vector<int> t(tuple.begin(), tuple.end());
  return std::binary_search(allowed.begin(), allowed.end(), t);
}

ConstraintRelation relation_join(const ConstraintRelation& r1,
                                 const ConstraintRelation& r2) {
  // shared variables and their positions in each scope
  std::vector<std::pair<int, int>> shared;  // (pos in r1, pos in r2)
  std::vector<int> r2_only;
  for (std::size_t j = 0; j < r2.scope.size(); ++j) {
    auto it = std::find(r1.scope.begin(), r1.scope.end(), r2.scope[j]);
    if (it != r1.scope.end())
      shared.emplace_back(static_cast<int>(it - r1.scope.begin()),
                          static_cast<int>(j));
    else
      r2_only.push_back(static_cast<int>(j));
  }
  std::vector<VarId> scope = r1.scope;
  for (int j : r2_only) scope.push_back(r2.scope[static_cast<std::size_t>(j)]);

  // bucket r2 tuples by their shared projection
  std::map<std::vector<int>, std::vector<const std::vector<int>*>> buckets;
  for (const auto& t2 : r2.allowed) {
    std::vector<int> key;
    key.reserve(shared.size());
    for (auto& [p1, p2] : shared) key.push_back(t2[static_cast<std::size_t>(p2)]);
    buckets[key].push_back(&t2);
  }
  std::vector<std::vector<int>> out;
  for (const auto& t1 : r1.allowed) {
    std::vector<int> key;
    key.reserve(shared.size());
    for (auto& [p1, p2] : shared) key.push_back(t1[static_cast<std::size_t>(p1)]);
    auto it = buckets.find(key);
    if (it == buckets.end()) continue;
    for (const auto* t2 : it->second) {
      std::vector<int> t = t1;
      for (int j : r2_only) t.push_back((*t2)[static_cast<std::size_t>(j)]);
      out.push_back(std::move(t));
    }
  }
  std::string name = r1.name.empty() && r2.name.empty()
                         ? std::string()
                         : r1.name + "*" + r2.name;
  return make_relation(std::move(scope), std::move(out), std::move(name));
}

ConstraintRelation relation_project(const ConstraintRelation& r,
                                    const std::vector<VarId>& onto) {
  std::vector<int> pos;
  for (VarId v : onto) {
    auto it = std::find(r.scope.begin(), r.scope.end(), v);
    if (it == r.scope.end())
      throw ParamError("relation_project: variable not in scope");
    pos.push_back(static_cast<int>(it - r.scope.begin()));
  }
  std::vector<std::vector<int>> out;
  out.reserve(r.allowed.size());
  for (const auto& t : r.allowed) {
    std::vector<int> proj;
    proj.reserve(pos.size());
    for (int p : pos) proj.push_back(t[static_cast<std::size_t>(p)]);
    out.push_back(std::move(proj));
  }
  return make_relation(onto, std::move(out), r.name);
}

// ---- MixedNetwork ----

VarId MixedNetwork::by_name(const std::string& name) const {
  for (const auto& v : variables)
    if (v.name == name) return v.id;
  throw ParamError("unknown variable name: " + name);
}

std::vector<VarId> MixedNetwork::discrete_vars() const {
  std::vector<VarId> out;
  for (const auto& v : variables)
    if (v.discrete()) out.push_back(v.id);
  return out;
}

std::vector<VarId> MixedNetwork::continuous_vars() const {
  std::vector<VarId> out;
  for (const auto& v : variables)
    if (v.continuous()) out.push_back(v.id);
  return out;
}

std::vector<VarId> MixedNetwork::topo_order() const {
  const int n = size();
  std::vector<int> indeg(static_cast<std::size_t>(n), 0);
  std::vector<std::vector<VarId>> children(static_cast<std::size_t>(n));
  for (VarId v = 0; v < n; ++v)
    for (VarId p : parents[static_cast<std::size_t>(v)]) {
      children[static_cast<std::size_t>(p)].push_back(v);
      ++indeg[static_cast<std::size_t>(v)];
    }
  std::priority_queue<VarId, std::vector<VarId>, std::greater<>> ready;
  for (VarId v = 0; v < n; ++v)
    if (indeg[static_cast<std::size_t>(v)] == 0) ready.push(v);
  std::vector<VarId> order;
  while (!ready.empty()) {
    VarId v = ready.top();
    ready.pop();
    order.push_back(v);
    for (VarId c : children[static_cast<std::size_t>(v)])
      if (--indeg[static_cast<std::size_t>(c)] == 0) ready.push(c);
  }
  if (static_cast<int>(order.size()) != n)
    throw ModelError("network graph has a cycle");
  return order;
}

std::vector<std::set<VarId>> MixedNetwork::moral_graph() const {
  std::vector<std::set<VarId>> adj(variables.size());
  auto link = [&](VarId a, VarId b) {
    if (a == b) return;
    adj[static_cast<std::size_t>(a)].insert(b);
    adj[static_cast<std::size_t>(b)].insert(a);
  };
  for (VarId v = 0; v < size(); ++v) {
    const auto& ps = parents[static_cast<std::size_t>(v)];
    for (std::size_t i = 0; i < ps.size(); ++i) {
      link(v, ps[i]);
      for (std::size_t j = i + 1; j < ps.size(); ++j) link(ps[i], ps[j]);
    }
  }
  for (const auto& c : constraints)
    for (std::size_t i = 0; i < c.scope.size(); ++i)
      for (std::size_t j = i + 1; j < c.scope.size(); ++j)
        link(c.scope[i], c.scope[j]);
  return adj;
}

void MixedNetwork::validate() const {
  const int n = size();
  std::set<std::string> names;
  for (VarId v = 0; v < n; ++v) {
    const Variable& x = variables[static_cast<std::size_t>(v)];
    if (x.id != v) throw ModelError("variable ids must be dense 0..n-1");
    if (x.name.empty()) throw ModelError("variable name empty");
    if (!names.insert(x.name).second)
      throw ModelError("duplicate variable name: " + x.name);
    if (x.discrete()) {
      if (x.domain_size < 1)
        throw ModelError("discrete domain size must be >= 1: " + x.name);
      if (!x.labels.empty() &&
          static_cast<int>(x.labels.size()) != x.domain_size)
        throw ModelError("label count mismatch: " + x.name);
    }
  }
  if (static_cast<int>(parents.size()) != n ||
      static_cast<int>(cpds.size()) != n)
    throw ModelError("parents/cpds arrays must cover all variables");

  topo_order();  // throws on cycles

  for (VarId v = 0; v < n; ++v) {
    const Variable& x = var(v);
    for (VarId p : parents[static_cast<std::size_t>(v)]) {
      if (p < 0 || p >= n) throw ModelError("parent id out of range");
      // CLG restriction: continuous variables cannot have discrete children
      if (x.discrete() && var(p).continuous())
        throw ModelError("discrete variable " + x.name +
                         " has a continuous parent");
    }
    const auto& cpd = cpds[static_cast<std::size_t>(v)];
    if (cpd_free.count(v)) {
      if (cpd.has_value())
        throw ModelError("CPD-free root has a CPD: " + x.name);
      if (!parents[static_cast<std::size_t>(v)].empty())
        throw ModelError("CPD-free root has parents: " + x.name);
      continue;
    }
    if (!cpd.has_value()) throw ModelError("missing CPD for " + x.name);
    if (cpd_child(*cpd) != v)
      throw ModelError("CPD child mismatch for " + x.name);
    auto declared = cpd_parents(*cpd);
    auto dag = parents[static_cast<std::size_t>(v)];
    std::sort(declared.begin(), declared.end());
    std::sort(dag.begin(), dag.end());
    if (declared != dag)
      throw ModelError("CPD parents disagree with DAG for " + x.name);

    if (const auto* d = std::get_if<DiscreteCPD>(&*cpd)) {
      if (!x.discrete())
        throw ModelError("tabular CPD on continuous variable " + x.name);
      std::size_t rows = config_count(*this, d->parents);
      std::size_t want = rows * static_cast<std::size_t>(x.domain_size);
      if (d->table.size() != want)
        throw ModelError("CPT size mismatch for " + x.name);
      for (double p : d->table)
        if (!(p >= 0.0 && p <= 1.0 + 1e-12))
          throw ModelError("CPT entry outside [0,1] for " + x.name);
      for (std::size_t r = 0; r < rows; ++r) {
        double s = 0.0;
        for (int k = 0; k < x.domain_size; ++k)
          s += d->table[r * static_cast<std::size_t>(x.domain_size) +
                        static_cast<std::size_t>(k)];
        if (std::abs(s - 1.0) > 1e-9)
          throw ModelError("CPT row does not sum to 1 for " + x.name);
      }
    } else {
      const auto& lg = std::get<LinearGaussianCPD>(*cpd);
      if (!x.continuous())
        throw ModelError("linear-Gaussian CPD on discrete variable " + x.name);
      for (VarId p : lg.discrete_parents)
        if (!var(p).discrete())
          throw ModelError("non-discrete in discrete parent list of " + x.name);
      for (VarId p : lg.continuous_parents)
        if (!var(p).continuous())
          throw ModelError("non-continuous in continuous parent list of " + x.name);
      if (lg.rows.size() != config_count(*this, lg.discrete_parents))
        throw ModelError("linear-Gaussian row count mismatch for " + x.name);
      for (const auto& row : lg.rows) {
        if (!(row.variance > 0.0))
          throw ModelError("non-positive variance for " + x.name);
        if (row.coeffs.size() != lg.continuous_parents.size())
          throw ModelError("coefficient length mismatch for " + x.name);
      }
    }
  }

  for (const auto& c : constraints) {
    for (VarId v : c.scope)
      if (v < 0 || v >= n || !var(v).discrete())
        throw ModelError("constraint scope must be declared discrete variables");
    for (const auto& t : c.allowed) {
      if (t.size() != c.scope.size())
        throw ModelError("constraint tuple arity mismatch");
      for (std::size_t k = 0; k < t.size(); ++k)
        if (t[k] < 0 || t[k] >= var(c.scope[k]).domain_size)
          throw ModelError("constraint tuple value out of domain");
    }
  }
}

// ---- potential compilation ----

HybridPotential to_potential(const MixedNetwork& net, const Cpd& cpd) {
  if (const auto* d = std::get_if<DiscreteCPD>(&cpd)) {
    std::vector<VarId> scope = d->parents;
    scope.push_back(d->child);
    std::vector<VarId> sorted = scope;
    std::sort(sorted.begin(), sorted.end());
    std::vector<int> card;
    for (VarId v : sorted) card.push_back(net.var(v).domain_size);
    HybridPotential p = HybridPotential::zero(sorted, card, {});

    // iterate the declared-order table, scatter into sorted layout
    std::vector<int> declared_card;
    for (VarId v : scope) declared_card.push_back(net.var(v).domain_size);
    std::vector<int> tuple(scope.size(), 0);
    std::size_t flat = 0;
    bool more = true;
    while (more) {
      double prob = d->table[flat];
      std::vector<int> sorted_tuple(sorted.size());
      for (std::size_t k = 0; k < scope.size(); ++k) {
        auto it = std::lower_bound(sorted.begin(), sorted.end(), scope[k]);
        sorted_tuple[static_cast<std::size_t>(it - sorted.begin())] = tuple[k];
      }
      if (prob > 0.0)
        p.entries[p.index_of(sorted_tuple)] =
            CanonicalGaussian::scalar(std::log(prob));
      ++flat;
      more = false;
      for (int k = static_cast<int>(tuple.size()) - 1; k >= 0; --k) {
        if (++tuple[static_cast<std::size_t>(k)] <
            declared_card[static_cast<std::size_t>(k)]) {
          more = true;
          break;
        }
        tuple[static_cast<std::size_t>(k)] = 0;
      }
    }
    return p;
  }

  const auto& lg = std::get<LinearGaussianCPD>(cpd);
  std::vector<VarId> dsorted = lg.discrete_parents;
  std::sort(dsorted.begin(), dsorted.end());
  std::vector<int> card;
  for (VarId v : dsorted) card.push_back(net.var(v).domain_size);
  std::vector<VarId> csorted = lg.continuous_parents;
  csorted.push_back(lg.child);
  std::sort(csorted.begin(), csorted.end());
  HybridPotential p = HybridPotential::zero(dsorted, card, csorted);

  const int m = static_cast<int>(csorted.size());
  int child_pos = static_cast<int>(
      std::lower_bound(csorted.begin(), csorted.end(), lg.child) -
      csorted.begin());
  std::vector<int> zpos;
  for (VarId z : lg.continuous_parents)
    zpos.push_back(static_cast<int>(
        std::lower_bound(csorted.begin(), csorted.end(), z) - csorted.begin()));

  std::vector<int> declared_card;
  for (VarId v : lg.discrete_parents)
    declared_card.push_back(net.var(v).domain_size);
  std::vector<int> tuple(lg.discrete_parents.size(), 0);
  std::size_t flat = 0;
  bool more = true;
  while (more) {
    const auto& row = lg.rows[flat];
    CanonicalGaussian e;
    e.h = Eigen::VectorXd::Zero(m);
    e.K = Eigen::MatrixXd::Zero(m, m);
    double inv_var = 1.0 / row.variance;
    e.K(child_pos, child_pos) = inv_var;
    for (std::size_t a = 0; a < zpos.size(); ++a) {
      e.K(child_pos, zpos[a]) -= row.coeffs[a] * inv_var;
      e.K(zpos[a], child_pos) -= row.coeffs[a] * inv_var;
      for (std::size_t b = 0; b < zpos.size(); ++b)
        e.K(zpos[a], zpos[b]) += row.coeffs[a] * row.coeffs[b] * inv_var;
    }
    e.h(child_pos) = row.intercept * inv_var;
    for (std::size_t a = 0; a < zpos.size(); ++a)
      e.h(zpos[a]) = -row.intercept * row.coeffs[a] * inv_var;
    e.g = -0.5 * (row.intercept * row.intercept * inv_var +
                  std::log(2.0 * std::numbers::pi * row.variance));

    std::vector<int> sorted_tuple(dsorted.size());
    for (std::size_t k = 0; k < lg.discrete_parents.size(); ++k) {
      auto it = std::lower_bound(dsorted.begin(), dsorted.end(),
                                 lg.discrete_parents[k]);
      sorted_tuple[static_cast<std::size_t>(it - dsorted.begin())] = tuple[k];
    }
    p.entries[p.index_of(sorted_tuple)] = std::move(e);

    ++flat;
    more = false;
    for (int k = static_cast<int>(tuple.size()) - 1; k >= 0; --k) {
      if (++tuple[static_cast<std::size_t>(k)] <
          declared_card[static_cast<std::size_t>(k)]) {
        more = true;
        break;
      }
      tuple[static_cast<std::size_t>(k)] = 0;
    }
  }
  return p;
}

HybridPotential to_potential(const MixedNetwork& net,
                             const ConstraintRelation& rel) {
  std::vector<VarId> sorted = rel.scope;
  std::sort(sorted.begin(), sorted.end());
  std::vector<int> card;
  for (VarId v : sorted) card.push_back(net.var(v).domain_size);
  HybridPotential p = HybridPotential::zero(sorted, card, {});
  for (const auto& t : rel.allowed) {
    std::vector<int> sorted_tuple(sorted.size());
    for (std::size_t k = 0; k < rel.scope.size(); ++k) {
      auto it = std::lower_bound(sorted.begin(), sorted.end(), rel.scope[k]);
      sorted_tuple[static_cast<std::size_t>(it - sorted.begin())] = t[k];
    }
    p.entries[p.index_of(sorted_tuple)] = CanonicalGaussian::scalar(0.0);
  }
  return p;
}

std::vector<HybridPotential> factor_potentials(const MixedNetwork& net) {
  std::vector<HybridPotential> out;
  for (VarId v = 0; v < net.size(); ++v)
    if (net.cpds[static_cast<std::size_t>(v)])
      out.push_back(to_potential(net, *net.cpds[static_cast<std::size_t>(v)]));
  for (const auto& c : net.constraints) out.push_back(to_potential(net, c));
  return out;
}

// ---- densities and sampling ----

double log_density(const MixedNetwork& net, const std::map<VarId, int>& disc,
                   const std::map<VarId, double>& cont) {
  for (const auto& c : net.constraints) {
    std::vector<int> t;
    t.reserve(c.scope.size());
    for (VarId v : c.scope) t.push_back(disc.at(v));
    if (!c.allows(t)) return kNegInf;
  }
  double lp = 0.0;
  for (VarId v = 0; v < net.size(); ++v) {
    const auto& cpd = net.cpds[static_cast<std::size_t>(v)];
    if (!cpd) continue;
    if (const auto* d = std::get_if<DiscreteCPD>(&*cpd)) {
      std::size_t idx = 0;
      for (VarId p : d->parents)
        idx = idx * static_cast<std::size_t>(net.var(p).domain_size) +
              static_cast<std::size_t>(disc.at(p));
      idx = idx * static_cast<std::size_t>(net.var(v).domain_size) +
            static_cast<std::size_t>(disc.at(v));
      double prob = d->table[idx];
      if (prob <= 0.0) return kNegInf;
      lp += std::log(prob);
    } else {
      const auto& lg = std::get<LinearGaussianCPD>(*cpd);
      std::size_t row = 0;
      for (VarId p : lg.discrete_parents)
        row = row * static_cast<std::size_t>(net.var(p).domain_size) +
              static_cast<std::size_t>(disc.at(p));
      const auto& r = lg.rows[row];
      double mean = r.intercept;
      for (std::size_t k = 0; k < lg.continuous_parents.size(); ++k)
        mean += r.coeffs[k] * cont.at(lg.continuous_parents[k]);
      double d2 = cont.at(v) - mean;
      lp += -0.5 * (d2 * d2 / r.variance + std::log(2.0 * std::numbers::pi * r.variance));
    }
  }
  return lp;
}

Assignment sample_forward(const MixedNetwork& net, const Assignment& given,
                          RngStream& rng) {
  Assignment out = given;
  for (VarId v : net.topo_order()) {
    if (out.discrete.count(v) || out.continuous.count(v)) continue;
    const auto& cpd = net.cpds[static_cast<std::size_t>(v)];
    if (!cpd)
      throw ParamError("sample_forward: CPD-free variable lacks a value: " +
                       net.var(v).name);
    if (const auto* d = std::get_if<DiscreteCPD>(&*cpd)) {
      std::size_t row = 0;
      for (VarId p : d->parents)
        row = row * static_cast<std::size_t>(net.var(p).domain_size) +
              static_cast<std::size_t>(out.discrete.at(p));
      int k = net.var(v).domain_size;
      std::vector<double> probs(
          d->table.begin() + static_cast<std::ptrdiff_t>(row * static_cast<std::size_t>(k)),
          d->table.begin() + static_cast<std::ptrdiff_t>((row + 1) * static_cast<std::size_t>(k)));
      out.discrete[v] = rng.categorical(probs);
    } else {
      const auto& lg = std::get<LinearGaussianCPD>(*cpd);
      std::size_t row = 0;
      for (VarId p : lg.discrete_parents)
        row = row * static_cast<std::size_t>(net.var(p).domain_size) +
              static_cast<std::size_t>(out.discrete.at(p));
      const auto& r = lg.rows[row];
      double mean = r.intercept;
      for (std::size_t k = 0; k < lg.continuous_parents.size(); ++k)
        mean += r.coeffs[k] * out.continuous.at(lg.continuous_parents[k]);
      out.continuous[v] = mean + std::sqrt(r.variance) * rng.normal();
    }
  }
  return out;
}

bool satisfies_constraints(const MixedNetwork& net,
                           const std::map<VarId, int>& disc) {
  for (const auto& c : net.constraints) {
    std::vector<int> t;
    t.reserve(c.scope.size());
    for (VarId v : c.scope) t.push_back(disc.at(v));
    if (!c.allows(t)) return false;
  }
  return true;
}

// ---- DynamicMixedNetwork ----

void DynamicMixedNetwork::validate() const {
  prior.validate();
  transition.validate();
  if (prior.size() != n_state)
    throw ModelError("prior must cover exactly the state variables");
  if (transition.size() != 2 * n_state)
    throw ModelError("transition must hold two slice copies");
  for (VarId i = 0; i < n_state; ++i) {
    const Variable& s = prior.var(i);
    const Variable& pv = transition.var(prev_id(i));
    const Variable& cv = transition.var(cur_id(i));
    if (pv.kind != s.kind || cv.kind != s.kind)
      throw ModelError("slice copy kind mismatch for " + s.name);
    if (s.discrete() && (pv.domain_size != s.domain_size ||
                         cv.domain_size != s.domain_size))
      throw ModelError("slice copy domain mismatch for " + s.name);
    if (!transition.cpd_free.count(prev_id(i)))
      throw ModelError("previous-slice copy must be CPD-free: " + s.name);
    if (!transition.cpds[static_cast<std::size_t>(cur_id(i))])
      throw ModelError("current-slice copy missing CPD: " + s.name);
  }
}

std::vector<VarId> DynamicMixedNetwork::interface_vars() const {
  std::set<VarId> iface;
  for (VarId v = n_state; v < 2 * n_state; ++v)
    for (VarId p : transition.parents[static_cast<std::size_t>(v)])
      if (p < n_state) iface.insert(p);
  for (const auto& c : transition.constraints) {
    bool touches_cur = false;
    for (VarId v : c.scope)
      if (v >= n_state) touches_cur = true;
    if (!touches_cur) continue;
    for (VarId v : c.scope)
      if (v < n_state) iface.insert(v);
  }
  return {iface.begin(), iface.end()};
}

MixedNetwork unroll(const DynamicMixedNetwork& dmn, int T) {
  if (T < 1) throw ParamError("unroll: T must be >= 1");
  const int n = dmn.n_state;
  MixedNetwork out;
  auto slice_id = [n](int t, VarId i) { return static_cast<VarId>(t * n + i); };

  for (int t = 0; t <= T; ++t) {
    for (VarId i = 0; i < n; ++i) {
      Variable v = dmn.prior.var(i);
      v.id = slice_id(t, i);
      v.name = v.name + "@" + std::to_string(t);
      out.variables.push_back(std::move(v));
    }
  }
  out.parents.resize(out.variables.size());
  out.cpds.resize(out.variables.size());

  auto remap_cpd = [&](const Cpd& cpd, auto&& id_of) -> Cpd {
    if (const auto* d = std::get_if<DiscreteCPD>(&cpd)) {
      DiscreteCPD c = *d;
      c.child = id_of(c.child);
      for (auto& p : c.parents) p = id_of(p);
      return c;
    }
    LinearGaussianCPD c = std::get<LinearGaussianCPD>(cpd);
    c.child = id_of(c.child);
    for (auto& p : c.discrete_parents) p = id_of(p);
    for (auto& p : c.continuous_parents) p = id_of(p);
    return c;
  };

  // slice 0 from the prior
  for (VarId i = 0; i < n; ++i) {
    auto id_of = [&](VarId v) { return slice_id(0, v); };
    for (VarId p : dmn.prior.parents[static_cast<std::size_t>(i)])
      out.parents[static_cast<std::size_t>(slice_id(0, i))].push_back(id_of(p));
    if (dmn.prior.cpds[static_cast<std::size_t>(i)])
      out.cpds[static_cast<std::size_t>(slice_id(0, i))] =
          remap_cpd(*dmn.prior.cpds[static_cast<std::size_t>(i)], id_of);
  }
  for (const auto& c : dmn.prior.constraints) {
    ConstraintRelation r = c;
    for (auto& v : r.scope) v = slice_id(0, v);
    out.constraints.push_back(std::move(r));
  }

  // transition copies: X' of the template binds to slice t-1
  for (int t = 1; t <= T; ++t) {
    auto id_of = [&](VarId v) {
      return v < n ? slice_id(t - 1, v) : slice_id(t, v - n);
    };
    for (VarId i = 0; i < n; ++i) {
      VarId cur = dmn.cur_id(i);
      for (VarId p : dmn.transition.parents[static_cast<std::size_t>(cur)])
        out.parents[static_cast<std::size_t>(slice_id(t, i))].push_back(id_of(p));
      out.cpds[static_cast<std::size_t>(slice_id(t, i))] =
          remap_cpd(*dmn.transition.cpds[static_cast<std::size_t>(cur)], id_of);
    }
    for (const auto& c : dmn.transition.constraints) {
      ConstraintRelation r = c;
      for (auto& v : r.scope) v = id_of(v);
      out.constraints.push_back(std::move(r));
    }
  }
  out.validate();
  return out;
}

}  // namespace hdmn
