#pragma once

#include <cmath>
#include <map>
#include <vector>

#include "hdmn/exact.hpp"
#include "hdmn/network.hpp"
#include "hdmn/rng.hpp"

namespace hdmn::test {

inline Variable dvar(VarId id, const std::string& name, int k) {
  Variable v;
  v.id = id;
  v.name = name;
  v.kind = VarKind::Discrete;
  v.domain_size = k;
  return v;
}

inline Variable cvar(VarId id, const std::string& name) {
  Variable v;
  v.id = id;
  v.name = name;
  v.kind = VarKind::Continuous;
  return v;
}

struct NetBuilder {
  MixedNetwork net;

  NetBuilder& discrete(const std::string& name, int k) {
    net.variables.push_back(dvar(static_cast<VarId>(net.variables.size()), name, k));
    net.parents.emplace_back();
    net.cpds.emplace_back();
    return *this;
  }
  NetBuilder& continuous(const std::string& name) {
    net.variables.push_back(cvar(static_cast<VarId>(net.variables.size()), name));
    net.parents.emplace_back();
    net.cpds.emplace_back();
    return *this;
  }
  NetBuilder& cpt(const std::string& child, const std::vector<std::string>& parents,
                  std::vector<double> table) {
    DiscreteCPD c;
    c.child = net.by_name(child);
    for (const auto& p : parents) c.parents.push_back(net.by_name(p));
    c.table = std::move(table);
    net.parents[static_cast<std::size_t>(c.child)] = c.parents;
    net.cpds[static_cast<std::size_t>(c.child)] = c;
    return *this;
  }
  NetBuilder& lg(const std::string& child, const std::vector<std::string>& dparents,
                 const std::vector<std::string>& cparents,
                 std::vector<LinearGaussianCPD::Row> rows) {
    LinearGaussianCPD c;
    c.child = net.by_name(child);
    for (const auto& p : dparents) c.discrete_parents.push_back(net.by_name(p));
    for (const auto& p : cparents) c.continuous_parents.push_back(net.by_name(p));
    c.rows = std::move(rows);
    auto& ps = net.parents[static_cast<std::size_t>(c.child)];
    ps = c.discrete_parents;
    ps.insert(ps.end(), c.continuous_parents.begin(), c.continuous_parents.end());
    net.cpds[static_cast<std::size_t>(c.child)] = c;
    return *this;
  }
  NetBuilder& constraint(const std::vector<std::string>& scope,
                         std::vector<std::vector<int>> allowed,
                         std::string name = "") {
    std::vector<VarId> s;
    for (const auto& v : scope) s.push_back(net.by_name(v));
    net.constraints.push_back(make_relation(s, std::move(allowed), std::move(name)));
    return *this;
  }
  MixedNetwork build() {
    net.validate();
    return net;
  }
};

// ---- random HMN generator (<=6 binary discrete, <=3 continuous, 0-3 constraints)

inline MixedNetwork random_hmn(std::uint64_t seed, int max_disc = 6,
                               int max_cont = 3, int max_constraints = 3) {
  RngStream rng(RngStream::derive_key(seed, 0xA11CE));
  int nd = 2 + rng.uniform_int(max_disc - 1);
  int nc = rng.uniform_int(max_cont + 1);
  NetBuilder b;
  for (int i = 0; i < nd; ++i) b.discrete("d" + std::to_string(i), 2);
  for (int i = 0; i < nc; ++i) b.continuous("c" + std::to_string(i));

  for (int i = 0; i < nd; ++i) {
    std::vector<std::string> parents;
    for (int p = 0; p < i; ++p)
      if (rng.uniform() < 0.35 && parents.size() < 2)
        parents.push_back("d" + std::to_string(p));
    std::size_t rows = std::size_t(1) << parents.size();
    std::vector<double> table;
    for (std::size_t r = 0; r < rows; ++r) {
      double a = 0.05 + 0.9 * rng.uniform();
      table.push_back(a);
      table.push_back(1.0 - a);
    }
    b.cpt("d" + std::to_string(i), parents, table);
  }
  for (int i = 0; i < nc; ++i) {
    std::vector<std::string> dp, cp;
    for (int p = 0; p < nd && dp.size() < 1; ++p)
      if (rng.uniform() < 0.3) dp.push_back("d" + std::to_string(p));
    for (int p = 0; p < i && cp.size() < 2; ++p)
      if (rng.uniform() < 0.5) cp.push_back("c" + std::to_string(p));
    std::size_t rows = std::size_t(1) << dp.size();
    std::vector<LinearGaussianCPD::Row> lg_rows;
    for (std::size_t r = 0; r < rows; ++r) {
      LinearGaussianCPD::Row row;
      row.intercept = -2.0 + 4.0 * rng.uniform();
      for (std::size_t z = 0; z < cp.size(); ++z)
        row.coeffs.push_back(-1.5 + 3.0 * rng.uniform());
      row.variance = 0.3 + 1.7 * rng.uniform();
      lg_rows.push_back(row);
    }
    b.lg("c" + std::to_string(i), dp, cp, lg_rows);
  }
  int ncon = rng.uniform_int(max_constraints + 1);
  for (int c = 0; c < ncon; ++c) {
    int arity = 1 + rng.uniform_int(std::min(3, nd));
    std::vector<int> vars;
    while (static_cast<int>(vars.size()) < arity) {
      int v = rng.uniform_int(nd);
      bool dup = false;
      for (int u : vars) dup = dup || u == v;
      if (!dup) vars.push_back(v);
    }
    std::vector<std::vector<int>> allowed;
    std::vector<int> tuple(static_cast<std::size_t>(arity), 0);
    for (;;) {
      if (rng.uniform() < 0.7) allowed.push_back(tuple);
      int k = arity - 1;
      for (; k >= 0; --k) {
        if (++tuple[static_cast<std::size_t>(k)] < 2) break;
        tuple[static_cast<std::size_t>(k)] = 0;
      }
      if (k < 0) break;
    }
    if (allowed.empty()) allowed.push_back(std::vector<int>(static_cast<std::size_t>(arity), 0));
    std::vector<std::string> scope;
    for (int v : vars) scope.push_back("d" + std::to_string(v));
    b.constraint(scope, allowed);
  }
  return b.build();
}

inline Evidence random_evidence(const MixedNetwork& net, std::uint64_t seed) {
  RngStream rng(RngStream::derive_key(seed, 0xE71D));
  Evidence ev;
  for (const auto& v : net.variables) {
    if (v.continuous() && rng.uniform() < 0.4)
      ev.continuous[v.id] = -2.0 + 4.0 * rng.uniform();
    else if (v.discrete() && rng.uniform() < 0.15)
      ev.discrete[v.id] = rng.uniform_int(v.domain_size);
  }
  return ev;
}

// ---- discrete HMM helpers ----

struct Hmm {
  std::vector<double> p0;                       // K
  std::vector<std::vector<double>> trans;       // K x K, row: from
  std::vector<std::vector<double>> emit;        // K x L
};

// textbook forward recursion; returns per-slice filtered distributions
inline std::vector<std::vector<double>> forward_algorithm(
    const Hmm& hmm, const std::vector<int>& obs) {
  std::size_t K = hmm.p0.size();
  std::vector<std::vector<double>> out;
  std::vector<double> alpha(K);
  for (std::size_t i = 0; i < K; ++i)
    alpha[i] = hmm.p0[i] * hmm.emit[i][static_cast<std::size_t>(obs[0])];
  auto norm = [&](std::vector<double>& a) {
    double z = 0.0;
    for (double x : a) z += x;
    for (double& x : a) x /= z;
  };
  norm(alpha);
  out.push_back(alpha);
  for (std::size_t t = 1; t < obs.size(); ++t) {
    std::vector<double> next(K, 0.0);
    for (std::size_t j = 0; j < K; ++j) {
      for (std::size_t i = 0; i < K; ++i) next[j] += alpha[i] * hmm.trans[i][j];
      next[j] *= hmm.emit[j][static_cast<std::size_t>(obs[t])];
    }
    norm(next);
    out.push_back(next);
    alpha = next;
  }
  return out;
}

// the same HMM as a dynamic mixed network: state 0 = x, state 1 = y (observed)
inline DynamicMixedNetwork hmm_dmn(const Hmm& hmm) {
  int K = static_cast<int>(hmm.p0.size());
  int L = static_cast<int>(hmm.emit[0].size());
  auto flat = [](const std::vector<std::vector<double>>& m) {
    std::vector<double> out;
    for (const auto& row : m)
      for (double x : row) out.push_back(x);
    return out;
  };
  DynamicMixedNetwork dmn;
  dmn.n_state = 2;
  {
    NetBuilder b;
    b.discrete("x", K).discrete("y", L);
    b.cpt("x", {}, hmm.p0);
    b.cpt("y", {"x"}, flat(hmm.emit));
    dmn.prior = b.build();
  }
  {
    NetBuilder b;
    b.discrete("x'", K).discrete("y'", L).discrete("x", K).discrete("y", L);
    b.net.cpd_free = {0, 1};
    b.cpt("x", {"x'"}, flat(hmm.trans));
    b.cpt("y", {"x"}, flat(hmm.emit));
    dmn.transition = b.build();
  }
  dmn.validate();
  return dmn;
}

inline std::vector<Evidence> hmm_observations(const std::vector<int>& obs) {
  std::vector<Evidence> out;
  for (int o : obs) {
    Evidence ev;
    ev.discrete[1] = o;  // y has state id 1
    out.push_back(ev);
  }
  return out;
}

inline double tv_distance(const std::vector<double>& a,
                          const std::vector<double>& b) {
  double d = 0.0;
  for (std::size_t k = 0; k < a.size(); ++k) d += std::abs(a[k] - b[k]);
  return 0.5 * d;
}

}  // namespace hdmn::test
