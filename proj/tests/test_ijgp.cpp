#include <doctest.h>

#include <cmath>

#include "hdmn/ijgp.hpp"
#include "test_util.hpp"

using namespace hdmn;
using namespace hdmn::test;

namespace {

// random 4-state-variable dynamic model: three coupled binary interface
// variables plus an observed binary leaf
DynamicMixedNetwork random_dmn(std::uint64_t seed, bool with_constraint) {
  RngStream rng(RngStream::derive_key(seed, 0xD311));
  auto rand_cpt = [&](std::size_t rows, int k) {
    std::vector<double> t;
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> row;
      double z = 0.0;
      for (int i = 0; i < k; ++i) {
        row.push_back(0.08 + rng.uniform());
        z += row.back();
      }
      for (int i = 0; i < k; ++i) t.push_back(row[static_cast<std::size_t>(i)] / z);
    }
    return t;
  };
  DynamicMixedNetwork dmn;
  dmn.n_state = 4;  // x, y, z, o(bserved)
  {
    NetBuilder b;
    b.discrete("x", 2).discrete("y", 2).discrete("z", 2).discrete("o", 2);
    b.cpt("x", {}, rand_cpt(1, 2));
    b.cpt("y", {"x"}, rand_cpt(2, 2));
    b.cpt("z", {"y"}, rand_cpt(2, 2));
    b.cpt("o", {"x"}, rand_cpt(2, 2));
    dmn.prior = b.build();
  }
  {
    NetBuilder b;
    b.discrete("x'", 2).discrete("y'", 2).discrete("z'", 2).discrete("o'", 2);
    b.discrete("x", 2).discrete("y", 2).discrete("z", 2).discrete("o", 2);
    b.net.cpd_free = {0, 1, 2, 3};
    b.cpt("x", {"x'", "y'", "z'"}, rand_cpt(8, 2));
    b.cpt("y", {"y'"}, rand_cpt(2, 2));
    b.cpt("z", {"z'", "x"}, rand_cpt(4, 2));
    b.cpt("o", {"x"}, rand_cpt(2, 2));
    if (with_constraint) {
      // forbid one (y, z) combination per slice
      b.constraint({"y", "z"}, {{0, 0}, {0, 1}, {1, 1}});
    }
    dmn.transition = b.build();
  }
  dmn.validate();
  return dmn;
}

std::vector<Evidence> random_obs(std::uint64_t seed, int T) {
  RngStream rng(RngStream::derive_key(seed, 0x0B5));
  std::vector<Evidence> out(static_cast<std::size_t>(T));
  for (auto& ev : out) ev.discrete[3] = rng.uniform_int(2);
  return out;
}

}  // namespace

TEST_CASE("on a tree join graph ijgp equals jtc") {
  for (std::uint64_t seed : {2u, 9u, 21u}) {
    MixedNetwork net = random_hmn(seed, 6, 0, 1);
    Evidence ev = random_evidence(net, seed + 100);
    Marginals jt;
    try {
      jt = jtc_infer(net, ev);
    } catch (const InconsistentEvidenceError&) {
      continue;
    }
    auto order = elimination_order(net);
    JoinGraph tree = build_join_tree(net, order);
    std::vector<HybridPotential> factors;
    for (const auto& f : factor_potentials(net)) factors.push_back(condition(f, ev));
    CalibratedGraph cg = ijgp_run(tree, factors, factor_context(net), {});
    std::vector<VarId> queries;
    for (auto& [v, p] : jt.discrete) queries.push_back(v);
    Marginals ij = read_marginals(cg, queries);
    for (auto& [v, probs] : jt.discrete)
      for (std::size_t k = 0; k < probs.size(); ++k)
        CHECK(std::abs(ij.discrete.at(v)[k] - probs[k]) < 1e-9);
  }
}

TEST_CASE("i equal to treewidth reproduces brute force on a loopy network") {
  // 6 binary variables on a 3x2 grid-ish loop
  NetBuilder b;
  for (int i = 0; i < 6; ++i) b.discrete("v" + std::to_string(i), 2);
  b.cpt("v0", {}, {0.45, 0.55});
  b.cpt("v1", {"v0"}, {0.7, 0.3, 0.2, 0.8});
  b.cpt("v2", {"v0", "v1"}, {0.6, 0.4, 0.3, 0.7, 0.25, 0.75, 0.9, 0.1});
  b.cpt("v3", {"v1", "v2"}, {0.5, 0.5, 0.35, 0.65, 0.8, 0.2, 0.1, 0.9});
  b.cpt("v4", {"v2", "v3"}, {0.3, 0.7, 0.6, 0.4, 0.45, 0.55, 0.75, 0.25});
  b.cpt("v5", {"v3", "v4"}, {0.85, 0.15, 0.4, 0.6, 0.3, 0.7, 0.2, 0.8});
  MixedNetwork net = b.build();
  ScopeGraph g = scope_graph(net);
  int width = induced_width(g, elimination_order(g));
  CalibratedGraph cg = ijgp(net, width, {}, {});
  std::vector<VarId> qs{0, 1, 2, 3, 4, 5};
  Marginals ij = read_marginals(cg, qs);
  Marginals bf = brute_force_marginals(net, {});
  for (VarId v : qs)
    for (int k = 0; k < 2; ++k)
      CHECK(std::abs(ij.discrete.at(v)[static_cast<std::size_t>(k)] -
                     bf.discrete.at(v)[static_cast<std::size_t>(k)]) < 1e-6);
}

TEST_CASE("constraint zeros survive propagation exactly") {
  NetBuilder b;
  b.discrete("x", 2).discrete("y", 2);
  b.cpt("x", {}, {0.5, 0.5}).cpt("y", {}, {0.5, 0.5});
  b.constraint({"x", "y"}, {{0, 1}, {1, 0}});  // x != y
  MixedNetwork net = b.build();
  CalibratedGraph cg = ijgp(net, 1, {}, {});
  CHECK_FALSE(cg.inconsistent);
  // the cluster holding the constraint keeps belief 0 on (0,0) and (1,1)
  bool found = false;
  for (const auto& belief : cg.beliefs) {
    if (belief.dscope == std::vector<VarId>{0, 1}) {
      found = true;
      CHECK_FALSE(belief.entries[belief.index_of(std::vector<int>{0, 0})].has_value());
      CHECK_FALSE(belief.entries[belief.index_of(std::vector<int>{1, 1})].has_value());
    }
  }
  CHECK(found);
}

TEST_CASE("support inclusion holds against brute force") {
  int tested = 0;
  for (std::uint64_t seed = 1; tested < 50 && seed < 300; ++seed) {
    MixedNetwork net = random_hmn(seed, 5, 0, 3);
    std::map<std::vector<int>, double> joint;
    try {
      joint = brute_force_discrete_joint(net, {});
    } catch (const InconsistentEvidenceError&) {
      continue;
    }
    ++tested;
    CalibratedGraph cg = ijgp(net, 1, {}, {});
    std::vector<VarId> vars = net.discrete_vars();
    for (auto& [tuple, prob] : joint) {
      if (prob <= 0.0) continue;
      // every cluster must keep positive belief on the projection
      for (const auto& belief : cg.beliefs) {
        if (belief.dscope.empty()) continue;
        std::vector<int> proj;
        for (VarId v : belief.dscope)
          proj.push_back(tuple[static_cast<std::size_t>(v)]);
        const auto& e = belief.entries[belief.index_of(proj)];
        CHECK(e.has_value());
      }
    }
  }
  CHECK(tested == 50);
}

TEST_CASE("identical runs produce bit-identical messages") {
  MixedNetwork net = random_hmn(17, 6, 2, 2);
  Evidence ev = random_evidence(net, 5);
  CalibratedGraph a = ijgp(net, 2, ev, {});
  CalibratedGraph b = ijgp(net, 2, ev, {});
  REQUIRE(a.messages.size() == b.messages.size());
  for (std::size_t k = 0; k < a.messages.size(); ++k) {
    const auto& ma = a.messages[k];
    const auto& mb = b.messages[k];
    REQUIRE(ma.entries.size() == mb.entries.size());
    for (std::size_t e = 0; e < ma.entries.size(); ++e) {
      CHECK(ma.entries[e].has_value() == mb.entries[e].has_value());
      if (!ma.entries[e]) continue;
      CHECK(ma.entries[e]->g == mb.entries[e]->g);  // bitwise
      for (int i = 0; i < ma.entries[e]->h.size(); ++i)
        CHECK(ma.entries[e]->h(i) == mb.entries[e]->h(i));
    }
  }
}

// ---- sequential filtering ----

TEST_CASE("ijgp_s with i=1 equals the forward algorithm on an HMM") {
  Hmm hmm;
  hmm.p0 = {0.35, 0.65};
  hmm.trans = {{0.8, 0.2}, {0.3, 0.7}};
  hmm.emit = {{0.9, 0.1}, {0.25, 0.75}};
  std::vector<int> obs{1, 0, 0, 1, 1, 0};
  DynamicMixedNetwork dmn = hmm_dmn(hmm);
  IjgpSResult res = ijgp_s_filter(dmn, hmm_observations(obs), {1, 30, 1e-8});
  auto oracle = forward_algorithm(hmm, obs);
  REQUIRE(res.beliefs.size() == obs.size());
  for (std::size_t t = 0; t < obs.size(); ++t)
    for (int k = 0; k < 2; ++k)
      CHECK(std::abs(res.beliefs[t].discrete.at(0)[static_cast<std::size_t>(k)] -
                     oracle[t][static_cast<std::size_t>(k)]) < 1e-9);
}

TEST_CASE("slice template is built once and reused across t") {
  DynamicMixedNetwork dmn = random_dmn(3, false);
  SlicedJoinGraph tmpl = paste_interfaces(dmn, 2);
  CHECK(tmpl.graph.clusters.size() > 0);
  // the same structure serves t=1 and t=100: filtering long horizons works
  // with constant per-slice cluster count
  IjgpSResult r = ijgp_s_filter(dmn, random_obs(8, 12), {2, 30, 1e-7});
  CHECK(r.beliefs.size() == 12);
  for (const auto& b : r.beliefs) {
    double s = 0.0;
    for (double p : b.discrete.at(0)) s += p;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("full i-bound filtering matches exact_filter on random models") {
  int tested = 0;
  for (std::uint64_t seed = 1; tested < 10 && seed < 60; ++seed) {
    DynamicMixedNetwork dmn = random_dmn(seed, true);
    auto obs = random_obs(seed * 13 + 1, 6);
    std::vector<BeliefState> exact;
    try {
      exact = exact_filter(dmn, obs);
    } catch (const InconsistentEvidenceError&) {
      continue;
    }
    ++tested;
    IjgpSResult res = ijgp_s_filter(dmn, obs, {8, 60, 1e-10});
    for (std::size_t t = 0; t < obs.size(); ++t)
      for (VarId v = 0; v < 3; ++v) {
        double tv = tv_distance(res.beliefs[t].discrete.at(v),
                                exact[t].discrete.at(v));
        CHECK(tv <= 1e-6);
      }
  }
  CHECK(tested == 10);
}

TEST_CASE("i=2 is at least as accurate as i=1 on average") {
  double err1 = 0.0, err2 = 0.0;
  int tested = 0;
  for (std::uint64_t seed = 1; tested < 30 && seed < 200; ++seed) {
    DynamicMixedNetwork dmn = random_dmn(seed, true);
    auto obs = random_obs(seed * 7 + 3, 5);
    std::vector<BeliefState> exact;
    try {
      exact = exact_filter(dmn, obs);
    } catch (const InconsistentEvidenceError&) {
      continue;
    }
    IjgpSResult r1, r2;
    try {
      r1 = ijgp_s_filter(dmn, obs, {1, 40, 1e-9});
      r2 = ijgp_s_filter(dmn, obs, {2, 40, 1e-9});
    } catch (const InconsistentEvidenceError&) {
      continue;
    }
    ++tested;
    for (std::size_t t = 0; t < obs.size(); ++t)
      for (VarId v = 0; v < 3; ++v) {
        err1 += tv_distance(r1.beliefs[t].discrete.at(v), exact[t].discrete.at(v));
        err2 += tv_distance(r2.beliefs[t].discrete.at(v), exact[t].discrete.at(v));
      }
  }
  CHECK(tested == 30);
  CHECK(err2 <= err1 + 1e-12);
}

TEST_CASE("requesting an oversized i-bound clamps with a warning") {
  Hmm hmm;
  hmm.p0 = {0.5, 0.5};
  hmm.trans = {{0.6, 0.4}, {0.4, 0.6}};
  hmm.emit = {{0.7, 0.3}, {0.2, 0.8}};
  DynamicMixedNetwork dmn = hmm_dmn(hmm);
  SlicedJoinGraph tmpl = paste_interfaces(dmn, 50);
  CHECK(tmpl.i_used < 50);
  CHECK(!tmpl.warnings.empty());
}

TEST_CASE("an impossible observation raises with the slice index") {
  Hmm hmm;
  hmm.p0 = {1.0, 0.0};
  hmm.trans = {{1.0, 0.0}, {0.5, 0.5}};
  hmm.emit = {{1.0, 0.0}, {0.5, 0.5}};
  DynamicMixedNetwork dmn = hmm_dmn(hmm);
  try {
    ijgp_s_filter(dmn, hmm_observations({0, 1}), {1, 30, 1e-7});
    FAIL("expected inconsistency");
  } catch (const InconsistentEvidenceError& e) {
    CHECK(e.time_index == 1);
  }
}
