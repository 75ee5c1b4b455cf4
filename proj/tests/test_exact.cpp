#include <doctest.h>

#include <cmath>

#include "hdmn/exact.hpp"
#include "test_util.hpp"

using namespace hdmn;
using namespace hdmn::test;

namespace {

void check_against_brute_force(const MixedNetwork& net, const Evidence& ev,
                               double dtol = 1e-9, double ctol = 1e-6) {
  Marginals bf, jt;
  try {
    bf = brute_force_marginals(net, ev);
  } catch (const InconsistentEvidenceError&) {
    CHECK_THROWS_AS(jtc_infer(net, ev), InconsistentEvidenceError);
    return;
  }
  jt = jtc_infer(net, ev);
  REQUIRE(jt.discrete.size() == bf.discrete.size());
  for (auto& [v, probs] : bf.discrete) {
    REQUIRE(jt.discrete.count(v));
    for (std::size_t k = 0; k < probs.size(); ++k)
      CHECK(std::abs(jt.discrete.at(v)[k] - probs[k]) <= dtol);
  }
  for (auto& [v, mo] : bf.continuous) {
    REQUIRE(jt.continuous.count(v));
    double scale_m = std::max(1.0, std::abs(mo.mean(0)));
    double scale_v = std::max(1.0, std::abs(mo.cov(0, 0)));
    CHECK(std::abs(jt.continuous.at(v).mean(0) - mo.mean(0)) <= ctol * scale_m);
    CHECK(std::abs(jt.continuous.at(v).cov(0, 0) - mo.cov(0, 0)) <= ctol * scale_v);
  }
  CHECK(std::abs(jt.log_mass - bf.log_mass) <=
        1e-9 * std::max(1.0, std::abs(bf.log_mass)));
}

}  // namespace

TEST_CASE("tree-structured discrete network equals brute force exactly") {
  NetBuilder b;
  b.discrete("r", 2).discrete("a", 2).discrete("b", 3);
  b.cpt("r", {}, {0.3, 0.7});
  b.cpt("a", {"r"}, {0.9, 0.1, 0.25, 0.75});
  b.cpt("b", {"a"}, {0.2, 0.3, 0.5, 0.6, 0.3, 0.1});
  MixedNetwork net = b.build();
  check_against_brute_force(net, {});
  Evidence ev;
  ev.discrete[2] = 1;
  check_against_brute_force(net, ev);
}

TEST_CASE("goal-switch style determinism propagates through jtc") {
  // eq and fprev force fnext = D (here D = 2) via a constraint
  NetBuilder b;
  b.discrete("eq", 2).discrete("fprev", 3).discrete("fnext", 3);
  b.cpt("eq", {}, {0.0, 1.0});     // on the goal
  b.cpt("fprev", {}, {1.0, 0.0, 0.0});  // counter at zero
  b.cpt("fnext", {}, {1.0 / 3, 1.0 / 3, 1.0 / 3});
  // rules (1)-(4) shape over (eq, fprev, fnext) with D = 2
  std::vector<std::vector<int>> allowed;
  for (int e = 0; e < 2; ++e)
    for (int fp = 0; fp < 3; ++fp) {
      int fn = e == 1 ? (fp == 0 ? 2 : fp - 1) : 0;
      allowed.push_back({e, fp, fn});
    }
  b.constraint({"eq", "fprev", "fnext"}, allowed);
  MixedNetwork net = b.build();
  Marginals m = jtc_infer(net, {});
  CHECK(m.discrete.at(2)[2] == doctest::Approx(1.0));  // fnext = D with mass 1
  check_against_brute_force(net, {});
}

TEST_CASE("random hybrid mixed networks match brute force") {
  int tested = 0;
  for (std::uint64_t seed = 1; tested < 40 && seed < 200; ++seed) {
    MixedNetwork net = random_hmn(seed);
    Evidence ev = random_evidence(net, seed * 31 + 7);
    try {
      brute_force_marginals(net, ev);
    } catch (const InconsistentEvidenceError&) {
      continue;
    } catch (const ParamError&) {
      continue;
    }
    check_against_brute_force(net, ev);
    ++tested;
  }
  CHECK(tested == 40);
}

TEST_CASE("all-zero calibration raises an inconsistency error") {
  NetBuilder b;
  b.discrete("x", 2).discrete("y", 2);
  b.cpt("x", {}, {0.5, 0.5});
  b.cpt("y", {"x"}, {1.0, 0.0, 1.0, 0.0});
  b.constraint({"y"}, {{1}});
  MixedNetwork net = b.build();
  CHECK_THROWS_AS(jtc_infer(net, {}), InconsistentEvidenceError);
}

// ---- exact_filter ----

TEST_CASE("binary HMM filtering matches the hand-coded forward recursion") {
  Hmm hmm;
  hmm.p0 = {0.6, 0.4};
  hmm.trans = {{0.7, 0.3}, {0.15, 0.85}};
  hmm.emit = {{0.8, 0.2}, {0.3, 0.7}};
  std::vector<int> obs{0, 1, 1, 0, 1};
  DynamicMixedNetwork dmn = hmm_dmn(hmm);
  auto beliefs = exact_filter(dmn, hmm_observations(obs));
  auto oracle = forward_algorithm(hmm, obs);
  REQUIRE(beliefs.size() == obs.size());
  for (std::size_t t = 0; t < obs.size(); ++t) {
    REQUIRE(beliefs[t].discrete.count(0));
    for (int k = 0; k < 2; ++k)
      CHECK(beliefs[t].discrete.at(0)[static_cast<std::size_t>(k)] ==
            doctest::Approx(oracle[t][static_cast<std::size_t>(k)]).epsilon(1e-9));
    CHECK_FALSE(beliefs[t].collapse_flagged);
  }
}

TEST_CASE("prediction without observations pushes the prior through the chain") {
  Hmm hmm;
  hmm.p0 = {0.25, 0.75};
  hmm.trans = {{0.9, 0.1}, {0.2, 0.8}};
  hmm.emit = {{0.5, 0.5}, {0.5, 0.5}};  // uninformative emissions
  DynamicMixedNetwork dmn = hmm_dmn(hmm);
  std::vector<Evidence> obs(4);  // nothing observed
  auto beliefs = exact_filter(dmn, obs);
  std::vector<double> p = hmm.p0;
  for (std::size_t t = 0; t < obs.size(); ++t) {
    if (t > 0) {
      std::vector<double> next(2, 0.0);
      for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j)
          next[static_cast<std::size_t>(j)] +=
              p[static_cast<std::size_t>(i)] *
              hmm.trans[static_cast<std::size_t>(i)][static_cast<std::size_t>(j)];
      p = next;
    }
    for (int k = 0; k < 2; ++k)
      CHECK(beliefs[t].discrete.at(0)[static_cast<std::size_t>(k)] ==
            doctest::Approx(p[static_cast<std::size_t>(k)]).epsilon(1e-9));
  }
}

TEST_CASE("deterministic transitions with consistent evidence give point beliefs") {
  Hmm hmm;
  hmm.p0 = {1.0, 0.0};
  hmm.trans = {{0.0, 1.0}, {1.0, 0.0}};  // alternator
  hmm.emit = {{1.0, 0.0}, {0.0, 1.0}};   // y = x
  DynamicMixedNetwork dmn = hmm_dmn(hmm);
  std::vector<int> obs{0, 1, 0, 1};
  auto beliefs = exact_filter(dmn, hmm_observations(obs));
  for (std::size_t t = 0; t < obs.size(); ++t)
    CHECK(beliefs[t].discrete.at(0)[static_cast<std::size_t>(obs[t])] ==
          doctest::Approx(1.0));
}

TEST_CASE("zero-probability observations raise with the slice index") {
  Hmm hmm;
  hmm.p0 = {1.0, 0.0};
  hmm.trans = {{1.0, 0.0}, {0.5, 0.5}};
  hmm.emit = {{1.0, 0.0}, {0.5, 0.5}};  // state 0 always emits 0
  DynamicMixedNetwork dmn = hmm_dmn(hmm);
  std::vector<int> obs{0, 0, 1};
  try {
    exact_filter(dmn, hmm_observations(obs));
    FAIL("expected inconsistency");
  } catch (const InconsistentEvidenceError& e) {
    CHECK(e.time_index == 2);
  }
}

TEST_CASE("exact_filter agrees with jtc on the unrolled network") {
  // small CLG state-space model with a discrete regime and continuous level
  DynamicMixedNetwork dmn;
  dmn.n_state = 3;  // s (regime), z (level), y (observation)
  {
    NetBuilder b;
    b.discrete("s", 2).continuous("z").continuous("y");
    b.cpt("s", {}, {0.5, 0.5});
    b.lg("z", {"s"}, {}, {{0.0, {}, 1.0}, {2.0, {}, 1.0}});
    b.lg("y", {}, {"z"}, {{0.0, {1.0}, 0.25}});
    dmn.prior = b.build();
  }
  {
    NetBuilder b;
    b.discrete("s'", 2).continuous("z'").continuous("y'");
    b.discrete("s", 2).continuous("z").continuous("y");
    b.net.cpd_free = {0, 1, 2};
    b.cpt("s", {"s'"}, {0.9, 0.1, 0.2, 0.8});
    b.lg("z", {"s"}, {"z'"}, {{0.0, {0.8}, 0.3}, {1.0, {0.8}, 0.3}});
    b.lg("y", {}, {"z"}, {{0.0, {1.0}, 0.25}});
    dmn.transition = b.build();
  }
  dmn.validate();

  std::vector<Evidence> obs(3);
  obs[0].continuous[2] = 0.4;
  obs[1].continuous[2] = 1.3;
  obs[2].continuous[2] = 2.1;

  auto beliefs = exact_filter(dmn, obs);
  bool collapsed = false;
  for (const auto& b : beliefs) collapsed = collapsed || b.collapse_flagged;

  MixedNetwork u = unroll(dmn, 2);
  Evidence uev;
  for (int t = 0; t < 3; ++t)
    uev.continuous[3 * t + 2] = obs[static_cast<std::size_t>(t)].continuous.at(2);
  Marginals m = jtc_infer(u, uev, {6, 7});  // s@2, z@2
  double tol = collapsed ? 5e-2 : 1e-9;
  CHECK(std::abs(beliefs[2].discrete.at(0)[0] - m.discrete.at(6)[0]) <= tol);
  CHECK(std::abs(beliefs[2].continuous.at(1).mean(0) - m.continuous.at(7).mean(0)) <=
        tol * std::max(1.0, std::abs(m.continuous.at(7).mean(0))));
}
