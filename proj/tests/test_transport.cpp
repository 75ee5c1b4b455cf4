#include <doctest.h>

#include <cmath>
#include <set>

#include "hdmn/ijgp.hpp"
#include "hdmn/transport.hpp"

using namespace hdmn;

namespace {

TransportHDMN demo_model(ModelVariant variant, int D = 2,
                         double gps_var = 25.0) {
  RoadGraph g = grid_graph(3, 3, 200.0);
  std::vector<std::vector<int>> goals{{0}, {11}, {5}};
  TransportParams p;
  p.D = D;
  p.gps_noise_var = gps_var;
  return build_transport_model(g, goals, variant, p);
}

}  // namespace

TEST_CASE("rule tables follow the switching semantics verbatim") {
  int D = 3;
  auto rules = goal_switch_constraints(D);
  REQUIRE(rules.size() == 2);
  const auto& dwell = rules[0];   // (eq', f', f'')
  const auto& gate = rules[1];    // (f', f'', switch'')

  // rule (1): on goal with expired counter re-arms to D
  CHECK(dwell.allows(std::vector<int>{1, 0, D}));
  // rule (2): on goal with positive counter counts down
  CHECK(dwell.allows(std::vector<int>{1, 3, 2}));
  CHECK_FALSE(dwell.allows(std::vector<int>{1, 3, 3}));
  // rules (3)-(4): off goal clears the counter
  for (int fp = 0; fp <= D; ++fp) {
    CHECK(dwell.allows(std::vector<int>{0, fp, 0}));
    for (int fn = 1; fn <= D; ++fn)
      CHECK_FALSE(dwell.allows(std::vector<int>{0, fp, fn}));
  }

  // exhaustiveness and mutual exclusivity: one f'' per (eq, f'), one switch
  // per (f', f'')
  CHECK(dwell.allowed.size() == 2 * static_cast<std::size_t>(D + 1));
  CHECK(gate.allowed.size() ==
        static_cast<std::size_t>(D + 1) * static_cast<std::size_t>(D + 1));
  for (int fp = 0; fp <= D; ++fp)
    for (int fn = 0; fn <= D; ++fn) {
      int expected = ((fp > 0) != (fn > 0)) ? 1 : 0;
      CHECK(gate.allows(std::vector<int>{fp, fn, expected}));
      CHECK_FALSE(gate.allows(std::vector<int>{fp, fn, 1 - expected}));
    }
}

TEST_CASE("model variants expose the documented variable sets") {
  TransportHDMN m1 = demo_model(ModelVariant::Model1);
  CHECK(m1.d >= 0);
  CHECK(m1.w >= 0);
  CHECK(m1.dmn.prior.var(m1.d).domain_size == 4);
  CHECK(m1.dmn.prior.var(m1.w).domain_size == 2);
  CHECK(m1.dmn.prior.var(m1.r).domain_size == 9);  // |goals|^2 with 3 goals
  CHECK(m1.dmn.prior.var(m1.f).domain_size == 3);  // 0..D with D=2

  TransportHDMN m2 = demo_model(ModelVariant::Model2);
  CHECK(m2.d == -1);
  CHECK(m2.w == -1);
  CHECK(m2.g >= 0);

  // the base model keeps only location, velocity and the observations
  TransportHDMN m3 = demo_model(ModelVariant::Model3);
  CHECK(m3.g == -1);
  CHECK(m3.r == -1);
  CHECK(m3.f == -1);
  CHECK(m3.eq == -1);
  CHECK(m3.a >= 0);
  CHECK(m3.o >= 0);
  CHECK(m3.v >= 0);
  CHECK(m3.dmn.n_state == 6);  // a, o, v and the three observation channels
}

TEST_CASE("Model-1 carries the switch rules plus the adjacency constraint") {
  TransportHDMN m = demo_model(ModelVariant::Model1);
  REQUIRE(m.dmn.transition.constraints.size() == 3);
  // the two rule relations encode the eight guarded rules exhaustively
  const auto& dwell = m.dmn.transition.constraints[0];
  const auto& gate = m.dmn.transition.constraints[1];
  CHECK(dwell.allowed.size() == 2 * 3);     // (eq, f') guards, D = 2
  CHECK(gate.allowed.size() == 3 * 3);      // (f', f'') guards
  const auto& adj = m.dmn.transition.constraints[2];
  CHECK(adj.name == "edge-adjacency");
}

TEST_CASE("interface covers goal, route, location, velocity and counter") {
  TransportHDMN m = demo_model(ModelVariant::Model1);
  auto iface = m.dmn.interface_vars();
  auto has = [&](VarId v) {
    return std::find(iface.begin(), iface.end(), v) != iface.end();
  };
  CHECK(has(m.g));
  CHECK(has(m.r));
  CHECK(has(m.f));
  CHECK(has(m.a));
  CHECK(has(m.o));
  CHECK(has(m.v));
  CHECK(has(m.eq));
}

TEST_CASE("simulated states never violate the transition constraints") {
  for (auto variant :
       {ModelVariant::Model1, ModelVariant::Model2, ModelVariant::Model3}) {
    TransportHDMN m = demo_model(variant);
    auto states = simulate_states(m, 300, 17);
    const int n = m.dmn.n_state;
    for (std::size_t t = 1; t < states.size(); ++t) {
      std::map<VarId, int> disc;
      auto put = [&](VarId s, int prev_val, int cur_val) {
        if (s < 0) return;
        disc[s] = prev_val;
        disc[s + n] = cur_val;
      };
      const SimState& p = states[t - 1];
      const SimState& c = states[t];
      put(m.d, p.d, c.d);
      put(m.w, p.w, c.w);
      put(m.g, p.g, c.g);
      put(m.sw, p.sw, c.sw);
      put(m.f, p.f, c.f);
      put(m.eq, p.eq, c.eq);
      put(m.r, p.r, c.r);
      put(m.a, p.a, c.a);
      CHECK(satisfies_constraints(m.dmn.transition, disc));
    }
  }
}

TEST_CASE("with D=1 a parked traveler is forced to switch after one dwell tick") {
  TransportHDMN m = demo_model(ModelVariant::Model1, 1);
  bool saw_rearm = false;
  for (std::uint64_t seed = 0; seed < 40; ++seed) {
    auto states = simulate_states(m, 200, seed);
    for (std::size_t t = 1; t < states.size(); ++t) {
      const SimState& p = states[t - 1];
      const SimState& c = states[t];
      if (p.eq == 1 && p.f == 0) {
        // arrival re-arm: counter jumps to D and the gate opens
        CHECK(c.f == 1);
        CHECK(c.sw == 1);
        saw_rearm = true;
      }
      if (p.eq == 1 && p.f == 1) {
        CHECK(c.f == 0);  // exactly one dwell tick later the counter expires
        CHECK(c.sw == 1);
      }
    }
  }
  CHECK(saw_rearm);
}

TEST_CASE("goal switch frequencies match the transition parameters") {
  TransportHDMN m = demo_model(ModelVariant::Model1);
  const int G = m.n_goals();
  // collect switch events until 10^4 draws
  std::map<std::pair<int, int>, std::vector<int>> draws;  // (d, w) -> targets
  int total = 0;
  for (std::uint64_t seed = 100; total < 10000; ++seed) {
    auto states = simulate_states(m, 4000, seed);
    for (std::size_t t = 1; t < states.size() && total < 10000; ++t)
      if (states[t].sw == 1) {
        draws[{states[t].d, states[t].w}].push_back(states[t].g);
        ++total;
      }
  }
  REQUIRE(total == 10000);
  for (auto& [key, targets] : draws) {
    if (targets.size() < 800) continue;  // not enough mass in this bucket
    auto [d, w] = key;
    int pref = (d + w) % G;
    double expected = m.params.goal_stick + (1.0 - m.params.goal_stick) / G;
    double freq = 0.0;
    for (int g : targets) freq += g == pref ? 1.0 : 0.0;
    freq /= static_cast<double>(targets.size());
    CHECK(std::abs(freq - expected) < 0.02);
  }
}

TEST_CASE("zero observation noise reproduces the ground-truth position") {
  TransportHDMN m = demo_model(ModelVariant::Model1, 2, 1e-300);
  Trajectory traj = simulate(m, 50, 3);
  for (const auto& s : traj.steps) {
    auto [px, py] = m.graph.point_on(s.true_edge, s.true_offset);
    CHECK(std::abs(s.x - px) < 1e-120);
    CHECK(std::abs(s.y - py) < 1e-120);
  }
}

TEST_CASE("goal extraction honors dwell threshold and cluster radius") {
  RoadGraph g = grid_graph(3, 3, 200.0);
  auto stopped = [](double x, double y, int ticks) {
    std::vector<TrajectoryStep> steps;
    for (int k = 0; k < ticks; ++k) {
      TrajectoryStep s;
      s.x = x;
      s.y = y;
      s.speed = 0.0;
      steps.push_back(s);
    }
    return steps;
  };
  auto moving = [](int ticks) {
    std::vector<TrajectoryStep> steps;
    for (int k = 0; k < ticks; ++k) {
      TrajectoryStep s;
      s.x = 100.0 + k;
      s.y = 50.0;
      s.speed = 10.0;
      steps.push_back(s);
    }
    return steps;
  };
  auto concat = [](std::vector<std::vector<TrajectoryStep>> parts) {
    Trajectory t;
    t.tick_seconds = 5.0;
    for (auto& p : parts)
      t.steps.insert(t.steps.end(), p.begin(), p.end());
    for (std::size_t k = 0; k < t.steps.size(); ++k)
      t.steps[k].tick = static_cast<int>(k);
    return t;
  };

  // one 20-minute stop -> exactly one goal (default threshold is 15 min)
  Trajectory one = concat({moving(40), stopped(0, 0, 240), moving(40)});
  CHECK(extract_goals(g, one).size() == 1);

  // a 10-minute stop is below the default threshold
  Trajectory shortstop = concat({moving(40), stopped(0, 0, 120), moving(40)});
  CHECK(extract_goals(g, shortstop).empty());

  // two stops 10 m apart merge under a 50 m radius; 500 m apart do not
  Trajectory near = concat(
      {stopped(0, 0, 240), moving(40), stopped(10, 0, 240), moving(10)});
  CHECK(extract_goals(g, near, 900.0, 50.0).size() == 1);
  Trajectory far = concat(
      {stopped(0, 0, 240), moving(40), stopped(400, 300, 240), moving(10)});
  CHECK(extract_goals(g, far, 900.0, 50.0).size() == 2);
}

namespace {

// all-point-mass beliefs matching a prescribed (goal, route, edge) sequence
std::vector<BeliefState> point_beliefs(const TransportHDMN& m,
                                       const std::vector<int>& goals,
                                       const std::vector<int>& routes,
                                       const std::vector<int>& edges) {
  std::vector<BeliefState> out;
  for (std::size_t t = 0; t < goals.size(); ++t) {
    BeliefState b;
    b.t = static_cast<int>(t);
    std::vector<double> pg(static_cast<std::size_t>(m.n_goals()), 0.0);
    pg[static_cast<std::size_t>(goals[t])] = 1.0;
    b.discrete[m.g] = pg;
    std::vector<double> pr(static_cast<std::size_t>(m.n_routes()), 0.0);
    pr[static_cast<std::size_t>(routes[t])] = 1.0;
    b.discrete[m.r] = pr;
    std::vector<double> pa(m.graph.edges.size(), 0.0);
    pa[static_cast<std::size_t>(edges[t])] = 1.0;
    b.discrete[m.a] = pa;
    out.push_back(std::move(b));
  }
  return out;
}

}  // namespace

TEST_CASE("perfect predictions score 100 with no route errors") {
  TransportHDMN m = demo_model(ModelVariant::Model1);
  int route = 1 * m.n_goals() + 2;  // from goal 1 to goal 2
  std::vector<int> redges = m.route_edges(route);
  Trajectory traj;
  traj.tick_seconds = 5.0;
  std::vector<int> pg, pr, pe;
  for (std::size_t k = 0; k < redges.size(); ++k) {
    TrajectoryStep s;
    s.tick = static_cast<int>(k);
    s.true_goal = 2;
    s.true_route = route;
    s.true_edge = redges[k];
    traj.steps.push_back(s);
    pg.push_back(2);
    pr.push_back(route);
    pe.push_back(redges[k]);
  }
  auto beliefs = point_beliefs(m, pg, pr, pe);
  ScoreReport rep = predict_and_score(m, beliefs, traj);
  CHECK(rep.trips == 1);
  CHECK(rep.goal_accuracy == doctest::Approx(100.0));
  CHECK(rep.route_false_positive == doctest::Approx(0.0));
  CHECK(rep.route_false_negative == doctest::Approx(0.0));
}

TEST_CASE("one extra predicted edge is one false positive") {
  TransportHDMN m = demo_model(ModelVariant::Model1);
  int route = 1 * m.n_goals() + 2;
  std::vector<int> redges = m.route_edges(route);
  REQUIRE(redges.size() >= 2);
  // traverse all route edges but the first: that edge becomes the FP
  std::vector<int> traveled(redges.begin() + 1, redges.end());
  Trajectory traj;
  traj.tick_seconds = 5.0;
  std::vector<int> pg, pr, pe;
  for (std::size_t k = 0; k < traveled.size(); ++k) {
    TrajectoryStep s;
    s.tick = static_cast<int>(k);
    s.true_goal = 2;
    s.true_route = route;
    s.true_edge = traveled[k];
    traj.steps.push_back(s);
    pg.push_back(2);
    pr.push_back(route);
    pe.push_back(traveled[k]);
  }
  ScoreReport rep = predict_and_score(m, point_beliefs(m, pg, pr, pe), traj);
  CHECK(rep.route_false_positive == doctest::Approx(1.0));
  CHECK(rep.route_false_negative == doctest::Approx(0.0));
}

TEST_CASE("an independent naive scorer agrees on a three-trip fixture") {
  TransportHDMN m = demo_model(ModelVariant::Model1);
  RngStream rng(4);
  // three trips with arbitrary predictions, some wrong
  std::vector<int> tg, pg, pr, pe, te;
  auto add_trip = [&](int true_goal, int pred_goal, int route, int len) {
    for (int k = 0; k < len; ++k) {
      tg.push_back(true_goal);
      pg.push_back(pred_goal);
      pr.push_back(route);
      int e = rng.uniform_int(static_cast<int>(m.graph.edges.size()));
      te.push_back(e);
      pe.push_back(e);
    }
  };
  add_trip(0, 0, 3, 6);
  add_trip(1, 2, 5, 5);
  add_trip(2, 2, 8, 7);
  Trajectory traj;
  traj.tick_seconds = 5.0;
  for (std::size_t k = 0; k < tg.size(); ++k) {
    TrajectoryStep s;
    s.tick = static_cast<int>(k);
    s.true_goal = tg[k];
    s.true_route = pr[k];
    s.true_edge = te[k];
    traj.steps.push_back(s);
  }
  ScoreReport rep = predict_and_score(m, point_beliefs(m, pg, pr, pe), traj);

  // naive recount: trips are runs of constant true goal; a trip counts when
  // the most common predicted goal equals the truth
  int trips = 0, correct = 0;
  std::size_t start = 0;
  double fp = 0, fn = 0;
  while (start < tg.size()) {
    std::size_t end = start;
    while (end < tg.size() && tg[end] == tg[start]) ++end;
    ++trips;
    std::map<int, int> votes;
    for (std::size_t k = start; k < end; ++k) votes[pg[k]] += 1;
    int best = -1, best_count = -1;
    for (auto& [goal, count] : votes)
      if (count > best_count) {
        best = goal;
        best_count = count;
      }
    if (best == tg[start]) ++correct;
    std::set<int> truth(te.begin() + static_cast<std::ptrdiff_t>(start),
                        te.begin() + static_cast<std::ptrdiff_t>(end));
    std::map<int, int> rvotes;
    for (std::size_t k = start; k < end; ++k) rvotes[pr[k]] += 1;
    int rbest = -1;
    best_count = -1;
    for (auto& [route, count] : rvotes)
      if (count > best_count) {
        rbest = route;
        best_count = count;
      }
    std::set<int> pred;
    for (int e : m.route_edges(rbest)) pred.insert(e);
    for (int e : pred)
      if (!truth.count(e)) fp += 1;
    for (int e : truth)
      if (!pred.count(e)) fn += 1;
    start = end;
  }
  CHECK(rep.trips == trips);
  CHECK(rep.goal_accuracy == doctest::Approx(100.0 * correct / trips));
  CHECK(rep.route_false_positive == doctest::Approx(fp / trips));
  CHECK(rep.route_false_negative == doctest::Approx(fn / trips));
}

TEST_CASE("overlapping goals are rejected") {
  RoadGraph g = grid_graph(3, 3, 200.0);
  TransportParams p;
  CHECK_THROWS_AS(
      build_transport_model(g, {{0, 1}, {1, 2}}, ModelVariant::Model1, p),
      ParamError);
  CHECK_THROWS_AS(build_transport_model(g, {{0}}, ModelVariant::Model1, p),
                  ParamError);
}

TEST_CASE("sequential filtering runs on the travel model and stays normalized") {
  TransportHDMN m = demo_model(ModelVariant::Model1);
  Trajectory traj = simulate(m, 12, 5);
  auto obs = observations_from(m, traj);
  IjgpSResult res = ijgp_s_filter(m.dmn, obs, {1, 20, 1e-6});
  REQUIRE(res.beliefs.size() == obs.size());
  for (const auto& b : res.beliefs) {
    double s = 0.0;
    for (double x : b.discrete.at(m.g)) s += x;
    CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(b.continuous.count(m.o));
    CHECK(b.continuous.at(m.o).cov(0, 0) > 0.0);
  }
  ScoreReport rep = predict_and_score(m, res.beliefs, traj);
  CHECK(rep.trips >= 1);
}
