#include "hdmn/transport.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <queue>
#include <set>
#include <sstream>

namespace hdmn {

// ---- road graph ----

void RoadGraph::validate() const {
  for (std::size_t k = 0; k < vertices.size(); ++k)
    if (vertices[k].id != static_cast<int>(k))
      throw ModelError("road graph vertex ids must be dense");
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const Edge& e = edges[k];
    if (e.id != static_cast<int>(k))
      throw ModelError("road graph edge ids must be dense");
    if (e.v1 < 0 || e.v1 >= static_cast<int>(vertices.size()) || e.v2 < 0 ||
        e.v2 >= static_cast<int>(vertices.size()))
      throw ModelError("road graph edge endpoint out of range");
    if (!(e.length > 0.0)) throw ModelError("road graph edge length must be > 0");
  }
  if (edges.empty()) throw ModelError("road graph needs at least one edge");
  // connectivity over edges sharing vertices
  auto nb = edge_neighbors();
  std::vector<bool> seen(edges.size(), false);
  std::queue<int> q;
  q.push(0);
  seen[0] = true;
  int count = 1;
  while (!q.empty()) {
    int e = q.front();
    q.pop();
    for (int u : nb[static_cast<std::size_t>(e)])
      if (!seen[static_cast<std::size_t>(u)]) {
        seen[static_cast<std::size_t>(u)] = true;
        ++count;
        q.push(u);
      }
  }
  if (count != static_cast<int>(edges.size()))
    throw ModelError("road graph must be connected");
}

std::vector<std::vector<int>> RoadGraph::edge_neighbors() const {
  std::vector<std::vector<int>> touching(vertices.size());
  for (const Edge& e : edges) {
    touching[static_cast<std::size_t>(e.v1)].push_back(e.id);
    touching[static_cast<std::size_t>(e.v2)].push_back(e.id);
  }
  std::vector<std::vector<int>> nb(edges.size());
  for (const auto& group : touching)
    for (int a : group)
      for (int b : group)
        if (a != b) nb[static_cast<std::size_t>(a)].push_back(b);
  for (auto& v : nb) {
    std::sort(v.begin(), v.end());
    v.erase(std::unique(v.begin(), v.end()), v.end());
  }
  return nb;
}

std::pair<double, double> RoadGraph::point_on(int edge, double offset) const {
  const Edge& e = edges[static_cast<std::size_t>(edge)];
  const Vertex& a = vertices[static_cast<std::size_t>(e.v1)];
  const Vertex& b = vertices[static_cast<std::size_t>(e.v2)];
  double t = offset / e.length;
  return {a.x + t * (b.x - a.x), a.y + t * (b.y - a.y)};
}

double RoadGraph::distance_to_edge(double x, double y, int edge) const {
  const Edge& e = edges[static_cast<std::size_t>(edge)];
  const Vertex& a = vertices[static_cast<std::size_t>(e.v1)];
  const Vertex& b = vertices[static_cast<std::size_t>(e.v2)];
  double dx = b.x - a.x, dy = b.y - a.y;
  double len2 = dx * dx + dy * dy;
  double t = len2 > 0 ? ((x - a.x) * dx + (y - a.y) * dy) / len2 : 0.0;
  t = std::clamp(t, 0.0, 1.0);
  double px = a.x + t * dx, py = a.y + t * dy;
  return std::hypot(x - px, y - py);
}

int RoadGraph::nearest_edge(double x, double y) const {
  int best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (const Edge& e : edges) {
    double d = distance_to_edge(x, y, e.id);
    if (d < best_d) {
      best_d = d;
      best = e.id;
    }
  }
  return best;
}

std::vector<int> RoadGraph::edge_distance_to(
    const std::vector<int>& goal_edges) const {
  auto nb = edge_neighbors();
  std::vector<int> dist(edges.size(), std::numeric_limits<int>::max());
  std::queue<int> q;
  for (int e : goal_edges) {
    dist[static_cast<std::size_t>(e)] = 0;
    q.push(e);
  }
  while (!q.empty()) {
    int e = q.front();
    q.pop();
    for (int u : nb[static_cast<std::size_t>(e)])
      if (dist[static_cast<std::size_t>(u)] >
          dist[static_cast<std::size_t>(e)] + 1) {
        dist[static_cast<std::size_t>(u)] =
            dist[static_cast<std::size_t>(e)] + 1;
        q.push(u);
      }
  }
  return dist;
}

std::vector<int> RoadGraph::shortest_path_edges(int v_from, int v_to) const {
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> dist(vertices.size(), inf);
  std::vector<int> via_edge(vertices.size(), -1);
  std::vector<int> via_vertex(vertices.size(), -1);
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> q;
  dist[static_cast<std::size_t>(v_from)] = 0.0;
  q.emplace(0.0, v_from);
  while (!q.empty()) {
    auto [d, v] = q.top();
    q.pop();
    if (d > dist[static_cast<std::size_t>(v)]) continue;
    for (const Edge& e : edges) {
      int other = e.v1 == v ? e.v2 : (e.v2 == v ? e.v1 : -1);
      if (other < 0) continue;
      double nd = d + e.length;
      if (nd < dist[static_cast<std::size_t>(other)]) {
        dist[static_cast<std::size_t>(other)] = nd;
        via_edge[static_cast<std::size_t>(other)] = e.id;
        via_vertex[static_cast<std::size_t>(other)] = v;
        q.emplace(nd, other);
      }
    }
  }
  std::vector<int> path;
  int v = v_to;
  while (v != v_from && via_edge[static_cast<std::size_t>(v)] >= 0) {
    path.push_back(via_edge[static_cast<std::size_t>(v)]);
    v = via_vertex[static_cast<std::size_t>(v)];
  }
  std::reverse(path.begin(), path.end());
  return path;
}

RoadGraph grid_graph(int nx, int ny, double spacing) {
  RoadGraph g;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i)
      g.vertices.push_back({j * nx + i, i * spacing, j * spacing});
  int id = 0;
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      int v = j * nx + i;
      if (i + 1 < nx) g.edges.push_back({id++, v, v + 1, spacing});
      if (j + 1 < ny) g.edges.push_back({id++, v, v + nx, spacing});
    }
  g.validate();
  return g;
}

ModelVariant variant_from_string(const std::string& s) {
  if (s == "model1") return ModelVariant::Model1;
  if (s == "model2") return ModelVariant::Model2;
  if (s == "model3") return ModelVariant::Model3;
  throw ParamError("unknown model variant: " + s);
}

std::string to_string(ModelVariant v) {
  switch (v) {
    case ModelVariant::Model1: return "model1";
    case ModelVariant::Model2: return "model2";
    case ModelVariant::Model3: return "model3";
  }
  return "model1";
}

// ---- constraint rules ----

std::vector<ConstraintRelation> goal_switch_constraints(int D) {
  if (D < 1) throw ParamError("D must be >= 1");
  // placeholder ids: 0=eq', 1=f', 2=f'', 3=switch''
  std::vector<std::vector<int>> r14;
  for (int e = 0; e < 2; ++e)
    for (int fp = 0; fp <= D; ++fp) {
      int fn;
      if (e == 1)
        fn = fp == 0 ? D : fp - 1;  // on the goal: re-arm or count down
      else
        fn = 0;  // off the goal: counter stays cleared
      r14.push_back({e, fp, fn});
    }
  std::vector<std::vector<int>> r58;
  for (int fp = 0; fp <= D; ++fp)
    for (int fn = 0; fn <= D; ++fn) {
      int s = ((fp > 0) != (fn > 0)) ? 1 : 0;
      r58.push_back({fp, fn, s});
    }
  return {make_relation({0, 1, 2}, std::move(r14), "goal-dwell"),
          make_relation({1, 2, 3}, std::move(r58), "goal-switch-gate")};
}

// ---- model builder ----

namespace {

int preferred_goal(int d, int w, int n_goals) { return (d + w) % n_goals; }

std::vector<double> goal_transition_row(int pref, int n_goals, double stick) {
  std::vector<double> row(static_cast<std::size_t>(n_goals),
                          (1.0 - stick) / n_goals);
  row[static_cast<std::size_t>(pref)] += stick;
  return row;
}

void set_cpt(MixedNetwork& net, VarId child, std::vector<VarId> parents,
             std::vector<double> table) {
  DiscreteCPD c;
  c.child = child;
  c.parents = std::move(parents);
  c.table = std::move(table);
  net.parents[static_cast<std::size_t>(child)] = c.parents;
  net.cpds[static_cast<std::size_t>(child)] = std::move(c);
}

void set_lg(MixedNetwork& net, VarId child, std::vector<VarId> dp,
            std::vector<VarId> cp, std::vector<LinearGaussianCPD::Row> rows) {
  LinearGaussianCPD c;
  c.child = child;
  c.discrete_parents = std::move(dp);
  c.continuous_parents = std::move(cp);
  c.rows = std::move(rows);
  auto& ps = net.parents[static_cast<std::size_t>(child)];
  ps = c.discrete_parents;
  ps.insert(ps.end(), c.continuous_parents.begin(), c.continuous_parents.end());
  net.cpds[static_cast<std::size_t>(child)] = std::move(c);
}

std::vector<double> uniform_row(int k) {
  return std::vector<double>(static_cast<std::size_t>(k), 1.0 / k);
}

}  // namespace

TransportHDMN build_transport_model(const RoadGraph& graph,
                                    const std::vector<std::vector<int>>& goals,
                                    ModelVariant variant,
                                    const TransportParams& params) {
  graph.validate();
  if (goals.size() < 2) throw ParamError("at least two goals are required");
  {
    std::set<int> seen;
    for (const auto& gs : goals) {
      if (gs.empty()) throw ParamError("goal with empty edge set");
      for (int e : gs) {
        if (e < 0 || e >= static_cast<int>(graph.edges.size()))
          throw ParamError("goal edge out of range");
        if (!seen.insert(e).second)
          throw ParamError("goals must be disjoint edge sets");
      }
    }
  }
  if (params.D < 1) throw ParamError("D must be >= 1");

  TransportHDMN m;
  m.graph = graph;
  m.goals = goals;
  m.variant = variant;
  m.params = params;

  const int G = m.n_goals();
  const int R = m.n_routes();
  const int E = static_cast<int>(graph.edges.size());
  const int D = params.D;
  const double dt = params.tick_seconds;

  const bool has_context = variant == ModelVariant::Model1;
  const bool has_goals = variant != ModelVariant::Model3;

  std::vector<Variable> vars;
  auto add_disc = [&](VarId* slot, const std::string& name, int k) {
    Variable v;
    v.id = static_cast<VarId>(vars.size());
    v.name = name;
    v.kind = VarKind::Discrete;
    v.domain_size = k;
    *slot = v.id;
    vars.push_back(std::move(v));
  };
  auto add_cont = [&](VarId* slot, const std::string& name) {
    Variable v;
    v.id = static_cast<VarId>(vars.size());
    v.name = name;
    v.kind = VarKind::Continuous;
    *slot = v.id;
    vars.push_back(std::move(v));
  };
  if (has_context) {
    add_disc(&m.d, "d", 4);
    add_disc(&m.w, "w", 2);
  }
  if (has_goals) {
    add_disc(&m.g, "g", G);
    add_disc(&m.sw, "switch", 2);
    add_disc(&m.f, "f", D + 1);
    add_disc(&m.eq, "eq", 2);
    add_disc(&m.r, "r", R);
  }
  add_disc(&m.a, "a", E);
  add_cont(&m.o, "o");
  add_cont(&m.v, "v");
  add_cont(&m.yx, "yx");
  add_cont(&m.yy, "yy");
  add_cont(&m.yv, "yv");
  const int n = static_cast<int>(vars.size());

  // shared tables
  std::vector<double> eq_table;  // rows over (a, g), child eq
  for (int a = 0; a < E; ++a)
    for (int g = 0; g < G; ++g) {
      bool on = std::find(goals[static_cast<std::size_t>(g)].begin(),
                          goals[static_cast<std::size_t>(g)].end(),
                          a) != goals[static_cast<std::size_t>(g)].end();
      eq_table.push_back(on ? 0.0 : 1.0);
      eq_table.push_back(on ? 1.0 : 0.0);
    }

  std::vector<double> route_given_goal;  // rows over (g), child r
  for (int g = 0; g < G; ++g)
    for (int r = 0; r < R; ++r)
      route_given_goal.push_back(r % G == g ? 1.0 / G : 0.0);

  std::vector<double> route_transition;  // rows over (r', g''), child r''
  for (int rp = 0; rp < R; ++rp)
    for (int g = 0; g < G; ++g) {
      int to = rp % G;
      int next = to == g ? rp : to * G + g;
      for (int r = 0; r < R; ++r)
        route_transition.push_back(r == next ? 1.0 : 0.0);
    }

  auto nb = graph.edge_neighbors();
  std::vector<std::vector<int>> goal_dist;
  for (int g = 0; g < G; ++g)
    goal_dist.push_back(
        graph.edge_distance_to(goals[static_cast<std::size_t>(g)]));

  auto edge_step_row = [&](int a_prev, int to_goal /* -1 = unbiased */) {
    std::vector<double> row(static_cast<std::size_t>(E), 0.0);
    double len = graph.edges[static_cast<std::size_t>(a_prev)].length;
    double p_stay = std::clamp(1.0 - params.mean_speed * dt / len, 0.05, 0.9);
    const auto& neigh = nb[static_cast<std::size_t>(a_prev)];
    if (neigh.empty()) {
      row[static_cast<std::size_t>(a_prev)] = 1.0;
      return row;
    }
    row[static_cast<std::size_t>(a_prev)] = p_stay;
    std::vector<double> wts(neigh.size(), 1.0);
    if (to_goal >= 0) {
      for (std::size_t k = 0; k < neigh.size(); ++k)
        if (goal_dist[static_cast<std::size_t>(to_goal)]
                     [static_cast<std::size_t>(neigh[k])] <
            goal_dist[static_cast<std::size_t>(to_goal)]
                     [static_cast<std::size_t>(a_prev)])
          wts[k] = params.advance_bias;
    }
    double total_w = 0.0;
    for (double x : wts) total_w += x;
    for (std::size_t k = 0; k < neigh.size(); ++k)
      row[static_cast<std::size_t>(neigh[k])] =
          (1.0 - p_stay) * wts[k] / total_w;
    return row;
  };

  std::vector<double> edge_transition;
  if (has_goals) {
    for (int ap = 0; ap < E; ++ap)
      for (int r = 0; r < R; ++r) {
        auto row = edge_step_row(ap, r % G);
        edge_transition.insert(edge_transition.end(), row.begin(), row.end());
      }
  } else {
    for (int ap = 0; ap < E; ++ap) {
      auto row = edge_step_row(ap, -1);
      edge_transition.insert(edge_transition.end(), row.begin(), row.end());
    }
  }

  auto gps_rows = [&](int axis) {
    std::vector<LinearGaussianCPD::Row> rows;
    for (const auto& e : graph.edges) {
      const auto& v1 = graph.vertices[static_cast<std::size_t>(e.v1)];
      const auto& v2 = graph.vertices[static_cast<std::size_t>(e.v2)];
      LinearGaussianCPD::Row row;
      row.intercept = axis == 0 ? v1.x : v1.y;
      row.coeffs = {axis == 0 ? (v2.x - v1.x) / e.length
                              : (v2.y - v1.y) / e.length};
      row.variance = params.gps_noise_var;
      rows.push_back(std::move(row));
    }
    return rows;
  };

  // ---- prior slice ----
  MixedNetwork prior;
  prior.variables = vars;
  prior.parents.resize(static_cast<std::size_t>(n));
  prior.cpds.resize(static_cast<std::size_t>(n));

  if (has_context) {
    set_cpt(prior, m.d, {}, uniform_row(4));
    set_cpt(prior, m.w, {}, uniform_row(2));
  }
  if (has_goals) {
    set_cpt(prior, m.g, {}, uniform_row(G));
    set_cpt(prior, m.sw, {}, uniform_row(2));
    set_cpt(prior, m.f, {}, uniform_row(D + 1));
    set_cpt(prior, m.r, {m.g}, route_given_goal);
    // journeys start on an edge of the route's origin goal
    std::vector<double> a0;
    for (int r = 0; r < R; ++r) {
      const auto& from_edges = goals[static_cast<std::size_t>(r / G)];
      std::vector<double> row(static_cast<std::size_t>(E), 0.0);
      for (int e : from_edges)
        row[static_cast<std::size_t>(e)] =
            1.0 / static_cast<double>(from_edges.size());
      a0.insert(a0.end(), row.begin(), row.end());
    }
    set_cpt(prior, m.a, {m.r}, a0);
    set_cpt(prior, m.eq, {m.a, m.g}, eq_table);
  } else {
    set_cpt(prior, m.a, {}, uniform_row(E));
  }
  {
    std::vector<LinearGaussianCPD::Row> rows;
    for (const auto& e : graph.edges)
      rows.push_back({e.length / 2.0, {}, std::max(25.0, e.length / 4.0)});
    set_lg(prior, m.o, {m.a}, {}, rows);
  }
  set_lg(prior, m.v, {}, {}, {{params.mean_speed, {}, 4.0}});
  set_lg(prior, m.yx, {m.a}, {m.o}, gps_rows(0));
  set_lg(prior, m.yy, {m.a}, {m.o}, gps_rows(1));
  set_lg(prior, m.yv, {}, {m.v}, {{0.0, {1.0}, params.speed_obs_var}});
  prior.validate();

  // ---- transition slice ----
  MixedNetwork trans;
  for (int copy = 0; copy < 2; ++copy)
    for (const auto& v : vars) {
      Variable x = v;
      x.id = static_cast<VarId>(copy * n + v.id);
      if (copy == 0) x.name = v.name + "'";
      trans.variables.push_back(std::move(x));
    }
  trans.parents.resize(static_cast<std::size_t>(2 * n));
  trans.cpds.resize(static_cast<std::size_t>(2 * n));
  for (VarId i = 0; i < n; ++i) trans.cpd_free.insert(i);
  auto cur = [&](VarId s) { return static_cast<VarId>(s + n); };
  auto prev = [&](VarId s) { return s; };

  if (has_context) {
    set_cpt(trans, cur(m.d), {prev(m.d)},
            {0.98, 0.02, 0.0,  0.0,
             0.0,  0.98, 0.02, 0.0,
             0.0,  0.0,  0.98, 0.02,
             0.02, 0.0,  0.0,  0.98});
    set_cpt(trans, cur(m.w), {prev(m.w)}, {0.995, 0.005, 0.005, 0.995});
  }
  if (has_goals) {
    set_cpt(trans, cur(m.sw), {}, uniform_row(2));
    set_cpt(trans, cur(m.f), {}, uniform_row(D + 1));
    std::vector<double> gt;
    if (has_context) {
      for (int d = 0; d < 4; ++d)
        for (int w = 0; w < 2; ++w)
          for (int s = 0; s < 2; ++s)
            for (int gp = 0; gp < G; ++gp) {
              if (s == 0) {
                for (int g = 0; g < G; ++g) gt.push_back(g == gp ? 1.0 : 0.0);
              } else {
                auto row = goal_transition_row(preferred_goal(d, w, G), G,
                                               params.goal_stick);
                gt.insert(gt.end(), row.begin(), row.end());
              }
            }
      set_cpt(trans, cur(m.g), {cur(m.d), cur(m.w), cur(m.sw), prev(m.g)}, gt);
    } else {
      // Model-2 uses the context-averaged goal transition
      std::vector<double> avg(static_cast<std::size_t>(G), 0.0);
      for (int d = 0; d < 4; ++d)
        for (int w = 0; w < 2; ++w) {
          auto row = goal_transition_row(preferred_goal(d, w, G), G,
                                         params.goal_stick);
          for (int g = 0; g < G; ++g)
            avg[static_cast<std::size_t>(g)] +=
                row[static_cast<std::size_t>(g)] / 8.0;
        }
      for (int s = 0; s < 2; ++s)
        for (int gp = 0; gp < G; ++gp) {
          if (s == 0)
            for (int g = 0; g < G; ++g) gt.push_back(g == gp ? 1.0 : 0.0);
          else
            gt.insert(gt.end(), avg.begin(), avg.end());
        }
      set_cpt(trans, cur(m.g), {cur(m.sw), prev(m.g)}, gt);
    }
    set_cpt(trans, cur(m.r), {prev(m.r), cur(m.g)}, route_transition);
    set_cpt(trans, cur(m.a), {prev(m.a), cur(m.r)}, edge_transition);
    set_cpt(trans, cur(m.eq), {cur(m.a), cur(m.g)}, eq_table);
  } else {
    set_cpt(trans, cur(m.a), {prev(m.a)}, edge_transition);
  }
  {
    // offset advance; entering a new edge re-bases against the old length
    std::vector<LinearGaussianCPD::Row> rows;
    for (int ap = 0; ap < E; ++ap)
      for (int an = 0; an < E; ++an) {
        LinearGaussianCPD::Row row;
        row.intercept =
            an == ap ? 0.0
                     : -graph.edges[static_cast<std::size_t>(ap)].length;
        row.coeffs = {1.0, dt};
        row.variance = params.offset_noise_var;
        rows.push_back(std::move(row));
      }
    set_lg(trans, cur(m.o), {prev(m.a), cur(m.a)}, {prev(m.o), prev(m.v)},
           rows);
  }
  set_lg(trans, cur(m.v), {}, {prev(m.v)},
         {{(1.0 - params.speed_revert) * params.mean_speed,
           {params.speed_revert},
           params.speed_noise_var}});
  set_lg(trans, cur(m.yx), {cur(m.a)}, {cur(m.o)}, gps_rows(0));
  set_lg(trans, cur(m.yy), {cur(m.a)}, {cur(m.o)}, gps_rows(1));
  set_lg(trans, cur(m.yv), {}, {cur(m.v)}, {{0.0, {1.0}, params.speed_obs_var}});

  if (has_goals) {
    auto rules = goal_switch_constraints(D);
    std::map<VarId, VarId> to_model{{0, prev(m.eq)},
                                    {1, prev(m.f)},
                                    {2, cur(m.f)},
                                    {3, cur(m.sw)}};
    for (auto& rel : rules) {
      for (auto& v : rel.scope) v = to_model.at(v);
      trans.constraints.push_back(std::move(rel));
    }
  }
  {
    std::vector<std::vector<int>> allowed;
    for (int ap = 0; ap < E; ++ap) {
      allowed.push_back({ap, ap});
      for (int an : nb[static_cast<std::size_t>(ap)])
        allowed.push_back({ap, an});
    }
    trans.constraints.push_back(make_relation({prev(m.a), cur(m.a)},
                                              std::move(allowed),
                                              "edge-adjacency"));
  }
  trans.validate();

  m.dmn.prior = std::move(prior);
  m.dmn.transition = std::move(trans);
  m.dmn.n_state = n;
  m.dmn.validate();
  return m;
}

std::vector<int> TransportHDMN::route_edges(int route) const {
  int from = route_from(route), to = route_to(route);
  const auto& fe = goals[static_cast<std::size_t>(from)];
  const auto& te = goals[static_cast<std::size_t>(to)];
  if (from == to) return te;
  int v_from = graph.edges[static_cast<std::size_t>(fe.front())].v1;
  int v_to = graph.edges[static_cast<std::size_t>(te.front())].v1;
  std::vector<int> path = graph.shortest_path_edges(v_from, v_to);
  std::set<int> all(path.begin(), path.end());
  all.insert(te.begin(), te.end());
  return {all.begin(), all.end()};
}

// ---- simulation ----

std::vector<SimState> simulate_states(const TransportHDMN& model, int T,
                                      std::uint64_t seed) {
  if (T < 1) throw ParamError("T must be >= 1");
  const auto& p = model.params;
  const int G = model.n_goals();
  RngStream rng(RngStream::derive_key(seed, 0x51d3));

  const bool has_context = model.variant == ModelVariant::Model1;
  const bool has_goals = model.variant != ModelVariant::Model3;

  auto pick = [&](std::vector<double> probs) { return rng.categorical(probs); };

  const auto& trans = model.dmn.transition;
  const int n = model.dmn.n_state;
  auto cpt_row = [&](VarId state_var, const std::vector<int>& parent_vals) {
    const auto& cpd = std::get<DiscreteCPD>(
        *trans.cpds[static_cast<std::size_t>(state_var + n)]);
    std::size_t row = 0;
    std::size_t idx = 0;
    for (VarId pid : cpd.parents) {
      row = row * static_cast<std::size_t>(trans.var(pid).domain_size) +
            static_cast<std::size_t>(parent_vals[idx]);
      ++idx;
    }
    int k = trans.var(state_var + n).domain_size;
    return std::vector<double>(
        cpd.table.begin() +
            static_cast<std::ptrdiff_t>(row * static_cast<std::size_t>(k)),
        cpd.table.begin() +
            static_cast<std::ptrdiff_t>((row + 1) * static_cast<std::size_t>(k)));
  };

  std::vector<SimState> out;
  SimState s;
  s.d = has_context ? rng.uniform_int(4) : 0;
  s.w = has_context ? rng.uniform_int(2) : 0;
  if (has_goals) {
    s.g = rng.uniform_int(G);
    s.sw = rng.uniform_int(2);
    s.f = rng.uniform_int(p.D + 1);
    int from = rng.uniform_int(G);
    s.r = from * G + s.g;
    const auto& fe = model.goals[static_cast<std::size_t>(from)];
    s.a = fe[static_cast<std::size_t>(
        rng.uniform_int(static_cast<int>(fe.size())))];
    s.eq = std::find(model.goals[static_cast<std::size_t>(s.g)].begin(),
                     model.goals[static_cast<std::size_t>(s.g)].end(),
                     s.a) != model.goals[static_cast<std::size_t>(s.g)].end()
               ? 1
               : 0;
  } else {
    s.a = rng.uniform_int(static_cast<int>(model.graph.edges.size()));
  }
  double len0 = model.graph.edges[static_cast<std::size_t>(s.a)].length;
  s.o = len0 / 2.0 + std::sqrt(std::max(25.0, len0 / 4.0)) * rng.normal();
  s.v = p.mean_speed + 2.0 * rng.normal();
  out.push_back(s);

  for (int t = 1; t < T; ++t) {
    SimState ns;
    if (has_context) {
      ns.d = pick(cpt_row(model.d, {s.d}));
      ns.w = pick(cpt_row(model.w, {s.w}));
    }
    if (has_goals) {
      // rules (1)-(4) pin the counter, (5)-(8) pin the gate
      ns.f = s.eq == 1 ? (s.f == 0 ? p.D : s.f - 1) : 0;
      ns.sw = ((s.f > 0) != (ns.f > 0)) ? 1 : 0;
      if (ns.sw == 0) {
        ns.g = s.g;
      } else if (has_context) {
        ns.g = pick(goal_transition_row(preferred_goal(ns.d, ns.w, G), G,
                                        p.goal_stick));
      } else {
        std::vector<double> avg(static_cast<std::size_t>(G), 0.0);
        for (int d = 0; d < 4; ++d)
          for (int w = 0; w < 2; ++w) {
            auto row = goal_transition_row(preferred_goal(d, w, G), G,
                                           p.goal_stick);
            for (int g = 0; g < G; ++g)
              avg[static_cast<std::size_t>(g)] +=
                  row[static_cast<std::size_t>(g)] / 8.0;
          }
        ns.g = pick(avg);
      }
      int to = s.r % G;
      ns.r = to == ns.g ? s.r : to * G + ns.g;
      ns.a = pick(cpt_row(model.a, {s.a, ns.r}));
      ns.eq = std::find(model.goals[static_cast<std::size_t>(ns.g)].begin(),
                        model.goals[static_cast<std::size_t>(ns.g)].end(),
                        ns.a) !=
                      model.goals[static_cast<std::size_t>(ns.g)].end()
                  ? 1
                  : 0;
    } else {
      ns.a = pick(cpt_row(model.a, {s.a}));
    }
    double drop = ns.a == s.a
                      ? 0.0
                      : model.graph.edges[static_cast<std::size_t>(s.a)].length;
    ns.o = s.o + s.v * p.tick_seconds - drop +
           std::sqrt(p.offset_noise_var) * rng.normal();
    ns.v = (1.0 - p.speed_revert) * p.mean_speed + p.speed_revert * s.v +
           std::sqrt(p.speed_noise_var) * rng.normal();
    out.push_back(ns);
    s = ns;
  }
  return out;
}

Trajectory simulate(const TransportHDMN& model, int T, std::uint64_t seed) {
  auto states = simulate_states(model, T, seed);
  RngStream rng(RngStream::derive_key(seed, 0x0b51));
  Trajectory traj;
  traj.tick_seconds = model.params.tick_seconds;
  traj.seed = seed;
  for (int t = 0; t < T; ++t) {
    const SimState& s = states[static_cast<std::size_t>(t)];
    auto [px, py] = model.graph.point_on(s.a, s.o);
    TrajectoryStep step;
    step.tick = t;
    step.x = px + std::sqrt(model.params.gps_noise_var) * rng.normal();
    step.y = py + std::sqrt(model.params.gps_noise_var) * rng.normal();
    step.speed = s.v + std::sqrt(model.params.speed_obs_var) * rng.normal();
    step.true_edge = s.a;
    step.true_goal = s.g;
    step.true_route = s.r;
    step.true_offset = s.o;
    step.true_speed = s.v;
    traj.steps.push_back(step);
  }
  return traj;
}

std::vector<Evidence> observations_from(const TransportHDMN& model,
                                        const Trajectory& traj) {
  std::vector<Evidence> out;
  for (const auto& s : traj.steps) {
    Evidence ev;
    ev.continuous[model.yx] = s.x;
    ev.continuous[model.yy] = s.y;
    ev.continuous[model.yv] = s.speed;
    out.push_back(std::move(ev));
  }
  return out;
}

// ---- goal extraction ----

std::vector<ExtractedGoal> extract_goals(const RoadGraph& graph,
                                         const Trajectory& traj,
                                         double dwell_threshold_s,
                                         double cluster_radius,
                                         double stop_speed) {
  struct Stop {
    double x, y, dwell;
  };
  std::vector<Stop> stops;
  std::size_t k = 0;
  while (k < traj.steps.size()) {
    if (traj.steps[k].speed >= stop_speed) {
      ++k;
      continue;
    }
    std::size_t j = k;
    double sx = 0.0, sy = 0.0;
    while (j < traj.steps.size() && traj.steps[j].speed < stop_speed) {
      sx += traj.steps[j].x;
      sy += traj.steps[j].y;
      ++j;
    }
    double dwell = static_cast<double>(j - k) * traj.tick_seconds;
    if (dwell >= dwell_threshold_s)
      stops.push_back({sx / static_cast<double>(j - k),
                       sy / static_cast<double>(j - k), dwell});
    k = j;
  }

  std::vector<int> parent(stops.size());
  for (std::size_t i = 0; i < stops.size(); ++i) parent[i] = static_cast<int>(i);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x)
      x = parent[static_cast<std::size_t>(x)] =
          parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    return x;
  };
  for (std::size_t i = 0; i < stops.size(); ++i)
    for (std::size_t j = i + 1; j < stops.size(); ++j)
      if (std::hypot(stops[i].x - stops[j].x, stops[i].y - stops[j].y) <=
          cluster_radius)
        parent[static_cast<std::size_t>(find(static_cast<int>(i)))] =
            find(static_cast<int>(j));

  std::map<int, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < stops.size(); ++i)
    members[find(static_cast<int>(i))].push_back(i);

  std::vector<ExtractedGoal> out;
  for (auto& [root, ms] : members) {
    ExtractedGoal g;
    double mx = 0.0, my = 0.0;
    for (std::size_t i : ms) {
      mx += stops[i].x;
      my += stops[i].y;
      g.dwell_seconds = std::max(g.dwell_seconds, stops[i].dwell);
    }
    g.x = mx / static_cast<double>(ms.size());
    g.y = my / static_cast<double>(ms.size());
    for (const auto& e : graph.edges)
      if (graph.distance_to_edge(g.x, g.y, e.id) <= cluster_radius)
        g.edges.push_back(e.id);
    if (g.edges.empty()) g.edges.push_back(graph.nearest_edge(g.x, g.y));
    out.push_back(std::move(g));
  }
  return out;
}

// ---- scoring ----

namespace {

int argmax_tie_lowest(const std::vector<double>& v) {
  int best = 0;
  for (std::size_t k = 1; k < v.size(); ++k)
    if (v[k] > v[static_cast<std::size_t>(best)]) best = static_cast<int>(k);
  return best;
}

int majority(const std::vector<int>& xs, int domain) {
  std::vector<int> count(static_cast<std::size_t>(domain), 0);
  for (int x : xs)
    if (x >= 0 && x < domain) count[static_cast<std::size_t>(x)] += 1;
  int best = 0;
  for (int k = 1; k < domain; ++k)
    if (count[static_cast<std::size_t>(k)] >
        count[static_cast<std::size_t>(best)])
      best = k;
  return best;
}

}  // namespace

ScoreReport predict_and_score(const TransportHDMN& model,
                              const std::vector<BeliefState>& beliefs,
                              const Trajectory& traj) {
  if (beliefs.size() != traj.steps.size())
    throw ParamError("filter output must align with the trajectory ticks");
  const int G = model.n_goals();
  const std::size_t T = traj.steps.size();

  std::vector<int> pred_goal(T, -1), pred_route(T, -1), pred_edge(T, -1);
  for (std::size_t t = 0; t < T; ++t) {
    const BeliefState& b = beliefs[t];
    if (model.g >= 0 && b.discrete.count(model.g)) {
      pred_goal[t] = argmax_tie_lowest(b.discrete.at(model.g));
    } else if (model.a >= 0 && b.discrete.count(model.a)) {
      // base model: the goal nearest to the tracked position
      int edge = argmax_tie_lowest(b.discrete.at(model.a));
      double off =
          b.continuous.count(model.o)
              ? b.continuous.at(model.o).mean(0)
              : model.graph.edges[static_cast<std::size_t>(edge)].length / 2;
      off = std::clamp(
          off, 0.0, model.graph.edges[static_cast<std::size_t>(edge)].length);
      auto [px, py] = model.graph.point_on(edge, off);
      double best_d = std::numeric_limits<double>::infinity();
      for (int g = 0; g < G; ++g)
        for (int e : model.goals[static_cast<std::size_t>(g)]) {
          double dd = model.graph.distance_to_edge(px, py, e);
          if (dd < best_d) {
            best_d = dd;
            pred_goal[t] = g;
          }
        }
    }
    if (model.r >= 0 && b.discrete.count(model.r))
      pred_route[t] = argmax_tie_lowest(b.discrete.at(model.r));
    if (model.a >= 0 && b.discrete.count(model.a))
      pred_edge[t] = argmax_tie_lowest(b.discrete.at(model.a));
  }

  ScoreReport rep;
  std::size_t start = 0;
  int correct_ticks = 0, scored_ticks = 0;
  double fp_sum = 0.0, fn_sum = 0.0;
  while (start < T) {
    std::size_t end = start;
    while (end < T && traj.steps[end].true_goal == traj.steps[start].true_goal)
      ++end;
    int true_goal = traj.steps[start].true_goal;
    std::vector<int> goals_in_trip, routes_in_trip;
    std::set<int> true_edges, pred_edges;
    for (std::size_t t = start; t < end; ++t) {
      goals_in_trip.push_back(pred_goal[t]);
      if (pred_route[t] >= 0) routes_in_trip.push_back(pred_route[t]);
      true_edges.insert(traj.steps[t].true_edge);
      if (pred_goal[t] == true_goal) ++correct_ticks;
      ++scored_ticks;
      if (pred_edge[t] >= 0) pred_edges.insert(pred_edge[t]);
    }
    rep.trips += 1;
    if (majority(goals_in_trip, G) == true_goal) rep.correct_trips += 1;

    std::set<int> route_set;
    if (!routes_in_trip.empty()) {
      int route = majority(routes_in_trip, model.n_routes());
      for (int e : model.route_edges(route)) route_set.insert(e);
    } else {
      route_set = pred_edges;  // base model: the tracked edges
    }
    int fp = 0, fn = 0;
    for (int e : route_set)
      if (!true_edges.count(e)) ++fp;
    for (int e : true_edges)
      if (!route_set.count(e)) ++fn;
    fp_sum += fp;
    fn_sum += fn;
    start = end;
  }
  rep.goal_accuracy =
      rep.trips > 0 ? 100.0 * rep.correct_trips / rep.trips : 0.0;
  rep.tick_accuracy =
      scored_ticks > 0 ? 100.0 * correct_ticks / scored_ticks : 0.0;
  rep.route_false_positive = rep.trips > 0 ? fp_sum / rep.trips : 0.0;
  rep.route_false_negative = rep.trips > 0 ? fn_sum / rep.trips : 0.0;
  return rep;
}

}  // namespace hdmn
