#pragma once

#include <string>
#include <vector>

#include "hdmn/exact.hpp"
#include "hdmn/network.hpp"

namespace hdmn {

// Road network: intersections with planar coordinates, road segments with
// lengths in meters.
struct RoadGraph {
  struct Vertex {
    int id = -1;
    double x = 0.0, y = 0.0;
  };
  struct Edge {
    int id = -1;
    int v1 = -1, v2 = -1;
    double length = 0.0;
  };
  std::vector<Vertex> vertices;
  std::vector<Edge> edges;

  void validate() const;  // endpoints declared, lengths > 0, connected
  std::vector<std::vector<int>> edge_neighbors() const;  // shared-vertex adjacency
  // planar position at `offset` meters from v1 along the edge (extrapolates)
  std::pair<double, double> point_on(int edge, double offset) const;
  double distance_to_edge(double x, double y, int edge) const;
  int nearest_edge(double x, double y) const;
  // per-edge hop distance to a goal edge set (multi-source BFS over edges)
  std::vector<int> edge_distance_to(const std::vector<int>& goal_edges) const;
  // edge ids along a shortest vertex path between two vertices
  std::vector<int> shortest_path_edges(int v_from, int v_to) const;
};

// axis-aligned grid road network for synthetic scenarios
RoadGraph grid_graph(int nx, int ny, double spacing);

enum class ModelVariant { Model1, Model2, Model3 };

ModelVariant variant_from_string(const std::string& s);
std::string to_string(ModelVariant v);

struct TransportParams {
  int D = 3;                      // dwell counter maximum
  double tick_seconds = 5.0;
  double mean_speed = 10.0;       // m/s
  double speed_revert = 0.8;      // AR(1) pull toward mean_speed
  double speed_noise_var = 1.0;
  double offset_noise_var = 4.0;  // motion noise per tick
  double gps_noise_var = 25.0;
  double speed_obs_var = 0.5;
  double advance_bias = 6.0;      // preference for on-route next edges
  double goal_stick = 0.8;        // P(preferred goal | switch, d, w) in Model-1
  double dwell_threshold_s = 900.0;  // 15 minutes
  double stop_speed = 0.5;        // m/s; below this counts as dwelling
  double cluster_radius = 50.0;   // meters
};

// The car-travel activity model. Ids follow the variant's state layout;
// absent variables are -1.
struct TransportHDMN {
  DynamicMixedNetwork dmn;
  ModelVariant variant = ModelVariant::Model1;
  RoadGraph graph;
  std::vector<std::vector<int>> goals;  // goal -> edge set
  TransportParams params;

  VarId d = -1, w = -1, g = -1, sw = -1, f = -1, eq = -1, r = -1;
  VarId a = -1, o = -1, v = -1, yx = -1, yy = -1, yv = -1;

  int n_goals() const { return static_cast<int>(goals.size()); }
  int n_routes() const { return n_goals() * n_goals(); }
  int route_from(int route) const { return route / n_goals(); }
  int route_to(int route) const { return route % n_goals(); }
  // canonical edge set of a route (shortest path between goal anchors)
  std::vector<int> route_edges(int route) const;
};

// Rules (1)-(4) and (5)-(8) as two relations over placeholder ids
// 0=eq_{t-1}, 1=f_{t-1}, 2=f_t, 3=switch_t; the model builder renames them.
std::vector<ConstraintRelation> goal_switch_constraints(int D);

TransportHDMN build_transport_model(const RoadGraph& graph,
                                    const std::vector<std::vector<int>>& goals,
                                    ModelVariant variant,
                                    const TransportParams& params);

// ---- trajectories ----

struct TrajectoryStep {
  int tick = 0;
  double x = 0.0, y = 0.0, speed = 0.0;  // noisy observation
  int true_edge = -1;
  int true_goal = -1;
  int true_route = -1;
  double true_offset = 0.0;
  double true_speed = 0.0;
};

struct Trajectory {
  double tick_seconds = 5.0;
  std::uint64_t seed = 0;
  std::string scenario_id;
  std::vector<TrajectoryStep> steps;
};

// Ancestral sampling from the true model; rule-determined variables are
// computed from their guards, which together with the gate partition makes
// the draw exact under the constraint semantics.
Trajectory simulate(const TransportHDMN& model, int T, std::uint64_t seed);

// per-tick evidence (the y variables) for a model variant
std::vector<Evidence> observations_from(const TransportHDMN& model,
                                        const Trajectory& traj);

// internal ground-truth sample of one run; exposed for testing
struct SimState {
  int d = 0, w = 0, g = 0, sw = 0, f = 0, eq = 0, r = 0, a = 0;
  double o = 0.0, v = 0.0;
};
std::vector<SimState> simulate_states(const TransportHDMN& model, int T,
                                      std::uint64_t seed);

// ---- goal extraction ----

struct ExtractedGoal {
  double x = 0.0, y = 0.0;      // cluster centroid
  std::vector<int> edges;       // covering edge set
  double dwell_seconds = 0.0;   // longest member dwell
};

std::vector<ExtractedGoal> extract_goals(const RoadGraph& graph,
                                         const Trajectory& traj,
                                         double dwell_threshold_s = 900.0,
                                         double cluster_radius = 50.0,
                                         double stop_speed = 0.5);

// ---- scoring ----

struct ScoreReport {
  int trips = 0;
  int correct_trips = 0;
  double goal_accuracy = 0.0;      // percent of trips predicted correctly
  double tick_accuracy = 0.0;      // percent of en-route ticks
  double route_false_positive = 0.0;  // mean predicted-but-untraveled edges per trip
  double route_false_negative = 0.0;  // mean traveled-but-unpredicted edges per trip
};

ScoreReport predict_and_score(const TransportHDMN& model,
                              const std::vector<BeliefState>& beliefs,
                              const Trajectory& traj);

}  // namespace hdmn
