#include <doctest.h>

#include "hdmn/network.hpp"
#include "test_util.hpp"

using namespace hdmn;
using namespace hdmn::test;

TEST_CASE("a continuous parent of a discrete child is rejected") {
  NetBuilder b;
  b.continuous("x").discrete("d", 2);
  b.lg("x", {}, {}, {{0.0, {}, 1.0}});
  b.cpt("d", {}, {0.5, 0.5});
  b.net.parents[1] = {0};  // wire x as a parent of d behind the builder
  CHECK_THROWS_AS(b.net.validate(), ModelError);
}

TEST_CASE("every variable needs exactly one CPD") {
  NetBuilder b;
  b.discrete("d", 2);
  CHECK_THROWS_AS(b.net.validate(), ModelError);
}

TEST_CASE("CPT rows must sum to one") {
  NetBuilder b;
  b.discrete("d", 2);
  b.cpt("d", {}, {0.6, 0.6});
  CHECK_THROWS_AS(b.net.validate(), ModelError);
}

TEST_CASE("non-positive variance is rejected") {
  NetBuilder b;
  b.continuous("x");
  b.lg("x", {}, {}, {{0.0, {}, 0.0}});
  CHECK_THROWS_AS(b.net.validate(), ModelError);
}

TEST_CASE("cycles are rejected") {
  NetBuilder b;
  b.discrete("a", 2).discrete("b", 2);
  b.cpt("a", {"b"}, {0.5, 0.5, 0.5, 0.5});
  b.cpt("b", {"a"}, {0.5, 0.5, 0.5, 0.5});
  CHECK_THROWS_AS(b.net.validate(), ModelError);
}

TEST_CASE("constraint tuples outside the domain are rejected") {
  NetBuilder b;
  b.discrete("a", 2);
  b.cpt("a", {}, {0.5, 0.5});
  b.constraint({"a"}, {{3}});
  CHECK_THROWS_AS(b.net.validate(), ModelError);
}

// ---- relations ----

TEST_CASE("single-tuple relation join") {
  ConstraintRelation r1 = make_relation({0, 1}, {{0, 0}});
  ConstraintRelation r2 = make_relation({1, 2}, {{0, 1}});
  ConstraintRelation j = relation_join(r1, r2);
  CHECK(j.scope == std::vector<VarId>{0, 1, 2});
  REQUIRE(j.allowed.size() == 1);
  CHECK(j.allowed[0] == std::vector<int>{0, 0, 1});
}

TEST_CASE("projection deduplicates") {
  ConstraintRelation r = make_relation({0, 1}, {{0, 0}, {0, 1}});
  ConstraintRelation p = relation_project(r, {0});
  REQUIRE(p.allowed.size() == 1);
  CHECK(p.allowed[0] == std::vector<int>{0});
}

TEST_CASE("join keeps only tuples agreeing on shared variables") {
  ConstraintRelation r1 = make_relation({0, 1}, {{0, 0}, {1, 1}});
  ConstraintRelation r2 = make_relation({1, 2}, {{0, 0}, {0, 1}, {1, 0}});
  ConstraintRelation j = relation_join(r1, r2);
  CHECK(j.allowed ==
        std::vector<std::vector<int>>{{0, 0, 0}, {0, 0, 1}, {1, 1, 0}});
}

// ---- dynamic networks ----

namespace {

DynamicMixedNetwork two_state_chain() {
  // x: 2-state chain with a deterministic-ish transition
  DynamicMixedNetwork dmn;
  dmn.n_state = 1;
  {
    NetBuilder b;
    b.discrete("x", 2);
    b.cpt("x", {}, {0.25, 0.75});
    dmn.prior = b.build();
  }
  {
    NetBuilder b;
    b.discrete("x'", 2).discrete("x", 2);
    b.net.cpd_free = {0};
    b.cpt("x", {"x'"}, {0.9, 0.1, 0.2, 0.8});
    dmn.transition = b.build();
  }
  dmn.validate();
  return dmn;
}

}  // namespace

TEST_CASE("unroll produces the expected CPD and constraint counts") {
  DynamicMixedNetwork dmn = two_state_chain();
  dmn.transition.constraints.push_back(make_relation({0, 1}, {{0, 0}, {0, 1}, {1, 0}, {1, 1}}));
  MixedNetwork u1 = unroll(dmn, 1);
  int cpds = 0;
  for (const auto& c : u1.cpds) cpds += c.has_value() ? 1 : 0;
  CHECK(cpds == 2);  // prior x@0 + transition x@1
  MixedNetwork u5 = unroll(dmn, 5);
  CHECK(u5.constraints.size() == 5);  // once per transition copy
}

TEST_CASE("unrolled joint equals the product of slice conditionals") {
  DynamicMixedNetwork dmn = two_state_chain();
  MixedNetwork u = unroll(dmn, 3);
  const auto& p0 = std::get<DiscreteCPD>(*dmn.prior.cpds[0]).table;
  const auto& tr = std::get<DiscreteCPD>(*dmn.transition.cpds[1]).table;
  for (int x0 = 0; x0 < 2; ++x0)
    for (int x1 = 0; x1 < 2; ++x1)
      for (int x2 = 0; x2 < 2; ++x2)
        for (int x3 = 0; x3 < 2; ++x3) {
          std::map<VarId, int> asg{{0, x0}, {1, x1}, {2, x2}, {3, x3}};
          double direct = p0[static_cast<std::size_t>(x0)] *
                          tr[static_cast<std::size_t>(2 * x0 + x1)] *
                          tr[static_cast<std::size_t>(2 * x1 + x2)] *
                          tr[static_cast<std::size_t>(2 * x2 + x3)];
          double via = std::exp(log_density(u, asg, {}));
          CHECK(via == doctest::Approx(direct).epsilon(1e-12));
        }
}

TEST_CASE("interface contains exactly the previous-slice variables used by the next slice") {
  DynamicMixedNetwork dmn = two_state_chain();
  CHECK(dmn.interface_vars() == std::vector<VarId>{0});
}
