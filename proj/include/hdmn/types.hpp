#pragma once

#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace hdmn {

using VarId = std::int32_t;

enum class VarKind { Discrete, Continuous };

struct Variable {
  VarId id = -1;
  std::string name;
  VarKind kind = VarKind::Discrete;
  int domain_size = 0;                // discrete only, >= 1
  std::vector<std::string> labels;    // optional value labels, size == domain_size when set

  bool discrete() const { return kind == VarKind::Discrete; }
  bool continuous() const { return kind == VarKind::Continuous; }
};

// Evidence: discrete vars map to a value index, continuous vars to a real.
struct Evidence {
  std::map<VarId, int> discrete;
  std::map<VarId, double> continuous;

  bool empty() const { return discrete.empty() && continuous.empty(); }
  bool has(VarId v) const {
    return discrete.count(v) != 0 || continuous.count(v) != 0;
  }
};

// ---- error hierarchy ----

struct HdmnError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad model structure: CLG violation, cycles, missing CPDs, bad tables.
struct ModelError : HdmnError {
  using HdmnError::HdmnError;
};

// Bad caller-supplied parameter (i < 1, N < 1, ...).
struct ParamError : HdmnError {
  using HdmnError::HdmnError;
};

// File/stream parsing failures.
struct ParseError : HdmnError {
  using HdmnError::HdmnError;
};

// Attempt to integrate a continuous variable whose precision block is singular.
struct DegeneratePotentialError : HdmnError {
  using HdmnError::HdmnError;
};

// Evidence/constraints with zero joint mass.
struct InconsistentEvidenceError : HdmnError {
  explicit InconsistentEvidenceError(const std::string& msg, int t = -1)
      : HdmnError(msg), time_index(t) {}
  int time_index;  // slice where inconsistency surfaced, -1 for static queries
};

// Particle filter died (no live particles).
struct FilterFailureError : HdmnError {
  FilterFailureError(const std::string& msg, int t, std::int64_t rejections)
      : HdmnError(msg), time_index(t), total_rejections(rejections) {}
  int time_index;
  std::int64_t total_rejections;
};

// Internal invariant violation (dimension mismatch etc.).
struct InternalError : HdmnError {
  using HdmnError::HdmnError;
};

}  // namespace hdmn
