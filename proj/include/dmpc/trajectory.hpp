/*
 Copyright 2026 The sensi-dmpc Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#ifndef DMPC_TRAJECTORY_HPP
#define DMPC_TRAJECTORY_HPP

#include <Eigen/Core>

#include "dmpc/errors.hpp"

namespace dmpc {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Uniform time grid on [0, T] with `point_count` nodes.
struct TimeGrid {
  double horizon = 1.0;
  int point_count = 2;

  TimeGrid() = default;
  TimeGrid(double T, int n) : horizon(T), point_count(n) {
    if (T <= 0.0) throw ConfigError("TimeGrid: horizon must be positive");
    if (n < 2) throw ConfigError("TimeGrid: need at least 2 points");
  }

  double step() const { return horizon / (point_count - 1); }
  double node(int j) const { return step() * j; }

  bool operator==(const TimeGrid& other) const {
    return horizon == other.horizon && point_count == other.point_count;
  }
};

/// A vector-valued function of time sampled on a uniform grid.
///
/// Values are stored as a (dim x point_count) matrix, one column per node.
class Trajectory {
 public:
  Trajectory() = default;

  Trajectory(const TimeGrid& grid, int dim)
      : grid_(grid), values_(MatrixXd::Zero(dim, grid.point_count)) {}

  Trajectory(const TimeGrid& grid, MatrixXd values) : grid_(grid), values_(std::move(values)) {
    if (values_.cols() != grid.point_count)
      throw DimensionMismatch("Trajectory: column count does not match grid");
  }

  static Trajectory constant(const TimeGrid& grid, const VectorXd& value) {
    Trajectory t(grid, static_cast<int>(value.size()));
    t.values_.colwise() = value;
    return t;
  }

  const TimeGrid& grid() const { return grid_; }
  int dim() const { return static_cast<int>(values_.rows()); }
  int nodes() const { return grid_.point_count; }

  MatrixXd& values() { return values_; }
  const MatrixXd& values() const { return values_; }

  Eigen::Ref<VectorXd> at(int node) { return values_.col(node); }
  Eigen::Ref<const VectorXd> at(int node) const { return values_.col(node); }

  /// Piecewise-linear interpolation; t is clamped to [0, T].
  VectorXd interpolate(double t) const {
    const double h = grid_.step();
    if (t <= 0.0) return values_.col(0);
    if (t >= grid_.horizon) return values_.col(grid_.point_count - 1);
    const int j = std::min(static_cast<int>(t / h), grid_.point_count - 2);
    const double s = (t - j * h) / h;
    return (1.0 - s) * values_.col(j) + s * values_.col(j + 1);
  }

  bool all_finite() const { return values_.allFinite(); }

  /// L-infinity function norm: max over nodes of the Euclidean norm.
  double max_node_norm() const {
    double m = 0.0;
    for (int j = 0; j < values_.cols(); ++j) m = std::max(m, values_.col(j).norm());
    return m;
  }

 private:
  TimeGrid grid_;
  MatrixXd values_;
};

/// Max over nodes of the Euclidean norm of the difference.
inline double linf_distance(const Trajectory& a, const Trajectory& b) {
  double m = 0.0;
  for (int j = 0; j < a.values().cols(); ++j) m = std::max(m, (a.at(j) - b.at(j)).norm());
  return m;
}

/// Axis-aligned box of admissible inputs. The origin must lie strictly inside.
struct Box {
  VectorXd lower;
  VectorXd upper;

  Box() = default;
  Box(VectorXd lo, VectorXd up) : lower(std::move(lo)), upper(std::move(up)) {
    if (lower.size() != upper.size()) throw DimensionMismatch("Box: bound sizes differ");
    for (int i = 0; i < lower.size(); ++i)
      if (!(lower[i] < upper[i])) throw ConfigError("Box: lower bound not below upper bound");
  }

  static Box symmetric(int dim, double magnitude) {
    return Box(VectorXd::Constant(dim, -magnitude), VectorXd::Constant(dim, magnitude));
  }

  int dim() const { return static_cast<int>(lower.size()); }

  bool contains_origin_strictly() const {
    return (lower.array() < 0.0).all() && (upper.array() > 0.0).all();
  }

  VectorXd clamp(const VectorXd& u) const { return u.cwiseMax(lower).cwiseMin(upper); }

  bool contains(const VectorXd& u, double tol = 0.0) const {
    return ((u - lower).array() >= -tol).all() && ((upper - u).array() >= -tol).all();
  }

  /// Cartesian product of boxes.
  static Box product(const std::vector<Box>& boxes) {
    int dim = 0;
    for (const auto& b : boxes) dim += b.dim();
    VectorXd lo(dim), up(dim);
    int off = 0;
    for (const auto& b : boxes) {
      lo.segment(off, b.dim()) = b.lower;
      up.segment(off, b.dim()) = b.upper;
      off += b.dim();
    }
    return Box(std::move(lo), std::move(up));
  }
};

inline void clamp_in_place(Trajectory& u, const Box& box) {
  for (int j = 0; j < u.nodes(); ++j) u.at(j) = box.clamp(u.at(j));
}

}  // namespace dmpc

#endif  // DMPC_TRAJECTORY_HPP
