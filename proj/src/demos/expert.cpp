#include "rwl/demos/expert.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace rwl::demos {
namespace {

using namespace rwl::envs;

double clamp1(double v) { return std::clamp(v, -1.0, 1.0); }

// Scales the vector so that its largest component is at most 1 in magnitude.
void limit_max_norm(std::vector<double>& a) {
  double m = 0.0;
  for (double v : a) m = std::max(m, std::abs(v));
  if (m > 1.0) {
    for (double& v : a) v /= m;
  }
}

std::vector<double> pendulum_expert(const PendulumState& s) {
  using namespace pendulum;
  // theta_dd = k sin(theta) + b u with k = 3g/2l, b = 3/(m l^2).
  const double k = 3.0 * kGravity / (2.0 * kLength);
  const double b = 3.0 / (kMass * kLength * kLength);
  const double energy = 0.5 * s.omega * s.omega + k * (std::cos(s.phi) - 1.0);
  if (std::abs(s.phi) < 0.6 && std::abs(energy) < 4.0) {
    const double torque = -(k + 6.0) / b * s.phi - 1.6 * s.omega;
    return {clamp1(torque / kMaxTorque)};
  }
  // Pump energy toward the upright level (energy == 0).
  const double pump = -energy * s.omega;
  if (std::abs(pump) < 1e-9) return {1.0};
  return {pump > 0.0 ? 1.0 : -1.0};
}

std::vector<double> reacher_expert(const ReacherState& s) {
  using namespace reacher;
  const double tx = s.target_x, ty = s.target_y;
  const double r2 = tx * tx + ty * ty;
  double c2 = (r2 - kLink1 * kLink1 - kLink2 * kLink2) / (2.0 * kLink1 * kLink2);
  c2 = std::clamp(c2, -1.0, 1.0);
  const double base = std::acos(c2);
  double best_cost = 1e300;
  double dq1 = 0.0, dq2 = 0.0;
  for (double q2 : {base, -base}) {
    const double q1 = std::atan2(ty, tx) - std::atan2(kLink2 * std::sin(q2), kLink1 + kLink2 * std::cos(q2));
    const double e1 = wrap_angle(q1 - s.q1);
    const double e2 = wrap_angle(q2 - s.q2);
    const double cost = std::max(std::abs(e1), std::abs(e2));
    if (cost < best_cost) {
      best_cost = cost;
      dq1 = e1;
      dq2 = e2;
    }
  }
  std::vector<double> a = {0.25 * dq1 / kMaxJointStep, 0.25 * dq2 / kMaxJointStep};
  limit_max_norm(a);
  return a;
}

std::vector<double> pusher_expert(const PusherState& s) {
  using namespace pusher;
  const double contact = kEffectorRadius + kObjectRadius;
  double ux = s.target_x - s.object_x, uy = s.target_y - s.object_y;
  const double dist = std::hypot(ux, uy);
  if (dist < 1e-4) return {0.0, 0.0};
  ux /= dist;
  uy /= dist;
  const double rx = s.effector_x - s.object_x, ry = s.effector_y - s.object_y;
  // Angle of the effector around the object, measured from the "behind" direction -u.
  const double along = -(rx * ux + ry * uy);
  const double across = rx * (-uy) + ry * ux;
  const double alpha = std::atan2(across, along);

  double gx, gy;
  if (std::abs(alpha) > 0.2) {
    // Orbit toward the behind point on a ring clear of the object.
    const double ring = contact + 0.015;
    const double next = alpha - std::copysign(std::min(std::abs(alpha), 0.6), alpha);
    const double bx = -ux, by = -uy;  // behind direction
    const double cx = std::cos(next), sn = std::sin(next);
    const double dx = bx * cx - by * sn, dy = bx * sn + by * cx;
    gx = s.object_x + ring * dx;
    gy = s.object_y + ring * dy;
  } else {
    const double gap = std::hypot(rx, ry) - contact;
    if (gap > 0.004) {
      // Close in along the push line.
      const double stand = contact + 0.002;
      gx = s.object_x - ux * stand;
      gy = s.object_y - uy * stand;
    } else {
      const double push = std::min(kMaxStep, dist);
      gx = s.object_x - ux * (contact - push);
      gy = s.object_y - uy * (contact - push);
    }
  }
  std::vector<double> a = {(gx - s.effector_x) / kMaxStep, (gy - s.effector_y) / kMaxStep};
  limit_max_norm(a);
  return a;
}

std::vector<double> fetch_expert(const FetchState& s) {
  constexpr double kGain = 0.4;
  std::vector<double> a = {kGain * (s.target_x - s.gripper_x) / fetch::kMaxStep,
                           kGain * (s.target_y - s.gripper_y) / fetch::kMaxStep,
                           kGain * (s.target_z - s.gripper_z) / fetch::kMaxStep};
  limit_max_norm(a);
  return a;
}

}  // namespace

std::vector<double> scripted_expert(const EnvState& state) {
  return std::visit(
      [](const auto& s) -> std::vector<double> {
        using T = std::decay_t<decltype(s)>;
        if constexpr (std::is_same_v<T, PendulumState>) return pendulum_expert(s);
        if constexpr (std::is_same_v<T, ReacherState>) return reacher_expert(s);
        if constexpr (std::is_same_v<T, PusherState>) return pusher_expert(s);
        if constexpr (std::is_same_v<T, FetchState>) return fetch_expert(s);
      },
      state);
}

}  // namespace rwl::demos
