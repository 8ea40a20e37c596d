#include "uvsim/actuator.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

namespace uvsim {

void ActuatorParams::validate() const {
  if (!(c1 > 0.0) || !std::isfinite(c0) || !std::isfinite(c1)) {
    throw std::invalid_argument("ActuatorParams: c1 must be positive and c0 finite");
  }
  if (order != 1 && order != 2) {
    throw std::invalid_argument("ActuatorParams: order must be 1 or 2");
  }
  if (order == 1 && !(tau > 0.0)) {
    throw std::invalid_argument("ActuatorParams: tau must be positive");
  }
  if (order == 2 && (!(natural_freq > 0.0) || !(damping > 0.0))) {
    throw std::invalid_argument("ActuatorParams: second-order natural frequency and damping must be positive");
  }
  if (!(min_speed >= 0.0) || !(max_speed >= min_speed)) {
    throw std::invalid_argument("ActuatorParams: require max >= min >= 0");
  }
  if (!(rate_limit > 0.0)) {
    throw std::invalid_argument("ActuatorParams: rate limit must be positive");
  }
}

double ActuatorParams::steady_speed(double sigma) const {
  const double s = std::clamp(std::isfinite(sigma) ? sigma : 0.0, 0.0, 1.0);
  return std::clamp(c0 + c1 * s, min_speed, max_speed);
}

ActuatorState actuator_step(const ActuatorState& state, const ActuatorParams& params, double sigma, double dt) {
  const double target = params.steady_speed(sigma);
  ActuatorState next = state;
  if (params.order == 1) {
    const double decay = std::exp(-dt / params.tau);
    next.delta = target + (state.delta - target) * decay;
    next.delta_dot = (next.delta - state.delta) / dt;
  } else {
    // Exact zero-order-hold discretization of
    // delta'' = wn^2 (target - delta) - 2 zeta wn delta'.
    const double wn = params.natural_freq;
    Eigen::Matrix3d M = Eigen::Matrix3d::Zero();
    M(0, 1) = 1.0;
    M(1, 0) = -wn * wn;
    M(1, 1) = -2.0 * params.damping * wn;
    M(1, 2) = wn * wn;
    const Eigen::Matrix3d E = (M * dt).exp();
    const Eigen::Vector3d x(state.delta, state.delta_dot, target);
    const Eigen::Vector3d y = E * x;
    next.delta = y(0);
    next.delta_dot = y(1);
  }

  const double max_change = params.rate_limit * dt;
  const double change = next.delta - state.delta;
  if (std::abs(change) > max_change) {
    next.delta = state.delta + std::copysign(max_change, change);
    next.delta_dot = std::copysign(params.rate_limit, change);
  }
  if (next.delta < params.min_speed || next.delta > params.max_speed) {
    next.delta = std::clamp(next.delta, params.min_speed, params.max_speed);
    next.delta_dot = 0.0;
  }
  return next;
}

namespace {

struct Segment {
  std::size_t begin;
  std::size_t end;  // exclusive
  double sigma;
  double steady;
};

constexpr double kSigmaChange = 1e-9;
constexpr std::size_t kMinSegment = 10;
constexpr double kTailFraction = 0.1;
constexpr double kTransientFloor = 0.2;

}  // namespace

IdentifiedActuator identify_first_order(std::span<const ActuatorSample> log) {
  if (log.size() < 2 * kMinSegment) {
    throw IdentificationError("insufficient excitation: log too short");
  }
  for (std::size_t i = 1; i < log.size(); ++i) {
    if (!(log[i].t > log[i - 1].t)) {
      throw IdentificationError("log timestamps must be strictly increasing");
    }
  }

  std::vector<Segment> segments;
  std::size_t start = 0;
  for (std::size_t i = 1; i <= log.size(); ++i) {
    if (i == log.size() || std::abs(log[i].sigma - log[start].sigma) > kSigmaChange) {
      const std::size_t n = i - start;
      const std::size_t tail = std::max<std::size_t>(3, static_cast<std::size_t>(n * kTailFraction));
      double sum = 0.0;
      for (std::size_t k = i - std::min(tail, n); k < i; ++k) sum += log[k].delta;
      segments.push_back({start, i, log[start].sigma, sum / static_cast<double>(std::min(tail, n))});
      start = i;
    }
  }

  // Steady map from settled segments.
  double sx = 0, sy = 0, sxx = 0, sxy = 0, n = 0;
  double sigma_lo = 1e300, sigma_hi = -1e300;
  for (const auto& s : segments) {
    if (s.end - s.begin < kMinSegment) continue;
    sx += s.sigma;
    sy += s.steady;
    sxx += s.sigma * s.sigma;
    sxy += s.sigma * s.steady;
    n += 1;
    sigma_lo = std::min(sigma_lo, s.sigma);
    sigma_hi = std::max(sigma_hi, s.sigma);
  }
  if (n < 2 || sigma_hi - sigma_lo < 1e-6) {
    throw IdentificationError("insufficient excitation: need two distinct settled throttle levels");
  }
  const double denom = n * sxx - sx * sx;
  const double c1 = (n * sxy - sx * sy) / denom;
  const double c0 = (sy - c1 * sx) / n;

  // Time constant: pooled slope of ln|steady - delta| versus t over the
  // early part of every transient (intercepts free per step).
  double num = 0.0, den = 0.0;
  for (std::size_t k = 1; k < segments.size(); ++k) {
    const Segment& prev = segments[k - 1];
    const Segment& cur = segments[k];
    if (cur.end - cur.begin < kMinSegment || prev.end - prev.begin < kMinSegment) continue;
    const double span = cur.steady - prev.steady;
    if (std::abs(span) < 1e-9 * std::max(1.0, std::abs(cur.steady))) continue;
    std::vector<std::pair<double, double>> pts;
    for (std::size_t i = cur.begin; i < cur.end; ++i) {
      const double e = (cur.steady - log[i].delta) / span;
      if (e < kTransientFloor) break;
      pts.emplace_back(log[i].t, std::log(std::min(e, 1.0)));
    }
    if (pts.size() < 3) continue;
    double mt = 0, my = 0;
    for (const auto& [t, y] : pts) {
      mt += t;
      my += y;
    }
    mt /= static_cast<double>(pts.size());
    my /= static_cast<double>(pts.size());
    for (const auto& [t, y] : pts) {
      num += (t - mt) * (y - my);
      den += (t - mt) * (t - mt);
    }
  }
  if (!(den > 0.0) || !(num < 0.0)) {
    throw IdentificationError("insufficient excitation: no usable step transient");
  }
  const double tau = -den / num;

  // Replay.
  ActuatorParams fitted;
  fitted.c0 = c0;
  fitted.c1 = c1;
  fitted.tau = tau;
  fitted.min_speed = 0.0;
  fitted.max_speed = std::numeric_limits<double>::max();
  ActuatorState st{log.front().delta, 0.0};
  double sse = 0.0;
  for (std::size_t i = 1; i < log.size(); ++i) {
    st = actuator_step(st, fitted, log[i].sigma, log[i].t - log[i - 1].t);
    const double r = st.delta - log[i].delta;
    sse += r * r;
  }
  return {c0, c1, tau, std::sqrt(sse / static_cast<double>(log.size() - 1))};
}

}  // namespace uvsim
