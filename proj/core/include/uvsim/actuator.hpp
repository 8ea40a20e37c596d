#pragma once

// Motor-propeller actuator: affine steady-state map from throttle to rotor
// speed followed by a first- or second-order inertial response, then
// rate limiting and saturation.

#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace uvsim {

struct ActuatorParams {
  double c0 = -141.4;   // rad/s, steady speed at zero throttle
  double c1 = 1148.0;   // rad/s per unit throttle
  int order = 1;        // 1 or 2
  double tau = 0.02;    // s, first order
  double natural_freq = 50.0;  // rad/s, second order
  double damping = 0.9;        // second order
  double min_speed = 0.0;      // rad/s
  double max_speed = 1006.6;   // rad/s
  double rate_limit = std::numeric_limits<double>::infinity();  // rad/s^2

  /// Throws std::invalid_argument on a violated invariant.
  void validate() const;

  /// Steady-state rotor speed for throttle sigma (clamped to [0, 1] and to
  /// the output range).
  double steady_speed(double sigma) const;
};

struct ActuatorState {
  double delta = 0.0;      // rad/s
  double delta_dot = 0.0;  // rad/s^2, second-order filter state
};

/// Advances one unit by dt. sigma is clamped to [0, 1].
ActuatorState actuator_step(const ActuatorState& state, const ActuatorParams& params, double sigma, double dt);

struct ActuatorSample {
  double t;
  double sigma;
  double delta;
};

struct IdentifiedActuator {
  double c0;
  double c1;
  double tau;
  double residual_rms;  // rad/s, replay of the log with the fitted model
};

class IdentificationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Fits (c0, c1, tau) of a first-order actuator from a throttle/speed log.
/// The steady map comes from the settled tail of each constant-throttle
/// segment; tau from a log-linear regression of each step transient.
/// Throws IdentificationError("insufficient excitation") when the log has
/// fewer than two distinct settled throttle levels.
IdentifiedActuator identify_first_order(std::span<const ActuatorSample> log);

}  // namespace uvsim
