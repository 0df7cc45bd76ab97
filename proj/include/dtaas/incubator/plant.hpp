#pragma once

#include <cstdint>
#include <random>

#include <json.hpp>

namespace dtaas::incubator {

/// Lumped first-order thermal model of the incubator box:
///   C dT/dt = P [heater_on] - G (T - T_amb),  G = G_o if the lid is open else G_c.
struct PlantParams {
  double heat_capacity = 300.0;      // J/°C
  double conductance_closed = 2.0;   // W/°C
  double conductance_open = 8.0;     // W/°C
  double heater_power = 150.0;       // W
  double ambient = 21.0;             // °C
  double sensor_noise_std = 0.05;    // °C

  /// Throws Error(InvalidArgument) unless C, G_c, P > 0, G_o > G_c and
  /// the noise is non-negative.
  void check() const;
};

struct IncubatorState {
  double t_box = 21.0;
  bool heater_on = false;
  bool lid_open = false;
  std::int64_t t_ms = 0;

  friend bool operator==(const IncubatorState&, const IncubatorState&) = default;
};

/// Explicit Euler step. Throws Error(InvalidArgument) for dt_ms <= 0 or
/// dt beyond the stability bound 2C/G_o, Error(NonFinite) if the state
/// blows up.
IncubatorState plant_step(const IncubatorState& s, const PlantParams& p, std::int64_t dt_ms);

/// Largest step (ms, exclusive) for which Euler stays stable on both
/// conductance regimes.
double stability_bound_ms(const PlantParams& p);

/// T_amb + P / G: the heater-always-on equilibrium for conductance G.
double steady_state(const PlantParams& p, bool lid_open);

/// Temperature reading with additive gaussian noise.
double sense(const IncubatorState& s, const PlantParams& p, std::mt19937_64& rng);

/// Bang-bang controller with hysteresis.
struct ControllerParams {
  double setpoint = 35.0;  // °C
  double band = 0.5;       // °C, > 0

  friend bool operator==(const ControllerParams&, const ControllerParams&) = default;
};

/// On below setpoint - band, off above setpoint + band, unchanged inside.
bool controller_step(double sensed, const ControllerParams& c, bool heater_on);

nlohmann::json to_json(const PlantParams& p);
PlantParams plant_params_from_json(const nlohmann::json& j, PlantParams defaults = {});
nlohmann::json to_json(const ControllerParams& c);

}  // namespace dtaas::incubator
