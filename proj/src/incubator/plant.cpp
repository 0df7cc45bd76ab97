#include "dtaas/incubator/plant.hpp"

#include <cmath>

#include "dtaas/common/error.hpp"

namespace dtaas::incubator {

using nlohmann::json;

void PlantParams::check() const {
  if (!(heat_capacity > 0) || !(conductance_closed > 0) || !(heater_power > 0)) {
    throw Error(Errc::InvalidArgument, "heat capacity, conductance and heater power must be positive");
  }
  if (!(conductance_open > conductance_closed)) {
    throw Error(Errc::InvalidArgument, "open-lid conductance must exceed closed-lid conductance");
  }
  if (!(sensor_noise_std >= 0) || !std::isfinite(ambient)) {
    throw Error(Errc::InvalidArgument, "sensor noise must be non-negative and ambient finite");
  }
}

double stability_bound_ms(const PlantParams& p) {
  return 2.0 * p.heat_capacity / p.conductance_open * 1000.0;
}

IncubatorState plant_step(const IncubatorState& s, const PlantParams& p, std::int64_t dt_ms) {
  if (dt_ms <= 0) throw Error(Errc::InvalidArgument, "plant step needs dt > 0");
  if (static_cast<double>(dt_ms) >= stability_bound_ms(p)) {
    throw Error(Errc::InvalidArgument, "dt " + std::to_string(dt_ms) + " ms exceeds the Euler stability bound");
  }
  const double g = s.lid_open ? p.conductance_open : p.conductance_closed;
  const double dt = static_cast<double>(dt_ms) / 1000.0;
  const double q = (s.heater_on ? p.heater_power : 0.0) - g * (s.t_box - p.ambient);
  IncubatorState next = s;
  next.t_box = s.t_box + dt * q / p.heat_capacity;
  next.t_ms = s.t_ms + dt_ms;
  if (!std::isfinite(next.t_box)) throw Error(Errc::NonFinite, "box temperature is no longer finite");
  return next;
}

double steady_state(const PlantParams& p, bool lid_open) {
  return p.ambient + p.heater_power / (lid_open ? p.conductance_open : p.conductance_closed);
}

double sense(const IncubatorState& s, const PlantParams& p, std::mt19937_64& rng) {
  if (p.sensor_noise_std == 0.0) return s.t_box;
  std::normal_distribution<double> noise(0.0, p.sensor_noise_std);
  return s.t_box + noise(rng);
}

bool controller_step(double sensed, const ControllerParams& c, bool heater_on) {
  if (sensed < c.setpoint - c.band) return true;
  if (sensed > c.setpoint + c.band) return false;
  return heater_on;
}

json to_json(const PlantParams& p) {
  return {{"heat_capacity", p.heat_capacity},       {"conductance_closed", p.conductance_closed},
          {"conductance_open", p.conductance_open}, {"heater_power", p.heater_power},
          {"ambient", p.ambient},                   {"sensor_noise_std", p.sensor_noise_std}};
}

PlantParams plant_params_from_json(const json& j, PlantParams d) {
  PlantParams p;
  p.heat_capacity = j.value("heat_capacity", d.heat_capacity);
  p.conductance_closed = j.value("conductance_closed", d.conductance_closed);
  p.conductance_open = j.value("conductance_open", d.conductance_open);
  p.heater_power = j.value("heater_power", d.heater_power);
  p.ambient = j.value("ambient", d.ambient);
  p.sensor_noise_std = j.value("sensor_noise_std", d.sensor_noise_std);
  p.check();
  return p;
}

json to_json(const ControllerParams& c) { return {{"setpoint", c.setpoint}, {"band", c.band}}; }

}  // namespace dtaas::incubator
