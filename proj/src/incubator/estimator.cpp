#include "dtaas/incubator/estimator.hpp"

#include <cmath>

#include "dtaas/common/error.hpp"

namespace dtaas::incubator {

using nlohmann::json;

EstimatorState EstimatorState::initial(const EstimatorParams& p) {
  EstimatorState e;
  e.g_hat = p.g_init;
  e.p_cov = p.p_init;
  return e;
}

EstimatorState estimator_update(const EstimatorState& e, const EstimatorParams& p, const Observation& obs) {
  EstimatorState next = e;
  const double x = obs.mean_excess.value_or(obs.t_k - p.ambient);
  if (!(obs.dt_s > 0) || !std::isfinite(x) || std::abs(x) < p.floor || !std::isfinite(obs.t_k1)) {
    ++next.skipped;
    return next;
  }
  const double y = p.heater_power * obs.heater - p.heat_capacity * (obs.t_k1 - obs.t_k) / obs.dt_s;
  const double residual = y - e.g_hat * x;
  const double k = e.p_cov * x / (p.forgetting + x * x * e.p_cov);
  next.g_hat = e.g_hat + k * residual;
  next.p_cov = (e.p_cov - k * x * e.p_cov) / p.forgetting;
  ++next.updates;
  next.residuals.push_back(residual);
  while (next.residuals.size() > p.residual_window) next.residuals.pop_front();
  return next;
}

StrideSampler::StrideSampler(std::size_t stride, double ambient) : stride_(stride), ambient_(ambient) {
  if (stride_ == 0) throw Error(Errc::InvalidArgument, "stride must be at least 1");
}

std::optional<Observation> StrideSampler::push(std::int64_t ts_ms, double t_box, bool heater_on) {
  std::optional<Observation> out;
  if (t_start_ && steps_ == stride_) {
    Observation obs;
    obs.t_k = *t_start_;
    obs.t_k1 = t_box;
    obs.heater = sum_heater_ / static_cast<double>(stride_);
    obs.dt_s = static_cast<double>(ts_ms - ts_start_) / 1000.0;
    obs.mean_excess = sum_excess_ / static_cast<double>(stride_);
    out = obs;
    t_start_.reset();
  }
  if (!t_start_) {
    t_start_ = t_box;
    ts_start_ = ts_ms;
    steps_ = 0;
    sum_excess_ = 0.0;
    sum_heater_ = 0.0;
  }
  sum_excess_ += t_box - ambient_;
  sum_heater_ += heater_on ? 1.0 : 0.0;
  ++steps_;
  return out;
}

json StrideSampler::save() const {
  return {{"stride", stride_},
          {"t_start", t_start_ ? json(*t_start_) : json(nullptr)},
          {"ts_start", ts_start_},
          {"steps", steps_},
          {"sum_excess", sum_excess_},
          {"sum_heater", sum_heater_}};
}

void StrideSampler::load(const json& j) {
  if (j.value("stride", stride_) != stride_) return;
  t_start_ = j.at("t_start").is_null() ? std::nullopt : std::optional<double>(j.at("t_start").get<double>());
  ts_start_ = j.at("ts_start").get<std::int64_t>();
  steps_ = j.at("steps").get<std::size_t>();
  sum_excess_ = j.at("sum_excess").get<double>();
  sum_heater_ = j.at("sum_heater").get<double>();
}

std::optional<std::string> detect_anomaly(DetectorState& d, const EstimatorState& e, const DetectorParams& p) {
  if (e.updates < p.warmup) return std::nullopt;
  const bool beyond = d.lid_open ? e.g_hat < p.threshold() : e.g_hat > p.threshold();
  d.streak = beyond ? d.streak + 1 : 0;
  if (d.streak < p.window) return std::nullopt;
  d.streak = 0;
  d.lid_open = !d.lid_open;
  return std::string(d.lid_open ? kLidOpen : kLidClosed);
}

json to_json(const EstimatorState& e) {
  return {{"g_hat", e.g_hat},
          {"p_cov", e.p_cov},
          {"updates", e.updates},
          {"skipped", e.skipped},
          {"residuals", json(std::vector<double>(e.residuals.begin(), e.residuals.end()))}};
}

EstimatorState estimator_state_from_json(const json& j) {
  EstimatorState e;
  e.g_hat = j.at("g_hat").get<double>();
  e.p_cov = j.at("p_cov").get<double>();
  e.updates = j.at("updates").get<std::uint64_t>();
  e.skipped = j.value("skipped", std::uint64_t{0});
  for (double r : j.value("residuals", std::vector<double>{})) e.residuals.push_back(r);
  return e;
}

}  // namespace dtaas::incubator
