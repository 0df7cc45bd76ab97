#pragma once

#include <optional>
#include <string>
#include <vector>

#include "dtaas/incubator/estimator.hpp"
#include "dtaas/incubator/plant.hpp"
#include "dtaas/lifecycle/program.hpp"

namespace dtaas::incubator {

inline constexpr std::string_view kIncubatorEntry = "builtin:incubator-dt";

/// Everything the incubator DT reads from `c_a.parameters`.
struct TwinParams {
  PlantParams plant;
  ControllerParams controller;
  /// Conductance the model currently assumes (what-if variants set G_hat).
  double conductance = 2.0;
  double t_init = 21.0;
  bool heater_init = false;
  std::size_t stride = 20;
  double forgetting = 0.9;
  std::uint32_t window = 20;
  std::uint64_t warmup = 15;
  /// Ticks between scheduled re-plans; 0 = only on anomalies.
  std::uint64_t plan_every = 0;
  std::int64_t horizon_ms = 300'000;
  std::int64_t tick_ms = 100;

  static TwinParams from(const config::ConfigDoc& doc);
  EstimatorParams estimator() const;
  DetectorParams detector() const;
};

/// Program behind the euler-sim tool.
///
/// With PT channels `t_box` and `heater` it is the live twin: each tick it
/// joins the new readings, runs the stride sampler and RLS estimator,
/// writes `dt.<id>.g_hat`, raises lid-open/lid-closed events and schedules
/// re-planning. Without PT channels it is a what-if simulation of the
/// identified plant under the configured controller.
class IncubatorProgram final : public lifecycle::DtProgram {
 public:
  explicit IncubatorProgram(const config::ConfigDoc& doc);

  void on_tick(const lifecycle::TickContext& ctx) override;
  void on_config_changed(const config::ConfigDoc& prev, const config::ConfigDoc& next) override;
  nlohmann::json save_state() const override;
  void load_state(const nlohmann::json& state) override;
  nlohmann::json analyse(const lifecycle::AnalysisRequest& req, const lifecycle::AnalysisContext& ctx) override;
  nlohmann::json replay(const lifecycle::AnalysisRequest& req, const lifecycle::AnalysisContext& ctx) override;

  bool live() const noexcept { return t_box_key_.has_value(); }

 private:
  void live_tick(const lifecycle::TickContext& ctx);
  void sim_tick(const lifecycle::TickContext& ctx);
  /// Feeds one joined reading; returns the anomaly event type if any.
  std::optional<std::string> consume(std::int64_t ts, double t_box, bool heater, const InstanceId& id,
                                     datahub::DataHub& hub);
  nlohmann::json estimate_json() const;

  TwinParams params_;
  std::optional<std::string> t_box_key_;
  std::optional<std::string> heater_key_;

  // live
  StrideSampler sampler_;
  EstimatorState estimator_;
  DetectorState detector_;
  std::optional<std::int64_t> cursor_;
  std::uint64_t ticks_since_plan_ = 0;

  // simulation
  IncubatorState sim_;
  std::vector<double> trace_;
};

/// Adds kIncubatorEntry to `programs`.
void register_programs(lifecycle::ProgramRegistry& programs);

}  // namespace dtaas::incubator
