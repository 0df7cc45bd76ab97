#pragma once

#include <cstdint>
#include <deque>
#include <optional>

#include <json.hpp>

namespace dtaas::incubator {

/// Known plant constants (from the model asset) plus RLS tuning.
struct EstimatorParams {
  double heat_capacity = 300.0;
  double heater_power = 150.0;
  double ambient = 21.0;
  /// Samples with |T - T_amb| below this carry too little information.
  double floor = 0.5;
  /// 1 = plain least squares; < 1 discounts old samples.
  double forgetting = 1.0;
  double g_init = 1.0;
  double p_init = 1.0e4;
  std::size_t residual_window = 50;
};

/// One observation interval [t_k, t_k1] of length dt_s.
struct Observation {
  double t_k = 0.0;
  double t_k1 = 0.0;
  /// Fraction of the interval the heater was on (0 or 1 for a single step).
  double heater = 0.0;
  double dt_s = 0.0;
  /// Mean of T - T_amb over the interval's steps. Unset means t_k - T_amb.
  std::optional<double> mean_excess;
};

struct EstimatorState {
  double g_hat = 1.0;
  double p_cov = 1.0e4;
  std::uint64_t updates = 0;
  std::uint64_t skipped = 0;
  std::deque<double> residuals;

  static EstimatorState initial(const EstimatorParams& p);
};

/// Scalar RLS on y = G x with x the mean excess temperature and
/// y = P·heater - C·(t_k1 - t_k)/dt. Guarded samples return the state
/// unchanged apart from the skip counter.
EstimatorState estimator_update(const EstimatorState& e, const EstimatorParams& p, const Observation& obs);

/// Groups consecutive readings into strides of `stride` steps. Averaging x
/// and the heater duty over the stride keeps the regression exact for the
/// Euler plant while dividing the sensor noise in the slope term.
class StrideSampler {
 public:
  StrideSampler(std::size_t stride, double ambient);

  /// Reading at `ts_ms` with the heater state that drove the step after it.
  /// Returns an observation every `stride` steps.
  std::optional<Observation> push(std::int64_t ts_ms, double t_box, bool heater_on);

  std::size_t stride() const noexcept { return stride_; }
  nlohmann::json save() const;
  void load(const nlohmann::json& j);

 private:
  std::size_t stride_;
  double ambient_;
  std::optional<double> t_start_;
  std::int64_t ts_start_ = 0;
  std::size_t steps_ = 0;
  double sum_excess_ = 0.0;
  double sum_heater_ = 0.0;
};

struct DetectorParams {
  double conductance_closed = 2.0;
  double conductance_open = 8.0;
  /// Consecutive updates beyond the threshold before an event fires.
  std::uint32_t window = 20;
  std::uint64_t warmup = 30;

  double threshold() const noexcept { return 0.5 * (conductance_closed + conductance_open); }
};

struct DetectorState {
  bool lid_open = false;
  std::uint32_t streak = 0;
};

inline constexpr const char* kLidOpen = "lid-open";
inline constexpr const char* kLidClosed = "lid-closed";

/// Call once per estimator update. Returns "lid-open" or "lid-closed" when
/// the believed lid state flips.
std::optional<std::string> detect_anomaly(DetectorState& d, const EstimatorState& e, const DetectorParams& p);

nlohmann::json to_json(const EstimatorState& e);
EstimatorState estimator_state_from_json(const nlohmann::json& j);

}  // namespace dtaas::incubator
