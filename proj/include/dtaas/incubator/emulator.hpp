#pragma once

#include <atomic>
#include <condition_variable>
#include <cstdint>
#include <mutex>
#include <random>
#include <string>
#include <thread>

#include "dtaas/datahub/data_hub.hpp"
#include "dtaas/incubator/plant.hpp"

namespace dtaas::incubator {

struct EmulatorOptions {
  PlantParams plant;
  ControllerParams controller;
  IncubatorState initial;
  std::uint64_t seed = 1;
  std::int64_t tick_ms = 100;
  /// Connector name; commands arrive on `<connector>/controller` and
  /// `<connector>/lid`.
  std::string connector = "incubator";
  /// Series are written as `<prefix>.t_box`, `<prefix>.heater`, `<prefix>.lid`.
  std::string prefix = "inc";
};

/// The physical twin: plant plus the embedded bang-bang controller. It
/// talks to DTs only through hub series and commands.
///
/// Each step at time t: apply pending commands, sense, let the controller
/// decide, publish (sensed T, heater, lid) stamped t, integrate to t + tick.
class PtEmulator {
 public:
  PtEmulator(datahub::DataHub& hub, EmulatorOptions options, std::int64_t start_ms);
  ~PtEmulator();

  PtEmulator(const PtEmulator&) = delete;
  PtEmulator& operator=(const PtEmulator&) = delete;

  void step();
  void run(std::uint64_t steps);

  /// Steps on a wall-clock period until stop().
  void start_realtime();
  void stop();

  void set_lid(bool open);
  IncubatorState state() const;
  ControllerParams controller() const;
  /// Timestamp the next step will publish with.
  std::int64_t now_ms() const;
  std::uint64_t steps() const noexcept { return steps_.load(); }

  std::string series(std::string_view channel) const { return options_.prefix + "." + std::string(channel); }
  std::string target(std::string_view channel) const { return options_.connector + "/" + std::string(channel); }

 private:
  void apply_commands();

  datahub::DataHub& hub_;
  const EmulatorOptions options_;
  const std::int64_t start_ms_;

  mutable std::mutex mu_;
  IncubatorState state_;
  ControllerParams controller_;
  std::mt19937_64 rng_;
  std::atomic<std::uint64_t> steps_{0};

  std::mutex thread_mu_;
  std::condition_variable cv_;
  bool running_ = false;
  std::thread thread_;
};

}  // namespace dtaas::incubator
