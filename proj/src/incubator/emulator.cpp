#include "dtaas/incubator/emulator.hpp"

#include <chrono>
#include <cmath>

#include <spdlog/spdlog.h>

#include "dtaas/common/error.hpp"

namespace dtaas::incubator {

PtEmulator::PtEmulator(datahub::DataHub& hub, EmulatorOptions options, std::int64_t start_ms)
    : hub_(hub),
      options_(std::move(options)),
      start_ms_(start_ms),
      state_(options_.initial),
      controller_(options_.controller),
      rng_(options_.seed) {
  options_.plant.check();
  if (!(options_.controller.band > 0)) throw Error(Errc::InvalidArgument, "controller band must be positive");
  if (options_.tick_ms <= 0 || static_cast<double>(options_.tick_ms) >= stability_bound_ms(options_.plant)) {
    throw Error(Errc::InvalidArgument, "emulator tick outside the Euler stability bound");
  }
  hub_.register_connector(options_.connector, {"controller", "lid"});
}

PtEmulator::~PtEmulator() {
  stop();
  hub_.unregister_connector(options_.connector);
}

void PtEmulator::apply_commands() {
  for (const auto& cmd : hub_.fetch_commands(target("controller"))) {
    if (cmd.name != "set_params") {
      spdlog::warn("emulator: ignoring controller command '{}'", cmd.name);
      continue;
    }
    ControllerParams next = controller_;
    next.setpoint = cmd.args.value("setpoint", next.setpoint);
    next.band = cmd.args.value("band", next.band);
    if (!(next.band > 0) || !std::isfinite(next.setpoint)) {
      spdlog::warn("emulator: rejecting controller parameters {}", cmd.args.dump());
      continue;
    }
    controller_ = next;
  }
  for (const auto& cmd : hub_.fetch_commands(target("lid"))) {
    if (cmd.name == "set_lid") state_.lid_open = cmd.args.value("open", state_.lid_open);
  }
}

void PtEmulator::step() {
  std::lock_guard lock(mu_);
  apply_commands();
  const double sensed = sense(state_, options_.plant, rng_);
  state_.heater_on = controller_step(sensed, controller_, state_.heater_on);
  const std::int64_t ts = start_ms_ + state_.t_ms;
  hub_.append_batch({{series("t_box"), ts, sensed},
                     {series("heater"), ts, state_.heater_on ? 1.0 : 0.0},
                     {series("lid"), ts, state_.lid_open ? 1.0 : 0.0}});
  state_ = plant_step(state_, options_.plant, options_.tick_ms);
  ++steps_;
}

void PtEmulator::run(std::uint64_t steps) {
  for (std::uint64_t i = 0; i < steps; ++i) step();
}

void PtEmulator::start_realtime() {
  std::lock_guard lock(thread_mu_);
  if (running_) return;
  running_ = true;
  thread_ = std::thread([this] {
    auto next = std::chrono::steady_clock::now();
    std::unique_lock lock(thread_mu_);
    while (running_) {
      lock.unlock();
      try {
        step();
      } catch (const std::exception& e) {
        spdlog::error("emulator step failed: {}", e.what());
      }
      lock.lock();
      next += std::chrono::milliseconds(options_.tick_ms);
      cv_.wait_until(lock, next, [&] { return !running_; });
    }
  });
}

void PtEmulator::stop() {
  {
    std::lock_guard lock(thread_mu_);
    running_ = false;
  }
  cv_.notify_all();
  if (thread_.joinable()) thread_.join();
}

void PtEmulator::set_lid(bool open) {
  std::lock_guard lock(mu_);
  state_.lid_open = open;
}

IncubatorState PtEmulator::state() const {
  std::lock_guard lock(mu_);
  return state_;
}

ControllerParams PtEmulator::controller() const {
  std::lock_guard lock(mu_);
  return controller_;
}

std::int64_t PtEmulator::now_ms() const {
  std::lock_guard lock(mu_);
  return start_ms_ + state_.t_ms;
}

}  // namespace dtaas::incubator
