#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talescale/clock.hpp"
#include "talescale/rng.hpp"

namespace talescale {

enum class WaitDistribution { fixed, uniform, exponential };
enum class MaintenancePolicy { hold, fail };

struct MaintenanceWindow {
  SimTime start = 0;
  SimTime end = 0;

  bool covers(SimTime t) const { return t >= start && t < end; }
  bool operator==(const MaintenanceWindow&) const = default;
};

// Queue-wait model of a batch resource: how long a submission sits before it
// may start, standing in for everybody else's jobs on the machine.
struct QueueModel {
  WaitDistribution distribution = WaitDistribution::fixed;
  double value = 0;  // fixed
  double min = 0;    // uniform
  double max = 0;    // uniform
  double mean = 0;   // exponential
  std::uint64_t seed = 0;
  bool reservation = false;
  std::vector<MaintenanceWindow> maintenance_windows;
  MaintenancePolicy maintenance_policy = MaintenancePolicy::hold;

  // Throws ConfigError on negative parameters, min > max or inverted windows.
  void validate() const;

  // Analytic mean of the wait, ignoring maintenance. Zero under reservation.
  Duration expected_wait() const;
  // Analytic median of the wait, ignoring maintenance.
  Duration median_wait() const;

  // The window covering t, if any.
  const MaintenanceWindow* window_at(SimTime t) const;

  bool operator==(const QueueModel&) const = default;
};

// Draws one queue wait for a submission made at `submit_time`. A submission
// made inside a maintenance window additionally waits for the window to close.
Duration sample_queue_wait(const QueueModel& qm, Rng& rng, SimTime submit_time);

// Earliest instant >= t that lies outside every maintenance window.
SimTime first_start_outside_maintenance(const QueueModel& qm, SimTime t);

std::string to_string(WaitDistribution d);
std::string to_string(MaintenancePolicy p);

void to_json(nlohmann::json& j, const QueueModel& qm);
void from_json(const nlohmann::json& j, QueueModel& qm);

}  // namespace talescale
