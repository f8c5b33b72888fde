#include "talescale/queue_model.hpp"

#include <cmath>
#include <numbers>

#include "talescale/errors.hpp"

namespace talescale {

void QueueModel::validate() const {
  switch (distribution) {
    case WaitDistribution::fixed:
      if (!(value >= 0)) throw ConfigError("fixed queue wait must be >= 0");
      break;
    case WaitDistribution::uniform:
      if (!(min >= 0) || !(max >= min)) {
        throw ConfigError("uniform queue wait needs 0 <= min <= max");
      }
      break;
    case WaitDistribution::exponential:
      if (!(mean >= 0)) throw ConfigError("exponential queue mean must be >= 0");
      break;
  }
  for (const auto& w : maintenance_windows) {
    if (!(w.end > w.start)) {
      throw ConfigError("maintenance window end must be after its start");
    }
  }
}

Duration QueueModel::expected_wait() const {
  if (reservation) return 0;
  switch (distribution) {
    case WaitDistribution::fixed: return value;
    case WaitDistribution::uniform: return (min + max) / 2;
    case WaitDistribution::exponential: return mean;
  }
  return 0;
}

Duration QueueModel::median_wait() const {
  if (reservation) return 0;
  switch (distribution) {
    case WaitDistribution::fixed: return value;
    case WaitDistribution::uniform: return (min + max) / 2;
    case WaitDistribution::exponential: return mean * std::numbers::ln2;
  }
  return 0;
}

const MaintenanceWindow* QueueModel::window_at(SimTime t) const {
  for (const auto& w : maintenance_windows) {
    if (w.covers(t)) return &w;
  }
  return nullptr;
}

Duration sample_queue_wait(const QueueModel& qm, Rng& rng, SimTime submit_time) {
  if (qm.reservation) return 0;
  Duration sampled = 0;
  switch (qm.distribution) {
    case WaitDistribution::fixed: sampled = qm.value; break;
    case WaitDistribution::uniform: sampled = rng.uniform(qm.min, qm.max); break;
    case WaitDistribution::exponential: sampled = rng.exponential(qm.mean); break;
  }
  if (const auto* w = qm.window_at(submit_time)) {
    sampled += w->end - submit_time;
  }
  return sampled;
}

SimTime first_start_outside_maintenance(const QueueModel& qm, SimTime t) {
  // Windows may overlap or abut; iterate until no window covers t.
  for (;;) {
    const auto* w = qm.window_at(t);
    if (!w) return t;
    t = w->end;
  }
}

std::string to_string(WaitDistribution d) {
  switch (d) {
    case WaitDistribution::fixed: return "fixed";
    case WaitDistribution::uniform: return "uniform";
    case WaitDistribution::exponential: return "exponential";
  }
  return "?";
}

std::string to_string(MaintenancePolicy p) {
  return p == MaintenancePolicy::hold ? "hold" : "fail";
}

void to_json(nlohmann::json& j, const QueueModel& qm) {
  j = nlohmann::json::object();
  j["distribution"] = to_string(qm.distribution);
  switch (qm.distribution) {
    case WaitDistribution::fixed: j["value"] = qm.value; break;
    case WaitDistribution::uniform:
      j["min"] = qm.min;
      j["max"] = qm.max;
      break;
    case WaitDistribution::exponential: j["mean"] = qm.mean; break;
  }
  j["seed"] = qm.seed;
  j["reservation"] = qm.reservation;
  auto windows = nlohmann::json::array();
  for (const auto& w : qm.maintenance_windows) windows.push_back({w.start, w.end});
  j["maintenance_windows"] = std::move(windows);
  j["maintenance_policy"] = to_string(qm.maintenance_policy);
}

void from_json(const nlohmann::json& j, QueueModel& qm) {
  if (!j.is_object()) throw ConfigError("queue model must be an object");
  qm = QueueModel{};
  const auto dist = j.value("distribution", std::string("fixed"));
  if (dist == "fixed") {
    qm.distribution = WaitDistribution::fixed;
    qm.value = j.value("value", 0.0);
  } else if (dist == "uniform") {
    qm.distribution = WaitDistribution::uniform;
    qm.min = j.at("min").get<double>();
    qm.max = j.at("max").get<double>();
  } else if (dist == "exponential") {
    qm.distribution = WaitDistribution::exponential;
    qm.mean = j.at("mean").get<double>();
  } else {
    throw ConfigError("unknown queue distribution '" + dist + "'");
  }
  qm.seed = j.value("seed", std::uint64_t{0});
  qm.reservation = j.value("reservation", false);
  if (j.contains("maintenance_windows")) {
    for (const auto& w : j.at("maintenance_windows")) {
      if (!w.is_array() || w.size() != 2) {
        throw ConfigError("maintenance window must be [start, end]");
      }
      qm.maintenance_windows.push_back({w[0].get<double>(), w[1].get<double>()});
    }
  }
  const auto policy = j.value("maintenance_policy", std::string("hold"));
  if (policy == "hold") {
    qm.maintenance_policy = MaintenancePolicy::hold;
  } else if (policy == "fail") {
    qm.maintenance_policy = MaintenancePolicy::fail;
  } else {
    throw ConfigError("unknown maintenance policy '" + policy + "'");
  }
  qm.validate();
}

}  // namespace talescale
