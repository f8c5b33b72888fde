#include "talescale/planner.hpp"

#include <algorithm>

#include "talescale/errors.hpp"

namespace talescale {

namespace {

struct Candidate {
  const ResourceDescriptor* frontend = nullptr;
  const ResourceDescriptor* workload = nullptr;  // null when no HPC workload
};

bool is_direct_hpc(const ResourceDescriptor& r) {
  return r.kind == ResourceKind::hpc_cluster && r.lrm == LrmKind::none;
}

bool fits_workload(const ResourceDescriptor& r, const WorkloadRequirements& req) {
  return r.is_batch_hpc() && r.node_count >= req.min_nodes &&
         (!req.needs_mpi || r.mpi_capable);
}

bool can_host_frontend(const ResourceDescriptor& r) {
  return r.allows_incoming_connections || !r.no_proxy;
}

// Feasible (frontend, workload) pairs for one model, in inventory order,
// plus the reason when there are none.
std::pair<std::vector<Candidate>, std::string> candidates_for(
    ExecutionModel model, const WorkloadRequirements& req,
    const std::vector<ResourceDescriptor>& inv, const std::optional<std::string>& override_name) {
  std::vector<Candidate> out;
  auto any = [&](auto pred) { return std::any_of(inv.begin(), inv.end(), pred); };
  const bool single_node = req.min_nodes == 1 && !req.needs_mpi;

  switch (model) {
    case ExecutionModel::M1_wt_cluster: {
      if (!any([](const auto& r) { return r.kind == ResourceKind::wt_cluster; })) {
        return {out, "no wt_cluster resource"};
      }
      if (req.needs_mpi) return {out, "MPI required; the deployment cluster runs single containers"};
      if (req.min_nodes != 1) {
        return {out, "needs " + std::to_string(req.min_nodes) +
                         " nodes; a frontend container has one"};
      }
      for (const auto& r : inv) {
        if (r.kind == ResourceKind::wt_cluster) {
          out.push_back({&r, req.needs_hpc ? &r : nullptr});
        }
      }
      return {out, ""};
    }
    case ExecutionModel::M2_hpc_node: {
      if (!any(is_direct_hpc)) return {out, "no HPC resource with direct node access (lrm=none)"};
      if (!single_node) return {out, "workload needs more than the frontend's single node"};
      for (const auto& r : inv) {
        if (is_direct_hpc(r) && can_host_frontend(r)) {
          out.push_back({&r, req.needs_hpc ? &r : nullptr});
        }
      }
      if (out.empty()) return {out, "every candidate node blocks connections and forbids proxying"};
      return {out, ""};
    }
    case ExecutionModel::M3_hpc_node_local_lrm: {
      if (!any([](const auto& r) { return r.is_batch_hpc(); })) {
        return {out, "no hpc_cluster with a batch LRM"};
      }
      if (req.needs_mpi) return {out, "MPI workloads need the multi-node frontend model"};
      for (const auto& r : inv) {
        if (r.is_batch_hpc() && r.node_count >= req.min_nodes && can_host_frontend(r)) {
          out.push_back({&r, req.needs_hpc ? &r : nullptr});
        }
      }
      if (out.empty()) return {out, "no batch hpc_cluster with enough nodes that can host a frontend"};
      return {out, ""};
    }
    case ExecutionModel::M4_hpc_mpi: {
      if (!any([](const auto& r) { return r.mpi_capable && r.is_batch_hpc(); })) {
        return {out, "no MPI-capable resource"};
      }
      for (const auto& r : inv) {
        if (r.is_batch_hpc() && r.mpi_capable && r.node_count >= req.min_nodes &&
            can_host_frontend(r)) {
          out.push_back({&r, req.needs_hpc ? &r : nullptr});
        }
      }
      if (out.empty()) {
        return {out, "no MPI-capable resource with " + std::to_string(req.min_nodes) + " nodes"};
      }
      return {out, ""};
    }
    case ExecutionModel::M5_wt_frontend_remote_lrm: {
      if (!any([](const auto& r) { return r.kind == ResourceKind::wt_cluster; })) {
        return {out, "no wt_cluster resource for the frontend"};
      }
      if (!any([&](const auto& r) { return fits_workload(r, req); })) {
        return {out, "no remote batch hpc_cluster fits the workload"};
      }
      for (const auto& f : inv) {
        if (f.kind != ResourceKind::wt_cluster) continue;
        for (const auto& w : inv) {
          if (!fits_workload(w, req)) continue;
          out.push_back({&f, req.needs_hpc ? &w : nullptr});
          if (!req.needs_hpc) break;
        }
      }
      return {out, ""};
    }
    case ExecutionModel::M6_decoupled_remote_lrm: {
      if (!any([&](const auto& r) { return fits_workload(r, req); })) {
        return {out, "no batch hpc_cluster reachable through the middleware fits the workload"};
      }
      std::vector<const ResourceDescriptor*> frontends;
      if (override_name) {
        const auto* named = find_resource(inv, *override_name);
        if (!named) return {out, "user-named frontend resource '" + *override_name + "' not in inventory"};
        if (!can_host_frontend(*named)) {
          return {out, "user-named frontend resource blocks connections and forbids proxying"};
        }
        frontends.push_back(named);
      } else {
        for (const auto& r : inv) {
          if (can_host_frontend(r)) frontends.push_back(&r);
        }
      }
      for (const auto* f : frontends) {
        for (const auto& w : inv) {
          if (!fits_workload(w, req)) continue;
          out.push_back({f, req.needs_hpc ? &w : nullptr});
          if (!req.needs_hpc) break;
        }
      }
      if (out.empty()) return {out, "no resource can host the frontend"};
      return {out, ""};
    }
  }
  return {out, "unknown model"};
}

PlacementPlan make_plan(ExecutionModel model, const Candidate& c,
                        const WorkloadRequirements& req, const PlanOptions& opt) {
  PlacementPlan p;
  p.model = model;
  p.frontend_resource = c.frontend->name;
  if (c.workload) p.workload_resources.push_back(c.workload->name);
  p.proxy_required = !c.frontend->allows_incoming_connections;
  p.credential = opt.credential;
  p.user_override = model == ExecutionModel::M6_decoupled_remote_lrm && opt.frontend_override;

  std::optional<PoolState> pool;
  if (opt.warm_pools.count(c.frontend->name)) pool = PoolState{true, opt.dispatch_overhead};
  p.estimated_time_to_frontend =
      estimate_time_to_frontend(model, *c.frontend, opt.image_load, pool);

  // The frontend opens every dataset; a workload on another resource needs
  // its own copy.
  std::vector<const ResourceDescriptor*> consumers = {c.frontend};
  if (c.workload && c.workload != c.frontend) consumers.push_back(c.workload);
  for (const auto* r : consumers) {
    for (const auto& ref : req.datasets) {
      auto action = resolve_local(ref, *r);
      if (action.action == StagingKind::cache_fetch) p.wide_area_bytes += ref.size_bytes;
      p.staging_actions.push_back(std::move(action));
    }
  }
  p.reasons.push_back(short_name(model) + ": frontend on '" + p.frontend_resource + "'" +
                      (c.workload ? ", workload on '" + c.workload->name + "'" : ""));
  if (p.user_override) p.reasons.push_back("user_override=true");
  if (p.proxy_required) {
    p.reasons.push_back("proxy required: '" + p.frontend_resource +
                        "' blocks incoming connections");
  }
  return p;
}

double objective_value(const PlacementPlan& p, Objective o) {
  return o == Objective::min_time_to_frontend ? p.estimated_time_to_frontend
                                              : static_cast<double>(p.wide_area_bytes);
}

}  // namespace

std::string to_string(ExecutionModel m) {
  switch (m) {
    case ExecutionModel::M1_wt_cluster: return "M1_wt_cluster";
    case ExecutionModel::M2_hpc_node: return "M2_hpc_node";
    case ExecutionModel::M3_hpc_node_local_lrm: return "M3_hpc_node_local_lrm";
    case ExecutionModel::M4_hpc_mpi: return "M4_hpc_mpi";
    case ExecutionModel::M5_wt_frontend_remote_lrm: return "M5_wt_frontend_remote_lrm";
    case ExecutionModel::M6_decoupled_remote_lrm: return "M6_decoupled_remote_lrm";
  }
  return "?";
}

std::string short_name(ExecutionModel m) {
  return "M" + std::to_string(static_cast<int>(m) + 1);
}

ExecutionModel parse_model(const std::string& s) {
  for (auto m : kAllModels) {
    if (s == to_string(m) || s == short_name(m)) return m;
  }
  throw ValidationError("unknown execution model '" + s + "'");
}

void WorkloadRequirements::validate() const {
  if (min_nodes < 1) throw ValidationError("min_nodes must be >= 1");
  if (needs_mpi && !needs_hpc) throw ValidationError("needs_mpi implies needs_hpc");
}

void to_json(nlohmann::json& j, const WorkloadRequirements& r) {
  j = {{"needs_hpc", r.needs_hpc},
       {"needs_mpi", r.needs_mpi},
       {"min_nodes", r.min_nodes},
       {"datasets", r.datasets}};
}

void from_json(const nlohmann::json& j, WorkloadRequirements& r) {
  r = WorkloadRequirements{};
  r.needs_hpc = j.value("needs_hpc", false);
  r.needs_mpi = j.value("needs_mpi", false);
  r.min_nodes = j.value("min_nodes", 1);
  if (j.contains("datasets")) {
    r.datasets = j.at("datasets").get<std::vector<ExternalDataRef>>();
  }
}

std::string to_string(Objective o) {
  return o == Objective::min_time_to_frontend ? "min_time_to_frontend" : "min_data_movement";
}

Objective parse_objective(const std::string& s) {
  if (s == "min_time_to_frontend" || s == "time") return Objective::min_time_to_frontend;
  if (s == "min_data_movement" || s == "data") return Objective::min_data_movement;
  throw ValidationError("unknown objective '" + s + "'");
}

void to_json(nlohmann::json& j, const PlacementPlan& p) {
  j = {{"model", to_string(p.model)},
       {"frontend_resource", p.frontend_resource},
       {"workload_resources", p.workload_resources},
       {"proxy_required", p.proxy_required},
       {"staging_actions", p.staging_actions},
       {"estimated_time_to_frontend", p.estimated_time_to_frontend},
       {"wide_area_bytes", p.wide_area_bytes},
       {"credential", p.credential},
       {"user_override", p.user_override},
       {"reasons", p.reasons}};
}

std::vector<ModelFeasibility> enumerate_feasible_models(
    const WorkloadRequirements& req, const std::vector<ResourceDescriptor>& inventory,
    const std::optional<std::string>& frontend_override) {
  if (inventory.empty()) throw ValidationError("resource inventory is empty");
  req.validate();
  std::vector<ModelFeasibility> out;
  for (auto m : kAllModels) {
    auto [cands, reason] = candidates_for(m, req, inventory, frontend_override);
    if (cands.empty()) {
      out.push_back({m, false, reason});
    } else {
      const auto& c = cands.front();
      std::string ok = "frontend on '" + c.frontend->name + "'";
      if (c.workload) ok += ", workload on '" + c.workload->name + "'";
      if (m == ExecutionModel::M6_decoupled_remote_lrm && frontend_override) {
        ok += "; user_override=true";
      }
      out.push_back({m, true, ok});
    }
  }
  return out;
}

Duration estimate_time_to_frontend(ExecutionModel model, const ResourceDescriptor& resource,
                                   Duration image_load,
                                   const std::optional<PoolState>& pool_state) {
  const bool wt = resource.kind == ResourceKind::wt_cluster;
  bool ok = false;
  switch (model) {
    case ExecutionModel::M1_wt_cluster:
    case ExecutionModel::M5_wt_frontend_remote_lrm:
      ok = wt;
      break;
    case ExecutionModel::M2_hpc_node: ok = is_direct_hpc(resource); break;
    case ExecutionModel::M3_hpc_node_local_lrm: ok = resource.is_batch_hpc(); break;
    case ExecutionModel::M4_hpc_mpi: ok = resource.is_batch_hpc() && resource.mpi_capable; break;
    case ExecutionModel::M6_decoupled_remote_lrm: ok = true; break;
  }
  if (!ok) {
    throw InfeasibleError(short_name(model) + " cannot place a frontend on '" + resource.name +
                          "' (" + to_string(resource.kind) + ", lrm=" +
                          to_string(resource.lrm) + ")");
  }
  if (resource.kind != ResourceKind::hpc_cluster) return image_load;
  if (pool_state && pool_state->warm_slot && resource.is_batch_hpc()) {
    return image_load + pool_state->dispatch_overhead;
  }
  const Duration wait = resource.queue_model ? resource.queue_model->expected_wait() : 0.0;
  return image_load + wait;
}

std::optional<PlacementPlan> plan_for_model(const WorkloadRequirements& req,
                                            const std::vector<ResourceDescriptor>& inventory,
                                            ExecutionModel model, const PlanOptions& options) {
  if (inventory.empty()) throw ValidationError("resource inventory is empty");
  req.validate();
  auto [cands, reason] = candidates_for(model, req, inventory, options.frontend_override);
  std::optional<PlacementPlan> best;
  for (const auto& c : cands) {
    auto p = make_plan(model, c, req, options);
    if (!best || objective_value(p, options.objective) < objective_value(*best, options.objective)) {
      best = std::move(p);
    }
  }
  return best;
}

PlacementPlan plan_placement(const WorkloadRequirements& req,
                             const std::vector<ResourceDescriptor>& inventory,
                             const PlanOptions& options) {
  std::optional<PlacementPlan> best;
  for (auto m : kAllModels) {
    auto p = plan_for_model(req, inventory, m, options);
    if (!p) continue;
    if (!best || objective_value(*p, options.objective) < objective_value(*best, options.objective)) {
      best = std::move(p);
    }
  }
  if (!best) {
    std::string msg = "infeasible: no execution model fits";
    for (const auto& f : enumerate_feasible_models(req, inventory, options.frontend_override)) {
      msg += "\n  " + short_name(f.model) + ": " + f.reason;
    }
    throw InfeasibleError(msg);
  }
  return *best;
}

}  // namespace talescale
