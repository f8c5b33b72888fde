#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "talescale/clock.hpp"
#include "talescale/data_ref.hpp"
#include "talescale/dms_cache.hpp"
#include "talescale/resource.hpp"

namespace talescale {

// Where the Tale frontend and its HPC workload run.
enum class ExecutionModel {
  M1_wt_cluster,               // frontend and workload inside the deployment cluster
  M2_hpc_node,                 // frontend on an HPC node reached without a batch queue
  M3_hpc_node_local_lrm,       // frontend on an HPC node, workloads via the local LRM
  M4_hpc_mpi,                  // frontend as the lead rank of a multi-node MPI job
  M5_wt_frontend_remote_lrm,   // frontend on the deployment cluster, remote LRM access
  M6_decoupled_remote_lrm,     // frontend anywhere, workloads on any supported LRM
};

inline constexpr std::array<ExecutionModel, 6> kAllModels = {
    ExecutionModel::M1_wt_cluster,          ExecutionModel::M2_hpc_node,
    ExecutionModel::M3_hpc_node_local_lrm,  ExecutionModel::M4_hpc_mpi,
    ExecutionModel::M5_wt_frontend_remote_lrm, ExecutionModel::M6_decoupled_remote_lrm};

std::string to_string(ExecutionModel m);
std::string short_name(ExecutionModel m);  // "M1".."M6"
ExecutionModel parse_model(const std::string& s);  // accepts either form

struct WorkloadRequirements {
  bool needs_hpc = false;
  bool needs_mpi = false;
  int min_nodes = 1;
  std::vector<ExternalDataRef> datasets;

  // Throws ValidationError: needs_mpi implies needs_hpc, min_nodes >= 1.
  void validate() const;
};

void to_json(nlohmann::json& j, const WorkloadRequirements& r);
void from_json(const nlohmann::json& j, WorkloadRequirements& r);

struct ModelFeasibility {
  ExecutionModel model;
  bool feasible = false;
  std::string reason;
};

enum class Objective { min_time_to_frontend, min_data_movement };
std::string to_string(Objective o);
Objective parse_objective(const std::string& s);

struct PlanOptions {
  Objective objective = Objective::min_time_to_frontend;
  Duration image_load = 8.0;
  Duration dispatch_overhead = 0.5;
  // Resources whose pilot pool currently holds a warm slot.
  std::set<std::string> warm_pools;
  // Frontend resource named explicitly by the user (decoupled model).
  std::optional<std::string> frontend_override;
  // Opaque credential name carried to the middleware for workload jobs.
  std::string credential = "default";
};

struct PlacementPlan {
  ExecutionModel model = ExecutionModel::M1_wt_cluster;
  std::string frontend_resource;
  std::vector<std::string> workload_resources;
  bool proxy_required = false;
  std::vector<StagingAction> staging_actions;
  Duration estimated_time_to_frontend = 0;
  std::uint64_t wide_area_bytes = 0;
  std::string credential;
  bool user_override = false;
  std::vector<std::string> reasons;

  bool operator==(const PlacementPlan&) const = default;
};

void to_json(nlohmann::json& j, const PlacementPlan& p);

// All six models with a verdict and a human-readable reason. Throws
// ValidationError on an empty inventory.
std::vector<ModelFeasibility> enumerate_feasible_models(
    const WorkloadRequirements& req, const std::vector<ResourceDescriptor>& inventory,
    const std::optional<std::string>& frontend_override = std::nullopt);

struct PoolState {
  bool warm_slot = false;
  Duration dispatch_overhead = 0.5;
};

// Expected seconds from launch request to a usable frontend. Uses the
// analytic mean of the resource's queue model. Throws InfeasibleError when
// the model cannot place a frontend on `resource`.
Duration estimate_time_to_frontend(ExecutionModel model, const ResourceDescriptor& resource,
                                   Duration image_load,
                                   const std::optional<PoolState>& pool_state = std::nullopt);

// Best feasible model under the objective; ties go to the lower model.
// Throws InfeasibleError listing every model's reason.
PlacementPlan plan_placement(const WorkloadRequirements& req,
                             const std::vector<ResourceDescriptor>& inventory,
                             const PlanOptions& options = {});

// Best placement restricted to one model; nullopt if the model is infeasible.
std::optional<PlacementPlan> plan_for_model(const WorkloadRequirements& req,
                                            const std::vector<ResourceDescriptor>& inventory,
                                            ExecutionModel model,
                                            const PlanOptions& options = {});

}  // namespace talescale
