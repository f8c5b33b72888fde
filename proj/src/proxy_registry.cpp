#include "talescale/proxy_registry.hpp"

#include <nlohmann/json.hpp>

#include "talescale/digest.hpp"
#include "talescale/errors.hpp"

namespace talescale {

namespace {

constexpr std::string_view kPrefix = "/tales/";

std::string describe(const InternalEndpoint& ep) {
  return ep.resource + ":" + ep.node + ":" + std::to_string(ep.port);
}

}  // namespace

void SimNetwork::listen(const InternalEndpoint& ep, Handler handler) {
  std::unique_lock lock(mu_);
  listeners_[ep] = std::move(handler);
}

void SimNetwork::close(const InternalEndpoint& ep) {
  std::unique_lock lock(mu_);
  listeners_.erase(ep);
}

bool SimNetwork::reachable(const InternalEndpoint& ep) const {
  std::shared_lock lock(mu_);
  return listeners_.count(ep) > 0;
}

std::string SimNetwork::deliver(const InternalEndpoint& ep, std::string_view request) const {
  Handler handler;
  {
    std::shared_lock lock(mu_);
    auto it = listeners_.find(ep);
    if (it == listeners_.end()) {
      throw NotFoundError("nothing listening on " + describe(ep));
    }
    handler = it->second;
  }
  return handler(request);
}

ProxyRegistry::ProxyRegistry(SimNetwork& network, const Scheduler& clock,
                             std::function<bool(const std::string&)> no_proxy)
    : network_(network), clock_(clock), no_proxy_(std::move(no_proxy)) {}

std::string ProxyRegistry::public_path_for(const std::string& tale_id) {
  return std::string(kPrefix) + tale_id + "/";
}

Route ProxyRegistry::register_endpoint(const std::string& tale_id,
                                       const InternalEndpoint& endpoint) {
  if (tale_id.empty() || tale_id.find_first_of("/?#") != std::string::npos) {
    throw ValidationError("tale id '" + tale_id + "' cannot be used as a path segment");
  }
  Route r{public_path_for(tale_id), tale_id, endpoint, clock_.now()};
  std::unique_lock lock(routes_mu_);
  if (by_tale_.count(tale_id)) {
    throw ValidationError("tale '" + tale_id + "' already has a route");
  }
  by_tale_.emplace(tale_id, r);
  by_path_.emplace(r.public_path, tale_id);
  return r;
}

std::string ProxyRegistry::route(std::string_view public_path, std::string_view request) {
  if (public_path.substr(0, kPrefix.size()) != kPrefix) {
    throw NotFoundError("no route for '" + std::string(public_path) + "'");
  }
  auto rest = public_path.substr(kPrefix.size());
  auto id = std::string(rest.substr(0, rest.find('/')));

  Route r;
  {
    std::shared_lock lock(routes_mu_);
    auto it = by_tale_.find(id);
    if (it == by_tale_.end()) {
      throw NotFoundError("no route for '" + std::string(public_path) + "'");
    }
    r = it->second;
  }
  if (no_proxy_ && no_proxy_(r.endpoint.resource)) {
    throw PolicyError("resource '" + r.endpoint.resource +
                      "' forbids proxied access to compute nodes");
  }
  std::string response = network_.deliver(r.endpoint, request);

  ForwardRecord rec{clock_.now(),          std::string(public_path), r.tale_id, r.endpoint,
                    request.size(),        response.size(),         content_digest(request),
                    content_digest(response)};
  {
    std::lock_guard lock(log_mu_);
    log_.push_back(std::move(rec));
  }
  return response;
}

void ProxyRegistry::deregister(const std::string& tale_id) {
  std::unique_lock lock(routes_mu_);
  auto it = by_tale_.find(tale_id);
  if (it == by_tale_.end()) return;
  by_path_.erase(it->second.public_path);
  by_tale_.erase(it);
}

std::optional<Route> ProxyRegistry::find(const std::string& tale_id) const {
  std::shared_lock lock(routes_mu_);
  auto it = by_tale_.find(tale_id);
  if (it == by_tale_.end()) return std::nullopt;
  return it->second;
}

std::vector<Route> ProxyRegistry::routes() const {
  std::shared_lock lock(routes_mu_);
  std::vector<Route> out;
  for (const auto& [_, r] : by_tale_) out.push_back(r);
  return out;
}

std::vector<ForwardRecord> ProxyRegistry::forwards() const {
  std::lock_guard lock(log_mu_);
  return log_;
}

std::string ProxyRegistry::forwarding_log_ndjson() const {
  std::string out;
  for (const auto& f : forwards()) {
    nlohmann::json j = {{"t", f.t},
                        {"path", f.public_path},
                        {"tale_id", f.tale_id},
                        {"resource", f.endpoint.resource},
                        {"node", f.endpoint.node},
                        {"port", f.endpoint.port},
                        {"request_bytes", f.request_bytes},
                        {"response_bytes", f.response_bytes},
                        {"request_digest", f.request_digest},
                        {"response_digest", f.response_digest}};
    out += j.dump();
    out += '\n';
  }
  return out;
}

}  // namespace talescale
