#pragma once

#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "talescale/clock.hpp"

namespace talescale {

struct InternalEndpoint {
  std::string resource;
  std::string node;
  int port = 0;

  auto operator<=>(const InternalEndpoint&) const = default;
};

struct Route {
  std::string public_path;
  std::string tale_id;
  InternalEndpoint endpoint;
  SimTime created_at = 0;

  bool operator==(const Route&) const = default;
};

// In-process stand-in for the network between the proxy and compute nodes.
class SimNetwork {
 public:
  using Handler = std::function<std::string(std::string_view request)>;

  void listen(const InternalEndpoint& ep, Handler handler);
  void close(const InternalEndpoint& ep);
  bool reachable(const InternalEndpoint& ep) const;

  // Throws NotFoundError when nothing listens on `ep`.
  std::string deliver(const InternalEndpoint& ep, std::string_view request) const;

 private:
  mutable std::shared_mutex mu_;
  std::map<InternalEndpoint, Handler> listeners_;
};

struct ForwardRecord {
  SimTime t = 0;
  std::string public_path;
  std::string tale_id;
  InternalEndpoint endpoint;
  std::size_t request_bytes = 0;
  std::size_t response_bytes = 0;
  std::string request_digest;
  std::string response_digest;
};

// Maps /tales/<tale_id>/... onto frontends that cannot take inbound
// connections themselves.
class ProxyRegistry {
 public:
  // `no_proxy` answers whether a resource's policy forbids proxied access.
  ProxyRegistry(SimNetwork& network, const Scheduler& clock,
                std::function<bool(const std::string& resource)> no_proxy = {});

  // Throws ValidationError if the tale already has a route or its id cannot
  // form a path segment.
  Route register_endpoint(const std::string& tale_id, const InternalEndpoint& endpoint);

  // Forwards `request` unmodified and returns the endpoint's response
  // unmodified. Throws NotFoundError for unknown paths and PolicyError when
  // the endpoint's resource forbids proxying.
  std::string route(std::string_view public_path, std::string_view request);

  // Idempotent.
  void deregister(const std::string& tale_id);

  std::optional<Route> find(const std::string& tale_id) const;
  std::vector<Route> routes() const;
  std::vector<ForwardRecord> forwards() const;
  std::string forwarding_log_ndjson() const;

  static std::string public_path_for(const std::string& tale_id);

 private:
  SimNetwork& network_;
  const Scheduler& clock_;
  std::function<bool(const std::string&)> no_proxy_;

  mutable std::shared_mutex routes_mu_;
  std::map<std::string, Route> by_tale_;
  std::map<std::string, std::string> by_path_;

  mutable std::mutex log_mu_;
  std::vector<ForwardRecord> log_;
};

}  // namespace talescale
