#include <gtest/gtest.h>

#include <random>
#include <thread>

#include "talescale/clock.hpp"
#include "talescale/errors.hpp"
#include "talescale/proxy_registry.hpp"

using namespace talescale;

namespace {

struct Net {
  SimNetwork network;
  SimClock clock;
  ProxyRegistry registry{network, clock, [](const std::string& r) { return r == "locked"; }};
};

}  // namespace

TEST(Proxy, RegisterGivesTalePath) {
  Net n;
  auto r = n.registry.register_endpoint("t1", {"hpcA", "n3", 8888});
  EXPECT_EQ(r.public_path, "/tales/t1/");
  EXPECT_EQ(ProxyRegistry::public_path_for("t1"), "/tales/t1/");
  EXPECT_THROW(n.registry.register_endpoint("t1", {"hpcA", "n4", 8888}), ValidationError);
  EXPECT_THROW(n.registry.register_endpoint("a/b", {"hpcA", "n4", 1}), ValidationError);
  EXPECT_THROW(n.registry.register_endpoint("", {"hpcA", "n4", 1}), ValidationError);
}

TEST(Proxy, ReRegisterAfterDeregister) {
  Net n;
  n.registry.register_endpoint("t1", {"hpcA", "n3", 8888});
  n.registry.deregister("t1");
  EXPECT_FALSE(n.registry.find("t1"));
  EXPECT_NO_THROW(n.registry.register_endpoint("t1", {"hpcA", "n5", 9999}));
  n.registry.deregister("t1");
  EXPECT_NO_THROW(n.registry.deregister("t1"));
  EXPECT_THROW(n.registry.route("/tales/t1/", "GET"), NotFoundError);
}

TEST(Proxy, ForwardsBytesUnmodified) {
  Net n;
  InternalEndpoint ep{"hpcA", "n3", 8888};
  n.network.listen(ep, [](std::string_view req) {
    std::string out(req.rbegin(), req.rend());
    return out;
  });
  n.registry.register_endpoint("t1", ep);
  std::mt19937 gen(3);
  for (int i = 0; i < 200; ++i) {
    std::string req;
    const int len = static_cast<int>(gen() % 300);
    for (int b = 0; b < len; ++b) req.push_back(static_cast<char>(gen() & 0xff));
    const std::string want(req.rbegin(), req.rend());
    EXPECT_EQ(n.registry.route("/tales/t1/api/x", req), want);
  }
  auto log = n.registry.forwards();
  ASSERT_EQ(log.size(), 200u);
  EXPECT_EQ(log[0].tale_id, "t1");
  EXPECT_EQ(log[0].endpoint, ep);
  EXPECT_EQ(n.registry.forwarding_log_ndjson().size() > 0, true);
}

TEST(Proxy, UnknownPathsAreNotFound) {
  Net n;
  EXPECT_THROW(n.registry.route("/tales/ghost/", "GET"), NotFoundError);
  EXPECT_THROW(n.registry.route("/elsewhere", "GET"), NotFoundError);
}

TEST(Proxy, NoProxyResourceIsPolicyError) {
  Net n;
  InternalEndpoint ep{"locked", "n1", 80};
  n.network.listen(ep, [](std::string_view) { return std::string("secret"); });
  n.registry.register_endpoint("t2", ep);
  EXPECT_THROW(n.registry.route("/tales/t2/", "GET"), PolicyError);
  EXPECT_TRUE(n.registry.forwards().empty());
}

TEST(Proxy, DeadEndpointIsNotFound) {
  Net n;
  n.registry.register_endpoint("t3", {"hpcA", "gone", 1});
  EXPECT_THROW(n.registry.route("/tales/t3/", "GET"), NotFoundError);
}

TEST(Proxy, ConcurrentRegistrationsAndRoutes) {
  Net n;
  std::vector<std::thread> threads;
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&, i] {
      InternalEndpoint ep{"hpcA", "n" + std::to_string(i), 8000 + i};
      n.network.listen(ep, [i](std::string_view) { return std::to_string(i); });
      const auto id = "t" + std::to_string(i);
      n.registry.register_endpoint(id, ep);
      for (int k = 0; k < 100; ++k) {
        EXPECT_EQ(n.registry.route("/tales/" + id + "/", "x"), std::to_string(i));
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(n.registry.routes().size(), 8u);
  EXPECT_EQ(n.registry.forwards().size(), 800u);
}
