#include <gtest/gtest.h>

#include <functional>

#include "hazardpipe/api/config.hpp"
#include "hazardpipe/core/error.hpp"
#include "support.hpp"

using namespace hazardpipe;

namespace {

std::string kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return "none";
}

}  // namespace

TEST(Settings, DefaultsWithoutFile) {
  const auto s = Settings::load(std::nullopt);
  const auto c = service_config(s);
  EXPECT_EQ(c.server.port, 8080);
  EXPECT_EQ(c.validation.quorum, 3);
  EXPECT_DOUBLE_EQ(c.validation.tau_hi, 0.7);
  EXPECT_EQ(c.detector.backend, "mock");
  EXPECT_NO_THROW(s.check_consumed());
  const auto sim = scenario_config(s);
  EXPECT_EQ(sim.n_images, 1000);
  EXPECT_EQ(sim.n_sites, 50);
}

TEST(Settings, ParsesEverySection) {
  const auto s = Settings::from_string(R"(
[server]
port = 9191
data_dir = /tmp/x
salt = pepper
[validation]
quorum = 5
tau_hi = 0.8
[geo]
region = 39.3,2.4,39.9,3.4
resolution_m = 500
[detector]
score_threshold = 0.4
cell_px = 8
[explain]
rows = 4
seed = 12
[report]
narrative_host = localhost
timeout_s = 2.5
[simulation]
n_images = 400
seed = 77
apply_recalibration = yes
)");
  const auto c = service_config(s);
  EXPECT_NO_THROW(s.check_consumed());
  EXPECT_EQ(c.server.port, 9191);
  EXPECT_EQ(c.server.data_dir, "/tmp/x");
  EXPECT_EQ(c.ingest.salt, "pepper");
  EXPECT_EQ(c.validation.quorum, 5);
  EXPECT_DOUBLE_EQ(c.region.lat_min, 39.3);
  EXPECT_DOUBLE_EQ(c.geo_resolution_m, 500);
  EXPECT_DOUBLE_EQ(c.detector.score_threshold, 0.4);
  EXPECT_EQ(c.detector.pixel.cell_px, 8);
  EXPECT_EQ(c.explain.rows, 4);
  EXPECT_EQ(c.explain.seed, 12u);
  EXPECT_EQ(c.report.narrative_host, "localhost");
  EXPECT_DOUBLE_EQ(c.report.timeout_s, 2.5);
  const auto sim = scenario_config(s);
  EXPECT_EQ(sim.n_images, 400);
  EXPECT_EQ(sim.seed, 77u);
  EXPECT_TRUE(sim.apply_recalibration);
  EXPECT_DOUBLE_EQ(sim.score_threshold, 0.4);
  EXPECT_EQ(sim.consensus.quorum, 5);
}

TEST(Settings, UnknownKeysAreRejected) {
  const auto s = Settings::load(hptest::data_path("bad.ini"));
  (void)scenario_config(s);
  try {
    s.check_consumed();
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "InvalidConfig");
    EXPECT_NE(std::string(e.what()).find("colour"), std::string::npos);
  }
  const auto section = Settings::from_string("[nonsense]\nx = 1\n");
  service_config(section);
  EXPECT_EQ(kind_of([&] { section.check_consumed(); }), "InvalidConfig");
}

TEST(Settings, BadValues) {
  for (const char* text : {"[server]\nport = eighty\n", "[server]\nport = 80x\n", "[simulation]\nseed = -3\n",
                           "[simulation]\napply_recalibration = maybe\n", "[validation]\ntau_lo = 0.9\n",
                           "[detector]\nbackend = gpu\n", "[detector]\nbackend = external\n",
                           "[geo]\nregion = 1,2,3\n", "[simulation]\nn_images = 10\n"}) {
    EXPECT_EQ(kind_of([&] { service_config(Settings::from_string(text)); }), "InvalidConfig") << text;
  }
  EXPECT_EQ(kind_of([] { Settings::load(std::filesystem::path("/nonexistent/x.ini")); }), "InvalidConfig");
  EXPECT_EQ(kind_of([] { Settings::from_string("[server\nport=1"); }), "InvalidConfig");
}

TEST(Settings, EnvironmentOverrides) {
  auto s = Settings::from_string("[server]\nport = 9000\n");
  std::string a = "HAZARDPIPE_SERVER__PORT=9100";
  std::string b = "HAZARDPIPE_VALIDATION__QUORUM=4";
  std::string c = "HAZARDPIPE_NOSEPARATOR=1";
  std::string d = "PATH=/usr/bin";
  char* env[] = {a.data(), b.data(), c.data(), d.data(), nullptr};
  s.apply_env(env);
  const auto cfg = service_config(s);
  EXPECT_EQ(cfg.server.port, 9100);
  EXPECT_EQ(cfg.validation.quorum, 4);
  EXPECT_NO_THROW(s.check_consumed());

  std::string typo = "HAZARDPIPE_SERVER__PROT=1";
  char* env2[] = {typo.data(), nullptr};
  s.apply_env(env2);
  service_config(s);
  EXPECT_EQ(kind_of([&] { s.check_consumed(); }), "InvalidConfig");
}

TEST(Settings, SmallScenarioFixture) {
  const auto s = Settings::load(hptest::data_path("small.ini"));
  const auto c = scenario_config(s);
  EXPECT_NO_THROW(s.check_consumed());
  EXPECT_EQ(c.n_images, 200);
  EXPECT_EQ(c.validators.n, 40);
  EXPECT_DOUBLE_EQ(c.site_threshold, 3.0);
}
