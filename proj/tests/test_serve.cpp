#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "glint/serve.hpp"

using namespace glint;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

/// A live server on an ephemeral port, torn down with the fixture.
class Live : public ::testing::Test {
 protected:
  void SetUp() override {
    install_routes(server_, service_);
    port_ = server_.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port_, 0);
    thread_ = std::thread([this] { server_.listen_after_bind(); });
    server_.wait_until_ready();
  }
  void TearDown() override {
    server_.stop();
    thread_.join();
  }

  httplib::Client client() const {
    httplib::Client c("127.0.0.1", port_);
    c.set_read_timeout(120, 0);
    return c;
  }

  httplib::Result post(const std::string& path, const json& body) const {
    return client().Post(path, body.dump(), "application/json");
  }

  RenderService service_{builtin("MirrorRoom").space};
  httplib::Server server_;
  std::thread thread_;
  int port_ = 0;
};

PixelGenerator<float> small_net(std::size_t dim) {
  return PixelGenerator<float>(GeneratorShape{static_cast<int>(dim), 8, 2}, 4);
}

}  // namespace

TEST(Parse, FieldErrors) {
  const auto space = builtin("MirrorRoom").space;
  auto field_of = [&](const json& j) -> std::string {
    try {
      parse_render_request(j, space);
    } catch (const FieldError& e) {
      return e.field;
    }
    return "";
  };
  EXPECT_EQ(field_of(json::array()), "body");
  EXPECT_EQ(field_of({{"resolution", 64}}), "vector");
  EXPECT_EQ(field_of({{"vector", {0.5}}}), "vector");
  EXPECT_EQ(field_of({{"vector", {0.5, 1.5}}}), "vector");
  EXPECT_EQ(field_of({{"vector", {0.5, "a"}}}), "vector");
  EXPECT_EQ(field_of({{"vector", {0.5, 0.5}}, {"camera", {0, 0, 0}}}), "camera");
  EXPECT_EQ(field_of({{"vector", {0.5, 0.5}}, {"camera", {1, 1, 1, 1, 1, 1}}}), "camera");
  EXPECT_EQ(field_of({{"vector", {0.5, 0.5}}, {"resolution", 8}}), "resolution");
  EXPECT_EQ(field_of({{"vector", {0.5, 0.5}}, {"resolution", 64.5}}), "resolution");
  EXPECT_EQ(field_of({{"vector", {0.5, 0.5}}, {"mode", "raster"}}), "mode");
  EXPECT_EQ(field_of({{"vector", {0.5, 0.5}}, {"spp", 0}}), "spp");
  EXPECT_EQ(field_of({{"vector", {0.5, 0.5}}, {"exposure", -1}}), "exposure");
  EXPECT_EQ(field_of({{"vector", {0.5, 0.5}}, {"seed", -3}}), "seed");

  const auto r = parse_render_request({{"vector", {0.25, 0.75}}}, space);
  EXPECT_EQ(r.resolution, 128);
  EXPECT_EQ(r.mode, RenderMode::Net);
  EXPECT_EQ(r.camera, space.default_camera());
}

TEST(Parse, RoundTrip) {
  const auto space = builtin("CornellVar").space;
  const std::vector<double> v{0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0, 0.33};
  const auto out = roundtrip_json({{"vector", v}}, space);
  const auto back = out.at("normalized").get<std::vector<double>>();
  for (std::size_t i = 0; i < v.size(); ++i) EXPECT_NEAR(back[i], v[i], 1e-9);
  const auto raw = out.at("raw").get<std::vector<double>>();
  const auto again = roundtrip_json({{"raw", raw}}, space).at("denormalized").get<std::vector<double>>();
  for (std::size_t i = 0; i < raw.size(); ++i) EXPECT_NEAR(again[i], raw[i], 1e-9 * std::max(1.0, std::abs(raw[i])));
  EXPECT_THROW(roundtrip_json({{"vector", {0.5}}}, space), FieldError);
  EXPECT_THROW(roundtrip_json(json::object(), space), FieldError);
}

TEST(Service, PublishChecksDimension) {
  RenderService s(builtin("MirrorRoom").space);
  EXPECT_FALSE(s.ready());
  EXPECT_THROW(s.publish(small_net(3), {}), DimensionError);
  s.publish(small_net(2), {"mem", {}, 7});
  EXPECT_TRUE(s.ready());
  EXPECT_EQ(s.checkpoint_info()->adam_steps, 7u);
}

TEST(Service, LoadFromDisk) {
  const auto path = fs::temp_directory_path() / "glint_serve_ckpt.bin";
  const auto net = small_net(2);
  save_checkpoint(path.string(), net, AdamState<float>(net.parameter_count()));
  RenderService s(builtin("MirrorRoom").space);
  s.load(path);
  EXPECT_EQ(s.checkpoint_info()->path, path.string());
  RenderService wrong(builtin("CausticBox").space);
  EXPECT_THROW(wrong.load(path), Error);
  fs::remove(path);
}

TEST_F(Live, HealthAndCors) {
  auto res = client().Get("/healthz");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->body, "ok");
  EXPECT_EQ(res->get_header_value("Access-Control-Allow-Origin"), "*");
  res = client().Options("/render");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 204);
}

TEST_F(Live, SpaceIsStable) {
  auto a = client().Get("/space");
  auto b = client().Get("/space");
  ASSERT_TRUE(a && b);
  EXPECT_EQ(a->body, b->body);
  const auto j = json::parse(a->body);
  EXPECT_EQ(j.at("dim"), 2);
  EXPECT_EQ(j.at("params").size(), 2u);
  EXPECT_EQ(j.at("params")[0].at("name"), "sphere_x");
  EXPECT_EQ(j.at("camera").at("mode"), "fixed");
  EXPECT_TRUE(j.at("checkpoint_info").is_null());
}

TEST_F(Live, NetRenderWaitsForCheckpoint) {
  auto res = post("/render", {{"vector", {0.5, 0.5}}, {"resolution", 16}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 503);
  EXPECT_EQ(res->get_header_value("Retry-After"), "1");

  service_.publish(small_net(2), {"mem", {}, 0});
  res = post("/render", {{"vector", {0.5, 0.5}}, {"resolution", 16}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 200);
  EXPECT_EQ(res->get_header_value("Content-Type"), "image/png");
  EXPECT_EQ(res->body.substr(1, 3), "PNG");
  EXPECT_FALSE(json::parse(client().Get("/space")->body).at("checkpoint_info").is_null());
}

TEST_F(Live, IdenticalRequestsGiveIdenticalBytes) {
  service_.publish(small_net(2), {"mem", {}, 0});
  for (const char* mode : {"net", "pt"}) {
    const json req{{"vector", {0.3, 0.6}}, {"resolution", 24}, {"mode", mode}, {"spp", 2}, {"seed", 5}};
    auto a = post("/render", req);
    auto b = post("/render", req);
    ASSERT_TRUE(a && b);
    ASSERT_EQ(a->status, 200) << a->body;
    EXPECT_EQ(a->body, b->body) << mode;
  }
}

TEST_F(Live, BadRequestsNameTheField) {
  auto res = post("/render", {{"vector", {0.5, 0.5, 0.5}}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body).at("field"), "vector");
  res = client().Post("/render", "{oops", "application/json");
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body).at("field"), "body");
}

TEST_F(Live, DebugRoundTrip) {
  auto res = post("/debug/roundtrip", {{"vector", {0.125, 0.9}}});
  ASSERT_TRUE(res);
  ASSERT_EQ(res->status, 200);
  const auto j = json::parse(res->body);
  const auto raw = j.at("raw").get<std::vector<double>>();
  EXPECT_NEAR(raw[0], -4.3 + 0.125 * 8.6, 1e-9);
  EXPECT_NEAR(raw[1], -0.3 + 0.9 * 1.6, 1e-9);
  EXPECT_NEAR(j.at("normalized")[1].get<double>(), 0.9, 1e-9);
  res = post("/debug/roundtrip", {{"raw", {9.0, 0.0}}});
  ASSERT_TRUE(res);
  EXPECT_EQ(res->status, 400);
  EXPECT_EQ(json::parse(res->body).at("field"), "raw");
}
