#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <limits>
#include <random>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/hash.hpp"
#include "hazardpipe/core/json.hpp"
#include "hazardpipe/core/types.hpp"

using namespace hazardpipe;

namespace {

std::string kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  return "";
}

}  // namespace

TEST(GeoPoint, RejectsOutOfRangeAndNonFinite) {
  EXPECT_EQ(kind_of([] { make_geopoint(91, 0); }), "OutOfRange");
  EXPECT_EQ(kind_of([] { make_geopoint(0, -180.5); }), "OutOfRange");
  EXPECT_EQ(kind_of([] { make_geopoint(std::nan(""), 0); }), "NotFinite");
  EXPECT_EQ(kind_of([] { make_geopoint(0, std::numeric_limits<double>::infinity()); }), "NotFinite");
  const auto p = make_geopoint(-90, 180);
  EXPECT_EQ(p.lat(), -90);
  EXPECT_EQ(p.lon(), 180);
}

TEST(GeoPoint, OutOfRangeMessageNamesAxis) {
  try {
    make_geopoint(0, 200);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("lon"), std::string::npos);
  }
}

TEST(BoundingBox, RequiresPositiveExtent) {
  EXPECT_EQ(kind_of([] { BoundingBox::make(5, 0, 5, 10); }), "InvalidBox");
  EXPECT_EQ(kind_of([] { BoundingBox::make(-1, 0, 5, 10); }), "InvalidBox");
  EXPECT_EQ(kind_of([] { BoundingBox::make(0, 3, 5, 2); }), "InvalidBox");
  const auto b = BoundingBox::make(1, 2, 4, 8);
  EXPECT_DOUBLE_EQ(b.area(), 18.0);
}

TEST(HazardClass, LabelsRoundTrip) {
  for (auto c : kAllHazardClasses) EXPECT_EQ(parse_hazard_class(hazard_label(c)), c);
  EXPECT_EQ(hazard_label(HazardClass::PlasticFoil), "plastic_foil");
  EXPECT_EQ(hazard_display_name(HazardClass::RubberWaste), "rubber waste");
  EXPECT_EQ(kind_of([] { parse_hazard_class("glass"); }), "UnknownClass");
}

TEST(Timestamp, IsoRoundTripAtMillisecondPrecision) {
  const auto t = from_epoch_ms(1714564800123);
  EXPECT_EQ(format_iso8601(t), "2024-05-01T12:00:00.123Z");
  EXPECT_EQ(parse_iso8601("2024-05-01T12:00:00.123Z"), t);
  EXPECT_EQ(parse_iso8601("2024-05-01T12:00:00Z"), from_epoch_ms(1714564800000));
  EXPECT_EQ(kind_of([] { parse_iso8601("2024-05-01 12:00"); }), "BadTimestamp");
}

TEST(Json, ReportRoundTripIsBitIdentical) {
  std::mt19937_64 rng(11);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 200; ++i) {
    Report r{"", "", make_geopoint(0, 0), from_epoch_ms(0), "", {}, PipelineStage::Submitted, {}};
    r.id = "r" + std::to_string(i);
    r.submitter = salted_identity("salt", "user" + std::to_string(i));
    r.geo = make_geopoint(-90 + 180 * u(rng), -180 + 360 * u(rng));
    r.captured_at = from_epoch_ms(1700000000000 + static_cast<std::int64_t>(u(rng) * 1e9));
    r.image_ref = sha256_hex(r.id);
    const int n = static_cast<int>(u(rng) * 4);
    for (int k = 0; k < n; ++k) {
      const double x = u(rng) * 500, y = u(rng) * 400;
      Detection d{r.id + "-d" + std::to_string(k), BoundingBox::make(x, y, x + 1 + u(rng) * 100, y + 1 + u(rng) * 80),
                  kAllHazardClasses[k % 5], u(rng), u(rng), std::nullopt, std::nullopt};
      if (k % 2 == 0) d.cam_ref = "cam";
      r.detections.push_back(d);
    }
    r.stage = PipelineStage::Submitted;
    r.stage_history = {{PipelineStage::Submitted, r.captured_at}};
    const json j = r;
    const auto back = j.get<Report>();
    EXPECT_EQ(back, r);
    EXPECT_EQ(json(back).dump(), j.dump());
  }
}

TEST(Json, BoxSerializesNamedFields) {
  const json j = BoundingBox::make(1, 2, 3, 4);
  EXPECT_EQ(j.dump(), R"({"x_max":3.0,"x_min":1.0,"y_max":4.0,"y_min":2.0})");
  EXPECT_EQ(j.get<BoundingBox>(), BoundingBox::make(1, 2, 3, 4));
}

TEST(Hash, Sha256KnownVector) {
  EXPECT_EQ(sha256_hex(std::string_view("abc")),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
  EXPECT_NE(salted_identity("a", "user"), salted_identity("b", "user"));
  EXPECT_EQ(salted_identity("a", "user"), salted_identity("a", "user"));
}
