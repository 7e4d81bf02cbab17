#include <gtest/gtest.h>

#include <atomic>
#include <fstream>
#include <thread>

#include "hazardpipe/core/error.hpp"
#include "hazardpipe/core/hash.hpp"
#include "hazardpipe/core/json.hpp"
#include "hazardpipe/ingest/dhash.hpp"
#include "hazardpipe/ingest/exif.hpp"
#include "hazardpipe/ingest/image.hpp"
#include "hazardpipe/ingest/ingest.hpp"
#include "support.hpp"

using namespace hazardpipe;
using hptest::TempDir;

namespace {

const Timestamp kT0 = from_epoch_ms(1714564800000);

ExifFields full_fields() {
  ExifFields f;
  f.gps = make_geopoint(39.5696, 2.6502);
  f.make = "PhoneMaker";
  f.orientation = 6;
  f.maker_note = Bytes{1, 2, 3, 4, 5, 6, 7, 8, 9};
  return f;
}

}  // namespace

TEST(Exif, DmsConversion) {
  EXPECT_NEAR(dms_to_decimal({39, 1, 34, 1, 1056, 100}), 39.5696, 1e-9);
}

TEST(Exif, GeotagRoundTripThroughBuiltPayload) {
  const auto jpeg = hptest::jpeg_with_gps(hptest::test_image(64, 48, 1), 39.5696, 2.6502);
  const auto g = extract_geotag(jpeg);
  ASSERT_TRUE(g.has_value());
  EXPECT_NEAR(g->lat(), 39.5696, 1e-6);
  EXPECT_NEAR(g->lon(), 2.6502, 1e-6);
  EXPECT_TRUE(has_gps_exif(jpeg));
}

TEST(Exif, SouthWestReferencesGiveNegativeCoordinates) {
  const auto base = encode_jpeg(hptest::test_image(32, 32, 2), 90);
  const auto payload = build_exif_payload({}, std::pair{DmsRational{33, 1, 52, 1, 0, 1}, DmsRational{151, 1, 12, 1, 30, 1}},
                                          'S', 'W');
  const auto g = extract_geotag(insert_exif(base, payload));
  ASSERT_TRUE(g.has_value());
  EXPECT_NEAR(g->lat(), -(33 + 52.0 / 60), 1e-9);
  EXPECT_NEAR(g->lon(), -(151 + 12.0 / 60 + 30.0 / 3600), 1e-9);
}

TEST(Exif, MissingGpsAndPng) {
  EXPECT_FALSE(extract_geotag(encode_jpeg(hptest::test_image(16, 16, 3), 80)).has_value());
  EXPECT_FALSE(extract_geotag(encode_png(hptest::test_image(16, 16, 3))).has_value());
}

TEST(Exif, TruncatedInputIsMalformed) {
  auto jpeg = hptest::jpeg_with_gps(hptest::test_image(32, 32, 4), 10, 10);
  jpeg.resize(30);
  try {
    extract_geotag(jpeg);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), "MalformedImage");
  }
}

TEST(Anonymize, StripsGpsMakerAndKeepsOrientationAndPixels) {
  const auto img = hptest::test_image(80, 60, 5);
  const auto base = encode_jpeg(img, 92);
  const auto tagged = insert_exif(base, build_exif_payload(full_fields()));
  ASSERT_TRUE(has_gps_exif(tagged));
  const auto clean = anonymize(tagged);
  EXPECT_FALSE(has_gps_exif(clean));
  const auto tags = list_exif_tags(clean);
  EXPECT_EQ(tags, std::vector<std::uint16_t>{kTagOrientation});
  EXPECT_EQ(decode_image(clean), decode_image(tagged));
  EXPECT_EQ(anonymize(clean), clean);
}

TEST(Anonymize, PropertyOverManyInputs) {
  for (std::uint32_t seed = 0; seed < 40; ++seed) {
    const auto img = hptest::test_image(24 + seed, 20 + seed % 7, seed);
    ExifFields f;
    f.gps = make_geopoint(-80.0 + 4 * seed, -170.0 + 8.5 * seed);
    if (seed % 2) f.orientation = static_cast<std::uint16_t>(1 + seed % 8);
    if (seed % 3) f.make = "cam" + std::to_string(seed);
    const auto tagged = insert_exif(encode_jpeg(img, 70 + seed % 25), build_exif_payload(f));
    const auto clean = anonymize(tagged);
    EXPECT_FALSE(has_gps_exif(clean)) << seed;
    EXPECT_FALSE(extract_geotag(clean).has_value()) << seed;
    EXPECT_EQ(anonymize(clean), clean) << seed;
  }
}

TEST(Anonymize, PngTextChunksDropped) {
  const auto png = encode_png(hptest::test_image(20, 20, 6));
  // Splice a tEXt chunk in after IHDR (8-byte signature + 25-byte IHDR).
  Bytes chunk = {0, 0, 0, 8, 't', 'E', 'X', 't', 'G', 'P', 'S', 0, '1', '2', '3', '4', 0, 0, 0, 0};
  Bytes with_text(png.begin(), png.begin() + 33);
  with_text.insert(with_text.end(), chunk.begin(), chunk.end());
  with_text.insert(with_text.end(), png.begin() + 33, png.end());
  const auto clean = anonymize(with_text);
  EXPECT_EQ(clean, png);
}

TEST(Dhash, StableUnderReencodeAndDistinctAcrossImages) {
  const auto img = hptest::test_image(128, 96, 7);
  const auto a = dedup_key(encode_jpeg(img, 95));
  const auto b = dedup_key(encode_jpeg(img, 60));
  const auto c = dedup_key(encode_png(img));
  EXPECT_LE(hamming_distance(a, b), 4);
  EXPECT_LE(hamming_distance(a, c), 4);
  const auto other = dedup_key(encode_png(hptest::test_image(128, 96, 8)));
  EXPECT_GT(hamming_distance(a, other), 4);
}

class IngestTest : public ::testing::Test {
 protected:
  TempDir dir;
  BlobStore blobs{dir.path()};
  FileStore store{dir / "db"};
  Ingestor ingestor{IngestConfig{}, blobs, store};
};

TEST_F(IngestTest, AcceptsGeotaggedJpegAndStoresAnonymisedBlob) {
  const auto bytes = hptest::jpeg_with_gps(hptest::test_image(64, 64, 10), 39.6, 2.9);
  const auto out = ingestor.ingest({bytes, std::nullopt, std::nullopt, "alice"}, kT0);
  ASSERT_EQ(out.status, IngestOutcome::Status::Accepted);
  const auto doc = store.get(tables::kReports, *out.report_id);
  ASSERT_TRUE(doc.has_value());
  const auto report = doc->get<Report>();
  EXPECT_EQ(report.stage, PipelineStage::Submitted);
  EXPECT_EQ(report.submitter, salted_identity(IngestConfig{}.salt, "alice"));
  EXPECT_NE(doc->dump().find(report.submitter), std::string::npos);
  EXPECT_EQ(doc->dump().find("alice"), std::string::npos);
  EXPECT_NEAR(report.geo.lat(), 39.6, 1e-6);
  EXPECT_FALSE(has_gps_exif(blobs.get(report.image_ref)));
}

TEST_F(IngestTest, RejectionReasons) {
  EXPECT_EQ(ingestor.ingest({{}, std::nullopt, std::nullopt, "a"}, kT0).reason, "empty");
  EXPECT_EQ(ingestor.ingest({Bytes{1, 2, 3, 4}, std::nullopt, std::nullopt, "a"}, kT0).reason, "malformed");
  const auto no_geo = encode_jpeg(hptest::test_image(32, 32, 11), 90);
  EXPECT_EQ(ingestor.ingest({no_geo, std::nullopt, std::nullopt, "a"}, kT0).reason, "no_geotag");
  const auto ok = ingestor.ingest({no_geo, make_geopoint(39.5, 2.5), std::nullopt, "a"}, kT0);
  EXPECT_EQ(ok.status, IngestOutcome::Status::Accepted);

  IngestConfig small;
  small.max_payload_bytes = 100;
  Ingestor tight(small, blobs, store);
  EXPECT_EQ(tight.ingest({no_geo, make_geopoint(1, 1), std::nullopt, "a"}, kT0).reason, "too_large");
}

TEST_F(IngestTest, GeotagDisagreementIsFlagged) {
  const auto bytes = hptest::jpeg_with_gps(hptest::test_image(64, 64, 12), 39.6, 2.9);
  const auto out = ingestor.ingest({bytes, make_geopoint(39.7, 2.9), std::nullopt, "a"}, kT0);
  ASSERT_EQ(out.status, IngestOutcome::Status::Accepted);
  EXPECT_EQ(out.quality_flags, std::vector<std::string>{"geotag_disagreement"});
}

TEST_F(IngestTest, DuplicateSubmissionIsIdempotent) {
  const auto img = hptest::test_image(96, 72, 13);
  const auto first = ingestor.ingest({hptest::jpeg_with_gps(img, 39.6, 2.9), std::nullopt, std::nullopt, "a"}, kT0);
  ASSERT_EQ(first.status, IngestOutcome::Status::Accepted);
  const auto reports_before = store.list(tables::kReports);
  const auto blobs_before = blobs.list();
  for (int q : {90, 75, 60}) {
    const auto again =
        ingestor.ingest({hptest::jpeg_with_gps(img, 39.6, 2.9, q), std::nullopt, std::nullopt, "b"}, kT0);
    EXPECT_EQ(again.status, IngestOutcome::Status::Duplicate);
    EXPECT_EQ(again.duplicate_of, first.report_id);
  }
  EXPECT_EQ(store.list(tables::kReports), reports_before);
  EXPECT_EQ(blobs.list(), blobs_before);
}

TEST_F(IngestTest, ConcurrentDuplicatesPersistExactlyOnce) {
  const auto bytes = hptest::jpeg_with_gps(hptest::test_image(96, 72, 14), 39.6, 2.9);
  std::vector<std::thread> threads;
  std::atomic<int> accepted{0};
  for (int i = 0; i < 8; ++i) {
    threads.emplace_back([&] {
      if (ingestor.ingest({bytes, std::nullopt, std::nullopt, "a"}, kT0).status == IngestOutcome::Status::Accepted) {
        ++accepted;
      }
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(accepted.load(), 1);
  EXPECT_EQ(store.list(tables::kReports).size(), 1u);
}

TEST_F(IngestTest, DedupIndexSurvivesRestart) {
  const auto bytes = hptest::jpeg_with_gps(hptest::test_image(96, 72, 15), 39.6, 2.9);
  ASSERT_EQ(ingestor.ingest({bytes, std::nullopt, std::nullopt, "a"}, kT0).status, IngestOutcome::Status::Accepted);
  FileStore reopened(dir / "db");
  Ingestor again(IngestConfig{}, blobs, reopened);
  EXPECT_EQ(again.ingest({bytes, std::nullopt, std::nullopt, "a"}, kT0).status, IngestOutcome::Status::Duplicate);
}

TEST(BlobStore, ContentAddressedLayout) {
  TempDir dir;
  BlobStore blobs(dir.path());
  const Bytes data = {'h', 'e', 'l', 'l', 'o'};
  const auto ref = blobs.put(data);
  EXPECT_EQ(ref, sha256_hex(std::string_view("hello")));
  EXPECT_TRUE(std::filesystem::exists(dir.path() / "blobs" / ref.substr(0, 2) / ref));
  EXPECT_EQ(blobs.put(data), ref);
  EXPECT_EQ(blobs.get(ref), data);
  EXPECT_THROW(blobs.get(std::string(64, 'a')), Error);
}

TEST(FileStore, JournalReplayAndTornTail) {
  TempDir dir;
  {
    FileStore s(dir.path());
    s.put("t", "k1", {{"a", 1}});
    s.put("t", "k2", {{"a", 2}});
    s.erase("t", "k1");
    s.append("log", {{"n", 1}});
  }
  {
    std::ofstream out(dir.path() / "journal.jsonl", std::ios::app);
    out << R"({"op":"put","t":"t","k":"k3")";
  }
  FileStore s(dir.path());
  EXPECT_FALSE(s.get("t", "k1").has_value());
  EXPECT_EQ(s.get("t", "k2")->at("a"), 2);
  EXPECT_FALSE(s.get("t", "k3").has_value());
  EXPECT_EQ(s.read_log("log").size(), 1u);
  EXPECT_FALSE(s.insert_if_absent("t", "k2", {{"a", 9}}));
  EXPECT_EQ(s.get("t", "k2")->at("a"), 2);
}
