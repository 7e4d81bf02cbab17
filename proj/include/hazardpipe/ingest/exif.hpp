#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hazardpipe/core/types.hpp"
#include "hazardpipe/ingest/image.hpp"

namespace hazardpipe {

// Subset of EXIF fields the pipeline reads or writes. Used to build fixtures
// and the orientation-only segment that anonymize() leaves behind.
struct ExifFields {
  std::optional<std::uint16_t> orientation;
  std::optional<GeoPoint> gps;
  std::optional<std::string> make;
  std::optional<Bytes> maker_note;
};

// DMS triple as stored in the GPS IFD, each component a rational.
struct DmsRational {
  std::uint32_t deg_num, deg_den;
  std::uint32_t min_num, min_den;
  std::uint32_t sec_num, sec_den;
};

double dms_to_decimal(const DmsRational& dms);

// APP1 payload ("Exif\0\0" + little-endian TIFF). `gps_override` lets
// fixtures store an exact DMS triple instead of a converted decimal.
Bytes build_exif_payload(const ExifFields& fields,
                         std::optional<std::pair<DmsRational, DmsRational>> gps_dms = std::nullopt,
                         char lat_ref = 'N', char lon_ref = 'E');

// Inserts an APP1 segment carrying `payload` right after SOI (or after a
// leading APP0). Throws Error{"MalformedImage"} for non-JPEG input.
Bytes insert_exif(ByteView jpeg, const Bytes& payload);

// EXIF GPS position of a JPEG; PNG input always yields nullopt.
// Throws Error{"MalformedImage"} when the container is corrupt.
std::optional<GeoPoint> extract_geotag(ByteView image_bytes);

// Tags present in IFD0, the Exif sub-IFD and the GPS IFD (JPEG only).
std::vector<std::uint16_t> list_exif_tags(ByteView image_bytes);
bool has_gps_exif(ByteView image_bytes);

// Strips identifying metadata. JPEG: every APPn/COM segment except JFIF,
// ICC profile and Adobe colour segments is dropped, and an orientation-only
// EXIF segment is re-emitted when the input carried an orientation. PNG:
// textual, eXIf and tIME chunks are dropped. Entropy-coded data is copied
// verbatim so decoded pixels are unchanged. Idempotent.
Bytes anonymize(ByteView image_bytes);

inline constexpr std::uint16_t kTagOrientation = 0x0112;
inline constexpr std::uint16_t kTagGpsIfd = 0x8825;
inline constexpr std::uint16_t kTagExifIfd = 0x8769;

}  // namespace hazardpipe
