#include "hazardpipe/ingest/exif.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <functional>

#include "hazardpipe/core/error.hpp"

namespace hazardpipe {

namespace {

constexpr std::uint8_t kExifHeader[6] = {'E', 'x', 'i', 'f', 0, 0};

[[noreturn]] void malformed(const std::string& what) { throw Error("MalformedImage", what); }

// ---------------------------------------------------------------------------
// JPEG segment walking

struct JpegSegment {
  std::uint8_t marker;
  std::size_t start;    // offset of the 0xFF byte
  std::size_t end;      // one past the segment
  std::size_t payload;  // offset of payload (after length field)
};

struct JpegLayout {
  std::vector<JpegSegment> header_segments;  // everything before SOS
  std::size_t scan_start = 0;                // offset of the SOS marker
};

JpegLayout walk_jpeg(ByteView b) {
  if (b.size() < 4 || b[0] != 0xFF || b[1] != 0xD8) malformed("jpeg: missing SOI");
  JpegLayout layout;
  std::size_t pos = 2;
  while (true) {
    if (pos >= b.size()) malformed("jpeg: truncated before SOS");
    if (b[pos] != 0xFF) malformed("jpeg: expected marker");
    std::size_t m = pos;
    while (m < b.size() && b[m] == 0xFF) ++m;
    if (m >= b.size()) malformed("jpeg: truncated marker");
    const std::uint8_t marker = b[m];
    const std::size_t seg_start = m - 1;
    if (marker == 0xDA) {
      layout.scan_start = seg_start;
      if (m + 3 > b.size()) malformed("jpeg: truncated SOS");
      return layout;
    }
    if (marker == 0xD9) malformed("jpeg: EOI before scan data");
    if ((marker >= 0xD0 && marker <= 0xD7) || marker == 0x01) {
      layout.header_segments.push_back({marker, seg_start, m + 1, m + 1});
      pos = m + 1;
      continue;
    }
    if (m + 3 > b.size()) malformed("jpeg: truncated segment length");
    const std::size_t len = (static_cast<std::size_t>(b[m + 1]) << 8) | b[m + 2];
    if (len < 2) malformed("jpeg: bad segment length");
    const std::size_t end = m + 1 + len;
    if (end > b.size()) malformed("jpeg: truncated segment");
    layout.header_segments.push_back({marker, seg_start, end, m + 3});
    pos = end;
  }
}

bool is_exif_app1(ByteView b, const JpegSegment& s) {
  return s.marker == 0xE1 && s.end - s.payload >= 6 &&
         std::memcmp(b.data() + s.payload, kExifHeader, 6) == 0;
}

// ---------------------------------------------------------------------------
// TIFF reading

struct TiffReader {
  ByteView tiff;
  bool little = true;

  std::uint16_t u16(std::size_t off) const {
    if (off + 2 > tiff.size()) malformed("exif: read past end");
    return little ? static_cast<std::uint16_t>(tiff[off] | (tiff[off + 1] << 8))
                  : static_cast<std::uint16_t>((tiff[off] << 8) | tiff[off + 1]);
  }
  std::uint32_t u32(std::size_t off) const {
    if (off + 4 > tiff.size()) malformed("exif: read past end");
    const std::uint32_t a = tiff[off], b = tiff[off + 1], c = tiff[off + 2], d = tiff[off + 3];
    return little ? (a | (b << 8) | (c << 16) | (d << 24)) : ((a << 24) | (b << 16) | (c << 8) | d);
  }
};

struct IfdEntry {
  std::uint16_t tag;
  std::uint16_t type;
  std::uint32_t count;
  std::size_t data_offset;  // within the TIFF block
};

std::size_t type_size(std::uint16_t type) {
  switch (type) {
    case 1: case 2: case 6: case 7: return 1;
    case 3: case 8: return 2;
    case 4: case 9: case 11: return 4;
    case 5: case 10: case 12: return 8;
    default: return 0;
  }
}

std::vector<IfdEntry> read_ifd(const TiffReader& r, std::size_t offset) {
  const std::uint16_t n = r.u16(offset);
  std::vector<IfdEntry> entries;
  entries.reserve(n);
  for (std::uint16_t i = 0; i < n; ++i) {
    const std::size_t e = offset + 2 + 12u * i;
    IfdEntry entry{r.u16(e), r.u16(e + 2), r.u32(e + 4), e + 8};
    const std::size_t unit = type_size(entry.type);
    const std::size_t total = unit * entry.count;
    if (unit != 0 && total > 4) entry.data_offset = r.u32(e + 8);
    if (unit != 0 && entry.data_offset + total > r.tiff.size()) malformed("exif: entry data out of range");
    entries.push_back(entry);
  }
  return entries;
}

const IfdEntry* find_tag(const std::vector<IfdEntry>& entries, std::uint16_t tag) {
  for (const auto& e : entries) {
    if (e.tag == tag) return &e;
  }
  return nullptr;
}

struct ParsedExif {
  TiffReader reader;
  std::vector<IfdEntry> ifd0;
  std::vector<IfdEntry> exif_ifd;
  std::vector<IfdEntry> gps_ifd;
};

ParsedExif parse_tiff(ByteView tiff) {
  ParsedExif p;
  p.reader.tiff = tiff;
  const auto& t = p.reader.tiff;
  if (t.size() < 8) malformed("exif: short TIFF header");
  if (t[0] == 'I' && t[1] == 'I') {
    p.reader.little = true;
  } else if (t[0] == 'M' && t[1] == 'M') {
    p.reader.little = false;
  } else {
    malformed("exif: bad byte order");
  }
  if (p.reader.u16(2) != 42) malformed("exif: bad TIFF magic");
  p.ifd0 = read_ifd(p.reader, p.reader.u32(4));
  if (const auto* e = find_tag(p.ifd0, kTagExifIfd)) {
    p.exif_ifd = read_ifd(p.reader, p.reader.u32(e->data_offset));
  }
  if (const auto* e = find_tag(p.ifd0, kTagGpsIfd)) {
    p.gps_ifd = read_ifd(p.reader, p.reader.u32(e->data_offset));
  }
  return p;
}

std::optional<ParsedExif> find_exif(ByteView b) {
  const auto layout = walk_jpeg(b);
  for (const auto& s : layout.header_segments) {
    if (is_exif_app1(b, s)) return parse_tiff(b.subspan(s.payload + 6, s.end - s.payload - 6));
  }
  return std::nullopt;
}

std::optional<double> read_dms(const TiffReader& r, const IfdEntry* e) {
  if (e == nullptr || e->type != 5 || e->count != 3) return std::nullopt;
  DmsRational d{};
  d.deg_num = r.u32(e->data_offset);
  d.deg_den = r.u32(e->data_offset + 4);
  d.min_num = r.u32(e->data_offset + 8);
  d.min_den = r.u32(e->data_offset + 12);
  d.sec_num = r.u32(e->data_offset + 16);
  d.sec_den = r.u32(e->data_offset + 20);
  if (d.deg_den == 0 || d.min_den == 0 || d.sec_den == 0) return std::nullopt;
  return dms_to_decimal(d);
}

std::optional<char> read_ref(const TiffReader& r, const IfdEntry* e) {
  if (e == nullptr || e->type != 2 || e->count < 1) return std::nullopt;
  return static_cast<char>(r.tiff[e->data_offset]);
}

// ---------------------------------------------------------------------------
// TIFF writing (little endian)

struct OutEntry {
  std::uint16_t tag;
  std::uint16_t type;
  std::uint32_t count;
  Bytes data;  // raw value bytes, already little endian
};

void put16(Bytes& out, std::uint16_t v) {
  out.push_back(static_cast<std::uint8_t>(v & 0xFF));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put32(Bytes& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xFF));
}

std::size_t ifd_size(const std::vector<OutEntry>& entries) {
  std::size_t size = 2 + 12 * entries.size() + 4;
  for (const auto& e : entries) {
    if (e.data.size() > 4) size += e.data.size() + (e.data.size() & 1);
  }
  return size;
}

void write_ifd(Bytes& out, std::vector<OutEntry> entries, std::size_t base) {
  std::sort(entries.begin(), entries.end(),
            [](const OutEntry& a, const OutEntry& b) { return a.tag < b.tag; });
  put16(out, static_cast<std::uint16_t>(entries.size()));
  std::size_t data_off = base + 2 + 12 * entries.size() + 4;
  Bytes data;
  for (const auto& e : entries) {
    put16(out, e.tag);
    put16(out, e.type);
    put32(out, e.count);
    if (e.data.size() <= 4) {
      Bytes inline_value = e.data;
      inline_value.resize(4, 0);
      out.insert(out.end(), inline_value.begin(), inline_value.end());
    } else {
      put32(out, static_cast<std::uint32_t>(data_off + data.size()));
      data.insert(data.end(), e.data.begin(), e.data.end());
      if (e.data.size() & 1) data.push_back(0);
    }
  }
  put32(out, 0);  // no next IFD
  out.insert(out.end(), data.begin(), data.end());
}

OutEntry ascii_entry(std::uint16_t tag, const std::string& s) {
  Bytes data(s.begin(), s.end());
  data.push_back(0);
  return {tag, 2, static_cast<std::uint32_t>(data.size()), data};
}

OutEntry rational3_entry(std::uint16_t tag, const DmsRational& d) {
  Bytes data;
  for (std::uint32_t v : {d.deg_num, d.deg_den, d.min_num, d.min_den, d.sec_num, d.sec_den}) {
    put32(data, v);
  }
  return {tag, 5, 3, data};
}

DmsRational to_dms(double value) {
  value = std::fabs(value);
  const double deg = std::floor(value);
  const double minutes_total = (value - deg) * 60.0;
  const double min = std::floor(minutes_total);
  const double sec = (minutes_total - min) * 60.0;
  return {static_cast<std::uint32_t>(deg), 1, static_cast<std::uint32_t>(min), 1,
          static_cast<std::uint32_t>(std::llround(sec * 10000.0)), 10000};
}

Bytes orientation_only_payload(std::uint16_t orientation) {
  ExifFields f;
  f.orientation = orientation;
  return build_exif_payload(f);
}

Bytes make_app1(const Bytes& payload) {
  if (payload.size() + 2 > 0xFFFF) throw Error("ExifTooLarge", "APP1 payload exceeds 64 KiB");
  Bytes seg = {0xFF, 0xE1};
  const std::size_t len = payload.size() + 2;
  seg.push_back(static_cast<std::uint8_t>(len >> 8));
  seg.push_back(static_cast<std::uint8_t>(len & 0xFF));
  seg.insert(seg.end(), payload.begin(), payload.end());
  return seg;
}

bool keep_jpeg_segment(ByteView b, const JpegSegment& s) {
  const std::uint8_t m = s.marker;
  if (m == 0xFE) return false;  // COM
  if (m < 0xE0 || m > 0xEF) return true;
  const std::size_t plen = s.end - s.payload;
  const std::uint8_t* p = b.data() + s.payload;
  if (m == 0xE0) return true;  // JFIF / JFXX
  if (m == 0xE2) return plen >= 12 && std::memcmp(p, "ICC_PROFILE", 11) == 0;
  if (m == 0xEE) return plen >= 5 && std::memcmp(p, "Adobe", 5) == 0;
  return false;
}

Bytes anonymize_jpeg(ByteView b) {
  const auto layout = walk_jpeg(b);
  std::optional<std::uint16_t> orientation;
  for (const auto& s : layout.header_segments) {
    if (is_exif_app1(b, s)) {
      const auto parsed = parse_tiff(b.subspan(s.payload + 6, s.end - s.payload - 6));
      if (const auto* e = find_tag(parsed.ifd0, kTagOrientation); e && e->type == 3) {
        orientation = parsed.reader.u16(e->data_offset);
      }
      break;
    }
  }
  Bytes out = {0xFF, 0xD8};
  std::size_t i = 0;
  const auto& segs = layout.header_segments;
  if (!segs.empty() && segs[0].marker == 0xE0) {
    out.insert(out.end(), b.begin() + segs[0].start, b.begin() + segs[0].end);
    i = 1;
  }
  if (orientation) {
    const Bytes app1 = make_app1(orientation_only_payload(*orientation));
    out.insert(out.end(), app1.begin(), app1.end());
  }
  for (; i < segs.size(); ++i) {
    if (keep_jpeg_segment(b, segs[i])) {
      out.insert(out.end(), b.begin() + segs[i].start, b.begin() + segs[i].end);
    }
  }
  out.insert(out.end(), b.begin() + layout.scan_start, b.end());
  return out;
}

struct PngChunk {
  std::size_t start;
  std::size_t end;
  char type[5];
};

std::vector<PngChunk> walk_png(ByteView b) {
  std::vector<PngChunk> chunks;
  std::size_t pos = 8;
  bool seen_iend = false;
  while (pos < b.size() && !seen_iend) {
    if (pos + 12 > b.size()) malformed("png: truncated chunk header");
    const std::size_t len = (static_cast<std::size_t>(b[pos]) << 24) | (b[pos + 1] << 16) |
                            (b[pos + 2] << 8) | b[pos + 3];
    const std::size_t end = pos + 12 + len;
    if (end > b.size()) malformed("png: truncated chunk");
    PngChunk c{pos, end, {}};
    std::memcpy(c.type, b.data() + pos + 4, 4);
    c.type[4] = 0;
    seen_iend = std::strcmp(c.type, "IEND") == 0;
    chunks.push_back(c);
    pos = end;
  }
  if (!seen_iend) malformed("png: missing IEND");
  if (chunks.empty() || std::strcmp(chunks.front().type, "IHDR") != 0) malformed("png: missing IHDR");
  return chunks;
}

Bytes anonymize_png(ByteView b) {
  static constexpr const char* kDrop[] = {"tEXt", "zTXt", "iTXt", "eXIf", "tIME"};
  Bytes out(b.begin(), b.begin() + 8);
  for (const auto& c : walk_png(b)) {
    const bool drop = std::any_of(std::begin(kDrop), std::end(kDrop),
                                  [&](const char* t) { return std::strcmp(t, c.type) == 0; });
    if (!drop) out.insert(out.end(), b.begin() + c.start, b.begin() + c.end);
  }
  return out;
}

}  // namespace

double dms_to_decimal(const DmsRational& d) {
  return static_cast<double>(d.deg_num) / d.deg_den +
         static_cast<double>(d.min_num) / d.min_den / 60.0 +
         static_cast<double>(d.sec_num) / d.sec_den / 3600.0;
}

Bytes build_exif_payload(const ExifFields& fields,
                         std::optional<std::pair<DmsRational, DmsRational>> gps_dms, char lat_ref,
                         char lon_ref) {
  std::vector<OutEntry> ifd0;
  std::vector<OutEntry> exif_ifd;
  std::vector<OutEntry> gps_ifd;
  if (fields.make) ifd0.push_back(ascii_entry(0x010F, *fields.make));
  if (fields.orientation) {
    Bytes v;
    put16(v, *fields.orientation);
    ifd0.push_back({kTagOrientation, 3, 1, v});
  }
  if (fields.maker_note) {
    exif_ifd.push_back({0x927C, 7, static_cast<std::uint32_t>(fields.maker_note->size()),
                        *fields.maker_note});
  }
  if (fields.gps || gps_dms) {
    DmsRational lat{}, lon{};
    if (gps_dms) {
      lat = gps_dms->first;
      lon = gps_dms->second;
    } else {
      lat = to_dms(fields.gps->lat());
      lon = to_dms(fields.gps->lon());
      lat_ref = fields.gps->lat() < 0 ? 'S' : 'N';
      lon_ref = fields.gps->lon() < 0 ? 'W' : 'E';
    }
    gps_ifd.push_back({0x0000, 1, 4, Bytes{2, 3, 0, 0}});
    gps_ifd.push_back(ascii_entry(0x0001, std::string(1, lat_ref)));
    gps_ifd.push_back(rational3_entry(0x0002, lat));
    gps_ifd.push_back(ascii_entry(0x0003, std::string(1, lon_ref)));
    gps_ifd.push_back(rational3_entry(0x0004, lon));
  }
  // Sub-IFD pointers are placeholders until the layout is known; the value
  // width is fixed so sizes can be computed first.
  if (!exif_ifd.empty()) ifd0.push_back({kTagExifIfd, 4, 1, Bytes(4, 0)});
  if (!gps_ifd.empty()) ifd0.push_back({kTagGpsIfd, 4, 1, Bytes(4, 0)});

  const std::size_t ifd0_off = 8;
  const std::size_t exif_off = ifd0_off + ifd_size(ifd0);
  const std::size_t gps_off = exif_off + (exif_ifd.empty() ? 0 : ifd_size(exif_ifd));
  for (auto& e : ifd0) {
    if (e.tag == kTagExifIfd) {
      e.data.clear();
      put32(e.data, static_cast<std::uint32_t>(exif_off));
    }
    if (e.tag == kTagGpsIfd) {
      e.data.clear();
      put32(e.data, static_cast<std::uint32_t>(gps_off));
    }
  }

  Bytes out(kExifHeader, kExifHeader + 6);
  Bytes tiff = {'I', 'I'};
  put16(tiff, 42);
  put32(tiff, static_cast<std::uint32_t>(ifd0_off));
  write_ifd(tiff, ifd0, ifd0_off);
  if (!exif_ifd.empty()) write_ifd(tiff, exif_ifd, exif_off);
  if (!gps_ifd.empty()) write_ifd(tiff, gps_ifd, gps_off);
  out.insert(out.end(), tiff.begin(), tiff.end());
  return out;
}

Bytes insert_exif(ByteView jpeg, const Bytes& payload) {
  const auto layout = walk_jpeg(jpeg);
  std::size_t insert_at = 2;
  if (!layout.header_segments.empty() && layout.header_segments[0].marker == 0xE0) {
    insert_at = layout.header_segments[0].end;
  }
  Bytes out(jpeg.begin(), jpeg.begin() + insert_at);
  const Bytes app1 = make_app1(payload);
  out.insert(out.end(), app1.begin(), app1.end());
  out.insert(out.end(), jpeg.begin() + insert_at, jpeg.end());
  return out;
}

std::optional<GeoPoint> extract_geotag(ByteView bytes) {
  const auto fmt = sniff_format(bytes);
  if (!fmt) malformed("unsupported or missing magic bytes");
  if (*fmt == ImageFormat::Png) {
    walk_png(bytes);
    return std::nullopt;
  }
  const auto exif = find_exif(bytes);
  if (!exif || exif->gps_ifd.empty()) return std::nullopt;
  const auto& r = exif->reader;
  const auto lat_ref = read_ref(r, find_tag(exif->gps_ifd, 0x0001));
  const auto lat = read_dms(r, find_tag(exif->gps_ifd, 0x0002));
  const auto lon_ref = read_ref(r, find_tag(exif->gps_ifd, 0x0003));
  const auto lon = read_dms(r, find_tag(exif->gps_ifd, 0x0004));
  if (!lat || !lon || !lat_ref || !lon_ref) return std::nullopt;
  const double signed_lat = (*lat_ref == 'S') ? -*lat : *lat;
  const double signed_lon = (*lon_ref == 'W') ? -*lon : *lon;
  try {
    return make_geopoint(signed_lat, signed_lon);
  } catch (const Error&) {
    return std::nullopt;  // GPS IFD present but unusable
  }
}

std::vector<std::uint16_t> list_exif_tags(ByteView bytes) {
  const auto fmt = sniff_format(bytes);
  if (!fmt) malformed("unsupported or missing magic bytes");
  std::vector<std::uint16_t> tags;
  std::optional<ParsedExif> exif;
  if (*fmt == ImageFormat::Png) {
    for (const auto& c : walk_png(bytes)) {
      if (std::strcmp(c.type, "eXIf") == 0) {
        exif = parse_tiff(bytes.subspan(c.start + 8, c.end - c.start - 12));
      }
    }
  } else {
    exif = find_exif(bytes);
  }
  if (!exif) return tags;
  for (const auto* ifd : {&exif->ifd0, &exif->exif_ifd, &exif->gps_ifd}) {
    for (const auto& e : *ifd) tags.push_back(e.tag);
  }
  return tags;
}

bool has_gps_exif(ByteView bytes) {
  const auto tags = list_exif_tags(bytes);
  return std::find(tags.begin(), tags.end(), kTagGpsIfd) != tags.end();
}

Bytes anonymize(ByteView bytes) {
  const auto fmt = sniff_format(bytes);
  if (!fmt) malformed("unsupported or missing magic bytes");
  return *fmt == ImageFormat::Jpeg ? anonymize_jpeg(bytes) : anonymize_png(bytes);
}

}  // namespace hazardpipe
