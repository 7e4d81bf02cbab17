#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "hazardpipe/core/types.hpp"

namespace hazardpipe::geo {

inline constexpr double kEarthRadiusM = 6371008.8;

// Great-circle distance in metres.
double haversine(const GeoPoint& a, const GeoPoint& b);

struct Region {
  double lat_min;
  double lon_min;
  double lat_max;
  double lon_max;

  bool contains(const GeoPoint& p) const {
    return p.lat() >= lat_min && p.lat() <= lat_max && p.lon() >= lon_min && p.lon() <= lon_max;
  }
  GeoPoint center() const { return make_geopoint((lat_min + lat_max) / 2, (lon_min + lon_max) / 2); }
};

// Mallorca and its immediate coastline.
inline constexpr Region kMallorca{39.25, 2.30, 40.00, 3.50};

// Parses "lat_min,lon_min,lat_max,lon_max". Throws Error{"DegenerateRegion"}.
Region parse_bbox(const std::string& text);

struct CellId {
  int row;
  int col;
  friend auto operator<=>(const CellId&, const CellId&) = default;
};

// Local equirectangular grid over a region. Row 0 is the southern edge,
// column 0 the western edge; cell edges are `resolution_m` long using the
// metres-per-degree scale at the region's centre latitude.
class Grid {
 public:
  // Throws Error{"DegenerateRegion"} for empty/inverted regions or a
  // non-positive resolution.
  Grid(const Region& region, double resolution_m);

  const Region& region() const { return region_; }
  double resolution_m() const { return resolution_m_; }
  int rows() const { return rows_; }
  int cols() const { return cols_; }
  double cell_lat_deg() const { return dlat_; }
  double cell_lon_deg() const { return dlon_; }

  // nullopt for points outside the region.
  std::optional<CellId> locate(const GeoPoint& p) const;
  GeoPoint cell_center(CellId id) const;
  Region cell_bounds(CellId id) const;
  bool valid(CellId id) const { return id.row >= 0 && id.row < rows_ && id.col >= 0 && id.col < cols_; }

 private:
  Region region_;
  double resolution_m_;
  double dlat_;
  double dlon_;
  int rows_;
  int cols_;
};

struct GridCell {
  CellId id;
  Region bounds;
  std::int64_t count = 0;
  double smoothed = 0.0;
};

// Sparse grid snapshot: only cells with count > 0 (or, after smoothing,
// smoothed > 0) are materialised. Points outside the region land in
// `overflow`.
struct CellGrid {
  Grid grid;
  std::map<CellId, GridCell> cells;
  std::int64_t overflow = 0;

  std::int64_t total_count() const;
};

CellGrid bin(std::span<const GeoPoint> points, const Region& region, double resolution_m);

// smoothed(c) = sum over cells c' within Chebyshev radius of count(c') / (1 + d^2),
// d being the Euclidean distance between cell indices. radius 0 copies counts.
CellGrid smooth(const CellGrid& grid, int kernel_radius_cells);

struct HotspotSite {
  std::string id;
  std::vector<CellId> member_cells;
  GeoPoint centroid;
  std::int64_t total_count;
  std::optional<Timestamp> discovered_at;
};

// Cells with smoothed >= threshold, grouped into 4-connected components.
// Components whose raw count total falls below the threshold are dropped.
// Output is sorted by site id and independent of input order.
std::vector<HotspotSite> extract_sites(const CellGrid& grid, double site_threshold);

nlohmann::json export_geojson(const CellGrid& grid);
nlohmann::json export_geojson(std::span<const HotspotSite> sites);

// Counts of historical reports per cell, used for geo-weighted prioritisation.
class DensityIndex {
 public:
  DensityIndex() = default;
  DensityIndex(const Region& region, double resolution_m) : grid_(Grid(region, resolution_m)) {}

  void add(const GeoPoint& p);
  std::int64_t density(const GeoPoint& p) const;
  bool empty() const { return counts_.empty(); }

 private:
  std::optional<Grid> grid_;
  std::map<CellId, std::int64_t> counts_;
};

}  // namespace hazardpipe::geo
