#include "hazardpipe/geo/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <sstream>

#include "hazardpipe/core/error.hpp"

namespace hazardpipe::geo {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kMetresPerDegree = kEarthRadiusM * kDegToRad;
}  // namespace

double haversine(const GeoPoint& a, const GeoPoint& b) {
  const double phi1 = a.lat() * kDegToRad;
  const double phi2 = b.lat() * kDegToRad;
  const double dphi = (b.lat() - a.lat()) * kDegToRad;
  const double dlambda = (b.lon() - a.lon()) * kDegToRad;
  const double s1 = std::sin(dphi / 2);
  const double s2 = std::sin(dlambda / 2);
  const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
  return 2.0 * kEarthRadiusM * std::asin(std::min(1.0, std::sqrt(h)));
}

Region parse_bbox(const std::string& text) {
  std::stringstream ss(text);
  std::string part;
  std::vector<double> v;
  while (std::getline(ss, part, ',')) {
    try {
      v.push_back(std::stod(part));
    } catch (const std::exception&) {
      throw Error("DegenerateRegion", "cannot parse bbox '" + text + "'");
    }
  }
  if (v.size() != 4) throw Error("DegenerateRegion", "bbox needs 4 numbers: lat_min,lon_min,lat_max,lon_max");
  return Region{v[0], v[1], v[2], v[3]};
}

Grid::Grid(const Region& region, double resolution_m) : region_(region), resolution_m_(resolution_m) {
  if (!(region.lat_min < region.lat_max) || !(region.lon_min < region.lon_max) ||
      region.lat_min < -90 || region.lat_max > 90 || region.lon_min < -180 || region.lon_max > 180) {
    throw Error("DegenerateRegion", "region must have lat_min < lat_max and lon_min < lon_max");
  }
  if (!(resolution_m > 0) || !std::isfinite(resolution_m)) {
    throw Error("DegenerateRegion", "resolution must be positive");
  }
  const double center_lat = (region.lat_min + region.lat_max) / 2.0;
  const double cos_lat = std::cos(center_lat * kDegToRad);
  if (cos_lat < 1e-6) throw Error("DegenerateRegion", "region centred on a pole");
  dlat_ = resolution_m / kMetresPerDegree;
  dlon_ = resolution_m / (kMetresPerDegree * cos_lat);
  rows_ = std::max(1, static_cast<int>(std::ceil((region.lat_max - region.lat_min) / dlat_ - 1e-9)));
  cols_ = std::max(1, static_cast<int>(std::ceil((region.lon_max - region.lon_min) / dlon_ - 1e-9)));
}

std::optional<CellId> Grid::locate(const GeoPoint& p) const {
  if (!region_.contains(p)) return std::nullopt;
  const int row = std::min(rows_ - 1, static_cast<int>(std::floor((p.lat() - region_.lat_min) / dlat_)));
  const int col = std::min(cols_ - 1, static_cast<int>(std::floor((p.lon() - region_.lon_min) / dlon_)));
  return CellId{row, col};
}

Region Grid::cell_bounds(CellId id) const {
  const double lat0 = region_.lat_min + id.row * dlat_;
  const double lon0 = region_.lon_min + id.col * dlon_;
  return Region{lat0, lon0, lat0 + dlat_, lon0 + dlon_};
}

GeoPoint Grid::cell_center(CellId id) const {
  const Region b = cell_bounds(id);
  return make_geopoint(std::min(90.0, (b.lat_min + b.lat_max) / 2), std::min(180.0, (b.lon_min + b.lon_max) / 2));
}

std::int64_t CellGrid::total_count() const {
  std::int64_t total = overflow;
  for (const auto& [id, cell] : cells) total += cell.count;
  return total;
}

CellGrid bin(std::span<const GeoPoint> points, const Region& region, double resolution_m) {
  CellGrid out{Grid(region, resolution_m), {}, 0};
  for (const auto& p : points) {
    const auto id = out.grid.locate(p);
    if (!id) {
      ++out.overflow;
      continue;
    }
    auto [it, inserted] = out.cells.try_emplace(*id, GridCell{*id, out.grid.cell_bounds(*id), 0, 0.0});
    ++it->second.count;
  }
  for (auto& [id, cell] : out.cells) cell.smoothed = static_cast<double>(cell.count);
  return out;
}

CellGrid smooth(const CellGrid& in, int radius) {
  if (radius < 0) throw Error("InvalidRadius", "kernel radius must be >= 0");
  CellGrid out{in.grid, {}, in.overflow};
  for (const auto& [id, cell] : in.cells) {
    out.cells.try_emplace(id, GridCell{id, cell.bounds, cell.count, 0.0});
  }
  for (const auto& [id, cell] : in.cells) {
    if (cell.count == 0) continue;
    for (int dr = -radius; dr <= radius; ++dr) {
      for (int dc = -radius; dc <= radius; ++dc) {
        const CellId target{id.row + dr, id.col + dc};
        if (!in.grid.valid(target)) continue;
        const double weight = 1.0 / (1.0 + dr * dr + dc * dc);
        auto [it, inserted] =
            out.cells.try_emplace(target, GridCell{target, in.grid.cell_bounds(target), 0, 0.0});
        it->second.smoothed += static_cast<double>(cell.count) * weight;
      }
    }
  }
  return out;
}

std::vector<HotspotSite> extract_sites(const CellGrid& grid, double threshold) {
  std::set<CellId> hot;
  for (const auto& [id, cell] : grid.cells) {
    if (cell.smoothed >= threshold) hot.insert(id);
  }
  std::vector<HotspotSite> sites;
  std::set<CellId> seen;
  for (const CellId& seed : hot) {
    if (seen.count(seed)) continue;
    std::vector<CellId> members;
    std::vector<CellId> stack{seed};
    seen.insert(seed);
    while (!stack.empty()) {
      const CellId c = stack.back();
      stack.pop_back();
      members.push_back(c);
      for (const CellId n : {CellId{c.row - 1, c.col}, CellId{c.row + 1, c.col},
                             CellId{c.row, c.col - 1}, CellId{c.row, c.col + 1}}) {
        if (hot.count(n) && !seen.count(n)) {
          seen.insert(n);
          stack.push_back(n);
        }
      }
    }
    std::sort(members.begin(), members.end());
    std::int64_t total = 0;
    double wsum = 0, lat = 0, lon = 0;
    for (const CellId& m : members) {
      const auto& cell = grid.cells.at(m);
      total += cell.count;
      const GeoPoint c = grid.grid.cell_center(m);
      wsum += static_cast<double>(cell.count);
      lat += static_cast<double>(cell.count) * c.lat();
      lon += static_cast<double>(cell.count) * c.lon();
    }
    if (static_cast<double>(total) < threshold) continue;
    const CellId first = members.front();
    sites.push_back(HotspotSite{"site-" + std::to_string(first.row) + "-" + std::to_string(first.col),
                                members, make_geopoint(lat / wsum, lon / wsum), total, std::nullopt});
  }
  std::sort(sites.begin(), sites.end(),
            [](const HotspotSite& a, const HotspotSite& b) { return a.member_cells.front() < b.member_cells.front(); });
  return sites;
}

nlohmann::json export_geojson(const CellGrid& grid) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& [id, cell] : grid.cells) {
    const Region& b = cell.bounds;
    nlohmann::json ring = nlohmann::json::array({{b.lon_min, b.lat_min},
                                                 {b.lon_max, b.lat_min},
                                                 {b.lon_max, b.lat_max},
                                                 {b.lon_min, b.lat_max},
                                                 {b.lon_min, b.lat_min}});
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Polygon"}, {"coordinates", {ring}}}},
                        {"properties",
                         {{"kind", "cell"},
                          {"row", id.row},
                          {"col", id.col},
                          {"count", cell.count},
                          {"smoothed", cell.smoothed}}}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

nlohmann::json export_geojson(std::span<const HotspotSite> sites) {
  nlohmann::json features = nlohmann::json::array();
  for (const auto& site : sites) {
    nlohmann::json props{{"kind", "site"}, {"id", site.id}, {"total_count", site.total_count},
                         {"n_cells", site.member_cells.size()}};
    features.push_back({{"type", "Feature"},
                        {"geometry", {{"type", "Point"}, {"coordinates", {site.centroid.lon(), site.centroid.lat()}}}},
                        {"properties", props}});
  }
  return {{"type", "FeatureCollection"}, {"features", features}};
}

void DensityIndex::add(const GeoPoint& p) {
  if (!grid_) return;
  if (auto id = grid_->locate(p)) ++counts_[*id];
}

std::int64_t DensityIndex::density(const GeoPoint& p) const {
  if (!grid_) return 0;
  const auto id = grid_->locate(p);
  if (!id) return 0;
  auto it = counts_.find(*id);
  return it == counts_.end() ? 0 : it->second;
}

}  // namespace hazardpipe::geo
