#pragma once

#include <cmath>

#include "kpisentinel/util.hpp"

namespace kpisentinel {

constexpr double kEarthRadiusKm = 6371.0088;
constexpr double kDegToRad = 0.017453292519943295;

struct LatLon {
  double latitude = 0.0;
  double longitude = 0.0;
};

/// Great-circle distance in km.
inline double haversine(double lat_a, double lon_a, double lat_b, double lon_b) {
  const double phi_a = lat_a * kDegToRad;
  const double phi_b = lat_b * kDegToRad;
  const double dphi = (lat_b - lat_a) * kDegToRad;
  const double dlam = (lon_b - lon_a) * kDegToRad;
  const double s1 = std::sin(0.5 * dphi);
  const double s2 = std::sin(0.5 * dlam);
  const double h = s1 * s1 + std::cos(phi_a) * std::cos(phi_b) * s2 * s2;
  return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

inline double haversine(const LatLon& a, const LatLon& b) {
  return haversine(a.latitude, a.longitude, b.latitude, b.longitude);
}

/// Equirectangular projection about a reference point; adequate at the
/// tens-of-km scale the clustering operates on.
class LocalProjection {
 public:
  LocalProjection(double ref_lat, double ref_lon)
      : ref_lat_(ref_lat), ref_lon_(ref_lon), cos_lat_(std::cos(ref_lat * kDegToRad)) {}

  /// Degrees -> km offsets (x east, y north).
  void to_km(double lat, double lon, double& x_km, double& y_km) const {
    x_km = (lon - ref_lon_) * kDegToRad * kEarthRadiusKm * cos_lat_;
    y_km = (lat - ref_lat_) * kDegToRad * kEarthRadiusKm;
  }

  /// Km offsets -> degrees.
  void to_degrees(double x_km, double y_km, double& lat, double& lon) const {
    lat = ref_lat_ + y_km / kEarthRadiusKm / kDegToRad;
    lon = ref_lon_ + x_km / (kEarthRadiusKm * cos_lat_) / kDegToRad;
  }

 private:
  double ref_lat_;
  double ref_lon_;
  double cos_lat_;
};

}  // namespace kpisentinel
