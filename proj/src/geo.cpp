#include "geogen/geo.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace geogen {

namespace {
constexpr double kDegToRad = std::numbers::pi / 180.0;
}

double haversine_km(const GeoPoint& a, const GeoPoint& b) {
    const double phi1 = a.lat * kDegToRad;
    const double phi2 = b.lat * kDegToRad;
    const double dphi = (b.lat - a.lat) * kDegToRad;
    const double dlambda = (b.lon - a.lon) * kDegToRad;
    const double s1 = std::sin(dphi / 2);
    const double s2 = std::sin(dlambda / 2);
    const double h = std::clamp(s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2, 0.0, 1.0);
    return 2.0 * kEarthRadiusKm * std::asin(std::sqrt(h));
}

double LocalProjection::km_per_deg_lat() const { return kEarthRadiusKm * kDegToRad; }

double LocalProjection::km_per_deg_lon() const { return kEarthRadiusKm * kDegToRad * std::cos(ref_lat * kDegToRad); }

double LocalProjection::distance_km(const GeoPoint& a, const GeoPoint& b) const {
    const double dx = (a.lon - b.lon) * km_per_deg_lon();
    const double dy = (a.lat - b.lat) * km_per_deg_lat();
    return std::sqrt(dx * dx + dy * dy);
}

void BoundingBox::extend(const GeoPoint& p) {
    min_lat = std::min(min_lat, p.lat);
    max_lat = std::max(max_lat, p.lat);
    min_lon = std::min(min_lon, p.lon);
    max_lon = std::max(max_lon, p.lon);
}

BoundingBox BoundingBox::expanded(double margin_deg) const {
    BoundingBox out = *this;
    out.min_lat = std::max(-90.0, min_lat - margin_deg);
    out.max_lat = std::min(90.0, max_lat + margin_deg);
    out.min_lon = std::max(-180.0, min_lon - margin_deg);
    out.max_lon = std::min(180.0, max_lon + margin_deg);
    return out;
}

GeoPoint BoundingBox::clamp(const GeoPoint& p) const {
    if (empty()) return {std::clamp(p.lat, -90.0, 90.0), std::clamp(p.lon, -180.0, 180.0)};
    return {std::clamp(p.lat, min_lat, max_lat), std::clamp(p.lon, min_lon, max_lon)};
}

}  // namespace geogen
