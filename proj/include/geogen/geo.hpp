#pragma once

#include <stdexcept>

namespace geogen {

inline constexpr double kEarthRadiusKm = 6371.0;

struct GeoPoint {
    double lat = 0.0;
    double lon = 0.0;

    bool operator==(const GeoPoint&) const = default;
};

inline bool is_valid(const GeoPoint& p) {
    return p.lat >= -90.0 && p.lat <= 90.0 && p.lon >= -180.0 && p.lon <= 180.0;
}

// Great-circle distance in kilometres.
double haversine_km(const GeoPoint& a, const GeoPoint& b);

// Planar kilometre offsets around a reference latitude (equirectangular).
struct LocalProjection {
    double ref_lat = 0.0;
    double km_per_deg_lat() const;
    double km_per_deg_lon() const;
    double distance_km(const GeoPoint& a, const GeoPoint& b) const;
};

struct BoundingBox {
    double min_lat = 90.0, max_lat = -90.0, min_lon = 180.0, max_lon = -180.0;

    void extend(const GeoPoint& p);
    bool empty() const { return min_lat > max_lat; }
    BoundingBox expanded(double margin_deg) const;
    GeoPoint clamp(const GeoPoint& p) const;
};

}  // namespace geogen
