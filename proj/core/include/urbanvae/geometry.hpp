#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace urbanvae {

struct Vec2 {
  double x = 0.0;
  double y = 0.0;

  friend bool operator==(const Vec2&, const Vec2&) = default;
};

struct Segment {
  Vec2 a;
  Vec2 b;

  double length() const;
  friend bool operator==(const Segment&, const Segment&) = default;
};

struct LonLat {
  double lon = 0.0;  // degrees
  double lat = 0.0;  // degrees

  friend bool operator==(const LonLat&, const LonLat&) = default;
};

/// Road geometry of one city as straight segments in a planar metric frame
/// (x east, y north). Order and multiplicity of segments carry no meaning.
struct StreetNetwork {
  std::string city_id;
  std::vector<Segment> segments;
  Vec2 center;
  std::optional<LonLat> origin_lonlat;
  /// Free-form class tag, e.g. the generator family of a synthetic city.
  std::optional<std::string> label;
};

/// Square sampling window in the planar frame.
struct Window {
  Vec2 center;
  double side_m = 3000.0;

  double west() const { return center.x - 0.5 * side_m; }
  double east() const { return center.x + 0.5 * side_m; }
  double south() const { return center.y - 0.5 * side_m; }
  double north() const { return center.y + 0.5 * side_m; }

  /// Throws ValidationError unless side_m is finite and positive and the center is finite.
  void validate() const;
};

enum class CoordinateMode { meters, lonlat };

inline constexpr double kEarthRadiusM = 6371000.0;

/// Local equirectangular projection about `origin`, in meters.
Vec2 project_lonlat(LonLat point, LonLat origin);

/// Reads a feature collection of LineString / MultiLineString features.
///
/// Top-level keys: "coordinate_mode" ("meters" | "lonlat"), "center" ([x, y] or
/// [lon, lat]), optional "city_id" (defaults to the file stem), optional
/// "origin_lonlat" (meters mode) and optional "label". In lonlat mode the
/// coordinates are projected about the center, the center becomes (0, 0) and
/// the declared center is kept as origin_lonlat.
///
/// Non-line features and empty collections are reported through `warnings`.
/// Throws ParseError for malformed JSON or features and ConfigError for an
/// unknown coordinate mode.
StreetNetwork load_street_geometry(const std::filesystem::path& path,
                                   std::vector<std::string>* warnings = nullptr);

/// Writes `net` in the same format (meters mode, one LineString per segment).
void save_street_geometry(const StreetNetwork& net, const std::filesystem::path& path);

/// Liang-Barsky clip of one segment against the closed box [x0,x1]x[y0,y1].
/// Endpoints produced by a boundary crossing are snapped onto that boundary.
std::optional<Segment> clip_segment(const Segment& s, double x0, double y0, double x1,
                                    double y1);

/// Clips every segment to the closed window; coordinates stay in the input frame.
StreetNetwork clip_to_window(const StreetNetwork& net, const Window& window);

/// Clips to the window and re-expresses the result in the raster frame:
/// origin at the window's north-west corner, x east, y south, both in meters.
/// The returned network's center is (side/2, side/2).
StreetNetwork crop_window(const StreetNetwork& net, const Window& window);

/// Reflects every x coordinate about the vertical line x = axis.
StreetNetwork mirror_x(const StreetNetwork& net, double axis);

}  // namespace urbanvae
