#include "urbanvae/geometry.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "json.hpp"
#include "urbanvae/error.hpp"

namespace urbanvae {

using nlohmann::json;

double Segment::length() const { return std::hypot(b.x - a.x, b.y - a.y); }

void Window::validate() const {
  if (!std::isfinite(side_m) || side_m <= 0.0)
    throw ValidationError("window side must be a positive finite length, got " +
                          std::to_string(side_m));
  if (!std::isfinite(center.x) || !std::isfinite(center.y))
    throw ValidationError("window center must be finite");
}

Vec2 project_lonlat(LonLat point, LonLat origin) {
  constexpr double kDeg = std::numbers::pi / 180.0;
  const double cos_lat0 = std::cos(origin.lat * kDeg);
  return {kEarthRadiusM * (point.lon - origin.lon) * kDeg * cos_lat0,
          kEarthRadiusM * (point.lat - origin.lat) * kDeg};
}

namespace {

std::size_t line_of_offset(const std::string& text, std::size_t offset) {
  offset = std::min(offset, text.size());
  return 1 + static_cast<std::size_t>(std::count(text.begin(), text.begin() + offset, '\n'));
}

std::string feature_context(const std::filesystem::path& path, std::size_t index) {
  return path.string() + ": feature " + std::to_string(index);
}

Vec2 read_position(const json& pos, const std::string& context) {
  if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number())
    throw ParseError(context + ": position must be an array of two numbers");
  const Vec2 p{pos[0].get<double>(), pos[1].get<double>()};
  if (!std::isfinite(p.x) || !std::isfinite(p.y))
    throw ParseError(context + ": non-finite coordinate");
  return p;
}

}  // namespace

StreetNetwork load_street_geometry(const std::filesystem::path& path,
                                   std::vector<std::string>* warnings) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open street geometry " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();

  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string() + ": line " + std::to_string(line_of_offset(text, e.byte)) +
                     ": " + e.what());
  }
  if (!doc.is_object()) throw ParseError(path.string() + ": top level must be an object");

  const auto mode_it = doc.find("coordinate_mode");
  if (mode_it == doc.end() || !mode_it->is_string())
    throw ConfigError(path.string() + ": missing \"coordinate_mode\"");
  const std::string mode_name = mode_it->get<std::string>();
  CoordinateMode mode;
  if (mode_name == "meters") {
    mode = CoordinateMode::meters;
  } else if (mode_name == "lonlat") {
    mode = CoordinateMode::lonlat;
  } else {
    throw ConfigError(path.string() + ": unknown coordinate_mode \"" + mode_name +
                      "\" (expected \"meters\" or \"lonlat\")");
  }

  StreetNetwork net;
  net.city_id = doc.contains("city_id") && doc["city_id"].is_string()
                    ? doc["city_id"].get<std::string>()
                    : path.stem().string();
  if (doc.contains("label") && doc["label"].is_string()) net.label = doc["label"].get<std::string>();

  Vec2 declared_center;
  if (doc.contains("center")) {
    declared_center = read_position(doc["center"], path.string() + ": center");
  } else if (mode == CoordinateMode::lonlat) {
    throw ParseError(path.string() + ": lonlat mode requires \"center\"");
  }

  LonLat origin{};
  if (mode == CoordinateMode::lonlat) {
    origin = {declared_center.x, declared_center.y};
    net.origin_lonlat = origin;
    net.center = {0.0, 0.0};
  } else {
    net.center = declared_center;
    if (doc.contains("origin_lonlat")) {
      const Vec2 o = read_position(doc["origin_lonlat"], path.string() + ": origin_lonlat");
      net.origin_lonlat = LonLat{o.x, o.y};
    }
  }

  auto to_plane = [&](Vec2 p) {
    return mode == CoordinateMode::lonlat ? project_lonlat({p.x, p.y}, origin) : p;
  };
  auto add_line = [&](const json& coords, const std::string& context) {
    if (!coords.is_array() || coords.size() < 2)
      throw ParseError(context + ": a LineString needs at least two positions");
    Vec2 prev = to_plane(read_position(coords[0], context));
    for (std::size_t i = 1; i < coords.size(); ++i) {
      const Vec2 cur = to_plane(read_position(coords[i], context));
      net.segments.push_back({prev, cur});
      prev = cur;
    }
  };

  const auto features_it = doc.find("features");
  if (features_it == doc.end() || !features_it->is_array())
    throw ParseError(path.string() + ": missing \"features\" array");

  std::size_t skipped = 0;
  for (std::size_t i = 0; i < features_it->size(); ++i) {
    const json& feature = (*features_it)[i];
    const std::string context = feature_context(path, i);
    if (!feature.is_object()) throw ParseError(context + ": feature must be an object");
    const json* geometry = &feature;
    if (feature.value("type", "") == "Feature") {
      const auto g = feature.find("geometry");
      if (g == feature.end()) throw ParseError(context + ": missing geometry");
      if (g->is_null()) {
        ++skipped;
        continue;
      }
      geometry = &*g;
    }
    if (!geometry->is_object() || !geometry->contains("type"))
      throw ParseError(context + ": geometry must be an object with a type");
    const std::string type = (*geometry)["type"].is_string() ? (*geometry)["type"].get<std::string>() : "";
    if (!geometry->contains("coordinates") &&
        (type == "LineString" || type == "MultiLineString"))
      throw ParseError(context + ": missing coordinates");
    if (type == "LineString") {
      add_line((*geometry)["coordinates"], context);
    } else if (type == "MultiLineString") {
      const json& lines = (*geometry)["coordinates"];
      if (!lines.is_array()) throw ParseError(context + ": MultiLineString coordinates must be an array");
      for (const json& line : lines) add_line(line, context);
    } else {
      ++skipped;
    }
  }

  if (warnings) {
    if (skipped > 0)
      warnings->push_back(path.string() + ": skipped " + std::to_string(skipped) +
                          " non-line feature(s)");
    if (net.segments.empty()) warnings->push_back(path.string() + ": empty street network");
  }
  return net;
}

void save_street_geometry(const StreetNetwork& net, const std::filesystem::path& path) {
  json doc;
  doc["type"] = "FeatureCollection";
  doc["city_id"] = net.city_id;
  doc["coordinate_mode"] = "meters";
  doc["center"] = {net.center.x, net.center.y};
  if (net.origin_lonlat) doc["origin_lonlat"] = {net.origin_lonlat->lon, net.origin_lonlat->lat};
  if (net.label) doc["label"] = *net.label;
  json features = json::array();
  for (const Segment& s : net.segments) {
    features.push_back({{"type", "Feature"},
                        {"properties", json::object()},
                        {"geometry",
                         {{"type", "LineString"},
                          {"coordinates", {{s.a.x, s.a.y}, {s.b.x, s.b.y}}}}}});
  }
  doc["features"] = std::move(features);

  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << doc.dump() << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

std::optional<Segment> clip_segment(const Segment& s, double x0, double y0, double x1,
                                    double y1) {
  const double dx = s.b.x - s.a.x;
  const double dy = s.b.y - s.a.y;
  // Boundary that fixed each parameter: 0 none, 1 x0, 2 x1, 3 y0, 4 y1.
  double t_in = 0.0, t_out = 1.0;
  int in_edge = 0, out_edge = 0;

  const double p[4] = {-dx, dx, -dy, dy};
  const double q[4] = {s.a.x - x0, x1 - s.a.x, s.a.y - y0, y1 - s.a.y};
  for (int k = 0; k < 4; ++k) {
    if (p[k] == 0.0) {
      if (q[k] < 0.0) return std::nullopt;
      continue;
    }
    const double r = q[k] / p[k];
    if (p[k] < 0.0) {
      if (r > t_in) {
        t_in = r;
        in_edge = k + 1;
      }
    } else if (r < t_out) {
      t_out = r;
      out_edge = k + 1;
    }
  }
  if (t_in > t_out) return std::nullopt;

  auto point_at = [&](double t, int edge, Vec2 endpoint) {
    if (edge == 0) return endpoint;
    Vec2 p{s.a.x + t * dx, s.a.y + t * dy};
    p.x = std::clamp(p.x, x0, x1);
    p.y = std::clamp(p.y, y0, y1);
    switch (edge) {
      case 1: p.x = x0; break;
      case 2: p.x = x1; break;
      case 3: p.y = y0; break;
      case 4: p.y = y1; break;
      default: break;
    }
    return p;
  };
  return Segment{point_at(t_in, in_edge, s.a), point_at(t_out, out_edge, s.b)};
}

StreetNetwork clip_to_window(const StreetNetwork& net, const Window& window) {
  window.validate();
  StreetNetwork out = net;
  out.segments.clear();
  for (const Segment& s : net.segments) {
    if (auto clipped = clip_segment(s, window.west(), window.south(), window.east(), window.north()))
      out.segments.push_back(*clipped);
  }
  return out;
}

StreetNetwork crop_window(const StreetNetwork& net, const Window& window) {
  StreetNetwork out = clip_to_window(net, window);
  const double west = window.west();
  const double north = window.north();
  for (Segment& s : out.segments) {
    s.a = {s.a.x - west, north - s.a.y};
    s.b = {s.b.x - west, north - s.b.y};
  }
  out.center = {0.5 * window.side_m, 0.5 * window.side_m};
  return out;
}

StreetNetwork mirror_x(const StreetNetwork& net, double axis) {
  StreetNetwork out = net;
  for (Segment& s : out.segments) {
    s.a.x = 2.0 * axis - s.a.x;
    s.b.x = 2.0 * axis - s.b.x;
  }
  out.center.x = 2.0 * axis - out.center.x;
  return out;
}

}  // namespace urbanvae
