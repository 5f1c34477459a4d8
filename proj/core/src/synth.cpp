#include "urbanvae/synth.hpp"

#include <cmath>
#include <cstdio>
#include <numbers>

#include "urbanvae/error.hpp"

namespace urbanvae {
namespace {

constexpr double kPi = std::numbers::pi;
// Patterns extend past the 3 km window so cropping always has work to do.
constexpr double kReach = 2900.0;

Vec2 rotate(Vec2 p, double angle) {
  const double c = std::cos(angle), s = std::sin(angle);
  return {c * p.x - s * p.y, s * p.x + c * p.y};
}

void add_broken_line(StreetNetwork& net, Vec2 from, Vec2 to, double piece, double drop, Rng& rng) {
  const double len = std::hypot(to.x - from.x, to.y - from.y);
  const int pieces = std::max(1, static_cast<int>(std::ceil(len / piece)));
  for (int i = 0; i < pieces; ++i) {
    const double t0 = static_cast<double>(i) / pieces;
    const double t1 = static_cast<double>(i + 1) / pieces;
    if (rng.bernoulli(drop)) continue;
    net.segments.push_back({{from.x + t0 * (to.x - from.x), from.y + t0 * (to.y - from.y)},
                            {from.x + t1 * (to.x - from.x), from.y + t1 * (to.y - from.y)}});
  }
}

}  // namespace

std::string to_string(SynthClass c) {
  switch (c) {
    case SynthClass::grid: return "grid";
    case SynthClass::radial: return "radial";
    case SynthClass::random: return "random";
  }
  return "grid";
}

SynthClass parse_synth_class(const std::string& text) {
  if (text == "grid") return SynthClass::grid;
  if (text == "radial") return SynthClass::radial;
  if (text == "random") return SynthClass::random;
  throw ValidationError("unknown synthetic class '" + text + "' (grid, radial, random)");
}

StreetNetwork synth_grid(Rng& rng, const SynthParams& p) {
  StreetNetwork net;
  const double spacing = rng.uniform(p.grid_spacing_min, p.grid_spacing_max);
  const double angle = rng.uniform(-p.grid_rotation_max, p.grid_rotation_max);
  const double drop = rng.uniform(0.0, p.grid_drop_max);
  const int half = static_cast<int>(std::ceil(kReach / spacing));
  for (int family = 0; family < 2; ++family) {
    const double family_angle = angle + family * 0.5 * kPi;
    for (int k = -half; k <= half; ++k) {
      const double offset = k * spacing + rng.uniform(-p.grid_jitter, p.grid_jitter) * spacing;
      const Vec2 a = rotate({offset, -kReach}, family_angle);
      const Vec2 b = rotate({offset, kReach}, family_angle);
      add_broken_line(net, a, b, spacing, drop, rng);
    }
  }
  return net;
}

StreetNetwork synth_radial(Rng& rng, const SynthParams& p) {
  StreetNetwork net;
  const Vec2 hub{rng.uniform(-p.hub_offset_max, p.hub_offset_max), rng.uniform(-p.hub_offset_max, p.hub_offset_max)};
  const int spokes = static_cast<int>(rng.between(p.spokes_min, p.spokes_max));
  const double phase = rng.uniform(0.0, 2.0 * kPi);
  const double ring_step = rng.uniform(p.ring_step_min, p.ring_step_max);
  const double ring_gap = rng.uniform(0.0, p.ring_gap_max);

  for (int i = 0; i < spokes; ++i) {
    const double theta = phase + 2.0 * kPi * i / spokes + rng.uniform(-0.1, 0.1);
    const double wobble = rng.uniform(-0.08, 0.08);
    Vec2 prev = hub;
    constexpr int kSteps = 20;
    for (int s = 1; s <= kSteps; ++s) {
      const double r = kReach * s / kSteps;
      const double th = theta + wobble * r / kReach;
      const Vec2 cur{hub.x + r * std::cos(th), hub.y + r * std::sin(th)};
      net.segments.push_back({prev, cur});
      prev = cur;
    }
  }
  for (double r = ring_step; r <= kReach; r += ring_step) {
    constexpr int kArcs = 64;
    for (int k = 0; k < kArcs; ++k) {
      if (rng.bernoulli(ring_gap)) continue;
      const double a0 = 2.0 * kPi * k / kArcs;
      const double a1 = 2.0 * kPi * (k + 1) / kArcs;
      net.segments.push_back({{hub.x + r * std::cos(a0), hub.y + r * std::sin(a0)},
                              {hub.x + r * std::cos(a1), hub.y + r * std::sin(a1)}});
    }
  }
  return net;
}

StreetNetwork synth_random(Rng& rng, const SynthParams& p) {
  StreetNetwork net;
  const int lines = static_cast<int>(rng.between(p.lines_min, p.lines_max));
  const double drop = rng.uniform(0.0, p.line_drop_max);
  for (int i = 0; i < lines; ++i) {
    const double theta = rng.uniform(0.0, kPi);
    const double offset = rng.uniform(-kReach, kReach);
    const Vec2 a = rotate({offset, -kReach}, theta);
    const Vec2 b = rotate({offset, kReach}, theta);
    add_broken_line(net, a, b, 200.0, drop, rng);
  }
  return net;
}

StreetNetwork synth_city(SynthClass cls, const std::string& city_id, std::uint64_t seed,
                         const SynthParams& params) {
  Rng rng(derive_seed(seed, city_id));
  StreetNetwork net;
  switch (cls) {
    case SynthClass::grid: net = synth_grid(rng, params); break;
    case SynthClass::radial: net = synth_radial(rng, params); break;
    case SynthClass::random: net = synth_random(rng, params); break;
  }
  net.city_id = city_id;
  net.center = {0.0, 0.0};
  net.label = to_string(cls);
  // Placeholder location so map exports have something to plot.
  Rng where(derive_seed(seed, "origin:" + city_id));
  const double lon = where.uniform(-180.0, 180.0);
  const double lat = where.uniform(-55.0, 65.0);
  net.origin_lonlat = LonLat{lon, lat};
  return net;
}

std::vector<StreetNetwork> synth_corpus(std::size_t count, std::uint64_t seed,
                                        const std::vector<SynthClass>& classes, const SynthParams& params) {
  if (classes.empty()) throw ValidationError("synth_corpus: no classes given");
  std::vector<StreetNetwork> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const SynthClass cls = classes[i % classes.size()];
    char id[64];
    std::snprintf(id, sizeof id, "city_%04zu_%s", i, to_string(cls).c_str());
    out.push_back(synth_city(cls, id, seed, params));
  }
  return out;
}

}  // namespace urbanvae
