#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "urbanvae/geometry.hpp"
#include "urbanvae/rng.hpp"

namespace urbanvae {

/// Procedural street-pattern families used for self-contained experiments.
enum class SynthClass { grid, radial, random };

std::string to_string(SynthClass c);
SynthClass parse_synth_class(const std::string& text);

/// Ranges the generators draw from. Per-city values are uniform in [min, max].
struct SynthParams {
  double grid_spacing_min = 700.0;  // meters; arterial-scale blocks
  double grid_spacing_max = 1100.0;
  double grid_jitter = 0.1;  // line offset noise, fraction of spacing
  double grid_drop_max = 0.25;
  double grid_rotation_max = 0.7853981633974483;  // radians, symmetric about north
  int spokes_min = 4;
  int spokes_max = 8;
  double ring_step_min = 800.0;
  double ring_step_max = 1200.0;
  double ring_gap_max = 0.3;
  double hub_offset_max = 0.0;  // meters from the window center
  int lines_min = 3;
  int lines_max = 8;
  double line_drop_max = 0.3;
};

/// Orthogonal grid with random spacing, rotation, line jitter and dropped blocks.
StreetNetwork synth_grid(Rng& rng, const SynthParams& params = {});
/// Spokes plus concentric rings around a hub near the window center.
StreetNetwork synth_radial(Rng& rng, const SynthParams& params = {});
/// Isotropic Poisson line process with broken segments.
StreetNetwork synth_random(Rng& rng, const SynthParams& params = {});

StreetNetwork synth_city(SynthClass cls, const std::string& city_id, std::uint64_t seed,
                         const SynthParams& params = {});

/// `count` cities cycling through `classes` in order. City i is named
/// "city_NNNN_<class>" (zero-padded index) and drawn from a stream derived from (seed, city id), so
/// any prefix of the corpus is stable when count grows.
std::vector<StreetNetwork> synth_corpus(std::size_t count, std::uint64_t seed,
                                        const std::vector<SynthClass>& classes = {
                                            SynthClass::grid, SynthClass::radial,
                                            SynthClass::random},
                                        const SynthParams& params = {});

}  // namespace urbanvae
