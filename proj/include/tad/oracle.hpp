#pragma once

#include <cstdint>

#include "tad/types.hpp"

namespace tad {

// Source of observations for a campaign. `request` numbers every call of a
// campaign so a seeded oracle can key its noise on it.
class Oracle {
 public:
  virtual ~Oracle() = default;
  virtual int tasks() const = 0;
  // Per-task noise variance the observations carry.
  virtual Vector noise_var() const = 0;
  // Stacked observations (points x tasks, point-major).
  virtual Vector observe(const PointSet& points, std::uint64_t request) = 0;
};

}  // namespace tad
