#pragma once

#include "tad/types.hpp"

namespace tad {

// Axis-aligned box in R^D.
struct Box {
  Vector lower;
  Vector upper;

  int dims() const { return static_cast<int>(lower.size()); }
  Vector width() const { return upper - lower; }
  void validate() const;
  bool contains(const Point& x) const;
  Point clip(const Point& x) const;
  PointSet clip(const PointSet& points) const;

  static Box uniform(int dims, double lo, double hi);
};

}  // namespace tad
