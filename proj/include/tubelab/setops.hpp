#pragma once

#include "tubelab/common.hpp"

#include <optional>
#include <span>
#include <vector>

namespace tubelab {

// Axis-aligned box {p : lo <= p <= hi}. Emptiness is never encoded in a Box;
// operations that can produce the empty set return std::optional<Box>.
class Box {
 public:
  Box() = default;
  Box(Vec lo, Vec hi);

  static Box zero(int n);
  static Box symmetric(const Vec& half_width);
  static Box point(const Vec& p);

  int dim() const { return static_cast<int>(lo_.size()); }
  const Vec& lo() const { return lo_; }
  const Vec& hi() const { return hi_; }
  Vec center() const { return 0.5 * (lo_ + hi_); }
  Vec half_width() const { return 0.5 * (hi_ - lo_); }

  bool operator==(const Box& other) const { return lo_ == other.lo_ && hi_ == other.hi_; }

 private:
  Vec lo_;
  Vec hi_;
};

using MaybeBox = std::optional<Box>;

Box minkowski_sum(const Box& a, const Box& b);

// std::nullopt is the typed empty result.
MaybeBox pontryagin_diff(const Box& a, const Box& b);

// Components i where a ⊖ b inverts (lo_i > hi_i).
std::vector<int> pontryagin_inverted_components(const Box& a, const Box& b);

// Tightest axis-aligned outer box of {M p : p in a} (interval arithmetic).
Box linear_map_outer(const Mat& M, const Box& a);

bool contains(const Box& a, const Vec& p, double tol = 0.0);

// a ⊆ b componentwise, with slack tol.
bool is_subset(const Box& a, const Box& b, double tol = 0.0);

Vec sample_uniform(const Box& a, Rng& rng);

Box outer_box_of_points(std::span<const Vec> points);

// Cartesian product [a; b].
Box stack(const Box& a, const Box& b);

// {s p : p in a} for s >= 0.
Box scale(const Box& a, double s);

Box translate(const Box& a, const Vec& offset);

// Sub-box of components [start, start + count).
Box segment(const Box& a, int start, int count);

// Componentwise intersection; nullopt if empty.
MaybeBox intersect(const Box& a, const Box& b);

}  // namespace tubelab
