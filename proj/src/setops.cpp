#include "tubelab/setops.hpp"

#include <string>

namespace tubelab {

namespace {

void require_same_dim(const Box& a, const Box& b, const char* op) {
  if (a.dim() != b.dim())
    throw Error(ErrorCode::DimensionMismatch, std::string(op) + ": box dimensions differ (" +
                                                  std::to_string(a.dim()) + " vs " + std::to_string(b.dim()) + ")");
}

}  // namespace

Box::Box(Vec lo, Vec hi) : lo_(std::move(lo)), hi_(std::move(hi)) {
  if (lo_.size() != hi_.size()) throw Error(ErrorCode::DimensionMismatch, "box bounds differ in size");
  if (!lo_.allFinite() || !hi_.allFinite()) throw Error(ErrorCode::InvalidParameter, "box bounds must be finite");
  for (Eigen::Index i = 0; i < lo_.size(); ++i) {
    if (lo_(i) > hi_(i))
      throw Error(ErrorCode::InvalidParameter, "box lower bound exceeds upper bound in component " + std::to_string(i));
  }
}

Box Box::zero(int n) { return Box(Vec::Zero(n), Vec::Zero(n)); }

Box Box::symmetric(const Vec& half_width) { return Box(-half_width.cwiseAbs(), half_width.cwiseAbs()); }

Box Box::point(const Vec& p) { return Box(p, p); }

Box minkowski_sum(const Box& a, const Box& b) {
  require_same_dim(a, b, "minkowski_sum");
  return Box(a.lo() + b.lo(), a.hi() + b.hi());
}

MaybeBox pontryagin_diff(const Box& a, const Box& b) {
  require_same_dim(a, b, "pontryagin_diff");
  Vec lo = a.lo() - b.lo();
  Vec hi = a.hi() - b.hi();
  if ((lo.array() > hi.array()).any()) return std::nullopt;
  return Box(std::move(lo), std::move(hi));
}

std::vector<int> pontryagin_inverted_components(const Box& a, const Box& b) {
  require_same_dim(a, b, "pontryagin_diff");
  std::vector<int> out;
  for (int i = 0; i < a.dim(); ++i) {
    if (a.lo()(i) - b.lo()(i) > a.hi()(i) - b.hi()(i)) out.push_back(i);
  }
  return out;
}

Box linear_map_outer(const Mat& M, const Box& a) {
  if (M.cols() != a.dim())
    throw Error(ErrorCode::DimensionMismatch, "linear_map_outer: matrix has " + std::to_string(M.cols()) +
                                                  " columns, box has dimension " + std::to_string(a.dim()));
  Vec lo = Vec::Zero(M.rows());
  Vec hi = Vec::Zero(M.rows());
  for (Eigen::Index i = 0; i < M.rows(); ++i) {
    for (Eigen::Index j = 0; j < M.cols(); ++j) {
      const double p = M(i, j) * a.lo()(j);
      const double q = M(i, j) * a.hi()(j);
      lo(i) += std::min(p, q);
      hi(i) += std::max(p, q);
    }
  }
  return Box(std::move(lo), std::move(hi));
}

bool contains(const Box& a, const Vec& p, double tol) {
  if (p.size() != a.dim()) throw Error(ErrorCode::DimensionMismatch, "contains: point dimension mismatch");
  return ((p - a.lo()).array() >= -tol).all() && ((a.hi() - p).array() >= -tol).all();
}

bool is_subset(const Box& a, const Box& b, double tol) {
  require_same_dim(a, b, "is_subset");
  return ((a.lo() - b.lo()).array() >= -tol).all() && ((b.hi() - a.hi()).array() >= -tol).all();
}

Vec sample_uniform(const Box& a, Rng& rng) {
  if (a.dim() == 0) throw Error(ErrorCode::EmptyInput, "sample_uniform: zero-dimensional box");
  Vec p(a.dim());
  for (int i = 0; i < a.dim(); ++i) {
    const double lo = a.lo()(i);
    const double hi = a.hi()(i);
    p(i) = lo == hi ? lo : uniform(rng, lo, hi);
  }
  return p;
}

Box outer_box_of_points(std::span<const Vec> points) {
  if (points.empty()) throw Error(ErrorCode::EmptyInput, "outer_box_of_points: empty point set");
  Vec lo = points.front();
  Vec hi = points.front();
  for (const Vec& p : points) {
    if (p.size() != lo.size()) throw Error(ErrorCode::DimensionMismatch, "outer_box_of_points: mixed dimensions");
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return Box(std::move(lo), std::move(hi));
}

Box stack(const Box& a, const Box& b) {
  Vec lo(a.dim() + b.dim());
  Vec hi(a.dim() + b.dim());
  lo << a.lo(), b.lo();
  hi << a.hi(), b.hi();
  return Box(std::move(lo), std::move(hi));
}

Box scale(const Box& a, double s) {
  if (s < 0.0) throw Error(ErrorCode::InvalidParameter, "scale: factor must be non-negative");
  return Box(a.lo() * s, a.hi() * s);
}

Box translate(const Box& a, const Vec& offset) {
  if (offset.size() != a.dim()) throw Error(ErrorCode::DimensionMismatch, "translate: offset dimension mismatch");
  return Box(a.lo() + offset, a.hi() + offset);
}

Box segment(const Box& a, int start, int count) {
  if (start < 0 || count < 0 || start + count > a.dim())
    throw Error(ErrorCode::DimensionMismatch, "segment: range out of bounds");
  return Box(a.lo().segment(start, count), a.hi().segment(start, count));
}

MaybeBox intersect(const Box& a, const Box& b) {
  require_same_dim(a, b, "intersect");
  Vec lo = a.lo().cwiseMax(b.lo());
  Vec hi = a.hi().cwiseMin(b.hi());
  if ((lo.array() > hi.array()).any()) return std::nullopt;
  return Box(std::move(lo), std::move(hi));
}

}  // namespace tubelab
