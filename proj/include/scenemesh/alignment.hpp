#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "scenemesh/common.hpp"
#include "scenemesh/corpus.hpp"
#include "scenemesh/topic_model.hpp"

namespace scenemesh {

// Homogeneous 2-D similarity transform over cell coordinates:
//   [ s*cos(r)  -s*sin(r)  tx ]
//   [ s*sin(r)   s*cos(r)  ty ]
//   [ 0          0         1  ]
// Rotation defaults to 0, in which case the matrix reduces to pure
// scale + translation.
struct SceneTransform {
  double scale = 1.0;
  double rotation = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  void validate() const {
    if (!(scale > 0.0) || !std::isfinite(scale) || !std::isfinite(rotation) ||
        !std::isfinite(tx) || !std::isfinite(ty)) {
      throw NumericError("SceneTransform: invalid parameters (scale must be positive, finite)");
    }
  }

  std::array<double, 9> matrix() const {
    const double c = std::cos(rotation);
    const double s = std::sin(rotation);
    return {scale * c, -scale * s, tx, scale * s, scale * c, ty, 0.0, 0.0, 1.0};
  }

  SceneTransform inverse() const {
    validate();
    SceneTransform inv;
    inv.scale = 1.0 / scale;
    inv.rotation = -rotation;
    const double c = std::cos(-rotation);
    const double s = std::sin(-rotation);
    inv.tx = -(c * tx - s * ty) / scale;
    inv.ty = -(s * tx + c * ty) / scale;
    return inv;
  }

  std::pair<double, double> apply(double x, double y) const {
    const double c = std::cos(rotation);
    const double s = std::sin(rotation);
    return {scale * (c * x - s * y) + tx, scale * (s * x + c * y) + ty};
  }

  std::pair<double, double> apply_inverse(double x, double y) const {
    const SceneTransform inv = inverse();
    return inv.apply(x, y);
  }

  bool is_identity(double tol = 1e-12) const {
    return std::abs(scale - 1.0) <= tol && std::abs(rotation) <= tol && std::abs(tx) <= tol &&
           std::abs(ty) <= tol;
  }
};

struct NormalizationStats {
  double center_x = 0.0;
  double center_y = 0.0;
  double mean_radius = 0.0;
};

// Count-weighted mean position and mean radius of all visual words in the
// given clips, in cell coordinates.
inline NormalizationStats compute_normalization_stats(std::span<const ClipDocument> clips,
                                                      const GridSpec& grid) {
  grid.validate();
  double cx_sum = 0.0;
  double cy_sum = 0.0;
  long long total = 0;
  for (const auto& clip : clips) {
    for (const auto& [word, count] : clip.counts) {
      const WordCoords c = word_coords(word, grid);
      cx_sum += static_cast<double>(count) * c.cx;
      cy_sum += static_cast<double>(count) * c.cy;
      total += count;
    }
  }
  if (total < 2) throw DomainError("compute_normalization_stats: fewer than 2 words");
  NormalizationStats stats;
  stats.center_x = cx_sum / static_cast<double>(total);
  stats.center_y = cy_sum / static_cast<double>(total);
  double radius_sum = 0.0;
  for (const auto& clip : clips) {
    for (const auto& [word, count] : clip.counts) {
      const WordCoords c = word_coords(word, grid);
      radius_sum += static_cast<double>(count) *
                    std::hypot(c.cx - stats.center_x, c.cy - stats.center_y);
    }
  }
  stats.mean_radius = radius_sum / static_cast<double>(total);
  return stats;
}

// Closed-form normalizing transform: maps the word cloud's center to the
// origin and its mean radius to 1.
inline SceneTransform estimate_normalization(std::span<const ClipDocument> clips,
                                             const GridSpec& grid) {
  const NormalizationStats stats = compute_normalization_stats(clips, grid);
  if (!(stats.mean_radius > 0.0)) {
    throw DomainError("estimate_normalization: degenerate scene (all words in one cell)");
  }
  SceneTransform t;
  t.scale = 1.0 / stats.mean_radius;
  t.tx = -t.scale * stats.center_x;
  t.ty = -t.scale * stats.center_y;
  return t;
}

inline SceneTransform estimate_normalization(const SceneCorpus& corpus) {
  return estimate_normalization(std::span<const ClipDocument>(corpus.training_clips), corpus.grid);
}

// T^{a2b} = Tb^{-1} * Ta, computed on the parameterization (exact closure).
inline SceneTransform compose_a_to_b(const SceneTransform& ta, const SceneTransform& tb) {
  ta.validate();
  tb.validate();
  SceneTransform out;
  out.scale = ta.scale / tb.scale;
  out.rotation = ta.rotation - tb.rotation;
  const double c = std::cos(-tb.rotation);
  const double s = std::sin(-tb.rotation);
  const double dx = ta.tx - tb.tx;
  const double dy = ta.ty - tb.ty;
  out.tx = (c * dx - s * dy) / tb.scale;
  out.ty = (s * dx + c * dy) / tb.scale;
  return out;
}

// Direction bin remap under a transform: the bin's unit vector is pulled back
// through the 2x2 linear part (translation never changes direction) and
// snapped to the nearest bin; ties break toward the smaller bin.
inline int remap_direction(int d_prime, const SceneTransform& transform, int num_directions) {
  if (num_directions < 1) throw DomainError("remap_direction: directions must be >= 1");
  if (d_prime < 0 || d_prime >= num_directions) {
    throw DomainError("remap_direction: direction bin out of range");
  }
  if (transform.rotation == 0.0) return d_prime;  // pure scale + translation
  const double angle = 2.0 * M_PI * d_prime / num_directions;
  const SceneTransform inv = transform.inverse();
  const double c = std::cos(inv.rotation);
  const double s = std::sin(inv.rotation);
  const double vx = inv.scale * (c * std::cos(angle) - s * std::sin(angle));
  const double vy = inv.scale * (s * std::cos(angle) + c * std::sin(angle));
  int best = 0;
  double best_dist = std::numeric_limits<double>::infinity();
  for (int d = 0; d < num_directions; ++d) {
    const double a = 2.0 * M_PI * d / num_directions;
    const double dx = vx - std::cos(a);
    const double dy = vy - std::sin(a);
    const double dist = dx * dx + dy * dy;
    if (dist < best_dist) {
      best_dist = dist;
      best = d;
    }
  }
  return best;
}

namespace detail {

// Catmull-Rom cubic through 4 samples, evaluated at fractional offset x from
// the second sample.
inline double cubic_interpolate(const double v[4], double x) {
  return v[1] + 0.5 * x *
                    (v[2] - v[0] +
                     x * (2.0 * v[0] - 5.0 * v[1] + 4.0 * v[2] - v[3] +
                          x * (3.0 * (v[1] - v[2]) + v[3] - v[0])));
}

inline int clamp_index(int i, int n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

// Bicubic sample of one direction layer at continuous cell position (x, y),
// clamping the 4x4 neighborhood at grid edges.
inline double sample_layer_bicubic(const std::vector<double>& beta, const GridSpec& grid, int d,
                                   double x, double y) {
  const int x0 = static_cast<int>(std::floor(x));
  const int y0 = static_cast<int>(std::floor(y));
  const double fx = x - x0;
  const double fy = y - y0;
  double col[4];
  double row[4];
  for (int j = 0; j < 4; ++j) {
    const int cy = clamp_index(y0 - 1 + j, grid.cells_y);
    for (int i = 0; i < 4; ++i) {
      const int cx = clamp_index(x0 - 1 + i, grid.cells_x);
      row[i] = beta[static_cast<std::size_t>((cy * grid.cells_x + cx) * grid.directions + d)];
    }
    col[j] = cubic_interpolate(row, fx);
  }
  return cubic_interpolate(col, fy);
}

}  // namespace detail

// Transforms a topic distribution into another scene's frame. Every target
// element (x', y', d') traces back through the inverse transform; values come
// from bicubic interpolation within the fixed direction layer; sources outside
// the grid contribute 0. The result is cropped to the original grid box,
// floored at 0 and renormalized to sum 1.
inline std::vector<double> transform_topic(const std::vector<double>& beta, const GridSpec& grid,
                                           const SceneTransform& transform) {
  grid.validate();
  transform.validate();
  if (beta.size() != static_cast<std::size_t>(grid.vocab_size())) {
    throw DomainError("transform_topic: topic length does not match grid");
  }
  const SceneTransform inv = transform.inverse();
  std::vector<double> out(beta.size(), 0.0);
  std::vector<int> source_dir(static_cast<std::size_t>(grid.directions));
  for (int d = 0; d < grid.directions; ++d) {
    source_dir[static_cast<std::size_t>(d)] = remap_direction(d, transform, grid.directions);
  }
  double total = 0.0;
  for (int yp = 0; yp < grid.cells_y; ++yp) {
    for (int xp = 0; xp < grid.cells_x; ++xp) {
      const auto [x, y] = inv.apply(xp, yp);
      if (x < 0.0 || x > grid.cells_x - 1 || y < 0.0 || y > grid.cells_y - 1) continue;
      for (int dp = 0; dp < grid.directions; ++dp) {
        double value = detail::sample_layer_bicubic(beta, grid, source_dir[static_cast<std::size_t>(dp)], x, y);
        if (value <= 0.0) continue;  // clip interpolation overshoot
        if (!std::isfinite(value)) throw NumericError("transform_topic: non-finite sample");
        out[static_cast<std::size_t>((yp * grid.cells_x + xp) * grid.directions + dp)] = value;
        total += value;
      }
    }
  }
  if (!(total > 0.0)) {
    throw DomainError("transform_topic: empty projection (topic mapped fully out of frame)");
  }
  for (double& v : out) v /= total;
  return out;
}

struct RotationSearchResult {
  double best_angle = 0.0;
  std::vector<double> angles;
  std::vector<double> scores;  // variational bound per angle; -inf if the projection was empty
};

inline std::vector<double> uniform_angle_grid(int steps = 36) {
  if (steps < 1) throw DomainError("uniform_angle_grid: steps must be >= 1");
  std::vector<double> grid(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    grid[static_cast<std::size_t>(i)] = 2.0 * M_PI * i / steps;
  }
  return grid;
}

// Generalized alignment: scale and translation come from the closed-form
// normalizations; the rotation angle is injected in the normalized frame and
// scored by the fixed-topic variational bound of the target clips under the
// transformed source topics. The full score trace is returned because the
// objective typically has many local optima.
inline RotationSearchResult search_rotation(const TopicMatrix& source_topics,
                                            const DirichletPrior& source_prior,
                                            const SceneTransform& source_norm,
                                            const SceneTransform& target_norm,
                                            const std::vector<ClipDocument>& target_clips,
                                            const std::vector<double>& angle_grid,
                                            const LdaConfig& cfg) {
  if (angle_grid.empty()) throw DomainError("search_rotation: empty angle grid");
  if (target_clips.empty()) throw DomainError("search_rotation: no target clips");
  source_topics.validate();

  RotationSearchResult result;
  result.angles = angle_grid;
  result.scores.assign(angle_grid.size(), -std::numeric_limits<double>::infinity());

  for (std::size_t i = 0; i < angle_grid.size(); ++i) {
    // Apply the candidate rotation in the normalized frame: R(phi) * T_norm.
    const double phi = angle_grid[i];
    SceneTransform rotated;
    rotated.scale = source_norm.scale;
    rotated.rotation = source_norm.rotation + phi;
    rotated.tx = std::cos(phi) * source_norm.tx - std::sin(phi) * source_norm.ty;
    rotated.ty = std::sin(phi) * source_norm.tx + std::cos(phi) * source_norm.ty;
    const SceneTransform a2b = compose_a_to_b(rotated, target_norm);
    TopicMatrix projected;
    projected.grid = source_topics.grid;
    projected.topics.reserve(source_topics.topics.size());
    bool empty_projection = false;
    for (const auto& topic : source_topics.topics) {
      try {
        projected.topics.push_back(transform_topic(topic, source_topics.grid, a2b));
      } catch (const DomainError&) {
        empty_projection = true;
        break;
      }
    }
    if (empty_projection) {
      log_message(LogLevel::Debug, "search_rotation: empty projection at angle " +
                                       std::to_string(angle_grid[i]));
      continue;
    }
    result.scores[i] = fixed_topics_elbo(target_clips, projected, source_prior, cfg);
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < result.scores.size(); ++i) {
    if (result.scores[i] > result.scores[best]) best = i;
  }
  result.best_angle = result.angles[best];
  return result;
}

}  // namespace scenemesh
