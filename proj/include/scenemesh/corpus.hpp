#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "scenemesh/common.hpp"

namespace scenemesh {

// Codebook geometry: a frame is cells_x * cells_y motion cells, each cell's
// mean flow quantized into `directions` bins. Word ids enumerate
// (cell row, cell column, direction) row-major:
//   id(cx, cy, d) = (cy * cells_x + cx) * directions + d.
struct GridSpec {
  int cells_x = 0;
  int cells_y = 0;
  int directions = 0;
  int cell_pixels = 5;

  int vocab_size() const { return cells_x * cells_y * directions; }

  void validate() const {
    if (cells_x < 1 || cells_y < 1 || directions < 1 || cell_pixels < 1) {
      throw DomainError("GridSpec: all dimensions must be >= 1");
    }
  }

  bool operator==(const GridSpec& other) const = default;
};

struct WordCoords {
  int cx = 0;
  int cy = 0;
  int d = 0;
};

inline int word_index(int cx, int cy, int d, const GridSpec& grid) {
  grid.validate();
  if (cx < 0 || cx >= grid.cells_x || cy < 0 || cy >= grid.cells_y || d < 0 ||
      d >= grid.directions) {
    throw DomainError("word_index: coordinate out of range");
  }
  return (cy * grid.cells_x + cx) * grid.directions + d;
}

inline WordCoords word_coords(int word_id, const GridSpec& grid) {
  grid.validate();
  if (word_id < 0 || word_id >= grid.vocab_size()) {
    throw DomainError("word_coords: word id out of range");
  }
  WordCoords c;
  c.d = word_id % grid.directions;
  const int cell = word_id / grid.directions;
  c.cx = cell % grid.cells_x;
  c.cy = cell / grid.cells_x;
  return c;
}

struct VisualWord {
  int word_id = 0;
  WordCoords coords(const GridSpec& grid) const { return word_coords(word_id, grid); }
};

// A clip's bag of visual words: sparse (word_id, count) pairs sorted by id.
struct ClipDocument {
  std::string clip_id;
  std::string scene_id;
  std::vector<std::pair<int, int>> counts;

  long long total_count() const {
    long long n = 0;
    for (const auto& [w, c] : counts) n += c;
    return n;
  }

  void add(int word_id, int count) {
    if (count <= 0) return;
    for (auto& [w, c] : counts) {
      if (w == word_id) {
        c += count;
        return;
      }
    }
    counts.emplace_back(word_id, count);
  }

  void sort_counts() {
    std::sort(counts.begin(), counts.end());
  }

  void validate(const GridSpec& grid) const {
    int prev = -1;
    for (const auto& [w, c] : counts) {
      if (w < 0 || w >= grid.vocab_size()) {
        throw DomainError("ClipDocument " + clip_id + ": word id out of range");
      }
      if (c < 0) throw DomainError("ClipDocument " + clip_id + ": negative count");
      if (w <= prev) throw DomainError("ClipDocument " + clip_id + ": counts not sorted/unique");
      prev = w;
    }
  }
};

// Clip-level semantic tag: a set of activity tags; the unique tag combination
// defines the behavior category.
struct BehaviorLabel {
  std::vector<std::string> tags;  // sorted, unique
  std::string category_id;

  static BehaviorLabel from_tags(std::vector<std::string> raw) {
    std::sort(raw.begin(), raw.end());
    raw.erase(std::unique(raw.begin(), raw.end()), raw.end());
    BehaviorLabel label;
    label.tags = std::move(raw);
    std::string cat;
    for (const auto& t : label.tags) {
      if (!cat.empty()) cat += '+';
      cat += t;
    }
    label.category_id = cat;
    return label;
  }
};

struct SceneCorpus {
  std::string scene_id;
  GridSpec grid;
  std::vector<ClipDocument> training_clips;
  std::vector<ClipDocument> semantic_clips;
  std::map<std::string, BehaviorLabel> annotations;

  void validate() const {
    grid.validate();
    std::set<std::string> ids;
    for (const auto* list : {&training_clips, &semantic_clips}) {
      for (const auto& clip : *list) {
        clip.validate(grid);
        if (clip.scene_id != scene_id) {
          throw DomainError("SceneCorpus " + scene_id + ": clip " + clip.clip_id +
                            " carries foreign scene id");
        }
        if (!ids.insert(clip.clip_id).second) {
          throw DomainError("SceneCorpus " + scene_id + ": duplicate clip id " + clip.clip_id);
        }
      }
    }
  }
};

// Per-cell mean motion vectors for one clip.
struct FlowField {
  int cells_x = 0;
  int cells_y = 0;
  std::vector<std::array<double, 2>> vectors;  // row-major (cy * cells_x + cx)

  const std::array<double, 2>& at(int cx, int cy) const {
    return vectors[static_cast<std::size_t>(cy * cells_x + cx)];
  }
};

// Quantizes per-cell motion into visual words. A cell contributes one word
// when its motion magnitude exceeds the threshold; the direction bin is the
// nearest of `directions` uniformly spaced directions (bin d is centered on
// angle 2*pi*d/N_m).
inline ClipDocument quantize_motion(const FlowField& flow, const GridSpec& grid,
                                    double magnitude_threshold, std::string clip_id = "",
                                    std::string scene_id = "") {
  grid.validate();
  if (flow.cells_x != grid.cells_x || flow.cells_y != grid.cells_y ||
      flow.vectors.size() != static_cast<std::size_t>(grid.cells_x * grid.cells_y)) {
    throw DomainError("quantize_motion: flow field dimensions do not match grid");
  }
  ClipDocument doc;
  doc.clip_id = std::move(clip_id);
  doc.scene_id = std::move(scene_id);
  const double step = 2.0 * M_PI / grid.directions;
  for (int cy = 0; cy < grid.cells_y; ++cy) {
    for (int cx = 0; cx < grid.cells_x; ++cx) {
      const auto& v = flow.at(cx, cy);
      const double mag = std::hypot(v[0], v[1]);
      if (!(mag > magnitude_threshold)) continue;
      const double angle = std::atan2(v[1], v[0]);
      int d = static_cast<int>(std::llround(angle / step));
      d %= grid.directions;
      if (d < 0) d += grid.directions;
      doc.add(word_index(cx, cy, d, grid), 1);
    }
  }
  doc.sort_counts();
  return doc;
}

}  // namespace scenemesh
