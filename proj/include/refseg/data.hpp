#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "refseg/mat.hpp"
#include "refseg/parse.hpp"

namespace refseg {

struct Expression {
  std::string text;
  DependencyParse parse;
};

struct InstanceAnnotation {
  Mask mask;
  std::string object_key;
  std::vector<Expression> expressions;  // [0] is the direct form
  // generator metadata, persisted for evaluation and analysis
  int color = -1;
  int shape = -1;
  int bbox[4] = {0, 0, 0, 0};  // x0, y0, x1, y1 inclusive
};

struct Scene {
  Image image;
  std::vector<InstanceAnnotation> instances;
  std::string scene_id;
};

struct Dataset {
  std::vector<Scene> scenes;
};

struct GenerationConfig {
  int num_scenes = 100;
  int image_h = 64;
  int image_w = 64;
  int min_instances = 2;
  int max_instances = 3;
  int paraphrases = 1;  // paraphrase expressions per instance (>=1)
  double colored_relational_prob = 0.5;
  double geometric_relational_prob = 0.35;
  int min_half_extent = 7;
  int max_half_extent = 12;
  bool unique_colors = true;
  std::string id_prefix = "scene";

  void validate() const;  // throws ConfigError
};

// Expression templates. The template engine emits its own gold parse.
Expression make_direct_expression(int color, int shape);
Expression make_paraphrase_expression(int color, int shape, int variant);
/// rel is one of "left", "right", "above", "below". Negative color indices
/// produce the uncolored geometric variant ("the circle left of the square").
Expression make_relational_expression(int shape, const std::string& rel, int anchor_shape, int color = -1,
                                      int anchor_color = -1);

/// Deterministic toy-scene generation: colored shapes on a dark background,
/// pairwise-disjoint masks, two or more expressions per instance.
Dataset generate_dataset(const GenerationConfig& config, uint64_t seed);

void save_dataset(const Dataset& ds, const std::string& path);
Dataset load_dataset(const std::string& path);

void write_image_file(const Image& img, const std::string& path);
Image read_image_file(const std::string& path);

}  // namespace refseg
