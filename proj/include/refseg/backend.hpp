#pragma once

#include <map>
#include <memory>
#include <string>

#include "refseg/mat.hpp"

namespace refseg {

/// Frozen joint-embedding features for (H/16)*(W/16) image patches plus a
/// leading class token.
struct ImageTokenFeatures {
  MatD tokens;  // (M+1) x D, row 0 is the class token
  int grid_h = 0, grid_w = 0;
};

struct TextEmbedding {
  VecD vector;  // D
};

/// Provider of frozen joint image/text embeddings. Gradients never flow into
/// a backend; outputs are plain double matrices.
class EmbeddingBackend {
 public:
  virtual ~EmbeddingBackend() = default;
  /// H and W must be divisible by 16. `scene_id` is ignored by backends that
  /// compute from pixels; file-based backends use it to locate records.
  virtual ImageTokenFeatures embed_image(const Image& image, const std::string& scene_id) = 0;
  virtual TextEmbedding embed_text(const std::string& prompt) = 0;
  virtual int dim() const = 0;
};

/// Deterministic mock backend. Each 16x16 patch is described by palette-color
/// fractions, a crude shape-occupancy score and a constant presence term; the
/// descriptor is mapped through a seeded orthonormal basis shared with the
/// text side, so color/shape words genuinely align with pixels.
class MockBackend : public EmbeddingBackend {
 public:
  explicit MockBackend(int d = 32, uint64_t seed = 0x5eedULL);
  ImageTokenFeatures embed_image(const Image& image, const std::string& scene_id) override;
  TextEmbedding embed_text(const std::string& prompt) override;
  int dim() const override { return d_; }

 private:
  VecD map_descriptor(const VecD& desc) const;
  int d_;
  MatD basis_;  // descriptor_dim x d, orthonormal rows
};

/// Reads precomputed embeddings from `<dataset>/embeddings/<scene_id>.bin`.
/// Each file holds the image-token matrix and a prompt -> embedding table.
class ExternalBackend : public EmbeddingBackend {
 public:
  explicit ExternalBackend(std::string dataset_dir);
  ImageTokenFeatures embed_image(const Image& image, const std::string& scene_id) override;
  TextEmbedding embed_text(const std::string& prompt) override;
  int dim() const override { return d_; }

 private:
  void load_scene(const std::string& scene_id);
  std::string dir_;
  int d_ = 0;
  std::string current_scene_;
  ImageTokenFeatures current_tokens_;
  std::map<std::string, VecD> current_prompts_;
};

/// Writer for the external-backend record format.
void write_external_embeddings(const std::string& path, const MatD& tokens,
                               const std::map<std::string, VecD>& prompts);

/// Factory over the config key: "mock" or "external".
std::unique_ptr<EmbeddingBackend> make_backend(const std::string& key, int dim, const std::string& dataset_dir);

}  // namespace refseg
