#include "refseg/backend.hpp"

#include <algorithm>
#include <cctype>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "refseg/errors.hpp"
#include "refseg/palette.hpp"

namespace fs = std::filesystem;

namespace refseg {

namespace {
constexpr int kPatch = 16;
}

MockBackend::MockBackend(int d, uint64_t seed) : d_(d) {
  const int desc_dim = static_cast<int>(palette_colors().size() + palette_shapes().size()) + 1;
  if (d_ < desc_dim) throw ConfigError("mock backend dim must be >= color+shape vocabulary rank");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  basis_ = MatD(desc_dim, d_);
  for (int i = 0; i < desc_dim; ++i)
    for (int j = 0; j < d_; ++j) basis_(i, j) = normal(rng);
  // Gram-Schmidt: orthonormal rows make word alignment injective
  for (int i = 0; i < desc_dim; ++i) {
    for (int k = 0; k < i; ++k) basis_.row(i) -= basis_.row(i).dot(basis_.row(k)) * basis_.row(k);
    basis_.row(i).normalize();
  }
}

VecD MockBackend::map_descriptor(const VecD& desc) const { return basis_.transpose() * desc; }

ImageTokenFeatures MockBackend::embed_image(const Image& image, const std::string&) {
  if (image.h % kPatch != 0 || image.w % kPatch != 0)
    throw ArgumentError("embed_image: image size must be divisible by 16");
  const int gh = image.h / kPatch, gw = image.w / kPatch;
  const int nc = static_cast<int>(palette_colors().size());
  const int ns = static_cast<int>(palette_shapes().size());
  ImageTokenFeatures out;
  out.grid_h = gh;
  out.grid_w = gw;
  out.tokens = MatD::Zero(gh * gw + 1, d_);

  for (int gy = 0; gy < gh; ++gy)
    for (int gx = 0; gx < gw; ++gx) {
      VecD desc = VecD::Zero(nc + ns + 1);
      int fg = 0;
      int bx0 = kPatch, by0 = kPatch, bx1 = -1, by1 = -1;
      for (int py = 0; py < kPatch; ++py)
        for (int px = 0; px < kPatch; ++px) {
          const int y = gy * kPatch + py, x = gx * kPatch + px;
          const int c = classify_pixel(image.at(y, x, 0), image.at(y, x, 1), image.at(y, x, 2));
          if (c >= 0) {
            desc[c] += 1.0;
            ++fg;
            bx0 = std::min(bx0, px);
            by0 = std::min(by0, py);
            bx1 = std::max(bx1, px);
            by1 = std::max(by1, py);
          }
        }
      const double area = kPatch * kPatch;
      desc.head(nc) /= area;
      if (fg > 0) {
        // crude shape cue from the patch-local fill ratio of the foreground box
        const double box = static_cast<double>(bx1 - bx0 + 1) * (by1 - by0 + 1);
        const double fill = fg / box;
        int shape = fill >= 0.92 ? 1 : (fill >= 0.68 ? 0 : 2);  // square / circle / triangle
        desc[nc + shape] = fg / area;
      }
      desc[nc + ns] = 1.0;  // presence term keeps every token away from zero
      out.tokens.row(1 + gy * gw + gx) = map_descriptor(desc).transpose();
    }
  out.tokens.row(0) = out.tokens.bottomRows(gh * gw).colwise().mean();
  return out;
}

TextEmbedding MockBackend::embed_text(const std::string& prompt) {
  if (prompt.empty()) throw ArgumentError("embed_text: empty prompt");
  const int nc = static_cast<int>(palette_colors().size());
  const int ns = static_cast<int>(palette_shapes().size());
  VecD desc = VecD::Zero(nc + ns + 1);
  std::istringstream ss(prompt);
  std::string word;
  while (ss >> word) {
    std::transform(word.begin(), word.end(), word.begin(), [](unsigned char c) { return std::tolower(c); });
    if (int ci = color_index(word); ci >= 0)
      desc[ci] += 1.0;
    else if (int si = shape_index(word); si >= 0)
      desc[nc + si] += 1.0;
    // any other word (template words included) contributes nothing
  }
  desc[nc + ns] = 1.0;
  return TextEmbedding{map_descriptor(desc)};
}

// ---------------------------------------------------------------------------
// External backend
// ---------------------------------------------------------------------------

namespace {
constexpr char kEmbMagic[8] = {'R', 'S', 'E', 'M', 'B', '0', '0', '1'};
}

void write_external_embeddings(const std::string& path, const MatD& tokens,
                               const std::map<std::string, VecD>& prompts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open embedding file for writing: " + path);
  out.write(kEmbMagic, 8);
  const uint32_t rows = static_cast<uint32_t>(tokens.rows());
  const uint32_t d = static_cast<uint32_t>(tokens.cols());
  const uint32_t np = static_cast<uint32_t>(prompts.size());
  out.write(reinterpret_cast<const char*>(&rows), 4);
  out.write(reinterpret_cast<const char*>(&d), 4);
  out.write(reinterpret_cast<const char*>(&np), 4);
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t j = 0; j < d; ++j) {
      const float f = static_cast<float>(tokens(i, j));
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  for (const auto& [prompt, vec] : prompts) {
    if (vec.size() != d) throw ArgumentError("prompt embedding has wrong dimension");
    const uint32_t len = static_cast<uint32_t>(prompt.size());
    out.write(reinterpret_cast<const char*>(&len), 4);
    out.write(prompt.data(), len);
    for (uint32_t j = 0; j < d; ++j) {
      const float f = static_cast<float>(vec[j]);
      out.write(reinterpret_cast<const char*>(&f), 4);
    }
  }
  if (!out) throw ArgumentError("failed writing embedding file: " + path);
}

ExternalBackend::ExternalBackend(std::string dataset_dir) : dir_(std::move(dataset_dir)) {}

void ExternalBackend::load_scene(const std::string& scene_id) {
  if (scene_id == current_scene_) return;
  const std::string path = (fs::path(dir_) / "embeddings" / (scene_id + ".bin")).string();
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("missing embedding record: " + path);
  char magic[8];
  uint32_t rows = 0, d = 0, np = 0;
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(&rows), 4);
  in.read(reinterpret_cast<char*>(&d), 4);
  in.read(reinterpret_cast<char*>(&np), 4);
  if (!in || std::memcmp(magic, kEmbMagic, 8) != 0) throw ParseError("bad embedding header: " + path);
  MatD tokens(rows, d);
  for (uint32_t i = 0; i < rows; ++i)
    for (uint32_t j = 0; j < d; ++j) {
      float f;
      in.read(reinterpret_cast<char*>(&f), 4);
      tokens(i, j) = f;
    }
  std::map<std::string, VecD> prompts;
  for (uint32_t p = 0; p < np; ++p) {
    uint32_t len = 0;
    in.read(reinterpret_cast<char*>(&len), 4);
    std::string prompt(len, '\0');
    in.read(prompt.data(), len);
    VecD v(d);
    for (uint32_t j = 0; j < d; ++j) {
      float f;
      in.read(reinterpret_cast<char*>(&f), 4);
      v[j] = f;
    }
    prompts.emplace(std::move(prompt), std::move(v));
  }
  if (!in) throw ParseError("truncated embedding record: " + path);
  d_ = static_cast<int>(d);
  current_scene_ = scene_id;
  current_tokens_.tokens = std::move(tokens);
  current_prompts_ = std::move(prompts);
}

ImageTokenFeatures ExternalBackend::embed_image(const Image& image, const std::string& scene_id) {
  if (image.h % kPatch != 0 || image.w % kPatch != 0)
    throw ArgumentError("embed_image: image size must be divisible by 16");
  load_scene(scene_id);
  const int gh = image.h / kPatch, gw = image.w / kPatch;
  if (current_tokens_.tokens.rows() != gh * gw + 1)
    throw ParseError("embedding record for " + scene_id + " has wrong token count");
  ImageTokenFeatures out = current_tokens_;
  out.grid_h = gh;
  out.grid_w = gw;
  return out;
}

TextEmbedding ExternalBackend::embed_text(const std::string& prompt) {
  auto it = current_prompts_.find(prompt);
  if (it == current_prompts_.end())
    throw ArgumentError("no precomputed embedding for prompt '" + prompt + "' in scene " + current_scene_);
  return TextEmbedding{it->second};
}

std::unique_ptr<EmbeddingBackend> make_backend(const std::string& key, int dim, const std::string& dataset_dir) {
  if (key == "mock") return std::make_unique<MockBackend>(dim);
  if (key == "external") return std::make_unique<ExternalBackend>(dataset_dir);
  throw ConfigError("unknown backend key '" + key + "' (expected mock or external)");
}

}  // namespace refseg
