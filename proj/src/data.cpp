#include "refseg/data.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>

#include <json.hpp>

#include "refseg/errors.hpp"
#include "refseg/palette.hpp"
#include "refseg/rle.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace refseg {

void GenerationConfig::validate() const {
  if (num_scenes < 0) throw ConfigError("num_scenes must be >= 0");
  if (image_h < 32 || image_w < 32 || image_h % 32 != 0 || image_w % 32 != 0)
    throw ConfigError("image size must be >= 32 and divisible by 32");
  if (min_instances < 1) throw ConfigError("scenes need at least one instance");
  if (max_instances < min_instances) throw ConfigError("max_instances < min_instances");
  if (unique_colors && max_instances > static_cast<int>(palette_colors().size()))
    throw ConfigError("max_instances exceeds palette size with unique_colors");
  if (paraphrases < 1 || paraphrases > 2) throw ConfigError("paraphrases must be 1 or 2");
  if (min_half_extent < 4 || max_half_extent < min_half_extent) throw ConfigError("bad shape extent range");
  if (colored_relational_prob < 0 || colored_relational_prob > 1 || geometric_relational_prob < 0 ||
      geometric_relational_prob > 1)
    throw ConfigError("relational probabilities must lie in [0,1]");
}

namespace {

ParseToken tok(std::string form, std::string upos, int head, std::string deprel) {
  return ParseToken{std::move(form), std::move(upos), head, std::move(deprel)};
}

Expression finish(DependencyParse parse) {
  Expression e;
  e.text = parse.text();
  e.parse = std::move(parse);
  return e;
}

}  // namespace

Expression make_direct_expression(int color, int shape) {
  const auto& c = palette_colors().at(color);
  const auto& s = palette_shapes().at(shape);
  DependencyParse p;
  p.tokens = {tok("the", "DET", 3, "det"), tok(c.name, "ADJ", 3, "amod"), tok(s.name, "NOUN", 0, "root")};
  return finish(std::move(p));
}

Expression make_paraphrase_expression(int color, int shape, int variant) {
  const auto& c = palette_colors().at(color);
  const auto& s = palette_shapes().at(shape);
  const bool second = (variant % 2) == 1;
  DependencyParse p;
  p.tokens = {tok(second ? "a" : "the", "DET", 4, "det"), tok(c.synonym, "ADJ", 4, "amod"),
              tok(s.synonym, "ADJ", 4, "amod"), tok(second ? "object" : "shape", "NOUN", 0, "root")};
  return finish(std::move(p));
}

Expression make_relational_expression(int shape, const std::string& rel, int anchor_shape, int color,
                                      int anchor_color) {
  const auto& s = palette_shapes().at(shape);
  const auto& sa = palette_shapes().at(anchor_shape);
  DependencyParse p;
  auto push = [&p](ParseToken t) { p.tokens.push_back(std::move(t)); };
  // head indices are assigned after the token list is known
  std::vector<ParseToken> head_np;  // "the [color] shape"
  head_np.push_back(tok("the", "DET", 0, "det"));
  if (color >= 0) head_np.push_back(tok(palette_colors().at(color).name, "ADJ", 0, "amod"));
  head_np.push_back(tok(s.name, "NOUN", 0, "root"));
  const int root_idx = static_cast<int>(head_np.size());  // 1-based
  for (auto& t : head_np) {
    if (t.deprel != "root") t.head = root_idx;
    push(std::move(t));
  }

  const bool two_word_rel = (rel == "left" || rel == "right");
  // anchor noun phrase position: after the relation tokens
  const int rel_tokens = two_word_rel ? 2 : 1;
  const int anchor_np_len = 2 + (anchor_color >= 0 ? 1 : 0);
  const int anchor_idx = root_idx + rel_tokens + anchor_np_len;  // 1-based index of anchor noun
  if (two_word_rel) {
    push(tok(rel, "ADV", root_idx, "advmod"));
    push(tok("of", "ADP", anchor_idx, "case"));
  } else {
    push(tok(rel, "ADP", anchor_idx, "case"));
  }
  push(tok("the", "DET", anchor_idx, "det"));
  if (anchor_color >= 0) push(tok(palette_colors().at(anchor_color).name, "ADJ", anchor_idx, "amod"));
  push(tok(sa.name, "NOUN", root_idx, "nmod"));
  return finish(std::move(p));
}

namespace {

struct Placement {
  int shape = 0;
  int color = 0;
  int cx = 0, cy = 0, half = 0;
};

bool inside_shape(const Placement& pl, int x, int y) {
  const int dx = x - pl.cx, dy = y - pl.cy;
  switch (pl.shape) {
    case 0:  // circle
      return dx * dx + dy * dy <= pl.half * pl.half;
    case 1:  // square
      return std::abs(dx) <= pl.half && std::abs(dy) <= pl.half;
    default:  // triangle, apex up, full-width base
      if (dy < -pl.half || dy > pl.half) return false;
      return 2 * std::abs(dx) <= dy + pl.half;
  }
}

bool boxes_disjoint(const Placement& a, const Placement& b, int margin) {
  return a.cx + a.half + margin < b.cx - b.half || b.cx + b.half + margin < a.cx - a.half ||
         a.cy + a.half + margin < b.cy - b.half || b.cy + b.half + margin < a.cy - a.half;
}

uint64_t mix_seed(uint64_t seed, uint64_t idx) {
  uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (idx + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string relation_of(const Placement& t, const Placement& a) {
  const int dx = t.cx - a.cx, dy = t.cy - a.cy;
  if (std::abs(dx) >= std::abs(dy)) return dx < 0 ? "left" : "right";
  return dy < 0 ? "above" : "below";
}

Scene generate_scene(const GenerationConfig& cfg, uint64_t seed, int index) {
  std::mt19937_64 rng(mix_seed(seed, static_cast<uint64_t>(index)));
  auto randint = [&rng](int lo, int hi) { return lo + static_cast<int>(rng() % static_cast<uint64_t>(hi - lo + 1)); };
  auto randprob = [&rng]() { return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0); };

  const int n_colors = static_cast<int>(palette_colors().size());
  const int n_shapes = static_cast<int>(palette_shapes().size());
  const int n = randint(cfg.min_instances, cfg.max_instances);

  std::vector<int> color_pool(n_colors);
  std::iota(color_pool.begin(), color_pool.end(), 0);
  for (int i = n_colors - 1; i > 0; --i) std::swap(color_pool[i], color_pool[randint(0, i)]);

  std::vector<Placement> placements;
  for (int i = 0; i < n; ++i) {
    Placement pl;
    pl.color = cfg.unique_colors ? color_pool[i] : randint(0, n_colors - 1);
    for (int attempt = 0;; ++attempt) {
      pl.shape = randint(0, n_shapes - 1);
      bool dup = false;
      for (const auto& o : placements) dup = dup || (o.color == pl.color && o.shape == pl.shape);
      if (!dup || attempt > 16) break;
    }
    int half = randint(cfg.min_half_extent, cfg.max_half_extent);
    bool placed = false;
    for (int attempt = 0; attempt < 400 && !placed; ++attempt) {
      if (attempt > 0 && attempt % 120 == 0 && half > 4) --half;  // shrink when crowded
      pl.half = half;
      pl.cx = randint(half + 1, cfg.image_w - half - 2);
      pl.cy = randint(half + 1, cfg.image_h - half - 2);
      placed = true;
      for (const auto& o : placements) placed = placed && boxes_disjoint(pl, o, 1);
    }
    if (!placed) throw InternalError("scene generation failed to place instance");
    placements.push_back(pl);
  }

  Scene scene;
  {
    char buf[32];
    std::snprintf(buf, sizeof buf, "_%05d", index);
    scene.scene_id = cfg.id_prefix + buf;
  }
  scene.image = Image(cfg.image_h, cfg.image_w, kBackgroundLevel);

  for (int i = 0; i < n; ++i) {
    const Placement& pl = placements[i];
    InstanceAnnotation inst;
    inst.object_key = scene.scene_id + "_i" + std::to_string(i);
    inst.color = pl.color;
    inst.shape = pl.shape;
    inst.mask = Mask(cfg.image_h, cfg.image_w);
    const auto& col = palette_colors()[pl.color];
    int x0 = cfg.image_w, y0 = cfg.image_h, x1 = -1, y1 = -1;
    for (int y = 0; y < cfg.image_h; ++y)
      for (int x = 0; x < cfg.image_w; ++x)
        if (inside_shape(pl, x, y)) {
          inst.mask.at(y, x) = 1;
          scene.image.at(y, x, 0) = col.r;
          scene.image.at(y, x, 1) = col.g;
          scene.image.at(y, x, 2) = col.b;
          x0 = std::min(x0, x);
          y0 = std::min(y0, y);
          x1 = std::max(x1, x);
          y1 = std::max(y1, y);
        }
    if (x1 < 0) throw InternalError("generated instance has an empty mask");
    inst.bbox[0] = x0;
    inst.bbox[1] = y0;
    inst.bbox[2] = x1;
    inst.bbox[3] = y1;

    inst.expressions.push_back(make_direct_expression(pl.color, pl.shape));
    for (int k = 0; k < cfg.paraphrases; ++k)
      inst.expressions.push_back(make_paraphrase_expression(pl.color, pl.shape, k));

    if (n >= 2 && randprob() < cfg.colored_relational_prob) {
      int a = randint(0, n - 2);
      if (a >= i) ++a;
      inst.expressions.push_back(make_relational_expression(pl.shape, relation_of(pl, placements[a]),
                                                            placements[a].shape, pl.color, placements[a].color));
    }
    if (randprob() < cfg.geometric_relational_prob) {
      // uncolored relational form, emitted only when shape + relation to a
      // shape-unique anchor picks this instance unambiguously
      for (int a = 0; a < n; ++a) {
        if (a == i) continue;
        bool anchor_unique = true;
        for (int u = 0; u < n; ++u)
          if (u != a && placements[u].shape == placements[a].shape) anchor_unique = false;
        if (!anchor_unique) continue;
        const std::string rel = relation_of(pl, placements[a]);
        bool target_unique = true;
        for (int u = 0; u < n; ++u)
          if (u != i && u != a && placements[u].shape == pl.shape && relation_of(placements[u], placements[a]) == rel)
            target_unique = false;
        if (!target_unique) continue;
        inst.expressions.push_back(make_relational_expression(pl.shape, rel, placements[a].shape));
        break;
      }
    }
    scene.instances.push_back(std::move(inst));
  }
  return scene;
}

}  // namespace

Dataset generate_dataset(const GenerationConfig& config, uint64_t seed) {
  config.validate();
  Dataset ds;
  ds.scenes.reserve(static_cast<size_t>(config.num_scenes));
  for (int i = 0; i < config.num_scenes; ++i) ds.scenes.push_back(generate_scene(config, seed, i));
  return ds;
}

// --------------------------------------------------------------------------
// Persistence: scenes.jsonl + images/<scene_id>.bin (raw float32 tensors).
// --------------------------------------------------------------------------

namespace {

constexpr char kImageMagic[8] = {'R', 'S', 'I', 'M', 'G', '0', '0', '1'};

json expression_to_json(const Expression& e) {
  json tokens = json::array();
  for (const auto& t : e.parse.tokens) tokens.push_back(json::array({t.form, t.upos, t.head, t.deprel}));
  return json{{"text", e.text}, {"tokens", tokens}};
}

std::string scene_context(const json& rec) {
  if (rec.is_object() && rec.contains("scene_id") && rec["scene_id"].is_string())
    return "scene " + rec["scene_id"].get<std::string>();
  return "unidentified scene";
}

Expression expression_from_json(const json& j) {
  Expression e;
  e.text = j.at("text").get<std::string>();
  for (const auto& t : j.at("tokens")) {
    ParseToken pt;
    pt.form = t.at(0).get<std::string>();
    pt.upos = t.at(1).get<std::string>();
    pt.head = t.at(2).get<int>();
    pt.deprel = t.at(3).get<std::string>();
    e.parse.tokens.push_back(std::move(pt));
  }
  e.parse.validate();
  return e;
}

}  // namespace

void write_image_file(const Image& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ArgumentError("cannot open image file for writing: " + path);
  out.write(kImageMagic, 8);
  const uint32_t dims[3] = {static_cast<uint32_t>(img.h), static_cast<uint32_t>(img.w), 3};
  out.write(reinterpret_cast<const char*>(dims), sizeof dims);
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  if (!out) throw ArgumentError("failed writing image file: " + path);
}

Image read_image_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open image file: " + path);
  char magic[8];
  uint32_t dims[3];
  in.read(magic, 8);
  in.read(reinterpret_cast<char*>(dims), sizeof dims);
  if (!in || std::memcmp(magic, kImageMagic, 8) != 0) throw ParseError("bad image file header: " + path);
  Image img(static_cast<int>(dims[0]), static_cast<int>(dims[1]));
  if (dims[2] != 3) throw ParseError("image file must have 3 channels: " + path);
  in.read(reinterpret_cast<char*>(img.data.data()), static_cast<std::streamsize>(img.data.size() * sizeof(float)));
  if (!in) throw ParseError("truncated image file: " + path);
  return img;
}

void save_dataset(const Dataset& ds, const std::string& path) {
  fs::create_directories(fs::path(path) / "images");
  std::ofstream out(fs::path(path) / "scenes.jsonl");
  if (!out) throw ArgumentError("cannot open scenes.jsonl for writing under " + path);
  for (const auto& scene : ds.scenes) {
    json instances = json::array();
    for (const auto& inst : scene.instances) {
      json exprs = json::array();
      for (const auto& e : inst.expressions) exprs.push_back(expression_to_json(e));
      instances.push_back(json{{"object_key", inst.object_key},
                               {"color", inst.color},
                               {"shape", inst.shape},
                               {"bbox", {inst.bbox[0], inst.bbox[1], inst.bbox[2], inst.bbox[3]}},
                               {"mask", {{"size", {inst.mask.h, inst.mask.w}}, {"counts", rle_encode(inst.mask)}}},
                               {"expressions", exprs}});
    }
    json rec{{"scene_id", scene.scene_id},
             {"height", scene.image.h},
             {"width", scene.image.w},
             {"instances", instances}};
    out << rec.dump() << '\n';
    write_image_file(scene.image, (fs::path(path) / "images" / (scene.scene_id + ".bin")).string());
  }
  if (!out) throw ArgumentError("failed writing scenes.jsonl under " + path);
}

Dataset load_dataset(const std::string& path) {
  std::ifstream in(fs::path(path) / "scenes.jsonl");
  if (!in) throw ParseError("cannot open " + (fs::path(path) / "scenes.jsonl").string());
  Dataset ds;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::exception& e) {
      throw ParseError("scenes.jsonl line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      Scene scene;
      scene.scene_id = rec.at("scene_id").get<std::string>();
      const int h = rec.at("height").get<int>();
      const int w = rec.at("width").get<int>();
      for (const auto& ji : rec.at("instances")) {
        InstanceAnnotation inst;
        inst.object_key = ji.at("object_key").get<std::string>();
        inst.color = ji.at("color").get<int>();
        inst.shape = ji.at("shape").get<int>();
        for (int k = 0; k < 4; ++k) inst.bbox[k] = ji.at("bbox").at(k).get<int>();
        const auto& jm = ji.at("mask");
        inst.mask = rle_decode(jm.at("size").at(0).get<int>(), jm.at("size").at(1).get<int>(),
                               jm.at("counts").get<std::vector<uint32_t>>());
        if (inst.mask.h != h || inst.mask.w != w) throw ParseError("mask size does not match scene size");
        for (const auto& je : ji.at("expressions")) inst.expressions.push_back(expression_from_json(je));
        if (inst.expressions.empty()) throw ParseError("instance has no expressions");
        scene.instances.push_back(std::move(inst));
      }
      scene.image = read_image_file((fs::path(path) / "images" / (scene.scene_id + ".bin")).string());
      if (scene.image.h != h || scene.image.w != w) throw ParseError("image size does not match scene record");
      ds.scenes.push_back(std::move(scene));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception& e) {
      throw ParseError("scenes.jsonl line " + std::to_string(lineno) + " (" + scene_context(rec) + "): " + e.what());
    }
  }
  return ds;
}

}  // namespace refseg
