#include "refseg/palette.hpp"

#include <cmath>

namespace refseg {

const std::vector<PaletteColor>& palette_colors() {
  static const std::vector<PaletteColor> colors = {
      {"red", "crimson", 1.0f, 0.0f, 0.0f},    {"green", "emerald", 0.0f, 0.8f, 0.0f},
      {"blue", "azure", 0.0f, 0.0f, 1.0f},     {"yellow", "golden", 1.0f, 1.0f, 0.0f},
      {"magenta", "pink", 1.0f, 0.0f, 1.0f},   {"cyan", "teal", 0.0f, 1.0f, 1.0f},
      {"orange", "amber", 1.0f, 0.55f, 0.0f},  {"purple", "violet", 0.6f, 0.0f, 0.8f},
  };
  return colors;
}

const std::vector<PaletteShape>& palette_shapes() {
  static const std::vector<PaletteShape> shapes = {
      {"circle", "round"},
      {"square", "boxy"},
      {"triangle", "pointed"},
  };
  return shapes;
}

int color_index(const std::string& word) {
  const auto& cs = palette_colors();
  for (size_t i = 0; i < cs.size(); ++i)
    if (word == cs[i].name || word == cs[i].synonym) return static_cast<int>(i);
  return -1;
}

int shape_index(const std::string& word) {
  const auto& ss = palette_shapes();
  for (size_t i = 0; i < ss.size(); ++i)
    if (word == ss[i].name || word == ss[i].synonym) return static_cast<int>(i);
  return -1;
}

int classify_pixel(float r, float g, float b) {
  const auto& cs = palette_colors();
  for (size_t i = 0; i < cs.size(); ++i) {
    if (std::fabs(r - cs[i].r) <= kColorTolerance && std::fabs(g - cs[i].g) <= kColorTolerance &&
        std::fabs(b - cs[i].b) <= kColorTolerance)
      return static_cast<int>(i);
  }
  return -1;
}

const std::vector<std::string>& template_lexicon() {
  static const std::vector<std::string> lex = [] {
    std::vector<std::string> v = {"<unk>"};
    for (const auto& c : palette_colors()) {
      v.push_back(c.name);
      v.push_back(c.synonym);
    }
    for (const auto& s : palette_shapes()) {
      v.push_back(s.name);
      v.push_back(s.synonym);
    }
    const char* function_words[] = {"the", "a",     "of",    "shape", "object", "left",
                                    "right", "above", "below", "photo"};
    for (const char* w : function_words) v.push_back(w);
    return v;
  }();
  return lex;
}

}  // namespace refseg
