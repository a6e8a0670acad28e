#pragma once

#include <array>
#include <string>
#include <vector>

namespace refseg {

// Fixed named palette shared by the scene generator, the mock embedding
// backend and the text vocabulary. Each color/shape carries one synonym used
// by paraphrase templates; the backend maps a synonym onto the same
// embedding direction as its canonical word.

struct PaletteColor {
  std::string name;
  std::string synonym;
  float r, g, b;
};

struct PaletteShape {
  std::string name;
  std::string synonym;
};

const std::vector<PaletteColor>& palette_colors();
const std::vector<PaletteShape>& palette_shapes();

/// Canonical color index for a word (name or synonym), -1 if unknown.
int color_index(const std::string& word);
/// Canonical shape index for a word (name or synonym), -1 if unknown.
int shape_index(const std::string& word);

/// Background gray level used by the generator; not close to any palette color.
inline constexpr float kBackgroundLevel = 0.08f;

/// L-inf tolerance for classifying a pixel as a palette color.
inline constexpr float kColorTolerance = 0.1f;

/// Classify an RGB pixel against the palette, -1 for background/unknown.
int classify_pixel(float r, float g, float b);

/// Full closed vocabulary of all words the expression templates can emit,
/// including color/shape synonyms and function words. Index 0 is "<unk>".
const std::vector<std::string>& template_lexicon();

}  // namespace refseg
