#pragma once

#include <istream>
#include <string>
#include <vector>

namespace refseg {

struct ParseToken {
  std::string form;
  std::string upos;
  int head = 0;  // 1-based index of head token, 0 = ROOT
  std::string deprel;
};

/// A dependency parse of one expression. Exactly one token has head 0.
struct DependencyParse {
  std::vector<ParseToken> tokens;

  /// Throws ParseError on multiple/missing roots, out-of-range heads, cycles.
  void validate() const;
  /// Index of the root token; assumes a validated parse.
  int root() const;
  /// Tokens joined with single spaces.
  std::string text() const;
};

struct MainObjectResult {
  std::string phrase;
  bool rolled_back = false;
};

/// Main-object extraction. If the root is a noun, returns its noun phrase
/// (the noun plus contiguous left dependents with deprel det/amod/compound/
/// nummod). Otherwise walks the tree breadth-first (children in surface
/// order) for the first noun. When no noun exists anywhere the whole
/// sentence is returned with rolled_back set.
MainObjectResult extract_main_object(const DependencyParse& parse);

/// "A Photo of " + phrase. Throws ArgumentError on an empty phrase.
std::string build_prompt(const std::string& object_phrase);

/// Read CoNLL-U-like TSV blocks (index, form, UPOS, head, deprel), one
/// sentence per blank-line-separated block.
std::vector<DependencyParse> read_conllu(std::istream& in);

}  // namespace refseg
