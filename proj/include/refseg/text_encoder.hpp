#pragma once

#include <algorithm>
#include <cctype>
#include <string>
#include <unordered_map>
#include <vector>

#include "refseg/nn.hpp"
#include "refseg/palette.hpp"
#include "refseg/parse.hpp"

namespace refseg {

/// Closed vocabulary over the template lexicon; id 0 is the reserved <unk>.
struct Vocabulary {
  std::vector<std::string> words;
  std::unordered_map<std::string, int> ids;

  static Vocabulary standard() {
    Vocabulary v;
    v.words = template_lexicon();
    for (size_t i = 0; i < v.words.size(); ++i) v.ids.emplace(v.words[i], static_cast<int>(i));
    return v;
  }

  int id(std::string w) const {
    std::transform(w.begin(), w.end(), w.begin(), [](unsigned char c) { return std::tolower(c); });
    auto it = ids.find(w);
    return it == ids.end() ? 0 : it->second;
  }

  std::vector<int> tokenize(const DependencyParse& parse) const {
    std::vector<int> out;
    out.reserve(parse.tokens.size());
    for (const auto& t : parse.tokens) out.push_back(id(t.form));
    return out;
  }

  int size() const { return static_cast<int>(words.size()); }
};

template <typename S>
void register_text_encoder(ParamSet<S>& ps, int vocab_size, int c) {
  ps.add("text.embed", vocab_size, c, Init::Embedding);
  register_mha(ps, "text.attn", c);
}

/// Word-level text features: embedding lookup followed by one residual
/// self-attention block. L x C, differentiable in the embedding table and
/// the attention parameters.
template <typename S>
Var<S> encode_text(Ctx<S>& ctx, int heads, const std::vector<int>& token_ids) {
  if (token_ids.empty()) throw ArgumentError("encode_text: empty token sequence");
  Var<S> table = ctx.p("text.embed");
  Var<S> e = gather_rows(table, std::vector<int>(token_ids.begin(), token_ids.end()));
  return add(e, mha(ctx, "text.attn", heads, e, e, e));
}

}  // namespace refseg
