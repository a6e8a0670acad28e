#include "refseg/parse.hpp"

#include <algorithm>
#include <deque>
#include <sstream>

#include "refseg/errors.hpp"

namespace refseg {

void DependencyParse::validate() const {
  if (tokens.empty()) throw ParseError("parse has no tokens");
  const int n = static_cast<int>(tokens.size());
  int roots = 0;
  for (const auto& t : tokens) {
    if (t.head < 0 || t.head > n) throw ParseError("head index out of range for token '" + t.form + "'");
    if (t.head == 0) ++roots;
  }
  if (roots != 1) throw ParseError("parse must have exactly one root, found " + std::to_string(roots));
  // cycle check: follow heads from every token; must reach ROOT within n steps
  for (int i = 0; i < n; ++i) {
    int cur = i, steps = 0;
    while (tokens[cur].head != 0) {
      cur = tokens[cur].head - 1;
      if (++steps > n) throw ParseError("cyclic parse at token '" + tokens[i].form + "'");
    }
  }
}

int DependencyParse::root() const {
  for (size_t i = 0; i < tokens.size(); ++i)
    if (tokens[i].head == 0) return static_cast<int>(i);
  throw ParseError("parse has no root");
}

std::string DependencyParse::text() const {
  std::string s;
  for (size_t i = 0; i < tokens.size(); ++i) {
    if (i) s += ' ';
    s += tokens[i].form;
  }
  return s;
}

namespace {

bool is_noun(const ParseToken& t) { return t.upos == "NOUN" || t.upos == "PROPN"; }

bool np_deprel(const std::string& rel) {
  return rel == "det" || rel == "amod" || rel == "compound" || rel == "nummod";
}

// Noun phrase of token i: the token plus contiguous left dependents attached
// to it with determiner/modifier relations. Never extends right of the noun.
std::string noun_phrase(const DependencyParse& p, int i) {
  int start = i;
  for (int j = i - 1; j >= 0; --j) {
    if (p.tokens[j].head == i + 1 && np_deprel(p.tokens[j].deprel))
      start = j;
    else
      break;
  }
  std::string s;
  for (int j = start; j <= i; ++j) {
    if (j > start) s += ' ';
    s += p.tokens[j].form;
  }
  return s;
}

}  // namespace

MainObjectResult extract_main_object(const DependencyParse& parse) {
  parse.validate();
  const int n = static_cast<int>(parse.tokens.size());
  std::vector<std::vector<int>> children(n);
  for (int i = 0; i < n; ++i)
    if (parse.tokens[i].head != 0) children[parse.tokens[i].head - 1].push_back(i);
  // children are in surface order already (built by ascending index)

  std::deque<int> queue{parse.root()};
  while (!queue.empty()) {
    const int i = queue.front();
    queue.pop_front();
    if (is_noun(parse.tokens[i])) return {noun_phrase(parse, i), false};
    for (int c : children[i]) queue.push_back(c);
  }
  return {parse.text(), true};
}

std::string build_prompt(const std::string& object_phrase) {
  if (object_phrase.empty()) throw ArgumentError("build_prompt: empty object phrase");
  return "A Photo of " + object_phrase;
}

std::vector<DependencyParse> read_conllu(std::istream& in) {
  std::vector<DependencyParse> out;
  DependencyParse cur;
  std::string line;
  int lineno = 0;
  auto flush = [&] {
    if (!cur.tokens.empty()) {
      cur.validate();
      out.push_back(std::move(cur));
      cur = DependencyParse{};
    }
  };
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) {
      flush();
      continue;
    }
    if (line[0] == '#') continue;
    std::istringstream ls(line);
    std::string idx, form, upos, head, deprel;
    if (!std::getline(ls, idx, '\t') || !std::getline(ls, form, '\t') || !std::getline(ls, upos, '\t') ||
        !std::getline(ls, head, '\t') || !std::getline(ls, deprel, '\t'))
      throw ParseError("line " + std::to_string(lineno) + ": expected 5 tab-separated fields");
    ParseToken t;
    t.form = form;
    t.upos = upos;
    try {
      t.head = std::stoi(head);
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(lineno) + ": bad head index '" + head + "'");
    }
    t.deprel = deprel;
    const int expected = static_cast<int>(cur.tokens.size()) + 1;
    try {
      if (std::stoi(idx) != expected)
        throw ParseError("line " + std::to_string(lineno) + ": token index " + idx + ", expected " +
                         std::to_string(expected));
    } catch (const ParseError&) {
      throw;
    } catch (const std::exception&) {
      throw ParseError("line " + std::to_string(lineno) + ": bad token index '" + idx + "'");
    }
    cur.tokens.push_back(std::move(t));
  }
  flush();
  return out;
}

}  // namespace refseg
