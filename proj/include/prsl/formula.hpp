#pragma once

#include <cstddef>
#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "prsl/core.hpp"

namespace prsl {

// ---------------------------------------------------------------------------
// Propositional formula over (label, category) atoms.
//
// Grammar (tightest binding first): ! / NOT, & / AND, | / OR, ->, <->.
// Implication is right-associative, conjunction/disjunction left-associative;
// biconditional chains associate to the right (the connective is associative,
// so the grouping does not change semantics). ASCII and Unicode spellings
// (¬ ∧ ∨ → ↔) are both accepted. Atoms are `Label=category`, or a bare
// category name when it is unique across all labels.
// ---------------------------------------------------------------------------

struct Formula {
  enum class Kind { Atom, Not, And, Or, Implies, Iff };

  Kind kind = Kind::Atom;
  std::size_t label = 0;     // Atom: label index into the model's label list
  std::size_t category = 0;  // Atom: category index within that label
  std::vector<Formula> children;

  static Formula atom(std::size_t label, std::size_t category) {
    Formula f;
    f.kind = Kind::Atom;
    f.label = label;
    f.category = category;
    return f;
  }
  static Formula make(Kind kind, Formula lhs, Formula rhs) {
    Formula f;
    f.kind = kind;
    f.children.push_back(std::move(lhs));
    f.children.push_back(std::move(rhs));
    return f;
  }
  static Formula negate(Formula inner) {
    Formula f;
    f.kind = Kind::Not;
    f.children.push_back(std::move(inner));
    return f;
  }

  bool operator==(const Formula&) const = default;
};

// Labels mentioned anywhere in the formula.
inline void collect_labels(const Formula& f, std::set<std::size_t>& out) {
  if (f.kind == Formula::Kind::Atom) {
    out.insert(f.label);
    return;
  }
  for (const auto& c : f.children) collect_labels(c, out);
}

inline std::set<std::size_t> formula_scope(const Formula& f) {
  std::set<std::size_t> s;
  collect_labels(f, s);
  return s;
}

// ---------------------------------------------------------------------------
// Evaluation under a complete assignment of the formula's labels
// (assignment[j] = category index of label j; labels outside the formula's
// scope are ignored).
// ---------------------------------------------------------------------------

inline bool eval_formula(const Formula& f, std::span<const std::size_t> assignment) {
  switch (f.kind) {
    case Formula::Kind::Atom:
      if (f.label >= assignment.size())
        throw ValidationError("formula references label index " + std::to_string(f.label) +
                              " outside the assignment");
      return assignment[f.label] == f.category;
    case Formula::Kind::Not:
      return !eval_formula(f.children[0], assignment);
    case Formula::Kind::And:
      return eval_formula(f.children[0], assignment) && eval_formula(f.children[1], assignment);
    case Formula::Kind::Or:
      return eval_formula(f.children[0], assignment) || eval_formula(f.children[1], assignment);
    case Formula::Kind::Implies:
      return !eval_formula(f.children[0], assignment) || eval_formula(f.children[1], assignment);
    case Formula::Kind::Iff:
      return eval_formula(f.children[0], assignment) == eval_formula(f.children[1], assignment);
  }
  throw NumericError("unreachable formula kind");
}

// Name-keyed convenience form; every label in the formula must be present.
inline bool eval_formula(const Formula& f, const std::map<std::string, std::string>& assignment,
                         std::span<const LabelSpec> labels) {
  std::vector<std::size_t> idx(labels.size(), 0);
  for (std::size_t j : formula_scope(f)) {
    const auto it = assignment.find(labels[j].name);
    if (it == assignment.end())
      throw ValidationError("assignment misses label '" + labels[j].name + "'");
    const auto m = labels[j].category_index(it->second);
    if (!m)
      throw ValidationError("'" + it->second + "' is not a category of label '" +
                            labels[j].name + "'");
    idx[j] = *m;
  }
  return eval_formula(f, idx);
}

// ---------------------------------------------------------------------------
// A probabilistic rule: formula phi holds with probability p, so the rule
// variable has P(R=1|l) = p when l satisfies phi and 1-p otherwise.
// ---------------------------------------------------------------------------

struct FormulaRule {
  Formula expr;
  double p = 1.0;
  std::string text;  // original source text, kept for round-trip serialization
};

inline double rule_prob_formula(const FormulaRule& rule, std::span<const std::size_t> assignment) {
  return eval_formula(rule.expr, assignment) ? rule.p : 1.0 - rule.p;
}

// ---------------------------------------------------------------------------
// Parser.
// ---------------------------------------------------------------------------

namespace formula_detail {

enum class Tok { Ident, Not, And, Or, Implies, Iff, Eq, LParen, RParen, End };

struct Token {
  Tok kind;
  std::string text;
  std::size_t pos;
};

class Lexer {
 public:
  explicit Lexer(std::string_view src) : src_(src) {}

  Token next() {
    while (pos_ < src_.size() && std::isspace(static_cast<unsigned char>(src_[pos_]))) ++pos_;
    const std::size_t start = pos_;
    if (pos_ >= src_.size()) return {Tok::End, "", start};

    const auto starts_with = [&](std::string_view s) {
      return src_.substr(pos_).substr(0, s.size()) == s;
    };
    struct Fixed { std::string_view text; Tok kind; };
    // Longest operators first so "<->" wins over "<" garbage and "->".
    static constexpr Fixed fixed[] = {
        {"<->", Tok::Iff},  {"↔", Tok::Iff},     // <->, ↔
        {"->", Tok::Implies}, {"→", Tok::Implies},  // ->, →
        {"!", Tok::Not},    {"¬", Tok::Not},     // !, ¬
        {"&", Tok::And},    {"∧", Tok::And},     // &, ∧
        {"|", Tok::Or},     {"∨", Tok::Or},      // |, ∨
        {"=", Tok::Eq},     {"(", Tok::LParen},       {")", Tok::RParen},
    };
    for (const auto& f : fixed) {
      if (starts_with(f.text)) {
        pos_ += f.text.size();
        return {f.kind, std::string(f.text), start};
      }
    }
    if (is_ident_char(src_[pos_])) {
      while (pos_ < src_.size() && is_ident_char(src_[pos_])) ++pos_;
      return {Tok::Ident, std::string(src_.substr(start, pos_ - start)), start};
    }
    throw ParseError("formula: unexpected character '" + std::string(1, src_[pos_]) +
                     "' at position " + std::to_string(start));
  }

 private:
  static bool is_ident_char(char c) {
    return std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.' || c == '-';
  }

  std::string_view src_;
  std::size_t pos_ = 0;
};

class Parser {
 public:
  Parser(std::string_view src, std::span<const LabelSpec> labels)
      : lexer_(src), labels_(labels) {
    advance();
  }

  Formula parse() {
    Formula f = parse_iff();
    expect(Tok::End, "end of formula");
    return f;
  }

 private:
  void advance() { cur_ = lexer_.next(); }

  void expect(Tok kind, const std::string& what) {
    if (cur_.kind != kind)
      throw ParseError("formula: expected " + what + " at position " + std::to_string(cur_.pos) +
                       (cur_.text.empty() ? "" : " (found '" + cur_.text + "')"));
  }

  Formula parse_iff() {
    Formula lhs = parse_implies();
    if (cur_.kind == Tok::Iff) {
      advance();
      return Formula::make(Formula::Kind::Iff, std::move(lhs), parse_iff());
    }
    return lhs;
  }

  Formula parse_implies() {
    Formula lhs = parse_or();
    if (cur_.kind == Tok::Implies) {
      advance();
      return Formula::make(Formula::Kind::Implies, std::move(lhs), parse_implies());
    }
    return lhs;
  }

  Formula parse_or() {
    Formula lhs = parse_and();
    while (cur_.kind == Tok::Or) {
      advance();
      lhs = Formula::make(Formula::Kind::Or, std::move(lhs), parse_and());
    }
    return lhs;
  }

  Formula parse_and() {
    Formula lhs = parse_unary();
    while (cur_.kind == Tok::And) {
      advance();
      lhs = Formula::make(Formula::Kind::And, std::move(lhs), parse_unary());
    }
    return lhs;
  }

  Formula parse_unary() {
    if (cur_.kind == Tok::Not) {
      advance();
      return Formula::negate(parse_unary());
    }
    return parse_primary();
  }

  Formula parse_primary() {
    if (cur_.kind == Tok::LParen) {
      advance();
      Formula f = parse_iff();
      expect(Tok::RParen, "')'");
      advance();
      return f;
    }
    expect(Tok::Ident, "an atom or '('");
    const std::string first = cur_.text;
    const std::size_t pos = cur_.pos;
    advance();
    if (cur_.kind == Tok::Eq) {
      advance();
      expect(Tok::Ident, "a category name after '='");
      const std::string cat = cur_.text;
      advance();
      return resolve_qualified(first, cat, pos);
    }
    return resolve_bare(first, pos);
  }

  Formula resolve_qualified(const std::string& label, const std::string& category,
                            std::size_t pos) {
    for (std::size_t j = 0; j < labels_.size(); ++j) {
      if (labels_[j].name != label) continue;
      if (const auto m = labels_[j].category_index(category)) return Formula::atom(j, *m);
      throw ParseError("formula: '" + category + "' is not a category of label '" + label +
                       "' (position " + std::to_string(pos) + ")");
    }
    throw ParseError("formula: unknown label '" + label + "' (position " + std::to_string(pos) +
                     ")");
  }

  Formula resolve_bare(const std::string& category, std::size_t pos) {
    std::vector<std::pair<std::size_t, std::size_t>> hits;
    for (std::size_t j = 0; j < labels_.size(); ++j)
      if (const auto m = labels_[j].category_index(category)) hits.emplace_back(j, *m);
    if (hits.empty())
      throw ParseError("formula: '" + category +
                       "' matches no category of any label (position " + std::to_string(pos) +
                       ")");
    if (hits.size() > 1)
      throw ParseError("formula: bare category '" + category +
                       "' is ambiguous; qualify it as Label=" + category + " (position " +
                       std::to_string(pos) + ")");
    return Formula::atom(hits[0].first, hits[0].second);
  }

  Lexer lexer_;
  Token cur_;
  std::span<const LabelSpec> labels_;
};

inline int precedence(Formula::Kind k) {
  switch (k) {
    case Formula::Kind::Atom: return 5;
    case Formula::Kind::Not: return 4;
    case Formula::Kind::And: return 3;
    case Formula::Kind::Or: return 2;
    case Formula::Kind::Implies: return 1;
    case Formula::Kind::Iff: return 0;
  }
  return 0;
}

inline void print_rec(const Formula& f, std::span<const LabelSpec> labels, int parent_prec,
                      bool left_operand, std::string& out) {
  const int prec = precedence(f.kind);
  // Parenthesize when binding looser than context, or equally tight on the
  // side the operator does not associate towards.
  const bool wrap =
      f.kind != Formula::Kind::Atom && f.kind != Formula::Kind::Not &&
      (prec < parent_prec ||
       (prec == parent_prec &&
        (((f.kind == Formula::Kind::Implies || f.kind == Formula::Kind::Iff) && left_operand) ||
         ((f.kind == Formula::Kind::And || f.kind == Formula::Kind::Or) && !left_operand))));
  if (wrap) out += '(';
  switch (f.kind) {
    case Formula::Kind::Atom: {
      const auto& spec = labels[f.label];
      // Bare form only when unambiguous across the whole label set.
      const std::string& cat = spec.categories[f.category];
      std::size_t owners = 0;
      for (const auto& l : labels) owners += l.category_index(cat).has_value();
      if (owners == 1) {
        out += cat;
      } else {
        out += spec.name;
        out += '=';
        out += cat;
      }
      break;
    }
    case Formula::Kind::Not:
      out += '!';
      print_rec(f.children[0], labels, precedence(Formula::Kind::Not), false, out);
      break;
    case Formula::Kind::And:
    case Formula::Kind::Or:
    case Formula::Kind::Implies:
    case Formula::Kind::Iff: {
      const char* op = f.kind == Formula::Kind::And       ? " & "
                       : f.kind == Formula::Kind::Or      ? " | "
                       : f.kind == Formula::Kind::Implies ? " -> "
                                                          : " <-> ";
      print_rec(f.children[0], labels, prec, true, out);
      out += op;
      print_rec(f.children[1], labels, prec, false, out);
      break;
    }
  }
  if (wrap) out += ')';
}

}  // namespace formula_detail

inline Formula parse_formula(std::string_view text, std::span<const LabelSpec> labels) {
  if (labels.empty()) throw ParseError("formula: cannot parse without labels");
  return formula_detail::Parser(text, labels).parse();
}

inline std::string print_formula(const Formula& f, std::span<const LabelSpec> labels) {
  std::string out;
  formula_detail::print_rec(f, labels, -1, false, out);
  return out;
}

}  // namespace prsl
