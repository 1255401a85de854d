#pragma once

#include "systemf/syntax.hpp"

namespace systemf {

// Tree positions in types. Arrow: 0 = domain, 1 = codomain. Forall: 0 = body.
using TypePath = std::vector<int>;

// No quantifier anywhere in the type may be vacuous.
inline bool is_proper(const TypePtr& t) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::FVar:
    case TypeKind::OConst:
    case TypeKind::MVar:
      return true;
    case TypeKind::Arrow:
      return is_proper(t->lhs) && is_proper(t->rhs);
    case TypeKind::Forall:
      return type_mentions_bvar(t->lhs, 0) && is_proper(t->lhs);
  }
  return false;
}

// ---------------------------------------------------------------------------
// The two polarity classes, defined together:
//   - a variable (or O) belongs to both;
//   - A -> B is positive when A is negative and B positive, and negative when
//     A is positive and B negative;
//   - forall X. B is positive when B is positive and X occurs in B; it is
//     never negative.
//
// The report records which quantifier occurrences stood in the way of the
// positive class: quantifiers required to sit in the negative class, and
// vacuous quantifiers in positive position.
// ---------------------------------------------------------------------------

struct PolarityReport {
  bool in_positive = false;
  bool in_negative = false;
  std::set<TypePath> negative_quantifier_paths;
};

namespace detail {

inline bool polarity_scan(const TypePtr& t, bool positive, TypePath& path,
                          std::set<TypePath>* obstructions) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::FVar:
    case TypeKind::OConst:
      return true;
    case TypeKind::Arrow: {
      path.push_back(0);
      bool l = polarity_scan(t->lhs, !positive, path, obstructions);
      path.back() = 1;
      bool r = polarity_scan(t->rhs, positive, path, obstructions);
      path.pop_back();
      return l && r;
    }
    case TypeKind::Forall: {
      bool ok = positive && type_mentions_bvar(t->lhs, 0);
      if (!ok && obstructions) obstructions->insert(path);
      path.push_back(0);
      bool body = polarity_scan(t->lhs, positive, path, obstructions);
      path.pop_back();
      return ok && body;
    }
  }
  return false;
}

} // namespace detail

inline bool in_positive_class(const TypePtr& t) {
  TypePath path;
  return detail::polarity_scan(t, true, path, nullptr);
}

inline bool in_negative_class(const TypePtr& t) {
  TypePath path;
  return detail::polarity_scan(t, false, path, nullptr);
}

inline PolarityReport polarity(const TypePtr& t) {
  PolarityReport rep;
  TypePath path;
  rep.in_positive = detail::polarity_scan(t, true, path, &rep.negative_quantifier_paths);
  rep.in_negative = in_negative_class(t);
  return rep;
}

// ---------------------------------------------------------------------------
// Quantifier erasure: rename bound variables pairwise distinct (and apart
// from the free ones), then drop every quantifier.
// ---------------------------------------------------------------------------

namespace detail {

inline TypePtr erase_quantifiers_walk(const TypePtr& t, std::set<std::string>& taken) {
  switch (t->kind) {
    case TypeKind::BVar:
      throw std::logic_error("erase_quantifiers: dangling bound variable");
    case TypeKind::FVar:
    case TypeKind::OConst:
      return t;
    case TypeKind::Arrow: {
      TypePtr l = erase_quantifiers_walk(t->lhs, taken);
      TypePtr r = erase_quantifiers_walk(t->rhs, taken);
      return arrow(l, r);
    }
    case TypeKind::Forall: {
      std::string name = freshen(t->name.empty() ? "X" : t->name, taken);
      taken.insert(name);
      return erase_quantifiers_walk(forall_open(t, tvar(name)), taken);
    }
  }
  throw std::logic_error("erase_quantifiers: bad kind");
}

} // namespace detail

inline TypePtr erase_quantifiers(const TypePtr& t) {
  std::set<std::string> taken = free_type_vars(t);
  return detail::erase_quantifiers_walk(t, taken);
}

} // namespace systemf
