#pragma once

#include <algorithm>
#include <cstdint>
#include <memory>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace systemf {

// ---------------------------------------------------------------------------
// Types.
//
// Locally nameless: bound type variables are de Bruijn indices, free ones are
// names. Forall keeps the original binder name as a printing hint only; it
// plays no role in equality.
// ---------------------------------------------------------------------------

struct TypeExpr;
using TypePtr = std::shared_ptr<const TypeExpr>;

enum class TypeKind { BVar, FVar, Arrow, Forall, OConst, MVar };

struct TypeExpr {
  TypeKind kind;
  int index = -1;     // BVar
  std::string name;   // FVar name, Forall hint
  TypePtr lhs, rhs;   // Arrow: domain, codomain; Forall: body in lhs
};

inline TypePtr tbvar(int i) {
  return std::make_shared<TypeExpr>(TypeExpr{TypeKind::BVar, i, "", nullptr, nullptr});
}
inline TypePtr tvar(const std::string& name) {
  return std::make_shared<TypeExpr>(TypeExpr{TypeKind::FVar, -1, name, nullptr, nullptr});
}
inline TypePtr arrow(TypePtr dom, TypePtr cod) {
  return std::make_shared<TypeExpr>(TypeExpr{TypeKind::Arrow, -1, "", std::move(dom), std::move(cod)});
}
inline TypePtr oconst() {
  return std::make_shared<TypeExpr>(TypeExpr{TypeKind::OConst, -1, "", nullptr, nullptr});
}
inline TypePtr forall_raw(const std::string& hint, TypePtr body) {
  return std::make_shared<TypeExpr>(TypeExpr{TypeKind::Forall, -1, hint, std::move(body), nullptr});
}
// Solver metavariable; appears only inside derivation search, never in results.
inline TypePtr tmvar(int i) {
  return std::make_shared<TypeExpr>(TypeExpr{TypeKind::MVar, i, "", nullptr, nullptr});
}

// Replaces FVar(name) by BVar(depth) throughout.
inline TypePtr type_abstract(const TypePtr& t, const std::string& name, int depth = 0) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::OConst:
    case TypeKind::MVar:
      return t;
    case TypeKind::FVar:
      return t->name == name ? tbvar(depth) : t;
    case TypeKind::Arrow:
      return arrow(type_abstract(t->lhs, name, depth), type_abstract(t->rhs, name, depth));
    case TypeKind::Forall:
      return forall_raw(t->name, type_abstract(t->lhs, name, depth + 1));
  }
  throw std::logic_error("type_abstract: bad kind");
}

// Replaces BVar(depth) by rep throughout (used to open a Forall body).
inline TypePtr type_fill(const TypePtr& t, const TypePtr& rep, int depth = 0) {
  switch (t->kind) {
    case TypeKind::BVar:
      return t->index == depth ? rep : t;
    case TypeKind::FVar:
    case TypeKind::OConst:
    case TypeKind::MVar:
      return t;
    case TypeKind::Arrow:
      return arrow(type_fill(t->lhs, rep, depth), type_fill(t->rhs, rep, depth));
    case TypeKind::Forall:
      return forall_raw(t->name, type_fill(t->lhs, rep, depth + 1));
  }
  throw std::logic_error("type_fill: bad kind");
}

// forall name. body, where body mentions the variable by name.
inline TypePtr forall(const std::string& name, const TypePtr& body) {
  return forall_raw(name, type_abstract(body, name));
}

// Body of a Forall with its binder instantiated to rep.
inline TypePtr forall_open(const TypePtr& fa, const TypePtr& rep) {
  if (fa->kind != TypeKind::Forall) throw std::invalid_argument("forall_open: not a forall");
  return type_fill(fa->lhs, rep);
}

inline bool type_equal(const TypePtr& a, const TypePtr& b) {
  if (a.get() == b.get()) return true;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case TypeKind::BVar: return a->index == b->index;
    case TypeKind::FVar: return a->name == b->name;
    case TypeKind::OConst: return true;
    case TypeKind::MVar: return a->index == b->index;
    case TypeKind::Arrow:
      return type_equal(a->lhs, b->lhs) && type_equal(a->rhs, b->rhs);
    case TypeKind::Forall:
      return type_equal(a->lhs, b->lhs);
  }
  return false;
}

// Total order on types up to alpha (hints ignored), for canonical listings.
inline int type_compare(const TypePtr& a, const TypePtr& b) {
  auto rank = [](TypeKind k) {
    switch (k) {
      case TypeKind::BVar: return 0;
      case TypeKind::FVar: return 1;
      case TypeKind::OConst: return 2;
      case TypeKind::Arrow: return 3;
      case TypeKind::Forall: return 4;
      case TypeKind::MVar: return 5;
    }
    return 6;
  };
  if (rank(a->kind) != rank(b->kind)) return rank(a->kind) < rank(b->kind) ? -1 : 1;
  switch (a->kind) {
    case TypeKind::BVar:
      return a->index == b->index ? 0 : (a->index < b->index ? -1 : 1);
    case TypeKind::FVar: {
      int c = a->name.compare(b->name);
      return c < 0 ? -1 : (c == 0 ? 0 : 1);
    }
    case TypeKind::OConst:
      return 0;
    case TypeKind::MVar:
      return a->index == b->index ? 0 : (a->index < b->index ? -1 : 1);
    case TypeKind::Arrow: {
      int c = type_compare(a->lhs, b->lhs);
      return c != 0 ? c : type_compare(a->rhs, b->rhs);
    }
    case TypeKind::Forall:
      return type_compare(a->lhs, b->lhs);
  }
  return 0;
}

inline void free_type_vars_into(const TypePtr& t, std::set<std::string>& out) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::OConst:
      return;
    case TypeKind::FVar:
      out.insert(t->name);
      return;
    case TypeKind::Arrow:
      free_type_vars_into(t->lhs, out);
      free_type_vars_into(t->rhs, out);
      return;
    case TypeKind::Forall:
      free_type_vars_into(t->lhs, out);
      return;
  }
}

inline std::set<std::string> free_type_vars(const TypePtr& t) {
  std::set<std::string> out;
  free_type_vars_into(t, out);
  return out;
}

inline bool type_mentions_fvar(const TypePtr& t, const std::string& name) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::OConst:
      return false;
    case TypeKind::FVar:
      return t->name == name;
    case TypeKind::Arrow:
      return type_mentions_fvar(t->lhs, name) || type_mentions_fvar(t->rhs, name);
    case TypeKind::Forall:
      return type_mentions_fvar(t->lhs, name);
  }
  return false;
}

inline bool type_mentions_bvar(const TypePtr& t, int depth = 0) {
  switch (t->kind) {
    case TypeKind::BVar:
      return t->index == depth;
    case TypeKind::FVar:
    case TypeKind::OConst:
      return false;
    case TypeKind::Arrow:
      return type_mentions_bvar(t->lhs, depth) || type_mentions_bvar(t->rhs, depth);
    case TypeKind::Forall:
      return type_mentions_bvar(t->lhs, depth + 1);
  }
  return false;
}

inline bool type_mentions_oconst(const TypePtr& t) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::FVar:
      return false;
    case TypeKind::OConst:
      return true;
    case TypeKind::Arrow:
      return type_mentions_oconst(t->lhs) || type_mentions_oconst(t->rhs);
    case TypeKind::Forall:
      return type_mentions_oconst(t->lhs);
  }
  return false;
}

inline bool type_has_mvar(const TypePtr& t) {
  switch (t->kind) {
    case TypeKind::MVar:
      return true;
    case TypeKind::Arrow:
      return type_has_mvar(t->lhs) || type_has_mvar(t->rhs);
    case TypeKind::Forall:
      return type_has_mvar(t->lhs);
    default:
      return false;
  }
}

inline bool type_is_closed(const TypePtr& t) { return free_type_vars(t).empty(); }

// Capture-avoiding [rep/name]t.
inline TypePtr type_subst(const TypePtr& t, const std::string& name, const TypePtr& rep) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::OConst:
    case TypeKind::MVar:
      return t;
    case TypeKind::FVar:
      return t->name == name ? rep : t;
    case TypeKind::Arrow:
      return arrow(type_subst(t->lhs, name, rep), type_subst(t->rhs, name, rep));
    case TypeKind::Forall:
      return forall_raw(t->name, type_subst(t->lhs, name, rep));
  }
  throw std::logic_error("type_subst: bad kind");
}

inline TypePtr type_rename_oconst(const TypePtr& t, const TypePtr& rep) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::FVar:
    case TypeKind::MVar:
      return t;
    case TypeKind::OConst:
      return rep;
    case TypeKind::Arrow:
      return arrow(type_rename_oconst(t->lhs, rep), type_rename_oconst(t->rhs, rep));
    case TypeKind::Forall:
      return forall_raw(t->name, type_rename_oconst(t->lhs, rep));
  }
  throw std::logic_error("type_rename_oconst: bad kind");
}

// Number of -> and forall connectives; variables and O count 0.
inline int type_connectives(const TypePtr& t) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::FVar:
    case TypeKind::OConst:
      return 0;
    case TypeKind::Arrow:
      return 1 + type_connectives(t->lhs) + type_connectives(t->rhs);
    case TypeKind::Forall:
      return 1 + type_connectives(t->lhs);
  }
  return 0;
}

inline int quantifier_count(const TypePtr& t) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::FVar:
    case TypeKind::OConst:
      return 0;
    case TypeKind::Arrow:
      return quantifier_count(t->lhs) + quantifier_count(t->rhs);
    case TypeKind::Forall:
      return 1 + quantifier_count(t->lhs);
  }
  return 0;
}

// ---------------------------------------------------------------------------
// Terms.
//
// Same representation scheme. Constants carry their own payload: the marker
// constant `alpha`, the coercion constants U[A, X] / V[A, X] (a type and the
// name of the type variable they act on), and opaque named constants for
// tests.
// ---------------------------------------------------------------------------

struct Term;
using TermPtr = std::shared_ptr<const Term>;

enum class TermKind { BVar, FVar, App, Lam, Alpha, UConst, VConst, Opaque };

struct Term {
  TermKind kind;
  int index = -1;     // BVar
  std::string name;   // FVar / Opaque name, Lam hint
  TermPtr fun, arg;   // App
  TermPtr body;       // Lam
  TypePtr ctype;      // UConst / VConst: the A of U[A, X]
  std::string cvar;   // UConst / VConst: the X of U[A, X]
};

inline TermPtr bvar(int i) {
  return std::make_shared<Term>(Term{TermKind::BVar, i, "", nullptr, nullptr, nullptr, nullptr, ""});
}
inline TermPtr fvar(const std::string& name) {
  return std::make_shared<Term>(Term{TermKind::FVar, -1, name, nullptr, nullptr, nullptr, nullptr, ""});
}
inline TermPtr app(TermPtr f, TermPtr a) {
  return std::make_shared<Term>(Term{TermKind::App, -1, "", std::move(f), std::move(a), nullptr, nullptr, ""});
}
inline TermPtr app_spine(TermPtr head, const std::vector<TermPtr>& args) {
  TermPtr t = std::move(head);
  for (const auto& a : args) t = app(t, a);
  return t;
}
inline TermPtr lam_raw(const std::string& hint, TermPtr body) {
  return std::make_shared<Term>(Term{TermKind::Lam, -1, hint, nullptr, nullptr, std::move(body), nullptr, ""});
}
inline TermPtr alpha_const() {
  return std::make_shared<Term>(Term{TermKind::Alpha, -1, "", nullptr, nullptr, nullptr, nullptr, ""});
}
inline TermPtr uconst(TypePtr a, const std::string& x) {
  return std::make_shared<Term>(Term{TermKind::UConst, -1, "", nullptr, nullptr, nullptr, std::move(a), x});
}
inline TermPtr vconst(TypePtr a, const std::string& x) {
  return std::make_shared<Term>(Term{TermKind::VConst, -1, "", nullptr, nullptr, nullptr, std::move(a), x});
}
inline TermPtr opaque(const std::string& name) {
  return std::make_shared<Term>(Term{TermKind::Opaque, -1, name, nullptr, nullptr, nullptr, nullptr, ""});
}

inline TermPtr term_abstract(const TermPtr& t, const std::string& name, int depth = 0) {
  switch (t->kind) {
    case TermKind::BVar:
    case TermKind::Alpha:
    case TermKind::UConst:
    case TermKind::VConst:
    case TermKind::Opaque:
      return t;
    case TermKind::FVar:
      return t->name == name ? bvar(depth) : t;
    case TermKind::App:
      return app(term_abstract(t->fun, name, depth), term_abstract(t->arg, name, depth));
    case TermKind::Lam:
      return lam_raw(t->name, term_abstract(t->body, name, depth + 1));
  }
  throw std::logic_error("term_abstract: bad kind");
}

inline TermPtr term_fill(const TermPtr& t, const TermPtr& rep, int depth = 0) {
  switch (t->kind) {
    case TermKind::BVar:
      return t->index == depth ? rep : t;
    case TermKind::FVar:
    case TermKind::Alpha:
    case TermKind::UConst:
    case TermKind::VConst:
    case TermKind::Opaque:
      return t;
    case TermKind::App:
      return app(term_fill(t->fun, rep, depth), term_fill(t->arg, rep, depth));
    case TermKind::Lam:
      return lam_raw(t->name, term_fill(t->body, rep, depth + 1));
  }
  throw std::logic_error("term_fill: bad kind");
}

// \name. body, where body mentions the variable by name.
inline TermPtr lam(const std::string& name, const TermPtr& body) {
  return lam_raw(name, term_abstract(body, name));
}

inline TermPtr lam_open(const TermPtr& l, const TermPtr& rep) {
  if (l->kind != TermKind::Lam) throw std::invalid_argument("lam_open: not a lambda");
  return term_fill(l->body, rep);
}

inline bool term_equal(const TermPtr& a, const TermPtr& b) {
  if (a.get() == b.get()) return true;
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case TermKind::BVar: return a->index == b->index;
    case TermKind::FVar:
    case TermKind::Opaque:
      return a->name == b->name;
    case TermKind::Alpha: return true;
    case TermKind::App:
      return term_equal(a->fun, b->fun) && term_equal(a->arg, b->arg);
    case TermKind::Lam:
      return term_equal(a->body, b->body);
    case TermKind::UConst:
    case TermKind::VConst:
      return a->cvar == b->cvar && type_equal(a->ctype, b->ctype);
  }
  return false;
}

inline int term_compare(const TermPtr& a, const TermPtr& b) {
  auto rank = [](TermKind k) {
    switch (k) {
      case TermKind::BVar: return 0;
      case TermKind::FVar: return 1;
      case TermKind::Alpha: return 2;
      case TermKind::Opaque: return 3;
      case TermKind::UConst: return 4;
      case TermKind::VConst: return 5;
      case TermKind::App: return 6;
      case TermKind::Lam: return 7;
    }
    return 8;
  };
  if (rank(a->kind) != rank(b->kind)) return rank(a->kind) < rank(b->kind) ? -1 : 1;
  switch (a->kind) {
    case TermKind::BVar:
      return a->index == b->index ? 0 : (a->index < b->index ? -1 : 1);
    case TermKind::FVar:
    case TermKind::Opaque: {
      int c = a->name.compare(b->name);
      return c < 0 ? -1 : (c == 0 ? 0 : 1);
    }
    case TermKind::Alpha:
      return 0;
    case TermKind::UConst:
    case TermKind::VConst: {
      int c = a->cvar.compare(b->cvar);
      if (c != 0) return c < 0 ? -1 : 1;
      return type_compare(a->ctype, b->ctype);
    }
    case TermKind::App: {
      int c = term_compare(a->fun, b->fun);
      return c != 0 ? c : term_compare(a->arg, b->arg);
    }
    case TermKind::Lam:
      return term_compare(a->body, b->body);
  }
  return 0;
}

inline void free_vars_into(const TermPtr& t, std::set<std::string>& out) {
  switch (t->kind) {
    case TermKind::BVar:
    case TermKind::Alpha:
    case TermKind::UConst:
    case TermKind::VConst:
    case TermKind::Opaque:
      return;
    case TermKind::FVar:
      out.insert(t->name);
      return;
    case TermKind::App:
      free_vars_into(t->fun, out);
      free_vars_into(t->arg, out);
      return;
    case TermKind::Lam:
      free_vars_into(t->body, out);
      return;
  }
}

inline std::set<std::string> free_vars(const TermPtr& t) {
  std::set<std::string> out;
  free_vars_into(t, out);
  return out;
}

inline bool term_mentions_fvar(const TermPtr& t, const std::string& name) {
  switch (t->kind) {
    case TermKind::FVar:
      return t->name == name;
    case TermKind::App:
      return term_mentions_fvar(t->fun, name) || term_mentions_fvar(t->arg, name);
    case TermKind::Lam:
      return term_mentions_fvar(t->body, name);
    default:
      return false;
  }
}

inline bool term_mentions_bvar(const TermPtr& t, int depth = 0) {
  switch (t->kind) {
    case TermKind::BVar:
      return t->index == depth;
    case TermKind::App:
      return term_mentions_bvar(t->fun, depth) || term_mentions_bvar(t->arg, depth);
    case TermKind::Lam:
      return term_mentions_bvar(t->body, depth + 1);
    default:
      return false;
  }
}

inline bool term_mentions_alpha(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::Alpha:
      return true;
    case TermKind::App:
      return term_mentions_alpha(t->fun) || term_mentions_alpha(t->arg);
    case TermKind::Lam:
      return term_mentions_alpha(t->body);
    default:
      return false;
  }
}

inline bool term_has_uv(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::UConst:
    case TermKind::VConst:
      return true;
    case TermKind::App:
      return term_has_uv(t->fun) || term_has_uv(t->arg);
    case TermKind::Lam:
      return term_has_uv(t->body);
    default:
      return false;
  }
}

inline bool term_is_closed(const TermPtr& t) { return free_vars(t).empty(); }

// Free type variable names occurring in U/V annotations (both the subscript
// variable and the carried type).
inline void term_type_vars_into(const TermPtr& t, std::set<std::string>& out) {
  switch (t->kind) {
    case TermKind::UConst:
    case TermKind::VConst:
      out.insert(t->cvar);
      free_type_vars_into(t->ctype, out);
      return;
    case TermKind::App:
      term_type_vars_into(t->fun, out);
      term_type_vars_into(t->arg, out);
      return;
    case TermKind::Lam:
      term_type_vars_into(t->body, out);
      return;
    default:
      return;
  }
}

// Capture-avoiding [rep/name]t.
inline TermPtr subst(const TermPtr& t, const std::string& name, const TermPtr& rep) {
  switch (t->kind) {
    case TermKind::Alpha:
      return name == "alpha" ? rep : t;
    case TermKind::BVar:
    case TermKind::UConst:
    case TermKind::VConst:
    case TermKind::Opaque:
      return t;
    case TermKind::FVar:
      return t->name == name ? rep : t;
    case TermKind::App:
      return app(subst(t->fun, name, rep), subst(t->arg, name, rep));
    case TermKind::Lam:
      return lam_raw(t->name, subst(t->body, name, rep));
  }
  throw std::logic_error("subst: bad kind");
}

inline int term_size(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::App:
      return 1 + term_size(t->fun) + term_size(t->arg);
    case TermKind::Lam:
      return 1 + term_size(t->body);
    default:
      return 1;
  }
}

// Every lambda must use its variable. Coercion constants have no place here.
inline bool is_lambda_I(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::UConst:
    case TermKind::VConst:
      throw std::invalid_argument("is_lambda_I: coercion constant in subject");
    case TermKind::App:
      return is_lambda_I(t->fun) && is_lambda_I(t->arg);
    case TermKind::Lam:
      return term_mentions_bvar(t->body, 0) && is_lambda_I(t->body);
    default:
      return true;
  }
}

// Head and arguments of an application spine: t = (head) a1 ... an.
inline TermPtr spine_head(const TermPtr& t, std::vector<TermPtr>* args = nullptr) {
  if (t->kind != TermKind::App) {
    if (args) args->clear();
    return t;
  }
  std::vector<TermPtr> rev;
  TermPtr cur = t;
  while (cur->kind == TermKind::App) {
    rev.push_back(cur->arg);
    cur = cur->fun;
  }
  if (args) args->assign(rev.rbegin(), rev.rend());
  return cur;
}

// ---------------------------------------------------------------------------
// Tree positions. App: 0 = function, 1 = argument. Lam: 0 = body.
// ---------------------------------------------------------------------------

using TermPath = std::vector<int>;
using OccurrenceSet = std::set<TermPath>;

inline TermPtr subterm_at(const TermPtr& t, const TermPath& path, size_t from = 0) {
  if (from == path.size()) return t;
  int step = path[from];
  if (t->kind == TermKind::App && step == 0) return subterm_at(t->fun, path, from + 1);
  if (t->kind == TermKind::App && step == 1) return subterm_at(t->arg, path, from + 1);
  if (t->kind == TermKind::Lam && step == 0) return subterm_at(t->body, path, from + 1);
  throw std::out_of_range("subterm_at: path leaves the term");
}

// Literal replacement at a path; no name adjustment of any kind.
inline TermPtr replace_at(const TermPtr& t, const TermPath& path, const TermPtr& rep,
                          size_t from = 0) {
  if (from == path.size()) return rep;
  int step = path[from];
  if (t->kind == TermKind::App && step == 0)
    return app(replace_at(t->fun, path, rep, from + 1), t->arg);
  if (t->kind == TermKind::App && step == 1)
    return app(t->fun, replace_at(t->arg, path, rep, from + 1));
  if (t->kind == TermKind::Lam && step == 0)
    return lam_raw(t->name, replace_at(t->body, path, rep, from + 1));
  throw std::out_of_range("replace_at: path leaves the term");
}

inline std::string path_to_string(const TermPath& p) {
  std::string out;
  for (size_t i = 0; i < p.size(); ++i) {
    if (i) out += ".";
    out += std::to_string(p[i]);
  }
  return out.empty() ? "e" : out;
}

// Grafts v at the hole, letting binders above the hole capture matching free
// variables of v. Binder names along the path are taken from the hints, so
// the hints on that path must name the binders unambiguously (as produced by
// the derivation machinery, which opens binders with distinct fresh names).
inline TermPtr replace_in_context_hole(const TermPtr& t, const TermPath& path, const TermPtr& v,
                                       size_t from = 0) {
  if (from == path.size()) return v;
  int step = path[from];
  if (t->kind == TermKind::App && step == 0)
    return app(replace_in_context_hole(t->fun, path, v, from + 1), t->arg);
  if (t->kind == TermKind::App && step == 1)
    return app(t->fun, replace_in_context_hole(t->arg, path, v, from + 1));
  if (t->kind == TermKind::Lam && step == 0) {
    std::string name = t->name.empty() ? "x" : t->name;
    TermPtr opened = term_fill(t->body, fvar(name));
    return lam(name, replace_in_context_hole(opened, path, v, from + 1));
  }
  throw std::out_of_range("replace_in_context_hole: path leaves the term");
}

// ---------------------------------------------------------------------------
// Fresh names.
// ---------------------------------------------------------------------------

inline const std::set<std::string>& reserved_names() {
  static const std::set<std::string> r = {"alpha", "id", "K0",   "K1",  "forall", "O",
                                          "Id",    "Bool", "Ent", "U",  "V"};
  return r;
}

inline std::string freshen(const std::string& hint, const std::set<std::string>& taken) {
  std::string base = hint.empty() ? "x" : hint;
  if (!taken.count(base) && !reserved_names().count(base)) return base;
  for (int i = 1;; ++i) {
    std::string cand = base + std::to_string(i);
    if (!taken.count(cand) && !reserved_names().count(cand)) return cand;
  }
}

inline std::string freshen_name_seed(const std::set<std::string>& taken) {
  static const char* seeds[] = {"x", "y", "z", "u", "v", "w"};
  for (const char* s : seeds)
    if (!taken.count(s)) return s;
  return freshen("x1", taken);
}

// ---------------------------------------------------------------------------
// Stock terms and types.
// ---------------------------------------------------------------------------

inline TermPtr identity_term() { return lam("x", fvar("x")); }                    // id
inline TermPtr k0_term() { return lam("x", lam("y", fvar("y"))); }                // K0
inline TermPtr k1_term() { return lam("x", lam("y", fvar("x"))); }                // K1

// \x. \f. (f) ... (f) x, n applications.
inline TermPtr church(int n) {
  TermPtr body = fvar("x");
  for (int i = 0; i < n; ++i) body = app(fvar("f"), body);
  return lam("x", lam("f", body));
}

// Variable-using numerals: ##0 = \x. \f. (((x) id) id) f, ##n = #n otherwise.
inline TermPtr ibar(int n) {
  if (n > 0) return church(n);
  return lam("x", lam("f", app(app(app(fvar("x"), identity_term()), identity_term()), fvar("f"))));
}

// <t1, ..., tn> = \z. (z) t1 ... tn with z fresh for the components.
inline TermPtr tuple(const std::vector<TermPtr>& parts) {
  if (parts.empty()) throw std::invalid_argument("tuple: needs at least one component");
  std::set<std::string> taken;
  for (const auto& p : parts) free_vars_into(p, taken);
  std::string z = freshen_name_seed(taken);
  return lam(z, app_spine(fvar(z), parts));
}

inline TypePtr identity_type() { return forall("X", arrow(tvar("X"), tvar("X"))); }  // Id

inline TypePtr bool_type() {
  return forall("X", arrow(tvar("X"), arrow(tvar("X"), tvar("X"))));                 // Bool
}

inline TypePtr nat_type() {
  TypePtr X = tvar("X");
  return forall("X", arrow(X, arrow(arrow(X, X), X)));                               // Ent
}

// A1 /\ ... /\ An = forall X. (A1 -> ... -> An -> X) -> X, X fresh.
inline TypePtr conj_type(const std::vector<TypePtr>& parts) {
  if (parts.size() < 2) throw std::invalid_argument("conj_type: needs at least two components");
  std::set<std::string> taken;
  for (const auto& p : parts) free_type_vars_into(p, taken);
  std::string x = "X";
  if (taken.count(x)) {
    for (int i = 1;; ++i) {
      std::string cand = "X" + std::to_string(i);
      if (!taken.count(cand)) { x = cand; break; }
    }
  }
  TypePtr inner = tvar(x);
  for (auto it = parts.rbegin(); it != parts.rend(); ++it) inner = arrow(*it, inner);
  return forall(x, arrow(inner, tvar(x)));
}

// G degree: O -> (G /\ O).
inline TypePtr circ_type(const TypePtr& g) {
  return arrow(oconst(), conj_type({g, oconst()}));
}

// ---------------------------------------------------------------------------
// Printing. parse(print(t)) reproduces t up to alpha.
// ---------------------------------------------------------------------------

namespace detail {

inline void print_type_into(const TypePtr& t, std::vector<std::string>& scope, std::string& out,
                            bool needs_parens) {
  switch (t->kind) {
    case TypeKind::BVar: {
      int pos = static_cast<int>(scope.size()) - 1 - t->index;
      out += (pos >= 0 && pos < static_cast<int>(scope.size())) ? scope[pos]
                                                                : "?" + std::to_string(t->index);
      return;
    }
    case TypeKind::FVar:
      out += t->name;
      return;
    case TypeKind::OConst:
      out += "O";
      return;
    case TypeKind::MVar:
      out += "?m" + std::to_string(t->index);
      return;
    case TypeKind::Arrow:
      if (needs_parens) out += "(";
      print_type_into(t->lhs, scope, out, true);
      out += " -> ";
      print_type_into(t->rhs, scope, out, false);
      if (needs_parens) out += ")";
      return;
    case TypeKind::Forall: {
      if (needs_parens) out += "(";
      std::set<std::string> taken = free_type_vars(t);
      taken.insert(scope.begin(), scope.end());
      std::string name = freshen(t->name.empty() ? "X" : t->name, taken);
      out += "forall " + name + ". ";
      scope.push_back(name);
      print_type_into(t->lhs, scope, out, false);
      scope.pop_back();
      if (needs_parens) out += ")";
      return;
    }
  }
}

// prec 0: anything. prec 1: spine head (lambda needs parens). prec 2: atoms.
inline void print_term_into(const TermPtr& t, std::vector<std::string>& scope, std::string& out,
                            int prec) {
  switch (t->kind) {
    case TermKind::BVar: {
      int pos = static_cast<int>(scope.size()) - 1 - t->index;
      out += (pos >= 0 && pos < static_cast<int>(scope.size())) ? scope[pos]
                                                                : "?" + std::to_string(t->index);
      return;
    }
    case TermKind::FVar:
      out += t->name;
      return;
    case TermKind::Alpha:
      out += "alpha";
      return;
    case TermKind::Opaque:
      out += "$" + t->name;
      return;
    case TermKind::UConst:
    case TermKind::VConst: {
      out += (t->kind == TermKind::UConst) ? "U[" : "V[";
      std::vector<std::string> tscope;
      print_type_into(t->ctype, tscope, out, false);
      out += ", " + t->cvar + "]";
      return;
    }
    case TermKind::App:
      if (prec > 1) out += "(";
      print_term_into(t->fun, scope, out, 1);
      out += " ";
      print_term_into(t->arg, scope, out, 2);
      if (prec > 1) out += ")";
      return;
    case TermKind::Lam: {
      if (prec > 0) out += "(";
      std::set<std::string> taken = free_vars(t);
      taken.insert(scope.begin(), scope.end());
      std::string name = freshen(t->name.empty() ? "x" : t->name, taken);
      out += "\\" + name + ". ";
      scope.push_back(name);
      print_term_into(t->body, scope, out, 0);
      scope.pop_back();
      if (prec > 0) out += ")";
      return;
    }
  }
}

} // namespace detail

inline std::string print_type(const TypePtr& t) {
  std::vector<std::string> scope;
  std::string out;
  detail::print_type_into(t, scope, out, false);
  return out;
}

inline std::string print_term(const TermPtr& t) {
  std::vector<std::string> scope;
  std::string out;
  detail::print_term_into(t, scope, out, 0);
  return out;
}

// Alpha-canonical rendering: binder hints are discarded, so the printer names
// every binder from its default supply and alpha-equal terms print alike.
inline TermPtr strip_binder_hints(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::App:
      return app(strip_binder_hints(t->fun), strip_binder_hints(t->arg));
    case TermKind::Lam:
      return lam_raw("", strip_binder_hints(t->body));
    default:
      return t;
  }
}

inline std::string print_term_canonical(const TermPtr& t) {
  return print_term(strip_binder_hints(t));
}

// ---------------------------------------------------------------------------
// Parsing.
// ---------------------------------------------------------------------------

struct ParseError : std::runtime_error {
  size_t pos;
  ParseError(const std::string& msg, size_t at)
      : std::runtime_error(msg + " (at offset " + std::to_string(at) + ")"), pos(at) {}
};

namespace detail {

struct Lexer {
  enum class Tok { Ident, Number, Lambda, Dot, LParen, RParen, LBracket, RBracket, Comma,
                   Less, Greater, Arrow, Wedge, Hash, HashHash, Dollar, End };

  std::string src;
  size_t pos = 0;
  Tok tok = Tok::End;
  std::string text;
  size_t tok_pos = 0;

  explicit Lexer(std::string s) : src(std::move(s)) { advance(); }

  [[noreturn]] void fail(const std::string& msg) const { throw ParseError(msg, tok_pos); }

  void advance() {
    while (pos < src.size() && (src[pos] == ' ' || src[pos] == '\t' || src[pos] == '\n' ||
                                src[pos] == '\r'))
      ++pos;
    tok_pos = pos;
    text.clear();
    if (pos >= src.size()) { tok = Tok::End; return; }
    char c = src[pos];
    if (c == '\\') { tok = Tok::Lambda; ++pos; return; }
    if (c == '.') { tok = Tok::Dot; ++pos; return; }
    if (c == '(') { tok = Tok::LParen; ++pos; return; }
    if (c == ')') { tok = Tok::RParen; ++pos; return; }
    if (c == '[') { tok = Tok::LBracket; ++pos; return; }
    if (c == ']') { tok = Tok::RBracket; ++pos; return; }
    if (c == ',') { tok = Tok::Comma; ++pos; return; }
    if (c == '<') { tok = Tok::Less; ++pos; return; }
    if (c == '>') { tok = Tok::Greater; ++pos; return; }
    if (c == '$') { tok = Tok::Dollar; ++pos; return; }
    if (c == '-' && pos + 1 < src.size() && src[pos + 1] == '>') { tok = Tok::Arrow; pos += 2; return; }
    if (c == '/' && pos + 1 < src.size() && src[pos + 1] == '\\') { tok = Tok::Wedge; pos += 2; return; }
    if (c == '#') {
      if (pos + 1 < src.size() && src[pos + 1] == '#') { tok = Tok::HashHash; pos += 2; }
      else { tok = Tok::Hash; ++pos; }
      return;
    }
    if (c >= '0' && c <= '9') {
      tok = Tok::Number;
      while (pos < src.size() && src[pos] >= '0' && src[pos] <= '9') text += src[pos++];
      return;
    }
    if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || c == '_') {
      tok = Tok::Ident;
      while (pos < src.size() && ((src[pos] >= 'a' && src[pos] <= 'z') ||
                                  (src[pos] >= 'A' && src[pos] <= 'Z') ||
                                  (src[pos] >= '0' && src[pos] <= '9') || src[pos] == '_' ||
                                  src[pos] == '\''))
        text += src[pos++];
      return;
    }
    throw ParseError(std::string("unexpected character '") + c + "'", pos);
  }

  bool at(Tok k) const { return tok == k; }

  void expect(Tok k, const char* what) {
    if (tok != k) fail(std::string("expected ") + what);
    advance();
  }

  std::string expect_ident(const char* what) {
    if (tok != Tok::Ident) fail(std::string("expected ") + what);
    std::string s = text;
    advance();
    return s;
  }

  int expect_number() {
    if (tok != Tok::Number) fail("expected a number");
    int n = 0;
    for (char c : text) {
      n = n * 10 + (c - '0');
      if (n > 1000000) fail("number out of range");
    }
    advance();
    return n;
  }
};

struct TypeParser {
  Lexer& lx;

  TypePtr parse() {
    if (lx.at(Lexer::Tok::Ident) && lx.text == "forall") {
      lx.advance();
      std::string name = lx.expect_ident("a type variable after 'forall'");
      lx.expect(Lexer::Tok::Dot, "'.' after the forall binder");
      return forall(name, parse());
    }
    TypePtr left = parse_conj();
    if (lx.at(Lexer::Tok::Arrow)) {
      lx.advance();
      return arrow(left, parse());
    }
    return left;
  }

  TypePtr parse_conj() {
    std::vector<TypePtr> parts{parse_primary()};
    while (lx.at(Lexer::Tok::Wedge)) {
      lx.advance();
      parts.push_back(parse_primary());
    }
    return parts.size() == 1 ? parts[0] : conj_type(parts);
  }

  TypePtr parse_primary() {
    if (lx.at(Lexer::Tok::LParen)) {
      lx.advance();
      TypePtr t = parse();
      lx.expect(Lexer::Tok::RParen, "')'");
      return t;
    }
    if (lx.at(Lexer::Tok::Ident)) {
      std::string name = lx.text;
      if (name == "forall") lx.fail("'forall' must be parenthesized here");
      lx.advance();
      if (name == "O") return oconst();
      if (name == "Id") return identity_type();
      if (name == "Bool") return bool_type();
      if (name == "Ent") return nat_type();
      return tvar(name);
    }
    lx.fail("expected a type");
  }
};

struct TermParser {
  Lexer& lx;

  bool atom_starts() const {
    using Tok = Lexer::Tok;
    return lx.at(Tok::Ident) || lx.at(Tok::LParen) || lx.at(Tok::Less) || lx.at(Tok::Hash) ||
           lx.at(Tok::HashHash) || lx.at(Tok::Dollar);
  }

  TermPtr parse() {
    if (lx.at(Lexer::Tok::Lambda)) return parse_lambda();
    TermPtr t = parse_atom();
    while (true) {
      if (lx.at(Lexer::Tok::Lambda)) { t = app(t, parse_lambda()); break; }
      if (!atom_starts()) break;
      t = app(t, parse_atom());
    }
    return t;
  }

  TermPtr parse_lambda() {
    lx.expect(Lexer::Tok::Lambda, "'\\'");
    std::string name = lx.expect_ident("a variable after '\\'");
    lx.expect(Lexer::Tok::Dot, "'.' after the binder");
    return lam(name, parse());
  }

  TermPtr parse_atom() {
    using Tok = Lexer::Tok;
    if (lx.at(Tok::LParen)) {
      lx.advance();
      TermPtr t = parse();
      lx.expect(Tok::RParen, "')'");
      return t;
    }
    if (lx.at(Tok::Less)) {
      lx.advance();
      std::vector<TermPtr> parts{parse()};
      while (lx.at(Tok::Comma)) {
        lx.advance();
        parts.push_back(parse());
      }
      lx.expect(Tok::Greater, "'>'");
      return tuple(parts);
    }
    if (lx.at(Tok::Hash)) {
      lx.advance();
      return church(lx.expect_number());
    }
    if (lx.at(Tok::HashHash)) {
      lx.advance();
      return ibar(lx.expect_number());
    }
    if (lx.at(Tok::Dollar)) {
      lx.advance();
      return opaque(lx.expect_ident("a constant name after '$'"));
    }
    if (lx.at(Tok::Ident)) {
      std::string name = lx.text;
      lx.advance();
      if (name == "alpha") return alpha_const();
      if (name == "id") return identity_term();
      if (name == "K0") return k0_term();
      if (name == "K1") return k1_term();
      if ((name == "U" || name == "V") && lx.at(Tok::LBracket)) {
        lx.advance();
        TypeParser tp{lx};
        TypePtr a = tp.parse();
        lx.expect(Tok::Comma, "',' between the type and its variable");
        std::string x = lx.expect_ident("a type variable");
        lx.expect(Tok::RBracket, "']'");
        return name == "U" ? uconst(a, x) : vconst(a, x);
      }
      return fvar(name);
    }
    lx.fail("expected a term");
  }
};

} // namespace detail

inline TermPtr parse_term(const std::string& src) {
  detail::Lexer lx(src);
  detail::TermParser p{lx};
  TermPtr t = p.parse();
  if (!lx.at(detail::Lexer::Tok::End)) lx.fail("trailing input after the term");
  return t;
}

inline TypePtr parse_type(const std::string& src) {
  detail::Lexer lx(src);
  detail::TypeParser p{lx};
  TypePtr t = p.parse();
  if (!lx.at(detail::Lexer::Tok::End)) lx.fail("trailing input after the type");
  return t;
}

} // namespace systemf
