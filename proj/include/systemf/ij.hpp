#pragma once

#include "systemf/syntax.hpp"

namespace systemf {

// Coercion combinators directed at a type variable X. At the base case Y = X
// they bottom out in a supplied pair of terms; everywhere else they are plain
// identity-like wrappers:
//
//   step(Y, X)      = id                      (Y a variable or O, Y != X)
//   step(X, X)      = base
//   step(B -> C, X) = \x. \y. step(C)((x)(costep(B) y))
//   step(forall Y B, X) = \x. step(B) x
//
// The two directions differ only in which base term sits at X and in swapping
// roles on the left of arrows.

inline TermPtr coercion_term(const TypePtr& a, const std::string& x, bool positive,
                             const TermPtr& base_pos, const TermPtr& base_neg) {
  switch (a->kind) {
    case TypeKind::FVar:
      if (a->name == x) return positive ? base_pos : base_neg;
      return identity_term();
    case TypeKind::OConst:
      return identity_term();
    case TypeKind::Arrow: {
      TermPtr inner = coercion_term(a->rhs, x, positive, base_pos, base_neg);
      TermPtr flip = coercion_term(a->lhs, x, !positive, base_pos, base_neg);
      return lam("x", lam("y",
                 app(inner, app(fvar("x"), app(flip, fvar("y"))))));
    }
    case TypeKind::Forall: {
      std::set<std::string> avoid = free_type_vars(a);
      avoid.insert(x);
      std::string y = freshen(a->name.empty() ? "Y" : a->name, avoid);
      TermPtr inner = coercion_term(forall_open(a, tvar(y)), x, positive, base_pos, base_neg);
      return lam("x", app(inner, fvar("x")));
    }
    case TypeKind::BVar:
      break;
  }
  throw std::invalid_argument("coercion_term: type is not locally closed");
}

// The uninterpreted flavour: base cases are the inert constants U[X, X] and
// V[X, X]. This is what the flattening map on coercion constants produces.
inline TermPtr iprime(const TypePtr& a, const std::string& x) {
  return coercion_term(a, x, true, uconst(tvar(x), x), vconst(tvar(x), x));
}
inline TermPtr jprime(const TypePtr& a, const std::string& x) {
  return coercion_term(a, x, false, uconst(tvar(x), x), vconst(tvar(x), x));
}

// The typed flavour: base cases pair the argument with the marker alpha, or
// project a marked pair back out.
inline TermPtr marker_pack_term() {
  return lam("x", lam("d", tuple({fvar("x"), alpha_const()})));
}
inline TermPtr marker_unpack_term() {
  return lam("x", app(app(fvar("x"), alpha_const()), k1_term()));
}

inline TermPtr coercion_in(const TypePtr& a, const std::string& x) {
  return coercion_term(a, x, true, marker_pack_term(), marker_unpack_term());
}
inline TermPtr coercion_out(const TypePtr& a, const std::string& x) {
  return coercion_term(a, x, false, marker_pack_term(), marker_unpack_term());
}

} // namespace systemf
