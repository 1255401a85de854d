#pragma once

#include <random>

#include "systemf/polarity.hpp"
#include "systemf/syntax.hpp"

namespace systemf {

// Deterministic pseudo-random helper for tests and the self-check suites.
struct Rng {
  std::mt19937_64 eng;
  explicit Rng(uint64_t seed) : eng(seed) {}
  int below(int n) { return n <= 1 ? 0 : static_cast<int>(eng() % static_cast<uint64_t>(n)); }
  bool coin(int pct) { return below(100) < pct; }
};

// ---------------------------------------------------------------------------
// Random types.
// ---------------------------------------------------------------------------

inline TypePtr random_type(Rng& rng, int budget, std::vector<std::string> scope,
                           int* counter = nullptr) {
  int local_counter = 0;
  if (!counter) counter = &local_counter;
  if (budget <= 0 && !scope.empty()) return tvar(scope[rng.below(static_cast<int>(scope.size()))]);
  int choice = rng.below(scope.empty() ? 2 : 3);
  if (!scope.empty() && budget > 0 && rng.coin(25)) choice = 2;
  switch (choice) {
    case 0: {
      int left = rng.below(std::max(1, budget));
      return arrow(random_type(rng, left, scope, counter),
                   random_type(rng, budget - 1 - left, scope, counter));
    }
    case 1: {
      std::string name = "X" + std::to_string(++*counter);
      scope.push_back(name);
      return forall(name, random_type(rng, budget - 1, scope, counter));
    }
    default:
      return tvar(scope[rng.below(static_cast<int>(scope.size()))]);
  }
}

// Closed, no vacuous quantifier, at most max_connectives connectives.
inline TypePtr random_proper_closed_type(Rng& rng, int max_connectives) {
  while (true) {
    int counter = 0;
    TypePtr t = random_type(rng, max_connectives, {}, &counter);
    if (type_connectives(t) <= max_connectives && type_is_closed(t) && is_proper(t) &&
        t->kind == TypeKind::Forall)
      return t;
  }
}

// ---------------------------------------------------------------------------
// Random terms.
// ---------------------------------------------------------------------------

inline TermPtr random_term(Rng& rng, int budget, std::vector<std::string> scope, int* counter) {
  if (budget <= 1) {
    if (!scope.empty()) return fvar(scope[rng.below(static_cast<int>(scope.size()))]);
    return identity_term();
  }
  int choice = rng.below(scope.empty() ? 2 : 3);
  switch (choice) {
    case 0: {
      int left = 1 + rng.below(budget - 1);
      return app(random_term(rng, left, scope, counter),
                 random_term(rng, budget - 1 - left, scope, counter));
    }
    case 1: {
      std::string name = "v" + std::to_string(++*counter);
      scope.push_back(name);
      return lam(name, random_term(rng, budget - 1, scope, counter));
    }
    default:
      return fvar(scope[rng.below(static_cast<int>(scope.size()))]);
  }
}

inline TermPtr random_closed_term(Rng& rng, int budget) {
  int counter = 0;
  return random_term(rng, budget, {}, &counter);
}

// Rewrites every lambda whose variable is unused so that the variable is
// consumed: \x. b becomes \x. ((\u. \v. (v) u) x) b. Reduction behaviour is
// irrelevant for the generated corpus; only the usage discipline matters.
inline TermPtr ensure_lambda_I(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::App:
      return app(ensure_lambda_I(t->fun), ensure_lambda_I(t->arg));
    case TermKind::Lam: {
      std::string n = freshen(t->name, free_vars(t));
      TermPtr body = ensure_lambda_I(term_fill(t->body, fvar(n)));
      if (!term_mentions_fvar(body, n)) {
        TermPtr use = lam("u", lam("w", app(fvar("w"), fvar("u"))));
        body = app(app(use, fvar(n)), body);
      }
      return lam(n, body);
    }
    default:
      return t;
  }
}

inline TermPtr random_lambda_I_term(Rng& rng, int budget) {
  return ensure_lambda_I(random_closed_term(rng, budget));
}

// Random term sprinkled with applied coercion constants; no goodness
// discipline, only well-formedness. Used by the termination-measure suite.
inline TermPtr random_uv_term(Rng& rng, int budget, std::vector<std::string> scope,
                              int* counter) {
  if (budget > 2 && rng.coin(25)) {
    TypePtr a = random_type(rng, 1 + rng.below(3), {"X", "Y"});
    TermPtr inner = random_uv_term(rng, budget - 2, scope, counter);
    TermPtr c = rng.coin(50) ? uconst(a, "X") : vconst(a, "X");
    return app(c, inner);
  }
  if (budget <= 1) {
    if (!scope.empty()) return fvar(scope[rng.below(static_cast<int>(scope.size()))]);
    return identity_term();
  }
  int choice = rng.below(scope.empty() ? 2 : 3);
  switch (choice) {
    case 0: {
      int left = 1 + rng.below(budget - 1);
      return app(random_uv_term(rng, left, scope, counter),
                 random_uv_term(rng, budget - 1 - left, scope, counter));
    }
    case 1: {
      std::string name = "v" + std::to_string(++*counter);
      scope.push_back(name);
      return lam(name, random_uv_term(rng, budget - 1, scope, counter));
    }
    default:
      return fvar(scope[rng.below(static_cast<int>(scope.size()))]);
  }
}

// ---------------------------------------------------------------------------
// Random good terms, built along the shape characterization: abstractions,
// variable spines (whose arguments may carry a U application under a lambda
// prefix when the head is marked), beta redexes of good pieces, and V
// constants applied to marked spines.
// ---------------------------------------------------------------------------

inline TermPtr random_good_term(Rng& rng, int budget, const std::set<std::string>& marked,
                                std::vector<std::string> scope, int* counter) {
  auto spine_args = [&](int n, const std::string& head) {
    std::vector<TermPtr> args;
    bool head_marked = marked.count(head) > 0;
    for (int i = 0; i < n; ++i) {
      if (head_marked && rng.coin(40)) {
        // \y1...\ym (U[B, X]) w
        int m = rng.below(3);
        std::vector<std::string> inner = scope;
        std::vector<std::string> binders;
        for (int k = 0; k < m; ++k) {
          binders.push_back("v" + std::to_string(++*counter));
          inner.push_back(binders.back());
        }
        TypePtr b = random_type(rng, 1 + rng.below(3), {"X", "Y"});
        TermPtr w = random_good_term(rng, budget / (n + 1), marked, inner, counter);
        TermPtr arg = app(uconst(b, "X"), w);
        for (auto it = binders.rbegin(); it != binders.rend(); ++it) arg = lam(*it, arg);
        args.push_back(arg);
      } else {
        args.push_back(random_good_term(rng, budget / (n + 1), marked, scope, counter));
      }
    }
    return args;
  };

  if (budget <= 1 || scope.empty()) {
    if (!scope.empty() && rng.coin(70)) return fvar(scope[rng.below(static_cast<int>(scope.size()))]);
    std::string name = "v" + std::to_string(++*counter);
    std::vector<std::string> inner = scope;
    inner.push_back(name);
    return lam(name, budget <= 1 ? fvar(name)
                                 : random_good_term(rng, budget - 1, marked, inner, counter));
  }

  // Marked heads available?
  std::vector<std::string> marked_in_scope;
  for (const auto& s : scope)
    if (marked.count(s)) marked_in_scope.push_back(s);

  switch (rng.below(marked_in_scope.empty() ? 3 : 4)) {
    case 0: {  // abstraction
      std::string name = "v" + std::to_string(++*counter);
      std::vector<std::string> inner = scope;
      inner.push_back(name);
      return lam(name, random_good_term(rng, budget - 1, marked, inner, counter));
    }
    case 1: {  // variable spine
      std::string head = scope[rng.below(static_cast<int>(scope.size()))];
      int n = rng.below(3);
      return app_spine(fvar(head), spine_args(n, head));
    }
    case 2: {  // beta redex of good pieces
      std::string name = "v" + std::to_string(++*counter);
      std::vector<std::string> inner = scope;
      inner.push_back(name);
      TermPtr body = random_good_term(rng, budget / 3, marked, inner, counter);
      TermPtr v = random_good_term(rng, budget / 3, marked, scope, counter);
      TermPtr out = app(lam(name, body), v);
      int extra = rng.below(2);
      for (int i = 0; i < extra; ++i)
        out = app(out, random_good_term(rng, budget / 3, marked, scope, counter));
      return out;
    }
    default: {  // V constant on a marked spine
      std::string head = marked_in_scope[rng.below(static_cast<int>(marked_in_scope.size()))];
      int n = rng.below(3);
      TermPtr spine = app_spine(fvar(head), spine_args(n, head));
      TypePtr b = random_type(rng, 1 + rng.below(3), {"X", "Y"});
      return app(vconst(b, "X"), spine);
    }
  }
}

} // namespace systemf
