#pragma once

#include <map>
#include <optional>
#include <utility>

#include "systemf/ij.hpp"
#include "systemf/syntax.hpp"

namespace systemf {

constexpr long kDefaultFuel = 10000;

struct ReductionOutcome {
  TermPtr result;
  long steps = 0;
  bool exhausted = false;  // fuel ran out before a normal form was reached
};

// ---------------------------------------------------------------------------
// Single leftmost-outermost steps. Traversal opens binders with fresh names
// and re-closes them, so every intermediate value is locally closed.
// ---------------------------------------------------------------------------

inline std::optional<TermPtr> beta_step(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::App: {
      if (t->fun->kind == TermKind::Lam) return lam_open(t->fun, t->arg);
      if (auto f = beta_step(t->fun)) return app(*f, t->arg);
      if (auto a = beta_step(t->arg)) return app(t->fun, *a);
      return std::nullopt;
    }
    case TermKind::Lam: {
      std::string n = freshen(t->name, free_vars(t));
      if (auto b = beta_step(term_fill(t->body, fvar(n)))) return lam(n, *b);
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

inline std::optional<TermPtr> eta_step(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::App: {
      if (auto f = eta_step(t->fun)) return app(*f, t->arg);
      if (auto a = eta_step(t->arg)) return app(t->fun, *a);
      return std::nullopt;
    }
    case TermKind::Lam: {
      std::string n = freshen(t->name, free_vars(t));
      TermPtr body = term_fill(t->body, fvar(n));
      if (body->kind == TermKind::App && body->arg->kind == TermKind::FVar &&
          body->arg->name == n && !term_mentions_fvar(body->fun, n))
        return body->fun;
      if (auto b = eta_step(body)) return lam(n, *b);
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

inline std::optional<TermPtr> beta_eta_step(const TermPtr& t) {
  if (auto r = beta_step(t)) return r;
  return eta_step(t);
}

// One step of head reduction: under the leading binders, contract the redex
// at the head of the spine.
inline std::optional<TermPtr> head_step(const TermPtr& t) {
  if (t->kind == TermKind::Lam) {
    std::string n = freshen(t->name, free_vars(t));
    if (auto b = head_step(term_fill(t->body, fvar(n)))) return lam(n, *b);
    return std::nullopt;
  }
  std::vector<TermPtr> args;
  TermPtr head = spine_head(t, &args);
  if (head->kind == TermKind::Lam && !args.empty()) {
    TermPtr contracted = lam_open(head, args[0]);
    return app_spine(contracted, {args.begin() + 1, args.end()});
  }
  return std::nullopt;
}

template <typename Step>
inline ReductionOutcome normalize_with(const TermPtr& t, long fuel, Step step) {
  ReductionOutcome out{t, 0, false};
  while (true) {
    auto next = step(out.result);
    if (!next) return out;
    out.result = *next;
    if (++out.steps >= fuel) {
      out.exhausted = static_cast<bool>(step(out.result));
      return out;
    }
  }
}

inline ReductionOutcome beta_normalize(const TermPtr& t, long fuel = kDefaultFuel) {
  return normalize_with(t, fuel, [](const TermPtr& s) { return beta_step(s); });
}
inline ReductionOutcome eta_normalize(const TermPtr& t, long fuel = kDefaultFuel) {
  return normalize_with(t, fuel, [](const TermPtr& s) { return eta_step(s); });
}
inline ReductionOutcome beta_eta_normalize(const TermPtr& t, long fuel = kDefaultFuel) {
  return normalize_with(t, fuel, [](const TermPtr& s) { return beta_eta_step(s); });
}
inline ReductionOutcome head_normalize(const TermPtr& t, long fuel = kDefaultFuel) {
  return normalize_with(t, fuel, [](const TermPtr& s) { return head_step(s); });
}

inline bool is_beta_normal(const TermPtr& t) { return !beta_step(t); }
inline bool is_beta_eta_normal(const TermPtr& t) { return !beta_eta_step(t); }

// Head reduction terminating within the fuel answers yes; running out of fuel
// answers "unknown" (nullopt).
inline std::optional<bool> is_solvable(const TermPtr& t, long fuel = kDefaultFuel) {
  ReductionOutcome out = head_normalize(t, fuel);
  if (out.exhausted) return std::nullopt;
  return true;
}

// ---------------------------------------------------------------------------
// The extended reduction on terms with coercion constants: beta steps plus
//
//   (U[Y, X]) t      ~> t                                 (Y != X, O included)
//   (U[B -> C, X]) t ~> \y. (U[C, X])((t)((V[B, X]) y))   (y fresh)
//   (U[forall Y B, X]) t ~> (U[B, X]) t
//
// and symmetrically for V with U/V swapped. U[X, X] and V[X, X] are inert.
// ---------------------------------------------------------------------------

enum class UvRuleKind { Beta, UStep, VStep };

inline std::optional<std::pair<TermPtr, UvRuleKind>> uv_step(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::App: {
      const TermPtr& f = t->fun;
      if (f->kind == TermKind::UConst || f->kind == TermKind::VConst) {
        bool is_u = f->kind == TermKind::UConst;
        UvRuleKind kind = is_u ? UvRuleKind::UStep : UvRuleKind::VStep;
        const TypePtr& a = f->ctype;
        const std::string& x = f->cvar;
        auto self = [&](const TypePtr& ty) { return is_u ? uconst(ty, x) : vconst(ty, x); };
        auto other = [&](const TypePtr& ty) { return is_u ? vconst(ty, x) : uconst(ty, x); };
        if ((a->kind == TypeKind::FVar && a->name != x) || a->kind == TypeKind::OConst)
          return std::make_pair(t->arg, kind);
        if (a->kind == TypeKind::Arrow) {
          std::string y = freshen("y", free_vars(t->arg));
          TermPtr body = app(self(a->rhs), app(t->arg, app(other(a->lhs), fvar(y))));
          return std::make_pair(lam(y, body), kind);
        }
        if (a->kind == TypeKind::Forall) {
          std::set<std::string> avoid = free_type_vars(a);
          avoid.insert(x);
          std::string y = freshen(a->name.empty() ? "Y" : a->name, avoid);
          return std::make_pair(app(self(forall_open(a, tvar(y))), t->arg), kind);
        }
      }
      if (f->kind == TermKind::Lam)
        return std::make_pair(lam_open(f, t->arg), UvRuleKind::Beta);
      if (auto r = uv_step(f)) return std::make_pair(app(r->first, t->arg), r->second);
      if (auto r = uv_step(t->arg)) return std::make_pair(app(f, r->first), r->second);
      return std::nullopt;
    }
    case TermKind::Lam: {
      std::string n = freshen(t->name, free_vars(t));
      if (auto r = uv_step(term_fill(t->body, fvar(n))))
        return std::make_pair(lam(n, r->first), r->second);
      return std::nullopt;
    }
    default:
      return std::nullopt;
  }
}

inline ReductionOutcome uv_normalize(const TermPtr& t, long fuel = kDefaultFuel) {
  return normalize_with(t, fuel, [](const TermPtr& s) -> std::optional<TermPtr> {
    auto r = uv_step(s);
    if (!r) return std::nullopt;
    return r->first;
  });
}

// Termination measure for the non-beta rules: constants weigh the node count
// of their type (atoms included, so discharging a variable-annotated constant
// still strictly shrinks the measure), everything else just adds up.
inline long type_weight(const TypePtr& t) {
  switch (t->kind) {
    case TypeKind::BVar:
    case TypeKind::FVar:
    case TypeKind::OConst:
      return 1;
    case TypeKind::Arrow:
      return 1 + type_weight(t->lhs) + type_weight(t->rhs);
    case TypeKind::Forall:
      return 1 + type_weight(t->lhs);
  }
  return 1;
}

inline long measure_N(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::UConst:
    case TermKind::VConst:
      return type_weight(t->ctype);
    case TermKind::App:
      return measure_N(t->fun) + measure_N(t->arg);
    case TermKind::Lam:
      return measure_N(t->body);
    default:
      return 0;
  }
}

// Flattens coercion constants into their combinator expansions. The result is
// a term whose only remaining constants are the inert U[X, X] / V[X, X].
inline TermPtr flatten_coercions(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::UConst:
      return iprime(t->ctype, t->cvar);
    case TermKind::VConst:
      return jprime(t->ctype, t->cvar);
    case TermKind::App:
      return app(flatten_coercions(t->fun), flatten_coercions(t->arg));
    case TermKind::Lam:
      return lam_raw(t->name, flatten_coercions(t->body));
    default:
      return t;
  }
}

// ---------------------------------------------------------------------------
// Activity analysis. Relative to a set E of free-variable names:
//
//  - an occurrence of a variable is E-inactive if its name is in E, or if its
//    binder sits in the leading lambda prefix of an argument of a spine headed
//    by an E-inactive occurrence and the rest of that prefix's body still uses
//    it;
//  - a subterm is an E-inactive term if it is a spine (x)u1...un (n >= 0)
//    whose head occurrence is E-inactive;
//  - a subterm is E-passive if it results from stripping m >= 0 leading
//    lambdas off an argument of an E-inactive term.
//
// Binder identity is the tree position of the Lam node, so shadowed names
// need no renaming.
// ---------------------------------------------------------------------------

namespace detail {

struct VarId {
  bool is_free;
  std::string name;  // free variables
  TermPath binder;   // bound variables: path of the binding Lam

  bool operator<(const VarId& o) const {
    if (is_free != o.is_free) return is_free < o.is_free;
    if (is_free) return name < o.name;
    return binder < o.binder;
  }
  bool operator==(const VarId& o) const {
    return is_free == o.is_free && (is_free ? name == o.name : binder == o.binder);
  }
};

struct SpineUse {
  std::optional<VarId> head;        // set when the spine head is a variable
  TermPath head_path;
  std::vector<TermPath> arg_paths;  // left to right
  TermPath path;                    // the whole spine node
  TermKind head_kind;
};

struct ActivityScan {
  std::map<VarId, OccurrenceSet> occurrences;
  std::vector<SpineUse> spines;       // maximal application spines
  bool has_loose_uv = false;          // a U/V constant not in function position

  const TermPtr root;

  explicit ActivityScan(const TermPtr& t) : root(t) {
    TermPath path;
    std::vector<TermPath> env;
    walk(t, path, env, false);
  }

  void walk(const TermPtr& t, TermPath& path, std::vector<TermPath>& env, bool is_fun_child) {
    switch (t->kind) {
      case TermKind::FVar:
        occurrences[VarId{true, t->name, {}}].insert(path);
        return;
      case TermKind::BVar: {
        int pos = static_cast<int>(env.size()) - 1 - t->index;
        if (pos < 0) throw std::invalid_argument("activity scan: term is not locally closed");
        occurrences[VarId{false, "", env[pos]}].insert(path);
        return;
      }
      case TermKind::Alpha:
      case TermKind::Opaque:
        return;
      case TermKind::UConst:
      case TermKind::VConst:
        if (!is_fun_child) has_loose_uv = true;
        return;
      case TermKind::Lam: {
        env.push_back(path);
        path.push_back(0);
        walk(t->body, path, env, false);
        path.pop_back();
        env.pop_back();
        return;
      }
      case TermKind::App: {
        if (!is_fun_child) record_spine(t, path);
        path.push_back(0);
        walk(t->fun, path, env, true);
        path.back() = 1;
        walk(t->arg, path, env, false);
        path.pop_back();
        return;
      }
    }
  }

  void record_spine(const TermPtr& t, const TermPath& path) {
    SpineUse use;
    use.path = path;
    std::vector<TermPtr> parts;
    TermPtr cur = t;
    TermPath p = path;
    std::vector<TermPath> rev_args;
    while (cur->kind == TermKind::App) {
      TermPath ap = p;
      ap.push_back(1);
      rev_args.push_back(ap);
      p.push_back(0);
      cur = cur->fun;
    }
    use.arg_paths.assign(rev_args.rbegin(), rev_args.rend());
    use.head_path = p;
    use.head_kind = cur->kind;
    spines.push_back(std::move(use));
  }

  // Resolves the head of a spine node to a variable identity, if it is one.
  // The environment is reconstructed from the path: binders on the path are
  // exactly the Lam nodes above the head.
  std::optional<VarId> head_var(const SpineUse& use) const {
    TermPtr cur = root;
    std::vector<TermPath> env;
    TermPath walked;
    for (int step : use.head_path) {
      if (cur->kind == TermKind::Lam) env.push_back(walked);
      walked.push_back(step);
      cur = (cur->kind == TermKind::Lam) ? cur->body : (step == 0 ? cur->fun : cur->arg);
    }
    if (cur->kind == TermKind::FVar) return VarId{true, cur->name, {}};
    if (cur->kind == TermKind::BVar) {
      int pos = static_cast<int>(env.size()) - 1 - cur->index;
      if (pos < 0) throw std::invalid_argument("activity scan: term is not locally closed");
      return VarId{false, "", env[pos]};
    }
    return std::nullopt;
  }
};

struct ActivityResult {
  std::set<VarId> inactive;
  OccurrenceSet inactive_occurrences;
  std::set<TermPath> inactive_term_paths;  // spine nodes with inactive head
  std::set<TermPath> passive_paths;
};

inline ActivityResult activity_fixpoint(const TermPtr& t, const std::set<std::string>& e) {
  ActivityScan scan(t);
  ActivityResult res;
  for (const auto& name : e) res.inactive.insert(VarId{true, name, {}});

  // Pre-resolve spine heads once.
  std::vector<std::optional<VarId>> heads;
  heads.reserve(scan.spines.size());
  for (const auto& sp : scan.spines) heads.push_back(scan.head_var(sp));

  bool changed = true;
  while (changed) {
    changed = false;
    for (size_t i = 0; i < scan.spines.size(); ++i) {
      if (!heads[i] || !res.inactive.count(*heads[i])) continue;
      for (const auto& ap : scan.spines[i].arg_paths) {
        TermPtr cur = subterm_at(t, ap);
        TermPath cp = ap;
        while (cur->kind == TermKind::Lam) {
          if (term_mentions_bvar(cur->body, 0)) {
            VarId binder{false, "", cp};
            if (res.inactive.insert(binder).second) changed = true;
          }
          cp.push_back(0);
          cur = cur->body;
        }
      }
    }
  }

  for (const auto& [id, occs] : scan.occurrences)
    if (res.inactive.count(id)) res.inactive_occurrences.insert(occs.begin(), occs.end());

  for (size_t i = 0; i < scan.spines.size(); ++i) {
    if (!heads[i] || !res.inactive.count(*heads[i])) continue;
    // The spine node and every shorter prefix of it are inactive terms.
    TermPath prefix = scan.spines[i].path;
    res.inactive_term_paths.insert(prefix);
    for (size_t k = 0; k < scan.spines[i].arg_paths.size(); ++k) {
      prefix.push_back(0);
      res.inactive_term_paths.insert(prefix);
    }
    for (const auto& ap : scan.spines[i].arg_paths) {
      TermPtr cur = subterm_at(t, ap);
      TermPath cp = ap;
      res.passive_paths.insert(cp);
      while (cur->kind == TermKind::Lam) {
        cp.push_back(0);
        cur = cur->body;
        res.passive_paths.insert(cp);
      }
    }
  }

  // Bare variable occurrences are spines with zero arguments.
  for (const auto& [id, occs] : scan.occurrences)
    if (res.inactive.count(id)) res.inactive_term_paths.insert(occs.begin(), occs.end());

  return res;
}

} // namespace detail

inline OccurrenceSet e_inactive_variable_occurrences(const TermPtr& t,
                                                     const std::set<std::string>& e) {
  return detail::activity_fixpoint(t, e).inactive_occurrences;
}

inline std::set<TermPath> e_passive_subterm_paths(const TermPtr& t,
                                                  const std::set<std::string>& e) {
  return detail::activity_fixpoint(t, e).passive_paths;
}

// A term is E-good when every U constant is applied to exactly one argument
// forming an E-passive application, and every V constant is applied first to
// an E-inactive term.
inline bool is_e_good(const TermPtr& t, const std::set<std::string>& e) {
  detail::ActivityScan scan(t);
  if (scan.has_loose_uv) return false;
  detail::ActivityResult res = detail::activity_fixpoint(t, e);

  bool ok = true;
  struct Walker {
    const detail::ActivityResult& res;
    bool& ok;
    void go(const TermPtr& t, TermPath& path, bool is_fun_child) {
      if (!ok) return;
      switch (t->kind) {
        case TermKind::App: {
          if (t->fun->kind == TermKind::UConst) {
            // exactly one argument: this application must not be extended
            if (is_fun_child || !res.passive_paths.count(path)) { ok = false; return; }
          }
          if (t->fun->kind == TermKind::VConst) {
            TermPath ap = path;
            ap.push_back(1);
            if (!res.inactive_term_paths.count(ap)) { ok = false; return; }
          }
          path.push_back(0);
          go(t->fun, path, true);
          path.back() = 1;
          go(t->arg, path, false);
          path.pop_back();
          return;
        }
        case TermKind::Lam:
          path.push_back(0);
          go(t->body, path, false);
          path.pop_back();
          return;
        default:
          return;
      }
    }
  } w{res, ok};
  TermPath path;
  w.go(t, path, false);
  return ok;
}

inline bool is_good(const TermPtr& t) { return is_e_good(t, free_vars(t)); }

} // namespace systemf
