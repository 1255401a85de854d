#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <utility>

#include "json.hpp"
#include "systemf/polarity.hpp"
#include "systemf/reduction.hpp"
#include "systemf/syntax.hpp"

namespace systemf {

// ---------------------------------------------------------------------------
// Derivations.
//
// A derivation node stores its full judgement: an ordered context, the
// subject with binders opened to the names declared in the context, and the
// assigned type. Quantifier eliminations carry the instantiation type and a
// variant tag 1/2/3 describing the subject's shape (abstraction, variable
// headed spine, redex headed spine). Contexts compare as maps: entry order is
// kept for printing only.
// ---------------------------------------------------------------------------

enum class RuleTag { Ax, ArrowI, ArrowE, ForallI, ForallE };

inline const char* rule_name(RuleTag r) {
  switch (r) {
    case RuleTag::Ax: return "ax";
    case RuleTag::ArrowI: return "arrow_i";
    case RuleTag::ArrowE: return "arrow_e";
    case RuleTag::ForallI: return "forall_i";
    case RuleTag::ForallE: return "forall_e";
  }
  return "?";
}

struct ContextEntry {
  std::string name;
  TypePtr type;
};
using Context = std::vector<ContextEntry>;

struct Derivation;
using DerivPtr = std::shared_ptr<const Derivation>;

struct Derivation {
  RuleTag rule;
  Context context;
  TermPtr subject;
  TypePtr type;
  int variant = 0;            // ForallE only
  TypePtr instantiated_with;  // ForallE only
  std::string binder;         // ArrowI: bound name; ForallI: generalized atom
  std::vector<DerivPtr> premises;
};

inline const TypePtr* ctx_lookup(const Context& ctx, const std::string& name) {
  for (const auto& e : ctx)
    if (e.name == name) return &e.type;
  return nullptr;
}

inline bool ctx_same(const Context& a, const Context& b) {
  if (a.size() != b.size()) return false;
  for (const auto& e : a) {
    const TypePtr* t = ctx_lookup(b, e.name);
    if (!t || !type_equal(e.type, *t)) return false;
  }
  return true;
}

inline Context ctx_extend(const Context& ctx, const std::string& name, const TypePtr& t) {
  if (ctx_lookup(ctx, name)) throw std::invalid_argument("ctx_extend: duplicate name " + name);
  Context out = ctx;
  out.push_back({name, t});
  return out;
}

inline Context ctx_remove(const Context& ctx, const std::string& name) {
  Context out;
  for (const auto& e : ctx)
    if (e.name != name) out.push_back(e);
  return out;
}

inline std::set<std::string> ctx_free_type_vars(const Context& ctx) {
  std::set<std::string> out;
  for (const auto& e : ctx) free_type_vars_into(e.type, out);
  return out;
}

inline std::set<std::string> ctx_names(const Context& ctx) {
  std::set<std::string> out;
  for (const auto& e : ctx) out.insert(e.name);
  return out;
}

// Subject shape for the three quantifier elimination variants.
inline int subject_variant(const TermPtr& t) {
  if (t->kind == TermKind::Lam) return 1;
  std::vector<TermPtr> args;
  TermPtr head = spine_head(t, &args);
  if (head->kind == TermKind::FVar || head->kind == TermKind::Alpha) return 2;
  if (head->kind == TermKind::Lam && !args.empty()) return 3;
  return 0;
}

// ---------------------------------------------------------------------------
// Node constructors. Each asserts the local side conditions so that a tree
// assembled from them is correct by construction; check_derivation re-verifies
// everything independently.
// ---------------------------------------------------------------------------

inline DerivPtr deriv_ax(const Context& ctx, const std::string& name) {
  const TypePtr* t = ctx_lookup(ctx, name);
  if (!t) throw std::invalid_argument("deriv_ax: " + name + " not in context");
  TermPtr subject = name == "alpha" ? alpha_const() : fvar(name);
  return std::make_shared<Derivation>(
      Derivation{RuleTag::Ax, ctx, subject, *t, 0, nullptr, "", {}});
}

inline DerivPtr deriv_arrow_i(const DerivPtr& body, const std::string& binder) {
  const TypePtr* a = ctx_lookup(body->context, binder);
  if (!a) throw std::invalid_argument("deriv_arrow_i: binder " + binder + " not in context");
  Context ctx = ctx_remove(body->context, binder);
  TermPtr subject = lam(binder, body->subject);
  return std::make_shared<Derivation>(Derivation{
      RuleTag::ArrowI, ctx, subject, arrow(*a, body->type), 0, nullptr, binder, {body}});
}

inline DerivPtr deriv_arrow_e(const DerivPtr& f, const DerivPtr& a) {
  if (!ctx_same(f->context, a->context))
    throw std::invalid_argument("deriv_arrow_e: contexts differ");
  if (f->type->kind != TypeKind::Arrow) throw std::invalid_argument("deriv_arrow_e: not an arrow");
  if (!type_equal(f->type->lhs, a->type))
    throw std::invalid_argument("deriv_arrow_e: argument type mismatch");
  return std::make_shared<Derivation>(Derivation{
      RuleTag::ArrowE, f->context, app(f->subject, a->subject), f->type->rhs, 0, nullptr, "", {f, a}});
}

inline DerivPtr deriv_forall_i(const DerivPtr& d, const std::string& var) {
  std::set<std::string> ftv = ctx_free_type_vars(d->context);
  if (ftv.count(var))
    throw std::invalid_argument("deriv_forall_i: " + var + " free in the context");
  return std::make_shared<Derivation>(Derivation{
      RuleTag::ForallI, d->context, d->subject, forall(var, d->type), 0, nullptr, var, {d}});
}

inline DerivPtr deriv_forall_e(const DerivPtr& d, const TypePtr& g) {
  if (d->type->kind != TypeKind::Forall)
    throw std::invalid_argument("deriv_forall_e: not a quantified type");
  if (!type_mentions_bvar(d->type->lhs, 0))
    throw std::invalid_argument("deriv_forall_e: vacuous quantifier cannot be eliminated");
  int variant = subject_variant(d->subject);
  if (variant == 0) throw std::invalid_argument("deriv_forall_e: subject shape unsupported");
  return std::make_shared<Derivation>(Derivation{
      RuleTag::ForallE, d->context, d->subject, forall_open(d->type, g), variant, g, "", {d}});
}

// ---------------------------------------------------------------------------
// The checker. Walks the tree and re-verifies every rule schema from scratch,
// reporting the first offending node by its premise-index path.
// ---------------------------------------------------------------------------

struct CheckResult {
  bool ok = true;
  std::string error;
  std::vector<int> path;
};

namespace detail {

inline bool ctx_distinct(const Context& ctx) {
  std::set<std::string> seen;
  for (const auto& e : ctx)
    if (!seen.insert(e.name).second) return false;
  return true;
}

inline bool check_node(const DerivPtr& d, std::vector<int>& path, CheckResult& res) {
  auto fail = [&](const std::string& msg) {
    res.ok = false;
    res.error = msg;
    res.path = path;
    return false;
  };
  if (!d) return fail("null node");
  if (!ctx_distinct(d->context)) return fail("duplicate context names");
  for (const auto& e : d->context)
    if (type_has_mvar(e.type)) return fail("metavariable in context");
  if (type_has_mvar(d->type)) return fail("metavariable in type");

  switch (d->rule) {
    case RuleTag::Ax: {
      if (!d->premises.empty()) return fail("ax with premises");
      std::string name;
      if (d->subject->kind == TermKind::FVar) name = d->subject->name;
      else if (d->subject->kind == TermKind::Alpha) name = "alpha";
      else return fail("ax subject is not a variable");
      const TypePtr* t = ctx_lookup(d->context, name);
      if (!t) return fail("ax: " + name + " not declared");
      if (!type_equal(*t, d->type)) return fail("ax: declared type differs");
      return true;
    }
    case RuleTag::ArrowI: {
      if (d->premises.size() != 1) return fail("arrow_i premise count");
      const DerivPtr& p = d->premises[0];
      if (d->subject->kind != TermKind::Lam) return fail("arrow_i subject is not an abstraction");
      if (d->type->kind != TypeKind::Arrow) return fail("arrow_i type is not an arrow");
      if (p->context.size() != d->context.size() + 1) return fail("arrow_i premise context size");
      std::string binder;
      for (const auto& e : p->context)
        if (!ctx_lookup(d->context, e.name)) {
          if (!binder.empty()) return fail("arrow_i premise adds two names");
          binder = e.name;
        }
      if (binder.empty()) return fail("arrow_i premise adds no name");
      for (const auto& e : d->context) {
        const TypePtr* t = ctx_lookup(p->context, e.name);
        if (!t || !type_equal(e.type, *t)) return fail("arrow_i premise context mismatch");
      }
      const TypePtr* bt = ctx_lookup(p->context, binder);
      if (!type_equal(*bt, d->type->lhs)) return fail("arrow_i binder type mismatch");
      if (!type_equal(p->type, d->type->rhs)) return fail("arrow_i body type mismatch");
      if (!term_equal(p->subject, lam_open(d->subject, fvar(binder))))
        return fail("arrow_i premise subject mismatch");
      path.push_back(0);
      bool ok = check_node(p, path, res);
      path.pop_back();
      return ok;
    }
    case RuleTag::ArrowE: {
      if (d->premises.size() != 2) return fail("arrow_e premise count");
      const DerivPtr& f = d->premises[0];
      const DerivPtr& a = d->premises[1];
      if (d->subject->kind != TermKind::App) return fail("arrow_e subject is not an application");
      if (!ctx_same(d->context, f->context) || !ctx_same(d->context, a->context))
        return fail("arrow_e contexts differ");
      if (f->type->kind != TypeKind::Arrow) return fail("arrow_e function type is not an arrow");
      if (!type_equal(f->type->lhs, a->type)) return fail("arrow_e argument type mismatch");
      if (!type_equal(f->type->rhs, d->type)) return fail("arrow_e result type mismatch");
      if (!term_equal(d->subject->fun, f->subject) || !term_equal(d->subject->arg, a->subject))
        return fail("arrow_e subject mismatch");
      for (int i = 0; i < 2; ++i) {
        path.push_back(i);
        bool ok = check_node(d->premises[i], path, res);
        path.pop_back();
        if (!ok) return false;
      }
      return true;
    }
    case RuleTag::ForallI: {
      if (d->premises.size() != 1) return fail("forall_i premise count");
      const DerivPtr& p = d->premises[0];
      if (d->type->kind != TypeKind::Forall) return fail("forall_i type is not quantified");
      if (!ctx_same(d->context, p->context)) return fail("forall_i context mismatch");
      if (!term_equal(d->subject, p->subject)) return fail("forall_i subject mismatch");
      std::set<std::string> ctx_ftv = ctx_free_type_vars(d->context);
      bool witness = false;
      if (!type_mentions_bvar(d->type->lhs, 0) && type_equal(p->type, d->type->lhs))
        witness = true;  // vacuous generalization
      if (!witness) {
        for (const std::string& x : free_type_vars(p->type)) {
          if (ctx_ftv.count(x)) continue;
          if (type_equal(type_abstract(p->type, x), d->type->lhs)) {
            witness = true;
            break;
          }
        }
      }
      if (!witness) return fail("forall_i: no admissible generalized variable");
      path.push_back(0);
      bool ok = check_node(p, path, res);
      path.pop_back();
      return ok;
    }
    case RuleTag::ForallE: {
      if (d->premises.size() != 1) return fail("forall_e premise count");
      const DerivPtr& p = d->premises[0];
      if (!d->instantiated_with) return fail("forall_e missing instantiation");
      if (type_has_mvar(d->instantiated_with)) return fail("forall_e metavariable instantiation");
      if (!is_proper(d->instantiated_with)) return fail("forall_e instantiation is not proper");
      if (p->type->kind != TypeKind::Forall) return fail("forall_e premise type is not quantified");
      if (!type_mentions_bvar(p->type->lhs, 0)) return fail("forall_e vacuous quantifier");
      if (!ctx_same(d->context, p->context)) return fail("forall_e context mismatch");
      if (!term_equal(d->subject, p->subject)) return fail("forall_e subject mismatch");
      if (!type_equal(d->type, forall_open(p->type, d->instantiated_with)))
        return fail("forall_e conclusion type mismatch");
      if (d->variant != subject_variant(d->subject)) return fail("forall_e variant mismatch");
      path.push_back(0);
      bool ok = check_node(p, path, res);
      path.pop_back();
      return ok;
    }
  }
  return fail("unknown rule");
}

} // namespace detail

inline CheckResult check_derivation_detail(const DerivPtr& d) {
  CheckResult res;
  std::vector<int> path;
  detail::check_node(d, path, res);
  return res;
}

inline bool check_derivation(const DerivPtr& d) { return check_derivation_detail(d).ok; }

inline int derivation_size(const DerivPtr& d) {
  int n = 1;
  for (const auto& p : d->premises) n += derivation_size(p);
  return n;
}

inline void classify_forall_elims_into(const DerivPtr& d, std::vector<int>& path,
                                       std::vector<std::pair<std::vector<int>, int>>& out) {
  if (d->rule == RuleTag::ForallE) out.emplace_back(path, d->variant);
  for (size_t i = 0; i < d->premises.size(); ++i) {
    path.push_back(static_cast<int>(i));
    classify_forall_elims_into(d->premises[i], path, out);
    path.pop_back();
  }
}

inline std::vector<std::pair<std::vector<int>, int>> classify_forall_elims(const DerivPtr& d) {
  std::vector<std::pair<std::vector<int>, int>> out;
  std::vector<int> path;
  classify_forall_elims_into(d, path, out);
  return out;
}

inline bool uses_forall_elim(const DerivPtr& d) {
  if (d->rule == RuleTag::ForallE) return true;
  for (const auto& p : d->premises)
    if (uses_forall_elim(p)) return true;
  return false;
}

inline const Derivation* derivation_at(const DerivPtr& d, const std::vector<int>& path) {
  const Derivation* cur = d.get();
  for (int i : path) {
    if (i < 0 || i >= static_cast<int>(cur->premises.size()))
      throw std::out_of_range("derivation_at: bad path");
    cur = cur->premises[i].get();
  }
  return cur;
}

inline nlohmann::ordered_json derivation_to_json(const DerivPtr& d) {
  nlohmann::ordered_json j;
  j["rule"] = rule_name(d->rule);
  nlohmann::ordered_json ctx = nlohmann::ordered_json::array();
  for (const auto& e : d->context) {
    nlohmann::ordered_json entry;
    entry["name"] = e.name;
    entry["type"] = print_type(e.type);
    ctx.push_back(entry);
  }
  j["context"] = ctx;
  j["subject"] = print_term(d->subject);
  j["type"] = print_type(d->type);
  if (d->rule == RuleTag::ForallE) {
    j["variant"] = d->variant;
    j["instantiated_with"] = print_type(d->instantiated_with);
  }
  nlohmann::ordered_json prem = nlohmann::ordered_json::array();
  for (const auto& p : d->premises) prem.push_back(derivation_to_json(p));
  j["premises"] = prem;
  return j;
}

// ---------------------------------------------------------------------------
// Derivation transformers: weakening, substitution of a derivation for a
// context variable, one leftmost-outermost subject reduction step, and a
// homomorphic type map. Substitution requires the usual hygiene (no binder in
// the tree reuses a name free in the substituted derivation); constructors
// fail loudly if it is violated.
// ---------------------------------------------------------------------------

inline DerivPtr weaken_derivation_list(const DerivPtr& d, const Context& extra) {
  Context ctx = d->context;
  for (const auto& e : extra) {
    if (ctx_lookup(ctx, e.name))
      throw std::invalid_argument("weaken_derivation: name collision on " + e.name);
    ctx.push_back(e);
  }
  std::vector<DerivPtr> prem;
  prem.reserve(d->premises.size());
  for (const auto& p : d->premises) prem.push_back(weaken_derivation_list(p, extra));
  return std::make_shared<Derivation>(Derivation{
      d->rule, ctx, d->subject, d->type, d->variant, d->instantiated_with, d->binder, prem});
}

inline DerivPtr weaken_derivation(const DerivPtr& d, const std::string& name, const TypePtr& t) {
  return weaken_derivation_list(d, Context{{name, t}});
}

inline void derivation_term_names_into(const DerivPtr& d, std::set<std::string>& out) {
  for (const auto& e : d->context) out.insert(e.name);
  if (d->rule == RuleTag::ArrowI) out.insert(d->binder);
  for (const auto& p : d->premises) derivation_term_names_into(p, out);
}

inline void derivation_type_atoms_into(const DerivPtr& d, std::set<std::string>& out) {
  for (const auto& e : d->context) free_type_vars_into(e.type, out);
  free_type_vars_into(d->type, out);
  if (d->instantiated_with) free_type_vars_into(d->instantiated_with, out);
  if (d->rule == RuleTag::ForallI) out.insert(d->binder);
  for (const auto& p : d->premises) derivation_type_atoms_into(p, out);
}

namespace detail {

// Renames the free type atom w to w2 throughout a subtree. A nested
// quantifier introduction over the same name owns everything below it, so the
// walk stops there.
inline DerivPtr rename_free_type_atom(const DerivPtr& d, const std::string& w,
                                      const std::string& w2) {
  if (d->rule == RuleTag::ForallI && d->binder == w) return d;
  auto ren = [&](const TypePtr& t) { return type_subst(t, w, tvar(w2)); };
  Context ctx;
  ctx.reserve(d->context.size());
  for (const auto& e : d->context) ctx.push_back({e.name, ren(e.type)});
  std::vector<DerivPtr> prem;
  prem.reserve(d->premises.size());
  for (const auto& p : d->premises) prem.push_back(rename_free_type_atom(p, w, w2));
  return std::make_shared<Derivation>(Derivation{
      d->rule, ctx, d->subject, ren(d->type), d->variant,
      d->instantiated_with ? ren(d->instantiated_with) : nullptr, d->binder, prem});
}

// Renames the term variable `from` (context entry, axiom subjects, free
// occurrences) to `to` throughout. Valid derivations never rebind a name that
// is still in scope, so a plain walk cannot capture.
inline DerivPtr rename_term_var_in_derivation(const DerivPtr& d, const std::string& from,
                                              const std::string& to) {
  if (from == "alpha" || to == "alpha")
    throw std::invalid_argument("rename_term_var_in_derivation: the marker is not renamable");
  Context ctx;
  ctx.reserve(d->context.size());
  for (const auto& e : d->context) ctx.push_back({e.name == from ? to : e.name, e.type});
  std::vector<DerivPtr> prem;
  prem.reserve(d->premises.size());
  for (const auto& p : d->premises) prem.push_back(rename_term_var_in_derivation(p, from, to));
  return std::make_shared<Derivation>(Derivation{
      d->rule, ctx, subst(d->subject, from, fvar(to)), d->type, d->variant, d->instantiated_with,
      d->rule == RuleTag::ArrowI && d->binder == from ? to : d->binder, prem});
}

// Renames away any quantifier introductions whose abstracted atom occurs free
// in the types of entries about to be weakened in, so the generalization
// stays admissible afterwards.
inline DerivPtr dodge_type_atom_collisions(const DerivPtr& d, const std::set<std::string>& bad,
                                           std::set<std::string>& taken) {
  std::vector<DerivPtr> prem;
  prem.reserve(d->premises.size());
  bool changed = false;
  for (const auto& p : d->premises) {
    DerivPtr q = dodge_type_atom_collisions(p, bad, taken);
    changed |= q != p;
    prem.push_back(q);
  }
  if (d->rule == RuleTag::ForallI && bad.count(d->binder) &&
      free_type_vars(prem[0]->type).count(d->binder)) {
    std::string w2 = freshen(d->binder, taken);
    taken.insert(w2);
    return deriv_forall_i(rename_free_type_atom(prem[0], d->binder, w2), w2);
  }
  if (!changed) return d;
  return std::make_shared<Derivation>(Derivation{d->rule, d->context, d->subject, d->type,
                                                 d->variant, d->instantiated_with, d->binder,
                                                 prem});
}

// Renames away any inner abstraction binders that collide with the given
// names, so the tree can be weakened by entries of those names.
inline DerivPtr dodge_binder_collisions(const DerivPtr& d, const std::set<std::string>& names) {
  std::set<std::string> binders;
  std::set<std::string> taken = names;
  derivation_term_names_into(d, taken);
  std::function<void(const DerivPtr&)> collect = [&](const DerivPtr& p) {
    if (p->rule == RuleTag::ArrowI) binders.insert(p->binder);
    for (const auto& q : p->premises) collect(q);
  };
  collect(d);
  DerivPtr out = d;
  for (const auto& b : binders) {
    if (!names.count(b)) continue;
    std::string b2 = freshen(b, taken);
    taken.insert(b2);
    out = rename_term_var_in_derivation(out, b, b2);
  }
  return out;
}

} // namespace detail

// Replaces the context variable x throughout d by the subject of dv, plugging
// dv (suitably weakened) at every axiom leaf that consumed x.
inline DerivPtr subst_in_derivation(const DerivPtr& d, const std::string& x, const DerivPtr& dv) {
  if (d->rule == RuleTag::Ax &&
      ((d->subject->kind == TermKind::FVar && d->subject->name == x) ||
       (d->subject->kind == TermKind::Alpha && x == "alpha"))) {
    Context target = ctx_remove(d->context, x);
    Context extra;
    for (const auto& e : target)
      if (!ctx_lookup(dv->context, e.name)) extra.push_back(e);
    DerivPtr out = dv;
    if (!extra.empty()) {
      std::set<std::string> names;
      std::set<std::string> atoms;
      for (const auto& e : extra) {
        names.insert(e.name);
        free_type_vars_into(e.type, atoms);
      }
      out = detail::dodge_binder_collisions(out, names);
      if (!atoms.empty()) {
        std::set<std::string> taken = atoms;
        derivation_type_atoms_into(out, taken);
        out = detail::dodge_type_atom_collisions(out, atoms, taken);
      }
      out = weaken_derivation_list(out, extra);
    }
    if (!ctx_same(out->context, target))
      throw std::invalid_argument("subst_in_derivation: replacement context mismatch");
    return out;
  }
  Context ctx = ctx_remove(d->context, x);
  TermPtr subject = subst(d->subject, x, dv->subject);
  std::vector<DerivPtr> prem;
  prem.reserve(d->premises.size());
  for (const auto& p : d->premises) prem.push_back(subst_in_derivation(p, x, dv));
  return std::make_shared<Derivation>(Derivation{
      d->rule, ctx, subject, d->type,
      d->rule == RuleTag::ForallE ? subject_variant(subject) : d->variant,
      d->instantiated_with, d->binder, prem});
}

namespace detail {

inline DerivPtr subst_type_rec(const DerivPtr& d, const std::string& z, const TypePtr& g,
                               const std::set<std::string>& gvars,
                               std::set<std::string>& avoid) {
  if (d->rule == RuleTag::ForallI && (d->binder == z || gvars.count(d->binder))) {
    std::string w2 = freshen(d->binder, avoid);
    avoid.insert(w2);
    DerivPtr prem = rename_free_type_atom(d->premises[0], d->binder, w2);
    return subst_type_rec(deriv_forall_i(prem, w2), z, g, gvars, avoid);
  }
  auto sub = [&](const TypePtr& t) { return type_subst(t, z, g); };
  Context ctx;
  ctx.reserve(d->context.size());
  for (const auto& e : d->context) ctx.push_back({e.name, sub(e.type)});
  std::vector<DerivPtr> prem;
  prem.reserve(d->premises.size());
  for (const auto& p : d->premises) prem.push_back(subst_type_rec(p, z, g, gvars, avoid));
  return std::make_shared<Derivation>(Derivation{
      d->rule, ctx, d->subject, sub(d->type), d->variant,
      d->instantiated_with ? sub(d->instantiated_with) : nullptr, d->binder, prem});
}

} // namespace detail

// Substitutes g for the free type atom z in every judgment of the tree.
// Quantifier-introduction binders that would capture a variable of g (or
// shadow z) are renamed first, so the result checks whenever the input did.
inline DerivPtr substitute_type_in_derivation(const DerivPtr& d, const std::string& z,
                                              const TypePtr& g) {
  std::set<std::string> avoid;
  derivation_type_atoms_into(d, avoid);
  std::set<std::string> gvars = free_type_vars(g);
  for (const auto& v : gvars) avoid.insert(v);
  avoid.insert(z);
  return detail::subst_type_rec(d, z, g, gvars, avoid);
}

// Collapses the quantifier introduction/elimination pairs stacked between an
// abstraction and its application, exposing the arrow-introduction node for
// the same judgment. Returns null when the tree is not of that shape.
inline DerivPtr strip_quantifier_rules(const DerivPtr& d) {
  if (d->rule == RuleTag::ArrowI || d->rule == RuleTag::ForallI) return d;
  if (d->rule != RuleTag::ForallE) return nullptr;
  DerivPtr p = strip_quantifier_rules(d->premises[0]);
  if (!p || p->rule != RuleTag::ForallI) return nullptr;
  return strip_quantifier_rules(
      substitute_type_in_derivation(p->premises[0], p->binder, d->instantiated_with));
}

// One leftmost-outermost beta step on the subject, contracted inside the
// derivation. An applied abstraction typed through interleaved quantifier
// rules is contracted by substituting those instantiations into the body.
inline std::optional<DerivPtr> subject_beta_step_derivation(const DerivPtr& d) {
  switch (d->rule) {
    case RuleTag::Ax:
      return std::nullopt;
    case RuleTag::ArrowI: {
      auto p = subject_beta_step_derivation(d->premises[0]);
      if (!p) return std::nullopt;
      return deriv_arrow_i(*p, d->binder);
    }
    case RuleTag::ForallI: {
      auto p = subject_beta_step_derivation(d->premises[0]);
      if (!p) return std::nullopt;
      return deriv_forall_i(*p, d->binder);
    }
    case RuleTag::ForallE: {
      auto p = subject_beta_step_derivation(d->premises[0]);
      if (!p) return std::nullopt;
      return deriv_forall_e(*p, d->instantiated_with);
    }
    case RuleTag::ArrowE: {
      const DerivPtr& f = d->premises[0];
      const DerivPtr& a = d->premises[1];
      if (f->rule == RuleTag::ArrowI)
        return subst_in_derivation(f->premises[0], f->binder, a);
      if (f->subject->kind == TermKind::Lam) {
        DerivPtr s = strip_quantifier_rules(f);
        if (s && s->rule == RuleTag::ArrowI)
          return subst_in_derivation(s->premises[0], s->binder, a);
        return std::nullopt;
      }
      if (auto nf = subject_beta_step_derivation(f)) return deriv_arrow_e(*nf, a);
      if (auto na = subject_beta_step_derivation(a)) return deriv_arrow_e(f, *na);
      return std::nullopt;
    }
  }
  return std::nullopt;
}

inline DerivPtr map_types_in_derivation(const DerivPtr& d,
                                        const std::function<TypePtr(const TypePtr&)>& f) {
  Context ctx;
  ctx.reserve(d->context.size());
  for (const auto& e : d->context) ctx.push_back({e.name, f(e.type)});
  std::vector<DerivPtr> prem;
  prem.reserve(d->premises.size());
  for (const auto& p : d->premises) prem.push_back(map_types_in_derivation(p, f));
  return std::make_shared<Derivation>(Derivation{
      d->rule, ctx, d->subject, f(d->type), d->variant,
      d->instantiated_with ? f(d->instantiated_with) : nullptr, d->binder, prem});
}

// ---------------------------------------------------------------------------
// Pairing derivations: from u : A and v : B build <u, v> : A /\ B, and from
// t : A /\ B build (t) K1 : A and (t) K0 : B.
// ---------------------------------------------------------------------------

inline DerivPtr deriv_pair(const DerivPtr& du, const DerivPtr& dv) {
  if (!ctx_same(du->context, dv->context)) throw std::invalid_argument("deriv_pair: contexts differ");
  const TypePtr& a = du->type;
  const TypePtr& b = dv->type;
  std::set<std::string> taken = ctx_names(du->context);
  for (const auto& n : free_vars(du->subject)) taken.insert(n);
  for (const auto& n : free_vars(dv->subject)) taken.insert(n);
  std::string z = freshen("z", taken);
  std::set<std::string> ftv = ctx_free_type_vars(du->context);
  free_type_vars_into(a, ftv);
  free_type_vars_into(b, ftv);
  std::string w = freshen("W", ftv);
  TypePtr handler = arrow(a, arrow(b, tvar(w)));
  Context inner = ctx_extend(du->context, z, handler);
  DerivPtr dz = deriv_ax(inner, z);
  DerivPtr body = deriv_arrow_e(deriv_arrow_e(dz, weaken_derivation(du, z, handler)),
                                weaken_derivation(dv, z, handler));
  return deriv_forall_i(deriv_arrow_i(body, z), w);
}

namespace detail {

inline DerivPtr deriv_const_selector(const Context& ctx, const TypePtr& a, const TypePtr& b,
                                     bool first) {
  std::set<std::string> taken = ctx_names(ctx);
  std::string x = freshen("x", taken);
  taken.insert(x);
  std::string y = freshen("y", taken);
  Context full = ctx_extend(ctx_extend(ctx, x, a), y, b);
  DerivPtr leaf = deriv_ax(full, first ? x : y);
  return deriv_arrow_i(deriv_arrow_i(leaf, y), x);
}

} // namespace detail

inline DerivPtr deriv_proj_first(const DerivPtr& dt, const TypePtr& a, const TypePtr& b) {
  if (!type_equal(dt->type, conj_type({a, b})))
    throw std::invalid_argument("deriv_proj_first: subject type is not the conjunction");
  DerivPtr inst = deriv_forall_e(dt, a);
  return deriv_arrow_e(inst, detail::deriv_const_selector(dt->context, a, b, true));
}

inline DerivPtr deriv_proj_second(const DerivPtr& dt, const TypePtr& a, const TypePtr& b) {
  if (!type_equal(dt->type, conj_type({a, b})))
    throw std::invalid_argument("deriv_proj_second: subject type is not the conjunction");
  DerivPtr inst = deriv_forall_e(dt, b);
  return deriv_arrow_e(inst, detail::deriv_const_selector(dt->context, a, b, false));
}

// ---------------------------------------------------------------------------
// Bounded derivation search.
//
// Typability in this system is undecidable, so the search answers three ways:
// Found (with a re-checked derivation), None (the syntax-directed space was
// exhausted and every dead end was a forced mismatch), or Unknown (some
// branch was cut by a budget or by the incomplete instantiation pool).
//
// Instantiations are solved by first-order unification with metavariables. A
// birth-stamp discipline keeps assignments from mentioning atoms introduced
// after the metavariable, which guarantees the freshness side conditions of
// the rebuilt derivation.
// ---------------------------------------------------------------------------

struct SearchBudget {
  int max_instantiation_size = 8;  // connective count of candidate instantiations
  int max_depth = 24;
  int max_candidates_per_node = 64;
  long node_cap = 2000000;
};

enum class SearchStatus { Found, None, Unknown };

struct SearchOutcome {
  SearchStatus status = SearchStatus::None;
  DerivPtr derivation;
};

namespace search_detail {

struct SolverState {
  std::vector<TypePtr> assign;  // by metavariable index; null while unbound
  std::vector<int> trail;       // bind order, unwound on backtracking
  std::vector<long> mvar_birth;
  std::map<std::string, long> atom_birth;
  std::set<std::string> taken;
  std::map<std::string, int> name_next;  // probe floor per hint; names are never released
  int next_mvar = 0;
  long clock = 0;
  long nodes = 0;
  long node_cap = 2000000;
  int name_counter = 0;
  bool truncated = false;
  SearchBudget budget;
};

inline size_t trail_mark(const SolverState& st) { return st.trail.size(); }

inline void trail_undo(SolverState& st, size_t mark) {
  while (st.trail.size() > mark) {
    st.assign[st.trail.back()] = nullptr;
    st.trail.pop_back();
  }
}

inline TypePtr walk(TypePtr t, const SolverState& st) {
  while (t->kind == TypeKind::MVar && t->index < static_cast<int>(st.assign.size()) &&
         st.assign[t->index])
    t = st.assign[t->index];
  return t;
}

inline TypePtr resolve(const TypePtr& t0, const SolverState& st) {
  TypePtr t = walk(t0, st);
  switch (t->kind) {
    case TypeKind::Arrow:
      return arrow(resolve(t->lhs, st), resolve(t->rhs, st));
    case TypeKind::Forall:
      return forall_raw(t->name, resolve(t->lhs, st));
    default:
      return t;
  }
}

inline bool occurs(int m, const TypePtr& t0, const SolverState& st) {
  TypePtr t = walk(t0, st);
  switch (t->kind) {
    case TypeKind::MVar:
      return t->index == m;
    case TypeKind::Arrow:
      return occurs(m, t->lhs, st) || occurs(m, t->rhs, st);
    case TypeKind::Forall:
      return occurs(m, t->lhs, st);
    default:
      return false;
  }
}

inline bool has_dangling_bvar(const TypePtr& t, int depth = 0) {
  switch (t->kind) {
    case TypeKind::BVar:
      return t->index >= depth;
    case TypeKind::Arrow:
      return has_dangling_bvar(t->lhs, depth) || has_dangling_bvar(t->rhs, depth);
    case TypeKind::Forall:
      return has_dangling_bvar(t->lhs, depth + 1);
    default:
      return false;
  }
}

inline bool birth_ok(const TypePtr& t0, long limit, SolverState& st) {
  TypePtr t = walk(t0, st);
  switch (t->kind) {
    case TypeKind::FVar: {
      auto it = st.atom_birth.find(t->name);
      return it == st.atom_birth.end() || it->second <= limit;
    }
    case TypeKind::MVar: {
      long& b = st.mvar_birth[t->index];
      if (b > limit) b = limit;  // promote: future assignments obey the older scope
      return true;
    }
    case TypeKind::Arrow:
      return birth_ok(t->lhs, limit, st) && birth_ok(t->rhs, limit, st);
    case TypeKind::Forall:
      return birth_ok(t->lhs, limit, st);
    default:
      return true;
  }
}

inline bool bind_mvar(const TypePtr& m, const TypePtr& t, SolverState& st) {
  if (occurs(m->index, t, st)) return false;
  if (has_dangling_bvar(resolve(t, st))) return false;
  if (!birth_ok(t, st.mvar_birth[m->index], st)) return false;
  st.assign[m->index] = t;
  st.trail.push_back(m->index);
  return true;
}

inline bool unify(const TypePtr& a0, const TypePtr& b0, SolverState& st) {
  TypePtr a = walk(a0, st);
  TypePtr b = walk(b0, st);
  if (a->kind == TypeKind::MVar && b->kind == TypeKind::MVar && a->index == b->index) return true;
  if (a->kind == TypeKind::MVar) return bind_mvar(a, b, st);
  if (b->kind == TypeKind::MVar) return bind_mvar(b, a, st);
  if (a->kind != b->kind) return false;
  switch (a->kind) {
    case TypeKind::BVar: return a->index == b->index;
    case TypeKind::FVar: return a->name == b->name;
    case TypeKind::OConst: return true;
    case TypeKind::Arrow: return unify(a->lhs, b->lhs, st) && unify(a->rhs, b->rhs, st);
    case TypeKind::Forall: return unify(a->lhs, b->lhs, st);
    default: return false;
  }
}

inline TypePtr fresh_mvar(SolverState& st) {
  int i = st.next_mvar++;
  st.assign.push_back(nullptr);
  st.mvar_birth.push_back(++st.clock);
  return tmvar(i);
}

inline std::string next_name(SolverState& st, const std::string& base) {
  int& n = st.name_next[base];
  std::string name;
  do {
    name = n == 0 ? base : base + std::to_string(n);
    ++n;
  } while (st.taken.count(name));
  st.taken.insert(name);
  return name;
}

inline std::string fresh_atom(SolverState& st, const std::string& hint) {
  std::string name = next_name(st, hint);
  st.atom_birth[name] = ++st.clock;
  return name;
}

inline std::string fresh_term_name(SolverState& st, const std::string& hint) {
  return next_name(st, hint.empty() ? "x" : hint);
}

// Candidate instantiations: atoms in scope, dangling-free subtrees of the
// context and goal, the identity and boolean types, closed under arrow and
// binary conjunction up to the connective budget. Sorted by (size, print).
inline void collect_pool_seeds(const TypePtr& t, std::vector<TypePtr>& out) {
  if (!has_dangling_bvar(t) && !type_has_mvar(t)) out.push_back(t);
  switch (t->kind) {
    case TypeKind::Arrow:
      collect_pool_seeds(t->lhs, out);
      collect_pool_seeds(t->rhs, out);
      break;
    case TypeKind::Forall:
      collect_pool_seeds(t->lhs, out);
      break;
    default:
      break;
  }
}

struct Pool {
  std::vector<TypePtr> candidates;
  bool complete_under_size = false;  // the closure never is; kept for clarity
};

inline Pool build_pool(const Context& ctx, const TypePtr& goal, const SearchBudget& budget,
                       const SolverState& st) {
  std::vector<TypePtr> seeds;
  for (const auto& e : ctx) collect_pool_seeds(resolve(e.type, st), seeds);
  collect_pool_seeds(resolve(goal, st), seeds);
  seeds.push_back(identity_type());
  seeds.push_back(bool_type());
  std::map<std::string, TypePtr> dedup;
  for (const auto& s : seeds) {
    if (type_connectives(s) > budget.max_instantiation_size) continue;
    if (!is_proper(s)) continue;
    dedup.emplace(print_type(s), s);
  }
  size_t cap = static_cast<size_t>(budget.max_candidates_per_node) * 4;
  bool grew = true;
  while (grew && dedup.size() < cap) {
    grew = false;
    std::vector<TypePtr> base;
    base.reserve(dedup.size());
    for (const auto& kv : dedup) base.push_back(kv.second);
    for (const auto& a : base) {
      for (const auto& b : base) {
        for (int op = 0; op < 2; ++op) {
          TypePtr c = op == 0 ? arrow(a, b) : conj_type({a, b});
          if (type_connectives(c) > budget.max_instantiation_size) continue;
          if (dedup.emplace(print_type(c), c).second) grew = true;
          if (dedup.size() >= cap) break;
        }
        if (dedup.size() >= cap) break;
      }
      if (dedup.size() >= cap) break;
    }
  }
  Pool pool;
  for (const auto& kv : dedup) pool.candidates.push_back(kv.second);
  std::sort(pool.candidates.begin(), pool.candidates.end(), [](const TypePtr& a, const TypePtr& b) {
    int ca = type_connectives(a), cb = type_connectives(b);
    if (ca != cb) return ca < cb;
    return print_type(a) < print_type(b);
  });
  if (pool.candidates.size() > static_cast<size_t>(budget.max_candidates_per_node))
    pool.candidates.resize(budget.max_candidates_per_node);
  return pool;
}

// Rebuilds a carrier derivation with every type fully resolved, recomputing
// quantifier closures so late assignments land inside the binders. Throws
// RebuildFail when an instantiation came out improper or unresolved.
struct RebuildFail {
  std::string reason;
};

inline DerivPtr rebuild_resolved(const Context& ctx, const DerivPtr& d, const SolverState& st) {
  switch (d->rule) {
    case RuleTag::Ax: {
      std::string name =
          d->subject->kind == TermKind::Alpha ? std::string("alpha") : d->subject->name;
      return deriv_ax(ctx, name);
    }
    case RuleTag::ArrowI: {
      TypePtr dom = resolve(d->instantiated_with, st);
      if (type_has_mvar(dom)) throw RebuildFail{"unresolved metavariable"};
      DerivPtr p = rebuild_resolved(ctx_extend(ctx, d->binder, dom), d->premises[0], st);
      return deriv_arrow_i(p, d->binder);
    }
    case RuleTag::ArrowE: {
      DerivPtr f = rebuild_resolved(ctx, d->premises[0], st);
      DerivPtr a = rebuild_resolved(ctx, d->premises[1], st);
      return deriv_arrow_e(f, a);
    }
    case RuleTag::ForallI: {
      DerivPtr p = rebuild_resolved(ctx, d->premises[0], st);
      return deriv_forall_i(p, d->binder);
    }
    case RuleTag::ForallE: {
      DerivPtr p = rebuild_resolved(ctx, d->premises[0], st);
      TypePtr g = resolve(d->instantiated_with, st);
      if (type_has_mvar(g)) throw RebuildFail{"unresolved metavariable"};
      if (!is_proper(g)) throw RebuildFail{"instantiation not proper"};
      return deriv_forall_e(p, g);
    }
  }
  throw RebuildFail{"unknown rule"};
}

inline void collect_unresolved(const DerivPtr& d, const SolverState& st, std::set<int>& out) {
  std::function<void(const TypePtr&)> scan = [&](const TypePtr& t0) {
    TypePtr t = walk(t0, st);
    switch (t->kind) {
      case TypeKind::MVar:
        out.insert(t->index);
        return;
      case TypeKind::Arrow:
        scan(t->lhs);
        scan(t->rhs);
        return;
      case TypeKind::Forall:
        scan(t->lhs);
        return;
      default:
        return;
    }
  };
  if (d->type) scan(d->type);
  if (d->instantiated_with) scan(d->instantiated_with);
  for (const auto& p : d->premises) collect_unresolved(p, st, out);
}

// Carrier node helper: search-time skeleton nodes. Types stay null; the
// parameters that matter for the rebuild live in instantiated_with (ForallE
// instantiation, ArrowI domain) and binder (ArrowI name, ForallI atom).
inline DerivPtr carrier(RuleTag rule, TermPtr subject, int variant, TypePtr inst,
                        std::string binder, std::vector<DerivPtr> prem) {
  return std::make_shared<Derivation>(Derivation{rule, {}, std::move(subject), nullptr, variant,
                                                 std::move(inst), std::move(binder),
                                                 std::move(prem)});
}

class Engine {
 public:
  Engine(Context root_ctx, TypePtr root_goal, const SearchBudget& budget)
      : root_ctx_(std::move(root_ctx)), root_goal_(std::move(root_goal)) {
    st_.budget = budget;
    st_.node_cap = budget.node_cap;
    st_.taken = reserved_names();
    for (const auto& e : root_ctx_) {
      st_.taken.insert(e.name);
      for (const auto& v : free_type_vars(e.type)) st_.taken.insert(v);
    }
    for (const auto& v : free_type_vars(root_goal_)) st_.taken.insert(v);
  }

  bool truncated() const { return st_.truncated; }
  SolverState& state() { return st_; }

  // The pool depends only on the resolved context and the root goal, so one
  // entry per resolved-context shape avoids rebuilding the closure per node.
  const Pool& pooled(const Context& ctx) {
    std::string key;
    for (const auto& e : ctx) {
      key += e.name;
      key += ':';
      key += print_type(resolve(e.type, st_));
      key += ';';
    }
    auto it = pool_cache_.find(key);
    if (it == pool_cache_.end())
      it = pool_cache_.emplace(key, build_pool(ctx, root_goal_, st_.budget, st_)).first;
    return it->second;
  }

  // Completes a carrier into a checked derivation, enumerating pool
  // assignments for any metavariable the structure left unresolved. Calls
  // sink for each completed derivation; returns true when sink accepted.
  bool complete(const DerivPtr& root_carrier, const std::function<bool(DerivPtr)>& sink) {
    std::set<int> open;
    collect_unresolved(root_carrier, st_, open);
    if (open.empty()) return sink(root_carrier);
    const Pool& pool = pooled(root_ctx_);
    std::vector<int> vars(open.begin(), open.end());
    long tries = 0;
    std::function<bool(size_t)> assign_from = [&](size_t i) -> bool {
      if (i == vars.size()) return sink(root_carrier);
      for (const auto& cand : pool.candidates) {
        if (++tries > st_.budget.max_candidates_per_node * 8) {
          st_.truncated = true;
          return false;
        }
        size_t saved = trail_mark(st_);
        if (bind_mvar(tmvar(vars[i]), cand, st_)) {
          if (assign_from(i + 1)) return true;
        }
        trail_undo(st_, saved);
      }
      st_.truncated = true;  // the pool is inherently incomplete
      return false;
    };
    return assign_from(0);
  }

  // --- Exact mode: subject given. -----------------------------------------

  bool exact(const Context& ctx, const TermPtr& t, const TypePtr& goal, int depth,
             const std::function<bool(DerivPtr)>& k) {
    if (++st_.nodes > st_.node_cap || depth > st_.budget.max_depth) {
      st_.truncated = true;
      return false;
    }
    TypePtr g = walk(goal, st_);
    if (t->kind == TermKind::Lam) {
      if (g->kind == TypeKind::Forall) {
        std::string z = fresh_atom(st_, g->name.empty() ? "Z" : g->name);
        TypePtr opened = forall_open(g, tvar(z));
        return exact(ctx, t, opened, depth + 1, [&](DerivPtr d) {
          return k(carrier(RuleTag::ForallI, t, 0, nullptr, z, {d}));
        });
      }
      if (g->kind == TypeKind::MVar) {
        size_t saved = trail_mark(st_);
        TypePtr p = fresh_mvar(st_);
        TypePtr q = fresh_mvar(st_);
        st_.mvar_birth[p->index] = st_.mvar_birth[g->index];
        st_.mvar_birth[q->index] = st_.mvar_birth[g->index];
        if (bind_mvar(g, arrow(p, q), st_)) {
          if (exact(ctx, t, arrow(p, q), depth, k)) return true;
        }
        trail_undo(st_, saved);
        // Quantified solutions for a bare metavariable goal come only from the
        // pool; record the cut.
        const Pool& pool = pooled(ctx);
        int tried = 0;
        for (const auto& cand : pool.candidates) {
          if (cand->kind != TypeKind::Forall) continue;
          if (++tried > st_.budget.max_candidates_per_node) break;
          size_t saved2 = trail_mark(st_);
          if (bind_mvar(g, cand, st_)) {
            if (exact(ctx, t, cand, depth, k)) return true;
          }
          trail_undo(st_, saved2);
        }
        st_.truncated = true;
        return false;
      }
      if (g->kind != TypeKind::Arrow) return false;
      std::string x = fresh_term_name(st_, t->name);
      TermPtr body = lam_open(t, fvar(x));
      Context inner = ctx_extend(ctx, x, g->lhs);
      return exact(inner, body, g->rhs, depth + 1, [&](DerivPtr d) {
        return k(carrier(RuleTag::ArrowI, t, 0, g->lhs, x, {d}));
      });
    }

    // Spine subject.
    std::vector<TermPtr> args;
    TermPtr head = spine_head(t, &args);
    std::string head_name;
    if (head->kind == TermKind::FVar) head_name = head->name;
    else if (head->kind == TermKind::Alpha) head_name = "alpha";
    else return false;  // redex or constant head: not typable here
    const TypePtr* t0 = ctx_lookup(ctx, head_name);
    if (!t0) return false;

    DerivPtr acc = carrier(RuleTag::Ax, head, 0, nullptr, "", {});
    if (spin_exact(ctx, t, args, 0, *t0, acc, head, g, depth, k)) return true;

    // A quantified goal can also be met by generalizing over a fresh atom.
    if (g->kind == TypeKind::Forall) {
      std::string z = fresh_atom(st_, g->name.empty() ? "Z" : g->name);
      TypePtr opened = forall_open(g, tvar(z));
      return exact(ctx, t, opened, depth + 1, [&](DerivPtr d) {
        return k(carrier(RuleTag::ForallI, t, 0, nullptr, z, {d}));
      });
    }
    return false;
  }

 private:
  bool spin_exact(const Context& ctx, const TermPtr& whole, const std::vector<TermPtr>& args,
                  size_t i, const TypePtr& ty, const DerivPtr& acc, const TermPtr& subj,
                  const TypePtr& goal, int depth, const std::function<bool(DerivPtr)>& k) {
    if (++st_.nodes > st_.node_cap) {
      st_.truncated = true;
      return false;
    }
    TypePtr td = walk(ty, st_);
    if (i == args.size()) {
      size_t saved = trail_mark(st_);
      if (unify(td, goal, st_)) {
        if (k(acc)) return true;
      }
      trail_undo(st_, saved);
      if (td->kind == TypeKind::Forall) {
        if (!type_mentions_bvar(td->lhs, 0)) return false;
        TypePtr m = fresh_mvar(st_);
        DerivPtr node = carrier(RuleTag::ForallE, subj, subject_variant(subj), m, "", {acc});
        return spin_exact(ctx, whole, args, i, forall_open(td, m), node, subj, goal, depth, k);
      }
      return false;
    }
    if (td->kind == TypeKind::Forall) {
      if (!type_mentions_bvar(td->lhs, 0)) return false;
      TypePtr m = fresh_mvar(st_);
      DerivPtr node = carrier(RuleTag::ForallE, subj, subject_variant(subj), m, "", {acc});
      return spin_exact(ctx, whole, args, i, forall_open(td, m), node, subj, goal, depth, k);
    }
    if (td->kind == TypeKind::MVar) {
      size_t saved = trail_mark(st_);
      TypePtr p = fresh_mvar(st_);
      TypePtr q = fresh_mvar(st_);
      st_.mvar_birth[p->index] = st_.mvar_birth[td->index];
      st_.mvar_birth[q->index] = st_.mvar_birth[td->index];
      if (bind_mvar(td, arrow(p, q), st_)) {
        if (spin_exact(ctx, whole, args, i, arrow(p, q), acc, subj, goal, depth, k)) return true;
      }
      trail_undo(st_, saved);
      // Quantified refinements come only from the pool; record the cut.
      const Pool& pool = pooled(ctx);
      int tried = 0;
      for (const auto& cand : pool.candidates) {
        if (cand->kind != TypeKind::Forall) continue;
        if (++tried > st_.budget.max_candidates_per_node) break;
        size_t saved2 = trail_mark(st_);
        if (bind_mvar(td, cand, st_)) {
          if (spin_exact(ctx, whole, args, i, cand, acc, subj, goal, depth, k)) return true;
        }
        trail_undo(st_, saved2);
      }
      st_.truncated = true;
      return false;
    }
    if (td->kind != TypeKind::Arrow) return false;
    TermPtr next_subj = app(subj, args[i]);
    return exact(ctx, args[i], td->lhs, depth + 1, [&](DerivPtr da) {
      DerivPtr node = carrier(RuleTag::ArrowE, next_subj, 0, nullptr, "", {acc, da});
      return spin_exact(ctx, whole, args, i + 1, td->rhs, node, next_subj, goal, depth, k);
    });
  }

 public:
  // --- Any mode: enumerate eta-long subjects for the goal. ----------------

  bool any(const Context& ctx, const TypePtr& goal, int depth, int size_left,
           const std::function<bool(DerivPtr)>& k) {
    if (++st_.nodes > st_.node_cap || depth > st_.budget.max_depth) {
      st_.truncated = true;
      return false;
    }
    if (size_left < 1) return false;
    TypePtr g = walk(goal, st_);
    switch (g->kind) {
      case TypeKind::Forall: {
        std::string z = fresh_atom(st_, g->name.empty() ? "Z" : g->name);
        TypePtr opened = forall_open(g, tvar(z));
        bool stop = any(ctx, opened, depth + 1, size_left - 1, [&](DerivPtr d) {
          return k(carrier(RuleTag::ForallI, d->subject, 0, nullptr, z, {d}));
        });
        if (stop) return true;
        return spines(ctx, g, depth, size_left, k);
      }
      case TypeKind::Arrow: {
        std::string x = fresh_term_name(st_, "x");
        Context inner = ctx_extend(ctx, x, g->lhs);
        return any(inner, g->rhs, depth + 1, size_left - 1, [&](DerivPtr d) {
          TermPtr subject = lam(x, d->subject);
          return k(carrier(RuleTag::ArrowI, subject, 0, g->lhs, x, {d}));
        });
      }
      case TypeKind::MVar: {
        if (spines(ctx, g, depth, size_left, k)) return true;
        const Pool& pool = pooled(ctx);
        int tried = 0;
        for (const auto& cand : pool.candidates) {
          if (++tried > st_.budget.max_candidates_per_node) break;
          size_t saved = trail_mark(st_);
          if (bind_mvar(g, cand, st_)) {
            if (any(ctx, cand, depth, size_left, k)) return true;
          }
          trail_undo(st_, saved);
        }
        st_.truncated = true;
        return false;
      }
      default:
        return spines(ctx, g, depth, size_left, k);
    }
  }

 private:
  bool spines(const Context& ctx, const TypePtr& goal, int depth, int size_left,
              const std::function<bool(DerivPtr)>& k) {
    for (const auto& e : ctx) {
      TermPtr head = e.name == "alpha" ? alpha_const() : fvar(e.name);
      DerivPtr acc = carrier(RuleTag::Ax, head, 0, nullptr, "", {});
      if (spin_any(ctx, e.type, acc, head, goal, depth, size_left, 1, k)) return true;
    }
    return false;
  }

  bool spin_any(const Context& ctx, const TypePtr& ty, const DerivPtr& acc, const TermPtr& subj,
                const TypePtr& goal, int depth, int size_left, int used,
                const std::function<bool(DerivPtr)>& k) {
    if (++st_.nodes > st_.node_cap) {
      st_.truncated = true;
      return false;
    }
    if (used > size_left) return false;
    TypePtr td = walk(ty, st_);
    size_t saved = trail_mark(st_);
    if (unify(td, goal, st_)) {
      if (k(acc)) return true;
    }
    trail_undo(st_, saved);
    if (td->kind == TypeKind::Forall) {
      if (!type_mentions_bvar(td->lhs, 0)) return false;
      TypePtr m = fresh_mvar(st_);
      DerivPtr node = carrier(RuleTag::ForallE, subj, subject_variant(subj), m, "", {acc});
      return spin_any(ctx, forall_open(td, m), node, subj, goal, depth, size_left, used + 1, k);
    }
    if (td->kind == TypeKind::Arrow) {
      // Argument then continue the spine; the application node costs one.
      return any(ctx, td->lhs, depth + 1, size_left - used - 1, [&](DerivPtr da) {
        TermPtr next_subj = app(subj, da->subject);
        DerivPtr node = carrier(RuleTag::ArrowE, next_subj, 0, nullptr, "", {acc, da});
        return spin_any(ctx, td->rhs, node, next_subj, goal, depth, size_left,
                        used + 1 + derivation_size(da), k);
      });
    }
    if (td->kind == TypeKind::MVar) {
      // A spine that outruns its known type can still continue under any pool
      // instantiation; the pool is incomplete, so record the cut.
      const Pool& pool = pooled(ctx);
      int tried = 0;
      for (const auto& cand : pool.candidates) {
        if (++tried > st_.budget.max_candidates_per_node) break;
        size_t saved = trail_mark(st_);
        if (bind_mvar(td, cand, st_)) {
          if (spin_any(ctx, cand, acc, subj, goal, depth, size_left, used, k)) return true;
        }
        trail_undo(st_, saved);
      }
      st_.truncated = true;
      return false;
    }
    return false;
  }

  Context root_ctx_;
  TypePtr root_goal_;
  SolverState st_;
  std::map<std::string, Pool> pool_cache_;
};

} // namespace search_detail

inline SearchOutcome search_F_derivation(const Context& ctx, const TermPtr& t, const TypePtr& a,
                                         const SearchBudget& budget = {}) {
  if (!is_beta_normal(t))
    throw std::invalid_argument("search_F_derivation: subject must be beta-normal");
  if (type_has_mvar(a)) throw std::invalid_argument("search_F_derivation: goal has metavariables");
  search_detail::Engine engine(ctx, a, budget);
  SearchOutcome out;
  engine.exact(ctx, t, a, 0, [&](DerivPtr d) {
    return engine.complete(d, [&](DerivPtr full) {
      try {
        DerivPtr built = search_detail::rebuild_resolved(ctx, full, engine.state());
        CheckResult chk = check_derivation_detail(built);
        if (!chk.ok) throw std::logic_error("search built an invalid derivation: " + chk.error);
        out.derivation = built;
        return true;
      } catch (const search_detail::RebuildFail&) {
        return false;  // improper or unresolved instantiation: reject, keep searching
      }
    });
  });
  if (out.derivation) {
    out.status = SearchStatus::Found;
  } else {
    out.status = engine.truncated() ? SearchStatus::Unknown : SearchStatus::None;
  }
  return out;
}

struct ProofEnumItem {
  TermPtr subject;
  DerivPtr derivation;
};

// Enumerates checked derivations of closed-spine eta-long subjects for the
// goal, up to the derivation-size bound. Returns true when any branch was
// truncated by a budget (size-bound cutoffs are part of the contract and do
// not count).
inline bool enumerate_proofs(const Context& ctx, const TypePtr& goal, int size_bound,
                             const SearchBudget& budget,
                             const std::function<bool(const ProofEnumItem&)>& yield) {
  if (type_has_mvar(goal)) throw std::invalid_argument("enumerate_proofs: goal has metavariables");
  search_detail::Engine engine(ctx, goal, budget);
  engine.any(ctx, goal, 0, size_bound, [&](DerivPtr d) {
    return engine.complete(d, [&](DerivPtr full) {
      try {
        DerivPtr built = search_detail::rebuild_resolved(ctx, full, engine.state());
        if (derivation_size(built) > size_bound) return false;
        CheckResult chk = check_derivation_detail(built);
        if (!chk.ok) throw std::logic_error("enumeration built an invalid derivation: " + chk.error);
        return yield(ProofEnumItem{built->subject, built});
      } catch (const search_detail::RebuildFail&) {
        return false;
      }
    });
  });
  return engine.truncated();
}

// ---------------------------------------------------------------------------
// Eta-long expansion. Finds a derivation for the subject, then expands every
// spine whose assigned type is not a type variable into the standard
// lambda-wrapped applied form, recursively, so all essential subterms end up
// typed by atoms. The result eta-reduces back to the input.
// ---------------------------------------------------------------------------

namespace detail {

inline DerivPtr eta_expand_at(const DerivPtr& d, std::set<std::string>& taken_types,
                              std::set<std::string>& taken_terms);

inline DerivPtr eta_wrap(const DerivPtr& d, std::set<std::string>& taken_types,
                         std::set<std::string>& taken_terms) {
  const TypePtr& t = d->type;
  if (t->kind == TypeKind::FVar || t->kind == TypeKind::OConst) return d;
  if (t->kind == TypeKind::Forall) {
    if (!type_mentions_bvar(t->lhs, 0))
      throw std::invalid_argument("eta_expand: vacuous quantifier blocks the expansion");
    std::string z = freshen(t->name.empty() ? "Z" : t->name, taken_types);
    taken_types.insert(z);
    DerivPtr inner = eta_wrap(deriv_forall_e(d, tvar(z)), taken_types, taken_terms);
    return deriv_forall_i(inner, z);
  }
  if (t->kind == TypeKind::Arrow) {
    std::string x = freshen("e", taken_terms);
    taken_terms.insert(x);
    DerivPtr dw = weaken_derivation(d, x, t->lhs);
    DerivPtr ax = deriv_ax(dw->context, x);
    DerivPtr arg = eta_wrap(ax, taken_types, taken_terms);
    DerivPtr body = eta_wrap(deriv_arrow_e(dw, arg), taken_types, taken_terms);
    return deriv_arrow_i(body, x);
  }
  throw std::invalid_argument("eta_expand: unexpected type shape");
}

// Spine interiors: expand the arguments, keep the skeleton.
inline DerivPtr eta_expand_spine(const DerivPtr& d, std::set<std::string>& taken_types,
                                 std::set<std::string>& taken_terms) {
  switch (d->rule) {
    case RuleTag::Ax:
      return d;
    case RuleTag::ForallE: {
      DerivPtr p = eta_expand_spine(d->premises[0], taken_types, taken_terms);
      return deriv_forall_e(p, d->instantiated_with);
    }
    case RuleTag::ArrowE: {
      DerivPtr f = eta_expand_spine(d->premises[0], taken_types, taken_terms);
      DerivPtr a = eta_expand_at(d->premises[1], taken_types, taken_terms);
      return deriv_arrow_e(f, a);
    }
    default:
      return eta_expand_at(d, taken_types, taken_terms);
  }
}

// Goal position (root, abstraction body, argument): descend, then wrap any
// spine whose type is not an atom.
inline DerivPtr eta_expand_at(const DerivPtr& d, std::set<std::string>& taken_types,
                              std::set<std::string>& taken_terms) {
  switch (d->rule) {
    case RuleTag::ArrowI: {
      DerivPtr body = eta_expand_at(d->premises[0], taken_types, taken_terms);
      return deriv_arrow_i(body, d->binder);
    }
    case RuleTag::ForallI: {
      DerivPtr p = eta_expand_at(d->premises[0], taken_types, taken_terms);
      return deriv_forall_i(p, d->binder);
    }
    default:
      return eta_wrap(eta_expand_spine(d, taken_types, taken_terms), taken_types, taken_terms);
  }
}

} // namespace detail

inline DerivPtr eta_expand_derivation(const DerivPtr& d) {
  std::set<std::string> taken_types = ctx_free_type_vars(d->context);
  free_type_vars_into(d->type, taken_types);
  std::function<void(const DerivPtr&)> collect = [&](const DerivPtr& n) {
    for (const auto& e : n->context) free_type_vars_into(e.type, taken_types);
    free_type_vars_into(n->type, taken_types);
    for (const auto& p : n->premises) collect(p);
  };
  collect(d);
  std::set<std::string> taken_terms = ctx_names(d->context);
  for (const auto& n : free_vars(d->subject)) taken_terms.insert(n);
  std::function<void(const DerivPtr&)> names = [&](const DerivPtr& n) {
    for (const auto& e : n->context) taken_terms.insert(e.name);
    for (const auto& p : n->premises) names(p);
  };
  names(d);
  return detail::eta_expand_at(d, taken_types, taken_terms);
}

inline TermPtr eta_expand(const TermPtr& t, const Context& ctx, const TypePtr& a,
                          const SearchBudget& budget = {}) {
  SearchOutcome found = search_F_derivation(ctx, t, a, budget);
  if (found.status != SearchStatus::Found)
    throw std::invalid_argument("eta_expand: no derivation found within the budget");
  DerivPtr expanded = eta_expand_derivation(found.derivation);
  CheckResult chk = check_derivation_detail(expanded);
  if (!chk.ok) throw std::logic_error("eta_expand produced an invalid derivation: " + chk.error);
  TermPtr subject = expanded->subject;
  if (!term_equal(eta_normalize(subject).result, eta_normalize(t).result))
    throw std::logic_error("eta_expand result does not eta-reduce to the input");
  return subject;
}

// ---------------------------------------------------------------------------
// The simple system: rules (ax), arrow introduction, arrow elimination only.
// Principal typing by first-order unification; the checker runs the same
// inference with the wanted context and type as hard constraints.
// ---------------------------------------------------------------------------

struct SimpleTyping {
  Context context;  // free variables, in first-use order
  TypePtr type;
};

namespace detail {

struct SimpleInfer {
  std::map<int, TypePtr> assign;
  int next = 0;
  bool failed = false;

  TypePtr fresh() { return tmvar(next++); }

  TypePtr walk(TypePtr t) const {
    while (t->kind == TypeKind::MVar) {
      auto it = assign.find(t->index);
      if (it == assign.end()) break;
      t = it->second;
    }
    return t;
  }

  bool occurs(int m, const TypePtr& t0) const {
    TypePtr t = walk(t0);
    if (t->kind == TypeKind::MVar) return t->index == m;
    if (t->kind == TypeKind::Arrow) return occurs(m, t->lhs) || occurs(m, t->rhs);
    return false;
  }

  bool unify(const TypePtr& a0, const TypePtr& b0) {
    TypePtr a = walk(a0);
    TypePtr b = walk(b0);
    if (a->kind == TypeKind::MVar && b->kind == TypeKind::MVar && a->index == b->index) return true;
    if (a->kind == TypeKind::MVar) {
      if (occurs(a->index, b)) return false;
      assign[a->index] = b;
      return true;
    }
    if (b->kind == TypeKind::MVar) return unify(b, a);
    if (a->kind != b->kind) return false;
    switch (a->kind) {
      case TypeKind::FVar: return a->name == b->name;
      case TypeKind::OConst: return true;
      case TypeKind::Arrow: return unify(a->lhs, b->lhs) && unify(a->rhs, b->rhs);
      default: return false;  // quantifiers and bound variables never unify here
    }
  }

  TypePtr resolve(const TypePtr& t0) const {
    TypePtr t = walk(t0);
    if (t->kind == TypeKind::Arrow) return arrow(resolve(t->lhs), resolve(t->rhs));
    return t;
  }
};

} // namespace detail

inline std::optional<SimpleTyping> infer_simple(const TermPtr& t) {
  detail::SimpleInfer inf;
  std::vector<std::pair<std::string, TypePtr>> env;
  std::map<std::string, TypePtr> free_env;
  std::vector<std::string> free_order;

  std::function<TypePtr(const TermPtr&, std::vector<TypePtr>&)> go =
      [&](const TermPtr& u, std::vector<TypePtr>& scope) -> TypePtr {
    if (inf.failed) return nullptr;
    switch (u->kind) {
      case TermKind::BVar: {
        int pos = static_cast<int>(scope.size()) - 1 - u->index;
        if (pos < 0) {
          inf.failed = true;
          return nullptr;
        }
        return scope[pos];
      }
      case TermKind::FVar: {
        auto found = free_env.find(u->name);
        if (found != free_env.end()) return found->second;
        TypePtr m = inf.fresh();
        free_env.emplace(u->name, m);
        free_order.push_back(u->name);
        return m;
      }
      case TermKind::Lam: {
        TypePtr dom = inf.fresh();
        scope.push_back(dom);
        TypePtr cod = go(u->body, scope);
        scope.pop_back();
        if (inf.failed) return nullptr;
        return arrow(dom, cod);
      }
      case TermKind::App: {
        TypePtr f = go(u->fun, scope);
        TypePtr a = go(u->arg, scope);
        if (inf.failed) return nullptr;
        TypePtr r = inf.fresh();
        if (!inf.unify(f, arrow(a, r))) {
          inf.failed = true;
          return nullptr;
        }
        return r;
      }
      default:
        inf.failed = true;
        return nullptr;
    }
  };

  std::vector<TypePtr> scope;
  TypePtr ty = go(t, scope);
  if (inf.failed) return std::nullopt;

  // Canonical names for leftover metavariables, in print order.
  std::map<int, TypePtr> names;
  std::vector<std::string> supply;
  int counter = 0;
  auto next_name = [&]() {
    static const char* base[] = {"X", "Y", "Z", "W"};
    std::string n = counter < 4 ? base[counter] : "X" + std::to_string(counter - 3);
    ++counter;
    return n;
  };
  std::function<TypePtr(const TypePtr&)> canon = [&](const TypePtr& t0) -> TypePtr {
    TypePtr u = inf.walk(t0);
    if (u->kind == TypeKind::MVar) {
      auto it = names.find(u->index);
      if (it == names.end()) it = names.emplace(u->index, tvar(next_name())).first;
      return it->second;
    }
    if (u->kind == TypeKind::Arrow) return arrow(canon(u->lhs), canon(u->rhs));
    return u;
  };

  SimpleTyping out;
  out.type = canon(ty);
  for (const auto& name : free_order) out.context.push_back({name, canon(free_env.at(name))});
  return out;
}

inline bool check_simple(const Context& ctx, const TermPtr& t, const TypePtr& a) {
  std::function<bool(const TypePtr&)> simple_type = [&](const TypePtr& u) {
    switch (u->kind) {
      case TypeKind::FVar:
      case TypeKind::OConst:
        return true;
      case TypeKind::Arrow:
        return simple_type(u->lhs) && simple_type(u->rhs);
      default:
        return false;
    }
  };
  if (!simple_type(a)) throw std::invalid_argument("check_simple: type is not simple");
  for (const auto& e : ctx)
    if (!simple_type(e.type)) throw std::invalid_argument("check_simple: context is not simple");

  detail::SimpleInfer inf;
  std::map<std::string, TypePtr> free_env;
  std::function<bool(const TermPtr&, std::vector<TypePtr>&, const TypePtr&)> go =
      [&](const TermPtr& u, std::vector<TypePtr>& scope, const TypePtr& want) -> bool {
    TypePtr got;
    switch (u->kind) {
      case TermKind::BVar: {
        int pos = static_cast<int>(scope.size()) - 1 - u->index;
        if (pos < 0) return false;
        got = scope[pos];
        break;
      }
      case TermKind::FVar: {
        const TypePtr* declared = ctx_lookup(ctx, u->name);
        if (declared) {
          got = *declared;
        } else {
          auto it = free_env.find(u->name);
          if (it == free_env.end()) it = free_env.emplace(u->name, inf.fresh()).first;
          got = it->second;
        }
        break;
      }
      case TermKind::Lam: {
        TypePtr dom = inf.fresh();
        TypePtr cod = inf.fresh();
        if (!inf.unify(want, arrow(dom, cod))) return false;
        scope.push_back(dom);
        bool ok = go(u->body, scope, cod);
        scope.pop_back();
        return ok;
      }
      case TermKind::App: {
        TypePtr dom = inf.fresh();
        if (!go(u->fun, scope, arrow(dom, want))) return false;
        return go(u->arg, scope, dom);
      }
      default:
        return false;
    }
    return inf.unify(got, want);
  };
  std::vector<TypePtr> scope;
  return go(t, scope, a);
}

} // namespace systemf
