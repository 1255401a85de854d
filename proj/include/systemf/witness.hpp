#pragma once

#include "systemf/ij.hpp"
#include "systemf/polarity.hpp"
#include "systemf/typing.hpp"

namespace systemf {

// ---------------------------------------------------------------------------
// Typed coercion derivations. For a proper type a, a distinguished variable x
// and an instantiation g, builds a checked derivation of
//
//   positive:  ctx |- I_{a,x} : a[g/x] -> a[g°/x]
//   negative:  ctx |- J_{a,x} : a[g°/x] -> a[g/x]
//
// where g° = O -> (g /\ O) and ctx binds the marker alpha : O. The subjects
// are exactly coercion_in / coercion_out of the same type.
// ---------------------------------------------------------------------------

inline DerivPtr coercion_derivation(const Context& ctx, const TypePtr& a, const std::string& x,
                                    const TypePtr& g, bool positive) {
  const TypePtr* o = ctx_lookup(ctx, "alpha");
  if (!o || (*o)->kind != TypeKind::OConst)
    throw std::invalid_argument("coercion_derivation: context must bind alpha : O");
  switch (a->kind) {
    case TypeKind::OConst:
    case TypeKind::FVar: {
      std::set<std::string> taken = ctx_names(ctx);
      std::string xv = freshen("x", taken);
      if (a->kind == TypeKind::FVar && a->name == x) {
        if (positive) {
          taken.insert(xv);
          std::string dv = freshen("d", taken);
          Context inner = ctx_extend(ctx_extend(ctx, xv, g), dv, oconst());
          DerivPtr pr = deriv_pair(deriv_ax(inner, xv), deriv_ax(inner, "alpha"));
          return deriv_arrow_i(deriv_arrow_i(pr, dv), xv);
        }
        Context inner = ctx_extend(ctx, xv, circ_type(g));
        DerivPtr applied = deriv_arrow_e(deriv_ax(inner, xv), deriv_ax(inner, "alpha"));
        return deriv_arrow_i(deriv_proj_first(applied, g, oconst()), xv);
      }
      return deriv_arrow_i(deriv_ax(ctx_extend(ctx, xv, a), xv), xv);
    }
    case TypeKind::Arrow: {
      TypePtr gm = circ_type(g);
      TypePtr dom = type_subst(a, x, positive ? g : gm);
      TypePtr ydom = type_subst(a->lhs, x, positive ? gm : g);
      std::set<std::string> taken = ctx_names(ctx);
      std::string xv = freshen("x", taken);
      taken.insert(xv);
      std::string yv = freshen("y", taken);
      Context inner = ctx_extend(ctx_extend(ctx, xv, dom), yv, ydom);
      DerivPtr darg = coercion_derivation(inner, a->lhs, x, g, !positive);
      DerivPtr dres = coercion_derivation(inner, a->rhs, x, g, positive);
      DerivPtr body = deriv_arrow_e(
          dres, deriv_arrow_e(deriv_ax(inner, xv), deriv_arrow_e(darg, deriv_ax(inner, yv))));
      return deriv_arrow_i(deriv_arrow_i(body, yv), xv);
    }
    case TypeKind::Forall: {
      if (!type_mentions_bvar(a->lhs, 0))
        throw std::invalid_argument("coercion_derivation: vacuous quantifier in " + print_type(a));
      TypePtr dom = type_subst(a, x, positive ? g : circ_type(g));
      std::set<std::string> taken = ctx_names(ctx);
      std::string xv = freshen("x", taken);
      Context inner = ctx_extend(ctx, xv, dom);
      std::set<std::string> ftv = ctx_free_type_vars(inner);
      ftv.insert(x);
      free_type_vars_into(g, ftv);
      free_type_vars_into(a, ftv);
      std::string zv = freshen(a->name.empty() ? "Z" : a->name, ftv);
      DerivPtr opened = deriv_forall_e(deriv_ax(inner, xv), tvar(zv));
      DerivPtr dcoe = coercion_derivation(inner, forall_open(a, tvar(zv)), x, g, positive);
      return deriv_arrow_i(deriv_forall_i(deriv_arrow_e(dcoe, opened), zv), xv);
    }
    default:
      throw std::invalid_argument("coercion_derivation: type is not locally closed");
  }
}

// Both directions of the coercion typing at a fresh quantified variable:
//   alpha : O |- I_{a,x} : forall Y { a[Y/x] -> a[Y°/x] }
//   alpha : O |- J_{a,x} : forall Y { a[Y°/x] -> a[Y/x] }
// Returns true when both derivations check and their subjects are exactly the
// coercion terms.
inline bool check_IJ_typing(const TypePtr& a, const std::string& x) {
  if (!is_proper(a)) throw std::invalid_argument("check_IJ_typing: type must be proper");
  Context ctx{{"alpha", oconst()}};
  std::set<std::string> avoid = free_type_vars(a);
  avoid.insert(x);
  std::string y = freshen("Y", avoid);
  TypePtr yv = tvar(y);
  for (bool positive : {true, false}) {
    DerivPtr d = deriv_forall_i(coercion_derivation(ctx, a, x, yv, positive), y);
    TermPtr expect = positive ? coercion_in(a, x) : coercion_out(a, x);
    TypePtr src = type_subst(a, x, positive ? yv : circ_type(yv));
    TypePtr dst = type_subst(a, x, positive ? circ_type(yv) : yv);
    if (!term_equal(d->subject, expect)) return false;
    if (!type_equal(d->type, forall(y, arrow(src, dst)))) return false;
    if (!check_derivation(d)) return false;
  }
  return true;
}

namespace detail {

inline DerivPtr weaken_alpha(const DerivPtr& d) {
  if (const TypePtr* t = ctx_lookup(d->context, "alpha")) {
    if ((*t)->kind != TypeKind::OConst)
      throw std::invalid_argument("weaken_alpha: alpha already bound at a non-marker type");
    return d;
  }
  return weaken_derivation(d, "alpha", oconst());
}

inline DerivPtr graft_with_alpha(const DerivPtr& d, const std::vector<int>& path, size_t at,
                                 const DerivPtr& repl) {
  if (at == path.size()) return repl;
  size_t idx = static_cast<size_t>(path[at]);
  if (idx >= d->premises.size()) throw std::out_of_range("graft_with_alpha: bad path");
  std::vector<DerivPtr> prem;
  prem.reserve(d->premises.size());
  for (size_t i = 0; i < d->premises.size(); ++i)
    prem.push_back(i == idx ? graft_with_alpha(d->premises[i], path, at + 1, repl)
                            : weaken_alpha(d->premises[i]));
  switch (d->rule) {
    case RuleTag::ArrowI:
      if (d->binder == "alpha")
        throw std::invalid_argument("graft_with_alpha: a binder shadows the marker");
      return deriv_arrow_i(prem[0], d->binder);
    case RuleTag::ForallI:
      return deriv_forall_i(prem[0], d->binder);
    case RuleTag::ForallE:
      return deriv_forall_e(prem[0], d->instantiated_with);
    case RuleTag::ArrowE:
      return deriv_arrow_e(prem[0], prem[1]);
    case RuleTag::Ax:
      break;
  }
  throw std::logic_error("graft_with_alpha: path descends through a leaf");
}

} // namespace detail

struct RewriteResult {
  TermPtr term;
  DerivPtr derivation;
};

// Rewrites one spine-headed quantifier elimination node: the spine head is
// re-instantiated at g° instead of g, the marker-threading coercion J bridges
// the two instances, the wrapped spine is reduced back to a beta-normal form
// (which provably still carries the marker), and the result is grafted into
// the surrounding derivation, weakened by alpha : O throughout.
inline RewriteResult rewrite_forall_e2(const DerivPtr& root, const std::vector<int>& node_path) {
  CheckResult chk = check_derivation_detail(root);
  if (!chk.ok)
    throw std::invalid_argument("rewrite_forall_e2: derivation does not check: " + chk.error);
  if (!is_beta_normal(root->subject))
    throw std::invalid_argument("rewrite_forall_e2: subject must be beta-normal");
  const Derivation* node = derivation_at(root, node_path);
  if (node->rule != RuleTag::ForallE || node->variant != 2)
    throw std::invalid_argument(
        "rewrite_forall_e2: node is not a quantifier elimination on an applied variable");

  // The maximal run of rules above the node that keep building on this spine.
  std::vector<int> top = node_path;
  while (!top.empty()) {
    std::vector<int> parent(top.begin(), top.end() - 1);
    const Derivation* p = derivation_at(root, parent);
    bool spine_step = (p->rule == RuleTag::ArrowE && top.back() == 0) ||
                      p->rule == RuleTag::ForallE || p->rule == RuleTag::ForallI;
    if (!spine_step) break;
    top = parent;
  }

  DerivPtr prem = node->premises[0];
  TypePtr quant = prem->type;
  TypePtr g = node->instantiated_with;
  std::set<std::string> avoid = free_type_vars(quant);
  free_type_vars_into(g, avoid);
  for (const auto& e : prem->context) free_type_vars_into(e.type, avoid);
  std::string xstar = freshen(quant->name.empty() ? "X" : quant->name, avoid);
  TypePtr body = forall_open(quant, tvar(xstar));

  DerivPtr marked = detail::weaken_alpha(deriv_forall_e(prem, circ_type(g)));
  DerivPtr bridge = coercion_derivation(marked->context, body, xstar, g, false);
  DerivPtr cur = deriv_arrow_e(bridge, marked);

  for (size_t len = node_path.size(); len-- > top.size();) {
    std::vector<int> prefix(node_path.begin(), node_path.begin() + len);
    const Derivation* anc = derivation_at(root, prefix);
    switch (anc->rule) {
      case RuleTag::ArrowE:
        cur = deriv_arrow_e(cur, detail::weaken_alpha(anc->premises[1]));
        break;
      case RuleTag::ForallE:
        cur = deriv_forall_e(cur, anc->instantiated_with);
        break;
      case RuleTag::ForallI:
        cur = deriv_forall_i(cur, anc->binder);
        break;
      default:
        throw std::logic_error("rewrite_forall_e2: unexpected rule in the spine segment");
    }
  }

  long fuel = kDefaultFuel;
  while (auto step = subject_beta_step_derivation(cur)) {
    cur = *step;
    if (--fuel <= 0) throw std::logic_error("rewrite_forall_e2: wrapped spine did not normalize");
  }
  if (!is_beta_normal(cur->subject))
    throw std::logic_error("rewrite_forall_e2: reduction stalled before a normal form");
  if (!term_mentions_alpha(cur->subject))
    throw std::logic_error("rewrite_forall_e2: marker vanished from the rewritten spine");
  if (!type_equal(cur->type, derivation_at(root, top)->type))
    throw std::logic_error("rewrite_forall_e2: rewritten spine changed type");

  DerivPtr out = detail::graft_with_alpha(root, top, 0, cur);
  CheckResult final_chk = check_derivation_detail(out);
  if (!final_chk.ok) {
    std::string where;
    for (int i : final_chk.path) where += " " + std::to_string(i);
    throw std::logic_error("rewrite_forall_e2: rewritten derivation does not check: " +
                           final_chk.error + " at" + (where.empty() ? " root" : where));
  }
  return RewriteResult{out->subject, out};
}

// ---------------------------------------------------------------------------
// Witness extraction: from a derivation of a closed beta-normal term that
// instantiates a quantifier on an applied variable, produce a closed
// beta-normal term of the same type that is not a lambda-I term.
// ---------------------------------------------------------------------------

struct WitnessTrace {
  TermPtr original;
  TermPtr rewritten;
  TermPtr final_term;
  DerivPtr before;
  DerivPtr after;
  std::vector<int> used_node;
};

namespace detail {

inline DerivPtr k1_bool_derivation() {
  Context inner{{"x", tvar("X")}, {"y", tvar("X")}};
  return deriv_forall_i(deriv_arrow_i(deriv_arrow_i(deriv_ax(inner, "x"), "y"), "x"), "X");
}

} // namespace detail

inline std::optional<WitnessTrace> k_witness(const TypePtr& goal, const TermPtr& t,
                                             const SearchBudget& budget = {}) {
  if (!type_is_closed(goal)) throw std::invalid_argument("k_witness: type must be closed");
  if (type_mentions_oconst(goal))
    throw std::invalid_argument("k_witness: type must not mention the marker constant O");
  if (!term_is_closed(t)) throw std::invalid_argument("k_witness: term must be closed");
  if (!is_beta_normal(t)) throw std::invalid_argument("k_witness: term must be beta-normal");

  DerivPtr chosen;
  search_detail::Engine engine({}, goal, budget);
  int tried = 0;
  engine.exact({}, t, goal, 0, [&](DerivPtr cand) {
    return engine.complete(cand, [&](DerivPtr full) {
      try {
        DerivPtr built = search_detail::rebuild_resolved({}, full, engine.state());
        CheckResult c = check_derivation_detail(built);
        if (!c.ok) throw std::logic_error("k_witness: search built an invalid derivation: " + c.error);
        for (const auto& [path, variant] : classify_forall_elims(built))
          if (variant == 2) {
            chosen = built;
            return true;
          }
        return ++tried >= budget.max_candidates_per_node;
      } catch (const search_detail::RebuildFail&) {
        return false;
      }
    });
  });
  if (!chosen) return std::nullopt;

  std::vector<int> node;
  bool have = false;
  for (const auto& [path, variant] : classify_forall_elims(chosen)) {
    if (variant != 2) continue;
    if (!have || path.size() < node.size() || (path.size() == node.size() && path < node)) {
      node = path;
      have = true;
    }
  }

  RewriteResult rw = rewrite_forall_e2(chosen, node);

  // The marker's carrier type is uninterpreted, so it can be read as Bool,
  // after which a closed selector replaces the marker by an ordinary cut.
  DerivPtr renamed = map_types_in_derivation(
      rw.derivation, [](const TypePtr& ty) { return type_rename_oconst(ty, bool_type()); });
  DerivPtr after = subst_in_derivation(renamed, "alpha", detail::k1_bool_derivation());

  CheckResult c = check_derivation_detail(after);
  if (!c.ok) throw std::logic_error("k_witness: final derivation does not check: " + c.error);
  const TermPtr& final_term = after->subject;
  if (!term_is_closed(final_term) || term_mentions_alpha(final_term))
    throw std::logic_error("k_witness: final term is not closed");
  if (!is_beta_normal(final_term)) throw std::logic_error("k_witness: final term is not normal");
  if (is_lambda_I(final_term)) throw std::logic_error("k_witness: final term uses every binder");
  if (!type_equal(after->type, goal)) throw std::logic_error("k_witness: final type drifted");
  return WitnessTrace{t, rw.term, final_term, chosen, after, node};
}

inline nlohmann::ordered_json witness_trace_to_json(const WitnessTrace& w) {
  nlohmann::ordered_json j;
  j["original"] = print_term(w.original);
  j["rewritten"] = print_term(w.rewritten);
  j["final"] = print_term(w.final_term);
  j["used_node"] = w.used_node;
  j["before"] = derivation_to_json(w.before);
  j["after"] = derivation_to_json(w.after);
  return j;
}

// Reads the inert coercion constants as their marker implementations.
inline TermPtr interpret_uv(const TermPtr& t) {
  switch (t->kind) {
    case TermKind::App:
      return app(interpret_uv(t->fun), interpret_uv(t->arg));
    case TermKind::Lam:
      return lam_raw(t->name, interpret_uv(t->body));
    case TermKind::UConst:
      return marker_pack_term();
    case TermKind::VConst:
      return marker_unpack_term();
    default:
      return t;
  }
}

} // namespace systemf
