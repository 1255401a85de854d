#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "systemf/gen.hpp"
#include "systemf/witness.hpp"

using namespace systemf;

namespace {

// ∀X{∀Y(Id -> Y) -> Id}
TypePtr type_e() {
  return forall("X", arrow(forall("Y", arrow(identity_type(), tvar("Y"))), identity_type()));
}

// ∀X{∀Y(Y -> Id) -> Id}
TypePtr type_f() {
  return forall("X", arrow(forall("Y", arrow(tvar("Y"), identity_type())), identity_type()));
}

DerivPtr closed_derivation(const TermPtr& t, const TypePtr& a) {
  SearchOutcome out = search_F_derivation({}, t, a);
  REQUIRE(out.status == SearchStatus::Found);
  return out.derivation;
}

std::vector<int> first_applied_var_elim(const DerivPtr& d) {
  for (const auto& [path, variant] : classify_forall_elims(d))
    if (variant == 2) return path;
  FAIL("no quantifier elimination on an applied variable");
  return {};
}

TermPtr coercion_skeleton(const TypePtr& a, const std::string& x, bool positive) {
  return coercion_term(a, x, positive, fvar("ubase"), fvar("vbase"));
}

} // namespace

TEST_CASE("coercion terms at leaf types") {
  TypePtr x = tvar("X");
  TypePtr y = tvar("Y");

  CHECK(term_equal(iprime(y, "X"), identity_term()));
  CHECK(term_equal(jprime(y, "X"), identity_term()));
  CHECK(term_equal(iprime(oconst(), "X"), identity_term()));
  CHECK(term_equal(iprime(x, "X"), uconst(x, "X")));
  CHECK(term_equal(jprime(x, "X"), vconst(x, "X")));

  TermPtr ixx = iprime(arrow(x, x), "X");
  TermPtr expect = lam("a", lam("b", app(uconst(x, "X"), app(fvar("a"), app(vconst(x, "X"), fvar("b"))))));
  CHECK(term_equal(ixx, expect));

  CHECK(term_equal(coercion_in(x, "X"), marker_pack_term()));
  CHECK(term_equal(coercion_out(x, "X"), marker_unpack_term()));
  CHECK(term_equal(coercion_in(y, "X"), identity_term()));
  CHECK(term_mentions_alpha(coercion_in(arrow(x, x), "X")));
}

TEST_CASE("coercion binding structure never discards an argument") {
  Rng rng(4242);
  int with_base = 0;
  for (int i = 0; i < 200; ++i) {
    TypePtr base = random_proper_closed_type(rng, 8);
    TypePtr a = base;
    if (i % 3 == 1) a = arrow(tvar("X"), base);
    if (i % 3 == 2) a = forall("W", arrow(tvar("W"), arrow(tvar("X"), base)));
    CAPTURE(print_type(a));
    CHECK(is_lambda_I(coercion_skeleton(a, "X", true)));
    CHECK(is_lambda_I(coercion_skeleton(a, "X", false)));
    if (type_mentions_fvar(a, "X")) {
      ++with_base;
      CHECK(term_has_uv(iprime(a, "X")));
    } else {
      CHECK_FALSE(term_has_uv(iprime(a, "X")));
    }
  }
  CHECK(with_base >= 100);
  CHECK_THROWS_AS(is_lambda_I(iprime(tvar("X"), "X")), std::invalid_argument);
}

TEST_CASE("typed coercions at the distinguished variable") {
  Context ctx{{"alpha", oconst()}};
  TypePtr g = identity_type();

  DerivPtr din = coercion_derivation(ctx, tvar("X"), "X", g, true);
  CHECK(term_equal(din->subject, marker_pack_term()));
  CHECK(type_equal(din->type, arrow(g, circ_type(g))));
  CHECK(check_derivation(din));

  DerivPtr dout = coercion_derivation(ctx, tvar("X"), "X", g, false);
  CHECK(term_equal(dout->subject, marker_unpack_term()));
  CHECK(type_equal(dout->type, arrow(circ_type(g), g)));
  CHECK(check_derivation(dout));

  DerivPtr dother = coercion_derivation(ctx, tvar("Y"), "X", g, true);
  CHECK(term_equal(dother->subject, identity_term()));
  CHECK(type_equal(dother->type, arrow(tvar("Y"), tvar("Y"))));

  CHECK_THROWS_AS(coercion_derivation({}, tvar("X"), "X", g, true), std::invalid_argument);
}

TEST_CASE("typed coercions follow the structural cases") {
  Context ctx{{"alpha", oconst()}};
  TypePtr x = tvar("X");
  TypePtr g = bool_type();

  TypePtr arr = arrow(x, x);
  DerivPtr darr = coercion_derivation(ctx, arr, "X", g, true);
  CHECK(term_equal(darr->subject, coercion_in(arr, "X")));
  CHECK(type_equal(darr->type, arrow(arrow(g, g), arrow(circ_type(g), circ_type(g)))));
  CHECK(check_derivation(darr));

  TypePtr quant = forall("Z", arrow(tvar("Z"), x));
  DerivPtr dq = coercion_derivation(ctx, quant, "X", g, false);
  CHECK(term_equal(dq->subject, coercion_out(quant, "X")));
  CHECK(type_equal(dq->type, arrow(type_subst(quant, "X", circ_type(g)), type_subst(quant, "X", g))));
  CHECK(check_derivation(dq));

  CHECK_THROWS_AS(coercion_derivation(ctx, forall("Z", arrow(x, x)), "X", g, true),
                  std::invalid_argument);
}

TEST_CASE("both coercion typings hold across shapes") {
  CHECK(check_IJ_typing(tvar("X"), "X"));
  CHECK(check_IJ_typing(tvar("Y"), "X"));
  CHECK(check_IJ_typing(arrow(tvar("X"), tvar("X")), "X"));
  CHECK(check_IJ_typing(forall("Z", arrow(tvar("Z"), tvar("X"))), "X"));
  CHECK(check_IJ_typing(arrow(arrow(tvar("X"), tvar("X")), tvar("X")), "X"));
  CHECK(check_IJ_typing(identity_type(), "X"));
  CHECK(check_IJ_typing(bool_type(), "X"));
  CHECK(check_IJ_typing(arrow(oconst(), tvar("X")), "X"));
  CHECK_THROWS_AS(check_IJ_typing(forall("Z", arrow(tvar("X"), tvar("X"))), "X"),
                  std::invalid_argument);

  Rng rng(20260817);
  for (int i = 0; i < 50; ++i) {
    TypePtr base = random_proper_closed_type(rng, 8);
    TypePtr a = i % 2 ? arrow(tvar("X"), base) : base;
    CAPTURE(print_type(a));
    CHECK(check_IJ_typing(a, "X"));
  }
}

TEST_CASE("type substitution through a derivation renames colliding binders") {
  Context c{{"y", tvar("X")}};
  Context cw = ctx_extend(c, "w", tvar("W"));
  DerivPtr inner = deriv_forall_i(deriv_arrow_i(deriv_ax(cw, "w"), "w"), "W");
  REQUIRE(check_derivation(inner));

  DerivPtr subbed = substitute_type_in_derivation(inner, "X", tvar("W"));
  CHECK(check_derivation(subbed));
  CHECK(type_equal(subbed->type, inner->type));
  CHECK(type_equal(*ctx_lookup(subbed->context, "y"), tvar("W")));
  CHECK(subbed->binder != "W");
  CHECK(term_equal(subbed->subject, inner->subject));
}

TEST_CASE("quantifier rule chains over an abstraction collapse to its introduction") {
  Context c{{"y", tvar("X")}};
  Context cw = ctx_extend(c, "w", tvar("W"));
  DerivPtr lam_open = deriv_forall_i(deriv_arrow_i(deriv_ax(cw, "w"), "w"), "W");
  DerivPtr inst = deriv_forall_e(lam_open, bool_type());
  REQUIRE(inst->variant == 1);

  DerivPtr stripped = strip_quantifier_rules(inst);
  REQUIRE(stripped);
  CHECK(stripped->rule == RuleTag::ArrowI);
  CHECK(type_equal(stripped->type, inst->type));
  CHECK(term_equal(stripped->subject, inst->subject));
  CHECK(check_derivation(stripped));

  Context cb = ctx_extend(c, "b", bool_type());
  DerivPtr inst_b = deriv_forall_e(weaken_derivation(lam_open, "b", bool_type()), bool_type());
  DerivPtr redex_b = deriv_arrow_e(inst_b, deriv_ax(cb, "b"));
  auto step = subject_beta_step_derivation(redex_b);
  REQUIRE(step);
  CHECK(term_equal((*step)->subject, fvar("b")));
  CHECK(type_equal((*step)->type, bool_type()));
  CHECK(check_derivation(*step));
}

TEST_CASE("rewriting the applied-variable elimination threads the marker through") {
  TypePtr e = type_e();
  TermPtr t = parse_term("\\x. x (\\y. y)");
  DerivPtr d = closed_derivation(t, e);
  std::vector<int> node = first_applied_var_elim(d);

  RewriteResult rw = rewrite_forall_e2(d, node);
  CHECK(term_mentions_alpha(rw.term));
  CHECK(is_beta_normal(rw.term));
  CHECK(check_derivation(rw.derivation));
  CHECK(type_equal(rw.derivation->type, e));
  REQUIRE(ctx_lookup(rw.derivation->context, "alpha"));
  CHECK(type_equal(*ctx_lookup(rw.derivation->context, "alpha"), oconst()));
  CHECK(rw.derivation->context.size() == 1);
}

TEST_CASE("rewrite rejects eliminations on abstractions") {
  DerivPtr did = closed_derivation(identity_term(), identity_type());
  DerivPtr inst = deriv_forall_e(did, bool_type());
  REQUIRE(inst->variant == 1);
  CHECK_THROWS_AS(rewrite_forall_e2(inst, {}), std::invalid_argument);
}

TEST_CASE("rewrite handles stacked quantifier instantiations on one spine") {
  TypePtr idt = identity_type();
  TypePtr hyp = forall("Y", forall("Z", arrow(tvar("Y"), arrow(tvar("Z"), idt))));
  Context c1{{"x", hyp}};
  SearchOutcome idd = search_F_derivation(c1, identity_term(), idt);
  REQUIRE(idd.status == SearchStatus::Found);

  DerivPtr d2 = deriv_forall_e(deriv_forall_e(deriv_ax(c1, "x"), idt), idt);
  DerivPtr d4 = deriv_arrow_e(deriv_arrow_e(d2, idd.derivation), idd.derivation);
  DerivPtr root = deriv_arrow_i(d4, "x");
  REQUIRE(check_derivation(root));
  REQUIRE(type_equal(root->type, arrow(hyp, idt)));

  // the innermost elimination sits below the other one on the same spine
  std::vector<int> lower = {0, 0, 0, 0};
  REQUIRE(derivation_at(root, lower)->rule == RuleTag::ForallE);
  REQUIRE(derivation_at(root, lower)->variant == 2);
  RewriteResult rw = rewrite_forall_e2(root, lower);
  CHECK(term_mentions_alpha(rw.term));
  CHECK(is_beta_normal(rw.term));
  CHECK(check_derivation(rw.derivation));
  CHECK(type_equal(rw.derivation->type, arrow(hyp, idt)));

  std::vector<int> upper = {0, 0, 0};
  RewriteResult rw2 = rewrite_forall_e2(root, upper);
  CHECK(term_mentions_alpha(rw2.term));
  CHECK(check_derivation(rw2.derivation));

  auto trace = k_witness(arrow(hyp, idt), root->subject);
  REQUIRE(trace);
  CHECK_FALSE(is_lambda_I(trace->final_term));
  CHECK(check_derivation(trace->after));
}

TEST_CASE("witness extraction on the vacuous-header examples") {
  for (const TypePtr& d : {type_e(), type_f()}) {
    CAPTURE(print_type(d));
    TermPtr t = parse_term("\\x. x (\\y. y)");
    auto trace = k_witness(d, t);
    REQUIRE(trace);
    CHECK(term_equal(trace->original, t));
    CHECK(term_mentions_alpha(trace->rewritten));
    CHECK(is_beta_normal(trace->rewritten));
    CHECK(term_is_closed(trace->final_term));
    CHECK(is_beta_normal(trace->final_term));
    CHECK_FALSE(is_lambda_I(trace->final_term));
    CHECK_FALSE(term_mentions_alpha(trace->final_term));
    CHECK(check_derivation(trace->before));
    CHECK(check_derivation(trace->after));
    CHECK(type_equal(trace->after->type, d));
    CHECK(derivation_at(trace->before, trace->used_node)->variant == 2);

    auto j = witness_trace_to_json(*trace);
    CHECK(j.contains("original"));
    CHECK(j.contains("final"));
    CHECK(j["rewritten"].get<std::string>().find("alpha") != std::string::npos);
  }
}

TEST_CASE("witness extraction declines identity-like inhabitants") {
  CHECK_FALSE(k_witness(identity_type(), identity_term()));
  CHECK_FALSE(k_witness(bool_type(), k1_term()));
  CHECK_FALSE(k_witness(bool_type(), k0_term()));

  CHECK_THROWS_AS(k_witness(arrow(oconst(), oconst()), identity_term()), std::invalid_argument);
  CHECK_THROWS_AS(k_witness(tvar("X"), identity_term()), std::invalid_argument);
  CHECK_THROWS_AS(k_witness(identity_type(), parse_term("(\\x. x) (\\x. x)")),
                  std::invalid_argument);
}

TEST_CASE("interpreting inert coercion constants preserves the marker") {
  Rng rng(31338);
  std::set<std::string> marked = {"a", "b"};
  int counter = 0;
  int exercised = 0;
  for (int i = 0; i < 300; ++i) {
    TermPtr t = random_good_term(rng, 3 + rng.below(12), marked, {"a", "b"}, &counter);
    ReductionOutcome nf = uv_normalize(t);
    if (nf.exhausted) continue;
    if (!term_has_uv(nf.result)) continue;
    if (!is_good(nf.result)) continue;
    ReductionOutcome plain = beta_normalize(interpret_uv(nf.result));
    REQUIRE_FALSE(plain.exhausted);
    CHECK(term_mentions_alpha(plain.result));
    ++exercised;
  }
  CHECK(exercised >= 25);
}
