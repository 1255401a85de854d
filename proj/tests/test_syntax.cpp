#include <catch2/catch_amalgamated.hpp>

#include "systemf/gen.hpp"
#include "systemf/syntax.hpp"

using namespace systemf;

TEST_CASE("numeral sugar expands to iterated application") {
  CHECK(term_equal(parse_term("#0"), lam("x", lam("f", fvar("x")))));
  CHECK(term_equal(parse_term("#1"), lam("x", lam("f", app(fvar("f"), fvar("x"))))));
  CHECK(term_equal(parse_term("#2"),
                   lam("x", lam("f", app(fvar("f"), app(fvar("f"), fvar("x")))))));
  CHECK(term_equal(parse_term("#1"), parse_term("##1")));
  CHECK(term_equal(parse_term("#3"), parse_term("##3")));
}

TEST_CASE("zero has a variable-using variant") {
  TermPtr z = parse_term("##0");
  CHECK(term_is_closed(z));
  CHECK(is_lambda_I(z));
  CHECK(term_equal(z, parse_term("\\x. \\f. (((x) id) id) f")));
  CHECK(term_equal(z, parse_term("\\x. \\f. x id id f")));
  CHECK_FALSE(is_lambda_I(parse_term("#0")));
  CHECK(is_lambda_I(parse_term("#1")));
  CHECK(is_lambda_I(parse_term("#5")));
}

TEST_CASE("stock combinators") {
  CHECK(term_equal(parse_term("id"), lam("a", fvar("a"))));
  CHECK(term_equal(parse_term("K0"), lam("a", lam("b", fvar("b")))));
  CHECK(term_equal(parse_term("K1"), lam("a", lam("b", fvar("a")))));
  CHECK(is_lambda_I(parse_term("id")));
  CHECK_FALSE(is_lambda_I(parse_term("K0")));
  CHECK_FALSE(is_lambda_I(parse_term("K1")));
}

TEST_CASE("tuple sugar applies a fresh head variable") {
  TermPtr t = parse_term("<u, v>");
  CHECK(term_equal(t, lam("z", app(app(fvar("z"), fvar("u")), fvar("v")))));
  TermPtr t3 = parse_term("<a, b, c>");
  CHECK(term_equal(
      t3, lam("z", app(app(app(fvar("z"), fvar("a")), fvar("b")), fvar("c")))));
  // The head must dodge free variables of the components.
  TermPtr clash = parse_term("<x, y>");
  CHECK(term_equal(clash, lam("q", app(app(fvar("q"), fvar("x")), fvar("y")))));
}

TEST_CASE("application is left associative and lambda bodies extend right") {
  CHECK(term_equal(parse_term("f a b"), app(app(fvar("f"), fvar("a")), fvar("b"))));
  CHECK(term_equal(parse_term("(f a) b"), parse_term("f a b")));
  CHECK(term_equal(parse_term("f (a b)"), app(fvar("f"), app(fvar("a"), fvar("b")))));
  CHECK(term_equal(parse_term("\\x. x y"), lam("x", app(fvar("x"), fvar("y")))));
  CHECK(term_equal(parse_term("x \\y. y"), app(fvar("x"), lam("y", fvar("y")))));
}

TEST_CASE("alpha equality ignores binder names") {
  CHECK(term_equal(parse_term("\\x. x"), parse_term("\\y. y")));
  CHECK(term_equal(parse_term("\\x. \\x. x"), parse_term("\\a. \\b. b")));
  CHECK_FALSE(term_equal(parse_term("\\x. \\y. x"), parse_term("\\x. \\y. y")));
  CHECK(type_equal(parse_type("forall X. X -> X"), parse_type("forall Y. Y -> Y")));
}

TEST_CASE("substitution avoids capture") {
  TermPtr t = subst(parse_term("\\y. x"), "x", fvar("y"));
  // The substituted y stays free; the binder renames itself away on print.
  CHECK(term_equal(t, lam_raw("y", fvar("y"))));
  CHECK(free_vars(t).count("y") == 1);
  CHECK(term_equal(parse_term(print_term(t)), t));
}

TEST_CASE("constants parse and print") {
  TermPtr u = parse_term("U[Id, X]");
  REQUIRE(u->kind == TermKind::UConst);
  CHECK(type_equal(u->ctype, identity_type()));
  CHECK(u->cvar == "X");
  CHECK(print_term(u) == "U[forall X. X -> X, X]");
  CHECK(term_equal(parse_term(print_term(u)), u));

  TermPtr v = parse_term("V[Y -> Z, X]");
  REQUIRE(v->kind == TermKind::VConst);
  CHECK(type_equal(v->ctype, arrow(tvar("Y"), tvar("Z"))));

  CHECK(parse_term("alpha")->kind == TermKind::Alpha);
  CHECK(parse_term("$c")->kind == TermKind::Opaque);
  CHECK(parse_term("$c")->name == "c");

  // U not followed by a bracket is an ordinary variable.
  CHECK(parse_term("U")->kind == TermKind::FVar);
}

TEST_CASE("type sugar") {
  CHECK(type_equal(parse_type("Id"), forall("X", arrow(tvar("X"), tvar("X")))));
  CHECK(type_equal(parse_type("Bool"),
                   forall("X", arrow(tvar("X"), arrow(tvar("X"), tvar("X"))))));
  CHECK(type_equal(parse_type("Ent"),
                   forall("X", arrow(tvar("X"),
                                     arrow(arrow(tvar("X"), tvar("X")), tvar("X"))))));
  CHECK(type_equal(parse_type("A -> B -> C"),
                   arrow(tvar("A"), arrow(tvar("B"), tvar("C")))));
  CHECK(type_equal(parse_type("(A -> B) -> C"),
                   arrow(arrow(tvar("A"), tvar("B")), tvar("C"))));
  CHECK(parse_type("O")->kind == TypeKind::OConst);
}

TEST_CASE("conjunction sugar is flat") {
  TypePtr ab = parse_type("A /\\ B");
  CHECK(type_equal(ab, forall("X", arrow(arrow(tvar("A"), arrow(tvar("B"), tvar("X"))),
                                         tvar("X")))));
  TypePtr abc = parse_type("A /\\ B /\\ C");
  CHECK(type_equal(
      abc, forall("X", arrow(arrow(tvar("A"), arrow(tvar("B"), arrow(tvar("C"), tvar("X")))),
                             tvar("X")))));
  CHECK_FALSE(type_equal(abc, conj_type({tvar("A"), conj_type({tvar("B"), tvar("C")})})));
  // The binder dodges free variables of the components.
  TypePtr xx = parse_type("X /\\ X");
  CHECK(type_equal(xx, forall("W", arrow(arrow(tvar("X"), arrow(tvar("X"), tvar("W"))),
                                         tvar("W")))));
}

TEST_CASE("connective counts") {
  CHECK(type_connectives(parse_type("Id")) == 2);
  CHECK(type_connectives(parse_type("Bool")) == 3);
  CHECK(type_connectives(parse_type("Bool -> Id")) == 6);
  CHECK(type_connectives(parse_type("Bool /\\ Id")) == 9);
  CHECK(type_connectives(parse_type("X")) == 0);
  CHECK(type_connectives(parse_type("O")) == 0);
  CHECK(quantifier_count(parse_type("Bool /\\ Id")) == 3);
  CHECK(type_connectives(circ_type(tvar("G"))) == 5);
}

TEST_CASE("conjunction components and arrows print with parentheses") {
  CHECK(print_type(parse_type("A /\\ B")) == "forall X. (A -> B -> X) -> X");
  CHECK(print_type(parse_type("(A -> B) -> C")) == "(A -> B) -> C");
  CHECK(print_type(parse_type("forall X. X -> X")) == "forall X. X -> X");
  CHECK(print_type(arrow(identity_type(), tvar("C"))) == "(forall X. X -> X) -> C");
}

TEST_CASE("tree positions address subterms") {
  TermPtr t = parse_term("\\x. x (y z)");
  CHECK(term_equal(subterm_at(t, {0}), app(bvar(0), app(fvar("y"), fvar("z")))));
  CHECK(subterm_at(t, {0, 0})->kind == TermKind::BVar);
  CHECK(term_equal(subterm_at(t, {0, 1}), app(fvar("y"), fvar("z"))));
  CHECK_THROWS_AS(subterm_at(t, {1}), std::out_of_range);

  TermPtr r = replace_at(t, {0, 1}, fvar("w"));
  CHECK(term_equal(r, parse_term("\\x. x w")));
}

TEST_CASE("grafting into a context lets binders capture") {
  TermPtr c = parse_term("\\x. $hole");
  TermPtr grafted = replace_in_context_hole(c, {0}, fvar("x"));
  CHECK(term_equal(grafted, parse_term("\\x. x")));

  TermPtr c2 = parse_term("\\x. \\y. $hole y");
  TermPtr grafted2 = replace_in_context_hole(c2, {0, 0, 0}, app(fvar("x"), fvar("y")));
  CHECK(term_equal(grafted2, parse_term("\\x. \\y. (x y) y")));

  // Plain replace_at leaves the graft free by contrast.
  TermPtr free_graft = replace_at(c, {0}, fvar("x"));
  CHECK(free_vars(free_graft).count("x") == 1);
}

TEST_CASE("printing avoids shadowing and reserved words") {
  TermPtr t = lam("id", fvar("q"));
  std::string s = print_term(t);
  CHECK(s.find("\\id.") == std::string::npos);
  CHECK(term_equal(parse_term(s), t));

  // A binder hint colliding with a free variable must rename.
  TermPtr u = lam_raw("y", app(bvar(0), fvar("y")));
  std::string su = print_term(u);
  CHECK(term_equal(parse_term(su), u));
}

TEST_CASE("parse and print are mutually inverse on random terms") {
  Rng rng(20260817);
  int counter = 0;
  for (int i = 0; i < 400; ++i) {
    TermPtr t = random_closed_term(rng, 3 + rng.below(20));
    CAPTURE(print_term(t));
    CHECK(term_equal(parse_term(print_term(t)), t));
  }
  for (int i = 0; i < 200; ++i) {
    TermPtr t = random_uv_term(rng, 3 + rng.below(16), {"a", "b"}, &counter);
    CAPTURE(print_term(t));
    CHECK(term_equal(parse_term(print_term(t)), t));
  }
}

TEST_CASE("parse and print are mutually inverse on random types") {
  Rng rng(917);
  for (int i = 0; i < 400; ++i) {
    int counter = 0;
    TypePtr t = random_type(rng, 1 + rng.below(10), {"A", "B"}, &counter);
    CAPTURE(print_type(t));
    CHECK(type_equal(parse_type(print_type(t)), t));
  }
}

TEST_CASE("parse errors carry a position") {
  CHECK_THROWS_AS(parse_term("\\x."), ParseError);
  CHECK_THROWS_AS(parse_term("(x"), ParseError);
  CHECK_THROWS_AS(parse_term("x )"), ParseError);
  CHECK_THROWS_AS(parse_term(""), ParseError);
  CHECK_THROWS_AS(parse_type("forall . X"), ParseError);
  CHECK_THROWS_AS(parse_type("A -> "), ParseError);
  try {
    parse_term("x !");
    FAIL("expected a parse error");
  } catch (const ParseError& e) {
    CHECK(e.pos == 2);
  }
}

TEST_CASE("free variables and closedness") {
  CHECK(free_vars(parse_term("\\x. x y z")) == (std::set<std::string>{"y", "z"}));
  CHECK(term_is_closed(parse_term("\\x. x")));
  CHECK_FALSE(term_is_closed(parse_term("\\x. y")));
  CHECK(free_type_vars(parse_type("forall X. X -> Y")) == std::set<std::string>{"Y"});
  CHECK(type_is_closed(parse_type("Id")));
}

TEST_CASE("term ordering is a total order compatible with equality") {
  Rng rng(55);
  std::vector<TermPtr> ts;
  for (int i = 0; i < 60; ++i) ts.push_back(random_closed_term(rng, 3 + rng.below(12)));
  for (const auto& a : ts)
    for (const auto& b : ts) {
      int ab = term_compare(a, b), ba = term_compare(b, a);
      CHECK(ab == -ba);
      CHECK((ab == 0) == term_equal(a, b));
    }
}
