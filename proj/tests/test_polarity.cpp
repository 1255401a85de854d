#include <catch2/catch_amalgamated.hpp>

#include "systemf/gen.hpp"
#include "systemf/polarity.hpp"
#include "systemf/syntax.hpp"

using namespace systemf;

namespace {

TypePtr type_e() { return parse_type("forall X. (forall Y. Id -> Y) -> Id"); }
TypePtr type_f() { return parse_type("forall X. (forall Y. Y -> Id) -> Id"); }

// The eta-long counterexample type and its quantifier erasure.
TypePtr type_t43() {
  return parse_type(
      "forall X. ((forall Y. ((Y -> forall Z. (X -> Y -> Z) -> Z) -> X) -> X) -> X) -> X -> X");
}
TypePtr type_t43_star() {
  return parse_type("((((Y -> (X -> Y -> Z) -> Z) -> X) -> X) -> X) -> X -> X");
}

const TypeExpr* type_at(const TypePtr& t, const TypePath& path) {
  const TypeExpr* cur = t.get();
  for (int step : path) {
    REQUIRE((cur->kind == TypeKind::Arrow || cur->kind == TypeKind::Forall));
    if (cur->kind == TypeKind::Forall) {
      REQUIRE(step == 0);
      cur = cur->lhs.get();
    } else {
      REQUIRE((step == 0 || step == 1));
      cur = step == 0 ? cur->lhs.get() : cur->rhs.get();
    }
  }
  return cur;
}

struct ForallOcc {
  TypePath path;
  int flips;
  bool vacuous;
};

void collect_foralls(const TypePtr& t, int flips, TypePath& path, std::vector<ForallOcc>& out) {
  switch (t->kind) {
    case TypeKind::Arrow:
      path.push_back(0);
      collect_foralls(t->lhs, flips + 1, path, out);
      path.back() = 1;
      collect_foralls(t->rhs, flips, path, out);
      path.pop_back();
      return;
    case TypeKind::Forall:
      out.push_back({path, flips, !type_mentions_bvar(t->lhs, 0)});
      path.push_back(0);
      collect_foralls(t->lhs, flips, path, out);
      path.pop_back();
      return;
    default:
      return;
  }
}

// Brute force over quantifier occurrences: membership in a class holds when
// every quantifier sits at the class's positive parity and binds a used
// variable.
bool oracle_member(const TypePtr& t, bool positive_mode) {
  std::vector<ForallOcc> occ;
  TypePath path;
  collect_foralls(t, 0, path, occ);
  for (const ForallOcc& o : occ) {
    bool local_positive = positive_mode == (o.flips % 2 == 0);
    if (!local_positive || o.vacuous) return false;
  }
  return true;
}

std::set<TypePath> oracle_obstructions(const TypePtr& t) {
  std::vector<ForallOcc> occ;
  TypePath path;
  collect_foralls(t, 0, path, occ);
  std::set<TypePath> out;
  for (const ForallOcc& o : occ)
    if (o.flips % 2 == 1 || o.vacuous) out.insert(o.path);
  return out;
}

TypePtr alpha_scramble(const TypePtr& t, int& counter) {
  switch (t->kind) {
    case TypeKind::Arrow:
      return arrow(alpha_scramble(t->lhs, counter), alpha_scramble(t->rhs, counter));
    case TypeKind::Forall: {
      std::string fresh = freshen("Q" + std::to_string(++counter), free_type_vars(t));
      TypePtr opened = forall_open(t, tvar(fresh));
      return forall(fresh, alpha_scramble(opened, counter));
    }
    default:
      return t;
  }
}

TypePtr canon_free_names(const TypePtr& t, std::map<std::string, std::string>& seen) {
  switch (t->kind) {
    case TypeKind::FVar: {
      auto it = seen.find(t->name);
      if (it == seen.end())
        it = seen.emplace(t->name, "V" + std::to_string(seen.size())).first;
      return tvar(it->second);
    }
    case TypeKind::Arrow:
      return arrow(canon_free_names(t->lhs, seen), canon_free_names(t->rhs, seen));
    case TypeKind::Forall:
      return forall_raw(t->name, canon_free_names(t->lhs, seen));
    default:
      return t;
  }
}

TypePtr zeds_to_oconst(const TypePtr& t) {
  switch (t->kind) {
    case TypeKind::FVar:
      return t->name == "Z" ? oconst() : t;
    case TypeKind::Arrow:
      return arrow(zeds_to_oconst(t->lhs), zeds_to_oconst(t->rhs));
    case TypeKind::Forall:
      return forall_raw(t->name, zeds_to_oconst(t->lhs));
    default:
      return t;
  }
}

} // namespace

TEST_CASE("properness requires every quantifier to bind") {
  CHECK(is_proper(identity_type()));
  CHECK(is_proper(bool_type()));
  CHECK(is_proper(nat_type()));
  CHECK(is_proper(tvar("X")));
  CHECK(is_proper(oconst()));
  CHECK(is_proper(type_t43()));

  TypePtr improper = parse_type("forall X. (X -> X) -> X -> forall Z. X");
  CHECK_FALSE(is_proper(improper));
  CHECK_FALSE(is_proper(type_e()));
  CHECK_FALSE(is_proper(type_f()));
  CHECK_FALSE(is_proper(arrow(improper, tvar("X"))));
  CHECK(is_proper(parse_type("forall X. forall Y. Y -> X")));
}

TEST_CASE("polarity classes on the paper examples") {
  PolarityReport id_rep = polarity(identity_type());
  CHECK(id_rep.in_positive);
  CHECK_FALSE(id_rep.in_negative);
  CHECK(id_rep.negative_quantifier_paths.empty());

  CHECK(polarity(bool_type()).in_positive);
  CHECK(polarity(nat_type()).in_positive);
  CHECK(polarity(type_t43()).in_positive);

  PolarityReport x_rep = polarity(tvar("X"));
  CHECK(x_rep.in_positive);
  CHECK(x_rep.in_negative);

  PolarityReport o_rep = polarity(oconst());
  CHECK(o_rep.in_positive);
  CHECK(o_rep.in_negative);

  PolarityReport left_id = polarity(parse_type("Id -> X"));
  CHECK_FALSE(left_id.in_positive);
  CHECK(left_id.in_negative);

  PolarityReport o_arrow = polarity(parse_type("O -> X"));
  CHECK(o_arrow.in_positive);
  CHECK(o_arrow.in_negative);
  CHECK(o_arrow.negative_quantifier_paths.empty());

  PolarityReport qfree = polarity(parse_type("(X -> Y) -> X -> Y"));
  CHECK(qfree.in_positive);
  CHECK(qfree.in_negative);
  CHECK(qfree.negative_quantifier_paths.empty());
}

TEST_CASE("negative quantifiers are localized") {
  // the unused outer binder and the inner quantifier on the argument side;
  // in F the result Id of the argument arrow inherits the negative position too
  PolarityReport e_rep = polarity(type_e());
  CHECK_FALSE(e_rep.in_positive);
  CHECK_FALSE(e_rep.in_negative);
  CHECK(e_rep.negative_quantifier_paths == std::set<TypePath>{{}, {0, 0}});
  CHECK(type_at(type_e(), {0, 0})->kind == TypeKind::Forall);

  PolarityReport f_rep = polarity(type_f());
  CHECK_FALSE(f_rep.in_positive);
  CHECK_FALSE(f_rep.in_negative);
  CHECK(f_rep.negative_quantifier_paths == std::set<TypePath>{{}, {0, 0}, {0, 0, 0, 1}});
  CHECK(type_at(type_f(), {0, 0})->kind == TypeKind::Forall);
  CHECK(type_at(type_f(), {0, 0, 0, 1})->kind == TypeKind::Forall);

  TypePtr improper = parse_type("forall X. (X -> X) -> X -> forall Z. X");
  PolarityReport rep = polarity(improper);
  CHECK_FALSE(rep.in_positive);
  CHECK(rep.negative_quantifier_paths == std::set<TypePath>{{0, 1, 1}});
  CHECK(type_at(improper, {0, 1, 1})->kind == TypeKind::Forall);

  PolarityReport deep = polarity(parse_type("((X -> Id) -> X) -> X"));
  CHECK(deep.in_positive);
  CHECK(deep.negative_quantifier_paths.empty());

  PolarityReport twice_flipped = polarity(parse_type("(Id -> X) -> X"));
  CHECK(twice_flipped.in_positive);
  CHECK(twice_flipped.negative_quantifier_paths.empty());

  PolarityReport odd = polarity(parse_type("X -> Id -> X"));
  CHECK_FALSE(odd.in_positive);
  CHECK(odd.negative_quantifier_paths == std::set<TypePath>{{1, 0}});
}

TEST_CASE("erasure drops quantifiers after renaming binders apart") {
  CHECK(type_equal(erase_quantifiers(identity_type()), parse_type("X -> X")));
  CHECK(type_equal(erase_quantifiers(bool_type()), parse_type("X -> X -> X")));
  CHECK(type_equal(erase_quantifiers(nat_type()), parse_type("X -> (X -> X) -> X")));
  CHECK(type_equal(erase_quantifiers(type_t43()), type_t43_star()));

  TypePtr improper = parse_type("forall X. (X -> X) -> X -> forall Z. X");
  CHECK(type_equal(erase_quantifiers(improper), parse_type("(X -> X) -> X -> X")));

  // reused binder names come out pairwise distinct
  TypePtr reuse = parse_type("forall X. X -> Id");
  CHECK(type_equal(erase_quantifiers(reuse), parse_type("X -> X1 -> X1")));

  // free variables survive untouched and binders dodge them
  TypePtr open_type = forall("X", arrow(tvar("X"), tvar("W")));
  CHECK(type_equal(erase_quantifiers(open_type), parse_type("X -> W")));
  TypePtr captureish = forall("W", arrow(tvar("W"), tvar("X")));
  CHECK(type_equal(erase_quantifiers(captureish), parse_type("W -> X")));
  TypePtr shadow = forall("X", arrow(tvar("X"), arrow(tvar("X1"), tvar("X"))));
  CHECK(type_equal(erase_quantifiers(shadow), parse_type("X -> X1 -> X")));

  CHECK(free_type_vars(erase_quantifiers(type_e())).size() == 3);
}

TEST_CASE("membership matches the per-occurrence oracle") {
  Rng rng(20260817);
  int with_quantifier = 0;
  for (int i = 0; i < 600; ++i) {
    TypePtr t = random_type(rng, 2 + rng.below(12), {"X", "Y", "Z"});
    if (rng.coin(30)) t = zeds_to_oconst(t);
    CAPTURE(print_type(t));
    PolarityReport rep = polarity(t);
    CHECK(rep.in_positive == oracle_member(t, true));
    CHECK(rep.in_negative == oracle_member(t, false));
    CHECK(rep.negative_quantifier_paths == oracle_obstructions(t));
    CHECK(rep.in_positive == in_positive_class(t));
    CHECK(rep.in_negative == in_negative_class(t));
    if (t->kind == TypeKind::Arrow) {
      CHECK(rep.in_positive ==
            (in_negative_class(t->lhs) && in_positive_class(t->rhs)));
      CHECK(rep.in_negative ==
            (in_positive_class(t->lhs) && in_negative_class(t->rhs)));
    }
    std::vector<ForallOcc> occ;
    TypePath path;
    collect_foralls(t, 0, path, occ);
    if (!occ.empty()) {
      ++with_quantifier;
    } else {
      CHECK(rep.in_positive);
      CHECK(rep.in_negative);
    }
    if (t->kind == TypeKind::Forall) CHECK_FALSE(rep.in_negative);
  }
  CHECK(with_quantifier >= 200);
}

TEST_CASE("polarity and properness ignore binder names") {
  Rng rng(77001);
  for (int i = 0; i < 200; ++i) {
    TypePtr t = random_type(rng, 2 + rng.below(10), {"X", "Y"});
    int counter = 0;
    TypePtr renamed = alpha_scramble(t, counter);
    CHECK(type_equal(t, renamed));
    PolarityReport a = polarity(t);
    PolarityReport b = polarity(renamed);
    CHECK(a.in_positive == b.in_positive);
    CHECK(a.in_negative == b.in_negative);
    CHECK(a.negative_quantifier_paths == b.negative_quantifier_paths);
    CHECK(is_proper(t) == is_proper(renamed));
    std::map<std::string, std::string> seen_a;
    std::map<std::string, std::string> seen_b;
    CHECK(type_equal(canon_free_names(erase_quantifiers(t), seen_a),
                     canon_free_names(erase_quantifiers(renamed), seen_b)));
  }
}
