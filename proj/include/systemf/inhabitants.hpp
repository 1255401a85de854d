#pragma once

#include <algorithm>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "systemf/polarity.hpp"
#include "systemf/reduction.hpp"
#include "systemf/syntax.hpp"
#include "systemf/typing.hpp"
#include "systemf/witness.hpp"

namespace systemf {

// ---------------------------------------------------------------------------
// Bounded enumeration of the closed beta-eta-normal inhabitants of a type,
// classification by whether every inhabitant uses each bound variable, and
// exhaustive sweeps over the small one- and two-quantifier types.
// ---------------------------------------------------------------------------

struct Inhabitant {
  TermPtr term;         // closed, beta-eta-normal
  DerivPtr derivation;  // checked derivation of term at the queried type
  bool lambda_I = false;
};

struct Enumeration {
  std::vector<Inhabitant> items;  // ordered by (term size, canonical print)
  bool truncated = false;         // a budget cut some branch, so terms beyond
                                  // the listed ones may exist within the bound
};

// Every closed eta-long inhabitant whose derivation fits the size bound,
// eta-normalized and deduplicated up to alpha. Emptiness at a bound proves
// nothing about larger bounds.
inline Enumeration enumerate_inhabitants(const TypePtr& d, int size_bound,
                                         const SearchBudget& budget = {}) {
  if (!type_is_closed(d))
    throw std::invalid_argument("enumerate_inhabitants: type must be closed");
  std::map<std::string, Inhabitant> found;
  bool truncated = enumerate_proofs({}, d, size_bound, budget, [&](const ProofEnumItem& item) {
    ReductionOutcome eta = eta_normalize(item.subject);
    if (eta.exhausted)
      throw std::logic_error("enumerate_inhabitants: eta normalization ran out of fuel");
    std::string key = print_term_canonical(eta.result);
    auto it = found.find(key);
    if (it == found.end())
      found.emplace(key, Inhabitant{eta.result, eta.steps == 0 ? item.derivation : nullptr,
                                    is_lambda_I(eta.result)});
    else if (!it->second.derivation && eta.steps == 0)
      it->second.derivation = item.derivation;
    return false;
  });
  Enumeration out;
  out.truncated = truncated;
  out.items.reserve(found.size());
  for (auto& [key, item] : found) {
    if (!item.derivation) {
      SearchOutcome got = search_F_derivation({}, item.term, d, budget);
      if (got.status != SearchStatus::Found)
        throw std::logic_error("enumerate_inhabitants: lost the derivation of " + key);
      item.derivation = got.derivation;
    }
    out.items.push_back(std::move(item));
  }
  std::sort(out.items.begin(), out.items.end(), [](const Inhabitant& a, const Inhabitant& b) {
    int sa = term_size(a.term), sb = term_size(b.term);
    if (sa != sb) return sa < sb;
    return print_term_canonical(a.term) < print_term_canonical(b.term);
  });
  return out;
}

// ---------------------------------------------------------------------------
// Classification.
// ---------------------------------------------------------------------------

enum class ITypeVerdictKind {
  NotIType,                  // a closed beta-normal inhabitant discards a binder
  ITypeUpToBound,            // demonstrable; every inhabitant found is a lambda-I term
  NotITypeByPolarity,        // demonstrable but outside the positive class
  NotDemonstrableUpToBound,  // no inhabitant within the bound
};

inline const char* itype_verdict_name(ITypeVerdictKind kind) {
  switch (kind) {
    case ITypeVerdictKind::NotIType: return "not-itype";
    case ITypeVerdictKind::ITypeUpToBound: return "itype-up-to-bound";
    case ITypeVerdictKind::NotITypeByPolarity: return "not-itype-by-polarity";
    case ITypeVerdictKind::NotDemonstrableUpToBound: return "not-demonstrable-up-to-bound";
  }
  return "unknown";
}

struct ITypeVerdict {
  ITypeVerdictKind kind = ITypeVerdictKind::NotDemonstrableUpToBound;
  TermPtr witness;              // NotIType: a closed beta-eta-normal non-lambda-I term
  DerivPtr witness_derivation;  // checked at the classified type
  std::optional<TypePath> obstruction;  // NotITypeByPolarity: a failing quantifier position
};

struct ClassificationReport {
  TypePtr type;
  int bound = 0;
  std::vector<Inhabitant> inhabitants;
  std::optional<bool> demonstrable;  // unset until an inhabitant proves it
  int order = 0;                     // inhabitant count at the bound
  bool order_exact = false;          // the set already agreed at the previous bound
  bool truncated = false;
  ITypeVerdict verdict;
};

namespace detail {

inline std::pair<TermPtr, DerivPtr> normalized_witness(const TypePtr& d, const WitnessTrace& w,
                                                       const SearchBudget& budget) {
  ReductionOutcome eta = eta_normalize(w.final_term);
  if (eta.steps == 0) return {w.final_term, w.after};
  SearchOutcome got = search_F_derivation({}, eta.result, d, budget);
  if (got.status != SearchStatus::Found)
    throw std::logic_error("classify_itype: extracted witness lost its derivation");
  return {eta.result, got.derivation};
}

}  // namespace detail

// Enumerates at the bound and one below it. Any discarding inhabitant settles
// the question; otherwise a demonstrable type outside the positive class
// always has a discarding inhabitant somewhere, so the verdict records the
// obstruction and the rewriting pipeline is asked for a concrete certificate.
inline ClassificationReport classify_itype(const TypePtr& d, int size_bound,
                                           const SearchBudget& budget = {}) {
  Enumeration cur = enumerate_inhabitants(d, size_bound, budget);
  Enumeration prev = enumerate_inhabitants(d, size_bound > 0 ? size_bound - 1 : 0, budget);
  ClassificationReport r;
  r.type = d;
  r.bound = size_bound;
  r.inhabitants = cur.items;
  r.truncated = cur.truncated || prev.truncated;
  r.order = static_cast<int>(cur.items.size());
  bool stable = !r.truncated && cur.items.size() == prev.items.size();
  for (size_t i = 0; stable && i < cur.items.size(); ++i)
    stable = print_term_canonical(cur.items[i].term) == print_term_canonical(prev.items[i].term);
  r.order_exact = stable;
  if (!cur.items.empty()) r.demonstrable = true;

  for (const auto& it : cur.items) {
    if (it.lambda_I) continue;
    r.verdict = ITypeVerdict{ITypeVerdictKind::NotIType, it.term, it.derivation, std::nullopt};
    return r;
  }
  if (cur.items.empty()) {
    r.verdict.kind = ITypeVerdictKind::NotDemonstrableUpToBound;
    return r;
  }
  PolarityReport pol = polarity(d);
  if (pol.in_positive) {
    r.verdict.kind = ITypeVerdictKind::ITypeUpToBound;
    return r;
  }
  if (pol.negative_quantifier_paths.empty())
    throw std::logic_error("classify_itype: negative polarity without an obstruction");
  if (!type_mentions_oconst(d)) {
    for (const auto& it : cur.items) {
      std::optional<WitnessTrace> w = k_witness(d, it.term, budget);
      if (!w) continue;
      auto [wit, wd] = detail::normalized_witness(d, *w, budget);
      r.verdict = ITypeVerdict{ITypeVerdictKind::NotIType, wit, wd, std::nullopt};
      return r;
    }
  }
  r.verdict = ITypeVerdict{ITypeVerdictKind::NotITypeByPolarity, nullptr, nullptr,
                           *pol.negative_quantifier_paths.begin()};
  return r;
}

// ---------------------------------------------------------------------------
// The finite-order family and the infinite-order pair family.
//
//   B_n   = forall X Y1 ... Yn { (Y1->X),...,(Yn->X) ->
//             [Y1,...,Yn -> (X /\ Y1 /\ ... /\ Yn)] /\ (Y1->X) /\ ... /\ (Yn->X) }
//   T_i   = \x1...\xn <\y1...\yn <(x_i)y_i, y1,...,yn>, x1,...,xn>
//   B_inf = forall X Y { (X->Y),(Y->X) -> [(X->Y) /\ (Y->X)] }
//   T_i,j = \x\y <\u[(x)(y)]^i(x)u, \u[(y)(x)]^j(y)u>
// ---------------------------------------------------------------------------

inline TypePtr build_Bn(int n) {
  if (n < 2) throw std::invalid_argument("build_Bn: n must be at least 2");
  TypePtr X = tvar("X");
  std::vector<TypePtr> ys;
  ys.reserve(n);
  for (int i = 1; i <= n; ++i) ys.push_back(tvar("Y" + std::to_string(i)));
  std::vector<TypePtr> all = {X};
  all.insert(all.end(), ys.begin(), ys.end());
  TypePtr bracket = conj_type(all);
  for (int i = n - 1; i >= 0; --i) bracket = arrow(ys[i], bracket);
  std::vector<TypePtr> parts = {bracket};
  for (int i = 0; i < n; ++i) parts.push_back(arrow(ys[i], X));
  TypePtr body = conj_type(parts);
  for (int i = n - 1; i >= 0; --i) body = arrow(arrow(ys[i], X), body);
  for (int i = n - 1; i >= 0; --i) body = forall("Y" + std::to_string(i + 1), body);
  return forall("X", body);
}

inline TermPtr build_Ti(int n, int i) {
  if (n < 2) throw std::invalid_argument("build_Ti: n must be at least 2");
  if (i < 1 || i > n) throw std::invalid_argument("build_Ti: index out of range");
  std::vector<TermPtr> xs, ys;
  xs.reserve(n);
  ys.reserve(n);
  for (int k = 1; k <= n; ++k) xs.push_back(fvar("x" + std::to_string(k)));
  for (int k = 1; k <= n; ++k) ys.push_back(fvar("y" + std::to_string(k)));
  std::vector<TermPtr> inner_parts = {app(xs[i - 1], ys[i - 1])};
  inner_parts.insert(inner_parts.end(), ys.begin(), ys.end());
  TermPtr inner = tuple(inner_parts);
  for (int k = n; k >= 1; --k) inner = lam("y" + std::to_string(k), inner);
  std::vector<TermPtr> outer_parts = {inner};
  outer_parts.insert(outer_parts.end(), xs.begin(), xs.end());
  TermPtr out = tuple(outer_parts);
  for (int k = n; k >= 1; --k) out = lam("x" + std::to_string(k), out);
  return out;
}

inline TypePtr build_Binf() {
  TypePtr xy = arrow(tvar("X"), tvar("Y"));
  TypePtr yx = arrow(tvar("Y"), tvar("X"));
  return forall("X", forall("Y", arrow(xy, arrow(yx, conj_type({xy, yx})))));
}

inline TermPtr build_Tij(int i, int j) {
  if (i < 0 || j < 0) throw std::invalid_argument("build_Tij: indices must be nonnegative");
  auto component = [](const std::string& a, const std::string& b, int reps) {
    TermPtr body = app(fvar(a), fvar("u"));
    for (int k = 0; k < reps; ++k) body = app(fvar(a), app(fvar(b), body));
    ReductionOutcome out = beta_eta_normalize(lam("u", body));
    if (out.exhausted) throw std::logic_error("build_Tij: normalization ran out of fuel");
    return out.result;
  };
  return lam("x", lam("y", tuple({component("x", "y", i), component("y", "x", j)})));
}

// ---------------------------------------------------------------------------
// Sweeps. All closed proper types with exactly one or two quantifiers up to a
// connective-count bound, one representative per symmetry class: argument
// order never affects inhabitant counts or binder usage, and neither does the
// order of adjacent quantifiers, so chains are sorted and quantifier runs take
// the order that prints least.
// ---------------------------------------------------------------------------

namespace detail {

inline TypePtr rebind_positional(const TypePtr& t, int& next,
                                 const std::vector<std::string>& supply) {
  switch (t->kind) {
    case TypeKind::Arrow: {
      TypePtr l = rebind_positional(t->lhs, next, supply);
      TypePtr r = rebind_positional(t->rhs, next, supply);
      return arrow(l, r);
    }
    case TypeKind::Forall: {
      std::string name = next < static_cast<int>(supply.size())
                             ? supply[next]
                             : "T" + std::to_string(next + 1);
      ++next;
      return forall_raw(name, rebind_positional(t->lhs, next, supply));
    }
    default:
      return t;
  }
}

inline std::string sweep_type_key(const TypePtr& t) {
  static const std::vector<std::string> supply = {"B1", "B2", "B3", "B4"};
  int next = 0;
  return print_type(rebind_positional(t, next, supply));
}

inline std::vector<TypePtr> sweep_variants(const TypePtr& t, std::set<std::string>& taken) {
  if (t->kind == TypeKind::Forall) {
    std::vector<std::string> names;
    TypePtr cur = t;
    while (cur->kind == TypeKind::Forall) {
      std::string n = freshen("Q", taken);
      taken.insert(n);
      names.push_back(n);
      cur = forall_open(cur, tvar(n));
    }
    std::vector<TypePtr> inner = sweep_variants(cur, taken);
    std::sort(names.begin(), names.end());
    std::vector<TypePtr> out;
    do {
      for (const auto& body : inner) {
        TypePtr cand = body;
        for (auto it = names.rbegin(); it != names.rend(); ++it) cand = forall(*it, cand);
        out.push_back(cand);
      }
    } while (std::next_permutation(names.begin(), names.end()));
    return out;
  }
  if (t->kind == TypeKind::Arrow) {
    std::vector<TypePtr> args;
    TypePtr head = t;
    while (head->kind == TypeKind::Arrow) {
      args.push_back(head->lhs);
      head = head->rhs;
    }
    std::vector<std::vector<TypePtr>> arg_variants;
    arg_variants.reserve(args.size());
    for (const auto& a : args) arg_variants.push_back(sweep_variants(a, taken));
    std::vector<TypePtr> head_variants = sweep_variants(head, taken);
    std::vector<TypePtr> out;
    std::vector<size_t> idx(args.size(), 0);
    while (true) {
      std::vector<TypePtr> chosen;
      chosen.reserve(args.size());
      for (size_t i = 0; i < args.size(); ++i) chosen.push_back(arg_variants[i][idx[i]]);
      std::stable_sort(chosen.begin(), chosen.end(), [](const TypePtr& a, const TypePtr& b) {
        int ca = type_connectives(a), cb = type_connectives(b);
        if (ca != cb) return ca < cb;
        return sweep_type_key(a) < sweep_type_key(b);
      });
      for (const auto& h : head_variants) {
        TypePtr ty = h;
        for (auto it = chosen.rbegin(); it != chosen.rend(); ++it) ty = arrow(*it, ty);
        out.push_back(ty);
      }
      size_t i = 0;
      for (; i < idx.size(); ++i) {
        if (++idx[i] < arg_variants[i].size()) break;
        idx[i] = 0;
      }
      if (i == idx.size()) break;
    }
    return out;
  }
  return {t};
}

inline TypePtr sweep_canonical(const TypePtr& t) {
  std::set<std::string> taken = free_type_vars(t);
  std::vector<TypePtr> variants = sweep_variants(t, taken);
  TypePtr best;
  std::string best_key;
  for (const auto& v : variants) {
    std::string key = sweep_type_key(v);
    if (!best || key < best_key) {
      best = v;
      best_key = key;
    }
  }
  static const std::vector<std::string> supply = {"X", "Y", "Z", "W"};
  int next = 0;
  return rebind_positional(best, next, supply);
}

// Exact-count generator: every closed proper type with the given connective
// and quantifier counts, argument chains already in canonical order. Atom
// names are fixed by binder depth, so each alpha class appears once.
struct SweepSpace {
  std::map<std::tuple<int, int, int>, std::vector<TypePtr>> cells;
  std::map<const TypeExpr*, std::string> keys;

  const std::string& key_of(const TypePtr& t) {
    auto it = keys.find(t.get());
    if (it == keys.end()) it = keys.emplace(t.get(), sweep_type_key(t)).first;
    return it->second;
  }

  static const std::vector<std::string>& atom_names() {
    static const std::vector<std::string> names = {"X", "Y", "Z", "W"};
    return names;
  }

  const std::vector<TypePtr>& cell(int connectives, int quantifiers, int level) {
    auto key = std::make_tuple(connectives, quantifiers, level);
    auto hit = cells.find(key);
    if (hit != cells.end()) return hit->second;
    std::vector<TypePtr> out;
    const auto& names = atom_names();
    if (connectives == 0 && quantifiers == 0)
      for (int i = 0; i < level; ++i) out.push_back(tvar(names[i]));
    if (connectives >= 1 && quantifiers >= 1 && level < static_cast<int>(names.size()))
      for (const auto& body : cell(connectives - 1, quantifiers - 1, level + 1))
        if (free_type_vars(body).count(names[level]))
          out.push_back(forall(names[level], body));
    if (connectives >= 1) {
      std::vector<TypePtr> prefix;
      chains(connectives, quantifiers, level, 0, "", prefix, out);
    }
    auto ins = cells.emplace(key, std::move(out));
    return ins.first->second;
  }

 private:
  // Argument prefixes grow in (size, key) order so each multiset appears once.
  void chains(int c_left, int q_left, int level, int prev_c, const std::string& prev_key,
              std::vector<TypePtr>& prefix, std::vector<TypePtr>& out) {
    if (!prefix.empty()) {
      std::vector<TypePtr> heads;
      if (c_left == 0 && q_left == 0) {
        for (int i = 0; i < level; ++i) heads.push_back(tvar(atom_names()[i]));
      } else if (c_left >= 1 && q_left >= 1) {
        for (const auto& h : cell(c_left, q_left, level))
          if (h->kind == TypeKind::Forall) heads.push_back(h);
      }
      for (const auto& h : heads) {
        TypePtr ty = h;
        for (auto it = prefix.rbegin(); it != prefix.rend(); ++it) ty = arrow(*it, ty);
        out.push_back(ty);
      }
    }
    for (int ca = prev_c; ca <= c_left - 1; ++ca) {
      for (int qa = 0; qa <= q_left; ++qa) {
        for (const auto& a : cell(ca, qa, level)) {
          if (ca == prev_c && key_of(a) < prev_key) continue;
          prefix.push_back(a);
          chains(c_left - 1 - ca, q_left - qa, level, ca, key_of(a), prefix, out);
          prefix.pop_back();
        }
      }
    }
  }
};

inline std::vector<TypePtr> all_small_types(int quantifiers, int size_bound) {
  SweepSpace space;
  std::map<std::string, TypePtr> dedup;
  for (int c = quantifiers; c <= size_bound; ++c)
    for (const auto& t : space.cell(c, quantifiers, 0)) {
      TypePtr canon = sweep_canonical(t);
      dedup.emplace(sweep_type_key(canon), canon);
    }
  std::vector<TypePtr> out;
  out.reserve(dedup.size());
  for (const auto& kv : dedup) out.push_back(kv.second);
  std::sort(out.begin(), out.end(), [](const TypePtr& a, const TypePtr& b) {
    int ca = type_connectives(a), cb = type_connectives(b);
    if (ca != cb) return ca < cb;
    return sweep_type_key(a) < sweep_type_key(b);
  });
  return out;
}

}  // namespace detail

// The catalog of two-quantifier shapes every demonstrable all-lambda-I type
// must take: a lone argument (Y->Y)->...->(Y->Y)->X, the lone argument
// (forall Y(Y->Y))->X under a single outer binder, or the argument pair
// {Y, Y->...->Y->X} in either order.
inline bool two_quantifier_itype_shape(const TypePtr& t) {
  TypePtr nested = forall("X", arrow(arrow(identity_type(), tvar("X")), tvar("X")));
  if (type_equal(t, nested)) return true;
  if (t->kind != TypeKind::Forall) return false;
  TypePtr once = forall_open(t, tvar("XQ"));
  if (once->kind != TypeKind::Forall) return false;
  TypePtr body = forall_open(once, tvar("YQ"));
  if (quantifier_count(body) != 0) return false;
  std::vector<TypePtr> args;
  TypePtr head = body;
  while (head->kind == TypeKind::Arrow) {
    args.push_back(head->lhs);
    head = head->rhs;
  }
  if (head->kind != TypeKind::FVar) return false;
  std::string x = head->name;
  if (x != "XQ" && x != "YQ") return false;
  std::string y = x == "XQ" ? "YQ" : "XQ";
  auto is_atom = [](const TypePtr& a, const std::string& n) {
    return a->kind == TypeKind::FVar && a->name == n;
  };
  auto atom_chain_to = [&](const TypePtr& a, const TypePtr& arg_of, const std::string& to) {
    std::vector<TypePtr> inner;
    TypePtr h = a;
    while (h->kind == TypeKind::Arrow) {
      inner.push_back(h->lhs);
      h = h->rhs;
    }
    if (inner.empty() || !is_atom(h, to)) return false;
    for (const auto& p : inner)
      if (!type_equal(p, arg_of)) return false;
    return true;
  };
  if (args.size() == 1)
    return atom_chain_to(args[0], arrow(tvar(y), tvar(y)), x);
  if (args.size() == 2) {
    for (int pick = 0; pick < 2; ++pick) {
      const TypePtr& lone = args[pick];
      const TypePtr& chain = args[1 - pick];
      if (is_atom(lone, y) && atom_chain_to(chain, tvar(y), x)) return true;
    }
  }
  return false;
}

inline constexpr int kSweepInhabitantBound = 16;

// Classifies one representative per symmetry class and checks every verdict
// against the catalog: with one quantifier only the identity type may come
// out an I-type, with two only the listed shapes, and never with a second
// inhabitant.
inline std::vector<ClassificationReport> sweep_small_types(int max_quantifiers, int size_bound = 9,
                                                           const SearchBudget& budget = {}) {
  if (max_quantifiers != 1 && max_quantifiers != 2)
    throw std::invalid_argument("sweep_small_types: quantifier count must be 1 or 2");
  std::vector<TypePtr> types = detail::all_small_types(max_quantifiers, size_bound);
  std::vector<ClassificationReport> reports;
  reports.reserve(types.size());
  for (const auto& t : types) {
    ClassificationReport r = classify_itype(t, kSweepInhabitantBound, budget);
    if (r.verdict.kind == ITypeVerdictKind::ITypeUpToBound) {
      bool listed = max_quantifiers == 1 ? type_equal(t, identity_type())
                                         : two_quantifier_itype_shape(t);
      if (!listed)
        throw std::logic_error("sweep_small_types: unlisted type classified as an I-type: " +
                               print_type(t));
      if (r.inhabitants.size() > 1)
        throw std::logic_error("sweep_small_types: I-type with more than one inhabitant: " +
                               print_type(t));
    }
    reports.push_back(std::move(r));
  }
  return reports;
}

// ---------------------------------------------------------------------------
// Report serialization, one JSON object per report.
// ---------------------------------------------------------------------------

inline nlohmann::ordered_json classification_to_json(const ClassificationReport& r) {
  nlohmann::ordered_json j;
  j["type"] = print_type(r.type);
  j["bound"] = r.bound;
  j["truncated"] = r.truncated;
  j["demonstrable"] =
      r.demonstrable ? nlohmann::ordered_json(*r.demonstrable) : nlohmann::ordered_json("unknown");
  j["order"] = r.order_exact ? nlohmann::ordered_json(r.order)
                             : nlohmann::ordered_json(">=" + std::to_string(r.order));
  nlohmann::ordered_json items = nlohmann::ordered_json::array();
  for (const auto& it : r.inhabitants) {
    nlohmann::ordered_json e;
    e["term"] = print_term_canonical(it.term);
    e["size"] = term_size(it.term);
    e["lambda_I"] = it.lambda_I;
    e["derivation_size"] = derivation_size(it.derivation);
    items.push_back(e);
  }
  j["inhabitants"] = items;
  j["verdict"] = itype_verdict_name(r.verdict.kind);
  if (r.verdict.witness) j["witness"] = print_term_canonical(r.verdict.witness);
  if (r.verdict.obstruction) j["obstruction"] = *r.verdict.obstruction;
  return j;
}

}  // namespace systemf
