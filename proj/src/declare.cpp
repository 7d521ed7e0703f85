#include <algorithm>
#include <map>

#include "tracegen/declare.hpp"
#include "tracegen/util.hpp"

namespace tracegen {

const std::vector<DeclareTemplate> kAllTemplates = {
    DeclareTemplate::Existence,          DeclareTemplate::RespondedExistence,
    DeclareTemplate::Response,           DeclareTemplate::AlternateResponse,
    DeclareTemplate::ChainResponse,      DeclareTemplate::Precedence,
    DeclareTemplate::AlternatePrecedence, DeclareTemplate::ChainPrecedence,
    DeclareTemplate::CoExistence,        DeclareTemplate::NotCoExistence,
    DeclareTemplate::NotSuccession,
};

std::string template_name(DeclareTemplate t) {
  switch (t) {
    case DeclareTemplate::Existence: return "existence";
    case DeclareTemplate::RespondedExistence: return "responded_existence";
    case DeclareTemplate::Response: return "response";
    case DeclareTemplate::AlternateResponse: return "alternate_response";
    case DeclareTemplate::ChainResponse: return "chain_response";
    case DeclareTemplate::Precedence: return "precedence";
    case DeclareTemplate::AlternatePrecedence: return "alternate_precedence";
    case DeclareTemplate::ChainPrecedence: return "chain_precedence";
    case DeclareTemplate::CoExistence: return "co_existence";
    case DeclareTemplate::NotCoExistence: return "not_co_existence";
    case DeclareTemplate::NotSuccession: return "not_succession";
  }
  throw ValidationError("unknown template");
}

bool template_is_unary(DeclareTemplate t) { return t == DeclareTemplate::Existence; }

bool template_is_symmetric(DeclareTemplate t) {
  return t == DeclareTemplate::CoExistence || t == DeclareTemplate::NotCoExistence;
}

std::string DeclareConstraint::to_string() const {
  if (template_is_unary(tmpl)) return template_name(tmpl) + "(" + a + ")";
  return template_name(tmpl) + "(" + a + ", " + b + ")";
}

bool satisfies(const Variant& trace, DeclareTemplate tmpl, const std::string& a,
               const std::string& b) {
  switch (tmpl) {
    case DeclareTemplate::Existence:
      for (const auto& x : trace)
        if (x == a) return true;
      return false;

    case DeclareTemplate::RespondedExistence: {
      bool has_a = false, has_b = false;
      for (const auto& x : trace) {
        has_a |= x == a;
        has_b |= x == b;
      }
      return !has_a || has_b;
    }

    case DeclareTemplate::Response: {
      // The last a must be answered by a later b.
      bool open = false;
      for (const auto& x : trace) {
        if (x == a) open = true;
        if (x == b && x != a) open = false;
      }
      return !open;
    }

    case DeclareTemplate::AlternateResponse: {
      // Between an a and its answering b no other a may occur.
      bool open = false;
      for (const auto& x : trace) {
        if (x == b && x != a) {
          open = false;
          continue;
        }
        if (x == a) {
          if (open) return false;
          open = true;
        }
      }
      return !open;
    }

    case DeclareTemplate::ChainResponse: {
      for (size_t i = 0; i < trace.size(); ++i)
        if (trace[i] == a && (i + 1 >= trace.size() || trace[i + 1] != b)) return false;
      return true;
    }

    case DeclareTemplate::Precedence: {
      // No b before the first a.
      for (const auto& x : trace) {
        if (x == a) return true;
        if (x == b) return false;
      }
      return true;
    }

    case DeclareTemplate::AlternatePrecedence: {
      // Every b needs its own preceding a (no b in between).
      bool credit = false;
      for (const auto& x : trace) {
        if (x == a) credit = true;
        if (x == b) {
          if (x == a) continue;
          if (!credit) return false;
          credit = false;
        }
      }
      return true;
    }

    case DeclareTemplate::ChainPrecedence: {
      for (size_t i = 0; i < trace.size(); ++i)
        if (trace[i] == b && (i == 0 || trace[i - 1] != a)) return false;
      return true;
    }

    case DeclareTemplate::CoExistence: {
      bool has_a = false, has_b = false;
      for (const auto& x : trace) {
        has_a |= x == a;
        has_b |= x == b;
      }
      return has_a == has_b;
    }

    case DeclareTemplate::NotCoExistence: {
      bool has_a = false, has_b = false;
      for (const auto& x : trace) {
        has_a |= x == a;
        has_b |= x == b;
      }
      return !(has_a && has_b);
    }

    case DeclareTemplate::NotSuccession: {
      bool seen_a = false;
      for (const auto& x : trace) {
        if (x == a) seen_a = true;
        if (x == b && x != a && seen_a) return false;
      }
      return true;
    }
  }
  throw ValidationError("unknown template");
}

DeclareModel mine_declare(const EventLog& log, double min_support) {
  if (log.traces.empty()) throw ValidationError("cannot mine constraints from an empty log");
  if (min_support <= 0.0 || min_support > 1.0)
    throw ValidationError("min_support must be in (0, 1]");

  // Traces sharing a variant agree on every constraint; evaluate per variant.
  std::map<Variant, size_t> variant_counts;
  for (const auto& t : log.traces) ++variant_counts[variant_of(t)];
  const double n = static_cast<double>(log.traces.size());
  const std::vector<std::string> alphabet(log.activity_alphabet.begin(), log.activity_alphabet.end());

  DeclareModel model;
  model.min_support = min_support;
  auto consider = [&](DeclareTemplate tmpl, const std::string& a, const std::string& b) {
    size_t sat = 0;
    for (const auto& [variant, count] : variant_counts)
      if (satisfies(variant, tmpl, a, b)) sat += count;
    const double support = static_cast<double>(sat) / n;
    if (support >= min_support - 1e-12) model.constraints.push_back({tmpl, a, b, support});
  };

  for (DeclareTemplate tmpl : kAllTemplates) {
    if (template_is_unary(tmpl)) {
      for (const auto& a : alphabet) consider(tmpl, a, "");
    } else if (template_is_symmetric(tmpl)) {
      for (size_t i = 0; i < alphabet.size(); ++i)
        for (size_t j = i + 1; j < alphabet.size(); ++j) consider(tmpl, alphabet[i], alphabet[j]);
    } else {
      for (const auto& a : alphabet)
        for (const auto& b : alphabet)
          if (a != b) consider(tmpl, a, b);
    }
  }
  return model;
}

double trace_conformance(const Variant& trace, const DeclareModel& model) {
  if (model.constraints.empty()) return 1.0;
  size_t sat = 0;
  for (const auto& c : model.constraints)
    if (satisfies(trace, c.tmpl, c.a, c.b)) ++sat;
  return static_cast<double>(sat) / static_cast<double>(model.constraints.size());
}

}  // namespace tracegen
