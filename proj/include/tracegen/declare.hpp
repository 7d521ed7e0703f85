#pragma once

#include <string>
#include <vector>

#include "tracegen/eventlog.hpp"

namespace tracegen {

/// Control-flow constraint templates over activity pairs (Existence is unary).
/// Traces that never activate a constraint satisfy it vacuously.
enum class DeclareTemplate {
  Existence,
  RespondedExistence,
  Response,
  AlternateResponse,
  ChainResponse,
  Precedence,
  AlternatePrecedence,
  ChainPrecedence,
  CoExistence,
  NotCoExistence,
  NotSuccession,
};

extern const std::vector<DeclareTemplate> kAllTemplates;

std::string template_name(DeclareTemplate t);
bool template_is_unary(DeclareTemplate t);
/// CoExistence and NotCoExistence are direction-free; (a,b) and (b,a) coincide.
bool template_is_symmetric(DeclareTemplate t);

struct DeclareConstraint {
  DeclareTemplate tmpl = DeclareTemplate::Existence;
  std::string a;
  std::string b;  // empty for unary templates
  double support = 0.0;

  std::string to_string() const;
};

/// Single-pass evaluation of one template instance on an activity sequence.
bool satisfies(const Variant& trace, DeclareTemplate tmpl, const std::string& a,
               const std::string& b);

struct DeclareModel {
  double min_support = 0.9;
  std::vector<DeclareConstraint> constraints;
};

/// Support-based mining over the log's alphabet: all unary instances plus all
/// ordered (directed) and unordered (symmetric) pairs of distinct activities;
/// instances whose support reaches `min_support` are retained.
DeclareModel mine_declare(const EventLog& log, double min_support = 0.9);

/// Fraction of the model's constraints satisfied by one trace (1.0 for an
/// empty model).
double trace_conformance(const Variant& trace, const DeclareModel& model);

}  // namespace tracegen
