#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <sstream>

#include "tracegen/eventlog.hpp"

namespace tracegen {

namespace {

/// RFC 4180 style reader: quoted fields, doubled quotes, CRLF or LF endings.
std::vector<std::vector<std::string>> read_csv_rows(const std::string& text, const std::string& path) {
  std::vector<std::vector<std::string>> rows;
  std::vector<std::string> row;
  std::string field;
  bool in_quotes = false;
  bool row_started = false;
  int line = 1;

  auto push_field = [&] {
    row.push_back(std::move(field));
    field.clear();
  };
  auto push_row = [&] {
    push_field();
    rows.push_back(std::move(row));
    row.clear();
    row_started = false;
  };

  for (size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (in_quotes) {
      if (c == '"') {
        if (i + 1 < text.size() && text[i + 1] == '"') {
          field.push_back('"');
          ++i;
        } else {
          in_quotes = false;
        }
      } else {
        if (c == '\n') ++line;
        field.push_back(c);
      }
      continue;
    }
    switch (c) {
      case '"':
        if (!field.empty())
          throw ParseError(path + ":" + std::to_string(line) + ": quote inside unquoted field");
        in_quotes = true;
        row_started = true;
        break;
      case ',':
        push_field();
        row_started = true;
        break;
      case '\r':
        break;
      case '\n':
        if (row_started || !field.empty() || !row.empty()) push_row();
        ++line;
        break;
      default:
        field.push_back(c);
        row_started = true;
    }
  }
  if (in_quotes) throw ParseError(path + ": unterminated quoted field");
  if (row_started || !field.empty() || !row.empty()) push_row();
  return rows;
}

bool parses_as_number(const std::string& s, double* out = nullptr) {
  if (s.empty()) return false;
  const char* begin = s.c_str();
  char* end = nullptr;
  errno = 0;
  double v = std::strtod(begin, &end);
  if (end != begin + s.size() || errno == ERANGE) return false;
  if (!std::isfinite(v)) return false;
  if (out) *out = v;
  return true;
}

bool needs_quoting(const std::string& s) {
  return s.find_first_of(",\"\n\r") != std::string::npos;
}

std::string quote_csv(const std::string& s) {
  if (!needs_quoting(s)) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += "\"\"";
    else out.push_back(c);
  }
  out.push_back('"');
  return out;
}

}  // namespace

EventLog parse_csv(const std::string& path, const CsvColumnMap& columns) {
  const auto rows = read_csv_rows(read_text_file(path), path);
  if (rows.empty()) throw ParseError(path + ": empty CSV file");
  const auto& header = rows.front();

  auto column_of = [&](const std::string& name) {
    auto it = std::find(header.begin(), header.end(), name);
    if (it == header.end())
      throw ParseError(path + ": required column '" + name + "' not found in header");
    return static_cast<size_t>(it - header.begin());
  };
  const size_t col_case = column_of(columns.case_id);
  const size_t col_act = column_of(columns.activity);
  const size_t col_time = column_of(columns.timestamp);

  // Decide the role of every remaining column.
  enum class Role { Cat, Num, Ignore };
  std::map<size_t, std::pair<std::string, Role>> attr_cols;
  std::set<std::string> explicit_cat(columns.cat_attrs.begin(), columns.cat_attrs.end());
  std::set<std::string> explicit_num(columns.num_attrs.begin(), columns.num_attrs.end());
  for (const auto& name : columns.cat_attrs) column_of(name);
  for (const auto& name : columns.num_attrs) column_of(name);
  for (size_t c = 0; c < header.size(); ++c) {
    if (c == col_case || c == col_act || c == col_time) continue;
    const std::string& name = header[c];
    if (explicit_cat.count(name)) attr_cols[c] = {name, Role::Cat};
    else if (explicit_num.count(name)) attr_cols[c] = {name, Role::Num};
    else if (columns.auto_classify_rest) {
      // Numerical iff every non-empty value in the column parses as a finite decimal.
      bool numeric = true;
      bool any_value = false;
      for (size_t r = 1; r < rows.size() && numeric; ++r) {
        if (c >= rows[r].size()) continue;
        const std::string& v = rows[r][c];
        if (v.empty()) continue;
        any_value = true;
        if (!parses_as_number(v)) numeric = false;
      }
      attr_cols[c] = {name, (numeric && any_value) ? Role::Num : Role::Cat};
    } else {
      attr_cols[c] = {name, Role::Ignore};
    }
  }

  // Group rows by case id, keeping first-appearance order of cases.
  std::map<std::string, size_t> case_index;
  std::vector<Trace> traces;
  for (size_t r = 1; r < rows.size(); ++r) {
    const auto& row = rows[r];
    auto cell = [&](size_t c) -> const std::string& {
      static const std::string empty;
      return c < row.size() ? row[c] : empty;
    };
    const std::string& case_id = cell(col_case);
    if (case_id.empty())
      throw ParseError(path + ": row " + std::to_string(r + 1) + " has empty case id");
    std::int64_t ts;
    try {
      ts = parse_iso8601_ms(cell(col_time));
    } catch (const ParseError& e) {
      throw ParseError(path + ": row " + std::to_string(r + 1) + ": " + e.what());
    }
    if (cell(col_act).empty())
      throw ParseError(path + ": row " + std::to_string(r + 1) + " has empty activity");

    auto [it, inserted] = case_index.emplace(case_id, traces.size());
    if (inserted) {
      Trace t;
      t.id = case_id;
      for (const auto& [c, spec] : attr_cols) {
        const auto& [name, role] = spec;
        if (role == Role::Cat) {
          t.attrs_cat[name] = cell(c);
        } else if (role == Role::Num) {
          double v = 0.0;
          if (!parses_as_number(cell(c), &v))
            throw ParseError(path + ": trace '" + case_id + "': numerical attribute '" + name +
                             "' has non-numeric value '" + cell(c) + "'");
          t.attrs_num[name] = v;
        }
      }
      traces.push_back(std::move(t));
    } else {
      // Trace attributes must be constant within a case.
      Trace& t = traces[it->second];
      for (const auto& [c, spec] : attr_cols) {
        const auto& [name, role] = spec;
        if (role == Role::Cat) {
          if (t.attrs_cat.at(name) != cell(c))
            throw ValidationError("trace '" + case_id + "': attribute '" + name +
                                  "' varies within the trace ('" + t.attrs_cat.at(name) + "' vs '" +
                                  cell(c) + "')");
        } else if (role == Role::Num) {
          double v = 0.0;
          if (!parses_as_number(cell(c), &v))
            throw ParseError(path + ": trace '" + case_id + "': numerical attribute '" + name +
                             "' has non-numeric value '" + cell(c) + "'");
          if (v != t.attrs_num.at(name))
            throw ValidationError("trace '" + case_id + "': attribute '" + name +
                                  "' varies within the trace (" + format_double(t.attrs_num.at(name)) +
                                  " vs " + format_double(v) + ")");
        }
      }
    }
    traces[it->second].events.push_back(Event{cell(col_act), ts});
  }

  // Event rows may arrive in any order; sort each trace by time (stable).
  for (auto& t : traces)
    std::stable_sort(t.events.begin(), t.events.end(),
                     [](const Event& a, const Event& b) { return a.timestamp_ms < b.timestamp_ms; });
  return make_log(std::move(traces));
}

void write_csv(const EventLog& log, const std::string& path, const CsvColumnMap& columns) {
  // Require a uniform attribute schema so the file round-trips cleanly.
  std::vector<std::string> cat_names, num_names;
  if (!log.traces.empty()) {
    for (const auto& [k, v] : log.traces.front().attrs_cat) cat_names.push_back(k);
    for (const auto& [k, v] : log.traces.front().attrs_num) num_names.push_back(k);
    for (const auto& t : log.traces) {
      if (t.attrs_cat.size() != cat_names.size() || t.attrs_num.size() != num_names.size())
        throw ValidationError("trace '" + t.id + "': attribute schema differs from the rest of the log");
      for (const auto& name : cat_names)
        if (!t.attrs_cat.count(name))
          throw ValidationError("trace '" + t.id + "': missing attribute '" + name + "'");
      for (const auto& name : num_names)
        if (!t.attrs_num.count(name))
          throw ValidationError("trace '" + t.id + "': missing attribute '" + name + "'");
    }
  }

  std::ostringstream out;
  out << quote_csv(columns.case_id) << ',' << quote_csv(columns.activity) << ','
      << quote_csv(columns.timestamp);
  for (const auto& name : cat_names) out << ',' << quote_csv(name);
  for (const auto& name : num_names) out << ',' << quote_csv(name);
  out << '\n';
  for (const auto& t : log.traces) {
    for (const auto& e : t.events) {
      out << quote_csv(t.id) << ',' << quote_csv(e.activity) << ',' << format_iso8601_ms(e.timestamp_ms);
      for (const auto& name : cat_names) out << ',' << quote_csv(t.attrs_cat.at(name));
      for (const auto& name : num_names) out << ',' << format_double(t.attrs_num.at(name));
      out << '\n';
    }
  }
  write_text_file(path, out.str());
}

}  // namespace tracegen
