#include <algorithm>
#include <cstdlib>
#include <cstring>
#include <fstream>
#include <sstream>

#include "tracegen/eventlog.hpp"

// Minimal XES reader/writer: log/trace/event elements with string, date, int,
// float and boolean attributes. Container elements (extension, global,
// classifier, list, container) are skipped. This covers the IEEE 1849 subset
// actually used by the public process-mining logs.

namespace tracegen {

namespace {

struct XmlTag {
  std::string name;
  std::vector<std::pair<std::string, std::string>> attrs;
  bool closing = false;      // </name>
  bool self_closing = false; // <name ... />
  int line = 0;

  const std::string* attr(const std::string& key) const {
    for (const auto& [k, v] : attrs)
      if (k == key) return &v;
    return nullptr;
  }
};

std::string unescape_xml(const std::string& s, int line) {
  if (s.find('&') == std::string::npos) return s;
  std::string out;
  out.reserve(s.size());
  for (size_t i = 0; i < s.size(); ++i) {
    if (s[i] != '&') {
      out.push_back(s[i]);
      continue;
    }
    size_t semi = s.find(';', i);
    if (semi == std::string::npos)
      throw ParseError("line " + std::to_string(line) + ": unterminated XML entity");
    std::string ent = s.substr(i + 1, semi - i - 1);
    if (ent == "amp") out.push_back('&');
    else if (ent == "lt") out.push_back('<');
    else if (ent == "gt") out.push_back('>');
    else if (ent == "quot") out.push_back('"');
    else if (ent == "apos") out.push_back('\'');
    else if (!ent.empty() && ent[0] == '#') {
      long code = std::strtol(ent.c_str() + 1 + (ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X')), nullptr,
                              (ent.size() > 1 && (ent[1] == 'x' || ent[1] == 'X')) ? 16 : 10);
      if (code <= 0 || code > 0x10FFFF)
        throw ParseError("line " + std::to_string(line) + ": bad character reference &" + ent + ";");
      // UTF-8 encode.
      unsigned c = static_cast<unsigned>(code);
      if (c < 0x80) out.push_back(static_cast<char>(c));
      else if (c < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (c >> 6)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
      } else if (c < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (c >> 12)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
      } else {
        out.push_back(static_cast<char>(0xF0 | (c >> 18)));
        out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
      }
    } else {
      throw ParseError("line " + std::to_string(line) + ": unknown XML entity &" + ent + ";");
    }
    i = semi;
  }
  return out;
}

/// Pull-style scanner over the raw document; yields tags, skips text nodes.
class XmlScanner {
 public:
  explicit XmlScanner(const std::string& text) : text_(text) {}

  bool next(XmlTag& tag) {
    while (true) {
      // Skip to next '<', counting lines.
      while (pos_ < text_.size() && text_[pos_] != '<') {
        if (text_[pos_] == '\n') ++line_;
        ++pos_;
      }
      if (pos_ >= text_.size()) return false;
      if (starts_at("<?")) {
        skip_until("?>");
        continue;
      }
      if (starts_at("<!--")) {
        skip_until("-->");
        continue;
      }
      if (starts_at("<!")) {  // DOCTYPE etc.
        skip_until(">");
        continue;
      }
      break;
    }
    tag = XmlTag{};
    tag.line = line_;
    ++pos_;  // consume '<'
    if (pos_ < text_.size() && text_[pos_] == '/') {
      tag.closing = true;
      ++pos_;
    }
    tag.name = read_name();
    if (tag.name.empty()) throw ParseError("line " + std::to_string(line_) + ": empty XML tag name");
    while (true) {
      skip_ws();
      if (pos_ >= text_.size()) throw ParseError("line " + std::to_string(tag.line) + ": unterminated tag <" + tag.name);
      if (text_[pos_] == '>') {
        ++pos_;
        break;
      }
      if (text_[pos_] == '/') {
        ++pos_;
        if (pos_ >= text_.size() || text_[pos_] != '>')
          throw ParseError("line " + std::to_string(line_) + ": malformed self-closing tag");
        ++pos_;
        tag.self_closing = true;
        break;
      }
      std::string key = read_name();
      skip_ws();
      if (pos_ >= text_.size() || text_[pos_] != '=')
        throw ParseError("line " + std::to_string(line_) + ": expected '=' after attribute '" + key + "'");
      ++pos_;
      skip_ws();
      if (pos_ >= text_.size() || (text_[pos_] != '"' && text_[pos_] != '\''))
        throw ParseError("line " + std::to_string(line_) + ": expected quoted attribute value");
      char quote = text_[pos_++];
      size_t start = pos_;
      while (pos_ < text_.size() && text_[pos_] != quote) {
        if (text_[pos_] == '\n') ++line_;
        ++pos_;
      }
      if (pos_ >= text_.size())
        throw ParseError("line " + std::to_string(tag.line) + ": unterminated attribute value");
      tag.attrs.emplace_back(std::move(key), unescape_xml(text_.substr(start, pos_ - start), line_));
      ++pos_;
    }
    return true;
  }

  int line() const { return line_; }

 private:
  bool starts_at(const char* s) const { return text_.compare(pos_, std::strlen(s), s) == 0; }

  void skip_until(const char* end) {
    size_t found = text_.find(end, pos_);
    if (found == std::string::npos) throw ParseError("line " + std::to_string(line_) + ": unterminated markup");
    line_ += static_cast<int>(std::count(text_.begin() + static_cast<long>(pos_), text_.begin() + static_cast<long>(found), '\n'));
    pos_ = found + std::strlen(end);
  }

  void skip_ws() {
    while (pos_ < text_.size() && (text_[pos_] == ' ' || text_[pos_] == '\t' || text_[pos_] == '\n' || text_[pos_] == '\r')) {
      if (text_[pos_] == '\n') ++line_;
      ++pos_;
    }
  }

  std::string read_name() {
    size_t start = pos_;
    while (pos_ < text_.size()) {
      char c = text_[pos_];
      if (c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '>' || c == '/' || c == '=') break;
      ++pos_;
    }
    return text_.substr(start, pos_ - start);
  }

  const std::string& text_;
  size_t pos_ = 0;
  int line_ = 1;
};

bool is_attribute_element(const std::string& name) {
  return name == "string" || name == "date" || name == "int" || name == "float" ||
         name == "boolean" || name == "id";
}

bool is_skipped_container(const std::string& name) {
  return name == "extension" || name == "global" || name == "classifier" || name == "list" ||
         name == "container" || name == "values";
}

std::string escape_xml(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&apos;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

}  // namespace

EventLog parse_xes(const std::string& path, const ParseOptions& opts) {
  const std::string text = read_text_file(path);
  XmlScanner scanner(text);

  std::vector<Trace> traces;
  std::map<std::string, std::string> log_metadata;

  enum class Scope { Root, Log, Trace, Event };
  Scope scope = Scope::Root;
  int skip_depth = 0;       // inside a skipped container
  int attr_depth = 0;       // inside a nested attribute element
  size_t anon_trace_count = 0;

  Trace current_trace;
  std::string event_activity, event_lifecycle;
  std::optional<std::int64_t> event_time;
  bool seen_log = false;

  XmlTag tag;
  while (scanner.next(tag)) {
    if (skip_depth > 0) {
      if (!tag.closing && !tag.self_closing) ++skip_depth;
      if (tag.closing) --skip_depth;
      continue;
    }
    if (is_skipped_container(tag.name) && !tag.closing) {
      if (!tag.self_closing) skip_depth = 1;
      continue;
    }
    if (is_attribute_element(tag.name)) {
      if (tag.closing) {
        if (attr_depth > 0) --attr_depth;
        continue;
      }
      if (attr_depth > 0) {  // nested attribute values are out of the minimal model
        if (!tag.self_closing) ++attr_depth;
        continue;
      }
      const std::string* key = tag.attr("key");
      const std::string* value = tag.attr("value");
      if (!key || !value)
        throw ParseError("line " + std::to_string(tag.line) + ": <" + tag.name +
                         "> requires key and value attributes");
      if (scope == Scope::Event) {
        if (*key == "concept:name") event_activity = *value;
        else if (*key == "lifecycle:transition") event_lifecycle = *value;
        else if (*key == "time:timestamp") {
          try {
            event_time = parse_iso8601_ms(*value);
          } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(tag.line) + ": " + e.what());
          }
        }
        // other event payload attributes are out of scope
      } else if (scope == Scope::Trace) {
        if (*key == "concept:name") {
          current_trace.id = *value;
        } else if (tag.name == "int" || tag.name == "float") {
          try {
            current_trace.attrs_num[*key] = std::stod(*value);
          } catch (const std::exception&) {
            throw ParseError("line " + std::to_string(tag.line) + ": bad numeric value '" + *value +
                             "' for trace attribute '" + *key + "'");
          }
        } else {
          current_trace.attrs_cat[*key] = *value;
        }
      } else if (scope == Scope::Log) {
        if (tag.name == "string") log_metadata[*key] = *value;
      }
      if (!tag.self_closing) ++attr_depth;
      continue;
    }

    if (tag.name == "log") {
      if (tag.closing) scope = Scope::Root;
      else {
        seen_log = true;
        scope = Scope::Log;
      }
      continue;
    }
    if (tag.name == "trace") {
      if (tag.closing) {
        if (scope != Scope::Trace)
          throw ParseError("line " + std::to_string(tag.line) + ": stray </trace>");
        if (current_trace.id.empty())
          current_trace.id = "trace_" + std::to_string(anon_trace_count);
        ++anon_trace_count;
        if (!current_trace.events.empty()) {
          std::stable_sort(current_trace.events.begin(), current_trace.events.end(),
                           [](const Event& a, const Event& b) { return a.timestamp_ms < b.timestamp_ms; });
          traces.push_back(std::move(current_trace));
        }
        current_trace = Trace{};
        scope = Scope::Log;
      } else {
        if (scope != Scope::Log)
          throw ParseError("line " + std::to_string(tag.line) + ": <trace> outside <log>");
        scope = Scope::Trace;
      }
      continue;
    }
    if (tag.name == "event") {
      if (tag.closing) {
        if (scope != Scope::Event)
          throw ParseError("line " + std::to_string(tag.line) + ": stray </event>");
        if (event_activity.empty())
          throw ParseError("line " + std::to_string(tag.line) + ": event without concept:name in trace '" +
                           current_trace.id + "'");
        if (!event_time)
          throw ParseError("line " + std::to_string(tag.line) + ": event without time:timestamp in trace '" +
                           current_trace.id + "'");
        std::string activity = event_activity;
        if (opts.concat_lifecycle && !event_lifecycle.empty()) activity += "-" + event_lifecycle;
        current_trace.events.push_back(Event{activity, *event_time});
        event_activity.clear();
        event_lifecycle.clear();
        event_time.reset();
        scope = Scope::Trace;
      } else {
        if (scope != Scope::Trace)
          throw ParseError("line " + std::to_string(tag.line) + ": <event> outside <trace>");
        if (tag.self_closing) continue;  // empty event: nothing to record
        scope = Scope::Event;
      }
      continue;
    }
    // Unknown element: skip it together with its subtree.
    if (!tag.closing && !tag.self_closing) skip_depth = 1;
  }

  if (!seen_log) throw ParseError(path + ": no <log> element found");
  EventLog log = make_log(std::move(traces));
  log.metadata = std::move(log_metadata);
  return log;
}

void write_xes(const EventLog& log, const std::string& path) {
  std::ostringstream out;
  out << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  out << "<log xes.version=\"1.0\" xes.features=\"\">\n";
  out << "  <extension name=\"Concept\" prefix=\"concept\" uri=\"http://www.xes-standard.org/concept.xesext\"/>\n";
  out << "  <extension name=\"Time\" prefix=\"time\" uri=\"http://www.xes-standard.org/time.xesext\"/>\n";
  for (const auto& [k, v] : log.metadata)
    out << "  <string key=\"" << escape_xml(k) << "\" value=\"" << escape_xml(v) << "\"/>\n";
  for (const auto& trace : log.traces) {
    out << "  <trace>\n";
    out << "    <string key=\"concept:name\" value=\"" << escape_xml(trace.id) << "\"/>\n";
    for (const auto& [k, v] : trace.attrs_cat)
      out << "    <string key=\"" << escape_xml(k) << "\" value=\"" << escape_xml(v) << "\"/>\n";
    for (const auto& [k, v] : trace.attrs_num)
      out << "    <float key=\"" << escape_xml(k) << "\" value=\"" << format_double(v) << "\"/>\n";
    for (const auto& event : trace.events) {
      out << "    <event>\n";
      out << "      <string key=\"concept:name\" value=\"" << escape_xml(event.activity) << "\"/>\n";
      out << "      <date key=\"time:timestamp\" value=\"" << format_iso8601_ms(event.timestamp_ms) << "\"/>\n";
      out << "    </event>\n";
    }
    out << "  </trace>\n";
  }
  out << "</log>\n";
  write_text_file(path, out.str());
}

}  // namespace tracegen
