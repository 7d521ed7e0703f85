#include "tracegen/util.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace tracegen {

namespace {

// Days from civil date, Howard Hinnant's algorithm. Valid for all practical
// event-log dates.
std::int64_t days_from_civil(int y, int m, int d) {
  y -= m <= 2;
  const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy = (153u * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, int& y, int& m, int& d) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t yy = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  d = static_cast<int>(doy - (153 * mp + 2) / 5 + 1);
  m = static_cast<int>(mp + (mp < 10 ? 3 : -9));
  y = static_cast<int>(yy + (m <= 2));
}

bool parse_fixed_uint(const std::string& s, size_t pos, size_t len, int& out) {
  if (pos + len > s.size()) return false;
  int v = 0;
  for (size_t i = pos; i < pos + len; ++i) {
    if (s[i] < '0' || s[i] > '9') return false;
    v = v * 10 + (s[i] - '0');
  }
  out = v;
  return true;
}

}  // namespace

std::int64_t parse_iso8601_ms(const std::string& text) {
  const auto fail = [&]() -> std::int64_t {
    throw ParseError("unparsable ISO-8601 timestamp: '" + text + "'");
  };
  int year = 0, month = 0, day = 0;
  if (!parse_fixed_uint(text, 0, 4, year)) return fail();
  if (text.size() < 10 || text[4] != '-' || text[7] != '-') return fail();
  if (!parse_fixed_uint(text, 5, 2, month) || !parse_fixed_uint(text, 8, 2, day)) return fail();
  if (month < 1 || month > 12 || day < 1 || day > 31) return fail();

  int hour = 0, minute = 0, second = 0;
  std::int64_t frac_ms = 0;
  size_t pos = 10;
  if (pos < text.size()) {
    if (text[pos] != 'T' && text[pos] != ' ') return fail();
    ++pos;
    if (!parse_fixed_uint(text, pos, 2, hour)) return fail();
    if (pos + 2 >= text.size() || text[pos + 2] != ':') return fail();
    if (!parse_fixed_uint(text, pos + 3, 2, minute)) return fail();
    pos += 5;
    if (pos < text.size() && text[pos] == ':') {
      if (!parse_fixed_uint(text, pos + 1, 2, second)) return fail();
      pos += 3;
    }
    if (hour > 23 || minute > 59 || second > 60) return fail();
    if (pos < text.size() && (text[pos] == '.' || text[pos] == ',')) {
      ++pos;
      size_t start = pos;
      std::int64_t frac = 0;
      while (pos < text.size() && text[pos] >= '0' && text[pos] <= '9') {
        frac = frac * 10 + (text[pos] - '0');
        ++pos;
      }
      size_t digits = pos - start;
      if (digits == 0) return fail();
      // Truncate or widen to milliseconds.
      while (digits > 3) {
        frac /= 10;
        --digits;
      }
      while (digits < 3) {
        frac *= 10;
        ++digits;
      }
      frac_ms = frac;
    }
  }

  std::int64_t offset_min = 0;
  if (pos < text.size()) {
    char c = text[pos];
    if (c == 'Z' || c == 'z') {
      ++pos;
    } else if (c == '+' || c == '-') {
      int oh = 0, om = 0;
      if (!parse_fixed_uint(text, pos + 1, 2, oh)) return fail();
      size_t opos = pos + 3;
      if (opos < text.size() && text[opos] == ':') ++opos;
      if (opos < text.size()) {
        if (!parse_fixed_uint(text, opos, 2, om)) return fail();
        opos += 2;
      }
      offset_min = (c == '-' ? -1 : 1) * (oh * 60 + om);
      pos = opos;
    }
  }
  if (pos != text.size()) return fail();

  std::int64_t days = days_from_civil(year, month, day);
  std::int64_t secs = days * 86400 + hour * 3600 + minute * 60 + second;
  return (secs - offset_min * 60) * 1000 + frac_ms;
}

std::string format_iso8601_ms(std::int64_t epoch_ms) {
  std::int64_t ms = epoch_ms % 1000;
  std::int64_t secs = epoch_ms / 1000;
  if (ms < 0) {
    ms += 1000;
    secs -= 1;
  }
  std::int64_t days = secs / 86400;
  std::int64_t sod = secs % 86400;
  if (sod < 0) {
    sod += 86400;
    days -= 1;
  }
  int y, m, d;
  civil_from_days(days, y, m, d);
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02dT%02d:%02d:%02d.%03dZ", y, m, d,
                static_cast<int>(sod / 3600), static_cast<int>((sod % 3600) / 60),
                static_cast<int>(sod % 60), static_cast<int>(ms));
  return buf;
}

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index) {
  std::uint64_t s = seed;
  (void)splitmix64(s);
  s ^= 0xD1B54A32D192ED03ull * (tag + 1);
  (void)splitmix64(s);
  s ^= 0x9E6C63D0876A9F4Bull * (index + 1);
  return splitmix64(s);
}

namespace {

std::uint64_t fnv1a64(const std::string& data) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : data) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag, std::uint64_t index) {
  return derive_seed(seed, fnv1a64(tag), index);
}

std::string fnv1a64_hex(const std::string& data) {
  const std::uint64_t h = fnv1a64(data);
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  char buf[40];
  for (int precision = 15; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, v);
    if (std::strtod(buf, nullptr) == v) break;
  }
  return buf;
}

long long round_half_away(double v) {
  return std::llround(v);
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("cannot open file: " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write file: " + path);
  out << content;
  if (!out) throw Error("short write: " + path);
}

bool starts_with(const std::string& s, const std::string& prefix) {
  return s.size() >= prefix.size() && s.compare(0, prefix.size(), prefix) == 0;
}

}  // namespace tracegen
