#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace tracegen {

/// Base class for all errors raised by the toolkit.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Malformed input file (bad XML/CSV/JSON, unparsable timestamp, ...).
class ParseError : public Error {
 public:
  using Error::Error;
};

/// Structurally valid input that violates a domain contract.
class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Bad experiment configuration (missing field, inconsistent values, ...).
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Non-finite values encountered during model evaluation or training.
class NumericError : public Error {
 public:
  using Error::Error;
};

// ---------------------------------------------------------------------------
// Timestamps. All instants are kept as milliseconds since the Unix epoch, UTC.
// ---------------------------------------------------------------------------

/// Parses an ISO-8601 instant ("2014-01-02T03:04:05.678+01:00", 'T' or ' '
/// separator, optional fractional seconds and UTC offset). Timezone-naive
/// values are taken as UTC. A bare date means midnight UTC.
std::int64_t parse_iso8601_ms(const std::string& text);

/// Formats an instant as "YYYY-MM-DDThh:mm:ss.sssZ".
std::string format_iso8601_ms(std::int64_t epoch_ms);

// ---------------------------------------------------------------------------
// Deterministic seeding helpers.
// ---------------------------------------------------------------------------

/// SplitMix64 mixing step; the basis of all derived seeds.
std::uint64_t splitmix64(std::uint64_t& state);

/// Derives an independent stream seed from (seed, tag, index).
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag, std::uint64_t index = 0);

/// Convenience overload: the tag is hashed (FNV-1a) into the 64-bit tag slot.
std::uint64_t derive_seed(std::uint64_t seed, const std::string& tag, std::uint64_t index = 0);

// ---------------------------------------------------------------------------
// Misc.
// ---------------------------------------------------------------------------

/// FNV-1a 64-bit hash, fixed-width lowercase hex. Used to fingerprint configs.
std::string fnv1a64_hex(const std::string& data);

/// Round-trip-exact decimal rendering of a double (shortest form would also
/// work; 17 significant digits keeps the implementation trivial).
std::string format_double(double v);

/// round(n * f) with half away from zero, as used by split sizing.
long long round_half_away(double v);

std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, const std::string& content);

bool starts_with(const std::string& s, const std::string& prefix);

}  // namespace tracegen
