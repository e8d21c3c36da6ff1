#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace mkv {

/// Shortest decimal form that reads back to the same double.
[[nodiscard]] std::string format_double(double value);

/// RFC 4180 writer: CRLF line ends, fields quoted only when they need it.
class CsvWriter {
  public:
    explicit CsvWriter(std::ostream& out) : out_(out) {}

    CsvWriter& field(std::string_view text);
    CsvWriter& field(double value) { return field(format_double(value)); }
    CsvWriter& field(std::uint64_t value) { return field(std::to_string(value)); }
    CsvWriter& empty() { return field(std::string_view{}); }
    void end_row();

    void row(std::span<const std::string> fields);

  private:
    std::ostream& out_;
    bool first_ = true;
};

/// Parses a CSV document written by CsvWriter (tests and tools).
[[nodiscard]] std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// 64-bit FNV-1a.
[[nodiscard]] std::uint64_t fnv1a(std::string_view bytes) noexcept;

[[nodiscard]] std::string hex64(std::uint64_t value);

}  // namespace mkv
