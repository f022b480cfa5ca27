#pragma once

#include <compare>
#include <string>
#include <string_view>

namespace mfg {

// Calendar month tag parsed from the `appeared` field ("YYYY-MM").
struct YearMonth {
  int year = 0;
  int month = 0;

  auto operator<=>(const YearMonth&) const = default;

  bool valid() const { return year >= 1970 && month >= 1 && month <= 12; }

  std::string str() const;

  // Throws SchemaError when the text is not a valid YYYY-MM tag.
  static YearMonth parse(std::string_view text);
};

}  // namespace mfg
