#include "mfg/month.hpp"

#include <cstdio>

#include "mfg/errors.hpp"

namespace mfg {

std::string YearMonth::str() const {
  char buf[16];
  std::snprintf(buf, sizeof(buf), "%04d-%02d", year, month);
  return buf;
}

YearMonth YearMonth::parse(std::string_view text) {
  auto fail = [&] {
    throw SchemaError("invalid month tag '" + std::string(text) +
                      "', expected YYYY-MM");
  };
  if (text.size() != 7 || text[4] != '-') fail();
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u})
    if (text[i] < '0' || text[i] > '9') fail();
  YearMonth ym;
  ym.year = (text[0] - '0') * 1000 + (text[1] - '0') * 100 +
            (text[2] - '0') * 10 + (text[3] - '0');
  ym.month = (text[5] - '0') * 10 + (text[6] - '0');
  if (!ym.valid()) fail();
  return ym;
}

}  // namespace mfg
