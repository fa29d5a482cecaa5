#pragma once

#include <cstdio>
#include <string>

namespace henet {

enum class OutputFormat { Table, Kv };

inline std::string fmt_double(double v, int prec = 3) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", prec, v);
  return std::string(buf);
}

}  // namespace henet
