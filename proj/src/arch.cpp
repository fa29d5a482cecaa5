#include "henet/arch.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace henet {

namespace {

std::string join_channels(const std::vector<Index>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

Index parse_positive(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  long long v = 0;
  try {
    v = std::stoll(value, &pos);
  } catch (const std::exception&) {
    throw BuildError("config key '" + key + "': not an integer: '" + value + "'");
  }
  if (pos != value.size() || v < 1)
    throw BuildError("config key '" + key + "': expected a positive integer, got '" + value + "'");
  return static_cast<Index>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw BuildError("config key '" + key + "': expected true/false, got '" + value + "'");
}

}  // namespace

void NetworkConfig::validate() const {
  if (input_size < 1) throw BuildError("config: input_size must be positive");
  if (input_channels < 1) throw BuildError("config: input_channels must be positive");
  if (repeat < 1) throw BuildError("config: repeat must be positive");
  if (num_classes < 1) throw BuildError("config: num_classes must be positive");
  if (stage_channels.empty()) throw BuildError("config: stage_channels must be non-empty");
  for (std::size_t i = 1; i < stage_channels.size(); ++i)
    if (stage_channels[i] <= stage_channels[i - 1])
      throw BuildError("config: stage_channels must be strictly increasing, got " +
                       join_channels(stage_channels));
  if (stem_channels != stage_channels.front())
    throw BuildError("config: stem_channels (" + std::to_string(stem_channels) +
                     ") must equal the first stage width (" +
                     std::to_string(stage_channels.front()) + ")");
  if (final_channels < 2) throw BuildError("config: final_channels must be at least 2");
}

std::string NetworkConfig::summary() const {
  std::string s = "input=" + std::to_string(input_size) + "x" + std::to_string(input_size) +
                  "x" + std::to_string(input_channels);
  s += " stem=" + std::to_string(stem_channels);
  s += " stages=" + join_channels(stage_channels);
  s += " repeat=" + std::to_string(repeat);
  s += " final=" + std::to_string(final_channels);
  s += " classes=" + std::to_string(num_classes);
  s += std::string(" stage3_doubles=") + (stage3_doubles ? "true" : "false");
  return s;
}

NetworkConfig default_config(Index repeat) {
  NetworkConfig cfg;
  cfg.repeat = repeat;
  return cfg;
}

NetworkConfig parse_network_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file: " + path);
  NetworkConfig cfg;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw BuildError("config line " + std::to_string(lineno) + ": expected 'key = value'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key == "input_size") {
      cfg.input_size = parse_positive(key, value);
    } else if (key == "stem_channels") {
      cfg.stem_channels = parse_positive(key, value);
    } else if (key == "stage_channels") {
      cfg.stage_channels.clear();
      std::stringstream ss(value);
      std::string item;
      while (std::getline(ss, item, ','))
        cfg.stage_channels.push_back(parse_positive(key, trim(item)));
      if (cfg.stage_channels.empty())
        throw BuildError("config key 'stage_channels': empty list");
    } else if (key == "repeat") {
      cfg.repeat = parse_positive(key, value);
    } else if (key == "final_channels") {
      cfg.final_channels = parse_positive(key, value);
    } else if (key == "num_classes") {
      cfg.num_classes = parse_positive(key, value);
    } else if (key == "stage3_doubles") {
      cfg.stage3_doubles = parse_bool(key, value);
    } else {
      throw BuildError("config line " + std::to_string(lineno) + ": unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

DivisorPair nearest_divisor_pair(Index c) {
  if (c < 2) throw BuildError("nearest_divisor_pair: undefined for c=" + std::to_string(c));
  for (Index d = static_cast<Index>(std::sqrt(static_cast<double>(c))); d >= 1; --d) {
    if (c % d != 0) continue;
    const Index m = c / d;
    if (m > d) return {m, d};  // m == n excluded
  }
  throw BuildError("nearest_divisor_pair: no factor pair for c=" + std::to_string(c));
}

BlockSpec make_stride1_block(Index width) {
  if (width < 2 || width % 2 != 0)
    throw BuildError("stride-1 block: width " + std::to_string(width) + " must be even");
  const DivisorPair p = nearest_divisor_pair(width);
  const Index mid = width / 2;
  if (mid % p.m != 0)
    throw BuildError("stride-1 block width " + std::to_string(width) + ": m=" +
                     std::to_string(p.m) + " does not divide mid=" + std::to_string(mid));
  if (mid % p.n != 0)
    throw BuildError("stride-1 block width " + std::to_string(width) + ": n=" +
                     std::to_string(p.n) + " does not divide mid=" + std::to_string(mid));
  BlockSpec b;
  b.kind = BlockKind::Stride1;
  b.in_channels = width;
  b.mid_channels = mid;
  b.out_channels = width;
  b.m = p.m;
  b.n = p.n;
  b.first_kernel = 1;
  b.second_kernel = 3;
  b.first_stride = 1;
  b.first_padding = 0;
  b.second_padding = 1;
  return b;
}

BlockSpec make_stride2_block(Index in_c, Index out_c) {
  if (out_c < 2 || out_c % 2 != 0)
    throw BuildError("stride-2 block: out_channels " + std::to_string(out_c) + " must be even");
  const Index mid = out_c / 2;
  // Keyed on mid for the non-doubling case, on in_c otherwise; reproduces the
  // published group columns for every stage transition.
  const DivisorPair p = nearest_divisor_pair(mid < in_c ? mid : in_c);
  auto check = [&](Index g, Index ch, const char* what) {
    if (ch % g != 0)
      throw BuildError("stride-2 block " + std::to_string(in_c) + "->" + std::to_string(out_c) +
                       ": group " + std::to_string(g) + " does not divide " + what + "=" +
                       std::to_string(ch));
  };
  check(p.m, in_c, "in_channels");
  check(p.m, mid, "mid_channels");
  check(p.n, mid, "mid_channels");
  check(p.n, out_c, "out_channels");
  BlockSpec b;
  b.kind = BlockKind::Stride2;
  b.in_channels = in_c;
  b.mid_channels = mid;
  b.out_channels = out_c;
  b.m = p.m;
  b.n = p.n;
  b.first_kernel = 3;
  b.second_kernel = 1;
  b.first_stride = 2;
  b.first_padding = 0;  // the builder flips this to 1 for even inputs
  b.second_padding = 0;
  return b;
}

}  // namespace henet
