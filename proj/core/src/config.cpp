#include "bayatt/config.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "bayatt/error.hpp"

namespace bayatt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

Config Config::from_file(const std::string& path) {
  std::ifstream in(path);
  require(in.good(), ErrorCode::config, "cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return from_string(ss.str(), path);
}

Config Config::from_string(const std::string& text, const std::string& origin) {
  Config cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    require(eq != std::string::npos, ErrorCode::config,
            origin + ":" + std::to_string(lineno) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    require(!key.empty(), ErrorCode::config,
            origin + ":" + std::to_string(lineno) + ": empty key");
    cfg.entries_[key] = trim(line.substr(eq + 1));
  }
  return cfg;
}

void Config::set(const std::string& key, const std::string& value) { entries_[key] = value; }

bool Config::has(const std::string& key) const { return entries_.count(key) > 0; }

std::string Config::get_string(const std::string& key) const {
  auto it = entries_.find(key);
  require(it != entries_.end(), ErrorCode::config, "missing config key: " + key);
  return it->second;
}

std::string Config::get_string(const std::string& key, const std::string& def) const {
  auto it = entries_.find(key);
  return it == entries_.end() ? def : it->second;
}

double Config::get_double(const std::string& key, double def) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return def;
  try {
    std::size_t pos = 0;
    const double v = std::stod(it->second, &pos);
    require(pos == it->second.size(), ErrorCode::config, "bad number for " + key);
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorCode::config, "bad number for config key " + key + ": " + it->second);
  }
}

std::int64_t Config::get_int(const std::string& key, std::int64_t def) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return def;
  try {
    std::size_t pos = 0;
    const std::int64_t v = std::stoll(it->second, &pos);
    require(pos == it->second.size(), ErrorCode::config, "bad integer for " + key);
    return v;
  } catch (const Error&) {
    throw;
  } catch (const std::exception&) {
    fail(ErrorCode::config, "bad integer for config key " + key + ": " + it->second);
  }
}

bool Config::get_bool(const std::string& key, bool def) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) return def;
  std::string v = it->second;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "1" || v == "true" || v == "yes" || v == "on") return true;
  if (v == "0" || v == "false" || v == "no" || v == "off") return false;
  fail(ErrorCode::config, "bad boolean for config key " + key + ": " + it->second);
}

std::vector<std::string> Config::get_list(const std::string& key) const {
  std::vector<std::string> out;
  auto it = entries_.find(key);
  if (it == entries_.end()) return out;
  std::string item;
  for (char c : it->second) {
    if (c == ';' || c == ',') {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
      item.clear();
    } else {
      item += c;
    }
  }
  item = trim(item);
  if (!item.empty()) out.push_back(item);
  return out;
}

std::string Config::canonical_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries_) os << k << '=' << v << '\n';
  return os.str();
}

std::uint64_t Config::fingerprint() const {
  const std::string text = canonical_text();
  std::uint64_t h = 0xCBF29CE484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001B3ull;
  }
  return h;
}

std::string Config::fingerprint_hex() const {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fingerprint()));
  return std::string(buf);
}

}  // namespace bayatt
