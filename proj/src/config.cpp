#include "alba/config.hpp"

#include <algorithm>
#include <sstream>

#include "alba/errors.hpp"
#include "alba/hashio.hpp"

namespace alba {

void KvConfig::declare(const std::string& key, const std::string& default_value,
                       const std::string& help) {
  entries_[key] = Entry{default_value, default_value, help};
}

const KvConfig::Entry& KvConfig::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

void KvConfig::set(const std::string& key, const std::string& value) {
  auto it = entries_.find(key);
  if (it == entries_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second.value = value;
}

void KvConfig::set_kv(const std::string& kv) {
  auto eq = kv.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + kv + "'");
  set(kv.substr(0, eq), kv.substr(eq + 1));
}

void KvConfig::load_file(const std::string& path) {
  std::istringstream is(read_file_text(path));
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    // trim
    auto begin = line.find_first_not_of(" \t\r");
    if (begin == std::string::npos) continue;
    auto end = line.find_last_not_of(" \t\r");
    line = line.substr(begin, end - begin + 1);
    auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(lineno) + ": expected key=value");
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

bool KvConfig::has(const std::string& key) const { return entries_.count(key) != 0; }

const std::string& KvConfig::get(const std::string& key) const { return entry(key).value; }

std::uint64_t KvConfig::get_u64(const std::string& key) const {
  try {
    return std::stoull(entry(key).value);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not an integer: '" + entry(key).value + "'");
  }
}

std::size_t KvConfig::get_size(const std::string& key) const {
  return static_cast<std::size_t>(get_u64(key));
}

double KvConfig::get_double(const std::string& key) const {
  try {
    return std::stod(entry(key).value);
  } catch (const std::exception&) {
    throw ConfigError("config key '" + key + "' is not a number: '" + entry(key).value + "'");
  }
}

bool KvConfig::get_bool(const std::string& key) const {
  const std::string& v = entry(key).value;
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key '" + key + "' is not a boolean: '" + v + "'");
}

std::string KvConfig::snapshot() const {
  std::string out;
  for (const auto& [key, e] : entries_) out += key + "=" + e.value + "\n";
  return out;
}

std::string KvConfig::help_text() const {
  std::size_t width = 0;
  for (const auto& [key, e] : entries_) width = std::max(width, key.size() + e.default_value.size());
  std::string out;
  for (const auto& [key, e] : entries_) {
    std::string left = key + "=" + e.default_value;
    out += "  " + left + std::string(width + 4 - left.size(), ' ') + e.help + "\n";
  }
  return out;
}

std::vector<std::uint32_t> parse_u32_list(const std::string& csv) {
  std::vector<std::uint32_t> out;
  std::string cur;
  for (char c : csv + ",") {
    if (c == ',') {
      if (cur.empty()) throw ConfigError("empty element in id list '" + csv + "'");
      try {
        out.push_back(static_cast<std::uint32_t>(std::stoul(cur)));
      } catch (const std::exception&) {
        throw ConfigError("bad id '" + cur + "' in list");
      }
      cur.clear();
    } else if (c >= '0' && c <= '9') {
      cur += c;
    } else {
      throw ConfigError("bad character in id list '" + csv + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty id list");
  return out;
}

}  // namespace alba
