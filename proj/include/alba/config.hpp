#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace alba {

// key=value configuration with a declared schema: unknown keys are rejected,
// every run can dump an effective snapshot (sorted, byte-stable).
class KvConfig {
 public:
  void declare(const std::string& key, const std::string& default_value, const std::string& help);

  // `key=value` lines, '#' comments, blank lines ignored
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);
  void set_kv(const std::string& kv);  // "key=value"

  bool has(const std::string& key) const;
  const std::string& get(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;  // true/false/1/0

  std::string snapshot() const;  // sorted key=value lines
  std::string help_text() const;

 private:
  struct Entry {
    std::string value;
    std::string default_value;
    std::string help;
  };
  const Entry& entry(const std::string& key) const;
  std::map<std::string, Entry> entries_;
};

std::vector<std::uint32_t> parse_u32_list(const std::string& csv);

}  // namespace alba
