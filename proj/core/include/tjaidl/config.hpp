#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tjaidl/data.hpp"
#include "tjaidl/eval.hpp"
#include "tjaidl/trainer.hpp"

namespace tjaidl {

/// Flat "section.key = value" document. Blank lines and '#' comments are
/// ignored; duplicate keys are an error.
class KeyValueConfig {
 public:
  static KeyValueConfig parse(const std::string& text);
  static KeyValueConfig load(const std::filesystem::path& path);

  bool contains(const std::string& key) const { return entries_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  void set(const std::string& key, const std::string& value) { entries_[key] = value; }

  std::optional<std::size_t> get_size(const std::string& key) const;
  std::optional<std::uint64_t> get_u64(const std::string& key) const;
  std::optional<double> get_double(const std::string& key) const;
  std::optional<bool> get_bool(const std::string& key) const;
  std::optional<std::vector<std::size_t>> get_size_list(const std::string& key) const;
  std::optional<std::vector<std::string>> get_string_list(const std::string& key) const;

  /// Throws ConfigError naming the first key outside `known`.
  void reject_unknown(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& entries() const noexcept { return entries_; }

 private:
  std::map<std::string, std::string> entries_;
};

/// Keys read by the functions below.
const std::set<std::string>& known_config_keys();

GenConfig gen_config_from(const KeyValueConfig& kv, GenConfig base = {});
TrainConfig train_config_from(const KeyValueConfig& kv, TrainConfig base = {});
Protocol protocol_from(const KeyValueConfig& kv);

/// A full comparison: data source, training schedule, modes and seeds.
struct ExperimentSpec {
  std::optional<std::filesystem::path> source_path;
  std::optional<std::filesystem::path> target_path;
  GenConfig gen;  // used when no dataset paths are given; seed follows the run seed
  TrainConfig train;
  Protocol protocol;
  std::vector<Mode> modes{Mode::kTjAidl};
  std::vector<std::uint64_t> seeds{0};

  void validate() const;
};

ExperimentSpec experiment_from(const KeyValueConfig& kv);

std::vector<Mode> parse_mode_list(const std::string& csv);
std::vector<std::uint64_t> parse_seed_list(const std::string& csv);

}  // namespace tjaidl
