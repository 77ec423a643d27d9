#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "tmnn/model.hpp"
#include "tmnn/training.hpp"

namespace tmnn {

/// Malformed config text or an unknown key.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Everything a run needs, as flat `key = value` pairs.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::filesystem::path output_dir = "runs/default";
  std::filesystem::path manifest;
  std::size_t top_k = 50;

  /// Known keys in canonical order.
  static const std::vector<std::string>& keys();

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Applies `key = value` lines; '#' starts a comment.
  void apply_text(const std::string& text);
  void apply_file(const std::filesystem::path& path);

  /// Canonical text; parsing it back yields the same config.
  std::string to_text() const;
  void validate() const;
};

}  // namespace tmnn
