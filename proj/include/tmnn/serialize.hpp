#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "tmnn/tensor.hpp"

namespace tmnn {

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Named-tensor container used for feature and checkpoint files.
///
/// Layout: the 8 bytes `MODF0001`, a little-endian u64 header length, a JSON
/// header, then raw little-endian payloads. The header holds a `tensors`
/// array of {name, dtype, shape, offset, bytes} (offsets relative to the
/// payload start) and a free-form `meta` object. Entries are written in name
/// order so identical content produces identical bytes.
class TensorFile {
 public:
  static constexpr char kMagic[9] = "MODF0001";

  void put(const std::string& name, const Tensor<float>& t);
  void put(const std::string& name, const Tensor<double>& t);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  std::vector<std::string> names() const;
  std::string dtype(const std::string& name) const;

  /// Converts from the stored dtype when needed.
  template <typename T>
  Tensor<T> get(const std::string& name) const;

  nlohmann::json& meta() { return meta_; }
  const nlohmann::json& meta() const { return meta_; }

  std::string to_bytes() const;
  static TensorFile from_bytes(const std::string& bytes);

  void save(const std::filesystem::path& path) const;
  static TensorFile load(const std::filesystem::path& path);

 private:
  struct Entry {
    Shape shape;
    std::variant<std::vector<float>, std::vector<double>> values;
  };
  std::map<std::string, Entry> entries_;
  nlohmann::json meta_ = nlohmann::json::object();
};

}  // namespace tmnn
