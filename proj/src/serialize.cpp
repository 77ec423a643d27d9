#include "tmnn/serialize.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>

static_assert(std::endian::native == std::endian::little, "container format assumes a little-endian host");

namespace tmnn {

void TensorFile::put(const std::string& name, const Tensor<float>& t) {
  entries_[name] = Entry{t.shape(), t.values()};
}

void TensorFile::put(const std::string& name, const Tensor<double>& t) {
  entries_[name] = Entry{t.shape(), t.values()};
}

std::vector<std::string> TensorFile::names() const {
  std::vector<std::string> out;
  for (const auto& [name, _] : entries_) out.push_back(name);
  return out;
}

std::string TensorFile::dtype(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw FormatError("no tensor named '" + name + "'");
  return std::holds_alternative<std::vector<float>>(it->second.values) ? "float32" : "float64";
}

template <typename T>
Tensor<T> TensorFile::get(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw FormatError("no tensor named '" + name + "'");
  return std::visit(
      [&](const auto& v) {
        std::vector<T> out(v.begin(), v.end());
        return Tensor<T>(it->second.shape, std::move(out));
      },
      it->second.values);
}

template Tensor<float> TensorFile::get<float>(const std::string&) const;
template Tensor<double> TensorFile::get<double>(const std::string&) const;

std::string TensorFile::to_bytes() const {
  nlohmann::json header;
  header["meta"] = meta_;
  header["tensors"] = nlohmann::json::array();
  std::string payload;
  for (const auto& [name, entry] : entries_) {
    const std::size_t offset = payload.size();
    std::visit(
        [&](const auto& v) {
          payload.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(v[0]));
        },
        entry.values);
    header["tensors"].push_back({{"name", name},
                                 {"dtype", dtype(name)},
                                 {"shape", entry.shape},
                                 {"offset", offset},
                                 {"bytes", payload.size() - offset}});
  }
  const std::string text = header.dump();
  const std::uint64_t len = text.size();
  std::string out(kMagic, 8);
  out.append(reinterpret_cast<const char*>(&len), sizeof(len));
  out += text;
  out += payload;
  return out;
}

TensorFile TensorFile::from_bytes(const std::string& bytes) {
  if (bytes.size() < 16 || bytes.compare(0, 8, kMagic) != 0) throw FormatError("not a MODF0001 container");
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  if (bytes.size() < 16 + len) throw FormatError("truncated container header");
  nlohmann::json header;
  try {
    header = nlohmann::json::parse(bytes.substr(16, len));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("bad container header: ") + e.what());
  }
  const std::size_t base = 16 + len;
  TensorFile file;
  file.meta_ = header.value("meta", nlohmann::json::object());
  for (const auto& t : header.at("tensors")) {
    const auto name = t.at("name").get<std::string>();
    const auto dtype = t.at("dtype").get<std::string>();
    const auto shape = t.at("shape").get<Shape>();
    const auto offset = t.at("offset").get<std::size_t>();
    const auto nbytes = t.at("bytes").get<std::size_t>();
    if (base + offset + nbytes > bytes.size()) throw FormatError("truncated payload for '" + name + "'");
    const char* src = bytes.data() + base + offset;
    const std::size_t n = shape_numel(shape);
    Entry entry{shape, {}};
    if (dtype == "float32") {
      if (nbytes != n * sizeof(float)) throw FormatError("size mismatch for '" + name + "'");
      std::vector<float> v(n);
      std::memcpy(v.data(), src, nbytes);
      entry.values = std::move(v);
    } else if (dtype == "float64") {
      if (nbytes != n * sizeof(double)) throw FormatError("size mismatch for '" + name + "'");
      std::vector<double> v(n);
      std::memcpy(v.data(), src, nbytes);
      entry.values = std::move(v);
    } else {
      throw FormatError("unsupported dtype '" + dtype + "'");
    }
    file.entries_[name] = std::move(entry);
  }
  return file;
}

void TensorFile::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw FormatError("cannot write " + tmp);
    const auto bytes = to_bytes();
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  std::filesystem::rename(tmp, path);
}

TensorFile TensorFile::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return from_bytes(ss.str());
}

}  // namespace tmnn
