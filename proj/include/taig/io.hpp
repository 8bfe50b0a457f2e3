#ifndef TAIG_IO_HPP
#define TAIG_IO_HPP

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "taig/serialize.hpp"
#include "taig/tensor.hpp"

namespace taig {

inline constexpr const char* kVersion = "taig-0.1.0";

/// Atomic text write: temp file in the same directory, then rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& body) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
    os.write(body.data(), static_cast<std::streamsize>(body.size()));
    if (!os) throw FormatError("write failure on " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

/// Batch dump: flat little-endian f64 binary plus a JSON sidecar carrying
/// shape and whatever metadata the caller attaches.
inline void dump_tensors(const std::filesystem::path& bin_path,
                         const std::vector<Tensor>& tensors, nlohmann::json sidecar) {
  auto tmp = bin_path;
  tmp += ".tmp";
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw FormatError("cannot open " + tmp.string() + " for writing");
    for (const auto& t : tensors)
      for (double v : t.data) detail::put_f64(os, v);
    if (!os) throw FormatError("write failure on " + tmp.string());
  }
  std::filesystem::rename(tmp, bin_path);

  sidecar["version"] = kVersion;
  sidecar["count"] = tensors.size();
  if (!tensors.empty()) sidecar["shape"] = tensors.front().shape;
  auto side_path = bin_path;
  side_path += ".json";
  write_file_atomic(side_path, sidecar.dump(2) + "\n");
}

inline std::vector<Tensor> load_tensor_dump(const std::filesystem::path& bin_path) {
  auto side_path = bin_path;
  side_path += ".json";
  std::ifstream side(side_path);
  if (!side) throw FormatError("cannot open sidecar " + side_path.string());
  nlohmann::json meta = nlohmann::json::parse(side);
  std::size_t count = meta.at("count").get<std::size_t>();
  std::vector<std::size_t> shape = meta.at("shape").get<std::vector<std::size_t>>();

  std::ifstream is(bin_path, std::ios::binary);
  if (!is) throw FormatError("cannot open " + bin_path.string());
  detail::Reader r{is};
  std::vector<Tensor> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t = Tensor::zeros(shape);
    for (auto& v : t.data) v = r.f64("dump value");
    out.push_back(std::move(t));
  }
  return out;
}

/// Minimal CSV assembly with stable column ordering.
struct CsvWriter {
  std::string body;

  explicit CsvWriter(const std::vector<std::string>& columns) {
    append_row(columns);
  }

  void append_row(const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) body += ',';
      body += cells[i];
    }
    body += '\n';
  }

  void save(const std::filesystem::path& path) const { write_file_atomic(path, body); }
};

}  // namespace taig

#endif
