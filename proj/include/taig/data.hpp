#ifndef TAIG_DATA_HPP
#define TAIG_DATA_HPP

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "taig/net.hpp"
#include "taig/rng.hpp"
#include "taig/serialize.hpp"
#include "taig/tensor.hpp"

namespace taig {

struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Immutable after construction. Pixels in [0,1], labels < num_classes.
struct Dataset {
  std::vector<Tensor> images;
  std::vector<std::size_t> labels;
  std::size_t num_classes = 0;
  std::string split;

  std::size_t size() const { return images.size(); }

  void check_invariants() const {
    if (images.size() != labels.size())
      throw DataError("dataset images/labels length mismatch");
    for (const auto& img : images)
      for (double v : img.data)
        if (!(v >= 0.0 && v <= 1.0)) throw DataError("pixel outside [0,1]");
    for (auto l : labels)
      if (l >= num_classes) throw DataError("label >= class count");
  }
};

/// The black reference image of the path integral.
inline Tensor black_reference(const std::vector<std::size_t>& shape) {
  return Tensor::zeros(shape);
}

struct BlobConfig {
  std::size_t num_classes = 2;
  std::size_t per_class = 100;
  std::vector<std::size_t> input_shape{16};
  double separation = 0.3;  // minimum pairwise center distance
  double sigma = 0.1;
  std::uint64_t seed = 0;
};

/// Gaussian class clusters clipped to [0,1], deterministic per seed.
inline Dataset gen_blobs(const BlobConfig& cfg) {
  if (!(cfg.separation > 0)) throw DataError("blob separation must be > 0");
  if (!(cfg.sigma >= 0)) throw DataError("blob sigma must be >= 0");
  Rng rng(derive_seed(cfg.seed, "blobs"));
  const std::size_t dim = Tensor::count(cfg.input_shape);

  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < cfg.num_classes; ++c) {
    std::vector<double> center(dim);
    bool ok = false;
    for (int attempt = 0; attempt < 10000 && !ok; ++attempt) {
      for (auto& v : center) v = rng.uniform(0.1, 0.9);
      ok = true;
      for (const auto& other : centers) {
        double d2 = 0;
        for (std::size_t i = 0; i < dim; ++i)
          d2 += (center[i] - other[i]) * (center[i] - other[i]);
        if (std::sqrt(d2) < cfg.separation) {
          ok = false;
          break;
        }
      }
    }
    if (!ok) throw DataError("could not place blob centers at requested separation");
    centers.push_back(center);
  }

  Dataset ds;
  ds.num_classes = cfg.num_classes;
  ds.split = "train";
  for (std::size_t c = 0; c < cfg.num_classes; ++c)
    for (std::size_t s = 0; s < cfg.per_class; ++s) {
      Tensor img = Tensor::zeros(cfg.input_shape);
      for (std::size_t i = 0; i < dim; ++i) {
        double v = centers[c][i] + cfg.sigma * rng.normal();
        img.data[i] = std::clamp(v, 0.0, 1.0);
      }
      ds.images.push_back(std::move(img));
      ds.labels.push_back(c);
    }
  ds.check_invariants();
  return ds;
}

// ---- IDX ingestion ------------------------------------------------------

namespace detail {

inline std::uint32_t read_be32(std::istream& is, std::uint64_t& offset, const char* what) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  if (is.gcount() != 4)
    throw FormatError(std::string("truncated IDX file reading ") + what +
                      " at byte offset " + std::to_string(offset));
  offset += 4;
  return (std::uint32_t(b[0]) << 24) | (std::uint32_t(b[1]) << 16) |
         (std::uint32_t(b[2]) << 8) | std::uint32_t(b[3]);
}

}  // namespace detail

/// Reads an IDX image/label pair (big-endian, u8 payload). Pixels are scaled
/// from [0,255] to [0,1].
inline Dataset load_idx(const std::filesystem::path& images_path,
                        const std::filesystem::path& labels_path) {
  std::ifstream imf(images_path, std::ios::binary);
  if (!imf) throw FormatError("cannot open " + images_path.string());
  std::uint64_t off = 0;
  std::uint32_t magic = detail::read_be32(imf, off, "image magic");
  if (magic != 0x00000803)
    throw FormatError("bad image magic at byte offset 0 in " + images_path.string());
  std::uint32_t n = detail::read_be32(imf, off, "image count");
  std::uint32_t h = detail::read_be32(imf, off, "image height");
  std::uint32_t w = detail::read_be32(imf, off, "image width");

  std::ifstream lbf(labels_path, std::ios::binary);
  if (!lbf) throw FormatError("cannot open " + labels_path.string());
  std::uint64_t loff = 0;
  std::uint32_t lmagic = detail::read_be32(lbf, loff, "label magic");
  if (lmagic != 0x00000801)
    throw FormatError("bad label magic at byte offset 0 in " + labels_path.string());
  std::uint32_t ln = detail::read_be32(lbf, loff, "label count");
  if (ln != n)
    throw FormatError("image/label count mismatch: " + std::to_string(n) + " vs " +
                      std::to_string(ln));

  Dataset ds;
  ds.split = "train";
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
  for (std::uint32_t i = 0; i < n; ++i) {
    imf.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (static_cast<std::size_t>(imf.gcount()) != buf.size())
      throw FormatError("truncated IDX image data at byte offset " + std::to_string(off));
    off += buf.size();
    Tensor img = Tensor::zeros({1, h, w});
    for (std::size_t p = 0; p < buf.size(); ++p) img.data[p] = buf[p] / 255.0;
    ds.images.push_back(std::move(img));
  }
  std::size_t max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    char c;
    lbf.read(&c, 1);
    if (lbf.gcount() != 1)
      throw FormatError("truncated IDX label data at byte offset " + std::to_string(loff));
    ++loff;
    auto l = static_cast<std::size_t>(static_cast<unsigned char>(c));
    max_label = std::max(max_label, l);
    ds.labels.push_back(l);
  }
  ds.num_classes = max_label + 1;
  ds.check_invariants();
  return ds;
}

/// n items correctly classified by every net, deterministic per seed.
inline Dataset subsample_correct(const Dataset& data, const std::vector<const ReluNet*>& nets,
                                 std::size_t n, std::uint64_t seed) {
  std::vector<std::size_t> ok;
  for (std::size_t i = 0; i < data.size(); ++i) {
    bool all = true;
    for (const auto* net : nets)
      if (predict(*net, data.images[i]) != data.labels[i]) {
        all = false;
        break;
      }
    if (all) ok.push_back(i);
  }
  if (ok.size() < n)
    throw DataError("subsample shortfall: " + std::to_string(ok.size()) +
                    " items classified correctly by all nets, " + std::to_string(n) +
                    " requested");
  Rng rng(derive_seed(seed, "subsample"));
  // Fisher-Yates over the qualifying indices
  for (std::size_t i = ok.size() - 1; i > 0; --i)
    std::swap(ok[i], ok[rng.below(i + 1)]);
  Dataset out;
  out.num_classes = data.num_classes;
  out.split = data.split;
  for (std::size_t i = 0; i < n; ++i) {
    out.images.push_back(data.images[ok[i]]);
    out.labels.push_back(data.labels[ok[i]]);
  }
  return out;
}

}  // namespace taig

#endif
