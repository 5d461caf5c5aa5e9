#pragma once

#include <cstddef>
#include <string>

#include "nwinv/dataset.hpp"
#include "nwinv/infer.hpp"

namespace nwinv {

// Dataset files: header "x_0,...,x_{d-1},y,e", one example per line.
// Latents are not stored. n_classes == 0 infers max(y) + 1.
// Throws ParseError (with the 1-based line number) on malformed input.
Dataset load_csv(const std::string& path, std::size_t n_classes = 0);
Dataset parse_csv(const std::string& text, std::size_t n_classes = 0);
void save_csv(const std::string& path, const Dataset& ds);
std::string format_csv(const Dataset& ds);

// Feature cache sidecar: magic "NWFC", u32 version, u64 rows, u64 dim,
// u64 n_classes, features as little-endian f64, then per row the label
// (i32), env (i32) and dataset index (u64). FormatError on bad input.
void save_feature_cache(const std::string& path, const FeatureCache& cache);
FeatureCache load_feature_cache(const std::string& path);

// Little-endian primitives shared by the binary formats.
namespace bin {

void put_u32(std::string& out, std::uint32_t v);
void put_u64(std::string& out, std::uint64_t v);
void put_f64(std::string& out, double v);

// Sequential reader over a byte buffer; FormatError when it runs past the end.
class Reader {
 public:
  Reader(const std::string& bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::uint32_t u32();
  std::uint64_t u64();
  double f64();
  std::string raw(std::size_t n);
  bool at_end() const { return pos_ == bytes_.size(); }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  void need(std::size_t n);

  const std::string& bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& bytes);

}  // namespace bin

}  // namespace nwinv
