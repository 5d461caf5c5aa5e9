#include "nwinv/io.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <charconv>
#include <fstream>
#include <sstream>
#include <string_view>

#include "nwinv/errors.hpp"

namespace nwinv {

namespace {

constexpr char kCacheMagic[4] = {'N', 'W', 'F', 'C'};
constexpr std::uint32_t kCacheVersion = 1;

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

double parse_double(std::string_view s, std::size_t line, std::size_t col) {
  s = trim(s);
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  double v = 0.0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v)) {
    throw ParseError(line, "column " + std::to_string(col + 1) + ": '" + std::string(s) + "' is not a finite number");
  }
  return v;
}

int parse_id(std::string_view s, std::size_t line, const char* what) {
  s = trim(s);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || ptr != s.data() + s.size() || v < 0) {
    throw ParseError(line, std::string(what) + " '" + std::string(s) + "' is not a nonnegative integer");
  }
  return v;
}

void append_double(std::string& out, double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  out.append(buf, res.ptr);
}

}  // namespace

Dataset parse_csv(const std::string& text, std::size_t n_classes) {
  std::istringstream in(text);
  std::string raw;
  std::size_t line_no = 0;
  std::size_t d = 0;
  bool have_header = false;
  std::vector<LabeledExample> rows;
  while (std::getline(in, raw)) {
    ++line_no;
    const std::string_view line = trim(raw);
    if (line.empty()) continue;
    const auto cells = split_commas(line);
    if (!have_header) {
      if (cells.size() < 3) throw ParseError(line_no, "header needs at least one feature column plus y and e");
      d = cells.size() - 2;
      for (std::size_t j = 0; j < d; ++j) {
        if (trim(cells[j]) != "x_" + std::to_string(j)) {
          throw ParseError(line_no, "header column " + std::to_string(j + 1) + " should be x_" + std::to_string(j));
        }
      }
      if (trim(cells[d]) != "y" || trim(cells[d + 1]) != "e") {
        throw ParseError(line_no, "header must end with y,e");
      }
      have_header = true;
      continue;
    }
    if (cells.size() != d + 2) {
      throw ParseError(line_no, "expected " + std::to_string(d + 2) + " columns, found " + std::to_string(cells.size()));
    }
    LabeledExample ex;
    ex.x.resize(d);
    for (std::size_t j = 0; j < d; ++j) ex.x[j] = parse_double(cells[j], line_no, j);
    ex.y = parse_id(cells[d], line_no, "label");
    ex.e = parse_id(cells[d + 1], line_no, "environment");
    rows.push_back(std::move(ex));
  }
  if (!have_header) throw ParseError(line_no == 0 ? 1 : line_no, "missing header row");
  for (const auto& ex : rows) {
    if (n_classes != 0 && static_cast<std::size_t>(ex.y) >= n_classes) {
      throw ConfigError("label " + std::to_string(ex.y) + " exceeds n_classes=" + std::to_string(n_classes));
    }
  }
  return Dataset(std::move(rows), n_classes);
}

Dataset load_csv(const std::string& path, std::size_t n_classes) {
  return parse_csv(bin::read_file(path), n_classes);
}

std::string format_csv(const Dataset& ds) {
  std::string out;
  const std::size_t d = ds.input_dim();
  for (std::size_t j = 0; j < d; ++j) out += "x_" + std::to_string(j) + ",";
  out += "y,e\n";
  for (const auto& ex : ds.examples()) {
    for (double v : ex.x) {
      append_double(out, v);
      out += ',';
    }
    out += std::to_string(ex.y) + "," + std::to_string(ex.e) + "\n";
  }
  return out;
}

void save_csv(const std::string& path, const Dataset& ds) { bin::write_file(path, format_csv(ds)); }

void save_feature_cache(const std::string& path, const FeatureCache& cache) {
  std::string out(kCacheMagic, 4);
  bin::put_u32(out, kCacheVersion);
  bin::put_u64(out, cache.size());
  bin::put_u64(out, cache.feature_dim());
  bin::put_u64(out, cache.n_classes);
  for (double v : cache.features.data()) bin::put_f64(out, v);
  for (std::size_t i = 0; i < cache.size(); ++i) {
    bin::put_u32(out, static_cast<std::uint32_t>(cache.labels[i]));
    bin::put_u32(out, static_cast<std::uint32_t>(cache.envs[i]));
    bin::put_u64(out, cache.indices[i]);
  }
  bin::write_file(path, out);
}

FeatureCache load_feature_cache(const std::string& path) {
  const std::string bytes = bin::read_file(path);
  bin::Reader r(bytes, "feature cache " + path);
  if (r.raw(4) != std::string(kCacheMagic, 4)) throw FormatError(path + ": not a feature cache (bad magic)");
  const std::uint32_t version = r.u32();
  if (version != kCacheVersion) throw FormatError(path + ": unsupported feature cache version " + std::to_string(version));
  const std::uint64_t n = r.u64(), d = r.u64(), c = r.u64();
  if (d != 0 && n > r.remaining() / 8 / d) throw FormatError(path + ": truncated feature cache");
  Tensor feats({static_cast<std::size_t>(n), static_cast<std::size_t>(d)});
  for (auto& v : feats.storage()) v = r.f64();
  std::vector<int> labels(n), envs(n);
  std::vector<std::size_t> idx(n);
  for (std::size_t i = 0; i < n; ++i) {
    labels[i] = static_cast<std::int32_t>(r.u32());
    envs[i] = static_cast<std::int32_t>(r.u32());
    idx[i] = r.u64();
    if (labels[i] < 0 || static_cast<std::uint64_t>(labels[i]) >= c) throw FormatError(path + ": label out of range");
  }
  if (!r.at_end()) throw FormatError(path + ": trailing bytes after feature cache");
  return make_cache(std::move(feats), std::move(labels), std::move(envs), c, std::move(idx));
}

namespace bin {

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<std::uint64_t>(v)); }

void Reader::need(std::size_t n) {
  if (bytes_.size() - pos_ < n) throw FormatError(what_ + ": truncated at byte " + std::to_string(pos_));
}

std::uint32_t Reader::u32() {
  need(4);
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
  return v;
}

std::uint64_t Reader::u64() {
  need(8);
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_++])) << (8 * i);
  return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

std::string Reader::raw(std::size_t n) {
  need(n);
  std::string out = bytes_.substr(pos_, n);
  pos_ += n;
  return out;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::string& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw ConfigError("write failed for " + path);
}

}  // namespace bin

}  // namespace nwinv
