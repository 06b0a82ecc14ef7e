#pragma once

// Sample matrix files.
//
// Text:   "N n" header, then N lines of n space-separated 0/1 tokens.
// Packed: "BPD1", little-endian u32 N, u32 n, then each row bit-packed
//         (bit j of the row lives in byte j/8 at position j%8) and padded
//         to a byte boundary.

#include "robustkit/core.hpp"

#include <array>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>
#include <string>

namespace robustkit {

inline BinaryMatrix read_samples_text(std::istream& in) {
  long long rows = -1, cols = -1;
  require(static_cast<bool>(in >> rows >> cols), "sample file: missing 'N n' header");
  require(rows >= 0 && cols >= 0, "sample file: negative dimensions");
  BinaryMatrix out(rows, cols);
  for (long long r = 0; r < rows; ++r) {
    for (long long c = 0; c < cols; ++c) {
      int v = -1;
      if (!(in >> v) || (v != 0 && v != 1))
        throw InvalidArgument("sample file: expected 0/1 at row " + std::to_string(r + 1) + ", column " +
                              std::to_string(c + 1));
      out(r, c) = static_cast<std::uint8_t>(v);
    }
  }
  std::string extra;
  require(!(in >> extra), "sample file: trailing data after " + std::to_string(rows) + " rows");
  return out;
}

inline void write_samples_text(std::ostream& out, const BinaryMatrix& s) {
  out << s.rows() << ' ' << s.cols() << '\n';
  std::string line;
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    line.clear();
    for (Eigen::Index c = 0; c < s.cols(); ++c) {
      if (c) line += ' ';
      line += s(r, c) ? '1' : '0';
    }
    out << line << '\n';
  }
}

namespace detail {

inline void put_u32(std::ostream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                              static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
  out.write(b.data(), 4);
}

inline std::uint32_t get_u32(std::istream& in) {
  std::array<unsigned char, 4> b{};
  require(static_cast<bool>(in.read(reinterpret_cast<char*>(b.data()), 4)), "packed samples: truncated header");
  return b[0] | (std::uint32_t{b[1]} << 8) | (std::uint32_t{b[2]} << 16) | (std::uint32_t{b[3]} << 24);
}

}  // namespace detail

inline void write_samples_packed(std::ostream& out, const BinaryMatrix& s) {
  require(s.rows() <= 0xffffffffLL && s.cols() <= 0xffffffffLL, "packed samples: dimensions exceed u32");
  out.write("BPD1", 4);
  detail::put_u32(out, static_cast<std::uint32_t>(s.rows()));
  detail::put_u32(out, static_cast<std::uint32_t>(s.cols()));
  std::string row(static_cast<std::size_t>((s.cols() + 7) / 8), '\0');
  for (Eigen::Index r = 0; r < s.rows(); ++r) {
    std::fill(row.begin(), row.end(), '\0');
    for (Eigen::Index c = 0; c < s.cols(); ++c)
      if (s(r, c)) row[static_cast<std::size_t>(c / 8)] |= static_cast<char>(1u << (c % 8));
    out.write(row.data(), static_cast<std::streamsize>(row.size()));
  }
}

inline BinaryMatrix read_samples_packed(std::istream& in) {
  std::array<char, 4> magic{};
  require(in.read(magic.data(), 4) && std::string(magic.data(), 4) == "BPD1", "packed samples: bad magic");
  const std::uint32_t rows = detail::get_u32(in), cols = detail::get_u32(in);
  BinaryMatrix out(rows, cols);
  std::string row(static_cast<std::size_t>((std::uint64_t{cols} + 7) / 8), '\0');
  for (std::uint32_t r = 0; r < rows; ++r) {
    require(static_cast<bool>(in.read(row.data(), static_cast<std::streamsize>(row.size()))),
            "packed samples: truncated at row " + std::to_string(r + 1));
    for (std::uint32_t c = 0; c < cols; ++c)
      out(r, c) = static_cast<std::uint8_t>((static_cast<unsigned char>(row[c / 8]) >> (c % 8)) & 1u);
  }
  require(in.peek() == std::char_traits<char>::eof(), "packed samples: trailing bytes");
  return out;
}

/// Reads either format, sniffing the magic.
inline BinaryMatrix load_samples(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), "cannot open sample file '" + path + "'");
  std::array<char, 4> head{};
  in.read(head.data(), 4);
  const bool packed = in.gcount() == 4 && std::string(head.data(), 4) == "BPD1";
  in.clear();
  in.seekg(0);
  return packed ? read_samples_packed(in) : read_samples_text(in);
}

inline void save_samples(const std::string& path, const BinaryMatrix& s, bool packed) {
  std::ofstream out(path, std::ios::binary);
  require(out.good(), "cannot write sample file '" + path + "'");
  packed ? write_samples_packed(out, s) : write_samples_text(out, s);
  require(out.good(), "write failed for '" + path + "'");
}

}  // namespace robustkit
