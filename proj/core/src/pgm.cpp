#include "prognosis/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>

#include "prognosis/error.hpp"

namespace prognosis {

namespace {

void skip_space_and_comments(std::istream& in) {
  for (;;) {
    const int ch = in.peek();
    if (ch == '#') {
      std::size_t length = 0;
      while (in.peek() != '\n' && in.peek() != '\r' && in.peek() != EOF) {
        in.get();
        if (++length > kMaxPgmComment) throw FormatError("PGM comment longer than 1 KiB");
      }
    } else if (ch != EOF && std::isspace(ch)) {
      in.get();
    } else {
      return;
    }
  }
}

std::size_t read_header_number(std::istream& in, const char* what) {
  skip_space_and_comments(in);
  std::size_t value = 0;
  int digits = 0;
  while (std::isdigit(in.peek())) {
    value = value * 10 + static_cast<std::size_t>(in.get() - '0');
    if (++digits > 9) throw FormatError(std::string("PGM ") + what + " too large");
  }
  if (digits == 0) throw FormatError(std::string("PGM header: expected ") + what);
  return value;
}

}  // namespace

RawImage read_pgm(std::istream& in) {
  char magic[2];
  if (!in.read(magic, 2) || magic[0] != 'P' || magic[1] != '5') {
    throw FormatError("not a binary PGM (expected P5)");
  }
  RawImage img;
  img.width = read_header_number(in, "width");
  img.height = read_header_number(in, "height");
  const std::size_t maxval = read_header_number(in, "maxval");
  if (img.width == 0 || img.height == 0) throw FormatError("PGM has zero dimension");
  if (maxval == 0 || maxval > 65535) throw FormatError("PGM maxval out of range");
  const int sep = in.get();
  if (sep == EOF || !std::isspace(sep)) throw FormatError("PGM header not terminated by whitespace");

  const std::size_t count = img.width * img.height;
  img.pixels.resize(count);
  if (maxval < 256) {
    std::vector<unsigned char> buf(count);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(count))) {
      throw FormatError("PGM pixel data truncated");
    }
    std::copy(buf.begin(), buf.end(), img.pixels.begin());
  } else {
    std::vector<unsigned char> buf(2 * count);
    if (!in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw FormatError("PGM pixel data truncated");
    }
    for (std::size_t i = 0; i < count; ++i) {
      img.pixels[i] = static_cast<std::uint16_t>((buf[2 * i] << 8) | buf[2 * i + 1]);
    }
  }
  for (auto v : img.pixels) {
    if (v > maxval) throw FormatError("PGM sample exceeds maxval");
  }
  return img;
}

RawImage read_pgm(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open image " + path.string());
  try {
    return read_pgm(in);
  } catch (const FormatError& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

void write_pgm(std::ostream& out, const RawImage& image) {
  if (image.pixels.size() != image.width * image.height || image.pixels.empty()) {
    throw Error("cannot write inconsistent image");
  }
  out << "P5\n" << image.width << ' ' << image.height << "\n65535\n";
  std::vector<unsigned char> buf(2 * image.pixels.size());
  for (std::size_t i = 0; i < image.pixels.size(); ++i) {
    buf[2 * i] = static_cast<unsigned char>(image.pixels[i] >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(image.pixels[i] & 0xff);
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (!out) throw Error("failed writing PGM");
}

void write_pgm(const std::filesystem::path& path, const RawImage& image) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  write_pgm(out, image);
}

RawImage to_raw16(const GrayImage& image) {
  RawImage raw;
  raw.width = image.cols();
  raw.height = image.rows();
  raw.pixels.reserve(image.pixels().size());
  for (double v : image.pixels()) {
    raw.pixels.push_back(static_cast<std::uint16_t>(std::lround(std::clamp(v, 0.0, 1.0) * 65535.0)));
  }
  return raw;
}

}  // namespace prognosis
