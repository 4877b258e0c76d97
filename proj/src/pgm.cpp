#include "surfel/pgm.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <string>
#include <vector>

namespace surfel {
namespace {

struct RawPgm {
  int width = 0;
  int height = 0;
  int maxval = 0;
  std::vector<int> counts;
};

// Next whitespace-delimited header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  char c;
  while (in.get(c)) {
    if (c == '#') {
      std::string rest;
      std::getline(in, rest);
      if (!tok.empty()) return tok;
      continue;
    }
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!tok.empty()) return tok;
      continue;
    }
    tok.push_back(c);
  }
  return tok;
}

int parse_int(const std::string& tok, const std::filesystem::path& path) {
  try {
    return std::stoi(tok);
  } catch (const std::exception&) {
    throw Error(ErrorCode::BadInput, "malformed PGM header in " + path.string());
  }
}

RawPgm read_raw(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::BadInput, "cannot open " + path.string());
  const std::string magic = next_token(in);
  if (magic != "P2" && magic != "P5") throw Error(ErrorCode::BadInput, path.string() + " is not a P2/P5 PGM");
  RawPgm pgm;
  pgm.width = parse_int(next_token(in), path);
  pgm.height = parse_int(next_token(in), path);
  pgm.maxval = parse_int(next_token(in), path);
  if (pgm.width <= 0 || pgm.height <= 0 || pgm.maxval <= 0 || pgm.maxval > 65535) {
    throw Error(ErrorCode::BadInput, "bad PGM dimensions in " + path.string());
  }
  const size_t n = static_cast<size_t>(pgm.width) * pgm.height;
  pgm.counts.resize(n);
  if (magic == "P2") {
    for (size_t i = 0; i < n; ++i) pgm.counts[i] = parse_int(next_token(in), path);
  } else {
    const int bytes = pgm.maxval > 255 ? 2 : 1;
    std::vector<unsigned char> buf(n * bytes);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (in.gcount() != static_cast<std::streamsize>(buf.size())) {
      throw Error(ErrorCode::BadInput, "truncated PGM data in " + path.string());
    }
    for (size_t i = 0; i < n; ++i) {
      pgm.counts[i] = bytes == 2 ? (buf[2 * i] << 8) | buf[2 * i + 1] : buf[i];
    }
  }
  return pgm;
}

void write_raw(const std::filesystem::path& path, int width, int height, int maxval, const std::vector<int>& counts) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::BadInput, "cannot write " + path.string());
  out << "P5\n" << width << " " << height << "\n" << maxval << "\n";
  std::vector<unsigned char> buf;
  buf.reserve(counts.size() * (maxval > 255 ? 2 : 1));
  for (int c : counts) {
    if (maxval > 255) {
      buf.push_back(static_cast<unsigned char>((c >> 8) & 0xff));
      buf.push_back(static_cast<unsigned char>(c & 0xff));
    } else {
      buf.push_back(static_cast<unsigned char>(c));
    }
  }
  out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

}  // namespace

GrayImage read_pgm(const std::filesystem::path& path) {
  const RawPgm raw = read_raw(path);
  GrayImage img(raw.width, raw.height);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      img(x, y) = std::clamp(static_cast<double>(raw.counts[y * raw.width + x]) / raw.maxval, 0.0, 1.0);
    }
  }
  return img;
}

DepthMap read_depth_pgm(const std::filesystem::path& path, double scale) {
  if (!(scale > 0.0)) throw Error(ErrorCode::BadInput, "depth scale must be positive");
  const RawPgm raw = read_raw(path);
  DepthMap depth(raw.width, raw.height);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const int c = raw.counts[y * raw.width + x];
      if (c > 0) depth.set(x, y, c * scale);
    }
  }
  return depth;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img, int maxval) {
  if (maxval != 255 && maxval != 65535) throw Error(ErrorCode::BadInput, "maxval must be 255 or 65535");
  std::vector<int> counts(static_cast<size_t>(img.width()) * img.height());
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      counts[y * img.width() + x] = static_cast<int>(std::lround(std::clamp(img(x, y), 0.0, 1.0) * maxval));
    }
  }
  write_raw(path, img.width(), img.height(), maxval, counts);
}

void write_depth_pgm(const std::filesystem::path& path, const DepthMap& depth, double scale) {
  std::vector<int> counts(static_cast<size_t>(depth.width()) * depth.height(), 0);
  for (int y = 0; y < depth.height(); ++y) {
    for (int x = 0; x < depth.width(); ++x) {
      if (!depth.valid(x, y)) continue;
      const long c = std::lround(depth(x, y) / scale);
      if (c < 1 || c > 65535) throw Error(ErrorCode::BadInput, "depth out of 16-bit range for the given scale");
      counts[y * depth.width() + x] = static_cast<int>(c);
    }
  }
  write_raw(path, depth.width(), depth.height(), 65535, counts);
}

}  // namespace surfel
