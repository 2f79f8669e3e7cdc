#include "seec/image.hpp"

#include <cctype>
#include <fstream>

namespace seec {

void MaskMap::validate() const {
  SEEC_CHECK_MSG(width >= 1 && height >= 1, "empty mask");
  SEEC_CHECK_MSG(ids.size() == static_cast<std::size_t>(width) * height,
                 "mask buffer size mismatch");
  for (std::uint8_t id : ids)
    if (id >= num_classes)
      throw ValidationError("mask class id " + std::to_string(id) +
                            " >= class count " + std::to_string(num_classes));
}

namespace {

// Reads one whitespace-delimited token, skipping '#' comments (collected).
std::string next_token(std::istream& in, std::vector<std::string>* comments) {
  std::string tok;
  int c;
  while ((c = in.get()) != EOF) {
    if (c == '#') {
      std::string line;
      std::getline(in, line);
      if (comments) comments->push_back(line);
      continue;
    }
    if (std::isspace(c)) {
      if (!tok.empty()) break;
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
  return tok;
}

int parse_dim(const std::string& tok, const char* what) {
  if (tok.empty()) throw ValidationError(std::string("missing ") + what);
  for (char ch : tok)
    if (!std::isdigit(static_cast<unsigned char>(ch)))
      throw ValidationError(std::string("bad ") + what + ": " + tok);
  long v = std::stol(tok);
  if (v < 1 || v > 1 << 20)
    throw ValidationError(std::string(what) + " out of range: " + tok);
  return static_cast<int>(v);
}

}  // namespace

ImageU8 read_ppm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  if (next_token(f, nullptr) != "P6")
    throw ValidationError(path + ": not a binary PPM (P6)");
  int w = parse_dim(next_token(f, nullptr), "width");
  int h = parse_dim(next_token(f, nullptr), "height");
  if (next_token(f, nullptr) != "255")
    throw ValidationError(path + ": maxval must be 255");
  ImageU8 img(w, h);
  f.read(reinterpret_cast<char*>(img.pixels.data()),
         static_cast<std::streamsize>(img.pixels.size()));
  if (f.gcount() != static_cast<std::streamsize>(img.pixels.size()))
    throw ValidationError(path + ": truncated pixel data");
  return img;
}

void write_ppm(const std::string& path, const ImageU8& img) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "P6\n" << img.width << " " << img.height << "\n255\n";
  f.write(reinterpret_cast<const char*>(img.pixels.data()),
          static_cast<std::streamsize>(img.pixels.size()));
  if (!f) throw IoError("write failed: " + path);
}

PgmFile read_pgm(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path);
  PgmFile pgm;
  if (next_token(f, &pgm.comments) != "P5")
    throw ValidationError(path + ": not a binary PGM (P5)");
  pgm.width = parse_dim(next_token(f, &pgm.comments), "width");
  pgm.height = parse_dim(next_token(f, &pgm.comments), "height");
  if (next_token(f, &pgm.comments) != "255")
    throw ValidationError(path + ": maxval must be 255");
  pgm.gray.assign(static_cast<std::size_t>(pgm.width) * pgm.height, 0);
  f.read(reinterpret_cast<char*>(pgm.gray.data()),
         static_cast<std::streamsize>(pgm.gray.size()));
  if (f.gcount() != static_cast<std::streamsize>(pgm.gray.size()))
    throw ValidationError(path + ": truncated pixel data");
  return pgm;
}

void write_pgm(const std::string& path, int width, int height,
               const std::vector<std::uint8_t>& gray,
               const std::vector<std::string>& comments) {
  SEEC_CHECK(gray.size() == static_cast<std::size_t>(width) * height);
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f << "P5\n";
  for (const auto& c : comments) f << "#" << c << "\n";
  f << width << " " << height << "\n255\n";
  f.write(reinterpret_cast<const char*>(gray.data()),
          static_cast<std::streamsize>(gray.size()));
  if (!f) throw IoError("write failed: " + path);
}

namespace {

// Symmetric reflection index: ...cba|abc...cba|abc... Valid for any n >= 1.
int reflect_index(int i, int n) {
  if (n == 1) return 0;
  int period = 2 * n;
  int m = i % period;
  if (m < 0) m += period;
  return m < n ? m : period - 1 - m;
}

}  // namespace

ImageU8 pad_to_multiple(const ImageU8& img, int multiple, int* pad_h,
                        int* pad_w) {
  int ph = (multiple - img.height % multiple) % multiple;
  int pw = (multiple - img.width % multiple) % multiple;
  if (pad_h) *pad_h = ph;
  if (pad_w) *pad_w = pw;
  if (ph == 0 && pw == 0) return img;
  ImageU8 out(img.width + pw, img.height + ph);
  for (int y = 0; y < out.height; ++y) {
    int sy = reflect_index(y, img.height);
    for (int x = 0; x < out.width; ++x) {
      int sx = reflect_index(x, img.width);
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(sy, sx, c);
    }
  }
  return out;
}

MaskMap pad_mask_to_multiple(const MaskMap& mask, int multiple) {
  int ph = (multiple - mask.height % multiple) % multiple;
  int pw = (multiple - mask.width % multiple) % multiple;
  if (ph == 0 && pw == 0) return mask;
  MaskMap out(mask.width + pw, mask.height + ph, mask.num_classes);
  for (int y = 0; y < out.height; ++y) {
    int sy = reflect_index(y, mask.height);
    for (int x = 0; x < out.width; ++x)
      out.at(y, x) = mask.at(sy, reflect_index(x, mask.width));
  }
  return out;
}

ImageU8 crop(const ImageU8& img, int width, int height) {
  SEEC_CHECK(width <= img.width && height <= img.height);
  if (width == img.width && height == img.height) return img;
  ImageU8 out(width, height);
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      for (int c = 0; c < 3; ++c) out.at(y, x, c) = img.at(y, x, c);
  return out;
}

}  // namespace seec
