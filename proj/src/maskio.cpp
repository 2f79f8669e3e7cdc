#include "seec/maskio.hpp"

#include "seec/coder.hpp"

namespace seec::maskio {

namespace {

// Run-length token scheme: a run of n pixels of one class is emitted as
// length tokens where 0..254 mean "n = token + 1, run ends" and 255 means
// "255 pixels consumed, run continues".
constexpr int kRunContinue = 255;

int parse_classes_comment(const std::vector<std::string>& comments) {
  for (const auto& c : comments) {
    std::size_t pos = c.find("classes=");
    if (pos == std::string::npos) continue;
    int n = 0;
    std::size_t i = pos + 8;
    bool any = false;
    while (i < c.size() && c[i] >= '0' && c[i] <= '9') {
      n = n * 10 + (c[i] - '0');
      ++i;
      any = true;
    }
    if (!any || n < 1 || n > 256)
      throw ValidationError("bad classes= comment: " + c);
    return n;
  }
  return 0;
}

}  // namespace

MaskMap load_mask(const std::string& path) {
  PgmFile pgm = read_pgm(path);
  int declared = parse_classes_comment(pgm.comments);
  MaskMap mask(pgm.width, pgm.height, declared > 0 ? declared : 2);
  if (declared > 0) {
    for (std::size_t i = 0; i < pgm.gray.size(); ++i) mask.ids[i] = pgm.gray[i];
  } else {
    for (std::size_t i = 0; i < pgm.gray.size(); ++i)
      mask.ids[i] = pgm.gray[i] >= 128 ? 1 : 0;
  }
  mask.validate();
  return mask;
}

void save_mask(const std::string& path, const MaskMap& mask) {
  std::vector<std::uint8_t> gray(mask.ids.size());
  if (mask.num_classes == 2) {
    for (std::size_t i = 0; i < gray.size(); ++i)
      gray[i] = mask.ids[i] ? 255 : 0;
    write_pgm(path, mask.width, mask.height, gray);
  } else {
    for (std::size_t i = 0; i < gray.size(); ++i) gray[i] = mask.ids[i];
    write_pgm(path, mask.width, mask.height, gray,
              {"classes=" + std::to_string(mask.num_classes)});
  }
}

std::vector<std::uint8_t> compress_mask(const MaskMap& mask) {
  mask.validate();
  coder::RangeEncoder enc;
  coder::AdaptiveModel class_model(mask.num_classes);
  coder::AdaptiveModel length_model(256);

  const std::size_t n = mask.ids.size();
  std::size_t i = 0;
  bool first_run = true;
  while (i < n) {
    int cls = mask.ids[i];
    std::size_t run = 1;
    while (i + run < n && mask.ids[i + run] == cls) ++run;
    // With two classes the runs alternate, so only the first run's class is
    // coded; otherwise each run carries its class id.
    if (mask.num_classes != 2 || first_run) class_model.encode(enc, cls);
    first_run = false;
    std::size_t left = run;
    while (left > 255) {
      length_model.encode(enc, kRunContinue);
      left -= 255;
    }
    length_model.encode(enc, static_cast<int>(left - 1));
    i += run;
  }
  return enc.finish();
}

MaskMap decompress_mask(std::span<const std::uint8_t> bytes, int width,
                        int height, int num_classes) {
  MaskMap mask(width, height, num_classes);
  coder::RangeDecoder dec(bytes);
  coder::AdaptiveModel class_model(num_classes);
  coder::AdaptiveModel length_model(256);

  const std::size_t n = mask.ids.size();
  std::size_t i = 0;
  int cls = -1;
  while (i < n) {
    if (num_classes != 2 || cls < 0)
      cls = class_model.decode(dec);
    else
      cls = 1 - cls;
    std::size_t run = 0;
    for (;;) {
      int tok = length_model.decode(dec);
      if (tok == kRunContinue) {
        run += 255;
      } else {
        run += static_cast<std::size_t>(tok) + 1;
        break;
      }
    }
    if (i + run > n) throw StreamError("mask run overflows image");
    for (std::size_t k = 0; k < run; ++k)
      mask.ids[i + k] = static_cast<std::uint8_t>(cls);
    i += run;
  }
  return mask;
}

}  // namespace seec::maskio
