// Command-line front end: encode, decode, train, eval, ablate.
// stdout carries machine-readable results (key=value lines or CSV);
// diagnostics and progress go to stderr.

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <future>
#include <iostream>

#include "seec/container.hpp"
#include "seec/trainer.hpp"

namespace fs = std::filesystem;
using namespace seec;

namespace {

struct ImageStats {
  container::EncodeStats st;
  std::size_t pixels = 0;

  double bpp_total() const {
    return 8.0 * static_cast<double>(st.total_bytes()) /
           static_cast<double>(pixels);
  }
  double bpp_latent() const {
    return 8.0 * static_cast<double>(st.z_bytes + st.y_bytes) /
           static_cast<double>(pixels);
  }
  double bpp_mask() const {
    return 8.0 * static_cast<double>(st.mask_bytes) /
           static_cast<double>(pixels);
  }
  double bpp_pixel() const {
    return 8.0 * static_cast<double>(st.pixel_bytes) /
           static_cast<double>(pixels);
  }
};

void print_stats_line(std::ostream& os, const ImageStats& s) {
  os << "bpp_total=" << s.bpp_total() << " bpp_latent=" << s.bpp_latent()
     << " bpp_mask=" << s.bpp_mask() << " bpp_pixel=" << s.bpp_pixel()
     << " seconds=" << s.st.seconds << "\n";
}

std::vector<std::uint8_t> read_binary(const std::string& path) {
  std::ifstream f(path, std::ios::binary | std::ios::ate);
  if (!f) throw IoError("cannot open " + path);
  std::streamsize size = f.tellg();
  f.seekg(0);
  std::vector<std::uint8_t> bytes(static_cast<std::size_t>(size));
  f.read(reinterpret_cast<char*>(bytes.data()), size);
  if (!f) throw IoError("read failed: " + path);
  return bytes;
}

void write_binary(const std::string& path,
                  const std::vector<std::uint8_t>& bytes) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot open " + path + " for writing");
  f.write(reinterpret_cast<const char*>(bytes.data()),
          static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("write failed: " + path);
}

int cmd_encode(const std::string& image_path, const std::string& mask_path,
               const std::string& weights_path, const std::string& out_path,
               bool roi) {
  ImageU8 img = read_ppm(image_path);
  MaskMap mask = maskio::load_mask(mask_path);
  container::SeecModel model = container::SeecModel::load(weights_path);
  ImageStats s;
  auto stream = container::encode_image(img, mask, model, roi, &s.st);
  s.pixels = static_cast<std::size_t>(img.width) * img.height;
  write_binary(out_path, stream);
  print_stats_line(std::cout, s);
  return 0;
}

int cmd_decode(const std::string& stream_path,
               const std::string& weights_path, const std::string& out_path,
               const std::string& mask_out_path) {
  auto stream = read_binary(stream_path);
  container::SeecModel model = container::SeecModel::load(weights_path);
  auto t0 = std::chrono::steady_clock::now();
  MaskMap mask;
  ImageU8 img = container::decode_image(stream, model, &mask);
  double seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
  write_ppm(out_path, img);
  if (!mask_out_path.empty()) maskio::save_mask(mask_out_path, mask);
  std::cout << "width=" << img.width << " height=" << img.height
            << " seconds=" << seconds << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& out_path,
              std::optional<std::uint64_t> seed_override) {
  trainer::TrainConfig cfg = trainer::load_config(config_path);
  if (seed_override) cfg.seed = *seed_override;
  std::cerr << "generating corpus: " << cfg.corpus_images << " images of "
            << cfg.corpus_size << "x" << cfg.corpus_size << "\n";
  auto corpus =
      trainer::make_synth_corpus(cfg.corpus_images, cfg.corpus_size, cfg.seed);
  auto model = container::SeecModel::create(cfg.model, cfg.seed);
  trainer::TrainResult result = trainer::train(model, cfg, corpus, &std::cerr);
  model.save(out_path);
  std::cout << "checkpoint=" << out_path
            << " best_val_bpp=" << result.best_val_bpp
            << " steps=" << result.steps << " lr_decays=" << result.lr_decays
            << "\n";
  return 0;
}

int cmd_eval(const std::string& dir, const std::string& weights_path,
             bool roi) {
  container::SeecModel model = container::SeecModel::load(weights_path);

  std::vector<std::pair<std::string, std::string>> pairs;  // (ppm, pgm)
  std::vector<std::string> ppms;
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (!entry.is_regular_file()) continue;
    if (entry.path().extension() == ".ppm")
      ppms.push_back(entry.path().string());
  }
  std::sort(ppms.begin(), ppms.end());
  for (const auto& ppm : ppms) {
    fs::path mask_path = fs::path(ppm).replace_extension(".pgm");
    if (!fs::exists(mask_path)) {
      std::cerr << "warning: no mask for " << ppm << ", skipped\n";
      continue;
    }
    pairs.emplace_back(ppm, mask_path.string());
  }
  if (pairs.empty()) throw ValidationError("no ppm+pgm pairs found in " + dir);

  // Images are independent; process in parallel but report in order.
  std::vector<std::future<ImageStats>> futures(pairs.size());
  unsigned lanes = std::max(1u, std::thread::hardware_concurrency());
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    auto run = [&, i]() {
      ImageU8 img = read_ppm(pairs[i].first);
      MaskMap mask = maskio::load_mask(pairs[i].second);
      ImageStats s;
      container::encode_image(img, mask, model, roi, &s.st);
      s.pixels = static_cast<std::size_t>(img.width) * img.height;
      return s;
    };
    futures[i] = std::async(std::launch::async, run);
    if ((i + 1) % lanes == 0) futures[i].wait();
  }

  std::cout << "image,bpp_total,bpp_latent,bpp_mask,bpp_pixel,seconds\n";
  double sum_total = 0, sum_latent = 0, sum_mask = 0, sum_pixel = 0,
         sum_seconds = 0;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ImageStats s = futures[i].get();
    std::cout << fs::path(pairs[i].first).filename().string() << ","
              << s.bpp_total() << "," << s.bpp_latent() << "," << s.bpp_mask()
              << "," << s.bpp_pixel() << "," << s.st.seconds << "\n";
    sum_total += s.bpp_total();
    sum_latent += s.bpp_latent();
    sum_mask += s.bpp_mask();
    sum_pixel += s.bpp_pixel();
    sum_seconds += s.st.seconds;
  }
  double n = static_cast<double>(pairs.size());
  std::cout << "mean," << sum_total / n << "," << sum_latent / n << ","
            << sum_mask / n << "," << sum_pixel / n << "," << sum_seconds / n
            << "\n";
  return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& out_path) {
  trainer::TrainConfig cfg = trainer::load_config(config_path);
  trainer::AblationReport report = trainer::ablate(cfg, &std::cerr);

  std::ostringstream csv;
  csv << "smem,mcdlm,model_bpp,mask_bpp,total_bpp\n";
  for (const auto& arm : report.arms)
    csv << (arm.smem_on ? "on" : "off") << ","
        << (arm.mcdlm_on ? "on" : "off") << "," << arm.model_bpp << ","
        << arm.mask_bpp << "," << arm.total_bpp() << "\n";

  std::cout << "param_count_multi=" << report.param_count_multi
            << " param_count_single=" << report.param_count_single << "\n";
  std::cout << "nll_correct=" << report.nll_correct
            << " nll_random=" << report.nll_random
            << " nll_inverted=" << report.nll_inverted << "\n";
  std::cout << csv.str();
  if (!out_path.empty()) {
    std::ofstream f(out_path);
    if (!f) throw IoError("cannot open " + out_path + " for writing");
    f << csv.str();
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"SEEC lossless image codec"};
  app.require_subcommand(1);

  std::string image_path, mask_path, weights_path, out_path, mask_out_path;
  std::string stream_path, config_path, dir_path;
  bool roi = false;
  std::optional<std::uint64_t> seed;

  auto* enc = app.add_subcommand("encode", "Encode a PPM image losslessly");
  enc->add_option("image", image_path, "input image (binary PPM)")->required();
  enc->add_option("mask", mask_path, "segmentation mask (binary PGM)")
      ->required();
  enc->add_option("--weights", weights_path, "model checkpoint")->required();
  enc->add_option("--out", out_path, "output .seec stream")->required();
  enc->add_flag("--roi", roi,
                "skip background pixels; decoder reconstructs them by argmax");

  auto* dec = app.add_subcommand("decode", "Decode a .seec stream");
  dec->add_option("stream", stream_path, "input .seec stream")->required();
  dec->add_option("--weights", weights_path, "model checkpoint")->required();
  dec->add_option("--out", out_path, "output image (binary PPM)")->required();
  dec->add_option("--mask-out", mask_out_path,
                  "also write the embedded mask (binary PGM)");

  auto* trn = app.add_subcommand("train", "Train on the synthetic corpus");
  trn->add_option("--config", config_path, "training config file")->required();
  trn->add_option("--out", out_path, "output checkpoint path")->required();
  trn->add_option("--seed", seed, "override the config seed");

  auto* evl = app.add_subcommand("eval", "Evaluate bpp over ppm+pgm pairs");
  evl->add_option("dir", dir_path, "directory of paired .ppm/.pgm files")
      ->required();
  evl->add_option("--weights", weights_path, "model checkpoint")->required();
  evl->add_flag("--roi", roi, "evaluate in ROI mode");

  auto* abl = app.add_subcommand("ablate", "Run the ablation grid");
  abl->add_option("--config", config_path, "training config file")->required();
  abl->add_option("--out", out_path, "also write the arm table as CSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (enc->parsed())
      return cmd_encode(image_path, mask_path, weights_path, out_path, roi);
    if (dec->parsed())
      return cmd_decode(stream_path, weights_path, out_path, mask_out_path);
    if (trn->parsed()) return cmd_train(config_path, out_path, seed);
    if (evl->parsed()) return cmd_eval(dir_path, weights_path, roi);
    if (abl->parsed()) return cmd_ablate(config_path, out_path);
  } catch (const ValidationError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const ContractError& e) {
    std::cerr << "validation error: " << e.what() << "\n";
    return 1;
  } catch (const StreamError& e) {
    std::cerr << "stream error: " << e.what() << "\n";
    return 1;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return 3;
  }
  return 3;
}
