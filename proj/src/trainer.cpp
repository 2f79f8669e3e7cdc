#include "seec/trainer.hpp"

#include <algorithm>
#include <functional>
#include <cmath>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>

#include "seec/kernels.hpp"
#include "seec/maskio.hpp"

namespace seec::trainer {

void TrainConfig::validate() const {
  model.validate();
  if (!(batch_size >= 1 && patch_size >= 16 && epochs >= 0 && lr > 0 &&
        lr_decay > 0 && lr_decay <= 1 && lr_patience >= 1 &&
        corpus_images >= 2 && corpus_size >= 16 && val_images >= 1 &&
        val_images < corpus_images && max_steps >= 0))
    throw ValidationError("invalid training configuration value");
  if (patch_size % 16 != 0 || corpus_size % 16 != 0)
    throw ValidationError("patch and corpus sizes must be multiples of 16");
  if (patch_size > corpus_size)
    throw ValidationError("patch size exceeds corpus image size");
}

// --------------------------------------------------------------------------
// config parsing
// --------------------------------------------------------------------------

TrainConfig parse_config_text(const std::string& text) {
  TrainConfig cfg;
  std::map<std::string, std::function<void(const std::string&)>> setters;
  auto set_int = [](int& field) {
    return [&field](const std::string& v) { field = std::stoi(v); };
  };
  auto set_u64 = [](std::uint64_t& field) {
    return [&field](const std::string& v) { field = std::stoull(v); };
  };
  auto set_double = [](double& field) {
    return [&field](const std::string& v) { field = std::stod(v); };
  };
  auto set_bool = [](bool& field) {
    return [&field](const std::string& v) {
      if (v == "true" || v == "1") field = true;
      else if (v == "false" || v == "0") field = false;
      else throw ValidationError("boolean expected, got: " + v);
    };
  };
  setters["K"] = set_int(cfg.model.K);
  setters["N"] = set_int(cfg.model.N);
  setters["cy"] = set_int(cfg.model.cy);
  setters["cz"] = set_int(cfg.model.cz);
  setters["cf"] = set_int(cfg.model.cf);
  setters["cctx"] = set_int(cfg.model.cctx);
  setters["chead"] = set_int(cfg.model.chead);
  setters["channel_specific_weights"] =
      set_bool(cfg.model.channel_specific_weights);
  setters["single_head"] = set_bool(cfg.model.single_head);
  setters["batch_size"] = set_int(cfg.batch_size);
  setters["patch_size"] = set_int(cfg.patch_size);
  setters["lr"] = set_double(cfg.lr);
  setters["lr_decay"] = set_double(cfg.lr_decay);
  setters["lr_patience"] = set_int(cfg.lr_patience);
  setters["epochs"] = set_int(cfg.epochs);
  setters["seed"] = set_u64(cfg.seed);
  setters["corpus_images"] = set_int(cfg.corpus_images);
  setters["corpus_size"] = set_int(cfg.corpus_size);
  setters["val_images"] = set_int(cfg.val_images);
  setters["max_steps"] = set_int(cfg.max_steps);
  setters["log_every"] = set_int(cfg.log_every);

  std::istringstream in(text);
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::size_t hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    auto trim = [](std::string s) {
      std::size_t a = s.find_first_not_of(" \t\r");
      if (a == std::string::npos) return std::string();
      std::size_t b = s.find_last_not_of(" \t\r");
      return s.substr(a, b - a + 1);
    };
    std::string stripped = trim(line);
    if (stripped.empty()) continue;
    std::size_t eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ValidationError("config line " + std::to_string(lineno) +
                            ": expected key = value");
    std::string key = trim(stripped.substr(0, eq));
    std::string value = trim(stripped.substr(eq + 1));
    auto it = setters.find(key);
    if (it == setters.end())
      throw ValidationError("config line " + std::to_string(lineno) +
                            ": unknown key '" + key + "'");
    try {
      it->second(value);
    } catch (const ValidationError&) {
      throw;
    } catch (const std::exception&) {
      throw ValidationError("config line " + std::to_string(lineno) +
                            ": bad value for '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config " + path);
  std::ostringstream ss;
  ss << f.rdbuf();
  return parse_config_text(ss.str());
}

// --------------------------------------------------------------------------
// synthetic corpus
// --------------------------------------------------------------------------

namespace {

// Marsaglia polar Gaussian built on deterministic log/sqrt.
class GaussDraw {
 public:
  explicit GaussDraw(std::mt19937_64& rng) : rng_(rng) {}
  double operator()() {
    if (have_) {
      have_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = uniform_range(rng_, -1.0, 1.0);
      v = uniform_range(rng_, -1.0, 1.0);
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    double m = std::sqrt(-2.0 * kern::det_log(s) / s);
    spare_ = v * m;
    have_ = true;
    return u * m;
  }

 private:
  std::mt19937_64& rng_;
  double spare_ = 0;
  bool have_ = false;
};

std::uint8_t clamp_u8(double v) {
  if (v < 0) return 0;
  if (v > 255) return 255;
  return static_cast<std::uint8_t>(v + 0.5);
}

MaskMap random_region_mask(int size, std::mt19937_64& rng) {
  MaskMap mask(size, size, 2);
  if ((rng() & 1) == 0) {
    // Union of a few ellipse blobs.
    int blobs = 1 + static_cast<int>(rng() % 3);
    std::vector<double> cx(blobs), cy(blobs), rx(blobs), ry(blobs);
    for (int b = 0; b < blobs; ++b) {
      cx[b] = uniform_range(rng, 0.15, 0.85) * size;
      cy[b] = uniform_range(rng, 0.15, 0.85) * size;
      rx[b] = uniform_range(rng, 0.12, 0.33) * size;
      ry[b] = uniform_range(rng, 0.12, 0.33) * size;
    }
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        bool inside = false;
        for (int b = 0; b < blobs && !inside; ++b) {
          double dx = (x - cx[b]) / rx[b], dy = (y - cy[b]) / ry[b];
          inside = dx * dx + dy * dy <= 1.0;
        }
        mask.at(y, x) = inside ? 1 : 0;
      }
  } else {
    // Tilted half-plane.
    double angle = uniform_range(rng, 0.0, 6.283185307179586);
    double nx = std::cos(angle), ny = std::sin(angle);
    double off = uniform_range(rng, 0.3, 0.7) * size;
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x)
        mask.at(y, x) = nx * x + ny * y >= off * (nx + ny) ? 1 : 0;
  }
  return mask;
}

}  // namespace

std::vector<SynthSample> make_synth_corpus(int count, int size,
                                           std::uint64_t seed) {
  SEEC_CHECK(count >= 1 && size >= 16);
  std::vector<SynthSample> corpus;
  corpus.reserve(count);
  std::mt19937_64 rng(seed);
  for (int i = 0; i < count; ++i) {
    SynthSample s;
    s.mask = random_region_mask(size, rng);
    s.image = ImageU8(size, size);
    GaussDraw gauss(rng);
    // Class 0: smooth per-image gradient plus sigma=2 noise.
    double base[3], gx[3], gy[3];
    for (int c = 0; c < 3; ++c) {
      base[c] = uniform_range(rng, 60.0, 200.0);
      gx[c] = uniform_range(rng, -1.2, 1.2);
      gy[c] = uniform_range(rng, -1.2, 1.2);
    }
    // Class 1: per-image color shift with a sigma=40 high-frequency
    // texture whose channels are strongly coupled (green counter-moves
    // with red, blue tracks red), plus a small independent residual. The
    // coupling is what the channel-autoregressive means can exploit.
    double shift[3];
    for (int c = 0; c < 3; ++c) shift[c] = uniform_range(rng, 60.0, 200.0);
    for (int y = 0; y < size; ++y)
      for (int x = 0; x < size; ++x) {
        if (s.mask.at(y, x) == 0) {
          for (int c = 0; c < 3; ++c)
            s.image.at(y, x, c) =
                clamp_u8(base[c] + gx[c] * x + gy[c] * y + 2.0 * gauss());
        } else {
          double t = 40.0 * gauss();
          s.image.at(y, x, 0) = clamp_u8(shift[0] + t + 8.0 * gauss());
          s.image.at(y, x, 1) = clamp_u8(shift[1] - 0.6 * t + 8.0 * gauss());
          s.image.at(y, x, 2) = clamp_u8(shift[2] + 0.6 * t + 8.0 * gauss());
        }
      }
    corpus.push_back(std::move(s));
  }
  return corpus;
}

// --------------------------------------------------------------------------
// losses
// --------------------------------------------------------------------------

namespace {

LossTerms image_loss(container::SeecModel& model, const ImageU8& img,
                     const MaskMap& mask, std::mt19937_64* noise_rng,
                     bool backprop, double grad_scale) {
  nd::Tape tape;
  nd::Tape* tp = backprop ? &tape : nullptr;
  nd::Tensor x_norm = smem::image_to_norm_tensor(img);
  nd::Tensor x_u8 = smem::image_to_u8_tensor(img);
  nd::Tensor mask_ids = smem::mask_to_tensor(mask);

  nd::Tensor y = model.latent->analyze(x_norm, tp);
  nd::Tensor y_q, z_q;
  if (noise_rng) {
    y_q = nd::quantize_noise(y, *noise_rng, tp);
    z_q = nd::quantize_noise(model.latent->hyper_analyze(y_q, tp),
                             *noise_rng, tp);
  } else {
    y_q = model.latent->clamp_round(y);
    z_q = model.latent->clamp_round(model.latent->hyper_analyze(y_q));
  }
  nd::Tensor hs =
      model.latent->hyper_synthesize(z_q, y.dim(2), y.dim(3), tp);
  nd::Tensor mu = sic::LatentCodec::gauss_mu(hs, tp);
  nd::Tensor sigma = sic::LatentCodec::gauss_sigma(hs, tp);
  nd::Tensor ry = model.latent->y_rate_bits(y_q, mu, sigma, tp);
  nd::Tensor rz = model.latent->z_rate_bits(z_q, tp);

  nd::Tensor f = model.latent->synthesize(y_q, tp);
  nd::Tensor cx = model.pixel->context_features(x_norm, tp);
  nd::Tensor fs = model.pixel->fuse(f, cx, tp);
  nd::Tensor bits_map = model.pixel->nll_bits_map(x_u8, fs, mask_ids, tp);
  nd::Tensor rp = nd::reduce_sum(bits_map, tp);

  LossTerms terms;
  terms.y_bits = ry.item();
  terms.z_bits = rz.item();
  terms.pixel_bits = rp.item();
  terms.pixels = static_cast<std::size_t>(img.width) * img.height;
  if (!std::isfinite(terms.total_bits()))
    throw ValidationError("non-finite loss encountered");

  if (backprop) {
    nd::Tensor total = nd::add(nd::add(ry, rz, tp), rp, tp);
    nd::Tensor scaled = nd::mul_scalar(total, grad_scale, tp);
    tape.backward(scaled);
  }
  return terms;
}

ImageU8 crop_patch(const ImageU8& img, int size, int oy, int ox) {
  ImageU8 out(size, size);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x)
      for (int c = 0; c < 3; ++c)
        out.at(y, x, c) = img.at(oy + y, ox + x, c);
  return out;
}

MaskMap crop_mask(const MaskMap& mask, int size, int oy, int ox) {
  MaskMap out(size, size, mask.num_classes);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) out.at(y, x) = mask.at(oy + y, ox + x);
  return out;
}

}  // namespace

LossTerms batch_loss(container::SeecModel& model,
                     const std::vector<const SynthSample*>& batch,
                     std::mt19937_64& noise_rng, bool backprop) {
  SEEC_CHECK(!batch.empty());
  LossTerms acc;
  std::size_t total_px = 0;
  for (const SynthSample* s : batch)
    total_px += static_cast<std::size_t>(s->image.width) * s->image.height;
  double scale = 1.0 / static_cast<double>(total_px);
  for (const SynthSample* s : batch) {
    LossTerms t =
        image_loss(model, s->image, s->mask, &noise_rng, backprop, scale);
    acc.y_bits += t.y_bits;
    acc.z_bits += t.z_bits;
    acc.pixel_bits += t.pixel_bits;
    acc.pixels += t.pixels;
  }
  return acc;
}

LossTerms eval_loss(const container::SeecModel& model,
                    const SynthSample& sample) {
  auto& m = const_cast<container::SeecModel&>(model);
  return image_loss(m, sample.image, sample.mask, nullptr, false, 1.0);
}

double eval_nll_bpp(const container::SeecModel& model,
                    const std::vector<SynthSample>& samples,
                    MaskVariant variant, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  double bits = 0;
  std::size_t pixels = 0;
  for (const auto& s : samples) {
    MaskMap mask = s.mask;
    if (variant == MaskVariant::inverted) {
      SEEC_CHECK_MSG(mask.num_classes == 2,
                     "inverted masks require two classes");
      for (auto& id : mask.ids) id = static_cast<std::uint8_t>(1 - id);
    } else if (variant == MaskVariant::random_mask) {
      mask = random_region_mask(mask.width, rng);
    }
    auto& m = const_cast<container::SeecModel&>(model);
    LossTerms t = image_loss(m, s.image, mask, nullptr, false, 1.0);
    bits += t.total_bits();
    pixels += t.pixels;
  }
  return bits / static_cast<double>(pixels);
}

// --------------------------------------------------------------------------
// Adam + training loop
// --------------------------------------------------------------------------

namespace {

class Adam {
 public:
  Adam(ParamStore& store, double lr) : store_(store), lr_(lr) {
    for (auto& [name, t] : store.items())
      if (t.requires_grad()) {
        slots_.push_back({t, std::vector<double>(t.size(), 0.0),
                          std::vector<double>(t.size(), 0.0)});
      }
  }

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(kBeta1, t_);
    double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (auto& s : slots_) {
      double* theta = s.param.data();
      const auto& grad = s.param.grad_values();
      for (std::size_t i = 0; i < grad.size(); ++i) {
        double g = grad[i];
        s.m[i] = kBeta1 * s.m[i] + (1.0 - kBeta1) * g;
        s.v[i] = kBeta2 * s.v[i] + (1.0 - kBeta2) * g * g;
        double mh = s.m[i] / bc1;
        double vh = s.v[i] / bc2;
        theta[i] -= lr_ * mh / (std::sqrt(vh) + kEps);
      }
      s.param.zero_grad();
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;
  struct Slot {
    nd::Tensor param;
    std::vector<double> m, v;
  };
  ParamStore& store_;
  std::vector<Slot> slots_;
  double lr_;
  std::uint64_t t_ = 0;
};

double validation_bpp(const container::SeecModel& model,
                      const std::vector<SynthSample>& corpus, int val_images) {
  double bits = 0;
  std::size_t pixels = 0;
  std::size_t start = corpus.size() - static_cast<std::size_t>(val_images);
  for (std::size_t i = start; i < corpus.size(); ++i) {
    LossTerms t = eval_loss(model, corpus[i]);
    bits += t.total_bits();
    pixels += t.pixels;
  }
  return bits / static_cast<double>(pixels);
}

}  // namespace

TrainResult train(container::SeecModel& model, const TrainConfig& cfg,
                  const std::vector<SynthSample>& corpus,
                  std::ostream* progress) {
  cfg.validate();
  SEEC_CHECK_MSG(static_cast<int>(corpus.size()) > cfg.val_images,
                 "corpus smaller than validation split");
  const std::size_t train_count = corpus.size() - cfg.val_images;

  std::mt19937_64 order_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::mt19937_64 noise_rng(cfg.seed ^ 0x6a09e667f3bcc909ULL);
  std::mt19937_64 crop_rng(cfg.seed ^ 0xbb67ae8584caa73bULL);

  Adam adam(model.store, cfg.lr);
  model.store.zero_grads();

  TrainResult result;
  double init_loss = -1.0;
  int divergent_streak = 0;
  double best_val = 1e300;
  std::vector<std::uint8_t> best_bytes;
  int stale_epochs = 0;
  bool stop = false;

  std::vector<std::size_t> order(train_count);
  for (std::size_t i = 0; i < train_count; ++i) order[i] = i;

  for (int epoch = 0; epoch < cfg.epochs && !stop; ++epoch) {
    // Deterministic shuffle.
    for (std::size_t i = train_count; i > 1; --i) {
      std::size_t j = order_rng() % i;
      std::swap(order[i - 1], order[j]);
    }
    double epoch_bits = 0;
    std::size_t epoch_pixels = 0;
    for (std::size_t at = 0; at + cfg.batch_size <= train_count && !stop;
         at += cfg.batch_size) {
      // Assemble the batch, cropping patches when configured smaller than
      // the corpus images.
      std::vector<SynthSample> patches;
      std::vector<const SynthSample*> batch;
      patches.reserve(cfg.batch_size);
      for (int b = 0; b < cfg.batch_size; ++b) {
        const SynthSample& s = corpus[order[at + b]];
        if (cfg.patch_size < cfg.corpus_size) {
          int oy = static_cast<int>(crop_rng() %
                                    (cfg.corpus_size - cfg.patch_size + 1));
          int ox = static_cast<int>(crop_rng() %
                                    (cfg.corpus_size - cfg.patch_size + 1));
          patches.push_back({crop_patch(s.image, cfg.patch_size, oy, ox),
                             crop_mask(s.mask, cfg.patch_size, oy, ox)});
        } else {
          patches.push_back(s);
        }
      }
      for (const auto& p : patches) batch.push_back(&p);

      LossTerms terms = batch_loss(model, batch, noise_rng, true);
      adam.step();
      ++result.steps;
      double bpp = terms.bpp();
      epoch_bits += terms.total_bits();
      epoch_pixels += terms.pixels;

      if (init_loss < 0) init_loss = bpp;
      if (bpp > 2.0 * init_loss) {
        if (++divergent_streak >= 50)
          throw ValidationError(
              "training diverged: loss above twice the initial value for 50 "
              "steps");
      } else {
        divergent_streak = 0;
      }
      if (progress && cfg.log_every > 0 &&
          result.steps % cfg.log_every == 0) {
        *progress << "step=" << result.steps << " bpp=" << bpp
                  << " y=" << terms.y_bits / terms.pixels
                  << " z=" << terms.z_bits / terms.pixels
                  << " pixel=" << terms.pixel_bits / terms.pixels
                  << " lr=" << adam.lr() << "\n";
      }
      if (cfg.max_steps > 0 && result.steps >= cfg.max_steps) stop = true;
    }
    if (epoch_pixels > 0)
      result.epoch_train_bpp.push_back(epoch_bits /
                                       static_cast<double>(epoch_pixels));

    double val = validation_bpp(model, corpus, cfg.val_images);
    result.epoch_val_bpp.push_back(val);
    if (progress)
      *progress << "epoch=" << epoch << " val_bpp=" << val
                << " best=" << std::min(val, best_val) << "\n";
    if (val < best_val) {
      best_val = val;
      best_bytes = serialize_params(model.store);
      stale_epochs = 0;
    } else if (++stale_epochs >= cfg.lr_patience) {
      adam.set_lr(adam.lr() * cfg.lr_decay);
      ++result.lr_decays;
      stale_epochs = 0;
    }
  }

  if (!best_bytes.empty()) {
    deserialize_params(best_bytes, model.store);
    result.best_val_bpp = best_val;
  } else {
    result.best_val_bpp = validation_bpp(model, corpus, cfg.val_images);
  }
  return result;
}

// --------------------------------------------------------------------------
// ablation
// --------------------------------------------------------------------------

int matched_single_head_hidden(const sic::ModelConfig& cfg) {
  // Multi-head parameters: N heads of (cctx -> h -> out). The single-head
  // baseline widens h' to match the total within 5%.
  dlm::HeadLayout lay{cfg.K, cfg.channel_specific_weights};
  long out = lay.channels();
  long h = cfg.chead;
  long multi = static_cast<long>(cfg.N) *
               (cfg.cctx * h + h + h * out + out);
  long hidden = (multi - out) / (cfg.cctx + 1 + out);
  return static_cast<int>(std::max(1L, hidden));
}

AblationReport ablate(const TrainConfig& base, std::ostream* progress) {
  base.validate();
  AblationReport report;
  std::vector<SynthSample> corpus =
      make_synth_corpus(base.corpus_images, base.corpus_size, base.seed);

  const bool arm_flags[4][2] = {
      {true, true}, {true, false}, {false, true}, {false, false}};
  for (const auto& flags : arm_flags) {
    bool smem_on = flags[0], mcdlm_on = flags[1];
    TrainConfig cfg = base;
    cfg.model.single_head = !smem_on;
    cfg.model.channel_specific_weights = mcdlm_on;
    int head_hidden =
        smem_on ? 0 : matched_single_head_hidden(cfg.model);
    container::SeecModel model =
        container::SeecModel::create(cfg.model, cfg.seed, head_hidden);
    if (progress)
      *progress << "arm smem=" << (smem_on ? "on" : "off")
                << " mcdlm=" << (mcdlm_on ? "on" : "off")
                << " params=" << model.store.total_values() << "\n";
    if (smem_on && mcdlm_on)
      report.param_count_multi = model.store.total_values();
    if (!smem_on && mcdlm_on)
      report.param_count_single = model.store.total_values();

    train(model, cfg, corpus, progress);

    AblationArm arm;
    arm.smem_on = smem_on;
    arm.mcdlm_on = mcdlm_on;
    double bits = 0;
    std::size_t pixels = 0;
    std::size_t mask_bits = 0;
    std::size_t start = corpus.size() - static_cast<std::size_t>(base.val_images);
    for (std::size_t i = start; i < corpus.size(); ++i) {
      LossTerms t = eval_loss(model, corpus[i]);
      bits += t.total_bits();
      pixels += t.pixels;
      if (smem_on)
        mask_bits += 8 * maskio::compress_mask(corpus[i].mask).size();
    }
    arm.model_bpp = bits / static_cast<double>(pixels);
    arm.mask_bpp = static_cast<double>(mask_bits) / static_cast<double>(pixels);
    report.arms.push_back(arm);

    if (smem_on && mcdlm_on) {
      std::vector<SynthSample> val(corpus.begin() + start, corpus.end());
      report.nll_correct =
          eval_nll_bpp(model, val, MaskVariant::correct);
      report.nll_random =
          eval_nll_bpp(model, val, MaskVariant::random_mask);
      report.nll_inverted =
          eval_nll_bpp(model, val, MaskVariant::inverted);
    }
  }
  return report;
}

double order0_entropy_bpp(const std::vector<SynthSample>& samples) {
  // Per-channel 256-bin histogram entropy over the whole set.
  double total_bits = 0;
  std::size_t pixels = 0;
  for (int c = 0; c < 3; ++c) {
    std::vector<std::size_t> hist(256, 0);
    std::size_t n = 0;
    for (const auto& s : samples)
      for (std::size_t i = c; i < s.image.pixels.size(); i += 3) {
        hist[s.image.pixels[i]]++;
        ++n;
      }
    double h = 0;
    for (std::size_t count : hist) {
      if (count == 0) continue;
      double p = static_cast<double>(count) / static_cast<double>(n);
      h -= p * std::log2(p);
    }
    total_bits += h * static_cast<double>(n);
    pixels = n;
  }
  return total_bits / static_cast<double>(pixels);
}

}  // namespace seec::trainer
