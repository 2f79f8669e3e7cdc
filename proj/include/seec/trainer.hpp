#pragma once

// Rate-objective training on a synthetic two-class corpus, plus the
// ablation harness (mask-gated heads on/off x channel-specific mixture
// weights on/off) and mask-sensitivity evaluation.
//
// Everything is seeded: corpus content, weight init, quantization noise,
// and batch order all derive from the config seed, so a (seed, config,
// corpus) triple determines the checkpoint bytes.

#include <iosfwd>
#include <optional>

#include "seec/container.hpp"

namespace seec::trainer {

struct TrainConfig {
  sic::ModelConfig model;
  int batch_size = 32;
  int patch_size = 64;
  double lr = 1e-4;
  double lr_decay = 0.9;
  int lr_patience = 3;  // epochs without validation improvement
  int epochs = 30;
  std::uint64_t seed = 1;
  int corpus_images = 512;
  int corpus_size = 64;  // corpus image side length
  int val_images = 64;   // tail of the corpus held out for validation
  int max_steps = 0;     // optional hard step budget (0 = epochs only)
  int log_every = 25;

  void validate() const;
};

// Strict key=value config text: '#' comments, unknown keys rejected.
TrainConfig parse_config_text(const std::string& text);
TrainConfig load_config(const std::string& path);

struct SynthSample {
  ImageU8 image;
  MaskMap mask;
};

// Two-class corpus: class 0 is a smooth per-image gradient with sigma=2
// noise, class 1 a high-variance (sigma=40) texture with per-image color
// shifts; region boundaries are random ellipses or tilted half-planes.
std::vector<SynthSample> make_synth_corpus(int count, int size,
                                           std::uint64_t seed);

struct LossTerms {
  double y_bits = 0;
  double z_bits = 0;
  double pixel_bits = 0;
  std::size_t pixels = 0;

  double total_bits() const { return y_bits + z_bits + pixel_bits; }
  double bpp() const { return total_bits() / static_cast<double>(pixels); }
};

// Noise-mode loss of one batch; gradients accumulate into the model when
// `backprop` is set. Noise draws come from `noise_rng`.
LossTerms batch_loss(container::SeecModel& model,
                     const std::vector<const SynthSample*>& batch,
                     std::mt19937_64& noise_rng, bool backprop);

// Deterministic round-mode evaluation (priors at rounded latents, true
// pixels); the validation metric.
LossTerms eval_loss(const container::SeecModel& model,
                    const SynthSample& sample);

enum class MaskVariant { correct, random_mask, inverted };
// Round-mode NLL (bpp) over a sample set with a mask variant applied at
// evaluation time. Random masks are seeded per image and differ from the
// true ones; inverted masks flip the two classes.
double eval_nll_bpp(const container::SeecModel& model,
                    const std::vector<SynthSample>& samples,
                    MaskVariant variant, std::uint64_t seed = 7777);

struct TrainResult {
  double best_val_bpp = 0;
  int steps = 0;
  int lr_decays = 0;
  std::vector<double> epoch_train_bpp;
  std::vector<double> epoch_val_bpp;
};

// Adam with plateau LR decay and best-validation checkpointing; the model
// holds the best-validation weights on return. Throws ValidationError on
// divergence (loss above twice the initial loss for 50 consecutive steps).
TrainResult train(container::SeecModel& model, const TrainConfig& cfg,
                  const std::vector<SynthSample>& corpus,
                  std::ostream* progress);

// Hidden width for the parameter-matched single-head baseline.
int matched_single_head_hidden(const sic::ModelConfig& cfg);

struct AblationArm {
  bool smem_on = false;
  bool mcdlm_on = false;
  double model_bpp = 0;  // round-mode (Ry+Rz+Rpixel)/pixels on validation
  double mask_bpp = 0;   // compressed mask cost, 0 for single-head arms
  double total_bpp() const { return model_bpp + mask_bpp; }
};

struct AblationReport {
  std::vector<AblationArm> arms;  // (on,on), (on,off), (off,on), (off,off)
  double nll_correct = 0;
  double nll_random = 0;
  double nll_inverted = 0;
  std::size_t param_count_multi = 0;
  std::size_t param_count_single = 0;
};

// Trains all four arms with identical corpus, seeds, and step budget, then
// evaluates mask variants on the full model.
AblationReport ablate(const TrainConfig& base, std::ostream* progress);

// Order-0 oracle: per-pixel histogram entropy of a sample set in bpp.
double order0_entropy_bpp(const std::vector<SynthSample>& samples);

}  // namespace seec::trainer
