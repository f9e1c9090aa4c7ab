#pragma once

// Three-stage training (SISR pretraining, RegNet pretraining on shifted
// feature maps, end-to-end) and sliding-window inference over whole scenes.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "deepsum/adam.hpp"
#include "deepsum/datagen.hpp"
#include "deepsum/model.hpp"
#include "deepsum/scene.hpp"

namespace deepsum {

enum class Stage { SisrPretrain, RegnetPretrain, EndToEnd };

/// "sisr_pretrain", "regnet_pretrain", "end_to_end".
const char* stage_name(Stage stage);
/// Accepts the stage names and the short forms sisr, regnet, e2e.
Stage parse_stage(const std::string& text);

struct TrainConfig {
  Stage stage = Stage::SisrPretrain;
  std::size_t epochs = 50;
  std::size_t batch_size = 8;
  AdamConfig adam;
  int d = 3;
  std::uint64_t seed = 1;
  std::size_t validate_every = 5;
  std::size_t patience = 10;  // consecutive worse validations before stopping
  bool use_regnet = true;     // false trains the no-RegNet ablation end to end
  std::size_t start_epoch = 0;
  /// Learning rate decays along a cosine to this fraction of adam.learning_rate
  /// over the epochs of one run; 1 keeps it constant.
  double final_lr_fraction = 1.0;

  /// Throws ConfigError.
  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  Stage stage = Stage::SisrPretrain;
  double loss = 0.0;
  double validation = 0.0;  // mPSNR (dB), or accuracy for RegNet; NaN if not evaluated
  double wall_seconds = 0.0;
};

/// "epoch=<n> stage=<name> loss=<l> val=<v> wall_s=<t>"
std::string log_line(const EpochRecord& record);

using EpochSink = std::function<void(const EpochRecord&)>;

struct TrainResult {
  std::vector<EpochRecord> history;
  double best_validation = 0.0;
  std::size_t best_epoch = 0;
  bool stopped_early = false;
};

/// Mean and standard deviation of HR minus the reliable-mean ILR over
/// clear HR pixels of the samples.
std::pair<double, double> residual_statistics(const std::vector<PatchSample>& samples);

/// Trains "sisr/" (features and projection) on single-image samples, one
/// image per patch per epoch. With start_epoch 0 the residual statistics are
/// set from train first. Leaves params at the best validation mPSNR.
TrainResult pretrain_sisr(ModelParams& params, const std::vector<PatchSample>& train,
                          const std::vector<PatchSample>& validation, const TrainConfig& cfg,
                          const EpochSink& sink = {});
/// SISR output of the clearest image of each sample: mean corrected loss
/// and mean mPSNR.
double sisr_validation_loss(const ModelParams& params, const std::vector<PatchSample>& samples, int d);
double sisr_validation_mpsnr(const ModelParams& params, const std::vector<PatchSample>& samples, int d);

/// count labels covering every class equally (remainder spread over the
/// first classes), shuffled.
std::vector<std::size_t> balanced_labels(std::size_t count, std::size_t classes, std::mt19937_64& rng);

/// Stack [1 + labels.size(), H, W, F] from one feature map [1, H, W, F]:
/// item 0 is the map itself, item i a copy translated (edge replication) so
/// that the aligning filter is the delta of class labels[i-1].
Tensor shifted_feature_stack(const Tensor& base, const std::vector<std::size_t>& labels, std::size_t k);

/// Trains "regnet/" with cross-entropy on frozen SISR features: each sample
/// takes the feature map of one randomly chosen image of a patch and pairs
/// it with shifted copies at balanced random classes. Validation is
/// held-out accuracy on the clearest image of each sample, labels drawn from
/// a fixed seed.
TrainResult pretrain_regnet(ModelParams& params, const std::vector<PatchSample>& train,
                            const std::vector<PatchSample>& validation, const TrainConfig& cfg,
                            const EpochSink& sink = {});
double regnet_accuracy(const ModelParams& params, const std::vector<PatchSample>& samples, std::uint64_t seed);

/// Joint training with the corrected loss (all subnetworks, or SISRNet and
/// FusionNet only without RegNet). Validation mPSNR every validate_every
/// epochs; params end at the best validation.
TrainResult train_end_to_end(ModelParams& params, const std::vector<PatchSample>& train,
                             const std::vector<PatchSample>& validation, const TrainConfig& cfg,
                             const EpochSink& sink = {});
double deepsum_validation_mpsnr(const ModelParams& params, const std::vector<PatchSample>& samples, int d,
                                bool use_regnet);

struct SlidingConfig {
  std::size_t num_estimates = 5;
  void validate() const;
};

/// Registers the scene, keeps the clearest image as reference of every
/// window, and averages the SR of min(num_estimates, M - N + 1) windows
/// over the remaining images in clearest-first order. Throws DataError when
/// the scene has fewer images than the model takes.
Image sliding_window_infer(const Scene& scene, const ModelParams& params, const SlidingConfig& cfg,
                           bool use_regnet = true);

}  // namespace deepsum
