#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <span>
#include <vector>

#include "myoreg/mechanics.hpp"
#include "myoreg/model.hpp"
#include "myoreg/volume.hpp"

namespace myoreg {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct TrainConfig {
  double mu = 5e-6;       // regularization weight
  double lambda = 1e5;    // volume penalty
  double learning_rate = 1e-3;
  int iterations = 20000;
  int similarity_batch = 1000;
  int reg_batch = 1000;
  std::uint64_t seed = 0;
  AdamConfig adam;
  int history_every = 100;
  int chunk_size = 64;  // fixed gradient-reduction granularity
  int threads = 1;

  void validate() const;
};

// Voxel samples for one loss evaluation (linear indices into the grid).
struct CollocationBatch {
  std::vector<std::size_t> similarity_voxels;
  std::vector<std::size_t> reg_voxels;
};

struct LossBreakdown {
  double total = 0.0;
  double similarity = 0.0;
  double regularization = 0.0;  // mean W before the mu factor
  int inversions = 0;
};

struct LossAndGradient {
  LossBreakdown loss;
  std::vector<double> gradient;
};

// Mask voxel indices of the reference frame; ConfigError when empty.
std::vector<std::size_t> mask_voxels(const CineSequence& seq);

// Uniform draws with replacement: similarity over all voxels, regularization
// over LV-mask voxels.
CollocationBatch draw_batch(const CineSequence& seq, std::span<const std::size_t> mask_voxels,
                            const TrainConfig& config, std::mt19937_64& rng);

// Mean smoothed-L1 similarity + mu * mean neo-Hookean energy, batched path.
LossAndGradient loss(const DeformationModel& model, const CineSequence& seq, int frame_index,
                     const CollocationBatch& batch, const TrainConfig& config);

// Same loss on the scalar tape; reference route for loss().
LossAndGradient loss_tape(const DeformationModel& model, const CineSequence& seq, int frame_index,
                          const CollocationBatch& batch, const TrainConfig& config);

// Loss value only (double precision), for finite-difference checks.
LossBreakdown loss_value(const DeformationModel& model, const CineSequence& seq, int frame_index,
                         const CollocationBatch& batch, const TrainConfig& config);

struct AdamState {
  std::vector<double> m;
  std::vector<double> v;
  long step = 0;
};

// Adam with bias correction. Throws TrainingError on a non-finite gradient.
void adam_step(std::span<double> params, std::span<const double> grads, AdamState& state, double learning_rate,
               const AdamConfig& adam);

class TrainingError : public std::runtime_error {
 public:
  TrainingError(const std::string& what, Parameters last_good, long iteration)
      : std::runtime_error(what), last_good_(std::move(last_good)), iteration_(iteration) {}
  const Parameters& last_good() const { return last_good_; }
  long iteration() const { return iteration_; }

 private:
  Parameters last_good_;
  long iteration_;
};

struct HistoryEntry {
  int iteration = 0;  // last iteration of the window
  double total = 0.0;  // window means
  double similarity = 0.0;
  double regularization = 0.0;
  int inversions = 0;  // window sum
};

struct TrainingHistory {
  std::vector<HistoryEntry> entries;
};

struct TrainResult {
  DeformationModel model;
  TrainingHistory history;
};

using ProgressCallback = std::function<void(const HistoryEntry&)>;

// Draws a frame uniformly (reference included) and fresh collocation batches
// every iteration, then takes one Adam step.
TrainResult train(const NetworkConfig& network, const CineSequence& seq, const TrainConfig& config,
                  const ProgressCallback& progress = {});

}  // namespace myoreg
