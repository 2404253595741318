#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "disentangle/checkpoint.hpp"
#include "disentangle/data.hpp"
#include "disentangle/nn.hpp"
#include "disentangle/optim.hpp"

namespace disentangle {

struct TrainConfig {
  double lambda = 0.01;
  std::size_t epochs = 400;
  std::size_t batch_size = 50;
  std::size_t adv_steps_per_main = 5;
  AdamOptions adam{};
  MomentumOptions momentum{};
  double l2_scale = 1e-5;
  std::uint64_t seed = 1;
  /// false reproduces the baseline: no adversary steps and no lambda term.
  bool adversarial_enabled = true;
  /// Reuse the main step's batch for every adversary step of an iteration.
  bool reuse_batch = false;
  bool augment_flip = true;
  /// Verify the parameter partition after every step (bitwise snapshots).
  bool check_partition = false;

  void validate() const;
};

struct LossComponents {
  double l_a = 0.0;
  double l_b = 0.0;
  double l_a_adv = 0.0;
  double l_b_adv = 0.0;
  double l2 = 0.0;
  /// main step: L_A + L_B - lambda (L_A^adv + L_B^adv) + L2 over theta/phi weights
  /// adversary step: L_A^adv + L_B^adv + L2 over psi weights
  double objective = 0.0;
};

struct IterationRecord {
  std::size_t iter = 0;
  std::size_t epoch = 0;
  LossComponents main;
  /// Mean adversary objective over this iteration's adversary steps.
  std::optional<double> adversary_objective;
  double wall_seconds = 0.0;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double mean_classification_loss = 0.0;  // mean of L_A + L_B over the epoch
  double val_acc_a = 0.0;
  double val_acc_b = 0.0;
  bool best = false;
};

struct TrainLog {
  std::vector<IterationRecord> iterations;
  std::vector<EpochRecord> epochs;
  std::size_t main_steps = 0;
  std::size_t adversary_steps = 0;
  std::size_t partition_violations = 0;
};

std::string to_json_line(const IterationRecord& r);
std::string to_json_line(const EpochRecord& r);

struct Objective {
  Tensor value;  // shape [1], on the tape it was built with
  LossComponents parts;
};

/// L_A + L_B - lambda (L_A^adv + L_B^adv) + L2 over theta/phi weights. With
/// the adversary disabled the lambda term is dropped and the adversarial
/// losses are reported from detached features.
Objective main_objective(Tape& tape, const DisentangleModel& model, const Batch& batch, const TrainConfig& cfg);

/// L_A^adv + L_B^adv + L2 over psi weights; the encoders run untracked.
Objective adversary_objective(Tape& tape, const DisentangleModel& model, const Batch& batch, const TrainConfig& cfg);

/// Owns the two optimizers and performs the alternating updates.
class Trainer {
 public:
  Trainer(DisentangleModel& model, TrainConfig config);

  /// One update of theta_A, theta_B, phi_A, phi_B with Adam. psi is untouched.
  LossComponents main_step(const Batch& batch);
  /// One update of psi_A, psi_B with momentum SGD. theta and phi are untouched.
  LossComponents adversary_step(const Batch& batch);

  const TrainConfig& config() const { return config_; }
  const Adam& adam() const { return adam_; }
  const MomentumSgd& sgd() const { return sgd_; }
  std::size_t partition_violations() const { return violations_; }

  void save_state(Checkpoint& ckpt) const;
  void load_state(const Checkpoint& ckpt);

 private:
  DisentangleModel& model_;
  TrainConfig config_;
  std::vector<NamedTensor> main_params_, adv_params_;
  Adam adam_;
  MomentumSgd sgd_;
  std::size_t violations_ = 0;
};

struct TrainOptions {
  /// When set, best.ckpt (on every validation improvement) and final.ckpt
  /// are written here.
  std::optional<std::filesystem::path> checkpoint_dir;
  /// Effective configuration text stored in checkpoint headers.
  std::string config_text;
  /// Continue from a checkpoint written by a previous train() call.
  const Checkpoint* resume = nullptr;
  std::function<void(const IterationRecord&)> on_iteration;
  std::function<void(const EpochRecord&)> on_epoch;
};

struct TrainResult {
  TrainLog log;
  Checkpoint final_checkpoint;
  Checkpoint best_checkpoint;
};

/// Per iteration: one main step, then adv_steps_per_main adversary steps on
/// batches from an independently shuffled stream over the same data. Per
/// epoch: one pass of main-step batches and a validation pass; the best
/// checkpoint maximizes the mean of the two relevant validation accuracies.
TrainResult train(DisentangleModel& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const TrainOptions& options = {});

}  // namespace disentangle
