#include "disentangle/trainer.hpp"

#include <chrono>
#include <cstring>
#include <json.hpp>
#include <sstream>

#include "disentangle/error.hpp"
#include "disentangle/eval.hpp"
#include "disentangle/hash.hpp"
#include "disentangle/ops.hpp"

namespace disentangle {
namespace {

// stream tags for derive_seed
constexpr std::uint64_t kMainShuffle = 1, kAdvShuffle = 2, kMainFlip = 3, kAdvFlip = 4;

bool bitwise_equal(const std::vector<NamedTensor>& params, const std::vector<std::vector<double>>& before) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto v = params[i].tensor.values();
    if (std::memcmp(v.data(), before[i].data(), before[i].size() * sizeof(double)) != 0) return false;
  }
  return true;
}

void zero_grads(std::vector<NamedTensor>& params) {
  for (auto& p : params) p.tensor.zero_grad();
}

std::string describe(const LossComponents& c) {
  std::ostringstream s;
  s << "L_A=" << c.l_a << " L_B=" << c.l_b << " L_A_adv=" << c.l_a_adv << " L_B_adv=" << c.l_b_adv;
  return s.str();
}

}  // namespace

void TrainConfig::validate() const {
  if (!(lambda >= 0.0)) throw ConfigError("train.lambda must be >= 0");
  if (epochs < 1) throw ConfigError("train.epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
  if (!(l2_scale >= 0.0)) throw ConfigError("train.l2_scale must be >= 0");
  if (!(adam.learning_rate > 0.0) || !(momentum.learning_rate > 0.0)) throw ConfigError("learning rates must be positive");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0)) {
    throw ConfigError("train.adam_beta1/adam_beta2 must lie in [0,1)");
  }
  if (!(adam.epsilon > 0.0)) throw ConfigError("train.adam_epsilon must be positive");
  if (!(momentum.momentum >= 0.0 && momentum.momentum < 1.0)) throw ConfigError("train.sgd_momentum must lie in [0,1)");
}

std::string to_json_line(const IterationRecord& r) {
  nlohmann::ordered_json j;
  j["type"] = "iter";
  j["iter"] = r.iter;
  j["epoch"] = r.epoch;
  j["L_A"] = r.main.l_a;
  j["L_B"] = r.main.l_b;
  j["L_A_adv"] = r.main.l_a_adv;
  j["L_B_adv"] = r.main.l_b_adv;
  j["J"] = r.main.objective;
  j["L2"] = r.main.l2;
  if (r.adversary_objective) j["adv_objective"] = *r.adversary_objective;
  j["wall_s"] = r.wall_seconds;
  return j.dump();
}

std::string to_json_line(const EpochRecord& r) {
  nlohmann::ordered_json j;
  j["type"] = "epoch";
  j["epoch"] = r.epoch;
  j["mean_L_cls"] = r.mean_classification_loss;
  j["val_acc_A"] = r.val_acc_a;
  j["val_acc_B"] = r.val_acc_b;
  j["best"] = r.best;
  return j.dump();
}

Trainer::Trainer(DisentangleModel& model, TrainConfig config)
    : model_(model),
      config_(std::move(config)),
      main_params_(model.main_parameters()),
      adv_params_(model.adversary_parameters()),
      adam_(main_params_, config_.adam),
      sgd_(adv_params_, config_.momentum) {
  config_.validate();
}

Objective main_objective(Tape& tape, const DisentangleModel& model, const Batch& batch, const TrainConfig& cfg) {
  const Tensor z_a = model.enc_a.encode(tape, batch.x);
  const Tensor z_b = model.enc_b.encode(tape, batch.x);
  const Tensor l_a = ops::softmax_cross_entropy(tape, model.cls_a.classify(tape, z_a).logits, batch.labels_a);
  const Tensor l_b = ops::softmax_cross_entropy(tape, model.cls_b.classify(tape, z_b).logits, batch.labels_b);
  Tensor objective = ops::add(tape, l_a, l_b);

  Tensor l_a_adv, l_b_adv;
  if (cfg.adversarial_enabled) {
    l_a_adv = ops::softmax_cross_entropy(tape, model.adv_a.classify(tape, z_b).logits, batch.labels_a);
    l_b_adv = ops::softmax_cross_entropy(tape, model.adv_b.classify(tape, z_a).logits, batch.labels_b);
    objective = ops::sub(tape, objective, ops::scale(tape, ops::add(tape, l_a_adv, l_b_adv), cfg.lambda));
  } else {
    // reported only; outside the gradient path
    Tape detached = Tape::inference();
    l_a_adv = ops::softmax_cross_entropy(detached, model.adv_a.classify(detached, z_b.detach()).logits, batch.labels_a);
    l_b_adv = ops::softmax_cross_entropy(detached, model.adv_b.classify(detached, z_a.detach()).logits, batch.labels_b);
  }
  const Tensor l2 = ops::l2_penalty(tape, weights_of(model.main_parameters()), cfg.l2_scale);
  objective = ops::add(tape, objective, l2);
  return {objective, {l_a.item(), l_b.item(), l_a_adv.item(), l_b_adv.item(), l2.item(), objective.item()}};
}

Objective adversary_objective(Tape& tape, const DisentangleModel& model, const Batch& batch, const TrainConfig& cfg) {
  Tensor z_a, z_b;
  {
    Tape frozen = Tape::inference();
    z_a = model.enc_a.encode(frozen, batch.x);
    z_b = model.enc_b.encode(frozen, batch.x);
  }
  const Tensor l_a_adv = ops::softmax_cross_entropy(tape, model.adv_a.classify(tape, z_b).logits, batch.labels_a);
  const Tensor l_b_adv = ops::softmax_cross_entropy(tape, model.adv_b.classify(tape, z_a).logits, batch.labels_b);
  const Tensor l2 = ops::l2_penalty(tape, weights_of(model.adversary_parameters()), cfg.l2_scale);
  const Tensor objective = ops::add(tape, ops::add(tape, l_a_adv, l_b_adv), l2);
  LossComponents c;
  c.l_a_adv = l_a_adv.item();
  c.l_b_adv = l_b_adv.item();
  c.l2 = l2.item();
  c.objective = objective.item();
  return {objective, c};
}

LossComponents Trainer::main_step(const Batch& batch) {
  std::vector<std::vector<double>> psi_before;
  if (config_.check_partition) psi_before = snapshot_values(adv_params_);

  zero_grads(main_params_);
  zero_grads(adv_params_);
  Tape tape;
  const Objective j = main_objective(tape, model_, batch, config_);
  tape.backward(j.value);
  adam_.step();

  if (config_.check_partition && !bitwise_equal(adv_params_, psi_before)) ++violations_;
  return j.parts;
}

LossComponents Trainer::adversary_step(const Batch& batch) {
  std::vector<std::vector<double>> main_before;
  if (config_.check_partition) main_before = snapshot_values(main_params_);

  zero_grads(adv_params_);
  Tape tape;
  const Objective j = adversary_objective(tape, model_, batch, config_);
  tape.backward(j.value);
  sgd_.step();

  if (config_.check_partition && !bitwise_equal(main_params_, main_before)) ++violations_;
  return j.parts;
}

void Trainer::save_state(Checkpoint& ckpt) const {
  adam_.save_state(ckpt, "optim/adam");
  sgd_.save_state(ckpt, "optim/sgd");
}

void Trainer::load_state(const Checkpoint& ckpt) {
  adam_.load_state(ckpt, "optim/adam");
  sgd_.load_state(ckpt, "optim/sgd");
}

TrainResult train(DisentangleModel& model, const Dataset& train_set, const Dataset& val_set, const TrainConfig& cfg,
                  const TrainOptions& options) {
  cfg.validate();
  if (train_set.empty()) throw ContractError("train: training set is empty");
  if (val_set.empty()) throw ContractError("train: validation set is empty");

  Trainer trainer(model, cfg);
  TrainResult result;
  TrainLog& log = result.log;

  const std::uint64_t main_seed = derive_seed(cfg.seed, {kMainShuffle});
  BatchStream adv_stream(train_set.size(), cfg.batch_size, derive_seed(cfg.seed, {kAdvShuffle}));

  std::size_t first_epoch = 0;
  std::size_t iter = 0;
  std::size_t adv_batches = 0;
  double best_score = -1.0;
  if (options.resume) {
    const Checkpoint& r = *options.resume;
    restore_model(r, model);
    trainer.load_state(r);
    first_epoch = static_cast<std::size_t>(r.at("train/epochs_done").values.at(0));
    iter = static_cast<std::size_t>(r.at("train/iterations").values.at(0));
    adv_batches = static_cast<std::size_t>(r.at("train/adv_batches").values.at(0));
    best_score = r.at("train/best_score").values.at(0);
    for (std::size_t i = 0; i < adv_batches; ++i) adv_stream.next();
  }

  const auto snapshot = [&](std::size_t epochs_done) {
    Checkpoint c;
    c.seed = cfg.seed;
    c.config_text = options.config_text;
    store_model(model, c);
    trainer.save_state(c);
    c.put_scalar("train/epochs_done", static_cast<double>(epochs_done));
    c.put_scalar("train/iterations", static_cast<double>(iter));
    c.put_scalar("train/adv_batches", static_cast<double>(adv_batches));
    c.put_scalar("train/best_score", best_score);
    return c;
  };

  const auto start = std::chrono::steady_clock::now();
  for (std::size_t epoch = first_epoch; epoch < cfg.epochs; ++epoch) {
    double cls_loss_sum = 0.0;
    std::size_t cls_loss_count = 0;
    for (const auto& idx : batches(train_set.size(), cfg.batch_size, main_seed, epoch)) {
      IterationRecord rec;
      rec.iter = iter;
      rec.epoch = epoch;
      try {
        std::mt19937_64 flip(derive_seed(cfg.seed, {kMainFlip, iter}));
        const Batch batch = make_batch(train_set, idx, cfg.augment_flip ? &flip : nullptr);
        rec.main = trainer.main_step(batch);
        ++log.main_steps;
        if (cfg.adversarial_enabled && cfg.adv_steps_per_main > 0) {
          double adv_sum = 0.0;
          for (std::size_t k = 0; k < cfg.adv_steps_per_main; ++k) {
            LossComponents c;
            if (cfg.reuse_batch) {
              c = trainer.adversary_step(batch);
            } else {
              std::mt19937_64 adv_flip(derive_seed(cfg.seed, {kAdvFlip, adv_batches}));
              const auto& adv_idx = adv_stream.next();
              ++adv_batches;
              c = trainer.adversary_step(make_batch(train_set, adv_idx, cfg.augment_flip ? &adv_flip : nullptr));
            }
            adv_sum += c.objective;
            ++log.adversary_steps;
          }
          rec.adversary_objective = adv_sum / static_cast<double>(cfg.adv_steps_per_main);
        }
      } catch (const NumericalError& e) {
        throw NumericalError("training diverged at iteration " + std::to_string(iter) + " (epoch " +
                             std::to_string(epoch) + "): " + e.what() + "; last main-step losses " + describe(rec.main));
      }
      rec.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
      cls_loss_sum += rec.main.l_a + rec.main.l_b;
      ++cls_loss_count;
      if (options.on_iteration) options.on_iteration(rec);
      log.iterations.push_back(rec);
      ++iter;
    }

    const MetricsRecord val = evaluate_relevant(model, val_set);
    EpochRecord er;
    er.epoch = epoch;
    er.mean_classification_loss = cls_loss_sum / static_cast<double>(cls_loss_count);
    er.val_acc_a = val.za_ta->overall;
    er.val_acc_b = val.zb_tb->overall;
    const double score = 0.5 * (er.val_acc_a + er.val_acc_b);
    if (score > best_score) {
      best_score = score;
      er.best = true;
      result.best_checkpoint = snapshot(epoch + 1);
      if (options.checkpoint_dir) result.best_checkpoint.save(*options.checkpoint_dir / "best.ckpt");
    }
    if (options.on_epoch) options.on_epoch(er);
    log.epochs.push_back(er);
  }

  log.partition_violations = trainer.partition_violations();
  result.final_checkpoint = snapshot(cfg.epochs);
  if (options.checkpoint_dir) result.final_checkpoint.save(*options.checkpoint_dir / "final.ckpt");
  return result;
}

}  // namespace disentangle
