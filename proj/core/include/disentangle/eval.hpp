#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "disentangle/data.hpp"
#include "disentangle/nn.hpp"
#include "disentangle/pca.hpp"

namespace disentangle {

struct AccuracyReport {
  double overall = 0.0;
  std::size_t correct = 0;
  std::size_t total = 0;
  /// Accuracy over each true-class subset; empty when the class never occurs.
  std::vector<std::optional<double>> per_class;
  std::vector<std::size_t> class_counts;
  /// confusion[true][predicted]
  std::vector<std::vector<std::size_t>> confusion;
};

/// Throws ContractError on empty or mismatched inputs and LabelError on
/// labels outside [0, classes).
AccuracyReport accuracy(std::span<const int> predicted, std::span<const int> truth, int classes);

/// Argmax predictions of all four heads, computed without touching gradients.
struct HeadPredictions {
  std::vector<int> cls_a;  // Z_A -> T_A
  std::vector<int> cls_b;  // Z_B -> T_B
  std::vector<int> adv_a;  // Z_B -> T_A
  std::vector<int> adv_b;  // Z_A -> T_B
};
HeadPredictions predict_all(const DisentangleModel& model, const Dataset& ds, std::size_t batch_size = 100);

struct MetricsRecord {
  std::string dataset;
  std::string checkpoint;
  std::optional<AccuracyReport> za_ta, zb_tb;  // relevant pairings
  std::optional<AccuracyReport> za_tb, zb_ta;  // irrelevant pairings, adversarial-head readout
  std::optional<double> probe_za_tb, probe_zb_ta;  // irrelevant pairings, retrained-probe readout
};

/// Z_A->T_A via cls_A(enc_A(x)) and Z_B->T_B via cls_B(enc_B(x)).
MetricsRecord evaluate_relevant(const DisentangleModel& model, const Dataset& ds);
/// Z_A->T_B via adv_B(enc_A(x)) and Z_B->T_A via adv_A(enc_B(x)).
MetricsRecord evaluate_irrelevant(const DisentangleModel& model, const Dataset& ds);
/// Both of the above from one pass over the data.
MetricsRecord evaluate_all(const DisentangleModel& model, const Dataset& ds);

std::string metrics_to_json(const MetricsRecord& record);

enum class Task { kA, kB };

struct ProbeOptions {
  std::size_t epochs = 50;
  std::size_t batch_size = 50;
  double learning_rate = 1e-3;
  std::vector<std::size_t> hidden = {256};
  std::uint64_t seed = 1;
};

/// Trains a fresh head on frozen encoder features of `train` for `target`
/// and returns its accuracy on `test`. The encoder is only read.
AccuracyReport probe_retrain(const Encoder& encoder, const Dataset& train, const Dataset& test, Task target,
                             int classes, const ProbeOptions& options = {});

/// Rows of Z = enc(x) for every image, row-major [N, C_latent].
std::vector<double> encode_dataset(const Encoder& encoder, const Dataset& ds, std::size_t batch_size = 100);

enum class HeadKind { kClsA, kClsB, kAdvA, kAdvB };
std::string head_name(HeadKind head);
/// Parses "cls_A", "cls_B", "adv_A", "adv_B"; ConfigError otherwise.
HeadKind parse_head(const std::string& name);

struct EmbeddingDump {
  HeadKind head = HeadKind::kClsA;
  std::size_t features = 0;
  std::vector<double> activations;  // [N, features], penultimate layer
  PcaResult pca;
  std::vector<int> labels_a, labels_b;
  std::vector<std::string> combos;
};

EmbeddingDump embed(const DisentangleModel& model, const Dataset& ds, HeadKind head);

/// CSV with header `id,label_A,label_B,combo,pc1,pc2,f0..f{F-1}`.
void write_embedding_csv(const EmbeddingDump& dump, const std::filesystem::path& path);

}  // namespace disentangle
