#include "disentangle/eval.hpp"

#include <fstream>
#include <iomanip>
#include <json.hpp>
#include <random>
#include <sstream>

#include "disentangle/error.hpp"
#include "disentangle/hash.hpp"
#include "disentangle/ops.hpp"
#include "disentangle/optim.hpp"

namespace disentangle {
namespace {

using nlohmann::ordered_json;

ordered_json report_json(const AccuracyReport& r) {
  ordered_json j;
  j["overall"] = r.overall;
  j["correct"] = r.correct;
  j["total"] = r.total;
  ordered_json per_class = ordered_json::array();
  for (const auto& a : r.per_class) per_class.push_back(a ? ordered_json(*a) : ordered_json(nullptr));
  j["per_class"] = per_class;
  j["class_counts"] = r.class_counts;
  j["confusion"] = r.confusion;
  return j;
}

template <typename Fn>
void for_each_batch(const Dataset& ds, std::size_t batch_size, Fn&& fn) {
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < ds.size(); start += batch_size) {
    idx.clear();
    for (std::size_t i = start; i < std::min(ds.size(), start + batch_size); ++i) idx.push_back(i);
    fn(make_batch(ds, idx));
  }
}

}  // namespace

AccuracyReport accuracy(std::span<const int> predicted, std::span<const int> truth, int classes) {
  if (predicted.empty()) throw ContractError("accuracy: empty input");
  if (predicted.size() != truth.size()) {
    throw ContractError("accuracy: " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(truth.size()) + " labels");
  }
  if (classes < 1) throw ContractError("accuracy: classes must be positive");
  const auto k = static_cast<std::size_t>(classes);
  AccuracyReport r;
  r.total = truth.size();
  r.class_counts.assign(k, 0);
  r.confusion.assign(k, std::vector<std::size_t>(k, 0));
  std::vector<std::size_t> hits(k, 0);
  for (std::size_t i = 0; i < truth.size(); ++i) {
    const int t = truth[i], p = predicted[i];
    if (t < 0 || t >= classes || p < 0 || p >= classes) {
      throw LabelError("accuracy: class index outside [0," + std::to_string(classes) + ") at position " +
                       std::to_string(i));
    }
    ++r.class_counts[t];
    ++r.confusion[t][p];
    if (t == p) {
      ++hits[t];
      ++r.correct;
    }
  }
  r.overall = static_cast<double>(r.correct) / static_cast<double>(r.total);
  for (std::size_t c = 0; c < k; ++c) {
    r.per_class.push_back(r.class_counts[c] ? std::optional<double>(static_cast<double>(hits[c]) /
                                                                     static_cast<double>(r.class_counts[c]))
                                            : std::nullopt);
  }
  return r;
}

HeadPredictions predict_all(const DisentangleModel& model, const Dataset& ds, std::size_t batch_size) {
  HeadPredictions p;
  for_each_batch(ds, batch_size, [&](const Batch& b) {
    Tape tape = Tape::inference();
    const ForwardResult f = model.forward_all(tape, b.x);
    const auto append = [](std::vector<int>& dst, const Tensor& logits) {
      const auto a = ops::argmax_rows(logits);
      dst.insert(dst.end(), a.begin(), a.end());
    };
    append(p.cls_a, f.y_a.logits);
    append(p.cls_b, f.y_b.logits);
    append(p.adv_a, f.y_a_adv.logits);
    append(p.adv_b, f.y_b_adv.logits);
  });
  return p;
}

namespace {

void labels_of(const Dataset& ds, std::vector<int>& a, std::vector<int>& b) {
  for (const auto& img : ds.images) {
    a.push_back(img.label_a);
    b.push_back(img.label_b);
  }
}

MetricsRecord evaluate_impl(const DisentangleModel& model, const Dataset& ds, bool relevant, bool irrelevant) {
  if (ds.empty()) throw ContractError("evaluate: dataset '" + ds.split + "' is empty");
  const HeadPredictions p = predict_all(model, ds);
  std::vector<int> la, lb;
  labels_of(ds, la, lb);
  const int ka = static_cast<int>(model.config().classes_a), kb = static_cast<int>(model.config().classes_b);
  MetricsRecord r;
  r.dataset = ds.split;
  if (relevant) {
    r.za_ta = accuracy(p.cls_a, la, ka);
    r.zb_tb = accuracy(p.cls_b, lb, kb);
  }
  if (irrelevant) {
    r.za_tb = accuracy(p.adv_b, lb, kb);
    r.zb_ta = accuracy(p.adv_a, la, ka);
  }
  return r;
}

}  // namespace

MetricsRecord evaluate_relevant(const DisentangleModel& model, const Dataset& ds) {
  return evaluate_impl(model, ds, true, false);
}

MetricsRecord evaluate_irrelevant(const DisentangleModel& model, const Dataset& ds) {
  return evaluate_impl(model, ds, false, true);
}

MetricsRecord evaluate_all(const DisentangleModel& model, const Dataset& ds) {
  return evaluate_impl(model, ds, true, true);
}

std::string metrics_to_json(const MetricsRecord& record) {
  ordered_json j;
  j["dataset"] = record.dataset;
  j["checkpoint"] = record.checkpoint;
  ordered_json pairings = ordered_json::object();
  if (record.za_ta) pairings["Z_A->T_A"] = report_json(*record.za_ta);
  if (record.zb_tb) pairings["Z_B->T_B"] = report_json(*record.zb_tb);
  if (record.za_tb) pairings["Z_A->T_B"] = report_json(*record.za_tb);
  if (record.zb_ta) pairings["Z_B->T_A"] = report_json(*record.zb_ta);
  j["pairings"] = pairings;
  if (record.probe_za_tb || record.probe_zb_ta) {
    ordered_json probe = ordered_json::object();
    if (record.probe_za_tb) probe["Z_A->T_B"] = *record.probe_za_tb;
    if (record.probe_zb_ta) probe["Z_B->T_A"] = *record.probe_zb_ta;
    j["probe_retrain"] = probe;
  }
  return j.dump(2);
}

std::vector<double> encode_dataset(const Encoder& encoder, const Dataset& ds, std::size_t batch_size) {
  std::vector<double> rows;
  for_each_batch(ds, batch_size, [&](const Batch& b) {
    Tape tape = Tape::inference();
    const Tensor z = encoder.encode(tape, b.x);
    rows.insert(rows.end(), z.values().begin(), z.values().end());
  });
  return rows;
}

AccuracyReport probe_retrain(const Encoder& encoder, const Dataset& train, const Dataset& test, Task target,
                             int classes, const ProbeOptions& options) {
  if (train.empty() || test.empty()) throw ContractError("probe_retrain: train and test sets must be non-empty");
  const std::size_t width = encoder.output_width();
  const std::vector<double> train_z = encode_dataset(encoder, train);
  const std::vector<double> test_z = encode_dataset(encoder, test);
  const auto label = [target](const LabeledImage& img) { return target == Task::kA ? img.label_a : img.label_b; };

  ClassifierHead head(width, options.hidden, static_cast<std::size_t>(classes));
  std::vector<NamedTensor> params = head.parameters();
  for (auto& p : params) {
    auto v = p.tensor.mutable_values();
    if (!p.is_weight) continue;
    const std::size_t fan_in = p.tensor.dim(0);
    std::mt19937_64 rng(derive_seed(options.seed, {fnv1a64("probe"), fnv1a64(p.name)}));
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (double& x : v) x = normal(rng);
  }
  Adam adam(params, AdamOptions{options.learning_rate, 0.9, 0.999, 1e-8});

  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    for (const auto& idx : batches(train.size(), options.batch_size, derive_seed(options.seed, {fnv1a64("probe")}), epoch)) {
      std::vector<double> z;
      std::vector<int> y;
      for (std::size_t i : idx) {
        z.insert(z.end(), train_z.begin() + static_cast<std::ptrdiff_t>(i * width),
                 train_z.begin() + static_cast<std::ptrdiff_t>((i + 1) * width));
        y.push_back(label(train.images[i]));
      }
      for (auto& p : params) p.tensor.zero_grad();
      Tape tape;
      const HeadOutput out = head.classify(tape, Tensor::from({idx.size(), width}, std::move(z)));
      tape.backward(ops::softmax_cross_entropy(tape, out.logits, y));
      adam.step();
    }
  }

  Tape tape = Tape::inference();
  const HeadOutput out = head.classify(tape, Tensor::from({test.size(), width}, test_z));
  std::vector<int> truth;
  for (const auto& img : test.images) truth.push_back(label(img));
  return accuracy(ops::argmax_rows(out.logits), truth, classes);
}

std::string head_name(HeadKind head) {
  switch (head) {
    case HeadKind::kClsA: return "cls_A";
    case HeadKind::kClsB: return "cls_B";
    case HeadKind::kAdvA: return "adv_A";
    case HeadKind::kAdvB: return "adv_B";
  }
  return "?";
}

HeadKind parse_head(const std::string& name) {
  for (HeadKind h : {HeadKind::kClsA, HeadKind::kClsB, HeadKind::kAdvA, HeadKind::kAdvB}) {
    if (head_name(h) == name) return h;
  }
  throw ConfigError("unknown head '" + name + "' (expected cls_A, cls_B, adv_A or adv_B)");
}

EmbeddingDump embed(const DisentangleModel& model, const Dataset& ds, HeadKind head) {
  if (ds.size() < 2) throw ContractError("embed: need at least 2 images");
  EmbeddingDump dump;
  dump.head = head;
  for_each_batch(ds, 100, [&](const Batch& b) {
    Tape tape = Tape::inference();
    const ForwardResult f = model.forward_all(tape, b.x);
    const HeadOutput* out = nullptr;
    switch (head) {
      case HeadKind::kClsA: out = &f.y_a; break;
      case HeadKind::kClsB: out = &f.y_b; break;
      case HeadKind::kAdvA: out = &f.y_a_adv; break;
      case HeadKind::kAdvB: out = &f.y_b_adv; break;
    }
    dump.features = out->penultimate.dim(1);
    dump.activations.insert(dump.activations.end(), out->penultimate.values().begin(), out->penultimate.values().end());
  });
  for (const auto& img : ds.images) {
    dump.labels_a.push_back(img.label_a);
    dump.labels_b.push_back(img.label_b);
    dump.combos.push_back(img.combo);
  }
  dump.pca = pca_embed(dump.activations, ds.size(), dump.features, 2);
  return dump;
}

void write_embedding_csv(const EmbeddingDump& dump, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << "id,label_A,label_B,combo,pc1,pc2";
  for (std::size_t f = 0; f < dump.features; ++f) out << ",f" << f;
  out << '\n' << std::setprecision(17);
  const std::size_t n = dump.labels_a.size();
  for (std::size_t i = 0; i < n; ++i) {
    out << i << ',' << dump.labels_a[i] << ',' << dump.labels_b[i] << ',' << dump.combos[i] << ','
        << dump.pca.projections[i * 2] << ',' << dump.pca.projections[i * 2 + 1];
    for (std::size_t f = 0; f < dump.features; ++f) out << ',' << dump.activations[i * dump.features + f];
    out << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

}  // namespace disentangle
