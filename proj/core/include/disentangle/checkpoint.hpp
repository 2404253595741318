#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "disentangle/nn.hpp"
#include "disentangle/tensor.hpp"

namespace disentangle {

/// Flat named-tensor container written as a little-endian binary file:
///
///   magic        8 bytes  "DSNTCKPT"
///   version      u32      (1)
///   seed         u64
///   config_hash  u64      FNV-1a of config_text
///   config_len   u64, then config_len bytes of UTF-8 effective config
///   entry_count  u64
///   per entry:   name_len u32, name bytes, rank u32, rank x u64 dims,
///                product(dims) x f64 values (IEEE-754 binary64)
///
/// Model parameters are stored as "param/<group>/<tensor>", optimizer state
/// under "optim/...". Values round-trip bit-exactly.
class Checkpoint {
 public:
  struct Entry {
    std::string name;
    Shape shape;
    std::vector<double> values;
  };

  std::uint64_t seed = 0;
  std::string config_text;

  std::uint64_t config_hash() const;

  void put(std::string name, Shape shape, std::vector<double> values);
  void put_scalar(std::string name, double value) { put(std::move(name), {1}, {value}); }
  const Entry* find(const std::string& name) const;
  /// Throws LoadError naming the missing entry.
  const Entry& at(const std::string& name) const;
  const std::vector<Entry>& entries() const { return entries_; }

  /// Throws IoError when the file cannot be written.
  void save(const std::filesystem::path& path) const;
  /// Throws LoadError on a missing, truncated or corrupted file.
  static Checkpoint load(const std::filesystem::path& path);

  friend bool operator==(const Checkpoint& a, const Checkpoint& b);

 private:
  std::vector<Entry> entries_;
};

void store_model(const DisentangleModel& model, Checkpoint& ckpt);

/// Copies stored parameters into `model`; DimensionError if any stored shape
/// differs from the model's, LoadError if a parameter is missing.
void restore_model(const Checkpoint& ckpt, DisentangleModel& model);

}  // namespace disentangle
