#include "disentangle/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>

#include "disentangle/error.hpp"
#include "disentangle/hash.hpp"

namespace disentangle {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

constexpr char kMagic[8] = {'D', 'S', 'N', 'T', 'C', 'K', 'P', 'T'};
constexpr std::uint32_t kVersion = 1;

template <typename T>
void write_pod(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(std::istream& in, std::string path) : in_(in), path_(std::move(path)) {}

  template <typename T>
  T pod() {
    T v{};
    bytes(reinterpret_cast<char*>(&v), sizeof(T));
    return v;
  }

  void bytes(char* dst, std::size_t n) {
    in_.read(dst, static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(in_.gcount()) != n) throw LoadError("checkpoint " + path_ + ": truncated file");
  }

  std::string string(std::uint64_t n) {
    if (n > (1ULL << 32)) throw LoadError("checkpoint " + path_ + ": implausible string length");
    std::string s(n, '\0');
    bytes(s.data(), n);
    return s;
  }

 private:
  std::istream& in_;
  std::string path_;
};

}  // namespace

std::uint64_t Checkpoint::config_hash() const { return fnv1a64(config_text); }

void Checkpoint::put(std::string name, Shape shape, std::vector<double> values) {
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("checkpoint entry " + name + ": shape " + shape_string(shape) + " does not hold " +
                         std::to_string(values.size()) + " values");
  }
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  if (it != entries_.end()) {
    it->shape = std::move(shape);
    it->values = std::move(values);
    return;
  }
  entries_.push_back({std::move(name), std::move(shape), std::move(values)});
}

const Checkpoint::Entry* Checkpoint::find(const std::string& name) const {
  auto it = std::find_if(entries_.begin(), entries_.end(), [&](const Entry& e) { return e.name == name; });
  return it == entries_.end() ? nullptr : &*it;
}

const Checkpoint::Entry& Checkpoint::at(const std::string& name) const {
  const Entry* e = find(name);
  if (!e) throw LoadError("checkpoint has no entry '" + name + "'");
  return *e;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(kMagic, sizeof(kMagic));
    write_pod(out, kVersion);
    write_pod(out, seed);
    write_pod(out, config_hash());
    write_pod(out, static_cast<std::uint64_t>(config_text.size()));
    out.write(config_text.data(), static_cast<std::streamsize>(config_text.size()));
    write_pod(out, static_cast<std::uint64_t>(entries_.size()));
    for (const Entry& e : entries_) {
      write_pod(out, static_cast<std::uint32_t>(e.name.size()));
      out.write(e.name.data(), static_cast<std::streamsize>(e.name.size()));
      write_pod(out, static_cast<std::uint32_t>(e.shape.size()));
      for (std::size_t d : e.shape) write_pod(out, static_cast<std::uint64_t>(d));
      out.write(reinterpret_cast<const char*>(e.values.data()),
                static_cast<std::streamsize>(e.values.size() * sizeof(double)));
    }
    out.flush();
    if (!out) throw IoError("failed writing checkpoint " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw LoadError("cannot open checkpoint " + path.string());
  Reader r(in, path.string());
  char magic[8];
  r.bytes(magic, sizeof(magic));
  if (std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw LoadError(path.string() + " is not a checkpoint file");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion) throw LoadError(path.string() + ": unsupported checkpoint version " + std::to_string(version));

  Checkpoint ckpt;
  ckpt.seed = r.pod<std::uint64_t>();
  const auto hash = r.pod<std::uint64_t>();
  ckpt.config_text = r.string(r.pod<std::uint64_t>());
  if (ckpt.config_hash() != hash) throw LoadError(path.string() + ": config hash mismatch (corrupted header)");

  const auto count = r.pod<std::uint64_t>();
  for (std::uint64_t i = 0; i < count; ++i) {
    Entry e;
    e.name = r.string(r.pod<std::uint32_t>());
    const auto rank = r.pod<std::uint32_t>();
    if (rank > 8) throw LoadError(path.string() + ": entry " + e.name + " has implausible rank");
    std::uint64_t numel = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      e.shape.push_back(r.pod<std::uint64_t>());
      numel *= e.shape.back();
    }
    if (numel > (1ULL << 31)) throw LoadError(path.string() + ": entry " + e.name + " is implausibly large");
    e.values.resize(numel);
    r.bytes(reinterpret_cast<char*>(e.values.data()), numel * sizeof(double));
    ckpt.entries_.push_back(std::move(e));
  }
  return ckpt;
}

bool operator==(const Checkpoint& a, const Checkpoint& b) {
  if (a.seed != b.seed || a.config_text != b.config_text || a.entries_.size() != b.entries_.size()) return false;
  for (std::size_t i = 0; i < a.entries_.size(); ++i) {
    const auto& x = a.entries_[i];
    const auto& y = b.entries_[i];
    if (x.name != y.name || x.shape != y.shape || x.values.size() != y.values.size()) return false;
    if (std::memcmp(x.values.data(), y.values.data(), x.values.size() * sizeof(double)) != 0) return false;
  }
  return true;
}

void store_model(const DisentangleModel& model, Checkpoint& ckpt) {
  for (const auto& group : model.parameter_groups()) {
    for (const auto& p : group.params) {
      const auto v = p.tensor.values();
      ckpt.put("param/" + group.name + "/" + p.name, p.tensor.shape(), {v.begin(), v.end()});
    }
  }
}

void restore_model(const Checkpoint& ckpt, DisentangleModel& model) {
  for (auto& group : model.parameter_groups()) {
    for (auto& p : group.params) {
      const std::string name = "param/" + group.name + "/" + p.name;
      const auto& e = ckpt.at(name);
      if (e.shape != p.tensor.shape()) {
        throw DimensionError("checkpoint entry " + name + " has shape " + shape_string(e.shape) +
                             " but the model expects " + shape_string(p.tensor.shape()));
      }
      std::copy(e.values.begin(), e.values.end(), p.tensor.mutable_values().begin());
    }
  }
}

}  // namespace disentangle
