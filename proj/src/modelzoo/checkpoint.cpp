#include "dac/modelzoo/checkpoint.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "dac/common/error.hpp"

namespace dac::model {

namespace {

constexpr char kMagic[4] = {'D', 'A', 'C', 'W'};

static_assert(std::endian::native == std::endian::little, "checkpoint IO assumes a little-endian host");

void put_u32(std::string& out, std::uint32_t v) {
  char b[4];
  std::memcpy(b, &v, 4);
  out.append(b, 4);
}

class Reader {
 public:
  explicit Reader(const std::string& bytes) : bytes_(bytes) {}

  void take(void* dst, std::size_t n, const char* what) {
    if (pos_ + n > bytes_.size()) {
      throw FormatError(std::string("checkpoint truncated while reading ") + what);
    }
    std::memcpy(dst, bytes_.data() + pos_, n);
    pos_ += n;
  }
  std::uint32_t u32(const char* what) {
    std::uint32_t v;
    take(&v, 4, what);
    return v;
  }
  std::string str(const char* what) {
    const std::uint32_t n = u32(what);
    std::string s(n, '\0');
    take(s.data(), n, what);
    return s;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  const std::string& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

const grad::Tensor& Checkpoint::tensor(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValueError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

grad::Tensor& Checkpoint::tensor(const std::string& name) {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw ValueError("checkpoint has no tensor '" + name + "'");
  return it->second;
}

void Checkpoint::check_complete() const {
  const auto slots = tensor_slots(spec);
  for (const TensorSlot& s : slots) {
    const grad::Tensor& t = tensor(s.name);
    if (t.shape() != s.shape) {
      throw FormatError("tensor '" + s.name + "' has shape " + grad::shape_string(t.shape()) + ", spec expects " +
                        grad::shape_string(s.shape));
    }
  }
  if (slots.size() != tensors.size()) throw FormatError("checkpoint holds tensors the model spec does not declare");
}

Checkpoint init_checkpoint(const ModelSpec& spec, std::uint64_t seed) {
  validate(spec);
  Checkpoint ck;
  ck.spec = spec;
  ck.metadata.seed = seed;
  std::mt19937_64 rng(seed);
  auto ends_with = [](const std::string& s, const char* suffix) {
    const std::size_t n = std::strlen(suffix);
    return s.size() >= n && s.compare(s.size() - n, n, suffix) == 0;
  };
  for (const TensorSlot& slot : tensor_slots(spec)) {
    grad::Tensor t(slot.shape);
    if (ends_with(slot.name, ".weight")) {
      // Kaiming-uniform, negative slope sqrt(5): bound 1/sqrt(fan_in). The relu gain (sqrt(6/fan_in))
      // stalls training of the wide head. conv (O, I, K, K): fan-in I*K*K; linear (D, M): fan-in D.
      const std::size_t fan_in = slot.shape.size() == 4 ? slot.shape[1] * slot.shape[2] * slot.shape[3] : slot.shape[0];
      const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
      std::uniform_real_distribution<double> u(-bound, bound);
      for (double& v : t.data()) v = u(rng);
    } else if (ends_with(slot.name, ".gamma") || ends_with(slot.name, ".running_var")) {
      t.fill(1.0);
    }
    ck.tensors.emplace(slot.name, std::move(t));
  }
  return ck;
}

std::string serialize_checkpoint(const Checkpoint& ck) {
  nlohmann::ordered_json header;
  header["model"] = nlohmann::ordered_json::parse(to_json(ck.spec));
  header["training"] = {{"epoch", ck.metadata.epoch},
                        {"val_accuracy", ck.metadata.val_accuracy},
                        {"seed", ck.metadata.seed},
                        {"dataset", ck.metadata.dataset}};
  std::string out(kMagic, 4);
  put_u32(out, kCheckpointVersion);
  const std::string text = header.dump();
  put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  put_u32(out, static_cast<std::uint32_t>(ck.tensors.size()));
  for (const auto& [name, t] : ck.tensors) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    out.push_back(static_cast<char>(t.rank()));
    for (std::size_t d : t.shape()) put_u32(out, static_cast<std::uint32_t>(d));
    out.append(reinterpret_cast<const char*>(t.raw()), t.size() * sizeof(double));
  }
  return out;
}

Checkpoint deserialize_checkpoint(const std::string& bytes) {
  Reader r(bytes);
  char magic[4];
  r.take(magic, 4, "magic");
  if (std::memcmp(magic, kMagic, 4) != 0) throw FormatError("not a checkpoint file (bad magic)");
  const std::uint32_t version = r.u32("version");
  if (version != kCheckpointVersion) {
    throw FormatError("unsupported checkpoint version " + std::to_string(version));
  }
  Checkpoint ck;
  const std::string text = r.str("header");
  try {
    const auto header = nlohmann::json::parse(text);
    ck.spec = model_spec_from_json(header.at("model").dump());
    const auto& tr = header.at("training");
    ck.metadata.epoch = tr.at("epoch").get<std::int64_t>();
    ck.metadata.val_accuracy = tr.at("val_accuracy").get<double>();
    ck.metadata.seed = tr.at("seed").get<std::uint64_t>();
    ck.metadata.dataset = tr.at("dataset").get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("malformed checkpoint header: ") + e.what());
  }
  const std::uint32_t count = r.u32("tensor count");
  for (std::uint32_t k = 0; k < count; ++k) {
    std::string name = r.str("tensor name");
    std::uint8_t rank;
    r.take(&rank, 1, "tensor rank");
    grad::Shape shape(rank);
    for (auto& d : shape) d = r.u32("tensor extents");
    grad::Tensor t(shape);
    r.take(t.raw(), t.size() * sizeof(double), "tensor payload");
    if (!ck.tensors.emplace(std::move(name), std::move(t)).second) throw FormatError("duplicate tensor name");
  }
  if (!r.done()) throw FormatError("trailing bytes after the last tensor");
  ck.check_complete();
  return ck;
}

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path) {
  const std::string bytes = serialize_checkpoint(checkpoint);
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("failed writing " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return deserialize_checkpoint(ss.str());
}

}  // namespace dac::model
