#include "sst/weights.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <set>
#include <sstream>

#include "sst/hash.hpp"

namespace sst {

namespace {

void put_f32_le(std::string& out, float v) {
  const auto bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

float get_f32_le(const unsigned char* p) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(p[i]) << (8 * i);
  return std::bit_cast<float>(bits);
}

// Box-Muller over raw mt19937_64 output. std::normal_distribution is
// implementation-defined, which would make seeded bundles differ between
// standard libraries.
class NormalSource {
 public:
  explicit NormalSource(std::uint64_t seed) : engine_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u1 = 0.0;
    do {
      u1 = uniform();
    } while (u1 <= 0.0);
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace

void WeightBundle::insert(std::string name, Tensor tensor) {
  tensors_.insert_or_assign(std::move(name), std::move(tensor));
}

bool WeightBundle::contains(std::string_view name) const {
  return tensors_.find(name) != tensors_.end();
}

const Tensor& WeightBundle::at(std::string_view name) const {
  auto it = tensors_.find(name);
  if (it == tensors_.end()) {
    throw WeightError("missing tensor '" + std::string(name) + "'");
  }
  return it->second;
}

LayerWeights WeightBundle::layer(std::size_t index) const {
  auto get = [&](std::string_view suffix) -> const Tensor& {
    return at(layer_tensor_name(index, suffix));
  };
  return LayerWeights{get("attention.wq"),        get("attention.wk"),
                      get("attention.wv"),        get("attention.wo"),
                      get("feed_forward.w_gate"), get("feed_forward.w_up"),
                      get("feed_forward.w_down"), get("attention_norm"),
                      get("ffn_norm")};
}

std::string layer_tensor_name(std::size_t layer, std::string_view suffix) {
  return "layers." + std::to_string(layer) + "." + std::string(suffix);
}

std::vector<std::pair<std::string, Shape>> expected_tensors(const ModelConfig& cfg) {
  const std::size_t d = cfg.d_model;
  const std::size_t q_dim = cfg.n_heads * cfg.head_dim();
  const std::size_t kv_dim = cfg.kv_dim();
  std::vector<std::pair<std::string, Shape>> out;
  out.emplace_back("tok_embeddings", Shape{cfg.vocab_size, d});
  for (std::size_t l = 0; l < cfg.n_layers; ++l) {
    out.emplace_back(layer_tensor_name(l, "attention.wq"), Shape{d, q_dim});
    out.emplace_back(layer_tensor_name(l, "attention.wk"), Shape{d, kv_dim});
    out.emplace_back(layer_tensor_name(l, "attention.wv"), Shape{d, kv_dim});
    out.emplace_back(layer_tensor_name(l, "attention.wo"), Shape{q_dim, d});
    out.emplace_back(layer_tensor_name(l, "feed_forward.w_gate"), Shape{d, cfg.d_ff});
    out.emplace_back(layer_tensor_name(l, "feed_forward.w_up"), Shape{d, cfg.d_ff});
    out.emplace_back(layer_tensor_name(l, "feed_forward.w_down"), Shape{cfg.d_ff, d});
    out.emplace_back(layer_tensor_name(l, "attention_norm"), Shape{d});
    out.emplace_back(layer_tensor_name(l, "ffn_norm"), Shape{d});
  }
  out.emplace_back("norm", Shape{d});
  out.emplace_back("output", Shape{d, cfg.vocab_size});
  return out;
}

void validate_weights(const WeightBundle& weights, const ModelConfig& cfg) {
  std::set<std::string, std::less<>> required;
  for (const auto& [name, shape] : expected_tensors(cfg)) {
    if (!weights.contains(name)) throw WeightError("missing tensor '" + name + "'");
    const Tensor& t = weights.at(name);
    if (t.shape() != shape) {
      throw WeightError("tensor '" + name + "' has shape " + shape_str(t.shape()) +
                        ", expected " + shape_str(shape));
    }
    required.insert(name);
  }
  for (const auto& [name, tensor] : weights.tensors()) {
    if (!required.contains(name)) throw WeightError("unexpected tensor '" + name + "'");
  }
}

std::string serialize_weights(const WeightBundle& weights) {
  std::ostringstream header;
  header.imbue(std::locale::classic());
  header << kFormatMagic << " weights\n" << "count " << weights.size() << "\n";
  std::size_t offset = 0;
  for (const auto& [name, t] : weights.tensors()) {
    const std::size_t nbytes = t.numel() * 4;
    header << "tensor " << name << " f32 " << t.rank();
    for (auto d : t.shape()) header << ' ' << d;
    header << ' ' << offset << ' ' << nbytes << "\n";
    offset += nbytes;
  }
  header << "end\n";

  std::string out = header.str();
  out.reserve(out.size() + offset);
  for (const auto& [name, t] : weights.tensors()) {
    for (float v : t.data()) put_f32_le(out, v);
  }
  return out;
}

WeightBundle deserialize_weights(std::string_view bytes, const ModelConfig& cfg) {
  const std::string end_marker = "\nend\n";
  const auto end_pos = bytes.find(end_marker);
  if (end_pos == std::string_view::npos) {
    throw WeightError("weight container: header not terminated by 'end'");
  }
  const std::string_view payload = bytes.substr(end_pos + end_marker.size());
  std::istringstream header{std::string(bytes.substr(0, end_pos + 1))};
  header.imbue(std::locale::classic());

  std::string magic, kind;
  header >> magic >> kind;
  if (magic != kFormatMagic || kind != "weights") {
    throw WeightError("weight container: bad magic, expected '" +
                      std::string(kFormatMagic) + " weights'");
  }
  std::string word;
  std::size_t count = 0;
  if (!(header >> word >> count) || word != "count") {
    throw WeightError("weight container: missing tensor count");
  }

  WeightBundle bundle;
  for (std::size_t i = 0; i < count; ++i) {
    std::string tag, name, dtype;
    std::size_t rank = 0;
    if (!(header >> tag >> name >> dtype >> rank) || tag != "tensor") {
      throw WeightError("weight container: malformed entry " + std::to_string(i));
    }
    if (dtype != "f32") {
      throw WeightError("tensor '" + name + "': unsupported dtype '" + dtype + "'");
    }
    Shape shape(rank);
    for (auto& d : shape) header >> d;
    std::size_t offset = 0, nbytes = 0;
    if (!(header >> offset >> nbytes)) {
      throw WeightError("tensor '" + name + "': malformed shape/offset");
    }
    if (nbytes != shape_numel(shape) * 4) {
      throw WeightError("tensor '" + name + "': byte count does not match shape");
    }
    if (offset > payload.size() || payload.size() - offset < nbytes) {
      throw WeightError("tensor '" + name + "': truncated payload");
    }
    std::vector<float> values(nbytes / 4);
    const auto* p = reinterpret_cast<const unsigned char*>(payload.data() + offset);
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = get_f32_le(p + 4 * k);
    if (bundle.contains(name)) throw WeightError("duplicate tensor '" + name + "'");
    bundle.insert(name, Tensor(std::move(shape), std::move(values)));
  }
  validate_weights(bundle, cfg);
  for (const auto& [name, t] : bundle.tensors()) require_finite(t, name);
  return bundle;
}

void save_weights(const WeightBundle& weights, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw WeightError("cannot write weight file: " + path.string());
  const std::string bytes = serialize_weights(weights);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw WeightError("write failed: " + path.string());
}

WeightBundle load_weights(const std::filesystem::path& path, const ModelConfig& cfg) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw WeightError("cannot open weight file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return deserialize_weights(buf.str(), cfg);
}

WeightBundle init_random_weights(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  NormalSource normal(seed);
  const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.d_model));
  WeightBundle bundle;
  for (const auto& [name, shape] : expected_tensors(cfg)) {
    Tensor t(shape);
    if (shape.size() == 1) {
      std::fill(t.data().begin(), t.data().end(), 1.0f);
    } else {
      for (float& v : t.data()) v = static_cast<float>(normal.next() * scale);
    }
    bundle.insert(name, std::move(t));
  }
  return bundle;
}

std::uint64_t weights_hash(const WeightBundle& weights) {
  Fnv1a h;
  for (const auto& [name, t] : weights.tensors()) {
    h.update(name);
    h.update_pod(content_hash(t));
  }
  return h.digest();
}

}  // namespace sst
