#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "sst/config.hpp"
#include "sst/tensor.hpp"

namespace sst {

class WeightError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Projection matrices are stored [in, out] so that y = x * W.
struct LayerWeights {
  const Tensor& wq;              // [d_model, n_heads * head_dim]
  const Tensor& wk;              // [d_model, n_kv_heads * head_dim]
  const Tensor& wv;              // [d_model, n_kv_heads * head_dim]
  const Tensor& wo;              // [n_heads * head_dim, d_model]
  const Tensor& w_gate;          // [d_model, d_ff]
  const Tensor& w_up;            // [d_model, d_ff]
  const Tensor& w_down;          // [d_ff, d_model]
  const Tensor& attention_norm;  // [d_model]
  const Tensor& ffn_norm;        // [d_model], post-attention norm
};

// Named tensors for one model. Once built it is only read, so a single
// instance can drive the base and state-stream paths on any number of
// threads at once.
class WeightBundle {
 public:
  void insert(std::string name, Tensor tensor);

  bool contains(std::string_view name) const;
  const Tensor& at(std::string_view name) const;
  const std::map<std::string, Tensor, std::less<>>& tensors() const { return tensors_; }
  std::size_t size() const { return tensors_.size(); }

  const Tensor& embedding() const { return at("tok_embeddings"); }
  const Tensor& final_norm() const { return at("norm"); }
  const Tensor& output() const { return at("output"); }
  LayerWeights layer(std::size_t index) const;

 private:
  std::map<std::string, Tensor, std::less<>> tensors_;
};

std::string layer_tensor_name(std::size_t layer, std::string_view suffix);

// Every tensor a config requires, with its exact shape, in container order.
std::vector<std::pair<std::string, Shape>> expected_tensors(const ModelConfig& cfg);

// Throws WeightError on a missing, unexpected or misshapen tensor.
void validate_weights(const WeightBundle& weights, const ModelConfig& cfg);

// Container: text header then raw little-endian f32 payload.
//
//   SSTW1 weights
//   count <n>
//   tensor <name> f32 <rank> <dim0> ... <offset> <nbytes>
//   ...
//   end
//   <payload>
//
// Offsets are relative to the first payload byte; tensors are written in
// name order, back to back.
std::string serialize_weights(const WeightBundle& weights);
WeightBundle deserialize_weights(std::string_view bytes, const ModelConfig& cfg);

void save_weights(const WeightBundle& weights, const std::filesystem::path& path);
WeightBundle load_weights(const std::filesystem::path& path, const ModelConfig& cfg);

// Seeded N(0, 1/d_model) projections and unit norm gains.
WeightBundle init_random_weights(const ModelConfig& cfg, std::uint64_t seed);

// Stable fingerprint over names, shapes and values.
std::uint64_t weights_hash(const WeightBundle& weights);

}  // namespace sst
