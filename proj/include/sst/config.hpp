#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>

namespace sst {

inline constexpr std::string_view kFormatMagic = "SSTW1";

// Llama-shaped hyperparameters. Defaults describe the toy model used by the
// test suite; any key omitted from a config file keeps its default.
struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 4;
  std::size_t n_heads = 4;
  std::size_t n_kv_heads = 2;
  std::size_t d_ff = 172;
  std::size_t vocab_size = 259;
  std::size_t max_seq = 512;
  double rope_theta = 10000.0;
  float norm_eps = 1e-5f;

  std::size_t head_dim() const { return d_model / n_heads; }
  std::size_t kv_dim() const { return n_kv_heads * head_dim(); }
  std::size_t group_size() const { return n_heads / n_kv_heads; }

  // Throws std::invalid_argument naming the offending field.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Flat `key = value` text. First non-comment line must be the magic
// "SSTW1 config"; `#` starts a comment.
using ConfigEntries = std::map<std::string, std::string, std::less<>>;
ConfigEntries parse_config_text(std::string_view text);
ConfigEntries read_config_file(const std::filesystem::path& path);

// Builds a validated ModelConfig from parsed entries. Keys that belong to
// the state-stream section (alpha, recursions, alignment, cache_norm) are
// accepted and ignored here; any other unknown key is an error.
ModelConfig model_config_from(const ConfigEntries& entries);

ModelConfig load_config(const std::filesystem::path& path);
std::string format_config(const ModelConfig& cfg);
void save_config(const ModelConfig& cfg, const std::filesystem::path& path);

}  // namespace sst
