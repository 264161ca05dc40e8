#include "sst/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace sst {

namespace {

std::string_view trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return s.substr(first, last - first + 1);
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config: '" + key + "' expects a non-negative integer, got '" +
                      value + "'");
  }
  return out;
}

double parse_real(const std::string& key, const std::string& value) {
  double out = 0.0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), out);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw ConfigError("config: '" + key + "' expects a number, got '" + value + "'");
  }
  return out;
}

const std::set<std::string, std::less<>> kStreamKeys = {
    "alpha", "recursions", "alignment", "cache_norm"};

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw std::invalid_argument(std::string(name) + " must be positive");
  };
  positive(d_model, "d_model");
  positive(n_layers, "n_layers");
  positive(n_heads, "n_heads");
  positive(n_kv_heads, "n_kv_heads");
  positive(d_ff, "d_ff");
  positive(vocab_size, "vocab_size");
  positive(max_seq, "max_seq");
  if (!(rope_theta > 0.0)) throw std::invalid_argument("rope_theta must be positive");
  if (!(norm_eps > 0.0f)) throw std::invalid_argument("norm_eps must be positive");
  if (n_heads % n_kv_heads != 0) {
    throw std::invalid_argument("n_heads not divisible by n_kv_heads");
  }
  if (d_model % n_heads != 0) {
    throw std::invalid_argument("d_model not divisible by n_heads");
  }
  if (head_dim() % 2 != 0) {
    throw std::invalid_argument("head_dim (d_model / n_heads) must be even");
  }
}

ConfigEntries parse_config_text(std::string_view text) {
  ConfigEntries entries;
  bool seen_magic = false;
  std::size_t line_no = 0;
  std::istringstream in{std::string(text)};
  std::string raw;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (auto hash = line.find('#'); hash != std::string_view::npos) {
      line = line.substr(0, hash);
    }
    line = trim(line);
    if (line.empty()) continue;
    if (!seen_magic) {
      if (line != std::string(kFormatMagic) + " config") {
        throw ConfigError("config: missing '" + std::string(kFormatMagic) +
                          " config' header");
      }
      seen_magic = true;
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": expected 'key = value'");
    }
    std::string key(trim(line.substr(0, eq)));
    std::string value(trim(line.substr(eq + 1)));
    if (key.empty() || value.empty()) {
      throw ConfigError("config line " + std::to_string(line_no) +
                        ": empty key or value");
    }
    if (!entries.emplace(key, value).second) {
      throw ConfigError("config: duplicate key '" + key + "'");
    }
  }
  if (!seen_magic) throw ConfigError("config: empty file");
  return entries;
}

ConfigEntries read_config_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config_text(buf.str());
}

ModelConfig model_config_from(const ConfigEntries& entries) {
  ModelConfig cfg;
  for (const auto& [key, value] : entries) {
    if (key == "d_model") cfg.d_model = parse_count(key, value);
    else if (key == "n_layers") cfg.n_layers = parse_count(key, value);
    else if (key == "n_heads") cfg.n_heads = parse_count(key, value);
    else if (key == "n_kv_heads") cfg.n_kv_heads = parse_count(key, value);
    else if (key == "d_ff") cfg.d_ff = parse_count(key, value);
    else if (key == "vocab_size") cfg.vocab_size = parse_count(key, value);
    else if (key == "max_seq") cfg.max_seq = parse_count(key, value);
    else if (key == "rope_theta") cfg.rope_theta = parse_real(key, value);
    else if (key == "norm_eps") cfg.norm_eps = static_cast<float>(parse_real(key, value));
    else if (!kStreamKeys.contains(key)) {
      throw ConfigError("config: unknown key '" + key + "'");
    }
  }
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

ModelConfig load_config(const std::filesystem::path& path) {
  return model_config_from(read_config_file(path));
}

std::string format_config(const ModelConfig& cfg) {
  std::ostringstream out;
  out.imbue(std::locale::classic());
  out << kFormatMagic << " config\n"
      << "d_model = " << cfg.d_model << "\n"
      << "n_layers = " << cfg.n_layers << "\n"
      << "n_heads = " << cfg.n_heads << "\n"
      << "n_kv_heads = " << cfg.n_kv_heads << "\n"
      << "d_ff = " << cfg.d_ff << "\n"
      << "vocab_size = " << cfg.vocab_size << "\n"
      << "max_seq = " << cfg.max_seq << "\n";
  char buf[64];
  auto r = std::to_chars(buf, buf + sizeof(buf), cfg.rope_theta);
  out << "rope_theta = " << std::string_view(buf, r.ptr - buf) << "\n";
  r = std::to_chars(buf, buf + sizeof(buf), cfg.norm_eps);
  out << "norm_eps = " << std::string_view(buf, r.ptr - buf) << "\n";
  return out.str();
}

void save_config(const ModelConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write config file: " + path.string());
  out << format_config(cfg);
}

}  // namespace sst
