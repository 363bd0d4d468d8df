#include "kws/checkpoint.hpp"

#include <cstring>
#include <filesystem>
#include <fstream>
#include <set>

#include "json.hpp"
#include "kws/error.hpp"

namespace kws::checkpoint {
namespace {

constexpr char kMagic[] = "PKWSCKPT1\n";
constexpr size_t kMagicLen = sizeof(kMagic) - 1;

nlohmann::json config_to_json(const model::ModelConfig& cfg) {
  return {{"embed_dim", cfg.embed_dim},
          {"mel_dim", cfg.mel_dim},
          {"phoneme_vocab", cfg.phoneme_vocab},
          {"pretrained_stream_enabled", cfg.pretrained_stream_enabled},
          {"trainable_stream_enabled", cfg.trainable_stream_enabled},
          {"self_attention_enabled", cfg.self_attention_enabled},
          {"phoneme_loss_enabled", cfg.phoneme_loss_enabled},
          {"phoneme_head_enabled", cfg.phoneme_head_enabled},
          {"seed", cfg.seed}};
}

model::ModelConfig config_from_json(const nlohmann::json& j) {
  model::ModelConfig cfg;
  cfg.embed_dim = j.at("embed_dim").get<int>();
  cfg.mel_dim = j.at("mel_dim").get<int>();
  cfg.phoneme_vocab = j.at("phoneme_vocab").get<int>();
  cfg.pretrained_stream_enabled = j.at("pretrained_stream_enabled").get<bool>();
  cfg.trainable_stream_enabled = j.at("trainable_stream_enabled").get<bool>();
  cfg.self_attention_enabled = j.at("self_attention_enabled").get<bool>();
  cfg.phoneme_loss_enabled = j.at("phoneme_loss_enabled").get<bool>();
  cfg.phoneme_head_enabled = j.at("phoneme_head_enabled").get<bool>();
  cfg.seed = j.at("seed").get<uint64_t>();
  return cfg;
}

struct Container {
  nlohmann::json manifest;
  std::vector<char> payload;
};

Container read_container(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open checkpoint: " + path);
  char magic[kMagicLen];
  in.read(magic, kMagicLen);
  if (!in || std::memcmp(magic, kMagic, kMagicLen) != 0) {
    throw Error(path + ": not a checkpoint file");
  }
  uint64_t manifest_len = 0;
  unsigned char lenb[8];
  in.read(reinterpret_cast<char*>(lenb), 8);
  if (!in) throw Error(path + ": truncated header");
  for (int i = 7; i >= 0; --i) manifest_len = (manifest_len << 8) | lenb[i];

  std::string manifest_text(manifest_len, '\0');
  in.read(manifest_text.data(), static_cast<std::streamsize>(manifest_len));
  if (!in) throw Error(path + ": truncated manifest");

  Container c;
  try {
    c.manifest = nlohmann::json::parse(manifest_text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(path + ": corrupted manifest: " + e.what());
  }
  c.payload.assign(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
  return c;
}

void copy_floats_out(const std::vector<char>& payload, int64_t offset,
                     nn::Tensor<float>& dst, const std::string& path,
                     const std::string& name) {
  const size_t bytes = dst.data.size() * sizeof(float);
  if (offset < 0 || static_cast<size_t>(offset) + bytes > payload.size()) {
    throw Error(path + ": truncated payload for '" + name + "'");
  }
  std::memcpy(dst.data.data(), payload.data() + offset, bytes);
}

}  // namespace

void save(const std::string& path, model::Model<float>& m,
          const nn::Adam<float>* optimizer) {
  nlohmann::json manifest;
  manifest["config"] = config_to_json(m.config());
  manifest["params"] = nlohmann::json::array();

  std::vector<const nn::Tensor<float>*> blobs;
  int64_t offset = 0;
  for (const auto& e : m.state_entries()) {
    manifest["params"].push_back({{"name", e.name},
                                  {"shape", e.tensor->shape},
                                  {"dtype", "f32"},
                                  {"offset", offset},
                                  {"trainable", e.trainable}});
    blobs.push_back(e.tensor);
    offset += static_cast<int64_t>(e.tensor->data.size() * sizeof(float));
  }

  if (optimizer) {
    nlohmann::json opt;
    opt["step"] = optimizer->step_count();
    opt["entries"] = nlohmann::json::array();
    for (const auto& [name, mom] : optimizer->state()) {
      opt["entries"].push_back({{"name", name},
                                {"shape", mom.m.shape},
                                {"m_offset", offset},
                                {"v_offset", offset + static_cast<int64_t>(
                                                          mom.m.data.size() * sizeof(float))}});
      blobs.push_back(&mom.m);
      blobs.push_back(&mom.v);
      offset += static_cast<int64_t>((mom.m.data.size() + mom.v.data.size()) * sizeof(float));
    }
    manifest["optimizer"] = std::move(opt);
  }

  const std::string manifest_text = manifest.dump();
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint: " + tmp);
    out.write(kMagic, kMagicLen);
    const uint64_t len = manifest_text.size();
    unsigned char lenb[8];
    for (int i = 0; i < 8; ++i) lenb[i] = static_cast<unsigned char>(len >> (8 * i));
    out.write(reinterpret_cast<const char*>(lenb), 8);
    out.write(manifest_text.data(), static_cast<std::streamsize>(manifest_text.size()));
    for (const auto* t : blobs) {
      out.write(reinterpret_cast<const char*>(t->data.data()),
                static_cast<std::streamsize>(t->data.size() * sizeof(float)));
    }
    if (!out) throw Error("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

void load(const std::string& path, model::Model<float>& m, nn::Adam<float>* optimizer) {
  const Container c = read_container(path);

  auto entries = m.state_entries();
  std::set<std::string> expected;
  for (const auto& e : entries) expected.insert(e.name);
  std::set<std::string> present;
  for (const auto& p : c.manifest.at("params")) {
    present.insert(p.at("name").get<std::string>());
  }
  if (expected != present) {
    std::string msg = path + ": parameter set mismatch.";
    for (const auto& n : expected) {
      if (!present.count(n)) msg += " missing: " + n + ";";
    }
    for (const auto& n : present) {
      if (!expected.count(n)) msg += " unexpected: " + n + ";";
    }
    throw Error(msg);
  }

  // Stage everything before touching the model so a truncated payload
  // loads nothing.
  std::vector<nn::Tensor<float>> staged(entries.size());
  for (const auto& p : c.manifest.at("params")) {
    const std::string name = p.at("name").get<std::string>();
    const auto shape = p.at("shape").get<std::vector<int>>();
    size_t idx = 0;
    while (entries[idx].name != name) ++idx;
    if (entries[idx].tensor->shape != shape) {
      throw Error(path + ": shape mismatch for '" + name + "'");
    }
    staged[idx] = nn::Tensor<float>(shape);
    copy_floats_out(c.payload, p.at("offset").get<int64_t>(), staged[idx], path, name);
  }

  std::map<std::string, nn::Adam<float>::Moments> staged_opt;
  int64_t opt_step = 0;
  const bool want_opt = optimizer && c.manifest.contains("optimizer") &&
                        !c.manifest["optimizer"].is_null();
  if (want_opt) {
    const auto& opt = c.manifest["optimizer"];
    opt_step = opt.at("step").get<int64_t>();
    for (const auto& e : opt.at("entries")) {
      const std::string name = e.at("name").get<std::string>();
      const auto shape = e.at("shape").get<std::vector<int>>();
      nn::Adam<float>::Moments mom;
      mom.m = nn::Tensor<float>(shape);
      mom.v = nn::Tensor<float>(shape);
      copy_floats_out(c.payload, e.at("m_offset").get<int64_t>(), mom.m, path, name + ".m");
      copy_floats_out(c.payload, e.at("v_offset").get<int64_t>(), mom.v, path, name + ".v");
      staged_opt.emplace(name, std::move(mom));
    }
  }

  for (size_t i = 0; i < entries.size(); ++i) {
    *entries[i].tensor = std::move(staged[i]);
  }
  if (want_opt) {
    optimizer->state() = std::move(staged_opt);
    optimizer->set_step_count(opt_step);
  }
}

model::ModelConfig peek_config(const std::string& path) {
  const Container c = read_container(path);
  return config_from_json(c.manifest.at("config"));
}

}  // namespace kws::checkpoint
