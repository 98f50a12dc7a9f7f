#include "kgeformer/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <filesystem>
#include <json.hpp>

#include "kgeformer/io.hpp"

namespace kgeformer {

using nlohmann::json;

namespace {

json model_to_json(const ModelConfig& m) {
  return {{"d_model", m.d_model},       {"n_heads", m.n_heads},
          {"d_k", m.d_k},               {"d_v", m.d_v},
          {"enc_layers", m.enc_layers}, {"dec_layers", m.dec_layers},
          {"d_ff", m.d_ff},             {"dropout", m.dropout},
          {"seq_len", m.seq_len},       {"label_len", m.label_len},
          {"pred_len", m.pred_len},     {"channels", m.channels},
          {"graph_nodes", m.graph_nodes}, {"use_kge", m.use_kge},
          {"kge_reduce", to_string(m.kge_reduce)}, {"kernel_width", m.kernel_width},
          {"freq", to_string(m.freq)}};
}

ModelConfig model_from_json(const json& j) {
  ModelConfig m;
  m.d_model = j.at("d_model");
  m.n_heads = j.at("n_heads");
  m.d_k = j.at("d_k");
  m.d_v = j.at("d_v");
  m.enc_layers = j.at("enc_layers");
  m.dec_layers = j.at("dec_layers");
  m.d_ff = j.at("d_ff");
  m.dropout = j.at("dropout");
  m.seq_len = j.at("seq_len");
  m.label_len = j.at("label_len");
  m.pred_len = j.at("pred_len");
  m.channels = j.at("channels");
  m.graph_nodes = j.at("graph_nodes");
  m.use_kge = j.at("use_kge");
  m.kge_reduce = parse_kge_reduce(j.at("kge_reduce").get<std::string>());
  m.kernel_width = j.at("kernel_width");
  m.freq = parse_frequency(j.at("freq").get<std::string>());
  return m;
}

void put_f32(std::string& out, float v) {
  std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
}

float get_f32(const std::string& in, std::size_t offset) {
  std::uint32_t bits = 0;
  for (int i = 0; i < 4; ++i) bits |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[offset + i])) << (8 * i);
  return std::bit_cast<float>(bits);
}

std::string join(const std::string& dir, const char* file) { return (std::filesystem::path(dir) / file).string(); }

}  // namespace

void save_checkpoint(const std::string& dir, const Model<float>& model, const CheckpointMeta& meta) {
  json manifest;
  manifest["format"] = "kgeformer-checkpoint";
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["config_hash"] = meta.config_hash;
  json cfg = json::object();
  for (const auto& [k, v] : meta.config.entries()) cfg[k] = v;
  manifest["config"] = cfg;
  manifest["model"] = model_to_json(meta.model);
  manifest["dataset"] = meta.dataset;
  manifest["columns"] = meta.columns;
  manifest["scaler"] = {{"mean", meta.scaler.mean()}, {"std", meta.scaler.stddev()}};
  if (meta.adjacency) {
    std::vector<std::string> rows;
    for (std::size_t i = 0; i < meta.adjacency->size; ++i) {
      std::string r;
      for (std::size_t j = 0; j < meta.adjacency->size; ++j) r.push_back(meta.adjacency->at(i, j) ? '1' : '0');
      rows.push_back(r);
    }
    manifest["adjacency"] = {{"nodes", meta.adjacency->node_order}, {"rows", rows}};
  } else {
    manifest["adjacency"] = nullptr;
  }
  manifest["dtype"] = "f32";
  manifest["byte_order"] = "little";

  std::string blob;
  json tensors = json::array();
  for (const auto& [name, tensor] : model.parameters().entries()) {
    tensors.push_back({{"name", name}, {"shape", tensor.shape()}, {"dtype", "f32"}, {"offset", blob.size()}});
    for (float v : tensor.data()) put_f32(blob, v);
  }
  manifest["tensors"] = tensors;
  manifest["blob_bytes"] = blob.size();

  write_file_atomic(join(dir, kCheckpointBlob), blob);
  write_file_atomic(join(dir, kCheckpointManifest), manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& dir, const std::string& expected_hash, bool force) {
  const std::string manifest_path = join(dir, kCheckpointManifest);
  json manifest;
  try {
    manifest = json::parse(read_file(manifest_path));
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, manifest_path + ": " + e.what());
  }
  Checkpoint ck;
  try {
    if (manifest.value("format", "") != "kgeformer-checkpoint") fail(ErrorKind::parse, manifest_path + ": not a checkpoint manifest");
    const int version = manifest.at("format_version");
    if (version != kCheckpointFormatVersion) {
      fail(ErrorKind::validation, manifest_path + ": unsupported format version " + std::to_string(version));
    }
    for (const auto& [k, v] : manifest.at("config").items()) ck.meta.config.set(k, v.get<std::string>());
    ck.meta.config_hash = manifest.at("config_hash");
    ck.meta.model = model_from_json(manifest.at("model"));
    ck.meta.dataset = manifest.at("dataset");
    ck.meta.columns = manifest.at("columns").get<std::vector<std::string>>();
    ck.meta.scaler = StandardScaler(manifest.at("scaler").at("mean").get<std::vector<double>>(),
                                    manifest.at("scaler").at("std").get<std::vector<double>>());
    const json& adj = manifest.at("adjacency");
    if (!adj.is_null()) {
      AdjacencyMatrix a;
      a.node_order = adj.at("nodes").get<std::vector<std::string>>();
      a.size = a.node_order.size();
      for (const auto& row : adj.at("rows")) {
        const std::string r = row.get<std::string>();
        if (r.size() != a.size) fail(ErrorKind::parse, manifest_path + ": adjacency row has wrong length");
        for (char c : r) a.values.push_back(c == '1' ? 1 : 0);
      }
      if (a.values.size() != a.size * a.size) fail(ErrorKind::parse, manifest_path + ": adjacency is not square");
      ck.meta.adjacency = std::move(a);
    }
  } catch (const json::exception& e) {
    fail(ErrorKind::parse, manifest_path + ": " + e.what());
  }

  const std::string actual = ck.meta.config.hash();
  if (!force && actual != ck.meta.config_hash) {
    fail(ErrorKind::validation, "checkpoint config hash " + ck.meta.config_hash + " does not match its config (" +
                                    actual + "); pass force to load anyway");
  }
  if (!force && !expected_hash.empty() && expected_hash != ck.meta.config_hash) {
    fail(ErrorKind::validation, "checkpoint config hash " + ck.meta.config_hash + " differs from the requested config (" +
                                    expected_hash + "); pass force to load anyway");
  }

  ck.model = std::make_unique<Model<float>>(ck.meta.model, ck.meta.config.train.seed);
  if (ck.meta.adjacency) ck.model->set_adjacency(*ck.meta.adjacency);
  const std::string blob = read_file(join(dir, kCheckpointBlob));
  if (blob.size() != manifest.value("blob_bytes", std::size_t{0})) {
    fail(ErrorKind::validation, "checkpoint blob has " + std::to_string(blob.size()) + " bytes, manifest says " +
                                    std::to_string(manifest.value("blob_bytes", std::size_t{0})));
  }
  auto& entries = ck.model->parameters().entries();
  const json& tensors = manifest.at("tensors");
  if (tensors.size() != entries.size()) {
    fail(ErrorKind::validation, "checkpoint has " + std::to_string(tensors.size()) + " tensors, model expects " +
                                    std::to_string(entries.size()));
  }
  for (std::size_t i = 0; i < entries.size(); ++i) {
    auto& [name, tensor] = entries[i];
    const json& t = tensors[i];
    if (t.at("name") != name) fail(ErrorKind::validation, "checkpoint tensor " + std::to_string(i) + " is '" + t.at("name").get<std::string>() + "', expected '" + name + "'");
    if (t.at("shape").get<Shape>() != tensor.shape()) {
      fail(ErrorKind::validation, "checkpoint tensor '" + name + "' has shape " + shape_str(t.at("shape").get<Shape>()) +
                                      ", model expects " + shape_str(tensor.shape()));
    }
    const std::size_t offset = t.at("offset");
    auto values = tensor.mutable_data();
    if (offset + values.size() * 4 > blob.size()) fail(ErrorKind::validation, "checkpoint tensor '" + name + "' overruns the blob");
    for (std::size_t k = 0; k < values.size(); ++k) values[k] = get_f32(blob, offset + 4 * k);
  }
  return ck;
}

}  // namespace kgeformer
