#include "kgeformer/kgeformer.h"

#include <cstdlib>
#include <cstring>
#include <exception>
#include <new>
#include <string>

#include "commands.hpp"
#include "kgeformer/checkpoint.hpp"
#include "kgeformer/config.hpp"

struct kgf_config {
  kgeformer::RunConfig value;
};

struct kgf_model {
  kgeformer::Checkpoint checkpoint;
};

namespace {

thread_local std::string last_error;

kgf_status status_for(kgeformer::ErrorKind kind) {
  using kgeformer::ErrorKind;
  switch (kind) {
    case ErrorKind::shape: return KGF_ERR_SHAPE;
    case ErrorKind::config: return KGF_ERR_CONFIG;
    case ErrorKind::parse: return KGF_ERR_PARSE;
    case ErrorKind::validation: return KGF_ERR_VALIDATION;
    case ErrorKind::io: return KGF_ERR_IO;
    case ErrorKind::contract: return KGF_ERR_CONTRACT;
    case ErrorKind::divergence: return KGF_ERR_DIVERGENCE;
  }
  return KGF_ERR_INTERNAL;
}

template <typename F>
kgf_status guarded(F&& body) {
  last_error.clear();
  try {
    body();
    return KGF_OK;
  } catch (const kgeformer::Error& e) {
    last_error = e.what();
    return status_for(e.kind());
  } catch (const std::bad_alloc&) {
    last_error = "out of memory";
    return KGF_ERR_INTERNAL;
  } catch (const std::exception& e) {
    last_error = e.what();
    return KGF_ERR_INTERNAL;
  }
}

kgf_status invalid(const char* what) {
  last_error = std::string("invalid argument: ") + what;
  return KGF_ERR_INVALID_ARGUMENT;
}

char* dup(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string str(const char* s) { return s ? s : ""; }

kgeformer::LogFn make_log(kgf_log_fn log, void* user) {
  if (!log) return {};
  return [log, user](const std::string& line) { log(line.c_str(), user); };
}

}  // namespace

extern "C" {

const char* kgf_version(void) { return "0.1.0"; }

const char* kgf_status_name(kgf_status status) {
  switch (status) {
    case KGF_OK: return "ok";
    case KGF_ERR_SHAPE: return "shape error";
    case KGF_ERR_CONFIG: return "config error";
    case KGF_ERR_PARSE: return "parse error";
    case KGF_ERR_VALIDATION: return "validation error";
    case KGF_ERR_IO: return "io error";
    case KGF_ERR_CONTRACT: return "contract violation";
    case KGF_ERR_DIVERGENCE: return "divergence";
    case KGF_ERR_INVALID_ARGUMENT: return "invalid argument";
    case KGF_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* kgf_last_error(void) { return last_error.c_str(); }

int kgf_exit_code(kgf_status status) {
  switch (status) {
    case KGF_OK: return 0;
    case KGF_ERR_CONFIG:
    case KGF_ERR_VALIDATION:
    case KGF_ERR_PARSE:
    case KGF_ERR_IO:
    case KGF_ERR_SHAPE:
    case KGF_ERR_INVALID_ARGUMENT: return 2;
    case KGF_ERR_DIVERGENCE: return 3;
    default: return 1;
  }
}

void kgf_string_free(char* s) { std::free(s); }

kgf_status kgf_config_create(kgf_config** out) {
  if (!out) return invalid("out is NULL");
  return guarded([&] { *out = new kgf_config(); });
}

void kgf_config_destroy(kgf_config* config) { delete config; }

kgf_status kgf_config_load_file(kgf_config* config, const char* path) {
  if (!config || !path) return invalid("config and path are required");
  return guarded([&] { config->value.merge_file(path); });
}

kgf_status kgf_config_set(kgf_config* config, const char* key, const char* value) {
  if (!config || !key || !value) return invalid("config, key and value are required");
  return guarded([&] { config->value.set(key, value); });
}

kgf_status kgf_config_get(const kgf_config* config, const char* key, char** value) {
  if (!config || !key || !value) return invalid("config, key and value are required");
  return guarded([&] { *value = dup(config->value.get(key)); });
}

kgf_status kgf_config_canonical(const kgf_config* config, char** text) {
  if (!config || !text) return invalid("config and text are required");
  return guarded([&] { *text = dup(config->value.canonical()); });
}

kgf_status kgf_config_hash(const kgf_config* config, char** hash) {
  if (!config || !hash) return invalid("config and hash are required");
  return guarded([&] { *hash = dup(config->value.hash()); });
}

kgf_status kgf_train(const kgf_config* config, kgf_log_fn log, void* user, char** result_json) {
  if (!config) return invalid("config is NULL");
  return guarded([&] {
    const auto result = kgeformer::cmd_train(config->value, make_log(log, user));
    if (result_json) *result_json = dup(result.dump(2));
  });
}

kgf_status kgf_evaluate(const char* checkpoint_dir, const char* data_path, const char* dump_csv,
                        const char* metrics_path, const char* expected_hash, int force, char** result_json) {
  if (!checkpoint_dir) return invalid("checkpoint_dir is NULL");
  return guarded([&] {
    kgeformer::EvaluateArgs args;
    args.checkpoint = checkpoint_dir;
    args.data = str(data_path);
    args.dump_csv = str(dump_csv);
    args.metrics_path = str(metrics_path);
    args.expected_hash = str(expected_hash);
    args.force = force != 0;
    const auto result = kgeformer::cmd_evaluate(args);
    if (result_json) *result_json = dup(result.dump(2));
  });
}

kgf_status kgf_compare(const kgf_config* config, kgf_log_fn log, void* user, char** report_json) {
  if (!config) return invalid("config is NULL");
  return guarded([&] {
    const auto result = kgeformer::cmd_compare(config->value, make_log(log, user));
    if (report_json) *report_json = dup(result.dump(2));
  });
}

kgf_status kgf_synthesize(const kgf_config* config, const char* csv_path, const char* graph_path, char** result_json) {
  if (!config) return invalid("config is NULL");
  return guarded([&] {
    const auto result = kgeformer::cmd_synthesize(config->value, str(csv_path), str(graph_path));
    if (result_json) *result_json = dup(result.dump(2));
  });
}

kgf_status kgf_inspect_graph(const char* graph_path, const char* data_path, char** report_text) {
  if (!graph_path) return invalid("graph_path is NULL");
  return guarded([&] {
    const std::string text = kgeformer::cmd_inspect_graph(graph_path, str(data_path));
    if (report_text) *report_text = dup(text);
  });
}

kgf_status kgf_model_load(const char* checkpoint_dir, int force, kgf_model** out) {
  if (!checkpoint_dir || !out) return invalid("checkpoint_dir and out are required");
  return guarded([&] { *out = new kgf_model{kgeformer::load_checkpoint(checkpoint_dir, {}, force != 0)}; });
}

void kgf_model_destroy(kgf_model* model) { delete model; }

kgf_status kgf_model_parameter_count(const kgf_model* model, size_t* count) {
  if (!model || !count) return invalid("model and count are required");
  *count = model->checkpoint.model->parameter_count();
  last_error.clear();
  return KGF_OK;
}

kgf_status kgf_model_info(const kgf_model* model, char** info_json) {
  if (!model || !info_json) return invalid("model and info_json are required");
  return guarded([&] {
    const auto& meta = model->checkpoint.meta;
    nlohmann::json tensors = nlohmann::json::array();
    for (const auto& [name, t] : model->checkpoint.model->parameters().entries()) {
      tensors.push_back({{"name", name}, {"shape", t.shape()}});
    }
    nlohmann::json info = {{"config_hash", meta.config_hash},
                           {"dataset", meta.dataset},
                           {"columns", meta.columns},
                           {"use_kge", meta.model.use_kge},
                           {"seq_len", meta.model.seq_len},
                           {"label_len", meta.model.label_len},
                           {"pred_len", meta.model.pred_len},
                           {"d_model", meta.model.d_model},
                           {"parameter_count", model->checkpoint.model->parameter_count()},
                           {"kge_parameter_count", meta.model.use_kge ? kgeformer::kge_parameter_count(meta.model) : 0},
                           {"tensors", tensors}};
    *info_json = dup(info.dump(2));
  });
}

kgf_status kgf_model_save(const kgf_model* model, const char* checkpoint_dir) {
  if (!model || !checkpoint_dir) return invalid("model and checkpoint_dir are required");
  return guarded([&] { kgeformer::save_checkpoint(checkpoint_dir, *model->checkpoint.model, model->checkpoint.meta); });
}

}  // extern "C"
