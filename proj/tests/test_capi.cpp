// Exercises the shared library strictly through its C interface.
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <memory>
#include <set>
#include <string>
#include <vector>

#include "kgeformer/kgeformer.h"

using nlohmann::json;

namespace {

struct Str {
  char* p = nullptr;
  ~Str() { kgf_string_free(p); }
  std::string s() const { return p ? p : ""; }
};

using Config = std::unique_ptr<kgf_config, decltype(&kgf_config_destroy)>;

Config make_config(const std::vector<std::pair<const char*, std::string>>& kv) {
  kgf_config* raw = nullptr;
  REQUIRE(kgf_config_create(&raw) == KGF_OK);
  Config c(raw, &kgf_config_destroy);
  for (const auto& [k, v] : kv) REQUIRE(kgf_config_set(c.get(), k, v.c_str()) == KGF_OK);
  return c;
}

std::string scratch(const std::string& name) {
  const auto d = std::filesystem::temp_directory_path() / ("kgeformer_capi_" + name);
  std::filesystem::remove_all(d);
  return d.string();
}

std::vector<std::pair<const char*, std::string>> tiny(const std::string& out) {
  return {{"data", "synthetic"}, {"synth_channels", "3"}, {"synth_length", "300"}, {"seq_len", "8"},
          {"label_len", "4"},    {"pred_len", "4"},       {"d_model", "8"},        {"n_heads", "2"},
          {"e_layers", "1"},     {"d_layers", "1"},       {"d_ff", "16"},          {"max_epochs", "1"},
          {"patience", "1"},     {"steps_per_epoch", "3"}, {"batch_size", "8"},    {"out", out}};
}

}  // namespace

TEST_SUITE("c_api") {
  TEST_CASE("status names and exit codes") {
    CHECK(std::string(kgf_status_name(KGF_OK)) == "ok");
    CHECK(kgf_exit_code(KGF_OK) == 0);
    CHECK(kgf_exit_code(KGF_ERR_CONFIG) == 2);
    CHECK(kgf_exit_code(KGF_ERR_VALIDATION) == 2);
    CHECK(kgf_exit_code(KGF_ERR_DIVERGENCE) == 3);
    CHECK(kgf_exit_code(KGF_ERR_INTERNAL) == 1);
    CHECK(std::string(kgf_version()).size() > 0);
  }

  TEST_CASE("config handle") {
    auto c = make_config({{"seq-len", "96"}});
    Str v, h1, h2, text;
    REQUIRE(kgf_config_get(c.get(), "seq_len", &v.p) == KGF_OK);
    CHECK(v.s() == "96");
    REQUIRE(kgf_config_hash(c.get(), &h1.p) == KGF_OK);
    REQUIRE(kgf_config_set(c.get(), "use_kge", "true") == KGF_OK);
    REQUIRE(kgf_config_hash(c.get(), &h2.p) == KGF_OK);
    CHECK(h1.s() == h2.s());
    REQUIRE(kgf_config_canonical(c.get(), &text.p) == KGF_OK);
    CHECK(text.s().find("seq_len = 96") != std::string::npos);

    CHECK(kgf_config_set(c.get(), "bogus", "1") == KGF_ERR_CONFIG);
    CHECK(std::string(kgf_last_error()).find("bogus") != std::string::npos);
    CHECK(kgf_config_set(nullptr, "seq_len", "1") == KGF_ERR_INVALID_ARGUMENT);
    CHECK(kgf_config_create(nullptr) == KGF_ERR_INVALID_ARGUMENT);
    CHECK(kgf_config_load_file(c.get(), "/nonexistent.cfg") == KGF_ERR_IO);
  }

  TEST_CASE("train, evaluate, model handle") {
    const auto out = scratch("train");
    auto c = make_config(tiny(out));
    std::vector<std::string> lines;
    Str result;
    const auto log = [](const char* line, void* user) { static_cast<std::vector<std::string>*>(user)->push_back(line); };
    REQUIRE(kgf_train(c.get(), log, &lines, &result.p) == KGF_OK);
    CHECK_FALSE(lines.empty());
    const auto trained = json::parse(result.s());
    for (const char* f : {"checkpoint.json", "checkpoint.bin", "config.txt", "history.jsonl", "metrics.json"})
      CHECK(std::filesystem::exists(out + "/" + f));

    Str ev;
    const std::string dump = out + "/dump.csv";
    REQUIRE(kgf_evaluate(out.c_str(), nullptr, dump.c_str(), nullptr, nullptr, 0, &ev.p) == KGF_OK);
    const auto evaluated = json::parse(ev.s());
    CHECK(evaluated["test_mse"] == trained["test_mse"]);
    CHECK(evaluated["test_mae"] == trained["test_mae"]);
    CHECK(evaluated["config_hash"] == trained["config_hash"]);
    std::ifstream in(dump);
    std::size_t rows = 0;
    for (std::string line; std::getline(in, line);) ++rows;
    CHECK(rows - 1 == evaluated["windows"].get<std::size_t>() * 4 * 3);
    CHECK(evaluated["dump_rows"] == rows - 1);

    Str ev2;
    CHECK(kgf_evaluate(out.c_str(), nullptr, nullptr, nullptr, "0123456789abcdef", 0, &ev2.p) == KGF_ERR_VALIDATION);
    CHECK(kgf_evaluate(out.c_str(), nullptr, nullptr, nullptr, "0123456789abcdef", 1, &ev2.p) == KGF_OK);

    kgf_model* m = nullptr;
    REQUIRE(kgf_model_load(out.c_str(), 0, &m) == KGF_OK);
    std::unique_ptr<kgf_model, decltype(&kgf_model_destroy)> model(m, &kgf_model_destroy);
    size_t count = 0;
    REQUIRE(kgf_model_parameter_count(m, &count) == KGF_OK);
    CHECK(count == trained["parameter_count"].get<std::size_t>());
    Str info;
    REQUIRE(kgf_model_info(m, &info.p) == KGF_OK);
    CHECK(json::parse(info.s())["parameter_count"] == count);
    const auto copy = scratch("copy");
    REQUIRE(kgf_model_save(m, copy.c_str()) == KGF_OK);
    kgf_model* m2 = nullptr;
    REQUIRE(kgf_model_load(copy.c_str(), 0, &m2) == KGF_OK);
    kgf_model_destroy(m2);
  }

  TEST_CASE("rerunning the same config gives the same metrics") {
    Str a, b;
    auto c1 = make_config(tiny(scratch("rerun_a")));
    auto c2 = make_config(tiny(scratch("rerun_b")));
    REQUIRE(kgf_train(c1.get(), nullptr, nullptr, &a.p) == KGF_OK);
    REQUIRE(kgf_train(c2.get(), nullptr, nullptr, &b.p) == KGF_OK);
    CHECK(json::parse(a.s())["test_mse"] == json::parse(b.s())["test_mse"]);
  }

  TEST_CASE("config errors surface before training") {
    auto kv = tiny(scratch("nograph"));
    kv.push_back({"use_kge", "true"});
    kv.push_back({"data", "/nonexistent.csv"});
    auto c = make_config(kv);
    CHECK(kgf_train(c.get(), nullptr, nullptr, nullptr) == KGF_ERR_CONFIG);
    CHECK(std::string(kgf_last_error()).find("graph") != std::string::npos);

    auto cmp = make_config(tiny(scratch("noseeds")));
    CHECK(kgf_compare(cmp.get(), nullptr, nullptr, nullptr) == KGF_ERR_CONFIG);
  }

  TEST_CASE("compare report carries per-arm parameter counts and a shared hash") {
    const auto out = scratch("compare");
    auto kv = tiny(out);
    kv.push_back({"seeds", "1,2"});
    auto c = make_config(kv);
    Str report;
    REQUIRE(kgf_compare(c.get(), nullptr, nullptr, &report.p) == KGF_OK);
    const auto r = json::parse(report.s());
    CHECK(r["parameter_delta_ok"] == true);
    // V*D + (L + label_len + H)*D with V = 3, D = 8, L = 8, label_len = 4, H = 4
    CHECK(r["expected_kge_parameter_delta"] == 3 * 8 + (8 + 4 + 4) * 8);
    std::size_t n = 0;
    std::set<std::string> hashes;
    std::ifstream lines(out + "/compare.jsonl");
    for (std::string line; std::getline(lines, line);) {
      hashes.insert(json::parse(line)["config_hash"].get<std::string>());
      ++n;
    }
    CHECK(n == 6);
    CHECK(hashes.size() == 1);
  }

  TEST_CASE("synthesize and inspect-graph") {
    const auto out = scratch("synth");
    auto c = make_config(tiny(out));
    Str res;
    REQUIRE(kgf_synthesize(c.get(), nullptr, nullptr, &res.p) == KGF_OK);
    const std::string csv = out + "/synthetic.csv", graph = out + "/synthetic.graph";
    CHECK(std::filesystem::exists(csv));
    Str text;
    REQUIRE(kgf_inspect_graph(graph.c_str(), csv.c_str(), &text.p) == KGF_OK);
    CHECK(text.s().find("nodes (V): 3") != std::string::npos);

    std::ofstream(out + "/empty.graph") << "node x0\nnode x1\nnode x2\n";
    Str empty;
    REQUIRE(kgf_inspect_graph((out + "/empty.graph").c_str(), csv.c_str(), &empty.p) == KGF_OK);
    CHECK(empty.s().find("warning") != std::string::npos);

    std::ofstream(out + "/wrong.graph") << "node x0\nnode y\n";
    Str bad;
    CHECK(kgf_inspect_graph((out + "/wrong.graph").c_str(), csv.c_str(), &bad.p) == KGF_ERR_VALIDATION);
    CHECK(kgf_inspect_graph(nullptr, nullptr, &bad.p) == KGF_ERR_INVALID_ARGUMENT);
  }
}
