#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <json.hpp>

#include "kgeformer/checkpoint.hpp"
#include "kgeformer/config.hpp"
#include "kgeformer/error.hpp"
#include "kgeformer/io.hpp"
#include "support.hpp"

using namespace kgeformer;
using namespace testing;

namespace {

ErrorKind kind_of(const std::function<void()>& f, std::string* message = nullptr) {
  try {
    f();
  } catch (const Error& e) {
    if (message) *message = e.what();
    return e.kind();
  }
  FAIL("expected an error");
  return ErrorKind::contract;
}

struct Saved {
  std::string dir;
  CheckpointMeta meta;
  std::unique_ptr<Model<float>> model;
};

Saved save_micro(const std::string& name) {
  Saved s;
  s.dir = temp_dir(name);
  s.meta.config.set("seq_len", "8");
  s.meta.config.set("use_kge", "true");
  s.meta.config_hash = s.meta.config.hash();
  s.meta.model = micro_config(true);
  s.meta.dataset = "synthetic";
  s.meta.columns = {"x0", "x1", "x2"};
  s.meta.scaler = StandardScaler({0.5, -1, 2}, {1, 2, 3});
  s.meta.adjacency = adjacency_from(3, {0, 1, 0, 0, 0, 1, 1, 0, 0});
  s.model = std::make_unique<Model<float>>(s.meta.model, 17);
  s.model->set_adjacency(*s.meta.adjacency);
  save_checkpoint(s.dir, *s.model, s.meta);
  return s;
}

void edit_manifest(const std::string& dir, const std::function<void(nlohmann::json&)>& f) {
  const std::string path = dir + "/" + kCheckpointManifest;
  auto j = nlohmann::json::parse(read_file(path));
  f(j);
  write_file_atomic(path, j.dump(2));
}

}  // namespace

TEST_SUITE("config") {
  TEST_CASE("file < flags precedence and key normalization") {
    RunConfig c;
    c.merge_text("# comment\nseq-len = 96   # trailing\npred_len=24\n\nd_model = 32\n");
    CHECK(c.model.seq_len == 96);
    CHECK(c.model.pred_len == 24);
    c.set("seq-len", "48");
    CHECK(c.get("seq_len") == "48");
    CHECK(c.model.d_model == 32);
  }

  TEST_CASE("unknown keys and bad values are config errors with line numbers") {
    RunConfig c;
    std::string msg;
    CHECK(kind_of([&] { c.set("sequence_length", "3"); }) == ErrorKind::config);
    CHECK(kind_of([&] { c.merge_text("seq_len = 4\nbatch_size = many\n"); }, &msg) == ErrorKind::config);
    CHECK(msg.find("config line 2") != std::string::npos);
    CHECK(kind_of([&] { c.merge_text("no equals sign\n"); }) == ErrorKind::config);
    CHECK(kind_of([&] { c.set("use_kge", "maybe"); }) == ErrorKind::config);
    CHECK(kind_of([&] { c.merge_file("/nonexistent.cfg"); }) == ErrorKind::io);
  }

  TEST_CASE("every key round-trips through get/set and the canonical form") {
    RunConfig c;
    c.set("seeds", "1..3");
    c.set("learning_rate", "0.00025");
    RunConfig d;
    d.merge_text(c.canonical());
    CHECK(d.canonical() == c.canonical());
    CHECK(d.hash() == c.hash());
    const auto entries = c.entries();
    CHECK(entries.size() == run_config_keys().size());
    CHECK(std::is_sorted(entries.begin(), entries.end()));
  }

  TEST_CASE("hash ignores arm and output keys only") {
    RunConfig a;
    a.data = "x.csv";
    RunConfig b = a;
    b.set("use_kge", "true");
    b.set("graph", "g.graph");
    b.set("out", "elsewhere");
    b.set("jobs", "4");
    CHECK(a.hash() == b.hash());
    CHECK(a.hash().size() == 16);
    for (const char* k : {"use_kge", "graph", "out", "jobs"}) CHECK(is_hash_excluded_key(k));
    RunConfig c = a;
    c.set("seed", "2");
    CHECK(c.hash() != a.hash());
    RunConfig d = a;
    d.set("pred_len", "192");
    CHECK(d.hash() != a.hash());
  }

  TEST_CASE("seed lists") {
    CHECK(parse_seed_list("1..5") == std::vector<std::uint64_t>{1, 2, 3, 4, 5});
    CHECK(parse_seed_list("[1, 2]") == std::vector<std::uint64_t>{1, 2});
    CHECK(parse_seed_list("7,1..2") == std::vector<std::uint64_t>{7, 1, 2});
    CHECK(parse_seed_list("[]").empty());
    CHECK(kind_of([] { parse_seed_list("5..1"); }) == ErrorKind::config);
    CHECK(kind_of([] { parse_seed_list("a"); }) == ErrorKind::config);
  }

  TEST_CASE("validation") {
    RunConfig c;
    c.data = "x.csv";
    c.set("use_kge", "true");
    CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
    c.set("graph", "g.graph");
    c.validate();
    c.set("patience", "50");
    CHECK(kind_of([&] { c.validate(); }) == ErrorKind::config);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save -> load reproduces every parameter bit-exactly") {
    const auto s = save_micro("ck_roundtrip");
    const auto ck = load_checkpoint(s.dir);
    CHECK(bit_equal<float>(ck.model->parameters().snapshot(), s.model->parameters().snapshot()));
    CHECK(ck.meta.config_hash == s.meta.config_hash);
    CHECK(ck.meta.columns == s.meta.columns);
    CHECK(ck.meta.scaler.mean() == s.meta.scaler.mean());
    CHECK(ck.meta.scaler.stddev() == s.meta.scaler.stddev());
    CHECK(ck.meta.adjacency == s.meta.adjacency);
    CHECK(ck.meta.config.canonical() == s.meta.config.canonical());
    const auto batch = sample_batch<float>(sine_series(3, 64, 0.1), s.meta.model.window_shape(), 2);
    CHECK(bit_equal<float>(ck.model->forward(batch).data(), s.model->forward(batch).data()));
    CHECK(std::filesystem::file_size(s.dir + "/" + kCheckpointBlob) == 4 * s.model->parameter_count());
  }

  TEST_CASE("manifest lists tensors with shape, dtype and offset") {
    const auto s = save_micro("ck_manifest");
    const auto j = nlohmann::json::parse(read_file(s.dir + "/" + kCheckpointManifest));
    CHECK(j["format_version"] == kCheckpointFormatVersion);
    CHECK(j["config_hash"] == s.meta.config_hash);
    std::size_t offset = 0;
    for (const auto& t : j["tensors"]) {
      CHECK(t["dtype"] == "f32");
      CHECK(t["offset"].get<std::size_t>() == offset);
      std::size_t n = 4;
      for (auto d : t["shape"]) n *= d.get<std::size_t>();
      offset += n;
    }
    CHECK(offset == 4 * s.model->parameter_count());
  }

  TEST_CASE("config hash mismatch is refused unless forced") {
    auto s = save_micro("ck_hash");
    std::string msg;
    CHECK(kind_of([&] { load_checkpoint(s.dir, "0000000000000000"); }, &msg) == ErrorKind::validation);
    CHECK(msg.find(s.meta.config_hash) != std::string::npos);
    load_checkpoint(s.dir, "0000000000000000", true);
    edit_manifest(s.dir, [](nlohmann::json& j) { j["config_hash"] = "ffffffffffffffff"; });
    CHECK(kind_of([&] { load_checkpoint(s.dir); }) == ErrorKind::validation);
    CHECK(load_checkpoint(s.dir, {}, true).model->parameter_count() == s.model->parameter_count());
  }

  TEST_CASE("corrupt checkpoints are rejected") {
    auto s = save_micro("ck_corrupt");
    {
      std::ofstream blob(s.dir + "/" + kCheckpointBlob, std::ios::binary | std::ios::trunc);
      blob << "short";
    }
    CHECK_THROWS_AS(load_checkpoint(s.dir), Error);
    s = save_micro("ck_version");
    edit_manifest(s.dir, [](nlohmann::json& j) { j["format_version"] = 99; });
    CHECK_THROWS_AS(load_checkpoint(s.dir), Error);
    CHECK(kind_of([] { load_checkpoint("/nonexistent/ck"); }) == ErrorKind::io);
  }

  TEST_CASE("atomic write leaves no temp file and creates parents") {
    const auto dir = temp_dir("atomic");
    write_file_atomic(dir + "/a/b/c.txt", "hello");
    CHECK(read_file(dir + "/a/b/c.txt") == "hello");
    std::size_t files = 0;
    for (const auto& e : std::filesystem::directory_iterator(dir + "/a/b")) files += e.is_regular_file();
    CHECK(files == 1);
  }
}
