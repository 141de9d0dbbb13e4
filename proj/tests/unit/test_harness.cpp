// Copyright 2026 The nrrdd Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cmath>
#include <cstdlib>
#include <fstream>

#include "doctest.h"
#include "nrrdd/binio.hpp"
#include "nrrdd/harness.hpp"
#include "support.hpp"

using namespace nrrdd;
using nrrdd::testing::scratch_dir;

namespace {

namespace fs = std::filesystem;

// Shared tiny archive, generated once per process.
const fs::path& tiny_root() {
  static const fs::path root = [] {
    auto d = scratch_dir("harness_data");
    GeneratorConfig g;
    g.train_per_class = 24;
    g.test_per_class = 6;
    g.seed = 3;
    generate_shapes(d, g);
    return d;
  }();
  return root;
}

KeyValueConfig tiny_config(const fs::path& out) {
  KeyValueConfig kv;
  kv.set("out", out.string());
  kv.set("data.root", tiny_root().string());
  kv.set("data.train_per_class", "24");
  kv.set("data.test_per_class", "6");
  kv.set("data.resize", "8");
  kv.set("teacher.epochs", "2");
  kv.set("teacher.width", "8");
  kv.set("student.width", "8");
  kv.set("ipc", "2");
  kv.set("cidd.k", "6");
  kv.set("refine.iterations", "3");
  kv.set("refine.batch", "10");
  kv.set("transfer.epochs", "2");
  kv.set("transfer.batch", "10");
  return kv;
}

bool same_bytes(const fs::path& a, const fs::path& b) { return read_file(a) == read_file(b); }

}  // namespace

TEST_SUITE("harness") {
  TEST_CASE("key value config parsing") {
    auto kv = KeyValueConfig::parse("# comment\n a = 1\nb.c=hello world \n\n");
    CHECK(kv.get_int("a") == 1);
    CHECK(kv.get("b.c") == "hello world");
    kv.assign("a=2.5");
    CHECK(kv.get_double("a") == 2.5);
    CHECK_THROWS_AS(kv.get_int("a"), Error);
    CHECK_THROWS_AS(kv.get("missing"), Error);
    CHECK_THROWS_AS(KeyValueConfig::parse("novalue\n"), Error);
    CHECK_THROWS_AS(kv.assign("noequals"), Error);
    kv.set("flag", "yes");
    CHECK(kv.get_bool("flag"));
    kv.set("list", "3, 1,2");
    CHECK(kv.get_int_list("list") == std::vector<int>{3, 1, 2});
    CHECK(kv.select({"b."}).entries().size() == 1);
    CHECK(KeyValueConfig::parse(kv.to_text()).to_text() == kv.to_text());
    CHECK(kv.digest().size() == 8);
  }

  TEST_CASE("experiment config validation and defaults") {
    auto cfg = ExperimentConfig::from({});
    CHECK(cfg.refine.iterations == 2000);
    CHECK(cfg.refine.lr == 0.05);
    CHECK(cfg.refine.alpha_bn == 10.0);
    CHECK(cfg.transfer.epochs == 300);
    CHECK(cfg.transfer.lr == 1e-3);
    CHECK(cfg.transfer.batch == 100);
    CHECK(cfg.cidd.ipc == 10);
    CHECK(cfg.cidd.beta == 1);
    auto bad = [](const char* a) {
      KeyValueConfig kv;
      kv.assign(a);
      return ExperimentConfig::from(kv);
    };
    for (const char* a : {"nope=1", "ipc=0", "beta=3", "refine.epsilon=1.5", "label.mode=xx",
                          "mix=blend", "refine.iterations=-1", "transfer.schedule=step"}) {
      try {
        bad(a);
        FAIL("accepted " << a);
      } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::kConfig);
      }
    }
    KeyValueConfig kv;
    kv.assign("cidd.init=random_real");
    kv.assign("beta=4");
    CHECK_THROWS_AS(ExperimentConfig::from(kv), Error);

    // Artifact directories follow only the keys that influence them.
    KeyValueConfig a, b;
    b.assign("transfer.lr=0.5");
    auto ca = ExperimentConfig::from(a), cb = ExperimentConfig::from(b);
    CHECK(ca.distill_dir() == cb.distill_dir());
    CHECK(ca.run_id() != cb.run_id());
    b.assign("refine.epsilon=0.3");
    CHECK(ca.teacher_dir() == ExperimentConfig::from(b).teacher_dir());
    CHECK(ca.distill_dir() != ExperimentConfig::from(b).distill_dir());
    CHECK(exit_code_for(ErrorCode::kConfig) == 2);
    CHECK(exit_code_for(ErrorCode::kMissingArtifact) == 3);
    CHECK(exit_code_for(ErrorCode::kIo) == 1);
  }

  TEST_CASE("dataset generation, subset and normalisation") {
    auto raw = read_cifar_split(tiny_root(), true);
    CHECK(raw.num_classes == 10);
    CHECK(raw.count() == 240);
    DatasetSpec spec;
    spec.root = tiny_root();
    spec.classes = {7, 2};
    spec.train_per_class = 5;
    spec.test_per_class = 3;
    spec.resize = 8;
    auto d = load_desk_data(spec);
    CHECK(d.train.size() == 10);
    CHECK(d.test.size() == 6);
    CHECK(d.train.num_classes == 2);
    CHECK(d.train.images.h() == 8);
    CHECK(d.class_ids == std::vector<int>{7, 2});
    // Training channels are standardised by their own statistics.
    for (int c = 0; c < 3; ++c) {
      double s = 0, s2 = 0;
      int n = 0;
      for (int i = 0; i < d.train.size(); ++i)
        for (int y = 0; y < 8; ++y)
          for (int x = 0; x < 8; ++x, ++n) {
            const double v = d.train.images.at(i, c, y, x);
            s += v;
            s2 += v * v;
          }
      CHECK(std::abs(s / n) < 1e-9);
      CHECK(std::abs(s2 / n - 1.0) < 1e-6);
    }
    // Regeneration is byte-identical.
    auto again = scratch_dir("harness_regen");
    GeneratorConfig g;
    g.train_per_class = 24;
    g.test_per_class = 6;
    g.seed = 3;
    generate_shapes(again, g);
    CHECK(same_bytes(again / "data_batch_1.bin", tiny_root() / "data_batch_1.bin"));

    spec.train_per_class = 1000;
    CHECK_THROWS_AS(load_desk_data(spec), Error);
    spec.root = "/definitely/not/here";
    try {
      load_desk_data(spec);
      FAIL("missing root accepted");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::kMissingArtifact);
      CHECK(std::string(e.what()).find("gen-data") != std::string::npos);
    }
  }

  TEST_CASE("hundred-class archive layout") {
    auto d = scratch_dir("harness_c100");
    GeneratorConfig g;
    g.num_classes = 100;
    g.train_per_class = 2;
    g.test_per_class = 1;
    generate_shapes(d, g);
    CHECK(fs::file_size(d / "train.bin") == 200u * 3074u);
    auto raw = read_cifar_split(d, false);
    CHECK(raw.num_classes == 100);
    CHECK(raw.count() == 100);
  }

  TEST_CASE("pipeline artifacts are reproducible and idempotent") {
    const auto out1 = scratch_dir("harness_run1"), out2 = scratch_dir("harness_run2");
    auto c1 = ExperimentConfig::from(tiny_config(out1));
    auto c2 = ExperimentConfig::from(tiny_config(out2));
    CommandOptions opt;

    CHECK_THROWS_AS(cmd_distill(c1, opt), Error);
    CHECK_THROWS_AS(cmd_transfer(c1, opt), Error);

    auto row1 = run_pipeline(c1, opt);
    auto row2 = run_pipeline(c2, opt);
    CHECK(same_bytes(c1.teacher_dir() / "model.nrrm", c2.teacher_dir() / "model.nrrm"));
    CHECK(same_bytes(c1.distill_dir() / "manifest.json", c2.distill_dir() / "manifest.json"));
    CHECK(same_bytes(c1.distill_dir() / "images.f64", c2.distill_dir() / "images.f64"));
    CHECK(same_bytes(c1.store_path(), c2.store_path()));
    CHECK(same_bytes(c1.student_dir() / "model.nrrm", c2.student_dir() / "model.nrrm"));
    CHECK(row1.accuracy == row2.accuracy);
    CHECK(row1.records == 20);

    // Teacher metrics end with the evaluated accuracy.
    const std::string metrics = read_text(c1.teacher_dir() / "metrics.jsonl");
    const auto last = metrics.substr(metrics.rfind("{\"final\""));
    CHECK(last.find("\"test_accuracy\"") != std::string::npos);
    CHECK(std::abs(row1.teacher_accuracy - cmd_eval(c1, "")) < 1e-12);

    // A second run reuses everything and leaves files untouched.
    const auto stamp = fs::last_write_time(c1.teacher_dir() / "model.nrrm");
    auto again = run_pipeline(c1, opt);
    CHECK(fs::last_write_time(c1.teacher_dir() / "model.nrrm") == stamp);
    CHECK(again.accuracy == row1.accuracy);
    CHECK(read_results(c1.results_path()).size() == 1);

    // The manifest round-trips into the same records.
    auto recs = load_manifest(c1.distill_dir() / "manifest.json");
    CHECK(recs.size() == 20);
    for (const auto& r : recs) {
      CHECK(r.refined);
      CHECK(r.partner_idx.has_value());
      CHECK(r.d_org.has_value());
      CHECK(std::isfinite(r.final_loss));
    }

    // Other label modes relabel the same images.
    for (const char* m : {"sl", "cl", "oh"}) {
      auto kv = tiny_config(out1);
      kv.set("label.mode", m);
      auto c = ExperimentConfig::from(kv);
      CHECK(c.distill_dir() == c1.distill_dir());
      run_pipeline(c, opt);
    }
    auto rows = read_results(c1.results_path());
    REQUIRE(rows.size() == 4);
    std::map<std::string, std::uint64_t> bytes;
    for (const auto& r : rows) bytes[r.mode] = r.store_bytes;
    CHECK(bytes["oh"] < bytes["dbr"]);
    CHECK(bytes["dbr"] == bytes["cl"]);
    CHECK(bytes["cl"] < bytes["sl"]);

    // Seeds give distinct rows.
    auto kv = tiny_config(out1);
    kv.set("seed", "7");
    CHECK(run_pipeline(ExperimentConfig::from(kv), opt).seed == 7);
    CHECK(read_results(c1.results_path()).size() == 5);
  }

  TEST_CASE("skip-nrr and no-bn-loss variants") {
    const auto out = scratch_dir("harness_variants");
    auto kv = tiny_config(out);
    kv.set("refine.skip", "true");
    auto c = ExperimentConfig::from(kv);
    run_pipeline(c, {});
    for (const auto& r : load_manifest(c.distill_dir() / "manifest.json")) CHECK_FALSE(r.refined);
    kv = tiny_config(out);
    kv.set("refine.alpha_bn", "0");
    auto row = run_pipeline(ExperimentConfig::from(kv), {});
    CHECK(row.alpha_bn == 0.0);
    kv.set("cidd.init", "random_real");
    kv.set("refine.skip", "true");
    auto rr = ExperimentConfig::from(kv);
    run_pipeline(rr, {});
    auto recs = load_manifest(rr.distill_dir() / "manifest.json");
    CHECK(recs.size() == 20);
  }

  TEST_CASE("result rows and report") {
    const auto dir = scratch_dir("harness_report");
    CHECK_THROWS_AS(cmd_report(dir, {}), Error);
    write_text(dir / "results.jsonl", "");
    CHECK_THROWS_AS(cmd_report(dir, {}), Error);

    ResultRow r;
    r.experiment = "x";
    r.run_id = "abc";
    r.mode = "dbr";
    r.ipc = 10;
    r.accuracy = 0.5;
    r.store_bytes = 40;
    CHECK(to_json_line(parse_result_line(to_json_line(r))) == to_json_line(r));
    CHECK_THROWS_AS(parse_result_line("{\"mode\":1}"), Error);

    // A single row still renders.
    write_text(dir / "results.jsonl", to_json_line(r) + "\n");
    auto one = cmd_report(dir, {});
    CHECK(fs::exists(dir / "report" / "accuracy_vs_ipc.svg"));

    std::string text;
    const double eps[] = {0.1, 0.3, 0.5, 0.7, 0.9};
    const double acc[] = {0.30, 0.35, 0.40, 0.36, 0.31};
    for (int i = 0; i < 5; ++i) {
      ResultRow s = r;
      s.sweep_key = "refine.epsilon";
      s.sweep_value = std::to_string(eps[i]);
      s.accuracy = acc[i];
      text += to_json_line(s) + "\n";
    }
    for (const char* m : {"oh", "sl"}) {
      ResultRow s = r;
      s.mode = m;
      s.accuracy = std::string(m) == "oh" ? 0.3 : 0.6;
      text += to_json_line(s) + "\n";
    }
    write_text(dir / "results.jsonl", to_json_line(r) + "\n" + text);
    auto rep = cmd_report(dir, {});
    const std::string svg = read_text(dir / "report" / "sensitivity_refine_epsilon.svg");
    CHECK(svg.find("interior max 0.400") != std::string::npos);
    CHECK(rep.table.find("recover_rate") != std::string::npos);
    CHECK(rep.table.find("0.6667") != std::string::npos);

    // Summary columns follow the result schema exactly.
    const std::string tsv = read_text(dir / "report" / "summary.tsv");
    std::string header = tsv.substr(0, tsv.find('\n'));
    std::string expect;
    for (const auto& c : result_columns()) expect += (expect.empty() ? "" : "\t") + c;
    CHECK(header == expect);
  }
}
