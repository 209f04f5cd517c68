#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>

#include "timesense/taskgen.hpp"
#include "timesense/toymodel.hpp"

using namespace timesense;
using toymodel::ModelConfig;
using toymodel::ModelParams;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

QARecord tiny_record(std::uint64_t seed = 1, int len = 10) {
  QARecord rec;
  rec.task = TaskKind::trend;
  rec.category = TaskCategory::atomic;
  rec.id = "trend-uni-t";
  MultiSeries s;
  s.length = len;
  s.values.emplace_back(len);
  Rng rng(seed);
  for (auto& v : s.values[0]) v = round3(rng.uniform(-1.0, 1.0));
  s.channel_names = {"ch0"};
  rec.series = {s};
  rec.question = "What is the overall trend of series <ts:0>?";
  rec.answer_text = "The overall trend is flat. FEATURES: trend(class=flat)";
  return rec;
}

ModelConfig tiny_config() {
  ModelConfig cfg;
  cfg.d_model = 16;
  cfg.layers = 1;
  cfg.heads = 2;
  cfg.max_seq = 128;
  cfg.p = 4;
  cfg.seed = 7;
  return cfg;
}

std::vector<double> flatten(const ModelParams& p) {
  std::vector<double> out;
  toymodel::visit_tensors(const_cast<ModelParams&>(p),
                          [&](const std::string&, Mat& m) {
                            out.insert(out.end(), m.v.begin(), m.v.end());
                          });
  return out;
}

}  // namespace

TEST_CASE("tokenizer encodes and decodes the template alphabet") {
  const std::string text = "The value at step 3 is -2.5? [ok] {x|y}~";
  const auto ids = toymodel::encode_text(text);
  CHECK(toymodel::decode_ids(ids) == text);
  for (int id : ids) {
    CHECK(id >= toymodel::kSpecialCount);
    CHECK(id < toymodel::vocab_size());
  }
  CHECK(toymodel::decode_ids({toymodel::kTsOpen, toymodel::kEos, toymodel::kTsClose}) ==
        "<ts></ts>");
  CHECK_THROWS_AS(toymodel::encode_text("caf\xc3\xa9"), std::invalid_argument);
  CHECK_THROWS_AS(toymodel::decode_ids({toymodel::vocab_size()}), std::invalid_argument);
}

TEST_CASE("placeholders reduce to their ordinal in model text") {
  CHECK(toymodel::strip_placeholders("series <ts:0> and <ts:1>") == "series 0 and 1");
  CHECK(toymodel::strip_placeholders("plain text") == "plain text");
  CHECK_THROWS_AS(toymodel::strip_placeholders("series <ts:0"), std::invalid_argument);
}

TEST_CASE("encode_record fuses patches and text deterministically") {
  const QARecord rec = tiny_record();
  const auto enc = toymodel::encode_record(rec, 4, true);
  REQUIRE(enc.patches.size() == 1);
  CHECK(enc.patches[0].n == 3);  // ceil(10/4)
  REQUIRE(enc.seq.ts_spans.size() == 1);
  CHECK(enc.seq.ts_spans[0].count == 3);
  CHECK(enc.seq.ts_spans[0].insert_pos == 1);
  // prompt ids then answer ids then eos
  const int prompt_len =
      static_cast<int>(toymodel::encode_text(
          toymodel::strip_placeholders(rec.question) + "\n").size());
  CHECK(enc.prompt_text_len == prompt_len);
  CHECK(enc.seq.text_ids.size() ==
        prompt_len + toymodel::encode_text(rec.answer_text).size() + 1);
  CHECK(enc.seq.text_ids.back() == toymodel::kEos);
  CHECK(enc.seq.total_length() ==
        static_cast<int>(enc.seq.text_ids.size()) + 3 + 2);

  const auto prompt_only = toymodel::encode_record(rec, 4, false);
  CHECK(prompt_only.seq.text_ids.size() == static_cast<std::size_t>(prompt_len));

  QARecord bad = rec;
  bad.question = "no placeholder";
  CHECK_THROWS_AS(toymodel::encode_record(bad, 4, true), std::invalid_argument);
}

TEST_CASE("init_params is deterministic and shaped by config") {
  const ModelConfig cfg = tiny_config();
  const ModelParams a = toymodel::init_params(cfg);
  const ModelParams b = toymodel::init_params(cfg);
  CHECK(flatten(a) == flatten(b));
  CHECK(toymodel::param_count(a) < 10000);
  // layer norm gains start at one, biases at zero
  for (double g : a.lnf_g.v) CHECK(g == 1.0);
  for (double v : a.layer[0].bq.v) CHECK(v == 0.0);
  ModelConfig bad = cfg;
  bad.heads = 3;  // does not divide d_model
  CHECK_THROWS_AS(toymodel::init_params(bad), std::invalid_argument);
}

TEST_CASE("forward is deterministic and the loss decomposes") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = toymodel::init_params(cfg);
  const auto enc = toymodel::encode_record(tiny_record(), cfg.p, true);
  const auto s1 = toymodel::forward(p, enc);
  const auto s2 = toymodel::forward(p, enc);
  CHECK(s1.loss.total == s2.loss.total);
  CHECK(s1.hidden.v == s2.hidden.v);
  CHECK(std::abs(s1.loss.total - (s1.loss.txt + s1.loss.ts_time + s1.loss.ts_freq)) < 1e-9);
  CHECK(s1.loss.txt > 0.0);
  CHECK(s1.loss.ts_time > 0.0);
  CHECK(s1.loss.ts_freq > 0.0);
  // reconstruction has full series length
  REQUIRE(s1.x_rec.size() == 1);
  CHECK(s1.x_rec[0][0].size() == 10);

  // ts positions carry no logits; every logit row is a text position
  for (int i : s1.txt_rows) CHECK(s1.type[i] >= 0);
  CHECK(static_cast<int>(s1.txt_rows.size()) + 3 == s1.t);

  // targets: the position before a ts token is masked, text successors are not
  int masked = 0, live = 0;
  for (std::size_t r = 0; r < s1.targets.size(); ++r)
    (s1.targets[r] < 0 ? masked : live)++;
  CHECK(live > 0);
  CHECK(masked >= 1);  // at least the final position
}

TEST_CASE("ablations zero the corresponding loss terms end to end") {
  ModelConfig cfg = tiny_config();
  const auto enc = toymodel::encode_record(tiny_record(), cfg.p, true);

  cfg.ablations = {};
  cfg.ablations.fft = true;
  const auto wf = toymodel::forward(toymodel::init_params(cfg), enc);
  CHECK(wf.loss.ts_freq == 0.0);
  CHECK(wf.loss.ts_time > 0.0);

  cfg.ablations = {};
  cfg.ablations.sensor = true;
  const ModelParams ps = toymodel::init_params(cfg);
  const auto ws = toymodel::forward(ps, enc);
  CHECK(ws.loss.ts_time == 0.0);
  CHECK(ws.loss.ts_freq == 0.0);
  CHECK(ws.loss.total == ws.loss.txt);
  // and the reconstruction head receives no gradient
  ModelParams grad = toymodel::make_zero_like(ps);
  toymodel::backward(ps, enc, ws, grad);
  for (double g : grad.dec_w1.v) CHECK(g == 0.0);
  for (double g : grad.dec_w2.v) CHECK(g == 0.0);

  cfg.ablations = {};
  cfg.ablations.posemb = true;
  const ModelParams pp = toymodel::init_params(cfg);
  const auto wp = toymodel::forward(pp, enc);
  ModelParams gradp = toymodel::make_zero_like(pp);
  toymodel::backward(pp, enc, wp, gradp);
  // index rows of the patch encoder see zeroed inputs, so their grads vanish
  for (int r = 0; r < cfg.p; ++r)
    for (int c = 0; c < cfg.d_model; ++c) CHECK(gradp.enc_w1.at(r, c) == 0.0);
  bool any_value_grad = false;
  for (int r = cfg.p; r < 2 * cfg.p; ++r)
    for (int c = 0; c < cfg.d_model; ++c)
      if (gradp.enc_w1.at(r, c) != 0.0) any_value_grad = true;
  CHECK(any_value_grad);
}

TEST_CASE("analytic gradients match finite differences in all modes") {
  const std::vector<QARecord> batch = {tiny_record(1, 10), tiny_record(2, 7)};
  for (int mode = 0; mode < 4; ++mode) {
    ModelConfig cfg = tiny_config();
    cfg.ablations.fft = mode == 1;
    cfg.ablations.sensor = mode == 2;
    cfg.ablations.posemb = mode == 3;
    ModelParams p = toymodel::init_params(cfg);
    const double max_rel = toymodel::grad_check(p, batch, 1e-5, 120);
    INFO("mode " << mode);
    CHECK(max_rel < 1e-4);
  }
}

TEST_CASE("train_step lowers the loss on a tiny batch") {
  ModelConfig cfg = tiny_config();
  cfg.lr = 1e-3;
  ModelParams p = toymodel::init_params(cfg);
  const std::vector<QARecord> batch = {tiny_record()};
  const double before = toymodel::batch_loss(p, batch);
  LossBreakdown last;
  for (int i = 0; i < 25; ++i) last = toymodel::train_step(p, batch, cfg.lr);
  const double after = toymodel::batch_loss(p, batch);
  CHECK(after < before);
  CHECK(last.total < before);
}

TEST_CASE("train_step reports divergence with the failing component") {
  ModelConfig cfg = tiny_config();
  ModelParams p = toymodel::init_params(cfg);
  p.lm_b.v[0] = std::numeric_limits<double>::infinity();
  try {
    toymodel::train_step(p, {tiny_record()}, 0.1);
    FAIL("expected divergence");
  } catch (const toymodel::DivergenceError& e) {
    CHECK(std::string(e.what()).find("non-finite") != std::string::npos);
    CHECK_FALSE(std::isfinite(e.breakdown.total));
  }
}

TEST_CASE("greedy decoding is deterministic and in-vocabulary") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = toymodel::init_params(cfg);
  const QARecord rec = tiny_record();
  const std::string a = toymodel::generate_text(p, rec, 24);
  const std::string b = toymodel::generate_text(p, rec, 24);
  CHECK(a == b);
  CHECK_NOTHROW(toymodel::encode_text(a));  // only vocabulary symbols
}

TEST_CASE("checkpoints roundtrip bit for bit and detect corruption") {
  const ModelConfig cfg = tiny_config();
  const ModelParams p = toymodel::init_params(cfg);
  const std::string path = temp_path("ts_model.ckpt");
  toymodel::save_checkpoint(p, path);
  const ModelParams back = toymodel::load_checkpoint(path);
  CHECK(flatten(back) == flatten(p));
  CHECK(toymodel::to_json(back.cfg).dump() == toymodel::to_json(cfg).dump());

  // saving the loaded model writes an identical file
  const std::string path2 = temp_path("ts_model2.ckpt");
  toymodel::save_checkpoint(back, path2);
  std::ifstream f1(path, std::ios::binary), f2(path2, std::ios::binary);
  std::string b1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string b2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(b1 == b2);

  // truncation
  {
    std::ofstream out(path2, std::ios::binary | std::ios::trunc);
    out.write(b1.data(), static_cast<std::streamsize>(b1.size() / 2));
  }
  CHECK_THROWS_WITH(toymodel::load_checkpoint(path2),
                    Catch::Matchers::ContainsSubstring("corrupted"));

  // single flipped byte
  std::string flipped = b1;
  flipped[flipped.size() / 2] ^= 0x40;
  {
    std::ofstream out(path2, std::ios::binary | std::ios::trunc);
    out.write(flipped.data(), static_cast<std::streamsize>(flipped.size()));
  }
  CHECK_THROWS_WITH(toymodel::load_checkpoint(path2),
                    Catch::Matchers::ContainsSubstring("checksum"));

  CHECK_THROWS_WITH(toymodel::load_checkpoint(temp_path("ts_missing.ckpt")),
                    Catch::Matchers::ContainsSubstring("cannot open"));
  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("model config json roundtrip") {
  ModelConfig cfg = tiny_config();
  cfg.ablations.fft = true;
  cfg.ablations.posemb = true;
  cfg.lr = 0.0125;
  cfg.steps = 321;
  const ModelConfig back = toymodel::config_from_json(toymodel::to_json(cfg));
  CHECK(toymodel::to_json(back).dump() == toymodel::to_json(cfg).dump());
  json j = toymodel::to_json(cfg);
  j["ablations"].push_back("warp");
  CHECK_THROWS_AS(toymodel::config_from_json(j), std::invalid_argument);
}
