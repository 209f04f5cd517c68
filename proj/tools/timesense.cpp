// Command-line front end: dataset generation, toy-model training, scoring,
// and artifact inspection. Exit codes: 0 success, 1 usage or configuration
// error, 2 runtime failure, 3 training divergence.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <httplib.h>

#include "timesense/chrongen.hpp"
#include "timesense/core.hpp"
#include "timesense/evalharness.hpp"
#include "timesense/evalharness_llm.hpp"
#include "timesense/taskgen.hpp"
#include "timesense/toymodel.hpp"

namespace ts = timesense;

namespace {

ts::json load_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config: " + path);
  return ts::json::parse(in);
}

ts::taskgen::TaskSpec spec_from_json(const ts::json& j) {
  ts::taskgen::TaskSpec s;
  s.task = ts::task_from_string(j.at("task").get<std::string>());
  s.variant = j.value("variant", s.variant);
  s.count = j.value("count", s.count);
  s.length_min = j.value("length_min", s.length_min);
  s.length_max = j.value("length_max", s.length_max);
  s.channels_min = j.value("channels_min", s.channels_min);
  s.channels_max = j.value("channels_max", s.channels_max);
  s.mcqa = j.value("mcqa", s.mcqa);
  return s;
}

ts::json spec_to_json(const ts::taskgen::TaskSpec& s) {
  return ts::json{{"task", ts::to_string(s.task)},
                  {"variant", s.variant},
                  {"count", s.count},
                  {"length_min", s.length_min},
                  {"length_max", s.length_max},
                  {"channels_min", s.channels_min},
                  {"channels_max", s.channels_max},
                  {"mcqa", s.mcqa}};
}

int cmd_generate(const std::string& config_path, const std::string& out_path,
                 std::uint64_t seed, bool seed_set,
                 const std::vector<std::string>& tasks, int count,
                 const std::string& variant, bool mcqa) {
  std::vector<ts::taskgen::TaskSpec> specs;
  std::uint64_t resolved_seed = 0;
  if (!config_path.empty()) {
    const ts::json cfg = load_json_file(config_path);
    resolved_seed = cfg.value("seed", std::uint64_t{0});
    for (const auto& t : cfg.at("tasks")) specs.push_back(spec_from_json(t));
  }
  if (seed_set) resolved_seed = seed;
  for (const auto& name : tasks) {
    ts::taskgen::TaskSpec s;
    s.task = ts::task_from_string(name);
    s.variant = variant;
    s.count = count;
    s.mcqa = mcqa;
    specs.push_back(s);
  }
  if (specs.empty()) {
    std::cerr << "generate: no task specs (use --config or --task)\n";
    return 1;
  }
  ts::json echo{{"seed", resolved_seed}, {"out", out_path}, {"tasks", ts::json::array()}};
  for (const auto& s : specs) echo["tasks"].push_back(spec_to_json(s));
  std::cout << echo.dump(2) << "\n";

  std::map<std::string, int> per_task;
  const std::size_t n = ts::taskgen::emit_dataset(specs, resolved_seed, out_path, &per_task);
  std::cout << "wrote " << n << " records to " << out_path << "\n";
  for (const auto& [task, c] : per_task) std::cout << "  " << task << ": " << c << "\n";
  return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_path,
              const std::string& out_path, const std::string& log_path,
              const std::string& resume_path, ts::toymodel::ModelConfig cfg,
              const std::vector<bool>& cfg_flags_set, int batch_size,
              int log_every, const std::vector<std::string>& ablations) {
  if (!config_path.empty()) {
    ts::toymodel::ModelConfig file_cfg =
        ts::toymodel::config_from_json(load_json_file(config_path));
    // flags override file values
    if (!cfg_flags_set[0]) cfg.d_model = file_cfg.d_model;
    if (!cfg_flags_set[1]) cfg.layers = file_cfg.layers;
    if (!cfg_flags_set[2]) cfg.heads = file_cfg.heads;
    if (!cfg_flags_set[3]) cfg.max_seq = file_cfg.max_seq;
    if (!cfg_flags_set[4]) cfg.p = file_cfg.p;
    if (!cfg_flags_set[5]) cfg.seed = file_cfg.seed;
    if (!cfg_flags_set[6]) cfg.lr = file_cfg.lr;
    if (!cfg_flags_set[7]) cfg.steps = file_cfg.steps;
    if (ablations.empty()) cfg.ablations = file_cfg.ablations;
  }
  for (const auto& a : ablations) {
    if (a == "fft") cfg.ablations.fft = true;
    else if (a == "sensor") cfg.ablations.sensor = true;
    else if (a == "posemb") cfg.ablations.posemb = true;
    else {
      std::cerr << "train: unknown ablation '" << a << "'\n";
      return 1;
    }
  }
  const auto v = ts::toymodel::validate_config(cfg);
  if (!v) {
    std::cerr << "train: " << v.message << "\n";
    return 1;
  }
  std::cout << ts::toymodel::to_json(cfg).dump(2) << "\n";

  const std::vector<ts::QARecord> data = ts::read_records(data_path);
  if (data.empty()) {
    std::cerr << "train: empty dataset " << data_path << "\n";
    return 1;
  }
  ts::toymodel::ModelParams model = resume_path.empty()
                                        ? ts::toymodel::init_params(cfg)
                                        : ts::toymodel::load_checkpoint(resume_path);
  std::ofstream log;
  if (!log_path.empty()) {
    log.open(log_path);
    if (!log) throw std::runtime_error("cannot open log: " + log_path);
  }
  for (int step = 0; step < cfg.steps; ++step) {
    ts::Rng rng(ts::derive_seed(cfg.seed, 0xB000 + static_cast<std::uint64_t>(step)));
    std::vector<ts::QARecord> batch;
    for (int i = 0; i < batch_size; ++i)
      batch.push_back(data[static_cast<std::size_t>(
          rng.uniform_int(0, static_cast<std::int64_t>(data.size()) - 1))]);
    ts::LossBreakdown loss;
    try {
      loss = ts::toymodel::train_step(model, batch, cfg.lr);
    } catch (const ts::toymodel::DivergenceError& e) {
      std::cerr << "train: diverged at step " << step << ": " << e.what() << "\n";
      return 3;
    }
    if (log) log << ts::toymodel::loss_to_json(step, loss).dump() << "\n";
    if (step % log_every == 0 || step == cfg.steps - 1)
      std::cout << "step " << step << " total " << loss.total << " txt " << loss.txt
                << " ts_time " << loss.ts_time << " ts_freq " << loss.ts_freq << "\n";
  }
  ts::toymodel::save_checkpoint(model, out_path);
  std::cout << "saved checkpoint to " << out_path << "\n";
  return 0;
}

int cmd_eval(const std::string& data_path, const std::string& answers_path,
             const std::string& ckpt_path, const std::string& llm_url,
             const std::string& format, const std::string& out_path) {
  const std::vector<ts::QARecord> data = ts::read_records(data_path);
  std::map<std::string, std::string> answers;
  if (!answers_path.empty()) {
    std::ifstream in(answers_path);
    if (!in) throw std::runtime_error("cannot open answers: " + answers_path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      ts::json j;
      try {
        j = ts::json::parse(line);
        answers[j.at("id").get<std::string>()] = j.at("answer").get<std::string>();
      } catch (const std::exception& e) {
        throw std::runtime_error("answers line " + std::to_string(line_no) + ": " + e.what());
      }
    }
  } else if (!ckpt_path.empty()) {
    const ts::toymodel::ModelParams model = ts::toymodel::load_checkpoint(ckpt_path);
    for (const auto& rec : data)
      answers[rec.id] = ts::toymodel::generate_text(model, rec);
  } else {
    std::cerr << "eval: need --answers or --ckpt\n";
    return 1;
  }

  if (!llm_url.empty()) {
    // LLM-backed extraction: replace free-form answers by their canonical
    // feature line before rule-based scoring.
    httplib::Client client(llm_url);
    for (const auto& rec : data) {
      const auto parsed =
          ts::evalharness::extract_with_llm(client, rec.task, answers.at(rec.id));
      answers[rec.id] =
          parsed.ok ? ts::taskgen::detail::render_features(parsed.features) : "";
    }
  }

  const ts::evalharness::ScoreReport report = ts::evalharness::evaluate(data, answers);
  std::string rendered;
  if (format == "json") rendered = ts::evalharness::to_json(report).dump(2) + "\n";
  else if (format == "csv") rendered = ts::evalharness::to_csv(report);
  else rendered = ts::evalharness::to_table(report);
  if (out_path.empty()) {
    std::cout << rendered;
  } else {
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open output: " + out_path);
    out << rendered;
    std::cout << "wrote report to " << out_path << "\n";
  }
  return 0;
}

int cmd_inspect(const std::string& data_path, const std::string& ckpt_path) {
  if (!data_path.empty()) {
    const std::vector<ts::QARecord> data = ts::read_records(data_path);
    std::map<std::string, int> per_task;
    int len_min = 1 << 30, len_max = 0;
    for (const auto& r : data) {
      ++per_task[ts::to_string(r.task) + "/" + r.variant];
      for (const auto& s : r.series) {
        len_min = std::min(len_min, s.length);
        len_max = std::max(len_max, s.length);
      }
    }
    std::cout << "records: " << data.size() << "\n";
    if (!data.empty()) std::cout << "series length range: [" << len_min << ", " << len_max << "]\n";
    for (const auto& [key, c] : per_task) std::cout << "  " << key << ": " << c << "\n";
  }
  if (!ckpt_path.empty()) {
    const ts::toymodel::ModelParams model = ts::toymodel::load_checkpoint(ckpt_path);
    std::cout << "checkpoint config: " << ts::toymodel::to_json(model.cfg).dump() << "\n";
    std::cout << "parameters: " << ts::toymodel::param_count(model) << "\n";
  }
  if (data_path.empty() && ckpt_path.empty()) {
    std::cerr << "inspect: need --data and/or --ckpt\n";
    return 1;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"TimeSense: synthetic time-series QA data, toy training, scoring"};
  app.require_subcommand(1);

  // generate
  auto* gen = app.add_subcommand("generate", "emit a JSONL QA dataset");
  std::string gen_config, gen_out = "dataset.jsonl";
  std::uint64_t gen_seed = 0;
  std::vector<std::string> gen_tasks;
  int gen_count = 100;
  std::string gen_variant = "uni";
  bool gen_mcqa = false;
  gen->add_option("--config", gen_config, "JSON config with a tasks array");
  gen->add_option("--out", gen_out, "output JSONL path");
  auto* gen_seed_opt = gen->add_option("--seed", gen_seed, "master seed");
  gen->add_option("--task", gen_tasks, "task name (repeatable)");
  gen->add_option("--count", gen_count, "records per --task spec");
  gen->add_option("--variant", gen_variant, "uni or multi for --task specs");
  gen->add_flag("--mcqa", gen_mcqa, "multiple-choice variant for --task specs");

  // train
  auto* tr = app.add_subcommand("train", "train the toy model on a dataset");
  std::string tr_config, tr_data, tr_out = "model.ckpt", tr_log, tr_resume;
  ts::toymodel::ModelConfig tr_cfg;
  int tr_batch = 8, tr_log_every = 50;
  std::vector<std::string> tr_ablate;
  tr->add_option("--config", tr_config, "JSON model config");
  tr->add_option("--data", tr_data, "training JSONL")->required();
  tr->add_option("--out", tr_out, "checkpoint path");
  tr->add_option("--log", tr_log, "per-step loss log (JSONL)");
  tr->add_option("--resume", tr_resume, "checkpoint to continue from");
  auto* o0 = tr->add_option("--d-model", tr_cfg.d_model);
  auto* o1 = tr->add_option("--layers", tr_cfg.layers);
  auto* o2 = tr->add_option("--heads", tr_cfg.heads);
  auto* o3 = tr->add_option("--max-seq", tr_cfg.max_seq);
  auto* o4 = tr->add_option("--patch", tr_cfg.p);
  auto* o5 = tr->add_option("--seed", tr_cfg.seed);
  auto* o6 = tr->add_option("--lr", tr_cfg.lr);
  auto* o7 = tr->add_option("--steps", tr_cfg.steps);
  tr->add_option("--batch", tr_batch, "batch size");
  tr->add_option("--log-every", tr_log_every);
  tr->add_option("--ablate", tr_ablate, "fft, sensor or posemb (repeatable)");

  // eval
  auto* ev = app.add_subcommand("eval", "score answers against a dataset");
  std::string ev_data, ev_answers, ev_ckpt, ev_llm, ev_format = "table", ev_out;
  ev->add_option("--data", ev_data, "dataset JSONL")->required();
  ev->add_option("--answers", ev_answers, "answers JSONL ({id, answer} per line)");
  ev->add_option("--ckpt", ev_ckpt, "generate answers with this checkpoint");
  ev->add_option("--llm-url", ev_llm, "feature-extraction service base URL");
  ev->add_option("--format", ev_format, "table, json or csv");
  ev->add_option("--out", ev_out, "write report here instead of stdout");

  // inspect
  auto* ins = app.add_subcommand("inspect", "summarize a dataset or checkpoint");
  std::string ins_data, ins_ckpt;
  ins->add_option("--data", ins_data, "dataset JSONL");
  ins->add_option("--ckpt", ins_ckpt, "checkpoint file");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed())
      return cmd_generate(gen_config, gen_out, gen_seed, gen_seed_opt->count() > 0,
                          gen_tasks, gen_count, gen_variant, gen_mcqa);
    if (tr->parsed()) {
      const std::vector<bool> set = {o0->count() > 0, o1->count() > 0, o2->count() > 0,
                                     o3->count() > 0, o4->count() > 0, o5->count() > 0,
                                     o6->count() > 0, o7->count() > 0};
      return cmd_train(tr_config, tr_data, tr_out, tr_log, tr_resume, tr_cfg, set,
                       tr_batch, tr_log_every, tr_ablate);
    }
    if (ev->parsed()) return cmd_eval(ev_data, ev_answers, ev_ckpt, ev_llm, ev_format, ev_out);
    if (ins->parsed()) return cmd_inspect(ins_data, ins_ckpt);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
