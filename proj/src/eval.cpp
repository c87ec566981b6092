#include "mora/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>

#include "mora/errors.hpp"
#include "mora/metrics.hpp"

namespace mora {

namespace {

std::optional<double> parse_number(std::string_view s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string_view::npos) return std::nullopt;
  const std::string str(s.substr(b));
  char* end = nullptr;
  const double v = std::strtod(str.c_str(), &end);
  if (end == str.c_str()) return std::nullopt;
  while (*end == ' ' || *end == '\t') ++end;
  if (*end != '\0' || !std::isfinite(v)) return std::nullopt;
  return v;
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

std::string opt_fmt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

}  // namespace

EvalReport evaluate(const Model& model, const std::vector<TrainingExample>& examples, std::string label) {
  EvalReport r;
  r.label = std::move(label);
  r.config = model.config.to_text();
  r.example_count = examples.size();
  const std::size_t max_new = model.config.eval().max_new;
  const auto prepared = prepare(model, examples);

  struct Acc {
    std::size_t n = 0, em = 0, unparsed = 0, numeric = 0, parseable = 0;
    double lev = 0, bleu = 0, ce = 0, abs_err = 0;
    bool gold_numeric = true, copy_task = false;
  };
  std::map<std::string, Acc> acc;
  for (std::size_t i = 0; i < prepared.size(); ++i) {
    const auto& ex = examples[i];
    const std::string pred = predict(model, prepared[i], max_new);
    Acc& a = acc[ex.task_tag];
    ++a.n;
    a.em += static_cast<std::size_t>(exact_match(pred, ex.answer));
    a.lev += static_cast<double>(levenshtein(pred, ex.answer));
    a.bleu += bleu(whitespace_tokens(pred), whitespace_tokens(ex.answer));
    a.ce += answer_cross_entropy(model, prepared[i]);
    const auto gold = parse_number(ex.answer);
    if (!gold) a.gold_numeric = false;
    if (gold) {
      if (auto p = parse_number(pred)) {
        a.abs_err += std::abs(*p - *gold);
        ++a.numeric;
      } else {
        ++a.unparsed;
      }
    }
    if (ex.task_tag == "graph_copy") {
      a.copy_task = true;
      try {
        parse_smiles(pred);
        ++a.parseable;
      } catch (const ParseError&) {
      }
    }
  }
  for (const auto& [task, a] : acc) {
    TaskMetrics m;
    m.task = task;
    m.count = a.n;
    const double n = static_cast<double>(a.n);
    m.exact_match = static_cast<double>(a.em) / n;
    m.levenshtein_mean = a.lev / n;
    m.bleu = a.bleu / n;
    m.answer_ce = a.ce / n;
    if (a.gold_numeric) {
      m.mae_unparsed = a.unparsed;
      if (a.numeric > 0) m.mae = a.abs_err / static_cast<double>(a.numeric);
    }
    if (a.copy_task) m.parseable_rate = static_cast<double>(a.parseable) / n;
    r.tasks.push_back(m);
  }
  return r;
}

std::string reports_csv(const std::vector<EvalReport>& reports) {
  std::string out =
      "label,task,count,exact_match,levenshtein_mean,bleu,mae,mae_unparsed,answer_ce,parseable_rate,final_train_loss,"
      "passthrough_max_delta,status\n";
  for (const auto& r : reports) {
    auto tail = [&] {
      return opt_fmt(r.final_train_loss) + "," +
             (r.passthrough_max_delta ? fmt(*r.passthrough_max_delta) : std::string()) + ",\"" + r.status + "\"\n";
    };
    if (r.tasks.empty()) out += r.label + ",,0,,,,,,,," + tail();
    for (const auto& t : r.tasks) {
      out += r.label + "," + t.task + "," + std::to_string(t.count) + "," + fmt(t.exact_match) + "," +
             fmt(t.levenshtein_mean) + "," + fmt(t.bleu) + "," + opt_fmt(t.mae) + "," +
             (t.mae || t.mae_unparsed > 0 ? std::to_string(t.mae_unparsed) : std::string()) + "," + fmt(t.answer_ce) + "," +
             opt_fmt(t.parseable_rate) + "," + tail();
    }
  }
  return out;
}

std::string reports_table(const std::vector<EvalReport>& reports) {
  std::string out;
  char line[256];
  std::snprintf(line, sizeof line, "%-22s %-16s %6s %8s %8s %8s %8s %8s %10s  %s\n", "run", "task", "n", "EM", "lev",
                "bleu", "mae", "ans_ce", "train_loss", "status");
  out += line;
  for (const auto& r : reports) {
    const std::string tl = r.final_train_loss ? fmt(*r.final_train_loss) : "-";
    if (r.tasks.empty()) {
      std::snprintf(line, sizeof line, "%-22s %-16s %6s %8s %8s %8s %8s %8s %10s  %s\n", r.label.c_str(), "-", "0",
                    "-", "-", "-", "-", "-", tl.c_str(), r.status.c_str());
      out += line;
    }
    for (const auto& t : r.tasks) {
      const std::string mae = t.mae ? fmt(*t.mae) : "-";
      std::snprintf(line, sizeof line, "%-22s %-16s %6zu %8.4f %8.4f %8.4f %8s %8.4f %10s  %s\n", r.label.c_str(),
                    t.task.c_str(), t.count, t.exact_match, t.levenshtein_mean, t.bleu, mae.c_str(), t.answer_ce,
                    tl.c_str(), r.status.c_str());
      out += line;
    }
    if (r.passthrough_max_delta) {
      out += "  passthrough max |dlogit| = " + fmt(*r.passthrough_max_delta) + "\n";
    }
  }
  return out;
}

double final_loss(const std::vector<LossRecord>& log) {
  if (log.empty()) throw ContractError("final_loss of an empty log");
  const std::size_t k = std::max<std::size_t>(1, log.size() / 10);
  double s = 0.0;
  for (std::size_t i = log.size() - k; i < log.size(); ++i) s += log[i].loss;
  return s / static_cast<double>(k);
}

double passthrough_delta(const Model& model, const std::vector<TrainingExample>& text_only) {
  NoGradGuard no_grad;
  const Model fresh = init_model(model.config, TrainMode::dynamic);
  const auto prepared = prepare(model, text_only);
  double worst = 0.0;
  for (const auto& ex : prepared) {
    const auto adapters = adapters_for(model, ex);
    const Tensor a = forward_lm(model.backbone, ex.prompt, adapters ? &*adapters : nullptr);
    const Tensor b = forward_lm(fresh.backbone, ex.prompt, nullptr);
    for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  }
  return worst;
}

AblationKind parse_ablation(std::string_view s) {
  if (s == "targets") return AblationKind::targets;
  if (s == "depth") return AblationKind::depth;
  if (s == "static_vs_dynamic") return AblationKind::static_vs_dynamic;
  if (s == "passthrough") return AblationKind::passthrough;
  throw ConfigError("unknown ablation kind \"" + std::string(s) +
                    "\" (expected targets, depth, static_vs_dynamic or passthrough)");
}

std::vector<EvalReport> run_ablation(AblationKind kind, const RunConfig& config,
                                     const std::vector<TrainingExample>& dataset, const AblationOptions& options) {
  const auto [train_set, test_set] = split_holdout(dataset, config.eval().holdout, config.seed());

  struct Run {
    std::string label;
    RunConfig cfg;
    TrainMode mode;
  };
  std::vector<Run> runs;
  auto with = [&](std::initializer_list<std::pair<const char*, std::string>> kv) {
    RunConfig c = config;
    for (const auto& [k, v] : kv) c.set(k, v);
    return c;
  };
  auto queries_for = [&](const std::string& targets) {
    RunConfig c = with({{"mawgen.targets", targets}});
    const BackboneConfig b = c.backbone();
    return std::to_string(
        required_queries(c.generator(), TargetDims{b.layers, b.d_model, b.d_ff, c.encoder().d_model}));
  };
  switch (kind) {
    case AblationKind::targets:
      for (const char* t : {"q", "qk", "qkv", "qkvo", "qkvof"}) {
        runs.push_back({std::string("targets=") + t, with({{"mawgen.targets", t}, {"mawgen.queries", queries_for(t)}}),
                        TrainMode::dynamic});
      }
      break;
    case AblationKind::depth:
      for (const char* n : {"1", "2", "4"}) {
        runs.push_back({std::string("blocks=") + n, with({{"mawgen.blocks", n}}), TrainMode::dynamic});
      }
      break;
    case AblationKind::static_vs_dynamic:
      runs.push_back({"instance_specific", config, TrainMode::dynamic});
      runs.push_back({"static_lora", config, TrainMode::static_lora});
      break;
    case AblationKind::passthrough:
      runs.push_back({"passthrough_dynamic", config, TrainMode::dynamic});
      runs.push_back({"passthrough_static", config, TrainMode::static_lora});
      break;
  }

  const auto prompts = synth_dataset(SynthTask::text_only, 20, config.seed() + 1);
  std::vector<EvalReport> reports;
  for (const auto& run : runs) {
    if (options.on_run) options.on_run(run.label);
    EvalReport rep;
    rep.label = run.label;
    rep.config = run.cfg.to_text();
    try {
      TrainResult res = run.mode == TrainMode::static_lora ? static_lora_train(run.cfg, train_set, options.train)
                                                           : train(run.cfg, train_set, options.train);
      rep = evaluate(res.model, test_set, run.label);
      if (!res.log.empty()) rep.final_train_loss = final_loss(res.log);
      if (kind == AblationKind::passthrough) {
        rep.passthrough_max_delta = passthrough_delta(res.model, prompts);
        // Only the generator path promises bitwise passthrough.
        if (run.mode == TrainMode::dynamic && *rep.passthrough_max_delta != 0.0) {
          rep.status = "passthrough violated";
        }
      }
    } catch (const Error& e) {
      rep.status = std::string("failed: ") + e.what();
    }
    reports.push_back(std::move(rep));
  }
  return reports;
}

}  // namespace mora
