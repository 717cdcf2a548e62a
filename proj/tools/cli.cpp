// SPDX-License-Identifier: Apache-2.0
#include "cli.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "sfda/errors.hpp"
#include "sfda/trainer.hpp"

namespace sfda::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

struct Options {
  std::string mode;
  std::string config_path;
  std::string out_dir;
  std::optional<std::uint64_t> seed;
  std::string params_path;
  std::string dataset_path;
};

std::string read_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << text;
  if (text.empty() || text.back() != '\n') out << '\n';
}

AdaptationConfig load_config(const Options& opt) {
  AdaptationConfig config;
  if (!opt.config_path.empty()) config = AdaptationConfig::from_json(read_file(opt.config_path));
  if (opt.seed) config.seed = *opt.seed;
  config.validate();
  return config;
}

fs::path prepare_out(const std::string& dir) {
  fs::path out(dir);
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec || !fs::is_directory(out)) throw ConfigError("output directory '" + dir + "' is not writable");
  return out;
}

ojson eval_json(const EvalResult& r) { return ojson::parse(r.to_json()); }

void write_history(const fs::path& path, const TrainHistory& history) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write '" + path.string() + "'");
  history.write_csv(os);
}

ModelParams source_model(const Options& opt, const AdaptationConfig& config, ExperimentData& data) {
  if (!opt.params_path.empty()) return params_from_json(read_file(opt.params_path));
  return pretrain_source(config, data.source);
}

void write_params(const fs::path& path, const ModelParams& params) {
  write_file(path, params_to_json(params));
}

int run_pretrain(const Options& opt, std::ostream& out) {
  const auto config = load_config(opt);
  const auto dir = prepare_out(opt.out_dir);
  auto data = make_experiment_data(config);
  const auto params = pretrain_source(config, data.source);
  const auto result = evaluate(params, data.eval);
  write_params(dir / "source_params.json", params);
  write_file(dir / "target_eval_dataset.json", dataset_to_json(data.target_spec, data.eval));
  ojson summary;
  summary["mode"] = "pretrain";
  summary["seed"] = config.seed;
  summary["target_eval"] = eval_json(result);
  write_file(dir / "summary.json", summary.dump(2));
  out << "pretrain: target mAP50 " << result.map50 << '\n';
  return 0;
}

int run_adapt(const Options& opt, std::ostream& out) {
  const auto config = load_config(opt);
  const auto dir = prepare_out(opt.out_dir);
  const auto ckpt = dir / "checkpoints";
  fs::create_directories(ckpt);
  auto data = make_experiment_data(config);
  const auto source = source_model(opt, config, data);
  const auto source_eval = evaluate(source, data.eval);

  auto observer = [&](const EpochRecord& rec, const ModelParams& teacher, const ModelParams& student,
                      const RelationMatrix& r) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "epoch_%03d", rec.epoch);
    write_params(ckpt / (std::string(stem) + "_teacher.json"), teacher);
    write_params(ckpt / (std::string(stem) + "_student.json"), student);
    write_file(ckpt / (std::string(stem) + "_rcm.json"), r.to_json());
  };
  const auto result = adapt(source, data.target, data.eval, config, observer);

  write_history(dir / "history.csv", result.history);
  {
    std::ofstream os(dir / "variance.csv");
    result.partition.report.write_csv(os);
  }
  write_params(dir / "source_params.json", source);
  write_params(dir / "teacher_params.json", result.teacher);
  write_params(dir / "student_params.json", result.student);
  write_file(dir / "rcm.json", result.rcm.to_json());
  write_file(dir / "target_eval_dataset.json", dataset_to_json(data.target_spec, data.eval));
  write_file(dir / "config.json", config.to_json());

  const auto teacher_eval = evaluate(result.teacher, data.eval);
  ojson summary;
  summary["mode"] = "adapt";
  summary["seed"] = config.seed;
  summary["epochs"] = result.history.epochs.size();
  summary["source"] = eval_json(source_eval);
  summary["teacher"] = eval_json(teacher_eval);
  summary["student"] = eval_json(evaluate(result.student, data.eval));
  write_file(dir / "summary.json", summary.dump(2));
  out << "adapt: source mAP50 " << source_eval.map50 << ", teacher mAP50 " << teacher_eval.map50 << '\n';
  return 0;
}

int run_eval(const Options& opt, std::ostream& out) {
  if (opt.params_path.empty()) throw ConfigError("--mode eval needs --params");
  const auto config = load_config(opt);
  const auto dir = prepare_out(opt.out_dir);
  const auto params = params_from_json(read_file(opt.params_path));
  Dataset eval;
  if (!opt.dataset_path.empty()) {
    eval = dataset_from_json(read_file(opt.dataset_path)).second;
  } else {
    eval = make_experiment_data(config).eval;
  }
  const auto result = evaluate(params, eval);
  write_file(dir / "eval.json", result.to_json());
  out << "eval: mAP50 " << result.map50 << '\n';
  return 0;
}

int run_ablation(const Options& opt, std::ostream& out) {
  const auto config = load_config(opt);
  const auto dir = prepare_out(opt.out_dir);
  auto data = make_experiment_data(config);
  const auto source = source_model(opt, config, data);
  const auto source_eval = evaluate(source, data.eval);

  std::ofstream csv(dir / "ablation_summary.csv");
  if (!csv) throw std::runtime_error("cannot write ablation_summary.csv");
  csv << "arm,teacher_map,student_map,peak_teacher_map";
  for (int c = 0; c < config.world.num_classes; ++c) csv << ",ap_class_" << c;
  csv << '\n';
  char buf[32];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    csv << ',' << buf;
  };
  csv << "source";
  num(source_eval.map50);
  num(source_eval.map50);
  num(source_eval.map50);
  for (double ap : source_eval.per_class_ap) num(ap);
  csv << '\n';

  for (const auto& arm : ablation_arms(config)) {
    const auto result = adapt(source, data.target, data.eval, arm.config);
    write_history(dir / ("history_" + arm.name + ".csv"), result.history);
    double peak = source_eval.map50, final_teacher = source_eval.map50, final_student = source_eval.map50;
    std::vector<double> per_class = source_eval.per_class_ap;
    for (const auto& e : result.history.epochs) peak = std::max(peak, e.teacher_map);
    if (!result.history.epochs.empty()) {
      const auto& last = result.history.epochs.back();
      final_teacher = last.teacher_map;
      final_student = last.student_map;
      per_class = last.teacher_class_ap;
    }
    csv << arm.name;
    num(final_teacher);
    num(final_student);
    num(peak);
    for (double ap : per_class) num(ap);
    csv << '\n';
    out << "ablation " << arm.name << ": teacher mAP50 " << final_teacher << '\n';
  }
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Source-free detector adaptation experiments", "sfda"};
  Options opt;
  std::uint64_t seed = 0;
  app.add_option("--mode", opt.mode, "pretrain | adapt | eval | ablation-suite")
      ->required()
      ->check(CLI::IsMember({"pretrain", "adapt", "eval", "ablation-suite"}));
  app.add_option("--config", opt.config_path, "AdaptationConfig JSON; defaults when omitted");
  app.add_option("--out", opt.out_dir, "output directory")->required();
  auto* seed_opt = app.add_option("--seed", seed, "overrides the config seed");
  app.add_option("--params", opt.params_path, "model params JSON (eval; skips pretraining otherwise)");
  app.add_option("--dataset", opt.dataset_path, "dataset JSON for eval");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "sfda: " << e.what() << '\n';
    return 2;
  }
  if (*seed_opt) opt.seed = seed;

  try {
    if (opt.mode == "pretrain") return run_pretrain(opt, out);
    if (opt.mode == "adapt") return run_adapt(opt, out);
    if (opt.mode == "eval") return run_eval(opt, out);
    return run_ablation(opt, out);
  } catch (const ConfigError& e) {
    err << "sfda: config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "sfda: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace sfda::cli
