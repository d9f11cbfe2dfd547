#include "sevalign/cli.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>
#include <ostream>

#include <CLI11.hpp>
#include <json.hpp>

#include "sevalign/config.hpp"
#include "sevalign/errors.hpp"
#include "sevalign/grad_suite.hpp"
#include "sevalign/training.hpp"

namespace sevalign {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::vector<std::uint64_t> parse_seed_list(std::string_view text) {
  auto number = [&](std::string_view s) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (s.empty() || ec != std::errc() || ptr != s.data() + s.size()) {
      throw UsageError("--seed: '" + std::string(text) + "' is not a seed, range a..b or list a,b,c");
    }
    return v;
  };
  std::vector<std::uint64_t> seeds;
  if (const auto dots = text.find(".."); dots != std::string_view::npos) {
    const auto lo = number(text.substr(0, dots));
    const auto hi = number(text.substr(dots + 2));
    if (hi < lo) throw UsageError("--seed: empty range '" + std::string(text) + "'");
    if (hi - lo >= 10000) throw UsageError("--seed: range '" + std::string(text) + "' is too large");
    for (auto s = lo; s <= hi; ++s) seeds.push_back(s);
    return seeds;
  }
  std::size_t start = 0;
  for (;;) {
    const auto comma = text.find(',', start);
    seeds.push_back(number(text.substr(start, comma == std::string_view::npos ? comma : comma - start)));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return seeds;
}

namespace {

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw ValidationError("write to '" + path.string() + "' failed");
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

/// Flags shared by every command. Empty strings mean "not given".
struct Flags {
  std::string config;
  std::string seed;
  std::string out;
  std::string checkpoint;
  std::string dataset;
  std::string source;
  std::string target;
  bool print_defaults = false;
};

/// Resolved config plus the run manifest that accompanies every output dir.
class Run {
 public:
  Run(std::string command, const Flags& flags) : command_(std::move(command)), flags_(flags) {
    if (!flags.config.empty()) cfg_ = load_experiment_config(flags.config);
    if (!flags.seed.empty()) {
      seeds_ = parse_seed_list(flags.seed);
      cfg_.train.seed = seeds_.front();
      cfg_.shift.seed = seeds_.front();
    } else {
      seeds_ = {cfg_.train.seed};
    }
    if (!flags.source.empty()) cfg_.paths.source = flags.source;
    if (!flags.target.empty()) cfg_.paths.target = flags.target;
    if (!flags.checkpoint.empty()) cfg_.paths.checkpoint = flags.checkpoint;
  }

  ExperimentConfig& cfg() { return cfg_; }
  const std::vector<std::uint64_t>& seeds() const { return seeds_; }

  std::uint64_t single_seed() const {
    if (seeds_.size() != 1) throw UsageError(command_ + ": --seed takes a single value");
    return seeds_.front();
  }

  const fs::path& out_dir() {
    if (flags_.out.empty()) throw UsageError(command_ + ": --out <dir> is required");
    if (!out_) {
      out_ = fs::path(flags_.out);
      fs::create_directories(*out_);
    }
    return *out_;
  }

  std::string require_path(const std::optional<std::string>& value, const char* field,
                           const char* flag) const {
    if (!value) {
      throw ValidationError("missing required field " + std::string(field) + " (set it in --config or pass " +
                            flag + ")");
    }
    return *value;
  }

  void input(const std::string& name, const std::string& path) { inputs_[name] = path; }
  void output(const std::string& name, const fs::path& path) { outputs_[name] = path.string(); }

  /// Written once before any work and again on completion.
  void write_manifest(bool finished) {
    json m{{"command", command_},
           {"config_path", flags_.config.empty() ? json(nullptr) : json(flags_.config)},
           {"config", experiment_config_to_json(cfg_)},
           {"seeds", seeds_},
           {"inputs", inputs_},
           {"outputs", outputs_},
           {"started_at", started_at_},
           {"status", finished ? "completed" : "running"}};
    if (finished) {
      m["finished_at"] = utc_now();
      m["wall_clock_seconds"] = timings_;
    }
    write_json(out_dir() / "manifest.json", m);
  }

  void timing(const std::string& name, double seconds) { timings_[name] = seconds; }

 private:
  std::string command_;
  Flags flags_;
  ExperimentConfig cfg_;
  std::vector<std::uint64_t> seeds_;
  std::optional<fs::path> out_;
  json inputs_ = json::object();
  json outputs_ = json::object();
  json timings_ = json::object();
  std::string started_at_ = utc_now();
};

DomainDataset load_domain(const std::string& path, Domain expected) {
  DomainDataset ds = load_dataset(path);
  if (ds.domain != expected) {
    throw ValidationError("'" + path + "' holds " + std::string(to_string(ds.domain)) +
                          " data, expected " + std::string(to_string(expected)));
  }
  return ds;
}

json eval_json(const ModelState& state, const DomainDataset& ds) {
  bool labelled = false;
  for (const auto& bag : ds.bags)
    for (const auto& inst : bag.instances) labelled |= inst.label.has_value();
  return {{"domain", to_string(ds.domain)},
          {"instance", labelled ? report_to_json(evaluate_instances(state, ds)) : json(nullptr)},
          {"bag", report_to_json(evaluate_bags(state, ds))}};
}

json alignment_json(const AlignmentScore& a) {
  json per_class = json::array();
  for (const auto& d : a.per_class) per_class.push_back(d ? json(*d) : json(nullptr));
  return {{"per_class", per_class}, {"mean", a.mean}, {"excluded_classes", a.excluded_classes}};
}

int cmd_gen_data(const Flags& flags, std::ostream& out) {
  if (flags.print_defaults) {
    out << experiment_config_to_json(ExperimentConfig{}).dump(2) << "\n";
    return 0;
  }
  Run run("gen-data", flags);
  run.single_seed();
  const fs::path dir = run.out_dir();
  run.output("source", dir / "source.jsonl");
  run.output("target", dir / "target.jsonl");
  run.write_manifest(false);
  const DomainPair pair = generate_synthetic_domains(run.cfg().shift);
  save_dataset(pair.source, dir / "source.jsonl");
  save_dataset(pair.target, dir / "target.jsonl");
  run.write_manifest(true);
  out << "wrote " << pair.source.bags.size() << " source and " << pair.target.bags.size()
      << " target bags to " << dir.string() << "\n";
  return 0;
}

int cmd_pretrain(const Flags& flags, std::ostream& out) {
  Run run("pretrain", flags);
  run.single_seed();
  const std::string source_path = run.require_path(run.cfg().paths.source, "paths.source", "--source");
  const fs::path dir = run.out_dir();
  run.input("source", source_path);
  run.output("checkpoint", dir / "checkpoint.json");
  run.output("train_log", dir / "train_log.json");
  run.output("eval", dir / "eval.json");
  run.write_manifest(false);

  const DomainDataset source = load_domain(source_path, Domain::source);
  const TrainResult result = pretrain_source(run.cfg().train, source);
  save_checkpoint(result.state, dir / "checkpoint.json");
  write_json(dir / "train_log.json", train_log_to_json(result.log));
  write_json(dir / "eval.json", eval_json(result.state, source));
  run.timing("pretrain", result.log.wall_clock_seconds);
  run.write_manifest(true);
  out << "pretrained " << result.log.epochs.size() << " epochs (best " << result.log.best_epoch
      << ") -> " << (dir / "checkpoint.json").string() << "\n";
  return 0;
}

int cmd_adapt(const Flags& flags, std::ostream& out) {
  Run run("adapt", flags);
  run.single_seed();
  const auto& paths = run.cfg().paths;
  const std::string ckpt = run.require_path(paths.checkpoint, "paths.checkpoint", "--checkpoint");
  const std::string source_path = run.require_path(paths.source, "paths.source", "--source");
  const std::string target_path = run.require_path(paths.target, "paths.target", "--target");
  const fs::path dir = run.out_dir();
  run.input("checkpoint", ckpt);
  run.input("source", source_path);
  run.input("target", target_path);
  run.output("checkpoint", dir / "checkpoint.json");
  run.output("adapt_log", dir / "adapt_log.json");
  run.output("eval", dir / "eval.json");
  run.output("pca_before", dir / "pca_before.csv");
  run.output("pca_after", dir / "pca_after.csv");
  run.write_manifest(false);

  const ModelState pretrained = load_checkpoint(ckpt);
  const DomainDataset source = load_domain(source_path, Domain::source);
  const DomainDataset target = load_domain(target_path, Domain::target);
  ModelState before = pretrained;
  before.target_encoder = before.source_encoder;
  const AdaptResult result = adapt_target(run.cfg().train, pretrained, source, target);
  save_checkpoint(result.state, dir / "checkpoint.json");
  write_json(dir / "adapt_log.json", train_log_to_json(result.log));
  write_json(dir / "eval.json",
             {{"before", eval_json(before, target)},
              {"after", eval_json(result.state, target)},
              {"alignment_before", alignment_json(measure_alignment(before, source, target))},
              {"alignment_after", alignment_json(measure_alignment(result.state, source, target))}});
  export_pca_csv(before, source, target, dir / "pca_before.csv");
  export_pca_csv(result.state, source, target, dir / "pca_after.csv");
  run.timing("adapt", result.log.wall_clock_seconds);
  run.write_manifest(true);
  out << "adapted " << result.log.epochs.size() << " epochs -> "
      << (dir / "checkpoint.json").string() << "\n";
  return 0;
}

int cmd_eval(const Flags& flags, std::ostream& out) {
  Run run("eval", flags);
  const std::string ckpt = run.require_path(run.cfg().paths.checkpoint, "paths.checkpoint", "--checkpoint");
  if (flags.dataset.empty()) throw UsageError("eval: --dataset <path> is required");
  const ModelState state = load_checkpoint(ckpt);
  const DomainDataset ds = load_dataset(flags.dataset);
  const json report = eval_json(state, ds);
  if (!flags.out.empty()) {
    const fs::path dir = run.out_dir();
    run.input("checkpoint", ckpt);
    run.input("dataset", flags.dataset);
    run.output("eval", dir / "eval.json");
    run.write_manifest(false);
    write_json(dir / "eval.json", report);
    run.write_manifest(true);
  }
  out << report.dump(2) << "\n";
  return 0;
}

int cmd_ablate(const Flags& flags, std::ostream& out) {
  Run run("ablate", flags);
  const fs::path dir = run.out_dir();
  run.output("ablation", dir / "ablation.json");
  run.output("pca_dir", dir / "pca");
  run.write_manifest(false);

  const ShiftConfig shift = run.cfg().shift;
  AblationOptions options;
  options.seeds = run.seeds();
  options.pca_dir = dir / "pca";
  const auto t0 = std::chrono::steady_clock::now();
  const AblationTable table = run_ablation(
      run.cfg().train,
      [shift](std::uint64_t seed) {
        ShiftConfig s = shift;
        s.seed = seed;
        return generate_synthetic_domains(s);
      },
      options);
  write_json(dir / "ablation.json", ablation_to_json(table));
  run.timing("ablate", std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  run.write_manifest(true);

  out << std::left << std::setw(12) << "variant" << std::setw(10) << "accuracy" << std::setw(10)
      << "macro_f1" << std::setw(10) << "qwk" << "alignment\n";
  out << std::fixed << std::setprecision(4);
  for (const auto& s : table.summary) {
    out << std::setw(12) << to_string(s.variant) << std::setw(10) << s.mean_accuracy << std::setw(10)
        << s.mean_macro_f1 << std::setw(10) << s.mean_qwk << s.mean_alignment << "\n";
  }
  return 0;
}

int cmd_grad_check(const Flags& flags, std::ostream& out) {
  Run run("grad-check", flags);
  GradSuiteOptions options;
  options.seed = run.single_seed();
  if (!flags.out.empty()) {
    run.output("grad_check", run.out_dir() / "grad_check.json");
    run.write_manifest(false);
  }
  const auto entries = run_grad_suite(options);
  if (!flags.out.empty()) {
    write_json(run.out_dir() / "grad_check.json", grad_suite_to_json(entries));
    run.write_manifest(true);
  }
  std::string failed;
  for (const auto& e : entries) {
    out << std::left << std::setw(20) << e.loss << " max_rel_error=" << std::scientific
        << std::setprecision(3) << e.max_rel_error << " " << (e.passed ? "ok" : "FAILED") << "\n";
    if (!e.passed) failed += (failed.empty() ? "" : ", ") + e.loss;
  }
  if (!failed.empty()) throw ValidationError("gradient check failed for " + failed);
  return 0;
}

int cmd_export_pca(const Flags& flags, std::ostream& out) {
  Run run("export-pca", flags);
  const auto& paths = run.cfg().paths;
  const std::string ckpt = run.require_path(paths.checkpoint, "paths.checkpoint", "--checkpoint");
  const std::string source_path = run.require_path(paths.source, "paths.source", "--source");
  const std::string target_path = run.require_path(paths.target, "paths.target", "--target");
  const fs::path dir = run.out_dir();
  run.input("checkpoint", ckpt);
  run.input("source", source_path);
  run.input("target", target_path);
  run.output("pca", dir / "pca.csv");
  run.write_manifest(false);
  export_pca_csv(load_checkpoint(ckpt), load_domain(source_path, Domain::source),
                 load_domain(target_path, Domain::target), dir / "pca.csv");
  run.write_manifest(true);
  out << "wrote " << (dir / "pca.csv").string() << "\n";
  return 0;
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Ordinal multi-instance domain adaptation toolkit", "sevalign"};
  app.require_subcommand(1);
  Flags flags;

  struct CommandInfo {
    const char* name;
    const char* help;
    bool checkpoint, dataset, domains;
  };
  const CommandInfo commands[] = {
      {"gen-data", "generate a synthetic source/target pair", false, false, false},
      {"pretrain", "stage 1: train on labelled source bags", false, false, true},
      {"adapt", "stage 2: adapt the target encoder", true, false, true},
      {"eval", "report metrics of a checkpoint on one dataset", true, true, false},
      {"ablate", "run the ablation variants over seeds", false, false, false},
      {"grad-check", "finite-difference check of every loss", false, false, false},
      {"export-pca", "write PCA coordinates of both domains as CSV", true, false, true},
  };
  for (const auto& info : commands) {
    CLI::App* sub = app.add_subcommand(info.name, info.help);
    sub->add_option("--config", flags.config, "experiment config JSON");
    sub->add_option("--seed", flags.seed, "seed, range a..b or list a,b");
    sub->add_option("--out", flags.out, "output directory");
    if (info.checkpoint) sub->add_option("--checkpoint", flags.checkpoint, "checkpoint JSON");
    if (info.dataset) sub->add_option("--dataset", flags.dataset, "dataset JSONL");
    if (info.domains) {
      sub->add_option("--source", flags.source, "source dataset JSONL");
      if (std::string_view(info.name) != "pretrain") {
        sub->add_option("--target", flags.target, "target dataset JSONL");
      }
    }
    if (std::string_view(info.name) == "gen-data") {
      sub->add_flag("--print-defaults", flags.print_defaults, "print the default config and exit");
    }
  }

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 2;
  }

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    if (command == "gen-data") return cmd_gen_data(flags, out);
    if (command == "pretrain") return cmd_pretrain(flags, out);
    if (command == "adapt") return cmd_adapt(flags, out);
    if (command == "eval") return cmd_eval(flags, out);
    if (command == "ablate") return cmd_ablate(flags, out);
    if (command == "grad-check") return cmd_grad_check(flags, out);
    if (command == "export-pca") return cmd_export_pca(flags, out);
    throw UsageError("unknown command '" + command + "'");
  } catch (const UsageError& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << one_line(e.what()) << "\n";
    return 1;
  }
}

}  // namespace sevalign
