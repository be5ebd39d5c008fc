#include "sift/service/cli.hpp"

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "sift/errors.hpp"
#include "sift/eval/eval.hpp"
#include "sift/service/server.hpp"
#include "sift/synth/synth.hpp"

namespace sift::service {

namespace {

tagger::ArchitectureSpec parse_arch(const std::string& name, std::size_t num_activities) {
  if (name == "MA") return tagger::ArchitectureSpec::recurrent(num_activities);
  if (name.rfind("MB_", 0) == 0) {
    std::size_t used = 0;
    int k = 0;
    try {
      k = std::stoi(name.substr(3), &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == name.size() - 3 && k >= 1) return tagger::ArchitectureSpec::windowed(static_cast<std::size_t>(k), num_activities);
  }
  throw CLI::ValidationError("--arch", "expected MA or MB_<K>, got '" + name + "'");
}

std::optional<std::size_t> parse_k(const std::string& text) {
  if (text == "auto") return std::nullopt;
  try {
    std::size_t used = 0;
    const long k = std::stol(text, &used);
    if (used == text.size() && k >= 1) return static_cast<std::size_t>(k);
  } catch (const std::exception&) {
  }
  throw CLI::ValidationError("--k", "expected 'auto' or a positive integer, got '" + text + "'");
}

std::vector<double> parse_fractions(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      const double v = std::stod(item, &used);
      if (used != item.size() || !(v > 0 && v <= 100)) throw std::invalid_argument(item);
      out.push_back(v);
    } catch (const std::exception&) {
      throw CLI::ValidationError("--fractions", "expected percentages in (0,100], got '" + item + "'");
    }
  }
  if (out.empty()) throw CLI::ValidationError("--fractions", "empty list");
  return out;
}

// Parse-time checks, so malformed values are usage errors (exit 2).
const CLI::Validator kBeamWidth(
    [](std::string& v) {
      try {
        parse_k(v);
        return std::string();
      } catch (const CLI::ValidationError& e) {
        return std::string(e.what());
      }
    },
    "auto|K");
const CLI::Validator kArchName(
    [](std::string& v) {
      try {
        parse_arch(v, 1);
        return std::string();
      } catch (const CLI::ValidationError& e) {
        return std::string(e.what());
      }
    },
    "MA|MB_K");
const CLI::Validator kFractionList(
    [](std::string& v) {
      try {
        parse_fractions(v);
        return std::string();
      } catch (const CLI::ValidationError& e) {
        return std::string(e.what());
      }
    },
    "P,P,...");

void write_text(const std::string& path, const std::string& text, std::ostream& out) {
  if (path.empty() || path == "-") {
    out << text;
    return;
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ParseError(path, "cannot open for writing");
  f << text;
}

std::shared_ptr<const tagger::Tagger> tagger_from(const std::string& ref, const DomainModel& model) {
  if (ref == "uniform") return std::make_shared<const tagger::UniformTagger>(model.num_activities());
  auto t = std::make_shared<const tagger::TrainedTagger>(tagger::load_tagger(ref));
  std::vector<std::string> names;
  for (std::size_t a = 0; a < model.num_activities(); ++a) names.emplace_back(model.activities.name(a));
  if (t->activities() != names) throw SchemaError("tagger activities do not match the model's activities");
  return t;
}

// Splits `data` when a train share below 1 is given; otherwise both halves
// are the full dataset.
std::pair<std::vector<LabeledTrace>, std::vector<LabeledTrace>> maybe_split(std::vector<LabeledTrace> data, double share,
                                                                            std::uint64_t seed) {
  if (share >= 1.0) return {data, data};
  return eval::split_dataset(data, share, seed);
}

Server* active_server = nullptr;

extern "C" void on_signal(int) {
  if (active_server) active_server->stop();
}

std::vector<std::string> words(const std::string& line) {
  std::vector<std::string> out;
  std::istringstream ss(line);
  for (std::string w; ss >> w;) out.push_back(w);
  return out;
}

// One command per line; each reply is one JSON line.
int repl(SessionStore& store, const json& create, std::istream& in, std::ostream& out) {
  const auto id = store.create(create).at("id").get<std::string>();
  out << "session " << id << " ready; commands: event TYPE [name=value ...] | query I ACT|* STEP|* INST|* "
         "[skeptical] | explain I ACT [STEP INST] | finalize | state | quit\n";
  for (std::string line; std::getline(in, line);) {
    const auto w = words(line);
    if (w.empty()) continue;
    try {
      json reply;
      if (w[0] == "quit" || w[0] == "exit") break;
      if (w[0] == "event" && w.size() >= 2) {
        json ev = {{"type", w[1]}, {"attrs", json::object()}};
        for (std::size_t i = 2; i < w.size(); ++i) {
          const auto eq = w[i].find('=');
          if (eq == std::string::npos) throw ParseError("attrs", "expected name=value, got '" + w[i] + "'");
          const auto name = w[i].substr(0, eq), value = w[i].substr(eq + 1);
          char* end = nullptr;
          const double num = std::strtod(value.c_str(), &end);
          if (!value.empty() && end == value.c_str() + value.size())
            ev["attrs"][name] = num;
          else
            ev["attrs"][name] = value;
        }
        reply = store.post_event(id, ev);
      } else if ((w[0] == "query" && (w.size() == 5 || w.size() == 6)) || (w[0] == "explain" && (w.size() == 3 || w.size() == 5))) {
        json q = {{"index", std::stoull(w[1])}};
        if (w[2] != "*") q["activity"] = w[2];
        if (w.size() >= 5) {
          if (w[3] != "*") q["step"] = w[3];
          if (w[4] != "*") q["instance"] = std::stoul(w[4]);
        }
        if (w.size() == 6) q["semantics"] = w[5];
        reply = w[0] == "query" ? store.query(id, q) : store.explain(id, q);
      } else if (w[0] == "finalize" && w.size() == 1) {
        reply = store.finalize(id);
      } else if (w[0] == "state" && w.size() == 1) {
        reply = store.state(id);
      } else {
        out << "error: unrecognized command\n";
        continue;
      }
      out << reply.dump() << '\n';
    } catch (const std::exception& e) {
      out << "error: " << e.what() << '\n';
    }
  }
  return 0;
}

}  // namespace

int cli_main(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err) {
  CLI::App app{"Event-log interpretation with argumentation and neural tagging", "sift"};
  app.require_subcommand(1);

  // model gen
  auto* model_cmd = app.add_subcommand("model", "Domain models")->require_subcommand(1);
  auto* model_gen = model_cmd->add_subcommand("gen", "Generate a SYN-style model");
  synth::SynModelSpec syn;
  std::uint64_t model_seed = 1;
  std::string model_out;
  model_gen->add_option("--seed", model_seed, "Random seed");
  model_gen->add_option("--out", model_out, "Model file (stdout if omitted)");
  model_gen->add_option("--activities", syn.activities)->check(CLI::PositiveNumber);
  model_gen->add_option("--event-types", syn.event_types)->check(CLI::PositiveNumber);
  model_gen->add_option("--must", syn.must);
  model_gen->add_option("--not", syn.not_);
  model_gen->add_option("--precedence", syn.precedence);
  model_gen->add_option("--max-instances", syn.max_instances)->check(CLI::PositiveNumber);

  // data gen
  auto* data_cmd = app.add_subcommand("data", "Datasets")->require_subcommand(1);
  auto* data_gen = data_cmd->add_subcommand("gen", "Generate labelled traces");
  std::string data_model, data_lengths, data_out;
  synth::DatasetSpec dspec;
  data_gen->add_option("--model", data_model, "Model file")->required();
  data_gen->add_option("--lengths", data_lengths, "Length counts, e.g. 20:100,40:100")->required();
  data_gen->add_option("--seed", dspec.seed, "Random seed");
  data_gen->add_option("--out", data_out, "Dataset file (a .manifest.json sidecar is written too)")->required();
  data_gen->add_option("--min-concurrency", dspec.trace.min_concurrency)->check(CLI::PositiveNumber);
  data_gen->add_option("--max-concurrency", dspec.trace.max_concurrency)->check(CLI::PositiveNumber);

  // tagger train
  auto* tagger_cmd = app.add_subcommand("tagger", "Taggers")->require_subcommand(1);
  auto* train_cmd = tagger_cmd->add_subcommand("train", "Train a tagger");
  std::string tr_model, tr_data, tr_valid, tr_out, tr_arch = "MB_5", tr_embedding = "learned";
  double tr_share = 1.0;
  std::uint64_t tr_split_seed = 1;
  tagger::TrainingOptions topts;
  bool tr_quiet = false;
  train_cmd->add_option("--model", tr_model, "Model file")->required();
  train_cmd->add_option("--data", tr_data, "Training dataset")->required();
  train_cmd->add_option("--validation", tr_valid, "Validation dataset");
  train_cmd->add_option("--train-share", tr_share, "Train on this share of --data, validate on the rest")
      ->check(CLI::Range(0.0, 1.0));
  train_cmd->add_option("--split-seed", tr_split_seed, "Seed of the train/test split");
  train_cmd->add_option("--arch", tr_arch, "MA or MB_<K>")->check(kArchName);
  train_cmd->add_option("--embedding", tr_embedding, "Event-type embedding")->check(CLI::IsMember({"learned", "onehot"}));
  train_cmd->add_option("--epochs", topts.epochs, "Epochs (0: 10 for MA, 50 for MB)");
  train_cmd->add_option("--lr", topts.learning_rate)->check(CLI::PositiveNumber);
  train_cmd->add_option("--batch", topts.batch_size)->check(CLI::PositiveNumber);
  train_cmd->add_option("--seed", topts.seed);
  train_cmd->add_option("--out", tr_out, "Tagger file")->required();
  train_cmd->add_flag("--quiet", tr_quiet, "No per-epoch progress");

  // eval run / sweep
  auto* eval_cmd = app.add_subcommand("eval", "Evaluation")->require_subcommand(1);
  auto* run_cmd = eval_cmd->add_subcommand("run", "Accuracy and timing of one tagger");
  std::string ev_data, ev_tagger = "uniform", ev_model, ev_k = "auto", ev_format = "csv", ev_out, ev_arch,
                       ev_denominator = "universe";
  double ev_gamma = 0.001, ev_fraction = 100, ev_share = 1.0;
  std::uint64_t ev_split_seed = 1;
  std::size_t ev_budget = aaf::SolverOptions{}.node_budget;
  run_cmd->add_option("--data", ev_data, "Labelled dataset")->required();
  run_cmd->add_option("--tagger", ev_tagger, "Tagger file or 'uniform'");
  run_cmd->add_option("--model", ev_model, "Model file")->required();
  run_cmd->add_option("--k", ev_k, "Beam width or 'auto'")->check(kBeamWidth);
  run_cmd->add_option("--gamma", ev_gamma)->check(CLI::PositiveNumber);
  run_cmd->add_option("--denominator", ev_denominator)->check(CLI::IsMember({"universe", "valid"}));
  run_cmd->add_option("--train-share", ev_share, "Evaluate only the held-out part of this split")
      ->check(CLI::Range(0.0, 1.0));
  run_cmd->add_option("--split-seed", ev_split_seed);
  run_cmd->add_option("--arch", ev_arch, "Row label (default: the tagger's architecture)");
  run_cmd->add_option("--fraction", ev_fraction, "Row label: training fraction in percent");
  run_cmd->add_option("--node-budget", ev_budget)->check(CLI::PositiveNumber);
  run_cmd->add_option("--format", ev_format)->check(CLI::IsMember({"csv", "plot"}));
  run_cmd->add_option("--out", ev_out, "Report file (stdout if omitted)");

  auto* sweep_cmd = eval_cmd->add_subcommand("sweep", "Training-fraction sweep");
  std::string sw_data, sw_model, sw_arch = "MB_5", sw_fractions = "20,40,60,80,90,100", sw_k = "auto",
                       sw_format = "csv", sw_out;
  double sw_share = 0.8, sw_gamma = 0.001;
  std::uint64_t sw_split_seed = 1;
  tagger::TrainingOptions sw_topts;
  sweep_cmd->add_option("--data", sw_data, "Labelled dataset")->required();
  sweep_cmd->add_option("--model", sw_model, "Model file")->required();
  sweep_cmd->add_option("--arch", sw_arch, "MA or MB_<K>")->check(kArchName);
  sweep_cmd->add_option("--fractions", sw_fractions, "Training percentages")->check(kFractionList);
  sweep_cmd->add_option("--train-share", sw_share, "Share of --data used for training")->check(CLI::Range(0.0, 1.0));
  sweep_cmd->add_option("--split-seed", sw_split_seed);
  sweep_cmd->add_option("--epochs", sw_topts.epochs);
  sweep_cmd->add_option("--seed", sw_topts.seed);
  sweep_cmd->add_option("--k", sw_k)->check(kBeamWidth);
  sweep_cmd->add_option("--gamma", sw_gamma)->check(CLI::PositiveNumber);
  sweep_cmd->add_option("--format", sw_format)->check(CLI::IsMember({"csv", "plot"}));
  sweep_cmd->add_option("--out", sw_out);

  // serve
  auto* serve_cmd = app.add_subcommand("serve", "HTTP session service");
  auto store_opts = options_from_environment();
  std::string host = "127.0.0.1";
  int port = 8080;
  long ttl_seconds = static_cast<long>(std::chrono::duration_cast<std::chrono::seconds>(store_opts.idle_ttl).count());
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port)->check(CLI::Range(0, 65535));
  serve_cmd->add_option("--model-dir", store_opts.model_dir, "Base for relative artifact paths (env SIFT_MODEL_DIR)");
  serve_cmd->add_option("--journal", store_opts.journal_dir, "Journal directory (env SIFT_JOURNAL_DIR)");
  serve_cmd->add_option("--ttl", ttl_seconds, "Idle session lifetime in seconds (env SIFT_SESSION_TTL)")
      ->check(CLI::PositiveNumber);

  // repl
  auto* repl_cmd = app.add_subcommand("repl", "Interactive single session");
  std::string rp_model, rp_tagger = "uniform", rp_k = "auto";
  double rp_gamma = 0.001;
  repl_cmd->add_option("--model", rp_model, "Model file")->required();
  repl_cmd->add_option("--tagger", rp_tagger, "Tagger file or 'uniform'");
  repl_cmd->add_option("--k", rp_k)->check(kBeamWidth);
  repl_cmd->add_option("--gamma", rp_gamma)->check(CLI::PositiveNumber);

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) {
      // --help
      out << app.help("", CLI::AppFormatMode::All);
      return 0;
    }
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  try {
    if (model_gen->parsed()) {
      const auto m = synth::generate_syn_model(syn, model_seed);
      write_text(model_out, serialize_model(m), out);
    } else if (data_gen->parsed()) {
      const auto m = load_model(data_model);
      dspec.counts = synth::parse_length_counts(data_lengths);
      const auto data = synth::generate_dataset(m, dspec);
      synth::write_dataset(m, dspec, data, data_out);
      err << "wrote " << data.size() << " traces to " << data_out << '\n';
    } else if (train_cmd->parsed()) {
      const auto m = load_model(tr_model);
      auto [train_part, held_out] = maybe_split(load_dataset(m, tr_data), tr_share, tr_split_seed);
      std::vector<LabeledTrace> validation;
      if (!tr_valid.empty())
        validation = load_dataset(m, tr_valid);
      else if (tr_share < 1.0)
        validation = held_out;
      const auto spec = parse_arch(tr_arch, m.num_activities());
      std::vector<Trace> traces;
      for (const auto& r : train_part) traces.push_back(r.trace);
      const auto cfg = tagger::EmbeddingConfig::for_dataset(
          m.num_event_types(), traces, tr_embedding == "learned" ? tagger::FieldMode::Learned : tagger::FieldMode::OneHot);
      if (!tr_quiet)
        topts.on_epoch = [&err](std::size_t epoch, double loss, double val) {
          err << "epoch " << epoch << " loss " << loss;
          if (!std::isnan(val)) err << " validation " << val;
          err << '\n';
        };
      std::vector<std::string> names;
      for (std::size_t a = 0; a < m.num_activities(); ++a) names.emplace_back(m.activities.name(a));
      const auto t = tagger::train(spec, cfg, names, train_part, validation, topts);
      tagger::save_tagger(t, tr_out);
    } else if (run_cmd->parsed()) {
      auto m = std::make_shared<const DomainModel>(load_model(ev_model));
      auto tg = tagger_from(ev_tagger, *m);
      auto data = load_dataset(*m, ev_data);
      if (ev_share < 1.0) data = eval::split_dataset(data, ev_share, ev_split_seed).second;
      eval::EvalConfig cfg;
      if (!ev_arch.empty())
        cfg.arch = ev_arch;
      else if (const auto* trained = dynamic_cast<const tagger::TrainedTagger*>(tg.get()))
        cfg.arch = trained->network().spec().name();
      else
        cfg.arch = "uniform";
      cfg.fraction = ev_fraction;
      cfg.pipeline.k = parse_k(ev_k);
      cfg.pipeline.gamma = ev_gamma;
      cfg.pipeline.denominator =
          ev_denominator == "valid" ? pipeline::SmoothingDenominator::ValidSet : pipeline::SmoothingDenominator::Universe;
      cfg.solver.node_budget = ev_budget;
      const auto table = eval::evaluate(data, tg, m, cfg);
      write_text(ev_out, eval::emit_report(table, ev_format == "csv" ? eval::ReportFormat::Csv : eval::ReportFormat::PlotData),
                 out);
    } else if (sweep_cmd->parsed()) {
      auto m = std::make_shared<const DomainModel>(load_model(sw_model));
      auto [train_part, test_part] = eval::split_dataset(load_dataset(*m, sw_data), sw_share, sw_split_seed);
      eval::SweepConfig cfg;
      cfg.fractions = parse_fractions(sw_fractions);
      cfg.arch = parse_arch(sw_arch, m->num_activities());
      std::vector<Trace> traces;
      for (const auto& r : train_part) traces.push_back(r.trace);
      cfg.embedding = tagger::EmbeddingConfig::for_dataset(m->num_event_types(), traces);
      cfg.training = sw_topts;
      cfg.subsample_seed = sw_split_seed;
      cfg.eval.arch = sw_arch;
      cfg.eval.pipeline.k = parse_k(sw_k);
      cfg.eval.pipeline.gamma = sw_gamma;
      const auto table = eval::sweep_training_fraction(train_part, test_part, m, cfg);
      write_text(sw_out, eval::emit_report(table, sw_format == "csv" ? eval::ReportFormat::Csv : eval::ReportFormat::PlotData),
                 out);
    } else if (serve_cmd->parsed()) {
      store_opts.idle_ttl = std::chrono::seconds(ttl_seconds);
      Server server(store_opts);
      const int bound = server.bind(host, port);
      if (bound < 0) {
        err << "error: cannot bind " << host << ':' << port << '\n';
        return 1;
      }
      err << "listening on http://" << host << ':' << bound << '\n';
      active_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      server.run();
      active_server = nullptr;
    } else if (repl_cmd->parsed()) {
      StoreOptions local;
      local.model_dir = ".";
      SessionStore store(local);
      json config = {{"gamma", rp_gamma}};
      config["k"] = rp_k == "auto" ? json("auto") : json(*parse_k(rp_k));
      return repl(store, {{"model", rp_model}, {"tagger", rp_tagger}, {"config", config}}, in, out);
    }
  } catch (const CLI::ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}

}  // namespace sift::service
