// Command-line front end: train, generate, classify, analyze, fewshot, synth.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "big/analysis.hpp"
#include "big/binary_io.hpp"
#include "big/error.hpp"
#include "big/rng.hpp"
#include "big/training.hpp"
#include "experiment.hpp"

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;
using namespace big;
using namespace big::cli;

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  std::string out = ".";
  bool quiet = false;
};

Globals g;

void say(const std::string& s) {
  if (!g.quiet) std::cout << s << '\n';
}

void warn(const std::string& s) { std::cerr << "warning: " << s << '\n'; }

std::uint64_t seed_or(std::uint64_t fallback) { return g.seed ? *g.seed : fallback; }

void write_text(const std::string& name, const std::string& text) {
  std::ofstream out(fs::path(g.out) / name, std::ios::binary);
  if (!out) throw Error("cannot write " + (fs::path(g.out) / name).string());
  out << text;
}

std::string stem(std::size_t i, const std::string& path) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%03zu_", i);
  return buf + fs::path(path).stem().string();
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

Model load_model(const std::string& path) { return model_from_checkpoint(load_checkpoint(path)); }

// ---- train ----------------------------------------------------------------------

int cmd_train(const std::string& config_path, const std::string& resume) {
  const ExperimentConfig cfg = load_experiment(config_path, g.seed);
  const Dataset data = load_data(cfg);
  const auto train = prepare_examples(cfg.model, data.train);
  const auto test = prepare_examples(cfg.model, data.test);

  Model model = Model::create(cfg.model, derive_seed(cfg.seed, {1}));
  Trainer trainer(model, cfg.train);
  if (!resume.empty()) trainer.resume(load_checkpoint(resume));

  std::string metrics;
  while (trainer.epoch() < cfg.train.epochs) {
    const EpochMetrics m = trainer.train_epoch(train);
    metrics += m.to_jsonl() + "\n";
    say(m.to_jsonl());
  }
  write_text("metrics.jsonl", metrics);
  save_checkpoint((fs::path(g.out) / "checkpoint.bigm").string(), trainer.checkpoint());

  Manifest man("train", cfg.seed);
  man.set("config_hash", binio::fnv1a_hex(cfg.text.data(), cfg.text.size()));
  man.set("config", ojson::parse(cfg.text));
  man.input(config_path);
  if (!resume.empty()) man.input(resume);
  man.output(g.out, "metrics.jsonl");
  man.output(g.out, "checkpoint.bigm");

  if (!test.empty()) {
    std::vector<int> labels;
    std::vector<double> probs;
    std::size_t correct = 0;
    for (const auto& ex : test) {
      const Prediction p = predict(model, ex);
      labels.push_back(ex.label);
      probs.insert(probs.end(), p.probabilities.begin(), p.probabilities.end());
      correct += p.label == ex.label;
    }
    ojson ev;
    ev["n_test"] = test.size();
    ev["test_accuracy"] = static_cast<double>(correct) / static_cast<double>(test.size());
    try {
      ev["macro_auc"] = roc_one_vs_rest(labels, probs, cfg.model.n_classes).macro_auc;
    } catch (const ConfigError& e) {
      warn(std::string("auc not computed: ") + e.what());
    }
    write_text("eval.json", ev.dump(2) + "\n");
    man.output(g.out, "eval.json");
    say("test accuracy " + fmt(ev["test_accuracy"].get<double>()));
  }
  man.write(g.out);
  return 0;
}

// ---- generate -------------------------------------------------------------------

int cmd_generate(const std::string& ckpt, std::size_t n, const std::string& mode_name,
                 const std::vector<std::string>& sources) {
  const GenerateMode mode = parse_generate_mode(mode_name);
  if (n == 0) throw ConfigError("generate: --n must be positive");
  Model model = load_model(ckpt);
  const auto files = sources.empty() ? std::vector<std::string>{} : expand_inputs(sources);
  const auto src = prepare_examples(model.cfg, load_recordings(files));
  const std::uint64_t seed = seed_or(0);
  const GenerationResult res = generate_eeg(model, n, mode, src, seed);
  for (const auto& w : res.warnings) warn(w);

  Manifest man("generate", seed);
  man.set("mode", to_string(mode));
  man.set("n", n);
  man.set("warnings", res.warnings);
  man.input(ckpt);
  for (const auto& f : files) man.input(f);
  for (std::size_t i = 0; i < res.recordings.size(); ++i) {
    char name[32];
    std::snprintf(name, sizeof name, "gen_%04zu.bige", i);
    save_recording((fs::path(g.out) / name).string(), res.recordings[i]);
    man.output(g.out, name);
  }
  man.write(g.out);
  say("wrote " + std::to_string(res.recordings.size()) + " recordings");
  return 0;
}

// ---- classify -------------------------------------------------------------------

int cmd_classify(const std::string& ckpt, const std::vector<std::string>& inputs) {
  Model model = load_model(ckpt);
  const auto files = expand_inputs(inputs);
  std::ostringstream csv;
  csv << "file,label,predicted";
  for (std::size_t k = 0; k < model.cfg.n_classes; ++k) csv << ",p_" << k;
  csv << '\n';
  std::size_t labelled = 0, correct = 0;
  for (const auto& f : files) {
    const EegRecording rec = load_recording(f);
    const Prediction p = predict(model, rec);
    csv << fs::path(f).filename().string() << ',' << (rec.label ? std::to_string(*rec.label) : "") << ',' << p.label;
    for (double v : p.probabilities) csv << ',' << fmt(v);
    csv << '\n';
    if (rec.label) {
      ++labelled;
      correct += *rec.label == p.label;
    }
  }
  write_text("predictions.csv", csv.str());
  Manifest man("classify", seed_or(0));
  man.input(ckpt);
  for (const auto& f : files) man.input(f);
  man.output(g.out, "predictions.csv");
  man.write(g.out);
  if (labelled) say("accuracy " + fmt(static_cast<double>(correct) / static_cast<double>(labelled)));
  return 0;
}

// ---- analyze --------------------------------------------------------------------

struct AnalyzeOptions {
  std::string which;
  std::vector<std::string> inputs;
  std::string checkpoint;
  std::string band = "alpha";
  double window = 0.0;
  std::string montage;
  double percentile = 95.0;
  double max_rate = 400.0;
  double reference = 25.0;
};

Montage pick_montage(const AnalyzeOptions& o, const std::vector<std::string>& labels) {
  if (!o.montage.empty()) return load_montage_csv(o.montage);
  const auto& std1020 = standard_1020_montage();
  for (const auto& l : labels)
    if (!std1020.count(l)) return ring_montage(labels);
  return std1020;
}

int cmd_analyze(const AnalyzeOptions& o) {
  Manifest man("analyze", seed_or(0));
  man.set("which", o.which);
  const auto files = o.inputs.empty() ? std::vector<std::string>{} : expand_inputs(o.inputs);
  for (const auto& f : files) man.input(f);
  if (!o.checkpoint.empty()) man.input(o.checkpoint);
  auto need_inputs = [&](std::size_t k) {
    if (files.size() < k) throw ConfigError("analyze " + o.which + ": needs at least " + std::to_string(k) + " input(s)");
  };
  auto need_checkpoint = [&] {
    if (o.checkpoint.empty()) throw ConfigError("analyze " + o.which + ": needs --checkpoint");
  };

  if (o.which == "raster") {
    need_inputs(1);
    PoissonCoderConfig coder{o.max_rate, AmplitudeNorm::Magnitude, o.reference, 4, seed_or(0)};
    if (!o.checkpoint.empty()) coder = load_model(o.checkpoint).cfg.coder;
    ojson summary = ojson::array();
    for (std::size_t i = 0; i < files.size(); ++i) {
      const SpikeTrain train = poisson_encode(load_recording(files[i]), coder);
      const FiringReport r = firing_rates(train);
      const std::string s = stem(i, files[i]);
      write_raster_csv((fs::path(g.out) / ("raster_" + s + ".csv")).string(), train);
      write_rates_csv((fs::path(g.out) / ("rates_" + s + ".csv")).string(), r);
      man.output(g.out, "raster_" + s + ".csv");
      man.output(g.out, "rates_" + s + ".csv");
      double mean = 0.0;
      for (double v : r.channel_rates) mean += v;
      summary.push_back({{"file", fs::path(files[i]).filename().string()},
                         {"mean_rate_hz", mean / static_cast<double>(r.channel_rates.size())}});
    }
    write_text("rates.json", summary.dump(2) + "\n");
    man.output(g.out, "rates.json");
  } else if (o.which == "plv") {
    need_inputs(1);
    const BandSpec band = band_by_name(o.band);
    std::vector<PlvMatrix> whole;
    for (std::size_t i = 0; i < files.size(); ++i) {
      const EegRecording rec = load_recording(files[i]);
      const std::string s = stem(i, files[i]);
      whole.push_back(plv_matrix(rec, band));
      write_plv_csv((fs::path(g.out) / ("plv_" + s + ".csv")).string(), whole.back());
      man.output(g.out, "plv_" + s + ".csv");
      if (o.window > 0.0) {
        const auto w = windowed_plv(rec, band, o.window);
        for (std::size_t k = 0; k < w.size(); ++k) {
          const std::string name = "plv_" + s + "_w" + std::to_string(k) + ".csv";
          write_plv_csv((fs::path(g.out) / name).string(), w[k]);
          man.output(g.out, name);
        }
      }
    }
    if (whole.size() == 2) {
      const PlvComparison c = compare_plv(whole[0], whole[1]);
      ojson j{{"band", band.name}, {"correlation", c.correlation}, {"mad", c.mad}, {"top_k", c.k}, {"overlap", c.overlap}};
      write_text("plv_compare.json", j.dump(2) + "\n");
      man.output(g.out, "plv_compare.json");
    }
  } else if (o.which == "topo") {
    need_inputs(1);
    const BandSpec band = band_by_name(o.band);
    for (std::size_t i = 0; i < files.size(); ++i) {
      const EegRecording rec = load_recording(files[i]);
      const PlvMatrix m = plv_matrix(rec, band);
      const Topography t = montage_project(m, pick_montage(o, rec.channel_labels), o.percentile);
      const std::string s = stem(i, files[i]);
      write_topography_csv((fs::path(g.out) / ("topo_" + s + ".csv")).string(), t);
      write_edges_csv((fs::path(g.out) / ("edges_" + s + ".csv")).string(), t);
      man.output(g.out, "topo_" + s + ".csv");
      man.output(g.out, "edges_" + s + ".csv");
    }
  } else if (o.which == "roc") {
    need_inputs(2);
    need_checkpoint();
    Model model = load_model(o.checkpoint);
    std::vector<int> labels;
    std::vector<double> probs;
    for (const auto& f : files) {
      const EegRecording rec = load_recording(f);
      if (!rec.label) throw ConfigError("analyze roc: " + f + " has no label");
      const Prediction p = predict(model, rec);
      labels.push_back(*rec.label);
      probs.insert(probs.end(), p.probabilities.begin(), p.probabilities.end());
    }
    const std::size_t k = model.cfg.n_classes;
    ojson j;
    if (k == 2) {
      std::vector<double> pos;
      for (std::size_t i = 0; i < labels.size(); ++i) pos.push_back(probs[i * 2 + 1]);
      const RocCurve c = roc_curve(labels, pos);
      write_roc_csv((fs::path(g.out) / "roc.csv").string(), c);
      man.output(g.out, "roc.csv");
      j["auc"] = c.auc;
    } else {
      const MulticlassRoc m = roc_one_vs_rest(labels, probs, k);
      for (std::size_t c = 0; c < k; ++c) {
        const std::string name = "roc_class" + std::to_string(c) + ".csv";
        write_roc_csv((fs::path(g.out) / name).string(), m.per_class[c]);
        man.output(g.out, name);
        j["auc_class" + std::to_string(c)] = m.per_class[c].auc;
      }
      j["auc"] = m.macro_auc;
    }
    write_text("roc.json", j.dump(2) + "\n");
    man.output(g.out, "roc.json");
  } else if (o.which == "flops") {
    need_checkpoint();
    Model model = load_model(o.checkpoint);
    const CostReport big = flop_estimate(classifier_architecture(model.cls.config()));
    EegNetConfig e;
    e.channels = model.cfg.channels;
    e.length = model.cfg.samples;
    e.n_classes = model.cfg.n_classes;
    const CostReport base = flop_estimate(eegnet_architecture(e));
    write_cost_csv((fs::path(g.out) / "cost_classifier.csv").string(), big);
    write_cost_csv((fs::path(g.out) / "cost_eegnet.csv").string(), base);
    man.output(g.out, "cost_classifier.csv");
    man.output(g.out, "cost_eegnet.csv");
    ojson j;
    j["classifier_macs"] = big.total.macs;
    j["eegnet_macs"] = base.total.macs;
    j["classifier_over_eegnet"] = static_cast<double>(big.total.macs) / static_cast<double>(base.total.macs);
    if (!files.empty()) {
      // Executed counts of the whole inference path on the first input.
      CountScope scope;
      predict(model, load_recording(files[0]));
      j["pipeline_executed"] = {{"macs", scope.counts().macs},
                                {"accumulates", scope.counts().accumulates},
                                {"other", scope.counts().other}};
    }
    write_text("cost.json", j.dump(2) + "\n");
    man.output(g.out, "cost.json");
  } else {
    throw ConfigError("analyze: unknown --which '" + o.which + "' (raster, plv, topo, roc, flops)");
  }
  man.write(g.out);
  return 0;
}

// ---- fewshot --------------------------------------------------------------------

int cmd_fewshot(const std::string& config_path) {
  const ExperimentConfig cfg = load_experiment(config_path, g.seed);
  const Dataset data = load_data(cfg);
  if (data.test.empty()) throw ConfigError("fewshot: needs test data");
  std::ostringstream csv;
  csv << "seed,fraction,augmented,accuracy,original,generated\n";
  std::map<std::pair<double, bool>, std::pair<double, std::size_t>> mean;
  ojson notices = ojson::array();
  for (std::uint64_t s : cfg.fewshot.seeds) {
    TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, {3, s});
    const FewShotResult r = few_shot_protocol(data.train, data.test, cfg.fewshot.fractions, cfg.model, tc);
    for (const auto& n : r.notices) {
      warn(n);
      notices.push_back(n);
    }
    for (const auto& row : r.rows) {
      csv << s << ',' << fmt(row.fraction) << ',' << (row.augmented ? 1 : 0) << ',' << fmt(row.accuracy) << ','
          << row.original << ',' << row.generated << '\n';
      auto& m = mean[{row.fraction, row.augmented}];
      m.first += row.accuracy;
      ++m.second;
      say("seed " + std::to_string(s) + " fraction " + fmt(row.fraction) + (row.augmented ? " augmented " : " plain ") +
          fmt(row.accuracy));
    }
  }
  write_text("fewshot.csv", csv.str());
  ojson summary = ojson::array();
  for (const auto& [key, v] : mean) {
    summary.push_back({{"fraction", key.first}, {"augmented", key.second}, {"mean_accuracy", v.first / double(v.second)},
                       {"runs", v.second}});
  }
  write_text("fewshot_summary.json", ojson{{"rows", summary}, {"notices", notices}}.dump(2) + "\n");
  Manifest man("fewshot", cfg.seed);
  man.set("config_hash", binio::fnv1a_hex(cfg.text.data(), cfg.text.size()));
  man.set("config", ojson::parse(cfg.text));
  man.input(config_path);
  man.output(g.out, "fewshot.csv");
  man.output(g.out, "fewshot_summary.json");
  man.write(g.out);
  return 0;
}

// ---- synth ----------------------------------------------------------------------

int cmd_synth(const std::vector<std::string>& classes, std::size_t n, std::size_t channels, double seconds, double rate) {
  if (classes.empty()) throw ConfigError("synth: give at least one --class");
  if (n == 0 || channels == 0) throw ConfigError("synth: --n and --channels must be positive");
  std::vector<SynthClassSpec> specs;
  for (std::size_t c = 0; c < classes.size(); ++c) specs.push_back(synth_preset(classes[c], static_cast<int>(c)));
  const std::uint64_t seed = seed_or(0);
  Manifest man("synth", seed);
  man.set("classes", classes);
  man.set("per_class", n);
  for (std::size_t c = 0; c < specs.size(); ++c) {
    for (std::size_t i = 0; i < n; ++i) {
      EegRecording r = synthesize_eeg(specs[c], channels, seconds, rate, derive_seed(seed, {c, i}));
      r.label = static_cast<int>(c);
      char name[64];
      std::snprintf(name, sizeof name, "synth_%s_%04zu.bige", classes[c].c_str(), i);
      save_recording((fs::path(g.out) / name).string(), r);
      man.output(g.out, name);
    }
  }
  man.write(g.out);
  say("wrote " + std::to_string(n * specs.size()) + " recordings");
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Brain-inspired EEG generation and classification toolkit"};
  app.require_subcommand(1);
  app.set_version_flag("--version", version());
  std::uint64_t seed_value = 0;
  auto* seed_opt = app.add_option("--seed", seed_value, "Root seed (overrides the config's)");
  app.add_option("--out", g.out, "Output directory")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "Only errors and warnings");

  std::string config, resume, ckpt, mode = "prior";
  std::size_t n = 1;
  std::vector<std::string> inputs, sources;

  auto* train = app.add_subcommand("train", "Train a model from an experiment config");
  train->add_option("config", config, "Experiment config (JSON)")->required();
  train->add_option("--resume", resume, "Checkpoint to continue from");

  auto* gen = app.add_subcommand("generate", "Sample EEG from a trained model");
  gen->add_option("--checkpoint", ckpt)->required();
  gen->add_option("--n", n, "Number of recordings")->capture_default_str();
  gen->add_option("--mode", mode, "prior or posterior")->capture_default_str();
  gen->add_option("--source", sources, "Recordings to encode (posterior mode)");

  auto* cls = app.add_subcommand("classify", "Predict labels for recordings");
  cls->add_option("--checkpoint", ckpt)->required();
  cls->add_option("inputs", inputs, "BIGE files or directories")->required();

  AnalyzeOptions ao;
  auto* an = app.add_subcommand("analyze", "Firing rates, PLV, topography, ROC or cost tables");
  an->add_option("--which", ao.which, "raster, plv, topo, roc or flops")->required();
  an->add_option("inputs", ao.inputs, "BIGE files or directories");
  an->add_option("--checkpoint", ao.checkpoint);
  an->add_option("--band", ao.band)->capture_default_str();
  an->add_option("--window", ao.window, "PLV window in seconds (0: whole recording only)");
  an->add_option("--montage", ao.montage, "label,x,y CSV");
  an->add_option("--percentile", ao.percentile, "Edge threshold percentile")->capture_default_str();
  an->add_option("--max-rate", ao.max_rate, "Raster coder rate at full scale, Hz (no checkpoint)")->capture_default_str();
  an->add_option("--reference", ao.reference, "Raster coder full-scale amplitude (no checkpoint)")->capture_default_str();

  auto* few = app.add_subcommand("fewshot", "Few-shot augmentation experiment");
  few->add_option("config", config, "Experiment config (JSON)")->required();

  std::vector<std::string> classes;
  std::size_t channels = 8;
  double seconds = 2.0, rate = 128.0;
  auto* syn = app.add_subcommand("synth", "Write synthetic labelled recordings");
  syn->add_option("--class", classes, "alpha or beta; repeat for more classes (label = position)")->required();
  syn->add_option("--n", n, "Recordings per class")->capture_default_str();
  syn->add_option("--channels", channels)->capture_default_str();
  syn->add_option("--seconds", seconds)->capture_default_str();
  syn->add_option("--rate", rate, "Sample rate in Hz")->capture_default_str();

  for (auto* s : {train, gen, cls, an, few, syn}) s->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }
  if (*seed_opt) g.seed = seed_value;

  try {
    fs::create_directories(g.out);
    if (*train) return cmd_train(config, resume);
    if (*gen) return cmd_generate(ckpt, n, mode, sources);
    if (*cls) return cmd_classify(ckpt, inputs);
    if (*an) return cmd_analyze(ao);
    if (*few) return cmd_fewshot(config);
    if (*syn) return cmd_synth(classes, n, channels, seconds, rate);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 2;
}
