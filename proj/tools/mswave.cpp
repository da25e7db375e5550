#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "mswave/mswave.h"

namespace fs = std::filesystem;

namespace {

struct CliError : std::runtime_error {
  int code;
  CliError(const std::string& what, int c) : std::runtime_error(what), code(c) {}
};

void check(msw_status s, const std::string& context) {
  if (s == MSW_OK) return;
  throw CliError(context + ": " + msw_status_name(s) + ": " + msw_last_error(), static_cast<int>(s) + 1);
}

struct ConfigDeleter {
  void operator()(msw_config* c) const { msw_config_free(c); }
};
struct ModelDeleter {
  void operator()(msw_model* m) const { msw_model_free(m); }
};
using ConfigPtr = std::unique_ptr<msw_config, ConfigDeleter>;
using ModelPtr = std::unique_ptr<msw_model, ModelDeleter>;

ModelPtr load_model(const std::string& path) {
  msw_model* m = nullptr;
  check(msw_model_load(path.c_str(), &m), "loading " + path);
  return ModelPtr(m);
}

// --config wins; otherwise the checkpoint's own settings; otherwise defaults.
// --set overrides are applied last.
ConfigPtr resolve_config(const std::string& path, const msw_model* model, const std::vector<std::string>& sets,
                         bool toy_default = false) {
  msw_config* c = nullptr;
  if (!path.empty()) {
    check(msw_config_load(path.c_str(), &c), "config");
  } else if (model) {
    check(msw_model_config(model, &c), "config");
  } else if (toy_default) {
    check(msw_config_toy(&c), "config");
  } else {
    check(msw_config_default(&c), "config");
  }
  ConfigPtr cfg(c);
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw CliError("--set expects key=value, got '" + kv + "'", 2);
    check(msw_config_set(cfg.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
  }
  return cfg;
}

std::string config_text(const msw_config* cfg) {
  char* s = nullptr;
  check(msw_config_to_string(cfg, &s), "config");
  std::string out(s);
  msw_string_free(s);
  return out;
}

struct Common {
  std::string config;
  std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "Hyperparameter file (key = value)");
  cmd->add_option("--set", c.sets, "Override one setting, key=value (repeatable)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-speaker text-to-wave synthesis"};
  app.require_subcommand(1);
  app.fallthrough();
  int verbosity = 0;
  bool quiet = false;
  app.add_flag("-v,--verbose", verbosity, "More logging (repeat for debug)");
  app.add_flag("-q,--quiet", quiet, "Only errors");
  app.set_version_flag("--version", std::string(msw_version()));

  // config
  Common cfg_c;
  std::string cfg_preset = "default", cfg_out;
  auto* cfg_cmd = app.add_subcommand("config", "Print or write a resolved configuration");
  add_common(cfg_cmd, cfg_c);
  cfg_cmd->add_option("--preset", cfg_preset, "default or toy")->check(CLI::IsMember({"default", "toy"}));
  cfg_cmd->add_option("--out", cfg_out, "Write here instead of stdout");

  // make-toy-corpus
  Common toy_c;
  std::string toy_out;
  int toy_speakers = 2, toy_utts = 5;
  std::uint64_t toy_seed = 1;
  auto* toy_cmd = app.add_subcommand("make-toy-corpus", "Render the synthetic two-tone-speaker corpus");
  add_common(toy_cmd, toy_c);
  toy_cmd->add_option("--out", toy_out, "Corpus directory")->required();
  toy_cmd->add_option("--speakers", toy_speakers, "Number of speakers")->check(CLI::Range(1, 99));
  toy_cmd->add_option("--utterances", toy_utts, "Utterances per speaker")->check(CLI::Range(1, 99));
  toy_cmd->add_option("--seed", toy_seed, "Sentence seed");

  // manifest
  Common man_c;
  std::string man_data, man_out;
  auto* man_cmd = app.add_subcommand("manifest", "Scan a corpus and write the manifest TSV");
  add_common(man_cmd, man_c);
  man_cmd->add_option("--data", man_data, "Corpus root")->required();
  man_cmd->add_option("--out", man_out, "Manifest TSV path");

  // preprocess
  Common pre_c;
  std::string pre_data, pre_cache;
  auto* pre_cmd = app.add_subcommand("preprocess", "Extract and cache mel/linear features");
  add_common(pre_cmd, pre_c);
  pre_cmd->add_option("--data", pre_data, "Corpus root")->required();
  pre_cmd->add_option("--cache", pre_cache, "Feature cache directory")->required();

  // train
  Common tr_c;
  std::string tr_data, tr_out = "run", tr_resume, tr_cache;
  long tr_steps = 1000;
  std::uint64_t tr_seed = 0;
  int tr_log = 50;
  auto* tr_cmd = app.add_subcommand("train", "Joint training of all components");
  add_common(tr_cmd, tr_c);
  tr_cmd->add_option("--data", tr_data, "Corpus root")->required();
  tr_cmd->add_option("--steps", tr_steps, "Target global step")->check(CLI::PositiveNumber);
  tr_cmd->add_option("--seed", tr_seed, "Training seed");
  tr_cmd->add_option("--resume", tr_resume, "Checkpoint to continue from");
  tr_cmd->add_option("--out", tr_out, "Output directory (checkpoints, metrics.csv)");
  tr_cmd->add_option("--cache", tr_cache, "Feature cache (default <out>/features)");
  tr_cmd->add_option("--log-interval", tr_log, "Steps between progress lines")->check(CLI::PositiveNumber);

  // synthesize
  Common syn_c;
  std::string syn_text, syn_speaker, syn_ckpt, syn_out;
  std::uint64_t syn_seed = 0;
  double syn_temp = -1.0;
  bool syn_zero = false;
  auto* syn_cmd = app.add_subcommand("synthesize", "Text to waveform for one speaker");
  add_common(syn_cmd, syn_c);
  syn_cmd->add_option("--text", syn_text, "Input text")->required();
  syn_cmd->add_option("--speaker", syn_speaker, "Speaker id from the checkpoint registry")->required();
  syn_cmd->add_option("--ckpt", syn_ckpt, "Checkpoint")->required();
  syn_cmd->add_option("--seed", syn_seed, "Sampling seed");
  syn_cmd->add_option("--out", syn_out, "Output WAV")->required();
  syn_cmd->add_option("--temperature", syn_temp, "Sampling temperature (default from checkpoint)");
  syn_cmd->add_flag("--zero-speaker-bias", syn_zero, "Zero every speaker projector before synthesis");

  // eval-classify
  Common cls_c;
  std::string cls_data, cls_ckpt;
  std::uint64_t cls_seed = 0;
  auto* cls_cmd = app.add_subcommand("eval-classify", "Speaker classification accuracy");
  add_common(cls_cmd, cls_c);
  cls_cmd->add_option("--data", cls_data, "Corpus root")->required();
  cls_cmd->add_option("--ckpt", cls_ckpt, "Also score audio synthesized by this checkpoint");
  cls_cmd->add_option("--seed", cls_seed, "Split and classifier seed");

  // eval-eer
  Common eer_c;
  std::string eer_data, eer_ckpt, eer_synth;
  std::size_t eer_trials = 40960;
  int eer_enroll = 1;
  std::uint64_t eer_seed = 0;
  auto* eer_cmd = app.add_subcommand("eval-eer", "Equal error rate over random verification trials");
  add_common(eer_cmd, eer_c);
  eer_cmd->add_option("--trials", eer_trials, "Number of trials")->check(CLI::PositiveNumber);
  eer_cmd->add_option("--enroll", eer_enroll, "Enrollment utterances per trial")->check(CLI::IsMember({1, 5}));
  eer_cmd->add_option("--seed", eer_seed, "Trial seed");
  eer_cmd->add_option("--data", eer_data, "Corpus root");
  eer_cmd->add_option("--ckpt", eer_ckpt, "Score synthesized test utterances from this checkpoint");
  eer_cmd->add_option("--synthetic", eer_synth, "Calibration scores instead of data")
      ->check(CLI::IsMember({"random", "gaussian"}));

  // embed-pca
  Common pca_c;
  std::string pca_ckpt, pca_labels, pca_prefix;
  auto* pca_cmd = app.add_subcommand("embed-pca", "Project speaker embeddings onto two principal components");
  add_common(pca_cmd, pca_c);
  pca_cmd->add_option("--ckpt", pca_ckpt, "Checkpoint")->required();
  pca_cmd->add_option("--labels", pca_labels, "CSV speaker_id,label");
  pca_cmd->add_option("--out-prefix", pca_prefix, "Writes PREFIX.csv and PREFIX.svg")->required();

  // export-embeddings
  Common exp_c;
  std::string exp_ckpt, exp_out;
  auto* exp_cmd = app.add_subcommand("export-embeddings", "Dump the speaker embedding table as CSV");
  add_common(exp_cmd, exp_c);
  exp_cmd->add_option("--ckpt", exp_ckpt, "Checkpoint")->required();
  exp_cmd->add_option("--out", exp_out, "CSV path")->required();

  CLI11_PARSE(app, argc, argv);
  msw_set_log_level(quiet ? 3 : (verbosity >= 2 ? 0 : 1));

  try {
    if (*cfg_cmd) {
      ConfigPtr base;
      msw_config* c = nullptr;
      if (cfg_c.config.empty()) {
        check(cfg_preset == "toy" ? msw_config_toy(&c) : msw_config_default(&c), "config");
        base.reset(c);
        for (const auto& kv : cfg_c.sets) {
          const auto eq = kv.find('=');
          if (eq == std::string::npos) throw CliError("--set expects key=value, got '" + kv + "'", 2);
          check(msw_config_set(base.get(), kv.substr(0, eq).c_str(), kv.substr(eq + 1).c_str()), "--set " + kv);
        }
      } else {
        base = resolve_config(cfg_c.config, nullptr, cfg_c.sets);
      }
      if (cfg_out.empty()) {
        std::cout << config_text(base.get());
      } else {
        check(msw_config_save(base.get(), cfg_out.c_str()), "writing " + cfg_out);
      }
    } else if (*toy_cmd) {
      ConfigPtr cfg = resolve_config(toy_c.config, nullptr, toy_c.sets, true);
      check(msw_make_toy_corpus(toy_out.c_str(), cfg.get(), toy_speakers, toy_utts, toy_seed), "make-toy-corpus");
      const std::string conf = (fs::path(toy_out) / "toy.conf").string();
      check(msw_config_save(cfg.get(), conf.c_str()), "writing " + conf);
      std::cout << "wrote " << toy_speakers << " x " << toy_utts << " utterances to " << toy_out << " (config "
                << conf << ")\n";
    } else if (*man_cmd) {
      std::size_t n = 0, s = 0, skipped = 0;
      const std::string out = man_out.empty() ? (fs::path(man_data) / "manifest.tsv").string() : man_out;
      check(msw_build_manifest(man_data.c_str(), out.c_str(), &n, &s, &skipped), "manifest");
      std::cout << n << " records, " << s << " speakers, " << skipped << " skipped -> " << out << '\n';
    } else if (*pre_cmd) {
      ConfigPtr cfg = resolve_config(pre_c.config, nullptr, pre_c.sets);
      std::size_t n = 0;
      check(msw_preprocess(cfg.get(), pre_data.c_str(), pre_cache.c_str(), &n), "preprocess");
      std::cout << n << " feature files in " << pre_cache << '\n';
    } else if (*tr_cmd) {
      ConfigPtr cfg = resolve_config(tr_c.config, nullptr, tr_c.sets);
      msw_train_options o{};
      o.data_root = tr_data.c_str();
      o.cache_dir = tr_cache.empty() ? nullptr : tr_cache.c_str();
      o.out_dir = tr_out.c_str();
      o.resume = tr_resume.empty() ? nullptr : tr_resume.c_str();
      o.steps = tr_steps;
      o.seed = tr_seed;
      o.log_interval = tr_log;
      long step = 0;
      msw_loss loss{};
      check(msw_train(cfg.get(), &o, &step, &loss), "train");
      std::printf("step %ld total %.6f (decoder %.6f, bridge %.6f, vocoder %.6f)\n", step, loss.total,
                  loss.decoder_l1, loss.bridge_l1, loss.vocoder_nll);
    } else if (*syn_cmd) {
      ModelPtr model = load_model(syn_ckpt);
      if (!syn_c.config.empty() || !syn_c.sets.empty()) {
        // settings are baked into the checkpoint; a differing file is a user error
        ConfigPtr want = resolve_config(syn_c.config, model.get(), syn_c.sets);
        ConfigPtr have = resolve_config("", model.get(), {});
        if (config_text(want.get()) != config_text(have.get())) {
          throw CliError("--config differs from the settings stored in " + syn_ckpt, 5);
        }
      }
      if (syn_zero) check(msw_model_zero_speaker_projectors(model.get()), "zero speaker projectors");
      msw_synthesis_info info{};
      check(msw_synthesize(model.get(), syn_text.c_str(), syn_speaker.c_str(), syn_seed, syn_temp, syn_out.c_str(),
                           nullptr, &info),
            "synthesize");
      nlohmann::json meta = {{"text", syn_text},
                             {"speaker", syn_speaker},
                             {"seed", syn_seed},
                             {"decoder_steps", info.decoder_steps},
                             {"final_argmax", info.final_argmax},
                             {"stopped", info.stopped != 0},
                             {"no_stop", info.stopped == 0},
                             {"n_samples", info.n_samples},
                             {"sample_rate_hz", info.sample_rate_hz}};
      const std::string meta_path = fs::path(syn_out).replace_extension(".json").string();
      std::ofstream(meta_path) << meta.dump(2) << '\n';
      if (!info.stopped) std::cerr << "warning: decoding hit the step cap (no-stop)\n";
      std::cout << syn_out << ": " << info.n_samples << " samples, " << info.decoder_steps << " decoder steps\n";
    } else if (*cls_cmd) {
      ModelPtr model = cls_ckpt.empty() ? nullptr : load_model(cls_ckpt);
      ConfigPtr cfg = resolve_config(cls_c.config, model.get(), cls_c.sets);
      msw_classify_report r{};
      check(msw_eval_classify(cfg.get(), cls_data.c_str(), model.get(), cls_seed, &r), "eval-classify");
      std::printf("speakers %zu train %zu test %zu\nholdout_accuracy %.4f\n", r.n_speakers, r.n_train, r.n_test,
                  r.holdout_accuracy);
      if (r.synthesized_accuracy >= 0) std::printf("synthesized_accuracy %.4f\n", r.synthesized_accuracy);
    } else if (*eer_cmd) {
      if (eer_synth.empty() && eer_data.empty()) throw CliError("eval-eer needs --data or --synthetic", 2);
      ModelPtr model = eer_ckpt.empty() ? nullptr : load_model(eer_ckpt);
      ConfigPtr cfg = resolve_config(eer_c.config, model.get(), eer_c.sets);
      double eer = 0;
      check(msw_eval_eer(cfg.get(), eer_data.empty() ? nullptr : eer_data.c_str(), model.get(),
                         eer_synth.empty() ? nullptr : eer_synth.c_str(), eer_trials, eer_enroll, eer_seed, &eer),
            "eval-eer");
      std::printf("trials %zu enroll %d\neer %.6f\n", eer_trials, eer_enroll, eer);
    } else if (*pca_cmd) {
      ModelPtr model = load_model(pca_ckpt);
      msw_pca_report r{};
      check(msw_embed_pca(model.get(), pca_labels.empty() ? nullptr : pca_labels.c_str(), pca_prefix.c_str(), &r),
            "embed-pca");
      std::printf("speakers %zu\nexplained_pc1 %.6f\nexplained_pc2 %.6f\n", r.n_speakers, r.explained_pc1,
                  r.explained_pc2);
      if (r.separability >= 0) std::printf("linear_separability %.4f\n", r.separability);
      std::cout << "wrote " << pca_prefix << ".csv and " << pca_prefix << ".svg\n";
    } else if (*exp_cmd) {
      ModelPtr model = load_model(exp_ckpt);
      check(msw_export_embeddings(model.get(), exp_out.c_str()), "export-embeddings");
      std::cout << "wrote " << exp_out << '\n';
    }
  } catch (const CliError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.code;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
