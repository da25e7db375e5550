#include "mswave/mswave.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <memory>
#include <new>
#include <string>

#include "checkpoint.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "error.hpp"
#include "log.hpp"
#include "manifest.hpp"
#include "pipeline.hpp"
#include "toy_corpus.hpp"
#include "trainer.hpp"

namespace fs = std::filesystem;

struct msw_config {
  mswave::Hyperparameters hp;
};

struct msw_model {
  std::unique_ptr<mswave::Model> model;
};

namespace {

thread_local std::string g_last_error;

msw_status to_status(mswave::ErrorCode c) {
  switch (c) {
    case mswave::ErrorCode::InvalidArgument: return MSW_ERR_INVALID_ARGUMENT;
    case mswave::ErrorCode::Io: return MSW_ERR_IO;
    case mswave::ErrorCode::Parse: return MSW_ERR_PARSE;
    case mswave::ErrorCode::Config: return MSW_ERR_CONFIG;
    case mswave::ErrorCode::Numeric: return MSW_ERR_NUMERIC;
    case mswave::ErrorCode::NotFound: return MSW_ERR_NOT_FOUND;
    case mswave::ErrorCode::State: return MSW_ERR_STATE;
    case mswave::ErrorCode::Internal: return MSW_ERR_INTERNAL;
  }
  return MSW_ERR_INTERNAL;
}

template <class F>
msw_status guarded(F&& f) {
  try {
    g_last_error.clear();
    f();
    return MSW_OK;
  } catch (const mswave::Error& e) {
    g_last_error = e.what();
    return to_status(e.code());
  } catch (const std::bad_alloc&) {
    g_last_error = "out of memory";
    return MSW_ERR_INTERNAL;
  } catch (const std::filesystem::filesystem_error& e) {
    g_last_error = e.what();
    return MSW_ERR_IO;
  } catch (const std::exception& e) {
    g_last_error = e.what();
    return MSW_ERR_INTERNAL;
  }
}

void require(const void* p, const char* what) {
  if (!p) throw mswave::Error(mswave::ErrorCode::InvalidArgument, std::string(what) + " must not be NULL");
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (!out) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

std::string opt(const char* s) { return s ? std::string(s) : std::string(); }

}  // namespace

extern "C" {

const char* msw_last_error(void) { return g_last_error.c_str(); }

const char* msw_status_name(msw_status status) {
  switch (status) {
    case MSW_OK: return "ok";
    case MSW_ERR_INVALID_ARGUMENT: return "invalid argument";
    case MSW_ERR_IO: return "i/o error";
    case MSW_ERR_PARSE: return "parse error";
    case MSW_ERR_CONFIG: return "configuration error";
    case MSW_ERR_NUMERIC: return "numeric error";
    case MSW_ERR_NOT_FOUND: return "not found";
    case MSW_ERR_STATE: return "invalid state";
    case MSW_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

const char* msw_version(void) { return "0.1.0"; }

void msw_set_log_level(int level) {
  if (level < 0) level = 0;
  if (level > 4) level = 4;
  mswave::log::set_level(static_cast<mswave::log::Level>(level));
}

void msw_string_free(char* s) { std::free(s); }

msw_status msw_config_default(msw_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new msw_config{};
  });
}

msw_status msw_config_toy(msw_config** out) {
  return guarded([&] {
    require(out, "out");
    *out = new msw_config{mswave::toy_hyperparameters()};
  });
}

msw_status msw_config_load(const char* path, msw_config** out) {
  return guarded([&] {
    require(path, "path");
    require(out, "out");
    *out = new msw_config{mswave::load_config(path)};
  });
}

msw_status msw_config_set(msw_config* cfg, const char* key, const char* value) {
  return guarded([&] {
    require(cfg, "config");
    require(key, "key");
    require(value, "value");
    mswave::Hyperparameters hp = cfg->hp;
    mswave::set_config_value(hp, key, value);
    mswave::validate(hp);
    cfg->hp = hp;
  });
}

msw_status msw_config_save(const msw_config* cfg, const char* path) {
  return guarded([&] {
    require(cfg, "config");
    require(path, "path");
    mswave::save_config(cfg->hp, path);
  });
}

msw_status msw_config_to_string(const msw_config* cfg, char** out) {
  return guarded([&] {
    require(cfg, "config");
    require(out, "out");
    *out = dup_string(mswave::serialize_config(cfg->hp));
  });
}

void msw_config_free(msw_config* cfg) { delete cfg; }

msw_status msw_make_toy_corpus(const char* dir, const msw_config* cfg, int speakers, int utterances, uint64_t seed) {
  return guarded([&] {
    require(dir, "dir");
    require(cfg, "config");
    mswave::ToyCorpusOptions o;
    o.speakers = speakers;
    o.utterances = utterances;
    o.seed = seed;
    mswave::make_toy_corpus(dir, o, cfg->hp);
  });
}

msw_status msw_build_manifest(const char* data_root, const char* out_tsv, size_t* n_records, size_t* n_speakers,
                              size_t* n_skipped) {
  return guarded([&] {
    require(data_root, "data_root");
    const mswave::Manifest m = mswave::build_manifest(data_root);
    if (out_tsv) mswave::save_manifest(m.records, out_tsv);
    if (n_records) *n_records = m.records.size();
    if (n_speakers) *n_speakers = m.registry.size();
    if (n_skipped) *n_skipped = m.skipped;
  });
}

msw_status msw_preprocess(const msw_config* cfg, const char* data_root, const char* cache_dir, size_t* n_written) {
  return guarded([&] {
    require(cfg, "config");
    require(data_root, "data_root");
    require(cache_dir, "cache_dir");
    const mswave::Manifest m = mswave::build_manifest(data_root);
    const std::size_t n = mswave::preprocess_corpus(m, data_root, cache_dir, cfg->hp);
    if (n_written) *n_written = n;
  });
}

msw_status msw_train(const msw_config* cfg, const msw_train_options* opts, long* final_step, msw_loss* last_loss) {
  return guarded([&] {
    require(cfg, "config");
    require(opts, "options");
    require(opts->data_root, "data_root");
    require(opts->out_dir, "out_dir");
    const mswave::Manifest manifest = mswave::build_manifest(opts->data_root);
    const std::string cache =
        opts->cache_dir ? std::string(opts->cache_dir) : (fs::path(opts->out_dir) / "features").string();
    bool complete = fs::exists(cache);
    for (std::size_t i = 0; complete && i < manifest.records.size(); ++i) {
      complete = fs::exists(fs::path(cache) / mswave::feature_file_name(manifest.records[i].utterance_id));
    }
    if (!complete) mswave::preprocess_corpus(manifest, opts->data_root, cache, cfg->hp);
    mswave::FeatureStore features(cache, cfg->hp);
    mswave::TrainOptions t;
    t.out_dir = opts->out_dir;
    t.steps = opts->steps;
    t.seed = opts->seed;
    t.resume = opt(opts->resume);
    t.log_interval = opts->log_interval;
    const mswave::TrainResult r = mswave::train(cfg->hp, manifest, mswave::Charset::default_charset(), features, t);
    if (final_step) *final_step = r.final_step;
    if (last_loss) {
      const mswave::LossBreakdown l = r.metrics.empty() ? mswave::LossBreakdown{} : r.metrics.back().loss;
      *last_loss = {l.decoder_l1, l.bridge_l1, l.vocoder_nll, l.total};
    }
  });
}

msw_status msw_model_load(const char* checkpoint, msw_model** out) {
  return guarded([&] {
    require(checkpoint, "checkpoint");
    require(out, "out");
    mswave::LoadedCheckpoint ck = mswave::load_checkpoint(checkpoint);
    *out = new msw_model{std::move(ck.model)};
  });
}

void msw_model_free(msw_model* model) { delete model; }

msw_status msw_model_speaker_count(const msw_model* model, size_t* out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = model->model->registry().size();
  });
}

msw_status msw_model_speaker_id(const msw_model* model, size_t index, char** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    if (index >= model->model->registry().size()) {
      throw mswave::Error(mswave::ErrorCode::InvalidArgument, "speaker index out of range");
    }
    *out = dup_string(model->model->registry().id(index));
  });
}

msw_status msw_model_zero_speaker_projectors(msw_model* model) {
  return guarded([&] {
    require(model, "model");
    model->model->zero_speaker_projectors();
  });
}

msw_status msw_model_config(const msw_model* model, msw_config** out) {
  return guarded([&] {
    require(model, "model");
    require(out, "out");
    *out = new msw_config{model->model->hp()};
  });
}

msw_status msw_synthesize(const msw_model* model, const char* text, const char* speaker_id, uint64_t seed,
                          double temperature, const char* wav_path, double** samples, msw_synthesis_info* info) {
  return guarded([&] {
    require(model, "model");
    require(text, "text");
    require(speaker_id, "speaker_id");
    const mswave::Model& m = *model->model;
    mswave::SynthesisOptions o;
    o.seed = seed;
    o.temperature = temperature < 0 ? m.hp().sampling_temperature : temperature;
    const mswave::SynthesisResult r = mswave::synthesize(m, text, m.registry().index_of(speaker_id), o);
    if (wav_path) mswave::write_wav(wav_path, r.audio);
    if (samples) {
      *samples = static_cast<double*>(std::malloc(sizeof(double) * std::max<std::size_t>(1, r.audio.size())));
      if (!*samples) throw std::bad_alloc();
      std::memcpy(*samples, r.audio.samples.data(), sizeof(double) * r.audio.size());
    }
    if (info) {
      info->decoder_steps = r.decoder_steps;
      info->final_argmax = r.final_argmax;
      info->stopped = r.stopped ? 1 : 0;
      info->n_samples = r.audio.size();
      info->sample_rate_hz = r.audio.sample_rate_hz;
    }
  });
}

void msw_samples_free(double* samples) { std::free(samples); }

msw_status msw_eval_classify(const msw_config* cfg, const char* data_root, const msw_model* model, uint64_t seed,
                             msw_classify_report* out) {
  return guarded([&] {
    require(cfg, "config");
    require(data_root, "data_root");
    require(out, "out");
    const mswave::ClassifyReport r =
        mswave::run_classify(cfg->hp, data_root, model ? model->model.get() : nullptr, seed);
    *out = {r.holdout_accuracy, r.synthesized_accuracy, r.n_train, r.n_test, r.n_speakers};
  });
}

msw_status msw_eval_eer(const msw_config* cfg, const char* data_root, const msw_model* model, const char* synthetic,
                        size_t trials, int enroll, uint64_t seed, double* eer) {
  return guarded([&] {
    require(cfg, "config");
    require(eer, "eer");
    mswave::EerOptions o;
    o.trials = trials;
    o.enroll = enroll;
    o.seed = seed;
    o.synthetic = opt(synthetic);
    *eer = mswave::run_eer(cfg->hp, opt(data_root), model ? model->model.get() : nullptr, o).eer;
  });
}

msw_status msw_embed_pca(const msw_model* model, const char* labels_csv, const char* out_prefix, msw_pca_report* out) {
  return guarded([&] {
    require(model, "model");
    require(out_prefix, "out_prefix");
    const mswave::PcaReport r = mswave::run_embedding_pca(*model->model, opt(labels_csv), out_prefix);
    if (out) *out = {r.pca.explained_pc1, r.pca.explained_pc2, r.separability, model->model->registry().size()};
  });
}

msw_status msw_export_embeddings(const msw_model* model, const char* csv_path) {
  return guarded([&] {
    require(model, "model");
    require(csv_path, "csv_path");
    mswave::export_embeddings_csv(*model->model, csv_path);
  });
}

}  // extern "C"
