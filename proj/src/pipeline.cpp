#include "pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dataset.hpp"
#include "error.hpp"
#include "log.hpp"
#include "manifest.hpp"

namespace fs = std::filesystem;

namespace mswave {

namespace {

struct AnalysedCorpus {
  Manifest manifest;
  std::vector<LabeledMel> items;
};

AnalysedCorpus analyse(const Hyperparameters& hp, const std::string& data_root) {
  AnalysedCorpus c;
  c.manifest = build_manifest(data_root);
  for (const auto& rec : c.manifest.records) {
    const UtteranceFeatures f = extract_features(read_wav((fs::path(data_root) / rec.audio_path).string()), hp);
    c.items.push_back({f.mel.values, c.manifest.registry.index_of(rec.speaker_id)});
  }
  return c;
}

Matrix synthesized_mel(const Model& model, const std::string& text, const std::string& speaker_id,
                       std::uint64_t seed, const Hyperparameters& hp) {
  const int idx = model.registry().index_of(speaker_id);
  SynthesisOptions opts;
  opts.seed = seed;
  opts.temperature = model.hp().sampling_temperature;
  const SynthesisResult res = synthesize(model, text, idx, opts);
  return extract_features(res.audio, hp).mel.values;
}

void check_registry(const Model& model, const Manifest& manifest) {
  for (const auto& id : manifest.registry.ids()) {
    if (!model.registry().find(id)) {
      throw Error(ErrorCode::NotFound, "speaker " + id + " of the data set is not in the checkpoint's registry");
    }
  }
}

}  // namespace

ClassifyReport run_classify(const Hyperparameters& hp, const std::string& data_root, const Model* model,
                            std::uint64_t seed) {
  const AnalysedCorpus corpus = analyse(hp, data_root);
  if (corpus.manifest.registry.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "speaker classification needs at least two speakers");
  }
  std::vector<int> labels;
  for (const auto& item : corpus.items) labels.push_back(item.label);
  std::vector<std::size_t> train_idx, test_idx;
  split_indices_per_speaker(labels, 0.2, seed, train_idx, test_idx);
  std::vector<LabeledMel> train, test;
  for (std::size_t i : train_idx) train.push_back(corpus.items[i]);
  for (std::size_t i : test_idx) test.push_back(corpus.items[i]);

  ClassifierOptions opts;
  opts.seed = seed;
  SpeakerClassifier clf(hp.n_mel_bands, static_cast<int>(corpus.manifest.registry.size()), opts);
  clf.fit(train);
  ClassifyReport rep;
  rep.n_train = train.size();
  rep.n_test = test.size();
  rep.n_speakers = corpus.manifest.registry.size();
  rep.holdout_accuracy = clf.accuracy(test);

  if (model) {
    check_registry(*model, corpus.manifest);
    std::vector<LabeledMel> synth;
    for (std::size_t i : test_idx) {
      const auto& rec = corpus.manifest.records[i];
      synth.push_back({synthesized_mel(*model, rec.transcript, rec.speaker_id, seed + i, hp), corpus.items[i].label});
    }
    rep.synthesized_accuracy = clf.accuracy(synth);
  }
  return rep;
}

EerReport run_eer(const Hyperparameters& hp, const std::string& data_root, const Model* model, const EerOptions& opts) {
  EerReport rep;
  rep.trials = opts.trials;
  std::vector<ScoredTrial> scored;
  if (!opts.synthetic.empty()) {
    scored = synthetic_trials(opts.synthetic, opts.trials, opts.seed);
  } else {
    if (data_root.empty()) throw Error(ErrorCode::InvalidArgument, "eer: --data or --synthetic is required");
    const AnalysedCorpus corpus = analyse(hp, data_root);
    ClassifierOptions copts;
    copts.seed = opts.seed;
    SpeakerClassifier clf(hp.n_mel_bands, static_cast<int>(corpus.manifest.registry.size()), copts);
    clf.fit(corpus.items);
    std::vector<RowVector> enroll_emb, test_emb;
    std::vector<int> speakers;
    for (const auto& item : corpus.items) {
      enroll_emb.push_back(clf.embed(item.mel));
      speakers.push_back(item.label);
    }
    if (model) {
      check_registry(*model, corpus.manifest);
      for (std::size_t i = 0; i < corpus.manifest.records.size(); ++i) {
        const auto& rec = corpus.manifest.records[i];
        test_emb.push_back(clf.embed(synthesized_mel(*model, rec.transcript, rec.speaker_id, opts.seed + i, hp)));
      }
    } else {
      test_emb = enroll_emb;
    }
    const auto trials = generate_trials(speakers, opts.trials, opts.enroll, opts.seed);
    scored = score_trials(trials, enroll_emb, test_emb);
  }
  for (const auto& t : scored) rep.same += t.same_speaker;
  rep.eer = estimate_eer(scored);
  return rep;
}

std::map<std::string, std::string> read_labels_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot open labels file " + path);
  std::map<std::string, std::string> labels;
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const auto comma = line.find(',');
    if (comma == std::string::npos) {
      throw Error(ErrorCode::Parse, path + " line " + std::to_string(n) + ": expected speaker_id,label");
    }
    const std::string id = line.substr(0, comma);
    if (n == 1 && id == "speaker_id") continue;
    labels[id] = line.substr(comma + 1);
  }
  return labels;
}

PcaReport run_embedding_pca(const Model& model, const std::string& labels_path, const std::string& out_prefix) {
  const Matrix& emb = model.speakers.parameter().value;
  const auto& ids = model.registry().ids();
  PcaReport rep;
  rep.pca = pca_2d(emb);

  std::vector<std::string> labels;
  if (!labels_path.empty()) {
    const auto table = read_labels_csv(labels_path);
    std::map<std::string, int> label_ids;
    std::vector<int> numeric;
    for (const auto& id : ids) {
      auto it = table.find(id);
      if (it == table.end()) throw Error(ErrorCode::NotFound, "no label for speaker " + id + " in " + labels_path);
      labels.push_back(it->second);
      numeric.push_back(label_ids.emplace(it->second, static_cast<int>(label_ids.size())).first->second);
    }
    rep.separability = linear_separability(rep.pca.coords, numeric);
  }

  rep.csv_path = out_prefix + ".csv";
  rep.svg_path = out_prefix + ".svg";
  std::ofstream csv(rep.csv_path);
  if (!csv) throw Error(ErrorCode::Io, "cannot write " + rep.csv_path);
  csv.precision(17);
  csv << "speaker_id,pc1,pc2" << (labels.empty() ? "" : ",label") << '\n';
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    csv << ids[i] << ',' << rep.pca.coords(r, 0) << ',' << rep.pca.coords(r, 1);
    if (!labels.empty()) csv << ',' << labels[i];
    csv << '\n';
  }
  std::ofstream svg(rep.svg_path);
  if (!svg) throw Error(ErrorCode::Io, "cannot write " + rep.svg_path);
  svg << pca_svg(rep.pca.coords, ids, labels);
  return rep;
}

void export_embeddings_csv(const Model& model, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path);
  out.precision(17);
  const Matrix& emb = model.speakers.parameter().value;
  out << "speaker_id";
  for (Eigen::Index j = 0; j < emb.cols(); ++j) out << ",e" << j;
  out << '\n';
  for (std::size_t i = 0; i < model.registry().size(); ++i) {
    out << model.registry().id(i);
    for (Eigen::Index j = 0; j < emb.cols(); ++j) out << ',' << emb(static_cast<Eigen::Index>(i), j);
    out << '\n';
  }
}

}  // namespace mswave
