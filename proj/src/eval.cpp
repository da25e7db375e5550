#include "eval.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "config.hpp"
#include "error.hpp"
#include "trainer.hpp"

namespace mswave {

SpeakerClassifier::SpeakerClassifier(int n_bands, int n_speakers, const ClassifierOptions& opts)
    : n_bands_(n_bands), n_speakers_(n_speakers), opts_(opts), store_(std::make_unique<ParameterStore>()) {
  if (n_speakers < 2) throw Error(ErrorCode::InvalidArgument, "speaker classifier needs at least two speakers");
  std::mt19937_64 rng(opts.seed);
  conv1_ = Linear::create(*store_, "classifier.conv1", opts.width * n_bands, opts.channels, rng, std::sqrt(2.0));
  conv2_ = Linear::create(*store_, "classifier.conv2", opts.width * opts.channels, opts.channels, rng, std::sqrt(2.0));
  out_ = Linear::create(*store_, "classifier.out", opts.channels, n_speakers, rng);
  mean_ = RowVector::Zero(n_bands);
  inv_std_ = RowVector::Ones(n_bands);
}

ad::Var SpeakerClassifier::forward_embedding(ad::Tape& tape, const Matrix& mel) const {
  if (mel.cols() != n_bands_) throw Error(ErrorCode::InvalidArgument, "classifier: wrong band count");
  Matrix x = (mel.rowwise() - mean_).array().rowwise() * inv_std_.array();
  const int pad = (opts_.width - 1) / 2;
  ad::Var h = ad::conv1d(tape.constant(std::move(x)), tape.param(*conv1_.weight), 1, pad);
  h = ad::relu(ad::add_row(h, tape.param(*conv1_.bias)));
  h = ad::conv1d(h, tape.param(*conv2_.weight), 1, pad);
  h = ad::relu(ad::add_row(h, tape.param(*conv2_.bias)));
  return ad::mean_rows(h);
}

void SpeakerClassifier::fit(const std::vector<LabeledMel>& train) {
  if (train.empty()) throw Error(ErrorCode::InvalidArgument, "classifier: no training data");
  double frames = 0.0;
  RowVector sum = RowVector::Zero(n_bands_), sq = RowVector::Zero(n_bands_);
  for (const auto& item : train) {
    if (item.label < 0 || item.label >= n_speakers_) throw Error(ErrorCode::InvalidArgument, "classifier: bad label");
    sum += item.mel.colwise().sum();
    sq += item.mel.array().square().matrix().colwise().sum();
    frames += double(item.mel.rows());
  }
  mean_ = sum / frames;
  const RowVector var = (sq / frames).array() - mean_.array().square();
  inv_std_ = var.array().max(1e-8).sqrt().inverse().matrix();

  Hyperparameters adam_hp;
  AdamState state;
  const auto params = store_->all();
  for (int epoch = 0; epoch < opts_.epochs; ++epoch) {
    store_->zero_grad();
    for (const auto& item : train) {
      ad::Tape tape;
      const ad::Var logits = out_(tape, forward_embedding(tape, item.mel));
      const int label[1] = {item.label};
      const ad::Var loss = ad::scale(ad::softmax_cross_entropy_sum(logits, label), 1.0 / double(train.size()));
      tape.backward(loss);
      tape.accumulate_param_grads();
    }
    adam_update(params, state, opts_.learning_rate, adam_hp);
  }
}

RowVector SpeakerClassifier::embed(const Matrix& mel) const {
  ad::Tape tape(false);
  return forward_embedding(tape, mel).value();
}

RowVector SpeakerClassifier::logits(const Matrix& mel) const {
  ad::Tape tape(false);
  return out_(tape, forward_embedding(tape, mel)).value();
}

int SpeakerClassifier::predict(const Matrix& mel) const {
  Eigen::Index idx = 0;
  logits(mel).maxCoeff(&idx);
  return static_cast<int>(idx);
}

double SpeakerClassifier::accuracy(const std::vector<LabeledMel>& data) const {
  if (data.empty()) throw Error(ErrorCode::InvalidArgument, "classifier: empty evaluation set");
  std::size_t correct = 0;
  for (const auto& item : data) correct += predict(item.mel) == item.label;
  return double(correct) / double(data.size());
}

void split_indices_per_speaker(std::span<const int> labels, double holdout_fraction, std::uint64_t seed,
                               std::vector<std::size_t>& train, std::vector<std::size_t>& test) {
  std::map<int, std::vector<std::size_t>> by_label;
  for (std::size_t i = 0; i < labels.size(); ++i) by_label[labels[i]].push_back(i);
  if (by_label.size() < 2) throw Error(ErrorCode::InvalidArgument, "classification needs at least two speakers");
  train.clear();
  test.clear();
  std::mt19937_64 rng(seed);
  for (auto& [label, idx] : by_label) {
    if (idx.size() < 2) {
      throw Error(ErrorCode::InvalidArgument, "speaker " + std::to_string(label) + " has fewer than two utterances");
    }
    std::shuffle(idx.begin(), idx.end(), rng);
    const std::size_t n_test = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(holdout_fraction * double(idx.size()))), 1, idx.size() - 1);
    for (std::size_t k = 0; k < idx.size(); ++k) (k < n_test ? test : train).push_back(idx[k]);
  }
}

void split_per_speaker(const std::vector<LabeledMel>& all, double holdout_fraction, std::uint64_t seed,
                       std::vector<LabeledMel>& train, std::vector<LabeledMel>& test) {
  std::vector<int> labels;
  for (const auto& item : all) labels.push_back(item.label);
  std::vector<std::size_t> tr, te;
  split_indices_per_speaker(labels, holdout_fraction, seed, tr, te);
  train.clear();
  test.clear();
  for (std::size_t i : tr) train.push_back(all[i]);
  for (std::size_t i : te) test.push_back(all[i]);
}

double estimate_eer(std::span<const ScoredTrial> trials) {
  std::vector<double> same, diff;
  for (const auto& t : trials) {
    if (!std::isfinite(t.score)) throw Error(ErrorCode::InvalidArgument, "estimate_eer: non-finite score");
    (t.same_speaker ? same : diff).push_back(t.score);
  }
  if (same.empty() || diff.empty()) {
    throw Error(ErrorCode::InvalidArgument, "estimate_eer: trials must contain both same and different pairs");
  }
  std::sort(same.begin(), same.end());
  std::sort(diff.begin(), diff.end());
  std::vector<double> thresholds;
  thresholds.reserve(same.size() + diff.size());
  std::merge(same.begin(), same.end(), diff.begin(), diff.end(), std::back_inserter(thresholds));
  thresholds.erase(std::unique(thresholds.begin(), thresholds.end()), thresholds.end());

  // Accept when score >= threshold. The sweep starts at (FAR 1, FRR 0) and
  // ends past the largest score at (0, 1).
  const double ns = double(same.size()), nd = double(diff.size());
  std::vector<std::pair<double, double>> points;
  points.reserve(thresholds.size() + 1);
  for (double th : thresholds) {
    const auto rejected_same = std::lower_bound(same.begin(), same.end(), th) - same.begin();
    const auto rejected_diff = std::lower_bound(diff.begin(), diff.end(), th) - diff.begin();
    points.emplace_back((nd - double(rejected_diff)) / nd, double(rejected_same) / ns);
  }
  points.emplace_back(0.0, 1.0);
  for (std::size_t i = 0; i + 1 < points.size(); ++i) {
    const auto [far0, frr0] = points[i];
    const auto [far1, frr1] = points[i + 1];
    const double f0 = far0 - frr0, f1 = far1 - frr1;
    if (f0 >= 0.0 && f1 <= 0.0) {
      if (f0 == f1) return far0;
      const double a = f0 / (f0 - f1);
      return far0 + a * (far1 - far0);
    }
  }
  throw Error(ErrorCode::Internal, "estimate_eer: no FAR/FRR crossing");
}

double cosine_similarity(const RowVector& a, const RowVector& b) {
  const double na = a.norm(), nb = b.norm();
  if (na == 0.0 || nb == 0.0) return 0.0;
  return a.dot(b) / (na * nb);
}

VerificationTrial generate_trial(std::span<const int> utterance_speakers, std::size_t index, int enroll,
                                 std::uint64_t seed) {
  std::map<int, std::vector<std::size_t>> by_speaker;
  for (std::size_t i = 0; i < utterance_speakers.size(); ++i) by_speaker[utterance_speakers[i]].push_back(i);
  std::vector<int> eligible;
  for (const auto& [spk, utts] : by_speaker) {
    if (utts.size() >= static_cast<std::size_t>(enroll) + 1) eligible.push_back(spk);
  }
  if (by_speaker.size() < 2 || eligible.empty()) {
    throw Error(ErrorCode::InvalidArgument, "verification trials need two speakers and one with at least " +
                                                std::to_string(enroll + 1) + " utterances");
  }
  std::mt19937_64 rng(mix_seed(seed, index, 0x7e57));
  VerificationTrial t;
  t.same_speaker = index % 2 == 0;
  const int spk = eligible[std::uniform_int_distribution<std::size_t>(0, eligible.size() - 1)(rng)];
  std::vector<std::size_t> pool = by_speaker[spk];
  std::shuffle(pool.begin(), pool.end(), rng);
  t.enrollment.assign(pool.begin(), pool.begin() + enroll);
  if (t.same_speaker) {
    t.test = pool[static_cast<std::size_t>(enroll)];
  } else {
    std::vector<int> others;
    for (const auto& [s, u] : by_speaker) {
      if (s != spk) others.push_back(s);
    }
    const int other = others[std::uniform_int_distribution<std::size_t>(0, others.size() - 1)(rng)];
    const auto& utts = by_speaker[other];
    t.test = utts[std::uniform_int_distribution<std::size_t>(0, utts.size() - 1)(rng)];
  }
  return t;
}

std::vector<VerificationTrial> generate_trials(std::span<const int> utterance_speakers, std::size_t n_trials,
                                               int enroll, std::uint64_t seed) {
  if (enroll < 1) throw Error(ErrorCode::InvalidArgument, "enrollment size must be >= 1");
  std::vector<VerificationTrial> out;
  out.reserve(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i) out.push_back(generate_trial(utterance_speakers, i, enroll, seed));
  return out;
}

std::vector<ScoredTrial> score_trials(std::span<const VerificationTrial> trials,
                                      const std::vector<RowVector>& enroll_embeddings,
                                      const std::vector<RowVector>& test_embeddings) {
  std::vector<ScoredTrial> out;
  out.reserve(trials.size());
  for (const auto& t : trials) {
    RowVector mean = RowVector::Zero(enroll_embeddings.at(t.enrollment.front()).size());
    for (std::size_t e : t.enrollment) mean += enroll_embeddings.at(e);
    mean /= double(t.enrollment.size());
    out.push_back({cosine_similarity(test_embeddings.at(t.test), mean), t.same_speaker});
  }
  return out;
}

std::vector<ScoredTrial> synthetic_trials(const std::string& mode, std::size_t n_trials, std::uint64_t seed) {
  std::vector<ScoredTrial> out(n_trials);
  for (std::size_t i = 0; i < n_trials; ++i) {
    std::mt19937_64 rng(mix_seed(seed, i, 0x5c0e));
    out[i].same_speaker = i % 2 == 0;
    if (mode == "random") {
      out[i].score = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
    } else if (mode == "gaussian") {
      out[i].score = std::normal_distribution<double>(out[i].same_speaker ? 1.0 : -1.0, 1.0)(rng);
    } else {
      throw Error(ErrorCode::InvalidArgument, "unknown synthetic score mode '" + mode + "' (random|gaussian)");
    }
  }
  return out;
}

PcaResult pca_2d(const Matrix& embeddings) {
  if (embeddings.rows() < 2) throw Error(ErrorCode::InvalidArgument, "PCA needs at least two embeddings");
  if (embeddings.cols() < 1) throw Error(ErrorCode::InvalidArgument, "PCA needs non-empty embeddings");
  const Matrix centred = embeddings.rowwise() - embeddings.colwise().mean();
  const Matrix cov = centred.transpose() * centred / double(embeddings.rows() - 1);
  const Eigen::SelfAdjointEigenSolver<Matrix> eig(cov);
  if (eig.info() != Eigen::Success) throw Error(ErrorCode::Numeric, "PCA eigendecomposition failed");
  const Eigen::Index d = cov.rows();
  PcaResult r;
  r.eigenvalues = eig.eigenvalues().reverse().cwiseMax(0.0);
  r.components = Matrix::Zero(d, 2);
  for (Eigen::Index k = 0; k < std::min<Eigen::Index>(2, d); ++k) {
    Eigen::VectorXd v = eig.eigenvectors().col(d - 1 - k);
    const double tol = 1e-12 * v.cwiseAbs().maxCoeff();
    for (Eigen::Index i = 0; i < d; ++i) {
      if (std::abs(v(i)) > tol) {
        if (v(i) < 0) v = -v;
        break;
      }
    }
    r.components.col(k) = v;
  }
  r.coords = centred * r.components;
  const double total = r.eigenvalues.sum();
  if (total > 0.0) {
    r.explained_pc1 = r.eigenvalues(0) / total;
    r.explained_pc2 = d > 1 ? r.eigenvalues(1) / total : 0.0;
  }
  return r;
}

double linear_separability(const Matrix& points, std::span<const int> labels) {
  const Eigen::Index n = points.rows();
  if (n == 0 || static_cast<std::size_t>(n) != labels.size()) {
    throw Error(ErrorCode::InvalidArgument, "linear_separability: label count mismatch");
  }
  const int k = *std::max_element(labels.begin(), labels.end()) + 1;
  if (*std::min_element(labels.begin(), labels.end()) < 0) throw Error(ErrorCode::InvalidArgument, "negative label");
  const RowVector mean = points.colwise().mean();
  RowVector scale = ((points.rowwise() - mean).array().square().colwise().sum() / double(n)).sqrt();
  for (Eigen::Index j = 0; j < scale.size(); ++j) scale(j) = scale(j) > 1e-300 ? 1.0 / scale(j) : 0.0;
  const Matrix x = (points.rowwise() - mean).array().rowwise() * scale.array();
  Matrix w = Matrix::Zero(x.cols(), k);
  RowVector b = RowVector::Zero(k);
  Matrix onehot = Matrix::Zero(n, k);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, labels[static_cast<std::size_t>(i)]) = 1.0;
  const double lr = 0.5;
  for (int it = 0; it < 3000; ++it) {
    Matrix z = (x * w).rowwise() + b;
    for (Eigen::Index i = 0; i < n; ++i) {
      z.row(i).array() -= z.row(i).maxCoeff();
      z.row(i) = z.row(i).array().exp().matrix();
      z.row(i) /= z.row(i).sum();
    }
    const Matrix g = (z - onehot) / double(n);
    w -= lr * x.transpose() * g;
    b -= lr * g.colwise().sum();
  }
  const Matrix z = (x * w).rowwise() + b;
  Eigen::Index correct = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index idx = 0;
    z.row(i).maxCoeff(&idx);
    correct += idx == labels[static_cast<std::size_t>(i)];
  }
  return double(correct) / double(n);
}

namespace {

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

}  // namespace

std::string pca_svg(const Matrix& coords, const std::vector<std::string>& names, const std::vector<std::string>& labels) {
  static const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};
  const double size = 480, margin = 40;
  const double x0 = coords.col(0).minCoeff(), x1 = coords.col(0).maxCoeff();
  const double y0 = coords.col(1).minCoeff(), y1 = coords.col(1).maxCoeff();
  auto sx = [&](double v) { return margin + (x1 > x0 ? (v - x0) / (x1 - x0) : 0.5) * (size - 2 * margin); };
  auto sy = [&](double v) { return size - margin - (y1 > y0 ? (v - y0) / (y1 - y0) : 0.5) * (size - 2 * margin); };
  std::map<std::string, std::size_t> colour;
  for (const auto& l : labels) colour.emplace(l, colour.size());

  std::ostringstream os;
  os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size << "\">\n";
  os << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  os << "<text x=\"" << size / 2 << "\" y=\"" << size - 8 << "\" text-anchor=\"middle\" font-size=\"12\">PC1</text>\n";
  os << "<text x=\"12\" y=\"" << size / 2 << "\" font-size=\"12\" transform=\"rotate(-90 12 " << size / 2
     << ")\">PC2</text>\n";
  for (Eigen::Index i = 0; i < coords.rows(); ++i) {
    const std::string& label = labels.empty() ? std::string() : labels[static_cast<std::size_t>(i)];
    const char* fill = kPalette[(labels.empty() ? 0 : colour[label]) % 8];
    os << "<circle cx=\"" << sx(coords(i, 0)) << "\" cy=\"" << sy(coords(i, 1)) << "\" r=\"4\" fill=\"" << fill
       << "\"/>\n";
    if (static_cast<std::size_t>(i) < names.size()) {
      os << "<text x=\"" << sx(coords(i, 0)) + 5 << "\" y=\"" << sy(coords(i, 1)) - 5 << "\" font-size=\"9\">"
         << xml_escape(names[static_cast<std::size_t>(i)]) << "</text>\n";
    }
  }
  double ly = 16;
  for (const auto& [label, idx] : colour) {
    os << "<circle cx=\"" << size - 110 << "\" cy=\"" << ly - 4 << "\" r=\"4\" fill=\"" << kPalette[idx % 8] << "\"/>";
    os << "<text x=\"" << size - 100 << "\" y=\"" << ly << "\" font-size=\"11\">" << xml_escape(label) << "</text>\n";
    ly += 16;
  }
  os << "</svg>\n";
  return os.str();
}

}  // namespace mswave
