#include <doctest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "checkpoint.hpp"
#include "error.hpp"
#include "support.hpp"
#include "trainer.hpp"

using namespace mswave;
using mswave::testing::finite_difference;
using mswave::testing::random_matrix;

namespace {

struct TinyRun {
  Hyperparameters hp = testing::tiny_hp();
  testing::SyntheticData data;
  std::unique_ptr<Model> model;
  TrainingBatch batch;

  explicit TinyRun(std::uint64_t seed = 1, int speakers = 2, int per_speaker = 2) {
    data = testing::synthetic_data(hp, speakers, per_speaker, seed);
    model = std::make_unique<Model>(hp, data.charset, data.registry, seed);
    std::mt19937_64 rng(seed + 100);
    // Zero-initialised biases would hide whole gradient paths.
    for (auto* p : model->params().all()) {
      if (p->name.find("bias") != std::string::npos) p->value = random_matrix(p->value.rows(), p->value.cols(), rng, 0.1);
    }
    batch = make_batch({data.records.front(), data.records.back()}, data.registry, data.charset, data.features, hp);
  }

  double loss() {
    JointLossOptions o;
    o.dropout = false;
    return joint_loss(*model, batch, o).total;
  }

  void backward() {
    model->params().zero_grad();
    JointLossOptions o;
    o.dropout = false;
    o.backward = true;
    joint_loss(*model, batch, o);
  }

  Parameter& param(const std::string& name) {
    Parameter* p = model->params().find(name);
    REQUIRE_MESSAGE(p != nullptr, name);
    return *p;
  }
};

}  // namespace

TEST_SUITE("trainer") {
  TEST_CASE("unit-coefficient combination") {
    const LossBreakdown l = combine_losses(0.4, 0.3, 1.1);
    CHECK(l.total == doctest::Approx(1.8));
    CHECK_THROWS_WITH_AS(combine_losses(0.4, std::numeric_limits<double>::infinity(), 1.0),
                         doctest::Contains("bridge"), Error);
    CHECK_THROWS_WITH_AS(combine_losses(0.4, 0.1, std::nan("")), doctest::Contains("vocoder"), Error);
  }

  TEST_CASE("fully masked batch is an error") {
    TinyRun run;
    for (auto& item : run.batch.items) {
      item.frame_mask.setZero();
      item.sample_mask.setZero();
    }
    CHECK_THROWS_AS(run.loss(), Error);
  }

  TEST_CASE("every parameter group receives gradient") {
    TinyRun run;
    run.backward();
    std::map<std::string, double> groups;
    for (const auto* p : run.model->params().all()) {
      groups[Model::group_of(p->name)] = std::max(groups[Model::group_of(p->name)], p->grad.cwiseAbs().maxCoeff());
    }
    for (const char* g : {"encoder", "decoder", "bridge", "vocoder", "embeddings", "projectors"}) {
      INFO(g);
      REQUIRE(groups.count(g) == 1);
      CHECK(groups[g] > 0.0);
    }
  }

  TEST_CASE("finite differences through the joint loss") {
    TinyRun run(3);
    run.backward();
    for (const char* name : {"encoder.block0.conv.weight", "encoder.block0.speaker.weight", "decoder.attention.key_rate",
                             "decoder.attention.query.weight", "decoder.block0.speaker.bias", "bridge.upsample0.weight",
                             "bridge.upsample1.speaker.weight", "vocoder.layer2.conv.weight", "vocoder.head2.weight",
                             "speaker_embedding"}) {
      Parameter& p = run.param(name);
      const Matrix analytic = p.grad;
      const auto r = finite_difference(p.value, analytic, [&] { return run.loss(); }, 12, 7);
      INFO(std::string(name) << " rel " << r.max_rel_error);
      CHECK(r.max_rel_error <= 1e-3);
      CHECK(r.max_abs_analytic > 0.0);
    }
  }

  TEST_CASE("nll gradient is zero where the floor is active") {
    ad::Parameter raw("raw", Matrix(2, 2));
    raw.value << 0.3, -20.0, 0.1, -0.5;
    Eigen::VectorXd x(2);
    x << 0.3, 0.4;
    ad::Tape tape;
    tape.backward(ad::gaussian_nll_sum(tape.param(raw), x, Eigen::VectorXd::Ones(2), -7.0));
    tape.accumulate_param_grads();
    CHECK(raw.grad(0, 1) == 0.0);
    CHECK(raw.grad(0, 0) == 0.0);  // x = mu
    CHECK(raw.grad(1, 1) != 0.0);
  }

  TEST_CASE("learning-rate schedule") {
    const Hyperparameters hp;
    CHECK(lr_schedule(0, hp) == 0.001);
    CHECK(lr_schedule(100000, hp) == 0.001);
    CHECK(lr_schedule(500000, hp) == 0.001);
    CHECK(lr_schedule(500001, hp) == 0.0005);
    CHECK(lr_schedule(600000, hp) == 0.0005);
    CHECK(lr_schedule(699999, hp) == 0.0005);
    CHECK(lr_schedule(700000, hp) == 0.00025);
    // The closed form gives k = floor(450000 / 200000) + 1 = 3 here.
    CHECK(lr_schedule(950000, hp) == 0.000125);
    double prev = 1.0;
    for (long s = 0; s <= 2000000; s += 1000) {
      const double lr = lr_schedule(s, hp);
      CHECK(lr <= prev);
      prev = lr;
    }
    CHECK_THROWS_AS(lr_schedule(-1, hp), Error);
  }

  TEST_CASE("schedule only changes at the anneal cadence") {
    const Hyperparameters hp;
    std::vector<long> changes;
    for (long s = 1; s <= 1500000; ++s) {
      if (lr_schedule(s, hp) != lr_schedule(s - 1, hp)) changes.push_back(s);
    }
    REQUIRE(changes.size() >= 3);
    CHECK(changes[0] == 500001);
    for (std::size_t i = 1; i < changes.size(); ++i) CHECK((changes[i] - 500000) % 200000 == 0);
  }

  TEST_CASE("gradient clipping") {
    const Hyperparameters hp;
    ad::Parameter a("a", Matrix::Zero(1, 4)), b("b", Matrix::Zero(1, 1));
    std::vector<Parameter*> ps{&a, &b};

    a.grad << 120, 0, 0, 0;
    b.grad << 160;
    CHECK(clip_gradients(ps, hp) == doctest::Approx(200));
    CHECK(a.grad(0, 0) == doctest::Approx(5.0));  // 60 after halving, then clamped
    CHECK(b.grad(0, 0) == doctest::Approx(5.0));

    a.grad << 3, -4, 1, 0;
    b.grad << 0;
    const double n = std::sqrt(26.0);
    clip_gradients(ps, hp);
    CHECK(a.grad(0, 0) == 3);

    Hyperparameters loose = hp;
    loose.grad_clip_value = 1e9;
    a.grad << 120, 0, 0, 0;
    b.grad << 160;
    clip_gradients(ps, loose);
    CHECK(a.grad(0, 0) == doctest::Approx(60));
    CHECK(b.grad(0, 0) == doctest::Approx(80));

    a.grad << 0.6, 0, 0, 0;
    b.grad << 0.8;
    const Matrix keep = a.grad;
    CHECK(clip_gradients(ps, hp) == doctest::Approx(1.0));
    CHECK(a.grad == keep);
    CHECK(n > 0);

    a.grad << 0, 7.0, 0, 0;
    b.grad << 0;
    clip_gradients(ps, hp);
    CHECK(a.grad(0, 1) == 5.0);

    b.grad << std::nan("");
    CHECK_THROWS_WITH_AS(clip_gradients(ps, hp), doctest::Contains("b"), Error);
  }

  TEST_CASE("adam matches the textbook update") {
    Hyperparameters hp;
    ad::Parameter p("p", Matrix::Constant(1, 2, 1.0));
    AdamState s;
    p.grad << 0.5, -2.0;
    adam_update({&p}, s, 0.1, hp);
    // first step: m_hat = g, v_hat = g^2 -> step = lr * sign(g) (up to eps)
    CHECK(p.value(0, 0) == doctest::Approx(0.9).epsilon(1e-6));
    CHECK(p.value(0, 1) == doctest::Approx(1.1).epsilon(1e-6));
    CHECK(s.t == 1);
  }

  TEST_CASE("seed mixing is deterministic and spreads") {
    CHECK(mix_seed(1, 2, 3) == mix_seed(1, 2, 3));
    CHECK(mix_seed(1, 2, 3) != mix_seed(1, 3, 2));
    CHECK(mix_seed(1, 2) != mix_seed(2, 2));
  }

  TEST_CASE("loss is a function of parameters, batch and dropout seed") {
    TinyRun run;
    JointLossOptions o;
    o.dropout_seed = 17;
    const double a = joint_loss(*run.model, run.batch, o).total;
    const double b = joint_loss(*run.model, run.batch, o).total;
    o.dropout_seed = 18;
    const double c = joint_loss(*run.model, run.batch, o).total;
    CHECK(a == b);
    CHECK(a != c);
  }

  TEST_CASE("a few epochs move every parameter group") {
    Hyperparameters hp = testing::tiny_hp();
    auto data = testing::synthetic_data(hp, 2, 2, 5);
    Trainer t(hp, data.records, data.registry, data.charset, data.features, 9);
    std::map<std::string, Matrix> before;
    for (const auto* p : t.model().params().all()) before[p->name] = p->value;
    for (int i = 0; i < 4; ++i) t.train_step();
    std::map<std::string, double> moved;
    for (const auto* p : t.model().params().all()) {
      auto& m = moved[Model::group_of(p->name)];
      m = std::max(m, (p->value - before[p->name]).cwiseAbs().maxCoeff());
    }
    for (const auto& [group, delta] : moved) {
      INFO(group);
      CHECK(delta > 0.0);
    }
    CHECK(t.step() == 4);
  }

  TEST_CASE("metrics rows") {
    MetricsRow r;
    r.step = 12;
    r.lr = 0.001;
    r.loss = combine_losses(1, 2, -0.5);
    CHECK(metrics_header() == "step,lr,decoder_l1,bridge_l1,vocoder_nll,total");
    CHECK(format_metrics_row(r).rfind("12,0.001,1,2,-0.5,2.5", 0) == 0);
  }
}

TEST_SUITE("checkpoint") {
  TEST_CASE("save, load, save gives identical bytes") {
    Hyperparameters hp = testing::tiny_hp();
    auto data = testing::synthetic_data(hp, 2, 2, 2);
    Trainer t(hp, data.records, data.registry, data.charset, data.features, 4);
    t.train_step();
    t.train_step();
    testing::TempDir dir("ckpt");
    t.save(dir / "a.msw");
    const LoadedCheckpoint ck = load_checkpoint(dir / "a.msw");
    CHECK(ck.step == 2);
    CHECK(ck.seed == 4);
    CHECK(ck.adam.t == 2);
    CHECK(ck.model->hp() == hp);
    CHECK(ck.model->registry() == data.registry);
    save_checkpoint(dir / "b.msw", *ck.model, &ck.adam, ck.step, ck.seed);
    std::ifstream a(dir / "a.msw", std::ios::binary), b(dir / "b.msw", std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa.size() > 1000);
    CHECK(sa == sb);
    CHECK(sa.rfind("MSWCKPT1", 0) == 0);
  }

  TEST_CASE("corrupt or truncated files are rejected") {
    Hyperparameters hp = testing::tiny_hp();
    Model m(hp, Charset::default_charset(), SpeakerRegistry({"a", "b"}), 1);
    std::vector<std::uint8_t> bytes = encode_checkpoint(m, nullptr, 0, 0);
    CHECK_NOTHROW(decode_checkpoint(bytes));
    std::vector<std::uint8_t> cut(bytes.begin(), bytes.begin() + static_cast<long>(bytes.size() / 2));
    CHECK_THROWS_AS(decode_checkpoint(cut), Error);
    bytes[0] = 'X';
    CHECK_THROWS_AS(decode_checkpoint(bytes), Error);
    CHECK_THROWS_AS(load_checkpoint("/nonexistent/ckpt.msw"), Error);
  }

  TEST_CASE("resume continues exactly where the run stopped") {
    Hyperparameters hp = testing::tiny_hp();
    hp.vocoder_train_samples = 30;  // exercise the seeded crop too
    auto data = testing::synthetic_data(hp, 2, 3, 6);
    testing::TempDir dir("resume");
    Trainer full(hp, data.records, data.registry, data.charset, data.features, 21);
    for (int i = 0; i < 3; ++i) full.train_step();
    full.save(dir / "k.msw");
    const MetricsRow next = full.train_step();

    Trainer resumed(hp, data.records, data.registry, data.charset, data.features, 21);
    resumed.resume(dir / "k.msw");
    CHECK(resumed.step() == 3);
    const MetricsRow again = resumed.train_step();
    CHECK(again.step == next.step);
    CHECK(std::abs(again.loss.total - next.loss.total) <= 1e-6);
    CHECK(again.loss.total == next.loss.total);
    for (const auto* p : full.model().params().all()) {
      CHECK(resumed.model().params().find(p->name)->value == p->value);
    }
  }

  TEST_CASE("resume rejects different settings") {
    Hyperparameters hp = testing::tiny_hp();
    auto data = testing::synthetic_data(hp, 2, 2, 7);
    testing::TempDir dir("mismatch");
    Trainer t(hp, data.records, data.registry, data.charset, data.features, 1);
    t.save(dir / "c.msw");
    Hyperparameters other = hp;
    other.lr_initial = 0.002;
    Trainer u(other, data.records, data.registry, data.charset, data.features, 1);
    try {
      u.resume(dir / "c.msw");
      FAIL("resumed with different hyperparameters");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Config);
    }
  }

  TEST_CASE("training loop writes ordered metrics and checkpoints") {
    Hyperparameters hp = testing::tiny_hp();
    hp.checkpoint_interval = 2;
    testing::TempDir dir("loop");
    auto data = testing::synthetic_data(hp, 2, 2, 8);
    Manifest manifest{data.records, data.registry, 0};
    TrainOptions o;
    o.out_dir = dir.str();
    o.steps = 5;
    o.seed = 2;
    o.log_interval = 0;
    TrainResult r = train(hp, manifest, data.charset, data.features, o);
    CHECK(r.final_step == 5);
    CHECK(std::filesystem::exists(dir / "ckpt_00000002.msw"));
    CHECK(std::filesystem::exists(dir / "ckpt_00000004.msw"));
    CHECK(std::filesystem::exists(dir / "ckpt_00000005.msw"));
    CHECK(std::filesystem::exists(dir / "latest.msw"));

    o.resume = dir / "ckpt_00000004.msw";
    o.steps = 7;
    r = train(hp, manifest, data.charset, data.features, o);
    CHECK(r.final_step == 7);
    std::ifstream in(dir / "metrics.csv");
    std::string line;
    std::getline(in, line);
    CHECK(line == metrics_header());
    long prev = 0;
    int rows = 0;
    while (std::getline(in, line)) {
      const long step = std::stol(line.substr(0, line.find(',')));
      CHECK(step > prev);
      prev = step;
      ++rows;
    }
    CHECK(rows == 7);
  }
}
