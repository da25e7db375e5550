#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "config.hpp"
#include "dsp.hpp"
#include "error.hpp"
#include "log.hpp"
#include "manifest.hpp"
#include "support.hpp"
#include "text.hpp"

using namespace mswave;
namespace fs = std::filesystem;

TEST_SUITE("config") {
  TEST_CASE("empty file gives the published defaults") {
    const Hyperparameters hp = parse_config("");
    CHECK(hp.fft_size == 2048);
    CHECK(hp.win_length_samples == 1200);
    CHECK(hp.hop_length_samples == 300);
    CHECK(hp.reduction_factor == 4);
    CHECK(hp.speaker_embedding_dim == 32);
    CHECK(hp.vocoder_layers == 20);
    CHECK(hp.vocoder_skip_channels == 128);
    CHECK(hp.log_sigma_floor == -7.0);
    CHECK(hp.max_grad_norm == 100.0);
    CHECK(hp.grad_clip_value == 5.0);
    CHECK(hp.batch_size == 16);
    CHECK(hp.upsample_factor() == 300);
  }

  TEST_CASE("vocoder layers must be a whole number of cycles") {
    try {
      parse_config("vocoder_layers = 25\n");
      FAIL("accepted 25 layers");
    } catch (const Error& e) {
      CHECK(e.code() == ErrorCode::Config);
      CHECK(std::string(e.what()).find("vocoder_layers") != std::string::npos);
    }
  }

  TEST_CASE("an override changes exactly one field") {
    const Hyperparameters hp = parse_config("# deeper vocoder\nvocoder_layers = 30\n");
    Hyperparameters want;
    want.vocoder_layers = 30;
    CHECK(hp == want);
    CHECK_FALSE(hp == Hyperparameters{});
  }

  TEST_CASE("serialization round-trips") {
    Hyperparameters hp;
    hp.upsample_strides = {10, 30};
    hp.decoder_prenet_channels = {64, 96, 128};
    hp.lr_initial = 3.0e-4;
    hp.positional_initial_rate = 7.6;
    CHECK(parse_config(serialize_config(hp)) == hp);
    CHECK(parse_config(serialize_config(testing::tiny_hp())) == testing::tiny_hp());
  }

  TEST_CASE("malformed input is rejected with its line number") {
    CHECK_THROWS_WITH_AS(parse_config("fft_size = 2048\nno_such_key = 1\n"), doctest::Contains("line 2"), Error);
    CHECK_THROWS_AS(parse_config("fft_size = 2048\nfft_size = 1024\n"), Error);
    CHECK_THROWS_AS(parse_config("fft_size = big\n"), Error);
    CHECK_THROWS_AS(parse_config("fft_size 2048\n"), Error);
    CHECK_THROWS_AS(parse_config("upsample_strides = 15, 21\n"), Error);  // product != hop
  }

  TEST_CASE("set_config_value uses the file grammar") {
    Hyperparameters hp;
    set_config_value(hp, "upsample_strides", "20, 15");
    CHECK(hp.upsample_strides == std::vector<int>{20, 15});
    CHECK_THROWS_AS(set_config_value(hp, "nope", "1"), Error);
  }

  TEST_CASE("every key is serialized") {
    const std::string text = serialize_config(Hyperparameters{});
    for (const auto& k : config_keys()) CHECK(text.find(k + " = ") != std::string::npos);
  }
}

namespace {

void write_text(const fs::path& p, const std::string& s) {
  fs::create_directories(p.parent_path());
  std::ofstream(p) << s;
}

void write_tone(const fs::path& p, int n = 2400) {
  Waveform w;
  w.sample_rate_hz = 24000;
  for (int i = 0; i < n; ++i) w.samples.push_back(0.3 * std::sin(0.05 * i));
  fs::create_directories(p.parent_path());
  write_wav(p.string(), w);
}

}  // namespace

TEST_SUITE("manifest") {
  TEST_CASE("two speakers with three clips each") {
    testing::TempDir dir("manifest");
    for (const char* spk : {"zed", "amy"}) {
      for (int i = 0; i < 3; ++i) {
        const fs::path base = dir.path() / spk / ("c" + std::to_string(i));
        write_tone(base.string() + ".wav");
        write_text(base.string() + ".txt", "Clip number " + std::to_string(i) + ".\n");
      }
    }
    const Manifest m = build_manifest(dir.str());
    CHECK(m.records.size() == 6);
    CHECK(m.registry.size() == 2);
    // indices follow lexicographic order, not creation order
    CHECK(m.registry.index_of("amy") == 0);
    CHECK(m.registry.index_of("zed") == 1);
    CHECK(m.records.front().speaker_id == "amy");
    CHECK(m.records.front().transcript == "Clip number 0.");
  }

  TEST_CASE("orphan transcript is skipped with a warning") {
    testing::TempDir dir("orphan");
    write_tone(dir.path() / "a" / "one.wav");
    write_text(dir.path() / "a" / "one.txt", "one.");
    write_text(dir.path() / "a" / "two.txt", "two.");
    write_tone(dir.path() / "b" / "x.wav");
    write_text(dir.path() / "b" / "x.txt", "x.");
    log::reset_warning_count();
    const auto before = log::level();
    log::set_level(log::Level::Error);
    const Manifest m = build_manifest(dir.str());
    log::set_level(before);
    CHECK(m.records.size() == 2);
    CHECK(m.skipped == 1);
    CHECK(log::warning_count() >= 1);
    for (const auto& r : m.records) CHECK(r.utterance_id.find("two") == std::string::npos);
  }

  TEST_CASE("scanning twice gives identical bytes") {
    testing::TempDir dir("twice");
    for (int s = 0; s < 3; ++s) {
      for (int i = 4; i >= 0; --i) {
        const fs::path base = dir.path() / ("spk" + std::to_string(s)) / ("u" + std::to_string(i));
        write_tone(base.string() + ".wav", 600);
        write_text(base.string() + ".txt", "t" + std::to_string(i) + ".");
      }
    }
    const std::string a = serialize_manifest(build_manifest(dir.str()).records);
    const std::string b = serialize_manifest(build_manifest(dir.str()).records);
    CHECK(a == b);
    CHECK(parse_manifest(a) == build_manifest(dir.str()).records);
  }

  TEST_CASE("manifest file round-trips") {
    testing::TempDir dir("mfile");
    std::vector<UtteranceRecord> recs{{"a/1", "a", "Hello, world.", "a/1.wav"}, {"b/2", "b", "Bye.", "b/2.wav"}};
    save_manifest(recs, dir / "m.tsv");
    const Manifest m = load_manifest(dir / "m.tsv");
    CHECK(m.records == recs);
    CHECK(m.registry.ids() == std::vector<std::string>{"a", "b"});
  }

  TEST_CASE("registry") {
    SpeakerRegistry r({"p2", "p1", "p2", "p10"});
    CHECK(r.ids() == std::vector<std::string>{"p1", "p10", "p2"});
    CHECK_THROWS_AS(r.index_of("p3"), Error);
    CHECK(SpeakerRegistry::parse(r.serialize()) == r);
  }
}

TEST_SUITE("text") {
  TEST_CASE("period is appended when missing") {
    const Charset cs = Charset::default_charset();
    const auto a = normalize_and_encode_text("Hello.", cs);
    const auto b = normalize_and_encode_text("Hello", cs);
    const std::vector<int> want{cs.id_of("h"), cs.id_of("e"), cs.id_of("l"), cs.id_of("l"), cs.id_of("o"),
                                cs.period_id()};
    CHECK(a.ids == want);
    CHECK(b.ids == want);
    CHECK(a.normalized_text == "hello.");
  }

  TEST_CASE("empty text is an error") {
    const Charset cs = Charset::default_charset();
    CHECK_THROWS_AS(normalize_and_encode_text("", cs), Error);
    CHECK_THROWS_AS(normalize_and_encode_text("   ", cs), Error);
  }

  TEST_CASE("unknown symbols are dropped") {
    const Charset cs = Charset::default_charset();
    const auto before = log::level();
    log::set_level(log::Level::Error);
    const auto r = normalize_and_encode_text("a#b", cs);
    log::set_level(before);
    CHECK(r.dropped == 1);
    CHECK(r.normalized_text == "ab.");
  }

  TEST_CASE("charset round-trips including the space symbol") {
    const Charset cs = Charset::default_charset();
    CHECK(Charset::parse(cs.serialize()) == cs);
    CHECK(cs.id_of(" ") >= 0);
  }
}
