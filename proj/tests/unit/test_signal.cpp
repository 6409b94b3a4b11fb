#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "doctest.h"
#include "ecglab/error.hpp"
#include "ecglab/random.hpp"
#include "ecglab/signal/record.hpp"
#include "ecglab/signal/report.hpp"
#include "ecglab/signal/synth.hpp"
#include "nlohmann/json.hpp"

using namespace ecglab;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "ecglab_test_signal";
  fs::create_directories(dir);
  return dir / name;
}

EcgRecord random_record(std::uint64_t seed, std::size_t n, double fs = 500.0) {
  Rng rng(seed);
  std::vector<float> v(12 * n);
  for (auto& x : v) x = static_cast<float>(rng.normal(0.0, 1.0));
  return EcgRecord(fs, n, std::move(v));
}

// Rising crossings of half the R amplitude.
std::size_t count_peaks(std::span<const float> x, double threshold) {
  std::size_t n = 0;
  for (std::size_t i = 1; i < x.size(); ++i) n += (x[i - 1] < threshold && x[i] >= threshold);
  return n;
}

}  // namespace

TEST_CASE("record validates its shape") {
  CHECK_THROWS_AS(EcgRecord(500.0, 10, std::vector<float>(119)), ParameterError);
  CHECK_THROWS_AS(EcgRecord(0.0, 10, std::vector<float>(120)), ParameterError);
  std::vector<float> v(120, 0.0f);
  v[7] = std::nanf("");
  CHECK_THROWS_AS(EcgRecord(500.0, 10, v), ParameterError);
  auto r = EcgRecord::zeros(250.0, 2500);
  CHECK(r.duration() == 10.0);
  CHECK(r.lead(Lead::V6).size() == 2500);
}

TEST_CASE("ECGR save/load round trip is bitwise") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto r = random_record(seed, 37 + seed * 11);
    const auto path = scratch("rt" + std::to_string(seed) + ".json");
    save_record(r, path);
    const auto back = load_record(path);
    CHECK(back.fs() == r.fs());
    REQUIRE(back.n_samples() == r.n_samples());
    CHECK(std::memcmp(back.samples().data(), r.samples().data(), r.samples().size() * 4) == 0);

    auto header = nlohmann::json::parse(std::ifstream(path));
    CHECK(header["version"] == 1);
    CHECK(header["n_leads"] == 12);
    CHECK(header["dtype"] == "f32le");
    CHECK(header["lead_names"][3] == "aVR");
    CHECK(fs::file_size(path.parent_path() / header["data_file"].get<std::string>()) == 12 * r.n_samples() * 4);
  }
}

TEST_CASE("ECGR parse errors name the problem") {
  const auto r = random_record(3, 20);
  const auto path = scratch("bad.json");
  save_record(r, path);
  auto header = nlohmann::json::parse(std::ifstream(path));

  auto expect_parse_error = [&](const nlohmann::json& h, const std::string& needle) {
    std::ofstream(path) << h.dump();
    try {
      load_record(path);
      FAIL("expected ParseError");
    } catch (const ParseError& e) {
      CHECK_MESSAGE(std::string(e.what()).find(needle) != std::string::npos, e.what());
    }
  };
  auto h = header;
  h["n_leads"] = 11;
  expect_parse_error(h, "lead count");
  h = header;
  h["n_samples"] = 21;
  expect_parse_error(h, "truncated");
  h = header;
  h.erase("fs");
  expect_parse_error(h, "fs");
  std::ofstream(path) << "{not json";
  CHECK_THROWS_AS(load_record(path), ParseError);

  std::ofstream(path) << header.dump();
  {
    std::fstream data(path.parent_path() / header["data_file"].get<std::string>(), std::ios::in | std::ios::out | std::ios::binary);
    data.seekp(40);
    const float inf = INFINITY;
    data.write(reinterpret_cast<const char*>(&inf), 4);
  }
  expect_parse_error(header, "offset 40");
}

TEST_CASE("CSV import") {
  const auto r = random_record(8, 15, 250.0);
  const auto path = scratch("rec.csv");
  save_record_csv(r, path);
  const auto back = load_record(path);
  CHECK(back.fs() == 250.0);
  CHECK(back == r);
}

TEST_CASE("resample") {
  const auto r = random_record(1, 100);
  CHECK(resample(r, 500.0) == r);
  CHECK_THROWS_AS(resample(r, 99.0), ParameterError);

  std::vector<float> c(12 * 500, 0.7f);
  const auto k = resample(EcgRecord(500.0, 500, c), 130.0);
  CHECK(k.n_samples() == 130);
  for (float v : k.samples()) CHECK(v == 0.7f);

  // Ramp 0..1 over 1 s at 500 Hz: x(t) = t * 500 / 499.
  std::vector<float> ramp(12 * 500);
  for (std::size_t l = 0; l < 12; ++l)
    for (std::size_t i = 0; i < 500; ++i) ramp[l * 500 + i] = static_cast<float>(i / 499.0);
  const auto d = resample(EcgRecord(500.0, 500, ramp), 250.0);
  REQUIRE(d.n_samples() == 250);
  for (std::size_t i = 0; i < 249; ++i) CHECK(std::abs(d.lead(Lead::II)[i] - (i / 250.0) * 500.0 / 499.0) < 1e-6);

  // Linearity in amplitude.
  auto scaled = r;
  for (std::size_t l = 0; l < 12; ++l)
    for (auto& v : scaled.lead(l)) v *= 2.0f;
  const auto a = resample(r, 333.0), b = resample(scaled, 333.0);
  for (std::size_t i = 0; i < a.samples().size(); ++i) CHECK(b.samples()[i] == doctest::Approx(2.0f * a.samples()[i]).epsilon(1e-6));
}

TEST_CASE("synthetic records") {
  SynthParams p;
  p.heart_rate = 120;
  const auto s = synth_ecg(p);
  CHECK(s.label == 2);
  CHECK(class_name(s.label) == "tachycardia");
  CHECK(!s.report.tokens.empty());
  CHECK(s.record.n_samples() == 5000);

  p.heart_rate = 59.9;
  CHECK(synth_ecg(p).label == 0);
  p.heart_rate = 100;
  CHECK(synth_ecg(p).label == 1);

  for (std::uint64_t seed : {0ull, 9ull, 12345ull}) {
    SynthParams q;
    q.seed = seed;
    q.heart_rate = 40.0 + static_cast<double>(seed % 150);
    const auto rec = synth_ecg(q).record;
    double worst = 0;
    for (std::size_t t = 0; t < rec.n_samples(); ++t)
      worst = std::max(worst, std::abs(double(rec.lead(Lead::I)[t]) - rec.lead(Lead::II)[t] + rec.lead(Lead::III)[t]));
    CHECK(worst < 1e-6);
  }

  SynthParams noisy;
  noisy.noise_sigma = 0.05;
  noisy.wander = {0.1, 0.3};
  noisy.seed = 42;
  const auto a = synth_ecg(noisy), b = synth_ecg(noisy);
  CHECK(a.record == b.record);
  CHECK(a.report == b.report);
  noisy.seed = 43;
  CHECK(!(synth_ecg(noisy).record == a.record));
}

TEST_CASE("synthetic beat count follows the heart rate") {
  for (double hr : {35.0, 48.0, 60.0, 72.0, 99.5, 130.0, 180.0, 240.0}) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      SynthParams p;
      p.heart_rate = hr;
      p.seed = seed;
      const auto rec = synth_ecg(p).record;
      CAPTURE(hr);
      CHECK(count_peaks(rec.lead(Lead::II), 0.5 * p.waves.r) == static_cast<std::size_t>(std::lround(10.0 * hr / 60.0)));
    }
  }
}

TEST_CASE("synth parameter validation") {
  SynthParams p;
  p.heart_rate = 10;
  CHECK_THROWS_AS(synth_ecg(p), ParameterError);
  p = {};
  p.fs = 50;
  CHECK_THROWS_AS(synth_ecg(p), ParameterError);
  p = {};
  p.noise_sigma = -1;
  CHECK_THROWS_AS(synth_ecg(p), ParameterError);
}

TEST_CASE("report grammar") {
  CHECK(vocab_size() < 64);
  const auto t = tokenize("sinus bradycardia. heart rate 50 bpm.");
  CHECK(t.tokens.size() == 8);
  CHECK(t.tokens[2] == token_id("."));
  CHECK_THROWS_AS(tokenize("atrial fibrillation."), VocabularyError);
  Rng rng(3);
  for (int k = 0; k < 50; ++k) {
    const std::size_t label = k % 3;
    const auto r = make_report(label, 40 + 4.0 * k, rng);
    CHECK(r.tokens.size() <= kMaxReportTokens);
    CHECK(r.raw.find(rhythm_phrase(label)) != std::string::npos);
    CHECK(tokenize(r.raw) == r);
  }
  CHECK(class_prompt(0).raw == "sinus bradycardia.");
  CHECK(class_prompt(1).raw == "normal sinus rhythm.");
}
