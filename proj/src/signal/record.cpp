#include "ecglab/signal/record.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "ecglab/error.hpp"

namespace ecglab {

namespace {

static_assert(std::endian::native == std::endian::little,
              "record I/O assumes a little-endian host");

std::string where(const std::filesystem::path& path) { return path.string() + ": "; }

}  // namespace

EcgRecord::EcgRecord(double fs, std::size_t n_samples, std::vector<float> samples)
    : fs_(fs), n_samples_(n_samples), samples_(std::move(samples)) {
  if (!(fs_ > 0.0) || !std::isfinite(fs_)) throw ParameterError("record: fs must be positive");
  if (n_samples_ == 0) throw ParameterError("record: n_samples must be positive");
  if (samples_.size() != kNumLeads * n_samples_) {
    throw ParameterError("record: expected " + std::to_string(kNumLeads * n_samples_) +
                         " values, got " + std::to_string(samples_.size()));
  }
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (!std::isfinite(samples_[i])) {
      throw ParameterError("record: non-finite value in lead " +
                           std::string(kLeadNames[i / n_samples_]) + " at sample " +
                           std::to_string(i % n_samples_));
    }
  }
}

EcgRecord EcgRecord::zeros(double fs, std::size_t n_samples) {
  return EcgRecord(fs, n_samples, std::vector<float>(kNumLeads * n_samples, 0.0f));
}

EcgRecord resample(const EcgRecord& record, double fs_target) {
  if (!(fs_target >= 100.0) || !std::isfinite(fs_target)) {
    throw ParameterError("resample: fs_target must be >= 100 Hz");
  }
  if (fs_target == record.fs()) return record;

  const std::size_t n_in = record.n_samples();
  const auto n_out = static_cast<std::size_t>(std::llround(record.duration() * fs_target));
  if (n_out == 0) throw ParameterError("resample: target length is zero");

  std::vector<float> out(kNumLeads * n_out);
  for (std::size_t row = 0; row < kNumLeads; ++row) {
    auto src = record.lead(row);
    float* dst = out.data() + row * n_out;
    for (std::size_t j = 0; j < n_out; ++j) {
      // Sample j sits at t = j / fs_target; map onto the source grid.
      const double pos = static_cast<double>(j) * record.fs() / fs_target;
      auto i0 = static_cast<std::size_t>(std::floor(pos));
      if (i0 >= n_in - 1) {
        // Past the last source sample: hold the final value.
        dst[j] = src[n_in - 1];
        continue;
      }
      const double frac = pos - static_cast<double>(i0);
      dst[j] = static_cast<float>(static_cast<double>(src[i0]) * (1.0 - frac) +
                                  static_cast<double>(src[i0 + 1]) * frac);
    }
  }
  return EcgRecord(fs_target, n_out, std::move(out));
}

void save_record(const EcgRecord& record, const std::filesystem::path& path) {
  std::filesystem::path data_path = path;
  data_path.replace_extension(".f32");

  nlohmann::ordered_json header;
  header["version"] = 1;
  header["fs"] = record.fs();
  header["n_leads"] = kNumLeads;
  header["n_samples"] = record.n_samples();
  header["lead_names"] = kLeadNames;
  header["dtype"] = "f32le";
  header["data_file"] = data_path.filename().string();

  {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError(where(path) + "cannot open for writing");
    out << header.dump(2) << '\n';
    if (!out) throw IoError(where(path) + "write failed");
  }
  std::ofstream data(data_path, std::ios::binary | std::ios::trunc);
  if (!data) throw IoError(where(data_path) + "cannot open for writing");
  auto bytes = std::as_bytes(record.samples());
  data.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
  if (!data) throw IoError(where(data_path) + "write failed");
}

namespace {

EcgRecord load_record_json(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(where(path) + "cannot open for reading");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(where(path) + "malformed header: " + e.what());
  }
  auto require = [&](const char* key) -> const nlohmann::json& {
    if (!header.is_object() || !header.contains(key)) {
      throw ParseError(where(path) + "malformed header: missing field \"" + key + "\"");
    }
    return header.at(key);
  };

  const auto& version = require("version");
  if (!version.is_number_integer() || version.get<int>() != 1) {
    throw ParseError(where(path) + "malformed header: unsupported field \"version\"");
  }
  const auto& fs = require("fs");
  if (!fs.is_number() || !(fs.get<double>() > 0.0)) {
    throw ParseError(where(path) + "malformed header: invalid field \"fs\"");
  }
  const auto& n_leads = require("n_leads");
  if (!n_leads.is_number_integer() || n_leads.get<long long>() != static_cast<long long>(kNumLeads)) {
    throw ParseError(where(path) + "lead count: header declares " + n_leads.dump() +
                     " leads, expected 12");
  }
  const auto& names = require("lead_names");
  if (!names.is_array() || names.size() != kNumLeads) {
    throw ParseError(where(path) + "lead count: \"lead_names\" must list 12 leads");
  }
  for (std::size_t i = 0; i < kNumLeads; ++i) {
    if (!names[i].is_string() || names[i].get<std::string>() != kLeadNames[i]) {
      throw ParseError(where(path) + "malformed header: \"lead_names\"[" + std::to_string(i) +
                       "] must be " + std::string(kLeadNames[i]));
    }
  }
  const auto& n_samples_j = require("n_samples");
  if (!n_samples_j.is_number_integer() || n_samples_j.get<long long>() <= 0) {
    throw ParseError(where(path) + "malformed header: invalid field \"n_samples\"");
  }
  const auto& dtype = require("dtype");
  if (!dtype.is_string() || dtype.get<std::string>() != "f32le") {
    throw ParseError(where(path) + "malformed header: unsupported field \"dtype\"");
  }
  const auto& data_file = require("data_file");
  if (!data_file.is_string()) {
    throw ParseError(where(path) + "malformed header: invalid field \"data_file\"");
  }

  const auto n_samples = n_samples_j.get<std::size_t>();
  const std::filesystem::path data_path = path.parent_path() / data_file.get<std::string>();
  std::ifstream data(data_path, std::ios::binary);
  if (!data) throw IoError(where(data_path) + "cannot open data file");

  const std::size_t want = kNumLeads * n_samples;
  std::vector<float> samples(want);
  data.read(reinterpret_cast<char*>(samples.data()),
            static_cast<std::streamsize>(want * sizeof(float)));
  const auto got = static_cast<std::size_t>(data.gcount());
  if (got != want * sizeof(float)) {
    throw ParseError(where(data_path) + "truncated data file: expected " +
                     std::to_string(want * sizeof(float)) + " bytes, found " +
                     std::to_string(got));
  }
  for (std::size_t i = 0; i < want; ++i) {
    if (!std::isfinite(samples[i])) {
      throw ParseError(where(data_path) + "non-finite value at byte offset " +
                       std::to_string(i * sizeof(float)) + " (lead " +
                       std::string(kLeadNames[i / n_samples]) + ")");
    }
  }
  return EcgRecord(fs.get<double>(), n_samples, std::move(samples));
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' ')) cell.pop_back();
    while (!cell.empty() && cell.front() == ' ') cell.erase(cell.begin());
    cells.push_back(cell);
  }
  return cells;
}

}  // namespace

EcgRecord load_record_csv(const std::filesystem::path& path) {
  // CSV carries no sampling rate; 500 Hz unless the header cell "fs=<hz>" leads the row.
  std::ifstream in(path);
  if (!in) throw IoError(where(path) + "cannot open for reading");
  std::string line;
  if (!std::getline(in, line)) throw ParseError(where(path) + "malformed header: empty file");

  double fs = 500.0;
  auto header = split_csv(line);
  if (!header.empty() && header.front().rfind("fs=", 0) == 0) {
    try {
      fs = std::stod(header.front().substr(3));
    } catch (const std::exception&) {
      throw ParseError(where(path) + "malformed header: invalid fs cell");
    }
    header.erase(header.begin());
  }
  if (header.size() != kNumLeads) {
    throw ParseError(where(path) + "lead count: header lists " + std::to_string(header.size()) +
                     " leads, expected 12");
  }
  for (std::size_t i = 0; i < kNumLeads; ++i) {
    if (header[i] != kLeadNames[i]) {
      throw ParseError(where(path) + "malformed header: column " + std::to_string(i) +
                       " must be " + std::string(kLeadNames[i]));
    }
  }

  std::vector<std::vector<float>> columns(kNumLeads);
  std::size_t row = 0;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto cells = split_csv(line);
    if (cells.size() != kNumLeads) {
      throw ParseError(where(path) + "row " + std::to_string(row) + ": expected 12 values, got " +
                       std::to_string(cells.size()));
    }
    for (std::size_t c = 0; c < kNumLeads; ++c) {
      char* end = nullptr;
      const double v = std::strtod(cells[c].c_str(), &end);
      if (end == cells[c].c_str() || *end != '\0') {
        throw ParseError(where(path) + "row " + std::to_string(row) + ", lead " +
                         std::string(kLeadNames[c]) + ": not a number");
      }
      const auto f = static_cast<float>(v);
      if (!std::isfinite(f)) {
        throw ParseError(where(path) + "row " + std::to_string(row) + ", lead " +
                         std::string(kLeadNames[c]) + ": non-finite value");
      }
      columns[c].push_back(f);
    }
    ++row;
  }
  if (row == 0) throw ParseError(where(path) + "truncated data: no sample rows");

  std::vector<float> samples;
  samples.reserve(kNumLeads * row);
  for (auto& col : columns) samples.insert(samples.end(), col.begin(), col.end());
  return EcgRecord(fs, row, std::move(samples));
}

void save_record_csv(const EcgRecord& record, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError(where(path) + "cannot open for writing");
  out << "fs=" << record.fs();
  for (auto n : kLeadNames) out << ',' << n;
  out << '\n';
  out.precision(9);
  for (std::size_t t = 0; t < record.n_samples(); ++t) {
    for (std::size_t c = 0; c < kNumLeads; ++c) {
      if (c) out << ',';
      out << record.lead(c)[t];
    }
    out << '\n';
  }
  if (!out) throw IoError(where(path) + "write failed");
}

EcgRecord load_record(const std::filesystem::path& path) {
  if (path.extension() == ".csv") return load_record_csv(path);
  return load_record_json(path);
}

}  // namespace ecglab
