#include "semipar/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>

namespace semipar {

namespace {

constexpr char kMagic[] = "SPARRAY1\n";
constexpr std::size_t kMagicSize = sizeof(kMagic) - 1;

static_assert(std::endian::native == std::endian::little, "array container assumes little-endian");

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::ifstream open_in(const std::string& path, std::ios::openmode mode = std::ios::in) {
  std::ifstream in(path, mode);
  if (!in) throw ConfigError("cannot open " + path);
  return in;
}

std::ofstream open_out(const std::string& path, std::ios::openmode mode = std::ios::out) {
  std::ofstream out(path, mode);
  if (!out) throw ConfigError("cannot write " + path);
  return out;
}

Matrix column(const Vector& v) { return Matrix(v); }

}  // namespace

const Matrix& ArrayFile::at(const std::string& name) const {
  const auto it = arrays.find(name);
  if (it == arrays.end()) throw ConfigError("array '" + name + "' missing from container");
  return it->second;
}

void write_arrays(const std::string& path, const ArrayFile& file) {
  nlohmann::json header;
  header["arrays"] = nlohmann::json::array();
  std::uint64_t offset = 0;
  for (const auto& [name, m] : file.arrays) {
    header["arrays"].push_back({{"name", name}, {"shape", {m.rows(), m.cols()}}, {"offset", offset}});
    offset += static_cast<std::uint64_t>(m.size()) * sizeof(double);
  }
  header["meta"] = file.meta;
  const std::string text = header.dump();
  const std::uint64_t length = text.size();

  std::ofstream out = open_out(path, std::ios::binary);
  out.write(kMagic, kMagicSize);
  out.write(reinterpret_cast<const char*>(&length), sizeof(length));
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto& [name, m] : file.arrays) {
    const RowMatrix row_major = m;
    out.write(reinterpret_cast<const char*>(row_major.data()),
              static_cast<std::streamsize>(row_major.size() * sizeof(double)));
  }
  if (!out) throw ConfigError("failed writing " + path);
}

ArrayFile read_arrays(const std::string& path) {
  std::ifstream in = open_in(path, std::ios::binary);
  char magic[kMagicSize];
  in.read(magic, kMagicSize);
  if (!in || std::memcmp(magic, kMagic, kMagicSize) != 0) {
    throw ConfigError(path + " is not an array container");
  }
  std::uint64_t length = 0;
  in.read(reinterpret_cast<char*>(&length), sizeof(length));
  std::string text(length, '\0');
  in.read(text.data(), static_cast<std::streamsize>(length));
  if (!in) throw ConfigError("truncated header in " + path);
  const nlohmann::json header = nlohmann::json::parse(text);
  const std::streampos data_start = in.tellg();

  ArrayFile file;
  file.meta = header.value("meta", nlohmann::json::object());
  for (const auto& entry : header.at("arrays")) {
    const auto name = entry.at("name").get<std::string>();
    const auto rows = entry.at("shape").at(0).get<Index>();
    const auto cols = entry.at("shape").at(1).get<Index>();
    const auto offset = entry.at("offset").get<std::uint64_t>();
    RowMatrix m(rows, cols);
    in.seekg(data_start + static_cast<std::streamoff>(offset));
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(m.size() * sizeof(double)));
    if (!in) throw ConfigError("truncated array '" + name + "' in " + path);
    file.arrays[name] = m;
  }
  return file;
}

void save_model(const std::string& path, const NonparametricModel& model) {
  const DiffusionBasis& b = model.basis;
  ArrayFile file;
  file.arrays["points"] = b.points;
  file.arrays["phi"] = b.phi;
  file.arrays["peq"] = column(b.peq);
  file.arrays["eigvals"] = column(b.eigenvalues);
  file.arrays["tau"] = Matrix::Constant(1, 1, b.tau);
  file.arrays["A"] = model.shift.A;
  std::vector<Index> starts(b.segment_starts.begin(), b.segment_starts.end());
  file.meta = {{"kind", "nonparametric-model"},
               {"param_dim", model.param_dim},
               {"temporal", b.temporal},
               {"segment_starts", starts},
               {"kde_epsilon", b.diagnostics.kde_epsilon},
               {"kernel_epsilon", b.diagnostics.kernel_epsilon},
               {"dimension", b.diagnostics.dimension},
               {"mean_bandwidth", b.diagnostics.mean_bandwidth}};
  write_arrays(path, file);
}

NonparametricModel load_model(const std::string& path) {
  const ArrayFile file = read_arrays(path);
  NonparametricModel model;
  DiffusionBasis& b = model.basis;
  b.points = file.at("points");
  b.phi = file.at("phi");
  b.peq = file.at("peq").col(0);
  b.eigenvalues = file.at("eigvals").col(0);
  b.tau = file.at("tau")(0, 0);
  b.temporal = file.meta.value("temporal", true);
  b.segment_starts = file.meta.value("segment_starts", std::vector<Index>{});
  b.diagnostics.kde_epsilon = file.meta.value("kde_epsilon", 0.0);
  b.diagnostics.kernel_epsilon = file.meta.value("kernel_epsilon", 0.0);
  b.diagnostics.dimension = file.meta.value("dimension", 0.0);
  b.diagnostics.mean_bandwidth = file.meta.value("mean_bandwidth", 0.0);
  model.shift.A = file.at("A");
  model.shift.tau = b.tau;
  model.param_dim = file.meta.value("param_dim", Index{1});
  if (b.phi.rows() != b.points.rows() || b.peq.size() != b.points.rows() ||
      model.shift.A.rows() != b.phi.cols()) {
    throw ConfigError("inconsistent array shapes in model file " + path);
  }
  return model;
}

void save_noise(const std::string& path, const NoiseEstimate& estimate) {
  ArrayFile file;
  file.arrays["Q"] = estimate.Q;
  file.arrays["Qhat"] = estimate.Qhat;
  file.arrays["q_params"] = column(estimate.q);
  file.meta = {{"kind", "noise-estimate"}, {"sweeps", estimate.sweeps}};
  write_arrays(path, file);
}

NoiseEstimate load_noise(const std::string& path) {
  const ArrayFile file = read_arrays(path);
  NoiseEstimate e;
  e.Q = file.at("Q");
  e.Qhat = file.at("Qhat");
  e.q = file.at("q_params").col(0);
  e.sweeps = file.meta.value("sweeps", Index{0});
  return e;
}

void write_series_csv(const std::string& path, const TimeSeries& series, const std::string& prefix) {
  std::ofstream out = open_out(path);
  out << "t";
  for (Index j = 0; j < series.dim(); ++j) out << ',' << prefix << (j + 1);
  out << '\n' << std::setprecision(17);
  for (Index i = 0; i < series.size(); ++i) {
    out << series.time(i);
    for (Index j = 0; j < series.dim(); ++j) out << ',' << series.values(i, j);
    out << '\n';
  }
  if (!out) throw ConfigError("failed writing " + path);
}

TimeSeries read_series_csv(const std::string& path) {
  std::ifstream in = open_in(path);
  std::string line;
  if (!std::getline(in, line)) throw ConfigError(path + " is empty");
  const Index cols = static_cast<Index>(std::count(line.begin(), line.end(), ','));
  std::vector<double> times;
  std::vector<double> values;
  Index rows = 0;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    std::stringstream ss(line);
    std::string cell;
    Index c = 0;
    while (std::getline(ss, cell, ',')) {
      double v = 0.0;
      try {
        v = std::stod(cell);
      } catch (const std::exception&) {
        throw ConfigError("bad number '" + cell + "' in " + path);
      }
      if (c == 0) {
        times.push_back(v);
      } else {
        values.push_back(v);
      }
      ++c;
    }
    if (c != cols + 1) throw ConfigError("ragged row in " + path);
    ++rows;
  }
  TimeSeries series;
  series.values = Eigen::Map<RowMatrix>(values.data(), rows, cols);
  if (rows > 0) series.t0 = times.front();
  if (rows > 1) series.tau = (times.back() - times.front()) / static_cast<double>(rows - 1);
  return series;
}

std::map<std::string, std::string> parse_config(const std::string& text) {
  std::map<std::string, std::string> out;
  std::stringstream ss(text);
  std::string line;
  int number = 0;
  while (std::getline(ss, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key = value");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(number) + ": empty key");
    if (!out.emplace(key, value).second) throw ConfigError("duplicate config key '" + key + "'");
  }
  return out;
}

std::map<std::string, std::string> read_config(const std::string& path) {
  std::ifstream in = open_in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

}  // namespace semipar
