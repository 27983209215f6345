#pragma once

#include <map>
#include <string>

#include <json.hpp>

#include "semipar/adaptive_noise.hpp"
#include "semipar/semiparametric.hpp"

namespace semipar {

/// Named float64 arrays plus free-form metadata.
///
/// On disk: the line "SPARRAY1", a little-endian uint64 header length, a JSON
/// header {"arrays": [{"name", "shape", "offset"}], "meta": {...}}, then the
/// raw row-major little-endian doubles. Offsets count bytes from the start of
/// the data block.
struct ArrayFile {
  std::map<std::string, Matrix> arrays;
  nlohmann::json meta = nlohmann::json::object();

  const Matrix& at(const std::string& name) const;
};

void write_arrays(const std::string& path, const ArrayFile& file);
ArrayFile read_arrays(const std::string& path);

/// Basis (points, phi, peq, eigvals, tau), shift operator A and metadata.
void save_model(const std::string& path, const NonparametricModel& model);
NonparametricModel load_model(const std::string& path);

/// Q, Qhat and q_params.
void save_noise(const std::string& path, const NoiseEstimate& estimate);
NoiseEstimate load_noise(const std::string& path);

/// CSV with header "t,<prefix>1,...,<prefix>d".
void write_series_csv(const std::string& path, const TimeSeries& series,
                      const std::string& prefix = "z_");
TimeSeries read_series_csv(const std::string& path);

/// Flat "key = value" text; '#' starts a comment. Duplicate keys are an error.
std::map<std::string, std::string> parse_config(const std::string& text);
std::map<std::string, std::string> read_config(const std::string& path);

}  // namespace semipar
