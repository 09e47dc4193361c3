#pragma once

#include "minimax_iv/bench.hpp"

#include <json.hpp>

#include <string>

namespace minimax_iv {

using Json = nlohmann::ordered_json;

/// JSON forms of the estimator and benchmark configurations. Readers start
/// from the defaults, apply the keys present, and reject any key they do not
/// know (InvalidInput naming the key and its path).
Json to_json(const KernelConfig& cfg);
KernelConfig kernel_config_from_json(const Json& j, const std::string& path = "kernel");

Json to_json(const sparse::SaddleConfig& cfg);
sparse::SaddleConfig saddle_config_from_json(const Json& j, sparse::SaddleConfig base = {},
                                             const std::string& path = "saddle");

Json to_json(const shape::ShapeConfig& cfg);
shape::ShapeConfig shape_config_from_json(const Json& j, shape::ShapeConfig base = {},
                                          const std::string& path = "shape");

Json to_json(const rfiv::RfivConfig& cfg);
rfiv::RfivConfig rfiv_config_from_json(const Json& j, rfiv::RfivConfig base = {}, const std::string& path = "rfiv");

/// Only the fields consulted by the spec's kind are written or accepted.
Json to_json(const bench::EstimatorSpec& spec);
bench::EstimatorSpec estimator_spec_from_json(const Json& j, const std::string& path = "estimator");

Json to_json(const bench::CellSpec& cell);
bench::CellSpec cell_spec_from_json(const Json& j, const std::string& path = "cell");

Json to_json(const bench::BenchSpec& spec);
bench::BenchSpec bench_spec_from_json(const Json& j);

/// Reads a JSON file; ParseError on malformed text.
Json read_json_file(const std::string& path);

}  // namespace minimax_iv
