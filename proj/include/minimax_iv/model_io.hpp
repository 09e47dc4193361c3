#pragma once

#include "minimax_iv/core.hpp"

#include <iosfwd>
#include <memory>
#include <string>

namespace minimax_iv {

/// Plain-text model files. The first line is "minimax_iv_model <version>",
/// the second "kind <name>" with name one of kernel, nystrom, sparse_linear,
/// piecewise, ensemble, twosls; the remaining sections are keyword-led and
/// every real is written with 17 significant digits, so a loaded model
/// predicts bit-identically to the saved one.
inline constexpr int kModelFormatVersion = 1;

/// Name written on the "kind" line; throws InvalidInput for model types that
/// have no file format (e.g. FunctionModel).
std::string model_kind(const Model& model);

void save_model(const Model& model, std::ostream& out);
void save_model(const Model& model, const std::string& path);

/// ParseError with the offending token on malformed input.
std::unique_ptr<Model> load_model(std::istream& in);
std::unique_ptr<Model> load_model(const std::string& path);

}  // namespace minimax_iv
