#pragma once

#include <stdexcept>
#include <string>

namespace forestmix {

enum class Errc {
  unknown_category,
  missing_value,
  shape_error,
  parse_error,
  too_few_samples,
  bad_k,
  empty_input,
  width_mismatch,
  bad_dimension,
  zero_importance,
  layer_limit_reached,
  bad_layer_index,
  empty_model,
  index_out_of_grid,
  grid_exhausted,
  config_error,
  io_error,
  schedule_mismatch,
  schema_mismatch,
  invalid_dataset,
};

inline const char* errc_name(Errc c) {
  switch (c) {
    case Errc::unknown_category:   return "UnknownCategory";
    case Errc::missing_value:      return "MissingValue";
    case Errc::shape_error:        return "ShapeError";
    case Errc::parse_error:        return "ParseError";
    case Errc::too_few_samples:    return "TooFewSamples";
    case Errc::bad_k:              return "BadK";
    case Errc::empty_input:        return "EmptyInput";
    case Errc::width_mismatch:     return "WidthMismatch";
    case Errc::bad_dimension:      return "BadDimension";
    case Errc::zero_importance:    return "ZeroImportance";
    case Errc::layer_limit_reached:return "LayerLimitReached";
    case Errc::bad_layer_index:    return "BadLayerIndex";
    case Errc::empty_model:        return "EmptyModel";
    case Errc::index_out_of_grid:  return "IndexOutOfGrid";
    case Errc::grid_exhausted:     return "GridExhausted";
    case Errc::config_error:       return "ConfigError";
    case Errc::io_error:           return "IoError";
    case Errc::schedule_mismatch:  return "ScheduleMismatch";
    case Errc::schema_mismatch:    return "SchemaMismatch";
    case Errc::invalid_dataset:    return "InvalidDataset";
  }
  return "Error";
}

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& msg)
      : std::runtime_error(std::string(errc_name(code)) + ": " + msg), code_(code) {}

  Errc code() const { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& msg) {
  throw Error(code, msg);
}

inline void require(bool ok, Errc code, const std::string& msg) {
  if (!ok) fail(code, msg);
}

}  // namespace forestmix
