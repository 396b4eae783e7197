#ifndef RLSTM_MODEL_STORE_HPP
#define RLSTM_MODEL_STORE_HPP

// `.rlstm` model files. Line-oriented UTF-8 text:
//
//   rlstm-model
//   format_version 1
//   task frequency
//   variant c
//   d_model 64 / numhead 4 / numdrop <hexfloat> / numlstm 256 /
//   n_encoder_layers 1 / share_attention 1 / seed 0      (one key per line)
//   input_mean <hexfloat> x3, input_std, target_mean, target_std
//   weights <count>
//   weight <path> <rows> <cols> <base64 of little-endian IEEE-754 doubles, row-major>
//   alias <path> <target>
//   checksum sha256 <hex digest of every preceding byte>
//
// Weights are listed in lexicographic path order, so equal models give equal
// bytes.

#include "rlstm/training.hpp"

#include <iosfwd>
#include <optional>
#include <string>

namespace rlstm {

inline constexpr int kModelFormatVersion = 1;

class ModelLoadError : public DataError {
public:
    enum class Kind { Io, Format, Checksum, Version, MissingWeight, ExtraWeight, Shape, TaskMismatch };

    ModelLoadError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

/// Exact textual form of a double, e.g. 0x1.8p+1; independent of the C library.
std::string format_hexfloat(double v);
double parse_hexfloat(const std::string& s);

std::string serialize_model(const TrainedModel& model);
/// `expected`, when given, must equal the stored task.
TrainedModel deserialize_model(const std::string& bytes, std::optional<Task> expected = std::nullopt);

/// Writes to a temporary sibling and renames it over `path`.
void save_model(const TrainedModel& model, const std::string& path);
TrainedModel load_model(const std::string& path, std::optional<Task> expected = std::nullopt);

} // namespace rlstm

#endif // RLSTM_MODEL_STORE_HPP
