#pragma once

#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "ierd/network.hpp"
#include "ierd/train.hpp"

namespace ierd {

/// Invalid configuration value; the message names the offending field.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Resolved settings of one CLI run.
///
/// Text form is line-oriented `key = value` under `[section]` headers, `#`
/// comments allowed:
///
///     [network]
///     modules = 3
///     layers = 6
///     channels = 64
///     image_channels = 1
///     dilations = 1,3,3,3,3,3
///     [train]
///     steps = 1000
///     ...
///
/// Every field can also be overridden through the environment as
/// IERD_<SECTION>_<KEY>, e.g. IERD_TRAIN_STEPS=500.
struct RunConfig {
  NetworkConfig network = NetworkConfig::make(3, 6, 64, 1);
  TrainConfig train;
  unsigned threads = 1;
  std::string dataset;
  std::string out;
  std::string checkpoint;

  /// "section.key" names accepted by set().
  static const std::vector<std::string>& keys();

  void set(const std::string& key, const std::string& value);
  std::string get(const std::string& key) const;

  /// Reads `[section]` / `key = value` text; unknown keys are errors.
  void merge_text(std::istream& in, const std::string& origin);
  void merge_file(const std::string& path);
  /// Applies IERD_<SECTION>_<KEY> variables that are set.
  void merge_env();

  std::string to_text() const;
  /// Re-derives the dilation schedule when only the layer count changed and
  /// validates everything.
  void finalize();

 private:
  bool dilations_explicit_ = false;
};

}  // namespace ierd
