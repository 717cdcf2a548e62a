// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>

namespace sfda {

// Invalid hyperparameters, specs or config documents.
class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Vector or matrix shapes that do not agree.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// Class ids or indices outside their valid range.
class IndexError : public std::out_of_range {
 public:
  using std::out_of_range::out_of_range;
};

// Non-finite losses or gradients, divergence.
class TrainingError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The relation matrix has rows that were never updated.
class NotReadyError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

// Foreground weights whose mean is zero, or an empty weight batch.
class DegenerateBatchError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

// A sealed source dataset was read after source pretraining finished.
class SourceAccessError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

}  // namespace sfda
