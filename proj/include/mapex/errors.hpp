#pragma once

#include <stdexcept>
#include <string>

namespace mapex {

// Configuration or input that can never produce a valid run. CLI exit code 2.
struct ConfigError : std::runtime_error {
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Acting or querying past the episode horizon.
struct EpisodeOver : std::runtime_error {
  explicit EpisodeOver(const std::string& what) : std::runtime_error(what) {}
};

// A trace shorter than the episode horizon was handed to a metric.
struct IncompleteTrace : std::runtime_error {
  explicit IncompleteTrace(const std::string& what) : std::runtime_error(what) {}
};

// Training on an empty dataset.
struct EmptyDataset : std::runtime_error {
  explicit EmptyDataset(const std::string& what) : std::runtime_error(what) {}
};

// Malformed serialized artifact; message carries the offending location.
struct ParseError : std::runtime_error {
  explicit ParseError(const std::string& what) : std::runtime_error(what) {}
};

// Artifact bytes do not match the checksums recorded in the run manifest.
struct ManifestMismatch : std::runtime_error {
  explicit ManifestMismatch(const std::string& what) : std::runtime_error(what) {}
};

// Exact best-response search would exceed the memoization budget.
struct StateSpaceTooLarge : std::runtime_error {
  explicit StateSpaceTooLarge(const std::string& what) : std::runtime_error(what) {}
};

// Performance ratio against a zero-valued baseline.
struct ZeroBaseline : std::runtime_error {
  explicit ZeroBaseline(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace mapex
