#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace textdial {

/// Error categories surfaced by the library. The CLI maps these to exit codes.
enum class ErrorKind {
  Schema,
  EmptyBook,
  EmptyUtterance,
  NoPairsFound,
  InvalidTurnCap,
  EmptySection,
  DegenerateTurn,
  InvalidConfig,
  Provider,
  EmptyTokenList,
  LengthMismatch,
  ConstantInput,
  EmptyDataset,
  NoBigrams,
  UnmatchedJoin,
  Io,
};

constexpr std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::Schema: return "schema_error";
    case ErrorKind::EmptyBook: return "empty_book";
    case ErrorKind::EmptyUtterance: return "empty_utterance";
    case ErrorKind::NoPairsFound: return "no_pairs_found";
    case ErrorKind::InvalidTurnCap: return "invalid_turn_cap";
    case ErrorKind::EmptySection: return "empty_section";
    case ErrorKind::DegenerateTurn: return "degenerate_turn";
    case ErrorKind::InvalidConfig: return "invalid_config";
    case ErrorKind::Provider: return "provider_error";
    case ErrorKind::EmptyTokenList: return "empty_token_list";
    case ErrorKind::LengthMismatch: return "length_mismatch";
    case ErrorKind::ConstantInput: return "constant_input";
    case ErrorKind::EmptyDataset: return "empty_dataset";
    case ErrorKind::NoBigrams: return "no_bigrams";
    case ErrorKind::UnmatchedJoin: return "unmatched_join";
    case ErrorKind::Io: return "io_error";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace textdial
