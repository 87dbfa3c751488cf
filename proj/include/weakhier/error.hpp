#pragma once

#include <stdexcept>
#include <string>

namespace weakhier {

/// Malformed input file (corpus, taxonomy, embeddings, checkpoints).
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Taxonomy shape or supervision violates the tree contract.
class StructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Invalid parameter or precondition violation.
class ValidationError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Workspace state forbids the requested stage (missing prerequisite, config
/// mismatch, concurrent run).
class WorkspaceError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace weakhier
