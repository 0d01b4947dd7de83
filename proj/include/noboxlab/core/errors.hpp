#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace noboxlab {

// Base for everything thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Dataset loading / decoding failures (names the offending path).
class IngestionError : public Error {
public:
    using Error::Error;
};

// Split assignment references an unknown item.
class AssignmentError : public Error {
public:
    using Error::Error;
};

// Missing role / missing key lookups.
class LookupError : public Error {
public:
    using Error::Error;
};

// Mathematical domain violations (zero-norm vector, out-of-range argument).
class DomainError : public Error {
public:
    using Error::Error;
};

// Contract preconditions (non-unit rows, mismatched batch sizes).
class PreconditionError : public Error {
public:
    using Error::Error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

// Checkpoint persistence failures, split by cause so callers can react.
class PersistenceError : public Error {
public:
    using Error::Error;
};

class CheckpointNotFoundError : public PersistenceError {
public:
    using PersistenceError::PersistenceError;
};

class CheckpointIntegrityError : public PersistenceError {
public:
    using PersistenceError::PersistenceError;
};

class CheckpointSpecError : public PersistenceError {
public:
    using PersistenceError::PersistenceError;
};

// Training-loop aborts (non-finite loss etc.); carries the step index in the message.
class TrainingError : public Error {
public:
    using Error::Error;
};

// Refusal to train on data overlapping a target-train role.
class DisjointnessError : public Error {
public:
    DisjointnessError(const std::string& msg, std::vector<std::string> offending)
        : Error(msg), offending_hashes(std::move(offending)) {}
    std::vector<std::string> offending_hashes;
};

// Crafted sample escaped the perturbation budget; carries the sample ids.
class BudgetError : public Error {
public:
    BudgetError(const std::string& msg, std::vector<std::string> ids)
        : Error(msg), sample_ids(std::move(ids)) {}
    std::vector<std::string> sample_ids;
};

// Config validation failure; names the key.
class ValidationError : public Error {
public:
    ValidationError(const std::string& msg, std::string key_ = "")
        : Error(msg), key(std::move(key_)) {}
    std::string key;
};

}
