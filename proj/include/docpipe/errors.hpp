#pragma once

#include <stdexcept>
#include <string>

namespace docpipe {

// Base of every error the engine raises deliberately.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

// Message always starts with the offending field path, e.g. "pages[1].index: ...".
class ValidationError : public Error {
 public:
  using Error::Error;
};

class BackendError : public Error {
 public:
  using Error::Error;
};

// Backend output did not conform to the class schema.
class StructureError : public Error {
 public:
  using Error::Error;
};

class EmptyInput : public Error {
 public:
  using Error::Error;
};

class MissingImage : public Error {
 public:
  using Error::Error;
};

class KindMismatch : public Error {
 public:
  using Error::Error;
};

class AssessOnFailed : public Error {
 public:
  using Error::Error;
};

class IncompleteDecision : public Error {
 public:
  using Error::Error;
};

class Unauthorized : public Error {
 public:
  using Error::Error;
};

class ExpressionError : public Error {
 public:
  using Error::Error;
};

class PartitionError : public Error {
 public:
  using Error::Error;
};

class JobNotFound : public Error {
 public:
  using Error::Error;
};

// A review decision arrived for a job that is not awaiting review.
class ReviewConflict : public Error {
 public:
  using Error::Error;
};

}  // namespace docpipe
