#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace debias {

enum class Errc {
  MalformedLine,
  DuplicateId,
  LabelVectorMismatch,
  EmptyClass,
  IoFailure,
  MissingTypes,
  EndpointUnreachable,
  Timeout,
  RetriesExhausted,
  ParseFailure,
  NoUsableVotes,
  IdMismatch,
  EmptyCorpus,
  InvalidArgument,
  InvalidConfig,
};

std::string_view to_string(Errc code) noexcept;

/// Every failure the library reports. `subject()` names the offending item
/// (a line number, record id, sentence id or path) when there is one.
class Error : public std::runtime_error {
 public:
  Error(Errc code, std::string subject, const std::string& detail);

  Errc code() const noexcept { return code_; }
  const std::string& subject() const noexcept { return subject_; }

 private:
  Errc code_;
  std::string subject_;
};

/// Backend failures also carry the endpoint and sentence they concern.
class BackendError : public Error {
 public:
  BackendError(Errc code, std::string endpoint_id, std::string sentence_id,
               const std::string& detail);

  const std::string& endpoint_id() const noexcept { return endpoint_id_; }
  const std::string& sentence_id() const noexcept { return subject(); }

 private:
  std::string endpoint_id_;
};

}  // namespace debias
